#include <gtest/gtest.h>

#include <set>

#include "oracles.hpp"
#include "petseg/preprocess.hpp"
#include "petseg/random.hpp"
#include "test_support.hpp"

using namespace petseg;

namespace {

Volume3D random_volume(const Shape3& shape, const Vec3& spacing, std::uint64_t seed, double lo = 0, double hi = 10) {
  Rng rng(seed);
  Volume3D v(shape, spacing, VolumeKind::PetSuv, 0.0);
  for (Index i = 0; i < v.size(); ++i) v.data()[i] = rng.uniform(lo, hi);
  return v;
}

}  // namespace

TEST(Resample, ExtentRule) {
  EXPECT_EQ(resampled_extent(10, 2.0, 1.0), 20);
  EXPECT_EQ(resampled_extent(7, 1.0, 3.0), 2);
  EXPECT_EQ(resampled_extent(1, 1.0, 50.0), 1);
}

TEST(Resample, ConstantStaysConstant) {
  const Volume3D v(Shape3(6, 5, 4), Vec3(2, 2, 3), VolumeKind::PetSuv, 7.3);
  for (const Vec3& t : {Vec3(1, 1, 1), Vec3(3.3, 3.3, 3.3), Vec3(0.7, 5, 2)}) {
    const Volume3D out = resample_trilinear(v, t);
    EXPECT_LT((out.data() - 7.3).abs().maxCoeff(), 1e-12);
  }
}

TEST(Resample, RampReproducedInInterior) {
  Volume3D v(Shape3(8, 1, 1), Vec3(2, 1, 1), VolumeKind::PetSuv, 0.0);
  for (Index i = 0; i < 8; ++i) v(i, 0, 0) = static_cast<double>(i);
  const Volume3D out = resample_trilinear(v, Vec3(1, 1, 1));
  ASSERT_EQ(out.nx(), 16);
  for (Index i = 1; i < 15; ++i) {
    const double pos = ((static_cast<double>(i) + 0.5) * 1.0 - 0.5 * 2.0) / 2.0;
    EXPECT_NEAR(out(i, 0, 0), pos, 1e-12);
  }
}

TEST(Resample, MatchesCornerByCornerOracle) {
  const Volume3D v = random_volume(Shape3(9, 8, 7), Vec3(1.0, 1.5, 2.0), 11);
  for (const Vec3& t : {Vec3(2.5, 3, 3.1), Vec3(0.6, 0.9, 1.3), Vec3(1.0, 1.5, 2.0 / 3.0)}) {
    const Volume3D ours = resample_trilinear(v, t);
    const Volume3D ref = oracle::trilinear(v, t);
    ASSERT_TRUE((ours.shape() == ref.shape()).all());
    EXPECT_LT((ours.data() - ref.data()).abs().maxCoeff(), 1e-12);
  }
}

TEST(Resample, ConvexCombinationRange) {
  const Volume3D v = random_volume(Shape3(7, 9, 5), Vec3(1, 1, 1), 5, -3, 4);
  const Volume3D out = resample_trilinear(v, Vec3(0.45, 1.7, 0.8));
  EXPECT_GE(out.data().minCoeff(), v.data().minCoeff());
  EXPECT_LE(out.data().maxCoeff(), v.data().maxCoeff());
}

TEST(Resample, IdentitySpacingIsBitwise) {
  const Volume3D v = random_volume(Shape3(5, 6, 7), Vec3(1.3, 0.9, 2.2), 8);
  EXPECT_TRUE((resample_trilinear(v, v.spacing()).data() == v.data()).all());
  Volume3D labels(Shape3(5, 6, 7), Vec3(1.3, 0.9, 2.2), VolumeKind::Label, 0.0);
  labels(2, 3, 4) = 4;
  EXPECT_TRUE((resample_nearest(labels, labels.spacing()).data() == labels.data()).all());
}

TEST(Resample, KindGuards) {
  const Volume3D labels(Shape3(2, 2, 2), Vec3::Ones(), VolumeKind::Label, 1.0);
  EXPECT_PETSEG_ERROR(resample_trilinear(labels, Vec3::Ones()), ErrorCode::InvalidArgument);
  const Volume3D pet(Shape3(2, 2, 2), Vec3::Ones(), VolumeKind::PetSuv, 1.0);
  EXPECT_PETSEG_ERROR(resample_trilinear(pet, Vec3(1, 0, 1)), ErrorCode::InvalidSpacing);
}

TEST(ResampleNearest, MidpointGoesToLowerIndex) {
  Volume3D v(Shape3(2, 1, 1), Vec3(1, 1, 1), VolumeKind::Label, 0.0);
  v(0, 0, 0) = 5;
  v(1, 0, 0) = 9;
  const Volume3D out = resample_nearest(v, Vec3(2, 1, 1));
  ASSERT_EQ(out.nx(), 1);
  EXPECT_EQ(out(0, 0, 0), 5.0);
}

TEST(ResampleNearest, NeverInventsLabels) {
  Rng rng(2);
  Volume3D v(Shape3(9, 7, 5), Vec3(1, 2, 3), VolumeKind::Label, 0.0);
  for (Index i = 0; i < v.size(); ++i) v.data()[i] = static_cast<double>(rng.below(4) * 3);
  const Volume3D out = resample_nearest(v, Vec3(0.7, 3.1, 1.9));
  const std::set<double> in_set(v.data().begin(), v.data().end());
  for (Index i = 0; i < out.size(); ++i) EXPECT_TRUE(in_set.count(out.data()[i]));
}

TEST(Clip, WindowExamplesAndLaws) {
  Volume3D v(Shape3(3, 1, 1), Vec3::Ones(), VolumeKind::PetSuv, 0.0);
  v(0, 0, 0) = 25.0;
  v(1, 0, 0) = 5.0;
  v(2, 0, 0) = -1.0;
  const Volume3D c = clip_intensity(v, 0, 20);
  EXPECT_EQ(c(0, 0, 0), 20.0);
  EXPECT_EQ(c(1, 0, 0), 5.0);
  EXPECT_EQ(c(2, 0, 0), 0.0);
  EXPECT_TRUE((clip_intensity(c, 0, 20).data() == c.data()).all());
  EXPECT_PETSEG_ERROR(clip_intensity(v, 3, 3), ErrorCode::InvalidWindow);

  Volume3D ct(Shape3(1, 1, 1), Vec3::Ones(), VolumeKind::CtHu, -1000.0);
  EXPECT_EQ(clip_intensity(ct, -300, 400)(0, 0, 0), -300.0);
}

TEST(Channels, OrderAndShapes) {
  const Volume3D ct(Shape3(4, 4, 4), Vec3::Ones(), VolumeKind::CtHu, -1000.0);
  const Volume3D pet(Shape3(4, 4, 4), Vec3::Ones(), VolumeKind::PetSuv, 25.0);
  const ChannelStack s = build_channels(ct, pet);
  EXPECT_EQ(s[ChannelStack::kCtRaw](0, 0, 0), -1000.0);
  EXPECT_EQ(s[ChannelStack::kPetRaw](0, 0, 0), 25.0);
  EXPECT_EQ(s[ChannelStack::kCtClipped](0, 0, 0), -300.0);
  EXPECT_EQ(s[ChannelStack::kPetClipped](0, 0, 0), 20.0);

  const Volume3D zero_ct(Shape3(4, 4, 4), Vec3::Ones(), VolumeKind::CtHu, 0.0);
  const Volume3D zero_pet(Shape3(4, 4, 4), Vec3::Ones(), VolumeKind::PetSuv, 0.0);
  const ChannelStack z = build_channels(zero_ct, zero_pet);
  EXPECT_TRUE((z[ChannelStack::kCtClipped].data() == 0.0).all());
  EXPECT_TRUE((z[ChannelStack::kPetClipped].data() == 0.0).all());

  const Volume3D other(Shape3(4, 4, 5), Vec3::Ones(), VolumeKind::PetSuv, 0.0);
  EXPECT_PETSEG_ERROR(build_channels(ct, other), ErrorCode::ShapeMismatch);
}

TEST(Mip, SingleVoxel) {
  Volume3D v(Shape3(4, 6, 5), Vec3::Ones(), VolumeKind::PetSuv, 0.0);
  v(2, 5, 3) = 4.5;
  const Image2D img = mip_coronal(v);
  ASSERT_EQ(img.rows(), 4);
  ASSERT_EQ(img.cols(), 5);
  EXPECT_EQ(img(2, 3), 4.5);
  EXPECT_EQ(img.sum(), 4.5);
}

TEST(Mip, MatchesLoopOracleAndCommutesWithClip) {
  const Volume3D v = random_volume(Shape3(6, 7, 8), Vec3::Ones(), 21, 0, 30);
  const Image2D ours = mip_coronal(v);
  EXPECT_TRUE((ours == oracle::mip_coronal(v)).all());
  const Image2D clipped_first = mip_coronal(clip_intensity(v, 0, 20));
  EXPECT_TRUE((clipped_first == ours.min(20.0)).all());

  Volume3D permuted = v;
  for (Index z = 0; z < 8; ++z)
    for (Index y = 0; y < 7; ++y)
      for (Index x = 0; x < 6; ++x) permuted(x, y, z) = v(x, 6 - y, z);
  EXPECT_TRUE((mip_coronal(permuted) == ours).all());
}

TEST(CropPad, FloorCenterPlacement) {
  Image2D img = Image2D::Constant(100, 150, 1.0);
  const Image2D out = crop_pad_center(img);
  ASSERT_EQ(out.rows(), 224);
  ASSERT_EQ(out.cols(), 224);
  EXPECT_EQ(out.block(62, 37, 100, 150).minCoeff(), 1.0);
  EXPECT_EQ(out.sum(), 100.0 * 150.0);

  for (Index n : {1, 2, 101, 223, 224, 225, 300}) {
    Image2D probe = Image2D::Zero(n, n);
    probe(n / 2, n / 2) = 1.0;
    const Image2D o = crop_pad_center(probe);
    ASSERT_EQ(o.rows(), 224);
    EXPECT_EQ(o(112, 112), 1.0) << n;
  }
  const Image2D big = crop_pad_center(Image2D::Constant(300, 300, 1.0));
  EXPECT_TRUE((big == 1.0).all());
  const Image2D same = Image2D::Random(224, 224);
  EXPECT_TRUE((crop_pad_center(same) == same).all());
}

TEST(NormalizeMip, CapThenScale) {
  Image2D px = Image2D::Zero(224, 224);
  px(0, 0) = 20.0;
  px(1, 0) = 40.0;
  px(2, 0) = 5.0;
  const MipImage out = normalize_mip(MipImage(px, Eigen::Vector2d(3, 3)));
  EXPECT_EQ(out.pixels(0, 0), 1.0);
  EXPECT_EQ(out.pixels(1, 0), 1.0);
  EXPECT_EQ(out.pixels(2, 0), 0.25);
  EXPECT_EQ(out.pixels(3, 0), 0.0);
}

TEST(MakeMip, AlwaysSquareAndNonnegative) {
  const Volume3D pet = random_volume(Shape3(50, 30, 90), Vec3(4, 4, 2), 4, 0, 25);
  const MipImage m = make_mip(pet);
  EXPECT_EQ(m.pixels.rows(), 224);
  EXPECT_EQ(m.pixels.cols(), 224);
  EXPECT_GE(m.pixels.minCoeff(), 0.0);
  EXPECT_LE(m.pixels.maxCoeff(), 1.0);
}
