#include <gtest/gtest.h>

#include "petseg/nifti.hpp"
#include "petseg/preprocess.hpp"
#include "petseg/random.hpp"
#include "petseg/synth.hpp"
#include "test_support.hpp"

using namespace petseg;
using namespace petseg::synth;
using testing_support::TempDir;

namespace {

PhantomSpec quiet_spec(TracerStyle style) {
  PhantomSpec spec;
  spec.shape = Shape3(32, 24, 48);
  spec.spacing = Vec3::Constant(6.0);
  spec.style = style;
  spec.background_suv = 1.0;
  spec.add_style_hotspot = false;
  spec.noise_sigma = 0.0;
  return spec;
}

// 16x16 average-pooled features of a 224x224 MIP.
Eigen::VectorXd pooled(const MipImage& mip) {
  constexpr Index cells = 16;
  constexpr Index step = kMipSize / cells;
  Eigen::VectorXd f(cells * cells + 1);
  for (Index i = 0; i < cells; ++i)
    for (Index j = 0; j < cells; ++j) f[i * cells + j] = mip.pixels.block(i * step, j * step, step, step).mean();
  f[cells * cells] = 1.0;
  return f;
}

}  // namespace

TEST(Synth, QuietPhantomIsFlatAndLesionFree) {
  const Phantom ph = make_phantom(quiet_spec(TracerStyle::FdgLike));
  EXPECT_EQ((ph.lesion_gt.data() != 0).count(), 0);
  ASSERT_GT((ph.body.data() != 0).count(), 0);
  for (Index i = 0; i < ph.pet.size(); ++i) {
    if (ph.body.data()[i]) {
      EXPECT_EQ(ph.pet.data()[i], 1.0);
    }
  }
  EXPECT_FALSE(ph.brain.has_value());
  EXPECT_EQ(ph.tracer, Tracer::Fdg);
  EXPECT_EQ(ph.pet.kind(), VolumeKind::PetSuv);
  EXPECT_EQ(ph.ct.kind(), VolumeKind::CtHu);
}

TEST(Synth, LesionMaskMatchesHotspotRadius) {
  PhantomSpec spec = quiet_spec(TracerStyle::PsmaLike);
  const Vec3 c = Vec3(16, 12, 24) * 6.0;  // on the voxel grid
  spec.hotspots.push_back(Hotspot{c, 12.0, 5.0, true});
  const Phantom ph = make_phantom(spec);
  long expected = 0;
  for (Index z = 0; z < spec.shape[2]; ++z)
    for (Index y = 0; y < spec.shape[1]; ++y)
      for (Index x = 0; x < spec.shape[0]; ++x) {
        const Vec3 p = Vec3(double(x), double(y), double(z)).cwiseProduct(spec.spacing);
        const bool inside = (p - c).norm() <= 12.0;
        expected += inside;
        EXPECT_EQ(ph.lesion_gt(x, y, z), inside ? 1 : 0);
      }
  EXPECT_GT(expected, 0);
  EXPECT_NEAR(ph.pet(16, 12, 24), 6.0, 1e-9);
}

TEST(Synth, FdgBrainIsTheMipMaximumNearTheTop) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Phantom ph = make_phantom(random_phantom_spec(TracerStyle::FdgLike, seed));
    ASSERT_TRUE(ph.brain.has_value());
    const Image2D mip = mip_coronal(ph.pet);
    Index row = 0, col = 0;
    mip.maxCoeff(&row, &col);
    EXPECT_GE(col, static_cast<Index>(0.8 * static_cast<double>(mip.cols()))) << "seed " << seed;
  }
}

TEST(Synth, PsmaBladderSitsLow) {
  const Phantom ph = make_phantom(random_phantom_spec(TracerStyle::PsmaLike, 3));
  ASSERT_TRUE(ph.bladder.has_value());
  EXPECT_EQ(ph.tracer, Tracer::Psma);
  Index top = 0;
  for (Index z = 0; z < ph.bladder->shape()[2]; ++z)
    for (Index y = 0; y < ph.bladder->shape()[1]; ++y)
      for (Index x = 0; x < ph.bladder->shape()[0]; ++x)
        if ((*ph.bladder)(x, y, z)) top = std::max(top, z);
  EXPECT_LT(top, ph.pet.shape()[2] / 2);
}

TEST(Synth, DeterministicAndNonNegative) {
  const PhantomSpec spec = random_phantom_spec(TracerStyle::PsmaLike, 17, Shape3(32, 24, 48), Vec3::Constant(8.0), 0.5);
  const Phantom a = make_phantom(spec);
  const Phantom b = make_phantom(spec);
  EXPECT_TRUE((a.pet.data() == b.pet.data()).all());
  EXPECT_TRUE((a.ct.data() == b.ct.data()).all());
  EXPECT_TRUE((a.lesion_gt.data() == b.lesion_gt.data()).all());
  EXPECT_GE(a.pet.data().minCoeff(), 0.0);
  const Phantom other = make_phantom(random_phantom_spec(TracerStyle::PsmaLike, 18, Shape3(32, 24, 48), Vec3::Constant(8.0), 0.5));
  EXPECT_FALSE((a.pet.data() == other.pet.data()).all());
}

TEST(Synth, CtTissueClasses) {
  const Phantom ph = make_phantom(quiet_spec(TracerStyle::FdgLike));
  for (Index i = 0; i < ph.ct.size(); ++i) {
    const double hu = ph.ct.data()[i];
    if (!ph.body.data()[i]) EXPECT_EQ(hu, kAirHu);
    else if (ph.skeleton.data()[i]) EXPECT_EQ(hu, kBoneHu);
    else EXPECT_EQ(hu, kSoftTissueHu);
  }
  EXPECT_GT((ph.skeleton.data() != 0).count(), 0);
}

TEST(Synth, HotspotOutsideVolumeThrows) {
  PhantomSpec spec = quiet_spec(TracerStyle::FdgLike);
  spec.hotspots.push_back(Hotspot{Vec3(-1.0, 10.0, 10.0), 5.0, 4.0, true});
  EXPECT_PETSEG_ERROR(make_phantom(spec), ErrorCode::HotspotOutOfBounds);
  spec.hotspots.back().center_mm = spec.extent_mm() + Vec3::Constant(0.5);
  EXPECT_PETSEG_ERROR(make_phantom(spec), ErrorCode::HotspotOutOfBounds);
}

TEST(Synth, MipDatasetBalancedAndSized) {
  const std::vector<LabeledMip> data = make_mip_dataset(10, 7);
  ASSERT_EQ(data.size(), 10u);
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(data[i].label, i % 2 == 0 ? Tracer::Fdg : Tracer::Psma);
    EXPECT_EQ(data[i].image.pixels.rows(), kMipSize);
    EXPECT_EQ(data[i].image.pixels.cols(), kMipSize);
    EXPECT_GE(data[i].image.pixels.minCoeff(), 0.0);
    EXPECT_LE(data[i].image.pixels.maxCoeff(), 1.0);
  }
  EXPECT_EQ(data[3].case_id, "case_0003");
  const std::vector<LabeledMip> threaded = make_mip_dataset(10, 7, 3);
  for (std::size_t i = 0; i < data.size(); ++i) EXPECT_TRUE((data[i].image.pixels == threaded[i].image.pixels).all());
  EXPECT_PETSEG_ERROR(make_mip_dataset(1, 7), ErrorCode::TooFewSamples);
}

TEST(Synth, LinearProbeSeparatesStyles) {
  const std::vector<LabeledMip> data = make_mip_dataset(120, 99);
  std::vector<Eigen::VectorXd> x;
  for (const LabeledMip& m : data) x.push_back(pooled(m.image));
  const auto target = [&](std::size_t i) { return data[i].label == Tracer::Fdg ? 1.0 : 0.0; };
  const std::size_t n_train = 80;

  Eigen::VectorXd w = Eigen::VectorXd::Zero(x[0].size());
  for (int it = 0; it < 500; ++it) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(w.size());
    for (std::size_t i = 0; i < n_train; ++i) {
      const double p = 1.0 / (1.0 + std::exp(-w.dot(x[i])));
      g += (p - target(i)) * x[i];
    }
    w -= 20.0 / static_cast<double>(n_train) * g;
  }
  int correct = 0;
  for (std::size_t i = n_train; i < data.size(); ++i) correct += ((w.dot(x[i]) > 0.0) == (target(i) == 1.0));
  EXPECT_GE(static_cast<double>(correct) / static_cast<double>(data.size() - n_train), 0.95);
}

TEST(Synth, CorpusRoundTripsThroughNifti) {
  TempDir dir;
  CorpusOptions opt;
  opt.n = 2;
  opt.seed = 5;
  opt.shape = Shape3(24, 16, 32);
  opt.spacing = Vec3::Constant(10.0);
  const std::vector<CorpusCase> cases = write_corpus(dir.path(), opt);
  ASSERT_EQ(cases.size(), 2u);
  EXPECT_EQ(cases[0].tracer, Tracer::Fdg);
  EXPECT_EQ(cases[1].tracer, Tracer::Psma);

  const Phantom ph = make_phantom(random_phantom_spec(TracerStyle::FdgLike, derive_seed(5, 0), opt.shape, opt.spacing,
                                                      opt.noise_sigma));
  const std::string id = cases[0].case_id;
  const Volume3D pet = nifti::read_volume(dir / "pet" / (id + ".nii.gz"));
  const Volume3D ct = nifti::read_volume(dir / "ct" / (id + ".nii.gz"));
  const Volume3D lesion = nifti::read_volume(dir / "lesion" / (id + ".nii.gz"));
  ASSERT_TRUE((pet.shape() == ph.pet.shape()).all());
  EXPECT_LT((pet.data() - ph.pet.data()).abs().maxCoeff(), 1e-5 * std::max(1.0, ph.pet.data().maxCoeff()));
  EXPECT_TRUE((ct.data() == ph.ct.data()).all());
  EXPECT_TRUE((lesion.data() == ph.lesion_gt.data().cast<double>()).all());
  EXPECT_TRUE(std::filesystem::exists(dir / "mip_manifest.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "organs" / id / "brain.nii.gz"));
  EXPECT_TRUE(std::filesystem::exists(dir / "organs" / cases[1].case_id / "urinary_bladder.nii.gz"));
  EXPECT_TRUE(std::filesystem::exists(dir / "fusion" / (id + ".json")));
  const std::vector<LabeledMip> mips = load_mip_manifest(dir / "mip_manifest.json");
  ASSERT_EQ(mips.size(), 2u);
  EXPECT_EQ(mips[1].label, Tracer::Psma);
}
