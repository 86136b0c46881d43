#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "petseg/discriminator.hpp"
#include "petseg/nifti.hpp"
#include "petseg/random.hpp"
#include "test_support.hpp"

using namespace petseg;
using testing_support::TempDir;

namespace {

// FDG-like items are bright in the superior quarter of z, PSMA-like in the
// inferior quarter.
std::vector<LabeledMip> toy_set(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<LabeledMip> items;
  for (int i = 0; i < n; ++i) {
    const bool fdg = i % 2 == 0;
    Image2D px = Image2D::Zero(kMipSize, kMipSize);
    for (Index z = 0; z < kMipSize; ++z)
      for (Index x = 40; x < 184; ++x) px(x, z) = 0.05 + 0.02 * rng.uniform();
    const Index z0 = fdg ? 168 : 16;
    for (Index z = z0; z < z0 + 40; ++z)
      for (Index x = 90; x < 134; ++x) px(x, z) = 0.6 + 0.1 * rng.uniform();
    items.push_back({MipImage(px, Eigen::Vector2d(3, 3)), fdg ? Tracer::Fdg : Tracer::Psma,
                     "toy_" + std::to_string(i)});
  }
  return items;
}

DiscriminatorDims small_dims() {
  DiscriminatorDims d;
  d.conv_channels = {4, 4, 8, 8, 8, 8};
  d.hidden = {16, 8, 8, 4};
  return d;
}

}  // namespace

TEST(StratifiedFolds, PartitionProperties) {
  std::vector<Tracer> labels;
  for (int i = 0; i < 10; ++i) labels.push_back(i < 4 ? Tracer::Fdg : Tracer::Psma);
  const auto folds = stratified_folds(labels, 5, 42);
  ASSERT_EQ(folds.size(), 5u);
  std::multiset<std::size_t> seen;
  for (const auto& f : folds) {
    EXPECT_EQ(f.size(), 2u);
    seen.insert(f.begin(), f.end());
  }
  EXPECT_EQ(seen.size(), 10u);
  EXPECT_EQ(std::set<std::size_t>(seen.begin(), seen.end()).size(), 10u);
  EXPECT_EQ(stratified_folds(labels, 5, 42), folds);

  EXPECT_PETSEG_ERROR(stratified_folds(std::span(labels).first(3), 5, 1), ErrorCode::TooFewSamples);
}

TEST(StratifiedFolds, LabelRatioWithinOne) {
  std::vector<Tracer> labels;
  for (int i = 0; i < 37; ++i) labels.push_back(i % 3 == 0 ? Tracer::Fdg : Tracer::Psma);
  const double global = 13.0 / 37.0;
  for (const auto& f : stratified_folds(labels, 5, 9)) {
    long fdg = 0;
    for (std::size_t i : f) fdg += labels[i] == Tracer::Fdg;
    EXPECT_LE(std::abs(static_cast<double>(fdg) - global * static_cast<double>(f.size())), 1.0);
  }
}

TEST(TrainFold, LearnsToySetAndKeepsBestEpoch) {
  const nn::Sequential model = discriminator_model(small_dims());
  const auto data = toy_set(64, 42);
  const std::vector<LabeledMip> train(data.begin(), data.begin() + 48);
  const std::vector<LabeledMip> val(data.begin() + 48, data.end());
  TrainConfig cfg;
  cfg.lr = 3e-3;
  cfg.max_epochs = 30;
  cfg.patience = 5;
  const TrainResult r = train_fold(model, train, val, cfg);

  ASSERT_GE(r.history.size(), 2u);
  EXPECT_EQ(r.history.front().epoch, 0);
  EXPECT_TRUE(std::isnan(r.history.front().train_bce));
  EXPECT_LT(r.best_val_bce, r.history.front().val_bce);
  for (const EpochRecord& e : r.history) EXPECT_GE(e.val_bce, r.best_val_bce);
  EXPECT_EQ(r.history[static_cast<std::size_t>(r.best_epoch)].val_bce, r.best_val_bce);
  EXPECT_EQ(accuracy(model, r.params, train), 1.0);

  const TracerPrediction fdg = predict_tracer(model, r.params, data[0].image);
  EXPECT_LT(fdg.probability, 0.5);
  EXPECT_EQ(fdg.tracer, Tracer::Fdg);
  EXPECT_EQ(predict_tracer(model, r.params, data[0].image).probability, fdg.probability);

  const TrainResult again = train_fold(model, train, val, cfg);
  for (std::size_t t = 0; t < r.params.tensors.size(); ++t) {
    EXPECT_TRUE((again.params.tensors[t].value.data() == r.params.tensors[t].value.data()).all());
  }
}

TEST(TrainFold, PatienceZeroStopsAtFirstStall) {
  const nn::Sequential model = discriminator_model(small_dims());
  const auto data = toy_set(16, 3);
  const std::vector<LabeledMip> train(data.begin(), data.begin() + 12);
  const std::vector<LabeledMip> val(data.begin() + 12, data.end());
  TrainConfig cfg;
  cfg.lr = 1e-9;  // too small to move the validation loss by 1e-6
  cfg.patience = 0;
  const TrainResult r = train_fold(model, train, val, cfg);
  EXPECT_EQ(r.history.size(), 2u);
  EXPECT_EQ(r.best_epoch, 0);
}

TEST(TrainFold, SplitGuards) {
  const nn::Sequential model = discriminator_model(small_dims());
  const auto data = toy_set(4, 1);
  const std::vector<LabeledMip> some(data.begin(), data.begin() + 2);
  EXPECT_PETSEG_ERROR(train_fold(model, {}, some, TrainConfig{}), ErrorCode::EmptySplit);
  EXPECT_PETSEG_ERROR(train_fold(model, some, some, TrainConfig{}), ErrorCode::InvalidArgument);
}

TEST(CrossValidate, ToySetSeparates) {
  const nn::Sequential model = discriminator_model(small_dims());
  const auto data = toy_set(40, 5);
  TrainConfig cfg;
  cfg.lr = 3e-3;
  cfg.max_epochs = 20;
  cfg.patience = 4;
  const CvResult cv = cross_validate(model, data, 5, cfg);
  ASSERT_EQ(cv.fold_accuracies.size(), 5u);
  EXPECT_GE(cv.mean_accuracy, 0.95);
}

TEST(PredictTracer, ZeroModelTiesToPsma) {
  const nn::Sequential model = discriminator_model();
  const TracerPrediction p = predict_tracer(model, model.zeros(), MipImage());
  EXPECT_EQ(p.probability, 0.5);
  EXPECT_EQ(p.tracer, Tracer::Psma);
  EXPECT_GE(p.seconds, 0.0);
}

TEST(PredictTracer, RejectsMismatchedParams) {
  const nn::Sequential model = discriminator_model();
  const nn::Sequential other = discriminator_model(small_dims());
  EXPECT_PETSEG_ERROR(predict_tracer(model, other.zeros(), MipImage()), ErrorCode::ShapeError);
}

TEST(History, CsvFormat) {
  std::ostringstream os;
  const std::vector<EpochRecord> h{{0, std::nan(""), 0.7, 0.5}, {1, 0.6, 0.5, 0.75}};
  write_history_csv(os, h);
  EXPECT_EQ(os.str(), "epoch,train_bce,val_bce,val_acc\n0,nan,0.700000,0.500000\n1,0.600000,0.500000,0.750000\n");
}

TEST(Manifest, LoadsRawAndNiftiMips) {
  TempDir dir;
  std::vector<float> raw(kMipSize * kMipSize, 0.0f);
  raw[5] = 0.5f;
  std::ofstream(dir / "a.f32", std::ios::binary)
      .write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
  Volume3D vol(Shape3(kMipSize, 1, kMipSize), Vec3(3, 1, 3), VolumeKind::PetSuv, 0.0);
  vol(7, 0, 9) = 0.25;
  nifti::write_volume(vol, dir / "b.nii");
  std::ofstream(dir / "m.json") << R"([{"case_id":"a","mip_path":"a.f32","label":0},
                                      {"case_id":"b","mip_path":"b.nii","label":"PSMA"}])";
  const auto items = load_mip_manifest(dir / "m.json");
  ASSERT_EQ(items.size(), 2u);
  EXPECT_EQ(items[0].label, Tracer::Fdg);
  EXPECT_EQ(items[0].image.pixels.data()[5], 0.5);
  EXPECT_EQ(items[1].label, Tracer::Psma);
  EXPECT_EQ(items[1].image.pixels(7, 9), 0.25);
}

TEST(TrainConfigJson, RoundTripAndValidation) {
  TrainConfig cfg;
  cfg.lr = 5e-4;
  cfg.patience = 3;
  nlohmann::json j;
  to_json(j, cfg);
  TrainConfig back;
  from_json(j, back);
  EXPECT_EQ(back.lr, 5e-4);
  EXPECT_EQ(back.patience, 3);
  EXPECT_EQ(TrainConfig{}.lr, 1e-4);
  EXPECT_EQ(TrainConfig{}.max_epochs, 100);
  back.batch_size = 0;
  EXPECT_PETSEG_ERROR(back.validate(), ErrorCode::InvalidArgument);
}
