#include "petseg/discriminator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <future>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>

#include "petseg/nifti.hpp"
#include "petseg/random.hpp"

namespace petseg {
namespace {

using nn::Index;

constexpr double kMinImprovement = 1e-6;

double label_value(Tracer t) { return t == Tracer::Psma ? 1.0 : 0.0; }

struct Evaluation {
  double bce = 0.0;
  double accuracy = 0.0;
};

Evaluation evaluate(const nn::Sequential& model, const nn::ModelParams& params, std::span<const LabeledMip> items,
                    int batch_size) {
  Evaluation ev;
  std::vector<std::size_t> idx;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < items.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(items.size(), start + static_cast<std::size_t>(batch_size));
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const nn::Tensor z = model.logits(params, to_batch(items, idx));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const double y = label_value(items[idx[i]].label);
      ev.bce += nn::bce_with_logits(z[static_cast<Index>(i)], y).loss;
      const double predicted = z[static_cast<Index>(i)] >= 0.0 ? 1.0 : 0.0;
      if (predicted == y) ++correct;
    }
  }
  ev.bce /= static_cast<double>(items.size());
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(items.size());
  return ev;
}

void require_disjoint(std::span<const LabeledMip> a, std::span<const LabeledMip> b) {
  std::set<std::string> ids;
  for (const auto& item : a) ids.insert(item.case_id);
  for (const auto& item : b) {
    if (!item.case_id.empty() && ids.contains(item.case_id)) {
      throw Error(ErrorCode::InvalidArgument, "case " + item.case_id + " is in both train and validation");
    }
  }
}

// Stratified holdout of round(fraction * class size) items per class.
std::pair<std::vector<LabeledMip>, std::vector<LabeledMip>> split_validation(std::span<const LabeledMip> data,
                                                                             double fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));

  std::vector<LabeledMip> train;
  std::vector<LabeledMip> val;
  for (Tracer cls : {Tracer::Fdg, Tracer::Psma}) {
    std::vector<std::size_t> members;
    for (std::size_t i : order) {
      if (data[i].label == cls) members.push_back(i);
    }
    auto n_val = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(members.size())));
    if (fraction > 0.0 && n_val == 0 && members.size() >= 2) n_val = 1;
    for (std::size_t j = 0; j < members.size(); ++j) (j < n_val ? val : train).push_back(data[members[j]]);
  }
  return {std::move(train), std::move(val)};
}

}  // namespace

std::string_view to_string(Tracer tracer) { return tracer == Tracer::Psma ? "PSMA" : "FDG"; }

Tracer tracer_from_json(const nlohmann::json& j) {
  if (j.is_number_integer()) {
    const int v = j.get<int>();
    if (v == 0) return Tracer::Fdg;
    if (v == 1) return Tracer::Psma;
  } else if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "FDG" || s == "fdg") return Tracer::Fdg;
    if (s == "PSMA" || s == "psma") return Tracer::Psma;
  }
  throw Error(ErrorCode::InvalidArgument, "label must be 0/1 or FDG/PSMA, got " + j.dump());
}

std::vector<nn::LayerSpec> discriminator_architecture(const DiscriminatorDims& dims) {
  std::vector<nn::LayerSpec> layers;
  Index channels = 1;
  Index extent = dims.input_size;
  for (Index width : dims.conv_channels) {
    layers.emplace_back(nn::Conv2D{channels, width, dims.kernel, dims.stride, dims.pad});
    layers.emplace_back(nn::ReLU{});
    channels = width;
    extent = nn::conv_output_extent(extent, dims.kernel, dims.stride, dims.pad);
  }
  layers.emplace_back(nn::Flatten{});
  Index features = channels * extent * extent;
  for (Index width : dims.hidden) {
    layers.emplace_back(nn::Linear{features, width});
    layers.emplace_back(nn::ReLU{});
    features = width;
  }
  layers.emplace_back(nn::Linear{features, 1});
  layers.emplace_back(nn::Sigmoid{});
  return layers;
}

nn::Sequential discriminator_model(const DiscriminatorDims& dims) {
  return nn::Sequential(discriminator_architecture(dims), {1, dims.input_size, dims.input_size});
}

void TrainConfig::validate() const {
  if (!(lr > 0.0) || max_epochs < 1 || patience < 0 || batch_size < 1 || !(val_fraction >= 0.0) ||
      !(val_fraction < 1.0) || !(weight_decay >= 0.0) || jobs < 1) {
    throw Error(ErrorCode::InvalidArgument, "invalid training configuration");
  }
}

void to_json(nlohmann::json& j, const TrainConfig& cfg) {
  j = {{"lr", cfg.lr},
       {"max_epochs", cfg.max_epochs},
       {"patience", cfg.patience},
       {"batch_size", cfg.batch_size},
       {"val_fraction", cfg.val_fraction},
       {"weight_decay", cfg.weight_decay},
       {"seed", cfg.seed},
       {"jobs", cfg.jobs}};
}

void from_json(const nlohmann::json& j, TrainConfig& cfg) {
  cfg.lr = j.value("lr", cfg.lr);
  cfg.max_epochs = j.value("max_epochs", cfg.max_epochs);
  cfg.patience = j.value("patience", cfg.patience);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.val_fraction = j.value("val_fraction", cfg.val_fraction);
  cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.jobs = j.value("jobs", cfg.jobs);
}

nn::Tensor to_batch(std::span<const LabeledMip> items, std::span<const std::size_t> indices) {
  const Index n = static_cast<Index>(indices.size());
  const Index plane = kMipSize * kMipSize;
  nn::Tensor batch({n, 1, kMipSize, kMipSize});
  for (Index i = 0; i < n; ++i) {
    const Image2D& px = items[indices[static_cast<std::size_t>(i)]].image.pixels;
    std::memcpy(batch.data().data() + i * plane, px.data(), sizeof(double) * static_cast<std::size_t>(plane));
  }
  return batch;
}

nn::Tensor to_batch(const MipImage& image) {
  nn::Tensor batch({1, 1, kMipSize, kMipSize});
  std::memcpy(batch.data().data(), image.pixels.data(), sizeof(double) * kMipSize * kMipSize);
  return batch;
}

TrainResult train_fold(const nn::Sequential& model, std::span<const LabeledMip> train,
                       std::span<const LabeledMip> val, const TrainConfig& cfg, std::uint64_t stream) {
  cfg.validate();
  if (train.empty() || val.empty()) throw Error(ErrorCode::EmptySplit, "train and validation sets must be non-empty");
  require_disjoint(train, val);

  const std::uint64_t base = derive_seed(cfg.seed, stream);
  nn::ModelParams params = model.init(derive_seed(base, 0));
  Rng order_rng(derive_seed(base, 1));
  const nn::AdamWConfig opt{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay};

  TrainResult result;
  const Evaluation initial = evaluate(model, params, val, cfg.batch_size);
  result.history.push_back({0, std::numeric_limits<double>::quiet_NaN(), initial.bce, initial.accuracy});
  result.params = params;
  result.best_val_bce = initial.bce;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> labels;
  nn::Gradients grads;
  int stale = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    order_rng.shuffle(std::span<std::size_t>(order));
    double train_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::span<const std::size_t> batch(order.data() + start, end - start);
      labels.clear();
      for (std::size_t i : batch) labels.push_back(label_value(train[i].label));
      const double loss = model.loss_and_grad(params, to_batch(train, batch), labels, &grads);
      nn::adamw_step(params, grads, opt);
      train_loss += loss * static_cast<double>(batch.size());
    }

    const Evaluation ev = evaluate(model, params, val, cfg.batch_size);
    if (std::isnan(ev.bce)) throw Error(ErrorCode::DivergedLoss, "validation BCE is NaN at epoch " + std::to_string(epoch));
    result.history.push_back({epoch, train_loss / static_cast<double>(train.size()), ev.bce, ev.accuracy});

    if (ev.bce < result.best_val_bce - kMinImprovement) {
      result.best_val_bce = ev.bce;
      result.best_epoch = epoch;
      result.params = params;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  return result;
}

TrainResult train_discriminator(const nn::Sequential& model, std::span<const LabeledMip> data,
                                const TrainConfig& cfg) {
  auto [train, val] = split_validation(data, cfg.val_fraction, derive_seed(cfg.seed, 0xA11));
  return train_fold(model, train, val, cfg, 0);
}

std::vector<std::vector<std::size_t>> stratified_folds(std::span<const Tracer> labels, int k, std::uint64_t seed) {
  if (k < 2 || labels.size() < static_cast<std::size_t>(k)) {
    throw Error(ErrorCode::TooFewSamples, std::to_string(labels.size()) + " samples for " + std::to_string(k) + " folds");
  }
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  std::stable_partition(order.begin(), order.end(), [&](std::size_t i) { return labels[i] == Tracer::Fdg; });

  std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
  for (std::size_t pos = 0; pos < order.size(); ++pos) folds[pos % folds.size()].push_back(order[pos]);
  return folds;
}

CvResult cross_validate(const nn::Sequential& model, std::span<const LabeledMip> data, int k,
                        const TrainConfig& cfg) {
  cfg.validate();
  std::vector<Tracer> labels;
  for (const auto& item : data) labels.push_back(item.label);

  CvResult cv;
  cv.held_out = stratified_folds(labels, k, derive_seed(cfg.seed, 0xF01D));
  cv.folds.resize(cv.held_out.size());
  cv.fold_accuracies.resize(cv.held_out.size());

  const auto run_fold = [&](std::size_t f) {
    std::vector<bool> is_test(data.size(), false);
    for (std::size_t i : cv.held_out[f]) is_test[i] = true;
    std::vector<LabeledMip> pool;
    std::vector<LabeledMip> test;
    for (std::size_t i = 0; i < data.size(); ++i) (is_test[i] ? test : pool).push_back(data[i]);

    auto [train, val] = split_validation(pool, cfg.val_fraction, derive_seed(cfg.seed, 0x5A17 + f));
    cv.folds[f] = train_fold(model, train, val, cfg, f + 1);
    cv.fold_accuracies[f] = accuracy(model, cv.folds[f].params, test);
  };

  if (cfg.jobs <= 1) {
    for (std::size_t f = 0; f < cv.held_out.size(); ++f) run_fold(f);
  } else {
    for (std::size_t start = 0; start < cv.held_out.size(); start += static_cast<std::size_t>(cfg.jobs)) {
      std::vector<std::future<void>> running;
      const std::size_t end = std::min(cv.held_out.size(), start + static_cast<std::size_t>(cfg.jobs));
      for (std::size_t f = start; f < end; ++f) running.push_back(std::async(std::launch::async, run_fold, f));
      for (auto& r : running) r.get();
    }
  }
  cv.mean_accuracy = std::accumulate(cv.fold_accuracies.begin(), cv.fold_accuracies.end(), 0.0) /
                     static_cast<double>(cv.fold_accuracies.size());
  return cv;
}

TracerPrediction predict_tracer(const nn::Sequential& model, const nn::ModelParams& params, const MipImage& mip) {
  model.check_params(params);
  const auto start = std::chrono::steady_clock::now();
  const double z = model.logits(params, to_batch(mip))[0];
  TracerPrediction pred;
  pred.probability = nn::sigmoid(z);
  pred.tracer = pred.probability >= 0.5 ? Tracer::Psma : Tracer::Fdg;
  pred.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return pred;
}

double accuracy(const nn::Sequential& model, const nn::ModelParams& params, std::span<const LabeledMip> items) {
  if (items.empty()) return 0.0;
  return evaluate(model, params, items, 16).accuracy;
}

void write_history_csv(std::ostream& os, std::span<const EpochRecord> history) {
  os << "epoch,train_bce,val_bce,val_acc\n";
  os << std::fixed << std::setprecision(6);
  for (const EpochRecord& r : history) {
    os << r.epoch << ',';
    if (std::isnan(r.train_bce)) {
      os << "nan";
    } else {
      os << r.train_bce;
    }
    os << ',' << r.val_bce << ',' << r.val_acc << '\n';
  }
}

MipImage load_mip(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".f32" || ext == ".raw") {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
    std::vector<unsigned char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (raw.size() != static_cast<std::size_t>(kMipSize * kMipSize * 4)) {
      throw Error(ErrorCode::TruncatedData, "raw MIP must hold 224*224 float32 values");
    }
    Image2D px(kMipSize, kMipSize);
    for (Index i = 0; i < px.size(); ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(raw[static_cast<std::size_t>(4 * i + b)]) << (8 * b);
      px.data()[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
    return MipImage(std::move(px), Eigen::Vector2d::Constant(kMipSpacingMm));
  }

  const Volume3D vol = nifti::read_volume(path, VolumeKind::PetSuv);
  Image2D img;
  if (vol.ny() == 1) {
    img.resize(vol.nx(), vol.nz());
    for (Index z = 0; z < vol.nz(); ++z)
      for (Index x = 0; x < vol.nx(); ++x) img(x, z) = vol(x, 0, z);
  } else if (vol.nz() == 1) {
    img.resize(vol.nx(), vol.ny());
    for (Index y = 0; y < vol.ny(); ++y)
      for (Index x = 0; x < vol.nx(); ++x) img(x, y) = vol(x, y, 0);
  } else {
    throw Error(ErrorCode::ShapeError, "MIP file must have a singleton y or z axis");
  }
  return MipImage(crop_pad_center(img, kMipSize), Eigen::Vector2d(vol.spacing()[0], vol.spacing()[2]));
}

std::vector<LabeledMip> load_mip_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + manifest.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, "malformed manifest: " + std::string(e.what()));
  }
  if (!j.is_array()) throw Error(ErrorCode::InvalidArgument, "training manifest must be a JSON list");
  std::vector<LabeledMip> items;
  for (const auto& entry : j) {
    LabeledMip item;
    item.case_id = entry.at("case_id").get<std::string>();
    item.label = tracer_from_json(entry.at("label"));
    item.image = load_mip(manifest.parent_path() / entry.at("mip_path").get<std::string>());
    items.push_back(std::move(item));
  }
  return items;
}

}  // namespace petseg
