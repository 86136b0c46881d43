#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "petseg/nn.hpp"
#include "petseg/preprocess.hpp"

namespace petseg {

/// Class mapping is fixed project-wide: FDG = 0, PSMA = 1.
enum class Tracer : int { Fdg = 0, Psma = 1 };

std::string_view to_string(Tracer tracer);
Tracer tracer_from_json(const nlohmann::json& j);

/// Widths of the reference tracer discriminator: six stride-2 3x3
/// convolutions (224 -> 4) and five fully connected layers.
struct DiscriminatorDims {
  std::array<nn::Index, 6> conv_channels{8, 16, 32, 64, 64, 64};
  std::array<nn::Index, 4> hidden{256, 64, 32, 16};
  nn::Index kernel = 3;
  nn::Index stride = 2;
  nn::Index pad = 1;
  nn::Index input_size = kMipSize;
};

std::vector<nn::LayerSpec> discriminator_architecture(const DiscriminatorDims& dims = {});
nn::Sequential discriminator_model(const DiscriminatorDims& dims = {});

struct TrainConfig {
  double lr = 1e-4;
  int max_epochs = 100;
  int patience = 10;
  int batch_size = 16;
  double val_fraction = 0.2;
  double weight_decay = 0.01;
  std::uint64_t seed = 42;
  int jobs = 1;  // folds trained concurrently by cross_validate

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& cfg);
void from_json(const nlohmann::json& j, TrainConfig& cfg);

struct LabeledMip {
  MipImage image;
  Tracer label = Tracer::Fdg;
  std::string case_id;
};

struct EpochRecord {
  int epoch = 0;  // 0 is the untrained model
  double train_bce = 0.0;
  double val_bce = 0.0;
  double val_acc = 0.0;
};

struct TrainResult {
  nn::ModelParams params;  // from the best validation epoch
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_bce = 0.0;
};

/// Packs images into an [N, 1, 224, 224] tensor (row index follows z).
nn::Tensor to_batch(std::span<const LabeledMip> items, std::span<const std::size_t> indices);
nn::Tensor to_batch(const MipImage& image);

/// AdamW on mean logit-BCE with early stopping on validation BCE. Stops after
/// `patience` consecutive epochs without an improvement larger than 1e-6, or
/// at max_epochs, and returns the best-epoch parameters. `stream` selects an
/// independent PRNG stream (e.g. the fold index).
TrainResult train_fold(const nn::Sequential& model, std::span<const LabeledMip> train,
                       std::span<const LabeledMip> val, const TrainConfig& cfg, std::uint64_t stream = 0);

/// Stratified split of `data` into (train, val) with cfg.val_fraction held out,
/// then train_fold.
TrainResult train_discriminator(const nn::Sequential& model, std::span<const LabeledMip> data,
                                const TrainConfig& cfg);

/// Deterministic stratified k-fold assignment: one shuffle, stable grouping by
/// label, round-robin dealing. Returns held-out indices per fold.
std::vector<std::vector<std::size_t>> stratified_folds(std::span<const Tracer> labels, int k, std::uint64_t seed);

struct CvResult {
  std::vector<double> fold_accuracies;
  double mean_accuracy = 0.0;
  std::vector<std::vector<std::size_t>> held_out;
  std::vector<TrainResult> folds;
};

CvResult cross_validate(const nn::Sequential& model, std::span<const LabeledMip> data, int k,
                        const TrainConfig& cfg);

struct TracerPrediction {
  double probability = 0.5;
  Tracer tracer = Tracer::Psma;
  double seconds = 0.0;
};

/// PSMA iff probability >= 0.5.
TracerPrediction predict_tracer(const nn::Sequential& model, const nn::ModelParams& params, const MipImage& mip);

/// Fraction of items whose thresholded prediction matches the label.
double accuracy(const nn::Sequential& model, const nn::ModelParams& params, std::span<const LabeledMip> items);

void write_history_csv(std::ostream& os, std::span<const EpochRecord> history);

/// Training manifest: JSON list of {case_id, mip_path, label}. Paths are
/// relative to the manifest. mip_path is a NIfTI (nx x 1 x nz) or a raw
/// little-endian float32 224x224 grid (".f32"/".raw").
std::vector<LabeledMip> load_mip_manifest(const std::filesystem::path& manifest);
MipImage load_mip(const std::filesystem::path& path);

}  // namespace petseg
