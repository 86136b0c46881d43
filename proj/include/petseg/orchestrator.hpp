#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "petseg/discriminator.hpp"
#include "petseg/nn.hpp"
#include "petseg/preprocess.hpp"
#include "petseg/volume.hpp"

namespace petseg {

/// Axis-flip combination; bits are x=1, y=2, z=4. Self-inverse.
struct Flip {
  bool x = false;
  bool y = false;
  bool z = false;

  int bits() const noexcept { return (x ? 1 : 0) | (y ? 2 : 0) | (z ? 4 : 0); }
  bool is_identity() const noexcept { return bits() == 0; }
  static Flip from_bits(int bits) { return {(bits & 1) != 0, (bits & 2) != 0, (bits & 4) != 0}; }

  friend bool operator==(const Flip&, const Flip&) = default;
};

std::string to_string(Flip flip);
Flip flip_from_string(const std::string& name);

/// All eight flips in canonical (bit) order.
std::vector<Flip> all_flips();

/// Sorted by bits with duplicates removed.
std::vector<Flip> canonical_flips(std::span<const Flip> flips);

Volume3D flip_volume(const Volume3D& vol, Flip flip);

/// A segmentation backend: four-channel stack in, probability map of the same
/// shape with values in [0, 1] out.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual const std::string& name() const = 0;
  virtual Volume3D predict(const ChannelStack& stack) = 0;
};

/// Built-in backend: windowed PET divided by `scale`, optionally zeroed inside
/// an organ mask (resampled onto the stack grid when needed).
class SuvThresholdPredictor : public Predictor {
 public:
  explicit SuvThresholdPredictor(std::string name, double scale = 20.0,
                                 std::optional<BinaryMask> suppress = std::nullopt);

  const std::string& name() const override { return name_; }
  Volume3D predict(const ChannelStack& stack) override;

 private:
  std::string name_;
  double scale_;
  std::optional<BinaryMask> suppress_;
};

/// Backend returning a fixed value everywhere.
class ConstantPredictor : public Predictor {
 public:
  ConstantPredictor(std::string name, double value) : name_(std::move(name)), value_(value) {}
  const std::string& name() const override { return name_; }
  Volume3D predict(const ChannelStack& stack) override;

 private:
  std::string name_;
  double value_;
};

struct Invocation {
  std::string predictor;
  Flip flip;
};
using InvocationLog = std::vector<Invocation>;

struct EnsembleConfig {
  std::vector<std::shared_ptr<Predictor>> folds;
  std::vector<Flip> tta_flips = all_flips();
  std::vector<Flip> reduced_flips = {Flip{}, Flip{false, false, true}};
  std::int64_t tta_reduction_threshold = 40'000'000;
  double time_budget_s = 300.0;
  double decision_threshold = 0.5;
  std::optional<Vec3> target_spacing;  // working grid for the predictors; nullopt = native

  void validate() const;
};

/// reduced_flips when voxel_count exceeds the threshold, tta_flips otherwise.
std::vector<Flip> select_flips(const EnsembleConfig& cfg, Index voxel_count);

/// Mean over flips of f^-1(p(f(stack))), accumulated pairwise in canonical
/// flip order.
Volume3D tta_predict(Predictor& predictor, const ChannelStack& stack, std::span<const Flip> flips,
                     InvocationLog* log = nullptr);

struct EnsembleOutcome {
  Volume3D probability;
  std::vector<Flip> flips_used;
  bool budget_downgrade = false;  // projected time exceeded the budget; reduced flips used
};

/// Voxelwise mean over folds of tta_predict. Folds are reduced in name order.
EnsembleOutcome ensemble_run(const EnsembleConfig& cfg, const ChannelStack& stack, InvocationLog* log = nullptr);

inline Volume3D ensemble_predict(const EnsembleConfig& cfg, const ChannelStack& stack, InvocationLog* log = nullptr) {
  return ensemble_run(cfg, stack, log).probability;
}

/// prob >= threshold.
BinaryMask threshold_mask(const Volume3D& prob, double threshold = 0.5);

/// Resamples every channel trilinearly to `spacing`.
ChannelStack resample_stack(const ChannelStack& stack, const Vec3& spacing);

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct RoutedResult {
  Tracer tracer = Tracer::Psma;
  double tracer_probability = 0.5;
  BinaryMask mask;
  Volume3D prob_map;
  double wall_time_s = 0.0;
  std::vector<Flip> tta_used;
  std::vector<StageTiming> timings;
  InvocationLog invocations;
  bool budget_exceeded = false;
  bool budget_downgrade = false;
};

struct RouteOptions {
  WindowSpec window;
  double mip_spacing = kMipSpacingMm;
  double mip_cap = kMipCapSuv;
};

/// Tracer discrimination followed by the tracer-specific ensemble.
RoutedResult route(const Volume3D& ct, const Volume3D& pet, const nn::Sequential& discriminator,
                   const nn::ModelParams& params, const EnsembleConfig& fdg, const EnsembleConfig& psma,
                   const RouteOptions& options = {});

}  // namespace petseg
