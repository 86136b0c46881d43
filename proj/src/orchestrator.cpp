#include "petseg/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>

namespace petseg {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Fixed-shape pairwise summation: partial sums over power-of-two blocks are
// merged as soon as two of equal size exist, so only O(log n) volumes are
// alive and the rounding depends on nothing but the insertion order.
class PairwiseMean {
 public:
  void add(Volume3D v) {
    stack_.push_back({std::move(v), 1});
    while (stack_.size() >= 2 && stack_[stack_.size() - 1].count == stack_[stack_.size() - 2].count) {
      Entry top = std::move(stack_.back());
      stack_.pop_back();
      stack_.back().sum.data() += top.sum.data();
      stack_.back().count += top.count;
    }
    ++total_;
  }

  Volume3D mean() const {
    if (stack_.empty()) throw Error(ErrorCode::InvalidArgument, "mean of no predictions");
    Volume3D sum = stack_.back().sum;
    for (std::size_t i = stack_.size() - 1; i-- > 0;) sum.data() = stack_[i].sum.data() + sum.data();
    sum.data() /= static_cast<double>(total_);
    return sum;
  }

 private:
  struct Entry {
    Volume3D sum;
    std::size_t count;
  };
  std::vector<Entry> stack_;
  std::size_t total_ = 0;
};

ChannelStack flip_stack(const ChannelStack& stack, Flip flip) {
  if (flip.is_identity()) return stack;
  ChannelStack out;
  for (int c = 0; c < ChannelStack::kCount; ++c) out[c] = flip_volume(stack[c], flip);
  return out;
}

Volume3D invoke(Predictor& predictor, const ChannelStack& stack, Flip flip, InvocationLog* log) {
  if (log) log->push_back({predictor.name(), flip});
  Volume3D out;
  try {
    out = predictor.predict(flip_stack(stack, flip));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::PredictorFailure) throw;
    throw Error(ErrorCode::PredictorFailure, predictor.name() + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorCode::PredictorFailure, predictor.name() + ": " + e.what());
  }
  if (!(out.shape() == stack.shape()).all()) {
    throw Error(ErrorCode::PredictorFailure, predictor.name() + ": output shape differs from input");
  }
  if (out.size() > 0 && !(out.data().minCoeff() >= 0.0 && out.data().maxCoeff() <= 1.0)) {
    throw Error(ErrorCode::PredictorFailure, predictor.name() + ": probabilities outside [0, 1]");
  }
  Volume3D prob(stack.shape(), stack.spacing(), VolumeKind::Probability, std::move(out.data()));
  prob.set_origin(stack[0].origin());
  return flip.is_identity() ? prob : flip_volume(prob, flip);
}

Volume3D tta_with_first(Predictor& predictor, const ChannelStack& stack, std::span<const Flip> canonical,
                        InvocationLog* log, std::optional<Volume3D> identity_output) {
  PairwiseMean acc;
  for (const Flip& f : canonical) {
    if (f.is_identity() && identity_output) {
      acc.add(std::move(*identity_output));
      identity_output.reset();
    } else {
      acc.add(invoke(predictor, stack, f, log));
    }
  }
  return acc.mean();
}

void require_identity(std::span<const Flip> flips, const char* what) {
  if (flips.empty()) throw Error(ErrorCode::InvalidArgument, std::string(what) + " is empty");
  if (std::none_of(flips.begin(), flips.end(), [](const Flip& f) { return f.is_identity(); })) {
    throw Error(ErrorCode::InvalidArgument, std::string(what) + " must include the identity flip");
  }
}

}  // namespace

std::string to_string(Flip flip) {
  if (flip.is_identity()) return "identity";
  std::string s;
  if (flip.x) s += 'x';
  if (flip.y) s += 'y';
  if (flip.z) s += 'z';
  return s;
}

Flip flip_from_string(const std::string& name) {
  if (name == "identity" || name == "none") return {};
  Flip f;
  for (char c : name) {
    if (c == 'x') {
      f.x = true;
    } else if (c == 'y') {
      f.y = true;
    } else if (c == 'z') {
      f.z = true;
    } else {
      throw Error(ErrorCode::InvalidArgument, "unknown flip '" + name + "'");
    }
  }
  return f;
}

std::vector<Flip> all_flips() {
  std::vector<Flip> flips;
  for (int b = 0; b < 8; ++b) flips.push_back(Flip::from_bits(b));
  return flips;
}

std::vector<Flip> canonical_flips(std::span<const Flip> flips) {
  std::vector<Flip> out(flips.begin(), flips.end());
  std::sort(out.begin(), out.end(), [](const Flip& a, const Flip& b) { return a.bits() < b.bits(); });
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Volume3D flip_volume(const Volume3D& vol, Flip flip) {
  Volume3D out = vol;
  const Index nx = vol.nx();
  const Index ny = vol.ny();
  const Index nz = vol.nz();
  for (Index z = 0; z < nz; ++z) {
    const Index sz = flip.z ? nz - 1 - z : z;
    for (Index y = 0; y < ny; ++y) {
      const Index sy = flip.y ? ny - 1 - y : y;
      const double* src = vol.data().data() + vol.index(0, sy, sz);
      double* dst = out.data().data() + vol.index(0, y, z);
      if (flip.x) {
        std::reverse_copy(src, src + nx, dst);
      } else {
        std::copy(src, src + nx, dst);
      }
    }
  }
  return out;
}

SuvThresholdPredictor::SuvThresholdPredictor(std::string name, double scale, std::optional<BinaryMask> suppress)
    : name_(std::move(name)), scale_(scale), suppress_(std::move(suppress)) {
  if (!(scale_ > 0.0)) throw Error(ErrorCode::InvalidArgument, "suv_threshold scale must be positive");
}

Volume3D SuvThresholdPredictor::predict(const ChannelStack& stack) {
  const Volume3D& pet = stack[ChannelStack::kPetClipped];
  Volume3D prob = like<double>(pet, VolumeKind::Probability);
  prob.data() = (pet.data() / scale_).max(0.0).min(1.0);
  if (suppress_) {
    BinaryMask mask = *suppress_;
    if (!mask.same_grid(pet)) {
      const Volume3D resampled = resample_nearest_to(mask_to_volume(mask), pet.spacing(), pet.shape());
      mask = mask_from_label(resampled, 1.0);
    }
    prob.data() = (mask.data() != 0).select(0.0, prob.data());
  }
  return prob;
}

Volume3D ConstantPredictor::predict(const ChannelStack& stack) {
  return like<double>(stack[0], VolumeKind::Probability, value_);
}

void EnsembleConfig::validate() const {
  if (folds.empty()) throw Error(ErrorCode::InvalidArgument, "ensemble needs at least one fold predictor");
  for (const auto& f : folds) {
    if (!f) throw Error(ErrorCode::InvalidArgument, "null fold predictor");
  }
  require_identity(tta_flips, "tta_flips");
  require_identity(reduced_flips, "reduced_flips");
  for (const Flip& r : reduced_flips) {
    if (std::find(tta_flips.begin(), tta_flips.end(), r) == tta_flips.end()) {
      throw Error(ErrorCode::InvalidArgument, "reduced_flips must be a subset of tta_flips");
    }
  }
  if (tta_reduction_threshold < 0 || !(time_budget_s > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "invalid TTA threshold or time budget");
  }
  if (target_spacing && !((target_spacing->array() > 0.0).all())) {
    throw Error(ErrorCode::InvalidSpacing, "ensemble target spacing must be positive");
  }
}

std::vector<Flip> select_flips(const EnsembleConfig& cfg, Index voxel_count) {
  return canonical_flips(voxel_count > cfg.tta_reduction_threshold ? cfg.reduced_flips : cfg.tta_flips);
}

Volume3D tta_predict(Predictor& predictor, const ChannelStack& stack, std::span<const Flip> flips,
                     InvocationLog* log) {
  require_identity(flips, "flip set");
  const std::vector<Flip> canonical = canonical_flips(flips);
  return tta_with_first(predictor, stack, canonical, log, std::nullopt);
}

EnsembleOutcome ensemble_run(const EnsembleConfig& cfg, const ChannelStack& stack, InvocationLog* log) {
  cfg.validate();
  std::vector<std::size_t> order(cfg.folds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return cfg.folds[a]->name() < cfg.folds[b]->name(); });

  EnsembleOutcome outcome;
  outcome.flips_used = select_flips(cfg, stack.voxel_count());

  // Time one pass, then fall back to the reduced set if the full schedule
  // would not fit the budget.
  Predictor& first = *cfg.folds[order.front()];
  const auto start = Clock::now();
  Volume3D first_identity = invoke(first, stack, Flip{}, log);
  const double single_pass = seconds_since(start);
  const double projected =
      single_pass * static_cast<double>(cfg.folds.size()) * static_cast<double>(outcome.flips_used.size());
  const std::vector<Flip> reduced = canonical_flips(cfg.reduced_flips);
  if (projected > cfg.time_budget_s && outcome.flips_used.size() > reduced.size()) {
    outcome.flips_used = reduced;
    outcome.budget_downgrade = true;
  }

  PairwiseMean folds;
  for (std::size_t k = 0; k < order.size(); ++k) {
    Predictor& p = *cfg.folds[order[k]];
    std::optional<Volume3D> cached;
    if (k == 0) cached = std::move(first_identity);
    folds.add(tta_with_first(p, stack, outcome.flips_used, log, std::move(cached)));
  }
  outcome.probability = folds.mean();
  return outcome;
}

BinaryMask threshold_mask(const Volume3D& prob, double threshold) {
  BinaryMask mask = like<std::uint8_t>(prob, VolumeKind::Label);
  mask.data() = (prob.data() >= threshold).cast<std::uint8_t>();
  return mask;
}

ChannelStack resample_stack(const ChannelStack& stack, const Vec3& spacing) {
  ChannelStack out;
  for (int c = 0; c < ChannelStack::kCount; ++c) out[c] = resample_trilinear(stack[c], spacing);
  return out;
}

RoutedResult route(const Volume3D& ct, const Volume3D& pet, const nn::Sequential& discriminator,
                   const nn::ModelParams& params, const EnsembleConfig& fdg, const EnsembleConfig& psma,
                   const RouteOptions& options) {
  const auto start = Clock::now();
  if (!ct.same_grid(pet)) throw Error(ErrorCode::ShapeMismatch, "CT and PET must share shape and spacing");
  fdg.validate();
  psma.validate();

  RoutedResult result;
  auto stage = start;
  const auto lap = [&](const char* name) {
    result.timings.push_back({name, seconds_since(stage)});
    stage = Clock::now();
  };

  const MipImage mip = make_mip(pet, options.mip_spacing, options.mip_cap);
  lap("mip");
  const TracerPrediction tracer = predict_tracer(discriminator, params, mip);
  result.tracer = tracer.tracer;
  result.tracer_probability = tracer.probability;
  lap("discriminator");

  const EnsembleConfig& cfg = tracer.tracer == Tracer::Fdg ? fdg : psma;
  ChannelStack stack = build_channels(ct, pet, options.window);
  const bool resample = cfg.target_spacing && *cfg.target_spacing != pet.spacing();
  if (resample) stack = resample_stack(stack, *cfg.target_spacing);
  lap("channels");

  EnsembleOutcome outcome = ensemble_run(cfg, stack, &result.invocations);
  result.tta_used = outcome.flips_used;
  result.budget_downgrade = outcome.budget_downgrade;
  lap("ensemble");

  result.prob_map = resample ? resample_trilinear_to(outcome.probability, pet.spacing(), pet.shape())
                             : std::move(outcome.probability);
  result.prob_map.set_origin(pet.origin());
  result.mask = threshold_mask(result.prob_map, cfg.decision_threshold);
  lap("finalize");

  result.wall_time_s = seconds_since(start);
  result.budget_exceeded = result.wall_time_s > cfg.time_budget_s;
  return result;
}

}  // namespace petseg
