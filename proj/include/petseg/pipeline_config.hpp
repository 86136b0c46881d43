#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "petseg/orchestrator.hpp"

namespace petseg {

inline constexpr int kDefaultFoldCount = 6;
inline constexpr double kFdgTargetSpacingMm = 3.3;

/// Declarative description of one fold backend.
struct BackendSpec {
  std::string type = "suv_threshold";  // "suv_threshold" | "external"
  std::string name;
  std::vector<std::string> command;  // external only
  double scale = 20.0;               // suv_threshold only
};

struct EnsembleSpec {
  std::vector<BackendSpec> folds;
  std::vector<Flip> tta_flips = all_flips();
  std::vector<Flip> reduced_flips = {Flip{}, Flip{false, false, true}};
  std::int64_t tta_reduction_threshold = 40'000'000;
  double time_budget_s = 300.0;
  double decision_threshold = 0.5;
  std::optional<Vec3> target_spacing;

  /// Six suv_threshold folds; FDG works on a 3.3 mm isotropic grid, PSMA on
  /// the native grid.
  static EnsembleSpec defaults(Tracer tracer);
};

struct RunConfig {
  RouteOptions route;
  EnsembleSpec fdg = EnsembleSpec::defaults(Tracer::Fdg);
  EnsembleSpec psma = EnsembleSpec::defaults(Tracer::Psma);
};

nlohmann::json to_json(const EnsembleSpec& spec);
nlohmann::json to_json(const RunConfig& cfg);
/// Missing keys keep the values already in `base`.
EnsembleSpec ensemble_spec_from_json(const nlohmann::json& j, EnsembleSpec base);
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});

struct BackendContext {
  std::filesystem::path work_dir = std::filesystem::temp_directory_path();
  std::string case_id = "case";
  std::optional<BinaryMask> suppress_mask;  // applied by suv_threshold folds
};

EnsembleConfig instantiate(const EnsembleSpec& spec, const BackendContext& ctx);

}  // namespace petseg
