#include "petseg/pipeline_config.hpp"

#include "petseg/external_predictor.hpp"

namespace petseg {
namespace {

using nlohmann::json;

json flips_to_json(const std::vector<Flip>& flips) {
  json arr = json::array();
  for (const Flip& f : flips) arr.push_back(to_string(f));
  return arr;
}

std::vector<Flip> flips_from_json(const json& j) {
  std::vector<Flip> flips;
  for (const auto& f : j) flips.push_back(flip_from_string(f.get<std::string>()));
  return flips;
}

json backend_to_json(const BackendSpec& b) {
  json j = {{"type", b.type}, {"name", b.name}};
  if (b.type == "external") {
    j["command"] = b.command;
  } else {
    j["scale"] = b.scale;
  }
  return j;
}

BackendSpec backend_from_json(const json& j, std::size_t index) {
  BackendSpec b;
  b.type = j.value("type", b.type);
  b.name = j.value("name", "fold" + std::to_string(index));
  b.command = j.value("command", std::vector<std::string>{});
  b.scale = j.value("scale", b.scale);
  if (b.type != "suv_threshold" && b.type != "external") {
    throw Error(ErrorCode::InvalidArgument, "unknown backend type " + b.type);
  }
  if (b.type == "external" && b.command.empty()) {
    throw Error(ErrorCode::InvalidArgument, "external backend " + b.name + " needs a command");
  }
  return b;
}

}  // namespace

EnsembleSpec EnsembleSpec::defaults(Tracer tracer) {
  EnsembleSpec spec;
  for (int k = 0; k < kDefaultFoldCount; ++k) spec.folds.push_back({"suv_threshold", "fold" + std::to_string(k), {}, 20.0});
  if (tracer == Tracer::Fdg) spec.target_spacing = Vec3::Constant(kFdgTargetSpacingMm);
  return spec;
}

json to_json(const EnsembleSpec& spec) {
  json folds = json::array();
  for (const BackendSpec& b : spec.folds) folds.push_back(backend_to_json(b));
  json j = {{"folds", folds},
            {"tta_flips", flips_to_json(spec.tta_flips)},
            {"reduced_flips", flips_to_json(spec.reduced_flips)},
            {"tta_reduction_threshold", spec.tta_reduction_threshold},
            {"time_budget_s", spec.time_budget_s},
            {"decision_threshold", spec.decision_threshold}};
  if (spec.target_spacing) {
    j["target_spacing"] = {(*spec.target_spacing)[0], (*spec.target_spacing)[1], (*spec.target_spacing)[2]};
  } else {
    j["target_spacing"] = nullptr;
  }
  return j;
}

json to_json(const RunConfig& cfg) {
  const WindowSpec& w = cfg.route.window;
  return {{"window", {{"pet_lo", w.pet_lo}, {"pet_hi", w.pet_hi}, {"ct_lo", w.ct_lo}, {"ct_hi", w.ct_hi}}},
          {"mip_spacing", cfg.route.mip_spacing},
          {"mip_cap", cfg.route.mip_cap},
          {"fdg", to_json(cfg.fdg)},
          {"psma", to_json(cfg.psma)}};
}

EnsembleSpec ensemble_spec_from_json(const json& j, EnsembleSpec base) {
  if (j.contains("folds")) {
    base.folds.clear();
    for (std::size_t i = 0; i < j["folds"].size(); ++i) base.folds.push_back(backend_from_json(j["folds"][i], i));
  } else if (j.contains("fold_count") || j.contains("backend")) {
    const int n = j.value("fold_count", static_cast<int>(base.folds.size()));
    const json proto = j.value("backend", json::object());
    base.folds.clear();
    for (int i = 0; i < n; ++i) {
      json b = proto;
      b["name"] = proto.value("name", std::string("fold")) + std::to_string(i);
      base.folds.push_back(backend_from_json(b, static_cast<std::size_t>(i)));
    }
  }
  if (j.contains("tta_flips")) base.tta_flips = flips_from_json(j["tta_flips"]);
  if (j.contains("reduced_flips")) base.reduced_flips = flips_from_json(j["reduced_flips"]);
  if (j.contains("tta_reduction_threshold")) {
    base.tta_reduction_threshold = static_cast<std::int64_t>(j["tta_reduction_threshold"].get<double>());
  }
  base.time_budget_s = j.value("time_budget_s", base.time_budget_s);
  base.decision_threshold = j.value("decision_threshold", base.decision_threshold);
  if (j.contains("target_spacing")) {
    const json& t = j["target_spacing"];
    if (t.is_null()) {
      base.target_spacing.reset();
    } else if (t.is_number()) {
      base.target_spacing = Vec3::Constant(t.get<double>());
    } else {
      const auto v = t.get<std::vector<double>>();
      if (v.size() != 3) throw Error(ErrorCode::InvalidArgument, "target_spacing needs 3 values");
      base.target_spacing = Vec3(v[0], v[1], v[2]);
    }
  }
  return base;
}

RunConfig run_config_from_json(const json& j, RunConfig base) {
  if (j.contains("window")) {
    const json& w = j["window"];
    base.route.window.pet_lo = w.value("pet_lo", base.route.window.pet_lo);
    base.route.window.pet_hi = w.value("pet_hi", base.route.window.pet_hi);
    base.route.window.ct_lo = w.value("ct_lo", base.route.window.ct_lo);
    base.route.window.ct_hi = w.value("ct_hi", base.route.window.ct_hi);
  }
  base.route.mip_spacing = j.value("mip_spacing", base.route.mip_spacing);
  base.route.mip_cap = j.value("mip_cap", base.route.mip_cap);
  if (j.contains("fdg")) base.fdg = ensemble_spec_from_json(j["fdg"], base.fdg);
  if (j.contains("psma")) base.psma = ensemble_spec_from_json(j["psma"], base.psma);
  base.route.window.validate();
  return base;
}

EnsembleConfig instantiate(const EnsembleSpec& spec, const BackendContext& ctx) {
  EnsembleConfig cfg;
  for (const BackendSpec& b : spec.folds) {
    if (b.type != "suv_threshold" && b.type != "external") {
      throw Error(ErrorCode::InvalidArgument, "unknown backend type " + b.type);
    }
    if (b.type == "external") {
      cfg.folds.push_back(std::make_shared<ExternalPredictor>(b.name, b.command, ctx.work_dir, ctx.case_id));
    } else {
      cfg.folds.push_back(std::make_shared<SuvThresholdPredictor>(b.name, b.scale, ctx.suppress_mask));
    }
  }
  cfg.tta_flips = spec.tta_flips;
  cfg.reduced_flips = spec.reduced_flips;
  cfg.tta_reduction_threshold = spec.tta_reduction_threshold;
  cfg.time_budget_s = spec.time_budget_s;
  cfg.decision_threshold = spec.decision_threshold;
  cfg.target_spacing = spec.target_spacing;
  cfg.validate();
  return cfg;
}

}  // namespace petseg
