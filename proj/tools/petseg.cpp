// petseg: command-line front end for every pipeline stage.
//
// Exit codes: 0 ok, 1 usage, 2 I/O, 3 validation, 4 predictor failure;
// predict-tracer exits 10 for FDG and 11 for PSMA.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "petseg/discriminator.hpp"
#include "petseg/errors.hpp"
#include "petseg/fusion.hpp"
#include "petseg/heap.hpp"
#include "petseg/manifest.hpp"
#include "petseg/metrics.hpp"
#include "petseg/model_io.hpp"
#include "petseg/nifti.hpp"
#include "petseg/orchestrator.hpp"
#include "petseg/pipeline_config.hpp"
#include "petseg/preprocess.hpp"
#include "petseg/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace petseg;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitValidation = 3;
constexpr int kExitPredictor = 4;
constexpr int kExitFdg = 10;
constexpr int kExitPsma = 11;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

Vec3 parse_triplet(const std::vector<double>& v, const std::string& flag) {
  if (v.size() == 1) return Vec3::Constant(v[0]);
  if (v.size() != 3) throw Error(ErrorCode::InvalidArgument, flag + " takes 1 or 3 comma-separated values");
  return Vec3(v[0], v[1], v[2]);
}

json vec_json(const Vec3& v) { return {v[0], v[1], v[2]}; }

fs::path manifest_beside(const fs::path& output) {
  fs::path p = output;
  p += ".manifest.json";
  return p;
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

RunManifest start_manifest(const std::string& subcommand, json config,
                           const std::vector<fs::path>& inputs = {}) {
  RunManifest m;
  m.subcommand = subcommand;
  m.config = std::move(config);
  for (const fs::path& p : inputs) m.inputs.push_back(digest_file(p));
  m.host = host_info();
  return m;
}

json volume_stats(const Volume3D& vol) {
  const auto& d = vol.data();
  return {{"min", d.minCoeff()},
          {"max", d.maxCoeff()},
          {"mean", d.mean()},
          {"nonzero", (d != 0.0).count()}};
}

// ---------------------------------------------------------------- inspect

struct InspectArgs {
  std::string path;
};

int cmd_inspect(const InspectArgs& a) {
  const nifti::Header h = nifti::read_header(a.path);
  const Volume3D vol = nifti::read_volume(a.path);
  const json out = {{"path", a.path},
                    {"shape", {vol.nx(), vol.ny(), vol.nz()}},
                    {"spacing", vec_json(vol.spacing())},
                    {"origin", vec_json(vol.origin())},
                    {"datatype", static_cast<int>(h.datatype)},
                    {"bitpix", h.bitpix},
                    {"endian", h.endian == nifti::Endian::Little ? "little" : "big"},
                    {"scl_slope", h.scl_slope},
                    {"scl_inter", h.scl_inter},
                    {"kind", std::string(to_string(vol.kind()))},
                    {"stats", volume_stats(vol)}};
  std::cout << out.dump(2) << '\n';
  return 0;
}

// --------------------------------------------------------------- resample

struct ResampleArgs {
  std::string in;
  std::string out;
  std::vector<double> spacing{3.3, 3.3, 3.3};
  std::string mode = "trilinear";
};

int cmd_resample(const ResampleArgs& a) {
  const auto start = Clock::now();
  const Vec3 spacing = parse_triplet(a.spacing, "--spacing");
  Volume3D vol;
  if (a.mode == "nearest") {
    vol = resample_nearest(nifti::read_volume(a.in, VolumeKind::Label), spacing);
  } else if (a.mode == "trilinear") {
    Volume3D src = nifti::read_volume(a.in);
    if (src.kind() == VolumeKind::Label) src.set_kind(VolumeKind::CtHu);
    vol = resample_trilinear(src, spacing);
  } else {
    throw Error(ErrorCode::InvalidArgument, "--mode must be trilinear or nearest");
  }
  ensure_parent(a.out);
  nifti::write_volume(vol, a.out);
  RunManifest m = start_manifest("resample", {{"spacing", vec_json(spacing)}, {"mode", a.mode}}, {a.in});
  m.outputs = {{"volume", a.out}, {"shape", {vol.nx(), vol.ny(), vol.nz()}}};
  m.timings = {{"total_s", seconds_since(start)}};
  write_manifest(m, manifest_beside(a.out));
  return 0;
}

// ----------------------------------------------------------------- window

struct WindowArgs {
  std::string ct;
  std::string pet;
  std::string out_dir;
  std::vector<double> pet_window{0.0, 20.0};
  std::vector<double> ct_window{-300.0, 400.0};
};

WindowSpec window_from(const std::vector<double>& pet, const std::vector<double>& ct) {
  if (pet.size() != 2 || ct.size() != 2) throw Error(ErrorCode::InvalidWindow, "windows take lo,hi");
  WindowSpec w{pet[0], pet[1], ct[0], ct[1]};
  w.validate();
  return w;
}

int cmd_window(const WindowArgs& a) {
  const auto start = Clock::now();
  const WindowSpec w = window_from(a.pet_window, a.ct_window);
  const ChannelStack stack =
      build_channels(nifti::read_volume(a.ct, VolumeKind::CtHu), nifti::read_volume(a.pet, VolumeKind::PetSuv), w);
  fs::create_directories(a.out_dir);
  const char* names[] = {"ct_raw", "pet_raw", "ct_clipped", "pet_clipped"};
  json outputs = json::object();
  for (int c = 0; c < ChannelStack::kCount; ++c) {
    const fs::path p = fs::path(a.out_dir) / (std::string("channel_") + std::to_string(c) + "_" + names[c] + ".nii.gz");
    nifti::write_volume(stack[c], p);
    outputs[names[c]] = p.string();
  }
  RunManifest m = start_manifest(
      "window", {{"window", {{"pet_lo", w.pet_lo}, {"pet_hi", w.pet_hi}, {"ct_lo", w.ct_lo}, {"ct_hi", w.ct_hi}}}},
      {a.ct, a.pet});
  m.outputs = outputs;
  m.timings = {{"total_s", seconds_since(start)}};
  write_manifest(m, fs::path(a.out_dir) / "manifest.json");
  return 0;
}

// -------------------------------------------------------------------- mip

struct MipArgs {
  std::string pet;
  std::string out;
  double spacing = kMipSpacingMm;
  double cap = kMipCapSuv;
};

Volume3D mip_as_volume(const MipImage& mip) {
  Volume3D vol(Shape3(kMipSize, 1, kMipSize), Vec3(mip.source_spacing[0], 1.0, mip.source_spacing[1]),
               VolumeKind::Probability, 0.0);
  for (Index z = 0; z < kMipSize; ++z) {
    for (Index x = 0; x < kMipSize; ++x) vol(x, 0, z) = mip.pixels(x, z);
  }
  return vol;
}

int cmd_mip(const MipArgs& a) {
  const auto start = Clock::now();
  const MipImage mip = make_mip(nifti::read_volume(a.pet, VolumeKind::PetSuv), a.spacing, a.cap);
  ensure_parent(a.out);
  nifti::write_volume(mip_as_volume(mip), a.out);
  RunManifest m = start_manifest("mip", {{"spacing", a.spacing}, {"cap", a.cap}, {"size", kMipSize}}, {a.pet});
  m.outputs = {{"mip", a.out}};
  m.timings = {{"total_s", seconds_since(start)}};
  write_manifest(m, manifest_beside(a.out));
  return 0;
}

// ------------------------------------------------------------------ synth

struct SynthArgs {
  int n = 10;
  std::uint64_t seed = 42;
  std::string out_dir;
  int jobs = 1;
  std::vector<long> shape{64, 48, 96};
  std::vector<double> spacing{4.0, 4.0, 4.0};
  double noise = 0.1;
};

int cmd_synth(const SynthArgs& a) {
  const auto start = Clock::now();
  if (a.shape.size() != 3) throw Error(ErrorCode::InvalidArgument, "--shape takes 3 values");
  synth::CorpusOptions opt;
  opt.n = a.n;
  opt.seed = a.seed;
  opt.jobs = a.jobs;
  opt.shape = Shape3(a.shape[0], a.shape[1], a.shape[2]);
  opt.spacing = parse_triplet(a.spacing, "--spacing");
  opt.noise_sigma = a.noise;
  const auto cases = synth::write_corpus(a.out_dir, opt);
  RunManifest m = start_manifest("synth", {{"n", a.n},
                                           {"shape", a.shape},
                                           {"spacing", vec_json(opt.spacing)},
                                           {"noise_sigma", a.noise}});
  m.seed = a.seed;
  json listing = json::array();
  for (const auto& c : cases) listing.push_back({{"case_id", c.case_id}, {"tracer", std::string(to_string(c.tracer))}});
  m.outputs = {{"cases", listing}, {"mip_manifest", "mip_manifest.json"}};
  m.timings = {{"total_s", seconds_since(start)}, {"jobs", a.jobs}};
  write_manifest(m, fs::path(a.out_dir) / "manifest.json");
  std::cout << "wrote " << cases.size() << " cases to " << a.out_dir << '\n';
  return 0;
}

// ------------------------------------------------------- train-disc / cv-disc

struct TrainArgs {
  std::string manifest;
  std::string config;
  std::string out_model;
  std::string out;  // cv-disc summary JSON
  TrainConfig cfg;
  int k = 5;
  std::map<std::string, CLI::Option*> flags;
};

void add_train_flags(CLI::App* sub, TrainArgs& a) {
  a.flags["lr"] = sub->add_option("--lr", a.cfg.lr, "AdamW learning rate");
  a.flags["max_epochs"] = sub->add_option("--max-epochs", a.cfg.max_epochs, "Epoch cap");
  a.flags["patience"] = sub->add_option("--patience", a.cfg.patience, "Early-stopping patience (epochs)");
  a.flags["batch_size"] = sub->add_option("--batch-size", a.cfg.batch_size, "Minibatch size");
  a.flags["val_fraction"] = sub->add_option("--val-fraction", a.cfg.val_fraction, "Validation share per class");
  a.flags["weight_decay"] = sub->add_option("--weight-decay", a.cfg.weight_decay, "Decoupled weight decay");
  a.flags["seed"] = sub->add_option("--seed", a.cfg.seed, "PRNG seed");
  a.flags["jobs"] = sub->add_option("--jobs", a.cfg.jobs, "Folds trained concurrently");
}

// Flags given on the command line beat the config file, which beats defaults.
TrainConfig resolve_train_config(const TrainArgs& a, json* raw_config) {
  TrainConfig cfg;
  json file = json::object();
  if (!a.config.empty()) {
    file = load_config_json(a.config);
    const json& section = file.contains("train") ? file["train"] : file;
    from_json(section, cfg);
  }
  auto given = [&](const char* key) { return a.flags.at(key)->count() > 0; };
  if (given("lr")) cfg.lr = a.cfg.lr;
  if (given("max_epochs")) cfg.max_epochs = a.cfg.max_epochs;
  if (given("patience")) cfg.patience = a.cfg.patience;
  if (given("batch_size")) cfg.batch_size = a.cfg.batch_size;
  if (given("val_fraction")) cfg.val_fraction = a.cfg.val_fraction;
  if (given("weight_decay")) cfg.weight_decay = a.cfg.weight_decay;
  if (given("seed")) cfg.seed = a.cfg.seed;
  if (given("jobs")) cfg.jobs = a.cfg.jobs;
  cfg.validate();
  if (raw_config) *raw_config = file;
  return cfg;
}

int cmd_train_disc(const TrainArgs& a) {
  const auto start = Clock::now();
  const TrainConfig cfg = resolve_train_config(a, nullptr);
  const auto data = load_mip_manifest(a.manifest);
  const nn::Sequential model = discriminator_model();
  const TrainResult result = train_discriminator(model, data, cfg);

  const fs::path model_path = a.out_model;
  ensure_parent(model_path);
  nn::save_model(model_path, model, result.params);
  fs::path history_path = model_path;
  history_path.replace_extension(".history.csv");
  std::ostringstream csv;
  write_history_csv(csv, result.history);
  write_text_atomic(history_path, csv.str());

  json cfg_json;
  to_json(cfg_json, cfg);
  RunManifest m = start_manifest("train-disc", {{"train", cfg_json}}, {a.manifest});
  m.seed = cfg.seed;
  m.outputs = {{"model", model_path.string()},
               {"history", history_path.string()},
               {"best_epoch", result.best_epoch},
               {"best_val_bce", result.best_val_bce},
               {"epochs_run", static_cast<int>(result.history.size()) - 1}};
  m.timings = {{"total_s", seconds_since(start)}};
  write_manifest(m, manifest_beside(model_path));
  std::cout << "best_epoch=" << result.best_epoch << " best_val_bce=" << result.best_val_bce << '\n';
  return 0;
}

int cmd_cv_disc(const TrainArgs& a) {
  const auto start = Clock::now();
  json file;
  const TrainConfig cfg = resolve_train_config(a, &file);
  int k = a.k;
  if (a.flags.at("k")->count() == 0 && file.contains("k")) k = file["k"].get<int>();
  const auto data = load_mip_manifest(a.manifest);
  const CvResult cv = cross_validate(discriminator_model(), data, k, cfg);

  for (std::size_t f = 0; f < cv.fold_accuracies.size(); ++f) {
    std::cout << "fold " << f << " accuracy " << std::fixed << std::setprecision(6) << cv.fold_accuracies[f]
              << '\n';
  }
  std::cout << "mean accuracy " << std::fixed << std::setprecision(6) << cv.mean_accuracy << '\n';

  if (!a.out.empty()) {
    json cfg_json;
    to_json(cfg_json, cfg);
    json folds = json::array();
    for (std::size_t f = 0; f < cv.folds.size(); ++f) {
      folds.push_back({{"accuracy", cv.fold_accuracies[f]},
                       {"best_epoch", cv.folds[f].best_epoch},
                       {"held_out", cv.held_out[f].size()}});
    }
    const json summary = {{"k", k}, {"mean_accuracy", cv.mean_accuracy}, {"folds", folds}};
    ensure_parent(a.out);
    write_text_atomic(a.out, summary.dump(2) + "\n");
    RunManifest m = start_manifest("cv-disc", {{"train", cfg_json}, {"k", k}}, {a.manifest});
    m.seed = cfg.seed;
    m.outputs = summary;
    m.timings = {{"total_s", seconds_since(start)}};
    write_manifest(m, manifest_beside(a.out));
  }
  return 0;
}

// --------------------------------------------------------- predict-tracer

struct PredictArgs {
  std::string model;
  std::string pet;
  std::string mip;
  double spacing = kMipSpacingMm;
  double cap = kMipCapSuv;
  bool json_out = false;
};

int cmd_predict_tracer(const PredictArgs& a) {
  if (a.pet.empty() == a.mip.empty()) throw Error(ErrorCode::InvalidArgument, "give exactly one of --pet or --mip");
  const nn::SavedModel saved = nn::load_model(a.model);
  const MipImage mip =
      a.mip.empty() ? make_mip(nifti::read_volume(a.pet, VolumeKind::PetSuv), a.spacing, a.cap) : load_mip(a.mip);
  const TracerPrediction p = predict_tracer(saved.model(), saved.params, mip);
  if (a.json_out) {
    std::cout << json{{"tracer", std::string(to_string(p.tracer))}, {"probability", p.probability}}.dump() << '\n';
  } else {
    std::cout << to_string(p.tracer) << ' ' << std::fixed << std::setprecision(6) << p.probability << '\n';
  }
  return p.tracer == Tracer::Fdg ? kExitFdg : kExitPsma;
}

// ------------------------------------------------------------------- fuse

struct FuseArgs {
  std::string manifest;
  std::string out;
  bool ignore_unknown = false;
};

int cmd_fuse(const FuseArgs& a) {
  const auto start = Clock::now();
  const OrganGroupTable table = OrganGroupTable::default_table();
  const FusionCase fc = fuse_from_manifest(a.manifest, table, a.ignore_unknown);
  ensure_parent(a.out);
  nifti::WriteOptions opt;
  opt.datatype = nifti::Datatype::UInt8;
  nifti::write_volume(fc.fused, a.out, opt);
  json groups = json::array();
  for (const OrganGroup& g : table.groups()) groups.push_back({{"id", g.id}, {"name", g.name}});
  RunManifest m = start_manifest("fuse", {{"groups", groups}, {"ignore_unknown", a.ignore_unknown}}, {a.manifest});
  m.outputs = {{"case_id", fc.case_id}, {"fused", a.out}};
  m.timings = {{"total_s", seconds_since(start)}};
  write_manifest(m, manifest_beside(a.out));
  return 0;
}

// --------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string pred_dir;
  std::string gt_dir;
  std::string out = "metrics.csv";
  double label = 1.0;
  int connectivity = 26;
  int jobs = 1;
};

bool is_nifti(const fs::path& p) {
  const std::string name = p.filename().string();
  return name.ends_with(".nii") || name.ends_with(".nii.gz");
}

int cmd_evaluate(const EvaluateArgs& a) {
  const auto start = Clock::now();
  const Connectivity conn = connectivity_from_int(a.connectivity);
  if (!fs::is_directory(a.pred_dir)) throw Error(ErrorCode::IoFailure, a.pred_dir + " is not a directory");
  std::vector<fs::path> preds;
  for (const auto& e : fs::directory_iterator(a.pred_dir)) {
    if (e.is_regular_file() && is_nifti(e.path())) preds.push_back(e.path());
  }
  std::sort(preds.begin(), preds.end());
  if (preds.empty()) throw Error(ErrorCode::IoFailure, "no NIfTI files in " + a.pred_dir);

  std::vector<CaseMetrics> rows(preds.size());
  auto evaluate_one = [&](std::size_t i) {
    const fs::path gt = fs::path(a.gt_dir) / preds[i].filename();
    if (!fs::exists(gt)) throw Error(ErrorCode::IoFailure, "missing ground truth " + gt.string());
    rows[i] = evaluate_case(preds[i], gt, a.label, conn);
  };
  const int jobs = std::max(1, std::min<int>(a.jobs, static_cast<int>(preds.size())));
  if (jobs == 1) {
    for (std::size_t i = 0; i < preds.size(); ++i) evaluate_one(i);
  } else {
    std::vector<std::future<void>> workers;
    for (int w = 0; w < jobs; ++w) {
      workers.push_back(std::async(std::launch::async, [&, w] {
        for (std::size_t i = static_cast<std::size_t>(w); i < preds.size(); i += static_cast<std::size_t>(jobs)) {
          evaluate_one(i);
        }
      }));
    }
    for (auto& f : workers) f.get();
  }

  std::ostringstream csv;
  write_metrics_csv(csv, rows, true);
  ensure_parent(a.out);
  write_text_atomic(a.out, csv.str());
  const MetricsSummary s = summarize(rows);
  RunManifest m = start_manifest("evaluate", {{"label", a.label}, {"connectivity", a.connectivity}});
  for (const fs::path& p : preds) m.inputs.push_back(digest_file(p));
  m.outputs = {{"metrics", a.out},
               {"cases", rows.size()},
               {"dice_defined", s.dice_defined},
               {"mean_dice", s.mean_dice ? json(*s.mean_dice) : json(nullptr)}};
  m.timings = {{"total_s", seconds_since(start)}, {"jobs", jobs}};
  write_manifest(m, manifest_beside(a.out));
  std::cout << csv.str();
  return 0;
}

// -------------------------------------------------------------------- run

struct RunArgs {
  std::string ct;
  std::string pet;
  std::string disc_model;
  std::string config;
  std::string out;
  std::string suppress_mask;
  std::string work_dir;
  std::vector<double> pet_window{0.0, 20.0};
  std::vector<double> ct_window{-300.0, 400.0};
  double mip_spacing = kMipSpacingMm;
  double fdg_spacing = kFdgTargetSpacingMm;
  int folds = kDefaultFoldCount;
  double time_budget = 300.0;
  std::int64_t tta_threshold = 40'000'000;
  double decision_threshold = 0.5;
  std::map<std::string, CLI::Option*> flags;
};

RunConfig resolve_run_config(const RunArgs& a) {
  RunConfig cfg;
  if (!a.config.empty()) cfg = run_config_from_json(load_config_json(a.config), cfg);
  auto given = [&](const char* key) { return a.flags.at(key)->count() > 0; };
  if (given("pet_window") || given("ct_window")) {
    const WindowSpec& w = cfg.route.window;
    cfg.route.window = window_from(given("pet_window") ? a.pet_window : std::vector<double>{w.pet_lo, w.pet_hi},
                                   given("ct_window") ? a.ct_window : std::vector<double>{w.ct_lo, w.ct_hi});
  }
  if (given("mip_spacing")) cfg.route.mip_spacing = a.mip_spacing;
  if (given("fdg_spacing")) cfg.fdg.target_spacing = Vec3::Constant(a.fdg_spacing);
  for (EnsembleSpec* spec : {&cfg.fdg, &cfg.psma}) {
    if (given("folds")) {
      if (a.folds < 1) throw Error(ErrorCode::InvalidArgument, "--folds must be >= 1");
      const BackendSpec proto = spec->folds.empty() ? BackendSpec{} : spec->folds.front();
      spec->folds.clear();
      for (int k = 0; k < a.folds; ++k) {
        BackendSpec b = proto;
        b.name = "fold" + std::to_string(k);
        spec->folds.push_back(b);
      }
    }
    if (given("time_budget")) spec->time_budget_s = a.time_budget;
    if (given("tta_threshold")) spec->tta_reduction_threshold = a.tta_threshold;
    if (given("decision_threshold")) spec->decision_threshold = a.decision_threshold;
  }
  return cfg;
}

int cmd_run(const RunArgs& a) {
  const auto start = Clock::now();
  const RunConfig cfg = resolve_run_config(a);
  const Volume3D ct = nifti::read_volume(a.ct, VolumeKind::CtHu);
  const Volume3D pet = nifti::read_volume(a.pet, VolumeKind::PetSuv);
  const nn::SavedModel disc = nn::load_model(a.disc_model);

  const fs::path out_dir = a.out;
  fs::create_directories(out_dir);
  BackendContext ctx;
  ctx.work_dir = a.work_dir.empty() ? out_dir / "work" : fs::path(a.work_dir);
  ctx.case_id = fs::path(a.pet).filename().string();
  if (!a.suppress_mask.empty()) {
    ctx.suppress_mask = mask_from_label(nifti::read_volume(a.suppress_mask, VolumeKind::Label), 1.0);
  }
  const RoutedResult r = route(ct, pet, disc.model(), disc.params, instantiate(cfg.fdg, ctx),
                               instantiate(cfg.psma, ctx), cfg.route);
  std::error_code ec;
  if (a.work_dir.empty()) fs::remove_all(ctx.work_dir, ec);

  const fs::path mask_path = out_dir / "mask.nii.gz";
  const fs::path prob_path = out_dir / "prob.nii.gz";
  nifti::WriteOptions mask_opt;
  mask_opt.datatype = nifti::Datatype::UInt8;
  nifti::write_volume(r.mask, mask_path, mask_opt);
  nifti::write_volume(r.prob_map, prob_path);

  json flips = json::array();
  for (const Flip& f : r.tta_used) flips.push_back(to_string(f));
  json invocations = json::array();
  for (const Invocation& inv : r.invocations) invocations.push_back({inv.predictor, to_string(inv.flip)});
  const json result = {{"tracer", std::string(to_string(r.tracer))},
                       {"tracer_probability", r.tracer_probability},
                       {"tta_used", flips},
                       {"invocations", invocations},
                       {"mask_voxels", (r.mask.data() != 0).count()},
                       {"budget_downgrade", r.budget_downgrade},
                       {"mask", mask_path.filename().string()},
                       {"prob_map", prob_path.filename().string()}};
  json timings = json::object();
  for (const StageTiming& t : r.timings) timings[t.stage] = t.seconds;
  timings["wall_time_s"] = r.wall_time_s;
  timings["budget_exceeded"] = r.budget_exceeded;
  json result_file = result;
  result_file["wall_time_s"] = r.wall_time_s;
  write_text_atomic(out_dir / "result.json", result_file.dump(2) + "\n");

  std::vector<fs::path> inputs{a.ct, a.pet, a.disc_model};
  if (!a.suppress_mask.empty()) inputs.emplace_back(a.suppress_mask);
  RunManifest m = start_manifest("run", to_json(cfg), inputs);
  m.seed = disc.params.seed;
  m.outputs = result;
  timings["total_s"] = seconds_since(start);
  m.timings = timings;
  write_manifest(m, out_dir / "manifest.json");
  std::cout << result.dump() << '\n';
  return 0;
}

int exit_code_for(ErrorCode code) {
  switch (classify(code)) {
    case ErrorClass::Io: return kExitIo;
    case ErrorClass::Predictor: return kExitPredictor;
    case ErrorClass::Validation: return kExitValidation;
  }
  return kExitValidation;
}

int report(bool as_json, int exit_code, const std::string& code, const std::string& message) {
  if (as_json) {
    std::cerr << json{{"error", code}, {"message", message}, {"exit_code", exit_code}}.dump() << '\n';
  } else {
    std::cerr << "petseg: " << message << '\n';
  }
  return exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  petseg::keep_heap_resident();
  CLI::App app{"PET/CT lesion segmentation pipeline"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  bool as_json = false;
  app.add_flag("--json", as_json, "Machine-readable error JSON on stderr");
  app.set_version_flag("--version", kToolVersion);

  InspectArgs inspect;
  auto* sub_inspect = app.add_subcommand("inspect", "Print NIfTI header fields and intensity statistics");
  sub_inspect->add_option("path", inspect.path, "Volume (.nii or .nii.gz)")->required();

  ResampleArgs resample;
  auto* sub_resample = app.add_subcommand("resample", "Resample a volume to a new voxel spacing");
  sub_resample->add_option("--in", resample.in, "Input volume")->required();
  sub_resample->add_option("--out", resample.out, "Output volume")->required();
  sub_resample->add_option("--spacing", resample.spacing, "Target spacing in mm (1 or 3 values)")->delimiter(',');
  sub_resample->add_option("--mode", resample.mode, "trilinear | nearest")
      ->check(CLI::IsMember({"trilinear", "nearest"}));

  WindowArgs window;
  auto* sub_window = app.add_subcommand("window", "Write the four-channel raw/clipped stack");
  sub_window->add_option("--ct", window.ct, "CT volume (HU)")->required();
  sub_window->add_option("--pet", window.pet, "PET volume (SUV)")->required();
  sub_window->add_option("--out-dir", window.out_dir, "Output directory")->required();
  sub_window->add_option("--pet-window", window.pet_window, "PET clip range lo,hi (SUV)")->delimiter(',');
  sub_window->add_option("--ct-window", window.ct_window, "CT clip range lo,hi (HU)")->delimiter(',');

  MipArgs mip;
  auto* sub_mip = app.add_subcommand("mip", "Write the 224x224 coronal MIP of a PET volume");
  sub_mip->add_option("--pet", mip.pet, "PET volume (SUV)")->required();
  sub_mip->add_option("--out", mip.out, "Output NIfTI (224 x 1 x 224)")->required();
  sub_mip->add_option("--spacing", mip.spacing, "Isotropic resampling before projection (mm)");
  sub_mip->add_option("--cap", mip.cap, "SUV mapped to 1.0");

  SynthArgs synth_args;
  auto* sub_synth = app.add_subcommand("synth", "Generate a synthetic phantom corpus with manifests");
  sub_synth->add_option("--n", synth_args.n, "Number of cases (even index FDG-like, odd PSMA-like)");
  sub_synth->add_option("--seed", synth_args.seed, "PRNG seed");
  sub_synth->add_option("--out-dir", synth_args.out_dir, "Output directory")->required();
  sub_synth->add_option("--jobs", synth_args.jobs, "Parallel workers");
  sub_synth->add_option("--shape", synth_args.shape, "Phantom shape nx,ny,nz")->delimiter(',');
  sub_synth->add_option("--spacing", synth_args.spacing, "Phantom spacing (mm)")->delimiter(',');
  sub_synth->add_option("--noise", synth_args.noise, "PET noise sigma (SUV)");

  TrainArgs train;
  auto* sub_train = app.add_subcommand("train-disc", "Train the tracer discriminator");
  sub_train->add_option("--manifest", train.manifest, "MIP training manifest (JSON list)")->required();
  sub_train->add_option("--config", train.config, "JSON config or run manifest");
  sub_train->add_option("--out-model", train.out_model, "Model manifest path (.json)")->required();
  add_train_flags(sub_train, train);

  TrainArgs cv;
  auto* sub_cv = app.add_subcommand("cv-disc", "Stratified k-fold cross-validation of the discriminator");
  sub_cv->add_option("--manifest", cv.manifest, "MIP training manifest (JSON list)")->required();
  sub_cv->add_option("--config", cv.config, "JSON config or run manifest");
  sub_cv->add_option("--out", cv.out, "Optional summary JSON");
  cv.flags["k"] = sub_cv->add_option("--k", cv.k, "Number of folds");
  add_train_flags(sub_cv, cv);

  PredictArgs predict;
  auto* sub_predict = app.add_subcommand("predict-tracer", "Classify a PET scan; exit 10 = FDG, 11 = PSMA");
  sub_predict->add_option("--model", predict.model, "Model manifest (.json)")->required();
  sub_predict->add_option("--pet", predict.pet, "PET volume");
  sub_predict->add_option("--mip", predict.mip, "Precomputed MIP instead of --pet");
  sub_predict->add_option("--mip-spacing", predict.spacing, "Isotropic resampling before projection (mm)");
  sub_predict->add_option("--cap", predict.cap, "SUV mapped to 1.0");
  sub_predict->add_flag("--json-out", predict.json_out, "Print the result as JSON");

  FuseArgs fuse;
  auto* sub_fuse = app.add_subcommand("fuse", "Merge organ masks and the lesion mask into one label map");
  sub_fuse->add_option("--manifest", fuse.manifest, "Fusion manifest (JSON)")->required();
  sub_fuse->add_option("--out", fuse.out, "Fused label map")->required();
  sub_fuse->add_flag("--ignore-unknown", fuse.ignore_unknown, "Skip organ masks outside the group table");

  EvaluateArgs evaluate;
  auto* sub_eval = app.add_subcommand("evaluate", "Dice, FPV and FNV per case plus a mean row");
  sub_eval->add_option("--pred-dir", evaluate.pred_dir, "Predicted masks")->required();
  sub_eval->add_option("--gt-dir", evaluate.gt_dir, "Ground-truth masks with matching names")->required();
  sub_eval->add_option("--out", evaluate.out, "CSV output");
  sub_eval->add_option("--label", evaluate.label, "Foreground label value");
  sub_eval->add_option("--connectivity", evaluate.connectivity, "6, 18 or 26")
      ->check(CLI::IsMember({6, 18, 26}));
  sub_eval->add_option("--jobs", evaluate.jobs, "Parallel workers");

  RunArgs run;
  auto* sub_run = app.add_subcommand("run", "Tracer routing, fold ensemble with TTA, thresholded mask");
  sub_run->add_option("--ct", run.ct, "CT volume (HU)")->required();
  sub_run->add_option("--pet", run.pet, "PET volume (SUV)")->required();
  sub_run->add_option("--disc-model", run.disc_model, "Discriminator model manifest (.json)")->required();
  sub_run->add_option("--config", run.config, "JSON config or a previous run manifest");
  sub_run->add_option("--out", run.out, "Output directory")->required();
  sub_run->add_option("--suppress-mask", run.suppress_mask, "Organ mask zeroed by suv_threshold folds");
  sub_run->add_option("--work-dir", run.work_dir, "Scratch directory for external backends (kept)");
  run.flags["pet_window"] =
      sub_run->add_option("--pet-window", run.pet_window, "PET clip range lo,hi (SUV)")->delimiter(',');
  run.flags["ct_window"] =
      sub_run->add_option("--ct-window", run.ct_window, "CT clip range lo,hi (HU)")->delimiter(',');
  run.flags["mip_spacing"] = sub_run->add_option("--mip-spacing", run.mip_spacing, "MIP resampling (mm)");
  run.flags["fdg_spacing"] =
      sub_run->add_option("--fdg-spacing", run.fdg_spacing, "FDG ensemble working spacing (mm)");
  run.flags["folds"] = sub_run->add_option("--folds", run.folds, "Folds per tracer ensemble");
  run.flags["time_budget"] = sub_run->add_option("--time-budget", run.time_budget, "Soft budget per case (s)");
  run.flags["tta_threshold"] =
      sub_run->add_option("--tta-threshold", run.tta_threshold, "Voxel count above which reduced flips are used");
  run.flags["decision_threshold"] =
      sub_run->add_option("--decision-threshold", run.decision_threshold, "Probability threshold for the mask");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    if (as_json) return report(true, kExitUsage, "Usage", e.what());
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*sub_inspect) return cmd_inspect(inspect);
    if (*sub_resample) return cmd_resample(resample);
    if (*sub_window) return cmd_window(window);
    if (*sub_mip) return cmd_mip(mip);
    if (*sub_synth) return cmd_synth(synth_args);
    if (*sub_train) return cmd_train_disc(train);
    if (*sub_cv) return cmd_cv_disc(cv);
    if (*sub_predict) return cmd_predict_tracer(predict);
    if (*sub_fuse) return cmd_fuse(fuse);
    if (*sub_eval) return cmd_evaluate(evaluate);
    if (*sub_run) return cmd_run(run);
  } catch (const Error& e) {
    return report(as_json, exit_code_for(e.code()), std::string(to_string(e.code())), e.what());
  } catch (const nlohmann::json::exception& e) {
    return report(as_json, kExitValidation, "InvalidArgument", e.what());
  } catch (const fs::filesystem_error& e) {
    return report(as_json, kExitIo, "IoFailure", e.what());
  } catch (const std::exception& e) {
    return report(as_json, kExitValidation, "InvalidArgument", e.what());
  }
  return kExitUsage;
}
