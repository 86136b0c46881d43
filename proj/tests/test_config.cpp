#include <gtest/gtest.h>

#include <fstream>

#include "petseg/external_predictor.hpp"
#include "petseg/manifest.hpp"
#include "petseg/pipeline_config.hpp"
#include "test_support.hpp"

using namespace petseg;
using nlohmann::json;
using testing_support::TempDir;

TEST(PipelineConfig, Defaults) {
  const RunConfig cfg;
  ASSERT_EQ(cfg.fdg.folds.size(), static_cast<std::size_t>(kDefaultFoldCount));
  EXPECT_EQ(cfg.fdg.folds[0].name, "fold0");
  EXPECT_EQ(cfg.fdg.folds[5].name, "fold5");
  ASSERT_TRUE(cfg.fdg.target_spacing.has_value());
  EXPECT_EQ(*cfg.fdg.target_spacing, Vec3::Constant(kFdgTargetSpacingMm));
  EXPECT_FALSE(cfg.psma.target_spacing.has_value());
  EXPECT_EQ(cfg.fdg.tta_flips.size(), 8u);
  EXPECT_EQ(cfg.fdg.tta_reduction_threshold, 40'000'000);
  EXPECT_EQ(cfg.fdg.time_budget_s, 300.0);
}

TEST(PipelineConfig, JsonRoundTrip) {
  RunConfig cfg;
  cfg.route.window.pet_hi = 15.0;
  cfg.route.mip_spacing = 2.5;
  cfg.psma.decision_threshold = 0.4;
  cfg.psma.target_spacing = Vec3(2.0, 2.0, 3.0);
  cfg.fdg.folds = {BackendSpec{"external", "ext0", {"/bin/backend", "--fast"}, 20.0}};
  const json j = to_json(cfg);
  const RunConfig back = run_config_from_json(j);
  EXPECT_EQ(to_json(back), j);
  EXPECT_EQ(back.route.window.pet_hi, 15.0);
  EXPECT_EQ(back.fdg.folds[0].command[1], "--fast");
  EXPECT_EQ(*back.psma.target_spacing, Vec3(2.0, 2.0, 3.0));
}

TEST(PipelineConfig, MergeKeepsUnspecifiedFields) {
  const json j = json::parse(R"({"fdg": {"fold_count": 3, "backend": {"type": "suv_threshold", "scale": 8},
                                          "target_spacing": 2.0},
                                 "psma": {"tta_flips": ["identity", "z"], "target_spacing": null}})");
  const RunConfig cfg = run_config_from_json(j);
  ASSERT_EQ(cfg.fdg.folds.size(), 3u);
  EXPECT_EQ(cfg.fdg.folds[2].scale, 8.0);
  EXPECT_EQ(cfg.fdg.folds[2].name, "fold2");
  EXPECT_EQ(*cfg.fdg.target_spacing, Vec3::Constant(2.0));
  EXPECT_EQ(cfg.fdg.time_budget_s, 300.0);
  EXPECT_EQ(cfg.psma.tta_flips.size(), 2u);
  EXPECT_EQ(cfg.psma.folds.size(), static_cast<std::size_t>(kDefaultFoldCount));
}

TEST(PipelineConfig, RejectsBadValues) {
  EXPECT_PETSEG_ERROR(run_config_from_json(json::parse(R"({"window": {"pet_lo": 5, "pet_hi": 1}})")),
                      ErrorCode::InvalidWindow);
  EXPECT_ANY_THROW(run_config_from_json(json::parse(R"({"fdg": {"tta_flips": ["q"]}})")));
}

TEST(PipelineConfig, InstantiateBuildsPredictors) {
  TempDir dir;
  EnsembleSpec spec = EnsembleSpec::defaults(Tracer::Psma);
  spec.folds.push_back(BackendSpec{"external", "zz_ext", {PETSEG_FAKE_BACKEND}, 20.0});
  const EnsembleConfig cfg = instantiate(spec, BackendContext{dir.path(), "c1", std::nullopt});
  ASSERT_EQ(cfg.folds.size(), static_cast<std::size_t>(kDefaultFoldCount) + 1);
  EXPECT_NE(dynamic_cast<SuvThresholdPredictor*>(cfg.folds[0].get()), nullptr);
  EXPECT_NE(dynamic_cast<ExternalPredictor*>(cfg.folds.back().get()), nullptr);

  EnsembleSpec empty = spec;
  empty.folds.clear();
  EXPECT_PETSEG_ERROR(instantiate(empty, BackendContext{}), ErrorCode::InvalidArgument);
  EnsembleSpec unknown = spec;
  unknown.folds[0].type = "mystery";
  EXPECT_PETSEG_ERROR(instantiate(unknown, BackendContext{}), ErrorCode::InvalidArgument);
}

TEST(Manifest, RoundTripAndAtomicWrite) {
  TempDir dir;
  const auto input = dir / "input.bin";
  {
    std::ofstream out(input, std::ios::binary);
    out << "123456789";
  }
  RunManifest m;
  m.subcommand = "run";
  m.config = json{{"a", 1}};
  m.inputs.push_back(digest_file(input));
  m.seed = 77;
  m.outputs = json{{"mask", "mask.nii.gz"}};
  m.timings = json{{"total_s", 1.5}};
  m.host = host_info();
  EXPECT_EQ(m.inputs[0].crc32, 0xCBF43926u);  // CRC-32 check value
  EXPECT_EQ(m.inputs[0].bytes, 9u);

  write_manifest(m, dir / "manifest.json");
  for (const auto& entry : std::filesystem::directory_iterator(dir.path()))
    EXPECT_EQ(entry.path().filename().string().find(".tmp"), std::string::npos);
  const RunManifest back = read_manifest(dir / "manifest.json");
  EXPECT_EQ(back.to_json(), m.to_json());
  EXPECT_EQ(back.tool_version, kToolVersion);
  EXPECT_EQ(m.to_json()["inputs"][0]["crc32"], "cbf43926");

  EXPECT_EQ(load_config_json(dir / "manifest.json"), m.config);
  write_text_atomic(dir / "bare.json", R"({"b": 2})");
  EXPECT_EQ(load_config_json(dir / "bare.json"), (json{{"b", 2}}));
  EXPECT_PETSEG_ERROR(load_config_json(dir / "missing.json"), ErrorCode::IoFailure);
}
