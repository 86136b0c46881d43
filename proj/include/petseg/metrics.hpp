#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>

#include "petseg/volume.hpp"

namespace petseg {

enum class Connectivity : int { Faces = 6, Edges = 18, Full = 26 };

Connectivity connectivity_from_int(int n);

struct Components {
  LabelVolume labels;  // 0 = background, 1..count in first-encounter (x-fastest) order
  std::int32_t count = 0;
};

/// Two-pass union-find labeling.
Components connected_components(const BinaryMask& mask, Connectivity connectivity = Connectivity::Full);

/// 2|P and G| / (|P| + |G|); nullopt when both masks are empty.
std::optional<double> dice(const BinaryMask& pred, const BinaryMask& gt);

struct VoxelVolume {
  std::int64_t voxels = 0;
  double ml = 0.0;
};

/// Total size of predicted components that touch no ground-truth voxel.
VoxelVolume false_positive_volume(const BinaryMask& pred, const BinaryMask& gt,
                                  Connectivity connectivity = Connectivity::Full);

/// Total size of ground-truth components that touch no predicted voxel.
VoxelVolume false_negative_volume(const BinaryMask& pred, const BinaryMask& gt,
                                  Connectivity connectivity = Connectivity::Full);

struct CaseMetrics {
  std::string case_id;
  std::optional<double> dice;
  std::int64_t fpv_voxels = 0;
  double fpv_ml = 0.0;
  std::int64_t fnv_voxels = 0;
  double fnv_ml = 0.0;
  std::int32_t n_pred_components = 0;
  std::int32_t n_gt_components = 0;
};

CaseMetrics evaluate_masks(const BinaryMask& pred, const BinaryMask& gt,
                           Connectivity connectivity = Connectivity::Full, std::string case_id = {});

/// Loads two label volumes and compares their `lesion_label` voxels.
CaseMetrics evaluate_case(const std::filesystem::path& pred_path, const std::filesystem::path& gt_path,
                          double lesion_label = 1.0, Connectivity connectivity = Connectivity::Full);

/// CSV header plus one row per case (floats with 6 decimals).
void write_metrics_csv(std::ostream& os, std::span<const CaseMetrics> rows, bool with_mean_row = true);
void write_metrics_header(std::ostream& os);
void write_metrics_row(std::ostream& os, const CaseMetrics& row);

/// Means over cases; Dice averages defined cases only. `dice_defined` holds
/// the number of defined cases.
struct MetricsSummary {
  std::optional<double> mean_dice;
  std::size_t dice_defined = 0;
  double mean_fpv_voxels = 0.0;
  double mean_fpv_ml = 0.0;
  double mean_fnv_voxels = 0.0;
  double mean_fnv_ml = 0.0;
  double mean_pred_components = 0.0;
  double mean_gt_components = 0.0;
};

MetricsSummary summarize(std::span<const CaseMetrics> rows);

}  // namespace petseg
