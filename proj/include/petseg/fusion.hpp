#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "petseg/volume.hpp"

namespace petseg {

struct OrganGroup {
  int id = 0;
  std::string name;
  std::vector<std::string> members;  // organ mask names mapped to this group
};

/// Grouped supplementary-label classes. Ids are dense 1..K, 0 is background
/// and the lesion group carries the largest id.
class OrganGroupTable {
 public:
  explicit OrganGroupTable(std::vector<OrganGroup> groups);

  /// brain, heart, aorta, liver, kidneys, urinary_bladder, spleen,
  /// digestive_system, prostate, skeleton, lungs, pancreas, lesion (1..13).
  static OrganGroupTable default_table();

  const std::vector<OrganGroup>& groups() const noexcept { return groups_; }
  int lesion_id() const noexcept { return static_cast<int>(groups_.size()); }
  int max_id() const noexcept { return lesion_id(); }
  bool has_id(int id) const noexcept { return id >= 1 && id <= max_id(); }

  /// Group id for a mask name (group name or any member), or 0 if unknown.
  int group_of(const std::string& mask_name) const;
  const OrganGroup& group(int id) const;

 private:
  std::vector<OrganGroup> groups_;
};

struct NamedMask {
  std::string name;
  BinaryMask mask;
};

/// Label map where each voxel takes the highest group id claiming it; the
/// lesion mask is applied last with the lesion id.
Volume3D merge_organ_masks(std::span<const NamedMask> organs, const BinaryMask& lesion,
                           const OrganGroupTable& table = OrganGroupTable::default_table(),
                           bool ignore_unknown = false);

/// Voxels equal to `id`; id 0 selects background.
BinaryMask split_label_map(const Volume3D& fused, int id,
                           const OrganGroupTable& table = OrganGroupTable::default_table());

/// Manifest: {case_id, lesion_path, organs: {name: path}}; paths relative to
/// the manifest file.
struct FusionCase {
  std::string case_id;
  Volume3D fused;
};

FusionCase fuse_from_manifest(const std::filesystem::path& manifest,
                              const OrganGroupTable& table = OrganGroupTable::default_table(),
                              bool ignore_unknown = false);

}  // namespace petseg
