#include "petseg/fusion.hpp"

#include <fstream>

#include "json.hpp"
#include "petseg/nifti.hpp"

namespace petseg {

OrganGroupTable::OrganGroupTable(std::vector<OrganGroup> groups) : groups_(std::move(groups)) {
  if (groups_.empty()) throw Error(ErrorCode::InvalidArgument, "group table is empty");
  for (std::size_t i = 0; i < groups_.size(); ++i) {
    if (groups_[i].id != static_cast<int>(i) + 1) {
      throw Error(ErrorCode::InvalidArgument, "group ids must be dense 1..K in order");
    }
  }
}

OrganGroupTable OrganGroupTable::default_table() {
  return OrganGroupTable({
      {1, "brain", {"brain"}},
      {2, "heart", {"heart", "heart_myocardium", "heart_atrium_left", "heart_atrium_right",
                    "heart_ventricle_left", "heart_ventricle_right"}},
      {3, "aorta", {"aorta"}},
      {4, "liver", {"liver"}},
      {5, "kidneys", {"kidney_left", "kidney_right"}},
      {6, "urinary_bladder", {"urinary_bladder", "bladder"}},
      {7, "spleen", {"spleen"}},
      {8, "digestive_system", {"esophagus", "stomach", "duodenum", "small_bowel", "colon", "gallbladder"}},
      {9, "prostate", {"prostate"}},
      {10, "skeleton", {"skull", "vertebrae", "ribs", "sternum", "clavicula_left", "clavicula_right",
                        "scapula_left", "scapula_right", "humerus_left", "humerus_right", "hip_left", "hip_right",
                        "sacrum", "femur_left", "femur_right", "bones"}},
      {11, "lungs", {"lung_upper_lobe_left", "lung_lower_lobe_left", "lung_upper_lobe_right",
                     "lung_middle_lobe_right", "lung_lower_lobe_right", "lung_left", "lung_right"}},
      {12, "pancreas", {"pancreas"}},
      {13, "lesion", {"lesion"}},
  });
}

int OrganGroupTable::group_of(const std::string& mask_name) const {
  for (const OrganGroup& g : groups_) {
    if (g.name == mask_name) return g.id;
    for (const std::string& m : g.members) {
      if (m == mask_name) return g.id;
    }
  }
  return 0;
}

const OrganGroup& OrganGroupTable::group(int id) const {
  if (!has_id(id)) throw Error(ErrorCode::UnknownGroupId, "group id " + std::to_string(id));
  return groups_[static_cast<std::size_t>(id - 1)];
}

Volume3D merge_organ_masks(std::span<const NamedMask> organs, const BinaryMask& lesion, const OrganGroupTable& table,
                           bool ignore_unknown) {
  Volume3D fused = like<double>(lesion, VolumeKind::Label);
  for (const NamedMask& organ : organs) {
    if (!organ.mask.same_grid(lesion)) {
      throw Error(ErrorCode::ShapeMismatch, "organ mask " + organ.name + " differs from the lesion grid");
    }
    const int id = table.group_of(organ.name);
    if (id == 0) {
      if (ignore_unknown) continue;
      throw Error(ErrorCode::UnknownMaskName, organ.name);
    }
    fused.data() = fused.data().max(organ.mask.data().cast<double>() * static_cast<double>(id));
  }
  fused.data() = (lesion.data() != 0).select(static_cast<double>(table.lesion_id()), fused.data());
  return fused;
}

BinaryMask split_label_map(const Volume3D& fused, int id, const OrganGroupTable& table) {
  if (id != 0 && !table.has_id(id)) throw Error(ErrorCode::UnknownGroupId, "group id " + std::to_string(id));
  return mask_from_label(fused, static_cast<double>(id));
}

FusionCase fuse_from_manifest(const std::filesystem::path& manifest, const OrganGroupTable& table,
                              bool ignore_unknown) {
  std::ifstream in(manifest);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + manifest.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, "malformed organ manifest: " + std::string(e.what()));
  }
  const auto dir = manifest.parent_path();
  const auto load_mask = [&dir](const std::string& rel) {
    const Volume3D v = nifti::read_volume(dir / rel, VolumeKind::Label);
    BinaryMask m = like<std::uint8_t>(v, VolumeKind::Label);
    m.data() = (v.data() != 0.0).cast<std::uint8_t>();
    return m;
  };

  FusionCase result;
  result.case_id = j.value("case_id", std::string{});
  const BinaryMask lesion = load_mask(j.at("lesion_path").get<std::string>());
  std::vector<NamedMask> organs;
  for (const auto& [name, path] : j.at("organs").items()) {
    organs.push_back({name, load_mask(path.get<std::string>())});
  }
  result.fused = merge_organ_masks(organs, lesion, table, ignore_unknown);
  return result;
}

}  // namespace petseg
