#include "petseg/metrics.hpp"

#include <array>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <vector>

#include "petseg/nifti.hpp"

namespace petseg {
namespace {

struct Offset {
  int dx, dy, dz;
};

// Neighbors already visited in x-fastest scan order.
std::vector<Offset> backward_neighbors(Connectivity connectivity) {
  const int max_nonzero = connectivity == Connectivity::Faces ? 1 : connectivity == Connectivity::Edges ? 2 : 3;
  std::vector<Offset> out;
  for (int dz = -1; dz <= 0; ++dz) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const bool before = dz < 0 || (dz == 0 && (dy < 0 || (dy == 0 && dx < 0)));
        if (!before) continue;
        if (std::abs(dx) + std::abs(dy) + std::abs(dz) > max_nonzero) continue;
        out.push_back({dx, dy, dz});
      }
    }
  }
  return out;
}

class DisjointSets {
 public:
  std::int32_t make() {
    parent_.push_back(static_cast<std::int32_t>(parent_.size()));
    return parent_.back();
  }

  std::int32_t find(std::int32_t x) {
    while (parent_[static_cast<std::size_t>(x)] != x) {
      auto& p = parent_[static_cast<std::size_t>(x)];
      p = parent_[static_cast<std::size_t>(p)];
      x = p;
    }
    return x;
  }

  void unite(std::int32_t a, std::int32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) {
      parent_[static_cast<std::size_t>(b)] = a;
    } else {
      parent_[static_cast<std::size_t>(a)] = b;
    }
  }

 private:
  std::vector<std::int32_t> parent_;
};

void require_same_grid(const BinaryMask& a, const BinaryMask& b) {
  if (!a.same_grid(b)) throw Error(ErrorCode::ShapeMismatch, "masks differ in shape or spacing");
}

// Sum of component sizes in `source` that share no voxel with `other`.
VoxelVolume unmatched_volume(const BinaryMask& source, const BinaryMask& other, Connectivity connectivity) {
  require_same_grid(source, other);
  const Components cc = connected_components(source, connectivity);
  std::vector<std::int64_t> sizes(static_cast<std::size_t>(cc.count) + 1, 0);
  std::vector<bool> touched(static_cast<std::size_t>(cc.count) + 1, false);
  for (Index i = 0; i < source.size(); ++i) {
    const auto id = static_cast<std::size_t>(cc.labels.data()[i]);
    if (id == 0) continue;
    ++sizes[id];
    if (other.data()[i]) touched[id] = true;
  }
  VoxelVolume v;
  for (std::size_t id = 1; id < sizes.size(); ++id) {
    if (!touched[id]) v.voxels += sizes[id];
  }
  v.ml = static_cast<double>(v.voxels) * source.voxel_volume_mm3() / 1000.0;
  return v;
}

std::string fixed6(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << v;
  return os.str();
}

}  // namespace

Connectivity connectivity_from_int(int n) {
  switch (n) {
    case 6: return Connectivity::Faces;
    case 18: return Connectivity::Edges;
    case 26: return Connectivity::Full;
    default: throw Error(ErrorCode::InvalidArgument, "connectivity must be 6, 18 or 26");
  }
}

Components connected_components(const BinaryMask& mask, Connectivity connectivity) {
  const std::vector<Offset> neighbors = backward_neighbors(connectivity);
  const Index nx = mask.nx();
  const Index ny = mask.ny();
  const Index nz = mask.nz();

  Components out{like<std::int32_t>(mask, VolumeKind::Label), 0};
  auto& labels = out.labels.data();
  DisjointSets sets;
  sets.make();  // slot 0 is background

  for (Index z = 0; z < nz; ++z) {
    for (Index y = 0; y < ny; ++y) {
      for (Index x = 0; x < nx; ++x) {
        const Index i = mask.index(x, y, z);
        if (!mask.data()[i]) continue;
        std::int32_t current = 0;
        for (const Offset& o : neighbors) {
          const Index xx = x + o.dx;
          const Index yy = y + o.dy;
          const Index zz = z + o.dz;
          if (xx < 0 || xx >= nx || yy < 0 || yy >= ny || zz < 0) continue;
          const std::int32_t l = labels[mask.index(xx, yy, zz)];
          if (l == 0) continue;
          if (current == 0) {
            current = l;
          } else if (l != current) {
            sets.unite(current, l);
          }
        }
        labels[i] = current != 0 ? current : sets.make();
      }
    }
  }

  // Second pass: renumber roots in first-encounter order.
  std::vector<std::int32_t> final_id;
  for (Index i = 0; i < labels.size(); ++i) {
    if (labels[i] == 0) continue;
    const auto root = static_cast<std::size_t>(sets.find(labels[i]));
    if (final_id.size() <= root) final_id.resize(root + 1, 0);
    if (final_id[root] == 0) final_id[root] = ++out.count;
    labels[i] = final_id[root];
  }
  return out;
}

std::optional<double> dice(const BinaryMask& pred, const BinaryMask& gt) {
  if (!(pred.shape() == gt.shape()).all()) throw Error(ErrorCode::ShapeMismatch, "masks differ in shape");
  std::int64_t p = 0;
  std::int64_t g = 0;
  std::int64_t both = 0;
  for (Index i = 0; i < pred.size(); ++i) {
    const bool a = pred.data()[i] != 0;
    const bool b = gt.data()[i] != 0;
    p += a;
    g += b;
    both += a && b;
  }
  if (p + g == 0) return std::nullopt;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

VoxelVolume false_positive_volume(const BinaryMask& pred, const BinaryMask& gt, Connectivity connectivity) {
  return unmatched_volume(pred, gt, connectivity);
}

VoxelVolume false_negative_volume(const BinaryMask& pred, const BinaryMask& gt, Connectivity connectivity) {
  return unmatched_volume(gt, pred, connectivity);
}

CaseMetrics evaluate_masks(const BinaryMask& pred, const BinaryMask& gt, Connectivity connectivity,
                           std::string case_id) {
  require_same_grid(pred, gt);
  CaseMetrics m;
  m.case_id = std::move(case_id);
  m.dice = dice(pred, gt);
  const VoxelVolume fp = false_positive_volume(pred, gt, connectivity);
  const VoxelVolume fn = false_negative_volume(pred, gt, connectivity);
  m.fpv_voxels = fp.voxels;
  m.fpv_ml = fp.ml;
  m.fnv_voxels = fn.voxels;
  m.fnv_ml = fn.ml;
  m.n_pred_components = connected_components(pred, connectivity).count;
  m.n_gt_components = connected_components(gt, connectivity).count;
  return m;
}

CaseMetrics evaluate_case(const std::filesystem::path& pred_path, const std::filesystem::path& gt_path,
                          double lesion_label, Connectivity connectivity) {
  const Volume3D pred = nifti::read_volume(pred_path, VolumeKind::Label);
  const Volume3D gt = nifti::read_volume(gt_path, VolumeKind::Label);
  if (!pred.same_grid(gt)) {
    throw Error(ErrorCode::ShapeMismatch, pred_path.string() + " and " + gt_path.string() + " differ in grid");
  }
  std::string case_id = pred_path.filename().string();
  for (const char* ext : {".nii.gz", ".nii"}) {
    const std::string e(ext);
    if (case_id.size() > e.size() && case_id.ends_with(e)) {
      case_id.resize(case_id.size() - e.size());
      break;
    }
  }
  return evaluate_masks(mask_from_label(pred, lesion_label), mask_from_label(gt, lesion_label), connectivity,
                        case_id);
}

MetricsSummary summarize(std::span<const CaseMetrics> rows) {
  MetricsSummary s;
  if (rows.empty()) return s;
  double dice_sum = 0.0;
  for (const CaseMetrics& r : rows) {
    if (r.dice) {
      dice_sum += *r.dice;
      ++s.dice_defined;
    }
    s.mean_fpv_voxels += static_cast<double>(r.fpv_voxels);
    s.mean_fpv_ml += r.fpv_ml;
    s.mean_fnv_voxels += static_cast<double>(r.fnv_voxels);
    s.mean_fnv_ml += r.fnv_ml;
    s.mean_pred_components += r.n_pred_components;
    s.mean_gt_components += r.n_gt_components;
  }
  const auto n = static_cast<double>(rows.size());
  if (s.dice_defined > 0) s.mean_dice = dice_sum / static_cast<double>(s.dice_defined);
  s.mean_fpv_voxels /= n;
  s.mean_fpv_ml /= n;
  s.mean_fnv_voxels /= n;
  s.mean_fnv_ml /= n;
  s.mean_pred_components /= n;
  s.mean_gt_components /= n;
  return s;
}

void write_metrics_header(std::ostream& os) {
  os << "case_id,dice,dice_defined,fpv_voxels,fpv_ml,fnv_voxels,fnv_ml,n_pred_cc,n_gt_cc\n";
}

void write_metrics_row(std::ostream& os, const CaseMetrics& r) {
  os << r.case_id << ',' << (r.dice ? fixed6(*r.dice) : "nan") << ',' << (r.dice ? 1 : 0) << ',' << r.fpv_voxels
     << ',' << fixed6(r.fpv_ml) << ',' << r.fnv_voxels << ',' << fixed6(r.fnv_ml) << ',' << r.n_pred_components
     << ',' << r.n_gt_components << '\n';
}

void write_metrics_csv(std::ostream& os, std::span<const CaseMetrics> rows, bool with_mean_row) {
  write_metrics_header(os);
  for (const CaseMetrics& r : rows) write_metrics_row(os, r);
  if (!with_mean_row) return;
  const MetricsSummary s = summarize(rows);
  os << "mean," << (s.mean_dice ? fixed6(*s.mean_dice) : "nan") << ',' << s.dice_defined << ','
     << fixed6(s.mean_fpv_voxels) << ',' << fixed6(s.mean_fpv_ml) << ',' << fixed6(s.mean_fnv_voxels) << ','
     << fixed6(s.mean_fnv_ml) << ',' << fixed6(s.mean_pred_components) << ',' << fixed6(s.mean_gt_components)
     << '\n';
}

}  // namespace petseg
