#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <utility>

#include <Eigen/Core>

#include "petseg/errors.hpp"

namespace petseg {

using Index = Eigen::Index;
using Shape3 = Eigen::Array<Index, 3, 1>;
using Vec3 = Eigen::Vector3d;

enum class VolumeKind { PetSuv, CtHu, Label, Probability };

/// Dense 3D scalar grid, x-fastest, with per-axis spacing (mm) and the
/// physical position of the first voxel center.
///
/// Scalar is double for intensities and probabilities, std::uint8_t for
/// binary masks and std::int32_t for component labels.
template <typename Scalar>
class Volume {
 public:
  using Data = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Volume() : shape_(Shape3::Zero()), spacing_(Vec3::Ones()), origin_(Vec3::Zero()) {}

  Volume(const Shape3& shape, const Vec3& spacing, VolumeKind kind, Scalar fill = Scalar(0))
      : shape_(shape), spacing_(spacing), origin_(Vec3::Zero()), kind_(kind) {
    check_geometry();
    data_.setConstant(shape_.prod(), fill);
  }

  Volume(const Shape3& shape, const Vec3& spacing, VolumeKind kind, Data data)
      : shape_(shape), spacing_(spacing), origin_(Vec3::Zero()), kind_(kind), data_(std::move(data)) {
    check_geometry();
    if (data_.size() != shape_.prod()) {
      throw Error(ErrorCode::ShapeMismatch, "data length does not match shape");
    }
    if (kind_ == VolumeKind::Label) check_labels();
  }

  const Shape3& shape() const noexcept { return shape_; }
  const Vec3& spacing() const noexcept { return spacing_; }
  const Vec3& origin() const noexcept { return origin_; }
  VolumeKind kind() const noexcept { return kind_; }
  Index size() const noexcept { return data_.size(); }
  Index nx() const noexcept { return shape_[0]; }
  Index ny() const noexcept { return shape_[1]; }
  Index nz() const noexcept { return shape_[2]; }

  void set_origin(const Vec3& origin) { origin_ = origin; }
  void set_kind(VolumeKind kind) { kind_ = kind; }

  double voxel_volume_mm3() const { return spacing_.prod(); }

  Index index(Index x, Index y, Index z) const noexcept { return x + shape_[0] * (y + shape_[1] * z); }

  Scalar operator()(Index x, Index y, Index z) const { return data_[index(x, y, z)]; }
  Scalar& operator()(Index x, Index y, Index z) { return data_[index(x, y, z)]; }

  const Data& data() const noexcept { return data_; }
  Data& data() noexcept { return data_; }

  /// True when both volumes have identical shape and spacing.
  template <typename Other>
  bool same_grid(const Volume<Other>& other) const {
    return (shape_ == other.shape()).all() && spacing_ == other.spacing();
  }

 private:
  void check_geometry() const {
    if ((shape_ < 1).any()) throw Error(ErrorCode::ShapeError, "volume shape must be positive");
    for (int a = 0; a < 3; ++a) {
      if (!(spacing_[a] > 0.0) || !std::isfinite(spacing_[a])) {
        throw Error(ErrorCode::InvalidSpacing, "spacing must be positive and finite");
      }
    }
  }

  void check_labels() const {
    for (Index i = 0; i < data_.size(); ++i) {
      const double v = static_cast<double>(data_[i]);
      if (!(v >= 0.0) || v != std::floor(v) || v > 9.0e15) {
        throw Error(ErrorCode::InvalidArgument, "label volume holds a non-integer or negative value");
      }
    }
  }

  Shape3 shape_;
  Vec3 spacing_;
  Vec3 origin_;
  VolumeKind kind_ = VolumeKind::PetSuv;
  Data data_;
};

using Volume3D = Volume<double>;
using BinaryMask = Volume<std::uint8_t>;
using LabelVolume = Volume<std::int32_t>;

/// Volume with the same geometry as `ref` and a different scalar type.
template <typename Scalar, typename Other>
Volume<Scalar> like(const Volume<Other>& ref, VolumeKind kind, Scalar fill = Scalar(0)) {
  Volume<Scalar> out(ref.shape(), ref.spacing(), kind, fill);
  out.set_origin(ref.origin());
  return out;
}

/// Voxels equal to `label` become 1, all others 0.
inline BinaryMask mask_from_label(const Volume3D& labels, double label) {
  BinaryMask mask = like<std::uint8_t>(labels, VolumeKind::Label);
  mask.data() = (labels.data() == label).template cast<std::uint8_t>();
  return mask;
}

inline Volume3D mask_to_volume(const BinaryMask& mask) {
  Volume3D out = like<double>(mask, VolumeKind::Label);
  out.data() = mask.data().template cast<double>();
  return out;
}

inline std::string_view to_string(VolumeKind kind) {
  switch (kind) {
    case VolumeKind::PetSuv: return "PET_SUV";
    case VolumeKind::CtHu: return "CT_HU";
    case VolumeKind::Label: return "LABEL";
    case VolumeKind::Probability: return "PROBABILITY";
  }
  return "UNKNOWN";
}

}  // namespace petseg
