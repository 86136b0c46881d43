#include "petseg/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace petseg {
namespace {

// Per-axis sampling table: lower neighbor, upper neighbor and the weight of
// the upper one.
struct AxisTaps {
  std::vector<Index> lo;
  std::vector<Index> hi;
  std::vector<double> w;
};

double sample_position(Index i, double s, double t) { return ((static_cast<double>(i) + 0.5) * t - 0.5 * s) / s; }

AxisTaps linear_taps(Index n_in, double s, double t, Index n_out) {
  AxisTaps taps;
  taps.lo.resize(static_cast<std::size_t>(n_out));
  taps.hi.resize(static_cast<std::size_t>(n_out));
  taps.w.resize(static_cast<std::size_t>(n_out));
  const double last = static_cast<double>(n_in - 1);
  for (Index i = 0; i < n_out; ++i) {
    const double pos = std::clamp(sample_position(i, s, t), 0.0, last);
    const Index i0 = static_cast<Index>(std::floor(pos));
    const auto k = static_cast<std::size_t>(i);
    taps.lo[k] = i0;
    taps.hi[k] = std::min(i0 + 1, n_in - 1);
    taps.w[k] = pos - static_cast<double>(i0);
  }
  return taps;
}

std::vector<Index> nearest_taps(Index n_in, double s, double t, Index n_out) {
  std::vector<Index> idx(static_cast<std::size_t>(n_out));
  for (Index i = 0; i < n_out; ++i) {
    // ceil(pos - 0.5) sends exact midpoints to the lower neighbor.
    const auto nearest = static_cast<Index>(std::ceil(sample_position(i, s, t) - 0.5));
    idx[static_cast<std::size_t>(i)] = std::clamp<Index>(nearest, 0, n_in - 1);
  }
  return idx;
}

void check_target(const Vec3& target) {
  for (int a = 0; a < 3; ++a) {
    if (!(target[a] > 0.0) || !std::isfinite(target[a])) {
      throw Error(ErrorCode::InvalidSpacing, "target spacing must be positive and finite");
    }
  }
}

Shape3 resampled_shape(const Volume3D& vol, const Vec3& target) {
  Shape3 out;
  for (int a = 0; a < 3; ++a) out[a] = resampled_extent(vol.shape()[a], vol.spacing()[a], target[a]);
  return out;
}

Vec3 resampled_origin(const Volume3D& vol, const Vec3& target) {
  return vol.origin() + 0.5 * (target - vol.spacing());
}

}  // namespace

void WindowSpec::validate() const {
  if (!(pet_lo < pet_hi) || !(ct_lo < ct_hi)) {
    throw Error(ErrorCode::InvalidWindow, "window lower bound must be below upper bound");
  }
}

MipImage::MipImage() : pixels(Image2D::Zero(kMipSize, kMipSize)) {}

MipImage::MipImage(Image2D px, const Eigen::Vector2d& spacing) : pixels(std::move(px)), source_spacing(spacing) {
  if (pixels.rows() != kMipSize || pixels.cols() != kMipSize) {
    throw Error(ErrorCode::ShapeError, "MIP image must be 224x224");
  }
}

Index resampled_extent(Index n, double source_spacing, double target_spacing) {
  const double extent = std::round(static_cast<double>(n) * source_spacing / target_spacing);
  return std::max<Index>(1, static_cast<Index>(extent));
}

Volume3D resample_trilinear(const Volume3D& vol, const Vec3& target_spacing) {
  check_target(target_spacing);
  return resample_trilinear_to(vol, target_spacing, resampled_shape(vol, target_spacing));
}

Volume3D resample_trilinear_to(const Volume3D& vol, const Vec3& target, const Shape3& shape) {
  if (vol.kind() == VolumeKind::Label) {
    throw Error(ErrorCode::InvalidArgument, "trilinear resampling of a label map; use resample_nearest");
  }
  check_target(target);
  if (target == vol.spacing() && (shape == vol.shape()).all()) return vol;

  const AxisTaps tx = linear_taps(vol.nx(), vol.spacing()[0], target[0], shape[0]);
  const AxisTaps ty = linear_taps(vol.ny(), vol.spacing()[1], target[1], shape[1]);
  const AxisTaps tz = linear_taps(vol.nz(), vol.spacing()[2], target[2], shape[2]);

  Volume3D out(shape, target, vol.kind());
  out.set_origin(resampled_origin(vol, target));

  const double* src = vol.data().data();
  double* dst = out.data().data();
  const Index nx = vol.nx();
  const Index slab = vol.nx() * vol.ny();
  for (Index z = 0; z < shape[2]; ++z) {
    const auto kz = static_cast<std::size_t>(z);
    const double wz = tz.w[kz];
    const double* z0 = src + tz.lo[kz] * slab;
    const double* z1 = src + tz.hi[kz] * slab;
    for (Index y = 0; y < shape[1]; ++y) {
      const auto ky = static_cast<std::size_t>(y);
      const double wy = ty.w[ky];
      const double* r00 = z0 + ty.lo[ky] * nx;
      const double* r10 = z0 + ty.hi[ky] * nx;
      const double* r01 = z1 + ty.lo[ky] * nx;
      const double* r11 = z1 + ty.hi[ky] * nx;
      double* row = dst + (z * shape[1] + y) * shape[0];
      for (Index x = 0; x < shape[0]; ++x) {
        const auto kx = static_cast<std::size_t>(x);
        const Index x0 = tx.lo[kx];
        const Index x1 = tx.hi[kx];
        const double wx = tx.w[kx];
        const double c00 = r00[x0] + wx * (r00[x1] - r00[x0]);
        const double c10 = r10[x0] + wx * (r10[x1] - r10[x0]);
        const double c01 = r01[x0] + wx * (r01[x1] - r01[x0]);
        const double c11 = r11[x0] + wx * (r11[x1] - r11[x0]);
        const double c0 = c00 + wy * (c10 - c00);
        const double c1 = c01 + wy * (c11 - c01);
        row[x] = c0 + wz * (c1 - c0);
      }
    }
  }
  return out;
}

Volume3D resample_nearest(const Volume3D& vol, const Vec3& target_spacing) {
  check_target(target_spacing);
  return resample_nearest_to(vol, target_spacing, resampled_shape(vol, target_spacing));
}

Volume3D resample_nearest_to(const Volume3D& vol, const Vec3& target, const Shape3& shape) {
  if (vol.kind() != VolumeKind::Label) {
    throw Error(ErrorCode::InvalidArgument, "nearest-neighbour resampling expects a label map");
  }
  check_target(target);
  if (target == vol.spacing() && (shape == vol.shape()).all()) return vol;

  const auto ix = nearest_taps(vol.nx(), vol.spacing()[0], target[0], shape[0]);
  const auto iy = nearest_taps(vol.ny(), vol.spacing()[1], target[1], shape[1]);
  const auto iz = nearest_taps(vol.nz(), vol.spacing()[2], target[2], shape[2]);

  Volume3D out(shape, target, VolumeKind::Label);
  out.set_origin(resampled_origin(vol, target));
  Index o = 0;
  for (Index z = 0; z < shape[2]; ++z) {
    for (Index y = 0; y < shape[1]; ++y) {
      const Index base = vol.index(0, iy[static_cast<std::size_t>(y)], iz[static_cast<std::size_t>(z)]);
      for (Index x = 0; x < shape[0]; ++x) out.data()[o++] = vol.data()[base + ix[static_cast<std::size_t>(x)]];
    }
  }
  return out;
}

Volume3D clip_intensity(const Volume3D& vol, double lo, double hi) {
  if (!(lo < hi)) throw Error(ErrorCode::InvalidWindow, "clip window requires lo < hi");
  Volume3D out = vol;
  out.data() = vol.data().max(lo).min(hi);
  return out;
}

ChannelStack build_channels(const Volume3D& ct, const Volume3D& pet, const WindowSpec& window) {
  window.validate();
  if (!ct.same_grid(pet)) throw Error(ErrorCode::ShapeMismatch, "CT and PET must share shape and spacing");
  ChannelStack stack;
  stack[ChannelStack::kCtRaw] = ct;
  stack[ChannelStack::kPetRaw] = pet;
  stack[ChannelStack::kCtClipped] = clip_intensity(ct, window.ct_lo, window.ct_hi);
  stack[ChannelStack::kPetClipped] = clip_intensity(pet, window.pet_lo, window.pet_hi);
  return stack;
}

Image2D mip_coronal(const Volume3D& vol) {
  const Index nx = vol.nx();
  Image2D out(nx, vol.nz());
  for (Index z = 0; z < vol.nz(); ++z) {
    auto column = out.col(z);
    column = Eigen::Map<const Eigen::ArrayXd>(vol.data().data() + vol.index(0, 0, z), nx);
    for (Index y = 1; y < vol.ny(); ++y) {
      column = column.max(Eigen::Map<const Eigen::ArrayXd>(vol.data().data() + vol.index(0, y, z), nx));
    }
  }
  return out;
}

Image2D crop_pad_center(const Image2D& img, Index out_size) {
  if (img.rows() < 1 || img.cols() < 1 || out_size < 1) {
    throw Error(ErrorCode::ShapeError, "crop_pad_center needs non-empty input");
  }
  struct Span1D {
    Index src, dst, len;
  };
  const auto place = [out_size](Index n) {
    const Index offset = out_size / 2 - n / 2;
    const Index src = std::max<Index>(0, -offset);
    const Index dst = std::max<Index>(0, offset);
    return Span1D{src, dst, std::min(n - src, out_size - dst)};
  };
  const Span1D r = place(img.rows());
  const Span1D c = place(img.cols());
  Image2D out = Image2D::Zero(out_size, out_size);
  out.block(r.dst, c.dst, r.len, c.len) = img.block(r.src, c.src, r.len, c.len);
  return out;
}

MipImage normalize_mip(const MipImage& mip, double cap) {
  if (!(cap > 0.0)) throw Error(ErrorCode::InvalidArgument, "MIP cap must be positive");
  return MipImage(mip.pixels.min(cap) / cap, mip.source_spacing);
}

MipImage make_mip(const Volume3D& pet, double spacing, double cap) {
  const Volume3D resampled = resample_trilinear(pet, Vec3::Constant(spacing));
  MipImage raw(crop_pad_center(mip_coronal(resampled), kMipSize), Eigen::Vector2d::Constant(spacing));
  return normalize_mip(raw, cap);
}

}  // namespace petseg
