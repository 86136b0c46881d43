#pragma once

#include <array>

#include <Eigen/Core>

#include "petseg/volume.hpp"

namespace petseg {

inline constexpr Index kMipSize = 224;
inline constexpr double kMipSpacingMm = 3.0;
inline constexpr double kMipCapSuv = 20.0;

/// Intensity windows for the clipped channels.
struct WindowSpec {
  double pet_lo = 0.0;     // SUV
  double pet_hi = 20.0;    // SUV
  double ct_lo = -300.0;   // HU
  double ct_hi = 400.0;    // HU

  void validate() const;
};

/// Four co-registered channels: raw CT, raw PET, windowed CT, windowed PET.
struct ChannelStack {
  enum Channel : int { kCtRaw = 0, kPetRaw = 1, kCtClipped = 2, kPetClipped = 3 };
  static constexpr int kCount = 4;

  std::array<Volume3D, kCount> channels;

  const Volume3D& operator[](int c) const { return channels[static_cast<std::size_t>(c)]; }
  Volume3D& operator[](int c) { return channels[static_cast<std::size_t>(c)]; }
  const Shape3& shape() const { return channels[0].shape(); }
  const Vec3& spacing() const { return channels[0].spacing(); }
  Index voxel_count() const { return channels[0].size(); }
};

/// 2D image indexed (x, z); rows follow x, columns follow z.
using Image2D = Eigen::ArrayXXd;

/// Discriminator input: always kMipSize x kMipSize.
struct MipImage {
  Image2D pixels;
  Eigen::Vector2d source_spacing = Eigen::Vector2d::Constant(kMipSpacingMm);

  MipImage();
  MipImage(Image2D pixels, const Eigen::Vector2d& source_spacing);
};

/// Output extent along one axis: max(1, round(n * s / t)).
Index resampled_extent(Index n, double source_spacing, double target_spacing);

/// Trilinear resampling on voxel centers with border clamping. Rejects LABEL
/// volumes.
Volume3D resample_trilinear(const Volume3D& vol, const Vec3& target_spacing);

/// Trilinear resampling onto an explicit output grid sharing the input's
/// outer corner.
Volume3D resample_trilinear_to(const Volume3D& vol, const Vec3& target_spacing, const Shape3& target_shape);

/// Nearest-voxel-center resampling for label maps; exact midpoints resolve to
/// the lower index.
Volume3D resample_nearest(const Volume3D& vol, const Vec3& target_spacing);
Volume3D resample_nearest_to(const Volume3D& vol, const Vec3& target_spacing, const Shape3& target_shape);

Volume3D clip_intensity(const Volume3D& vol, double lo, double hi);

ChannelStack build_channels(const Volume3D& ct, const Volume3D& pet, const WindowSpec& window = {});

/// Maximum along y (anterior-posterior); result is nx x nz.
Image2D mip_coronal(const Volume3D& vol);

/// Centers `img` in an out_size x out_size canvas, zero padding or cropping
/// per axis. Input index floor(n/2) lands on output index floor(out_size/2).
Image2D crop_pad_center(const Image2D& img, Index out_size = kMipSize);

MipImage normalize_mip(const MipImage& mip, double cap = kMipCapSuv);

/// PET volume to discriminator input: resample to `spacing` mm isotropic,
/// coronal MIP, center pad/crop to 224, scale by `cap`.
MipImage make_mip(const Volume3D& pet, double spacing = kMipSpacingMm, double cap = kMipCapSuv);

}  // namespace petseg
