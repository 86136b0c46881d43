#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "petseg/volume.hpp"

namespace petseg::nifti {

inline constexpr std::size_t kHeaderSize = 348;
inline constexpr std::size_t kDefaultVoxOffset = 352;

enum class Datatype : std::int16_t {
  UInt8 = 2,
  Int16 = 4,
  Float32 = 16,
  Float64 = 64,
};

enum class Endian { Little, Big };

int bytes_per_voxel(Datatype dt);

// Decoded subset of the NIfTI-1 header. Fields not listed here are written
// as zero.
struct Header {
  std::array<std::int16_t, 8> dim{};
  Datatype datatype = Datatype::Float32;
  std::int16_t bitpix = 32;
  std::array<float, 8> pixdim{};
  float vox_offset = static_cast<float>(kDefaultVoxOffset);
  float scl_slope = 0.0f;
  float scl_inter = 0.0f;
  std::int16_t qform_code = 0;
  std::int16_t sform_code = 0;
  std::array<float, 3> qoffset{};
  std::array<float, 4> srow_x{};
  std::array<float, 4> srow_y{};
  std::array<float, 4> srow_z{};
  std::array<char, 4> magic{'n', '+', '1', '\0'};
  Endian endian = Endian::Little;

  Shape3 shape() const { return {dim[1], dim[2], dim[3]}; }
  Vec3 spacing() const { return {pixdim[1], pixdim[2], pixdim[3]}; }
  Index voxel_count() const { return shape().prod(); }
};

/// Decodes a 348-byte header. Byte order is detected from sizeof_hdr.
Header parse_header(std::span<const std::byte> bytes);

/// Encodes a header into exactly 348 bytes in the requested byte order.
std::vector<std::byte> encode_header(const Header& header);

/// Whole-file contents, transparently gunzipped when the file starts with
/// the gzip magic bytes.
std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);

std::vector<std::byte> gzip_compress(std::span<const std::byte> raw);
std::vector<std::byte> gzip_decompress(std::span<const std::byte> compressed);

Header read_header(const std::filesystem::path& path);

/// Loads a volume, mapping stored values through scl_slope/scl_inter when
/// scl_slope is nonzero. Without a hint, floating datatypes become PET_SUV
/// and integer datatypes LABEL (CT_HU if any value is negative).
Volume3D read_volume(const std::filesystem::path& path, std::optional<VolumeKind> kind = {});

struct WriteOptions {
  std::optional<Datatype> datatype;  // default: float32, or uint8/int16 for labels
  Endian endian = Endian::Little;
  std::optional<bool> gzip;  // default: path ends with ".gz"
};

void write_volume(const Volume3D& vol, const std::filesystem::path& path, const WriteOptions& options = {});

template <typename Scalar>
void write_volume(const Volume<Scalar>& vol, const std::filesystem::path& path, const WriteOptions& options = {}) {
  Volume3D as_double(vol.shape(), vol.spacing(), vol.kind(), vol.data().template cast<double>().eval());
  as_double.set_origin(vol.origin());
  write_volume(as_double, path, options);
}

/// Datatype write_volume picks when none is requested.
Datatype default_datatype(const Volume3D& vol);

}  // namespace petseg::nifti
