#include "petseg/nifti.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include <zlib.h>

namespace petseg::nifti {
namespace {

// Byte offsets inside the 348-byte header.
constexpr std::size_t kOffSizeofHdr = 0;
constexpr std::size_t kOffDim = 40;
constexpr std::size_t kOffDatatype = 70;
constexpr std::size_t kOffBitpix = 72;
constexpr std::size_t kOffPixdim = 76;
constexpr std::size_t kOffVoxOffset = 108;
constexpr std::size_t kOffSclSlope = 112;
constexpr std::size_t kOffSclInter = 116;
constexpr std::size_t kOffXyztUnits = 123;
constexpr std::size_t kOffQformCode = 252;
constexpr std::size_t kOffSformCode = 254;
constexpr std::size_t kOffQoffset = 268;
constexpr std::size_t kOffSrowX = 280;
constexpr std::size_t kOffSrowY = 296;
constexpr std::size_t kOffSrowZ = 312;
constexpr std::size_t kOffMagic = 344;

constexpr bool kHostLittle = std::endian::native == std::endian::little;

template <typename T>
T load(std::span<const std::byte> buf, std::size_t offset, bool swap) {
  std::array<std::byte, sizeof(T)> raw;
  std::memcpy(raw.data(), buf.data() + offset, sizeof(T));
  if (swap) std::reverse(raw.begin(), raw.end());
  T value;
  std::memcpy(&value, raw.data(), sizeof(T));
  return value;
}

template <typename T>
void store(std::span<std::byte> buf, std::size_t offset, T value, bool swap) {
  std::array<std::byte, sizeof(T)> raw;
  std::memcpy(raw.data(), &value, sizeof(T));
  if (swap) std::reverse(raw.begin(), raw.end());
  std::memcpy(buf.data() + offset, raw.data(), sizeof(T));
}

bool needs_swap(Endian e) { return (e == Endian::Little) != kHostLittle; }

bool is_supported(std::int16_t code) {
  return code == 2 || code == 4 || code == 16 || code == 64;
}

bool has_gzip_magic(std::span<const std::byte> bytes) {
  return bytes.size() >= 2 && bytes[0] == std::byte{0x1F} && bytes[1] == std::byte{0x8B};
}

template <typename T>
void decode_voxels(std::span<const std::byte> src, bool swap, Eigen::ArrayXd& out) {
  for (Index i = 0; i < out.size(); ++i) {
    out[i] = static_cast<double>(load<T>(src, static_cast<std::size_t>(i) * sizeof(T), swap));
  }
}

template <typename T>
void encode_voxels(const Eigen::ArrayXd& values, bool swap, std::span<std::byte> dst) {
  for (Index i = 0; i < values.size(); ++i) {
    const double v = values[i];
    if constexpr (std::is_integral_v<T>) {
      if (v != std::floor(v) || v < std::numeric_limits<T>::min() || v > std::numeric_limits<T>::max()) {
        throw Error(ErrorCode::InvalidArgument, "value not representable in integer datatype");
      }
    }
    store<T>(dst, static_cast<std::size_t>(i) * sizeof(T), static_cast<T>(v), swap);
  }
}

bool ends_with_gz(const std::filesystem::path& path) {
  const std::string s = path.string();
  return s.size() >= 3 && s.compare(s.size() - 3, 3, ".gz") == 0;
}

}  // namespace

int bytes_per_voxel(Datatype dt) {
  switch (dt) {
    case Datatype::UInt8: return 1;
    case Datatype::Int16: return 2;
    case Datatype::Float32: return 4;
    case Datatype::Float64: return 8;
  }
  return 0;
}

Header parse_header(std::span<const std::byte> bytes) {
  if (bytes.size() < kHeaderSize) {
    throw Error(ErrorCode::TruncatedData, "header shorter than 348 bytes");
  }
  bool swap = false;
  if (load<std::int32_t>(bytes, kOffSizeofHdr, false) != 348) {
    if (load<std::int32_t>(bytes, kOffSizeofHdr, true) != 348) {
      throw Error(ErrorCode::EndiannessUndetectable, "sizeof_hdr is not 348 in either byte order");
    }
    swap = true;
  }

  Header h;
  h.endian = (swap != !kHostLittle) ? Endian::Big : Endian::Little;
  std::memcpy(h.magic.data(), bytes.data() + kOffMagic, 4);
  if (!(h.magic[0] == 'n' && h.magic[1] == '+' && h.magic[2] == '1' && h.magic[3] == '\0')) {
    throw Error(ErrorCode::BadMagic, "expected single-file magic \"n+1\"");
  }

  const auto code = load<std::int16_t>(bytes, kOffDatatype, swap);
  if (!is_supported(code)) {
    throw Error(ErrorCode::UnsupportedDatatype, "datatype code " + std::to_string(code));
  }
  h.datatype = static_cast<Datatype>(code);
  h.bitpix = load<std::int16_t>(bytes, kOffBitpix, swap);

  for (std::size_t i = 0; i < 8; ++i) {
    h.dim[i] = load<std::int16_t>(bytes, kOffDim + 2 * i, swap);
    h.pixdim[i] = load<float>(bytes, kOffPixdim + 4 * i, swap);
  }
  if (h.dim[0] == 4) {
    if (h.dim[4] != 1) throw Error(ErrorCode::ShapeError, "4D volumes must have a singleton 4th dimension");
    h.dim[0] = 3;
  } else if (h.dim[0] != 3) {
    throw Error(ErrorCode::ShapeError, "dim[0] must be 3 or 4, got " + std::to_string(h.dim[0]));
  }
  for (int a = 1; a <= 3; ++a) {
    if (h.dim[a] < 1) throw Error(ErrorCode::ShapeError, "non-positive dimension");
    if (!(h.pixdim[a] > 0.0f) || !std::isfinite(h.pixdim[a])) {
      throw Error(ErrorCode::InvalidSpacing, "pixdim[1..3] must be positive");
    }
  }

  h.vox_offset = load<float>(bytes, kOffVoxOffset, swap);
  h.scl_slope = load<float>(bytes, kOffSclSlope, swap);
  h.scl_inter = load<float>(bytes, kOffSclInter, swap);
  h.qform_code = load<std::int16_t>(bytes, kOffQformCode, swap);
  h.sform_code = load<std::int16_t>(bytes, kOffSformCode, swap);
  for (std::size_t i = 0; i < 3; ++i) h.qoffset[i] = load<float>(bytes, kOffQoffset + 4 * i, swap);
  for (std::size_t i = 0; i < 4; ++i) {
    h.srow_x[i] = load<float>(bytes, kOffSrowX + 4 * i, swap);
    h.srow_y[i] = load<float>(bytes, kOffSrowY + 4 * i, swap);
    h.srow_z[i] = load<float>(bytes, kOffSrowZ + 4 * i, swap);
  }
  return h;
}

std::vector<std::byte> encode_header(const Header& h) {
  std::vector<std::byte> buf(kHeaderSize, std::byte{0});
  const bool swap = needs_swap(h.endian);
  store<std::int32_t>(buf, kOffSizeofHdr, 348, swap);
  for (std::size_t i = 0; i < 8; ++i) {
    store<std::int16_t>(buf, kOffDim + 2 * i, h.dim[i], swap);
    store<float>(buf, kOffPixdim + 4 * i, h.pixdim[i], swap);
  }
  store<std::int16_t>(buf, kOffDatatype, static_cast<std::int16_t>(h.datatype), swap);
  store<std::int16_t>(buf, kOffBitpix, h.bitpix, swap);
  store<float>(buf, kOffVoxOffset, h.vox_offset, swap);
  store<float>(buf, kOffSclSlope, h.scl_slope, swap);
  store<float>(buf, kOffSclInter, h.scl_inter, swap);
  buf[kOffXyztUnits] = std::byte{2};  // NIFTI_UNITS_MM
  store<std::int16_t>(buf, kOffQformCode, h.qform_code, swap);
  store<std::int16_t>(buf, kOffSformCode, h.sform_code, swap);
  for (std::size_t i = 0; i < 3; ++i) store<float>(buf, kOffQoffset + 4 * i, h.qoffset[i], swap);
  for (std::size_t i = 0; i < 4; ++i) {
    store<float>(buf, kOffSrowX + 4 * i, h.srow_x[i], swap);
    store<float>(buf, kOffSrowY + 4 * i, h.srow_y[i], swap);
    store<float>(buf, kOffSrowZ + 4 * i, h.srow_z[i], swap);
  }
  std::memcpy(buf.data() + kOffMagic, h.magic.data(), 4);
  return buf;
}

std::vector<std::byte> gzip_decompress(std::span<const std::byte> compressed) {
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 32) != Z_OK) throw Error(ErrorCode::DecompressFailure, "inflateInit2 failed");
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<std::byte*>(compressed.data()));
  zs.avail_in = static_cast<uInt>(compressed.size());

  std::vector<std::byte> out;
  std::array<std::byte, 1 << 16> chunk;
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = reinterpret_cast<Bytef*>(chunk.data());
    zs.avail_out = static_cast<uInt>(chunk.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw Error(ErrorCode::DecompressFailure, zs.msg ? zs.msg : "corrupt or truncated gzip stream");
    }
    out.insert(out.end(), chunk.begin(), chunk.begin() + (chunk.size() - zs.avail_out));
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw Error(ErrorCode::DecompressFailure, "gzip stream ended early");
    }
  }
  inflateEnd(&zs);
  return out;
}

std::vector<std::byte> gzip_compress(std::span<const std::byte> raw) {
  z_stream zs{};
  if (deflateInit2(&zs, 6, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
    throw Error(ErrorCode::IoFailure, "deflateInit2 failed");
  }
  std::vector<std::byte> out(deflateBound(&zs, static_cast<uLong>(raw.size())));
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<std::byte*>(raw.data()));
  zs.avail_in = static_cast<uInt>(raw.size());
  zs.next_out = reinterpret_cast<Bytef*>(out.data());
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&zs, Z_FINISH);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw Error(ErrorCode::IoFailure, "deflate failed");
  out.resize(zs.total_out);
  return out;
}

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> bytes(raw.size());
  std::memcpy(bytes.data(), raw.data(), raw.size());
  if (has_gzip_magic(bytes)) return gzip_decompress(bytes);
  return bytes;
}

Header read_header(const std::filesystem::path& path) { return parse_header(read_file_bytes(path)); }

Volume3D read_volume(const std::filesystem::path& path, std::optional<VolumeKind> kind) {
  const std::vector<std::byte> bytes = read_file_bytes(path);
  const Header h = parse_header(bytes);

  const Index count = h.voxel_count();
  const auto offset = static_cast<std::size_t>(h.vox_offset);
  const std::size_t needed = static_cast<std::size_t>(count) * bytes_per_voxel(h.datatype);
  if (h.vox_offset < static_cast<float>(kHeaderSize) || bytes.size() < offset + needed) {
    throw Error(ErrorCode::TruncatedData, "file holds fewer voxel bytes than its shape requires");
  }

  const std::span<const std::byte> payload(bytes.data() + offset, needed);
  const bool swap = needs_swap(h.endian);
  Eigen::ArrayXd values(count);
  switch (h.datatype) {
    case Datatype::UInt8: decode_voxels<std::uint8_t>(payload, swap, values); break;
    case Datatype::Int16: decode_voxels<std::int16_t>(payload, swap, values); break;
    case Datatype::Float32: decode_voxels<float>(payload, swap, values); break;
    case Datatype::Float64: decode_voxels<double>(payload, swap, values); break;
  }
  if (h.scl_slope != 0.0f && std::isfinite(h.scl_slope)) {
    values = values * static_cast<double>(h.scl_slope) + static_cast<double>(h.scl_inter);
  }

  VolumeKind resolved;
  if (kind) {
    resolved = *kind;
  } else if (h.datatype == Datatype::Float32 || h.datatype == Datatype::Float64) {
    resolved = VolumeKind::PetSuv;
  } else {
    const bool integral = (values == values.floor()).all();
    resolved = (integral && values.minCoeff() >= 0.0) ? VolumeKind::Label : VolumeKind::CtHu;
  }

  Volume3D vol(h.shape(), h.spacing(), resolved, std::move(values));
  if (h.sform_code > 0) {
    vol.set_origin(Vec3(h.srow_x[3], h.srow_y[3], h.srow_z[3]));
  } else if (h.qform_code > 0) {
    vol.set_origin(Vec3(h.qoffset[0], h.qoffset[1], h.qoffset[2]));
  }
  return vol;
}

Datatype default_datatype(const Volume3D& vol) {
  if (vol.kind() != VolumeKind::Label) return Datatype::Float32;
  const double max_label = vol.size() > 0 ? vol.data().maxCoeff() : 0.0;
  if (max_label > 32767.0) {
    throw Error(ErrorCode::LabelOverflow, "label " + std::to_string(max_label) + " exceeds int16 range");
  }
  return max_label <= 255.0 ? Datatype::UInt8 : Datatype::Int16;
}

void write_volume(const Volume3D& vol, const std::filesystem::path& path, const WriteOptions& options) {
  const Datatype dt = options.datatype ? *options.datatype : default_datatype(vol);
  if (vol.kind() == VolumeKind::Label && vol.size() > 0 && vol.data().maxCoeff() > 32767.0) {
    throw Error(ErrorCode::LabelOverflow, "label exceeds int16 range");
  }
  if ((vol.shape() > std::numeric_limits<std::int16_t>::max()).any()) {
    throw Error(ErrorCode::ShapeError, "NIfTI-1 dimensions are limited to 32767");
  }

  Header h;
  h.dim = {3, static_cast<std::int16_t>(vol.nx()), static_cast<std::int16_t>(vol.ny()),
           static_cast<std::int16_t>(vol.nz()), 1, 1, 1, 1};
  h.datatype = dt;
  h.bitpix = static_cast<std::int16_t>(8 * bytes_per_voxel(dt));
  h.pixdim = {1.0f, static_cast<float>(vol.spacing()[0]), static_cast<float>(vol.spacing()[1]),
              static_cast<float>(vol.spacing()[2]), 0.0f, 0.0f, 0.0f, 0.0f};
  h.endian = options.endian;
  h.sform_code = 1;
  h.srow_x = {h.pixdim[1], 0.0f, 0.0f, static_cast<float>(vol.origin()[0])};
  h.srow_y = {0.0f, h.pixdim[2], 0.0f, static_cast<float>(vol.origin()[1])};
  h.srow_z = {0.0f, 0.0f, h.pixdim[3], static_cast<float>(vol.origin()[2])};

  std::vector<std::byte> file = encode_header(h);
  file.resize(kDefaultVoxOffset, std::byte{0});  // 4-byte empty extension block
  const std::size_t payload = static_cast<std::size_t>(vol.size()) * bytes_per_voxel(dt);
  file.resize(kDefaultVoxOffset + payload);
  const std::span<std::byte> dst(file.data() + kDefaultVoxOffset, payload);
  const bool swap = needs_swap(options.endian);
  switch (dt) {
    case Datatype::UInt8: encode_voxels<std::uint8_t>(vol.data(), swap, dst); break;
    case Datatype::Int16: encode_voxels<std::int16_t>(vol.data(), swap, dst); break;
    case Datatype::Float32: encode_voxels<float>(vol.data(), swap, dst); break;
    case Datatype::Float64: encode_voxels<double>(vol.data(), swap, dst); break;
  }

  const bool gz = options.gzip.value_or(ends_with_gz(path));
  if (gz) file = gzip_compress(file);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(file.data()), static_cast<std::streamsize>(file.size()));
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

}  // namespace petseg::nifti
