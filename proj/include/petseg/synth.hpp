#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "petseg/discriminator.hpp"
#include "petseg/volume.hpp"

namespace petseg::synth {

enum class TracerStyle { FdgLike, PsmaLike };

Tracer tracer_of(TracerStyle style);

/// Gaussian uptake blob; `radius_mm` is where the profile falls to half peak.
struct Hotspot {
  Vec3 center_mm = Vec3::Zero();
  double radius_mm = 10.0;
  double peak_suv = 5.0;  // added on top of the background
  bool lesion = true;
};

/// Positions are voxel index times spacing (origin at voxel 0).
struct PhantomSpec {
  Shape3 shape = Shape3(64, 48, 96);
  Vec3 spacing = Vec3::Constant(4.0);
  std::optional<Vec3> body_center_mm;  // default: volume center
  std::optional<Vec3> body_semi_axes_mm;  // default: 0.42, 0.40, 0.48 of the extent
  std::optional<double> background_suv;  // default: drawn from [0.5, 1.5]
  std::vector<Hotspot> hotspots;
  TracerStyle style = TracerStyle::PsmaLike;
  bool add_style_hotspot = true;  // brain for FDG_LIKE, bladder for PSMA_LIKE
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  Vec3 extent_mm() const { return (shape.cast<double>() - 1.0).matrix().cwiseProduct(spacing); }
  Vec3 center_mm() const { return body_center_mm.value_or(0.5 * extent_mm()); }
  Vec3 semi_axes_mm() const;
};

struct Phantom {
  Volume3D pet;
  Volume3D ct;
  BinaryMask lesion_gt;
  BinaryMask body;
  BinaryMask skeleton;
  std::optional<BinaryMask> brain;    // FDG_LIKE style hotspot
  std::optional<BinaryMask> bladder;  // PSMA_LIKE style hotspot
  Tracer tracer = Tracer::Psma;
};

inline constexpr double kSoftTissueHu = 40.0;
inline constexpr double kBoneHu = 700.0;
inline constexpr double kAirHu = -1000.0;

/// Throws HotspotOutOfBounds when a hotspot center lies outside the volume.
Phantom make_phantom(const PhantomSpec& spec);

/// Randomized body, style hotspot and 0-4 lesions peaking at 3-7 SUV.
PhantomSpec random_phantom_spec(TracerStyle style, std::uint64_t seed, const Shape3& shape = Shape3(64, 48, 96),
                                const Vec3& spacing = Vec3::Constant(4.0), double noise_sigma = 0.1);

/// Item i is FDG_LIKE for even i, PSMA_LIKE for odd i; seeds derived per item.
std::vector<LabeledMip> make_mip_dataset(int n, std::uint64_t seed, int jobs = 1);

struct CorpusOptions {
  int n = 10;
  std::uint64_t seed = 42;
  int jobs = 1;
  Shape3 shape = Shape3(64, 48, 96);
  Vec3 spacing = Vec3::Constant(4.0);
  double noise_sigma = 0.1;
};

struct CorpusCase {
  std::string case_id;
  Tracer tracer = Tracer::Fdg;
};

/// Writes ct/, pet/, lesion/, mip/, organs/<case>/ and fusion/<case>.json
/// under `dir`, plus mip_manifest.json and cases.json.
std::vector<CorpusCase> write_corpus(const std::filesystem::path& dir, const CorpusOptions& options);

}  // namespace petseg::synth
