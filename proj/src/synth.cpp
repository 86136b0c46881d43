#include "petseg/synth.hpp"

#include <cmath>
#include <fstream>
#include <future>

#include "json.hpp"
#include "petseg/nifti.hpp"
#include "petseg/preprocess.hpp"
#include "petseg/random.hpp"

namespace petseg::synth {
namespace {

constexpr double kShellInner = 0.8;
constexpr double kShellOuter = 0.9;
constexpr double kBoxSigmas = 4.0;

std::string case_name(int i) {
  std::string digits = std::to_string(i);
  return "case_" + std::string(digits.size() < 4 ? 4 - digits.size() : 0, '0') + digits;
}

// Adds the Gaussian profile within a 4-sigma box; marks d <= radius in `inside`.
void splat(Volume3D& pet, const Hotspot& h, BinaryMask* inside) {
  const double sigma = h.radius_mm / std::sqrt(2.0 * std::log(2.0));
  const double reach = kBoxSigmas * sigma;
  const Vec3& s = pet.spacing();
  Index lo[3];
  Index hi[3];
  for (int a = 0; a < 3; ++a) {
    lo[a] = std::max<Index>(0, static_cast<Index>(std::floor((h.center_mm[a] - reach) / s[a])));
    hi[a] = std::min<Index>(pet.shape()[a] - 1, static_cast<Index>(std::ceil((h.center_mm[a] + reach) / s[a])));
  }
  const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
  const double r2 = h.radius_mm * h.radius_mm;
  for (Index z = lo[2]; z <= hi[2]; ++z) {
    const double dz = static_cast<double>(z) * s[2] - h.center_mm[2];
    for (Index y = lo[1]; y <= hi[1]; ++y) {
      const double dy = static_cast<double>(y) * s[1] - h.center_mm[1];
      for (Index x = lo[0]; x <= hi[0]; ++x) {
        const double dx = static_cast<double>(x) * s[0] - h.center_mm[0];
        const double d2 = dx * dx + dy * dy + dz * dz;
        pet(x, y, z) += h.peak_suv * std::exp(-d2 * inv_two_var);
        if (inside && d2 <= r2) (*inside)(x, y, z) = 1;
      }
    }
  }
}

Hotspot style_hotspot(const PhantomSpec& spec, Rng& rng) {
  const Vec3 c = spec.center_mm();
  const Vec3 a = spec.semi_axes_mm();
  Hotspot h;
  h.lesion = false;
  h.peak_suv = rng.uniform(8.0, 12.0);
  h.radius_mm = std::max(2.0 * spec.spacing.maxCoeff(), 0.12 * a[0]);
  const double dz = spec.style == TracerStyle::FdgLike ? 0.8 * a[2] : -0.72 * a[2];
  h.center_mm = Vec3(c[0], c[1], c[2] + dz);
  return h;
}

nifti::WriteOptions typed(nifti::Datatype datatype) {
  nifti::WriteOptions options;
  options.datatype = datatype;
  return options;
}

}  // namespace

Tracer tracer_of(TracerStyle style) { return style == TracerStyle::FdgLike ? Tracer::Fdg : Tracer::Psma; }

Vec3 PhantomSpec::semi_axes_mm() const {
  if (body_semi_axes_mm) return *body_semi_axes_mm;
  const Vec3 e = extent_mm();
  return Vec3(0.42 * e[0], 0.40 * e[1], 0.48 * e[2]);
}

Phantom make_phantom(const PhantomSpec& spec) {
  Rng rng(spec.seed);
  const double background = spec.background_suv.value_or(rng.uniform(0.5, 1.5));
  const Vec3 center = spec.center_mm();
  const Vec3 axes = spec.semi_axes_mm();
  if ((axes.array() <= 0.0).any()) throw Error(ErrorCode::InvalidArgument, "body semi-axes must be positive");

  std::vector<Hotspot> hotspots = spec.hotspots;
  std::optional<std::size_t> style_index;
  if (spec.add_style_hotspot) {
    style_index = hotspots.size();
    hotspots.push_back(style_hotspot(spec, rng));
  }
  const Vec3 extent = spec.extent_mm();
  for (const Hotspot& h : hotspots) {
    if ((h.center_mm.array() < 0.0).any() || (h.center_mm.array() > extent.array()).any()) {
      throw Error(ErrorCode::HotspotOutOfBounds, "hotspot center outside the volume");
    }
    if (!(h.radius_mm > 0.0)) throw Error(ErrorCode::InvalidArgument, "hotspot radius must be positive");
  }

  Phantom out{Volume3D(spec.shape, spec.spacing, VolumeKind::PetSuv, 0.0),
              Volume3D(spec.shape, spec.spacing, VolumeKind::CtHu, kAirHu),
              BinaryMask(spec.shape, spec.spacing, VolumeKind::Label, 0),
              BinaryMask(spec.shape, spec.spacing, VolumeKind::Label, 0),
              BinaryMask(spec.shape, spec.spacing, VolumeKind::Label, 0),
              std::nullopt,
              std::nullopt,
              tracer_of(spec.style)};

  for (Index z = 0; z < spec.shape[2]; ++z) {
    for (Index y = 0; y < spec.shape[1]; ++y) {
      for (Index x = 0; x < spec.shape[0]; ++x) {
        const Vec3 p(static_cast<double>(x) * spec.spacing[0], static_cast<double>(y) * spec.spacing[1],
                     static_cast<double>(z) * spec.spacing[2]);
        const double r = ((p - center).array() / axes.array()).matrix().norm();
        if (r > 1.0) continue;
        out.body(x, y, z) = 1;
        out.pet(x, y, z) = background;
        const bool shell = r >= kShellInner && r <= kShellOuter;
        out.ct(x, y, z) = shell ? kBoneHu : kSoftTissueHu;
        if (shell) out.skeleton(x, y, z) = 1;
      }
    }
  }

  for (std::size_t k = 0; k < hotspots.size(); ++k) {
    const Hotspot& h = hotspots[k];
    if (style_index && k == *style_index) {
      BinaryMask organ(spec.shape, spec.spacing, VolumeKind::Label, 0);
      splat(out.pet, h, &organ);
      (spec.style == TracerStyle::FdgLike ? out.brain : out.bladder) = std::move(organ);
    } else {
      splat(out.pet, h, h.lesion ? &out.lesion_gt : nullptr);
    }
  }

  if (spec.noise_sigma > 0.0) {
    Rng noise(derive_seed(spec.seed, 1));
    auto& v = out.pet.data();
    for (Index i = 0; i < v.size(); ++i) {
      if (!out.body.data()[i]) continue;
      v[i] = std::max(0.0, v[i] + spec.noise_sigma * noise.normal());
    }
  }
  return out;
}

PhantomSpec random_phantom_spec(TracerStyle style, std::uint64_t seed, const Shape3& shape, const Vec3& spacing,
                                double noise_sigma) {
  Rng rng(derive_seed(seed, 2));
  PhantomSpec spec;
  spec.shape = shape;
  spec.spacing = spacing;
  spec.style = style;
  spec.noise_sigma = noise_sigma;
  spec.seed = seed;
  const Vec3 base = spec.semi_axes_mm();
  spec.body_semi_axes_mm = Vec3(base[0] * rng.uniform(0.9, 1.0), base[1] * rng.uniform(0.9, 1.0),
                                base[2] * rng.uniform(0.92, 1.0));
  const Vec3 c = spec.center_mm();
  const Vec3 a = *spec.body_semi_axes_mm;
  const auto lesions = static_cast<int>(rng.below(5));
  for (int k = 0; k < lesions; ++k) {
    Hotspot h;
    // Kept in the trunk, clear of the style hotspots.
    h.center_mm = Vec3(c[0] + rng.uniform(-0.5, 0.5) * a[0], c[1] + rng.uniform(-0.5, 0.5) * a[1],
                       c[2] + rng.uniform(-0.45, 0.45) * a[2]);
    h.radius_mm = rng.uniform(1.5, 3.5) * spacing.maxCoeff();
    h.peak_suv = rng.uniform(3.0, 7.0);
    spec.hotspots.push_back(h);
  }
  return spec;
}

std::vector<LabeledMip> make_mip_dataset(int n, std::uint64_t seed, int jobs) {
  if (n < 2) throw Error(ErrorCode::TooFewSamples, "dataset needs at least 2 items");
  std::vector<LabeledMip> items(static_cast<std::size_t>(n));
  auto build = [&](int i) {
    const TracerStyle style = i % 2 == 0 ? TracerStyle::FdgLike : TracerStyle::PsmaLike;
    const Phantom ph = make_phantom(random_phantom_spec(style, derive_seed(seed, static_cast<std::uint64_t>(i))));
    LabeledMip& item = items[static_cast<std::size_t>(i)];
    item.image = make_mip(ph.pet);
    item.label = ph.tracer;
    item.case_id = case_name(i);
  };
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) build(i);
    return items;
  }
  std::vector<std::future<void>> workers;
  for (int w = 0; w < jobs; ++w) {
    workers.push_back(std::async(std::launch::async, [&, w] {
      for (int i = w; i < n; i += jobs) build(i);
    }));
  }
  for (auto& f : workers) f.get();
  return items;
}

std::vector<CorpusCase> write_corpus(const std::filesystem::path& dir, const CorpusOptions& options) {
  namespace fs = std::filesystem;
  if (options.n < 1) throw Error(ErrorCode::InvalidArgument, "corpus needs at least one case");
  for (const char* sub : {"ct", "pet", "lesion", "mip", "organs", "fusion"}) fs::create_directories(dir / sub);

  std::vector<CorpusCase> cases(static_cast<std::size_t>(options.n));
  auto build = [&](int i) {
    const std::string id = case_name(i);
    const TracerStyle style = i % 2 == 0 ? TracerStyle::FdgLike : TracerStyle::PsmaLike;
    const Phantom ph = make_phantom(random_phantom_spec(style, derive_seed(options.seed, static_cast<std::uint64_t>(i)),
                                                        options.shape, options.spacing, options.noise_sigma));
    nifti::write_volume(ph.ct, dir / "ct" / (id + ".nii.gz"), typed(nifti::Datatype::Int16));
    nifti::write_volume(ph.pet, dir / "pet" / (id + ".nii.gz"), typed(nifti::Datatype::Float32));
    nifti::write_volume(ph.lesion_gt, dir / "lesion" / (id + ".nii.gz"), typed(nifti::Datatype::UInt8));

    const MipImage mip = make_mip(ph.pet);
    Volume3D mip_vol(Shape3(kMipSize, 1, kMipSize), Vec3(mip.source_spacing[0], 1.0, mip.source_spacing[1]),
                     VolumeKind::Probability, 0.0);
    for (Index z = 0; z < kMipSize; ++z) {
      for (Index x = 0; x < kMipSize; ++x) mip_vol(x, 0, z) = mip.pixels(x, z);
    }
    nifti::write_volume(mip_vol, dir / "mip" / (id + ".nii"), typed(nifti::Datatype::Float32));

    const fs::path organ_dir = dir / "organs" / id;
    fs::create_directories(organ_dir);
    nlohmann::json organs = nlohmann::json::object();
    auto add_organ = [&](const std::string& name, const BinaryMask& mask) {
      nifti::write_volume(mask, organ_dir / (name + ".nii.gz"), typed(nifti::Datatype::UInt8));
      organs[name] = "../organs/" + id + "/" + name + ".nii.gz";
    };
    add_organ("skeleton", ph.skeleton);
    if (ph.brain) add_organ("brain", *ph.brain);
    if (ph.bladder) add_organ("urinary_bladder", *ph.bladder);
    const nlohmann::json fusion = {
        {"case_id", id}, {"lesion_path", "../lesion/" + id + ".nii.gz"}, {"organs", organs}};
    std::ofstream(dir / "fusion" / (id + ".json")) << fusion.dump(2) << '\n';
    cases[static_cast<std::size_t>(i)] = {id, ph.tracer};
  };

  const int jobs = std::max(1, std::min(options.jobs, options.n));
  if (jobs == 1) {
    for (int i = 0; i < options.n; ++i) build(i);
  } else {
    std::vector<std::future<void>> workers;
    for (int w = 0; w < jobs; ++w) {
      workers.push_back(std::async(std::launch::async, [&, w] {
        for (int i = w; i < options.n; i += jobs) build(i);
      }));
    }
    for (auto& f : workers) f.get();
  }

  nlohmann::json mips = nlohmann::json::array();
  nlohmann::json listing = nlohmann::json::array();
  for (const CorpusCase& c : cases) {
    mips.push_back({{"case_id", c.case_id}, {"label", std::string(to_string(c.tracer))},
                    {"mip_path", "mip/" + c.case_id + ".nii"}});
    listing.push_back({{"case_id", c.case_id},
                       {"tracer", std::string(to_string(c.tracer))},
                       {"ct", "ct/" + c.case_id + ".nii.gz"},
                       {"pet", "pet/" + c.case_id + ".nii.gz"},
                       {"lesion", "lesion/" + c.case_id + ".nii.gz"},
                       {"fusion_manifest", "fusion/" + c.case_id + ".json"}});
  }
  std::ofstream(dir / "mip_manifest.json") << mips.dump(2) << '\n';
  std::ofstream(dir / "cases.json") << listing.dump(2) << '\n';
  return cases;
}

}  // namespace petseg::synth
