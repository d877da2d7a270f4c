#pragma once

#include <string>
#include <vector>

#include "image_io.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace hamlet {

struct SampleRecord {
    std::string path;      // absolute after manifest resolution
    int label = 0;         // 0 = real, 1 = fake
    std::string video_id;  // optional grouping for video-level metrics
    std::string domain;    // manipulation-family tag ("real" for pristine)
};

/// JSON-lines manifest. Relative record paths are resolved against the
/// manifest's directory; parse failures report the 1-based line number.
std::vector<SampleRecord> load_manifest(const std::string& path);
void save_manifest(const std::string& path, const std::vector<SampleRecord>& records);

enum class PerturbationKind {
    saturation,
    contrast,
    gaussian_blur,
    gaussian_noise,
    block_occlusion,
    pixelation
};

constexpr int kPerturbationKinds = 6;
PerturbationKind perturbation_kind_from_string(const std::string& s);
std::string to_string(PerturbationKind k);

struct Perturbation {
    PerturbationKind kind = PerturbationKind::saturation;
    int severity = 0;  // 0..5; 0 is the identity for every kind
};

/// Severity-parameterized corruption; severity 0 returns the input tensor
/// itself. Randomized kinds (noise, occlusion) draw from rng.
Tensor perturb(const Tensor& image, const Perturbation& p, Rng& rng);

enum class SynthFamily { patch_swap, hf_noise_blob, warp_band, blend_seam };
SynthFamily synth_family_from_string(const std::string& s);
std::string to_string(SynthFamily f);

struct SynthSpec {
    SynthFamily family = SynthFamily::patch_swap;
    std::size_t image_size = 32;
    std::size_t samples_per_class = 200;  // frames per class
    std::size_t frames_per_video = 8;
    std::uint64_t seed = 0;
};

/// Writes paired real/fake PPM frames plus a manifest named <name>.jsonl under
/// out_dir. Reals are smooth seeded fields with a face-like ellipse layout;
/// each fake is its paired real with the family's manipulation applied inside
/// a per-video region. Returns the manifest path.
std::string synthesize_dataset(const SynthSpec& spec, const std::string& out_dir,
                               const std::string& name);

struct PreprocessConfig {
    std::size_t image_size = 32;
    double mean[3] = {0.5, 0.5, 0.5};
    double stddev[3] = {0.5, 0.5, 0.5};
};

/// Bilinear resize to the configured size, then per-channel standardization.
Tensor preprocess(const Tensor& image, const PreprocessConfig& cfg);

}  // namespace hamlet
