#include "data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hamlet {

std::vector<SampleRecord> load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest: " + path);
    const fs::path base = fs::path(path).parent_path();
    std::vector<SampleRecord> records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError("manifest line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!obj.is_object())
            throw DataError("manifest line " + std::to_string(lineno) + ": not a JSON object");
        SampleRecord rec;
        if (!obj.contains("path") || !obj["path"].is_string())
            throw DataError("manifest line " + std::to_string(lineno) + ": missing path");
        rec.path = obj["path"].get<std::string>();
        if (!obj.contains("label") || !obj["label"].is_number_integer())
            throw DataError("manifest line " + std::to_string(lineno) + ": missing label");
        rec.label = obj["label"].get<int>();
        if (rec.label != 0 && rec.label != 1)
            throw DataError("manifest line " + std::to_string(lineno) + ": label must be 0 or 1");
        if (obj.contains("video_id") && obj["video_id"].is_string())
            rec.video_id = obj["video_id"].get<std::string>();
        if (obj.contains("domain") && obj["domain"].is_string())
            rec.domain = obj["domain"].get<std::string>();
        if (fs::path(rec.path).is_relative()) rec.path = (base / rec.path).string();
        records.push_back(std::move(rec));
    }
    return records;
}

void save_manifest(const std::string& path, const std::vector<SampleRecord>& records) {
    std::ostringstream out;
    for (const auto& rec : records) {
        json obj{{"path", rec.path}, {"label", rec.label}};
        if (!rec.video_id.empty()) obj["video_id"] = rec.video_id;
        if (!rec.domain.empty()) obj["domain"] = rec.domain;
        out << obj.dump() << "\n";
    }
    write_file(path, out.str());
}

PerturbationKind perturbation_kind_from_string(const std::string& s) {
    if (s == "saturation") return PerturbationKind::saturation;
    if (s == "contrast") return PerturbationKind::contrast;
    if (s == "gaussian_blur") return PerturbationKind::gaussian_blur;
    if (s == "gaussian_noise") return PerturbationKind::gaussian_noise;
    if (s == "block_occlusion") return PerturbationKind::block_occlusion;
    if (s == "pixelation") return PerturbationKind::pixelation;
    throw ConfigError("unknown perturbation kind '" + s + "'");
}

std::string to_string(PerturbationKind k) {
    switch (k) {
        case PerturbationKind::saturation: return "saturation";
        case PerturbationKind::contrast: return "contrast";
        case PerturbationKind::gaussian_blur: return "gaussian_blur";
        case PerturbationKind::gaussian_noise: return "gaussian_noise";
        case PerturbationKind::block_occlusion: return "block_occlusion";
        case PerturbationKind::pixelation: return "pixelation";
    }
    return "?";
}

namespace {

constexpr double kScaleFactors[6] = {1.0, 0.9, 0.75, 0.6, 0.45, 0.3};
constexpr double kBlurSigma[6] = {0.0, 0.5, 1.0, 2.0, 3.0, 4.0};
constexpr double kNoiseSigma[6] = {0.0, 0.02, 0.04, 0.08, 0.12, 0.16};
constexpr int kOcclusionBlocks[6] = {0, 1, 2, 4, 6, 8};
constexpr int kPixelationFactor[6] = {1, 1, 2, 4, 8, 16};

std::vector<double> clamp01(std::vector<double> v) {
    for (double& x : v) x = std::clamp(x, 0.0, 1.0);
    return v;
}

Tensor apply_saturation(const Tensor& img, double f) {
    const std::size_t hw = img.size(1) * img.size(2);
    const auto& in = img.data();
    std::vector<double> out(in.size());
    for (std::size_t i = 0; i < hw; ++i) {
        const double gray = 0.299 * in[i] + 0.587 * in[hw + i] + 0.114 * in[2 * hw + i];
        for (std::size_t c = 0; c < 3; ++c) out[c * hw + i] = gray + f * (in[c * hw + i] - gray);
    }
    return Tensor::from_data(img.shape(), clamp01(std::move(out)));
}

Tensor apply_contrast(const Tensor& img, double f) {
    const auto& in = img.data();
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= static_cast<double>(in.size());
    std::vector<double> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = mean + f * (in[i] - mean);
    return Tensor::from_data(img.shape(), clamp01(std::move(out)));
}

Tensor apply_blur(const Tensor& img, double sigma) {
    const std::size_t h = img.size(1), w = img.size(2);
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(2 * radius + 1);
    double norm = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        norm += kernel[i + radius];
    }
    for (double& k : kernel) k /= norm;
    const auto& in = img.data();
    std::vector<double> tmp(in.size()), out(in.size());
    auto clampi = [](long v, long hi) { return std::clamp(v, 0L, hi); };
    for (std::size_t c = 0; c < 3; ++c) {
        const double* plane = in.data() + c * h * w;
        double* t = tmp.data() + c * h * w;
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    acc += kernel[i + radius] *
                           plane[y * w + clampi(static_cast<long>(x) + i, static_cast<long>(w) - 1)];
                t[y * w + x] = acc;
            }
        double* o = out.data() + c * h * w;
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    acc += kernel[i + radius] *
                           t[clampi(static_cast<long>(y) + i, static_cast<long>(h) - 1) * w + x];
                o[y * w + x] = acc;
            }
    }
    return Tensor::from_data(img.shape(), clamp01(std::move(out)));
}

Tensor apply_noise(const Tensor& img, double sigma, Rng& rng) {
    const auto& in = img.data();
    std::vector<double> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] + sigma * rng.normal();
    return Tensor::from_data(img.shape(), clamp01(std::move(out)));
}

Tensor apply_occlusion(const Tensor& img, int blocks, Rng& rng) {
    const std::size_t h = img.size(1), w = img.size(2), hw = h * w;
    const std::size_t bs = 8;
    std::vector<double> out = img.data();
    for (int b = 0; b < blocks; ++b) {
        const std::size_t y0 = h > bs ? rng.below(h - bs + 1) : 0;
        const std::size_t x0 = w > bs ? rng.below(w - bs + 1) : 0;
        for (std::size_t y = y0; y < std::min(h, y0 + bs); ++y)
            for (std::size_t x = x0; x < std::min(w, x0 + bs); ++x)
                for (std::size_t c = 0; c < 3; ++c) out[c * hw + y * w + x] = 0.5;
    }
    return Tensor::from_data(img.shape(), std::move(out));
}

Tensor apply_pixelation(const Tensor& img, int factor) {
    const std::size_t h = img.size(1), w = img.size(2), hw = h * w;
    const std::size_t f = static_cast<std::size_t>(factor);
    const auto& in = img.data();
    std::vector<double> out(in.size());
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y0 = 0; y0 < h; y0 += f)
            for (std::size_t x0 = 0; x0 < w; x0 += f) {
                const std::size_t y1 = std::min(h, y0 + f), x1 = std::min(w, x0 + f);
                double acc = 0.0;
                for (std::size_t y = y0; y < y1; ++y)
                    for (std::size_t x = x0; x < x1; ++x) acc += in[c * hw + y * w + x];
                acc /= static_cast<double>((y1 - y0) * (x1 - x0));
                for (std::size_t y = y0; y < y1; ++y)
                    for (std::size_t x = x0; x < x1; ++x) out[c * hw + y * w + x] = acc;
            }
    return Tensor::from_data(img.shape(), std::move(out));
}

}  // namespace

Tensor perturb(const Tensor& image, const Perturbation& p, Rng& rng) {
    if (image.ndim() != 3 || image.size(0) != 3)
        throw DataError("perturb: expected a [3,H,W] image");
    if (p.severity < 0 || p.severity > 5)
        throw ConfigError("perturb: severity must be in 0..5");
    if (p.severity == 0) return image;
    switch (p.kind) {
        case PerturbationKind::saturation: return apply_saturation(image, kScaleFactors[p.severity]);
        case PerturbationKind::contrast: return apply_contrast(image, kScaleFactors[p.severity]);
        case PerturbationKind::gaussian_blur: return apply_blur(image, kBlurSigma[p.severity]);
        case PerturbationKind::gaussian_noise:
            return apply_noise(image, kNoiseSigma[p.severity], rng);
        case PerturbationKind::block_occlusion:
            return apply_occlusion(image, kOcclusionBlocks[p.severity], rng);
        case PerturbationKind::pixelation:
            if (kPixelationFactor[p.severity] == 1) return image;
            return apply_pixelation(image, kPixelationFactor[p.severity]);
    }
    throw ConfigError("perturb: unknown kind");
}

SynthFamily synth_family_from_string(const std::string& s) {
    if (s == "patch_swap") return SynthFamily::patch_swap;
    if (s == "hf_noise_blob") return SynthFamily::hf_noise_blob;
    if (s == "warp_band") return SynthFamily::warp_band;
    if (s == "blend_seam") return SynthFamily::blend_seam;
    throw ConfigError("unknown synth family '" + s + "'");
}

std::string to_string(SynthFamily f) {
    switch (f) {
        case SynthFamily::patch_swap: return "patch_swap";
        case SynthFamily::hf_noise_blob: return "hf_noise_blob";
        case SynthFamily::warp_band: return "warp_band";
        case SynthFamily::blend_seam: return "blend_seam";
    }
    return "?";
}

namespace {

struct VideoLayout {
    // background field
    double c0[3], c1[3], dirx, diry, freq, phase;
    // face ellipse
    double cx, cy, rx, ry, face[3];
};

// Per-frame manipulation placement: the artifact kind is the video's class,
// but its location moves frame to frame, so detectors cannot bind to a spot.
struct ManipRegion {
    std::size_t p1x, p1y, p2x, p2y;  // patch_swap corners
    double blob_cx, blob_cy, blob_r;
    std::size_t band_y0, band_h;
    double band_phase, band_amp;
    std::size_t seam_x0, seam_y0, seam_w, seam_h;
    long seam_sx, seam_sy;
};

VideoLayout draw_video_layout(Rng vrng, std::size_t s) {
    VideoLayout v{};
    // muted background palette; the bright face is the high-contrast subject,
    // so face-targeted manipulations carry real content contrast
    for (int c = 0; c < 3; ++c) v.c0[c] = vrng.uniform(0.30, 0.60);
    for (int c = 0; c < 3; ++c) v.c1[c] = vrng.uniform(0.30, 0.60);
    const double theta = vrng.uniform(0.0, 3.14159265358979323846);
    v.dirx = std::cos(theta);
    v.diry = std::sin(theta);
    v.freq = vrng.uniform(0.5, 1.2);
    v.phase = vrng.uniform(0.0, 6.28318530717958647692);
    const double sd = static_cast<double>(s);
    v.cx = vrng.uniform(0.45, 0.55) * sd;
    v.cy = vrng.uniform(0.45, 0.55) * sd;
    v.rx = vrng.uniform(0.24, 0.30) * sd;
    v.ry = vrng.uniform(0.29, 0.35) * sd;
    for (int c = 0; c < 3; ++c) v.face[c] = vrng.uniform(0.70, 0.85);
    return v;
}

// Manipulations target the face: one patch-swap block sits on the face and
// the other in the background, the noise blob and warp band cover face rows,
// and the blend region straddles the face boundary.
ManipRegion draw_manip_region(Rng mrng, const VideoLayout& face, std::size_t s) {
    ManipRegion v{};
    const double sd = static_cast<double>(s);
    const std::size_t block = std::max<std::size_t>(4, s / 4);
    const std::size_t hi = s - block - 1;
    auto clamp_pos = [&](double x) {
        return static_cast<std::size_t>(std::clamp(x, 1.0, static_cast<double>(hi)));
    };
    // first block centered somewhere on the face
    v.p1x = clamp_pos(face.cx + mrng.uniform(-0.6, 0.6) * face.rx - 0.5 * block);
    v.p1y = clamp_pos(face.cy + mrng.uniform(-0.6, 0.6) * face.ry - 0.5 * block);
    // second block in the periphery, outside the face ellipse
    int attempts = 0;
    do {
        v.p2x = 1 + mrng.below(hi);
        v.p2y = 1 + mrng.below(hi);
        const double ex = (static_cast<double>(v.p2x) + 0.5 * block - face.cx) / face.rx;
        const double ey = (static_cast<double>(v.p2y) + 0.5 * block - face.cy) / face.ry;
        if (ex * ex + ey * ey > 1.8) break;
        if (++attempts > 64) {  // farthest corner is always off-face
            v.p2x = face.cx < 0.5 * sd ? hi : 1;
            v.p2y = face.cy < 0.5 * sd ? hi : 1;
            break;
        }
    } while (true);

    v.blob_cx = face.cx + mrng.uniform(-0.5, 0.5) * face.rx;
    v.blob_cy = face.cy + mrng.uniform(-0.5, 0.5) * face.ry;
    v.blob_r = 0.21 * sd;

    v.band_h = std::max<std::size_t>(4, s / 4);
    const double band_lo = std::max(1.0, face.cy - face.ry);
    const double band_hi = std::min(static_cast<double>(s - v.band_h - 1),
                                    face.cy + face.ry - static_cast<double>(v.band_h));
    v.band_y0 = static_cast<std::size_t>(
        band_hi > band_lo ? mrng.uniform(band_lo, band_hi) : band_lo);
    v.band_phase = mrng.uniform(0.0, 6.28318530717958647692);
    v.band_amp = std::max(2.0, sd / 6.0);

    v.seam_w = static_cast<std::size_t>(mrng.uniform(0.35, 0.5) * sd);
    v.seam_h = static_cast<std::size_t>(mrng.uniform(0.35, 0.5) * sd);
    const auto seam_pos = [&](double center, std::size_t extent, double radius) {
        const double lo2 = std::max(1.0, center + mrng.uniform(-1.0, 0.2) * radius -
                                             0.5 * static_cast<double>(extent));
        return static_cast<std::size_t>(
            std::min(lo2, static_cast<double>(s - extent - 1)));
    };
    v.seam_x0 = seam_pos(face.cx, v.seam_w, face.rx);
    v.seam_y0 = seam_pos(face.cy, v.seam_h, face.ry);
    v.seam_sx = 3 + static_cast<long>(mrng.below(2));
    v.seam_sy = 3 + static_cast<long>(mrng.below(2));
    if (mrng.uniform() < 0.5) v.seam_sx = -v.seam_sx;
    if (mrng.uniform() < 0.5) v.seam_sy = -v.seam_sy;
    return v;
}

Tensor render_real_frame(const VideoLayout& v, std::size_t s, Rng frng) {
    const double jx = frng.uniform(-0.02, 0.02) * static_cast<double>(s);
    const double jy = frng.uniform(-0.02, 0.02) * static_cast<double>(s);
    const double jphase = frng.uniform(-0.3, 0.3);
    const double jbright = frng.uniform(-0.02, 0.02);
    const double sd = static_cast<double>(s);
    std::vector<double> out(3 * s * s);
    const double cx = v.cx + jx, cy = v.cy + jy;
    for (std::size_t y = 0; y < s; ++y)
        for (std::size_t x = 0; x < s; ++x) {
            const double proj = (static_cast<double>(x) * v.dirx + static_cast<double>(y) * v.diry) / sd;
            const double t = 0.5 + 0.5 * std::sin(6.28318530717958647692 * v.freq * proj +
                                                  v.phase + jphase);
            double px[3];
            for (int c = 0; c < 3; ++c) px[c] = v.c0[c] + (v.c1[c] - v.c0[c]) * t;
            // face
            const double ex = (static_cast<double>(x) - cx) / v.rx;
            const double ey = (static_cast<double>(y) - cy) / v.ry;
            const double d = ex * ex + ey * ey;
            const double alpha = std::clamp((1.15 - d) / 0.3, 0.0, 1.0);
            if (alpha > 0.0) {
                const double shade = 1.0 - 0.2 * (ey + 1.0) * 0.5;
                for (int c = 0; c < 3; ++c) px[c] += alpha * (v.face[c] * shade - px[c]);
                // eyes
                for (double side : {-0.38, 0.38}) {
                    const double ddx = (static_cast<double>(x) - (cx + side * v.rx)) / (0.16 * v.rx);
                    const double ddy = (static_cast<double>(y) - (cy - 0.25 * v.ry)) / (0.12 * v.ry);
                    const double de = ddx * ddx + ddy * ddy;
                    const double ae = std::clamp((1.0 - de) / 0.5, 0.0, 1.0);
                    for (int c = 0; c < 3; ++c) px[c] += ae * (0.12 - px[c]);
                }
                // mouth
                const double mx = (static_cast<double>(x) - cx) / (0.45 * v.rx);
                const double my = (static_cast<double>(y) - (cy + 0.45 * v.ry)) / (0.10 * v.ry);
                const double dm = mx * mx + my * my;
                const double am = std::clamp((1.0 - dm) / 0.5, 0.0, 1.0);
                px[0] += am * (0.45 - px[0]);
                px[1] += am * (0.15 - px[1]);
                px[2] += am * (0.18 - px[2]);
            }
            for (int c = 0; c < 3; ++c)
                out[(static_cast<std::size_t>(c) * s + y) * s + x] =
                    std::clamp(px[c] + jbright, 0.0, 1.0);
        }
    return Tensor::from_data({3, s, s}, std::move(out));
}

Tensor manipulate_frame(const Tensor& real, const ManipRegion& v, SynthFamily family,
                        std::size_t s, Rng frng) {
    std::vector<double> out = real.data();
    const std::size_t hw = s * s;
    auto at = [&](std::size_t c, std::size_t y, std::size_t x) -> double& {
        return out[c * hw + y * s + x];
    };
    const auto& in = real.data();
    auto src = [&](std::size_t c, long y, long x) {
        y = std::clamp(y, 0L, static_cast<long>(s) - 1);
        x = std::clamp(x, 0L, static_cast<long>(s) - 1);
        return in[c * hw + static_cast<std::size_t>(y) * s + static_cast<std::size_t>(x)];
    };
    switch (family) {
        case SynthFamily::patch_swap: {
            const std::size_t block = std::max<std::size_t>(4, s / 4);
            for (std::size_t c = 0; c < 3; ++c)
                for (std::size_t y = 0; y < block; ++y)
                    for (std::size_t x = 0; x < block; ++x) {
                        at(c, v.p1y + y, v.p1x + x) = src(c, static_cast<long>(v.p2y + y),
                                                          static_cast<long>(v.p2x + x));
                        at(c, v.p2y + y, v.p2x + x) = src(c, static_cast<long>(v.p1y + y),
                                                          static_cast<long>(v.p1x + x));
                    }
            break;
        }
        case SynthFamily::hf_noise_blob: {
            Rng noise = frng.derive("blob_noise");
            for (std::size_t y = 0; y < s; ++y)
                for (std::size_t x = 0; x < s; ++x) {
                    const double dx = static_cast<double>(x) - v.blob_cx;
                    const double dy = static_cast<double>(y) - v.blob_cy;
                    if (dx * dx + dy * dy > v.blob_r * v.blob_r) continue;
                    for (std::size_t c = 0; c < 3; ++c)
                        at(c, y, x) = std::clamp(at(c, y, x) + 0.5 * noise.normal(), 0.0, 1.0);
                }
            break;
        }
        case SynthFamily::warp_band: {
            for (std::size_t y = v.band_y0; y < v.band_y0 + v.band_h && y < s; ++y) {
                const double ph = 6.28318530717958647692 *
                                      static_cast<double>(y - v.band_y0) /
                                      static_cast<double>(v.band_h) +
                                  v.band_phase;
                const long dx = std::lround(v.band_amp * std::sin(ph));
                if (dx == 0) continue;
                for (std::size_t c = 0; c < 3; ++c)
                    for (std::size_t x = 0; x < s; ++x)
                        at(c, y, x) = src(c, static_cast<long>(y), static_cast<long>(x) - dx);
            }
            break;
        }
        case SynthFamily::blend_seam: {
            for (std::size_t y = v.seam_y0; y < std::min(s, v.seam_y0 + v.seam_h); ++y)
                for (std::size_t x = v.seam_x0; x < std::min(s, v.seam_x0 + v.seam_w); ++x)
                    for (std::size_t c = 0; c < 3; ++c)
                        at(c, y, x) = 0.5 * at(c, y, x) +
                                      0.5 * src(c, static_cast<long>(y) + v.seam_sy,
                                                static_cast<long>(x) + v.seam_sx);
            break;
        }
    }
    return Tensor::from_data({3, s, s}, std::move(out));
}

}  // namespace

std::string synthesize_dataset(const SynthSpec& spec, const std::string& out_dir,
                               const std::string& name) {
    if (spec.image_size < 16) throw ConfigError("synth: image_size must be >= 16");
    if (spec.samples_per_class == 0 || spec.frames_per_video == 0)
        throw ConfigError("synth: counts must be positive");
    fs::create_directories(out_dir);
    Rng root = Rng(spec.seed).derive("synth").derive(to_string(spec.family)).derive(name);

    const std::size_t spc = spec.samples_per_class;
    const std::size_t fpv = spec.frames_per_video;
    const std::size_t n_videos = (spc + fpv - 1) / fpv;
    std::vector<SampleRecord> reals, fakes;
    char buf[64];
    for (std::size_t v = 0, produced = 0; v < n_videos; ++v) {
        const VideoLayout layout = draw_video_layout(root.derive("video", v), spec.image_size);
        const std::size_t frames = std::min(fpv, spc - produced);
        for (std::size_t f = 0; f < frames; ++f) {
            Rng frng = root.derive("frame", v * 100000 + f);
            const ManipRegion region = draw_manip_region(
                root.derive("manip", v * 100000 + f), layout, spec.image_size);
            Tensor real = render_real_frame(layout, spec.image_size, frng);
            Tensor fake = manipulate_frame(real, region, spec.family, spec.image_size, frng);

            std::snprintf(buf, sizeof buf, "%s_real_v%03zu_f%02zu.ppm", name.c_str(), v, f);
            write_ppm((fs::path(out_dir) / buf).string(), real);
            reals.push_back({buf, 0, name + "_real_v" + std::to_string(v), "real"});

            std::snprintf(buf, sizeof buf, "%s_%s_v%03zu_f%02zu.ppm", name.c_str(),
                          to_string(spec.family).c_str(), v, f);
            write_ppm((fs::path(out_dir) / buf).string(), fake);
            fakes.push_back(
                {buf, 1, name + "_" + to_string(spec.family) + "_v" + std::to_string(v),
                 to_string(spec.family)});
        }
        produced += frames;
    }
    std::vector<SampleRecord> all = reals;
    all.insert(all.end(), fakes.begin(), fakes.end());
    const std::string manifest = (fs::path(out_dir) / (name + ".jsonl")).string();
    save_manifest(manifest, all);
    return manifest;
}

Tensor preprocess(const Tensor& image, const PreprocessConfig& cfg) {
    Tensor resized = bilinear_resize(image, cfg.image_size);
    const std::size_t hw = cfg.image_size * cfg.image_size;
    std::vector<double> out = resized.data();
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < hw; ++i)
            out[c * hw + i] = (out[c * hw + i] - cfg.mean[c]) / cfg.stddev[c];
    return Tensor::from_data(resized.shape(), std::move(out));
}

}  // namespace hamlet
