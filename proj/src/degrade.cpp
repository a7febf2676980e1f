#include "mphsir/degrade.hpp"

#include "mphsir/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace mphsir::degrade {

using hsi::HSICube;
using json = nlohmann::json;

namespace {

constexpr const char* kTaskNames[kNumTasks] = {
    "GaussianNoise", "ComplexNoise", "GaussianBlur", "Downsample", "Inpaint",
    "Haze",          "BandDrop",     "MotionBlur",   "PoissonNoise",
};

// Symmetric reflection for out-of-range sample indices.
int reflect_idx(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -1 - i;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

// Separable convolution of one band with a 1-d kernel, reflect padding.
void convolve_band_separable(const float* src, float* dst, int h, int w,
                             const std::vector<double>& kernel) {
    const int r = static_cast<int>(kernel.size()) / 2;
    std::vector<double> tmp(static_cast<size_t>(h) * w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int k = -r; k <= r; ++k)
                acc += kernel[static_cast<size_t>(k + r)] * src[y * w + reflect_idx(x + k, w)];
            tmp[static_cast<size_t>(y) * w + x] = acc;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int k = -r; k <= r; ++k)
                acc += kernel[static_cast<size_t>(k + r)] * tmp[static_cast<size_t>(reflect_idx(y + k, h)) * w + x];
            dst[y * w + x] = static_cast<float>(acc);
        }
    }
}

// Catmull-Rom (a = -0.5) cubic weights for fractional offset t in [0, 1).
void catmull_rom_weights(double t, double w[4]) {
    const double t2 = t * t, t3 = t2 * t;
    w[0] = -0.5 * t3 + t2 - 0.5 * t;
    w[1] = 1.5 * t3 - 2.5 * t2 + 1.0;
    w[2] = -1.5 * t3 + 2.0 * t2 + 0.5 * t;
    w[3] = 0.5 * t3 - 0.5 * t2;
}

}  // namespace

const char* task_name(Task t) { return kTaskNames[static_cast<int>(t)]; }

Task task_from_name(const std::string& name) {
    for (int i = 0; i < kNumTasks; ++i)
        if (name == kTaskNames[i]) return static_cast<Task>(i);
    throw std::invalid_argument("unknown task name '" + name + "'");
}

HSICube apply_gaussian_noise(const HSICube& cube, double sigma, std::uint64_t seed) {
    cube.validate();
    if (!(sigma > 0.0)) throw std::invalid_argument("gaussian noise: sigma must be positive");
    Rng rng(seed);
    HSICube out = cube;
    const double s = sigma / 255.0;
    for (auto& v : out.data) v = static_cast<float>(v + rng.normal() * s);
    return out;
}

HSICube apply_complex_noise(const HSICube& cube, int case_id, std::uint64_t seed) {
    cube.validate();
    if (case_id < 1 || case_id > 4) throw std::invalid_argument("complex noise: case must be 1..4");
    Rng rng(seed);
    HSICube out = cube;
    const int b = cube.bands, h = cube.height, w = cube.width;

    // Non-i.i.d. Gaussian on every band, sigma_b ~ U[10, 70] DN.
    std::vector<double> sigma_b(static_cast<size_t>(b));
    for (int i = 0; i < b; ++i) sigma_b[static_cast<size_t>(i)] = rng.uniform(10.0, 70.0) / 255.0;
    for (int i = 0; i < b; ++i) {
        float* bp = out.band(i);
        const double s = sigma_b[static_cast<size_t>(i)];
        for (int p = 0; p < h * w; ++p) bp[p] = static_cast<float>(bp[p] + rng.normal() * s);
    }
    if (case_id == 1) return out;

    const int n_affected = b / 3;
    auto bands_sel = rng.sample_without_replacement(static_cast<std::uint32_t>(b),
                                                    static_cast<std::uint32_t>(n_affected));
    if (case_id == 2 || case_id == 3) {
        for (std::uint32_t bi : bands_sel) {
            const double frac = rng.uniform(0.05, 0.15);
            const int ncols = std::max(1, static_cast<int>(std::lround(frac * w)));
            auto cols = rng.sample_without_replacement(static_cast<std::uint32_t>(w),
                                                       static_cast<std::uint32_t>(ncols));
            float* bp = out.band(static_cast<int>(bi));
            for (std::uint32_t col : cols) {
                if (case_id == 2) {
                    const double off = rng.uniform(-0.25, 0.25);
                    for (int y = 0; y < h; ++y) bp[y * w + static_cast<int>(col)] += static_cast<float>(off);
                } else {
                    for (int y = 0; y < h; ++y) bp[y * w + static_cast<int>(col)] = 0.0f;
                }
            }
        }
        return out;
    }
    // Case 4: impulse (salt-and-pepper, equal polarity) on the selected bands.
    for (std::uint32_t bi : bands_sel) {
        const double ratio = rng.uniform(0.10, 0.70);
        float* bp = out.band(static_cast<int>(bi));
        for (int p = 0; p < h * w; ++p) {
            if (rng.uniform() < ratio) bp[p] = rng.uniform() < 0.5 ? 0.0f : 1.0f;
        }
    }
    return out;
}

double blur_sigma(int kernel_size) {
    if (kernel_size < 3 || kernel_size % 2 == 0)
        throw std::invalid_argument("blur_sigma: kernel size must be odd and >= 3");
    return 0.3 * ((kernel_size - 1) / 2.0 - 1.0) + 0.8;
}

HSICube apply_gaussian_blur(const HSICube& cube, int kernel_size) {
    cube.validate();
    const double sigma = blur_sigma(kernel_size);
    if (kernel_size > std::min(cube.height, cube.width))
        throw std::invalid_argument("gaussian blur: kernel exceeds spatial extent");
    const int r = kernel_size / 2;
    std::vector<double> kernel(static_cast<size_t>(kernel_size));
    double sum = 0.0;
    for (int i = -r; i <= r; ++i) {
        kernel[static_cast<size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += kernel[static_cast<size_t>(i + r)];
    }
    for (auto& k : kernel) k /= sum;
    HSICube out = cube;
    for (int b = 0; b < cube.bands; ++b)
        convolve_band_separable(cube.band(b), out.band(b), cube.height, cube.width, kernel);
    return out;
}

HSICube bicubic_downsample(const HSICube& cube, int scale) {
    cube.validate();
    if (scale < 2) throw std::invalid_argument("downsample: scale must be >= 2");
    if (cube.height % scale != 0 || cube.width % scale != 0)
        throw std::invalid_argument("downsample: extent not divisible by scale");
    const int h = cube.height, w = cube.width;
    const int lh = h / scale, lw = w / scale;
    HSICube low(cube.bands, lh, lw);
    low.wavelengths = cube.wavelengths;
    double wy[4], wx[4];
    for (int b = 0; b < cube.bands; ++b) {
        const float* src = cube.band(b);
        float* dst = low.band(b);
        for (int oy = 0; oy < lh; ++oy) {
            const double sy = (oy + 0.5) * scale - 0.5;
            const int iy = static_cast<int>(std::floor(sy));
            catmull_rom_weights(sy - iy, wy);
            for (int ox = 0; ox < lw; ++ox) {
                const double sx = (ox + 0.5) * scale - 0.5;
                const int ix = static_cast<int>(std::floor(sx));
                catmull_rom_weights(sx - ix, wx);
                double acc = 0.0;
                for (int m = -1; m <= 2; ++m) {
                    const int yy = std::clamp(iy + m, 0, h - 1);
                    double rowacc = 0.0;
                    for (int n = -1; n <= 2; ++n) {
                        const int xx = std::clamp(ix + n, 0, w - 1);
                        rowacc += wx[n + 1] * src[yy * w + xx];
                    }
                    acc += wy[m + 1] * rowacc;
                }
                dst[oy * lw + ox] = static_cast<float>(acc);
            }
        }
    }
    return low;
}

HSICube downsample_then_unpool(const HSICube& cube, int scale) {
    if (scale != 2 && scale != 4 && scale != 8)
        throw std::invalid_argument("downsample: scale must be 2, 4 or 8");
    HSICube low = bicubic_downsample(cube, scale);
    const int h = cube.height, w = cube.width, lw = low.width;
    HSICube out(cube.bands, h, w);
    out.wavelengths = cube.wavelengths;
    for (int b = 0; b < cube.bands; ++b) {
        const float* src = low.band(b);
        float* dst = out.band(b);
        // Nearest-neighbor unpooling back to the original grid.
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) dst[y * w + x] = src[(y / scale) * lw + x / scale];
    }
    return out;
}

std::pair<HSICube, HSICube> apply_inpaint_mask(const HSICube& cube, double rate, std::uint64_t seed) {
    cube.validate();
    if (!(rate > 0.0 && rate < 1.0)) throw std::invalid_argument("inpaint: rate must be in (0, 1)");
    const std::int64_t npix = cube.pixels();
    const auto nmask = static_cast<std::uint32_t>(std::llround(rate * static_cast<double>(npix)));
    Rng rng(seed);
    auto masked = rng.sample_without_replacement(static_cast<std::uint32_t>(npix), nmask);
    HSICube mask(1, cube.height, cube.width);
    std::fill(mask.data.begin(), mask.data.end(), 1.0f);
    for (std::uint32_t p : masked) mask.data[p] = 0.0f;
    HSICube out = cube;
    for (int b = 0; b < cube.bands; ++b) {
        float* bp = out.band(b);
        for (std::uint32_t p : masked) bp[p] = 0.0f;
    }
    return {std::move(out), std::move(mask)};
}

HSICube synth_cirrus_map(std::uint64_t seed, int h, int w) {
    if (h <= 0 || w <= 0) throw std::invalid_argument("cirrus map: non-positive extent");
    Rng rng(hash64(seed, 0x6369727275ULL));
    // Three octaves of cosine plane waves; frequencies in cycles per image,
    // scaled with extent so the per-pixel smoothness is size-independent.
    const double fscale = std::min(h, w) / 64.0;
    const double base_freq[3] = {1.5, 3.0, 6.0};
    const double amp[3] = {1.0, 0.5, 0.25};
    struct Wave {
        double fx, fy, phase, amp;
    };
    std::vector<Wave> waves;
    for (int o = 0; o < 3; ++o) {
        for (int k = 0; k < 2; ++k) {
            const double mag = base_freq[o] * fscale * rng.uniform(0.7, 1.3);
            const double dir = rng.uniform(0.0, 6.283185307179586);
            waves.push_back({mag * std::cos(dir), mag * std::sin(dir),
                             rng.uniform(0.0, 6.283185307179586), amp[o]});
        }
    }
    HSICube map(1, h, w);
    double lo = 1e300, hi = -1e300;
    std::vector<double> raw(static_cast<size_t>(h) * w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (const auto& wv : waves)
                s += wv.amp * std::cos(6.283185307179586 * (wv.fx * x / w + wv.fy * y / h) + wv.phase);
            raw[static_cast<size_t>(y) * w + x] = s;
            lo = std::min(lo, s);
            hi = std::max(hi, s);
        }
    }
    const double inv = hi > lo ? 1.0 / (hi - lo) : 0.0;
    for (std::int64_t i = 0; i < map.pixels(); ++i)
        map.data[static_cast<size_t>(i)] = static_cast<float>((raw[static_cast<size_t>(i)] - lo) * inv);
    return map;
}

HSICube apply_haze(const HSICube& cube, const HazeParams& hp) {
    cube.validate();
    if (cube.wavelengths.empty()) throw std::invalid_argument("haze: cube has no wavelengths");
    if (!(hp.omega > 0.0 && hp.omega <= 1.0)) throw std::invalid_argument("haze: omega must be in (0, 1]");
    if (!(hp.atmos_light > 0.0 && hp.atmos_light <= 1.0))
        throw std::invalid_argument("haze: atmospheric light must be in (0, 1]");
    const HSICube& b9 = hp.cirrus;
    if (b9.bands != 1 || b9.height != cube.height || b9.width != cube.width)
        throw std::invalid_argument("haze: cirrus map shape mismatch");
    const double lambda1 = hp.lambda_ref > 0.0 ? hp.lambda_ref : cube.wavelengths.front();
    constexpr double kTmin = 1e-3;

    // Reference transmission t1 = clamp(1 - omega * B9, t_min, 1).
    std::vector<double> log_t1(static_cast<size_t>(cube.pixels()));
    for (std::int64_t p = 0; p < cube.pixels(); ++p) {
        const double t1 = std::clamp(1.0 - hp.omega * b9.data[static_cast<size_t>(p)], kTmin, 1.0);
        log_t1[static_cast<size_t>(p)] = std::log(t1);
    }
    HSICube out = cube;
    for (int i = 0; i < cube.bands; ++i) {
        const double ratio = std::pow(lambda1 / cube.wavelengths[static_cast<size_t>(i)], hp.gamma);
        const float* src = cube.band(i);
        float* dst = out.band(i);
        for (std::int64_t p = 0; p < cube.pixels(); ++p) {
            const double t = std::exp(ratio * log_t1[static_cast<size_t>(p)]);
            dst[p] = static_cast<float>(src[p] * t + hp.atmos_light * (1.0 - t));
        }
    }
    return out;
}

std::pair<HSICube, std::vector<int>> drop_bands(const HSICube& cube, double rate, std::uint64_t seed) {
    cube.validate();
    if (!(rate > 0.0 && rate < 1.0)) throw std::invalid_argument("band drop: rate must be in (0, 1)");
    const int k = static_cast<int>(std::lround(rate * cube.bands));
    if (k == 0 || k == cube.bands)
        throw std::invalid_argument("band drop: rate drops zero or all bands");
    Rng rng(seed);
    auto sel = rng.sample_without_replacement(static_cast<std::uint32_t>(cube.bands),
                                              static_cast<std::uint32_t>(k));
    std::vector<int> dropped(sel.begin(), sel.end());
    std::sort(dropped.begin(), dropped.end());
    HSICube out = cube;
    for (int b : dropped) std::fill_n(out.band(b), cube.pixels(), 0.0f);
    return {std::move(out), std::move(dropped)};
}

HSICube apply_motion_blur(const HSICube& cube, int radius, double angle_deg) {
    cube.validate();
    if (radius < 1) throw std::invalid_argument("motion blur: radius must be >= 1");
    if (2 * radius + 1 > std::min(cube.height, cube.width))
        throw std::invalid_argument("motion blur: kernel exceeds spatial extent");
    const double ang = angle_deg * 3.14159265358979323846 / 180.0;
    const double cx = std::cos(ang), cy = std::sin(ang);
    // Rasterize the line segment; coincident taps merge their weight.
    std::map<std::pair<int, int>, double> taps;
    for (int i = -radius; i <= radius; ++i) {
        const int dx = static_cast<int>(std::lround(i * cx));
        const int dy = static_cast<int>(std::lround(i * cy));
        taps[{dy, dx}] += 1.0;
    }
    const double inv = 1.0 / (2.0 * radius + 1.0);
    HSICube out = cube;
    const int h = cube.height, w = cube.width;
    for (int b = 0; b < cube.bands; ++b) {
        const float* src = cube.band(b);
        float* dst = out.band(b);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (const auto& [off, wt] : taps)
                    acc += wt * src[reflect_idx(y + off.first, h) * w + reflect_idx(x + off.second, w)];
                dst[y * w + x] = static_cast<float>(acc * inv);
            }
        }
    }
    return out;
}

HSICube apply_poisson(const HSICube& cube, double factor, std::uint64_t seed) {
    cube.validate();
    if (!(factor > 0.0)) throw std::invalid_argument("poisson: factor must be positive");
    Rng rng(seed);
    HSICube out = cube;
    const double inv = 1.0 / factor;
    for (auto& v : out.data) {
        if (v < 0.0f) throw std::invalid_argument("poisson: negative input voxel");
        v = static_cast<float>(static_cast<double>(rng.poisson(static_cast<double>(v) * factor)) * inv);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Spec parsing and dispatch
// ---------------------------------------------------------------------------

DegradationSpec make_spec(Task task, const std::string& params_json, std::uint64_t seed) {
    json j = params_json.empty() ? json::object() : json::parse(params_json);
    DegradationSpec spec;
    spec.task = task;
    spec.seed = seed;
    switch (task) {
        case Task::GaussianNoise: {
            GaussianNoiseParams p;
            p.sigma = j.value("sigma", p.sigma);
            if (!(p.sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
            spec.params = p;
            break;
        }
        case Task::ComplexNoise: {
            ComplexNoiseParams p;
            p.case_id = j.value("case", p.case_id);
            if (p.case_id < 1 || p.case_id > 4) throw std::invalid_argument("case must be 1..4");
            spec.params = p;
            break;
        }
        case Task::GaussianBlur: {
            GaussianBlurParams p;
            p.kernel_size = j.value("kernel_size", p.kernel_size);
            if (p.kernel_size < 3 || p.kernel_size % 2 == 0)
                throw std::invalid_argument("kernel_size must be odd and >= 3");
            spec.params = p;
            break;
        }
        case Task::Downsample: {
            DownsampleParams p;
            p.scale = j.value("scale", p.scale);
            if (p.scale != 2 && p.scale != 4 && p.scale != 8)
                throw std::invalid_argument("scale must be 2, 4 or 8");
            spec.params = p;
            break;
        }
        case Task::Inpaint: {
            InpaintParams p;
            p.rate = j.value("rate", p.rate);
            if (!(p.rate > 0.0 && p.rate < 1.0)) throw std::invalid_argument("rate must be in (0,1)");
            spec.params = p;
            break;
        }
        case Task::Haze: {
            HazeParams p;
            p.omega = j.value("omega", p.omega);
            p.atmos_light = j.value("A", p.atmos_light);
            p.gamma = j.value("gamma", p.gamma);
            p.lambda_ref = j.value("lambda_ref", p.lambda_ref);
            if (!(p.omega > 0.0 && p.omega <= 1.0)) throw std::invalid_argument("omega must be in (0,1]");
            spec.params = p;
            break;
        }
        case Task::BandDrop: {
            BandDropParams p;
            p.rate = j.value("rate", p.rate);
            if (!(p.rate > 0.0 && p.rate < 1.0)) throw std::invalid_argument("rate must be in (0,1)");
            spec.params = p;
            break;
        }
        case Task::MotionBlur: {
            MotionBlurParams p;
            p.radius = j.value("radius", p.radius);
            p.angle_deg = j.value("angle", p.angle_deg);
            if (p.radius < 1) throw std::invalid_argument("radius must be >= 1");
            spec.params = p;
            break;
        }
        case Task::PoissonNoise: {
            PoissonParams p;
            p.factor = j.value("factor", p.factor);
            if (!(p.factor > 0.0)) throw std::invalid_argument("factor must be positive");
            spec.params = p;
            break;
        }
    }
    return spec;
}

std::string params_to_json(const DegradationSpec& spec) {
    json j = json::object();
    std::visit(
        [&](const auto& p) {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, GaussianNoiseParams>) {
                j["sigma"] = p.sigma;
            } else if constexpr (std::is_same_v<P, ComplexNoiseParams>) {
                j["case"] = p.case_id;
            } else if constexpr (std::is_same_v<P, GaussianBlurParams>) {
                j["kernel_size"] = p.kernel_size;
            } else if constexpr (std::is_same_v<P, DownsampleParams>) {
                j["scale"] = p.scale;
            } else if constexpr (std::is_same_v<P, InpaintParams>) {
                j["rate"] = p.rate;
            } else if constexpr (std::is_same_v<P, HazeParams>) {
                j["omega"] = p.omega;
                j["A"] = p.atmos_light;
                j["gamma"] = p.gamma;
                if (p.lambda_ref > 0.0) j["lambda_ref"] = p.lambda_ref;
            } else if constexpr (std::is_same_v<P, BandDropParams>) {
                j["rate"] = p.rate;
            } else if constexpr (std::is_same_v<P, MotionBlurParams>) {
                j["radius"] = p.radius;
                j["angle"] = p.angle_deg;
            } else if constexpr (std::is_same_v<P, PoissonParams>) {
                j["factor"] = p.factor;
            }
        },
        spec.params);
    return j.dump();
}

DegradationSpec sample_spec(Task task, std::uint64_t seed) {
    Rng rng(hash64(seed, 0x706172616dULL));
    DegradationSpec spec;
    spec.task = task;
    spec.seed = hash64(seed, 0x6170706c79ULL);
    switch (task) {
        case Task::GaussianNoise:
            spec.params = GaussianNoiseParams{rng.uniform(30.0, 70.0)};
            break;
        case Task::ComplexNoise:
            spec.params = ComplexNoiseParams{1 + static_cast<int>(rng.uniform_index(4))};
            break;
        case Task::GaussianBlur: {
            const int sizes[3] = {9, 15, 21};
            spec.params = GaussianBlurParams{sizes[rng.uniform_index(3)]};
            break;
        }
        case Task::Downsample: {
            const int scales[3] = {2, 4, 8};
            spec.params = DownsampleParams{scales[rng.uniform_index(3)]};
            break;
        }
        case Task::Inpaint:
            spec.params = InpaintParams{rng.uniform(0.7, 0.9)};
            break;
        case Task::Haze: {
            HazeParams p;
            p.omega = rng.uniform(0.5, 1.0);
            p.atmos_light = rng.uniform(0.5, 0.9);
            spec.params = p;
            break;
        }
        case Task::BandDrop:
            spec.params = BandDropParams{rng.uniform(0.1, 0.3)};
            break;
        case Task::MotionBlur:
            spec.params = MotionBlurParams{15, 45.0};
            break;
        case Task::PoissonNoise:
            spec.params = PoissonParams{10.0};
            break;
    }
    return spec;
}

DegradeResult run(const HSICube& cube, const DegradationSpec& spec) {
    DegradeResult res;
    res.label = spec.task;
    switch (spec.task) {
        case Task::GaussianNoise:
            res.cube = apply_gaussian_noise(cube, std::get<GaussianNoiseParams>(spec.params).sigma, spec.seed);
            break;
        case Task::ComplexNoise:
            res.cube = apply_complex_noise(cube, std::get<ComplexNoiseParams>(spec.params).case_id, spec.seed);
            break;
        case Task::GaussianBlur:
            res.cube = apply_gaussian_blur(cube, std::get<GaussianBlurParams>(spec.params).kernel_size);
            break;
        case Task::Downsample:
            res.cube = downsample_then_unpool(cube, std::get<DownsampleParams>(spec.params).scale);
            break;
        case Task::Inpaint: {
            auto [out, mask] = apply_inpaint_mask(cube, std::get<InpaintParams>(spec.params).rate, spec.seed);
            res.cube = std::move(out);
            res.mask = std::move(mask);
            break;
        }
        case Task::Haze: {
            HazeParams p = std::get<HazeParams>(spec.params);
            if (p.cirrus.data.empty()) p.cirrus = synth_cirrus_map(spec.seed, cube.height, cube.width);
            res.cube = apply_haze(cube, p);
            break;
        }
        case Task::BandDrop: {
            auto [out, dropped] = drop_bands(cube, std::get<BandDropParams>(spec.params).rate, spec.seed);
            res.cube = std::move(out);
            res.dropped_bands = std::move(dropped);
            break;
        }
        case Task::MotionBlur: {
            const auto& p = std::get<MotionBlurParams>(spec.params);
            res.cube = apply_motion_blur(cube, p.radius, p.angle_deg);
            break;
        }
        case Task::PoissonNoise:
            res.cube = apply_poisson(cube, std::get<PoissonParams>(spec.params).factor, spec.seed);
            break;
    }
    return res;
}

}  // namespace mphsir::degrade
