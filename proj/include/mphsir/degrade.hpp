#pragma once

// Deterministic synthesis of the nine degradation tasks. Every operator is a
// pure function of (input, parameters, seed); the additive/multiplicative
// split follows y = H(x) + n, and outputs are intentionally not clipped back
// to [0, 1].

#include "mphsir/hsicube.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace mphsir::degrade {

enum class Task : int {
    GaussianNoise = 0,
    ComplexNoise = 1,
    GaussianBlur = 2,
    Downsample = 3,
    Inpaint = 4,
    Haze = 5,
    BandDrop = 6,
    MotionBlur = 7,
    PoissonNoise = 8,
};

inline constexpr int kNumTasks = 9;
// The seven tasks covered by all-in-one training; motion blur and Poisson
// noise are the generalization tasks.
inline constexpr int kNumAllInOneTasks = 7;

const char* task_name(Task t);
Task task_from_name(const std::string& name);

// ---------------------------------------------------------------------------
// Parameter records
// ---------------------------------------------------------------------------

struct GaussianNoiseParams {
    double sigma = 50.0;  // on the 0-255 digital-number scale
};

struct ComplexNoiseParams {
    int case_id = 1;  // 1..4
};

struct GaussianBlurParams {
    int kernel_size = 9;  // odd, >= 3
};

struct DownsampleParams {
    int scale = 4;  // one of {2, 4, 8}
};

struct InpaintParams {
    double rate = 0.8;  // masked fraction, (0, 1)
};

struct HazeParams {
    double omega = 0.75;           // haze intensity weight, (0, 1]
    double atmos_light = 0.8;      // global atmospheric light A, (0, 1]
    double gamma = 1.0;            // spatial exponent
    double lambda_ref = 0.0;       // reference wavelength; 0 = first band
    hsi::HSICube cirrus;           // optional (1, H, W) B9 map; empty = synthesize from seed
};

struct BandDropParams {
    double rate = 0.2;  // dropped fraction of bands, (0, 1)
};

struct MotionBlurParams {
    int radius = 15;
    double angle_deg = 45.0;
};

struct PoissonParams {
    double factor = 10.0;  // intensity scaling factor, > 0
};

using TaskParams = std::variant<GaussianNoiseParams, ComplexNoiseParams, GaussianBlurParams,
                                DownsampleParams, InpaintParams, HazeParams, BandDropParams,
                                MotionBlurParams, PoissonParams>;

struct DegradationSpec {
    Task task = Task::GaussianNoise;
    TaskParams params = GaussianNoiseParams{};
    std::uint64_t seed = 0;
};

// Parses the CLI-facing JSON parameter record for a task; missing fields
// take the defaults above. Throws on out-of-range values.
DegradationSpec make_spec(Task task, const std::string& params_json, std::uint64_t seed);
std::string params_to_json(const DegradationSpec& spec);

struct DegradeResult {
    hsi::HSICube cube;
    Task label = Task::GaussianNoise;
    std::optional<hsi::HSICube> mask;       // inpainting keep-mask (1, H, W)
    std::vector<int> dropped_bands;         // band completion
};

// ---------------------------------------------------------------------------
// Operators
// ---------------------------------------------------------------------------

hsi::HSICube apply_gaussian_noise(const hsi::HSICube& cube, double sigma, std::uint64_t seed);
hsi::HSICube apply_complex_noise(const hsi::HSICube& cube, int case_id, std::uint64_t seed);

// sigma = 0.3 * ((K - 1) / 2 - 1) + 0.8 for an odd kernel size K >= 3.
double blur_sigma(int kernel_size);
hsi::HSICube apply_gaussian_blur(const hsi::HSICube& cube, int kernel_size);

// Catmull-Rom (a = -0.5) bicubic downsample by an integer factor with
// half-pixel center alignment and clamped borders.
hsi::HSICube bicubic_downsample(const hsi::HSICube& cube, int scale);
hsi::HSICube downsample_then_unpool(const hsi::HSICube& cube, int scale);

std::pair<hsi::HSICube, hsi::HSICube> apply_inpaint_mask(const hsi::HSICube& cube, double rate,
                                                         std::uint64_t seed);

hsi::HSICube apply_haze(const hsi::HSICube& cube, const HazeParams& hp);
// Smooth multi-octave field in [0, 1], the desk-scale stand-in for Landsat-8
// cirrus-band masks.
hsi::HSICube synth_cirrus_map(std::uint64_t seed, int h, int w);

std::pair<hsi::HSICube, std::vector<int>> drop_bands(const hsi::HSICube& cube, double rate,
                                                     std::uint64_t seed);

hsi::HSICube apply_motion_blur(const hsi::HSICube& cube, int radius, double angle_deg);

hsi::HSICube apply_poisson(const hsi::HSICube& cube, double factor, std::uint64_t seed);

// Dispatch on the spec; returns the task label and any auxiliary output.
DegradeResult run(const hsi::HSICube& cube, const DegradationSpec& spec);

// Samples task parameters from the training ranges (noise sigma 30-70,
// blur kernels {9,15,21}, scales {2,4,8}, mask rates 0.7-0.9, omega 0.5-1,
// band-drop rates 0.1-0.3, motion radius 15 at 45 degrees, Poisson factor
// 10). Deterministic in the seed; the spec's own seed is derived from it.
DegradationSpec sample_spec(Task task, std::uint64_t seed);

}  // namespace mphsir::degrade
