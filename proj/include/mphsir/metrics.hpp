#pragma once

// Quality metrics and the serializable evaluation report.
//
// PSNR is computed jointly over the whole cube (one scalar per image, not a
// band average); SSIM is the standard single-band formulation applied per
// band and averaged. All accumulation happens in double.

#include "mphsir/hsicube.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mphsir::metrics {

// Cap used for the "identical" sentinel in tables.
inline constexpr double kPsnrCap = 100.0;

double mse(const hsi::HSICube& x, const hsi::HSICube& y);

// 10*log10(peak^2 / MSE), capped at kPsnrCap; identical inputs report the cap.
double psnr(const hsi::HSICube& x, const hsi::HSICube& y, double peak = 1.0);

// Per band: 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
// dynamic range 1, valid-mode windows; mean over windows, then over bands.
double ssim(const hsi::HSICube& x, const hsi::HSICube& y);

// Mean absolute error per band (the normalized-DN error curve).
std::vector<double> spectral_error_curve(const hsi::HSICube& x, const hsi::HSICube& y);

struct MaskedMetrics {
    double psnr = 0.0;
    double ssim = 0.0;
};

// Metrics restricted to the sub-cube of the given band indices.
MaskedMetrics masked_band_eval(const hsi::HSICube& x, const hsi::HSICube& y,
                               const std::vector<int>& dropped);

// ---------------------------------------------------------------------------
// Evaluation report
// ---------------------------------------------------------------------------

struct EvalEntry {
    std::string task;
    double level = 0.0;              // sigma / case id / rate / omega / scale ...
    std::string level_label;
    double psnr_db = 0.0;
    double ssim_val = 0.0;
    double psnr_degraded_db = 0.0;   // degraded-input baseline
    double ssim_degraded = 0.0;
    bool identical = false;          // zero-MSE sentinel
    int n_images = 0;
    std::vector<double> band_curve;  // length = bands
};

struct EvalReport {
    std::vector<EvalEntry> entries;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::string psnr_mode = "joint";  // whole-cube PSNR, not band-averaged

    std::string to_json() const;
    static EvalReport from_json(const std::string& text);
    void save(const std::string& path) const;
    static EvalReport load(const std::string& path);
};

}  // namespace mphsir::metrics
