#include "mphsir/metrics.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace mphsir::metrics {

using hsi::HSICube;
using ordered_json = nlohmann::ordered_json;

namespace {

void check_same_shape(const HSICube& x, const HSICube& y, const char* who) {
    if (x.bands != y.bands || x.height != y.height || x.width != y.width)
        throw std::invalid_argument(std::string(who) + ": shape mismatch");
}

// Valid-mode separable Gaussian filtering of one band (double precision).
// Writes an (h - k + 1) x (w - k + 1) result.
void gaussian_valid(const std::vector<double>& src, int h, int w,
                    const std::vector<double>& kernel, std::vector<double>& dst) {
    const int k = static_cast<int>(kernel.size());
    const int oh = h - k + 1, ow = w - k + 1;
    std::vector<double> tmp(static_cast<size_t>(h) * ow);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < k; ++i) acc += kernel[static_cast<size_t>(i)] * src[static_cast<size_t>(y) * w + x + i];
            tmp[static_cast<size_t>(y) * ow + x] = acc;
        }
    dst.assign(static_cast<size_t>(oh) * ow, 0.0);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < k; ++i) acc += kernel[static_cast<size_t>(i)] * tmp[static_cast<size_t>(y + i) * ow + x];
            dst[static_cast<size_t>(y) * ow + x] = acc;
        }
}

double ssim_band(const float* xb, const float* yb, int h, int w) {
    constexpr int kWin = 11;
    constexpr double kSigma = 1.5;
    constexpr double kC1 = 0.01 * 0.01;  // (K1 * L)^2, L = 1
    constexpr double kC2 = 0.03 * 0.03;
    std::vector<double> kernel(kWin);
    double ksum = 0.0;
    for (int i = 0; i < kWin; ++i) {
        const double d = i - (kWin - 1) / 2.0;
        kernel[static_cast<size_t>(i)] = std::exp(-0.5 * d * d / (kSigma * kSigma));
        ksum += kernel[static_cast<size_t>(i)];
    }
    for (auto& kv : kernel) kv /= ksum;

    const std::int64_t n = static_cast<std::int64_t>(h) * w;
    std::vector<double> x(static_cast<size_t>(n)), y(static_cast<size_t>(n)), xx(static_cast<size_t>(n)),
        yy(static_cast<size_t>(n)), xy(static_cast<size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        x[static_cast<size_t>(i)] = xb[i];
        y[static_cast<size_t>(i)] = yb[i];
        xx[static_cast<size_t>(i)] = static_cast<double>(xb[i]) * xb[i];
        yy[static_cast<size_t>(i)] = static_cast<double>(yb[i]) * yb[i];
        xy[static_cast<size_t>(i)] = static_cast<double>(xb[i]) * yb[i];
    }
    std::vector<double> mx, my, mxx, myy, mxy;
    gaussian_valid(x, h, w, kernel, mx);
    gaussian_valid(y, h, w, kernel, my);
    gaussian_valid(xx, h, w, kernel, mxx);
    gaussian_valid(yy, h, w, kernel, myy);
    gaussian_valid(xy, h, w, kernel, mxy);

    double acc = 0.0;
    for (size_t i = 0; i < mx.size(); ++i) {
        const double mux = mx[i], muy = my[i];
        const double vx = mxx[i] - mux * mux;
        const double vy = myy[i] - muy * muy;
        const double cxy = mxy[i] - mux * muy;
        acc += ((2.0 * mux * muy + kC1) * (2.0 * cxy + kC2)) /
               ((mux * mux + muy * muy + kC1) * (vx + vy + kC2));
    }
    return acc / static_cast<double>(mx.size());
}

}  // namespace

double mse(const HSICube& x, const HSICube& y) {
    check_same_shape(x, y, "mse");
    double acc = 0.0;
    for (std::int64_t i = 0; i < x.voxels(); ++i) {
        const double d = static_cast<double>(x.data[static_cast<size_t>(i)]) - y.data[static_cast<size_t>(i)];
        acc += d * d;
    }
    return acc / static_cast<double>(x.voxels());
}

double psnr(const HSICube& x, const HSICube& y, double peak) {
    const double m = mse(x, y);
    if (m == 0.0) return kPsnrCap;
    return std::min(10.0 * std::log10(peak * peak / m), kPsnrCap);
}

double ssim(const HSICube& x, const HSICube& y) {
    check_same_shape(x, y, "ssim");
    if (x.height < 11 || x.width < 11)
        throw std::invalid_argument("ssim: spatial extent below the 11x11 window");
    double acc = 0.0;
    for (int b = 0; b < x.bands; ++b) acc += ssim_band(x.band(b), y.band(b), x.height, x.width);
    return acc / x.bands;
}

std::vector<double> spectral_error_curve(const HSICube& x, const HSICube& y) {
    check_same_shape(x, y, "spectral_error_curve");
    std::vector<double> curve(static_cast<size_t>(x.bands), 0.0);
    for (int b = 0; b < x.bands; ++b) {
        const float* xb = x.band(b);
        const float* yb = y.band(b);
        double acc = 0.0;
        for (std::int64_t p = 0; p < x.pixels(); ++p)
            acc += std::abs(static_cast<double>(xb[p]) - yb[p]);
        curve[static_cast<size_t>(b)] = acc / static_cast<double>(x.pixels());
    }
    return curve;
}

MaskedMetrics masked_band_eval(const HSICube& x, const HSICube& y, const std::vector<int>& dropped) {
    check_same_shape(x, y, "masked_band_eval");
    if (dropped.empty()) throw std::invalid_argument("masked_band_eval: empty band set");
    HSICube xs(static_cast<int>(dropped.size()), x.height, x.width);
    HSICube ys(static_cast<int>(dropped.size()), x.height, x.width);
    for (size_t i = 0; i < dropped.size(); ++i) {
        const int b = dropped[i];
        if (b < 0 || b >= x.bands) throw std::invalid_argument("masked_band_eval: band out of range");
        std::copy_n(x.band(b), x.pixels(), xs.band(static_cast<int>(i)));
        std::copy_n(y.band(b), y.pixels(), ys.band(static_cast<int>(i)));
    }
    return {psnr(xs, ys), ssim(xs, ys)};
}

// ---------------------------------------------------------------------------
// Report serialization
// ---------------------------------------------------------------------------

std::string EvalReport::to_json() const {
    ordered_json j;
    j["seed"] = seed;
    j["config_hash"] = config_hash;
    j["psnr_mode"] = psnr_mode;
    ordered_json arr = ordered_json::array();
    for (const auto& e : entries) {
        ordered_json je;
        je["task"] = e.task;
        je["level"] = e.level;
        je["level_label"] = e.level_label;
        je["psnr_db"] = e.psnr_db;
        je["ssim"] = e.ssim_val;
        je["psnr_degraded_db"] = e.psnr_degraded_db;
        je["ssim_degraded"] = e.ssim_degraded;
        je["identical"] = e.identical;
        je["n_images"] = e.n_images;
        je["band_curve"] = e.band_curve;
        arr.push_back(je);
    }
    j["entries"] = arr;
    return j.dump(2);
}

EvalReport EvalReport::from_json(const std::string& text) {
    ordered_json j = ordered_json::parse(text);
    EvalReport r;
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.psnr_mode = j.at("psnr_mode").get<std::string>();
    for (const auto& je : j.at("entries")) {
        EvalEntry e;
        e.task = je.at("task").get<std::string>();
        e.level = je.at("level").get<double>();
        e.level_label = je.at("level_label").get<std::string>();
        e.psnr_db = je.at("psnr_db").get<double>();
        e.ssim_val = je.at("ssim").get<double>();
        e.psnr_degraded_db = je.at("psnr_degraded_db").get<double>();
        e.ssim_degraded = je.at("ssim_degraded").get<double>();
        e.identical = je.at("identical").get<bool>();
        e.n_images = je.at("n_images").get<int>();
        e.band_curve = je.at("band_curve").get<std::vector<double>>();
        r.entries.push_back(std::move(e));
    }
    return r;
}

void EvalReport::save(const std::string& path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("EvalReport::save: cannot open " + path);
    f << to_json() << "\n";
}

EvalReport EvalReport::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("EvalReport::load: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return from_json(text);
}

}  // namespace mphsir::metrics
