#include "mphsir/degrade.hpp"
#include "mphsir/hsicube.hpp"
#include "mphsir/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace mphsir;
using hsi::HSICube;

namespace {

HSICube test_cube(std::uint64_t seed = 1, int h = 64, int w = 64, int b = 31, int rank = 4) {
    return hsi::synth_cube(seed, h, w, b, rank);
}

double sample_std(const HSICube& a, const HSICube& ref) {
    double mean = 0;
    for (std::int64_t i = 0; i < a.voxels(); ++i)
        mean += a.data[static_cast<size_t>(i)] - ref.data[static_cast<size_t>(i)];
    mean /= static_cast<double>(a.voxels());
    double var = 0;
    for (std::int64_t i = 0; i < a.voxels(); ++i) {
        const double d = a.data[static_cast<size_t>(i)] - ref.data[static_cast<size_t>(i)] - mean;
        var += d * d;
    }
    return std::sqrt(var / static_cast<double>(a.voxels() - 1));
}

}  // namespace

TEST_CASE("gaussian noise moments and determinism") {
    auto cube = test_cube();
    auto noisy = degrade::apply_gaussian_noise(cube, 50.0, 77);
    const double target = 50.0 / 255.0;
    CHECK(sample_std(noisy, cube) == doctest::Approx(target).epsilon(0.02));
    // Mean of the additive noise stays near zero (3 sigma / sqrt(N) bound).
    double mean = 0;
    for (std::int64_t i = 0; i < cube.voxels(); ++i)
        mean += noisy.data[static_cast<size_t>(i)] - cube.data[static_cast<size_t>(i)];
    mean /= static_cast<double>(cube.voxels());
    CHECK(std::abs(mean) < 3.0 * target / std::sqrt(static_cast<double>(cube.voxels())));

    auto again = degrade::apply_gaussian_noise(cube, 50.0, 77);
    CHECK(again.data == noisy.data);
    auto tiny = degrade::apply_gaussian_noise(cube, 1e-9, 3);
    for (size_t i = 0; i < cube.data.size(); ++i) CHECK(std::abs(tiny.data[i] - cube.data[i]) < 1e-9);
    CHECK_THROWS(degrade::apply_gaussian_noise(cube, 0.0, 1));
    CHECK_THROWS(degrade::apply_gaussian_noise(cube, -3.0, 1));
}

TEST_CASE("complex noise case 1 keeps per-band std inside the sampled range") {
    auto cube = test_cube(2);
    auto noisy = degrade::apply_complex_noise(cube, 1, 5);
    for (int b = 0; b < cube.bands; ++b) {
        double var = 0, mean = 0;
        const float* nb = noisy.band(b);
        const float* cb = cube.band(b);
        for (std::int64_t p = 0; p < cube.pixels(); ++p) mean += nb[p] - cb[p];
        mean /= static_cast<double>(cube.pixels());
        for (std::int64_t p = 0; p < cube.pixels(); ++p) {
            const double d = nb[p] - cb[p] - mean;
            var += d * d;
        }
        const double sd = std::sqrt(var / static_cast<double>(cube.pixels() - 1));
        CHECK(sd > 10.0 / 255.0 * 0.95);
        CHECK(sd < 70.0 / 255.0 * 1.05);
    }
}

TEST_CASE("complex noise case 3 zeroes full columns on a third of the bands") {
    auto cube = test_cube(3);
    auto noisy = degrade::apply_complex_noise(cube, 3, 11);
    int bands_with_dead_columns = 0;
    for (int b = 0; b < cube.bands; ++b) {
        const float* nb = noisy.band(b);
        int dead = 0;
        for (int x = 0; x < cube.width; ++x) {
            bool all_zero = true;
            for (int y = 0; y < cube.height && all_zero; ++y) all_zero = nb[y * cube.width + x] == 0.0f;
            if (all_zero) ++dead;
        }
        if (dead > 0) ++bands_with_dead_columns;
    }
    CHECK(bands_with_dead_columns == 31 / 3);
}

TEST_CASE("complex noise case 4 corrupts a third of the bands with impulses") {
    auto cube = test_cube(4);
    auto noisy = degrade::apply_complex_noise(cube, 4, 13);
    int affected = 0;
    for (int b = 0; b < cube.bands; ++b) {
        const float* nb = noisy.band(b);
        std::int64_t extremes = 0;
        for (std::int64_t p = 0; p < cube.pixels(); ++p)
            if (nb[p] == 0.0f || nb[p] == 1.0f) ++extremes;
        const double frac = static_cast<double>(extremes) / static_cast<double>(cube.pixels());
        if (frac > 0.05) {
            ++affected;
            CHECK(frac > 0.10 - 0.02);
            CHECK(frac < 0.70 + 0.02);
        }
    }
    CHECK(affected == 31 / 3);
    CHECK_THROWS(degrade::apply_complex_noise(cube, 5, 1));
    CHECK_THROWS(degrade::apply_complex_noise(cube, 0, 1));
}

TEST_CASE("blur sigma follows the kernel-size rule") {
    const int k[6] = {3, 7, 9, 11, 15, 21};
    const double expected[6] = {0.8, 1.4, 1.7, 2.0, 2.6, 3.5};
    for (int i = 0; i < 6; ++i)
        CHECK(degrade::blur_sigma(k[i]) == doctest::Approx(expected[i]).epsilon(1e-12));
    CHECK_THROWS(degrade::blur_sigma(2));
    CHECK_THROWS(degrade::blur_sigma(1));
    CHECK_THROWS(degrade::blur_sigma(-5));
}

TEST_CASE("gaussian blur has unit DC gain and reproduces its kernel on an impulse") {
    HSICube flat(3, 32, 32);
    std::fill(flat.data.begin(), flat.data.end(), 0.37f);
    auto blurred = degrade::apply_gaussian_blur(flat, 9);
    for (float v : blurred.data) CHECK(std::abs(v - 0.37f) < 1e-6);

    HSICube impulse(1, 33, 33);
    impulse.at(0, 16, 16) = 1.0f;
    auto resp = degrade::apply_gaussian_blur(impulse, 9);
    // Reference kernel built directly from the sigma rule.
    const double sigma = degrade::blur_sigma(9);
    double k1[9], sum = 0;
    for (int i = -4; i <= 4; ++i) {
        k1[i + 4] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += k1[i + 4];
    }
    for (double& v : k1) v /= sum;
    double total = 0;
    for (int dy = -4; dy <= 4; ++dy)
        for (int dx = -4; dx <= 4; ++dx) {
            const double expect = k1[dy + 4] * k1[dx + 4];
            CHECK(std::abs(resp.at(0, 16 + dy, 16 + dx) - expect) < 1e-6);
            total += resp.at(0, 16 + dy, 16 + dx);
        }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
    HSICube small(1, 4, 4);
    small.at(0, 1, 1) = 1.0f;
    CHECK_THROWS(degrade::apply_gaussian_blur(small, 9));
}

TEST_CASE("downsample-unpool keeps constants, replicates blocks, preserves ramps") {
    HSICube flat(2, 32, 32);
    std::fill(flat.data.begin(), flat.data.end(), 0.62f);
    auto du = degrade::downsample_then_unpool(flat, 4);
    for (float v : du.data) CHECK(std::abs(v - 0.62f) < 1e-6);

    auto cube = test_cube(6, 32, 32, 3, 2);
    auto out = degrade::downsample_then_unpool(cube, 2);
    CHECK(out.height == 32);
    for (int b = 0; b < out.bands; ++b)
        for (int y = 0; y < 32; y += 2)
            for (int x = 0; x < 32; x += 2) {
                const float v = out.at(b, y, x);
                CHECK(out.at(b, y + 1, x) == v);
                CHECK(out.at(b, y, x + 1) == v);
                CHECK(out.at(b, y + 1, x + 1) == v);
            }

    // A linear ramp is reproduced by the cubic filter away from the border.
    HSICube ramp(1, 32, 32);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) ramp.at(0, y, x) = static_cast<float>(x) / 31.0f;
    auto low = degrade::bicubic_downsample(ramp, 2);
    for (int y = 0; y < 16; ++y)
        for (int x = 1; x < 15; ++x) {
            const double expect = ((x + 0.5) * 2.0 - 0.5) / 31.0;
            CHECK(std::abs(low.at(0, y, x) - expect) < 1e-6);
        }
    CHECK_THROWS(degrade::downsample_then_unpool(cube, 3));
    HSICube odd(1, 30, 30);
    CHECK_THROWS(degrade::downsample_then_unpool(odd, 4));
}

TEST_CASE("inpainting masks exactly the rounded pixel count") {
    auto cube = test_cube(8);
    auto [masked, mask] = degrade::apply_inpaint_mask(cube, 0.9, 21);
    std::int64_t zeros = 0;
    for (std::int64_t p = 0; p < mask.pixels(); ++p)
        if (mask.data[static_cast<size_t>(p)] == 0.0f) ++zeros;
    CHECK(zeros == 3686);  // round(0.9 * 4096)
    for (std::int64_t p = 0; p < mask.pixels(); ++p) {
        if (mask.data[static_cast<size_t>(p)] == 0.0f) {
            for (int b = 0; b < cube.bands; ++b) CHECK(masked.band(b)[p] == 0.0f);
        } else {
            for (int b = 0; b < cube.bands; ++b) CHECK(masked.band(b)[p] == cube.band(b)[p]);
        }
    }
    auto [again, mask2] = degrade::apply_inpaint_mask(cube, 0.9, 21);
    CHECK(mask2.data == mask.data);
    // A vanishing rate masks nothing.
    auto [ident, mask3] = degrade::apply_inpaint_mask(cube, 1e-9, 4);
    CHECK(ident.data == cube.data);
    CHECK_THROWS(degrade::apply_inpaint_mask(cube, 0.0, 1));
    CHECK_THROWS(degrade::apply_inpaint_mask(cube, 1.0, 1));
}

TEST_CASE("haze reduces to identity and exact mixtures in closed form") {
    auto cube = test_cube(9, 32, 32, 8, 3);
    degrade::HazeParams hp;
    hp.omega = 0.8;
    hp.atmos_light = 0.9;
    hp.cirrus = HSICube(1, 32, 32);  // B9 = 0 -> t1 = 1 -> identity
    auto out = degrade::apply_haze(cube, hp);
    for (size_t i = 0; i < cube.data.size(); ++i) CHECK(std::abs(out.data[i] - cube.data[i]) < 1e-12);

    // Single band at the reference wavelength: t = t1 = 0.5 halves J - A.
    HSICube ones(1, 16, 16);
    std::fill(ones.data.begin(), ones.data.end(), 1.0f);
    ones.wavelengths = {500.0};
    degrade::HazeParams half;
    half.omega = 0.5;
    half.atmos_light = 1e-9;  // effectively zero atmospheric light
    half.cirrus = HSICube(1, 16, 16);
    std::fill(half.cirrus.data.begin(), half.cirrus.data.end(), 1.0f);
    auto halved = degrade::apply_haze(ones, half);
    for (float v : halved.data) CHECK(v == doctest::Approx(0.5).epsilon(1e-6));

    // Full haze saturates to the atmospheric light through the t_min clamp.
    degrade::HazeParams full;
    full.omega = 1.0;
    full.atmos_light = 0.8;
    full.cirrus = HSICube(1, 16, 16);
    std::fill(full.cirrus.data.begin(), full.cirrus.data.end(), 1.0f);
    auto saturated = degrade::apply_haze(ones, full);
    for (float v : saturated.data)
        CHECK(std::abs(v - (1.0 * 1e-3 + 0.8 * (1.0 - 1e-3))) < 1e-6);

    // Convex combination: every voxel stays between J and A.
    degrade::HazeParams rnd;
    rnd.omega = 0.7;
    rnd.atmos_light = 0.6;
    rnd.cirrus = degrade::synth_cirrus_map(5, 32, 32);
    auto hazy = degrade::apply_haze(cube, rnd);
    for (int b = 0; b < cube.bands; ++b)
        for (std::int64_t p = 0; p < cube.pixels(); ++p) {
            const double lo = std::min<double>(cube.band(b)[p], 0.6);
            const double hi = std::max<double>(cube.band(b)[p], 0.6);
            CHECK(hazy.band(b)[p] >= lo - 1e-6);
            CHECK(hazy.band(b)[p] <= hi + 1e-6);
        }

    HSICube no_wl(2, 16, 16);
    CHECK_THROWS(degrade::apply_haze(no_wl, rnd));
}

TEST_CASE("cirrus maps are smooth, bounded and reproducible") {
    auto a = degrade::synth_cirrus_map(11, 64, 64);
    auto b = degrade::synth_cirrus_map(11, 64, 64);
    CHECK(a.data == b.data);
    for (float v : a.data) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
    // Lag-1 spatial autocorrelation as a smoothness proxy.
    double mean = 0;
    for (float v : a.data) mean += v;
    mean /= static_cast<double>(a.pixels());
    double num = 0, den = 0;
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x + 1 < 64; ++x) {
            const double u = a.at(0, y, x) - mean, w = a.at(0, y, x + 1) - mean;
            num += u * w;
            den += u * u;
        }
    CHECK(num / den > 0.9);
}

TEST_CASE("band dropping zeroes the sampled bands and keeps the rest") {
    auto cube = test_cube(10);
    auto [out, dropped] = degrade::drop_bands(cube, 0.2, 31);
    CHECK(dropped.size() == 6);  // round(0.2 * 31)
    std::set<int> dset(dropped.begin(), dropped.end());
    CHECK(dset.size() == dropped.size());
    for (int b = 0; b < cube.bands; ++b) {
        if (dset.count(b)) {
            for (std::int64_t p = 0; p < cube.pixels(); ++p) CHECK(out.band(b)[p] == 0.0f);
        } else {
            CHECK(std::equal(out.band(b), out.band(b) + cube.pixels(), cube.band(b)));
        }
    }
    auto big = test_cube(12, 16, 16, 100, 5);
    CHECK(degrade::drop_bands(big, 0.1, 3).second.size() == 10);
    CHECK_THROWS(degrade::drop_bands(cube, 0.001, 1));  // rounds to zero bands
    CHECK_THROWS(degrade::drop_bands(cube, 0.999, 1));  // rounds to all bands
}

TEST_CASE("motion blur kernels are normalized line segments") {
    HSICube flat(2, 40, 40);
    std::fill(flat.data.begin(), flat.data.end(), 0.45f);
    auto blurred = degrade::apply_motion_blur(flat, 15, 45.0);
    for (float v : blurred.data) CHECK(std::abs(v - 0.45f) < 1e-6);

    HSICube impulse(1, 21, 21);
    impulse.at(0, 10, 10) = 1.0f;
    auto resp = degrade::apply_motion_blur(impulse, 4, 0.0);
    double total = 0;
    for (int x = 0; x < 21; ++x) {
        const float v = resp.at(0, 10, x);
        if (x >= 6 && x <= 14)
            CHECK(v == doctest::Approx(1.0 / 9.0).epsilon(1e-9));
        else
            CHECK(v == 0.0f);
        total += v;
    }
    for (int y = 0; y < 21; ++y)
        if (y != 10)
            for (int x = 0; x < 21; ++x) CHECK(resp.at(0, y, x) == 0.0f);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));  // float32 response sum
    CHECK_THROWS(degrade::apply_motion_blur(flat, 0, 45.0));
}

TEST_CASE("poisson noise matches its moment identities") {
    HSICube zeros(1, 16, 16);
    auto z = degrade::apply_poisson(zeros, 10.0, 3);
    for (float v : z.data) CHECK(v == 0.0f);

    HSICube half(31, 64, 64);  // >= 1e5 voxels
    std::fill(half.data.begin(), half.data.end(), 0.5f);
    auto noisy = degrade::apply_poisson(half, 10.0, 9);
    double mean = 0;
    for (float v : noisy.data) mean += v;
    mean /= static_cast<double>(half.voxels());
    CHECK(mean == doctest::Approx(0.5).epsilon(0.02));
    double var = 0;
    for (float v : noisy.data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(half.voxels() - 1);
    CHECK(var == doctest::Approx(0.05).epsilon(0.10));

    auto again = degrade::apply_poisson(half, 10.0, 9);
    CHECK(again.data == noisy.data);
    HSICube neg(1, 4, 4);
    neg.at(0, 0, 0) = -0.1f;
    CHECK_THROWS(degrade::apply_poisson(neg, 10.0, 1));
    CHECK_THROWS(degrade::apply_poisson(half, 0.0, 1));
}

TEST_CASE("dispatch returns labels, auxiliary outputs and replays exactly") {
    auto cube = test_cube(14);
    auto spec = degrade::make_spec(degrade::Task::GaussianNoise, R"({"sigma":40})", 5);
    auto res = degrade::run(cube, spec);
    CHECK(res.label == degrade::Task::GaussianNoise);
    CHECK(!res.mask.has_value());

    auto inp = degrade::run(cube, degrade::make_spec(degrade::Task::Inpaint, R"({"rate":0.8})", 6));
    REQUIRE(inp.mask.has_value());
    std::int64_t zeros = 0;
    for (float v : inp.mask->data)
        if (v == 0.0f) ++zeros;
    CHECK(zeros == std::llround(0.8 * 64 * 64));

    auto bd = degrade::run(cube, degrade::make_spec(degrade::Task::BandDrop, R"({"rate":0.2})", 7));
    CHECK(bd.dropped_bands.size() == 6);

    auto res2 = degrade::run(cube, spec);
    CHECK(res2.cube.data == res.cube.data);

    CHECK_THROWS(degrade::make_spec(degrade::Task::GaussianNoise, R"({"sigma":-1})", 0));
    CHECK_THROWS(degrade::make_spec(degrade::Task::Downsample, R"({"scale":3})", 0));
    CHECK_THROWS(degrade::task_from_name("NotATask"));
}

TEST_CASE("sampled specs stay inside the documented ranges") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        auto g = degrade::sample_spec(degrade::Task::GaussianNoise, seed);
        const double sigma = std::get<degrade::GaussianNoiseParams>(g.params).sigma;
        CHECK(sigma >= 30.0);
        CHECK(sigma <= 70.0);
        auto c = degrade::sample_spec(degrade::Task::ComplexNoise, seed);
        const int cid = std::get<degrade::ComplexNoiseParams>(c.params).case_id;
        CHECK(cid >= 1);
        CHECK(cid <= 4);
        auto i = degrade::sample_spec(degrade::Task::Inpaint, seed);
        const double rate = std::get<degrade::InpaintParams>(i.params).rate;
        CHECK(rate >= 0.7);
        CHECK(rate <= 0.9);
    }
    auto a = degrade::sample_spec(degrade::Task::Haze, 5);
    auto b = degrade::sample_spec(degrade::Task::Haze, 5);
    CHECK(std::get<degrade::HazeParams>(a.params).omega ==
          std::get<degrade::HazeParams>(b.params).omega);
}
