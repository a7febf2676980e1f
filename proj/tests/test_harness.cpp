#include "mphsir/harness.hpp"
#include "mphsir/plots.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace mphsir;

namespace {

struct Fixture {
    std::filesystem::path dir;
    hsi::DatasetManifest manifest;

    explicit Fixture(const std::string& name, int n_train = 2, int n_test = 2, int extent = 32,
                     int bands = 8) {
        dir = std::filesystem::temp_directory_path() / name;
        std::filesystem::create_directories(dir);
        manifest.seed = 1;
        for (int i = 0; i < n_train + n_test; ++i) {
            const auto p = (dir / ("c" + std::to_string(i) + ".hsc")).string();
            hsi::write_cube(hsi::synth_cube(static_cast<std::uint64_t>(50 + i), extent, extent, bands, 3), p);
            manifest.entries.push_back({p, i < n_train ? "train" : "test", "s" + std::to_string(i)});
        }
    }
};

net::ModelConfig tiny_model() {
    net::ModelConfig cfg;
    cfg.in_bands = 8;
    cfg.base_channels = 8;
    cfg.blocks = {1, 1, 1};
    cfg.heads = {2, 2, 2};
    cfg.window = 4;
    cfg.prompt_len = 4;
    cfg.prompt_dim = 8;
    cfg.n_visual_tokens = 2;
    cfg.text_dim = 16;
    return cfg;
}

std::string file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("cosine schedule endpoints, midpoint and monotonicity") {
    CHECK(harness::cosine_lr(0, 100, 2e-4, 1e-6) == doctest::Approx(2e-4).epsilon(1e-12));
    CHECK(harness::cosine_lr(100, 100, 2e-4, 1e-6) == doctest::Approx(1e-6).epsilon(1e-12));
    CHECK(harness::cosine_lr(50, 100, 2e-4, 1e-6) == doctest::Approx(1.005e-4).epsilon(1e-9));
    double prev = 1.0;
    for (int s = 0; s <= 200; ++s) {
        const double lr = harness::cosine_lr(s, 200, 2e-4, 1e-6);
        CHECK(lr <= prev + 1e-15);
        prev = lr;
    }
    CHECK_THROWS(harness::cosine_lr(0, 0, 1e-3, 1e-6));
    CHECK_THROWS(harness::cosine_lr(-1, 10, 1e-3, 1e-6));
}

TEST_CASE("cube-level l1 loss") {
    auto x = hsi::synth_cube(3, 16, 16, 4, 2);
    CHECK(harness::l1_loss(x, x) == 0.0);
    auto y = x;
    for (auto& v : y.data) v += 0.1f;
    CHECK(harness::l1_loss(x, y) == doctest::Approx(0.1).epsilon(1e-6));
}

TEST_CASE("training replays bit-identically and writes its artifacts") {
    Fixture fx("mphsir_harness_train");
    auto cfg = tiny_model();
    harness::TrainConfig tc;
    tc.steps = 4;
    tc.batch = 1;
    tc.patch = 16;
    tc.seed = 5;
    tc.log_every = 0;
    const auto ck1 = (fx.dir / "a.ckpt").string();
    const auto ck2 = (fx.dir / "b.ckpt").string();
    const auto tr1 = (fx.dir / "a.csv").string();
    const auto tr2 = (fx.dir / "b.csv").string();
    auto r1 = harness::train(cfg, tc, fx.manifest, std::nullopt, nullptr, ck1, tr1);
    auto r2 = harness::train(cfg, tc, fx.manifest, std::nullopt, nullptr, ck2, tr2);
    CHECK(r1.loss_trace == r2.loss_trace);
    CHECK(file_bytes(ck1) == file_bytes(ck2));
    CHECK(file_bytes(tr1) == file_bytes(tr2));
    // Trace file has one line per step plus the header.
    std::ifstream f(tr1);
    int lines = 0;
    std::string line;
    while (std::getline(f, line)) ++lines;
    CHECK(lines == 5);
}

TEST_CASE("training rejects invalid configurations") {
    Fixture fx("mphsir_harness_bad");
    auto cfg = tiny_model();
    harness::TrainConfig tc;
    tc.steps = 2;
    tc.patch = 15;  // not a multiple of 4 * window
    CHECK_THROWS(harness::train(cfg, tc, fx.manifest));
    tc.patch = 16;
    tc.lr_min = 1.0;
    CHECK_THROWS(harness::train(cfg, tc, fx.manifest));
    harness::TrainConfig ok;
    hsi::DatasetManifest empty;
    CHECK_THROWS(harness::train(cfg, ok, empty));
}

TEST_CASE("train config json round trip") {
    harness::TrainConfig tc;
    tc.steps = 123;
    tc.batch = 3;
    tc.task_mix = {{degrade::Task::Haze, 2.0}, {degrade::Task::Inpaint, 1.0}};
    auto back = harness::TrainConfig::from_json(tc.to_json());
    CHECK(back.steps == 123);
    CHECK(back.task_mix.size() == 2);
    CHECK(back.task_mix[0].task == degrade::Task::Haze);
    CHECK(back.to_json() == tc.to_json());
}

TEST_CASE("identity model evaluates to the degraded baseline") {
    Fixture fx("mphsir_harness_eval", 2, 2, 32, 8);
    auto cfg = tiny_model();
    auto store = net::build_model<float>(cfg, 3);
    auto& hw = store.at("head.w");
    for (std::int64_t i = 0; i < hw.size(); ++i) hw[i] = 0.0f;
    harness::EvalConfig ec;
    ec.patch = 32;
    ec.use_predictor = false;
    ec.finetune_steps = 0;
    ec.max_test_scenes = 1;
    ec.tasks = {degrade::Task::GaussianNoise, degrade::Task::Inpaint};
    auto report = harness::evaluate(store, cfg, std::nullopt, fx.manifest, ec);
    CHECK(report.entries.size() == 6);  // three noise levels + three mask rates
    for (const auto& e : report.entries) {
        CHECK(e.psnr_db == doctest::Approx(e.psnr_degraded_db).epsilon(1e-9));
        CHECK(e.ssim_val == doctest::Approx(e.ssim_degraded).epsilon(1e-9));
        CHECK(e.band_curve.size() == 8);
        CHECK(e.n_images == 1);
    }
    // Round trip through disk.
    const auto rp = (fx.dir / "report.json").string();
    report.save(rp);
    auto back = metrics::EvalReport::load(rp);
    CHECK(back.to_json() == report.to_json());
}

TEST_CASE("ablation plan has eight variants with strictly growing capability") {
    auto full = tiny_model();
    auto plan = harness::ablation_plan(full);
    REQUIRE(plan.size() == 8);
    CHECK(plan.front().name.find("baseline") != std::string::npos);
    CHECK(plan.back().name == "full model");

    std::vector<std::int64_t> counts;
    for (const auto& v : plan)
        counts.push_back(net::build_model<float>(v.config, 1).count_params());
    // Full model strictly dominates the baseline.
    CHECK(counts.back() > counts.front());
    // Along nested-feature chains the parameter count strictly increases.
    CHECK(counts[0] < counts[1]);  // baseline -> +text
    CHECK(counts[0] < counts[2]);  // baseline -> +visual
    CHECK(counts[1] < counts[3]);  // +text -> +text+visual
    CHECK(counts[2] < counts[3]);
    CHECK(counts[3] < counts[4]);  // -> +global spectral
    CHECK(counts[3] < counts[5]);  // -> +local spectral
    CHECK(counts[5] < counts[6]);  // -> +spectral prompt
    CHECK(counts[6] < counts[7]);  // -> full
    CHECK(counts[4] < counts[7]);
}

TEST_CASE("plot emitters write csv and svg artifacts") {
    const auto dir = std::filesystem::temp_directory_path() / "mphsir_plots";
    std::filesystem::create_directories(dir);

    metrics::EvalReport report;
    report.seed = 1;
    report.config_hash = "x";
    metrics::EvalEntry e;
    e.task = "GaussianNoise";
    e.level_label = "sigma=50";
    e.band_curve = {0.01, 0.03, 0.02, 0.04};
    report.entries.push_back(e);
    harness::write_error_curves(report, (dir / "curves.csv").string(), (dir / "curves.svg").string());
    std::ifstream csv((dir / "curves.csv").string());
    int rows = 0;
    std::string line;
    while (std::getline(csv, line)) ++rows;
    CHECK(rows == 5);  // header + one row per band

    std::vector<std::vector<double>> sim{{1.0, 0.2}, {0.2, 1.0}};
    harness::write_similarity_heatmap(sim, {"a", "b"}, (dir / "sim.csv").string(),
                                      (dir / "sim.svg").string());
    std::ifstream simcsv((dir / "sim.csv").string());
    bool saw_unit_diag = false;
    while (std::getline(simcsv, line))
        if (line.find("a,a,1") != std::string::npos) saw_unit_diag = true;
    CHECK(saw_unit_diag);

    harness::write_activation_chart({{"noise", {0.5, 0.3, 0.2}}, {"blur", {0.4, 0.4, 0.2}}},
                                    (dir / "act.csv").string(), (dir / "act.svg").string());
    CHECK(std::filesystem::file_size(dir / "act.svg") > 100);
    CHECK(std::filesystem::file_size(dir / "curves.svg") > 100);
}

TEST_CASE("evaluation specs cover the documented grid") {
    using degrade::Task;
    CHECK(harness::eval_levels(Task::GaussianNoise).size() == 3);
    CHECK(harness::eval_levels(Task::ComplexNoise).size() == 4);
    CHECK(harness::eval_levels(Task::Haze).size() == 3);
    CHECK(harness::eval_levels(Task::PoissonNoise).size() == 1);
    auto spec = harness::eval_spec(Task::GaussianNoise, 50, 7);
    CHECK(std::get<degrade::GaussianNoiseParams>(spec.params).sigma == 50.0);
    auto mb = harness::eval_spec(Task::MotionBlur, 15, 7);
    CHECK(std::get<degrade::MotionBlurParams>(mb.params).radius == 15);
    CHECK(std::get<degrade::MotionBlurParams>(mb.params).angle_deg == 45.0);
}
