// Command-line front end: data synthesis, degradation, training, evaluation,
// ablation, restoration and plotting. All commands are deterministic given
// their seed and config; file outputs replay byte-identically.
//
// Relative paths resolve under $MPHSIR_ROOT when it is set. Errors print a
// machine-readable JSON object on stderr and exit nonzero.

#include "mphsir/degrade.hpp"
#include "mphsir/diagnostics.hpp"
#include "mphsir/harness.hpp"
#include "mphsir/hsicube.hpp"
#include "mphsir/metrics.hpp"
#include "mphsir/net.hpp"
#include "mphsir/plots.hpp"
#include "mphsir/predictor.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace mphsir;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string respath(const std::string& p) {
    if (p.empty() || fs::path(p).is_absolute()) return p;
    if (const char* root = std::getenv("MPHSIR_ROOT")) return (fs::path(root) / p).string();
    return p;
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(respath(path));
    if (!f) throw std::runtime_error("cannot open " + path);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

net::ModelConfig load_model_config(const std::string& path) {
    return path.empty() ? net::ModelConfig{} : net::ModelConfig::from_json(read_text_file(path));
}

harness::TrainConfig load_train_config(const std::string& path) {
    return path.empty() ? harness::TrainConfig{} : harness::TrainConfig::from_json(read_text_file(path));
}

std::pair<WeightStore<float>, predictor::PredictorConfig> load_predictor(const std::string& path) {
    auto ck = net::load_checkpoint(respath(path));
    if (ck.kind != "predictor") throw std::runtime_error("checkpoint is not a predictor: " + path);
    return {std::move(ck.store), predictor::PredictorConfig::from_json(ck.config_json)};
}

std::pair<WeightStore<float>, net::ModelConfig> load_restorer(const std::string& path) {
    auto ck = net::load_checkpoint(respath(path));
    if (ck.kind != "restorer") throw std::runtime_error("checkpoint is not a restorer: " + path);
    return {std::move(ck.store), net::ModelConfig::from_json(ck.config_json)};
}

int run_synth_data(const std::string& out_dir, std::uint64_t seed, int n_train, int n_test, int h,
                   int w, int b, int rank) {
    const fs::path dir = respath(out_dir);
    fs::create_directories(dir);
    hsi::DatasetManifest manifest;
    manifest.seed = seed;
    auto emit = [&](const std::string& split, int index, std::uint64_t cube_seed) {
        const std::string name = "cube_" + split + "_" + std::to_string(index) + ".hsc";
        const fs::path path = dir / name;
        hsi::write_cube(hsi::synth_cube(cube_seed, h, w, b, rank), path.string());
        manifest.entries.push_back({path.string(), split, split + "-" + std::to_string(index)});
    };
    for (int i = 0; i < n_train; ++i) emit("train", i, hash64(seed, 0x747261696eULL, static_cast<std::uint64_t>(i)));
    for (int i = 0; i < n_test; ++i) emit("test", i, hash64(seed, 0x74657374ULL, static_cast<std::uint64_t>(i)));
    hsi::write_manifest(manifest, (dir / "manifest.json").string());
    std::printf("%s\n", (dir / "manifest.json").string().c_str());
    return 0;
}

int run_degrade(const std::string& in, const std::string& task_name, const std::string& params,
                std::uint64_t seed, const std::string& out, const std::string& aux) {
    auto cube = hsi::read_cube(respath(in));
    auto spec = degrade::make_spec(degrade::task_from_name(task_name), params, seed);
    auto res = degrade::run(cube, spec);
    hsi::write_cube(res.cube, respath(out));
    if (!aux.empty()) {
        if (res.mask) {
            hsi::write_cube(*res.mask, respath(aux));
        } else if (!res.dropped_bands.empty()) {
            ordered_json j;
            j["dropped_bands"] = res.dropped_bands;
            std::ofstream f(respath(aux), std::ios::trunc);
            f << j.dump() << "\n";
        }
    }
    return 0;
}

int run_train(const std::string& model_cfg_path, const std::string& train_cfg_path,
              const std::string& manifest_path, const std::string& out,
              const std::string& trace, const std::string& init) {
    auto model_cfg = load_model_config(model_cfg_path);
    auto train_cfg = load_train_config(train_cfg_path);
    auto manifest = hsi::read_manifest(respath(manifest_path));
    std::optional<WeightStore<float>> init_w;
    if (!init.empty()) {
        auto [store, cfg] = load_restorer(init);
        model_cfg = cfg;
        init_w = std::move(store);
    }
    harness::train(model_cfg, train_cfg, manifest, init_w, nullptr, respath(out), respath(trace));
    return 0;
}

int run_train_predictor(const std::string& cfg_path, const std::string& manifest_path,
                        const std::string& out, const std::string& tcfg_path,
                        const std::string& report_path) {
    auto cfg = cfg_path.empty() ? predictor::PredictorConfig{}
                                : predictor::PredictorConfig::from_json(read_text_file(cfg_path));
    auto tcfg = tcfg_path.empty() ? predictor::TrainPredictorConfig{}
                                  : predictor::TrainPredictorConfig::from_json(read_text_file(tcfg_path));
    auto manifest = hsi::read_manifest(respath(manifest_path));
    auto result = predictor::train_predictor(cfg, manifest, predictor::predictor_tasks(cfg.num_tasks), tcfg);
    net::save_checkpoint(respath(out), result.weights, "predictor", cfg.to_json());
    const std::string report = result.report.to_json(predictor::predictor_tasks(cfg.num_tasks));
    if (!report_path.empty()) {
        std::ofstream f(respath(report_path), std::ios::trunc);
        f << report << "\n";
    }
    std::printf("%s\n", report.c_str());
    return 0;
}

int run_predict(const std::string& ckpt, const std::string& in) {
    auto [store, cfg] = load_predictor(ckpt);
    auto cube = hsi::read_cube(respath(in));
    auto probs = predictor::predict_degradation(store, cfg, cube);
    ordered_json j;
    const auto tasks = predictor::predictor_tasks(cfg.num_tasks);
    for (size_t i = 0; i < tasks.size(); ++i) j[degrade::task_name(tasks[i])] = probs[i];
    std::printf("%s\n", j.dump().c_str());
    return 0;
}

int run_eval(const std::string& ckpt, const std::string& manifest_path,
             const std::string& predictor_ckpt, const std::string& eval_cfg_path,
             const std::string& out) {
    auto [weights, model_cfg] = load_restorer(ckpt);
    auto manifest = hsi::read_manifest(respath(manifest_path));
    auto cfg = eval_cfg_path.empty() ? harness::EvalConfig{}
                                     : harness::EvalConfig::from_json(read_text_file(eval_cfg_path));
    std::optional<std::pair<WeightStore<float>, predictor::PredictorConfig>> pred;
    if (!predictor_ckpt.empty()) pred = load_predictor(predictor_ckpt);
    if (pred == std::nullopt) cfg.use_predictor = false;
    auto report = harness::evaluate(weights, model_cfg, pred, manifest, cfg);
    report.save(respath(out));
    for (const auto& e : report.entries)
        std::printf("%-14s %-10s psnr %6.2f (degraded %6.2f)  ssim %.4f (degraded %.4f)\n",
                    e.task.c_str(), e.level_label.c_str(), e.psnr_db, e.psnr_degraded_db, e.ssim_val,
                    e.ssim_degraded);
    return 0;
}

int run_ablate(const std::string& model_cfg_path, const std::string& train_cfg_path,
               const std::string& manifest_path, const std::string& task_name, double level,
               const std::string& out) {
    auto model_cfg = load_model_config(model_cfg_path);
    auto train_cfg = load_train_config(train_cfg_path);
    auto manifest = hsi::read_manifest(respath(manifest_path));
    harness::EvalConfig ecfg;
    ecfg.seed = train_cfg.seed;
    auto rows = harness::ablate(model_cfg, train_cfg, manifest, degrade::task_from_name(task_name),
                                level, ecfg);
    harness::write_ablation_table(rows, respath(out));
    for (const auto& r : rows)
        std::printf("%-52s psnr %6.2f  ssim %.4f  params %lld\n", r.name.c_str(), r.psnr_db,
                    r.ssim_val, static_cast<long long>(r.params));
    return 0;
}

int run_restore(const std::string& in, const std::string& ckpt, const std::string& task_name,
                const std::string& predictor_ckpt, bool soft, const std::string& out) {
    auto [weights, model_cfg] = load_restorer(ckpt);
    auto cube = hsi::read_cube(respath(in));
    net::PromptSelection sel;
    sel.soft = soft;
    if (!task_name.empty()) {
        sel.override_id = static_cast<int>(degrade::task_from_name(task_name));
    } else if (!predictor_ckpt.empty()) {
        auto [pstore, pcfg] = load_predictor(predictor_ckpt);
        sel.probs = predictor::predict_degradation(pstore, pcfg, cube);
    } else {
        throw std::runtime_error("restore needs --task or --predictor");
    }
    hsi::write_cube(net::forward_cube(weights, model_cfg, cube, sel), respath(out));
    return 0;
}

int run_plot(const std::string& report_path, const std::string& ckpt, const std::string& probe,
             const std::string& region_arg, const std::string& out_dir) {
    const fs::path dir = respath(out_dir);
    fs::create_directories(dir);
    bool did_anything = false;
    if (!report_path.empty()) {
        auto report = metrics::EvalReport::load(respath(report_path));
        harness::write_error_curves(report, (dir / "error_curves.csv").string(),
                                    (dir / "error_curves.svg").string());
        did_anything = true;
    }
    if (!ckpt.empty()) {
        auto [weights, model_cfg] = load_restorer(ckpt);
        std::vector<int> ids;
        std::vector<std::string> names;
        for (int i = 0; i < degrade::kNumAllInOneTasks; ++i) {
            ids.push_back(i);
            names.push_back(degrade::task_name(static_cast<degrade::Task>(i)));
        }
        auto sim = prompts::prompt_similarity_matrix(weights, model_cfg, 0, ids);
        harness::write_similarity_heatmap(sim, names, (dir / "prompt_similarity.csv").string(),
                                          (dir / "prompt_similarity.svg").string());
        did_anything = true;
        if (!probe.empty()) {
            auto cube = hsi::read_cube(respath(probe));
            prompts::Region region{0, 0, cube.height, cube.width};
            if (!region_arg.empty()) {
                if (std::sscanf(region_arg.c_str(), "%d,%d,%d,%d", &region.y0, &region.x0,
                                &region.height, &region.width) != 4)
                    throw std::runtime_error("--region expects y0,x0,height,width");
            }
            // Same region under two degradations of different types (noise vs
            // blur): the activation profiles should roughly agree.
            auto noisy = degrade::run(cube, degrade::make_spec(degrade::Task::GaussianNoise,
                                                               R"({"sigma":50})", 7)).cube;
            auto blurry = degrade::run(cube, degrade::make_spec(degrade::Task::GaussianBlur,
                                                                R"({"kernel_size":9})", 0)).cube;
            std::vector<std::pair<std::string, std::vector<double>>> series;
            series.emplace_back("gaussian noise",
                                prompts::spectral_prompt_activations(weights, model_cfg, noisy, region));
            series.emplace_back("gaussian blur",
                                prompts::spectral_prompt_activations(weights, model_cfg, blurry, region));
            harness::write_activation_chart(series, (dir / "prompt_activations.csv").string(),
                                            (dir / "prompt_activations.svg").string());
        }
    }
    if (!did_anything) throw std::runtime_error("plot: need --report and/or --ckpt");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MP-HSIR: prompt-guided universal hyperspectral image restoration"};
    app.require_subcommand(1);

    // synth-data
    std::string out_dir = "data";
    std::uint64_t seed = 0;
    int n_train = 8, n_test = 4, sh = 64, sw = 64, sb = 31, rank = 4;
    auto* synth = app.add_subcommand("synth-data", "Generate synthetic low-rank cubes and a manifest");
    synth->add_option("--out-dir", out_dir);
    synth->add_option("--seed", seed);
    synth->add_option("--train", n_train);
    synth->add_option("--test", n_test);
    synth->add_option("--height", sh);
    synth->add_option("--width", sw);
    synth->add_option("--bands", sb);
    synth->add_option("--rank", rank);

    // degrade
    std::string d_in, d_task, d_params, d_out, d_aux;
    std::uint64_t d_seed = 0;
    auto* deg = app.add_subcommand("degrade", "Apply one degradation task to a cube");
    deg->add_option("--in", d_in)->required();
    deg->add_option("--task", d_task)->required();
    deg->add_option("--params", d_params);
    deg->add_option("--seed", d_seed);
    deg->add_option("--out", d_out)->required();
    deg->add_option("--aux", d_aux);

    // train
    std::string t_model, t_cfg, t_manifest, t_out, t_trace, t_init;
    auto* tr = app.add_subcommand("train", "Train the restoration model");
    tr->add_option("--model", t_model);
    tr->add_option("--train-config", t_cfg);
    tr->add_option("--manifest", t_manifest)->required();
    tr->add_option("--out", t_out)->required();
    tr->add_option("--trace", t_trace);
    tr->add_option("--init", t_init);

    // train-predictor
    std::string p_cfg, p_manifest, p_out, p_tcfg, p_report;
    auto* tp = app.add_subcommand("train-predictor", "Train the degradation classifier");
    tp->add_option("--config", p_cfg);
    tp->add_option("--data", p_manifest)->required();
    tp->add_option("--out", p_out)->required();
    tp->add_option("--train-config", p_tcfg);
    tp->add_option("--report", p_report);

    // predict
    std::string pr_ckpt, pr_in;
    auto* pr = app.add_subcommand("predict", "Classify the degradation of a cube");
    pr->add_option("--ckpt", pr_ckpt)->required();
    pr->add_option("--in", pr_in)->required();

    // eval
    std::string e_ckpt, e_manifest, e_pred, e_cfg, e_out = "report.json";
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint over the task grid");
    ev->add_option("--ckpt", e_ckpt)->required();
    ev->add_option("--manifest", e_manifest)->required();
    ev->add_option("--predictor", e_pred);
    ev->add_option("--config", e_cfg);
    ev->add_option("--out", e_out);

    // ablate
    std::string a_model, a_cfg, a_manifest, a_task = "Inpaint", a_out = "ablation.csv";
    double a_level = 0.9;
    auto* ab = app.add_subcommand("ablate", "Run the eight-variant ablation plan");
    ab->add_option("--model", a_model);
    ab->add_option("--train-config", a_cfg);
    ab->add_option("--manifest", a_manifest)->required();
    ab->add_option("--task", a_task);
    ab->add_option("--level", a_level);
    ab->add_option("--out", a_out);

    // restore
    std::string r_in, r_ckpt, r_task, r_pred, r_out;
    bool r_soft = false;
    auto* rs = app.add_subcommand("restore", "Restore a degraded cube");
    rs->add_option("--in", r_in)->required();
    rs->add_option("--ckpt", r_ckpt)->required();
    rs->add_option("--task", r_task);
    rs->add_option("--predictor", r_pred);
    rs->add_flag("--soft", r_soft);
    rs->add_option("--out", r_out)->required();

    // plot
    std::string pl_report, pl_ckpt, pl_probe, pl_region, pl_out = "plots";
    auto* pl = app.add_subcommand("plot", "Emit CSV/SVG diagnostics");
    pl->add_option("--report", pl_report);
    pl->add_option("--ckpt", pl_ckpt);
    pl->add_option("--probe", pl_probe);
    pl->add_option("--region", pl_region);
    pl->add_option("--out-dir", pl_out);

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return run_synth_data(out_dir, seed, n_train, n_test, sh, sw, sb, rank);
        if (deg->parsed()) return run_degrade(d_in, d_task, d_params, d_seed, d_out, d_aux);
        if (tr->parsed()) return run_train(t_model, t_cfg, t_manifest, t_out, t_trace, t_init);
        if (tp->parsed()) return run_train_predictor(p_cfg, p_manifest, p_out, p_tcfg, p_report);
        if (pr->parsed()) return run_predict(pr_ckpt, pr_in);
        if (ev->parsed()) return run_eval(e_ckpt, e_manifest, e_pred, e_cfg, e_out);
        if (ab->parsed()) return run_ablate(a_model, a_cfg, a_manifest, a_task, a_level, a_out);
        if (rs->parsed()) return run_restore(r_in, r_ckpt, r_task, r_pred, r_soft, r_out);
        if (pl->parsed()) return run_plot(pl_report, pl_ckpt, pl_probe, pl_region, pl_out);
    } catch (const std::exception& e) {
        ordered_json err;
        err["error"] = e.what();
        std::fprintf(stderr, "%s\n", err.dump().c_str());
        return 1;
    }
    return 0;
}
