#include "mphsir/harness.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace mphsir::harness {

using hsi::HSICube;
using ordered_json = nlohmann::ordered_json;

double l1_loss(const HSICube& pred, const HSICube& target) {
    if (pred.voxels() != target.voxels() || pred.bands != target.bands)
        throw std::invalid_argument("l1_loss: shape mismatch");
    double acc = 0.0;
    for (std::int64_t i = 0; i < pred.voxels(); ++i)
        acc += std::abs(static_cast<double>(pred.data[static_cast<size_t>(i)]) -
                        target.data[static_cast<size_t>(i)]);
    return acc / static_cast<double>(pred.voxels());
}

std::vector<TaskMixEntry> default_task_mix() {
    std::vector<TaskMixEntry> mix;
    for (int i = 0; i < degrade::kNumAllInOneTasks; ++i)
        mix.push_back({static_cast<degrade::Task>(i), 1.0});
    return mix;
}

void TrainConfig::validate() const {
    if (!(lr_min < lr_init)) throw std::invalid_argument("train config: lr_min must be below lr_init");
    if (batch < 1) throw std::invalid_argument("train config: batch must be >= 1");
    if (steps < 1) throw std::invalid_argument("train config: steps must be >= 1");
    if (patch < 1) throw std::invalid_argument("train config: patch must be >= 1");
    if (loss != "L1") throw std::invalid_argument("train config: unsupported loss '" + loss + "'");
}

std::string TrainConfig::to_json() const {
    ordered_json j;
    j["lr_init"] = lr_init;
    j["lr_min"] = lr_min;
    j["steps"] = steps;
    j["batch"] = batch;
    j["patch"] = patch;
    j["beta1"] = beta1;
    j["beta2"] = beta2;
    j["weight_decay"] = weight_decay;
    j["loss"] = loss;
    j["seed"] = seed;
    j["warmup_steps"] = warmup_steps;
    j["checkpoint_every"] = checkpoint_every;
    j["log_every"] = log_every;
    ordered_json mix = ordered_json::array();
    for (const auto& m : task_mix) {
        ordered_json e;
        e["task"] = degrade::task_name(m.task);
        e["weight"] = m.weight;
        mix.push_back(e);
    }
    j["task_mix"] = mix;
    return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
    ordered_json j = ordered_json::parse(text);
    TrainConfig c;
    c.lr_init = j.value("lr_init", c.lr_init);
    c.lr_min = j.value("lr_min", c.lr_min);
    c.steps = j.value("steps", c.steps);
    c.batch = j.value("batch", c.batch);
    c.patch = j.value("patch", c.patch);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.loss = j.value("loss", c.loss);
    c.seed = j.value("seed", c.seed);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.log_every = j.value("log_every", c.log_every);
    if (j.contains("task_mix")) {
        for (const auto& e : j.at("task_mix"))
            c.task_mix.push_back({degrade::task_from_name(e.at("task").get<std::string>()),
                                  e.value("weight", 1.0)});
    }
    c.validate();
    return c;
}

namespace {

HSICube crop(const HSICube& cube, int y0, int x0, int size) {
    HSICube p(cube.bands, size, size);
    p.wavelengths = cube.wavelengths;
    for (int b = 0; b < cube.bands; ++b)
        for (int y = 0; y < size; ++y)
            std::copy_n(cube.band(b) + static_cast<std::int64_t>(y0 + y) * cube.width + x0, size,
                        p.band(b) + static_cast<std::int64_t>(y) * size);
    return p;
}

Tensor<float> cube_tensor(const HSICube& c) {
    Tensor<float> t({c.bands, c.height * c.width});
    std::copy(c.data.begin(), c.data.end(), t.data());
    return t;
}

degrade::Task pick_task(const std::vector<TaskMixEntry>& mix, Rng& rng) {
    double total = 0.0;
    for (const auto& m : mix) total += m.weight;
    double u = rng.uniform() * total;
    for (const auto& m : mix) {
        u -= m.weight;
        if (u <= 0.0) return m.task;
    }
    return mix.back().task;
}

}  // namespace

TrainResult train(const net::ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const hsi::DatasetManifest& manifest,
                  const std::optional<WeightStore<float>>& init,
                  const std::vector<FixedPair>* fixed_pairs, const std::string& checkpoint_path,
                  const std::string& trace_path) {
    model_cfg.validate();
    train_cfg.validate();
    const auto mix = train_cfg.task_mix.empty() ? default_task_mix() : train_cfg.task_mix;

    std::vector<HSICube> train_cubes;
    std::vector<std::string> scene_ids;
    if (fixed_pairs == nullptr) {
        const auto entries = manifest.split("train");
        if (entries.empty()) throw std::invalid_argument("train: empty train split");
        for (const auto& e : entries) {
            train_cubes.push_back(hsi::normalize_minmax(hsi::read_cube(e.path)));
            scene_ids.push_back(e.scene_id);
        }
        if (train_cfg.patch % model_cfg.pad_multiple() != 0)
            throw std::invalid_argument("train: patch must be a multiple of 4*window");
        for (const auto& c : train_cubes)
            if (c.height < train_cfg.patch || c.width < train_cfg.patch)
                throw std::invalid_argument("train: patch exceeds a train cube extent");
    } else if (fixed_pairs->empty()) {
        throw std::invalid_argument("train: empty fixed-pair set");
    }

    WeightStore<float> weights =
        init ? *init : net::build_model<float>(model_cfg, train_cfg.seed);
    AdamW opt(train_cfg.beta1, train_cfg.beta2, train_cfg.weight_decay);
    std::vector<float> trace;
    trace.reserve(static_cast<size_t>(train_cfg.steps));

    auto lr_at = [&](int step) {
        if (step < train_cfg.warmup_steps)
            return train_cfg.lr_init * (step + 1) / static_cast<double>(train_cfg.warmup_steps);
        return cosine_lr(step - train_cfg.warmup_steps, train_cfg.steps - train_cfg.warmup_steps,
                         train_cfg.lr_init, train_cfg.lr_min);
    };
    for (int step = 0; step < train_cfg.steps; ++step) {
        const double lr = lr_at(step);
        std::map<std::string, Tensor<float>> grads;
        float step_loss = 0.0f;
        for (int item = 0; item < train_cfg.batch; ++item) {
            HSICube clean, degraded;
            degrade::Task task;
            Rng rng(hash64(train_cfg.seed, 0x737465700aULL, static_cast<std::uint64_t>(step),
                           static_cast<std::uint64_t>(item)));
            if (fixed_pairs) {
                const auto& pair = (*fixed_pairs)[rng.uniform_index(fixed_pairs->size())];
                clean = pair.clean;
                degraded = pair.degraded;
                task = pair.task;
            } else {
                const auto scene = rng.uniform_index(train_cubes.size());
                const HSICube& cube = train_cubes[scene];
                const int y0 = static_cast<int>(rng.uniform_index(
                    static_cast<std::uint64_t>(cube.height - train_cfg.patch + 1)));
                const int x0 = static_cast<int>(rng.uniform_index(
                    static_cast<std::uint64_t>(cube.width - train_cfg.patch + 1)));
                clean = crop(cube, y0, x0, train_cfg.patch);
                task = pick_task(mix, rng);
                // Per-operator seed: decorrelates scenes and tasks, varies per step.
                const auto op_seed = hash64(hash64(train_cfg.seed, hash64_str(scene_ids[scene]),
                                                   static_cast<std::uint64_t>(task)),
                                            static_cast<std::uint64_t>(step) * 64 + static_cast<std::uint64_t>(item));
                degraded = degrade::run(clean, degrade::sample_spec(task, op_seed)).cube;
            }

            Tape<float> tape;
            Params<float> params(tape, weights, /*trainable=*/true);
            net::PromptSelection sel;
            sel.override_id = static_cast<int>(task);  // ground-truth label during training
            Var out = net::forward_graph(tape, params, model_cfg, tape.constant(cube_tensor(degraded)),
                                         clean.height, clean.width, sel);
            Var loss = tape.scale(tape.l1_loss(out, tape.constant(cube_tensor(clean))),
                                  1.0f / static_cast<float>(train_cfg.batch));
            const float lv = tape.val(loss)[0];
            if (!std::isfinite(lv))
                throw std::runtime_error("train: non-finite loss at step " + std::to_string(step));
            step_loss += lv;
            tape.backward(loss);
            params.collect_grads(grads);
        }
        opt.step(weights, grads, lr);
        trace.push_back(step_loss);
        if (train_cfg.checkpoint_every > 0 && !checkpoint_path.empty() &&
            (step + 1) % train_cfg.checkpoint_every == 0 && step + 1 < train_cfg.steps) {
            net::save_checkpoint(checkpoint_path + ".step" + std::to_string(step + 1), weights,
                                 "restorer", model_cfg.to_json());
        }
        if (train_cfg.log_every > 0 && (step % train_cfg.log_every == 0 || step + 1 == train_cfg.steps))
            std::fprintf(stderr, "step %d/%d loss %.6f lr %.3g\n", step + 1, train_cfg.steps,
                         static_cast<double>(step_loss), lr);
    }

    if (!checkpoint_path.empty())
        net::save_checkpoint(checkpoint_path, weights, "restorer", model_cfg.to_json());
    if (!trace_path.empty()) write_loss_trace(trace, train_cfg, trace_path);
    return {std::move(weights), std::move(trace)};
}

void write_loss_trace(const std::vector<float>& trace, const TrainConfig& cfg,
                      const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("write_loss_trace: cannot open " + path);
    f << "step,loss,lr\n";
    char buf[96];
    for (size_t i = 0; i < trace.size(); ++i) {
        const int step = static_cast<int>(i);
        const double lr = step < cfg.warmup_steps
                              ? cfg.lr_init * (step + 1) / static_cast<double>(cfg.warmup_steps)
                              : cosine_lr(step - cfg.warmup_steps, cfg.steps - cfg.warmup_steps,
                                          cfg.lr_init, cfg.lr_min);
        std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g\n", i, static_cast<double>(trace[i]), lr);
        f << buf;
    }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

std::string EvalConfig::to_json() const {
    ordered_json j;
    j["patch"] = patch;
    j["max_test_scenes"] = max_test_scenes;
    j["seed"] = seed;
    j["use_predictor"] = use_predictor;
    j["finetune_steps"] = finetune_steps;
    j["finetune_fraction"] = finetune_fraction;
    j["finetune_lr"] = finetune_lr;
    ordered_json arr = ordered_json::array();
    for (auto t : tasks) arr.push_back(degrade::task_name(t));
    j["tasks"] = arr;
    return j.dump();
}

EvalConfig EvalConfig::from_json(const std::string& text) {
    ordered_json j = ordered_json::parse(text);
    EvalConfig c;
    c.patch = j.value("patch", c.patch);
    c.max_test_scenes = j.value("max_test_scenes", c.max_test_scenes);
    c.seed = j.value("seed", c.seed);
    c.use_predictor = j.value("use_predictor", c.use_predictor);
    c.finetune_steps = j.value("finetune_steps", c.finetune_steps);
    c.finetune_fraction = j.value("finetune_fraction", c.finetune_fraction);
    c.finetune_lr = j.value("finetune_lr", c.finetune_lr);
    if (j.contains("tasks"))
        for (const auto& e : j.at("tasks")) c.tasks.push_back(degrade::task_from_name(e.get<std::string>()));
    return c;
}

std::vector<std::pair<double, std::string>> eval_levels(degrade::Task task) {
    using degrade::Task;
    switch (task) {
        case Task::GaussianNoise: return {{30, "sigma=30"}, {50, "sigma=50"}, {70, "sigma=70"}};
        case Task::ComplexNoise: return {{1, "case=1"}, {2, "case=2"}, {3, "case=3"}, {4, "case=4"}};
        case Task::GaussianBlur: return {{9, "K=9"}, {15, "K=15"}, {21, "K=21"}};
        case Task::Downsample: return {{2, "scale=2"}, {4, "scale=4"}, {8, "scale=8"}};
        case Task::Inpaint: return {{0.7, "rate=0.7"}, {0.8, "rate=0.8"}, {0.9, "rate=0.9"}};
        case Task::Haze: return {{0.5, "omega=0.5"}, {0.75, "omega=0.75"}, {1.0, "omega=1"}};
        case Task::BandDrop: return {{0.1, "rate=0.1"}, {0.2, "rate=0.2"}, {0.3, "rate=0.3"}};
        case Task::MotionBlur: return {{15, "radius=15"}};
        case Task::PoissonNoise: return {{10, "factor=10"}};
    }
    return {};
}

degrade::DegradationSpec eval_spec(degrade::Task task, double level, std::uint64_t seed) {
    using degrade::Task;
    degrade::DegradationSpec spec;
    spec.task = task;
    spec.seed = seed;
    switch (task) {
        case Task::GaussianNoise: spec.params = degrade::GaussianNoiseParams{level}; break;
        case Task::ComplexNoise: spec.params = degrade::ComplexNoiseParams{static_cast<int>(level)}; break;
        case Task::GaussianBlur: spec.params = degrade::GaussianBlurParams{static_cast<int>(level)}; break;
        case Task::Downsample: spec.params = degrade::DownsampleParams{static_cast<int>(level)}; break;
        case Task::Inpaint: spec.params = degrade::InpaintParams{level}; break;
        case Task::Haze: {
            degrade::HazeParams p;
            p.omega = level;
            spec.params = p;
            break;
        }
        case Task::BandDrop: spec.params = degrade::BandDropParams{level}; break;
        case Task::MotionBlur: spec.params = degrade::MotionBlurParams{static_cast<int>(level), 45.0}; break;
        case Task::PoissonNoise: spec.params = degrade::PoissonParams{level}; break;
    }
    return spec;
}

metrics::EvalReport evaluate(const WeightStore<float>& weights, const net::ModelConfig& model_cfg,
                             const std::optional<std::pair<WeightStore<float>, predictor::PredictorConfig>>& pred,
                             const hsi::DatasetManifest& manifest, const EvalConfig& cfg) {
    const auto test_entries = manifest.split("test");
    if (test_entries.empty()) throw std::invalid_argument("evaluate: empty test split");
    std::vector<HSICube> scenes;
    for (const auto& e : test_entries) {
        if (static_cast<int>(scenes.size()) >= cfg.max_test_scenes) break;
        scenes.push_back(hsi::normalize_minmax(hsi::read_cube(e.path)));
    }
    std::vector<degrade::Task> tasks = cfg.tasks;
    if (tasks.empty())
        for (int i = 0; i < degrade::kNumTasks; ++i) tasks.push_back(static_cast<degrade::Task>(i));

    // Motion-blur entries run on few-shot fine-tuned weights.
    std::optional<WeightStore<float>> finetuned;
    if (std::find(tasks.begin(), tasks.end(), degrade::Task::MotionBlur) != tasks.end() &&
        cfg.finetune_steps > 0) {
        const auto train_entries = manifest.split("train");
        if (!train_entries.empty()) {
            const int n_ft = std::max(1, static_cast<int>(std::lround(cfg.finetune_fraction *
                                                                      static_cast<double>(train_entries.size()))));
            hsi::DatasetManifest sub;
            sub.seed = manifest.seed;
            for (int i = 0; i < n_ft; ++i) sub.entries.push_back(train_entries[static_cast<size_t>(i)]);
            TrainConfig ft;
            ft.steps = cfg.finetune_steps;
            ft.lr_init = cfg.finetune_lr;
            ft.batch = 1;
            ft.patch = std::min(cfg.patch, 2 * model_cfg.pad_multiple());
            ft.patch = ft.patch / model_cfg.pad_multiple() * model_cfg.pad_multiple();
            if (ft.patch < model_cfg.pad_multiple()) ft.patch = model_cfg.pad_multiple();
            ft.seed = hash64(cfg.seed, 0x66740aULL);
            ft.task_mix = {{degrade::Task::MotionBlur, 1.0}};
            ft.log_every = 0;
            finetuned = train(model_cfg, ft, sub, weights).weights;
        }
    }

    metrics::EvalReport report;
    report.seed = cfg.seed;
    report.config_hash = model_cfg.hash();
    for (auto task : tasks) {
        for (size_t li = 0; li < eval_levels(task).size(); ++li) {
            const auto [level, label] = eval_levels(task)[li];
            metrics::EvalEntry entry;
            entry.task = degrade::task_name(task);
            entry.level = level;
            entry.level_label = label;
            std::vector<double> curve;
            for (size_t si = 0; si < scenes.size(); ++si) {
                const HSICube& scene = scenes[si];
                const int patch = std::min({cfg.patch, scene.height, scene.width});
                const int y0 = (scene.height - patch) / 2, x0 = (scene.width - patch) / 2;
                HSICube clean = crop(scene, y0, x0, patch);
                auto spec = eval_spec(task, level,
                                      hash64(cfg.seed, static_cast<std::uint64_t>(task),
                                             static_cast<std::uint64_t>(li), static_cast<std::uint64_t>(si)));
                auto degraded = degrade::run(clean, spec);

                net::PromptSelection sel;
                if (cfg.use_predictor && pred)
                    sel.probs = predictor::predict_degradation(pred->first, pred->second, degraded.cube);
                else
                    sel.override_id = static_cast<int>(task);
                const WeightStore<float>& w =
                    (task == degrade::Task::MotionBlur && finetuned) ? *finetuned : weights;
                HSICube restored = net::forward_cube(w, model_cfg, degraded.cube, sel);

                if (task == degrade::Task::BandDrop) {
                    // Scored only on the missing bands.
                    auto m = metrics::masked_band_eval(restored, clean, degraded.dropped_bands);
                    auto md = metrics::masked_band_eval(degraded.cube, clean, degraded.dropped_bands);
                    entry.psnr_db += m.psnr;
                    entry.ssim_val += m.ssim;
                    entry.psnr_degraded_db += md.psnr;
                    entry.ssim_degraded += md.ssim;
                } else {
                    entry.psnr_db += metrics::psnr(restored, clean);
                    entry.ssim_val += metrics::ssim(restored, clean);
                    entry.psnr_degraded_db += metrics::psnr(degraded.cube, clean);
                    entry.ssim_degraded += metrics::ssim(degraded.cube, clean);
                }
                entry.identical = entry.identical || metrics::mse(restored, clean) == 0.0;
                auto c = metrics::spectral_error_curve(restored, clean);
                if (curve.empty()) curve.assign(c.size(), 0.0);
                for (size_t i = 0; i < c.size(); ++i) curve[i] += c[i];
                ++entry.n_images;
            }
            const double inv = entry.n_images > 0 ? 1.0 / entry.n_images : 0.0;
            entry.psnr_db *= inv;
            entry.ssim_val *= inv;
            entry.psnr_degraded_db *= inv;
            entry.ssim_degraded *= inv;
            for (auto& v : curve) v *= inv;
            entry.band_curve = std::move(curve);
            report.entries.push_back(std::move(entry));
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

std::vector<AblationVariant> ablation_plan(const net::ModelConfig& full) {
    auto base = full;
    base.use_gsa = base.use_lsa = base.use_spectral_prompt = false;
    base.use_text_prompt = base.use_visual_prompt = false;
    auto with = [&](bool text, bool visual, bool gsa, bool lsa, bool ps) {
        auto c = base;
        c.use_text_prompt = text;
        c.use_visual_prompt = visual;
        c.use_gsa = gsa;
        c.use_lsa = lsa;
        c.use_spectral_prompt = ps;
        return c;
    };
    return {
        {"baseline (spatial SA only)", base},
        {"+ textual prompt", with(true, false, false, false, false)},
        {"+ visual prompt", with(false, true, false, false, false)},
        {"+ textual + visual prompt", with(true, true, false, false, false)},
        {"+ global spectral SA + prompts", with(true, true, true, false, false)},
        {"+ local spectral SA + prompts", with(true, true, false, true, false)},
        {"+ local spectral SA + spectral prompt + prompts", with(true, true, false, true, true)},
        {"full model", with(true, true, true, true, true)},
    };
}

std::vector<AblationRow> ablate(const net::ModelConfig& full, const TrainConfig& shared,
                                const hsi::DatasetManifest& manifest, degrade::Task eval_task,
                                double eval_level, const EvalConfig& eval_cfg) {
    std::vector<AblationRow> rows;
    for (const auto& variant : ablation_plan(full)) {
        TrainConfig tc = shared;  // identical budget and seed for every variant
        auto result = train(variant.config, tc, manifest);
        EvalConfig ec = eval_cfg;
        ec.use_predictor = false;  // ground-truth labels isolate module effects
        ec.tasks = {eval_task};
        ec.finetune_steps = 0;
        auto report = evaluate(result.weights, variant.config, std::nullopt, manifest, ec);
        AblationRow row;
        row.name = variant.name;
        row.params = result.weights.count_params();
        for (const auto& e : report.entries) {
            if (e.level == eval_level) {
                row.psnr_db = e.psnr_db;
                row.ssim_val = e.ssim_val;
            }
        }
        rows.push_back(std::move(row));
        std::fprintf(stderr, "ablation: %-50s psnr %.2f ssim %.4f params %lld\n",
                     rows.back().name.c_str(), rows.back().psnr_db, rows.back().ssim_val,
                     static_cast<long long>(rows.back().params));
    }
    return rows;
}

void write_ablation_table(const std::vector<AblationRow>& rows, const std::string& csv_path) {
    std::ofstream f(csv_path, std::ios::trunc);
    if (!f) throw std::runtime_error("write_ablation_table: cannot open " + csv_path);
    f << "variant,psnr_db,ssim,params\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), ",%.4f,%.6f,%lld\n", r.psnr_db, r.ssim_val,
                      static_cast<long long>(r.params));
        f << '"' << r.name << '"' << buf;
    }
}

}  // namespace mphsir::harness
