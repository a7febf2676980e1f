#include "mphsir/predictor.hpp"

#include "mphsir/optim.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mphsir::predictor {

using hsi::HSICube;
using ordered_json = nlohmann::ordered_json;

void PredictorConfig::validate() const {
    if (in_bands <= 0) throw std::invalid_argument("predictor config: in_bands");
    if (blocks < 1) throw std::invalid_argument("predictor config: blocks");
    if (channels < 1) throw std::invalid_argument("predictor config: channels");
    if (num_tasks < 2) throw std::invalid_argument("predictor config: num_tasks must be >= 2");
}

std::string PredictorConfig::to_json() const {
    ordered_json j;
    j["in_bands"] = in_bands;
    j["blocks"] = blocks;
    j["channels"] = channels;
    j["num_tasks"] = num_tasks;
    j["use_fourier_branch"] = use_fourier_branch;
    return j.dump();
}

PredictorConfig PredictorConfig::from_json(const std::string& text) {
    ordered_json j = ordered_json::parse(text);
    PredictorConfig c;
    c.in_bands = j.value("in_bands", c.in_bands);
    c.blocks = j.value("blocks", c.blocks);
    c.channels = j.value("channels", c.channels);
    c.num_tasks = j.value("num_tasks", c.num_tasks);
    c.use_fourier_branch = j.value("use_fourier_branch", c.use_fourier_branch);
    c.validate();
    return c;
}

std::vector<degrade::Task> predictor_tasks(int num_tasks) {
    if (num_tasks < 1 || num_tasks > degrade::kNumTasks)
        throw std::invalid_argument("predictor task count out of range");
    std::vector<degrade::Task> tasks;
    for (int i = 0; i < num_tasks; ++i) tasks.push_back(static_cast<degrade::Task>(i));
    return tasks;
}

std::vector<double> predict_degradation(const WeightStore<float>& store, const PredictorConfig& cfg,
                                        const HSICube& cube) {
    cube.validate();
    if (cube.bands != cfg.in_bands)
        throw std::invalid_argument("predict: cube band count does not match predictor config");
    Tensor<float> input({cube.bands, cube.height * cube.width});
    std::copy(cube.data.begin(), cube.data.end(), input.data());
    Tape<float> tape;
    Params<float> params(tape, store, /*trainable=*/false);
    Var probs = forward_graph(tape, params, cfg, tape.constant(std::move(input)), cube.height,
                              cube.width);
    const Tensor<float>& pv = tape.val(probs);
    std::vector<double> out(static_cast<size_t>(cfg.num_tasks));
    for (int i = 0; i < cfg.num_tasks; ++i) out[static_cast<size_t>(i)] = static_cast<double>(pv[i]);
    return out;
}

std::string TrainPredictorConfig::to_json() const {
    ordered_json j;
    j["steps"] = steps;
    j["batch"] = batch;
    j["patch"] = patch;
    j["lr_init"] = lr_init;
    j["lr_min"] = lr_min;
    j["beta1"] = beta1;
    j["beta2"] = beta2;
    j["weight_decay"] = weight_decay;
    j["seed"] = seed;
    j["eval_reps"] = eval_reps;
    return j.dump();
}

TrainPredictorConfig TrainPredictorConfig::from_json(const std::string& text) {
    ordered_json j = ordered_json::parse(text);
    TrainPredictorConfig c;
    c.steps = j.value("steps", c.steps);
    c.batch = j.value("batch", c.batch);
    c.patch = j.value("patch", c.patch);
    c.lr_init = j.value("lr_init", c.lr_init);
    c.lr_min = j.value("lr_min", c.lr_min);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.seed = j.value("seed", c.seed);
    c.eval_reps = j.value("eval_reps", c.eval_reps);
    return c;
}

std::string PredictorReport::to_json(const std::vector<degrade::Task>& tasks) const {
    ordered_json j;
    j["accuracy"] = accuracy;
    ordered_json prec = ordered_json::object();
    ordered_json rec = ordered_json::object();
    for (size_t i = 0; i < tasks.size(); ++i) {
        prec[degrade::task_name(tasks[i])] = per_class_precision[i];
        rec[degrade::task_name(tasks[i])] = per_class_recall[i];
    }
    j["precision"] = prec;
    j["recall"] = rec;
    j["n_eval"] = n_eval;
    return j.dump(2);
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

}  // namespace

TrainPredictorResult train_predictor(const PredictorConfig& cfg, const hsi::DatasetManifest& manifest,
                                     const std::vector<degrade::Task>& tasks,
                                     const TrainPredictorConfig& tcfg) {
    cfg.validate();
    if (static_cast<int>(tasks.size()) != cfg.num_tasks)
        throw std::invalid_argument("train_predictor: task list size must equal num_tasks");
    const auto train_entries = manifest.split("train");
    const auto test_entries = manifest.split("test");
    if (train_entries.empty()) throw std::invalid_argument("train_predictor: empty train split");

    std::vector<HSICube> train_cubes, test_cubes;
    for (const auto& e : train_entries) train_cubes.push_back(hsi::normalize_minmax(hsi::read_cube(e.path)));
    for (const auto& e : test_entries) test_cubes.push_back(hsi::normalize_minmax(hsi::read_cube(e.path)));

    WeightStore<float> weights = build_predictor<float>(cfg, tcfg.seed);
    harness::AdamW opt(tcfg.beta1, tcfg.beta2, tcfg.weight_decay);
    PredictorReport report;

    auto sample_pair = [&](const std::vector<HSICube>& pool, std::uint64_t seed,
                           int* label_out) -> HSICube {
        Rng rng(seed);
        const auto& cube = pool[rng.uniform_index(pool.size())];
        const int patch = std::min({tcfg.patch, cube.height, cube.width});
        const int y0 = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(cube.height - patch + 1)));
        const int x0 = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(cube.width - patch + 1)));
        HSICube clean = crop(cube, y0, x0, patch);
        const int label = static_cast<int>(rng.uniform_index(tasks.size()));
        *label_out = label;
        auto spec = degrade::sample_spec(tasks[static_cast<size_t>(label)], rng.next_u64());
        return degrade::run(clean, spec).cube;
    };

    for (int step = 0; step < tcfg.steps; ++step) {
        const double lr = harness::cosine_lr(step, tcfg.steps, tcfg.lr_init, tcfg.lr_min);
        std::map<std::string, Tensor<float>> grads;
        float step_loss = 0.0f;
        for (int item = 0; item < tcfg.batch; ++item) {
            int label = 0;
            HSICube degraded = sample_pair(train_cubes,
                                           hash64(tcfg.seed, 0x747261696eULL,
                                                  static_cast<std::uint64_t>(step),
                                                  static_cast<std::uint64_t>(item)),
                                           &label);
            Tensor<float> labels({cfg.num_tasks, 1});
            labels[label] = 1.0f;
            Tape<float> tape;
            Params<float> params(tape, weights, /*trainable=*/true);
            Var probs = forward_graph(tape, params, cfg, tape.constant(cube_tensor(degraded)),
                                      degraded.height, degraded.width);
            Var loss = tape.scale(tape.bce_loss(probs, tape.constant(labels)),
                                  1.0f / static_cast<float>(tcfg.batch));
            const float lv = tape.val(loss)[0];
            if (!std::isfinite(lv))
                throw std::runtime_error("train_predictor: NaN loss at step " + std::to_string(step));
            step_loss += lv;
            tape.backward(loss);
            params.collect_grads(grads);
        }
        report.loss_trace.push_back(step_loss);
        opt.step(weights, grads, lr);
        if (step % 200 == 0 || step + 1 == tcfg.steps)
            std::fprintf(stderr, "predictor step %d/%d loss %.5f\n", step + 1, tcfg.steps,
                         static_cast<double>(step_loss));
    }

    // Held-out scoring on the test split (train split when no test scenes
    // exist, which only happens in smoke setups).
    const std::vector<HSICube>& eval_pool = test_cubes.empty() ? train_cubes : test_cubes;
    const int n_classes = cfg.num_tasks;
    std::vector<std::int64_t> tp(static_cast<size_t>(n_classes), 0), fp(static_cast<size_t>(n_classes), 0),
        fn(static_cast<size_t>(n_classes), 0);
    std::int64_t correct = 0, total = 0;
    for (size_t si = 0; si < eval_pool.size(); ++si) {
        for (int label = 0; label < n_classes; ++label) {
            for (int rep = 0; rep < tcfg.eval_reps; ++rep) {
                Rng rng(hash64(tcfg.seed, 0x6576616cULL,
                               static_cast<std::uint64_t>(si * static_cast<size_t>(n_classes) + static_cast<size_t>(label)),
                               static_cast<std::uint64_t>(rep)));
                const auto& cube = eval_pool[si];
                const int patch = std::min({tcfg.patch, cube.height, cube.width});
                const int y0 = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(cube.height - patch + 1)));
                const int x0 = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(cube.width - patch + 1)));
                HSICube clean = crop(cube, y0, x0, patch);
                auto spec = degrade::sample_spec(tasks[static_cast<size_t>(label)], rng.next_u64());
                HSICube degraded = degrade::run(clean, spec).cube;
                const auto probs = predict_degradation(weights, cfg, degraded);
                const int pred = static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
                ++total;
                if (pred == label) {
                    ++correct;
                    ++tp[static_cast<size_t>(label)];
                } else {
                    ++fp[static_cast<size_t>(pred)];
                    ++fn[static_cast<size_t>(label)];
                }
            }
        }
    }
    report.accuracy = total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
    report.per_class_precision.resize(static_cast<size_t>(n_classes));
    report.per_class_recall.resize(static_cast<size_t>(n_classes));
    for (int c = 0; c < n_classes; ++c) {
        const auto denom_p = tp[static_cast<size_t>(c)] + fp[static_cast<size_t>(c)];
        const auto denom_r = tp[static_cast<size_t>(c)] + fn[static_cast<size_t>(c)];
        report.per_class_precision[static_cast<size_t>(c)] =
            denom_p > 0 ? static_cast<double>(tp[static_cast<size_t>(c)]) / static_cast<double>(denom_p) : 0.0;
        report.per_class_recall[static_cast<size_t>(c)] =
            denom_r > 0 ? static_cast<double>(tp[static_cast<size_t>(c)]) / static_cast<double>(denom_r) : 0.0;
    }
    report.n_eval = static_cast<int>(total);
    return {std::move(weights), std::move(report)};
}

}  // namespace mphsir::predictor
