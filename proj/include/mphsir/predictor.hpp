#pragma once

// Degradation-type classifier: a small residual CNN where each block pairs a
// spatial 3x3 branch with a Fourier branch (per-frequency point-wise mixing
// of the stacked real/imaginary spectrum), global average pooling and a
// per-class sigmoid head trained with binary cross entropy.

#include "mphsir/autodiff.hpp"
#include "mphsir/degrade.hpp"
#include "mphsir/hsicube.hpp"
#include "mphsir/weights.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mphsir::predictor {

struct PredictorConfig {
    int in_bands = 31;
    int blocks = 4;
    int channels = 32;
    int num_tasks = 7;
    bool use_fourier_branch = true;

    void validate() const;
    std::string to_json() const;
    static PredictorConfig from_json(const std::string& text);
};

template <typename S>
WeightStore<S> build_predictor(const PredictorConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    WeightStore<S> w(seed);
    Rng rng(hash64(seed, 0x6d703a70726564ULL));
    // Fan-in scaled init: the classifier has no residual-identity prior to
    // lean on, so feature magnitudes must survive the depth.
    w.add("stem.w", init_he<S>(rng, {cfg.channels, cfg.in_bands, 3, 3},
                               static_cast<std::int64_t>(cfg.in_bands) * 9));
    w.add("stem.b", init_zeros<S>({cfg.channels}));
    for (int b = 0; b < cfg.blocks; ++b) {
        const std::string prefix = "blk" + std::to_string(b) + ".";
        w.add(prefix + "spatial.w", init_he<S>(rng, {cfg.channels, cfg.channels, 3, 3},
                                               static_cast<std::int64_t>(cfg.channels) * 9));
        w.add(prefix + "spatial.b", init_zeros<S>({cfg.channels}));
        if (cfg.use_fourier_branch) {
            w.add(prefix + "fourier.w", init_he<S>(rng, {2 * cfg.channels, 2 * cfg.channels},
                                                   2 * cfg.channels));
            w.add(prefix + "fourier.b", init_zeros<S>({2 * cfg.channels}));
        }
    }
    w.add("head.w", init_he<S>(rng, {cfg.num_tasks, cfg.channels}, cfg.channels));
    w.add("head.b", init_zeros<S>({cfg.num_tasks}));
    return w;
}

// Per-class sigmoid probabilities, shape (num_tasks, 1).
template <typename S>
Var forward_graph(Tape<S>& t, Params<S>& p, const PredictorConfig& cfg, Var x, int h, int w) {
    Var f = t.gelu(t.conv2d(x, p["stem.w"], p["stem.b"], h, w, 1, 1));
    for (int b = 0; b < cfg.blocks; ++b) {
        const std::string prefix = "blk" + std::to_string(b) + ".";
        Var s = t.conv2d(f, p[prefix + "spatial.w"], p[prefix + "spatial.b"], h, w, 1, 1);
        if (cfg.use_fourier_branch) {
            Var z = t.fft2_stack(f, h, w);
            Var zc = t.linear_cols(p[prefix + "fourier.w"], z, p[prefix + "fourier.b"]);
            s = t.add(s, t.ifft2_real(zc, h, w));
        }
        f = t.add(f, t.gelu(s));
    }
    Var pooled = t.reshape(t.mean_cols(f), {cfg.channels, 1});
    return t.sigmoid(t.linear_cols(p["head.w"], pooled, p["head.b"]));
}

// Inference on one cube; errors when the band count does not match.
std::vector<double> predict_degradation(const WeightStore<float>& store, const PredictorConfig& cfg,
                                        const hsi::HSICube& cube);

// The class order used by training, Eq. 7 selection and the CLI output:
// the first num_tasks entries of the degradation task enum.
std::vector<degrade::Task> predictor_tasks(int num_tasks);

struct TrainPredictorConfig {
    int steps = 1200;
    int batch = 8;
    int patch = 64;
    double lr_init = 1e-4;
    double lr_min = 1e-6;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 1e-4;
    std::uint64_t seed = 1;
    int eval_reps = 4;  // held-out draws per (scene, task)

    std::string to_json() const;
    static TrainPredictorConfig from_json(const std::string& text);
};

struct PredictorReport {
    double accuracy = 0.0;
    std::vector<double> per_class_precision;
    std::vector<double> per_class_recall;
    int n_eval = 0;
    std::vector<float> loss_trace;

    std::string to_json(const std::vector<degrade::Task>& tasks) const;
};

struct TrainPredictorResult {
    WeightStore<float> weights;
    PredictorReport report;
};

// Trains on degradations synthesized on the fly from the manifest's train
// split and scores held-out accuracy/precision on the test split.
TrainPredictorResult train_predictor(const PredictorConfig& cfg, const hsi::DatasetManifest& manifest,
                                     const std::vector<degrade::Task>& tasks,
                                     const TrainPredictorConfig& tcfg);

}  // namespace mphsir::predictor
