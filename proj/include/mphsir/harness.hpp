#pragma once

// Training loop, evaluation grid, ablation runner and loss utilities: the
// experiment surface behind the CLI.

#include "mphsir/degrade.hpp"
#include "mphsir/hsicube.hpp"
#include "mphsir/metrics.hpp"
#include "mphsir/net.hpp"
#include "mphsir/optim.hpp"
#include "mphsir/predictor.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mphsir::harness {

double l1_loss(const hsi::HSICube& pred, const hsi::HSICube& target);

struct TaskMixEntry {
    degrade::Task task = degrade::Task::GaussianNoise;
    double weight = 1.0;
};

// Uniform mix over the seven all-in-one tasks.
std::vector<TaskMixEntry> default_task_mix();

struct TrainConfig {
    double lr_init = 2e-4;   // natural-scene setting; 1e-4 for remote sensing
    double lr_min = 1e-6;
    int steps = 20000;       // desk-scale budget
    int batch = 2;
    int patch = 32;          // training crop, must divide 4 * window
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 1e-4;
    std::string loss = "L1";
    std::uint64_t seed = 0;
    int warmup_steps = 0;  // linear ramp to lr_init before the cosine phase
    std::vector<TaskMixEntry> task_mix;  // empty -> default_task_mix()
    int checkpoint_every = 0;            // 0 = final checkpoint only
    int log_every = 100;

    void validate() const;
    std::string to_json() const;
    static TrainConfig from_json(const std::string& text);
};

struct TrainResult {
    WeightStore<float> weights;
    std::vector<float> loss_trace;
};

// On-the-fly degradation training with ground-truth prompt labels, AdamW and
// the cosine schedule. `init` continues from existing weights (fine-tuning);
// otherwise the model is built from (model_cfg, train_cfg.seed). When
// `fixed_pairs` is set, steps sample from those pairs instead of the
// manifest (the overfit harness).
struct FixedPair {
    hsi::HSICube degraded;
    hsi::HSICube clean;
    degrade::Task task;
};

TrainResult train(const net::ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const hsi::DatasetManifest& manifest,
                  const std::optional<WeightStore<float>>& init = std::nullopt,
                  const std::vector<FixedPair>* fixed_pairs = nullptr,
                  const std::string& checkpoint_path = "", const std::string& trace_path = "");

void write_loss_trace(const std::vector<float>& trace, const TrainConfig& cfg,
                      const std::string& path);

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalConfig {
    int patch = 64;
    int max_test_scenes = 4;
    std::uint64_t seed = 0;
    bool use_predictor = true;   // false -> ground-truth prompt labels
    int finetune_steps = 300;    // motion-blur few-shot budget
    double finetune_fraction = 0.05;
    double finetune_lr = 1e-4;
    std::vector<degrade::Task> tasks;  // empty -> all nine

    std::string to_json() const;
    static EvalConfig from_json(const std::string& text);
};

// Per-task degradation levels evaluated (the test anchors).
std::vector<std::pair<double, std::string>> eval_levels(degrade::Task task);
degrade::DegradationSpec eval_spec(degrade::Task task, double level, std::uint64_t seed);

metrics::EvalReport evaluate(const WeightStore<float>& weights, const net::ModelConfig& model_cfg,
                             const std::optional<std::pair<WeightStore<float>, predictor::PredictorConfig>>& pred,
                             const hsi::DatasetManifest& manifest, const EvalConfig& cfg);

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

struct AblationVariant {
    std::string name;
    net::ModelConfig config;
};

// The eight-variant plan: spatial-only baseline, prompt additions, spectral
// branches, and the full model.
std::vector<AblationVariant> ablation_plan(const net::ModelConfig& full);

struct AblationRow {
    std::string name;
    double psnr_db = 0.0;
    double ssim_val = 0.0;
    std::int64_t params = 0;
};

std::vector<AblationRow> ablate(const net::ModelConfig& full, const TrainConfig& shared,
                                const hsi::DatasetManifest& manifest, degrade::Task eval_task,
                                double eval_level, const EvalConfig& eval_cfg);

void write_ablation_table(const std::vector<AblationRow>& rows, const std::string& csv_path);

}  // namespace mphsir::harness
