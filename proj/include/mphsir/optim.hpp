#pragma once

// Cosine learning-rate schedule and decoupled-weight-decay Adam, shared by
// the restorer and predictor training loops.

#include "mphsir/tensor.hpp"
#include "mphsir/weights.hpp"

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

namespace mphsir::harness {

// lr_min + 0.5 * (lr_init - lr_min) * (1 + cos(pi * step / total)).
inline double cosine_lr(int step, int total, double lr_init, double lr_min) {
    if (total <= 0) throw std::invalid_argument("cosine_lr: total must be positive");
    if (step < 0 || step > total) throw std::invalid_argument("cosine_lr: step out of range");
    return lr_min + 0.5 * (lr_init - lr_min) *
                        (1.0 + std::cos(3.14159265358979323846 * step / total));
}

class AdamW {
public:
    AdamW(double beta1, double beta2, double weight_decay, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), weight_decay_(weight_decay), eps_(eps) {}

    // Applies one update with the given learning rate. Iteration follows the
    // sorted gradient map, so updates replay deterministically.
    void step(WeightStore<float>& weights, const std::map<std::string, Tensor<float>>& grads,
              double lr) {
        ++t_;
        const float bc1 = 1.0f - static_cast<float>(std::pow(beta1_, t_));
        const float bc2 = 1.0f - static_cast<float>(std::pow(beta2_, t_));
        for (const auto& [name, g] : grads) {
            Tensor<float>& w = weights.at(name);
            auto it = state_.find(name);
            if (it == state_.end())
                it = state_.emplace(name, std::make_pair(Tensor<float>(w.shape()), Tensor<float>(w.shape()))).first;
            Tensor<float>& m = it->second.first;
            Tensor<float>& v = it->second.second;
            const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
            const float lrf = static_cast<float>(lr), wd = static_cast<float>(weight_decay_);
            const float epsf = static_cast<float>(eps_);
            for (std::int64_t i = 0; i < w.size(); ++i) {
                const float gi = g[i];
                m[i] = b1 * m[i] + (1.0f - b1) * gi;
                v[i] = b2 * v[i] + (1.0f - b2) * gi * gi;
                const float mhat = m[i] / bc1;
                const float vhat = v[i] / bc2;
                w[i] -= lrf * (mhat / (std::sqrt(vhat) + epsf) + wd * w[i]);
            }
        }
    }

    int steps_taken() const { return t_; }

private:
    double beta1_, beta2_, weight_decay_, eps_;
    int t_ = 0;
    std::map<std::string, std::pair<Tensor<float>, Tensor<float>>> state_;
};

}  // namespace mphsir::harness
