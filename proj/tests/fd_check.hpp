#pragma once

// Central finite-difference gradient checking against the tape's analytic
// gradients, in double precision. Loss graphs are rebuilt per probe, so the
// checked path is exactly the production forward code.

#include "mphsir/weights.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace fdcheck {

using mphsir::Tape;
using mphsir::Tensor;
using mphsir::Var;
using mphsir::WeightStore;

struct Report {
    double max_rel = 0.0;
    std::string worst;
    int checked = 0;
};

// Relative error with a floor of 1e-6: central differences at h = 1e-5 in
// double carry ~1e-13 cancellation noise, so entries with a true gradient
// below the floor are compared at that absolute precision instead.
inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

// Builder runs the graph and returns the scalar loss var. Weights are bound
// through the Params helper; extra leaves (inputs) must be created inside.
using Builder = std::function<Var(Tape<double>&, mphsir::Params<double>&)>;

inline double eval_loss(const WeightStore<double>& store, const Builder& build) {
    Tape<double> tape;
    mphsir::Params<double> params(tape, store, /*trainable=*/false);
    return tape.val(build(tape, params))[0];
}

// Checks every parameter entry for small tensors and a deterministic sample
// of entries for large ones.
inline Report check_store(WeightStore<double>& store, const Builder& build, double h = 1e-5,
                          int sample_cap = 24) {
    Report rep;
    // Analytic pass.
    std::map<std::string, Tensor<double>> analytic;
    {
        Tape<double> tape;
        mphsir::Params<double> params(tape, store, /*trainable=*/true);
        Var loss = build(tape, params);
        tape.backward(loss);
        params.collect_grads(analytic);
    }
    for (auto& [name, t] : store.tensors()) {
        auto ai = analytic.find(name);
        if (ai == analytic.end()) continue;  // parameter unused by this graph
        std::vector<std::int64_t> idx;
        if (t.size() <= sample_cap) {
            for (std::int64_t i = 0; i < t.size(); ++i) idx.push_back(i);
        } else {
            const auto stride = static_cast<std::int64_t>(t.size() / sample_cap);
            for (int k = 0; k < sample_cap; ++k)
                idx.push_back((static_cast<std::int64_t>(k) * stride + k) % t.size());
        }
        for (std::int64_t i : idx) {
            const double orig = t[i];
            t[i] = orig + h;
            const double fp = eval_loss(store, build);
            t[i] = orig - h;
            const double fm = eval_loss(store, build);
            t[i] = orig;
            const double fd = (fp - fm) / (2.0 * h);
            const double an = ai->second[i];
            const double re = rel_err(fd, an);
            ++rep.checked;
            if (re > rep.max_rel) {
                rep.max_rel = re;
                rep.worst = name + "[" + std::to_string(i) + "] fd=" + std::to_string(fd) +
                            " an=" + std::to_string(an);
            }
        }
    }
    return rep;
}

// Random tensor helpers for building test fixtures.
inline Tensor<double> randn(mphsir::Rng& rng, mphsir::Shape shape, double scale = 0.5) {
    Tensor<double> t(std::move(shape));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal() * scale;
    return t;
}

}  // namespace fdcheck
