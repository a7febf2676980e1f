#pragma once

// Named-tensor registry for learnable parameters, deterministic
// initializers, and the tape binding helper that exposes stored tensors as
// autodiff leaves.

#include "mphsir/autodiff.hpp"
#include "mphsir/rng.hpp"
#include "mphsir/tensor.hpp"

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace mphsir {

template <typename S>
class WeightStore {
public:
    WeightStore() = default;
    explicit WeightStore(std::uint64_t creation_seed) : seed_(creation_seed) {}

    std::uint64_t creation_seed() const { return seed_; }
    void set_creation_seed(std::uint64_t s) { seed_ = s; }

    bool contains(const std::string& name) const { return map_.count(name) != 0; }

    void add(const std::string& name, Tensor<S> t) {
        if (!map_.emplace(name, std::move(t)).second)
            throw std::invalid_argument("weight store: duplicate tensor '" + name + "'");
    }

    Tensor<S>& at(const std::string& name) {
        auto it = map_.find(name);
        if (it == map_.end()) throw std::out_of_range("weight store: missing tensor '" + name + "'");
        return it->second;
    }
    const Tensor<S>& at(const std::string& name) const {
        auto it = map_.find(name);
        if (it == map_.end()) throw std::out_of_range("weight store: missing tensor '" + name + "'");
        return it->second;
    }

    // Deterministic (sorted) iteration order.
    const std::map<std::string, Tensor<S>>& tensors() const { return map_; }
    std::map<std::string, Tensor<S>>& tensors() { return map_; }

    std::int64_t count_params() const {
        std::int64_t n = 0;
        for (const auto& [name, t] : map_) n += t.size();
        return n;
    }

    template <typename T>
    WeightStore<T> cast() const {
        WeightStore<T> out(seed_);
        for (const auto& [name, t] : map_) out.add(name, t.template cast<T>());
        return out;
    }

private:
    std::map<std::string, Tensor<S>> map_;
    std::uint64_t seed_ = 0;
};

// ---------------------------------------------------------------------------
// Initializers (all deterministic in the provided Rng)
// ---------------------------------------------------------------------------

// Truncated normal, std 0.02, resampled beyond two standard deviations.
template <typename S>
Tensor<S> init_trunc_normal(Rng& rng, Shape shape, double stddev = 0.02) {
    Tensor<S> t(std::move(shape));
    for (std::int64_t i = 0; i < t.size(); ++i) {
        double z;
        do {
            z = rng.normal();
        } while (std::abs(z) > 2.0);
        t[i] = static_cast<S>(z * stddev);
    }
    return t;
}

template <typename S>
Tensor<S> init_zeros(Shape shape) {
    return Tensor<S>(std::move(shape));
}

template <typename S>
Tensor<S> init_const(Shape shape, double v) {
    return Tensor<S>::full(std::move(shape), static_cast<S>(v));
}

// Fan-in scaled truncated normal (He) for plain convolutional stacks.
template <typename S>
Tensor<S> init_he(Rng& rng, Shape shape, std::int64_t fan_in) {
    return init_trunc_normal<S>(rng, std::move(shape), std::sqrt(2.0 / static_cast<double>(fan_in)));
}

// Uniform [0, 1) scaled by 0.02 (prompt tokens and spectral patterns).
template <typename S>
Tensor<S> init_prompt(Rng& rng, Shape shape) {
    Tensor<S> t(std::move(shape));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<S>(rng.uniform() * 0.02);
    return t;
}

// ---------------------------------------------------------------------------
// Tape binding
// ---------------------------------------------------------------------------

// Lazily registers store tensors as leaves of a tape, one leaf per name, so
// repeated lookups share gradient accumulation.
template <typename S>
class Params {
public:
    Params(Tape<S>& tape, const WeightStore<S>& store, bool trainable)
        : tape_(tape), store_(store), trainable_(trainable) {}

    Var operator[](const std::string& name) {
        auto it = cache_.find(name);
        if (it != cache_.end()) return it->second;
        Var v = tape_.leaf(store_.at(name), trainable_);
        cache_.emplace(name, v);
        return v;
    }

    bool bound(const std::string& name) const { return cache_.count(name) != 0; }

    // Harvest accumulated gradients after backward(); missing gradients
    // (unused parameters) come back as zeros.
    void collect_grads(std::map<std::string, Tensor<S>>& grads) const {
        for (const auto& [name, var] : cache_) {
            const Tensor<S>& value = tape_.val(var);
            auto it = grads.find(name);
            if (it == grads.end()) it = grads.emplace(name, Tensor<S>(value.shape())).first;
            if (tape_.has_grad(var)) it->second.arr() += tape_.grad(var).arr();
        }
    }

private:
    Tape<S>& tape_;
    const WeightStore<S>& store_;
    bool trainable_;
    std::unordered_map<std::string, Var> cache_;
};

}  // namespace mphsir
