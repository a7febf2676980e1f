#pragma once

// Textual prompt table, pluggable text encoder, learnable visual prompts and
// the text-visual synergistic fusion applied at every skip connection.

#include "mphsir/autodiff.hpp"
#include "mphsir/degrade.hpp"
#include "mphsir/weights.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace mphsir::prompts {

// One description per degradation task; these seed the textual embeddings
// and are config-visible so users can edit them.
std::vector<std::string> default_task_descriptions();

// ---------------------------------------------------------------------------
// Text encoders
// ---------------------------------------------------------------------------

class TextEncoder {
public:
    virtual ~TextEncoder() = default;
    virtual int dim() const = 0;
    virtual std::vector<float> encode(const std::string& text) const = 0;
};

// Deterministic offline default: a seeded random projection of the text
// hash, unit-normalized. The embeddings become learnable immediately after
// initialization, so only determinism and distinctness matter here.
class HashProjectionEncoder : public TextEncoder {
public:
    explicit HashProjectionEncoder(int dim = 512, std::uint64_t salt = 0x74657874ULL)
        : dim_(dim), salt_(salt) {}
    int dim() const override { return dim_; }
    std::vector<float> encode(const std::string& text) const override;

private:
    int dim_;
    std::uint64_t salt_;
};

// Import of precomputed embeddings: a JSON index line {"d_t":..,"index":
// {task_name: row}} followed by rows * d_t little-endian float32 values.
class FileBackedEncoder : public TextEncoder {
public:
    explicit FileBackedEncoder(const std::string& path);
    int dim() const override { return dim_; }
    std::vector<float> encode(const std::string& text) const override;

private:
    int dim_ = 0;
    std::vector<std::string> names_;
    std::vector<std::vector<float>> rows_;
};

void write_embedding_file(const std::string& path, int dim,
                          const std::vector<std::pair<std::string, std::vector<float>>>& rows);

// ---------------------------------------------------------------------------
// Selection (Eq. 7): predictor probabilities pick the embedding row
// ---------------------------------------------------------------------------

// Resolves which table row to use. `override_id` >= 0 bypasses probs
// (controllable restoration); otherwise argmax with lowest-index ties.
int select_prompt_index(const std::vector<double>& probs, int override_id, int table_rows);

// Hard mode returns one row of the (T, d_t) embedding table; soft mode
// returns the probability-weighted mixture over the first probs.size() rows.
template <typename S>
Var select_textual_prompt(Tape<S>& t, Var table, const std::vector<double>& probs,
                          int override_id, bool soft) {
    const int rows = t.val(table).dim(0);
    if (rows == 0) throw std::invalid_argument("textual prompt table is empty");
    if (!soft || override_id >= 0) {
        const int idx = select_prompt_index(probs, override_id, rows);
        return t.slice_rows(table, idx, idx + 1);
    }
    if (probs.empty()) throw std::invalid_argument("soft prompt selection needs probabilities");
    if (static_cast<int>(probs.size()) > rows)
        throw std::invalid_argument("more probabilities than table rows");
    double sum = 0.0;
    for (double pr : probs) {
        if (pr < 0.0) throw std::invalid_argument("negative probability");
        sum += pr;
    }
    if (sum <= 0.0) throw std::invalid_argument("probabilities sum to zero");
    Tensor<S> wrow({1, rows});
    for (size_t i = 0; i < probs.size(); ++i) wrow[static_cast<std::int64_t>(i)] = static_cast<S>(probs[i] / sum);
    return t.matmul(t.constant(wrow), table);
}

// ---------------------------------------------------------------------------
// TVSP fusion (Eq. 8)
// ---------------------------------------------------------------------------

struct TvspLayout {
    bool use_text = true;
    bool use_visual = true;
    bool active() const { return use_text || use_visual; }
};

template <typename S>
void register_tvsp(WeightStore<S>& w, Rng& rng, const std::string& prefix, int c, int text_dim,
                   int n_visual_tokens, const TvspLayout& layout) {
    if (!layout.active()) return;
    if (layout.use_text) w.add(prefix + "wq", init_trunc_normal<S>(rng, {text_dim, c}));
    if (layout.use_visual) {
        w.add(prefix + "tokens", init_prompt<S>(rng, {n_visual_tokens, text_dim}));
        w.add(prefix + "wv", init_trunc_normal<S>(rng, {text_dim, c}));
        if (layout.use_text) w.add(prefix + "wk", init_trunc_normal<S>(rng, {text_dim, c}));
    }
    w.add(prefix + "reduce.w", init_trunc_normal<S>(rng, {c, 2 * c}));
    w.add(prefix + "reduce.b", init_zeros<S>({c}));
}

// The fused degradation vector injected at one level: cross-attention with
// the projected textual prompt as the single query and the visual tokens as
// keys/values, plus a residual around the attention so the text identity
// survives into the fused vector. Returns a (1, C) row (pre-broadcast,
// pre-concat).
template <typename S>
Var tvsp_prompt_vector(Tape<S>& t, Params<S>& p, const std::string& prefix, Var pt_row, int c,
                       const TvspLayout& layout) {
    if (layout.use_text && layout.use_visual) {
        Var q = t.matmul(pt_row, p[prefix + "wq"]);                    // (1, C)
        Var k = t.matmul(p[prefix + "tokens"], p[prefix + "wk"]);      // (n_v, C)
        Var v = t.matmul(p[prefix + "tokens"], p[prefix + "wv"]);
        Var logits = t.scale(t.matmul(q, t.transpose(k)), S(1) / std::sqrt(static_cast<S>(c)));
        return t.add(q, t.matmul(t.softmax_rows(logits), v));
    }
    if (layout.use_text) return t.matmul(pt_row, p[prefix + "wq"]);
    return t.mean_rows0(t.matmul(p[prefix + "tokens"], p[prefix + "wv"]));
}

// Full skip-connection fusion: broadcast the prompt vector over the spatial
// extent, concatenate with the encoder features (2C channels) and reduce
// back to C with a point-wise convolution.
template <typename S>
Var tvsp_fuse(Tape<S>& t, Params<S>& p, const std::string& prefix, Var f_e, Var pt_row, int c,
              int n, const TvspLayout& layout) {
    Var pv = tvsp_prompt_vector(t, p, prefix, pt_row, c, layout);
    Var bc = t.broadcast_col(t.reshape(pv, {c}), n);
    Var cat = t.concat_rows({f_e, bc});
    return t.linear_cols(p[prefix + "reduce.w"], cat, p[prefix + "reduce.b"]);
}

}  // namespace mphsir::prompts
