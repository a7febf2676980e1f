#pragma once

// Attention kernels of the prompt-guided spatial-spectral transformer block:
// windowed spatial self-attention, global spectral self-attention (transposed
// attention with a learnable temperature), prompt-guided local spectral
// self-attention, and the gated MLP. All functions build tape graphs; feature
// maps are (C, h*w) band-major tensors.

#include "mphsir/autodiff.hpp"
#include "mphsir/weights.hpp"

#include <string>

namespace mphsir::sst {

inline constexpr double kMinTemperature = 1e-4;

struct AttentionConfig {
    int window = 8;        // P
    int heads = 1;
    double epsilon_init = 1.0;
    int prompt_len = 16;   // L, number of spectral patterns
    int prompt_dim = 64;   // D
    int gmlp_expansion = 2;
    bool lsa_outer_product = false;  // D x D attention map variant of Eq. 6
};

// Which sub-layers a block carries (the ablation switchboard).
struct BlockLayout {
    bool use_gsa = true;
    bool use_lsa = true;
    bool use_spectral_prompt = true;
};

// ---------------------------------------------------------------------------
// Parameter registration. `prefix` scopes tensor names, e.g. "enc0.blk1.".
// Local spectral attention weights are shared per level and registered under
// their own prefix.
// ---------------------------------------------------------------------------

template <typename S>
void register_layernorm(WeightStore<S>& w, const std::string& prefix, int c) {
    w.add(prefix + "g", init_const<S>({c}, 1.0));
    w.add(prefix + "b", init_zeros<S>({c}));
}

template <typename S>
void register_ssa(WeightStore<S>& w, Rng& rng, const std::string& prefix, int c) {
    for (const char* nm : {"wq", "wk", "wv", "wo"}) w.add(prefix + nm, init_trunc_normal<S>(rng, {c, c}));
    for (const char* nm : {"bq", "bk", "bv", "bo"}) w.add(prefix + nm, init_zeros<S>({c}));
}

template <typename S>
void register_gsa(WeightStore<S>& w, Rng& rng, const std::string& prefix, int c, int heads,
                  double epsilon_init) {
    for (const char* nm : {"pq", "pk", "pv", "po"}) w.add(prefix + nm, init_trunc_normal<S>(rng, {c, c}));
    for (const char* nm : {"pqb", "pkb", "pvb", "pob"}) w.add(prefix + nm, init_zeros<S>({c}));
    for (const char* nm : {"dq", "dk", "dv"}) w.add(prefix + nm, init_trunc_normal<S>(rng, {c, 3, 3}));
    w.add(prefix + "eps", init_const<S>({heads}, epsilon_init));
}

template <typename S>
void register_lsa(WeightStore<S>& w, Rng& rng, const std::string& prefix, int c,
                  const AttentionConfig& cfg, bool use_prompt) {
    if (use_prompt) {
        w.add(prefix + "w1", init_trunc_normal<S>(rng, {c, cfg.prompt_len}));
        w.add(prefix + "patterns", init_prompt<S>(rng, {cfg.prompt_len, cfg.prompt_dim}));
    }
    w.add(prefix + "w2", init_trunc_normal<S>(rng, {c, cfg.prompt_dim}));
    w.add(prefix + "w3", init_trunc_normal<S>(rng, {cfg.prompt_dim, cfg.prompt_dim}));
    w.add(prefix + "wp", init_trunc_normal<S>(rng, {cfg.prompt_dim, c}));
    w.add(prefix + "eps", init_const<S>({1}, cfg.epsilon_init));
}

template <typename S>
void register_gmlp(WeightStore<S>& w, Rng& rng, const std::string& prefix, int c, int expansion) {
    const int hidden = expansion * c;
    w.add(prefix + "w1", init_trunc_normal<S>(rng, {2 * hidden, c}));
    w.add(prefix + "b1", init_zeros<S>({2 * hidden}));
    w.add(prefix + "w2", init_trunc_normal<S>(rng, {c, hidden}));
    w.add(prefix + "b2", init_zeros<S>({c}));
}

template <typename S>
void register_block(WeightStore<S>& w, Rng& rng, const std::string& prefix, int c,
                    const AttentionConfig& cfg, const BlockLayout& layout, double epsilon_init) {
    register_layernorm(w, prefix + "ln1.", c);
    register_ssa(w, rng, prefix + "ssa.", c);
    const bool has_pgssa = layout.use_gsa || layout.use_lsa;
    if (has_pgssa) {
        register_layernorm(w, prefix + "ln2.", c);
        if (layout.use_gsa) register_gsa(w, rng, prefix + "gsa.", c, cfg.heads, epsilon_init);
        const int branches = (layout.use_gsa ? 1 : 0) + (layout.use_lsa ? 1 : 0);
        w.add(prefix + "fuse.w", init_trunc_normal<S>(rng, {c, branches * c}));
        w.add(prefix + "fuse.b", init_zeros<S>({c}));
        register_gmlp(w, rng, prefix + "pgmlp.", c, cfg.gmlp_expansion);
    }
    register_layernorm(w, prefix + "ln3.", c);
    register_gmlp(w, rng, prefix + "gmlp.", c, cfg.gmlp_expansion);
}

// ---------------------------------------------------------------------------
// Forward kernels
// ---------------------------------------------------------------------------

template <typename S>
Var layernorm(Tape<S>& t, Params<S>& p, const std::string& prefix, Var f) {
    return t.layernorm_cols(f, p[prefix + "g"], p[prefix + "b"], S(1e-5));
}

// Windowed multi-head spatial self-attention. `shift` cycles the window
// origin (the sliding-window schedule uses floor(P/2) on alternate blocks).
template <typename S>
Var window_spatial_attention(Tape<S>& t, Params<S>& p, const std::string& prefix, Var f, int h,
                             int w, int heads, int window, int shift) {
    Var q = t.linear_cols(p[prefix + "wq"], f, p[prefix + "bq"]);
    Var k = t.linear_cols(p[prefix + "wk"], f, p[prefix + "bk"]);
    Var v = t.linear_cols(p[prefix + "wv"], f, p[prefix + "bv"]);
    Var att = t.window_attention(q, k, v, h, w, window, heads, shift);
    return t.linear_cols(p[prefix + "wo"], att, p[prefix + "bo"]);
}

// Global spectral self-attention: point-wise then depth-wise projections,
// transposed attention over channels with per-head temperature.
template <typename S>
Var global_spectral_attention(Tape<S>& t, Params<S>& p, const std::string& prefix, Var f, int h,
                              int w, int heads) {
    Var q = t.conv2d_depthwise3(t.linear_cols(p[prefix + "pq"], f, p[prefix + "pqb"]),
                                p[prefix + "dq"], Var{}, h, w);
    Var k = t.conv2d_depthwise3(t.linear_cols(p[prefix + "pk"], f, p[prefix + "pkb"]),
                                p[prefix + "dk"], Var{}, h, w);
    Var v = t.conv2d_depthwise3(t.linear_cols(p[prefix + "pv"], f, p[prefix + "pvb"]),
                                p[prefix + "dv"], Var{}, h, w);
    Var att = t.spectral_attention(q, k, v, p[prefix + "eps"], heads, S(kMinTemperature));
    return t.linear_cols(p[prefix + "po"], att, p[prefix + "pob"]);
}

// Patch-pooled spectra, one 1 x C row per window-sized patch.
template <typename S>
Var pooled_spectra(Tape<S>& t, Var f, int h, int w, int window) {
    return t.avg_pool_patches(f, h, w, window);
}

// Prompt-guided local spectral self-attention. Pooled patch spectra address
// the spectral prompt to form queries; the attention result gates the input
// patch per channel through a sigmoid.
template <typename S>
Var local_spectral_attention(Tape<S>& t, Params<S>& p, const std::string& prefix, Var f, int h,
                             int w, const AttentionConfig& cfg, bool use_prompt) {
    Var m = pooled_spectra(t, f, h, w, cfg.window);  // (J, C)
    Var kv = t.matmul(t.matmul(m, p[prefix + "w2"]), p[prefix + "w3"]);  // (J, D)
    Var query;
    if (use_prompt) {
        Var alpha = t.softmax_rows(t.matmul(m, p[prefix + "w1"]));       // (J, L)
        query = t.matmul(t.matmul(alpha, p[prefix + "patterns"]), p[prefix + "w3"]);
    } else {
        query = kv;
    }
    Var eps = p[prefix + "eps"];
    Var attn_out;  // (J, D)
    if (!cfg.lsa_outer_product) {
        Var logits = t.div_scalar_clamped(t.mul(query, kv), eps, S(kMinTemperature));
        attn_out = t.mul(t.softmax_rows(logits), kv);
    } else {
        // D x D attention map per patch: A = softmax(q^T k / eps), out = A v.
        const int j_count = t.val(m).dim(0);
        std::vector<Var> rows;
        rows.reserve(static_cast<size_t>(j_count));
        for (int j = 0; j < j_count; ++j) {
            Var qj = t.slice_rows(query, j, j + 1);  // (1, D)
            Var kj = t.slice_rows(kv, j, j + 1);
            Var amap = t.softmax_rows(
                t.div_scalar_clamped(t.matmul(t.transpose(qj), kj), eps, S(kMinTemperature)));
            rows.push_back(t.transpose(t.matmul(amap, t.transpose(kj))));  // (1, D)
        }
        attn_out = t.concat_rows(rows);
    }
    Var gate = t.sigmoid(t.matmul(attn_out, p[prefix + "wp"]));  // (J, C)
    return t.scale_patches(f, gate, h, w, cfg.window);
}

// Gated MLP: expand to 2*r*C, split, multiply one half by gelu of the other,
// project back.
template <typename S>
Var gmlp(Tape<S>& t, Params<S>& p, const std::string& prefix, Var f, int expansion) {
    const int c = t.val(f).dim(0);
    const int hidden = expansion * c;
    Var uv = t.linear_cols(p[prefix + "w1"], f, p[prefix + "b1"]);
    Var u = t.slice_rows(uv, 0, hidden);
    Var v = t.slice_rows(uv, hidden, 2 * hidden);
    return t.linear_cols(p[prefix + "w2"], t.mul(u, t.gelu(v)), p[prefix + "b2"]);
}

// Full transformer block: spatial attention, dual-branch spectral attention
// fused through a point-wise convolution and refined by a gated MLP, then the
// block-level gated MLP, each behind a layer-normalized residual.
// `lsa_prefix` names the per-level shared local-spectral weights.
template <typename S>
Var pgsstb_forward(Tape<S>& t, Params<S>& p, const std::string& prefix,
                   const std::string& lsa_prefix, Var f, int h, int w,
                   const AttentionConfig& cfg, const BlockLayout& layout, int shift) {
    Var x1 = t.add(f, window_spatial_attention(t, p, prefix + "ssa.",
                                               layernorm(t, p, prefix + "ln1.", f), h, w,
                                               cfg.heads, cfg.window, shift));
    Var x2 = x1;
    if (layout.use_gsa || layout.use_lsa) {
        Var z = layernorm(t, p, prefix + "ln2.", x1);
        std::vector<Var> branches;
        if (layout.use_gsa)
            branches.push_back(global_spectral_attention(t, p, prefix + "gsa.", z, h, w, cfg.heads));
        if (layout.use_lsa)
            branches.push_back(local_spectral_attention(t, p, lsa_prefix, z, h, w, cfg,
                                                        layout.use_spectral_prompt));
        Var cat = branches.size() == 1 ? branches[0] : t.concat_rows(branches);
        Var fused = t.linear_cols(p[prefix + "fuse.w"], cat, p[prefix + "fuse.b"]);
        x2 = t.add(x1, gmlp(t, p, prefix + "pgmlp.", fused, cfg.gmlp_expansion));
    }
    return t.add(x2, gmlp(t, p, prefix + "gmlp.", layernorm(t, p, prefix + "ln3.", x2),
                          cfg.gmlp_expansion));
}

}  // namespace mphsir::sst
