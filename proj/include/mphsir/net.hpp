#pragma once

// Full restoration network: conv stem, three-level encoder of PGSSTB blocks
// with strided-conv downsampling, TVSP-augmented skip connections, mirrored
// decoder with transposed-conv upsampling, and a conv head behind an
// image-level residual.

#include "mphsir/hsicube.hpp"
#include "mphsir/prompts.hpp"
#include "mphsir/sst.hpp"
#include "mphsir/weights.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mphsir::net {

struct ModelConfig {
    int in_bands = 31;
    int base_channels = 32;              // C0
    std::array<int, 3> blocks{2, 3, 4};  // per level, deepest level is the bottleneck
    std::array<int, 3> heads{2, 4, 8};
    int window = 8;                      // P
    int prompt_len = 16;                 // L
    int prompt_dim = 64;                 // D
    int gmlp_expansion = 2;              // r
    int n_visual_tokens = 8;             // n_v
    int text_dim = 512;                  // d_t
    double width_multiplier = 1.0;       // 1.5 for the remote-sensing variant
    double epsilon_init = 1.0;
    // Ablation switchboard; the full model enables everything.
    bool use_gsa = true;
    bool use_lsa = true;
    bool use_spectral_prompt = true;
    bool use_text_prompt = true;
    bool use_visual_prompt = true;
    bool lsa_outer_product = false;
    int num_text_tasks = 9;

    int level_channels(int level) const {
        const int c0 = static_cast<int>(std::lround(base_channels * width_multiplier));
        return c0 << level;
    }
    // Two downsamplings then windowing: extents must divide 4 * P.
    int pad_multiple() const { return 4 * window; }

    sst::AttentionConfig attention_config(int level) const {
        sst::AttentionConfig a;
        a.window = window;
        a.heads = heads[static_cast<size_t>(level)];
        a.epsilon_init = epsilon_init;
        a.prompt_len = prompt_len;
        a.prompt_dim = prompt_dim;
        a.gmlp_expansion = gmlp_expansion;
        a.lsa_outer_product = lsa_outer_product;
        return a;
    }
    sst::BlockLayout block_layout() const { return {use_gsa, use_lsa, use_spectral_prompt}; }
    prompts::TvspLayout tvsp_layout() const { return {use_text_prompt, use_visual_prompt}; }

    void validate() const;
    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
    std::string hash() const;
};

// How the textual prompt row is chosen for one forward pass.
struct PromptSelection {
    std::vector<double> probs;  // predictor outputs; may be empty with an override
    int override_id = -1;       // >= 0 bypasses probs (controllable restoration)
    bool soft = false;
};

// ---------------------------------------------------------------------------
// Construction and forward graph
// ---------------------------------------------------------------------------

// Deterministic initialization; the parameter inventory is a pure function
// of the config. `encoder` seeds the textual embeddings (hash projection by
// default).
template <typename S>
WeightStore<S> build_model(const ModelConfig& cfg, std::uint64_t seed,
                           const prompts::TextEncoder* encoder = nullptr);

// Builds the restoration graph on an existing tape. `y` is the (B, h*w)
// degraded input; h and w must be multiples of pad_multiple().
template <typename S>
Var forward_graph(Tape<S>& t, Params<S>& p, const ModelConfig& cfg, Var y, int h, int w,
                  const PromptSelection& sel);

std::int64_t count_params(const WeightStore<float>& store);

// Inference on one cube: reflect-pads to the required multiple, runs the
// graph without gradients, crops back. Shape and wavelengths are preserved.
hsi::HSICube forward_cube(const WeightStore<float>& store, const ModelConfig& cfg,
                          const hsi::HSICube& y, const PromptSelection& sel);

// ---------------------------------------------------------------------------
// Checkpoints: one JSON header line (kind, seed, config, tensor table with
// byte offsets) followed by the concatenated float32 LE payload.
// ---------------------------------------------------------------------------

struct Checkpoint {
    WeightStore<float> store;
    std::string kind;         // "restorer" or "predictor"
    std::string config_json;
};

void save_checkpoint(const std::string& path, const WeightStore<float>& store,
                     const std::string& kind, const std::string& config_json);
Checkpoint load_checkpoint(const std::string& path);

// ---------------------------------------------------------------------------
// Template implementations
// ---------------------------------------------------------------------------

template <typename S>
WeightStore<S> build_model(const ModelConfig& cfg, std::uint64_t seed,
                           const prompts::TextEncoder* encoder) {
    cfg.validate();
    WeightStore<S> w(seed);
    Rng rng(hash64(seed, 0x6d703a6e6574ULL));
    const auto layout = cfg.block_layout();
    const auto tvspl = cfg.tvsp_layout();

    w.add("stem.w", init_trunc_normal<S>(rng, {cfg.level_channels(0), cfg.in_bands, 3, 3}));
    w.add("stem.b", init_zeros<S>({cfg.level_channels(0)}));

    auto register_level_blocks = [&](const std::string& base, int level, int count) {
        const auto att = cfg.attention_config(level);
        for (int k = 0; k < count; ++k)
            sst::register_block(w, rng, base + ".blk" + std::to_string(k) + ".",
                                cfg.level_channels(level), att, layout, cfg.epsilon_init);
    };

    for (int l = 0; l < 2; ++l) {
        register_level_blocks("enc" + std::to_string(l), l, cfg.blocks[static_cast<size_t>(l)]);
        w.add("down" + std::to_string(l) + ".w",
              init_trunc_normal<S>(rng, {cfg.level_channels(l + 1), cfg.level_channels(l), 3, 3}));
        w.add("down" + std::to_string(l) + ".b", init_zeros<S>({cfg.level_channels(l + 1)}));
    }
    register_level_blocks("mid", 2, cfg.blocks[2]);
    for (int l = 1; l >= 0; --l) {
        w.add("up" + std::to_string(l) + ".w",
              init_trunc_normal<S>(rng, {cfg.level_channels(l + 1), cfg.level_channels(l), 2, 2}));
        w.add("up" + std::to_string(l) + ".b", init_zeros<S>({cfg.level_channels(l)}));
        prompts::register_tvsp(w, rng, "tvsp" + std::to_string(l) + ".", cfg.level_channels(l),
                               cfg.text_dim, cfg.n_visual_tokens, tvspl);
        w.add("skipfuse" + std::to_string(l) + ".w",
              init_trunc_normal<S>(rng, {cfg.level_channels(l), 2 * cfg.level_channels(l)}));
        w.add("skipfuse" + std::to_string(l) + ".b", init_zeros<S>({cfg.level_channels(l)}));
        register_level_blocks("dec" + std::to_string(l), l, cfg.blocks[static_cast<size_t>(l)]);
    }
    w.add("head.w", init_trunc_normal<S>(rng, {cfg.in_bands, cfg.level_channels(0), 3, 3}));
    w.add("head.b", init_zeros<S>({cfg.in_bands}));

    // One shared spectral-prompt stack per level (pooled-spectrum width
    // differs across levels).
    if (cfg.use_lsa)
        for (int l = 0; l < 3; ++l)
            sst::register_lsa(w, rng, "lsa" + std::to_string(l) + ".", cfg.level_channels(l),
                              cfg.attention_config(l), cfg.use_spectral_prompt);

    if (cfg.use_text_prompt) {
        prompts::HashProjectionEncoder fallback(cfg.text_dim);
        const prompts::TextEncoder& enc = encoder ? *encoder : fallback;
        if (enc.dim() != cfg.text_dim)
            throw std::invalid_argument("text encoder dimension does not match config");
        const auto names = prompts::default_task_descriptions();
        if (cfg.num_text_tasks > static_cast<int>(names.size()))
            throw std::invalid_argument("more text tasks than known descriptions");
        Tensor<S> table({cfg.num_text_tasks, cfg.text_dim});
        for (int r = 0; r < cfg.num_text_tasks; ++r) {
            const auto v = enc.encode(names[static_cast<size_t>(r)]);
            for (int cdim = 0; cdim < cfg.text_dim; ++cdim)
                table[static_cast<std::int64_t>(r) * cfg.text_dim + cdim] = static_cast<S>(v[static_cast<size_t>(cdim)]);
        }
        w.add("prompts.text_embed", std::move(table));
    }
    return w;
}

template <typename S>
Var forward_graph(Tape<S>& t, Params<S>& p, const ModelConfig& cfg, Var y, int h, int w,
                  const PromptSelection& sel) {
    cfg.validate();
    if (h % cfg.pad_multiple() != 0 || w % cfg.pad_multiple() != 0)
        throw std::invalid_argument("forward: extent must be a multiple of 4*window (caller pads)");
    const auto layout = cfg.block_layout();
    const auto tvspl = cfg.tvsp_layout();

    Var pt_row{};
    if (cfg.use_text_prompt)
        pt_row = prompts::select_textual_prompt(t, p["prompts.text_embed"], sel.probs,
                                                sel.override_id, sel.soft);

    auto run_blocks = [&](Var x, const std::string& base, int level, int count, int lh, int lw) {
        const auto att = cfg.attention_config(level);
        const std::string lsa_prefix = "lsa" + std::to_string(level) + ".";
        for (int k = 0; k < count; ++k) {
            const int shift = (k % 2 == 1) ? cfg.window / 2 : 0;
            x = sst::pgsstb_forward(t, p, base + ".blk" + std::to_string(k) + ".", lsa_prefix, x,
                                    lh, lw, att, layout, shift);
        }
        return x;
    };

    Var x = t.conv2d(y, p["stem.w"], p["stem.b"], h, w, 1, 1);
    int lh = h, lw = w;
    std::array<Var, 2> skips;
    std::array<std::pair<int, int>, 2> skip_dims;
    for (int l = 0; l < 2; ++l) {
        x = run_blocks(x, "enc" + std::to_string(l), l, cfg.blocks[static_cast<size_t>(l)], lh, lw);
        skips[static_cast<size_t>(l)] = x;
        skip_dims[static_cast<size_t>(l)] = {lh, lw};
        x = t.conv2d(x, p["down" + std::to_string(l) + ".w"], p["down" + std::to_string(l) + ".b"],
                     lh, lw, 2, 1);
        lh /= 2;
        lw /= 2;
    }
    x = run_blocks(x, "mid", 2, cfg.blocks[2], lh, lw);
    for (int l = 1; l >= 0; --l) {
        x = t.conv_transpose2d_s2(x, p["up" + std::to_string(l) + ".w"],
                                  p["up" + std::to_string(l) + ".b"], lh, lw);
        lh *= 2;
        lw *= 2;
        Var skip = skips[static_cast<size_t>(l)];
        if (tvspl.active())
            skip = prompts::tvsp_fuse(t, p, "tvsp" + std::to_string(l) + ".", skip, pt_row,
                                      cfg.level_channels(l), lh * lw, tvspl);
        Var cat = t.concat_rows({x, skip});
        x = t.linear_cols(p["skipfuse" + std::to_string(l) + ".w"], cat,
                          p["skipfuse" + std::to_string(l) + ".b"]);
        x = run_blocks(x, "dec" + std::to_string(l), l, cfg.blocks[static_cast<size_t>(l)], lh, lw);
    }
    Var head = t.conv2d(x, p["head.w"], p["head.b"], h, w, 1, 1);
    return t.add(head, y);
}

}  // namespace mphsir::net
