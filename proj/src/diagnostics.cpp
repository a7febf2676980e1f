#include "mphsir/diagnostics.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace mphsir::prompts {

using hsi::HSICube;

std::vector<std::vector<double>> prompt_similarity_matrix(const WeightStore<float>& store,
                                                          const net::ModelConfig& cfg, int level,
                                                          const std::vector<int>& task_ids) {
    cfg.validate();
    if (level < 0 || level > 1) throw std::invalid_argument("similarity: level must be 0 or 1");
    const auto layout = cfg.tvsp_layout();
    if (!layout.active()) throw std::invalid_argument("similarity: prompts disabled in this config");
    const int c = cfg.level_channels(level);
    const std::string prefix = "tvsp" + std::to_string(level) + ".";

    std::vector<std::vector<double>> vectors;
    for (int task : task_ids) {
        Tape<float> tape;
        Params<float> params(tape, store, /*trainable=*/false);
        Var pt_row{};
        if (cfg.use_text_prompt) {
            net::PromptSelection sel;
            sel.override_id = task;
            pt_row = select_textual_prompt(tape, params["prompts.text_embed"], sel.probs,
                                           sel.override_id, sel.soft);
        }
        Var pv = tvsp_prompt_vector(tape, params, prefix, pt_row, c, layout);
        const Tensor<float>& v = tape.val(pv);
        std::vector<double> row(static_cast<size_t>(v.size()));
        for (std::int64_t i = 0; i < v.size(); ++i) row[static_cast<size_t>(i)] = static_cast<double>(v[i]);
        vectors.push_back(std::move(row));
    }

    const size_t n = vectors.size();
    std::vector<std::vector<double>> sim(n, std::vector<double>(n, 0.0));
    auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
        return s;
    };
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j)
            sim[i][j] = dot(vectors[i], vectors[j]) /
                        (std::sqrt(dot(vectors[i], vectors[i])) * std::sqrt(dot(vectors[j], vectors[j])) + 1e-300);
    return sim;
}

std::vector<double> spectral_prompt_activations(const WeightStore<float>& store,
                                                const net::ModelConfig& cfg, const HSICube& cube,
                                                const Region& region) {
    cfg.validate();
    cube.validate();
    if (!cfg.use_lsa || !cfg.use_spectral_prompt)
        throw std::invalid_argument("activations: spectral prompt disabled in this config");
    if (region.height <= 0 || region.width <= 0) throw std::invalid_argument("activations: empty region");
    if (region.y0 < 0 || region.x0 < 0 || region.y0 + region.height > cube.height ||
        region.x0 + region.width > cube.width)
        throw std::invalid_argument("activations: region outside cube extent");
    if (cube.bands != cfg.in_bands) throw std::invalid_argument("activations: band count mismatch");
    const int mult = cfg.pad_multiple();
    if (cube.height % mult != 0 || cube.width % mult != 0)
        throw std::invalid_argument("activations: cube extent must be a multiple of 4*window");

    const int h = cube.height, w = cube.width;
    Tensor<float> input({cube.bands, h * w});
    std::copy(cube.data.begin(), cube.data.end(), input.data());

    // Features entering the first block's spectral attention: stem, then the
    // spatial-attention residual and its layer norm.
    Tape<float> tape;
    Params<float> p(tape, store, /*trainable=*/false);
    const auto att = cfg.attention_config(0);
    Var f = tape.conv2d(tape.constant(std::move(input)), p["stem.w"], p["stem.b"], h, w, 1, 1);
    Var x1 = tape.add(f, sst::window_spatial_attention(tape, p, "enc0.blk0.ssa.",
                                                       sst::layernorm(tape, p, "enc0.blk0.ln1.", f),
                                                       h, w, att.heads, att.window, 0));
    Var z = sst::layernorm(tape, p, "enc0.blk0.ln2.", x1);
    Var m = sst::pooled_spectra(tape, z, h, w, att.window);           // (J, C)
    Var alpha = tape.softmax_rows(tape.matmul(m, p["lsa0.w1"]));      // (J, L)

    const Tensor<float>& av = tape.val(alpha);
    const int nww = w / att.window;
    const int l_len = av.dim(1);
    std::vector<double> mean(static_cast<size_t>(l_len), 0.0);
    int count = 0;
    for (int j = 0; j < av.dim(0); ++j) {
        const int wy = j / nww, wx = j % nww;
        const int py0 = wy * att.window, px0 = wx * att.window;
        const bool overlaps = py0 < region.y0 + region.height && py0 + att.window > region.y0 &&
                              px0 < region.x0 + region.width && px0 + att.window > region.x0;
        if (!overlaps) continue;
        for (int l = 0; l < l_len; ++l)
            mean[static_cast<size_t>(l)] += static_cast<double>(av[static_cast<std::int64_t>(j) * l_len + l]);
        ++count;
    }
    if (count == 0) throw std::invalid_argument("activations: region overlaps no patches");
    for (auto& v : mean) v /= count;
    return mean;
}

}  // namespace mphsir::prompts
