#include "mphsir/net.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mphsir::net {

using ordered_json = nlohmann::ordered_json;

void ModelConfig::validate() const {
    if (in_bands <= 0) throw std::invalid_argument("config: in_bands must be positive");
    if (base_channels <= 0) throw std::invalid_argument("config: base_channels must be positive");
    if (window < 1) throw std::invalid_argument("config: window must be >= 1");
    if (prompt_len < 1 || prompt_dim < 1) throw std::invalid_argument("config: prompt shape");
    if (n_visual_tokens < 1 || text_dim < 1) throw std::invalid_argument("config: prompt tokens");
    if (width_multiplier <= 0.0) throw std::invalid_argument("config: width multiplier");
    if (num_text_tasks < 1) throw std::invalid_argument("config: num_text_tasks");
    for (int l = 0; l < 3; ++l) {
        if (blocks[static_cast<size_t>(l)] < 1) throw std::invalid_argument("config: blocks per level");
        if (heads[static_cast<size_t>(l)] < 1) throw std::invalid_argument("config: heads per level");
        if (level_channels(l) % heads[static_cast<size_t>(l)] != 0)
            throw std::invalid_argument("config: channels not divisible by heads");
    }
}

std::string ModelConfig::to_json() const {
    ordered_json j;
    j["in_bands"] = in_bands;
    j["base_channels"] = base_channels;
    j["blocks"] = blocks;
    j["heads"] = heads;
    j["window"] = window;
    j["prompt_len"] = prompt_len;
    j["prompt_dim"] = prompt_dim;
    j["gmlp_expansion"] = gmlp_expansion;
    j["n_visual_tokens"] = n_visual_tokens;
    j["text_dim"] = text_dim;
    j["width_multiplier"] = width_multiplier;
    j["epsilon_init"] = epsilon_init;
    j["use_gsa"] = use_gsa;
    j["use_lsa"] = use_lsa;
    j["use_spectral_prompt"] = use_spectral_prompt;
    j["use_text_prompt"] = use_text_prompt;
    j["use_visual_prompt"] = use_visual_prompt;
    j["lsa_outer_product"] = lsa_outer_product;
    j["num_text_tasks"] = num_text_tasks;
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    ordered_json j = ordered_json::parse(text);
    ModelConfig c;
    c.in_bands = j.value("in_bands", c.in_bands);
    c.base_channels = j.value("base_channels", c.base_channels);
    if (j.contains("blocks")) c.blocks = j.at("blocks").get<std::array<int, 3>>();
    if (j.contains("heads")) c.heads = j.at("heads").get<std::array<int, 3>>();
    c.window = j.value("window", c.window);
    c.prompt_len = j.value("prompt_len", c.prompt_len);
    c.prompt_dim = j.value("prompt_dim", c.prompt_dim);
    c.gmlp_expansion = j.value("gmlp_expansion", c.gmlp_expansion);
    c.n_visual_tokens = j.value("n_visual_tokens", c.n_visual_tokens);
    c.text_dim = j.value("text_dim", c.text_dim);
    c.width_multiplier = j.value("width_multiplier", c.width_multiplier);
    c.epsilon_init = j.value("epsilon_init", c.epsilon_init);
    c.use_gsa = j.value("use_gsa", c.use_gsa);
    c.use_lsa = j.value("use_lsa", c.use_lsa);
    c.use_spectral_prompt = j.value("use_spectral_prompt", c.use_spectral_prompt);
    c.use_text_prompt = j.value("use_text_prompt", c.use_text_prompt);
    c.use_visual_prompt = j.value("use_visual_prompt", c.use_visual_prompt);
    c.lsa_outer_product = j.value("lsa_outer_product", c.lsa_outer_product);
    c.num_text_tasks = j.value("num_text_tasks", c.num_text_tasks);
    c.validate();
    return c;
}

std::string ModelConfig::hash() const {
    const std::string s = to_json();
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(hash64_str(s)));
    return std::string(buf);
}

std::int64_t count_params(const WeightStore<float>& store) { return store.count_params(); }

namespace {

int reflect_idx(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -1 - i;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

}  // namespace

hsi::HSICube forward_cube(const WeightStore<float>& store, const ModelConfig& cfg,
                          const hsi::HSICube& y, const PromptSelection& sel) {
    y.validate();
    if (y.bands != cfg.in_bands) throw std::invalid_argument("forward: band count does not match model");
    const int mult = cfg.pad_multiple();
    const int ph = (y.height + mult - 1) / mult * mult;
    const int pw = (y.width + mult - 1) / mult * mult;

    Tensor<float> input({cfg.in_bands, ph * pw});
    for (int b = 0; b < y.bands; ++b) {
        const float* src = y.band(b);
        float* dst = input.data() + static_cast<std::int64_t>(b) * ph * pw;
        for (int yy = 0; yy < ph; ++yy) {
            const int sy = reflect_idx(yy, y.height);
            for (int xx = 0; xx < pw; ++xx) dst[yy * pw + xx] = src[sy * y.width + reflect_idx(xx, y.width)];
        }
    }
    Tape<float> tape;
    Params<float> params(tape, store, /*trainable=*/false);
    Var in = tape.constant(std::move(input));
    Var out = forward_graph(tape, params, cfg, in, ph, pw, sel);
    const Tensor<float>& ov = tape.val(out);

    hsi::HSICube res(y.bands, y.height, y.width);
    res.wavelengths = y.wavelengths;
    for (int b = 0; b < y.bands; ++b) {
        const float* src = ov.data() + static_cast<std::int64_t>(b) * ph * pw;
        float* dst = res.band(b);
        for (int yy = 0; yy < y.height; ++yy)
            std::memcpy(dst + static_cast<std::int64_t>(yy) * y.width, src + static_cast<std::int64_t>(yy) * pw,
                        sizeof(float) * static_cast<size_t>(y.width));
    }
    return res;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O
// ---------------------------------------------------------------------------

void save_checkpoint(const std::string& path, const WeightStore<float>& store,
                     const std::string& kind, const std::string& config_json) {
    ordered_json j;
    j["format"] = "mphsir-ckpt-v1";
    j["kind"] = kind;
    j["seed"] = store.creation_seed();
    j["config"] = ordered_json::parse(config_json);
    ordered_json table = ordered_json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : store.tensors()) {
        ordered_json te;
        te["name"] = name;
        te["shape"] = t.shape();
        te["dtype"] = "f32le";
        te["offset"] = offset;
        table.push_back(te);
        offset += static_cast<std::uint64_t>(t.size()) * sizeof(float);
    }
    j["tensors"] = table;
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
    const std::string header = j.dump() + "\n";
    f.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& [name, t] : store.tensors())
        f.write(reinterpret_cast<const char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!f) throw std::runtime_error("save_checkpoint: short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("load_checkpoint: missing header");
    ordered_json j;
    try {
        j = ordered_json::parse(line);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("load_checkpoint: malformed header: ") + e.what());
    }
    if (j.value("format", "") != "mphsir-ckpt-v1")
        throw std::runtime_error("load_checkpoint: unknown format tag");
    Checkpoint ck;
    ck.kind = j.at("kind").get<std::string>();
    ck.config_json = j.at("config").dump();
    ck.store.set_creation_seed(j.at("seed").get<std::uint64_t>());
    for (const auto& te : j.at("tensors")) {
        const std::string name = te.at("name").get<std::string>();
        const Shape shape = te.at("shape").get<Shape>();
        if (te.at("dtype").get<std::string>() != "f32le")
            throw std::runtime_error("load_checkpoint: unsupported dtype");
        Tensor<float> t(shape);
        f.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
        if (f.gcount() != static_cast<std::streamsize>(t.size() * sizeof(float)))
            throw std::runtime_error("load_checkpoint: truncated payload");
        ck.store.add(name, std::move(t));
    }
    return ck;
}

}  // namespace mphsir::net
