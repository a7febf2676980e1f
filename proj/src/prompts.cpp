#include "mphsir/prompts.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace mphsir::prompts {

using json = nlohmann::ordered_json;

std::vector<std::string> default_task_descriptions() {
    return {
        "Remove the Gaussian noise in the hyperspectral image",
        "Remove the complex mixed noise in the hyperspectral image",
        "Remove the Gaussian blur in the hyperspectral image",
        "Increase the spatial resolution of the hyperspectral image",
        "Fill in the masked regions of the hyperspectral image",
        "Remove the haze in the hyperspectral image",
        "Reconstruct the missing spectral bands of the hyperspectral image",
        "Remove the motion blur in the hyperspectral image",
        "Remove the Poisson noise in the hyperspectral image",
    };
}

std::vector<float> HashProjectionEncoder::encode(const std::string& text) const {
    Rng rng(hash64(salt_, hash64_str(text)));
    std::vector<float> v(static_cast<size_t>(dim_));
    double ss = 0.0;
    for (auto& x : v) {
        x = static_cast<float>(rng.normal());
        ss += static_cast<double>(x) * x;
    }
    const float inv = static_cast<float>(1.0 / std::sqrt(ss + 1e-12));
    for (auto& x : v) x *= inv;
    return v;
}

FileBackedEncoder::FileBackedEncoder(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("embedding file: cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("embedding file: missing header");
    json j = json::parse(line);
    dim_ = j.at("d_t").get<int>();
    const auto& index = j.at("index");
    std::vector<std::pair<std::string, int>> entries;
    for (auto it = index.begin(); it != index.end(); ++it)
        entries.emplace_back(it.key(), it.value().get<int>());
    std::sort(entries.begin(), entries.end(),
              [](const auto& a, const auto& b) { return a.second < b.second; });
    rows_.resize(entries.size(), std::vector<float>(static_cast<size_t>(dim_)));
    names_.resize(entries.size());
    for (size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].second != static_cast<int>(i))
            throw std::runtime_error("embedding file: non-contiguous row index");
        names_[i] = entries[i].first;
        f.read(reinterpret_cast<char*>(rows_[i].data()),
               static_cast<std::streamsize>(sizeof(float) * static_cast<size_t>(dim_)));
        if (f.gcount() != static_cast<std::streamsize>(sizeof(float) * static_cast<size_t>(dim_)))
            throw std::runtime_error("embedding file: truncated matrix");
    }
}

std::vector<float> FileBackedEncoder::encode(const std::string& text) const {
    for (size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == text) return rows_[i];
    throw std::runtime_error("embedding file: no entry for '" + text + "'");
}

void write_embedding_file(const std::string& path, int dim,
                          const std::vector<std::pair<std::string, std::vector<float>>>& rows) {
    json index = json::object();
    for (size_t i = 0; i < rows.size(); ++i) index[rows[i].first] = static_cast<int>(i);
    json header;
    header["d_t"] = dim;
    header["index"] = index;
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("embedding file: cannot open " + path);
    const std::string line = header.dump() + "\n";
    f.write(line.data(), static_cast<std::streamsize>(line.size()));
    for (const auto& [name, row] : rows) {
        if (static_cast<int>(row.size()) != dim)
            throw std::invalid_argument("embedding file: row size mismatch for " + name);
        f.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(sizeof(float) * row.size()));
    }
}

int select_prompt_index(const std::vector<double>& probs, int override_id, int table_rows) {
    if (table_rows <= 0) throw std::invalid_argument("textual prompt table is empty");
    if (override_id >= 0) {
        if (override_id >= table_rows) throw std::invalid_argument("prompt override out of range");
        return override_id;
    }
    if (probs.empty()) throw std::invalid_argument("prompt selection needs probabilities or an override");
    int best = 0;
    for (size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] < 0.0) throw std::invalid_argument("negative probability");
        if (probs[i] > probs[static_cast<size_t>(best)]) best = static_cast<int>(i);
    }
    if (best >= table_rows) throw std::invalid_argument("probability index outside table");
    return best;
}

}  // namespace mphsir::prompts
