#include "mphsir/hsicube.hpp"

#include "mphsir/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>

namespace mphsir::hsi {

using ordered_json = nlohmann::ordered_json;

void HSICube::validate() const {
    if (height <= 0 || width <= 0 || bands <= 0)
        throw std::invalid_argument("cube: non-positive dimension");
    if (static_cast<std::int64_t>(data.size()) != voxels())
        throw std::invalid_argument("cube: data length does not equal bands*height*width");
    if (!wavelengths.empty()) {
        if (static_cast<int>(wavelengths.size()) != bands)
            throw std::invalid_argument("cube: wavelength count does not equal bands");
        for (size_t i = 1; i < wavelengths.size(); ++i)
            if (!(wavelengths[i] > wavelengths[i - 1]))
                throw std::invalid_argument("cube: wavelengths not strictly increasing");
    }
}

std::vector<ManifestEntry> DatasetManifest::split(const std::string& tag) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
        if (e.split == tag) out.push_back(e);
    return out;
}

HSICube normalize_minmax(const HSICube& cube) {
    cube.validate();
    float lo = std::numeric_limits<float>::max();
    float hi = std::numeric_limits<float>::lowest();
    for (float v : cube.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (!(hi > lo)) throw std::runtime_error("normalize_minmax: degenerate range");
    HSICube out = cube;
    const float inv = 1.0f / (hi - lo);
    for (float& v : out.data) v = (v - lo) * inv;
    return out;
}

std::vector<HSICube> crop_patches(const HSICube& cube, const PatchSpec& spec) {
    cube.validate();
    if (spec.size <= 0 || spec.stride <= 0) throw std::invalid_argument("crop_patches: non-positive spec");
    if (spec.stride > spec.size) throw std::invalid_argument("crop_patches: stride exceeds size");
    if (spec.size > cube.height || spec.size > cube.width)
        throw std::invalid_argument("crop_patches: patch size exceeds cube extent");
    const int ny = (cube.height - spec.size) / spec.stride + 1;
    const int nx = (cube.width - spec.size) / spec.stride + 1;
    std::vector<HSICube> patches;
    patches.reserve(static_cast<size_t>(ny) * nx);
    for (int py = 0; py < ny; ++py) {
        for (int px = 0; px < nx; ++px) {
            HSICube p(cube.bands, spec.size, spec.size);
            p.wavelengths = cube.wavelengths;
            const int y0 = py * spec.stride, x0 = px * spec.stride;
            for (int b = 0; b < cube.bands; ++b)
                for (int y = 0; y < spec.size; ++y)
                    std::memcpy(p.band(b) + static_cast<std::int64_t>(y) * spec.size,
                                cube.band(b) + (static_cast<std::int64_t>(y0 + y) * cube.width + x0),
                                sizeof(float) * static_cast<size_t>(spec.size));
            patches.push_back(std::move(p));
        }
    }
    return patches;
}

namespace {

// Smooth 2-d field: three cosine plane waves with decaying amplitudes.
// Frequencies are in cycles per image extent.
struct PlaneWaveField {
    struct Wave {
        double fx, fy, phase, amp;
    };
    std::vector<Wave> waves;
    double offset = 0.0;

    static PlaneWaveField random(Rng& rng) {
        PlaneWaveField f;
        const double amps[3] = {1.0, 0.6, 0.35};
        for (double amp : amps) {
            double mag = rng.uniform(0.5, 3.5);
            double dir = rng.uniform(0.0, 6.283185307179586);
            f.waves.push_back({mag * std::cos(dir), mag * std::sin(dir),
                               rng.uniform(0.0, 6.283185307179586), amp});
        }
        f.offset = rng.uniform(-0.5, 0.5);
        return f;
    }

    double eval(double u, double v) const {
        double s = offset;
        for (const auto& wv : waves)
            s += wv.amp * std::cos(6.283185307179586 * (wv.fx * u + wv.fy * v) + wv.phase);
        return s;
    }
};

}  // namespace

HSICube synth_cube(std::uint64_t seed, int h, int w, int b, int rank) {
    if (h <= 0 || w <= 0 || b <= 0) throw std::invalid_argument("synth_cube: non-positive dimension");
    if (rank < 1 || rank > b) throw std::invalid_argument("synth_cube: rank must be in [1, bands]");
    Rng rng(hash64(seed, 0x73796e7468ULL));  // fixed stream tag

    // Spatial abundance fields.
    std::vector<PlaneWaveField> fields;
    fields.reserve(static_cast<size_t>(rank));
    for (int r = 0; r < rank; ++r) fields.push_back(PlaneWaveField::random(rng));

    // Spectral signatures: one cosine per component with distinct, spread
    // frequencies so that rank == b stays numerically full rank.
    std::vector<std::vector<double>> sig(static_cast<size_t>(rank), std::vector<double>(static_cast<size_t>(b)));
    for (int r = 0; r < rank; ++r) {
        const double freq = 0.3 + 0.42 * r + 0.05 * rng.uniform();
        const double phase = rng.uniform(0.0, 6.283185307179586);
        const double amp = rng.uniform(0.6, 1.0);
        for (int j = 0; j < b; ++j) {
            const double t = (b > 1) ? static_cast<double>(j) / (b - 1) : 0.0;
            sig[static_cast<size_t>(r)][static_cast<size_t>(j)] =
                amp * std::cos(6.283185307179586 * freq * t + phase);
        }
    }

    HSICube cube(b, h, w);
    std::vector<double> abundance(static_cast<size_t>(rank));
    std::vector<double> raw(static_cast<size_t>(cube.voxels()));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double u = static_cast<double>(x) / w;
            const double v = static_cast<double>(y) / h;
            for (int r = 0; r < rank; ++r) abundance[static_cast<size_t>(r)] = fields[static_cast<size_t>(r)].eval(u, v);
            for (int j = 0; j < b; ++j) {
                double s = 0.0;
                for (int r = 0; r < rank; ++r)
                    s += abundance[static_cast<size_t>(r)] * sig[static_cast<size_t>(r)][static_cast<size_t>(j)];
                raw[(static_cast<size_t>(j) * h + y) * w + x] = s;
            }
        }
    }
    for (std::int64_t i = 0; i < cube.voxels(); ++i) cube.data[static_cast<size_t>(i)] = static_cast<float>(raw[static_cast<size_t>(i)]);

    cube.wavelengths.resize(static_cast<size_t>(b));
    for (int j = 0; j < b; ++j)
        cube.wavelengths[static_cast<size_t>(j)] = 400.0 + (b > 1 ? 300.0 * j / (b - 1) : 0.0);
    return normalize_minmax(cube);
}

void write_cube(const HSICube& cube, const std::string& path) {
    cube.validate();
    ordered_json header;
    header["h"] = cube.height;
    header["w"] = cube.width;
    header["b"] = cube.bands;
    header["dtype"] = "f32le";
    header["order"] = "bhw";
    if (cube.wavelengths.empty())
        header["wavelengths"] = nullptr;
    else
        header["wavelengths"] = cube.wavelengths;
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("write_cube: cannot open " + path);
    const std::string line = header.dump() + "\n";
    f.write(line.data(), static_cast<std::streamsize>(line.size()));
    static_assert(sizeof(float) == 4);
    f.write(reinterpret_cast<const char*>(cube.data.data()),
            static_cast<std::streamsize>(cube.data.size() * sizeof(float)));
    if (!f) throw std::runtime_error("write_cube: short write to " + path);
}

HSICube read_cube(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_cube: cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("read_cube: malformed header (missing line)");
    ordered_json header;
    try {
        header = ordered_json::parse(line);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("read_cube: malformed header: ") + e.what());
    }
    HSICube cube;
    try {
        cube.height = header.at("h").get<int>();
        cube.width = header.at("w").get<int>();
        cube.bands = header.at("b").get<int>();
        const std::string dtype = header.at("dtype").get<std::string>();
        if (dtype != "f32le") throw std::runtime_error("unsupported dtype '" + dtype + "'");
        const std::string order = header.at("order").get<std::string>();
        if (order != "bhw") throw std::runtime_error("unsupported order '" + order + "'");
        if (!header.at("wavelengths").is_null())
            cube.wavelengths = header.at("wavelengths").get<std::vector<double>>();
    } catch (const ordered_json::exception& e) {
        throw std::runtime_error(std::string("read_cube: malformed header: ") + e.what());
    }
    if (cube.height <= 0 || cube.width <= 0 || cube.bands <= 0)
        throw std::runtime_error("read_cube: malformed header (non-positive shape)");
    cube.data.resize(static_cast<size_t>(cube.voxels()));
    f.read(reinterpret_cast<char*>(cube.data.data()),
           static_cast<std::streamsize>(cube.data.size() * sizeof(float)));
    if (f.gcount() != static_cast<std::streamsize>(cube.data.size() * sizeof(float)))
        throw std::runtime_error("read_cube: truncated payload");
    cube.validate();
    return cube;
}

void write_manifest(const DatasetManifest& m, const std::string& path) {
    ordered_json j;
    j["seed"] = m.seed;
    ordered_json entries = ordered_json::array();
    for (const auto& e : m.entries) {
        ordered_json je;
        je["path"] = e.path;
        je["split"] = e.split;
        je["scene"] = e.scene_id;
        entries.push_back(je);
    }
    j["entries"] = entries;
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("write_manifest: cannot open " + path);
    f << j.dump(2) << "\n";
}

DatasetManifest read_manifest(const std::string& path, bool validate_cubes) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("read_manifest: cannot open " + path);
    ordered_json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("read_manifest: parse error: ") + e.what());
    }
    DatasetManifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    std::set<std::string> seen;
    for (const auto& je : j.at("entries")) {
        ManifestEntry e;
        e.path = je.at("path").get<std::string>();
        e.split = je.at("split").get<std::string>();
        e.scene_id = je.at("scene").get<std::string>();
        if (e.split != "train" && e.split != "test")
            throw std::runtime_error("read_manifest: unknown split tag '" + e.split + "'");
        if (!seen.insert(e.path).second)
            throw std::runtime_error("read_manifest: duplicate path " + e.path);
        m.entries.push_back(std::move(e));
    }
    if (validate_cubes)
        for (const auto& e : m.entries) read_cube(e.path);
    return m;
}

}  // namespace mphsir::hsi
