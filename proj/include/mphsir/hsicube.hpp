#pragma once

// Hyperspectral cube data model, file I/O, normalization, patch extraction
// and the synthetic low-rank cube generator.
//
// Memory layout is band-major: data[b * height * width + y * width + x].
// The cube file format is a single UTF-8 JSON header line terminated by
// '\n', followed by b*h*w little-endian 32-bit floats in band-major order:
//   {"h":..,"w":..,"b":..,"dtype":"f32le","order":"bhw","wavelengths":[..]|null}

#include <cstdint>
#include <string>
#include <vector>

namespace mphsir::hsi {

struct HSICube {
    int height = 0;
    int width = 0;
    int bands = 0;
    std::vector<float> data;           // (bands, height, width)
    std::vector<double> wavelengths;   // nanometers, empty when absent

    HSICube() = default;
    HSICube(int b, int h, int w)
        : height(h), width(w), bands(b),
          data(static_cast<size_t>(b) * h * w, 0.0f) {}

    std::int64_t pixels() const { return static_cast<std::int64_t>(height) * width; }
    std::int64_t voxels() const { return static_cast<std::int64_t>(bands) * height * width; }

    float& at(int b, int y, int x) {
        return data[(static_cast<std::int64_t>(b) * height + y) * width + x];
    }
    float at(int b, int y, int x) const {
        return data[(static_cast<std::int64_t>(b) * height + y) * width + x];
    }
    float* band(int b) { return data.data() + static_cast<std::int64_t>(b) * height * width; }
    const float* band(int b) const { return data.data() + static_cast<std::int64_t>(b) * height * width; }

    // Shape plus wavelength-presence consistency; throws on violation.
    void validate() const;
};

struct PatchSpec {
    int size = 64;
    int stride = 64;
};

struct ManifestEntry {
    std::string path;
    std::string split;     // "train" or "test"
    std::string scene_id;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    std::uint64_t seed = 0;

    std::vector<ManifestEntry> split(const std::string& tag) const;
};

// Global min-max normalization onto [0, 1]. Throws "degenerate range" when
// the cube is constant.
HSICube normalize_minmax(const HSICube& cube);

// Row-major enumeration of size x size patches at the given stride; every
// patch keeps all bands and inherits the wavelengths.
std::vector<HSICube> crop_patches(const HSICube& cube, const PatchSpec& spec);

// Deterministic smooth low-rank cube: sum over r <= rank of a_r(x,y)*s_r(l)
// with trigonometric random fields, min-max normalized, wavelengths on a
// 400-700 nm grid.
HSICube synth_cube(std::uint64_t seed, int h, int w, int b, int rank);

void write_cube(const HSICube& cube, const std::string& path);
HSICube read_cube(const std::string& path);

void write_manifest(const DatasetManifest& m, const std::string& path);
DatasetManifest read_manifest(const std::string& path, bool validate_cubes = false);

}  // namespace mphsir::hsi
