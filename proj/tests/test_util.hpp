#pragma once

#include <cmath>
#include <filesystem>
#include <random>

#include "provenance/provenance.hpp"

namespace testutil {

using namespace provenance;

inline GrayImage random_image(int w, int h, std::uint64_t seed, int levels = 256) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> d(0, levels - 1);
    GrayImage img(w, h);
    for (auto& v : img.data) v = static_cast<std::uint8_t>(levels == 256 ? d(rng) : d(rng) * (255 / (levels - 1)));
    return img;
}

/// Dark Gaussian blob on a bright background, or the reverse.
inline GrayImage blob_image(int w, int h, double cx, double cy, double sigma, bool dark = false) {
    GrayImage img(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double g = std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (2 * sigma * sigma));
            img.at(x, y) = clamp_to_u8(dark ? 230 - 200 * g : 25 + 200 * g);
        }
    return img;
}

/// Textured scene with many corners and blobs, suitable for matching tests.
inline GrayImage textured_scene(int size, std::uint64_t seed) {
    synth_detail::Rng rng(seed);
    return synth_detail::procedural_scene(size, rng);
}

inline std::filesystem::path data_dir() { return PROVENANCE_TEST_DATA; }

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("provenance_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline Descriptor64 random_descriptor(std::mt19937_64& rng) {
    std::normal_distribution<float> g(0.f, 1.f);
    Descriptor64 d;
    for (auto& x : d) x = g(rng);
    return d;
}


/// Side-by-side concatenation of equal-height images.
inline GrayImage hconcat(const std::vector<GrayImage>& parts) {
    int w = 0;
    for (const auto& p : parts) w += p.width;
    GrayImage out(w, parts.at(0).height);
    int x0 = 0;
    for (const auto& p : parts) {
        for (int y = 0; y < p.height; ++y)
            for (int x = 0; x < p.width; ++x) out.at(x0 + x, y) = p.at(x, y);
        x0 += p.width;
    }
    return out;
}

}  // namespace testutil
