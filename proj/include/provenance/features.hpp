#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <vector>

#include "provenance/common.hpp"

namespace provenance {

struct InterestPoint {
    float x = 0.f;         // sub-pixel column
    float y = 0.f;         // sub-pixel row
    float scale = 1.f;     // Gaussian-equivalent sigma
    float response = 0.f;  // Hessian determinant

    bool operator==(const InterestPoint&) const = default;
};

using Descriptor64 = std::array<float, kDescriptorDim>;

/// Interest points of one image with their descriptors (parallel arrays).
struct FeatureSet {
    ImageId image_id = 0;
    std::vector<InterestPoint> points;
    std::vector<Descriptor64> descriptors;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    bool operator==(const FeatureSet&) const = default;
};

// Feature file: "PVF1", u32 version, u64 image id, u32 count, then per point
// x, y, scale, response and 64 descriptor components, all f32 little-endian.
inline constexpr std::uint32_t kFeatureFileVersion = 1;

inline void write_features(std::ostream& out, const FeatureSet& fs) {
    BinaryWriter w(out);
    w.put_magic("PVF1");
    w.put(kFeatureFileVersion);
    w.put(static_cast<std::uint64_t>(fs.image_id));
    w.put(static_cast<std::uint32_t>(fs.points.size()));
    for (std::size_t i = 0; i < fs.points.size(); ++i) {
        const auto& p = fs.points[i];
        w.put(p.x);
        w.put(p.y);
        w.put(p.scale);
        w.put(p.response);
        w.put_floats(fs.descriptors[i]);
    }
}

inline FeatureSet read_features(std::istream& in) {
    BinaryReader r(in);
    r.expect_magic("PVF1", "feature file");
    auto version = r.get<std::uint32_t>();
    if (version != kFeatureFileVersion) {
        throw FormatError("feature file: unsupported version " + std::to_string(version));
    }
    FeatureSet fs;
    fs.image_id = r.get<std::uint64_t>();
    auto n = r.get<std::uint32_t>();
    fs.points.resize(n);
    fs.descriptors.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        auto& p = fs.points[i];
        p.x = r.get_float();
        p.y = r.get_float();
        p.scale = r.get_float();
        p.response = r.get_float();
        r.get_floats(fs.descriptors[i]);
    }
    return fs;
}

inline void save_features(const std::filesystem::path& path, const FeatureSet& fs) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    write_features(out, fs);
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

inline FeatureSet load_features(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return read_features(in);
}

}  // namespace provenance
