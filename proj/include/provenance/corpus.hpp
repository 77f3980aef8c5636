#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "provenance/common.hpp"

namespace provenance {

/// One corpus image: its id and its path relative to the corpus directory.
struct CorpusEntry {
    ImageId id = 0;
    std::string file;

    bool operator==(const CorpusEntry&) const = default;
};

inline constexpr const char* kListingName = "images.txt";

inline std::vector<CorpusEntry> read_listing_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<CorpusEntry> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream s(line);
        CorpusEntry e;
        if (!(s >> e.id) || !(s >> std::ws) || !std::getline(s, e.file) || e.file.empty()) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected `id file`");
        }
        out.push_back(std::move(e));
    }
    std::sort(out.begin(), out.end(), [](const CorpusEntry& a, const CorpusEntry& b) { return a.id < b.id; });
    for (std::size_t i = 1; i < out.size(); ++i)
        if (out[i].id == out[i - 1].id) throw FormatError(path.string() + ": duplicate image id " + std::to_string(out[i].id));
    return out;
}

/// Corpus listing: `images.txt` when present, otherwise every .png/.jpg/.jpeg
/// file in the directory tree, sorted by path and numbered from 0.
inline std::vector<CorpusEntry> read_corpus(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw std::runtime_error("corpus directory not found: " + dir.string());
    if (fs::exists(dir / kListingName)) return read_listing_file(dir / kListingName);
    std::vector<std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        auto ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(fs::relative(e.path(), dir).generic_string());
    }
    std::sort(files.begin(), files.end());
    std::vector<CorpusEntry> out;
    for (std::size_t i = 0; i < files.size(); ++i) out.push_back({i, files[i]});
    return out;
}

inline void write_listing(const std::filesystem::path& path, const std::vector<CorpusEntry>& entries) {
    std::ofstream out(path);
    for (const auto& e : entries) out << e.id << ' ' << e.file << '\n';
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

/// Per-image feature file inside a feature directory.
inline std::filesystem::path feature_path(const std::filesystem::path& dir, ImageId id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%08llu.pvf", static_cast<unsigned long long>(id));
    return dir / buf;
}

}  // namespace provenance
