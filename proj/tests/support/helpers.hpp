#pragma once

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "metacal/model.hpp"
#include "metacal/rng.hpp"

namespace testsupport {

// Scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("metacal-" + tag + "-" + std::to_string(::getpid()) + "-" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

inline metacal::FeatureVector random_features(std::size_t dim, metacal::Rng& rng) {
    metacal::FeatureVector f;
    f.values.resize(dim);
    for (double& v : f.values) v = metacal::uniform_range(rng, -1.0, 1.0);
    return f;
}

// Small random model with `classes` nonzero head rows, for gradient checks.
inline metacal::ModelState random_model(std::size_t d_in, std::vector<std::size_t> dims,
                                        std::size_t classes, std::uint64_t seed) {
    metacal::ModelState m = metacal::init_model(d_in, dims, seed);
    metacal::Rng rng = metacal::make_rng(seed, 0xAB);
    for (std::size_t c = 0; c < classes; ++c) {
        metacal::expand_head(m.head, static_cast<int>(c));
        for (double& v : m.head.rows[static_cast<int>(c)].w) {
            v = metacal::uniform_range(rng, -0.5, 0.5);
        }
        m.head.rows[static_cast<int>(c)].b = metacal::uniform_range(rng, -0.1, 0.1);
    }
    return m;
}

inline bool models_equal(const metacal::ModelState& a, const metacal::ModelState& b) {
    if (a.encoder.layers.size() != b.encoder.layers.size()) return false;
    for (std::size_t l = 0; l < a.encoder.layers.size(); ++l) {
        if (a.encoder.layers[l].w != b.encoder.layers[l].w) return false;
        if (a.encoder.layers[l].b != b.encoder.layers[l].b) return false;
    }
    if (a.head.rows.size() != b.head.rows.size()) return false;
    for (const auto& [id, row] : a.head.rows) {
        auto it = b.head.rows.find(id);
        if (it == b.head.rows.end() || it->second.w != row.w || it->second.b != row.b) {
            return false;
        }
    }
    return true;
}

inline bool encoders_equal(const metacal::EncoderParams& a, const metacal::EncoderParams& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        if (a.layers[l].w != b.layers[l].w || a.layers[l].b != b.layers[l].b) return false;
    }
    return true;
}

}  // namespace testsupport
