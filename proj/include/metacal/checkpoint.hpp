#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "metacal/model.hpp"

namespace metacal {

inline constexpr int kCheckpointVersion = 1;

// JSON checkpoint of all parameter tensors plus dimensions and class-row
// ids. Doubles are serialized with shortest round-trip formatting, so a
// save/load cycle reproduces values exactly.
inline nlohmann::json model_to_json(const ModelState& m) {
    nlohmann::json j;
    j["version"] = kCheckpointVersion;
    j["init_seed"] = m.init_seed;
    j["d_in"] = m.input_dim();
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& layer : m.encoder.layers) {
        layers.push_back({{"in", layer.in}, {"out", layer.out}, {"w", layer.w}, {"b", layer.b}});
    }
    j["encoder"] = std::move(layers);
    nlohmann::json head;
    head["rep_dim"] = m.head.rep_dim;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& [id, row] : m.head.rows) {
        rows.push_back({{"class", id}, {"w", row.w}, {"b", row.b}});
    }
    head["rows"] = std::move(rows);
    j["head"] = std::move(head);
    return j;
}

inline ModelState model_from_json(const nlohmann::json& j) {
    if (!j.contains("version") || j.at("version").get<int>() != kCheckpointVersion) {
        throw std::runtime_error("checkpoint: unsupported version");
    }
    ModelState m;
    m.init_seed = j.at("init_seed").get<std::uint64_t>();
    for (const auto& lj : j.at("encoder")) {
        EncoderLayer layer;
        layer.in = lj.at("in").get<std::size_t>();
        layer.out = lj.at("out").get<std::size_t>();
        layer.w = lj.at("w").get<std::vector<double>>();
        layer.b = lj.at("b").get<std::vector<double>>();
        if (layer.w.size() != layer.in * layer.out || layer.b.size() != layer.out) {
            throw std::runtime_error("checkpoint: layer shape mismatch");
        }
        m.encoder.layers.push_back(std::move(layer));
    }
    m.head.rep_dim = j.at("head").at("rep_dim").get<std::size_t>();
    for (const auto& rj : j.at("head").at("rows")) {
        HeadRow row;
        row.w = rj.at("w").get<std::vector<double>>();
        row.b = rj.at("b").get<double>();
        if (row.w.size() != m.head.rep_dim) {
            throw std::runtime_error("checkpoint: head row shape mismatch");
        }
        m.head.rows[rj.at("class").get<int>()] = std::move(row);
    }
    return m;
}

inline void save_model(const ModelState& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("checkpoint: cannot open for write: " + path);
    out << model_to_json(m).dump(2) << "\n";
}

inline ModelState load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("checkpoint: cannot open: " + path);
    nlohmann::json j;
    in >> j;
    return model_from_json(j);
}

}  // namespace metacal
