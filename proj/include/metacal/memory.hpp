#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "metacal/acquisition.hpp"  // squared_distance
#include "metacal/example.hpp"
#include "metacal/rng.hpp"

namespace metacal {

enum class MemoryStrategy { reservoir, ring, prototype };

inline const char* to_string(MemoryStrategy s) {
    switch (s) {
        case MemoryStrategy::reservoir: return "reservoir";
        case MemoryStrategy::ring: return "ring";
        case MemoryStrategy::prototype: return "prototype";
    }
    return "?";
}

inline MemoryStrategy memory_strategy_from(const std::string& name) {
    if (name == "reservoir") return MemoryStrategy::reservoir;
    if (name == "ring") return MemoryStrategy::ring;
    if (name == "prototype") return MemoryStrategy::prototype;
    throw std::invalid_argument("unknown memory strategy: " + name);
}

// Bounded episodic memory with at most `slots_per_class` examples per global
// class id. Tasks with overlapping label spaces share per-class slots.
// Stored representations are snapshots taken at insertion time.
class MemoryBuffer {
public:
    struct Stored {
        Example example;
        std::vector<double> representation;
    };

    MemoryBuffer() = default;
    MemoryBuffer(MemoryStrategy strategy, std::size_t slots_per_class)
        : strategy_(strategy), slots_per_class_(slots_per_class) {
        if (slots_per_class_ == 0) {
            throw std::invalid_argument("memory: slots per class must be >= 1");
        }
    }

    MemoryStrategy strategy() const { return strategy_; }
    std::size_t slots_per_class() const { return slots_per_class_; }

    std::size_t size() const {
        std::size_t n = 0;
        for (const auto& [cls, v] : slots_) n += v.size();
        return n;
    }
    bool empty() const { return size() == 0; }

    std::map<int, std::size_t> per_class_counts() const {
        std::map<int, std::size_t> counts;
        for (const auto& [cls, v] : slots_) counts[cls] = v.size();
        return counts;
    }

    const std::map<int, std::vector<Stored>>& slots() const { return slots_; }

    // Running mean of every representation observed for the class (kept or
    // not), and the observation count.
    struct Prototype {
        std::vector<double> mean;
        std::uint64_t count = 0;
    };
    const std::map<int, Prototype>& prototypes() const { return prototypes_; }

    void observe(const Example& example, const std::vector<double>& representation, Rng& rng) {
        if (!example.label.has_value()) {
            throw std::invalid_argument("memory: observe requires a labeled example");
        }
        const int cls = *example.label;
        Stored item{example, representation};
        switch (strategy_) {
            case MemoryStrategy::reservoir: {
                // Classic per-class reservoir: the j-th item replaces a
                // uniformly random slot with probability n_s / j.
                std::uint64_t j = ++reservoir_counts_[cls];
                auto& v = slots_[cls];
                if (v.size() < slots_per_class_) {
                    v.push_back(std::move(item));
                } else {
                    std::size_t r = uniform_index(rng, static_cast<std::size_t>(j));
                    if (r < slots_per_class_) v[r] = std::move(item);
                }
                break;
            }
            case MemoryStrategy::ring: {
                auto& v = slots_[cls];
                v.push_back(std::move(item));
                if (v.size() > slots_per_class_) v.erase(v.begin());
                break;
            }
            case MemoryStrategy::prototype: {
                auto& proto = prototypes_[cls];
                if (proto.count == 0) proto.mean.assign(representation.size(), 0.0);
                ++proto.count;
                for (std::size_t d = 0; d < proto.mean.size(); ++d) {
                    proto.mean[d] += (representation[d] - proto.mean[d]) /
                                     static_cast<double>(proto.count);
                }
                auto& v = slots_[cls];
                if (v.size() < slots_per_class_) {
                    v.push_back(std::move(item));
                } else {
                    // Greedy on insertion: replace the stored example
                    // farthest from the prototype if the candidate is nearer.
                    std::size_t far_idx = 0;
                    double far_d = -1.0;
                    for (std::size_t i = 0; i < v.size(); ++i) {
                        double d = squared_distance(v[i].representation, proto.mean);
                        if (d > far_d) {
                            far_d = d;
                            far_idx = i;
                        }
                    }
                    if (squared_distance(representation, proto.mean) < far_d) {
                        v[far_idx] = std::move(item);
                    }
                }
                break;
            }
        }
    }

    // Every stored example, ordered by class id then slot index.
    std::vector<Example> read_all() const {
        std::vector<Example> out;
        out.reserve(size());
        for (const auto& [cls, v] : slots_) {
            for (const auto& s : v) out.push_back(s.example);
        }
        return out;
    }

    // Uniform sample without replacement, capped at the buffer size.
    std::vector<Example> sample_support(std::size_t count, Rng& rng) const {
        if (empty()) throw std::logic_error("memory: sample_support on empty buffer");
        std::vector<Example> all = read_all();
        std::vector<std::size_t> idx = sample_indices(rng, all.size(), count);
        std::vector<Example> out;
        out.reserve(idx.size());
        for (std::size_t i : idx) out.push_back(all[i]);
        return out;
    }

private:
    MemoryStrategy strategy_ = MemoryStrategy::reservoir;
    std::size_t slots_per_class_ = 5;
    std::map<int, std::vector<Stored>> slots_;
    std::map<int, std::uint64_t> reservoir_counts_;
    std::map<int, Prototype> prototypes_;
};

}  // namespace metacal
