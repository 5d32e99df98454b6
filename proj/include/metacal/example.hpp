#pragma once

#include <optional>
#include <string>

namespace metacal {

enum class Provenance {
    given,      // labeled from the start
    pool,       // unlabeled; the oracle holds the ground truth
    annotated,  // labeled through the oracle during training
};

inline const char* to_string(Provenance p) {
    switch (p) {
        case Provenance::given: return "given";
        case Provenance::pool: return "pool";
        case Provenance::annotated: return "annotated";
    }
    return "?";
}

// One text instance. `label` is absent for pool examples (only the oracle
// sees their truth). `task_index` is bookkeeping for the harness and oracle;
// the trainer never reads it.
struct Example {
    std::string id;
    std::string text;
    std::optional<int> label;
    int task_index = 1;
    Provenance provenance = Provenance::given;
};

}  // namespace metacal
