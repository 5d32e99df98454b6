#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "metacal/example.hpp"
#include "metacal/rng.hpp"

namespace metacal {

// One task of the stream. `pool` examples are label-stripped; their ground
// truth lives in TaskStream::hidden_pool_labels and is only reachable
// through the oracle.
struct TaskSpec {
    std::string name;
    std::set<int> label_set;
    std::vector<Example> labeled;
    std::vector<Example> pool;
    std::vector<Example> test;
};

struct StreamFlags {
    bool use_memory = true;
    bool use_inner_aug = true;
    bool use_outer_aug = true;
    bool full_supervision = false;
};

struct StreamConfig {
    std::vector<std::size_t> order;  // optional 1-based override of manifest order
    std::size_t m = 5;               // batches per episode
    std::size_t b = 16;              // batch size
    std::int64_t budget = 2000;      // annotation budget per task
    std::size_t slots_per_class = 5; // n_s
    double w = 0.5;                  // relative weight of the supervised term
    double alpha = 1e-3;             // inner learning rate
    double beta = 3e-5;              // outer learning rate
    std::uint64_t seed = 1;
    std::size_t shots = 5;           // K
    StreamFlags flags;
};

inline void validate_config(const StreamConfig& cfg) {
    if (cfg.m < 1) throw std::invalid_argument("config: m must be >= 1");
    if (cfg.b < 1) throw std::invalid_argument("config: b must be >= 1");
    if (cfg.budget < 0) throw std::invalid_argument("config: budget must be >= 0");
    if (cfg.slots_per_class < 1) throw std::invalid_argument("config: memory slots must be >= 1");
    if (cfg.w < 0.0 || cfg.w > 1.0) throw std::invalid_argument("config: w must lie in [0,1]");
    if (cfg.shots < 1) throw std::invalid_argument("config: shots must be >= 1");
}

enum class BatchKind { labeled, pool };

struct EpisodeBatch {
    std::vector<Example> examples;
    BatchKind kind = BatchKind::labeled;
};

// Per-batch selection size: ceil(b * B_A / pool_size).
inline std::int64_t selection_size(std::int64_t b, std::int64_t budget, std::int64_t pool_size) {
    if (pool_size <= 0) throw std::invalid_argument("selection_size: pool size must be > 0");
    return (b * budget + pool_size - 1) / pool_size;
}

// Ordered tasks plus the oracle-only pool ground truth.
struct TaskStream {
    std::vector<TaskSpec> tasks;
    std::unordered_map<std::string, int> hidden_pool_labels;

    std::size_t task_count() const { return tasks.size(); }
};

namespace detail {

inline std::vector<Example> read_jsonl(const std::filesystem::path& path, int task_index,
                                       Provenance provenance, const std::set<int>& classes,
                                       const char* split_name) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("stream: cannot open " + std::string(split_name) + " file: " +
                                 path.string());
    }
    std::vector<Example> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto where = [&] { return path.string() + ":" + std::to_string(line_no); };
        nlohmann::json j = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
        if (j.is_discarded() || !j.is_object()) {
            throw std::runtime_error("stream: malformed record at " + where());
        }
        if (!j.contains("id") || !j.at("id").is_string() || !j.contains("text") ||
            !j.at("text").is_string() || !j.contains("label") ||
            !j.at("label").is_number_integer()) {
            throw std::runtime_error("stream: record missing id/text/label at " + where());
        }
        Example ex;
        ex.id = j.at("id").get<std::string>();
        ex.text = j.at("text").get<std::string>();
        ex.label = j.at("label").get<int>();
        ex.task_index = task_index;
        ex.provenance = provenance;
        if (!classes.count(*ex.label)) {
            throw std::runtime_error("stream: label " + std::to_string(*ex.label) +
                                     " not in task class set at " + where());
        }
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace detail

// Loads a manifest and materializes the task stream in the resolved order
// (the manifest's `order`, unless overridden). Pool labels are moved into
// oracle storage and stripped from the trainer-visible examples.
inline TaskStream load_manifest(const std::string& manifest_path,
                                const std::vector<std::size_t>& order_override = {}) {
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error("stream: cannot open manifest: " + manifest_path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object() || !j.contains("tasks") || !j.at("tasks").is_array() ||
        j.at("tasks").empty()) {
        throw std::runtime_error("stream: malformed manifest: " + manifest_path);
    }
    const auto& tasks_json = j.at("tasks");
    const std::size_t n = tasks_json.size();

    std::vector<std::size_t> order;
    if (!order_override.empty()) {
        order = order_override;
    } else if (j.contains("order")) {
        order = j.at("order").get<std::vector<std::size_t>>();
    } else {
        for (std::size_t i = 1; i <= n; ++i) order.push_back(i);
    }
    {
        std::vector<std::size_t> sorted = order;
        std::sort(sorted.begin(), sorted.end());
        std::vector<std::size_t> want;
        for (std::size_t i = 1; i <= n; ++i) want.push_back(i);
        if (sorted != want) {
            throw std::runtime_error("stream: order must be a permutation of 1.." +
                                     std::to_string(n));
        }
    }

    const auto base = std::filesystem::path(manifest_path).parent_path();
    auto resolve = [&](const std::string& p) {
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
    };

    TaskStream stream;
    std::unordered_set<std::string> seen_ids;
    for (std::size_t pos = 0; pos < n; ++pos) {
        const auto& tj = tasks_json.at(order[pos] - 1);
        TaskSpec task;
        task.name = tj.at("name").get<std::string>();
        for (int c : tj.at("classes").get<std::vector<int>>()) task.label_set.insert(c);
        if (task.label_set.empty()) {
            throw std::runtime_error("stream: task " + task.name + " declares no classes");
        }
        const int task_index = static_cast<int>(pos) + 1;
        task.labeled = detail::read_jsonl(resolve(tj.at("labeled_path").get<std::string>()),
                                          task_index, Provenance::given, task.label_set, "labeled");
        task.pool = detail::read_jsonl(resolve(tj.at("pool_path").get<std::string>()), task_index,
                                       Provenance::pool, task.label_set, "pool");
        task.test = detail::read_jsonl(resolve(tj.at("test_path").get<std::string>()), task_index,
                                       Provenance::given, task.label_set, "test");

        for (const auto* split : {&task.labeled, &task.pool, &task.test}) {
            for (const auto& ex : *split) {
                if (!seen_ids.insert(ex.id).second) {
                    throw std::runtime_error("stream: duplicate example id: " + ex.id);
                }
            }
        }
        // Hide pool ground truth from the trainer's view.
        for (auto& ex : task.pool) {
            stream.hidden_pool_labels[ex.id] = *ex.label;
            ex.label.reset();
        }
        stream.tasks.push_back(std::move(task));
    }
    return stream;
}

// Optional global class-name table, JSON object {"<global id>": "name"}.
// Report decoration only; ids stay authoritative everywhere else.
inline std::map<int, std::string> load_class_names(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("stream: cannot open class names: " + path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object()) {
        throw std::runtime_error("stream: malformed class names table: " + path);
    }
    std::map<int, std::string> names;
    for (const auto& [key, value] : j.items()) {
        names[std::stoi(key)] = value.get<std::string>();
    }
    return names;
}

// Exactly K examples per class, deterministic given the seed.
inline std::vector<Example> sample_few_shot(const TaskSpec& task, std::size_t k,
                                            std::uint64_t seed) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < task.labeled.size(); ++i) {
        by_class[*task.labeled[i].label].push_back(i);
    }
    Rng rng = make_rng(seed, /*stream_id=*/0x2);
    std::vector<Example> out;
    for (int cls : task.label_set) {
        auto it = by_class.find(cls);
        if (it == by_class.end() || it->second.size() < k) {
            throw std::runtime_error("stream: task " + task.name + " has fewer than " +
                                     std::to_string(k) + " labeled examples for class " +
                                     std::to_string(cls));
        }
        std::vector<std::size_t> picks = sample_indices(rng, it->second.size(), k);
        std::sort(picks.begin(), picks.end());
        for (std::size_t p : picks) out.push_back(task.labeled[it->second[p]]);
    }
    return out;
}

// Cuts every task's labeled split down to the K-shot set.
inline void restrict_few_shot(TaskStream& stream, std::size_t k, std::uint64_t seed) {
    for (std::size_t pos = 0; pos < stream.tasks.size(); ++pos) {
        stream.tasks[pos].labeled =
            sample_few_shot(stream.tasks[pos], k, splitmix64(seed) + pos);
    }
}

// Labeling oracle over the hidden pool truth. Tracks per-task annotation
// counters; repeated queries of one id are idempotent and counted once.
class AnnotationOracle {
public:
    AnnotationOracle() = default;
    AnnotationOracle(const TaskStream& stream, const StreamConfig& cfg)
        : budget_(cfg.budget), spent_(stream.task_count(), 0), quota_(stream.task_count(), 0) {
        for (std::size_t pos = 0; pos < stream.task_count(); ++pos) {
            const TaskSpec& task = stream.tasks[pos];
            for (const auto& ex : task.pool) {
                auto it = stream.hidden_pool_labels.find(ex.id);
                if (it == stream.hidden_pool_labels.end()) {
                    throw std::logic_error("oracle: pool example without hidden label: " + ex.id);
                }
                truth_[ex.id] = Entry{it->second, pos};
            }
            if (!task.pool.empty()) {
                quota_[pos] = selection_size(static_cast<std::int64_t>(cfg.b), cfg.budget,
                                             static_cast<std::int64_t>(task.pool.size()));
            }
        }
    }

    // Ground-truth label of a pool example; increments the owning task's
    // annotation counter on first query.
    int label(const std::string& example_id) {
        auto it = truth_.find(example_id);
        if (it == truth_.end()) {
            throw std::out_of_range("oracle: unknown pool example id: " + example_id);
        }
        if (annotated_.insert(example_id).second) {
            ++spent_[it->second.task_pos];
        }
        return it->second.label;
    }

    // Per-batch allowance for the task owning `example_id`, keyed by id so
    // callers never handle task identity.
    struct Allowance {
        std::int64_t n_a = 0;
        std::int64_t budget_remaining = 0;
    };
    Allowance allowance(const std::string& example_id) const {
        auto it = truth_.find(example_id);
        if (it == truth_.end()) {
            throw std::out_of_range("oracle: unknown pool example id: " + example_id);
        }
        std::size_t pos = it->second.task_pos;
        return Allowance{quota_[pos], std::max<std::int64_t>(0, budget_ - spent_[pos])};
    }

    std::int64_t annotations_spent(std::size_t task_pos) const { return spent_.at(task_pos); }
    std::vector<std::int64_t> annotations_per_task() const { return spent_; }

private:
    struct Entry {
        int label = 0;
        std::size_t task_pos = 0;
    };
    std::int64_t budget_ = 0;
    std::unordered_map<std::string, Entry> truth_;
    std::unordered_set<std::string> annotated_;
    std::vector<std::int64_t> spent_;
    std::vector<std::int64_t> quota_;
};

// Single-writer cursor emitting episodes of up to m batches of size <= b.
// Episodes never mix batch kinds and never straddle tasks; within one task
// all labeled batches precede any pool batch. Emission order is a seeded
// shuffle of each split, fixed at construction.
class StreamCursor {
public:
    StreamCursor(const TaskStream& stream, const StreamConfig& cfg)
        : stream_(&stream), cfg_(cfg) {
        Rng rng = make_rng(cfg.seed, /*stream_id=*/0x3);
        phases_.reserve(stream.task_count() * 2);
        for (std::size_t pos = 0; pos < stream.task_count(); ++pos) {
            const TaskSpec& task = stream.tasks[pos];
            Phase labeled{pos, BatchKind::labeled, task.labeled};
            shuffle_inplace(labeled.examples, rng);
            if (!labeled.examples.empty()) phases_.push_back(std::move(labeled));

            Phase pool{pos, BatchKind::pool, task.pool};
            shuffle_inplace(pool.examples, rng);
            if (cfg.flags.full_supervision) {
                // FULL baseline: the whole pool streams as labeled data.
                pool.kind = BatchKind::labeled;
                for (auto& ex : pool.examples) {
                    ex.label = stream.hidden_pool_labels.at(ex.id);
                    ex.provenance = Provenance::given;
                }
            }
            if (!pool.examples.empty()) phases_.push_back(std::move(pool));
        }
    }

    bool exhausted() const { return phase_ >= phases_.size(); }

    // Up to m batches from the current phase; empty once exhausted.
    std::vector<EpisodeBatch> next_episode() {
        std::vector<EpisodeBatch> episode;
        if (exhausted()) return episode;
        const Phase& phase = phases_[phase_];
        last_task_pos_ = phase.task_pos;
        for (std::size_t i = 0; i < cfg_.m && offset_ < phase.examples.size(); ++i) {
            EpisodeBatch batch;
            batch.kind = phase.kind;
            std::size_t end = std::min(offset_ + cfg_.b, phase.examples.size());
            batch.examples.assign(phase.examples.begin() + static_cast<std::ptrdiff_t>(offset_),
                                  phase.examples.begin() + static_cast<std::ptrdiff_t>(end));
            offset_ = end;
            episode.push_back(std::move(batch));
        }
        if (offset_ >= phases_[phase_].examples.size()) {
            ++phase_;
            offset_ = 0;
        }
        return episode;
    }

    // Number of stream-order tasks whose data is fully consumed.
    std::size_t tasks_completed() const {
        if (phase_ >= phases_.size()) return stream_->task_count();
        return phases_[phase_].task_pos;
    }

    // Task position (0-based, stream order) of the most recent episode.
    // Harness bookkeeping only; the trainer never sees it.
    std::size_t last_episode_task() const { return last_task_pos_; }

private:
    struct Phase {
        std::size_t task_pos;
        BatchKind kind;
        std::vector<Example> examples;
    };

    const TaskStream* stream_;
    StreamConfig cfg_;
    std::vector<Phase> phases_;
    std::size_t phase_ = 0;
    std::size_t offset_ = 0;
    std::size_t last_task_pos_ = 0;
};

}  // namespace metacal
