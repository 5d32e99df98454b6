#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "metacal/checkpoint.hpp"
#include "metacal/metrics.hpp"
#include "metacal/trainer.hpp"

namespace metacal {

// Full experiment configuration: stream + trainer hyperparameters,
// strategies, augmentation rates, model dimensions, and paths.
struct RunConfig {
    StreamConfig stream;
    AugmentConfig aug;
    AcquisitionStrategy al_strategy = AcquisitionStrategy::random;
    MemoryStrategy memory_strategy = MemoryStrategy::reservoir;
    std::string manifest;
    std::string lexicon;      // empty: no synonym substitution
    std::string class_names;  // optional JSON {global id: name} for reports
    std::string out_dir = "out";
    std::size_t d_in = 2048;
    std::vector<std::size_t> hidden_dims = {128, 64};
    std::size_t checkpoint_every = 0;  // episodes; 0 disables periodic checkpoints
};

namespace detail {

inline std::vector<std::size_t> parse_size_list(const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stoull(item));
    }
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw std::invalid_argument("config: expected true/false for " + key + ", got '" + s + "'");
}

inline std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

}  // namespace detail

// Applies one `key = value` setting. Shared by the config-file parser and
// the CLI flag overrides.
inline void set_config_key(RunConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "manifest") cfg.manifest = value;
    else if (key == "lexicon") cfg.lexicon = value;
    else if (key == "class_names") cfg.class_names = value;
    else if (key == "out_dir") cfg.out_dir = value;
    else if (key == "order") cfg.stream.order = detail::parse_size_list(value);
    else if (key == "seed") cfg.stream.seed = std::stoull(value);
    else if (key == "shots") cfg.stream.shots = std::stoull(value);
    else if (key == "batch_size") cfg.stream.b = std::stoull(value);
    else if (key == "batches_per_episode") cfg.stream.m = std::stoull(value);
    else if (key == "budget") cfg.stream.budget = std::stoll(value);
    else if (key == "memory_per_class") cfg.stream.slots_per_class = std::stoull(value);
    else if (key == "w") cfg.stream.w = std::stod(value);
    else if (key == "alpha") cfg.stream.alpha = std::stod(value);
    else if (key == "beta") cfg.stream.beta = std::stod(value);
    else if (key == "al_strategy") cfg.al_strategy = acquisition_strategy_from(value);
    else if (key == "memory_strategy") cfg.memory_strategy = memory_strategy_from(value);
    else if (key == "use_memory") cfg.stream.flags.use_memory = detail::parse_bool(key, value);
    else if (key == "use_inner_aug") cfg.stream.flags.use_inner_aug = detail::parse_bool(key, value);
    else if (key == "use_outer_aug") cfg.stream.flags.use_outer_aug = detail::parse_bool(key, value);
    else if (key == "full_supervision")
        cfg.stream.flags.full_supervision = detail::parse_bool(key, value);
    else if (key == "swap_rate") cfg.aug.swap_rate = std::stod(value);
    else if (key == "delete_rate") cfg.aug.delete_rate = std::stod(value);
    else if (key == "synonym_rate") cfg.aug.synonym_rate = std::stod(value);
    else if (key == "d_in") cfg.d_in = std::stoull(value);
    else if (key == "hidden_dims") cfg.hidden_dims = detail::parse_size_list(value);
    else if (key == "checkpoint_every") cfg.checkpoint_every = std::stoull(value);
    else throw std::invalid_argument("config: unknown key '" + key + "'");
}

// Flat `key = value` config file. '#' starts a comment; blank lines are
// skipped.
inline RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open: " + path);
    RunConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("config: expected key = value at " + path + ":" +
                                     std::to_string(line_no));
        }
        set_config_key(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    }
    return cfg;
}

// Row k of the accuracy matrix: adapt once on memory, then evaluate the
// adapted copy on every task's test set. Row 0 evaluates the raw initialized
// model with the head expanded to each task's label set (all-zero rows give
// uniform predictions; argmax then breaks toward the lowest class id).
inline std::vector<double> evaluate_stage(const ModelState& model, const MemoryBuffer& memory,
                                          const TaskStream& stream, std::size_t k,
                                          const StreamConfig& cfg) {
    Rng rng = make_rng(cfg.seed, 0x20 + k);
    std::vector<double> row;
    row.reserve(stream.task_count());
    if (k == 0) {
        for (const auto& task : stream.tasks) {
            ModelState fresh = model;
            for (int cls : task.label_set) expand_head(fresh.head, cls);
            std::vector<std::pair<int, int>> preds;
            preds.reserve(task.test.size());
            for (const auto& ex : task.test) {
                preds.emplace_back(*ex.label, predict(fresh, features_for(fresh, ex.text)).argmax());
            }
            row.push_back(macro_accuracy(preds));
        }
        return row;
    }
    ModelState adapted = memory.empty()
                             ? model
                             : adapt_for_eval(model, memory, cfg.m, cfg.b, cfg.alpha, rng);
    for (const auto& task : stream.tasks) {
        std::vector<std::pair<int, int>> preds;
        preds.reserve(task.test.size());
        for (const auto& ex : task.test) {
            int predicted = adapted.head.empty()
                                ? -1
                                : predict(adapted, features_for(adapted, ex.text)).argmax();
            preds.emplace_back(*ex.label, predicted);
        }
        row.push_back(macro_accuracy(preds));
    }
    return row;
}

// TSV dump of the memory contents with representations recomputed by the
// current encoder: id, class, task_index, then one column per component.
inline void dump_memory(const MemoryBuffer& memory, const ModelState& model,
                        const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("dump_memory: cannot open for write: " + path);
    out << "id\tclass\ttask_index";
    for (std::size_t d = 0; d < model.rep_dim(); ++d) out << "\tr" << d;
    out << "\n";
    char buf[64];
    for (const auto& ex : memory.read_all()) {
        out << ex.id << "\t" << *ex.label << "\t" << ex.task_index;
        for (double v : encode(model.encoder, features_for(model, ex.text))) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            out << "\t" << buf;
        }
        out << "\n";
    }
}

struct MetricSet {
    std::vector<double> acc;  // ACC_1..ACC_T
    std::vector<double> bwt;  // BWT_2..BWT_T
    std::vector<double> fwt;  // FWT_2..FWT_T
    double overall = 0.0;
};

inline MetricSet compute_metrics(const AccuracyMatrix& m) {
    MetricSet out;
    const std::size_t t = m.task_count();
    for (std::size_t k = 1; k <= t; ++k) out.acc.push_back(acc_t(m, k));
    for (std::size_t k = 2; k <= t; ++k) {
        out.bwt.push_back(bwt_k(m, k));
        out.fwt.push_back(fwt_k(m, k));
    }
    out.overall = overall_accuracy(m);
    return out;
}

struct RunResult {
    AccuracyMatrix matrix;
    MetricSet metrics;
    std::vector<std::int64_t> annotations_per_task;
    std::vector<std::string> task_names;
    std::uint64_t seed = 0;
    double wall_clock_seconds = 0.0;
};

inline nlohmann::json config_to_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["manifest"] = cfg.manifest;
    j["lexicon"] = cfg.lexicon;
    j["class_names"] = cfg.class_names;
    j["out_dir"] = cfg.out_dir;
    j["order"] = cfg.stream.order;
    j["seed"] = cfg.stream.seed;
    j["shots"] = cfg.stream.shots;
    j["batch_size"] = cfg.stream.b;
    j["batches_per_episode"] = cfg.stream.m;
    j["budget"] = cfg.stream.budget;
    j["memory_per_class"] = cfg.stream.slots_per_class;
    j["w"] = cfg.stream.w;
    j["alpha"] = cfg.stream.alpha;
    j["beta"] = cfg.stream.beta;
    j["al_strategy"] = to_string(cfg.al_strategy);
    j["memory_strategy"] = to_string(cfg.memory_strategy);
    j["use_memory"] = cfg.stream.flags.use_memory;
    j["use_inner_aug"] = cfg.stream.flags.use_inner_aug;
    j["use_outer_aug"] = cfg.stream.flags.use_outer_aug;
    j["full_supervision"] = cfg.stream.flags.full_supervision;
    j["swap_rate"] = cfg.aug.swap_rate;
    j["delete_rate"] = cfg.aug.delete_rate;
    j["synonym_rate"] = cfg.aug.synonym_rate;
    j["d_in"] = cfg.d_in;
    j["hidden_dims"] = cfg.hidden_dims;
    j["checkpoint_every"] = cfg.checkpoint_every;
    return j;
}

inline nlohmann::json run_result_to_json(const RunResult& res, const RunConfig& cfg) {
    nlohmann::json j;
    j["config"] = config_to_json(cfg);
    if (!cfg.class_names.empty()) {
        nlohmann::json names = nlohmann::json::object();
        for (const auto& [id, name] : load_class_names(cfg.class_names)) {
            names[std::to_string(id)] = name;
        }
        j["class_names"] = std::move(names);
    }
    j["seed"] = res.seed;
    j["task_names"] = res.task_names;
    j["test_sizes"] = res.matrix.test_sizes;
    j["R"] = res.matrix.r;
    j["acc_per_stage"] = res.metrics.acc;
    j["bwt_per_stage"] = res.metrics.bwt;
    j["fwt_per_stage"] = res.metrics.fwt;
    j["overall_accuracy"] = res.metrics.overall;
    j["annotations_per_task"] = res.annotations_per_task;
    j["wall_clock_seconds"] = res.wall_clock_seconds;
    return j;
}

inline AccuracyMatrix matrix_from_json(const nlohmann::json& j) {
    AccuracyMatrix m;
    m.r = j.at("R").get<std::vector<std::vector<double>>>();
    m.test_sizes = j.at("test_sizes").get<std::vector<std::size_t>>();
    return m;
}

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_json_file(const nlohmann::json& j, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("harness: cannot open for write: " + path.string());
    out << j.dump(2) << "\n";
}

}  // namespace detail

// Runs the full experiment: row 0 evaluation, the episodic training loop
// with a row of R at every task boundary, metric computation, and the
// run.json / log.csv / memory.tsv / model.json outputs. On failure, partial
// results are flushed before the error propagates.
inline RunResult run_experiment(const RunConfig& cfg, TrainerProbe* probe = nullptr) {
    validate_config(cfg.stream);
    if (cfg.manifest.empty()) throw std::invalid_argument("run: manifest path is required");
    const auto started = std::chrono::steady_clock::now();

    TaskStream stream = load_manifest(cfg.manifest, cfg.stream.order);
    restrict_few_shot(stream, cfg.stream.shots, cfg.stream.seed);
    SynonymLexicon lexicon = cfg.lexicon.empty() ? SynonymLexicon{} : load_lexicon(cfg.lexicon);

    const std::size_t t = stream.task_count();
    RunResult res;
    res.seed = cfg.stream.seed;
    res.matrix.r.assign(t + 1, std::vector<double>(t, 0.0));
    for (const auto& task : stream.tasks) {
        res.task_names.push_back(task.name);
        res.matrix.test_sizes.push_back(task.test.size());
        if (task.test.empty()) {
            throw std::runtime_error("run: task " + task.name + " has no test examples");
        }
    }

    const std::filesystem::path out_dir(cfg.out_dir);
    std::filesystem::create_directories(out_dir);
    std::ofstream log(out_dir / "log.csv");
    if (!log) throw std::runtime_error("run: cannot open log.csv for write");
    log << "episode,task,batches,inner_losses,meta_loss,annotations,memory_size\n";

    ModelState model = init_model(cfg.d_in, cfg.hidden_dims, cfg.stream.seed);
    res.matrix.r[0] = evaluate_stage(model, MemoryBuffer{}, stream, 0, cfg.stream);

    Trainer trainer(std::move(model), stream, cfg.stream, cfg.al_strategy, cfg.memory_strategy,
                    cfg.aug, lexicon);
    trainer.set_probe(probe);

    auto flush_partial = [&](const char* error) {
        nlohmann::json j = run_result_to_json(res, cfg);
        if (error) j["error"] = error;
        detail::write_json_file(j, out_dir / "run.json");
    };

    try {
        std::size_t episodes = 0;
        std::size_t stages_done = 0;
        while (true) {
            EpisodeReport rep = trainer.run_episode();
            if (rep.stream_exhausted) break;
            ++episodes;
            log << episodes << "," << (rep.task_pos + 1) << "," << rep.batches << ",";
            for (std::size_t i = 0; i < rep.inner_losses.size(); ++i) {
                if (i) log << "|";
                log << detail::format_double(rep.inner_losses[i]);
            }
            log << ",";
            if (rep.meta_loss) log << detail::format_double(*rep.meta_loss);
            log << "," << rep.annotations << "," << rep.memory_size << "\n";
            log.flush();

            if (cfg.checkpoint_every > 0 && episodes % cfg.checkpoint_every == 0) {
                save_model(trainer.model(), (out_dir / "checkpoint.json").string());
            }
            while (trainer.tasks_completed() > stages_done) {
                ++stages_done;
                res.matrix.r[stages_done] =
                    evaluate_stage(trainer.model(), trainer.memory(), stream, stages_done,
                                   cfg.stream);
            }
        }
        res.annotations_per_task = trainer.oracle().annotations_per_task();
        res.metrics = compute_metrics(res.matrix);
    } catch (const std::exception& e) {
        flush_partial(e.what());
        throw;
    }

    res.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    flush_partial(nullptr);
    dump_memory(trainer.memory(), trainer.model(), (out_dir / "memory.tsv").string());
    save_model(trainer.model(), (out_dir / "model.json").string());
    return res;
}

}  // namespace metacal
