// Command-line front end: run experiments, sanity-check gradients, dump the
// replay memory, and recompute metrics from a saved accuracy matrix.

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "metacal/harness.hpp"

namespace {

using metacal::RunConfig;

// Collects `key=value` overrides in command-line order; they are applied on
// top of the config file after parsing.
struct Overrides {
    std::vector<std::pair<std::string, std::string>> items;

    void option(CLI::App* cmd, const std::string& flag, const std::string& key,
                const std::string& desc) {
        cmd->add_option_function<std::string>(
            flag, [this, key](const std::string& v) { items.emplace_back(key, v); }, desc);
    }
    void toggle(CLI::App* cmd, const std::string& flag, const std::string& key, bool value,
                const std::string& desc) {
        cmd->add_flag_callback(
            flag, [this, key, value] { items.emplace_back(key, value ? "true" : "false"); }, desc);
    }
};

void add_config_options(CLI::App* cmd, std::string& config_path, Overrides& ov) {
    cmd->add_option("--config", config_path, "flat key=value config file");
    ov.option(cmd, "--manifest", "manifest", "task manifest JSON");
    ov.option(cmd, "--lexicon", "lexicon", "synonym lexicon TSV");
    ov.option(cmd, "--class-names", "class_names", "JSON {global id: name} for reports");
    ov.option(cmd, "--out", "out_dir", "output directory");
    ov.option(cmd, "--order", "order", "task order override, e.g. 2,1,3 (1-based)");
    ov.option(cmd, "--seed", "seed", "master seed");
    ov.option(cmd, "--shots", "shots", "labeled examples per class (K)");
    ov.option(cmd, "--batch-size", "batch_size", "batch size b");
    ov.option(cmd, "--batches-per-episode", "batches_per_episode", "batches per episode m");
    ov.option(cmd, "--budget", "budget", "annotation budget per task B_A");
    ov.option(cmd, "--memory-per-class", "memory_per_class", "memory slots per class n_s");
    ov.option(cmd, "--w", "w", "relative weight of the supervised loss term");
    ov.option(cmd, "--alpha", "alpha", "inner-loop learning rate");
    ov.option(cmd, "--beta", "beta", "outer-loop learning rate");
    ov.option(cmd, "--al-strategy", "al_strategy",
              "rand|rep-kmeans|div-kmeans|rep-mean|div-mean|unc-lc|unc-margin|unc-entropy");
    ov.option(cmd, "--memory-strategy", "memory_strategy", "reservoir|ring|prototype");
    ov.option(cmd, "--swap-rate", "swap_rate", "weak augmentation swap rate");
    ov.option(cmd, "--delete-rate", "delete_rate", "strong augmentation deletion rate");
    ov.option(cmd, "--synonym-rate", "synonym_rate", "strong augmentation substitution rate");
    ov.option(cmd, "--d-in", "d_in", "hashed feature dimension");
    ov.option(cmd, "--hidden-dims", "hidden_dims", "encoder layer widths, e.g. 128,64");
    ov.option(cmd, "--checkpoint-every", "checkpoint_every",
              "write a checkpoint every N episodes (0 = off)");
    ov.toggle(cmd, "--no-memory", "use_memory", false,
              "disable replay memory and the meta update");
    ov.toggle(cmd, "--no-inner-aug", "use_inner_aug", false, "disable inner-loop augmentation");
    ov.toggle(cmd, "--no-outer-aug", "use_outer_aug", false, "disable outer-loop augmentation");
    ov.toggle(cmd, "--full-supervision", "full_supervision", true,
              "treat the whole pool as labeled (upper bound)");
}

RunConfig build_config(const std::string& config_path, const Overrides& ov) {
    RunConfig cfg = config_path.empty() ? RunConfig{} : metacal::parse_config_file(config_path);
    for (const auto& [key, value] : ov.items) metacal::set_config_key(cfg, key, value);
    return cfg;
}

int cmd_run(const RunConfig& cfg) {
    metacal::RunResult res = metacal::run_experiment(cfg);
    const std::size_t t = res.matrix.task_count();
    std::printf("tasks: %zu  episodes logged to %s/log.csv\n", t, cfg.out_dir.c_str());
    for (std::size_t k = 1; k <= t; ++k) {
        std::printf("stage %zu (%s): ACC=%.4f", k, res.task_names[k - 1].c_str(),
                    res.metrics.acc[k - 1]);
        if (k >= 2) {
            std::printf("  BWT=%.4f  FWT=%.4f", res.metrics.bwt[k - 2], res.metrics.fwt[k - 2]);
        }
        std::printf("\n");
    }
    std::printf("overall accuracy (test-size weighted): %.4f\n", res.metrics.overall);
    std::printf("annotations per task:");
    for (auto a : res.annotations_per_task) std::printf(" %" PRId64, a);
    std::printf("\nwall clock: %.2fs\nresults: %s/run.json\n", res.wall_clock_seconds,
                cfg.out_dir.c_str());
    return 0;
}

// Central finite differences of the forward loss, compared against the
// analytic gradients on small random models.
struct GradCheck {
    double max_rel_err_head = 0.0;
    double max_rel_err_full = 0.0;
};

double rel_err(double a, double b) {
    double denom = std::max({std::fabs(a), std::fabs(b), 1e-6});
    return std::fabs(a - b) / denom;
}

// Smallest |pre-activation|: draws closer to a rectifier kink than the
// difference step are redrawn, since central differences are invalid there.
double kink_margin(const metacal::ModelState& model,
                   const std::vector<metacal::LossTerm>& terms) {
    double margin = 1e300;
    for (const auto& term : terms) {
        std::vector<double> a = term.features.values;
        for (const auto& layer : model.encoder.layers) {
            a = metacal::affine(layer, a);
            for (double z : a) margin = std::min(margin, std::fabs(z));
            for (double& v : a) v = std::max(0.0, v);
        }
    }
    return margin;
}

GradCheck run_gradcheck(std::size_t models, std::uint64_t seed) {
    using namespace metacal;
    GradCheck gc;
    const double eps = 1e-4;
    for (std::size_t trial = 0; trial < models; ++trial) {
        ModelState model;
        std::vector<LossTerm> terms;
        double margin = 0.0;
        for (std::size_t attempt = 0; attempt < 50 && margin <= 1e-3; ++attempt) {
            Rng rng = make_rng(seed, 0x900 + 100 * trial + attempt);
            model = init_model(32, {16, 8}, seed + 100 * trial + attempt);
            for (auto& layer : model.encoder.layers) {
                for (double& b : layer.b) b = uniform_range(rng, -0.2, 0.2);
            }
            std::size_t classes = 2 + uniform_index(rng, 5);
            for (std::size_t c = 0; c < classes; ++c) {
                expand_head(model.head, static_cast<int>(c));
                for (double& v : model.head.rows[static_cast<int>(c)].w) {
                    v = uniform_range(rng, -0.5, 0.5);
                }
            }
            terms.clear();
            for (std::size_t i = 0; i < 4; ++i) {
                FeatureVector f;
                f.values.resize(32);
                for (double& v : f.values) v = uniform_range(rng, -1.0, 1.0);
                if (i % 2 == 0) {
                    terms.push_back({f, static_cast<int>(uniform_index(rng, classes)), 0.7});
                } else {
                    SoftTarget q(classes, 0.0);
                    double sum = 0.0;
                    for (double& v : q) sum += (v = uniform_real(rng) + 1e-3);
                    for (double& v : q) v /= sum;
                    terms.push_back({f, q, 0.3});
                }
            }
            margin = kink_margin(model, terms);
        }
        auto loss_at = [&](ModelState& m) { return eval_loss(m, terms); };
        auto check = [&](double* param, double analytic, double& worst) {
            double saved = *param;
            *param = saved + eps;
            double up = loss_at(model);
            *param = saved - eps;
            double down = loss_at(model);
            *param = saved;
            worst = std::max(worst, rel_err(analytic, (up - down) / (2.0 * eps)));
        };

        Gradient gh = grad_head(model, terms);
        for (auto& [id, row] : model.head.rows) {
            for (std::size_t i = 0; i < row.w.size(); ++i) {
                check(&row.w[i], gh.head.at(id).w[i], gc.max_rel_err_head);
            }
            check(&row.b, gh.head.at(id).b, gc.max_rel_err_head);
        }
        Gradient gf = grad_full(model, terms);
        for (std::size_t l = 0; l < model.encoder.layers.size(); ++l) {
            auto& layer = model.encoder.layers[l];
            for (std::size_t i = 0; i < layer.w.size(); i += 7) {  // sampled entries
                check(&layer.w[i], gf.encoder_layers[l].w[i], gc.max_rel_err_full);
            }
            for (std::size_t i = 0; i < layer.b.size(); ++i) {
                check(&layer.b[i], gf.encoder_layers[l].b[i], gc.max_rel_err_full);
            }
        }
    }
    return gc;
}

int cmd_gradcheck(std::size_t models, std::uint64_t seed) {
    GradCheck gc = run_gradcheck(models, seed);
    bool ok = gc.max_rel_err_head < 1e-4 && gc.max_rel_err_full < 1e-4;
    std::printf("gradcheck over %zu random models\n", models);
    std::printf("  head gradient max relative error: %.3e\n", gc.max_rel_err_head);
    std::printf("  full gradient max relative error: %.3e\n", gc.max_rel_err_full);
    std::printf("%s\n", ok ? "PASS" : "FAIL");
    return ok ? 0 : 1;
}

// Runs the training stream without per-stage evaluation and dumps the final
// memory contents.
int cmd_dump_memory(const RunConfig& cfg) {
    using namespace metacal;
    validate_config(cfg.stream);
    TaskStream stream = load_manifest(cfg.manifest, cfg.stream.order);
    restrict_few_shot(stream, cfg.stream.shots, cfg.stream.seed);
    SynonymLexicon lexicon = cfg.lexicon.empty() ? SynonymLexicon{} : load_lexicon(cfg.lexicon);
    ModelState model = init_model(cfg.d_in, cfg.hidden_dims, cfg.stream.seed);
    Trainer trainer(std::move(model), stream, cfg.stream, cfg.al_strategy, cfg.memory_strategy,
                    cfg.aug, lexicon);
    while (!trainer.run_episode().stream_exhausted) {
    }
    std::filesystem::create_directories(cfg.out_dir);
    std::string path = (std::filesystem::path(cfg.out_dir) / "memory.tsv").string();
    dump_memory(trainer.memory(), trainer.model(), path);
    std::printf("memory entries: %zu\nwritten: %s\n", trainer.memory().size(), path.c_str());
    return 0;
}

int cmd_metrics(const std::string& run_path) {
    std::ifstream in(run_path);
    if (!in) {
        std::fprintf(stderr, "metrics: cannot open %s\n", run_path.c_str());
        return 1;
    }
    nlohmann::json j;
    in >> j;
    metacal::AccuracyMatrix m = metacal::matrix_from_json(j);
    metacal::MetricSet ms = metacal::compute_metrics(m);
    const std::size_t t = m.task_count();
    for (std::size_t k = 1; k <= t; ++k) {
        std::printf("stage %zu: ACC=%.6f", k, ms.acc[k - 1]);
        if (k >= 2) std::printf("  BWT=%.6f  FWT=%.6f", ms.bwt[k - 2], ms.fwt[k - 2]);
        std::printf("\n");
    }
    std::printf("overall accuracy: %.6f\n", ms.overall);

    bool match = true;
    if (j.contains("acc_per_stage")) {
        match = j.at("acc_per_stage").get<std::vector<double>>() == ms.acc &&
                j.at("bwt_per_stage").get<std::vector<double>>() == ms.bwt &&
                j.at("fwt_per_stage").get<std::vector<double>>() == ms.fwt &&
                j.at("overall_accuracy").get<double>() == ms.overall;
        std::printf("stored metrics %s recomputation\n", match ? "match" : "DO NOT match");
    }
    return match ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"episodic meta-trainer for continual active text classification"};
    app.require_subcommand(1);

    std::string config_path;
    Overrides ov;

    CLI::App* run = app.add_subcommand("run", "run a full experiment");
    add_config_options(run, config_path, ov);

    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    std::size_t gc_models = 20;
    std::uint64_t gc_seed = 1;
    gradcheck->add_option("--models", gc_models, "number of random models");
    gradcheck->add_option("--seed", gc_seed, "seed");

    CLI::App* dumpmem = app.add_subcommand("dump-memory",
                                           "train through the stream and dump the final memory");
    add_config_options(dumpmem, config_path, ov);

    CLI::App* metrics = app.add_subcommand("metrics", "recompute metrics from a saved run.json");
    std::string run_path;
    metrics->add_option("--run", run_path, "path to run.json")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(build_config(config_path, ov));
        if (gradcheck->parsed()) return cmd_gradcheck(gc_models, gc_seed);
        if (dumpmem->parsed()) return cmd_dump_memory(build_config(config_path, ov));
        if (metrics->parsed()) return cmd_metrics(run_path);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
