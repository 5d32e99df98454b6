#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "metacal/acquisition.hpp"
#include "metacal/augment.hpp"
#include "metacal/memory.hpp"
#include "metacal/model.hpp"
#include "metacal/stream.hpp"

namespace metacal {

// Adam accumulators shaped like the full parameter set. Head moments are
// keyed by class id and start at zero when expand_head grows the head, so
// the state survives label-space growth. One trainer run = one optimizer
// lifetime.
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t step = 0;
    std::vector<EncoderLayer> enc_m, enc_v;
    std::map<int, HeadRow> head_m, head_v;
};

namespace detail {

inline void ensure_adam_shapes(AdamState& adam, const ModelState& model) {
    if (adam.enc_m.empty()) {
        for (const auto& layer : model.encoder.layers) {
            EncoderLayer z;
            z.in = layer.in;
            z.out = layer.out;
            z.w.assign(layer.w.size(), 0.0);
            z.b.assign(layer.b.size(), 0.0);
            adam.enc_m.push_back(z);
            adam.enc_v.push_back(std::move(z));
        }
    }
    for (const auto& [id, row] : model.head.rows) {
        if (!adam.head_m.count(id)) {
            adam.head_m[id] = HeadRow{std::vector<double>(row.w.size(), 0.0), 0.0};
            adam.head_v[id] = HeadRow{std::vector<double>(row.w.size(), 0.0), 0.0};
        }
    }
}

inline void adam_element(double& theta, double& m, double& v, double g, const AdamState& s,
                         double lr, double bc1, double bc2) {
    m = s.beta1 * m + (1.0 - s.beta1) * g;
    v = s.beta2 * v + (1.0 - s.beta2) * g * g;
    theta -= lr * (m / bc1) / (std::sqrt(v / bc2) + s.eps);
}

}  // namespace detail

// One Adam step on encoder + head with the given gradient.
inline void adam_update(ModelState& model, AdamState& adam, const Gradient& g, double lr) {
    detail::ensure_adam_shapes(adam, model);
    ++adam.step;
    const double bc1 = 1.0 - std::pow(adam.beta1, static_cast<double>(adam.step));
    const double bc2 = 1.0 - std::pow(adam.beta2, static_cast<double>(adam.step));
    for (std::size_t l = 0; l < model.encoder.layers.size(); ++l) {
        auto& layer = model.encoder.layers[l];
        const auto& gl = g.encoder_layers[l];
        for (std::size_t i = 0; i < layer.w.size(); ++i) {
            detail::adam_element(layer.w[i], adam.enc_m[l].w[i], adam.enc_v[l].w[i], gl.w[i], adam,
                                 lr, bc1, bc2);
        }
        for (std::size_t i = 0; i < layer.b.size(); ++i) {
            detail::adam_element(layer.b[i], adam.enc_m[l].b[i], adam.enc_v[l].b[i], gl.b[i], adam,
                                 lr, bc1, bc2);
        }
    }
    for (auto& [id, row] : model.head.rows) {
        const auto& gr = g.head.at(id);
        auto& mr = adam.head_m[id];
        auto& vr = adam.head_v[id];
        for (std::size_t i = 0; i < row.w.size(); ++i) {
            detail::adam_element(row.w[i], mr.w[i], vr.w[i], gr.w[i], adam, lr, bc1, bc2);
        }
        detail::adam_element(row.b, mr.b, vr.b, gr.b, adam, lr, bc1, bc2);
    }
}

// Forward-only value of a summed weighted cross-entropy. Shared by loss
// reporting and the finite-difference checks.
inline double eval_loss(const ModelState& model, const std::vector<LossTerm>& terms) {
    double total = 0.0;
    for (const auto& term : terms) {
        total += term.weight * loss_ce(predict(model, term.features), term.target);
    }
    return total;
}

inline void apply_head_sgd(ModelState& model, const Gradient& g, double alpha) {
    for (auto& [id, row] : model.head.rows) {
        const auto& gr = g.head.at(id);
        for (std::size_t i = 0; i < row.w.size(); ++i) row.w[i] -= alpha * gr.w[i];
        row.b -= alpha * gr.b;
    }
}

// Loss terms for a batch of already-labeled examples:
//   w * CE(f(x), y) + (1-w) * CE(f(weak(x)), y)
// Plain CE when inner augmentation is off.
inline std::vector<LossTerm> labeled_loss_terms(const ModelState& model,
                                                const std::vector<Example>& batch, double w,
                                                const AugmentConfig& aug, bool use_inner_aug,
                                                Rng& rng) {
    std::vector<LossTerm> terms;
    terms.reserve(batch.size() * 2);
    for (const auto& ex : batch) {
        if (!ex.label.has_value()) {
            throw std::invalid_argument("inner step: unlabeled example in labeled batch");
        }
        if (use_inner_aug) {
            terms.push_back({features_for(model, ex.text), *ex.label, w});
            terms.push_back({features_for(model, weak_augment(ex.text, aug, rng)), *ex.label,
                             1.0 - w});
        } else {
            terms.push_back({features_for(model, ex.text), *ex.label, 1.0});
        }
    }
    return terms;
}

// Loss terms for newly annotated examples:
//   w * CE(f(x), y) + (1-w) * CE(f(strong(x)), stopgrad(f(weak(x))))
// The weak-view prediction is evaluated at the current parameters and held
// fixed as a soft target; no gradient flows through it.
inline std::vector<LossTerm> annotated_loss_terms(const ModelState& model,
                                                  const std::vector<Example>& batch, double w,
                                                  const SynonymLexicon& lex,
                                                  const AugmentConfig& aug, bool use_inner_aug,
                                                  Rng& rng) {
    std::vector<LossTerm> terms;
    terms.reserve(batch.size() * 2);
    for (const auto& ex : batch) {
        if (ex.provenance != Provenance::annotated || !ex.label.has_value()) {
            throw std::invalid_argument("inner step: expected newly annotated examples");
        }
        if (use_inner_aug) {
            terms.push_back({features_for(model, ex.text), *ex.label, w});
            FeatureVector weak_f = features_for(model, weak_augment(ex.text, aug, rng));
            FeatureVector strong_f =
                features_for(model, strong_augment(ex.text, lex, aug, rng));
            SoftTarget q = predict(model, weak_f).probs;
            terms.push_back({std::move(strong_f), std::move(q), 1.0 - w});
        } else {
            terms.push_back({features_for(model, ex.text), *ex.label, 1.0});
        }
    }
    return terms;
}

// One SGD step on the classifier head for a labeled batch. The encoder is
// untouched. Returns the loss at the pre-step parameters.
inline double inner_step_labeled(ModelState& model, const std::vector<Example>& batch, double w,
                                 double alpha, const AugmentConfig& aug, bool use_inner_aug,
                                 Rng& rng) {
    auto terms = labeled_loss_terms(model, batch, w, aug, use_inner_aug, rng);
    double loss = eval_loss(model, terms);
    apply_head_sgd(model, grad_head(model, terms), alpha);
    return loss;
}

// One SGD step on the classifier head for newly annotated examples.
inline double inner_step_annotated(ModelState& model, const std::vector<Example>& batch, double w,
                                   double alpha, const SynonymLexicon& lex,
                                   const AugmentConfig& aug, bool use_inner_aug, Rng& rng) {
    auto terms = annotated_loss_terms(model, batch, w, lex, aug, use_inner_aug, rng);
    double loss = eval_loss(model, terms);
    apply_head_sgd(model, grad_head(model, terms), alpha);
    return loss;
}

// Scores a pool batch with the current model, selects
// min(n_a, budget_remaining, |batch|) examples, and labels them through the
// oracle. Non-selected pool examples are discarded from training.
inline std::vector<Example> annotate_batch(const ModelState& model,
                                           const std::vector<Example>& batch, std::int64_t n_a,
                                           AcquisitionStrategy strategy, AnnotationOracle& oracle,
                                           std::int64_t budget_remaining, Rng& rng) {
    std::int64_t k64 = std::min({n_a, budget_remaining, static_cast<std::int64_t>(batch.size())});
    if (k64 <= 0) return {};
    AcquisitionRequest req;
    req.n_a = static_cast<std::size_t>(k64);
    req.strategy = strategy;
    req.candidates.reserve(batch.size());
    for (const auto& ex : batch) {
        Candidate c;
        c.id = ex.id;
        FeatureVector f = features_for(model, ex.text);
        c.representation = encode(model.encoder, f);
        if (!model.head.empty()) c.probs = predict_rep(model.head, c.representation).probs;
        req.candidates.push_back(std::move(c));
    }
    std::vector<std::string> ids = select(req, rng);

    std::vector<Example> annotated;
    annotated.reserve(ids.size());
    for (const auto& id : ids) {
        auto it = std::find_if(batch.begin(), batch.end(),
                               [&](const Example& e) { return e.id == id; });
        Example ex = *it;
        ex.label = oracle.label(id);
        ex.provenance = Provenance::annotated;
        annotated.push_back(std::move(ex));
    }
    return annotated;
}

// Deep-copies the model and fine-tunes the head with one SGD pass over a
// support set sampled from memory (no augmentation). The source model is
// untouched.
inline ModelState adapt_for_eval(const ModelState& model, const MemoryBuffer& memory,
                                 std::size_t m, std::size_t b, double alpha, Rng& rng) {
    if (memory.empty()) throw std::logic_error("adapt_for_eval: empty memory");
    ModelState adapted = model;
    std::vector<Example> support = memory.sample_support(m * b, rng);
    for (std::size_t start = 0; start < support.size(); start += b) {
        std::size_t end = std::min(start + b, support.size());
        std::vector<LossTerm> terms;
        terms.reserve(end - start);
        for (std::size_t i = start; i < end; ++i) {
            terms.push_back({features_for(adapted, support[i].text), *support[i].label, 1.0});
        }
        apply_head_sgd(adapted, grad_head(adapted, terms), alpha);
    }
    return adapted;
}

// Test hooks. The trainer reports state transitions; tests use them to check
// encoder isolation, single-pass consumption, and the first-order update.
struct TrainerProbe {
    virtual ~TrainerProbe() = default;
    virtual void before_inner_step(const ModelState&) {}
    virtual void after_inner_step(const ModelState&, const std::vector<std::string>&, double) {}
    virtual void on_outer_step(const ModelState&, const std::vector<LossTerm>&, const Gradient&,
                               double) {}
    virtual void on_episode_end(const MemoryBuffer&) {}
};

// First-order meta update: the full gradient of the (strongly augmented)
// memory loss, taken at the adapted parameters the model currently holds, is
// fed to Adam. A no-op returning nothing when memory is empty.
inline std::optional<double> outer_step(ModelState& model, const MemoryBuffer& memory,
                                        AdamState& adam, double beta, const SynonymLexicon& lex,
                                        const AugmentConfig& aug, bool use_outer_aug, Rng& rng,
                                        TrainerProbe* probe = nullptr) {
    if (memory.empty()) return std::nullopt;
    std::vector<LossTerm> terms;
    for (const auto& ex : memory.read_all()) {
        std::string text = use_outer_aug ? strong_augment(ex.text, lex, aug, rng) : ex.text;
        terms.push_back({features_for(model, text), *ex.label, 1.0});
    }
    double meta_loss = eval_loss(model, terms);
    Gradient g = grad_full(model, terms);
    if (probe) probe->on_outer_step(model, terms, g, meta_loss);
    adam_update(model, adam, g, beta);
    return meta_loss;
}

struct EpisodeReport {
    bool stream_exhausted = false;
    std::size_t task_pos = 0;  // harness bookkeeping (stream order, 0-based)
    std::size_t batches = 0;
    std::vector<double> inner_losses;
    std::int64_t annotations = 0;
    std::size_t memory_size = 0;
    std::optional<double> meta_loss;  // absent when the outer step was skipped
};

// Runs the episodic loop: per batch, inner adaptation of the head (with
// budgeted annotation on pool batches); per episode, a memory update and one
// first-order meta update of all parameters on strongly-augmented memory.
class Trainer {
public:
    Trainer(ModelState model, const TaskStream& stream, const StreamConfig& cfg,
            AcquisitionStrategy strategy, MemoryStrategy memory_strategy,
            const AugmentConfig& aug, SynonymLexicon lexicon)
        : model_(std::move(model)),
          cfg_(validated(cfg)),
          strategy_(strategy),
          aug_(aug),
          lexicon_(std::move(lexicon)),
          oracle_(stream, cfg_),
          cursor_(stream, cfg_),
          memory_(memory_strategy, cfg_.slots_per_class),
          acq_rng_(make_rng(cfg_.seed, 0x10)),
          mem_rng_(make_rng(cfg_.seed, 0x11)),
          inner_aug_rng_(make_rng(cfg_.seed, 0x12)),
          outer_aug_rng_(make_rng(cfg_.seed, 0x13)) {}

    const ModelState& model() const { return model_; }
    const MemoryBuffer& memory() const { return memory_; }
    const AnnotationOracle& oracle() const { return oracle_; }
    const AdamState& adam() const { return adam_; }
    bool exhausted() const { return cursor_.exhausted(); }
    std::size_t tasks_completed() const { return cursor_.tasks_completed(); }

    void set_probe(TrainerProbe* probe) { probe_ = probe; }

    EpisodeReport run_episode() {
        EpisodeReport report;
        std::vector<EpisodeBatch> episode = cursor_.next_episode();
        if (episode.empty()) {
            report.stream_exhausted = true;
            return report;
        }
        report.task_pos = cursor_.last_episode_task();
        report.batches = episode.size();

        std::vector<Example> observed;
        for (auto& batch : episode) {
            if (batch.kind == BatchKind::labeled) {
                ensure_classes(batch.examples);
                if (probe_) probe_->before_inner_step(model_);
                double loss = inner_step_labeled(model_, batch.examples, cfg_.w, cfg_.alpha, aug_,
                                                 cfg_.flags.use_inner_aug, inner_aug_rng_);
                if (probe_) probe_->after_inner_step(model_, ids_of(batch.examples), loss);
                report.inner_losses.push_back(loss);
                observed.insert(observed.end(), batch.examples.begin(), batch.examples.end());
            } else {
                auto allowance = oracle_.allowance(batch.examples.front().id);
                std::vector<Example> annotated =
                    annotate_batch(model_, batch.examples, allowance.n_a, strategy_, oracle_,
                                   allowance.budget_remaining, acq_rng_);
                report.annotations += static_cast<std::int64_t>(annotated.size());
                if (!annotated.empty()) {
                    ensure_classes(annotated);
                    if (probe_) probe_->before_inner_step(model_);
                    double loss =
                        inner_step_annotated(model_, annotated, cfg_.w, cfg_.alpha, lexicon_, aug_,
                                             cfg_.flags.use_inner_aug, inner_aug_rng_);
                    if (probe_) probe_->after_inner_step(model_, ids_of(annotated), loss);
                    report.inner_losses.push_back(loss);
                    observed.insert(observed.end(), annotated.begin(), annotated.end());
                }
            }
        }

        if (cfg_.flags.use_memory) {
            for (const auto& ex : observed) {
                memory_.observe(ex, encode(model_.encoder, features_for(model_, ex.text)),
                                mem_rng_);
            }
            report.meta_loss = outer_step(model_, memory_, adam_, cfg_.beta, lexicon_, aug_,
                                          cfg_.flags.use_outer_aug, outer_aug_rng_, probe_);
        }
        report.memory_size = memory_.size();
        if (probe_) probe_->on_episode_end(memory_);
        return report;
    }

private:
    static StreamConfig validated(StreamConfig cfg) {
        validate_config(cfg);
        return cfg;
    }

    static std::vector<std::string> ids_of(const std::vector<Example>& exs) {
        std::vector<std::string> ids;
        ids.reserve(exs.size());
        for (const auto& ex : exs) ids.push_back(ex.id);
        return ids;
    }

    void ensure_classes(const std::vector<Example>& exs) {
        for (const auto& ex : exs) expand_head(model_.head, *ex.label);
    }

    ModelState model_;
    StreamConfig cfg_;
    AcquisitionStrategy strategy_;
    AugmentConfig aug_;
    SynonymLexicon lexicon_;
    AnnotationOracle oracle_;
    StreamCursor cursor_;
    MemoryBuffer memory_;
    AdamState adam_;
    TrainerProbe* probe_ = nullptr;
    Rng acq_rng_;
    Rng mem_rng_;
    Rng inner_aug_rng_;
    Rng outer_aug_rng_;
};

}  // namespace metacal
