#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string_view>
#include <variant>
#include <vector>

#include "metacal/features.hpp"
#include "metacal/rng.hpp"

namespace metacal {

// One affine layer followed by a rectifier: y = max(0, W x + b).
struct EncoderLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> w;  // row-major, out x in
    std::vector<double> b;  // out
};

// Feed-forward encoder h(x). All layers apply the rectifier, so
// representations are nonnegative.
struct EncoderParams {
    std::vector<EncoderLayer> layers;

    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in; }
    std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out; }
};

struct HeadRow {
    std::vector<double> w;
    double b = 0.0;
};

// Expanding linear-softmax head: one row per class seen so far, keyed by
// global class id. Prediction order is ascending class id.
struct ClassifierParams {
    std::size_t rep_dim = 0;
    std::map<int, HeadRow> rows;

    bool empty() const { return rows.empty(); }
    std::size_t size() const { return rows.size(); }
    bool has_class(int class_id) const { return rows.count(class_id) != 0; }

    std::vector<int> class_ids() const {
        std::vector<int> ids;
        ids.reserve(rows.size());
        for (const auto& [id, row] : rows) ids.push_back(id);
        return ids;
    }
};

struct ModelState {
    EncoderParams encoder;
    ClassifierParams head;
    std::uint64_t init_seed = 0;

    std::size_t input_dim() const { return encoder.input_dim(); }
    std::size_t rep_dim() const { return encoder.output_dim(); }
};

// Encoder weights drawn uniformly from [-1/sqrt(fan_in), +1/sqrt(fan_in)],
// biases zero. The head starts empty; rows are added by expand_head.
inline ModelState init_model(std::size_t d_in, const std::vector<std::size_t>& hidden_dims,
                             std::uint64_t seed) {
    if (d_in == 0 || hidden_dims.empty()) {
        throw std::invalid_argument("init_model: need d_in >= 1 and at least one hidden layer");
    }
    ModelState m;
    m.init_seed = seed;
    Rng rng = make_rng(seed, /*stream_id=*/0x1);
    std::size_t in = d_in;
    for (std::size_t out : hidden_dims) {
        EncoderLayer layer;
        layer.in = in;
        layer.out = out;
        layer.w.resize(in * out);
        layer.b.assign(out, 0.0);
        double bound = 1.0 / std::sqrt(static_cast<double>(in));
        for (double& v : layer.w) v = uniform_range(rng, -bound, bound);
        m.encoder.layers.push_back(std::move(layer));
        in = out;
    }
    m.head.rep_dim = in;
    return m;
}

inline std::vector<double> affine(const EncoderLayer& layer, const std::vector<double>& x) {
    if (x.size() != layer.in) {
        throw std::invalid_argument("encode: input dimension mismatch");
    }
    std::vector<double> y(layer.out);
    for (std::size_t r = 0; r < layer.out; ++r) {
        const double* wr = layer.w.data() + r * layer.in;
        double acc = layer.b[r];
        for (std::size_t c = 0; c < layer.in; ++c) acc += wr[c] * x[c];
        y[r] = acc;
    }
    return y;
}

inline std::vector<double> encode(const EncoderParams& enc, const FeatureVector& f) {
    std::vector<double> a = f.values;
    for (const auto& layer : enc.layers) {
        a = affine(layer, a);
        for (double& v : a) v = std::max(0.0, v);
    }
    return a;
}

// Softmax probabilities over the classes seen so far, in ascending class-id
// order.
struct Prediction {
    std::vector<int> classes;
    std::vector<double> probs;

    // Ties break toward the lowest class id (first position in order).
    int argmax() const {
        std::size_t best = 0;
        for (std::size_t i = 1; i < probs.size(); ++i) {
            if (probs[i] > probs[best]) best = i;
        }
        return classes[best];
    }

    double prob_of(int class_id) const {
        for (std::size_t i = 0; i < classes.size(); ++i) {
            if (classes[i] == class_id) return probs[i];
        }
        throw std::out_of_range("prob_of: class id not present");
    }
};

inline std::vector<double> head_logits(const ClassifierParams& head, const std::vector<double>& rep) {
    std::vector<double> z;
    z.reserve(head.rows.size());
    for (const auto& [id, row] : head.rows) {
        double acc = row.b;
        for (std::size_t i = 0; i < rep.size(); ++i) acc += row.w[i] * rep[i];
        z.push_back(acc);
    }
    return z;
}

// Log-sum-exp stabilized softmax.
inline std::vector<double> softmax(std::vector<double> z) {
    double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double& v : z) {
        v = std::exp(v - zmax);
        sum += v;
    }
    for (double& v : z) v /= sum;
    return z;
}

inline Prediction predict_rep(const ClassifierParams& head, const std::vector<double>& rep) {
    if (head.empty()) {
        throw std::logic_error("predict: classifier head has no classes");
    }
    Prediction p;
    p.classes = head.class_ids();
    p.probs = softmax(head_logits(head, rep));
    return p;
}

inline Prediction predict(const ModelState& m, const FeatureVector& f) {
    return predict_rep(m.head, encode(m.encoder, f));
}

inline FeatureVector features_for(const ModelState& m, std::string_view text) {
    return featurize_text(text, m.input_dim());
}

// Soft targets are full-support distributions aligned with Prediction order
// (ascending class id).
using SoftTarget = std::vector<double>;
using Target = std::variant<int, SoftTarget>;

// Hard target: -log p_y. Soft target: -sum_c q_c log p_c.
inline double loss_ce(const Prediction& p, const Target& target) {
    if (std::holds_alternative<int>(target)) {
        return -std::log(p.prob_of(std::get<int>(target)));
    }
    const auto& q = std::get<SoftTarget>(target);
    if (q.size() != p.probs.size()) {
        throw std::invalid_argument("loss_ce: soft target support mismatch");
    }
    double loss = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        if (q[i] != 0.0) loss -= q[i] * std::log(p.probs[i]);
    }
    return loss;
}

// One weighted cross-entropy term of a batch loss.
struct LossTerm {
    FeatureVector features;
    Target target;
    double weight = 1.0;
};

// Gradient of a summed weighted cross-entropy. `encoder_layers` is empty for
// head-only gradients; `head` always mirrors the classifier rows.
struct Gradient {
    std::vector<EncoderLayer> encoder_layers;
    std::map<int, HeadRow> head;

    bool has_encoder() const { return !encoder_layers.empty(); }
};

namespace detail {

inline std::map<int, HeadRow> zero_head_like(const ClassifierParams& head) {
    std::map<int, HeadRow> g;
    for (const auto& [id, row] : head.rows) {
        g[id] = HeadRow{std::vector<double>(row.w.size(), 0.0), 0.0};
    }
    return g;
}

inline std::vector<double> target_vector(const Prediction& p, const Target& target) {
    std::vector<double> t(p.probs.size(), 0.0);
    if (std::holds_alternative<int>(target)) {
        int id = std::get<int>(target);
        auto it = std::find(p.classes.begin(), p.classes.end(), id);
        if (it == p.classes.end()) {
            throw std::invalid_argument("gradient: hard target class absent from head");
        }
        t[static_cast<std::size_t>(it - p.classes.begin())] = 1.0;
    } else {
        const auto& q = std::get<SoftTarget>(target);
        if (q.size() != t.size()) {
            throw std::invalid_argument("gradient: soft target support mismatch");
        }
        t = q;
    }
    return t;
}

}  // namespace detail

// Exact gradient over the head only; the encoder is treated as a constant
// feature map.
inline Gradient grad_head(const ModelState& m, const std::vector<LossTerm>& terms) {
    if (terms.empty()) {
        throw std::invalid_argument("grad_head: empty batch");
    }
    Gradient g;
    g.head = detail::zero_head_like(m.head);
    for (const auto& term : terms) {
        std::vector<double> rep = encode(m.encoder, term.features);
        Prediction p = predict_rep(m.head, rep);
        std::vector<double> t = detail::target_vector(p, term.target);
        std::size_t ci = 0;
        for (auto& [id, grow] : g.head) {
            double dz = term.weight * (p.probs[ci] - t[ci]);
            for (std::size_t i = 0; i < rep.size(); ++i) grow.w[i] += dz * rep[i];
            grow.b += dz;
            ++ci;
        }
    }
    return g;
}

// Exact gradient over encoder and head, backpropagating through the
// rectifier layers.
inline Gradient grad_full(const ModelState& m, const std::vector<LossTerm>& terms) {
    if (terms.empty()) {
        throw std::invalid_argument("grad_full: empty batch");
    }
    Gradient g;
    g.head = detail::zero_head_like(m.head);
    g.encoder_layers.reserve(m.encoder.layers.size());
    for (const auto& layer : m.encoder.layers) {
        EncoderLayer gl;
        gl.in = layer.in;
        gl.out = layer.out;
        gl.w.assign(layer.w.size(), 0.0);
        gl.b.assign(layer.b.size(), 0.0);
        g.encoder_layers.push_back(std::move(gl));
    }

    const std::size_t n_layers = m.encoder.layers.size();
    for (const auto& term : terms) {
        // Forward pass, keeping every layer's post-activation output.
        std::vector<std::vector<double>> acts;
        acts.reserve(n_layers + 1);
        acts.push_back(term.features.values);
        for (const auto& layer : m.encoder.layers) {
            std::vector<double> a = affine(layer, acts.back());
            for (double& v : a) v = std::max(0.0, v);
            acts.push_back(std::move(a));
        }
        const std::vector<double>& rep = acts.back();
        Prediction p = predict_rep(m.head, rep);
        std::vector<double> t = detail::target_vector(p, term.target);

        std::vector<double> drep(rep.size(), 0.0);
        std::size_t ci = 0;
        for (const auto& [id, row] : m.head.rows) {
            double dz = term.weight * (p.probs[ci] - t[ci]);
            auto& grow = g.head[id];
            for (std::size_t i = 0; i < rep.size(); ++i) {
                grow.w[i] += dz * rep[i];
                drep[i] += dz * row.w[i];
            }
            grow.b += dz;
            ++ci;
        }

        // Backward through the rectifier layers. relu'(z) = 1 iff the
        // post-activation output is positive.
        std::vector<double> da = std::move(drep);
        for (std::size_t li = n_layers; li-- > 0;) {
            const EncoderLayer& layer = m.encoder.layers[li];
            EncoderLayer& gl = g.encoder_layers[li];
            const std::vector<double>& out = acts[li + 1];
            const std::vector<double>& in = acts[li];
            std::vector<double> din(layer.in, 0.0);
            for (std::size_t r = 0; r < layer.out; ++r) {
                if (out[r] <= 0.0) continue;
                double dz = da[r];
                if (dz == 0.0) continue;
                double* gwr = gl.w.data() + r * layer.in;
                const double* wr = layer.w.data() + r * layer.in;
                for (std::size_t c = 0; c < layer.in; ++c) {
                    gwr[c] += dz * in[c];
                    din[c] += dz * wr[c];
                }
                gl.b[r] += dz;
            }
            da = std::move(din);
        }
    }
    return g;
}

// Adds a zero-initialized row for an unseen class; idempotent. A zero row
// shifts all logits' denominator uniformly, so predictions among existing
// classes are unchanged.
inline void expand_head(ClassifierParams& head, int class_id) {
    if (head.has_class(class_id)) return;
    head.rows[class_id] = HeadRow{std::vector<double>(head.rep_dim, 0.0), 0.0};
}

}  // namespace metacal
