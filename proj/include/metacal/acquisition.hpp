#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "metacal/rng.hpp"

namespace metacal {

enum class AcquisitionStrategy {
    random,
    unc_lc,
    unc_margin,
    unc_entropy,
    rep_kmeans,
    div_kmeans,
    rep_mean,
    div_mean,
};

inline const char* to_string(AcquisitionStrategy s) {
    switch (s) {
        case AcquisitionStrategy::random: return "rand";
        case AcquisitionStrategy::unc_lc: return "unc-lc";
        case AcquisitionStrategy::unc_margin: return "unc-margin";
        case AcquisitionStrategy::unc_entropy: return "unc-entropy";
        case AcquisitionStrategy::rep_kmeans: return "rep-kmeans";
        case AcquisitionStrategy::div_kmeans: return "div-kmeans";
        case AcquisitionStrategy::rep_mean: return "rep-mean";
        case AcquisitionStrategy::div_mean: return "div-mean";
    }
    return "?";
}

inline AcquisitionStrategy acquisition_strategy_from(const std::string& name) {
    for (auto s : {AcquisitionStrategy::random, AcquisitionStrategy::unc_lc,
                   AcquisitionStrategy::unc_margin, AcquisitionStrategy::unc_entropy,
                   AcquisitionStrategy::rep_kmeans, AcquisitionStrategy::div_kmeans,
                   AcquisitionStrategy::rep_mean, AcquisitionStrategy::div_mean}) {
        if (name == to_string(s)) return s;
    }
    throw std::invalid_argument("unknown acquisition strategy: " + name);
}

// Higher score = more uncertain = selected first.

inline double score_least_confidence(const std::vector<double>& probs) {
    if (probs.empty()) throw std::invalid_argument("score_least_confidence: empty distribution");
    return -*std::max_element(probs.begin(), probs.end());
}

// Negative margin between the two most likely predictions.
inline double score_margin(const std::vector<double>& probs) {
    if (probs.size() < 2) throw std::invalid_argument("score_margin: need at least 2 classes");
    double top1 = -std::numeric_limits<double>::infinity();
    double top2 = -std::numeric_limits<double>::infinity();
    for (double p : probs) {
        if (p > top1) {
            top2 = top1;
            top1 = p;
        } else if (p > top2) {
            top2 = p;
        }
    }
    return -(top1 - top2);
}

// Predictive entropy in nats, with 0 log 0 = 0.
inline double score_entropy(const std::vector<double>& probs) {
    double h = 0.0;
    for (double p : probs) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

inline double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double diff = a[i] - b[i];
        d += diff * diff;
    }
    return d;
}

struct KMeansResult {
    std::vector<std::size_t> assignments;       // point index -> cluster
    std::vector<std::vector<double>> centroids;
    std::vector<double> inertia_history;        // after each assignment pass
};

namespace detail {

// kmeans++ seeding. When all remaining distances are zero (duplicate
// points), falls back to a uniform pick; the empty-cluster repair below
// handles the resulting duplicates.
inline std::vector<std::vector<double>> kmeanspp_seed(
    const std::vector<std::vector<double>>& points, std::size_t k, Rng& rng) {
    std::vector<std::vector<double>> centroids;
    centroids.reserve(k);
    centroids.push_back(points[uniform_index(rng, points.size())]);
    std::vector<double> d2(points.size());
    while (centroids.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centroids) best = std::min(best, squared_distance(points[i], c));
            d2[i] = best;
            total += best;
        }
        std::size_t pick;
        if (total <= 0.0) {
            pick = uniform_index(rng, points.size());
        } else {
            double r = uniform_real(rng) * total;
            double acc = 0.0;
            pick = points.size() - 1;
            for (std::size_t i = 0; i < points.size(); ++i) {
                acc += d2[i];
                if (r < acc) {
                    pick = i;
                    break;
                }
            }
        }
        centroids.push_back(points[pick]);
    }
    return centroids;
}

inline void assign_points(const std::vector<std::vector<double>>& points,
                          const std::vector<std::vector<double>>& centroids,
                          std::vector<std::size_t>& assignment) {
    for (std::size_t i = 0; i < points.size(); ++i) {
        std::size_t best = 0;
        double best_d = squared_distance(points[i], centroids[0]);
        for (std::size_t c = 1; c < centroids.size(); ++c) {
            double d = squared_distance(points[i], centroids[c]);
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        assignment[i] = best;
    }
}

// Give every empty cluster the point farthest from its current centroid
// (donors must keep at least one member). Never increases inertia.
inline void repair_empty_clusters(const std::vector<std::vector<double>>& points, std::size_t k,
                                  std::vector<std::vector<double>>& centroids,
                                  std::vector<std::size_t>& assignment) {
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t a : assignment) ++counts[a];
    for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] > 0) continue;
        std::size_t far_idx = points.size();
        double far_d = -1.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (counts[assignment[i]] < 2) continue;
            double d = squared_distance(points[i], centroids[assignment[i]]);
            if (d > far_d) {
                far_d = d;
                far_idx = i;
            }
        }
        if (far_idx == points.size()) continue;  // k > distinct points; leave empty
        --counts[assignment[far_idx]];
        assignment[far_idx] = c;
        counts[c] = 1;
        centroids[c] = points[far_idx];
    }
}

}  // namespace detail

// Lloyd's algorithm with kmeans++ seeding. Runs at most `max_iters`
// iterations or until the largest centroid movement drops below `tol`.
// Deterministic given the rng state. Empty clusters are re-seeded from the
// farthest point, so every cluster is nonempty on return (when the points
// are distinct enough to allow it).
inline KMeansResult kmeans(const std::vector<std::vector<double>>& points, std::size_t k, Rng& rng,
                           std::size_t max_iters = 50, double tol = 1e-8) {
    if (k < 1 || k > points.size()) {
        throw std::invalid_argument("kmeans: need 1 <= k <= number of points");
    }
    KMeansResult res;
    res.centroids = detail::kmeanspp_seed(points, k, rng);
    res.assignments.assign(points.size(), 0);

    const std::size_t dim = points[0].size();
    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        detail::assign_points(points, res.centroids, res.assignments);
        detail::repair_empty_clusters(points, k, res.centroids, res.assignments);

        double inertia = 0.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            inertia += squared_distance(points[i], res.centroids[res.assignments[i]]);
        }
        res.inertia_history.push_back(inertia);

        std::vector<std::vector<double>> next(k, std::vector<double>(dim, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < points.size(); ++i) {
            ++counts[res.assignments[i]];
            for (std::size_t d = 0; d < dim; ++d) next[res.assignments[i]][d] += points[i][d];
        }
        double movement = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                next[c] = res.centroids[c];
                continue;
            }
            for (std::size_t d = 0; d < dim; ++d) next[c][d] /= static_cast<double>(counts[c]);
            movement = std::max(movement, std::sqrt(squared_distance(next[c], res.centroids[c])));
        }
        res.centroids = std::move(next);
        if (movement < tol) break;
    }
    // Final pass so assignments are consistent with the returned centroids.
    detail::assign_points(points, res.centroids, res.assignments);
    detail::repair_empty_clusters(points, k, res.centroids, res.assignments);
    return res;
}

struct Candidate {
    std::string id;
    std::vector<double> representation;
    std::vector<double> probs;  // normalized; may be empty when no class has been seen yet
};

struct AcquisitionRequest {
    std::vector<Candidate> candidates;
    std::size_t n_a = 0;
    AcquisitionStrategy strategy = AcquisitionStrategy::random;
};

namespace detail {

// Top-n by score, descending; ties break toward the lowest candidate index.
inline std::vector<std::size_t> top_by_score(const std::vector<double>& scores, std::size_t n) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    order.resize(n);
    return order;
}

inline std::vector<double> mean_vector(const std::vector<Candidate>& cands) {
    std::vector<double> mean(cands[0].representation.size(), 0.0);
    for (const auto& c : cands) {
        for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += c.representation[d];
    }
    for (double& v : mean) v /= static_cast<double>(cands.size());
    return mean;
}

}  // namespace detail

// Selects n_a distinct candidate ids. Scores do not depend on candidate
// order; only tie-breaking (lowest index first) does.
inline std::vector<std::string> select(const AcquisitionRequest& req, Rng& rng) {
    const auto& cands = req.candidates;
    const std::size_t n_a = req.n_a;
    if (n_a > cands.size()) {
        throw std::invalid_argument("select: n_a exceeds candidate count");
    }
    if (n_a == 0) return {};

    std::vector<std::size_t> picked;
    switch (req.strategy) {
        case AcquisitionStrategy::random: {
            picked = sample_indices(rng, cands.size(), n_a);
            break;
        }
        case AcquisitionStrategy::unc_lc:
        case AcquisitionStrategy::unc_margin:
        case AcquisitionStrategy::unc_entropy: {
            std::vector<double> scores(cands.size());
            for (std::size_t i = 0; i < cands.size(); ++i) {
                const auto& p = cands[i].probs;
                if (p.empty()) {
                    scores[i] = 0.0;  // no classifier yet: all equally uncertain
                } else if (req.strategy == AcquisitionStrategy::unc_lc) {
                    scores[i] = score_least_confidence(p);
                } else if (req.strategy == AcquisitionStrategy::unc_margin) {
                    scores[i] = p.size() < 2 ? 0.0 : score_margin(p);
                } else {
                    scores[i] = score_entropy(p);
                }
            }
            picked = detail::top_by_score(scores, n_a);
            break;
        }
        case AcquisitionStrategy::rep_kmeans:
        case AcquisitionStrategy::div_kmeans: {
            std::vector<std::vector<double>> points;
            points.reserve(cands.size());
            for (const auto& c : cands) points.push_back(c.representation);
            KMeansResult km = kmeans(points, n_a, rng);
            const bool nearest = req.strategy == AcquisitionStrategy::rep_kmeans;
            for (std::size_t c = 0; c < n_a; ++c) {
                std::size_t best = points.size();
                double best_d = 0.0;
                for (std::size_t i = 0; i < points.size(); ++i) {
                    if (km.assignments[i] != c) continue;
                    double d = squared_distance(points[i], km.centroids[c]);
                    if (best == points.size() || (nearest ? d < best_d : d > best_d)) {
                        best = i;
                        best_d = d;
                    }
                }
                if (best != points.size()) picked.push_back(best);
            }
            // Duplicate points can leave a cluster unfillable; pad with the
            // lowest unpicked indices so |result| = n_a.
            if (picked.size() < n_a) {
                std::vector<bool> taken(cands.size(), false);
                for (std::size_t i : picked) taken[i] = true;
                for (std::size_t i = 0; i < cands.size() && picked.size() < n_a; ++i) {
                    if (!taken[i]) picked.push_back(i);
                }
            }
            std::sort(picked.begin(), picked.end());
            break;
        }
        case AcquisitionStrategy::rep_mean:
        case AcquisitionStrategy::div_mean: {
            std::vector<double> mean = detail::mean_vector(cands);
            std::vector<double> scores(cands.size());
            const bool nearest = req.strategy == AcquisitionStrategy::rep_mean;
            for (std::size_t i = 0; i < cands.size(); ++i) {
                double d = squared_distance(cands[i].representation, mean);
                scores[i] = nearest ? -d : d;
            }
            picked = detail::top_by_score(scores, n_a);
            break;
        }
    }

    std::vector<std::string> ids;
    ids.reserve(picked.size());
    for (std::size_t i : picked) ids.push_back(cands[i].id);
    return ids;
}

}  // namespace metacal
