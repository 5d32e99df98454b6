#pragma once

#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

namespace metacal {

// (T+1) x T matrix of macro-averaged accuracies. Row 0 is the untrained
// model; row k is the state after finishing the k-th task of the stream.
// Columns are stream positions 1..T.
struct AccuracyMatrix {
    std::vector<std::vector<double>> r;
    std::vector<std::size_t> test_sizes;

    std::size_t task_count() const { return test_sizes.size(); }
};

// Unweighted mean over true classes of per-class recall.
inline double macro_accuracy(const std::vector<std::pair<int, int>>& predictions) {
    if (predictions.empty()) throw std::invalid_argument("macro_accuracy: empty input");
    std::map<int, std::pair<std::size_t, std::size_t>> per_class;  // class -> (correct, total)
    for (const auto& [truth, predicted] : predictions) {
        auto& [correct, total] = per_class[truth];
        ++total;
        if (truth == predicted) ++correct;
    }
    double sum = 0.0;
    for (const auto& [cls, counts] : per_class) {
        sum += static_cast<double>(counts.first) / static_cast<double>(counts.second);
    }
    return sum / static_cast<double>(per_class.size());
}

// ACC_t: mean accuracy over the first t tasks after learning t tasks.
inline double acc_t(const AccuracyMatrix& m, std::size_t t) {
    if (t < 1 || t >= m.r.size()) throw std::out_of_range("acc_t: stage out of range");
    double sum = 0.0;
    for (std::size_t i = 0; i < t; ++i) sum += m.r[t][i];
    return sum / static_cast<double>(t);
}

// Final-stage accuracy weighted by test-set size.
inline double overall_accuracy(const AccuracyMatrix& m) {
    const std::size_t t = m.task_count();
    double sum = 0.0;
    double weight = 0.0;
    for (std::size_t i = 0; i < t; ++i) {
        sum += m.r[t][i] * static_cast<double>(m.test_sizes[i]);
        weight += static_cast<double>(m.test_sizes[i]);
    }
    return sum / weight;
}

// BWT_k: mean retrospective change on earlier tasks, (1/(k-1)) * sum_{i<k}
// (R[k,i] - R[i,i]). Negative values indicate forgetting.
inline double bwt_k(const AccuracyMatrix& m, std::size_t k) {
    if (k < 2 || k >= m.r.size()) throw std::out_of_range("bwt_k: stage out of range");
    double sum = 0.0;
    for (std::size_t i = 1; i < k; ++i) sum += m.r[k][i - 1] - m.r[i][i - 1];
    return sum / static_cast<double>(k - 1);
}

// FWT_k: mean gain of each newly learned task over the untrained model,
// (1/(k-1)) * sum_{i=2..k} (R[i,i] - R[0,i]).
inline double fwt_k(const AccuracyMatrix& m, std::size_t k) {
    if (k < 2 || k >= m.r.size()) throw std::out_of_range("fwt_k: stage out of range");
    double sum = 0.0;
    for (std::size_t i = 2; i <= k; ++i) sum += m.r[i][i - 1] - m.r[0][i - 1];
    return sum / static_cast<double>(k - 1);
}

}  // namespace metacal
