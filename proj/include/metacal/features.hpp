#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace metacal {

// Lowercased word tokens: splits on whitespace and punctuation, drops empty
// tokens. Bytes outside the ASCII range are kept as token characters.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (unsigned char c : text) {
        bool sep = c < 0x80 && (std::isspace(c) || std::ispunct(c));
        if (sep) {
            if (!cur.empty()) {
                tokens.push_back(cur);
                cur.clear();
            }
        } else {
            cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
        }
    }
    if (!cur.empty()) tokens.push_back(cur);
    return tokens;
}

// FNV-1a, the fixed 64-bit hash used for feature indexing.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Hashed bag-of-words feature vector. `values` is L2-normalized when any
// token is present; `norm` records the L2 length of the raw count vector.
struct FeatureVector {
    std::vector<double> values;
    double norm = 0.0;

    std::size_t dim() const { return values.size(); }
};

// Token counts hashed into [0, d_in) via fnv1a64(token) % d_in, then
// L2-normalized. An empty token list maps to the zero vector.
inline FeatureVector featurize(const std::vector<std::string>& tokens, std::size_t d_in) {
    FeatureVector f;
    f.values.assign(d_in, 0.0);
    for (const auto& t : tokens) {
        f.values[fnv1a64(t) % d_in] += 1.0;
    }
    double sq = 0.0;
    for (double v : f.values) sq += v * v;
    f.norm = std::sqrt(sq);
    if (f.norm > 0.0) {
        for (double& v : f.values) v /= f.norm;
    }
    return f;
}

inline FeatureVector featurize_text(std::string_view text, std::size_t d_in) {
    return featurize(tokenize(text), d_in);
}

}  // namespace metacal
