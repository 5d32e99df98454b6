#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "metacal/features.hpp"
#include "metacal/rng.hpp"

namespace metacal {

// token -> nonempty list of synonym tokens, all lowercase. Entries whose
// only synonym is the token itself are dropped at load time.
using SynonymLexicon = std::unordered_map<std::string, std::vector<std::string>>;

struct AugmentConfig {
    double swap_rate = 0.1;     // fraction of token positions transposed
    double delete_rate = 0.1;   // per-token deletion probability
    double synonym_rate = 0.1;  // per-token substitution probability
};

namespace detail {

inline std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out.push_back(' ');
        out += tokens[i];
    }
    return out;
}

// ceil(swap_rate * n) random transpositions of token positions.
inline void swap_tokens(std::vector<std::string>& tokens, double swap_rate, Rng& rng) {
    std::size_t n = tokens.size();
    if (n < 2 || swap_rate <= 0.0) return;
    auto n_swaps = static_cast<std::size_t>(std::ceil(swap_rate * static_cast<double>(n)));
    for (std::size_t s = 0; s < n_swaps; ++s) {
        std::size_t i = uniform_index(rng, n);
        std::size_t j = uniform_index(rng, n - 1);
        if (j >= i) ++j;
        std::swap(tokens[i], tokens[j]);
    }
}

}  // namespace detail

// Weak augmentation: random transpositions of token positions. The token
// multiset is preserved.
inline std::string weak_augment(const std::string& text, const AugmentConfig& cfg, Rng& rng) {
    std::vector<std::string> tokens = tokenize(text);
    detail::swap_tokens(tokens, cfg.swap_rate, rng);
    return detail::join_tokens(tokens);
}

// Strong augmentation: swaps, then per-token deletion (a nonempty text never
// becomes empty), then synonym substitution for tokens present in the
// lexicon.
inline std::string strong_augment(const std::string& text, const SynonymLexicon& lex,
                                  const AugmentConfig& cfg, Rng& rng) {
    std::vector<std::string> tokens = tokenize(text);
    if (tokens.empty()) return "";
    detail::swap_tokens(tokens, cfg.swap_rate, rng);

    std::vector<std::string> kept;
    kept.reserve(tokens.size());
    for (auto& t : tokens) {
        if (uniform_real(rng) >= cfg.delete_rate) kept.push_back(std::move(t));
    }
    if (kept.empty()) {
        kept.push_back(tokens[uniform_index(rng, tokens.size())]);
    }

    for (auto& t : kept) {
        if (uniform_real(rng) < cfg.synonym_rate) {
            auto it = lex.find(t);
            if (it != lex.end() && !it->second.empty()) {
                t = it->second[uniform_index(rng, it->second.size())];
            }
        }
    }
    return detail::join_tokens(kept);
}

// TSV lexicon: word<TAB>syn1,syn2,... One entry per line; '#' lines and
// blank lines are skipped.
inline SynonymLexicon load_lexicon(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("lexicon: cannot open: " + path);
    SynonymLexicon lex;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size()) {
            throw std::runtime_error("lexicon: malformed line " + std::to_string(line_no) +
                                     " in " + path);
        }
        std::string word = line.substr(0, tab);
        for (char& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));

        std::vector<std::string> syns;
        std::stringstream ss(line.substr(tab + 1));
        std::string syn;
        while (std::getline(ss, syn, ',')) {
            for (char& c : syn) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            if (!syn.empty() && syn != word) syns.push_back(syn);
        }
        if (!syns.empty()) {
            auto& entry = lex[word];
            entry.insert(entry.end(), syns.begin(), syns.end());
        }
    }
    return lex;
}

}  // namespace metacal
