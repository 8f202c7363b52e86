#pragma once

// Brute-force reference implementations used to check the retrieval module.
// They are written straight from the scoring definitions and share no code
// with the library beyond the tokenizer.

#include <csicl/retrieval/retrieval.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace csicl::oracle {

/// Full ranking under "higher score first, lower index on ties", cut to k.
inline std::vector<std::size_t> rank(const std::vector<double>& scores, std::size_t k) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    order.resize(std::min(k, order.size()));
    return order;
}

/// Okapi BM25 by direct evaluation, rank_bm25 conventions:
///   idf(t) = ln((N - n_t + 0.5) / (n_t + 0.5)), negatives replaced by
///   max(0, eps * mean idf over corpus terms)
///   score(d) = sum over query tokens of idf * tf (k1 + 1) / (tf + k1 (1 - b + b |d| / avgdl))
inline std::vector<double> bm25_scores(const std::vector<std::string>& docs, const std::string& query, double k1 = 1.5,
                                       double b = 0.75, double eps = 0.25) {
    std::vector<std::vector<std::string>> toks;
    for (const auto& d : docs) toks.push_back(retrieval::tokenize(d));
    const double N = static_cast<double>(docs.size());
    double total_len = 0;
    for (const auto& t : toks) total_len += static_cast<double>(t.size());
    const double avgdl = total_len / N;

    std::map<std::string, double> idf;
    for (const auto& t : toks) {
        for (const auto& w : t) idf[w] = 0;  // collect vocabulary
    }
    double sum = 0;
    for (auto& [w, v] : idf) {
        double n = 0;
        for (const auto& t : toks) n += std::find(t.begin(), t.end(), w) != t.end() ? 1 : 0;
        v = std::log((N - n + 0.5) / (n + 0.5));
        sum += v;
    }
    const double floor = std::max(0.0, eps * (idf.empty() ? 0.0 : sum / static_cast<double>(idf.size())));
    for (auto& [w, v] : idf) {
        if (v < 0) v = floor;
    }

    std::vector<double> out(docs.size(), 0.0);
    for (const auto& q : retrieval::tokenize(query)) {
        const double w = idf.count(q) ? idf[q] : 0.0;
        for (std::size_t d = 0; d < docs.size(); ++d) {
            const double tf = static_cast<double>(std::count(toks[d].begin(), toks[d].end(), q));
            if (tf == 0) continue;
            const double len = static_cast<double>(toks[d].size());
            out[d] += w * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len / avgdl));
        }
    }
    return out;
}

inline std::vector<double> cosine_scores(const std::vector<std::vector<double>>& rows, const std::vector<double>& q) {
    auto unit = [](const std::vector<double>& v) {
        double n = 0;
        for (double x : v) n += x * x;
        n = std::sqrt(n);
        std::vector<double> u;
        for (double x : v) u.push_back(x / n);
        return u;
    };
    const auto qu = unit(q);
    std::vector<double> out;
    for (const auto& r : rows) {
        const auto ru = unit(r);
        double dot = 0;
        for (std::size_t i = 0; i < ru.size(); ++i) dot += ru[i] * qu[i];
        out.push_back(dot);
    }
    return out;
}

/// One greedy step trace: at each step evaluate f(S + d) - f(S) for every
/// unselected d, where f(S) = sum over query units of max_{s in S} sim.
struct GreedyTrace {
    std::vector<std::size_t> picks;
    std::vector<double> gains;
    std::vector<double> coverage;
};

inline GreedyTrace set_coverage(const std::vector<std::vector<double>>& unit_best /* [doc][query unit] */,
                                std::size_t k) {
    const std::size_t n_docs = unit_best.size();
    auto f = [&](const std::vector<std::size_t>& S) {
        if (S.empty() || unit_best.empty()) return 0.0;
        double total = 0;
        for (std::size_t i = 0; i < unit_best.front().size(); ++i) {
            double m = 0;
            for (auto d : S) m = std::max(m, unit_best[d][i]);
            total += m;
        }
        return total;
    };
    GreedyTrace t;
    for (std::size_t step = 0; step < std::min(k, n_docs); ++step) {
        const double base = f(t.picks);
        std::size_t best = n_docs;
        double best_gain = -1;
        for (std::size_t d = 0; d < n_docs; ++d) {
            if (std::find(t.picks.begin(), t.picks.end(), d) != t.picks.end()) continue;
            auto S = t.picks;
            S.push_back(d);
            const double gain = f(S) - base;
            if (gain > best_gain) {
                best_gain = gain;
                best = d;
            }
        }
        t.picks.push_back(best);
        t.gains.push_back(best_gain);
        t.coverage.push_back(f(t.picks));
    }
    return t;
}

// ---- random instances -------------------------------------------------

struct Bm25Instance {
    std::vector<std::string> docs;
    std::string query;
    std::size_t k;
};

inline Bm25Instance random_bm25_instance(std::mt19937_64& rng) {
    auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
    const std::size_t vocab = pick(2, 30);
    auto word = [&] { return "w" + std::to_string(pick(0, vocab - 1)); };
    Bm25Instance in;
    const std::size_t n_docs = pick(1, 20);
    for (std::size_t d = 0; d < n_docs; ++d) {
        if (d > 0 && pick(0, 5) == 0) {  // duplicate to exercise the tie rule
            in.docs.push_back(in.docs[pick(0, d - 1)]);
            continue;
        }
        std::string doc;
        const std::size_t len = pick(0, 12);
        for (std::size_t i = 0; i < len; ++i) doc += (i ? (pick(0, 3) ? " " : ", ") : "") + word();
        if (pick(0, 4) == 0) std::transform(doc.begin(), doc.end(), doc.begin(), ::toupper);
        in.docs.push_back(doc);
    }
    const std::size_t qlen = pick(0, 5);
    for (std::size_t i = 0; i < qlen; ++i) in.query += (i ? " " : "") + (pick(0, 6) ? word() : std::string("zz"));
    in.k = pick(1, 24);
    return in;
}

struct CosineInstance {
    std::vector<std::vector<double>> rows;
    std::vector<double> query;
    std::size_t k;
};

inline CosineInstance random_cosine_instance(std::mt19937_64& rng) {
    auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    CosineInstance in;
    const int dim = pick(1, 16);
    const int n = pick(1, 20);
    auto vec = [&] {
        std::vector<double> v(static_cast<std::size_t>(dim));
        do {
            for (auto& x : v) x = pick(-4, 4);
        } while (std::all_of(v.begin(), v.end(), [](double x) { return x == 0; }));
        return v;
    };
    for (int r = 0; r < n; ++r) {
        if (r > 0 && pick(0, 4) == 0) {  // scaled duplicate: equal cosine, tie rule decides
            auto v = in.rows[static_cast<std::size_t>(pick(0, r - 1))];
            for (auto& x : v) x *= 2;
            in.rows.push_back(v);
        } else {
            in.rows.push_back(vec());
        }
    }
    in.query = vec();
    in.k = static_cast<std::size_t>(pick(1, 24));
    return in;
}

/// Set-coverage instance over synthetic unit names with similarity values on
/// a 1/8 grid, so every sum is exact and ties are real ties.
struct CoverageInstance {
    std::vector<std::string> docs;
    std::string query;
    std::map<std::pair<std::string, std::string>, double> sim;
    std::size_t k;

    retrieval::PairwiseSimilarity kernel() const {
        return [this](std::span<const std::string> q, std::span<const std::string> d) {
            retrieval::SimilarityMatrix m(q.size(), std::vector<double>(d.size(), 0.0));
            for (std::size_t i = 0; i < q.size(); ++i) {
                for (std::size_t j = 0; j < d.size(); ++j) {
                    auto it = sim.find({q[i], d[j]});
                    m[i][j] = it == sim.end() ? 0.0 : it->second;
                }
            }
            return m;
        };
    }

    /// unit_best[d][i] evaluated independently from the kernel table.
    std::vector<std::vector<double>> unit_best() const {
        const auto q = retrieval::tokenize(query);
        std::vector<std::vector<double>> out;
        for (const auto& doc : docs) {
            const auto du = retrieval::tokenize(doc);
            std::vector<double> row(q.size(), 0.0);
            for (std::size_t i = 0; i < q.size(); ++i) {
                for (const auto& u : du) {
                    auto it = sim.find({q[i], u});
                    if (it != sim.end()) row[i] = std::max(row[i], it->second);
                }
            }
            out.push_back(row);
        }
        return out;
    }
};

inline CoverageInstance random_coverage_instance(std::mt19937_64& rng) {
    auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    CoverageInstance in;
    const int q_units = pick(1, 8);
    const int d_vocab = pick(2, 12);
    for (int i = 0; i < q_units; ++i) in.query += (i ? " " : "") + ("q" + std::to_string(i));
    for (int i = 0; i < q_units; ++i) {
        for (int j = 0; j < d_vocab; ++j) {
            if (pick(0, 2) == 0) in.sim[{"q" + std::to_string(i), "u" + std::to_string(j)}] = pick(0, 8) / 8.0;
        }
    }
    const int n_docs = pick(1, 12);
    for (int d = 0; d < n_docs; ++d) {
        std::string doc;
        const int len = pick(0, 4);
        for (int i = 0; i < len; ++i) doc += (i ? " " : "") + ("u" + std::to_string(pick(0, d_vocab - 1)));
        in.docs.push_back(doc);
    }
    in.k = static_cast<std::size_t>(pick(1, 14));
    return in;
}

} // namespace csicl::oracle
