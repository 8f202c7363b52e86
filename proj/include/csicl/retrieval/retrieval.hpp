#pragma once

#include <csicl/error.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace csicl::retrieval {

enum class Method { bm25, cosine, set_coverage };

inline std::string_view to_string(Method m) {
    switch (m) {
    case Method::bm25: return "bm25";
    case Method::cosine: return "cosine";
    case Method::set_coverage: return "set_coverage";
    }
    return "bm25";
}

inline Method method_from_string(std::string_view s) {
    if (s == "bm25") return Method::bm25;
    if (s == "cosine") return Method::cosine;
    if (s == "set_coverage") return Method::set_coverage;
    throw DataError("unknown retrieval method \"" + std::string(s) + "\"");
}

inline constexpr std::size_t kDefaultK = 8;

struct RetrievalResult {
    std::vector<std::size_t> demo_indices;
    std::vector<double> scores;
    Method method = Method::bm25;
    std::size_t k = kDefaultK;
};

/// Lowercases ASCII and splits on runs of non-alphanumeric bytes. Bytes >= 0x80
/// count as alphanumeric so UTF-8 words stay whole. No stemming.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        const bool alnum = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
        if (alnum) {
            cur.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c + 32) : ch);
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

namespace detail {

/// Indices of the k largest scores; ties go to the lower index.
inline std::vector<std::size_t> top_k(std::span<const double> scores, std::size_t k) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    k = std::min(k, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](std::size_t a, std::size_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); });
    idx.resize(k);
    return idx;
}

inline RetrievalResult make_result(std::span<const double> scores, std::size_t k, Method m) {
    RetrievalResult r;
    r.method = m;
    r.k = k;
    r.demo_indices = top_k(scores, k);
    for (auto i : r.demo_indices) r.scores.push_back(scores[i]);
    return r;
}

} // namespace detail

struct Bm25Params {
    double k1 = 1.5;
    double b = 0.75;
    /// Negative IDFs are replaced by epsilon * mean IDF (floored at 0).
    double epsilon = 0.25;
};

/// Okapi BM25 over a fixed corpus. Immutable after build.
class Bm25Index {
public:
    static constexpr int kSnapshotVersion = 1;
    static constexpr std::string_view kTokenizerId = "lower-alnum-v1";

    static Bm25Index build(std::span<const std::string> docs, Bm25Params params = {}) {
        if (docs.empty()) throw PreconditionError("BM25 index needs at least one document");
        if (!(params.k1 > 0) || !(params.b > 0) || params.epsilon < 0) {
            throw PreconditionError("BM25 parameters must be positive");
        }
        Bm25Index idx;
        idx.params_ = params;
        idx.term_freqs_.reserve(docs.size());
        for (const auto& d : docs) {
            std::map<std::string, std::uint32_t> tf;
            const auto toks = tokenize(d);
            for (const auto& t : toks) ++tf[t];
            idx.doc_lengths_.push_back(toks.size());
            idx.term_freqs_.push_back(std::move(tf));
        }
        idx.finalize();
        return idx;
    }

    /// Okapi IDF: ln((N - n + 0.5) / (n + 0.5)), negatives floored as described in Bm25Params.
    double idf(const std::string& term) const {
        auto it = idf_.find(term);
        return it == idf_.end() ? 0.0 : it->second;
    }

    /// Contribution of one query term to one document.
    static double term_score(double idf, double tf, double doc_len, double avgdl, const Bm25Params& p) {
        if (tf == 0.0) return 0.0;
        const double norm = avgdl > 0 ? doc_len / avgdl : 0.0;
        return idf * tf * (p.k1 + 1.0) / (tf + p.k1 * (1.0 - p.b + p.b * norm));
    }

    /// Score of every document for `query`. Repeated query terms count repeatedly.
    std::vector<double> scores(std::string_view query) const {
        std::vector<double> out(term_freqs_.size(), 0.0);
        for (const auto& q : tokenize(query)) {
            const double w = idf(q);
            for (std::size_t d = 0; d < term_freqs_.size(); ++d) {
                auto it = term_freqs_[d].find(q);
                if (it == term_freqs_[d].end()) continue;
                out[d] += term_score(w, it->second, static_cast<double>(doc_lengths_[d]), avgdl_, params_);
            }
        }
        return out;
    }

    std::size_t size() const noexcept { return term_freqs_.size(); }
    double average_length() const noexcept { return avgdl_; }
    const std::vector<std::size_t>& doc_lengths() const noexcept { return doc_lengths_; }
    const Bm25Params& params() const noexcept { return params_; }
    const std::map<std::string, double>& idf_table() const noexcept { return idf_; }

    nlohmann::json to_json() const {
        nlohmann::json docs = nlohmann::json::array();
        for (const auto& tf : term_freqs_) docs.push_back(tf);
        return {{"version", kSnapshotVersion},
                {"tokenizer", kTokenizerId},
                {"k1", params_.k1},
                {"b", params_.b},
                {"epsilon", params_.epsilon},
                {"term_freqs", docs}};
    }

    static Bm25Index from_json(const nlohmann::json& j) {
        if (j.value("version", 0) != kSnapshotVersion || j.value("tokenizer", std::string{}) != kTokenizerId) {
            throw DataError("BM25 snapshot has an unsupported version or tokenizer");
        }
        Bm25Index idx;
        idx.params_ = {j.at("k1").get<double>(), j.at("b").get<double>(), j.at("epsilon").get<double>()};
        for (const auto& d : j.at("term_freqs")) {
            auto tf = d.get<std::map<std::string, std::uint32_t>>();
            std::size_t len = 0;
            for (const auto& [_, c] : tf) len += c;
            idx.doc_lengths_.push_back(len);
            idx.term_freqs_.push_back(std::move(tf));
        }
        if (idx.term_freqs_.empty()) throw DataError("BM25 snapshot holds no documents");
        idx.finalize();
        return idx;
    }

private:
    void finalize() {
        const double n_docs = static_cast<double>(term_freqs_.size());
        avgdl_ = static_cast<double>(std::accumulate(doc_lengths_.begin(), doc_lengths_.end(), std::size_t{0})) / n_docs;
        std::map<std::string, std::size_t> df;
        for (const auto& tf : term_freqs_) {
            for (const auto& [t, _] : tf) ++df[t];
        }
        double idf_sum = 0.0;
        std::vector<std::string> negative;
        for (const auto& [t, n] : df) {
            const double v = std::log((n_docs - static_cast<double>(n) + 0.5) / (static_cast<double>(n) + 0.5));
            idf_[t] = v;
            idf_sum += v;
            if (v < 0) negative.push_back(t);
        }
        const double avg_idf = df.empty() ? 0.0 : idf_sum / static_cast<double>(df.size());
        const double floor = std::max(0.0, params_.epsilon * avg_idf);
        for (const auto& t : negative) idf_[t] = floor;
    }

    Bm25Params params_;
    std::vector<std::map<std::string, std::uint32_t>> term_freqs_;
    std::vector<std::size_t> doc_lengths_;
    std::map<std::string, double> idf_;
    double avgdl_ = 0.0;
};

inline Bm25Index build_bm25(std::span<const std::string> docs, Bm25Params params = {}) {
    return Bm25Index::build(docs, params);
}

/// Top-k documents by BM25 score. An empty query scores everything 0, so the
/// tie rule returns indices 0..k-1.
inline RetrievalResult bm25_topk(const Bm25Index& index, std::string_view query, std::size_t k) {
    if (k < 1) throw PreconditionError("k must be >= 1");
    const auto s = index.scores(query);
    return detail::make_result(s, k, Method::bm25);
}

/// Rows are unit-normalized at build time.
class EmbeddingIndex {
public:
    static EmbeddingIndex build(const std::vector<std::vector<double>>& vectors) {
        if (vectors.empty()) throw PreconditionError("embedding index needs at least one vector");
        EmbeddingIndex idx;
        idx.dim_ = vectors.front().size();
        if (idx.dim_ == 0) throw PreconditionError("embedding dimension must be > 0");
        for (std::size_t r = 0; r < vectors.size(); ++r) {
            if (vectors[r].size() != idx.dim_) {
                throw PreconditionError("embedding row " + std::to_string(r) + " has dimension " +
                                        std::to_string(vectors[r].size()) + ", expected " + std::to_string(idx.dim_));
            }
            idx.rows_.push_back(normalized(vectors[r], "row " + std::to_string(r)));
        }
        return idx;
    }

    static std::vector<double> normalized(std::span<const double> v, const std::string& what) {
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (!(norm > 0.0) || !std::isfinite(norm)) throw PreconditionError(what + " has zero or non-finite norm");
        std::vector<double> out(v.begin(), v.end());
        for (double& x : out) x /= norm;
        return out;
    }

    std::size_t dimension() const noexcept { return dim_; }
    std::size_t size() const noexcept { return rows_.size(); }
    const std::vector<double>& row(std::size_t i) const { return rows_.at(i); }

private:
    std::size_t dim_ = 0;
    std::vector<std::vector<double>> rows_;
};

inline RetrievalResult cosine_topk(const EmbeddingIndex& index, std::span<const double> query, std::size_t k) {
    if (k < 1) throw PreconditionError("k must be >= 1");
    if (query.size() != index.dimension()) {
        throw PreconditionError("query dimension " + std::to_string(query.size()) + " does not match index dimension " +
                                std::to_string(index.dimension()));
    }
    const auto q = EmbeddingIndex::normalized(query, "query vector");
    std::vector<double> s(index.size());
    for (std::size_t r = 0; r < index.size(); ++r) {
        const auto& row = index.row(r);
        s[r] = std::inner_product(row.begin(), row.end(), q.begin(), 0.0);
    }
    return detail::make_result(s, k, Method::cosine);
}

/// sim[i][j] = similarity of query unit i to document unit j.
using SimilarityMatrix = std::vector<std::vector<double>>;
using PairwiseSimilarity =
    std::function<SimilarityMatrix(std::span<const std::string> query_units, std::span<const std::string> doc_units)>;

/// Dice coefficient over character bigrams (1.0 for identical units). Stands in
/// for contextual token-embedding similarity.
inline double bigram_dice(std::string_view a, std::string_view b) {
    if (a == b) return 1.0;
    if (a.size() < 2 || b.size() < 2) return 0.0;
    std::map<std::string_view, int> grams;
    for (std::size_t i = 0; i + 1 < a.size(); ++i) ++grams[a.substr(i, 2)];
    int shared = 0;
    for (std::size_t i = 0; i + 1 < b.size(); ++i) {
        auto it = grams.find(b.substr(i, 2));
        if (it != grams.end() && it->second > 0) {
            --it->second;
            ++shared;
        }
    }
    return 2.0 * shared / static_cast<double>((a.size() - 1) + (b.size() - 1));
}

inline SimilarityMatrix bigram_similarity(std::span<const std::string> q, std::span<const std::string> d) {
    SimilarityMatrix m(q.size(), std::vector<double>(d.size(), 0.0));
    for (std::size_t i = 0; i < q.size(); ++i) {
        for (std::size_t j = 0; j < d.size(); ++j) m[i][j] = bigram_dice(q[i], d[j]);
    }
    return m;
}

struct SetCoverageResult {
    RetrievalResult result;
    /// Total coverage after each selection step.
    std::vector<double> coverage;
};

/// Greedy coverage of query units. A unit's coverage is the best similarity
/// any selected document reaches for it; each step adds the document with the
/// largest gain in summed coverage, ties to the lower index. scores[i] is the
/// gain of the i-th pick.
inline SetCoverageResult set_coverage_select(std::span<const std::string> pool_items, std::string_view query,
                                             std::size_t k, const PairwiseSimilarity& pairwise_sim = bigram_similarity) {
    if (pool_items.empty()) throw PreconditionError("set coverage needs a nonempty pool");
    if (k < 1) throw PreconditionError("k must be >= 1");
    const auto q_units = tokenize(query);
    // best[d][i]: how well document d alone covers query unit i.
    std::vector<std::vector<double>> best(pool_items.size(), std::vector<double>(q_units.size(), 0.0));
    for (std::size_t d = 0; d < pool_items.size(); ++d) {
        const auto d_units = tokenize(pool_items[d]);
        if (q_units.empty() || d_units.empty()) continue;
        const auto m = pairwise_sim(q_units, d_units);
        for (std::size_t i = 0; i < q_units.size(); ++i) {
            for (double v : m.at(i)) best[d][i] = std::max(best[d][i], v);
        }
    }
    SetCoverageResult out;
    out.result.method = Method::set_coverage;
    out.result.k = k;
    std::vector<double> covered(q_units.size(), 0.0);
    std::vector<bool> taken(pool_items.size(), false);
    double total = 0.0;
    const std::size_t picks = std::min(k, pool_items.size());
    for (std::size_t step = 0; step < picks; ++step) {
        std::size_t arg = pool_items.size();
        double arg_gain = -1.0;
        for (std::size_t d = 0; d < pool_items.size(); ++d) {
            if (taken[d]) continue;
            double gain = 0.0;
            for (std::size_t i = 0; i < q_units.size(); ++i) gain += std::max(0.0, best[d][i] - covered[i]);
            if (gain > arg_gain) {
                arg_gain = gain;
                arg = d;
            }
        }
        taken[arg] = true;
        for (std::size_t i = 0; i < q_units.size(); ++i) covered[i] = std::max(covered[i], best[arg][i]);
        total += arg_gain;
        out.result.demo_indices.push_back(arg);
        out.result.scores.push_back(arg_gain);
        out.coverage.push_back(total);
    }
    return out;
}

inline RetrievalResult set_coverage_topk(std::span<const std::string> pool_items, std::string_view query, std::size_t k,
                                         const PairwiseSimilarity& pairwise_sim = bigram_similarity) {
    return set_coverage_select(pool_items, query, k, pairwise_sim).result;
}

} // namespace csicl::retrieval
