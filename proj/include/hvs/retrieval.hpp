#pragma once

// Embedding extraction, cosine nearest-neighbor metrics, open-set metrics,
// the compatibility rule, and the amortized query/gallery cost model.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "hvs/data.hpp"
#include "hvs/model.hpp"
#include "hvs/tensor.hpp"

namespace hvs {

struct EmbeddingIndex {
    Tensor2 embeddings;                  // m x K, unit rows
    std::vector<std::uint32_t> labels;   // m
    std::uint64_t producer = 0;          // fingerprint of the embedding model

    std::size_t size() const { return labels.size(); }
};

inline EmbeddingIndex embed_set(const EmbeddingModel& model, const LabeledDataset& data) {
    if (data.size() > 0 && data.dim() != model.input_dim)
        throw ShapeError("embed_set: input width mismatch");
    EmbeddingIndex index;
    index.embeddings = Tensor2(data.size(), model.embed_dim);
    index.labels = data.labels;
    index.producer = model_fingerprint(model);
    ModelView mv = view_of(model);
    for (std::size_t r = 0; r < data.size(); ++r) {
        std::vector<float> e = view_embed(mv, data.features.row(r), nullptr);
        std::copy(e.begin(), e.end(), index.embeddings.row(r));
    }
    return index;
}

// Fraction of probes whose k nearest gallery rows (cosine similarity, ties
// broken by lower gallery row index) contain the probe's label. k larger than
// the gallery is clamped to the gallery size.
inline double topk_accuracy(const EmbeddingIndex& probe, const EmbeddingIndex& gallery,
                            std::size_t k) {
    if (k < 1) throw ArgumentError("topk_accuracy: k must be >= 1");
    if (gallery.size() == 0) throw ArgumentError("topk_accuracy: empty gallery");
    if (probe.size() == 0) return 0.0;
    k = std::min(k, gallery.size());

    std::size_t hits = 0;
    std::vector<std::size_t> order(gallery.size());
    std::vector<double> sims(gallery.size());
    for (std::size_t p = 0; p < probe.size(); ++p) {
        for (std::size_t g = 0; g < gallery.size(); ++g)
            sims[g] = dot(probe.embeddings.row(p), gallery.embeddings.row(g),
                          probe.embeddings.cols);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k),
                          order.end(), [&sims](std::size_t a, std::size_t b) {
                              if (sims[a] != sims[b]) return sims[a] > sims[b];
                              return a < b;
                          });
        for (std::size_t i = 0; i < k; ++i)
            if (gallery.labels[order[i]] == probe.labels[p]) {
                ++hits;
                break;
            }
    }
    return static_cast<double>(hits) / static_cast<double>(probe.size());
}

namespace detail {

// Smallest threshold t such that the fraction of scores >= t is at most
// target. Candidates are the scores themselves plus the smallest value above
// the maximum score, so a target below 1/n still yields a finite threshold
// that every strictly-larger genuine score can clear. -inf when target >= 1.
inline double quantile_threshold(std::vector<double> scores, double target) {
    if (target >= 1.0) return -std::numeric_limits<double>::infinity();
    std::sort(scores.begin(), scores.end());
    const std::size_t n = scores.size();
    // count(scores >= scores[i]) == n - i after stable handling of ties:
    // scan ascending, pick the first value whose >=-count meets the target.
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0 && scores[i] == scores[i - 1]) continue;
        std::size_t ge = n - i;
        if (static_cast<double>(ge) / static_cast<double>(n) <= target) return scores[i];
    }
    return std::nextafter(scores.back(), std::numeric_limits<double>::infinity());
}

inline double max_similarity(const EmbeddingIndex& gallery, const float* e, std::size_t k,
                             std::size_t* argmax) {
    double best = -std::numeric_limits<double>::infinity();
    std::size_t best_g = 0;
    for (std::size_t g = 0; g < gallery.size(); ++g) {
        double s = dot(e, gallery.embeddings.row(g), k);
        if (s > best) {
            best = s;
            best_g = g;
        }
    }
    if (argmax) *argmax = best_g;
    return best;
}

}  // namespace detail

// Open-set 1:N identification. Per-probe score is the max gallery similarity;
// the threshold is the empirical non-mated quantile at fpir_target; a mated
// probe counts when its score passes the threshold and its rank-1 identity is
// correct.
inline double tpir_at_fpir(const EmbeddingIndex& mated, const EmbeddingIndex& nonmated,
                           const EmbeddingIndex& gallery, double fpir_target) {
    if (mated.size() == 0 || nonmated.size() == 0 || gallery.size() == 0)
        throw ArgumentError("tpir_at_fpir: empty input");
    if (!(fpir_target > 0.0) || fpir_target > 1.0)
        throw ArgumentError("tpir_at_fpir: fpir_target must be in (0,1]");
    const std::size_t K = gallery.embeddings.cols;

    std::vector<double> nonmated_scores(nonmated.size());
    for (std::size_t p = 0; p < nonmated.size(); ++p)
        nonmated_scores[p] =
            detail::max_similarity(gallery, nonmated.embeddings.row(p), K, nullptr);
    double threshold = detail::quantile_threshold(nonmated_scores, fpir_target);

    std::size_t hits = 0;
    for (std::size_t p = 0; p < mated.size(); ++p) {
        std::size_t rank1 = 0;
        double score = detail::max_similarity(gallery, mated.embeddings.row(p), K, &rank1);
        if (score >= threshold && gallery.labels[rank1] == mated.labels[p]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(mated.size());
}

// 1:1 verification: TAR at the impostor-quantile threshold.
inline double tar_at_far(const std::vector<double>& genuine_scores,
                         const std::vector<double>& impostor_scores, double far_target) {
    if (genuine_scores.empty() || impostor_scores.empty())
        throw ArgumentError("tar_at_far: empty score list");
    if (!(far_target > 0.0) || far_target > 1.0)
        throw ArgumentError("tar_at_far: far_target must be in (0,1]");
    double threshold = detail::quantile_threshold(impostor_scores, far_target);
    std::size_t hits = 0;
    for (double s : genuine_scores)
        if (s >= threshold) ++hits;
    return static_cast<double>(hits) / static_cast<double>(genuine_scores.size());
}

inline bool check_compatibility(double m_qg, double m_qq) { return m_qg > m_qq; }

// Amortized per-image embedding cost at query-to-gallery ratio r:
// C(r) = (F_g + r F_q) / (1 + r). C(0) is the gallery (paragon) cost and the
// asymptote is the query cost.
inline double amortized_cost(double gallery_flops, double query_flops, double ratio) {
    if (ratio < 0.0) throw ArgumentError("amortized_cost: ratio must be >= 0");
    return (gallery_flops + ratio * query_flops) / (1.0 + ratio);
}

struct EvalReport {
    std::string metric_name;
    double m_qq = 0.0;
    double m_qg = 0.0;
    double m_gg = 0.0;
    bool compatible = false;
    std::size_t query_flops = 0;
    std::size_t gallery_flops = 0;
};

// Pairwise verification scores between probe and gallery indexes: genuine for
// matching labels, impostor otherwise.
inline void verification_scores(const EmbeddingIndex& probe, const EmbeddingIndex& gallery,
                                std::vector<double>& genuine, std::vector<double>& impostor) {
    const std::size_t K = probe.embeddings.cols;
    for (std::size_t p = 0; p < probe.size(); ++p)
        for (std::size_t g = 0; g < gallery.size(); ++g) {
            double s = dot(probe.embeddings.row(p), gallery.embeddings.row(g), K);
            (probe.labels[p] == gallery.labels[g] ? genuine : impostor).push_back(s);
        }
}

}  // namespace hvs
