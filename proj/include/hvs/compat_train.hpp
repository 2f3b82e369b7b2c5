#pragma once

// Training orchestration: gallery training, the four query-training methods
// (vanilla, knowledge distillation, fine-tune, BCT), and pruning-derived
// query architectures.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "hvs/model.hpp"
#include "hvs/retrieval.hpp"
#include "hvs/train.hpp"

namespace hvs {

enum class TrainMethod { Vanilla, Kd, Finetune, Bct };

inline TrainMethod method_from_string(const std::string& s) {
    if (s == "vanilla") return TrainMethod::Vanilla;
    if (s == "kd") return TrainMethod::Kd;
    if (s == "finetune") return TrainMethod::Finetune;
    if (s == "bct") return TrainMethod::Bct;
    throw ArgumentError("unknown training method: " + s);
}

inline std::string to_string(TrainMethod m) {
    switch (m) {
        case TrainMethod::Vanilla: return "vanilla";
        case TrainMethod::Kd: return "kd";
        case TrainMethod::Finetune: return "finetune";
        default: return "bct";
    }
}

struct TrainRecipe {
    TrainMethod method = TrainMethod::Vanilla;
    LossKind loss = LossKind::CosFace;
    CompositeWeights weights{1.0f, 1.0f};
    float kd_temperature = 4.0f;
    TrainOptions opts;
};

struct TrainedEmbedding {
    EmbeddingModel model;
    Classifier classifier;
    std::vector<EpochStat> stats;
};

inline TrainedEmbedding train_gallery(const LabeledDataset& train,
                                      const std::vector<std::size_t>& hidden_widths,
                                      std::size_t embed_dim, const TrainRecipe& recipe) {
    if (recipe.method != TrainMethod::Vanilla)
        throw ConfigError("train_gallery: gallery training is always vanilla");
    Rng init_rng(recipe.opts.seed ^ 0xa5a5a5a5a5a5a5a5ull);
    TrainedEmbedding out;
    out.model = make_embedding_model(train.dim(), hidden_widths, embed_dim,
                                     BlockKind::LinearRelu, init_rng);
    out.classifier = make_classifier(train.class_count, embed_dim, init_rng);
    LossKind loss = recipe.loss;
    Classifier& kq = out.classifier;
    out.stats = train_embedding_model(
        out.model, kq, train, recipe.opts,
        [&](const std::vector<float>& e, std::uint32_t label, std::size_t,
            std::vector<float>& d_emb, Tensor2& d_cls) {
            LossResult r = base_loss(loss, e, kq, label);
            d_emb = std::move(r.d_embedding);
            for (std::size_t i = 0; i < d_cls.data.size(); ++i)
                d_cls.data[i] += r.d_prototypes.data[i];
            return r.loss;
        });
    return out;
}

// ---------------------------------------------------------------------------
// Pruning

enum class PruneMethod { Magnitude, Activation };

inline PruneMethod prune_method_from_string(const std::string& s) {
    if (s == "magnitude") return PruneMethod::Magnitude;
    if (s == "activation") return PruneMethod::Activation;
    throw ArgumentError("unknown prune method: " + s);
}

struct PruneSpec {
    PruneMethod method = PruneMethod::Magnitude;
    double fraction = 0.9;

    void validate() const {
        if (fraction < 0.0 || fraction >= 1.0)
            throw ArgumentError("prune: fraction must be in [0,1)");
    }
};

namespace detail {

// Score of each unit in hidden block `bi` of a single-dense-block model.
// Magnitude: L1 norm of the unit's outgoing weights (the matching column of
// the next dense stage). Activation: mean |output| over the calibration batch.
inline std::vector<double> prune_scores(const EmbeddingModel& m, std::size_t bi,
                                        PruneMethod method, const Tensor2& calibration) {
    const std::size_t width = m.blocks[bi].out_dim();
    std::vector<double> scores(width, 0.0);
    if (method == PruneMethod::Magnitude) {
        const Tensor2& next =
            bi + 1 < m.blocks.size() ? m.blocks[bi + 1].l1.weight : m.head.weight;
        for (std::size_t u = 0; u < width; ++u)
            for (std::size_t r = 0; r < next.rows; ++r)
                scores[u] += std::abs(next.at(r, u));
    } else {
        if (calibration.rows == 0)
            throw ArgumentError("prune: activation criterion needs a calibration batch");
        std::vector<float> cur, next_buf;
        for (std::size_t s = 0; s < calibration.rows; ++s) {
            cur.assign(calibration.row(s), calibration.row(s) + calibration.cols);
            for (std::size_t b = 0; b <= bi; ++b) {
                next_buf.resize(m.blocks[b].out_dim());
                block_forward(view_of(m).blocks[b], cur.data(), nullptr, next_buf.data());
                cur = next_buf;
            }
            for (std::size_t u = 0; u < width; ++u) scores[u] += std::abs(cur[u]);
        }
        for (double& v : scores) v /= static_cast<double>(calibration.rows);
    }
    return scores;
}

inline std::vector<std::size_t> top_units(const std::vector<double>& scores,
                                          std::size_t keep) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&scores](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;  // deterministic tie-break
    });
    order.resize(keep);
    std::sort(order.begin(), order.end());  // preserve original unit order
    return order;
}

}  // namespace detail

// Structured pruning of every hidden block; the embedding head keeps its
// output dimension. Returns the smaller model with inherited weight slices.
inline EmbeddingModel prune_model(const EmbeddingModel& gallery, const PruneSpec& spec,
                                  const Tensor2& calibration) {
    spec.validate();
    for (const Block& b : gallery.blocks)
        if (b.kind == BlockKind::Bottleneck)
            throw ConfigError("prune: bottleneck blocks are not prunable");

    EmbeddingModel pruned = gallery;
    for (std::size_t bi = 0; bi < pruned.blocks.size(); ++bi) {
        const std::size_t width = pruned.blocks[bi].out_dim();
        const std::size_t keep = width - static_cast<std::size_t>(std::llround(
                                             spec.fraction * static_cast<double>(width)));
        if (keep < 1) throw ConfigError("prune: fraction leaves no units in a layer");
        // score against the original model, slice the working copy
        std::vector<double> scores = detail::prune_scores(gallery, bi, spec.method, calibration);
        std::vector<std::size_t> kept = detail::top_units(scores, keep);

        DenseLayer& layer = pruned.blocks[bi].l1;
        DenseLayer sliced;
        sliced.activation = layer.activation;
        sliced.weight = Tensor2(keep, layer.in_dim());
        sliced.bias.resize(keep);
        for (std::size_t i = 0; i < keep; ++i) {
            std::copy(layer.weight.row(kept[i]), layer.weight.row(kept[i]) + layer.in_dim(),
                      sliced.weight.row(i));
            sliced.bias[i] = layer.bias[kept[i]];
        }
        pruned.blocks[bi].l1 = std::move(sliced);

        DenseLayer& next =
            bi + 1 < pruned.blocks.size() ? pruned.blocks[bi + 1].l1 : pruned.head;
        DenseLayer next_sliced;
        next_sliced.activation = next.activation;
        next_sliced.weight = Tensor2(next.out_dim(), keep);
        next_sliced.bias = next.bias;
        for (std::size_t r = 0; r < next.out_dim(); ++r)
            for (std::size_t i = 0; i < keep; ++i)
                next_sliced.weight.at(r, i) = next.weight.at(r, kept[i]);
        next = std::move(next_sliced);
    }
    return pruned;
}

// ---------------------------------------------------------------------------
// Query training

// Trains a query embedding model starting from `init_model` with one of the
// four methods. The gallery checkpoint (model + classifier) is required for
// kd, finetune and bct and is never modified.
inline TrainedEmbedding train_query(const LabeledDataset& train,
                                    const EmbeddingModel& init_model,
                                    const TrainRecipe& recipe,
                                    const EmbeddingModel* gallery_model,
                                    const Classifier* gallery_classifier) {
    const bool needs_gallery = recipe.method != TrainMethod::Vanilla;
    if (needs_gallery && (gallery_model == nullptr || gallery_classifier == nullptr))
        throw ConfigError("train_query: method " + to_string(recipe.method) +
                          " requires a gallery checkpoint");
    if (recipe.method == TrainMethod::Bct || recipe.method == TrainMethod::Kd) {
        if (gallery_classifier->num_classes() != train.class_count)
            throw ConfigError("train_query: gallery classifier label space mismatch");
    }
    recipe.weights.validate();

    TrainedEmbedding out;
    out.model = init_model;
    Rng init_rng(recipe.opts.seed ^ 0x5bd1e995u);
    if (recipe.method == TrainMethod::Finetune) {
        if (init_model.embed_dim != gallery_model->embed_dim)
            throw ConfigError("train_query: finetune embedding dimension mismatch");
        out.classifier = *gallery_classifier;  // kappa_q initialized from kappa_g
    } else {
        out.classifier = make_classifier(train.class_count, init_model.embed_dim, init_rng);
    }

    // Teacher logits for distillation, cached once over the raw features.
    std::vector<std::vector<float>> teacher_logits;
    if (recipe.method == TrainMethod::Kd) {
        teacher_logits.resize(train.size());
        for (std::size_t r = 0; r < train.size(); ++r) {
            std::vector<float> eg = embed(*gallery_model, train.features.row(r));
            teacher_logits[r] = classifier_logits(*gallery_classifier, eg, recipe.loss);
        }
    }

    Classifier& kq = out.classifier;
    const TrainRecipe& rc = recipe;
    SampleObjective objective = [&, gallery_classifier](const std::vector<float>& e,
                                                        std::uint32_t label, std::size_t row,
                                                        std::vector<float>& d_emb,
                                                        Tensor2& d_cls) -> float {
        switch (rc.method) {
            case TrainMethod::Vanilla:
            case TrainMethod::Finetune: {
                // the lambda2 = 0 instantiations of the composite objective
                LossResult r = base_loss(rc.loss, e, kq, label);
                d_emb = std::move(r.d_embedding);
                for (float& g : d_emb) g *= rc.weights.lambda1;
                for (std::size_t i = 0; i < d_cls.data.size(); ++i)
                    d_cls.data[i] += rc.weights.lambda1 * r.d_prototypes.data[i];
                return rc.weights.lambda1 * r.loss;
            }
            case TrainMethod::Bct: {
                CompositeResult r = bct_composite_loss(e, kq, *gallery_classifier, label,
                                                       rc.weights, rc.loss);
                d_emb = std::move(r.d_embedding);
                for (std::size_t i = 0; i < d_cls.data.size(); ++i)
                    d_cls.data[i] += r.d_new_prototypes.data[i];
                return r.loss;
            }
            case TrainMethod::Kd:
            default: {
                LossResult base = base_loss(rc.loss, e, kq, label);
                std::vector<float> student = classifier_logits(kq, e, rc.loss);
                KdResult kd = kd_loss(student, teacher_logits[row], rc.kd_temperature);
                for (float& g : kd.d_student) g *= rc.weights.lambda2;
                LossResult kd_back = backprop_classifier_logits(kq, e, rc.loss, kd.d_student);
                d_emb.assign(e.size(), 0.0f);
                for (std::size_t k = 0; k < e.size(); ++k)
                    d_emb[k] = rc.weights.lambda1 * base.d_embedding[k] +
                               kd_back.d_embedding[k];
                for (std::size_t i = 0; i < d_cls.data.size(); ++i)
                    d_cls.data[i] += rc.weights.lambda1 * base.d_prototypes.data[i] +
                                     kd_back.d_prototypes.data[i];
                return rc.weights.lambda1 * base.loss + rc.weights.lambda2 * kd.loss;
            }
        }
    };

    out.stats = train_embedding_model(out.model, kq, train, recipe.opts, objective);
    return out;
}

// ---------------------------------------------------------------------------
// Gallery checkpoint I/O

inline void save_trained(const TrainedEmbedding& t, const std::string& path) {
    Checkpoint ckpt;
    put_model(ckpt, "model/", t.model);
    put_classifier(ckpt, "classifier/", t.classifier);
    save_checkpoint(ckpt, path);
}

inline TrainedEmbedding load_trained(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    TrainedEmbedding t;
    t.model = get_model(ckpt, "model/");
    t.classifier = get_classifier(ckpt, "classifier/");
    return t;
}

}  // namespace hvs
