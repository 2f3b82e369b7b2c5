#pragma once

// Shared SGD training loop for embedding models. The per-sample objective is
// pluggable so vanilla, distillation and compatibility-composite training all
// run through the same loop (and the same RNG stream discipline, which keeps
// seeded runs reproducible across entry points).

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "hvs/data.hpp"
#include "hvs/losses.hpp"
#include "hvs/model.hpp"
#include "hvs/nn.hpp"
#include "hvs/tensor.hpp"

namespace hvs {

struct TrainOptions {
    std::size_t epochs = 40;
    std::size_t batch_size = 32;
    LrKind lr_kind = LrKind::Cosine;
    float base_lr = 0.05f;
    float weight_decay = 5e-4f;
    float momentum = 0.9f;
    double jitter_sigma = 0.0;  // per-epoch gaussian augmentation, re-normalized
    std::uint64_t seed = 0;
};

struct EpochStat {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    float lr = 0.0f;
};

inline void sgd_update(float* w, float* v, const float* g, std::size_t n, float lr,
                       float wd, float mom) {
    for (std::size_t i = 0; i < n; ++i) {
        float gi = g[i] + wd * w[i];
        float vi = mom * v[i] + gi;
        v[i] = vi;
        w[i] -= lr * vi;
    }
}

inline void zero_grads_inplace(ModelGrads& g) {
    for (BlockGrads& bg : g.blocks) {
        std::fill(bg.g1.dw.data.begin(), bg.g1.dw.data.end(), 0.0f);
        std::fill(bg.g1.db.begin(), bg.g1.db.end(), 0.0f);
        std::fill(bg.g2.dw.data.begin(), bg.g2.dw.data.end(), 0.0f);
        std::fill(bg.g2.db.begin(), bg.g2.db.end(), 0.0f);
    }
    std::fill(g.head.dw.data.begin(), g.head.dw.data.end(), 0.0f);
    std::fill(g.head.db.begin(), g.head.db.end(), 0.0f);
}

// Returns the sample loss; writes the gradient w.r.t. the unit embedding and
// accumulates the gradient for the trainable classifier prototypes.
using SampleObjective =
    std::function<float(const std::vector<float>& embedding, std::uint32_t label,
                        std::size_t row, std::vector<float>& d_embedding,
                        Tensor2& d_classifier)>;

namespace detail {

inline void jitter_sample(const float* src, std::size_t dim, double sigma, Rng& rng,
                          std::vector<float>& out) {
    out.assign(src, src + dim);
    if (sigma > 0.0) {
        for (std::size_t k = 0; k < dim; ++k)
            out[k] += static_cast<float>(sigma * rng.normal());
        l2_normalize(out.data(), dim);
    }
}

}  // namespace detail

// One pass of mini-batch SGD over the dataset per epoch; batch loss is the
// mean over samples. Throws NumericError when the loss stops being finite.
inline std::vector<EpochStat> train_embedding_model(EmbeddingModel& model,
                                                    Classifier& classifier,
                                                    const LabeledDataset& data,
                                                    const TrainOptions& opts,
                                                    const SampleObjective& objective) {
    if (data.size() == 0) throw ArgumentError("train: empty dataset");
    if (data.dim() != model.input_dim) throw ShapeError("train: input width mismatch");

    const std::size_t n = data.size();
    const std::size_t batches_per_epoch = (n + opts.batch_size - 1) / opts.batch_size;
    LrSchedule schedule{opts.lr_kind, opts.base_lr,
                        std::max<std::size_t>(1, opts.epochs * batches_per_epoch)};

    ModelGrads grads = zero_grads(model);
    ModelGrads velocity = zero_grads(model);
    Tensor2 d_classifier(classifier.prototypes.rows, classifier.prototypes.cols);
    Tensor2 v_classifier(classifier.prototypes.rows, classifier.prototypes.cols);

    ModelView mv = view_of(model);
    ModelGradRefs grefs = refs_of(grads);
    Rng rng(opts.seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    std::vector<EpochStat> stats;
    std::size_t step = 0;
    std::vector<float> x, d_emb;
    EmbedTape tape;
    for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
        for (std::size_t i = n; i-- > 1;) std::swap(order[i], order[rng.index(i + 1)]);
        double epoch_loss = 0.0;
        float lr = 0.0f;
        for (std::size_t b = 0; b < batches_per_epoch; ++b, ++step) {
            lr = lr_at(schedule, step);
            zero_grads_inplace(grads);
            std::fill(d_classifier.data.begin(), d_classifier.data.end(), 0.0f);
            std::size_t begin = b * opts.batch_size;
            std::size_t end = std::min(begin + opts.batch_size, n);
            double batch_loss = 0.0;
            for (std::size_t i = begin; i < end; ++i) {
                std::size_t row = order[i];
                detail::jitter_sample(data.features.row(row), data.dim(), opts.jitter_sigma,
                                      rng, x);
                std::vector<float> e = view_embed(mv, x.data(), &tape);
                batch_loss += objective(e, data.labels[row], row, d_emb, d_classifier);
                view_embed_backward(mv, tape, d_emb, grefs);
            }
            const float inv_batch = 1.0f / static_cast<float>(end - begin);
            if (!std::isfinite(batch_loss))
                throw NumericError("train: loss diverged at step " + std::to_string(step));
            epoch_loss += batch_loss;
            auto scale_and_step = [&](DenseLayer& l, DenseGrads& g, DenseGrads& v) {
                for (float& gv : g.dw.data) gv *= inv_batch;
                for (float& gv : g.db) gv *= inv_batch;
                sgd_update(l.weight.data.data(), v.dw.data.data(), g.dw.data.data(),
                           l.weight.data.size(), lr, opts.weight_decay, opts.momentum);
                sgd_update(l.bias.data(), v.db.data(), g.db.data(), l.bias.size(), lr,
                           opts.weight_decay, opts.momentum);
            };
            for (std::size_t li = 0; li < model.blocks.size(); ++li) {
                scale_and_step(model.blocks[li].l1, grads.blocks[li].g1, velocity.blocks[li].g1);
                if (model.blocks[li].kind == BlockKind::Bottleneck)
                    scale_and_step(model.blocks[li].l2, grads.blocks[li].g2,
                                   velocity.blocks[li].g2);
            }
            scale_and_step(model.head, grads.head, velocity.head);
            for (float& gv : d_classifier.data) gv *= inv_batch;
            sgd_update(classifier.prototypes.data.data(), v_classifier.data.data(),
                       d_classifier.data.data(), d_classifier.data.size(), lr,
                       opts.weight_decay, opts.momentum);
        }
        stats.push_back({epoch, epoch_loss / static_cast<double>(n), lr});
    }
    return stats;
}

inline Classifier make_classifier(std::size_t num_classes, std::size_t embed_dim, Rng& rng,
                                  float scale = 30.0f, float margin = 0.4f,
                                  float temperature = 0.5f) {
    Classifier c;
    c.prototypes = Tensor2(num_classes, embed_dim);
    for (float& v : c.prototypes.data) v = static_cast<float>(rng.normal() * 0.1);
    c.scale = scale;
    c.margin = margin;
    c.temperature = temperature;
    return c;
}

}  // namespace hvs
