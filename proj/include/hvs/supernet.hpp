#pragma once

// Weight-sharing super-network over a layered search space: block choice and
// width choice per layer, prefix slicing for widths, uniform-sampling
// training with a warm-up phase, and standalone sub-network extraction.

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "hvs/checkpoint.hpp"
#include "hvs/model.hpp"
#include "hvs/train.hpp"

namespace hvs {

struct SearchSpace {
    std::size_t num_layers = 6;
    std::size_t block_kinds = 4;
    std::vector<double> width_choices = {0.2, 0.4, 0.6, 0.8, 1.0,
                                         1.2, 1.4, 1.6, 1.8, 2.0};
    std::size_t base_width = 32;
    std::size_t embed_dim = 16;

    void validate() const {
        if (num_layers < 1) throw ArgumentError("search space: need >= 1 layer");
        if (block_kinds < 1 || block_kinds > kNumBlockKinds)
            throw ArgumentError("search space: block_kinds out of range");
        if (width_choices.empty()) throw ArgumentError("search space: no width choices");
        for (std::size_t i = 0; i < width_choices.size(); ++i) {
            if (!(width_choices[i] > 0.0))
                throw ArgumentError("search space: width multipliers must be > 0");
            if (i > 0 && !(width_choices[i] > width_choices[i - 1]))
                throw ArgumentError("search space: width choices must be strictly increasing");
        }
        if (base_width < 1 || embed_dim < 1)
            throw ArgumentError("search space: base_width and embed_dim must be >= 1");
    }

    std::size_t width_at(std::size_t choice) const {
        return static_cast<std::size_t>(
            std::ceil(width_choices.at(choice) * static_cast<double>(base_width)));
    }

    std::size_t max_width() const { return width_at(width_choices.size() - 1); }
};

struct LayerChoice {
    std::size_t block = 0;
    std::size_t width = 0;
    auto operator<=>(const LayerChoice&) const = default;
};

struct ArchDescriptor {
    std::vector<LayerChoice> layers;
    auto operator<=>(const ArchDescriptor&) const = default;

    std::string to_string() const {
        std::string s;
        for (const LayerChoice& c : layers) {
            if (!s.empty()) s += ",";
            s += std::to_string(c.block) + ":" + std::to_string(c.width);
        }
        return s;
    }
};

inline void validate_arch(const SearchSpace& space, const ArchDescriptor& arch) {
    if (arch.layers.size() != space.num_layers)
        throw ArgumentError("arch: wrong number of layers");
    for (const LayerChoice& c : arch.layers) {
        if (c.block >= space.block_kinds) throw ArgumentError("arch: block choice out of range");
        if (c.width >= space.width_choices.size())
            throw ArgumentError("arch: width choice out of range");
    }
}

inline ArchDescriptor sample_uniform(const SearchSpace& space, Rng& rng) {
    ArchDescriptor arch;
    arch.layers.resize(space.num_layers);
    for (LayerChoice& c : arch.layers) {
        c.block = rng.index(space.block_kinds);
        c.width = rng.index(space.width_choices.size());
    }
    return arch;
}

inline std::size_t count_flops(const SearchSpace& space, const ArchDescriptor& arch,
                               std::size_t input_dim) {
    validate_arch(space, arch);
    std::size_t total = 0;
    std::size_t in = input_dim;
    for (const LayerChoice& c : arch.layers) {
        std::size_t out = space.width_at(c.width);
        total += block_flops(static_cast<BlockKind>(c.block), in, out);
        in = out;
    }
    total += dense_flops(in, space.embed_dim);
    return total;
}

struct SuperNet {
    SearchSpace space;
    std::size_t input_dim = 0;
    std::vector<std::vector<Block>> layers;  // [layer][block kind], max width
    DenseLayer head;                         // embed_dim x max_width
    Classifier classifier;                   // shared kappa_q
};

inline SuperNet make_supernet(const SearchSpace& space, std::size_t input_dim,
                              std::size_t num_classes, std::uint64_t seed) {
    space.validate();
    SuperNet sn;
    sn.space = space;
    sn.input_dim = input_dim;
    Rng rng(seed);
    const std::size_t w = space.max_width();
    std::size_t in = input_dim;
    for (std::size_t l = 0; l < space.num_layers; ++l) {
        std::vector<Block> kinds;
        for (std::size_t k = 0; k < space.block_kinds; ++k)
            kinds.push_back(make_block(static_cast<BlockKind>(k), w, in, rng));
        sn.layers.push_back(std::move(kinds));
        in = w;
    }
    sn.head = make_dense(space.embed_dim, w, Activation::Identity, rng);
    sn.classifier = make_classifier(num_classes, space.embed_dim, rng);
    return sn;
}

namespace detail {

inline DenseView slice_view(const DenseLayer& l, std::size_t out, std::size_t in) {
    return DenseView{l.weight.data.data(), l.weight.cols, l.bias.data(), out, in};
}

}  // namespace detail

// Strided view of the active slice selected by the descriptor; shares the
// supernet's storage.
inline ModelView subnet_view(const SuperNet& sn, const ArchDescriptor& arch) {
    validate_arch(sn.space, arch);
    ModelView mv;
    mv.input_dim = sn.input_dim;
    mv.embed_dim = sn.space.embed_dim;
    std::size_t in = sn.input_dim;
    for (std::size_t l = 0; l < arch.layers.size(); ++l) {
        const LayerChoice& c = arch.layers[l];
        const Block& b = sn.layers[l][c.block];
        std::size_t out = sn.space.width_at(c.width);
        BlockView bv;
        bv.kind = b.kind;
        if (b.kind == BlockKind::Bottleneck) {
            std::size_t mid = bottleneck_mid(out);
            bv.d1 = detail::slice_view(b.l1, mid, in);
            bv.d2 = detail::slice_view(b.l2, out, mid);
        } else {
            bv.d1 = detail::slice_view(b.l1, out, in);
        }
        mv.blocks.push_back(bv);
        in = out;
    }
    mv.head = detail::slice_view(sn.head, sn.space.embed_dim, in);
    return mv;
}

inline std::vector<float> subnet_forward(const SuperNet& sn, const ArchDescriptor& arch,
                                         const float* x) {
    return view_embed(subnet_view(sn, arch), x, nullptr);
}

// Copies the active slices into a self-contained model.
inline EmbeddingModel extract_standalone(const SuperNet& sn, const ArchDescriptor& arch) {
    validate_arch(sn.space, arch);
    EmbeddingModel m;
    m.input_dim = sn.input_dim;
    m.embed_dim = sn.space.embed_dim;
    auto copy_slice = [](const DenseLayer& src, std::size_t out, std::size_t in,
                         Activation act) {
        DenseLayer dst;
        dst.weight = Tensor2(out, in);
        dst.bias.assign(src.bias.begin(), src.bias.begin() + static_cast<std::ptrdiff_t>(out));
        dst.activation = act;
        for (std::size_t r = 0; r < out; ++r)
            std::copy(src.weight.row(r), src.weight.row(r) + in, dst.weight.row(r));
        return dst;
    };
    std::size_t in = sn.input_dim;
    for (std::size_t l = 0; l < arch.layers.size(); ++l) {
        const LayerChoice& c = arch.layers[l];
        const Block& src = sn.layers[l][c.block];
        std::size_t out = sn.space.width_at(c.width);
        Block b;
        b.kind = src.kind;
        if (src.kind == BlockKind::Bottleneck) {
            std::size_t mid = bottleneck_mid(out);
            b.l1 = copy_slice(src.l1, mid, in, Activation::Relu);
            b.l2 = copy_slice(src.l2, out, mid, Activation::Identity);
        } else {
            b.l1 = copy_slice(src.l1, out, in,
                              src.kind == BlockKind::Linear ? Activation::Identity
                                                            : Activation::Relu);
        }
        m.blocks.push_back(std::move(b));
        in = out;
    }
    m.head = copy_slice(sn.head, sn.space.embed_dim, in, Activation::Identity);
    return m;
}

// Freshly initialized standalone model with the architecture's shape.
inline EmbeddingModel make_arch_model(const SearchSpace& space, const ArchDescriptor& arch,
                                      std::size_t input_dim, Rng& rng) {
    validate_arch(space, arch);
    EmbeddingModel m;
    m.input_dim = input_dim;
    m.embed_dim = space.embed_dim;
    std::size_t in = input_dim;
    for (const LayerChoice& c : arch.layers) {
        std::size_t out = space.width_at(c.width);
        m.blocks.push_back(make_block(static_cast<BlockKind>(c.block), out, in, rng));
        in = out;
    }
    m.head = make_dense(space.embed_dim, in, Activation::Identity, rng);
    return m;
}

// ---------------------------------------------------------------------------
// Supernet training

struct SuperNetGrads {
    std::vector<std::vector<BlockGrads>> layers;
    DenseGrads head;
    Tensor2 classifier;
};

inline SuperNetGrads zero_grads(const SuperNet& sn) {
    SuperNetGrads g;
    for (const auto& kinds : sn.layers) {
        std::vector<BlockGrads> row;
        for (const Block& b : kinds) {
            BlockGrads bg;
            bg.g1 = zero_like(b.l1);
            if (b.kind == BlockKind::Bottleneck) bg.g2 = zero_like(b.l2);
            row.push_back(std::move(bg));
        }
        g.layers.push_back(std::move(row));
    }
    g.head = zero_like(sn.head);
    g.classifier = Tensor2(sn.classifier.prototypes.rows, sn.classifier.prototypes.cols);
    return g;
}

namespace detail {

inline void scale_region(float* g, std::size_t rows, std::size_t cols, std::size_t stride,
                         float factor) {
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) g[r * stride + c] *= factor;
}

inline void sgd_update_region(float* w, float* v, const float* g, std::size_t rows,
                              std::size_t cols, std::size_t stride, float lr, float wd,
                              float mom) {
    for (std::size_t r = 0; r < rows; ++r) {
        std::size_t off = r * stride;
        for (std::size_t c = 0; c < cols; ++c) {
            std::size_t i = off + c;
            float gi = g[i] + wd * w[i];
            float vi = mom * v[i] + gi;
            v[i] = vi;
            w[i] -= lr * vi;
        }
    }
}

// Scale the accumulated gradient of one active dense slice by 1/batch and
// apply the SGD update to exactly that slice.
inline void step_dense_slice(DenseLayer& l, DenseGrads& g, DenseGrads& v, std::size_t out,
                             std::size_t in, float inv_batch, float lr, float wd,
                             float mom) {
    scale_region(g.dw.data.data(), out, in, l.weight.cols, inv_batch);
    for (std::size_t o = 0; o < out; ++o) g.db[o] *= inv_batch;
    sgd_update_region(l.weight.data.data(), v.dw.data.data(), g.dw.data.data(), out, in,
                      l.weight.cols, lr, wd, mom);
    sgd_update_region(l.bias.data(), v.db.data(), g.db.data(), 1, out, out, lr, wd, mom);
}

}  // namespace detail

// Warm-up forward: every layer averages all block outputs at maximum width.
// Returns the unit embedding; tapes (one per layer per kind) are optional.
inline std::vector<float> warmup_embed(const SuperNet& sn, const float* x,
                                       std::vector<std::vector<BlockTape>>* tapes,
                                       std::vector<std::vector<float>>* layer_inputs,
                                       EmbedTape* head_tape) {
    const std::size_t w = sn.space.max_width();
    const std::size_t kinds = sn.space.block_kinds;
    std::vector<float> cur(x, x + sn.input_dim);
    if (tapes) tapes->assign(sn.layers.size(), std::vector<BlockTape>(kinds));
    if (layer_inputs) layer_inputs->clear();
    std::vector<float> sum(w), one(w);
    for (std::size_t l = 0; l < sn.layers.size(); ++l) {
        if (layer_inputs) layer_inputs->push_back(cur);
        std::fill(sum.begin(), sum.end(), 0.0f);
        for (std::size_t k = 0; k < kinds; ++k) {
            const Block& b = sn.layers[l][k];
            BlockView bv;
            bv.kind = b.kind;
            if (b.kind == BlockKind::Bottleneck) {
                bv.d1 = detail::slice_view(b.l1, bottleneck_mid(w), cur.size());
                bv.d2 = detail::slice_view(b.l2, w, bottleneck_mid(w));
            } else {
                bv.d1 = detail::slice_view(b.l1, w, cur.size());
            }
            BlockTape* tape = nullptr;
            if (tapes) {
                tape = &(*tapes)[l][k];
                tape->pre1.resize(bv.d1.out);
                tape->h1.resize(b.kind == BlockKind::Bottleneck ? bv.d1.out : 0);
            }
            block_forward(bv, cur.data(), tape, one.data());
            for (std::size_t i = 0; i < w; ++i) sum[i] += one[i];
        }
        const float inv = 1.0f / static_cast<float>(kinds);
        cur.assign(w, 0.0f);
        for (std::size_t i = 0; i < w; ++i) cur[i] = sum[i] * inv;
    }
    std::vector<float> raw(sn.space.embed_dim);
    dense_forward_view(sn.head.weight.data.data(), sn.head.weight.cols, sn.head.bias.data(),
                       sn.space.embed_dim, w, cur.data(), nullptr, Activation::Identity,
                       raw.data());
    double norm = l2_norm(raw.data(), raw.size());
    std::vector<float> unit(raw.size());
    if (norm <= kNormEps) {
        // Same dead-path fallback as view_embed: fixed unit vector, gradient
        // blocked through the normalization.
        unit[0] = 1.0f;
        norm = std::numeric_limits<double>::infinity();
    } else {
        for (std::size_t k = 0; k < raw.size(); ++k)
            unit[k] = static_cast<float>(raw[k] / norm);
    }
    if (head_tape) {
        head_tape->head_in = cur;
        head_tape->raw = raw;
        head_tape->raw_norm = norm;
        head_tape->embedding = unit;
    }
    return unit;
}

struct SupernetTrainResult {
    std::vector<EpochStat> stats;
};

// Uniform-sampling supernet training with the compatibility composite loss.
// During warm-up every block receives gradient at maximum width; afterwards a
// fresh architecture is sampled per batch and only its active slice (plus the
// shared head slice and classifier) is updated. The gallery classifier stays
// frozen throughout.
inline SupernetTrainResult train_supernet(SuperNet& sn, const LabeledDataset& train,
                                          std::size_t epochs, std::size_t warmup_epochs,
                                          const CompositeWeights& weights,
                                          const Classifier& gallery_classifier,
                                          LossKind loss_kind, const TrainOptions& opts) {
    if (warmup_epochs > epochs)
        throw ArgumentError("train_supernet: warmup_epochs must be <= epochs");
    weights.validate();
    if (weights.lambda2 > 0.0f &&
        gallery_classifier.num_classes() != sn.classifier.num_classes())
        throw ConfigError("train_supernet: gallery classifier class-count mismatch");
    if (train.dim() != sn.input_dim) throw ShapeError("train_supernet: input width mismatch");

    const std::size_t n = train.size();
    const std::size_t batches_per_epoch = (n + opts.batch_size - 1) / opts.batch_size;
    LrSchedule schedule{opts.lr_kind, opts.base_lr,
                        std::max<std::size_t>(1, epochs * batches_per_epoch)};

    SuperNetGrads grads = zero_grads(sn);
    SuperNetGrads velocity = zero_grads(sn);
    Tensor2 v_classifier(sn.classifier.prototypes.rows, sn.classifier.prototypes.cols);

    Rng rng(opts.seed);
    Rng arch_rng(opts.seed ^ 0x9e3779b97f4a7c15ull);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    const std::size_t w = sn.space.max_width();
    SupernetTrainResult result;
    std::size_t step = 0;
    std::vector<float> x;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        const bool warmup = epoch < warmup_epochs;
        for (std::size_t i = n; i-- > 1;) std::swap(order[i], order[rng.index(i + 1)]);
        double epoch_loss = 0.0;
        float lr = 0.0f;
        for (std::size_t b = 0; b < batches_per_epoch; ++b, ++step) {
            lr = lr_at(schedule, step);
            ArchDescriptor arch;
            ModelView mv;
            if (!warmup) {
                arch = sample_uniform(sn.space, arch_rng);
                mv = subnet_view(sn, arch);
            }
            // zero only what this batch touches
            for (auto& row : grads.layers)
                for (BlockGrads& bg : row) {
                    std::fill(bg.g1.dw.data.begin(), bg.g1.dw.data.end(), 0.0f);
                    std::fill(bg.g1.db.begin(), bg.g1.db.end(), 0.0f);
                    std::fill(bg.g2.dw.data.begin(), bg.g2.dw.data.end(), 0.0f);
                    std::fill(bg.g2.db.begin(), bg.g2.db.end(), 0.0f);
                }
            std::fill(grads.head.dw.data.begin(), grads.head.dw.data.end(), 0.0f);
            std::fill(grads.head.db.begin(), grads.head.db.end(), 0.0f);
            std::fill(grads.classifier.data.begin(), grads.classifier.data.end(), 0.0f);

            std::size_t begin = b * opts.batch_size;
            std::size_t end = std::min(begin + opts.batch_size, n);
            double batch_loss = 0.0;
            for (std::size_t i = begin; i < end; ++i) {
                std::size_t row = order[i];
                detail::jitter_sample(train.features.row(row), train.dim(),
                                      opts.jitter_sigma, rng, x);
                std::uint32_t label = train.labels[row];
                if (warmup) {
                    std::vector<std::vector<BlockTape>> tapes;
                    std::vector<std::vector<float>> inputs;
                    EmbedTape head_tape;
                    std::vector<float> e =
                        warmup_embed(sn, x.data(), &tapes, &inputs, &head_tape);
                    CompositeResult cr = bct_composite_loss(e, sn.classifier,
                                                            gallery_classifier, label,
                                                            weights, loss_kind);
                    batch_loss += cr.loss;
                    for (std::size_t ii = 0; ii < grads.classifier.data.size(); ++ii)
                        grads.classifier.data[ii] += cr.d_new_prototypes.data[ii];
                    // backward through normalization + head
                    double gy = 0.0;
                    for (std::size_t k = 0; k < e.size(); ++k)
                        gy += static_cast<double>(cr.d_embedding[k]) * e[k];
                    std::vector<float> d_raw(e.size());
                    for (std::size_t k = 0; k < e.size(); ++k)
                        d_raw[k] = static_cast<float>(
                            (cr.d_embedding[k] - gy * e[k]) / head_tape.raw_norm);
                    std::vector<float> dcur(w, 0.0f);
                    dense_backward_view(sn.head.weight.data.data(), sn.head.weight.cols,
                                        sn.space.embed_dim, w, head_tape.head_in.data(),
                                        d_raw.data(), grads.head.dw.data.data(),
                                        grads.head.dw.cols, grads.head.db.data(),
                                        dcur.data());
                    const float inv_kinds = 1.0f / static_cast<float>(sn.space.block_kinds);
                    for (std::size_t l = sn.layers.size(); l-- > 0;) {
                        std::size_t in_dim = inputs[l].size();
                        std::vector<float> davg(w);
                        for (std::size_t ii = 0; ii < w; ++ii)
                            davg[ii] = dcur[ii] * inv_kinds;
                        std::vector<float> dprev(in_dim, 0.0f);
                        std::vector<float> done(in_dim);
                        for (std::size_t k = 0; k < sn.space.block_kinds; ++k) {
                            const Block& blk = sn.layers[l][k];
                            BlockView bv;
                            bv.kind = blk.kind;
                            if (blk.kind == BlockKind::Bottleneck) {
                                bv.d1 = detail::slice_view(blk.l1, bottleneck_mid(w), in_dim);
                                bv.d2 = detail::slice_view(blk.l2, w, bottleneck_mid(w));
                            } else {
                                bv.d1 = detail::slice_view(blk.l1, w, in_dim);
                            }
                            BlockGrads& bg = grads.layers[l][k];
                            block_backward(bv, tapes[l][k], davg.data(), ref_of(bg.g1),
                                           ref_of(bg.g2), done.data());
                            for (std::size_t ii = 0; ii < in_dim; ++ii)
                                dprev[ii] += done[ii];
                        }
                        dcur = std::move(dprev);
                    }
                } else {
                    EmbedTape tape;
                    std::vector<float> e = view_embed(mv, x.data(), &tape);
                    CompositeResult cr = bct_composite_loss(e, sn.classifier,
                                                            gallery_classifier, label,
                                                            weights, loss_kind);
                    batch_loss += cr.loss;
                    for (std::size_t ii = 0; ii < grads.classifier.data.size(); ++ii)
                        grads.classifier.data[ii] += cr.d_new_prototypes.data[ii];
                    ModelGradRefs grefs;
                    for (std::size_t l = 0; l < arch.layers.size(); ++l) {
                        BlockGrads& bg = grads.layers[l][arch.layers[l].block];
                        grefs.blocks.emplace_back(ref_of(bg.g1), ref_of(bg.g2));
                    }
                    grefs.head = ref_of(grads.head);
                    view_embed_backward(mv, tape, cr.d_embedding, grefs);
                }
            }
            if (!std::isfinite(batch_loss))
                throw NumericError("train_supernet: loss diverged at step " +
                                   std::to_string(step));
            epoch_loss += batch_loss;
            const float inv_batch = 1.0f / static_cast<float>(end - begin);

            std::size_t in_dim = sn.input_dim;
            for (std::size_t l = 0; l < sn.layers.size(); ++l) {
                std::size_t out = warmup ? w : sn.space.width_at(arch.layers[l].width);
                for (std::size_t k = 0; k < sn.space.block_kinds; ++k) {
                    if (!warmup && k != arch.layers[l].block) continue;
                    Block& blk = sn.layers[l][k];
                    BlockGrads& bg = grads.layers[l][k];
                    BlockGrads& bv = velocity.layers[l][k];
                    if (blk.kind == BlockKind::Bottleneck) {
                        std::size_t mid = bottleneck_mid(out);
                        detail::step_dense_slice(blk.l1, bg.g1, bv.g1, mid, in_dim,
                                                 inv_batch, lr, opts.weight_decay,
                                                 opts.momentum);
                        detail::step_dense_slice(blk.l2, bg.g2, bv.g2, out, mid, inv_batch,
                                                 lr, opts.weight_decay, opts.momentum);
                    } else {
                        detail::step_dense_slice(blk.l1, bg.g1, bv.g1, out, in_dim,
                                                 inv_batch, lr, opts.weight_decay,
                                                 opts.momentum);
                    }
                }
                in_dim = out;
            }
            detail::step_dense_slice(sn.head, grads.head, velocity.head,
                                     sn.space.embed_dim, in_dim, inv_batch, lr,
                                     opts.weight_decay, opts.momentum);
            for (float& gv : grads.classifier.data) gv *= inv_batch;
            sgd_update(sn.classifier.prototypes.data.data(), v_classifier.data.data(),
                       grads.classifier.data.data(), grads.classifier.data.size(), lr,
                       opts.weight_decay, opts.momentum);
        }
        result.stats.push_back({epoch, epoch_loss / static_cast<double>(n), lr});
    }
    return result;
}

// ---------------------------------------------------------------------------
// Checkpoint serialization

inline void put_supernet(Checkpoint& ckpt, const SuperNet& sn) {
    std::vector<float> meta = {static_cast<float>(sn.input_dim),
                               static_cast<float>(sn.space.num_layers),
                               static_cast<float>(sn.space.block_kinds),
                               static_cast<float>(sn.space.base_width),
                               static_cast<float>(sn.space.embed_dim)};
    ckpt["supernet/meta"] = tensor_of(meta);
    std::vector<float> widths(sn.space.width_choices.begin(), sn.space.width_choices.end());
    ckpt["supernet/width_choices"] = tensor_of(widths);
    for (std::size_t l = 0; l < sn.layers.size(); ++l)
        for (std::size_t k = 0; k < sn.layers[l].size(); ++k) {
            std::string p = "supernet/layer" + std::to_string(l) + "/kind" +
                            std::to_string(k) + "/";
            const Block& b = sn.layers[l][k];
            ckpt[p + "w1"] = tensor_of(b.l1.weight);
            ckpt[p + "b1"] = tensor_of(b.l1.bias);
            if (b.kind == BlockKind::Bottleneck) {
                ckpt[p + "w2"] = tensor_of(b.l2.weight);
                ckpt[p + "b2"] = tensor_of(b.l2.bias);
            }
        }
    ckpt["supernet/head/w"] = tensor_of(sn.head.weight);
    ckpt["supernet/head/b"] = tensor_of(sn.head.bias);
    put_classifier(ckpt, "supernet/classifier/", sn.classifier);
}

inline SuperNet get_supernet(const Checkpoint& ckpt) {
    const NamedTensor& meta = require(ckpt, "supernet/meta");
    if (meta.values.size() != 5) throw FormatError("supernet meta tensor malformed");
    SearchSpace space;
    std::size_t input_dim = static_cast<std::size_t>(meta.values[0]);
    space.num_layers = static_cast<std::size_t>(meta.values[1]);
    space.block_kinds = static_cast<std::size_t>(meta.values[2]);
    space.base_width = static_cast<std::size_t>(meta.values[3]);
    space.embed_dim = static_cast<std::size_t>(meta.values[4]);
    const NamedTensor& widths = require(ckpt, "supernet/width_choices");
    space.width_choices.assign(widths.values.begin(), widths.values.end());
    space.validate();

    SuperNet sn;
    sn.space = space;
    sn.input_dim = input_dim;
    for (std::size_t l = 0; l < space.num_layers; ++l) {
        std::vector<Block> kinds;
        for (std::size_t k = 0; k < space.block_kinds; ++k) {
            std::string p = "supernet/layer" + std::to_string(l) + "/kind" +
                            std::to_string(k) + "/";
            Block b;
            b.kind = static_cast<BlockKind>(k);
            b.l1.weight = tensor2_from(require(ckpt, p + "w1"));
            b.l1.bias = require(ckpt, p + "b1").values;
            b.l1.activation =
                b.kind == BlockKind::Linear ? Activation::Identity : Activation::Relu;
            if (b.kind == BlockKind::Bottleneck) {
                b.l2.weight = tensor2_from(require(ckpt, p + "w2"));
                b.l2.bias = require(ckpt, p + "b2").values;
            }
            kinds.push_back(std::move(b));
        }
        sn.layers.push_back(std::move(kinds));
    }
    sn.head.weight = tensor2_from(require(ckpt, "supernet/head/w"));
    sn.head.bias = require(ckpt, "supernet/head/b").values;
    sn.classifier = get_classifier(ckpt, "supernet/classifier/");
    return sn;
}

}  // namespace hvs
