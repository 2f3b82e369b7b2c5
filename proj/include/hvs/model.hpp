#pragma once

// Block-structured embedding model: a stack of choice blocks followed by a
// dense embedding head and L2 normalization. Forward/backward run on strided
// parameter views so a supernet slice and a compact extracted copy execute
// the exact same arithmetic.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "hvs/checkpoint.hpp"
#include "hvs/losses.hpp"
#include "hvs/nn.hpp"
#include "hvs/tensor.hpp"

namespace hvs {

enum class BlockKind : std::uint8_t {
    Linear = 0,        // W x + b
    LinearRelu = 1,    // relu(W x + b)
    Bottleneck = 2,    // W2 relu(W1 x + b1) + b2, mid = max(1, out/2)
    ResidualRelu = 3,  // relu(W x + b) + pad(x)
};

constexpr std::size_t kNumBlockKinds = 4;

inline std::size_t bottleneck_mid(std::size_t out) { return out < 2 ? 1 : out / 2; }

struct DenseView {
    const float* w = nullptr;
    std::size_t stride = 0;  // row stride of the stored weight
    const float* b = nullptr;
    std::size_t out = 0, in = 0;
};

struct DenseGradRef {
    float* dw = nullptr;
    std::size_t stride = 0;
    float* db = nullptr;
};

struct BlockView {
    BlockKind kind = BlockKind::Linear;
    DenseView d1;
    DenseView d2;  // bottleneck second stage only
};

struct ModelView {
    std::size_t input_dim = 0;
    std::size_t embed_dim = 0;
    std::vector<BlockView> blocks;
    DenseView head;
};

inline std::size_t block_out_dim(const BlockView& b) {
    return b.kind == BlockKind::Bottleneck ? b.d2.out : b.d1.out;
}

inline std::size_t block_flops(BlockKind kind, std::size_t in, std::size_t out) {
    if (kind == BlockKind::Bottleneck) {
        std::size_t mid = bottleneck_mid(out);
        return dense_flops(in, mid) + dense_flops(mid, out);
    }
    return dense_flops(in, out);
}

// Per-block forward cache needed by the backward pass.
struct BlockTape {
    std::vector<float> x;     // block input
    std::vector<float> pre1;  // first dense pre-activation
    std::vector<float> h1;    // first dense output (bottleneck hidden)
    std::vector<float> y;     // block output
};

struct EmbedTape {
    std::vector<BlockTape> blocks;
    std::vector<float> head_in;
    std::vector<float> raw;        // head output before normalization
    double raw_norm = 0.0;
    std::vector<float> embedding;  // unit-norm output
};

inline void block_forward(const BlockView& bv, const float* x, BlockTape* tape, float* y) {
    const std::size_t out = block_out_dim(bv);
    switch (bv.kind) {
        case BlockKind::Linear:
            dense_forward_view(bv.d1.w, bv.d1.stride, bv.d1.b, bv.d1.out, bv.d1.in, x,
                               tape ? tape->pre1.data() : nullptr, Activation::Identity, y);
            break;
        case BlockKind::LinearRelu:
            dense_forward_view(bv.d1.w, bv.d1.stride, bv.d1.b, bv.d1.out, bv.d1.in, x,
                               tape ? tape->pre1.data() : nullptr, Activation::Relu, y);
            break;
        case BlockKind::Bottleneck: {
            std::vector<float> local;
            float* h;
            if (tape) {
                h = tape->h1.data();
            } else {
                local.resize(bv.d1.out);
                h = local.data();
            }
            dense_forward_view(bv.d1.w, bv.d1.stride, bv.d1.b, bv.d1.out, bv.d1.in, x,
                               tape ? tape->pre1.data() : nullptr, Activation::Relu, h);
            dense_forward_view(bv.d2.w, bv.d2.stride, bv.d2.b, bv.d2.out, bv.d2.in, h,
                               nullptr, Activation::Identity, y);
            break;
        }
        case BlockKind::ResidualRelu: {
            dense_forward_view(bv.d1.w, bv.d1.stride, bv.d1.b, bv.d1.out, bv.d1.in, x,
                               tape ? tape->pre1.data() : nullptr, Activation::Relu, y);
            std::size_t carry = std::min(bv.d1.in, out);
            for (std::size_t i = 0; i < carry; ++i) y[i] += x[i];
            break;
        }
    }
    if (tape) {
        tape->x.assign(x, x + bv.d1.in);
        tape->y.assign(y, y + out);
    }
}

// Accumulates block parameter gradients and writes the input gradient.
inline void block_backward(const BlockView& bv, const BlockTape& tape, const float* dy,
                           const DenseGradRef& g1, const DenseGradRef& g2, float* dx) {
    const std::size_t out = block_out_dim(bv);
    const std::size_t in = bv.d1.in;
    std::fill(dx, dx + in, 0.0f);
    std::vector<float> dpre(bv.d1.out);
    switch (bv.kind) {
        case BlockKind::Linear:
            dense_backward_view(bv.d1.w, bv.d1.stride, bv.d1.out, in, tape.x.data(), dy,
                                g1.dw, g1.stride, g1.db, dx);
            break;
        case BlockKind::LinearRelu:
            relu_mask(tape.pre1.data(), dy, bv.d1.out, dpre.data());
            dense_backward_view(bv.d1.w, bv.d1.stride, bv.d1.out, in, tape.x.data(),
                                dpre.data(), g1.dw, g1.stride, g1.db, dx);
            break;
        case BlockKind::Bottleneck: {
            std::vector<float> dh(bv.d1.out, 0.0f);
            dense_backward_view(bv.d2.w, bv.d2.stride, bv.d2.out, bv.d2.in, tape.h1.data(),
                                dy, g2.dw, g2.stride, g2.db, dh.data());
            relu_mask(tape.pre1.data(), dh.data(), bv.d1.out, dpre.data());
            dense_backward_view(bv.d1.w, bv.d1.stride, bv.d1.out, in, tape.x.data(),
                                dpre.data(), g1.dw, g1.stride, g1.db, dx);
            break;
        }
        case BlockKind::ResidualRelu: {
            relu_mask(tape.pre1.data(), dy, bv.d1.out, dpre.data());
            dense_backward_view(bv.d1.w, bv.d1.stride, bv.d1.out, in, tape.x.data(),
                                dpre.data(), g1.dw, g1.stride, g1.db, dx);
            std::size_t carry = std::min(in, out);
            for (std::size_t i = 0; i < carry; ++i) dx[i] += dy[i];
            break;
        }
    }
}

inline void prepare_tape(const ModelView& mv, EmbedTape& tape) {
    tape.blocks.resize(mv.blocks.size());
    for (std::size_t i = 0; i < mv.blocks.size(); ++i) {
        const BlockView& bv = mv.blocks[i];
        tape.blocks[i].pre1.resize(bv.d1.out);
        tape.blocks[i].h1.resize(bv.kind == BlockKind::Bottleneck ? bv.d1.out : 0);
    }
}

// x -> blocks -> head -> unit embedding.
inline std::vector<float> view_embed(const ModelView& mv, const float* x, EmbedTape* tape) {
    if (tape) prepare_tape(mv, *tape);
    std::vector<float> cur(x, x + mv.input_dim);
    std::vector<float> next;
    for (std::size_t i = 0; i < mv.blocks.size(); ++i) {
        next.resize(block_out_dim(mv.blocks[i]));
        block_forward(mv.blocks[i], cur.data(), tape ? &tape->blocks[i] : nullptr,
                      next.data());
        cur.swap(next);
    }
    if (tape) tape->head_in = cur;
    std::vector<float> raw(mv.embed_dim);
    dense_forward_view(mv.head.w, mv.head.stride, mv.head.b, mv.head.out, mv.head.in,
                       cur.data(), nullptr, Activation::Identity, raw.data());
    double norm = l2_norm(raw.data(), raw.size());
    std::vector<float> unit(raw.size());
    if (norm <= kNormEps) {
        // A fully dead relu path can produce an exactly-zero raw embedding.
        // Fall back to a fixed unit vector and block the gradient (infinite
        // norm zeroes the normalization backward) so training continues
        // deterministically instead of aborting.
        unit[0] = 1.0f;
        norm = std::numeric_limits<double>::infinity();
    } else {
        float inv = static_cast<float>(1.0 / norm);
        for (std::size_t k = 0; k < raw.size(); ++k) unit[k] = raw[k] * inv;
    }
    if (tape) {
        tape->raw = std::move(raw);
        tape->raw_norm = norm;
        tape->embedding = unit;
    }
    return unit;
}

struct ModelGradRefs {
    std::vector<std::pair<DenseGradRef, DenseGradRef>> blocks;
    DenseGradRef head;
};

// Backward from a gradient at the unit embedding through the head and blocks.
inline void view_embed_backward(const ModelView& mv, const EmbedTape& tape,
                                const std::vector<float>& d_embedding,
                                const ModelGradRefs& grads) {
    const std::size_t K = mv.embed_dim;
    // through y = u / |u|: du = (g - (g.y) y) / |u|
    double gy = 0.0;
    for (std::size_t k = 0; k < K; ++k)
        gy += static_cast<double>(d_embedding[k]) * tape.embedding[k];
    std::vector<float> d_raw(K);
    for (std::size_t k = 0; k < K; ++k)
        d_raw[k] = static_cast<float>(
            (d_embedding[k] - gy * tape.embedding[k]) / tape.raw_norm);

    std::vector<float> dcur(mv.head.in, 0.0f);
    dense_backward_view(mv.head.w, mv.head.stride, mv.head.out, mv.head.in,
                        tape.head_in.data(), d_raw.data(), grads.head.dw,
                        grads.head.stride, grads.head.db, dcur.data());
    std::vector<float> dprev;
    for (std::size_t i = mv.blocks.size(); i-- > 0;) {
        dprev.assign(mv.blocks[i].d1.in, 0.0f);
        block_backward(mv.blocks[i], tape.blocks[i], dcur.data(), grads.blocks[i].first,
                       grads.blocks[i].second, dprev.data());
        dcur.swap(dprev);
    }
}

// ---------------------------------------------------------------------------
// Compact (standalone) model storage.

struct Block {
    BlockKind kind = BlockKind::LinearRelu;
    DenseLayer l1;
    DenseLayer l2;  // bottleneck second stage only

    std::size_t in_dim() const { return l1.in_dim(); }
    std::size_t out_dim() const {
        return kind == BlockKind::Bottleneck ? l2.out_dim() : l1.out_dim();
    }
};

struct EmbeddingModel {
    std::size_t input_dim = 0;
    std::size_t embed_dim = 0;
    std::vector<Block> blocks;
    DenseLayer head;  // embed_dim x last block width, identity activation
};

inline DenseView view_of(const DenseLayer& l) {
    return DenseView{l.weight.data.data(), l.weight.cols, l.bias.data(), l.out_dim(),
                     l.in_dim()};
}

inline ModelView view_of(const EmbeddingModel& m) {
    ModelView mv;
    mv.input_dim = m.input_dim;
    mv.embed_dim = m.embed_dim;
    for (const Block& b : m.blocks) {
        BlockView bv;
        bv.kind = b.kind;
        bv.d1 = view_of(b.l1);
        if (b.kind == BlockKind::Bottleneck) bv.d2 = view_of(b.l2);
        mv.blocks.push_back(bv);
    }
    mv.head = view_of(m.head);
    return mv;
}

inline std::vector<float> embed(const EmbeddingModel& model, const float* x) {
    return view_embed(view_of(model), x, nullptr);
}

inline Block make_block(BlockKind kind, std::size_t out, std::size_t in, Rng& rng) {
    Block b;
    b.kind = kind;
    if (kind == BlockKind::Bottleneck) {
        std::size_t mid = bottleneck_mid(out);
        b.l1 = make_dense(mid, in, Activation::Relu, rng);
        b.l2 = make_dense(out, mid, Activation::Identity, rng);
    } else {
        Activation act = kind == BlockKind::Linear ? Activation::Identity : Activation::Relu;
        b.l1 = make_dense(out, in, act, rng);
    }
    return b;
}

// Plain multi-layer model: every block the given kind, widths as listed.
inline EmbeddingModel make_embedding_model(std::size_t input_dim,
                                           const std::vector<std::size_t>& hidden_widths,
                                           std::size_t embed_dim, BlockKind kind, Rng& rng) {
    EmbeddingModel m;
    m.input_dim = input_dim;
    m.embed_dim = embed_dim;
    std::size_t in = input_dim;
    for (std::size_t w : hidden_widths) {
        m.blocks.push_back(make_block(kind, w, in, rng));
        in = w;
    }
    m.head = make_dense(embed_dim, in, Activation::Identity, rng);
    return m;
}

inline std::size_t count_flops(const EmbeddingModel& m) {
    std::size_t total = 0;
    std::size_t in = m.input_dim;
    for (const Block& b : m.blocks) {
        total += block_flops(b.kind, in, b.out_dim());
        in = b.out_dim();
    }
    total += dense_flops(in, m.embed_dim);
    return total;
}

// ---------------------------------------------------------------------------
// Gradient/velocity buffers shaped like a model.

struct DenseGrads {
    Tensor2 dw;
    std::vector<float> db;
};

struct BlockGrads {
    DenseGrads g1, g2;
};

struct ModelGrads {
    std::vector<BlockGrads> blocks;
    DenseGrads head;
};

inline DenseGrads zero_like(const DenseLayer& l) {
    return DenseGrads{Tensor2(l.out_dim(), l.in_dim()), std::vector<float>(l.out_dim(), 0.0f)};
}

inline ModelGrads zero_grads(const EmbeddingModel& m) {
    ModelGrads g;
    for (const Block& b : m.blocks) {
        BlockGrads bg;
        bg.g1 = zero_like(b.l1);
        if (b.kind == BlockKind::Bottleneck) bg.g2 = zero_like(b.l2);
        g.blocks.push_back(std::move(bg));
    }
    g.head = zero_like(m.head);
    return g;
}

inline DenseGradRef ref_of(DenseGrads& g) {
    return DenseGradRef{g.dw.data.data(), g.dw.cols, g.db.data()};
}

inline ModelGradRefs refs_of(ModelGrads& g) {
    ModelGradRefs r;
    for (BlockGrads& bg : g.blocks)
        r.blocks.emplace_back(ref_of(bg.g1), ref_of(bg.g2));
    r.head = ref_of(g.head);
    return r;
}

// ---------------------------------------------------------------------------
// Checkpoint serialization.

inline void put_model(Checkpoint& ckpt, const std::string& prefix, const EmbeddingModel& m) {
    std::vector<float> meta = {static_cast<float>(m.input_dim),
                               static_cast<float>(m.embed_dim),
                               static_cast<float>(m.blocks.size())};
    for (const Block& b : m.blocks) {
        meta.push_back(static_cast<float>(static_cast<int>(b.kind)));
        meta.push_back(static_cast<float>(b.out_dim()));
    }
    ckpt[prefix + "meta"] = tensor_of(meta);
    for (std::size_t i = 0; i < m.blocks.size(); ++i) {
        std::string bp = prefix + "block" + std::to_string(i) + "/";
        ckpt[bp + "w1"] = tensor_of(m.blocks[i].l1.weight);
        ckpt[bp + "b1"] = tensor_of(m.blocks[i].l1.bias);
        if (m.blocks[i].kind == BlockKind::Bottleneck) {
            ckpt[bp + "w2"] = tensor_of(m.blocks[i].l2.weight);
            ckpt[bp + "b2"] = tensor_of(m.blocks[i].l2.bias);
        }
    }
    ckpt[prefix + "head/w"] = tensor_of(m.head.weight);
    ckpt[prefix + "head/b"] = tensor_of(m.head.bias);
}

inline EmbeddingModel get_model(const Checkpoint& ckpt, const std::string& prefix) {
    const NamedTensor& meta = require(ckpt, prefix + "meta");
    if (meta.values.size() < 3) throw FormatError("model meta tensor too short");
    EmbeddingModel m;
    m.input_dim = static_cast<std::size_t>(meta.values[0]);
    m.embed_dim = static_cast<std::size_t>(meta.values[1]);
    std::size_t num_blocks = static_cast<std::size_t>(meta.values[2]);
    for (std::size_t i = 0; i < num_blocks; ++i) {
        Block b;
        b.kind = static_cast<BlockKind>(static_cast<int>(meta.values[3 + 2 * i]));
        std::string bp = prefix + "block" + std::to_string(i) + "/";
        b.l1.weight = tensor2_from(require(ckpt, bp + "w1"));
        b.l1.bias = require(ckpt, bp + "b1").values;
        b.l1.activation = b.kind == BlockKind::Linear ? Activation::Identity : Activation::Relu;
        if (b.kind == BlockKind::Bottleneck) {
            b.l2.weight = tensor2_from(require(ckpt, bp + "w2"));
            b.l2.bias = require(ckpt, bp + "b2").values;
        }
        m.blocks.push_back(std::move(b));
    }
    m.head.weight = tensor2_from(require(ckpt, prefix + "head/w"));
    m.head.bias = require(ckpt, prefix + "head/b").values;
    return m;
}

inline void put_classifier(Checkpoint& ckpt, const std::string& prefix, const Classifier& c) {
    ckpt[prefix + "prototypes"] = tensor_of(c.prototypes);
    ckpt[prefix + "scale"] = scalar_of(c.scale);
    ckpt[prefix + "margin"] = scalar_of(c.margin);
    ckpt[prefix + "temperature"] = scalar_of(c.temperature);
}

inline Classifier get_classifier(const Checkpoint& ckpt, const std::string& prefix) {
    Classifier c;
    c.prototypes = tensor2_from(require(ckpt, prefix + "prototypes"));
    c.scale = require(ckpt, prefix + "scale").values.at(0);
    c.margin = require(ckpt, prefix + "margin").values.at(0);
    c.temperature = require(ckpt, prefix + "temperature").values.at(0);
    return c;
}

// FNV-1a over the parameter bytes; identifies which model produced an index.
inline std::uint64_t model_fingerprint(const EmbeddingModel& m) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const float* v, std::size_t n) {
        const unsigned char* bytes = reinterpret_cast<const unsigned char*>(v);
        for (std::size_t i = 0; i < n * sizeof(float); ++i) {
            h ^= bytes[i];
            h *= 1099511628211ull;
        }
    };
    for (const Block& b : m.blocks) {
        mix(b.l1.weight.data.data(), b.l1.weight.data.size());
        mix(b.l1.bias.data(), b.l1.bias.size());
        mix(b.l2.weight.data.data(), b.l2.weight.data.size());
        mix(b.l2.bias.data(), b.l2.bias.size());
    }
    mix(m.head.weight.data.data(), m.head.weight.data.size());
    mix(m.head.bias.data(), m.head.bias.size());
    return h;
}

}  // namespace hvs
