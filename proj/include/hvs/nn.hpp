#pragma once

// Dense layers with analytic gradients, SGD with momentum + weight decay,
// learning-rate schedules and flop accounting.

#include <cmath>
#include <cstddef>
#include <vector>

#include "hvs/tensor.hpp"

namespace hvs {

enum class Activation { Identity, Relu };

struct DenseLayer {
    Tensor2 weight;            // out x in
    std::vector<float> bias;   // out
    Activation activation = Activation::Identity;

    std::size_t in_dim() const { return weight.cols; }
    std::size_t out_dim() const { return weight.rows; }
};

// y = act(W x + b) on a strided weight view. Keeping the accumulation loop in
// one place makes sliced supernet evaluation bit-identical to evaluation of an
// extracted compact copy.
inline void dense_forward_view(const float* w, std::size_t w_stride, const float* b,
                               std::size_t out, std::size_t in, const float* x,
                               float* pre, Activation act, float* y) {
    for (std::size_t o = 0; o < out; ++o) {
        double acc = b ? static_cast<double>(b[o]) : 0.0;
        const float* wrow = w + o * w_stride;
        for (std::size_t i = 0; i < in; ++i)
            acc += static_cast<double>(wrow[i]) * x[i];
        float v = static_cast<float>(acc);
        if (pre) pre[o] = v;
        y[o] = (act == Activation::Relu && v < 0.0f) ? 0.0f : v;
    }
}

// Backward of dense_forward_view. dpre is the gradient at the pre-activation
// (caller applies the activation mask). Accumulates into dw/db/dx.
inline void dense_backward_view(const float* w, std::size_t w_stride,
                                std::size_t out, std::size_t in, const float* x,
                                const float* dpre, float* dw, std::size_t dw_stride,
                                float* db, float* dx) {
    for (std::size_t o = 0; o < out; ++o) {
        float g = dpre[o];
        if (db) db[o] += g;
        const float* wrow = w + o * w_stride;
        float* dwrow = dw ? dw + o * dw_stride : nullptr;
        for (std::size_t i = 0; i < in; ++i) {
            if (dwrow) dwrow[i] += g * x[i];
            if (dx) dx[i] += g * wrow[i];
        }
    }
}

inline void relu_mask(const float* pre, const float* dy, std::size_t n, float* dpre) {
    for (std::size_t i = 0; i < n; ++i) dpre[i] = pre[i] > 0.0f ? dy[i] : 0.0f;
}

inline std::vector<float> dense_apply(const DenseLayer& layer, const float* x) {
    std::vector<float> y(layer.out_dim());
    dense_forward_view(layer.weight.data.data(), layer.weight.cols, layer.bias.data(),
                       layer.out_dim(), layer.in_dim(), x, nullptr, layer.activation,
                       y.data());
    return y;
}

using MlpModel = std::vector<DenseLayer>;

inline Tensor2 forward(const MlpModel& model, const Tensor2& x) {
    if (model.empty()) throw ArgumentError("forward: empty model");
    if (x.cols != model.front().in_dim())
        throw ShapeError("forward: input width does not match first layer");
    Tensor2 cur = x;
    for (const DenseLayer& layer : model) {
        if (cur.cols != layer.in_dim())
            throw ShapeError("forward: layer width mismatch");
        Tensor2 next(cur.rows, layer.out_dim());
        for (std::size_t r = 0; r < cur.rows; ++r)
            dense_forward_view(layer.weight.data.data(), layer.weight.cols,
                               layer.bias.data(), layer.out_dim(), layer.in_dim(),
                               cur.row(r), nullptr, layer.activation, next.row(r));
        cur = std::move(next);
    }
    return cur;
}

struct LayerGrads {
    Tensor2 d_weight;
    std::vector<float> d_bias;
};

// Gradients of sum(upstream .* output) w.r.t. every parameter.
inline std::vector<LayerGrads> backward(const MlpModel& model, const Tensor2& x,
                                        const Tensor2& upstream) {
    if (model.empty()) throw ArgumentError("backward: empty model");
    // forward pass keeping pre-activations and layer inputs
    std::vector<Tensor2> inputs;   // per layer
    std::vector<Tensor2> pres;     // per layer
    Tensor2 cur = x;
    for (const DenseLayer& layer : model) {
        if (cur.cols != layer.in_dim())
            throw ShapeError("backward: layer width mismatch");
        inputs.push_back(cur);
        Tensor2 pre(cur.rows, layer.out_dim());
        Tensor2 next(cur.rows, layer.out_dim());
        for (std::size_t r = 0; r < cur.rows; ++r)
            dense_forward_view(layer.weight.data.data(), layer.weight.cols,
                               layer.bias.data(), layer.out_dim(), layer.in_dim(),
                               cur.row(r), pre.row(r), layer.activation, next.row(r));
        pres.push_back(std::move(pre));
        cur = std::move(next);
    }
    if (!upstream.same_shape(cur))
        throw ShapeError("backward: upstream gradient shape mismatch");

    std::vector<LayerGrads> grads(model.size());
    Tensor2 dy = upstream;
    for (std::size_t li = model.size(); li-- > 0;) {
        const DenseLayer& layer = model[li];
        grads[li].d_weight = Tensor2(layer.out_dim(), layer.in_dim());
        grads[li].d_bias.assign(layer.out_dim(), 0.0f);
        Tensor2 dx(inputs[li].rows, layer.in_dim());
        std::vector<float> dpre(layer.out_dim());
        for (std::size_t r = 0; r < dy.rows; ++r) {
            if (layer.activation == Activation::Relu)
                relu_mask(pres[li].row(r), dy.row(r), layer.out_dim(), dpre.data());
            else
                dpre.assign(dy.row(r), dy.row(r) + layer.out_dim());
            dense_backward_view(layer.weight.data.data(), layer.weight.cols,
                                layer.out_dim(), layer.in_dim(), inputs[li].row(r),
                                dpre.data(), grads[li].d_weight.data.data(),
                                layer.in_dim(), grads[li].d_bias.data(), dx.row(r));
        }
        dy = std::move(dx);
    }
    return grads;
}

// ---------------------------------------------------------------------------
// Optimization

struct OptimizerState {
    float learning_rate = 0.1f;
    float weight_decay = 0.0f;
    float momentum = 0.9f;
    std::vector<float> velocity;  // lazily sized to the parameter vector

    void validate() const {
        if (!(learning_rate > 0.0f)) throw ArgumentError("learning_rate must be > 0");
        if (weight_decay < 0.0f) throw ArgumentError("weight_decay must be >= 0");
        if (momentum < 0.0f || momentum >= 1.0f)
            throw ArgumentError("momentum must be in [0,1)");
    }
};

// w <- w - lr * v, v <- momentum*v + (g + wd*w). Flat in-place update.
inline void sgd_step(float* params, const float* grads, std::size_t n,
                     OptimizerState& state) {
    state.validate();
    if (state.velocity.size() != n) state.velocity.assign(n, 0.0f);
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(grads[i]))
            throw NumericError("sgd_step: non-finite gradient");
        float g = grads[i] + state.weight_decay * params[i];
        float v = state.momentum * state.velocity[i] + g;
        state.velocity[i] = v;
        params[i] -= state.learning_rate * v;
    }
}

enum class LrKind { Constant, Cosine };

struct LrSchedule {
    LrKind kind = LrKind::Constant;
    float base_lr = 0.1f;
    std::size_t total_steps = 1;
};

inline float lr_at(const LrSchedule& schedule, std::size_t step) {
    if (!(schedule.base_lr > 0.0f)) throw ArgumentError("lr_at: base_lr must be > 0");
    if (schedule.total_steps < 1) throw ArgumentError("lr_at: total_steps must be >= 1");
    if (step > schedule.total_steps) throw ArgumentError("lr_at: step out of range");
    if (schedule.kind == LrKind::Constant) return schedule.base_lr;
    double frac = static_cast<double>(step) / static_cast<double>(schedule.total_steps);
    return static_cast<float>(schedule.base_lr * 0.5 *
                              (1.0 + std::cos(3.14159265358979323846 * frac)));
}

// ---------------------------------------------------------------------------
// Flop accounting: 1 MAC = 2 flops, biases and activations free.

inline std::size_t dense_flops(std::size_t in, std::size_t out) { return 2 * in * out; }

inline std::size_t count_flops(const MlpModel& model) {
    std::size_t total = 0;
    for (const DenseLayer& layer : model)
        total += dense_flops(layer.in_dim(), layer.out_dim());
    return total;
}

// Kaiming-uniform fan-in initialization; biases start at zero.
inline DenseLayer make_dense(std::size_t out, std::size_t in, Activation act, Rng& rng) {
    DenseLayer layer;
    layer.weight = Tensor2(out, in);
    layer.bias.assign(out, 0.0f);
    layer.activation = act;
    double bound = std::sqrt(6.0 / static_cast<double>(in));
    for (float& w : layer.weight.data)
        w = static_cast<float>(rng.uniform(-bound, bound));
    return layer;
}

}  // namespace hvs
