#pragma once

// Classification-based embedding losses (norm-softmax, cosine margin), the
// compatibility-promoting composite objective, and distillation loss.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "hvs/tensor.hpp"

namespace hvs {

enum class LossKind { NormSoftmax, CosFace };

inline LossKind loss_kind_from_string(const std::string& s) {
    if (s == "norm_softmax") return LossKind::NormSoftmax;
    if (s == "cosface") return LossKind::CosFace;
    throw ArgumentError("unknown loss kind: " + s);
}

struct Classifier {
    Tensor2 prototypes;        // num_classes x K, rows need not be unit-norm
    float scale = 30.0f;       // s, cosine-margin logit scale
    float margin = 0.4f;       // m
    float temperature = 0.5f;  // tau, norm-softmax

    std::size_t num_classes() const { return prototypes.rows; }
    std::size_t embed_dim() const { return prototypes.cols; }

    void validate() const {
        if (num_classes() < 2) throw ArgumentError("classifier: need >= 2 classes");
        if (!(scale > 0.0f)) throw ArgumentError("classifier: scale must be > 0");
        if (margin < 0.0f) throw ArgumentError("classifier: margin must be >= 0");
        if (!(temperature > 0.0f)) throw ArgumentError("classifier: temperature must be > 0");
        for (std::size_t r = 0; r < prototypes.rows; ++r)
            if (l2_norm(prototypes.row(r), prototypes.cols) <= kNormEps)
                throw ArgumentError("classifier: zero prototype row");
    }
};

struct CompositeWeights {
    float lambda1 = 1.0f;
    float lambda2 = 1.0f;

    void validate() const {
        if (lambda1 < 0.0f || lambda2 < 0.0f)
            throw ArgumentError("composite weights must be non-negative");
        if (lambda1 == 0.0f && lambda2 == 0.0f)
            throw ArgumentError("composite weights must not both be zero");
    }
};

struct LossResult {
    float loss = 0.0f;
    std::vector<float> d_embedding;  // gradient w.r.t. the (unit) embedding
    Tensor2 d_prototypes;            // gradient w.r.t. raw prototype rows
};

namespace detail {

inline std::vector<double> stable_softmax(const std::vector<double>& logits) {
    double mx = logits[0];
    for (double z : logits) mx = std::max(mx, z);
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        p[j] = std::exp(logits[j] - mx);
        sum += p[j];
    }
    for (double& v : p) v /= sum;
    return p;
}

// Shared core: loss = -log softmax(z)_y with z_j = scale * cos_j - bias_y at
// the true class. Gradients flow to the embedding and the raw prototypes.
inline LossResult cosine_logit_loss(const float* embedding, const Classifier& classifier,
                                    std::size_t label, double logit_scale,
                                    double true_class_bias) {
    const Tensor2& protos = classifier.prototypes;
    const std::size_t C = protos.rows;
    const std::size_t K = protos.cols;
    if (label >= C) throw ArgumentError("loss: label out of range");

    std::vector<double> norms(C), cosines(C);
    std::vector<std::vector<float>> unit(C);
    for (std::size_t j = 0; j < C; ++j) {
        norms[j] = l2_norm(protos.row(j), K);
        if (norms[j] <= kNormEps) throw ArgumentError("loss: zero prototype row");
        unit[j].resize(K);
        for (std::size_t k = 0; k < K; ++k)
            unit[j][k] = static_cast<float>(protos.at(j, k) / norms[j]);
        cosines[j] = dot(embedding, unit[j].data(), K);
    }

    std::vector<double> logits(C);
    for (std::size_t j = 0; j < C; ++j) {
        logits[j] = logit_scale * cosines[j];
        if (j == label) logits[j] -= true_class_bias;
    }
    std::vector<double> p = stable_softmax(logits);

    LossResult result;
    result.loss = static_cast<float>(-std::log(std::max(p[label], 1e-300)));
    result.d_embedding.assign(K, 0.0f);
    result.d_prototypes = Tensor2(C, K);
    for (std::size_t j = 0; j < C; ++j) {
        double dcos = logit_scale * (p[j] - (j == label ? 1.0 : 0.0));
        for (std::size_t k = 0; k < K; ++k) {
            result.d_embedding[k] += static_cast<float>(dcos * unit[j][k]);
            // d cos_j / d proto_jk = (e_k - cos_j * unit_jk) / |proto_j|
            result.d_prototypes.at(j, k) = static_cast<float>(
                dcos * (embedding[k] - cosines[j] * unit[j][k]) / norms[j]);
        }
    }
    return result;
}

}  // namespace detail

// Normalized cross entropy: logits z_j = cos(theta_j) / tau.
inline LossResult norm_softmax_loss(const std::vector<float>& embedding,
                                    const Classifier& classifier, std::size_t label) {
    return detail::cosine_logit_loss(embedding.data(), classifier, label,
                                     1.0 / classifier.temperature, 0.0);
}

// Cosine margin: z_y = s (cos theta_y - m), z_j = s cos theta_j elsewhere.
inline LossResult cosine_margin_loss(const std::vector<float>& embedding,
                                     const Classifier& classifier, std::size_t label) {
    return detail::cosine_logit_loss(
        embedding.data(), classifier, label, classifier.scale,
        static_cast<double>(classifier.scale) * classifier.margin);
}

inline LossResult base_loss(LossKind kind, const std::vector<float>& embedding,
                            const Classifier& classifier, std::size_t label) {
    return kind == LossKind::NormSoftmax ? norm_softmax_loss(embedding, classifier, label)
                                         : cosine_margin_loss(embedding, classifier, label);
}

struct CompositeResult {
    float loss = 0.0f;
    std::vector<float> d_embedding;
    Tensor2 d_new_prototypes;  // gradient for kappa_q; kappa_g receives none
};

// loss = lambda1 * L_base(emb, kappa_q, y) + lambda2 * L_base(emb, kappa_g, y).
// The old classifier is frozen: no gradient is produced for it.
inline CompositeResult bct_composite_loss(const std::vector<float>& embedding,
                                          const Classifier& new_classifier,
                                          const Classifier& old_classifier,
                                          std::size_t label, const CompositeWeights& weights,
                                          LossKind base) {
    weights.validate();
    if (new_classifier.num_classes() != old_classifier.num_classes())
        throw ConfigError("bct_composite_loss: classifier class-count mismatch");

    CompositeResult result;
    result.d_embedding.assign(embedding.size(), 0.0f);
    result.d_new_prototypes =
        Tensor2(new_classifier.num_classes(), new_classifier.embed_dim());
    if (weights.lambda1 > 0.0f) {
        LossResult l1 = base_loss(base, embedding, new_classifier, label);
        result.loss += weights.lambda1 * l1.loss;
        for (std::size_t k = 0; k < embedding.size(); ++k)
            result.d_embedding[k] += weights.lambda1 * l1.d_embedding[k];
        for (std::size_t i = 0; i < result.d_new_prototypes.data.size(); ++i)
            result.d_new_prototypes.data[i] += weights.lambda1 * l1.d_prototypes.data[i];
    }
    if (weights.lambda2 > 0.0f) {
        LossResult l2 = base_loss(base, embedding, old_classifier, label);
        result.loss += weights.lambda2 * l2.loss;
        for (std::size_t k = 0; k < embedding.size(); ++k)
            result.d_embedding[k] += weights.lambda2 * l2.d_embedding[k];
    }
    return result;
}

struct KdResult {
    float loss = 0.0f;
    std::vector<float> d_student;  // teacher logits receive no gradient
};

// tau^2-scaled KL between temperature-softened teacher and student logits.
inline KdResult kd_loss(const std::vector<float>& student_logits,
                        const std::vector<float>& teacher_logits, float tau) {
    if (student_logits.size() != teacher_logits.size())
        throw ShapeError("kd_loss: logit length mismatch");
    if (!(tau > 0.0f)) throw ArgumentError("kd_loss: temperature must be > 0");
    const std::size_t C = student_logits.size();
    std::vector<double> zs(C), zt(C);
    for (std::size_t j = 0; j < C; ++j) {
        zs[j] = student_logits[j] / tau;
        zt[j] = teacher_logits[j] / tau;
    }
    std::vector<double> ps = detail::stable_softmax(zs);
    std::vector<double> pt = detail::stable_softmax(zt);
    double kl = 0.0;
    for (std::size_t j = 0; j < C; ++j)
        if (pt[j] > 0.0) kl += pt[j] * (std::log(pt[j]) - std::log(std::max(ps[j], 1e-300)));
    KdResult result;
    result.loss = static_cast<float>(tau * tau * std::max(kl, 0.0));
    result.d_student.resize(C);
    for (std::size_t j = 0; j < C; ++j)
        result.d_student[j] = static_cast<float>(tau * (ps[j] - pt[j]));
    return result;
}

// Classification logits a classifier assigns to an embedding, without the
// margin shift. Used as the distillation interface between models.
inline std::vector<float> classifier_logits(const Classifier& classifier,
                                            const std::vector<float>& embedding,
                                            LossKind kind) {
    const Tensor2& protos = classifier.prototypes;
    double scale = kind == LossKind::NormSoftmax ? 1.0 / classifier.temperature
                                                 : classifier.scale;
    std::vector<float> logits(protos.rows);
    std::vector<float> unit(protos.cols);
    for (std::size_t j = 0; j < protos.rows; ++j) {
        double norm = l2_norm(protos.row(j), protos.cols);
        if (norm <= kNormEps) throw ArgumentError("classifier_logits: zero prototype row");
        for (std::size_t k = 0; k < protos.cols; ++k)
            unit[k] = static_cast<float>(protos.at(j, k) / norm);
        logits[j] = static_cast<float>(scale * dot(embedding.data(), unit.data(), protos.cols));
    }
    return logits;
}

// Backward of classifier_logits: maps a gradient at the logits onto the
// embedding and the raw prototype rows.
inline LossResult backprop_classifier_logits(const Classifier& classifier,
                                             const std::vector<float>& embedding,
                                             LossKind kind,
                                             const std::vector<float>& d_logits) {
    const Tensor2& protos = classifier.prototypes;
    const std::size_t C = protos.rows;
    const std::size_t K = protos.cols;
    if (d_logits.size() != C) throw ShapeError("backprop_classifier_logits: bad gradient length");
    double scale = kind == LossKind::NormSoftmax ? 1.0 / classifier.temperature
                                                 : classifier.scale;
    LossResult result;
    result.d_embedding.assign(K, 0.0f);
    result.d_prototypes = Tensor2(C, K);
    std::vector<float> unit(K);
    for (std::size_t j = 0; j < C; ++j) {
        double norm = l2_norm(protos.row(j), K);
        for (std::size_t k = 0; k < K; ++k)
            unit[k] = static_cast<float>(protos.at(j, k) / norm);
        double cosine = dot(embedding.data(), unit.data(), K);
        double dcos = scale * d_logits[j];
        for (std::size_t k = 0; k < K; ++k) {
            result.d_embedding[k] += static_cast<float>(dcos * unit[k]);
            result.d_prototypes.at(j, k) =
                static_cast<float>(dcos * (embedding[k] - cosine * unit[k]) / norm);
        }
    }
    return result;
}

}  // namespace hvs
