#include <catch2/catch_amalgamated.hpp>

#include "hvs/losses.hpp"

using namespace hvs;

namespace {

Classifier make_classifier(std::size_t classes, std::size_t dim, Rng& rng) {
    Classifier c;
    c.prototypes = Tensor2(classes, dim);
    for (float& v : c.prototypes.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    return c;
}

std::vector<float> random_unit(std::size_t dim, Rng& rng) {
    std::vector<float> v(dim);
    for (float& x : v) x = static_cast<float>(rng.normal());
    l2_normalize(v.data(), v.size());
    return v;
}

// Double-precision re-implementation of the cosine-logit cross entropy, used
// as the finite-difference side so the check is free of float32 evaluation
// noise (per-coordinate float FD is only accurate to ~1e-3 here).
double oracle_cosine_loss(const std::vector<double>& emb, const std::vector<double>& protos,
                          std::size_t C, std::size_t K, std::size_t label, double scale,
                          double bias) {
    std::vector<double> logits(C);
    for (std::size_t j = 0; j < C; ++j) {
        double norm = 0.0;
        for (std::size_t k = 0; k < K; ++k) norm += protos[j * K + k] * protos[j * K + k];
        norm = std::sqrt(norm);
        double cos = 0.0;
        for (std::size_t k = 0; k < K; ++k) cos += emb[k] * protos[j * K + k] / norm;
        logits[j] = scale * cos - (j == label ? bias : 0.0);
    }
    double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double v : logits) z += std::exp(v - mx);
    return -(logits[label] - mx - std::log(z));
}

// Finite-difference check of a cosine-logit loss over embedding and prototype
// parameters against the double-precision oracle.
void fd_check(const std::vector<float>& embedding, const Classifier& classifier,
              std::size_t label, double scale, double bias,
              const std::vector<float>& d_embedding, const Tensor2& d_prototypes) {
    const double h = 1e-4;
    const std::size_t C = classifier.prototypes.rows, K = classifier.prototypes.cols;
    std::vector<double> emb(embedding.begin(), embedding.end());
    std::vector<double> protos(classifier.prototypes.data.begin(),
                               classifier.prototypes.data.end());
    auto rel_ok = [](double fd, double analytic) {
        double denom = std::max({std::abs(fd), std::abs(analytic), 1e-3});
        return std::abs(fd - analytic) / denom < 1e-3;
    };
    auto value = [&] { return oracle_cosine_loss(emb, protos, C, K, label, scale, bias); };
    for (std::size_t i = 0; i < emb.size(); ++i) {
        double saved = emb[i];
        emb[i] = saved + h;
        double up = value();
        emb[i] = saved - h;
        double down = value();
        emb[i] = saved;
        REQUIRE(rel_ok((up - down) / (2.0 * h), d_embedding[i]));
    }
    for (std::size_t i = 0; i < protos.size(); ++i) {
        double saved = protos[i];
        protos[i] = saved + h;
        double up = value();
        protos[i] = saved - h;
        double down = value();
        protos[i] = saved;
        REQUIRE(rel_ok((up - down) / (2.0 * h), d_prototypes.data[i]));
    }
}

}  // namespace

TEST_CASE("norm_softmax: uniform cosines give ln(C)") {
    // Prototypes identical to each other: every cosine equals the same value.
    const std::size_t C = 7, K = 4;
    Classifier c;
    c.prototypes = Tensor2(C, K);
    for (std::size_t j = 0; j < C; ++j) c.prototypes.at(j, 0) = 1.0f;
    std::vector<float> emb(K, 0.0f);
    emb[1] = 1.0f;
    LossResult r = norm_softmax_loss(emb, c, 3);
    REQUIRE(r.loss == Catch::Approx(std::log(double(C))).margin(1e-6));
}

TEST_CASE("norm_softmax temperature: tau=0.5 doubles logits vs tau=1") {
    Rng rng(21);
    Classifier c = make_classifier(5, 6, rng);
    std::vector<float> emb = random_unit(6, rng);

    c.temperature = 0.5f;
    LossResult r_half = norm_softmax_loss(emb, c, 2);

    // Direct formula evaluation with doubled-scale logits.
    std::vector<double> logits(5);
    for (std::size_t j = 0; j < 5; ++j) {
        std::vector<float> proto(c.prototypes.row(j), c.prototypes.row(j) + 6);
        l2_normalize(proto.data(), 6);
        logits[j] = dot(emb.data(), proto.data(), 6) / 0.5;
    }
    double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    double expected = -(logits[2] - mx - std::log(z));
    REQUIRE(r_half.loss == Catch::Approx(expected).margin(1e-6));

    c.temperature = 1.0f;
    LossResult r_one = norm_softmax_loss(emb, c, 2);
    REQUIRE(r_half.loss != Catch::Approx(r_one.loss).margin(1e-9));
}

TEST_CASE("norm_softmax: true prototype vs orthogonal negative, C=2, tau=0.5") {
    Classifier c;
    c.prototypes = Tensor2(2, 2);
    c.prototypes.at(0, 0) = 1.0f;
    c.prototypes.at(1, 1) = 1.0f;
    c.temperature = 0.5f;
    std::vector<float> emb = {1.0f, 0.0f};
    LossResult r = norm_softmax_loss(emb, c, 0);
    // logits 2 and 0: loss = -log(e^2/(e^2+1)) = ln(1+e^{-2})
    REQUIRE(r.loss == Catch::Approx(std::log(1.0 + std::exp(-2.0))).margin(1e-6));
}

TEST_CASE("norm_softmax rejects out-of-range label") {
    Rng rng(1);
    Classifier c = make_classifier(3, 4, rng);
    std::vector<float> emb = random_unit(4, rng);
    REQUIRE_THROWS_AS(norm_softmax_loss(emb, c, 3), ArgumentError);
}

TEST_CASE("cosine_margin with m=0 equals norm_softmax with tau=1/s") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        Classifier c = make_classifier(6, 5, rng);
        std::vector<float> emb = random_unit(5, rng);
        c.margin = 0.0f;
        c.scale = 12.0f;
        LossResult margin = cosine_margin_loss(emb, c, 1);
        c.temperature = 1.0f / 12.0f;
        LossResult softmax = norm_softmax_loss(emb, c, 1);
        REQUIRE(margin.loss == Catch::Approx(softmax.loss).margin(1e-6));
        for (std::size_t i = 0; i < emb.size(); ++i)
            REQUIRE(margin.d_embedding[i] ==
                    Catch::Approx(softmax.d_embedding[i]).margin(1e-6));
    }
}

TEST_CASE("cosine_margin closed form: cos=1 on true class, one negative at 0") {
    Classifier c;
    c.prototypes = Tensor2(2, 2);
    c.prototypes.at(0, 0) = 1.0f;
    c.prototypes.at(1, 1) = 1.0f;
    c.scale = 30.0f;
    c.margin = 0.4f;
    std::vector<float> emb = {1.0f, 0.0f};
    LossResult r = cosine_margin_loss(emb, c, 0);
    // z_y = 30*(1-0.4) = 18, z_neg = 0: loss = -log(e^18/(e^18+1))
    double expected = -std::log(std::exp(18.0) / (std::exp(18.0) + 1.0));
    REQUIRE(r.loss == Catch::Approx(expected).margin(1e-7));
}

TEST_CASE("cosine_margin loss never decreases as margin grows") {
    Rng rng(41);
    Classifier c = make_classifier(4, 5, rng);
    std::vector<float> emb = random_unit(5, rng);
    double prev = -1.0;
    for (float m : {0.0f, 0.2f, 0.4f, 0.8f}) {
        c.margin = m;
        LossResult r = cosine_margin_loss(emb, c, 2);
        REQUIRE(double(r.loss) >= prev - 1e-7);
        prev = r.loss;
    }
}

TEST_CASE("losses are non-negative") {
    Rng rng(51);
    for (int trial = 0; trial < 50; ++trial) {
        Classifier c = make_classifier(5, 4, rng);
        std::vector<float> emb = random_unit(4, rng);
        REQUIRE(norm_softmax_loss(emb, c, trial % 5).loss >= 0.0f);
        REQUIRE(cosine_margin_loss(emb, c, trial % 5).loss >= 0.0f);
    }
}

TEST_CASE("norm_softmax and cosine_margin gradients pass finite differences") {
    Rng rng(61);
    for (int trial = 0; trial < 10; ++trial) {
        Classifier c = make_classifier(4, 5, rng);
        std::vector<float> emb = random_unit(5, rng);
        std::size_t label = trial % 4;

        LossResult ns = norm_softmax_loss(emb, c, label);
        fd_check(emb, c, label, 1.0 / c.temperature, 0.0, ns.d_embedding, ns.d_prototypes);

        LossResult cm = cosine_margin_loss(emb, c, label);
        fd_check(emb, c, label, c.scale, double(c.scale) * c.margin, cm.d_embedding,
                 cm.d_prototypes);
    }
}

TEST_CASE("composite loss with lambda2=0 equals the plain objective") {
    Rng rng(71);
    Classifier kq = make_classifier(5, 4, rng);
    Classifier kg = make_classifier(5, 4, rng);
    std::vector<float> emb = random_unit(4, rng);
    CompositeResult comp = bct_composite_loss(emb, kq, kg, 2, {1.0f, 0.0f},
                                              LossKind::NormSoftmax);
    LossResult plain = norm_softmax_loss(emb, kq, 2);
    REQUIRE(comp.loss == Catch::Approx(plain.loss).margin(1e-7));
    for (std::size_t i = 0; i < emb.size(); ++i)
        REQUIRE(comp.d_embedding[i] == Catch::Approx(plain.d_embedding[i]).margin(1e-7));
}

TEST_CASE("composite loss with unit weights is the sum of both terms") {
    Rng rng(81);
    Classifier kq = make_classifier(6, 4, rng);
    Classifier kg = make_classifier(6, 4, rng);
    std::vector<float> emb = random_unit(4, rng);
    CompositeResult comp =
        bct_composite_loss(emb, kq, kg, 1, {1.0f, 1.0f}, LossKind::CosFace);
    LossResult a = cosine_margin_loss(emb, kq, 1);
    LossResult b = cosine_margin_loss(emb, kg, 1);
    REQUIRE(comp.loss == Catch::Approx(double(a.loss) + double(b.loss)).margin(1e-5));
}

TEST_CASE("composite loss produces no gradient for the frozen classifier") {
    // The result struct only carries gradients for the new classifier; verify
    // the new-classifier gradient matches the standalone term so nothing from
    // the frozen term leaks in, and the shape excludes the old classifier.
    Rng rng(91);
    Classifier kq = make_classifier(5, 4, rng);
    Classifier kg = make_classifier(5, 4, rng);
    std::vector<float> emb = random_unit(4, rng);
    CompositeResult comp = bct_composite_loss(emb, kq, kg, 3, {1.0f, 2.0f},
                                              LossKind::NormSoftmax);
    LossResult own = norm_softmax_loss(emb, kq, 3);
    for (std::size_t i = 0; i < comp.d_new_prototypes.data.size(); ++i)
        REQUIRE(comp.d_new_prototypes.data[i] ==
                Catch::Approx(own.d_prototypes.data[i]).margin(1e-6));
}

TEST_CASE("composite loss is linear in the weights") {
    Rng rng(101);
    Classifier kq = make_classifier(5, 4, rng);
    Classifier kg = make_classifier(5, 4, rng);
    std::vector<float> emb = random_unit(4, rng);
    CompositeResult one =
        bct_composite_loss(emb, kq, kg, 0, {0.7f, 1.3f}, LossKind::NormSoftmax);
    CompositeResult two =
        bct_composite_loss(emb, kq, kg, 0, {1.4f, 2.6f}, LossKind::NormSoftmax);
    REQUIRE(two.loss == Catch::Approx(2.0 * one.loss).margin(1e-5));
}

TEST_CASE("composite loss rejects class-count mismatch and bad weights") {
    Rng rng(111);
    Classifier kq = make_classifier(5, 4, rng);
    Classifier kg = make_classifier(6, 4, rng);
    std::vector<float> emb = random_unit(4, rng);
    REQUIRE_THROWS_AS(
        bct_composite_loss(emb, kq, kg, 0, {1.0f, 1.0f}, LossKind::NormSoftmax),
        ConfigError);
    Classifier kg2 = make_classifier(5, 4, rng);
    REQUIRE_THROWS_AS(
        bct_composite_loss(emb, kq, kg2, 0, {0.0f, 0.0f}, LossKind::NormSoftmax),
        ArgumentError);
}

TEST_CASE("kd_loss is zero for identical logits") {
    std::vector<float> logits = {1.0f, -2.0f, 0.5f};
    for (float tau : {0.5f, 1.0f, 4.0f}) {
        KdResult r = kd_loss(logits, logits, tau);
        REQUIRE(r.loss == 0.0f);
        for (float g : r.d_student) REQUIRE(g == Catch::Approx(0.0).margin(1e-7));
    }
}

TEST_CASE("kd_loss approaches its quadratic limit as temperature grows") {
    // With the tau^2 scaling, tau^2 * KL(p_t || p_s) tends to the centered
    // squared logit gap (1 / 2C) * sum_j ((t_j - s_j) - mean(t - s))^2 as
    // tau -> infinity, so large temperatures keep the loss informative
    // instead of flattening it to zero.
    std::vector<float> student = {1.0f, 0.0f, -1.0f};
    std::vector<float> teacher = {-0.5f, 2.0f, 0.25f};
    const std::size_t C = student.size();
    double mean_gap = 0.0;
    for (std::size_t j = 0; j < C; ++j) mean_gap += double(teacher[j]) - student[j];
    mean_gap /= double(C);
    double limit = 0.0;
    for (std::size_t j = 0; j < C; ++j) {
        double centered = (double(teacher[j]) - student[j]) - mean_gap;
        limit += centered * centered;
    }
    limit /= 2.0 * double(C);

    float huge_tau_loss = kd_loss(student, teacher, 1e3f).loss;
    REQUIRE(huge_tau_loss == Catch::Approx(limit).epsilon(0.01));

    // The unscaled divergence KL(p_t || p_s) = loss / tau^2 does vanish.
    REQUIRE(huge_tau_loss / 1e6 < 1e-5);
}

TEST_CASE("kd_loss matches a direct softmax+KL oracle on 3-class logits") {
    std::vector<float> student = {2.0f, 0.5f, -1.0f};
    std::vector<float> teacher = {1.0f, 1.5f, -0.5f};
    float tau = 2.0f;
    KdResult r = kd_loss(student, teacher, tau);

    auto softmax = [](std::vector<double> z) {
        double mx = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double& v : z) {
            v = std::exp(v - mx);
            sum += v;
        }
        for (double& v : z) v /= sum;
        return z;
    };
    std::vector<double> ps = softmax({2.0 / tau, 0.5 / tau, -1.0 / tau});
    std::vector<double> pt = softmax({1.0 / tau, 1.5 / tau, -0.5 / tau});
    double kl = 0.0;
    for (int j = 0; j < 3; ++j) kl += pt[j] * std::log(pt[j] / ps[j]);
    REQUIRE(r.loss == Catch::Approx(tau * tau * kl).margin(1e-6));
}

TEST_CASE("kd_loss gradient matches finite differences") {
    std::vector<float> student = {0.3f, -1.2f, 0.9f, 0.0f};
    std::vector<float> teacher = {1.1f, 0.2f, -0.4f, 0.6f};
    float tau = 3.0f;
    KdResult r = kd_loss(student, teacher, tau);
    const double h = 1e-3;
    for (std::size_t i = 0; i < student.size(); ++i) {
        float saved = student[i];
        student[i] = static_cast<float>(saved + h);
        double up = kd_loss(student, teacher, tau).loss;
        student[i] = static_cast<float>(saved - h);
        double down = kd_loss(student, teacher, tau).loss;
        student[i] = saved;
        double fd = (up - down) / (2.0 * h);
        double denom = std::max({std::abs(fd), std::abs(double(r.d_student[i])), 1e-3});
        REQUIRE(std::abs(fd - r.d_student[i]) / denom < 2e-3);
    }
}

TEST_CASE("kd_loss validates shapes and temperature") {
    std::vector<float> a = {1.0f, 2.0f};
    std::vector<float> b = {1.0f, 2.0f, 3.0f};
    REQUIRE_THROWS_AS(kd_loss(a, b, 1.0f), ShapeError);
    REQUIRE_THROWS_AS(kd_loss(a, a, 0.0f), ArgumentError);
}

TEST_CASE("loss kind parsing") {
    REQUIRE(loss_kind_from_string("norm_softmax") == LossKind::NormSoftmax);
    REQUIRE(loss_kind_from_string("cosface") == LossKind::CosFace);
    REQUIRE_THROWS_AS(loss_kind_from_string("hinge"), ArgumentError);
}
