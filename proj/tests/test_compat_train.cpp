#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "hvs/compat_train.hpp"
#include "hvs/data.hpp"

using namespace hvs;

namespace {

LabeledDataset small_train() { return generate_synthetic(8, 6, 12, 0.1, 5); }

TrainRecipe quick_recipe(TrainMethod method, std::uint64_t seed = 7) {
    TrainRecipe r;
    r.method = method;
    r.loss = LossKind::NormSoftmax;
    r.opts.epochs = 6;
    r.opts.batch_size = 16;
    r.opts.base_lr = 0.05f;
    r.opts.seed = seed;
    return r;
}

TrainedEmbedding small_gallery(const LabeledDataset& train) {
    return train_gallery(train, {24, 24}, 8, quick_recipe(TrainMethod::Vanilla, 3));
}

std::vector<float> forward_embed(const EmbeddingModel& m, const float* x) {
    return embed(m, x);
}

}  // namespace

TEST_CASE("method and prune-method string parsing round-trips") {
    for (const char* name : {"vanilla", "kd", "finetune", "bct"})
        CHECK(to_string(method_from_string(name)) == name);
    CHECK_THROWS_AS(method_from_string("distill"), ArgumentError);
    CHECK(prune_method_from_string("magnitude") == PruneMethod::Magnitude);
    CHECK(prune_method_from_string("activation") == PruneMethod::Activation);
    CHECK_THROWS_AS(prune_method_from_string("random"), ArgumentError);
}

TEST_CASE("PruneSpec rejects fractions outside [0,1)") {
    PruneSpec s;
    s.fraction = 1.0;
    CHECK_THROWS_AS(s.validate(), ArgumentError);
    s.fraction = -0.1;
    CHECK_THROWS_AS(s.validate(), ArgumentError);
    s.fraction = 0.0;
    CHECK_NOTHROW(s.validate());
}

TEST_CASE("train_gallery rejects non-vanilla recipes") {
    LabeledDataset train = small_train();
    CHECK_THROWS_AS(train_gallery(train, {16}, 8, quick_recipe(TrainMethod::Bct)),
                    ConfigError);
}

TEST_CASE("train_gallery is deterministic for a fixed seed") {
    LabeledDataset train = small_train();
    TrainedEmbedding a = small_gallery(train);
    TrainedEmbedding b = small_gallery(train);
    CHECK(model_fingerprint(a.model) == model_fingerprint(b.model));
    CHECK(a.classifier.prototypes.data == b.classifier.prototypes.data);
}

TEST_CASE("prune keeps the expected unit counts") {
    LabeledDataset train = small_train();
    TrainedEmbedding gal = train_gallery(train, {20, 20}, 8,
                                         quick_recipe(TrainMethod::Vanilla, 3));
    PruneSpec spec;
    spec.method = PruneMethod::Magnitude;

    SECTION("fraction 0.9 on width-20 layers leaves width 2") {
        spec.fraction = 0.9;
        EmbeddingModel pruned = prune_model(gal.model, spec, Tensor2());
        REQUIRE(pruned.blocks.size() == 2);
        CHECK(pruned.blocks[0].out_dim() == 2);
        CHECK(pruned.blocks[1].out_dim() == 2);
        CHECK(pruned.embed_dim == 8);  // head width preserved
    }
    SECTION("fraction 0.5 leaves width 10") {
        spec.fraction = 0.5;
        EmbeddingModel pruned = prune_model(gal.model, spec, Tensor2());
        CHECK(pruned.blocks[0].out_dim() == 10);
    }
    SECTION("over-pruning is a configuration error") {
        spec.fraction = 0.99;
        CHECK_THROWS_AS(prune_model(gal.model, spec, Tensor2()), ConfigError);
    }
}

TEST_CASE("prune with fraction zero is the identity") {
    LabeledDataset train = small_train();
    TrainedEmbedding gal = small_gallery(train);
    PruneSpec spec;
    spec.fraction = 0.0;
    for (PruneMethod m : {PruneMethod::Magnitude, PruneMethod::Activation}) {
        spec.method = m;
        EmbeddingModel pruned = prune_model(gal.model, spec, train.features);
        CHECK(model_fingerprint(pruned) == model_fingerprint(gal.model));
    }
}

TEST_CASE("magnitude pruning keeps units with the largest outgoing L1 norm") {
    LabeledDataset train = small_train();
    TrainedEmbedding gal = train_gallery(train, {20}, 8,
                                         quick_recipe(TrainMethod::Vanilla, 3));
    PruneSpec spec;
    spec.method = PruneMethod::Magnitude;
    spec.fraction = 0.7;  // keep 6 of 20
    EmbeddingModel pruned = prune_model(gal.model, spec, Tensor2());
    REQUIRE(pruned.blocks[0].out_dim() == 6);

    // Oracle: rank units by the L1 norm of their column in the head weight.
    const Tensor2& head_w = gal.model.head.weight;
    std::vector<double> l1(20, 0.0);
    for (std::size_t u = 0; u < 20; ++u)
        for (std::size_t r = 0; r < head_w.rows; ++r) l1[u] += std::abs(head_w.at(r, u));
    std::vector<std::size_t> order(20);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return l1[a] > l1[b]; });
    std::set<std::size_t> expected(order.begin(), order.begin() + 6);

    // Recover kept units by matching pruned rows against original rows.
    const Tensor2& orig_w = gal.model.blocks[0].l1.weight;
    const Tensor2& kept_w = pruned.blocks[0].l1.weight;
    for (std::size_t i = 0; i < 6; ++i) {
        bool found = false;
        for (std::size_t u : expected) {
            if (std::equal(kept_w.row(i), kept_w.row(i) + kept_w.cols, orig_w.row(u))) {
                found = true;
                break;
            }
        }
        CHECK(found);
    }
}

TEST_CASE("activation pruning keeps units with the largest mean absolute output") {
    LabeledDataset train = small_train();
    TrainedEmbedding gal = train_gallery(train, {16}, 8,
                                         quick_recipe(TrainMethod::Vanilla, 3));
    Tensor2 calib = train.features;
    PruneSpec spec;
    spec.method = PruneMethod::Activation;
    spec.fraction = 0.5;  // keep 8 of 16
    EmbeddingModel pruned = prune_model(gal.model, spec, calib);
    REQUIRE(pruned.blocks[0].out_dim() == 8);

    // Oracle: mean |relu(Wx+b)| per unit over the calibration batch.
    std::vector<double> mean_act(16, 0.0);
    const DenseLayer& l = gal.model.blocks[0].l1;
    for (std::size_t s = 0; s < calib.rows; ++s) {
        for (std::size_t u = 0; u < 16; ++u) {
            double pre = l.bias[u];
            for (std::size_t c = 0; c < calib.cols; ++c)
                pre += static_cast<double>(l.weight.at(u, c)) * calib.at(s, c);
            mean_act[u] += std::abs(std::max(0.0, pre));
        }
    }
    std::vector<std::size_t> order(16);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return mean_act[a] > mean_act[b]; });
    std::set<std::size_t> expected(order.begin(), order.begin() + 8);

    const Tensor2& orig_w = l.weight;
    const Tensor2& kept_w = pruned.blocks[0].l1.weight;
    for (std::size_t i = 0; i < 8; ++i) {
        bool found = false;
        for (std::size_t u : expected)
            if (std::equal(kept_w.row(i), kept_w.row(i) + kept_w.cols, orig_w.row(u)))
                found = true;
        CHECK(found);
    }
}

TEST_CASE("activation pruning without a calibration batch is an error") {
    LabeledDataset train = small_train();
    TrainedEmbedding gal = small_gallery(train);
    PruneSpec spec;
    spec.method = PruneMethod::Activation;
    spec.fraction = 0.5;
    CHECK_THROWS_AS(prune_model(gal.model, spec, Tensor2()), ArgumentError);
}

TEST_CASE("pruned model forward equals original restricted to kept units") {
    // With fraction 0 the pruned model is bitwise identical, so the forward
    // pass must match exactly on arbitrary inputs.
    LabeledDataset train = small_train();
    TrainedEmbedding gal = small_gallery(train);
    PruneSpec spec;
    spec.fraction = 0.0;
    EmbeddingModel pruned = prune_model(gal.model, spec, Tensor2());
    for (std::size_t r = 0; r < 10; ++r) {
        std::vector<float> a = forward_embed(gal.model, train.features.row(r));
        std::vector<float> b = forward_embed(pruned, train.features.row(r));
        CHECK(a == b);
    }
}

TEST_CASE("bottleneck blocks are not prunable") {
    Rng rng(2);
    EmbeddingModel m = make_embedding_model(12, {16}, 8, BlockKind::Bottleneck, rng);
    PruneSpec spec;
    spec.fraction = 0.5;
    CHECK_THROWS_AS(prune_model(m, spec, Tensor2()), ConfigError);
}

TEST_CASE("train_query requires a gallery checkpoint for non-vanilla methods") {
    LabeledDataset train = small_train();
    Rng rng(4);
    EmbeddingModel init = make_embedding_model(12, {16}, 8, BlockKind::LinearRelu, rng);
    for (TrainMethod m : {TrainMethod::Kd, TrainMethod::Finetune, TrainMethod::Bct})
        CHECK_THROWS_AS(train_query(train, init, quick_recipe(m), nullptr, nullptr),
                        ConfigError);
    CHECK_NOTHROW(
        train_query(train, init, quick_recipe(TrainMethod::Vanilla), nullptr, nullptr));
}

TEST_CASE("train_query rejects a gallery classifier with a different label space") {
    LabeledDataset train = small_train();  // 8 identities
    TrainedEmbedding gal = small_gallery(train);
    LabeledDataset other = generate_synthetic(5, 6, 12, 0.1, 5);  // 5 identities
    Rng rng(4);
    EmbeddingModel init = make_embedding_model(12, {16}, 8, BlockKind::LinearRelu, rng);
    CHECK_THROWS_AS(train_query(other, init, quick_recipe(TrainMethod::Bct), &gal.model,
                                &gal.classifier),
                    ConfigError);
}

TEST_CASE("finetune initialization from a fraction-0 prune matches the gallery forward") {
    LabeledDataset train = small_train();
    TrainedEmbedding gal = small_gallery(train);
    PruneSpec spec;
    spec.fraction = 0.0;
    EmbeddingModel init = prune_model(gal.model, spec, Tensor2());
    for (std::size_t r = 0; r < train.size(); ++r)
        CHECK(forward_embed(init, train.features.row(r)) ==
              forward_embed(gal.model, train.features.row(r)));
}

TEST_CASE("finetune starts from the gallery classifier") {
    LabeledDataset train = small_train();
    TrainedEmbedding gal = small_gallery(train);
    TrainRecipe r = quick_recipe(TrainMethod::Finetune);
    r.opts.epochs = 0;  // no updates: output state is the initialization
    TrainedEmbedding q = train_query(train, gal.model, r, &gal.model, &gal.classifier);
    CHECK(q.classifier.prototypes.data == gal.classifier.prototypes.data);
}

TEST_CASE("finetune rejects an embedding dimension mismatch") {
    LabeledDataset train = small_train();
    TrainedEmbedding gal = small_gallery(train);  // embed_dim 8
    Rng rng(4);
    EmbeddingModel init = make_embedding_model(12, {16}, 6, BlockKind::LinearRelu, rng);
    CHECK_THROWS_AS(train_query(train, init, quick_recipe(TrainMethod::Finetune),
                                &gal.model, &gal.classifier),
                    ConfigError);
}

TEST_CASE("no query-training method mutates the gallery checkpoint") {
    LabeledDataset train = small_train();
    TrainedEmbedding gal = small_gallery(train);
    std::uint64_t model_fp = model_fingerprint(gal.model);
    std::vector<float> proto_copy = gal.classifier.prototypes.data;
    Rng rng(4);
    EmbeddingModel init = make_embedding_model(12, {16}, 8, BlockKind::LinearRelu, rng);
    for (TrainMethod m :
         {TrainMethod::Vanilla, TrainMethod::Kd, TrainMethod::Finetune, TrainMethod::Bct}) {
        const EmbeddingModel& start = m == TrainMethod::Finetune ? gal.model : init;
        train_query(train, start, quick_recipe(m), &gal.model, &gal.classifier);
        CHECK(model_fingerprint(gal.model) == model_fp);
        CHECK(gal.classifier.prototypes.data == proto_copy);
    }
}

TEST_CASE("train_query is deterministic for a fixed seed") {
    LabeledDataset train = small_train();
    TrainedEmbedding gal = small_gallery(train);
    Rng rng(4);
    EmbeddingModel init = make_embedding_model(12, {16}, 8, BlockKind::LinearRelu, rng);
    for (TrainMethod m : {TrainMethod::Vanilla, TrainMethod::Kd, TrainMethod::Bct}) {
        TrainedEmbedding a = train_query(train, init, quick_recipe(m), &gal.model,
                                         &gal.classifier);
        TrainedEmbedding b = train_query(train, init, quick_recipe(m), &gal.model,
                                         &gal.classifier);
        CHECK(model_fingerprint(a.model) == model_fingerprint(b.model));
    }
}

TEST_CASE("vanilla train_query matches bct with lambda2 = 0") {
    LabeledDataset train = small_train();
    TrainedEmbedding gal = small_gallery(train);
    Rng rng(4);
    EmbeddingModel init = make_embedding_model(12, {16}, 8, BlockKind::LinearRelu, rng);
    TrainRecipe vr = quick_recipe(TrainMethod::Vanilla);
    TrainRecipe br = quick_recipe(TrainMethod::Bct);
    br.weights = CompositeWeights{1.0f, 0.0f};
    TrainedEmbedding v = train_query(train, init, vr, nullptr, nullptr);
    TrainedEmbedding b = train_query(train, init, br, &gal.model, &gal.classifier);
    CHECK(model_fingerprint(v.model) == model_fingerprint(b.model));
}

TEST_CASE("save_trained and load_trained round-trip exactly") {
    LabeledDataset train = small_train();
    TrainedEmbedding gal = small_gallery(train);
    std::string path = "trained_roundtrip.ckpt";
    save_trained(gal, path);
    TrainedEmbedding loaded = load_trained(path);
    std::remove(path.c_str());
    CHECK(model_fingerprint(loaded.model) == model_fingerprint(gal.model));
    CHECK(loaded.classifier.prototypes.data == gal.classifier.prototypes.data);
    CHECK(loaded.classifier.scale == gal.classifier.scale);
    CHECK(loaded.classifier.margin == gal.classifier.margin);
}

TEST_CASE("gallery training separates zero-noise data perfectly") {
    LabeledDataset train = generate_synthetic(6, 5, 16, 0.0, 9);
    TrainRecipe r = quick_recipe(TrainMethod::Vanilla, 1);
    r.opts.epochs = 30;
    TrainedEmbedding gal = train_gallery(train, {24}, 8, r);
    // Nearest-prototype classification on the training set.
    std::size_t correct = 0;
    for (std::size_t i = 0; i < train.size(); ++i) {
        std::vector<float> e = embed(gal.model, train.features.row(i));
        std::vector<float> logits = classifier_logits(gal.classifier, e, LossKind::NormSoftmax);
        std::size_t arg = std::max_element(logits.begin(), logits.end()) - logits.begin();
        if (arg == train.labels[i]) ++correct;
    }
    CHECK(correct == train.size());
}
