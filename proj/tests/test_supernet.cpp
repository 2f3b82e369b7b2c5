#include <catch2/catch_amalgamated.hpp>

#include "hvs/supernet.hpp"

using namespace hvs;

namespace {

SearchSpace small_space() {
    SearchSpace s;
    s.num_layers = 2;
    s.block_kinds = 4;
    s.width_choices = {0.5, 1.0, 2.0};
    s.base_width = 8;
    s.embed_dim = 4;
    return s;
}

}  // namespace

TEST_CASE("search space validation") {
    SearchSpace s = small_space();
    REQUIRE_NOTHROW(s.validate());
    s.width_choices = {0.5, 0.5};
    REQUIRE_THROWS_AS(s.validate(), ArgumentError);
    s = small_space();
    s.width_choices.clear();
    REQUIRE_THROWS_AS(s.validate(), ArgumentError);
    s = small_space();
    s.block_kinds = 9;
    REQUIRE_THROWS_AS(s.validate(), ArgumentError);
    s = small_space();
    s.num_layers = 0;
    REQUIRE_THROWS_AS(s.validate(), ArgumentError);
}

TEST_CASE("sample_uniform respects bounds, determinism and uniformity") {
    SearchSpace s = small_space();
    Rng a(5), b(5);
    for (int i = 0; i < 50; ++i) {
        ArchDescriptor da = sample_uniform(s, a);
        ArchDescriptor db = sample_uniform(s, b);
        REQUIRE(da == db);
        REQUIRE_NOTHROW(validate_arch(s, da));
    }

    // Single-choice space has a unique descriptor.
    SearchSpace unique = small_space();
    unique.block_kinds = 1;
    unique.width_choices = {1.0};
    Rng r(9);
    ArchDescriptor d = sample_uniform(unique, r);
    REQUIRE(d.layers.size() == 2);
    for (const LayerChoice& c : d.layers) {
        REQUIRE(c.block == 0);
        REQUIRE(c.width == 0);
    }

    // Frequency of each block choice across draws within 3 sigma of uniform.
    Rng freq_rng(11);
    const int draws = 10000;
    std::vector<int> counts(4, 0);
    for (int i = 0; i < draws; ++i)
        counts[sample_uniform(s, freq_rng).layers[0].block] += 1;
    double expect = draws / 4.0;
    double sigma = std::sqrt(draws * 0.25 * 0.75);
    for (int c : counts) REQUIRE(std::abs(c - expect) <= 3.0 * sigma);
}

TEST_CASE("arch flop count is strictly monotone in width") {
    SearchSpace s = small_space();
    Rng rng(3);
    ArchDescriptor arch = sample_uniform(s, rng);
    arch.layers[0].width = 0;
    std::size_t narrow = count_flops(s, arch, 6);
    arch.layers[0].width = 1;
    std::size_t mid = count_flops(s, arch, 6);
    arch.layers[0].width = 2;
    std::size_t wide = count_flops(s, arch, 6);
    REQUIRE(narrow < mid);
    REQUIRE(mid < wide);
}

TEST_CASE("subnet_forward equals extract_standalone forward bit-exactly") {
    SearchSpace s = small_space();
    SuperNet sn = make_supernet(s, 6, 5, 17);
    Rng rng(23);
    for (int trial = 0; trial < 200; ++trial) {
        ArchDescriptor arch = sample_uniform(s, rng);
        std::vector<float> x(6);
        for (float& v : x) v = static_cast<float>(rng.uniform(-1.0, 1.0));
        std::vector<float> shared = subnet_forward(sn, arch, x.data());
        EmbeddingModel standalone = extract_standalone(sn, arch);
        std::vector<float> own = embed(standalone, x.data());
        REQUIRE(shared == own);
        // Flops agree between the descriptor and the extracted model.
        REQUIRE(count_flops(s, arch, 6) == count_flops(standalone));
    }
}

TEST_CASE("repeated extraction is idempotent") {
    SearchSpace s = small_space();
    SuperNet sn = make_supernet(s, 6, 5, 19);
    Rng rng(29);
    ArchDescriptor arch = sample_uniform(s, rng);
    EmbeddingModel once = extract_standalone(sn, arch);
    EmbeddingModel twice = extract_standalone(sn, arch);
    REQUIRE(model_fingerprint(once) == model_fingerprint(twice));
}

TEST_CASE("inactive block parameters do not affect subnet output") {
    SearchSpace s = small_space();
    SuperNet sn = make_supernet(s, 6, 5, 31);
    ArchDescriptor arch;
    arch.layers = {{0, 1}, {1, 1}};
    std::vector<float> x = {0.1f, -0.2f, 0.4f, 0.0f, 0.3f, -0.5f};
    std::vector<float> before = subnet_forward(sn, arch, x.data());
    // Scribble on blocks the arch does not use.
    for (float& v : sn.layers[0][3].l1.weight.data) v += 100.0f;
    for (float& v : sn.layers[1][2].l1.weight.data) v -= 50.0f;
    std::vector<float> after = subnet_forward(sn, arch, x.data());
    REQUIRE(before == after);
}

TEST_CASE("weight sharing is real: slices alias the supernet storage") {
    SearchSpace s = small_space();
    SuperNet sn = make_supernet(s, 6, 5, 37);
    ArchDescriptor a{{{1, 0}, {1, 2}}};
    ArchDescriptor b{{{1, 0}, {0, 1}}};
    ModelView va = subnet_view(sn, a);
    ModelView vb = subnet_view(sn, b);
    // Same layer-0 choice and width: identical pointers, not copies.
    REQUIRE(va.blocks[0].d1.w == vb.blocks[0].d1.w);
    REQUIRE(va.blocks[0].d1.b == vb.blocks[0].d1.b);
}

TEST_CASE("invalid descriptors are rejected") {
    SearchSpace s = small_space();
    SuperNet sn = make_supernet(s, 6, 5, 41);
    ArchDescriptor wrong_len{{{0, 0}}};
    REQUIRE_THROWS_AS(subnet_forward(sn, wrong_len, nullptr), ArgumentError);
    ArchDescriptor bad_block{{{7, 0}, {0, 0}}};
    REQUIRE_THROWS_AS(extract_standalone(sn, bad_block), ArgumentError);
    ArchDescriptor bad_width{{{0, 9}, {0, 0}}};
    REQUIRE_THROWS_AS(count_flops(s, bad_width, 6), ArgumentError);
}

TEST_CASE("single-choice supernet training matches plain training bit-exactly") {
    // With one block kind and one width the supernet has exactly one
    // sub-network; training it must reproduce plain model training.
    SearchSpace s;
    s.num_layers = 2;
    s.block_kinds = 1;  // Linear
    s.width_choices = {1.0};
    s.base_width = 8;
    s.embed_dim = 4;
    LabeledDataset train = generate_synthetic(5, 6, 6, 0.2, 43);

    const std::uint64_t seed = 7;
    SuperNet sn = make_supernet(s, 6, 5, seed);
    Classifier gallery_cls = sn.classifier;  // class-count compatible stand-in

    // Reference: plain model with identical initial weights and objective.
    EmbeddingModel ref;
    ref.input_dim = 6;
    ref.embed_dim = 4;
    ArchDescriptor only{{{0, 0}, {0, 0}}};
    ref = extract_standalone(sn, only);
    Classifier ref_cls = sn.classifier;

    TrainOptions opts;
    opts.epochs = 4;
    opts.batch_size = 8;
    opts.base_lr = 0.05f;
    opts.seed = seed;

    CompositeWeights w{1.0f, 1.0f};
    train_supernet(sn, train, 4, 0, w, gallery_cls, LossKind::NormSoftmax, opts);

    SampleObjective objective = [&](const std::vector<float>& e, std::uint32_t y,
                                    std::size_t, std::vector<float>& d_emb,
                                    Tensor2& d_cls) {
        CompositeResult r =
            bct_composite_loss(e, ref_cls, gallery_cls, y, w, LossKind::NormSoftmax);
        d_emb = r.d_embedding;
        for (std::size_t i = 0; i < d_cls.data.size(); ++i)
            d_cls.data[i] += r.d_new_prototypes.data[i];
        return r.loss;
    };
    train_embedding_model(ref, ref_cls, train, opts, objective);

    EmbeddingModel trained = extract_standalone(sn, only);
    REQUIRE(trained.blocks[0].l1.weight == ref.blocks[0].l1.weight);
    REQUIRE(trained.blocks[1].l1.weight == ref.blocks[1].l1.weight);
    REQUIRE(trained.head.weight == ref.head.weight);
    REQUIRE(sn.classifier.prototypes == ref_cls.prototypes);
}

TEST_CASE("post-warm-up updates touch only the sampled slice") {
    SearchSpace s = small_space();
    LabeledDataset train = generate_synthetic(5, 6, 6, 0.2, 47);
    SuperNet sn = make_supernet(s, 6, 5, 53);
    TrainOptions opts;
    opts.epochs = 1;
    opts.batch_size = 32;  // single batch -> single sampled arch
    opts.seed = 53;

    // Snapshot, then train one epoch with zero warm-up.
    SuperNet before = sn;
    train_supernet(sn, train, 1, 0, CompositeWeights{1.0f, 0.0f}, sn.classifier,
                   LossKind::NormSoftmax, opts);

    // Recover the arch that training sampled (same derived stream).
    Rng arch_rng(opts.seed ^ 0x9e3779b97f4a7c15ull);
    ArchDescriptor sampled = sample_uniform(s, arch_rng);

    for (std::size_t l = 0; l < s.num_layers; ++l)
        for (std::size_t k = 0; k < s.block_kinds; ++k) {
            bool active = sampled.layers[l].block == k;
            bool changed = !(sn.layers[l][k].l1.weight == before.layers[l][k].l1.weight);
            if (!active) REQUIRE_FALSE(changed);
        }
}

TEST_CASE("warm-up trains every block of every layer") {
    SearchSpace s = small_space();
    LabeledDataset train = generate_synthetic(5, 6, 6, 0.2, 59);
    SuperNet sn = make_supernet(s, 6, 5, 61);
    SuperNet before = sn;
    TrainOptions opts;
    opts.epochs = 1;
    opts.batch_size = 8;
    opts.seed = 61;
    train_supernet(sn, train, 1, 1, CompositeWeights{1.0f, 0.0f}, sn.classifier,
                   LossKind::NormSoftmax, opts);
    for (std::size_t l = 0; l < s.num_layers; ++l)
        for (std::size_t k = 0; k < s.block_kinds; ++k)
            REQUIRE_FALSE(sn.layers[l][k].l1.weight == before.layers[l][k].l1.weight);
}

TEST_CASE("train_supernet validates arguments") {
    SearchSpace s = small_space();
    LabeledDataset train = generate_synthetic(5, 6, 6, 0.2, 67);
    SuperNet sn = make_supernet(s, 6, 5, 71);
    TrainOptions opts;
    opts.epochs = 2;
    REQUIRE_THROWS_AS(train_supernet(sn, train, 2, 3, CompositeWeights{1.0f, 0.0f},
                                     sn.classifier, LossKind::NormSoftmax, opts),
                      ArgumentError);
    Rng rng(1);
    Classifier wrong = make_classifier(9, 4, rng);
    REQUIRE_THROWS_AS(train_supernet(sn, train, 2, 0, CompositeWeights{1.0f, 1.0f},
                                     wrong, LossKind::NormSoftmax, opts),
                      ConfigError);
}

TEST_CASE("make_arch_model builds the descriptor's shape with fresh weights") {
    SearchSpace s = small_space();
    ArchDescriptor arch{{{2, 1}, {3, 2}}};
    Rng rng(73);
    EmbeddingModel m = make_arch_model(s, arch, 6, rng);
    REQUIRE(m.blocks.size() == 2);
    REQUIRE(m.blocks[0].kind == BlockKind::Bottleneck);
    REQUIRE(m.blocks[0].out_dim() == 8);
    REQUIRE(m.blocks[1].kind == BlockKind::ResidualRelu);
    REQUIRE(m.blocks[1].out_dim() == 16);
    REQUIRE(count_flops(m) == count_flops(s, arch, 6));
}
