#pragma once

// Evolutionary architecture search over a frozen supernet with
// compatibility-aware rewards and a flop budget.

#include <algorithm>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "hvs/retrieval.hpp"
#include "hvs/supernet.hpp"

namespace hvs {

enum class RewardKind {
    R1,  // homogeneous val metric M(phi_q, phi_q)
    R2,  // heterogeneous val metric M(phi_q, phi_g)
    R3,  // product of the two
};

inline RewardKind reward_from_string(const std::string& s) {
    if (s == "r1" || s == "R1") return RewardKind::R1;
    if (s == "r2" || s == "R2") return RewardKind::R2;
    if (s == "r3" || s == "R3") return RewardKind::R3;
    throw ArgumentError("unknown reward kind: " + s);
}

struct EvolutionConfig {
    std::size_t generations = 20;
    std::size_t population_size = 50;
    std::size_t crossover_size = 40;
    double mutate_prob = 0.1;
    double random_select_prob = 0.1;
    std::size_t flop_budget = 0;  // 0 means "no budget"
    std::uint64_t seed = 0;

    void validate() const {
        if (generations < 1 || population_size < 1)
            throw ArgumentError("evolution: generations and population must be >= 1");
        if (crossover_size > population_size)
            throw ArgumentError("evolution: crossover_size must be <= population_size");
        if (mutate_prob < 0.0 || mutate_prob > 1.0 || random_select_prob < 0.0 ||
            random_select_prob > 1.0)
            throw ArgumentError("evolution: probabilities must be in [0,1]");
    }
};

// Val-split retrieval protocol used to score candidates: the first sample of
// each identity enrolls as gallery, the rest are probes. Gallery-model
// embeddings are computed once and shared across all candidates.
struct RewardContext {
    LabeledDataset val_probes;
    LabeledDataset val_gallery;
    EmbeddingIndex gallery_embeddings;  // val gallery under the gallery model
    std::size_t topk = 5;
};

inline void split_val_probe_gallery(const LabeledDataset& val, LabeledDataset& probes,
                                    LabeledDataset& gallery) {
    std::vector<std::size_t> probe_rows, gallery_rows;
    std::vector<bool> seen(val.class_count, false);
    for (std::size_t r = 0; r < val.size(); ++r) {
        if (!seen[val.labels[r]]) {
            seen[val.labels[r]] = true;
            gallery_rows.push_back(r);
        } else {
            probe_rows.push_back(r);
        }
    }
    probes = detail::gather(val, probe_rows, val.class_count);
    gallery = detail::gather(val, gallery_rows, val.class_count);
}

inline RewardContext make_reward_context(const LabeledDataset& val,
                                         const EmbeddingModel& gallery_model,
                                         std::size_t topk = 5) {
    RewardContext ctx;
    split_val_probe_gallery(val, ctx.val_probes, ctx.val_gallery);
    if (ctx.val_probes.size() == 0)
        throw ConfigError("reward context: validation split has no probe samples");
    ctx.gallery_embeddings = embed_set(gallery_model, ctx.val_gallery);
    ctx.topk = topk;
    return ctx;
}

inline EmbeddingIndex embed_set_view(const ModelView& mv, const LabeledDataset& data,
                                     std::uint64_t producer = 0) {
    EmbeddingIndex index;
    index.embeddings = Tensor2(data.size(), mv.embed_dim);
    index.labels = data.labels;
    index.producer = producer;
    for (std::size_t r = 0; r < data.size(); ++r) {
        std::vector<float> e = view_embed(mv, data.features.row(r), nullptr);
        std::copy(e.begin(), e.end(), index.embeddings.row(r));
    }
    return index;
}

// Weight-inheritance reward: subnet embeddings straight from the supernet.
inline double evaluate_reward(const SuperNet& sn, const ArchDescriptor& arch,
                              RewardKind kind, const RewardContext& ctx) {
    ModelView mv = subnet_view(sn, arch);
    EmbeddingIndex probes = embed_set_view(mv, ctx.val_probes);
    double r1 = 0.0, r2 = 0.0;
    if (kind == RewardKind::R1 || kind == RewardKind::R3) {
        EmbeddingIndex gallery_q = embed_set_view(mv, ctx.val_gallery);
        r1 = topk_accuracy(probes, gallery_q, ctx.topk);
    }
    if (kind == RewardKind::R2 || kind == RewardKind::R3)
        r2 = topk_accuracy(probes, ctx.gallery_embeddings, ctx.topk);
    switch (kind) {
        case RewardKind::R1: return r1;
        case RewardKind::R2: return r2;
        default: return r1 * r2;
    }
}

// Each gene (block index or width index) is independently resampled uniformly
// with probability mutate_prob.
inline ArchDescriptor mutate(const ArchDescriptor& arch, const SearchSpace& space,
                             double mutate_prob, Rng& rng) {
    ArchDescriptor out = arch;
    for (LayerChoice& c : out.layers) {
        if (rng.uniform() < mutate_prob) c.block = rng.index(space.block_kinds);
        if (rng.uniform() < mutate_prob) c.width = rng.index(space.width_choices.size());
    }
    return out;
}

// Gene-wise uniform crossover.
inline ArchDescriptor crossover(const ArchDescriptor& a, const ArchDescriptor& b, Rng& rng) {
    if (a.layers.size() != b.layers.size())
        throw ArgumentError("crossover: descriptor length mismatch");
    ArchDescriptor child;
    child.layers.resize(a.layers.size());
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        child.layers[l].block = rng.uniform() < 0.5 ? a.layers[l].block : b.layers[l].block;
        child.layers[l].width = rng.uniform() < 0.5 ? a.layers[l].width : b.layers[l].width;
    }
    return child;
}

struct GenerationLog {
    std::vector<ArchDescriptor> archs;
    std::vector<double> rewards;
    std::vector<std::size_t> flops;
    double best_reward = 0.0;
};

struct SearchLog {
    std::vector<GenerationLog> generations;
    std::vector<std::pair<ArchDescriptor, double>> top5;  // best-first
};

// Deterministic median arch cost, used as the default flop budget.
inline std::size_t median_flop_budget(const SearchSpace& space, std::size_t input_dim) {
    Rng rng(0);
    std::vector<std::size_t> flops;
    for (int i = 0; i < 1001; ++i)
        flops.push_back(count_flops(space, sample_uniform(space, rng), input_dim));
    std::nth_element(flops.begin(), flops.begin() + flops.size() / 2, flops.end());
    return flops[flops.size() / 2];
}

namespace detail {

constexpr std::size_t kMaxRejections = 10000;

template <typename Gen>
ArchDescriptor sample_within_budget(const SearchSpace& space, std::size_t input_dim,
                                    std::size_t budget, Gen&& gen) {
    for (std::size_t attempt = 0; attempt < kMaxRejections; ++attempt) {
        ArchDescriptor arch = gen();
        if (budget == 0 || count_flops(space, arch, input_dim) <= budget) return arch;
    }
    throw ConfigError("evolve: no architecture within the flop budget after " +
                      std::to_string(kMaxRejections) + " rejections");
}

}  // namespace detail

// Elitist evolutionary search. Each generation keeps the top
// (population - crossover - random) candidates unchanged, fills crossover_size
// slots with mutated children of elite pairs and the rest with fresh uniform
// samples; every member respects the flop budget. Rewards are cached by
// descriptor, so re-visited architectures are not re-evaluated.
inline SearchLog evolve(const SuperNet& sn, const EvolutionConfig& config, RewardKind kind,
                        const RewardContext& ctx) {
    config.validate();
    const SearchSpace& space = sn.space;
    const std::size_t num_random = static_cast<std::size_t>(
        std::llround(config.random_select_prob * static_cast<double>(config.population_size)));
    if (config.crossover_size + num_random > config.population_size)
        throw ArgumentError("evolve: crossover + random exceeds population");
    const std::size_t num_elite = config.population_size - config.crossover_size - num_random;
    if (num_elite < 1) throw ArgumentError("evolve: need at least one elite slot");

    Rng rng(config.seed);
    std::map<ArchDescriptor, double> reward_cache;
    auto reward_of = [&](const ArchDescriptor& arch) {
        auto it = reward_cache.find(arch);
        if (it != reward_cache.end()) return it->second;
        double r = evaluate_reward(sn, arch, kind, ctx);
        reward_cache.emplace(arch, r);
        return r;
    };

    std::vector<ArchDescriptor> population;
    for (std::size_t i = 0; i < config.population_size; ++i)
        population.push_back(detail::sample_within_budget(
            space, sn.input_dim, config.flop_budget,
            [&] { return sample_uniform(space, rng); }));

    SearchLog log;
    for (std::size_t gen = 0; gen < config.generations; ++gen) {
        GenerationLog glog;
        glog.archs = population;
        for (const ArchDescriptor& arch : population) {
            glog.rewards.push_back(reward_of(arch));
            glog.flops.push_back(count_flops(space, arch, sn.input_dim));
        }
        glog.best_reward = *std::max_element(glog.rewards.begin(), glog.rewards.end());
        log.generations.push_back(glog);
        if (gen + 1 == config.generations) break;

        // rank current population, best first; break reward ties by descriptor
        std::vector<std::size_t> order(population.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (glog.rewards[a] != glog.rewards[b]) return glog.rewards[a] > glog.rewards[b];
            return population[a] < population[b];
        });

        std::vector<ArchDescriptor> next;
        for (std::size_t i = 0; i < num_elite; ++i) next.push_back(population[order[i]]);
        for (std::size_t i = 0; i < config.crossover_size; ++i)
            next.push_back(detail::sample_within_budget(
                space, sn.input_dim, config.flop_budget, [&] {
                    const ArchDescriptor& a = next[rng.index(num_elite)];
                    const ArchDescriptor& b = next[rng.index(num_elite)];
                    return mutate(crossover(a, b, rng), space, config.mutate_prob, rng);
                }));
        for (std::size_t i = 0; i < num_random; ++i)
            next.push_back(detail::sample_within_budget(
                space, sn.input_dim, config.flop_budget,
                [&] { return sample_uniform(space, rng); }));
        population = std::move(next);
    }

    // top-5 distinct architectures over everything evaluated
    std::vector<std::pair<ArchDescriptor, double>> ranked(reward_cache.begin(),
                                                          reward_cache.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    for (std::size_t i = 0; i < std::min<std::size_t>(5, ranked.size()); ++i)
        log.top5.push_back(ranked[i]);
    return log;
}

// All descriptors of a space; feasible only for tiny spaces.
inline std::vector<ArchDescriptor> enumerate_archs(const SearchSpace& space) {
    std::vector<ArchDescriptor> all;
    ArchDescriptor cur;
    cur.layers.resize(space.num_layers);
    std::size_t combos = 1;
    for (std::size_t l = 0; l < space.num_layers; ++l)
        combos *= space.block_kinds * space.width_choices.size();
    for (std::size_t idx = 0; idx < combos; ++idx) {
        std::size_t rem = idx;
        for (std::size_t l = 0; l < space.num_layers; ++l) {
            cur.layers[l].block = rem % space.block_kinds;
            rem /= space.block_kinds;
            cur.layers[l].width = rem % space.width_choices.size();
            rem /= space.width_choices.size();
        }
        all.push_back(cur);
    }
    return all;
}

}  // namespace hvs
