#pragma once

// Experiment harness: JSON-configured studies (method comparison, homogeneous
// vs heterogeneous accuracy correlation, search-reward ablation) with
// deterministic CSV/JSON result emission.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "hvs/compat_train.hpp"
#include "hvs/search.hpp"
#include "hvs/supernet.hpp"

namespace hvs {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

struct DatasetConfig {
    std::size_t identities = 120;
    std::size_t per_id = 20;
    std::size_t dim = 32;
    double noise = 0.4;
    std::uint64_t seed = 7;
};

struct SplitConfig {
    double train_frac = 0.8334;
    double val_frac = 0.1;
    std::size_t gallery_per_id = 3;
    double nonmated_id_frac = 0.25;
    std::uint64_t seed = 11;
};

struct GalleryConfig {
    std::vector<std::size_t> hidden = {256, 256};
    std::size_t embed_dim = 16;
    std::size_t epochs = 60;
    double base_lr = 0.05;
    std::size_t batch_size = 32;
    double jitter = 0.5;
    double weight_decay = 5e-4;
    std::string loss = "norm_softmax";
};

struct QueryConfig {
    std::size_t epochs = 80;
    double base_lr = 0.05;
    std::size_t batch_size = 32;
    double jitter = 0.5;
    double weight_decay = 5e-4;
    std::string loss = "norm_softmax";
    float lambda1 = 1.0f;
    float lambda2 = 4.0f;
    float kd_temperature = 4.0f;
    double prune_fraction = 0.9;
    // fine-tuning starts from inherited weights; a gentler schedule keeps the
    // embedding aligned with the gallery model
    std::size_t finetune_epochs = 20;
    double finetune_lr = 0.01;
};

struct SupernetConfig {
    std::size_t epochs = 30;
    std::size_t warmup_epochs = 6;
    double base_lr = 0.05;
    std::size_t batch_size = 32;
};

struct StudyConfig {
    std::size_t archs = 40;      // correlation study sample size
    std::size_t repeats = 3;
    std::size_t epochs = 20;     // per-architecture training budget
    std::size_t retrain_epochs = 60;  // ablation top-5 retraining
};

struct ExperimentConfig {
    DatasetConfig dataset;
    SplitConfig split;
    GalleryConfig gallery;
    QueryConfig query;
    // Desk-scale studies use a shallower space than the library default so
    // per-architecture training inside the studies stays reliable and fast.
    SearchSpace space{/*num_layers=*/3};
    SupernetConfig supernet;
    EvolutionConfig evolution{8, 20, 14, 0.1, 0.1, 0, 0};
    StudyConfig study;
    std::size_t test_topk = 1;
    std::size_t val_topk = 1;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
};

namespace detail {

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        detail::maybe(d, "identities", c.dataset.identities);
        detail::maybe(d, "per_id", c.dataset.per_id);
        detail::maybe(d, "dim", c.dataset.dim);
        detail::maybe(d, "noise", c.dataset.noise);
        detail::maybe(d, "seed", c.dataset.seed);
    }
    if (j.contains("split")) {
        const json& d = j.at("split");
        detail::maybe(d, "train_frac", c.split.train_frac);
        detail::maybe(d, "val_frac", c.split.val_frac);
        detail::maybe(d, "gallery_per_id", c.split.gallery_per_id);
        detail::maybe(d, "nonmated_id_frac", c.split.nonmated_id_frac);
        detail::maybe(d, "seed", c.split.seed);
    }
    if (j.contains("gallery")) {
        const json& d = j.at("gallery");
        detail::maybe(d, "hidden", c.gallery.hidden);
        detail::maybe(d, "embed_dim", c.gallery.embed_dim);
        detail::maybe(d, "epochs", c.gallery.epochs);
        detail::maybe(d, "base_lr", c.gallery.base_lr);
        detail::maybe(d, "batch_size", c.gallery.batch_size);
        detail::maybe(d, "jitter", c.gallery.jitter);
        detail::maybe(d, "weight_decay", c.gallery.weight_decay);
        detail::maybe(d, "loss", c.gallery.loss);
    }
    if (j.contains("query")) {
        const json& d = j.at("query");
        detail::maybe(d, "epochs", c.query.epochs);
        detail::maybe(d, "base_lr", c.query.base_lr);
        detail::maybe(d, "batch_size", c.query.batch_size);
        detail::maybe(d, "loss", c.query.loss);
        detail::maybe(d, "lambda1", c.query.lambda1);
        detail::maybe(d, "lambda2", c.query.lambda2);
        detail::maybe(d, "kd_temperature", c.query.kd_temperature);
        detail::maybe(d, "prune_fraction", c.query.prune_fraction);
        detail::maybe(d, "jitter", c.query.jitter);
        detail::maybe(d, "weight_decay", c.query.weight_decay);
        detail::maybe(d, "finetune_epochs", c.query.finetune_epochs);
        detail::maybe(d, "finetune_lr", c.query.finetune_lr);
    }
    if (j.contains("space")) {
        const json& d = j.at("space");
        detail::maybe(d, "num_layers", c.space.num_layers);
        detail::maybe(d, "block_kinds", c.space.block_kinds);
        detail::maybe(d, "width_choices", c.space.width_choices);
        detail::maybe(d, "base_width", c.space.base_width);
        detail::maybe(d, "embed_dim", c.space.embed_dim);
    }
    if (j.contains("supernet")) {
        const json& d = j.at("supernet");
        detail::maybe(d, "epochs", c.supernet.epochs);
        detail::maybe(d, "warmup_epochs", c.supernet.warmup_epochs);
        detail::maybe(d, "base_lr", c.supernet.base_lr);
        detail::maybe(d, "batch_size", c.supernet.batch_size);
    }
    if (j.contains("evolution")) {
        const json& d = j.at("evolution");
        detail::maybe(d, "generations", c.evolution.generations);
        detail::maybe(d, "population_size", c.evolution.population_size);
        detail::maybe(d, "crossover_size", c.evolution.crossover_size);
        detail::maybe(d, "mutate_prob", c.evolution.mutate_prob);
        detail::maybe(d, "random_select_prob", c.evolution.random_select_prob);
        detail::maybe(d, "flop_budget", c.evolution.flop_budget);
    }
    if (j.contains("study")) {
        const json& d = j.at("study");
        detail::maybe(d, "archs", c.study.archs);
        detail::maybe(d, "repeats", c.study.repeats);
        detail::maybe(d, "epochs", c.study.epochs);
        detail::maybe(d, "retrain_epochs", c.study.retrain_epochs);
    }
    detail::maybe(j, "test_topk", c.test_topk);
    detail::maybe(j, "val_topk", c.val_topk);
    detail::maybe(j, "seeds", c.seeds);
    return c;
}

inline json config_to_json(const ExperimentConfig& c) {
    return json{
        {"dataset",
         {{"identities", c.dataset.identities},
          {"per_id", c.dataset.per_id},
          {"dim", c.dataset.dim},
          {"noise", c.dataset.noise},
          {"seed", c.dataset.seed}}},
        {"split",
         {{"train_frac", c.split.train_frac},
          {"val_frac", c.split.val_frac},
          {"gallery_per_id", c.split.gallery_per_id},
          {"nonmated_id_frac", c.split.nonmated_id_frac},
          {"seed", c.split.seed}}},
        {"gallery",
         {{"hidden", c.gallery.hidden},
          {"embed_dim", c.gallery.embed_dim},
          {"epochs", c.gallery.epochs},
          {"base_lr", c.gallery.base_lr},
          {"batch_size", c.gallery.batch_size},
          {"jitter", c.gallery.jitter},
          {"weight_decay", c.gallery.weight_decay},
          {"loss", c.gallery.loss}}},
        {"query",
         {{"epochs", c.query.epochs},
          {"base_lr", c.query.base_lr},
          {"batch_size", c.query.batch_size},
          {"loss", c.query.loss},
          {"lambda1", c.query.lambda1},
          {"lambda2", c.query.lambda2},
          {"kd_temperature", c.query.kd_temperature},
          {"prune_fraction", c.query.prune_fraction},
          {"jitter", c.query.jitter},
          {"weight_decay", c.query.weight_decay},
          {"finetune_epochs", c.query.finetune_epochs},
          {"finetune_lr", c.query.finetune_lr}}},
        {"space",
         {{"num_layers", c.space.num_layers},
          {"block_kinds", c.space.block_kinds},
          {"width_choices", c.space.width_choices},
          {"base_width", c.space.base_width},
          {"embed_dim", c.space.embed_dim}}},
        {"supernet",
         {{"epochs", c.supernet.epochs},
          {"warmup_epochs", c.supernet.warmup_epochs},
          {"base_lr", c.supernet.base_lr},
          {"batch_size", c.supernet.batch_size}}},
        {"evolution",
         {{"generations", c.evolution.generations},
          {"population_size", c.evolution.population_size},
          {"crossover_size", c.evolution.crossover_size},
          {"mutate_prob", c.evolution.mutate_prob},
          {"random_select_prob", c.evolution.random_select_prob},
          {"flop_budget", c.evolution.flop_budget}}},
        {"study",
         {{"archs", c.study.archs},
          {"repeats", c.study.repeats},
          {"epochs", c.study.epochs},
          {"retrain_epochs", c.study.retrain_epochs}}},
        {"test_topk", c.test_topk},
        {"val_topk", c.val_topk},
        {"seeds", c.seeds}};
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ArgumentError("config: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError("config: " + std::string(e.what()));
    }
    return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Result tables

struct ResultTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

namespace detail {

inline std::string fmt_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw ArgumentError("median: empty");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw ArgumentError("pearson: need two equally sized samples");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace detail

// CSV with a header row, '.' decimal separator and LF line endings. Rows are
// emitted sorted by the first two columns (experiment id, then seed).
inline void emit_csv(const ResultTable& table, std::ostream& out) {
    auto write_row = [&out](const std::vector<std::string>& row) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i > 0) out << ',';
            out << row[i];
        }
        out << '\n';
    };
    write_row(table.header);
    std::vector<std::vector<std::string>> rows = table.rows;
    std::stable_sort(rows.begin(), rows.end(),
                     [](const std::vector<std::string>& a, const std::vector<std::string>& b) {
                         if (a[0] != b[0]) return a[0] < b[0];
                         return std::stoll(a[1]) < std::stoll(b[1]);
                     });
    for (const auto& row : rows) write_row(row);
}

inline void emit_csv(const ResultTable& table, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ArgumentError("emit_csv: cannot open " + path);
    emit_csv(table, out);
}

// Inverse of emit_csv for our own output dialect: no quoting, no embedded
// commas or newlines in fields.
inline ResultTable parse_csv(std::istream& in) {
    ResultTable table;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r')
            throw FormatError("parse_csv: expected LF line endings");
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            std::size_t comma = line.find(',', start);
            fields.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (first) {
            table.header = std::move(fields);
            first = false;
        } else {
            if (fields.size() != table.header.size())
                throw FormatError("parse_csv: row width does not match header");
            table.rows.push_back(std::move(fields));
        }
    }
    if (first) throw FormatError("parse_csv: missing header row");
    return table;
}

inline ResultTable parse_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArgumentError("parse_csv: cannot open " + path);
    return parse_csv(in);
}

inline json table_to_json(const ResultTable& table) {
    json rows = json::array();
    for (const auto& row : table.rows) {
        json obj;
        for (std::size_t i = 0; i < row.size(); ++i) obj[table.header[i]] = row[i];
        rows.push_back(obj);
    }
    return rows;
}

inline void emit_json(const json& j, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ArgumentError("emit_json: cannot open " + path);
    out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Shared per-seed setup

namespace detail {

struct SeedContext {
    OpenSetSplit split;
    TrainedEmbedding gallery;
    std::size_t gallery_flops = 0;
    EmbeddingIndex test_gallery_g;  // test gallery under the gallery model
};

inline TrainRecipe gallery_recipe(const ExperimentConfig& cfg, std::uint64_t seed) {
    TrainRecipe r;
    r.method = TrainMethod::Vanilla;
    r.loss = loss_kind_from_string(cfg.gallery.loss);
    r.opts.epochs = cfg.gallery.epochs;
    r.opts.batch_size = cfg.gallery.batch_size;
    r.opts.base_lr = static_cast<float>(cfg.gallery.base_lr);
    r.opts.jitter_sigma = cfg.gallery.jitter;
    r.opts.weight_decay = static_cast<float>(cfg.gallery.weight_decay);
    r.opts.seed = seed;
    return r;
}

inline TrainRecipe query_recipe(const ExperimentConfig& cfg, TrainMethod method,
                                std::uint64_t seed, std::size_t epochs_override = 0) {
    TrainRecipe r;
    r.method = method;
    r.loss = loss_kind_from_string(cfg.query.loss);
    r.weights = CompositeWeights{cfg.query.lambda1, cfg.query.lambda2};
    r.kd_temperature = cfg.query.kd_temperature;
    r.opts.epochs = epochs_override ? epochs_override : cfg.query.epochs;
    r.opts.batch_size = cfg.query.batch_size;
    r.opts.base_lr = static_cast<float>(cfg.query.base_lr);
    if (method == TrainMethod::Finetune && !epochs_override) {
        r.opts.epochs = cfg.query.finetune_epochs;
        r.opts.base_lr = static_cast<float>(cfg.query.finetune_lr);
    }
    r.opts.jitter_sigma = cfg.query.jitter;
    r.opts.weight_decay = static_cast<float>(cfg.query.weight_decay);
    r.opts.seed = seed;
    return r;
}

inline SeedContext make_seed_context(const ExperimentConfig& cfg, std::uint64_t seed) {
    SeedContext ctx;
    LabeledDataset data =
        generate_synthetic(cfg.dataset.identities, cfg.dataset.per_id, cfg.dataset.dim,
                           cfg.dataset.noise, cfg.dataset.seed + seed);
    ctx.split = make_open_set_split(data, cfg.split.train_frac, cfg.split.val_frac,
                                    cfg.split.gallery_per_id, cfg.split.nonmated_id_frac,
                                    cfg.split.seed + seed);
    ctx.gallery = train_gallery(ctx.split.train, cfg.gallery.hidden, cfg.gallery.embed_dim,
                                gallery_recipe(cfg, seed));
    ctx.gallery_flops = count_flops(ctx.gallery.model);
    ctx.test_gallery_g = embed_set(ctx.gallery.model, ctx.split.test_gallery);
    return ctx;
}

// Open-set top-k of a query model against the gallery enrolled by itself
// (homogeneous) and by the gallery model (heterogeneous).
struct PairAccuracy {
    double m_qq = 0.0;
    double m_qg = 0.0;
};

inline PairAccuracy evaluate_pair(const EmbeddingModel& query, const SeedContext& ctx,
                                  std::size_t topk) {
    EmbeddingIndex probes = embed_set(query, ctx.split.test_probe_mated);
    EmbeddingIndex gallery_q = embed_set(query, ctx.split.test_gallery);
    PairAccuracy acc;
    acc.m_qq = topk_accuracy(probes, gallery_q, topk);
    acc.m_qg = topk_accuracy(probes, ctx.test_gallery_g, topk);
    return acc;
}

inline std::string arch_of(const EmbeddingModel& m) {
    std::string s;
    for (const Block& b : m.blocks) {
        if (!s.empty()) s += '-';
        s += std::to_string(b.out_dim());
    }
    return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Method comparison

struct ConditionSummary {
    std::string condition;
    double median_m_qq = 0.0;
    double median_m_qg = 0.0;
};

struct MethodComparisonReport {
    ResultTable table;
    std::vector<ConditionSummary> summary;
    double chance = 0.0;  // 1 / number of enrolled test identities
};

// Each seed trains a gallery model, derives the query architecture by pruning
// (magnitude and activation variants) and trains it with all four methods.
inline MethodComparisonReport run_method_comparison(const ExperimentConfig& cfg) {
    MethodComparisonReport report;
    report.table.header = {"experiment", "seed",   "condition", "arch",
                           "query_flops", "gallery_flops", "m_qq", "m_qg", "compatible"};
    const TrainMethod methods[] = {TrainMethod::Vanilla, TrainMethod::Kd,
                                   TrainMethod::Finetune, TrainMethod::Bct};
    const PruneMethod prunes[] = {PruneMethod::Magnitude, PruneMethod::Activation};
    std::map<std::string, std::vector<double>> qq, qg;

    for (std::uint64_t seed : cfg.seeds) {
        detail::SeedContext ctx = detail::make_seed_context(cfg, seed);
        {
            std::vector<std::uint32_t> ids = ctx.split.test_gallery.labels;
            std::sort(ids.begin(), ids.end());
            ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
            report.chance = 1.0 / static_cast<double>(ids.size());
        }
        const std::size_t calib_rows = std::min<std::size_t>(256, ctx.split.train.size());
        Tensor2 calibration(calib_rows, ctx.split.train.dim());
        std::copy(ctx.split.train.features.data.begin(),
                  ctx.split.train.features.data.begin() + calibration.data.size(),
                  calibration.data.begin());

        for (PruneMethod pm : prunes) {
            PruneSpec spec{pm, cfg.query.prune_fraction};
            EmbeddingModel pruned = prune_model(ctx.gallery.model, spec, calibration);
            std::vector<std::size_t> widths;
            for (const Block& b : pruned.blocks) widths.push_back(b.out_dim());

            for (TrainMethod method : methods) {
                TrainRecipe recipe = detail::query_recipe(cfg, method, seed);
                EmbeddingModel init;
                if (method == TrainMethod::Finetune) {
                    init = pruned;
                } else {
                    Rng rng(recipe.opts.seed ^ 0x7f4a7c15u ^
                            static_cast<std::uint64_t>(method));
                    init = make_embedding_model(ctx.split.train.dim(), widths,
                                                cfg.gallery.embed_dim, BlockKind::LinearRelu,
                                                rng);
                }
                TrainedEmbedding trained =
                    train_query(ctx.split.train, init, recipe, &ctx.gallery.model,
                                &ctx.gallery.classifier);
                detail::PairAccuracy acc =
                    detail::evaluate_pair(trained.model, ctx, cfg.test_topk);

                std::string condition = to_string(method) + "/" +
                                        (pm == PruneMethod::Magnitude ? "magnitude"
                                                                      : "activation");
                qq[condition].push_back(acc.m_qq);
                qg[condition].push_back(acc.m_qg);
                report.table.rows.push_back(
                    {"method_comparison", std::to_string(seed), condition,
                     detail::arch_of(trained.model),
                     std::to_string(count_flops(trained.model)),
                     std::to_string(ctx.gallery_flops), detail::fmt_double(acc.m_qq),
                     detail::fmt_double(acc.m_qg),
                     check_compatibility(acc.m_qg, acc.m_qq) ? "1" : "0"});
            }
        }
    }
    for (const auto& [condition, values] : qq)
        report.summary.push_back(
            {condition, detail::median(values), detail::median(qg.at(condition))});
    return report;
}

// ---------------------------------------------------------------------------
// Correlation study

struct CorrelationReport {
    ResultTable table;
    std::vector<double> corr_hom_bct;      // per repeat: corr(hom BCT, het BCT)
    std::vector<double> corr_hom_vanilla;  // per repeat: corr(hom vanilla, het BCT)
    double median_corr_hom_bct = 0.0;
    double median_corr_hom_vanilla = 0.0;
};

// Samples architectures from the search space, trains each from scratch with
// and without the compatibility term, and correlates the homogeneous proxy
// accuracies with the heterogeneous target accuracy.
inline CorrelationReport run_correlation_study(const ExperimentConfig& cfg) {
    CorrelationReport report;
    report.table.header = {"experiment", "seed", "condition",   "arch",   "flops",
                           "hom_vanilla", "hom_bct", "het_bct"};
    for (std::size_t rep = 0; rep < cfg.study.repeats; ++rep) {
        const std::uint64_t seed = cfg.seeds[rep % cfg.seeds.size()];
        detail::SeedContext ctx = detail::make_seed_context(cfg, seed);
        Rng arch_rng(seed ^ 0xc0ffee);
        std::vector<double> hom_v, hom_b, het_b;
        for (std::size_t a = 0; a < cfg.study.archs; ++a) {
            ArchDescriptor arch = sample_uniform(cfg.space, arch_rng);
            std::vector<double> hom(2), het(2);
            for (int variant = 0; variant < 2; ++variant) {
                TrainMethod method = variant == 0 ? TrainMethod::Vanilla : TrainMethod::Bct;
                TrainRecipe recipe =
                    detail::query_recipe(cfg, method, seed, cfg.study.epochs);
                Rng init_rng(seed ^ (a * 2654435761u));
                EmbeddingModel init =
                    make_arch_model(cfg.space, arch, ctx.split.train.dim(), init_rng);
                TrainedEmbedding trained =
                    train_query(ctx.split.train, init, recipe, &ctx.gallery.model,
                                &ctx.gallery.classifier);
                detail::PairAccuracy acc =
                    detail::evaluate_pair(trained.model, ctx, cfg.test_topk);
                hom[variant] = acc.m_qq;
                het[variant] = acc.m_qg;
            }
            hom_v.push_back(hom[0]);
            hom_b.push_back(hom[1]);
            het_b.push_back(het[1]);
            report.table.rows.push_back(
                {"correlation_study", std::to_string(seed), "rep" + std::to_string(rep),
                 arch.to_string(),
                 std::to_string(count_flops(cfg.space, arch, ctx.split.train.dim())),
                 detail::fmt_double(hom[0]), detail::fmt_double(hom[1]),
                 detail::fmt_double(het[1])});
        }
        report.corr_hom_bct.push_back(detail::pearson(hom_b, het_b));
        report.corr_hom_vanilla.push_back(detail::pearson(hom_v, het_b));
    }
    report.median_corr_hom_bct = detail::median(report.corr_hom_bct);
    report.median_corr_hom_vanilla = detail::median(report.corr_hom_vanilla);
    return report;
}

// ---------------------------------------------------------------------------
// Reward ablation

struct RewardAblationReport {
    ResultTable table;
    std::map<std::string, double> median_het;  // condition -> median over seeds
};

// Conditions: vanilla supernet searched with R1, and the compatibility-trained
// supernet searched with R1, R2 and R3. The top-5 architectures of each search
// are retrained from scratch with the compatibility objective and judged by
// heterogeneous test accuracy (mean over the five).
inline RewardAblationReport run_reward_ablation(const ExperimentConfig& cfg) {
    RewardAblationReport report;
    report.table.header = {"experiment", "seed", "condition", "arch",
                           "flops",      "reward", "het"};
    struct Condition {
        const char* name;
        bool bct_supernet;
        RewardKind reward;
    };
    const Condition conditions[] = {{"vanilla+r1", false, RewardKind::R1},
                                    {"bct+r1", true, RewardKind::R1},
                                    {"bct+r2", true, RewardKind::R2},
                                    {"bct+r3", true, RewardKind::R3}};
    std::map<std::string, std::vector<double>> per_condition;

    for (std::uint64_t seed : cfg.seeds) {
        detail::SeedContext ctx = detail::make_seed_context(cfg, seed);

        TrainOptions sn_opts;
        sn_opts.epochs = cfg.supernet.epochs;
        sn_opts.batch_size = cfg.supernet.batch_size;
        sn_opts.base_lr = static_cast<float>(cfg.supernet.base_lr);
        sn_opts.seed = seed;
        LossKind loss = loss_kind_from_string(cfg.query.loss);

        SuperNet sn_vanilla = make_supernet(cfg.space, ctx.split.train.dim(),
                                            ctx.split.train.class_count, seed ^ 0x5151);
        train_supernet(sn_vanilla, ctx.split.train, cfg.supernet.epochs,
                       cfg.supernet.warmup_epochs, CompositeWeights{1.0f, 0.0f},
                       ctx.gallery.classifier, loss, sn_opts);
        SuperNet sn_bct = make_supernet(cfg.space, ctx.split.train.dim(),
                                        ctx.split.train.class_count, seed ^ 0x5151);
        train_supernet(sn_bct, ctx.split.train, cfg.supernet.epochs,
                       cfg.supernet.warmup_epochs,
                       CompositeWeights{cfg.query.lambda1, cfg.query.lambda2},
                       ctx.gallery.classifier, loss, sn_opts);

        RewardContext rctx =
            make_reward_context(ctx.split.val, ctx.gallery.model, cfg.val_topk);
        EvolutionConfig evo = cfg.evolution;
        evo.seed = seed;
        if (evo.flop_budget == 0)
            evo.flop_budget = median_flop_budget(cfg.space, ctx.split.train.dim());

        for (const Condition& cond : conditions) {
            const SuperNet& sn = cond.bct_supernet ? sn_bct : sn_vanilla;
            SearchLog log = evolve(sn, evo, cond.reward, rctx);
            std::vector<double> hets;
            for (const auto& [arch, reward] : log.top5) {
                TrainRecipe recipe = detail::query_recipe(cfg, TrainMethod::Bct, seed,
                                                          cfg.study.retrain_epochs);
                Rng init_rng(seed ^ std::hash<std::string>{}(arch.to_string()));
                EmbeddingModel init =
                    make_arch_model(cfg.space, arch, ctx.split.train.dim(), init_rng);
                TrainedEmbedding trained =
                    train_query(ctx.split.train, init, recipe, &ctx.gallery.model,
                                &ctx.gallery.classifier);
                detail::PairAccuracy acc =
                    detail::evaluate_pair(trained.model, ctx, cfg.test_topk);
                hets.push_back(acc.m_qg);
                report.table.rows.push_back(
                    {"reward_ablation", std::to_string(seed), cond.name, arch.to_string(),
                     std::to_string(count_flops(cfg.space, arch, ctx.split.train.dim())),
                     detail::fmt_double(reward), detail::fmt_double(acc.m_qg)});
            }
            double mean = 0.0;
            for (double h : hets) mean += h;
            mean /= static_cast<double>(hets.size());
            per_condition[cond.name].push_back(mean);
        }
    }
    for (const auto& [name, values] : per_condition)
        report.median_het[name] = detail::median(values);
    return report;
}

// ---------------------------------------------------------------------------
// Cost curves

inline ResultTable cost_curve_table(double gallery_flops, double query_flops,
                                    const std::vector<double>& ratios) {
    ResultTable t;
    t.header = {"experiment", "seed", "ratio", "amortized_flops"};
    for (double r : ratios)
        t.rows.push_back({"cost_curve", "0", detail::fmt_double(r),
                          detail::fmt_double(amortized_cost(gallery_flops, query_flops, r))});
    return t;
}

}  // namespace hvs
