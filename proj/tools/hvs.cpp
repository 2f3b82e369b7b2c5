// hvs command-line tool: data generation, training, pruning, architecture
// search, retrieval evaluation and the experiment studies.

#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hvs/harness.hpp"

namespace {

constexpr const char* kArtifactVersion = "1.0.0";

std::vector<std::size_t> parse_widths(const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stoul(item));
    return out;
}

std::vector<double> parse_doubles(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
    return out;
}

void write_train_log(const std::vector<hvs::EpochStat>& stats, const std::string& path) {
    hvs::json log = hvs::json::array();
    for (const hvs::EpochStat& s : stats)
        log.push_back({{"epoch", s.epoch}, {"loss", s.mean_loss}, {"lr", s.lr}});
    hvs::emit_json(log, path);
}

hvs::SearchSpace load_space(const std::string& path) {
    if (path.empty()) return hvs::SearchSpace{};
    std::ifstream in(path);
    if (!in) throw hvs::ArgumentError("cannot open space config " + path);
    hvs::json j;
    in >> j;
    hvs::SearchSpace space;
    hvs::detail::maybe(j, "num_layers", space.num_layers);
    hvs::detail::maybe(j, "block_kinds", space.block_kinds);
    hvs::detail::maybe(j, "width_choices", space.width_choices);
    hvs::detail::maybe(j, "base_width", space.base_width);
    hvs::detail::maybe(j, "embed_dim", space.embed_dim);
    space.validate();
    return space;
}

}  // namespace

int main(int argc, char** argv) {
    using namespace hvs;
    CLI::App app{"compatibility-aware heterogeneous visual search toolkit"};
    app.require_subcommand(0, 1);

    bool show_version = false;
    app.add_flag("--version", show_version, "print artifact and format versions");

    // gen-data ---------------------------------------------------------------
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic identity dataset");
    struct {
        std::size_t identities = 120, per_id = 20, dim = 32;
        double noise = 0.4;
        std::uint64_t seed = 7;
        std::string out;
    } gd;
    gen->add_option("--identities", gd.identities);
    gen->add_option("--per-id", gd.per_id);
    gen->add_option("--dim", gd.dim);
    gen->add_option("--noise", gd.noise);
    gen->add_option("--seed", gd.seed);
    gen->add_option("--out", gd.out)->required();

    // split-data -------------------------------------------------------------
    auto* spl = app.add_subcommand("split-data", "make an identity-disjoint open-set split");
    struct {
        std::string data, out;
        double train_frac = 0.8334, val_frac = 0.1, nonmated_frac = 0.25;
        std::size_t gallery_per_id = 3;
        std::uint64_t seed = 11;
    } sd;
    spl->add_option("--data", sd.data)->required();
    spl->add_option("--train-frac", sd.train_frac);
    spl->add_option("--val-frac", sd.val_frac);
    spl->add_option("--gallery-per-id", sd.gallery_per_id);
    spl->add_option("--nonmated-frac", sd.nonmated_frac);
    spl->add_option("--seed", sd.seed);
    spl->add_option("--out", sd.out)->required();

    // train-gallery ----------------------------------------------------------
    auto* tg = app.add_subcommand("train-gallery", "train the gallery embedding model");
    struct {
        std::string split, out, log, loss = "norm_softmax", hidden = "256,256";
        std::size_t embed_dim = 16, epochs = 60, batch = 32;
        double lr = 0.05, jitter = 0.5, wd = 5e-4;
        std::uint64_t seed = 1;
    } tga;
    tg->add_option("--split", tga.split)->required();
    tg->add_option("--hidden", tga.hidden);
    tg->add_option("--embed-dim", tga.embed_dim);
    tg->add_option("--epochs", tga.epochs);
    tg->add_option("--lr", tga.lr);
    tg->add_option("--batch", tga.batch);
    tg->add_option("--jitter", tga.jitter);
    tg->add_option("--wd", tga.wd);
    tg->add_option("--loss", tga.loss);
    tg->add_option("--seed", tga.seed);
    tg->add_option("--out", tga.out)->required();
    tg->add_option("--log", tga.log);

    // train-query ------------------------------------------------------------
    auto* tq = app.add_subcommand("train-query", "train a query model with one method");
    struct {
        std::string split, gallery, out, log, method = "bct", loss = "norm_softmax";
        std::string prune_method = "magnitude";
        double prune_fraction = 0.9;
        double lambda1 = 1.0, lambda2 = 4.0, kd_tau = 4.0;
        std::size_t epochs = 80, batch = 32;
        double lr = 0.05, jitter = 0.5, wd = 5e-4;
        std::uint64_t seed = 1;
    } tqa;
    tq->add_option("--split", tqa.split)->required();
    tq->add_option("--gallery-ckpt", tqa.gallery)->required();
    tq->add_option("--method", tqa.method);
    tq->add_option("--prune-method", tqa.prune_method);
    tq->add_option("--prune-fraction", tqa.prune_fraction);
    tq->add_option("--lambda1", tqa.lambda1);
    tq->add_option("--lambda2", tqa.lambda2);
    tq->add_option("--kd-tau", tqa.kd_tau);
    tq->add_option("--epochs", tqa.epochs);
    tq->add_option("--lr", tqa.lr);
    tq->add_option("--batch", tqa.batch);
    tq->add_option("--jitter", tqa.jitter);
    tq->add_option("--wd", tqa.wd);
    tq->add_option("--loss", tqa.loss);
    tq->add_option("--seed", tqa.seed);
    tq->add_option("--out", tqa.out)->required();
    tq->add_option("--log", tqa.log);

    // prune ------------------------------------------------------------------
    auto* pr = app.add_subcommand("prune", "structurally prune a trained model");
    struct {
        std::string ckpt, split, out, method = "magnitude";
        double fraction = 0.9;
    } pra;
    pr->add_option("--ckpt", pra.ckpt)->required();
    pr->add_option("--split", pra.split)->required();
    pr->add_option("--method", pra.method);
    pr->add_option("--fraction", pra.fraction);
    pr->add_option("--out", pra.out)->required();

    // train-supernet ---------------------------------------------------------
    auto* ts = app.add_subcommand("train-supernet", "train the one-shot supernet");
    struct {
        std::string split, gallery, space, out, log, loss = "norm_softmax";
        std::size_t epochs = 12, warmup = 4, batch = 32;
        double lambda1 = 1.0, lambda2 = 4.0, lr = 0.05, jitter = 0.5;
        std::uint64_t seed = 1;
    } tsa;
    ts->add_option("--split", tsa.split)->required();
    ts->add_option("--gallery-ckpt", tsa.gallery)->required();
    ts->add_option("--space", tsa.space);
    ts->add_option("--epochs", tsa.epochs);
    ts->add_option("--warmup", tsa.warmup);
    ts->add_option("--lambda1", tsa.lambda1);
    ts->add_option("--lambda2", tsa.lambda2);
    ts->add_option("--lr", tsa.lr);
    ts->add_option("--batch", tsa.batch);
    ts->add_option("--jitter", tsa.jitter);
    ts->add_option("--loss", tsa.loss);
    ts->add_option("--seed", tsa.seed);
    ts->add_option("--out", tsa.out)->required();
    ts->add_option("--log", tsa.log);

    // search -----------------------------------------------------------------
    auto* se = app.add_subcommand("search", "evolutionary architecture search");
    struct {
        std::string supernet, gallery, split, reward = "r3", out_log, out_top5;
        std::size_t budget = 0, generations = 20, population = 50, crossover = 40;
        double mutate = 0.1, random_select = 0.1;
        std::size_t val_topk = 1;
        std::uint64_t seed = 0;
        bool median_budget = false;
    } sea;
    se->add_option("--supernet-ckpt", sea.supernet)->required();
    se->add_option("--gallery-ckpt", sea.gallery)->required();
    se->add_option("--split", sea.split)->required();
    se->add_option("--reward", sea.reward);
    se->add_option("--budget", sea.budget);
    se->add_flag("--median-budget", sea.median_budget,
                 "use the space's median architecture cost as the budget");
    se->add_option("--generations", sea.generations);
    se->add_option("--population", sea.population);
    se->add_option("--crossover", sea.crossover);
    se->add_option("--mutate", sea.mutate);
    se->add_option("--random", sea.random_select);
    se->add_option("--val-topk", sea.val_topk);
    se->add_option("--seed", sea.seed);
    se->add_option("--out", sea.out_log)->required();
    se->add_option("--out-top5", sea.out_top5)->required();

    // eval -------------------------------------------------------------------
    auto* ev = app.add_subcommand("eval", "evaluate a (query, gallery) model pair");
    struct {
        std::string query, gallery, split, metric = "top1", out_csv, out_json;
        double target = 0.1;
    } eva;
    ev->add_option("--query-model", eva.query)->required();
    ev->add_option("--gallery-model", eva.gallery)->required();
    ev->add_option("--split", eva.split)->required();
    ev->add_option("--metric", eva.metric)
        ->check(CLI::IsMember({"top1", "top5", "top10", "tpir", "tar"}));
    ev->add_option("--target", eva.target);
    ev->add_option("--out-csv", eva.out_csv);
    ev->add_option("--out-json", eva.out_json);

    // cost-curve -------------------------------------------------------------
    auto* cc = app.add_subcommand("cost-curve", "amortized embedding-cost curve");
    struct {
        double fg = 0.0, fq = 0.0;
        std::string ratios = "0,0.5,1,2,5,10,100,1000", out;
    } cca;
    cc->add_option("--fg", cca.fg)->required();
    cc->add_option("--fq", cca.fq)->required();
    cc->add_option("--ratios", cca.ratios);
    cc->add_option("--out", cca.out)->required();

    // study ------------------------------------------------------------------
    auto* st = app.add_subcommand("study", "run a configured experiment study");
    struct {
        std::string name, config, out_dir = "results";
    } sta;
    st->add_option("name", sta.name)
        ->required()
        ->check(CLI::IsMember({"method-comparison", "correlation", "reward-ablation"}));
    st->add_option("--config", sta.config);
    st->add_option("--out-dir", sta.out_dir);

    CLI11_PARSE(app, argc, argv);

    if (show_version) {
        std::cout << "hvs " << kArtifactVersion << " (checkpoint format v"
                  << kCheckpointVersion << ", dataset format v" << kDatasetVersion << ")\n";
        return 0;
    }
    if (app.get_subcommands().empty()) {
        std::cerr << app.help();
        return 1;
    }

    try {
        if (*gen) {
            LabeledDataset data =
                generate_synthetic(gd.identities, gd.per_id, gd.dim, gd.noise, gd.seed);
            save_dataset(data, gd.out);
            std::cout << "wrote " << gd.out << " (" << data.size() << " samples)\n";
        } else if (*spl) {
            LabeledDataset data = load_dataset(sd.data);
            OpenSetSplit split = make_open_set_split(data, sd.train_frac, sd.val_frac,
                                                     sd.gallery_per_id, sd.nonmated_frac,
                                                     sd.seed);
            save_split(split, sd.out);
            std::cout << "wrote " << sd.out << " (train " << split.train.size() << ", val "
                      << split.val.size() << ", gallery " << split.test_gallery.size()
                      << ", mated " << split.test_probe_mated.size() << ", nonmated "
                      << split.test_probe_nonmated.size() << ")\n";
        } else if (*tg) {
            OpenSetSplit split = load_split(tga.split);
            TrainRecipe recipe;
            recipe.loss = loss_kind_from_string(tga.loss);
            recipe.opts.epochs = tga.epochs;
            recipe.opts.batch_size = tga.batch;
            recipe.opts.base_lr = static_cast<float>(tga.lr);
            recipe.opts.jitter_sigma = tga.jitter;
            recipe.opts.weight_decay = static_cast<float>(tga.wd);
            recipe.opts.seed = tga.seed;
            TrainedEmbedding trained =
                train_gallery(split.train, parse_widths(tga.hidden), tga.embed_dim, recipe);
            save_trained(trained, tga.out);
            if (!tga.log.empty()) write_train_log(trained.stats, tga.log);
            std::cout << "wrote " << tga.out << " (" << count_flops(trained.model)
                      << " flops, final loss " << trained.stats.back().mean_loss << ")\n";
        } else if (*tq) {
            OpenSetSplit split = load_split(tqa.split);
            TrainedEmbedding gallery = load_trained(tqa.gallery);
            TrainRecipe recipe;
            recipe.method = method_from_string(tqa.method);
            recipe.loss = loss_kind_from_string(tqa.loss);
            recipe.weights = CompositeWeights{static_cast<float>(tqa.lambda1),
                                              static_cast<float>(tqa.lambda2)};
            recipe.kd_temperature = static_cast<float>(tqa.kd_tau);
            recipe.opts.epochs = tqa.epochs;
            recipe.opts.batch_size = tqa.batch;
            recipe.opts.base_lr = static_cast<float>(tqa.lr);
            recipe.opts.jitter_sigma = tqa.jitter;
            recipe.opts.weight_decay = static_cast<float>(tqa.wd);
            recipe.opts.seed = tqa.seed;

            const std::size_t calib_rows = std::min<std::size_t>(256, split.train.size());
            Tensor2 calibration(calib_rows, split.train.dim());
            std::copy(split.train.features.data.begin(),
                      split.train.features.data.begin() + calibration.data.size(),
                      calibration.data.begin());
            PruneSpec spec{prune_method_from_string(tqa.prune_method), tqa.prune_fraction};
            EmbeddingModel pruned = prune_model(gallery.model, spec, calibration);
            EmbeddingModel init;
            if (recipe.method == TrainMethod::Finetune) {
                init = pruned;
            } else {
                std::vector<std::size_t> widths;
                for (const Block& b : pruned.blocks) widths.push_back(b.out_dim());
                Rng rng(recipe.opts.seed ^ 0x7f4a7c15u);
                init = make_embedding_model(split.train.dim(), widths,
                                            gallery.model.embed_dim, BlockKind::LinearRelu,
                                            rng);
            }
            TrainedEmbedding trained = train_query(split.train, init, recipe, &gallery.model,
                                                   &gallery.classifier);
            save_trained(trained, tqa.out);
            if (!tqa.log.empty()) write_train_log(trained.stats, tqa.log);
            std::cout << "wrote " << tqa.out << " (" << count_flops(trained.model)
                      << " flops, final loss " << trained.stats.back().mean_loss << ")\n";
        } else if (*pr) {
            TrainedEmbedding gallery = load_trained(pra.ckpt);
            OpenSetSplit split = load_split(pra.split);
            const std::size_t calib_rows = std::min<std::size_t>(256, split.train.size());
            Tensor2 calibration(calib_rows, split.train.dim());
            std::copy(split.train.features.data.begin(),
                      split.train.features.data.begin() + calibration.data.size(),
                      calibration.data.begin());
            PruneSpec spec{prune_method_from_string(pra.method), pra.fraction};
            TrainedEmbedding pruned{prune_model(gallery.model, spec, calibration),
                                    gallery.classifier,
                                    {}};
            save_trained(pruned, pra.out);
            std::cout << "wrote " << pra.out << " (" << count_flops(pruned.model)
                      << " flops)\n";
        } else if (*ts) {
            OpenSetSplit split = load_split(tsa.split);
            TrainedEmbedding gallery = load_trained(tsa.gallery);
            SearchSpace space = load_space(tsa.space);
            SuperNet sn =
                make_supernet(space, split.train.dim(), split.train.class_count, tsa.seed);
            TrainOptions opts;
            opts.epochs = tsa.epochs;
            opts.batch_size = tsa.batch;
            opts.base_lr = static_cast<float>(tsa.lr);
            opts.jitter_sigma = tsa.jitter;
            opts.seed = tsa.seed;
            SupernetTrainResult result = train_supernet(
                sn, split.train, tsa.epochs, tsa.warmup,
                CompositeWeights{static_cast<float>(tsa.lambda1),
                                 static_cast<float>(tsa.lambda2)},
                gallery.classifier, loss_kind_from_string(tsa.loss), opts);
            Checkpoint ckpt;
            put_supernet(ckpt, sn);
            save_checkpoint(ckpt, tsa.out);
            if (!tsa.log.empty()) write_train_log(result.stats, tsa.log);
            std::cout << "wrote " << tsa.out << " (final loss "
                      << result.stats.back().mean_loss << ")\n";
        } else if (*se) {
            Checkpoint ckpt = load_checkpoint(sea.supernet);
            SuperNet sn = get_supernet(ckpt);
            TrainedEmbedding gallery = load_trained(sea.gallery);
            OpenSetSplit split = load_split(sea.split);
            RewardContext ctx = make_reward_context(split.val, gallery.model, sea.val_topk);
            EvolutionConfig config;
            config.generations = sea.generations;
            config.population_size = sea.population;
            config.crossover_size = sea.crossover;
            config.mutate_prob = sea.mutate;
            config.random_select_prob = sea.random_select;
            config.flop_budget = sea.median_budget
                                     ? median_flop_budget(sn.space, sn.input_dim)
                                     : sea.budget;
            config.seed = sea.seed;
            SearchLog log = evolve(sn, config, reward_from_string(sea.reward), ctx);

            json jlog = json::array();
            for (std::size_t g = 0; g < log.generations.size(); ++g) {
                const GenerationLog& gen_log = log.generations[g];
                json jgen = {{"generation", g},
                             {"best_reward", gen_log.best_reward},
                             {"population", json::array()}};
                for (std::size_t i = 0; i < gen_log.archs.size(); ++i)
                    jgen["population"].push_back({{"arch", gen_log.archs[i].to_string()},
                                                  {"reward", gen_log.rewards[i]},
                                                  {"flops", gen_log.flops[i]}});
                jlog.push_back(jgen);
            }
            emit_json(jlog, sea.out_log);
            json jtop = json::array();
            for (const auto& [arch, reward] : log.top5)
                jtop.push_back({{"arch", arch.to_string()},
                                {"reward", reward},
                                {"flops", count_flops(sn.space, arch, sn.input_dim)}});
            emit_json(jtop, sea.out_top5);
            std::cout << "wrote " << sea.out_log << " and " << sea.out_top5 << " (best "
                      << log.top5.front().first.to_string() << ", reward "
                      << log.top5.front().second << ")\n";
        } else if (*ev) {
            TrainedEmbedding query = load_trained(eva.query);
            TrainedEmbedding gallery = load_trained(eva.gallery);
            OpenSetSplit split = load_split(eva.split);
            EmbeddingIndex probes = embed_set(query.model, split.test_probe_mated);
            EmbeddingIndex gal_q = embed_set(query.model, split.test_gallery);
            EmbeddingIndex gal_g = embed_set(gallery.model, split.test_gallery);

            EvalReport report;
            report.metric_name = eva.metric;
            report.query_flops = count_flops(query.model);
            report.gallery_flops = count_flops(gallery.model);
            EmbeddingIndex probes_g = embed_set(gallery.model, split.test_probe_mated);
            if (eva.metric == "tpir") {
                EmbeddingIndex non_q = embed_set(query.model, split.test_probe_nonmated);
                EmbeddingIndex non_g = embed_set(gallery.model, split.test_probe_nonmated);
                report.m_qq = tpir_at_fpir(probes, non_q, gal_q, eva.target);
                report.m_qg = tpir_at_fpir(probes, non_q, gal_g, eva.target);
                report.m_gg = tpir_at_fpir(probes_g, non_g, gal_g, eva.target);
            } else if (eva.metric == "tar") {
                auto tar_of = [&](const EmbeddingIndex& p, const EmbeddingIndex& g) {
                    std::vector<double> genuine, impostor;
                    verification_scores(p, g, genuine, impostor);
                    return tar_at_far(genuine, impostor, eva.target);
                };
                report.m_qq = tar_of(probes, gal_q);
                report.m_qg = tar_of(probes, gal_g);
                report.m_gg = tar_of(probes_g, gal_g);
            } else {
                std::size_t k = eva.metric == "top1" ? 1 : eva.metric == "top5" ? 5 : 10;
                report.m_qq = topk_accuracy(probes, gal_q, k);
                report.m_qg = topk_accuracy(probes, gal_g, k);
                report.m_gg = topk_accuracy(probes_g, gal_g, k);
            }
            report.compatible = check_compatibility(report.m_qg, report.m_qq);

            ResultTable t;
            t.header = {"experiment", "seed",  "metric",     "m_qq",         "m_qg",
                        "m_gg",       "compatible", "query_flops", "gallery_flops"};
            t.rows.push_back({"eval", "0", report.metric_name, detail::fmt_double(report.m_qq),
                              detail::fmt_double(report.m_qg), detail::fmt_double(report.m_gg),
                              report.compatible ? "1" : "0",
                              std::to_string(report.query_flops),
                              std::to_string(report.gallery_flops)});
            std::ostringstream csv;
            emit_csv(t, csv);
            std::cout << csv.str();
            if (!eva.out_csv.empty()) emit_csv(t, eva.out_csv);
            if (!eva.out_json.empty())
                emit_json(json{{"metric", report.metric_name},
                               {"m_qq", report.m_qq},
                               {"m_qg", report.m_qg},
                               {"m_gg", report.m_gg},
                               {"compatible", report.compatible},
                               {"query_flops", report.query_flops},
                               {"gallery_flops", report.gallery_flops}},
                          eva.out_json);
        } else if (*cc) {
            ResultTable t = cost_curve_table(cca.fg, cca.fq, parse_doubles(cca.ratios));
            emit_csv(t, cca.out);
            std::cout << "wrote " << cca.out << "\n";
        } else if (*st) {
            ExperimentConfig config =
                sta.config.empty() ? ExperimentConfig{} : load_config(sta.config);
            std::filesystem::create_directories(sta.out_dir);
            const std::string base = sta.out_dir + "/";
            if (sta.name == "method-comparison") {
                MethodComparisonReport report = run_method_comparison(config);
                emit_csv(report.table, base + "method_comparison.csv");
                json summary = json::array();
                for (const ConditionSummary& s : report.summary)
                    summary.push_back({{"condition", s.condition},
                                       {"median_m_qq", s.median_m_qq},
                                       {"median_m_qg", s.median_m_qg}});
                emit_json(json{{"rows", table_to_json(report.table)},
                               {"summary", summary},
                               {"chance", report.chance}},
                          base + "method_comparison.json");
                std::cout << "wrote " << base << "method_comparison.{csv,json}\n";
            } else if (sta.name == "correlation") {
                CorrelationReport report = run_correlation_study(config);
                if (std::isnan(report.median_corr_hom_bct) ||
                    std::isnan(report.median_corr_hom_vanilla))
                    std::cerr << "warning: degenerate accuracy sample, correlation is nan\n";
                emit_csv(report.table, base + "correlation.csv");
                emit_json(json{{"rows", table_to_json(report.table)},
                               {"corr_hom_bct_het", report.corr_hom_bct},
                               {"corr_hom_vanilla_het", report.corr_hom_vanilla},
                               {"median_corr_hom_bct_het", report.median_corr_hom_bct},
                               {"median_corr_hom_vanilla_het",
                                report.median_corr_hom_vanilla}},
                          base + "correlation.json");
                std::cout << "wrote " << base << "correlation.{csv,json}\n";
            } else {
                RewardAblationReport report = run_reward_ablation(config);
                emit_csv(report.table, base + "reward_ablation.csv");
                emit_json(json{{"rows", table_to_json(report.table)},
                               {"median_het", report.median_het}},
                          base + "reward_ablation.json");
                std::cout << "wrote " << base << "reward_ablation.{csv,json}\n";
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
