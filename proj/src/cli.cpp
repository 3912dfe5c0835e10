#include "fect/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <omp.h>

#include <CLI11.hpp>

#include "fect/aggregator.hpp"
#include "fect/config.hpp"
#include "fect/errors.hpp"
#include "fect/fusion.hpp"
#include "fect/manifest.hpp"
#include "fect/metrics.hpp"
#include "fect/pipeline.hpp"
#include "fect/svm.hpp"
#include "fect/synthgen.hpp"

namespace fs = std::filesystem;

namespace fect {

namespace {

ExtractionConfig extraction_config(const PipelineConfig& cfg) {
    ExtractionConfig ec;
    ec.seed = cfg.seed;
    ec.max_cells = cfg.max_cells;
    ec.contour_spacing = cfg.spacing;
    ec.min_points = cfg.min_points;
    ec.max_points = cfg.max_points;
    ec.knn_k = cfg.knn_k;
    return ec;
}

SvmTrainOptions svm_options(const PipelineConfig& cfg) {
    SvmTrainOptions opts;
    opts.c = cfg.svm_c;
    opts.tol = cfg.svm_tol;
    opts.max_sweeps = cfg.svm_max_sweeps;
    return opts;
}

AggregatorConfig aggregator_arch(const PipelineConfig& cfg, Modality modality) {
    AggregatorConfig arch;
    arch.input_dim = modality == Modality::Cell ? kCellDim : kEdgeDim;
    arch.pooled_dim = cfg.pooled_dim;
    arch.heads = cfg.heads;
    arch.use_nystrom = modality == Modality::Edge;
    arch.landmarks = cfg.landmarks;
    arch.pinv_iters = cfg.pinv_iters;
    arch.landmark_seed = cfg.seed;
    return arch;
}

FeatureCache load_cache_checked(const std::string& path, Modality expect,
                                std::size_t expect_rows) {
    FeatureCache cache = load_feature_cache(path);
    if (cache.modality != expect)
        throw DataError("cache " + path + ": expected " + modality_name(expect) +
                        " features, found " + modality_name(cache.modality));
    if (cache.rows.size() != expect_rows)
        throw DataError("cache " + path + ": row count " +
                        std::to_string(cache.rows.size()) + " != manifest size " +
                        std::to_string(expect_rows));
    return cache;
}

void cmd_generate(const PipelineConfig& cfg, const std::string& recipe_path,
                  const std::string& out_dir, bool seed_given) {
    SyntheticRecipe recipe;
    if (recipe_path.empty()) {
        recipe = default_recipe();
        recipe.image_size = cfg.image_size;
        recipe.samples_per_class = cfg.samples_per_class;
        recipe.seed = cfg.seed;
    } else {
        recipe = load_recipe(recipe_path);
        if (seed_given) recipe.seed = cfg.seed;
    }

    const Manifest manifest = generate_dataset(recipe, out_dir);
    std::cout << "generated " << manifest.size() << " samples under " << out_dir << "\n";
    if (manifest.size() == 0) return;

    const SplitManifests splits =
        split_dataset(manifest, cfg.train_frac, cfg.val_frac, recipe.seed);
    save_manifest((fs::path(out_dir) / "manifest_train.json").string(), splits.train);
    save_manifest((fs::path(out_dir) / "manifest_val.json").string(), splits.val);
    save_manifest((fs::path(out_dir) / "manifest_test.json").string(), splits.test);
    std::cout << "splits: train=" << splits.train.size() << " val=" << splits.val.size()
              << " test=" << splits.test.size() << "\n";
}

void cmd_extract(const PipelineConfig& cfg, const std::string& manifest_path,
                 const std::string& modality_name_str, const std::string& model_path,
                 const std::string& out_path) {
    const Manifest manifest = load_manifest(manifest_path);
    const Modality modality = modality_from_name(modality_name_str);

    AggregatorModel model;
    const AggregatorModel* model_ptr = nullptr;
    if (modality != Modality::Tissue) {
        if (model_path.empty())
            throw DataError("extract: --model is required for " + modality_name_str +
                            " features; run train-aggregator first");
        model = load_aggregator(model_path);
        model.config.use_nystrom = modality == Modality::Edge;
        model.config.landmarks = cfg.landmarks;
        model.config.pinv_iters = cfg.pinv_iters;
        model.config.landmark_seed = cfg.seed;
        model_ptr = &model;
    }

    const ExtractionResult result =
        extract_features(manifest, modality, extraction_config(cfg), model_ptr);
    save_feature_cache(out_path, result.cache);
    std::cout << "extracted " << result.cache.rows.size() << " " << modality_name_str
              << " features -> " << out_path << "\n";
    if (result.degenerate > 0)
        std::cerr << "warning: " << result.degenerate
                  << " degenerate samples produced zero features\n";
}

void cmd_train_aggregator(const PipelineConfig& cfg, const std::string& manifest_path,
                          const std::string& modality_name_str,
                          const std::string& out_path, std::string trace_path) {
    const Manifest manifest = load_manifest(manifest_path);
    const Modality modality = modality_from_name(modality_name_str);
    if (modality == Modality::Tissue)
        throw DataError("train-aggregator: the tissue descriptor has no aggregator");

    const BagSet bags = build_bags(manifest, modality, extraction_config(cfg));
    if (bags.skipped > 0)
        std::cerr << "warning: skipped " << bags.skipped << " images with no tokens\n";

    TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    tc.lr0 = cfg.lr0;
    tc.momentum = cfg.momentum;
    tc.halve_every = cfg.halve_every;
    tc.seed = cfg.seed;

    const TrainedAggregator trained =
        train_aggregator(bags.bags, aggregator_arch(cfg, modality), tc,
                         modality == Modality::Edge);
    save_aggregator(out_path, trained.model);
    if (trace_path.empty()) trace_path = out_path + ".trace.csv";
    save_loss_trace(trace_path, trained.trace);
    std::cout << "trained " << modality_name_str << " aggregator on "
              << bags.bags.size() << " bags -> " << out_path << "\n";
    std::cout << "final mean loss " << trained.trace.back().mean_loss << "\n";
}

void cmd_train_svm(const PipelineConfig& cfg, const std::string& manifest_path,
                   const std::string& cell_path, const std::string& tissue_path,
                   const std::string& edge_path, const std::string& out_path,
                   std::string fusion_out) {
    const Manifest manifest = load_manifest(manifest_path);
    const FeatureCache cell = load_cache_checked(cell_path, Modality::Cell, manifest.size());
    const FeatureCache tissue =
        load_cache_checked(tissue_path, Modality::Tissue, manifest.size());
    const FeatureCache edge = load_cache_checked(edge_path, Modality::Edge, manifest.size());

    FusionConfig fusion;
    fusion.alpha = cfg.alpha;
    fusion.beta = cfg.beta;
    fusion.gamma = cfg.gamma;
    fusion.normalizer =
        fit_normalizer(cell.as_matrix(), tissue.as_matrix(), edge.as_matrix());

    const Matrix fused =
        fuse_rows(cell.as_matrix(), tissue.as_matrix(), edge.as_matrix(), fusion);
    const std::vector<int> labels = manifest_labels(manifest);
    const SvmEnsemble ensemble = train_multiclass(fused, labels, svm_options(cfg));

    save_svm_ensemble(out_path, ensemble);
    if (fusion_out.empty()) fusion_out = out_path + ".fusion.json";
    save_fusion_config(fusion_out, fusion);

    const std::vector<int> pred = predict_all(ensemble, fused);
    const MetricsReport rep = compute_metrics(confusion_matrix(
        labels, pred, static_cast<std::size_t>(manifest.num_classes())));
    std::cout << "trained one-vs-one svm (" << ensemble.pairs.size() << " pairs) -> "
              << out_path << "\n";
    std::cout << "training accuracy " << rep.accuracy << ", weighted F1 "
              << rep.weighted_f1 << "\n";
}

void cmd_evaluate(const std::string& manifest_path, const std::string& cell_path,
                  const std::string& tissue_path, const std::string& edge_path,
                  const std::string& model_path, const std::string& fusion_path,
                  const std::string& report_dir) {
    const Manifest manifest = load_manifest(manifest_path);
    const FeatureCache cell = load_cache_checked(cell_path, Modality::Cell, manifest.size());
    const FeatureCache tissue =
        load_cache_checked(tissue_path, Modality::Tissue, manifest.size());
    const FeatureCache edge = load_cache_checked(edge_path, Modality::Edge, manifest.size());
    const SvmEnsemble ensemble = load_svm_ensemble(model_path);
    const FusionConfig fusion = load_fusion_config(fusion_path);

    const Matrix fused =
        fuse_rows(cell.as_matrix(), tissue.as_matrix(), edge.as_matrix(), fusion);
    const std::vector<int> labels = manifest_labels(manifest);
    const std::vector<int> pred = predict_all(ensemble, fused);
    const MetricsReport rep = compute_metrics(confusion_matrix(
        labels, pred, static_cast<std::size_t>(ensemble.classes)));

    fs::create_directories(report_dir);
    save_metrics_csv((fs::path(report_dir) / "metrics.csv").string(), rep);
    std::ofstream preds((fs::path(report_dir) / "predictions.csv").string(),
                        std::ios::trunc);
    if (!preds) throw DataError("evaluate: cannot write predictions.csv");
    preds << "id,true_label,pred_label\n";
    for (std::size_t i = 0; i < manifest.entries.size(); ++i)
        preds << manifest.entries[i].id << "," << labels[i] << "," << pred[i] << "\n";

    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "accuracy=%.6f balanced_acc=%.6f macro_f1=%.6f weighted_f1=%.6f",
                  rep.accuracy, rep.balanced_accuracy, rep.macro_f1, rep.weighted_f1);
    std::cout << buf << "\n";
    std::cout << "reports -> " << report_dir << "\n";
}

void cmd_ablate(const PipelineConfig& cfg, const std::string& train_manifest_path,
                const std::string& train_cell, const std::string& train_tissue,
                const std::string& train_edge, const std::string& eval_manifest_path,
                const std::string& eval_cell, const std::string& eval_tissue,
                const std::string& eval_edge, const std::string& report_dir) {
    const Manifest train = load_manifest(train_manifest_path);
    const Manifest eval = load_manifest(eval_manifest_path);
    check_disjoint(train, eval, "the train and eval splits");

    const FeatureCache tc = load_cache_checked(train_cell, Modality::Cell, train.size());
    const FeatureCache tt = load_cache_checked(train_tissue, Modality::Tissue, train.size());
    const FeatureCache te = load_cache_checked(train_edge, Modality::Edge, train.size());
    const FeatureCache ec = load_cache_checked(eval_cell, Modality::Cell, eval.size());
    const FeatureCache et = load_cache_checked(eval_tissue, Modality::Tissue, eval.size());
    const FeatureCache ee = load_cache_checked(eval_edge, Modality::Edge, eval.size());

    const auto rows = run_ablation(tc.as_matrix(), tt.as_matrix(), te.as_matrix(),
                                   manifest_labels(train), ec.as_matrix(), et.as_matrix(),
                                   ee.as_matrix(), manifest_labels(eval),
                                   svm_options(cfg));
    const auto classifiers = run_classifier_comparison(
        tc.as_matrix(), tt.as_matrix(), te.as_matrix(), manifest_labels(train),
        ec.as_matrix(), et.as_matrix(), ee.as_matrix(), manifest_labels(eval),
        svm_options(cfg));

    fs::create_directories(report_dir);
    save_ablation_csv((fs::path(report_dir) / "ablation.csv").string(), rows);
    save_classifier_csv((fs::path(report_dir) / "classifiers.csv").string(), classifiers);

    for (const auto& r : rows) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%-12s acc=%.4f weighted_f1=%.4f",
                      r.subset.c_str(), r.accuracy, r.weighted_f1);
        std::cout << buf << "\n";
    }
    std::cout << "reports -> " << report_dir << "\n";
}

void cmd_gridsearch(const PipelineConfig& cfg, const std::string& train_manifest_path,
                    const std::string& train_cell, const std::string& train_tissue,
                    const std::string& train_edge, const std::string& val_manifest_path,
                    const std::string& val_cell, const std::string& val_tissue,
                    const std::string& val_edge, const std::string& report_dir) {
    const Manifest train = load_manifest(train_manifest_path);
    const Manifest val = load_manifest(val_manifest_path);
    check_disjoint(train, val, "the train and val splits");

    const FeatureCache tc = load_cache_checked(train_cell, Modality::Cell, train.size());
    const FeatureCache tt = load_cache_checked(train_tissue, Modality::Tissue, train.size());
    const FeatureCache te = load_cache_checked(train_edge, Modality::Edge, train.size());
    const FeatureCache vc = load_cache_checked(val_cell, Modality::Cell, val.size());
    const FeatureCache vt = load_cache_checked(val_tissue, Modality::Tissue, val.size());
    const FeatureCache ve = load_cache_checked(val_edge, Modality::Edge, val.size());

    const GridSearchResult result = grid_search_weights(
        tc.as_matrix(), tt.as_matrix(), te.as_matrix(), manifest_labels(train),
        vc.as_matrix(), vt.as_matrix(), ve.as_matrix(), manifest_labels(val),
        default_grid(), svm_options(cfg));

    fs::create_directories(report_dir);
    save_heatmap_csv((fs::path(report_dir) / "heatmap.csv").string(), result.table);
    save_fusion_config((fs::path(report_dir) / "best_weights.json").string(), result.best);

    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "best alpha=%.2f beta=%.2f gamma=%.2f acc=%.6f weighted_f1=%.6f",
                  result.best_point.alpha, result.best_point.beta,
                  result.best_point.gamma, result.best_point.accuracy,
                  result.best_point.weighted_f1);
    std::cout << buf << "\n";
    std::cout << "heatmap rows: " << result.table.size() << " -> " << report_dir << "\n";
}

void cmd_project(const std::string& cache_path, const std::string& manifest_path,
                 const std::string& predictions_path, const std::string& out_path) {
    const Manifest manifest = load_manifest(manifest_path);
    const FeatureCache cache = load_feature_cache(cache_path);
    if (cache.rows.size() != manifest.size())
        throw DataError("project: cache rows != manifest size");
    if (cache.rows.size() < 2) throw DataError("project: need at least 2 samples");

    std::map<std::string, int> pred_by_id;
    if (!predictions_path.empty()) {
        std::ifstream in(predictions_path);
        if (!in) throw ParseError("project: cannot open " + predictions_path);
        std::string line;
        std::getline(in, line); // header
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto c1 = line.find(',');
            const auto c2 = line.find(',', c1 + 1);
            if (c1 == std::string::npos || c2 == std::string::npos)
                throw ParseError("project: malformed predictions row: " + line);
            pred_by_id[line.substr(0, c1)] = std::stoi(line.substr(c2 + 1));
        }
    }

    const Matrix projected = pca_project(cache.as_matrix(), 2);
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw DataError("project: cannot write " + out_path);
    out << "id,x,y,true_label,pred_label\n";
    char buf[160];
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        const auto& e = manifest.entries[i];
        const auto it = pred_by_id.find(e.id);
        const int pred = it == pred_by_id.end() ? -1 : it->second;
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%d,%d\n", e.id.c_str(),
                      projected(i, 0), projected(i, 1), e.label, pred);
        out << buf;
    }
    std::cout << "projected " << manifest.size() << " samples -> " << out_path << "\n";
}

} // namespace

int run_cli(const std::vector<std::string>& args) {
    PipelineConfig cfg;

    // The config file must be loaded before flags so flags can override it.
    for (std::size_t i = 1; i + 1 < args.size(); ++i) {
        if (args[i] == "--config") {
            try {
                cfg = load_pipeline_config(args[i + 1]);
            } catch (const std::exception& e) {
                std::cerr << "error: " << e.what() << "\n";
                return 2;
            }
        }
    }
    apply_env_overrides(cfg);

    CLI::App app{"FECT-style fused-feature tissue classification pipeline"};
    app.fallthrough(true);
    std::string config_path;
    app.add_option("--config", config_path, "key=value configuration file");
    app.add_option("--seed", cfg.seed, "global RNG seed");
    app.add_option("--jobs", cfg.jobs, "worker threads (0 = library default)");

    // generate
    std::string recipe_path, out_dir;
    auto* gen = app.add_subcommand("generate", "write a synthetic dataset and splits");
    gen->add_option("--recipe", recipe_path, "dataset recipe file");
    gen->add_option("--out", out_dir, "output directory")->required();

    // extract
    std::string ex_manifest, ex_modality, ex_model, ex_out;
    auto* ext = app.add_subcommand("extract", "extract per-image features to a cache");
    ext->add_option("--manifest", ex_manifest)->required();
    ext->add_option("--modality", ex_modality)
        ->required()
        ->check(CLI::IsMember({"cell", "tissue", "edge"}));
    ext->add_option("--model", ex_model, "trained aggregator (cell/edge)");
    ext->add_option("--out", ex_out, "cache file path")->required();

    // train-aggregator
    std::string ta_manifest, ta_modality, ta_out, ta_trace;
    auto* ta = app.add_subcommand("train-aggregator", "train an attention aggregator");
    ta->add_option("--manifest", ta_manifest)->required();
    ta->add_option("--modality", ta_modality)
        ->required()
        ->check(CLI::IsMember({"cell", "edge"}));
    ta->add_option("--out", ta_out)->required();
    ta->add_option("--trace", ta_trace, "loss trace CSV (default <out>.trace.csv)");

    // train-svm
    std::string ts_manifest, ts_cell, ts_tissue, ts_edge, ts_out, ts_fusion;
    auto* ts = app.add_subcommand("train-svm", "train the fused one-vs-one SVM");
    ts->add_option("--manifest", ts_manifest)->required();
    ts->add_option("--cell", ts_cell)->required();
    ts->add_option("--tissue", ts_tissue)->required();
    ts->add_option("--edge", ts_edge)->required();
    ts->add_option("--out", ts_out)->required();
    ts->add_option("--fusion-out", ts_fusion, "fusion config JSON (default <out>.fusion.json)");

    // evaluate
    std::string ev_manifest, ev_cell, ev_tissue, ev_edge, ev_model, ev_fusion, ev_report;
    auto* ev = app.add_subcommand("evaluate", "score a split and write reports");
    ev->add_option("--manifest", ev_manifest)->required();
    ev->add_option("--cell", ev_cell)->required();
    ev->add_option("--tissue", ev_tissue)->required();
    ev->add_option("--edge", ev_edge)->required();
    ev->add_option("--model", ev_model)->required();
    ev->add_option("--fusion", ev_fusion)->required();
    ev->add_option("--report-dir", ev_report);

    // ablate
    std::string ab_tm, ab_tc, ab_tt, ab_te, ab_em, ab_ec, ab_et, ab_ee, ab_report;
    auto* ab = app.add_subcommand("ablate", "score the seven modality subsets");
    ab->add_option("--train-manifest", ab_tm)->required();
    ab->add_option("--train-cell", ab_tc)->required();
    ab->add_option("--train-tissue", ab_tt)->required();
    ab->add_option("--train-edge", ab_te)->required();
    ab->add_option("--eval-manifest", ab_em)->required();
    ab->add_option("--eval-cell", ab_ec)->required();
    ab->add_option("--eval-tissue", ab_et)->required();
    ab->add_option("--eval-edge", ab_ee)->required();
    ab->add_option("--report-dir", ab_report);

    // gridsearch
    std::string gs_tm, gs_tc, gs_tt, gs_te, gs_vm, gs_vc, gs_vt, gs_ve, gs_report;
    auto* gs = app.add_subcommand("gridsearch", "sweep fusion weights on a val split");
    gs->add_option("--train-manifest", gs_tm)->required();
    gs->add_option("--train-cell", gs_tc)->required();
    gs->add_option("--train-tissue", gs_tt)->required();
    gs->add_option("--train-edge", gs_te)->required();
    gs->add_option("--val-manifest", gs_vm)->required();
    gs->add_option("--val-cell", gs_vc)->required();
    gs->add_option("--val-tissue", gs_vt)->required();
    gs->add_option("--val-edge", gs_ve)->required();
    gs->add_option("--report-dir", gs_report);

    // project
    std::string pj_cache, pj_manifest, pj_pred, pj_out;
    auto* pj = app.add_subcommand("project", "2D PCA projection of a feature cache");
    pj->add_option("--cache", pj_cache)->required();
    pj->add_option("--manifest", pj_manifest)->required();
    pj->add_option("--predictions", pj_pred, "predictions.csv to join labels from");
    pj->add_option("--out", pj_out)->required();

    app.require_subcommand(1);

    std::vector<const char*> argv;
    argv.reserve(args.size());
    for (const auto& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) { // --help
            std::cout << app.help();
            return 0;
        }
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    }

    if (cfg.jobs > 0) omp_set_num_threads(cfg.jobs);
    std::cerr << "config: " << describe_config(cfg) << "\n";

    try {
        if (gen->parsed()) {
            cmd_generate(cfg, recipe_path, out_dir, app.count("--seed") > 0);
        } else if (ext->parsed()) {
            cmd_extract(cfg, ex_manifest, ex_modality, ex_model, ex_out);
        } else if (ta->parsed()) {
            cmd_train_aggregator(cfg, ta_manifest, ta_modality, ta_out, ta_trace);
        } else if (ts->parsed()) {
            cmd_train_svm(cfg, ts_manifest, ts_cell, ts_tissue, ts_edge, ts_out,
                          ts_fusion);
        } else if (ev->parsed()) {
            cmd_evaluate(ev_manifest, ev_cell, ev_tissue, ev_edge, ev_model, ev_fusion,
                         ev_report.empty() ? cfg.report_dir : ev_report);
        } else if (ab->parsed()) {
            cmd_ablate(cfg, ab_tm, ab_tc, ab_tt, ab_te, ab_em, ab_ec, ab_et, ab_ee,
                       ab_report.empty() ? cfg.report_dir : ab_report);
        } else if (gs->parsed()) {
            cmd_gridsearch(cfg, gs_tm, gs_tc, gs_tt, gs_te, gs_vm, gs_vc, gs_vt, gs_ve,
                           gs_report.empty() ? cfg.report_dir : gs_report);
        } else if (pj->parsed()) {
            cmd_project(pj_cache, pj_manifest, pj_pred, pj_out);
        }
    } catch (const fect::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << "\n";
        return 3;
    }
    return 0;
}

} // namespace fect
