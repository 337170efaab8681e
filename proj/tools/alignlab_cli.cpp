// Command-line front end: dataset generation, single-cell training and
// probing, full experiment sweeps, and the analysis utilities (PCA, mutual
// information, sample complexity, shared-feature theorem check). Every
// subcommand derives all randomness from explicit seeds, so reruns with the
// same flags reproduce the same numbers.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <alignlab/analysis.hpp>
#include <alignlab/checkpoint.hpp>
#include <alignlab/graphs.hpp>
#include <alignlab/harness.hpp>
#include <alignlab/models.hpp>
#include <alignlab/noise.hpp>
#include <alignlab/probe.hpp>
#include <alignlab/rng.hpp>
#include <alignlab/vision.hpp>

namespace {

using namespace alignlab;

// Shared flag bundle; subcommands pick the pieces they use.
struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_path;
  int threads = 1;
};

ExperimentConfig load_config(const CommonFlags& flags) {
  if (flags.config_path.empty())
    throw CLI::ValidationError("--config", "this subcommand needs a config file");
  std::ifstream in(flags.config_path);
  if (!in) throw std::runtime_error("cannot open config file " + flags.config_path);
  nlohmann::json j;
  in >> j;
  ExperimentConfig cfg = experiment_config_from_json(j);
  cfg.validate();
  return cfg;
}

// Narrow a sweep config to one (ratio, seed) cell for the single-cell
// subcommands; --seed picks the training/noise seed, the first grid entry
// picks the ratio.
ExperimentConfig single_cell(ExperimentConfig cfg, const CommonFlags& flags) {
  cfg.ratio_grid = {cfg.ratio_grid.front()};
  cfg.seeds = {flags.seed.value_or(cfg.seeds.front())};
  cfg.out_path.clear();
  return cfg;
}

void add_common(CLI::App* sub, CommonFlags& flags, bool with_threads = false) {
  sub->add_option("--config", flags.config_path, "experiment config JSON");
  sub->add_option("--seed", flags.seed, "seed override");
  sub->add_option("--out", flags.out_path, "output path");
  if (with_threads)
    sub->add_option("--threads", flags.threads, "worker count")->check(CLI::PositiveNumber);
}

std::pair<int, int> parse_node_range(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) {
    const int n = std::stoi(text);
    return {n, n};
  }
  return {std::stoi(text.substr(0, colon)), std::stoi(text.substr(colon + 1))};
}

void write_text(const std::string& path, const std::string& body) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << body;
  if (!out) throw std::runtime_error("write failed for " + path);
}

// ---------------------------------------------------------------------------
// gen-graphs / gen-vision

int cmd_gen_graphs(const CommonFlags& flags, const std::string& task, const std::string& scheme,
                   int count, const std::string& nodes, const std::string& split) {
  ErOptions opt;
  opt.count = count;
  opt.target = parse_target_kind(task);
  opt.scheme = parse_feature_scheme(scheme);
  std::tie(opt.min_nodes, opt.max_nodes) = parse_node_range(nodes);
  opt.seed = flags.seed.value_or(1);
  opt.split_tag = split;
  const GraphDataset ds = generate_er_dataset(opt);
  if (flags.out_path.empty()) throw CLI::ValidationError("--out", "output path required");
  save_dataset_jsonl(ds, flags.out_path);
  std::printf("wrote %zu graphs (nodes %d..%d, task %s, scheme %s, seed %llu) to %s\n", ds.size(),
              opt.min_nodes, opt.max_nodes, target_kind_name(opt.target).c_str(),
              feature_scheme_name(opt.scheme).c_str(),
              static_cast<unsigned long long>(opt.seed), flags.out_path.c_str());
  return 0;
}

int cmd_gen_vision(const CommonFlags& flags, int count, int size, int classes,
                   const std::string& split) {
  const VisionDataset ds =
      generate_marker_dataset(count, size, classes, flags.seed.value_or(1), split);
  if (flags.out_path.empty()) throw CLI::ValidationError("--out", "output path required");
  save_vision_dataset(ds, flags.out_path);
  std::printf("wrote %zu images (%dx%d, %d classes, seed %llu) to %s (+ .json index)\n", ds.size(),
              size, size, classes, static_cast<unsigned long long>(ds.seed),
              flags.out_path.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// train / probe: one cell, checkpoint in between

// Regenerates the cell's datasets and working labels exactly as the sweep
// does, so a checkpoint trained here can be probed later without persisting
// any corrupted dataset.
struct GraphCellData {
  GraphDataset train, valid, test;
  NoisyLabels train_noise, valid_noise;
};

GraphCellData make_graph_cell(const ExperimentConfig& cfg, std::uint64_t seed) {
  GraphCellData cell;
  ErOptions opt;
  opt.target = cfg.target;
  opt.scheme = cfg.scheme;
  auto make = [&](int count, int lo, int hi, const char* tag, std::uint64_t tag_idx) {
    ErOptions o = opt;
    o.count = count;
    o.min_nodes = lo;
    o.max_nodes = hi;
    o.seed = derive_seed({cfg.data_seed, seed, tag_idx});
    o.split_tag = tag;
    return generate_er_dataset(o);
  };
  cell.train = make(cfg.train_count, 20, 40, "train", 0);
  cell.valid = make(cfg.valid_count, 20, 40, "valid", 1);
  cell.test = make(cfg.test_count, 50, 70, "test", 2);
  NoiseSpec nspec = cfg.noise;
  nspec.noise_ratio = cfg.ratio_grid.front();
  cell.train_noise = apply_noise(cell.train, nspec, derive_seed({seed, 0ull, 0x6E01ull}));
  cell.valid_noise = apply_noise(cell.valid, nspec, derive_seed({seed, 0ull, 0x6E02ull}));
  return cell;
}

int cmd_train(const CommonFlags& flags) {
  const ExperimentConfig cfg = single_cell(load_config(flags), flags);
  const std::uint64_t seed = cfg.seeds.front();
  TrainConfig tcfg = cfg.train;
  tcfg.seed = derive_seed({seed, 0x7EA1ull});

  TrainedModel tm;
  if (cfg.task == "graph") {
    const GraphCellData cell = make_graph_cell(cfg, seed);
    tm = train_graph_model(cfg.model, cell.train, cell.train_noise.working, cell.valid,
                           cell.valid_noise.working, tcfg);
    const double test_mape = mape(predict_graphs(cfg.model, tm.params, cell.test), cell.test.labels);
    std::printf("test MAPE on clean labels: %.4f%%\n", test_mape);
  } else {
    const VisionDataset train = generate_marker_dataset(
        cfg.train_count, cfg.image_size, cfg.num_classes, derive_seed({cfg.data_seed, seed, 0ull}),
        "train");
    const VisionDataset valid = generate_marker_dataset(
        cfg.valid_count, cfg.image_size, cfg.num_classes, derive_seed({cfg.data_seed, seed, 1ull}),
        "valid");
    const VisionDataset test = generate_marker_dataset(
        cfg.test_count, cfg.image_size, cfg.num_classes, derive_seed({cfg.data_seed, seed, 2ull}),
        "test");
    NoiseSpec nspec = cfg.noise;
    nspec.noise_ratio = cfg.ratio_grid.front();
    const NoisyClassLabels noisy = apply_class_noise(
        train.labels, nspec, derive_seed({seed, 0ull, 0x6E01ull}), &train.attributes);
    tm = train_vision_model(cfg.model, train, noisy.working, valid, valid.labels, tcfg);
    const double test_acc = accuracy(predict_vision(cfg.model, tm.params, test), test.labels);
    std::printf("test accuracy on clean labels: %.2f%%\n", test_acc);
  }

  const EpochStats& last = tm.history.epochs.back();
  std::printf("trained %zu epochs (selected %d): final train loss %.6g, valid metric %.6g\n",
              tm.history.epochs.size(), tm.history.selected_epoch, last.train_loss,
              last.valid_metric);

  if (!flags.out_path.empty()) {
    save_checkpoint(flags.out_path, params_to_named(tm.params));
    nlohmann::json meta = {{"model", model_spec_to_json(cfg.model)},
                           {"config_hash", config_hash(cfg)},
                           {"seed", seed},
                           {"selected_epoch", tm.history.selected_epoch}};
    write_text(flags.out_path + ".meta.json", meta.dump(2) + "\n");
    std::printf("checkpoint: %s (+ .json manifest, + .meta.json)\n", flags.out_path.c_str());
  }
  return 0;
}

int cmd_probe(const CommonFlags& flags, const std::string& checkpoint_path,
              const std::string& reps_out) {
  const ExperimentConfig cfg = single_cell(load_config(flags), flags);
  const std::uint64_t seed = cfg.seeds.front();
  const ModelParams params = params_from_named(load_checkpoint(checkpoint_path));
  const std::string tap = cfg.tap_point.empty() ? cfg.model.default_tap_point() : cfg.tap_point;

  ProbeResult res;
  if (cfg.task == "graph") {
    const GraphCellData cell = make_graph_cell(cfg, seed);
    const Tensor<double> train_reps = graph_representations(cfg.model, params, cell.train, tap);
    const Tensor<double> test_reps = graph_representations(cfg.model, params, cell.test, tap);

    Rng rng = make_rng({stream::kProbeSubset, seed});
    const std::vector<std::size_t> rows = sample_indices(
        cell.train.size(), probe_subset_size(cfg.probe_fraction, cell.train.size()), rng);
    Tensor<double> probe_reps({static_cast<std::int64_t>(rows.size()), train_reps.cols()});
    std::vector<float> probe_labels(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::int64_t c = 0; c < train_reps.cols(); ++c)
        probe_reps.at(static_cast<std::int64_t>(i), c) =
            train_reps.at(static_cast<std::int64_t>(rows[i]), c);
      probe_labels[i] = cell.train.labels[rows[i]];
    }
    res = probe_regression(probe_reps, probe_labels, test_reps, cell.test.labels,
                           cfg.probe_regularizer, cfg.probe_lambda);
    if (!reps_out.empty())
      save_representations(reps_out, train_reps.cast<float>(), tap, config_hash(cfg));
  } else {
    const VisionDataset train = generate_marker_dataset(
        cfg.train_count, cfg.image_size, cfg.num_classes, derive_seed({cfg.data_seed, seed, 0ull}),
        "train");
    const VisionDataset test = generate_marker_dataset(
        cfg.test_count, cfg.image_size, cfg.num_classes, derive_seed({cfg.data_seed, seed, 2ull}),
        "test");
    const Tensor<double> train_reps = vision_representations(cfg.model, params, train, tap);
    const Tensor<double> test_reps = vision_representations(cfg.model, params, test, tap);

    Rng rng = make_rng({stream::kProbeSubset, seed});
    const std::vector<std::size_t> rows = sample_indices(
        train.size(), probe_subset_size(cfg.probe_fraction, train.size()), rng);
    Tensor<double> probe_reps({static_cast<std::int64_t>(rows.size()), train_reps.cols()});
    std::vector<std::int32_t> probe_labels(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::int64_t c = 0; c < train_reps.cols(); ++c)
        probe_reps.at(static_cast<std::int64_t>(i), c) =
            train_reps.at(static_cast<std::int64_t>(rows[i]), c);
      probe_labels[i] = train.labels[rows[i]];
    }
    res = probe_classification(probe_reps, probe_labels, test_reps, test.labels, cfg.num_classes,
                               cfg.probe_regularizer, cfg.probe_lambda);
    if (!reps_out.empty())
      save_representations(reps_out, train_reps.cast<float>(), tap, config_hash(cfg));
  }

  res.tap_point = tap;
  std::printf("probe %s = %.6g (tap %s, %zu probe rows, %zu test rows%s%s)\n", res.metric.c_str(),
              res.value, tap.c_str(), res.probe_count, res.test_count,
              res.rank_deficient ? ", rank-deficient" : "",
              res.ridge_fallback ? ", ridge fallback" : "");
  if (!flags.out_path.empty()) {
    nlohmann::json j = {{"metric", res.metric},      {"value", res.value},
                        {"tap_point", res.tap_point}, {"probe_count", res.probe_count},
                        {"test_count", res.test_count}, {"rank_deficient", res.rank_deficient}};
    write_text(flags.out_path, j.dump(2) + "\n");
  }
  return 0;
}

// ---------------------------------------------------------------------------
// sweep

int cmd_sweep(const CommonFlags& flags) {
  ExperimentConfig cfg = load_config(flags);
  if (!flags.out_path.empty()) cfg.out_path = flags.out_path;
  const std::vector<RunRecord> records = run_experiment(cfg, flags.threads);
  int failed = 0;
  for (const RunRecord& r : records) {
    const bool ok = r.status == "ok";
    failed += ok ? 0 : 1;
    std::printf("[%s] %s ratio %.2f seed %llu: model %.6g, probe %s %.6g (%.1fs)%s%s\n",
                ok ? "ok" : "FAILED", r.noise_label.c_str(), r.noise_ratio,
                static_cast<unsigned long long>(r.seed), r.model_test_metric,
                r.probe.metric.c_str(), r.probe.value, r.wall_seconds, ok ? "" : " -> ",
                ok ? "" : r.status.c_str());
  }
  if (!cfg.out_path.empty()) {
    save_records_json(cfg.out_path + ".json", records);
    std::printf("results: %s (CSV, append-only) and %s.json\n", cfg.out_path.c_str(),
                cfg.out_path.c_str());
  }
  std::printf("%zu cells, %d failed\n", records.size(), failed);
  return failed == 0 ? 0 : 1;
}

// ---------------------------------------------------------------------------
// pca

int cmd_pca(const CommonFlags& flags) {
  const ExperimentConfig cfg = single_cell(load_config(flags), flags);
  if (cfg.task != "graph")
    throw std::runtime_error("pca: the projection dump is defined for the graph task");
  const std::uint64_t seed = cfg.seeds.front();
  const GraphCellData cell = make_graph_cell(cfg, seed);
  TrainConfig tcfg = cfg.train;
  tcfg.seed = derive_seed({seed, 0x7EA1ull});
  const TrainedModel tm = train_graph_model(cfg.model, cell.train, cell.train_noise.working,
                                            cell.valid, cell.valid_noise.working, tcfg);
  const std::string tap = cfg.tap_point.empty() ? cfg.model.default_tap_point() : cfg.tap_point;
  const Tensor<double> reps = graph_representations(cfg.model, tm.params, cell.train, tap);
  const PcaResult pc = pca(reps, 2);
  const Tensor<double> proj = pc.project(reps);

  std::vector<double> pc1(static_cast<std::size_t>(proj.rows()));
  std::vector<double> clean(pc1.size());
  for (std::size_t i = 0; i < pc1.size(); ++i) {
    pc1[i] = proj.at(static_cast<std::int64_t>(i), 0);
    clean[i] = cell.train.labels[i];
  }
  const double corr = pearson(pc1, clean);
  std::printf("PC1 explains %.4f of variance; |pearson(PC1, clean label)| = %.4f\n",
              pc.explained_variance_ratio.empty() ? 0.0 : pc.explained_variance_ratio[0],
              std::abs(corr));

  if (!flags.out_path.empty()) {
    std::ostringstream csv;
    csv << "pc1,pc2,clean_label,working_label\n";
    for (std::size_t i = 0; i < pc1.size(); ++i)
      csv << proj.at(static_cast<std::int64_t>(i), 0) << ','
          << proj.at(static_cast<std::int64_t>(i), 1) << ',' << cell.train.labels[i] << ','
          << cell.train_noise.working[i] << '\n';
    write_text(flags.out_path, csv.str());
    std::printf("projections: %s\n", flags.out_path.c_str());
  }
  return 0;
}

// ---------------------------------------------------------------------------
// mi

int cmd_mi(const CommonFlags& flags) {
  const ExperimentConfig cfg = load_config(flags);
  if (cfg.task != "vision")
    throw std::runtime_error("mi: label mutual information is defined for class labels");
  std::ostringstream csv;
  csv << "noise,ratio,seed,mi_bits,clean_entropy_bits\n";
  for (const double ratio : cfg.ratio_grid) {
    for (const std::uint64_t seed : cfg.seeds) {
      const VisionDataset train = generate_marker_dataset(
          cfg.train_count, cfg.image_size, cfg.num_classes,
          derive_seed({cfg.data_seed, seed, 0ull}), "train");
      NoiseSpec nspec = cfg.noise;
      nspec.noise_ratio = ratio;
      const NoisyClassLabels noisy = apply_class_noise(
          train.labels, nspec, derive_seed({seed, 0ull, 0x6E01ull}), &train.attributes);
      const MiEstimate mi = mutual_information(noisy.working, train.labels);
      const double h = entropy_bits(train.labels);
      std::printf("%s ratio %.2f seed %llu: MI(working, clean) = %.4f bits (H(clean) = %.4f)\n",
                  noise_spec_label(nspec).c_str(), ratio, static_cast<unsigned long long>(seed),
                  mi.bits, h);
      csv << '"' << noise_spec_label(nspec) << "\"," << ratio << ',' << seed << ',' << mi.bits
          << ',' << h << '\n';
    }
  }
  if (!flags.out_path.empty()) {
    write_text(flags.out_path, csv.str());
    std::printf("curve: %s\n", flags.out_path.c_str());
  }
  return 0;
}

// ---------------------------------------------------------------------------
// sample-complexity

int cmd_sample_complexity(const CommonFlags& flags, std::vector<int> sizes, double threshold) {
  const ExperimentConfig cfg = load_config(flags);
  if (cfg.task != "vision")
    throw std::runtime_error("sample-complexity: defined for the vision task");
  if (sizes.empty()) sizes = {50, 100, 200, 400, 800, 1600};
  std::sort(sizes.begin(), sizes.end());

  const int n_seeds = static_cast<int>(cfg.seeds.size());
  auto trial = [&](int size, int seed_index) {
    const std::uint64_t seed = cfg.seeds[static_cast<std::size_t>(seed_index)];
    const VisionDataset train =
        generate_marker_dataset(size, cfg.image_size, cfg.num_classes,
                                derive_seed({cfg.data_seed, seed, 0ull}), "train");
    const VisionDataset valid =
        generate_marker_dataset(cfg.valid_count, cfg.image_size, cfg.num_classes,
                                derive_seed({cfg.data_seed, seed, 1ull}), "valid");
    const VisionDataset test =
        generate_marker_dataset(cfg.test_count, cfg.image_size, cfg.num_classes,
                                derive_seed({cfg.data_seed, seed, 2ull}), "test");
    TrainConfig tcfg = cfg.train;
    tcfg.seed = derive_seed({seed, static_cast<std::uint64_t>(size), 0x7EA1ull});
    const TrainedModel tm =
        train_vision_model(cfg.model, train, train.labels, valid, valid.labels, tcfg);
    const double acc = accuracy(predict_vision(cfg.model, tm.params, test), test.labels);
    std::printf("  size %d seed %llu: test accuracy %.2f%%\n", size,
                static_cast<unsigned long long>(seed), acc);
    return acc;
  };
  const SampleComplexityCurve curve =
      estimate_sample_complexity(sizes, n_seeds, threshold, true, trial);

  if (curve.open_ended)
    std::printf("no tested size reached %.2f%% in all %d seeds (open-ended)\n", threshold, n_seeds);
  else
    std::printf("estimated sample complexity at %.2f%%: %d examples\n", threshold,
                curve.estimated_size);

  if (!flags.out_path.empty()) {
    std::ostringstream csv;
    csv << "size,seed,test_accuracy\n";
    for (std::size_t si = 0; si < curve.sizes.size(); ++si)
      for (std::size_t k = 0; k < curve.metrics[si].size(); ++k)
        csv << curve.sizes[si] << ',' << cfg.seeds[k] << ',' << curve.metrics[si][k] << '\n';
    write_text(flags.out_path, csv.str());
    std::printf("curve: %s\n", flags.out_path.c_str());
  }
  return 0;
}

// ---------------------------------------------------------------------------
// theorem-check

int cmd_theorem_check(const CommonFlags& flags, std::vector<double> ratios, int n_seeds,
                      double epsilon) {
  if (ratios.empty()) ratios = {0.0, 0.25, 0.5, 0.8, 1.0};
  const std::uint64_t base_seed = flags.seed.value_or(1);
  std::ostringstream csv;
  csv << "ratio,seed,probe_error_noisy,probe_error_clean,head_error_noisy,head_error_clean,"
         "passed\n";
  bool all_ratios_ok = true;
  for (const double ratio : ratios) {
    int passes = 0;
    for (int k = 0; k < n_seeds; ++k) {
      SharedFeatureScenario s;
      s.noise_ratio = ratio;
      s.epsilon = epsilon;
      s.seed = derive_seed({base_seed, static_cast<std::uint64_t>(k)});
      const SharedFeatureReport r = run_shared_feature_scenario(s);
      passes += r.passed ? 1 : 0;
      std::printf("ratio %.2f seed %d: probe noisy %.4f vs clean %.4f, head noisy %.4f vs clean "
                  "%.4f -> %s\n",
                  ratio, k, r.probe_error_noisy, r.probe_error_clean, r.head_error_noisy,
                  r.head_error_clean, r.passed ? "pass" : "FAIL");
      csv << ratio << ',' << k << ',' << r.probe_error_noisy << ',' << r.probe_error_clean << ','
          << r.head_error_noisy << ',' << r.head_error_clean << ',' << (r.passed ? 1 : 0) << '\n';
    }
    const bool ratio_ok = 3 * passes >= 2 * n_seeds;  // at least 2/3 of the seeds
    all_ratios_ok = all_ratios_ok && ratio_ok;
    std::printf("ratio %.2f: %d/%d seeds passed -> %s\n", ratio, passes, n_seeds,
                ratio_ok ? "ok" : "FAILED");
  }
  if (!flags.out_path.empty()) {
    write_text(flags.out_path, csv.str());
    std::printf("report: %s\n", flags.out_path.c_str());
  }
  return all_ratios_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"alignment laboratory: architecture/noise alignment experiments"};
  app.require_subcommand(1);

  CommonFlags flags;

  // gen-graphs
  std::string gg_task = "max_degree", gg_scheme = "uniform_1_100", gg_nodes = "20:40",
              gg_split = "train";
  int gg_count = 1000;
  CLI::App* gen_graphs = app.add_subcommand("gen-graphs", "generate an ER graph dataset (JSONL)");
  add_common(gen_graphs, flags);
  gen_graphs->add_option("--task", gg_task, "max_degree | max_feature");
  gen_graphs->add_option("--scheme", gg_scheme, "uniform_1_100 | two_step");
  gen_graphs->add_option("--count", gg_count, "number of graphs")->check(CLI::PositiveNumber);
  gen_graphs->add_option("--nodes", gg_nodes, "node count range LO:HI");
  gen_graphs->add_option("--split", gg_split, "split tag");

  // gen-vision
  int gv_count = 1000, gv_size = 16, gv_classes = 10;
  std::string gv_split = "train";
  CLI::App* gen_vision =
      app.add_subcommand("gen-vision", "generate a marker image dataset (blob + JSON index)");
  add_common(gen_vision, flags);
  gen_vision->add_option("--count", gv_count, "number of images")->check(CLI::PositiveNumber);
  gen_vision->add_option("--size", gv_size, "image side length");
  gen_vision->add_option("--classes", gv_classes, "number of classes");
  gen_vision->add_option("--split", gv_split, "split tag");

  // train
  CLI::App* train = app.add_subcommand(
      "train", "train one (first ratio, one seed) cell; --out saves a checkpoint");
  add_common(train, flags);

  // probe
  std::string probe_checkpoint, probe_reps_out;
  CLI::App* probe =
      app.add_subcommand("probe", "fit a linear probe on a trained checkpoint's representations");
  add_common(probe, flags);
  probe->add_option("--checkpoint", probe_checkpoint, "checkpoint binary from `train --out`")
      ->required();
  probe->add_option("--dump-reps", probe_reps_out, "write the representation matrix (binary + sidecar)");

  // sweep
  CLI::App* sweep =
      app.add_subcommand("sweep", "run every (ratio, seed) cell of the config; CSV out");
  add_common(sweep, flags, /*with_threads=*/true);

  // pca
  CLI::App* pca_cmd =
      app.add_subcommand("pca", "train one cell and dump PC1/PC2 projections of its representations");
  add_common(pca_cmd, flags);

  // mi
  CLI::App* mi_cmd = app.add_subcommand(
      "mi", "mutual information between working and clean labels over the ratio grid");
  add_common(mi_cmd, flags);

  // sample-complexity
  std::vector<int> sc_sizes;
  double sc_threshold = 99.0;
  CLI::App* sc = app.add_subcommand(
      "sample-complexity", "smallest train size reaching a test-accuracy threshold on all seeds");
  add_common(sc, flags);
  sc->add_option("--sizes", sc_sizes, "train sizes to test")->delimiter(',');
  sc->add_option("--threshold", sc_threshold, "test accuracy threshold (percent)");

  // theorem-check
  std::vector<double> tc_ratios;
  int tc_seeds = 3;
  double tc_epsilon = 0.05;
  CLI::App* tc = app.add_subcommand(
      "theorem-check", "shared-feature scenario: probe error under noise vs clean");
  add_common(tc, flags);
  tc->add_option("--ratios", tc_ratios, "noise ratios")->delimiter(',');
  tc->add_option("--seeds", tc_seeds, "number of seeds")->check(CLI::PositiveNumber);
  tc->add_option("--epsilon", tc_epsilon, "pass tolerance");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen_graphs->parsed())
      return cmd_gen_graphs(flags, gg_task, gg_scheme, gg_count, gg_nodes, gg_split);
    if (gen_vision->parsed())
      return cmd_gen_vision(flags, gv_count, gv_size, gv_classes, gv_split);
    if (train->parsed()) return cmd_train(flags);
    if (probe->parsed()) return cmd_probe(flags, probe_checkpoint, probe_reps_out);
    if (sweep->parsed()) return cmd_sweep(flags);
    if (pca_cmd->parsed()) return cmd_pca(flags);
    if (mi_cmd->parsed()) return cmd_mi(flags);
    if (sc->parsed()) return cmd_sample_complexity(flags, sc_sizes, sc_threshold);
    if (tc->parsed()) return cmd_theorem_check(flags, tc_ratios, tc_seeds, tc_epsilon);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
