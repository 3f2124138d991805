#include "istas/core/error.hpp"
#include "istas/energy/energy.hpp"
#include "istas/eventsim/io.hpp"
#include "istas/harness/ablation.hpp"
#include "istas/harness/benchmark.hpp"
#include "istas/harness/report.hpp"
#include "istas/harness/train.hpp"
#include "istas/ista/verify.hpp"
#include "istas/tracker/tracking.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>

namespace fs = std::filesystem;
using namespace istas;

namespace {

std::vector<eventsim::SequenceData> load_or_generate(const harness::TrainConfig& cfg, bool test) {
  if (cfg.data_dir.empty()) return harness::generate_sequences(cfg.data, test);
  return harness::load_sequences(fs::path(cfg.data_dir) / (test ? "test" : "train"));
}

void write_eval_dir(const fs::path& dir, const std::vector<harness::SequenceEval>& evals) {
  fs::create_directories(dir / "predictions");
  std::ofstream per(dir / "per_sequence.csv");
  per << "sequence,split,frames,sr_auc,op50,op75,pr20,npr\n";
  for (const auto& e : evals) {
    eventsim::write_boxes_csv(dir / "predictions" / (e.name + ".csv"), e.predictions);
    const auto& r = e.result;
    per << e.name << ',' << e.split << ',' << r.frames << ',' << r.sr_auc << ',' << r.op50 << ',' << r.op75 << ','
        << r.pr20 << ',' << r.npr << '\n';
  }
  const auto by_split = harness::summarize_by_split(evals);
  harness::write_eval_outputs(dir, by_split.at("all"));
  std::ofstream(dir / "summary_by_split.json") << harness::summary_json(by_split).dump(2) << '\n';
}

// Scores in percent.
void print_scalars(const harness::EvalResult& r) {
  std::cout << std::fixed << std::setprecision(1) << "SR_AUC " << 100 * r.sr_auc << "  OP50 " << 100 * r.op50
            << "  OP75 " << 100 * r.op75 << "  PR@20 " << 100 * r.pr20 << "  NPR " << 100 * r.npr << "  (%, "
            << r.frames << " frames)\n"
            << std::defaultfloat;
}

void print_split_summary(const std::map<std::string, harness::EvalResult>& by_split) {
  std::cout << "scores in %\n" << std::left << std::setw(14) << "split" << std::right << std::setw(8) << "SR" << std::setw(8) << "OP50"
            << std::setw(8) << "OP75" << std::setw(8) << "PR@20" << std::setw(8) << "NPR" << '\n'
            << std::fixed << std::setprecision(1);
  for (const auto& [k, r] : by_split)
    std::cout << std::left << std::setw(14) << k << std::right << std::setw(8) << 100 * r.sr_auc << std::setw(8)
              << 100 * r.op50 << std::setw(8) << 100 * r.op75 << std::setw(8) << 100 * r.pr20 << std::setw(8)
              << 100 * r.npr << '\n';
  std::cout << std::defaultfloat;
}

int run_train(const std::string& config, std::uint64_t seed, const fs::path& out) {
  const auto cfg = harness::load_train_config(config);
  auto res = [&] {
    const auto train = load_or_generate(cfg, false);
    std::cout << "training on " << train.size() << " sequences\n";
    return harness::train_loop(cfg, train, seed, out, &std::cout);
  }();
  const auto test = load_or_generate(cfg, true);
  if (!test.empty()) {
    const auto evals = harness::evaluate_tracker(*res.model, test);
    write_eval_dir(out / "eval", evals);
    print_split_summary(harness::summarize_by_split(evals));
  }
  std::cout << "checkpoint: " << (out / "checkpoint.bin").string() << '\n';
  return 0;
}

int run_track(const fs::path& ckpt, const fs::path& seq_dir, const std::string& out) {
  auto model = tracker::HybridModel::load(ckpt);
  const auto seq = eventsim::read_sequence(seq_dir);
  const auto preds = tracker::track_sequence(*model, seq);
  const fs::path dest = out.empty() ? seq_dir / "pred.csv" : fs::path(out);
  eventsim::write_boxes_csv(dest, preds);
  const auto r = harness::compute_metrics(preds, seq.boxes, seq.visible);
  std::cout << "predictions: " << dest.string() << '\n';
  print_scalars(r);
  return 0;
}

int run_eval(const fs::path& pred, const fs::path& gt, const std::string& out) {
  const auto p = eventsim::read_boxes_csv(pred);
  const auto g = eventsim::read_boxes_csv(gt);
  std::vector<bool> visible(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) visible[i] = g[i].valid();
  const auto r = harness::compute_metrics(p, g, visible);
  const fs::path dir = out.empty() ? pred.parent_path() / "eval" : fs::path(out);
  harness::write_eval_outputs(dir, r);
  print_scalars(r);
  std::cout << "outputs: " << dir.string() << '\n';
  return 0;
}

int run_energy(const fs::path& ckpt, const std::string& csv_out, int samples, std::uint64_t seed) {
  auto model = tracker::HybridModel::load(ckpt);
  const auto& cfg = model->config();
  harness::BenchmarkConfig bc;
  bc.seed = seed;
  bc.n_train = 0;
  bc.n_test = std::max(1, samples / 4);
  bc.test_mix = {harness::Split::Easy};
  const auto data = harness::generate_benchmark(bc);
  const auto prepared = harness::prepare_sequences(data.test, cfg);
  std::vector<tracker::ModelInput> batch;
  for (int i = 0; i < samples; ++i) {
    const auto& ps = prepared[static_cast<std::size_t>(i) % prepared.size()];
    const int frame = 1 + (i / static_cast<int>(prepared.size())) % (bc.num_frames - 1);
    batch.push_back(harness::make_sample(cfg, ps, frame, ps.seq->boxes[static_cast<std::size_t>(frame)]).input);
  }
  const auto report = energy::count_ops(*model, batch);
  if (csv_out.empty()) {
    energy::write_energy_csv(std::cout, report);
  } else {
    std::ofstream os(csv_out);
    if (!os) throw IoError("cannot write " + csv_out);
    energy::write_energy_csv(os, report);
    std::cout << "per-layer CSV: " << csv_out << '\n';
  }
  std::cout << '\n' << energy::summary_table(model->num_parameters(), report);
  return 0;
}

int run_verify_ista(int count, int iters, int chain, const std::string& out) {
  const auto rows = ista::check_ista_batch(count, 0, iters, chain);
  if (out.empty()) {
    ista::write_ista_csv(std::cout, rows);
  } else {
    std::ofstream os(out);
    if (!os) throw IoError("cannot write " + out);
    ista::write_ista_csv(os, rows);
  }
  double worst_kkt = 0, worst_diff = 0;
  int monotone = 0;
  for (const auto& r : rows) {
    worst_kkt = std::max(worst_kkt, r.kkt_residual);
    worst_diff = std::max(worst_diff, r.adapter_vs_oracle_maxdiff);
    monotone += r.monotone;
  }
  std::cerr << "instances " << rows.size() << "  monotone " << monotone << "  max kkt " << worst_kkt
            << "  max adapter diff " << worst_diff << '\n';
  return 0;
}

int run_build_benchmark(const fs::path& out, std::uint64_t seed, int n_train, int n_test) {
  harness::BenchmarkConfig bc;
  bc.seed = seed;
  bc.n_train = n_train;
  bc.n_test = n_test;
  const auto index = harness::build_benchmark(bc, out);
  std::cout << index.train.size() << " train and " << index.test.size() << " test sequences in " << out.string()
            << '\n';
  return 0;
}

int run_render(const fs::path& scene, const fs::path& out, double contrast) {
  const auto spec = eventsim::load_scene_spec(scene);
  auto seq = harness::generate_sequence(spec, out.filename().string(), harness::Split::Easy, contrast);
  seq.split = "custom";
  eventsim::write_sequence(out, seq);
  std::cout << seq.frames.size() << " frames and " << seq.events.events.size() << " events in " << out.string()
            << '\n';
  return 0;
}

int run_ablation(const std::string& config, std::uint64_t seed, const fs::path& out, int epochs,
                 const std::vector<std::string>& only) {
  auto cfg = harness::load_train_config(config);
  if (epochs > 0) cfg.epochs = epochs;
  const harness::BenchmarkData data{load_or_generate(cfg, false), load_or_generate(cfg, true)};
  const auto rows = harness::run_ablation(cfg, data, seed, only, &std::cout);
  fs::create_directories(out);
  std::ofstream csv(out / "ablation.csv");
  harness::write_ablation_csv(csv, rows);
  const std::string table = harness::ablation_table(rows);
  std::ofstream(out / "ablation.txt") << table;
  std::cout << '\n' << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid RGB-event tracker with sparse-coding adapters"};
  app.require_subcommand(1);

  std::string config, out, ckpt, seq, pred, gt;
  std::uint64_t seed = 1;
  int count = 100, iters = 5000, chain = 4, samples = 8, n_train = 60, n_test = 20, epochs = 0;
  std::vector<std::string> only;

  auto* train = app.add_subcommand("train", "train a tracker from a YAML run config");
  train->add_option("--config", config, "run config (YAML)")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", seed, "model and sampling seed");
  train->add_option("--out", out, "output directory")->required();

  auto* track = app.add_subcommand("track", "track one sequence directory");
  track->add_option("--ckpt", ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  track->add_option("--seq", seq, "sequence directory")->required()->check(CLI::ExistingDirectory);
  track->add_option("--out", out, "prediction CSV (default <seq>/pred.csv)");

  auto* eval = app.add_subcommand("eval", "score predictions against ground truth");
  eval->add_option("--pred", pred, "prediction CSV")->required()->check(CLI::ExistingFile);
  eval->add_option("--gt", gt, "ground-truth CSV; rows with w or h <= 0 count as out of view")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--out", out, "output directory (default <pred dir>/eval)");

  auto* energy_cmd = app.add_subcommand("energy", "operation counts and energy estimate");
  energy_cmd->add_option("--ckpt", ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  energy_cmd->add_option("--csv", out, "per-layer CSV path (default stdout)");
  energy_cmd->add_option("--samples", samples, "synthetic search samples averaged over")->check(CLI::PositiveNumber);
  energy_cmd->add_option("--seed", seed, "seed of the synthetic samples");

  auto* verify = app.add_subcommand("verify-ista", "reference solver and adapter equivalence on random LASSO instances");
  verify->add_option("--count", count, "number of instances")->check(CLI::PositiveNumber);
  verify->add_option("--iters", iters, "reference solver iterations")->check(CLI::PositiveNumber);
  verify->add_option("--chain", chain, "adapters chained against the solver")->check(CLI::PositiveNumber);
  verify->add_option("--out", out, "CSV path (default stdout)");

  auto* bench = app.add_subcommand("build-benchmark", "write the synthetic benchmark to disk");
  bench->add_option("--out", out, "output directory")->required();
  bench->add_option("--seed", seed, "benchmark seed");
  bench->add_option("--n-train", n_train, "training sequences");
  bench->add_option("--n-test", n_test, "test sequences");

  double contrast = 0.15;
  auto* render = app.add_subcommand("render", "render a scene spec into a sequence directory");
  render->add_option("--scene", config, "scene spec (YAML)")->required()->check(CLI::ExistingFile);
  render->add_option("--out", out, "sequence directory")->required();
  render->add_option("--contrast", contrast, "event contrast threshold")->check(CLI::PositiveNumber);

  auto* abl = app.add_subcommand("ablation", "train and compare every ablation variant");
  abl->add_option("--config", config, "base run config (YAML)")->required()->check(CLI::ExistingFile);
  abl->add_option("--seed", seed, "seed shared by all variants");
  abl->add_option("--out", out, "output directory")->required();
  abl->add_option("--epochs", epochs, "override train.epochs");
  abl->add_option("--only", only, "restrict to these variants")->delimiter(',');

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return run_train(config, seed, out);
    if (*track) return run_track(ckpt, seq, out);
    if (*eval) return run_eval(pred, gt, out);
    if (*energy_cmd) return run_energy(ckpt, out, samples, seed);
    if (*verify) return run_verify_ista(count, iters, chain, out);
    if (*bench) return run_build_benchmark(out, seed, n_train, n_test);
    if (*render) return run_render(config, out, contrast);
    if (*abl) return run_ablation(config, seed, out, epochs, only);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
