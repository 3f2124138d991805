// Acceptance checks, one PASS / FAIL line per criterion.
// Usage: acceptance [criterion ...]   (default: all of 1..9)

#include "istas/core/error.hpp"
#include "istas/energy/energy.hpp"
#include "istas/harness/ablation.hpp"
#include "istas/harness/metrics.hpp"
#include "istas/harness/train.hpp"
#include "istas/ista/adapter.hpp"
#include "istas/ista/sparse_coding.hpp"
#include "istas/ista/verify.hpp"
#include "istas/spiking/blocks.hpp"
#include "istas/spiking/lif.hpp"
#include "istas/vit/vit.hpp"
#include "support.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace istas;
using istas::testing::grad_check;
using istas::testing::probe_loss;
using istas::testing::random_input;
using istas::testing::random_matrix;
using istas::testing::random_uniform;
using istas::testing::tiny_config;
using eventsim::BoundingBox;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

fs::path run_dir(const std::string& name) {
  const fs::path p = fs::path(ISTAS_BINARY_DIR) / "acceptance_runs" / name;
  fs::create_directories(p);
  return p;
}

Outcome energy_model() {
  const double dense = energy::mac_energy_mj(56.4e9);
  const double rel = std::abs(dense - 259.3) / 259.3;
  bool ok = rel < 1e-3;

  OpRecord a;
  a.layer = "dense";
  a.op_mac = 1000;
  OpRecord b;
  b.layer = "syn";
  b.branch = Branch::Snn;
  b.synaptic = true;
  b.op_ac = 5000;
  b.firing_rate = 0.2;
  OpRecord c = b;
  c.layer = "syn2";
  c.op_ac = 800;
  c.firing_rate = 0.5;
  const auto report = energy::make_report({a, b, c});
  const auto est = energy::estimate_energy(report);
  // Same association as E = E_MAC * MAC + E_AC * AC * rate, layer by layer.
  const double expect_ann = 1000 * 4.6 * 1e-9;
  const double expect_snn = 5000 * 0.2 * 0.9 * 1e-9 + 800 * 0.5 * 0.9 * 1e-9;
  const double expect = expect_ann + expect_snn;
  ok = ok && est.e_total_mj == expect && energy::estimate_energy(energy::make_report({})).e_total_mj == 0.0;
  ok = ok && est.e_ann_mj == expect_ann && est.e_snn_mj == expect_snn;
  ok = ok && energy::ac_energy_mj(4.2e9) == 4.2e9 * 0.9 * 1e-9;
  return {ok, "56.4G MAC -> " + fmt(dense) + " mJ (rel err " + fmt(rel) + "), weighted sum exact: " +
                  (est.e_total_mj == expect ? "yes" : "no")};
}

Outcome ista_oracle() {
  using namespace istas::ista;
  bool ok = true;
  double worst_kkt = 0;
  int non_monotone = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto inst = random_lasso(seed);
    const auto r = ista_reference_solve(inst.x, inst.dict, inst.lambda, inst.step, 5000);
    for (std::size_t k = 1; k < r.objective.size(); ++k)
      if (r.objective[k] > r.objective[k - 1] + 1e-12 * std::max(1.0, std::abs(r.objective[k - 1]))) {
        ++non_monotone;
        break;
      }
    worst_kkt = std::max(worst_kkt, kkt_residual(inst.x, inst.dict, r.code, inst.lambda));
  }
  ok = non_monotone == 0 && worst_kkt < 1e-4;
  // Scalar closed forms: argmin (x - a)^2 + lambda |a| = soft(x, lambda / 2).
  double closed_err = 0;
  for (double x : {1.0, -0.7, 0.15, 2.5})
    for (double lambda : {0.4, 1.0}) {
      const auto r = ista_reference_solve(Matrix::Constant(1, 1, x), Matrix::Constant(1, 1, 1.0), lambda, 0.25, 500);
      const double expect = std::copysign(std::max(0.0, std::abs(x) - lambda / 2), x);
      closed_err = std::max(closed_err, std::abs(r.code(0, 0) - expect));
    }
  ok = ok && closed_err < 1e-6;
  return {ok, "100 instances, non-monotone " + std::to_string(non_monotone) + ", max KKT " + fmt(worst_kkt) +
                  ", scalar closed-form err " + fmt(closed_err)};
}

Outcome adapter_oracle() {
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed)
    for (int k : {1, 2, 4, 8}) worst = std::max(worst, ista::adapter_oracle_maxdiff(ista::random_lasso(seed), k));
  return {worst < 1e-10, "100 instances, K in {1,2,4,8}, max diff " + fmt(worst)};
}

Outcome gradient_checks() {
  std::map<std::string, double> worst;
  auto note = [&](const std::string& what, const std::vector<istas::testing::GradCheckResult>& rs) {
    for (const auto& r : rs) worst[what] = std::max(worst[what], r.rel_error);
  };
  {
    Rng rng(5);
    ista::IstaAdapter a("a", 6, 8, 6, rng);
    a.reduce = ista::TemporalReduce::Attention;
    a.tda.emplace("a.tda", 3, 8, rng);
    a.synthesis.value = random_matrix(6, 8, 10, 0.5);
    a.tda->weight.value = random_matrix(3, 24, 11, 0.3);
    std::vector<Parameter*> ps;
    a.collect(ps);
    auto loss = [&](Context& ctx, const std::vector<Var>& in) {
      return probe_loss(a.forward(ctx, in[0], in[1], 3, 1, "a").mapped, 12);
    };
    note("adapter", grad_check(loss, ps, {random_matrix(6, 12, 13), random_matrix(8, 12, 14)}));
  }
  {
    Rng rng(10);
    ista::TemporalAttention tda("tda", 3, 8, rng);
    tda.weight.value = random_matrix(3, 24, 19, 0.4);
    std::vector<Parameter*> ps;
    tda.collect(ps);
    auto loss = [&](Context& ctx, const std::vector<Var>& in) { return probe_loss(tda.forward(ctx, in[0], "tda"), 20); };
    note("tda", grad_check(loss, ps, {random_matrix(8, 12, 21)}));
  }
  {
    vit::VitConfig c;
    c.embed_dim = 8;
    c.heads = 2;
    c.depth = 1;
    c.template_size = 32;
    c.search_size = 64;
    Rng rng(8);
    vit::VitBlock block("blk", c, rng);
    std::vector<Parameter*> ps;
    block.collect(ps);
    for (Parameter* p : ps) p->value += 0.1 * random_matrix(p->value.rows(), p->value.cols(), p->value.size());
    auto loss = [&](Context& ctx, const std::vector<Var>& in) { return probe_loss(block.forward(ctx, in[0]).second, 3); };
    note("vit_block", grad_check(loss, ps, {random_matrix(8, 4, 4)}));
  }
  {
    spiking::LifConfig cfg;
    cfg.detach_reset = false;
    auto loss = [&](Context& ctx, const std::vector<Var>& in) {
      return probe_loss(spiking::lif(ctx, in[0], 3, cfg, "lif"), 5);
    };
    note("lif_surrogate", grad_check(loss, {}, {random_uniform(5, 12, 21, 0.1, 1.6)}, true));
  }
  bool ok = true;
  std::string detail;
  for (const auto& [name, err] : worst) {
    ok = ok && err < 1e-4;
    detail += name + " " + fmt(err) + "; ";
  }
  return {ok, "max rel err: " + detail};
}

Outcome zero_adapter_equivalence() {
  tracker::TrackerConfig with = tiny_config();
  tracker::TrackerConfig without = with;
  without.adapter_layers = 0;
  tracker::HybridModel a(with, 21), b(without, 21);
  a.zero_adapter_synthesis();
  int equal = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto in = random_input(with, 100 + 7 * s);
    ad::Tape ta(false), tb(false);
    Context ca{ta}, cb{tb};
    const auto ra = a.forward(ca, in);
    const auto rb = b.forward(cb, in);
    if (ra.head.score.value() == rb.head.score.value() && ra.head.offset.value() == rb.head.offset.value() &&
        ra.head.size.value() == rb.head.size.value() && ra.fused.value() == rb.fused.value())
      ++equal;
  }
  return {equal == 10, std::to_string(equal) + "/10 inputs bit-equal"};
}

bool binary(const Matrix& m) { return (m.array() == 0.0 || m.array() == 1.0).all(); }

Outcome spike_binarity() {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> rows(1, 12), cols(1, 10), steps(1, 4);
  std::uniform_real_distribution<double> tau(0.05, 1.0), vth(0.1, 2.0), scale(0.01, 10.0);
  int bad = 0;
  long values = 0;
  for (int s = 0; s < 1000; ++s) {
    spiking::LifConfig cfg;
    cfg.tau_decay = tau(rng);
    cfg.v_threshold = vth(rng);
    cfg.detach_reset = s % 2 == 0;
    const int t = steps(rng);
    const Matrix x = random_matrix(rows(rng), t * cols(rng), 1000 + s, scale(rng));
    ad::Tape tape(s % 3 == 0);
    Context ctx{tape};
    const Matrix out = spiking::lif(ctx, tape.constant(x), t, cfg, "lif").value();
    const auto step = spiking::lif_step(spiking::LifState::zeros(x.rows(), x.cols(), cfg), x);
    if (!binary(out) || !binary(step.spikes)) ++bad;
    values += out.size() + step.spikes.size();
    if (s % 50 == 0) {
      Rng wrng(s);
      spiking::SpikingTokenizer tok("tok", 3, 16, 8, 32, 64, cfg, wrng);
      const auto r = tok.forward_patches(ctx, random_uniform(768, t * 4, 2000 + s, 0, 3),
                                         random_uniform(768, t * 16, 3000 + s, 0, 3), t);
      if (!binary(r.template_spikes.value()) || !binary(r.search_spikes.value())) ++bad;
      values += r.template_spikes.value().size() + r.search_spikes.value().size();
    }
  }
  return {bad == 0, "1000 fuzz samples, " + std::to_string(values) + " spike values, non-binary samples " +
                        std::to_string(bad)};
}

Outcome metric_oracle() {
  using harness::compute_metrics;
  auto ref_iou = [](const BoundingBox& a, const BoundingBox& b) {
    const double ix = std::max(0.0, std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0()));
    const double iy = std::max(0.0, std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0()));
    const double inter = ix * iy;
    return inter / (a.area() + b.area() - inter);
  };
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> pos(20, 140), size(4, 40), jitter(-15, 15), sc(0.5, 1.6);
  int mismatches = 0;
  for (int f = 0; f < 100; ++f) {
    const int n = 1 + f % 13;
    std::vector<BoundingBox> gts, preds;
    for (int i = 0; i < n; ++i) {
      const BoundingBox g{pos(rng), pos(rng), size(rng), size(rng)};
      gts.push_back(g);
      preds.push_back({g.cx + jitter(rng), g.cy + jitter(rng), g.w * sc(rng), g.h * sc(rng)});
    }
    double succ = 0, op50 = 0, op75 = 0, pr20 = 0;
    for (int i = 0; i < n; ++i) {
      const double v = ref_iou(preds[i], gts[i]);
      for (int k = 0; k <= 20; ++k) succ += v > 0 && v + 1e-9 >= k / 20.0;
      op50 += v > 0 && v + 1e-9 >= 0.5;
      op75 += v > 0 && v + 1e-9 >= 0.75;
      pr20 += std::hypot(preds[i].cx - gts[i].cx, preds[i].cy - gts[i].cy) <= 20;
    }
    const auto r = compute_metrics(preds, gts);
    if (std::abs(r.sr_auc - succ / (21.0 * n)) > 1e-12 || std::abs(r.op50 - op50 / n) > 1e-12 ||
        std::abs(r.op75 - op75 / n) > 1e-12 || std::abs(r.pr20 - pr20 / n) > 1e-12)
      ++mismatches;
  }
  const BoundingBox gt{50, 50, 10, 10};
  const auto fx = compute_metrics({{50, 50, 10, 10}, {50, 50, 6, 10}, {50, 50, 2, 10}}, {gt, gt, gt});
  const bool fixture = fx.op50 == 2.0 / 3.0 && fx.op75 == 1.0 / 3.0;
  return {mismatches == 0 && fixture, "100 fixtures, mismatches " + std::to_string(mismatches) + "; fixture OP50 " +
                                          fmt(fx.op50) + " OP75 " + fmt(fx.op75)};
}

harness::TrainConfig toy_config() {
  return harness::load_train_config(fs::path(ISTAS_SOURCE_DIR) / "configs" / "toy.yaml");
}

Outcome end_to_end() {
  const harness::TrainConfig base = toy_config();
  // Test data is generated after training to keep peak memory low.
  auto train = harness::generate_sequences(base.data, false);
  std::map<std::string, std::unique_ptr<tracker::HybridModel>> models;
  for (const auto modality : {tracker::Modality::Hybrid, tracker::Modality::RgbOnly}) {
    harness::TrainConfig cfg = base;
    cfg.model.modality = modality;
    const std::string name = tracker::to_string(modality);
    models[name] = harness::train_loop(cfg, train, 1, run_dir("e2e_" + name), &std::cout).model;
  }
  train.clear();
  train.shrink_to_fit();
  const auto test = harness::generate_sequences(base.data, true);
  std::map<std::string, std::map<std::string, harness::EvalResult>> results;
  for (const auto& [name, model] : models) {
    results[name] = harness::summarize_by_split(harness::evaluate_tracker(*model, test));
    for (const auto& [split, r] : results[name])
      std::cout << name << ' ' << split << " SR_AUC " << r.sr_auc << " PR20 " << r.pr20 << '\n';
  }
  const double easy = results["hybrid"]["easy"].sr_auc;
  const double low_h = results["hybrid"]["low_light"].sr_auc;
  const double low_r = results["rgb_only"]["low_light"].sr_auc;
  return {easy >= 0.5 && low_h > low_r, "hybrid easy SR_AUC " + fmt(easy) + " (>= 0.5), low_light hybrid " +
                                            fmt(low_h) + " vs rgb_only " + fmt(low_r)};
}

Outcome ablation() {
  harness::TrainConfig base = toy_config();
  // Reduced schedule: the sweep checks that every variant trains, evaluates
  // and lands in the table, not the converged numbers.
  base.epochs = 2;
  base.samples_per_epoch = 64;
  base.data.n_train = 20;
  base.data.n_test = 10;
  base.data.num_frames = 15;
  const auto data = harness::generate_benchmark(base.data);
  const auto rows = harness::run_ablation(base, data, 1, {}, &std::cout);
  const fs::path out = run_dir("ablation");
  std::ofstream csv(out / "ablation.csv");
  harness::write_ablation_csv(csv, rows);
  const std::string table = harness::ablation_table(rows);
  std::ofstream(out / "ablation.txt") << table;
  std::cout << table;
  const auto variants = harness::ablation_variants(base.model);
  bool ok = rows.size() == variants.size();
  std::map<std::string, bool> seen;
  for (const auto& r : rows) {
    seen[r.name] = true;
    ok = ok && r.by_split.count("all") && std::isfinite(r.final_loss) && table.find(r.name) != std::string::npos;
  }
  for (const char* n : {"baseline", "rgb_only", "e2i_only", "i2e_only", "k0", "k4", "placement_last", "t1"})
    ok = ok && seen.count(n);
  return {ok, std::to_string(rows.size()) + " variants trained and tabulated (" + (out / "ablation.csv").string() +
                  ")"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"energy model", energy_model},
      {"sparse coding oracle", ista_oracle},
      {"adapter / oracle equivalence", adapter_oracle},
      {"gradient checks", gradient_checks},
      {"zero-adapter equivalence", zero_adapter_equivalence},
      {"spike binarity", spike_binarity},
      {"metric oracle", metric_oracle},
      {"end-to-end smoke", end_to_end},
      {"ablation harness", ablation},
  };
  const std::vector<double> budget_s{1, 30, 5, 120, 10, 60, 10, 45 * 60, 0};
  std::vector<int> which;
  for (int i = 1; i < argc; ++i) which.push_back(std::stoi(argv[i]));
  if (which.empty())
    for (int i = 1; i <= 9; ++i) which.push_back(i);

  int failed = 0;
  for (int id : which) {
    if (id < 1 || id > 9) {
      std::cerr << "unknown criterion " << id << '\n';
      return 2;
    }
    const auto& [name, fn] = criteria[static_cast<std::size_t>(id - 1)];
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double budget = budget_s[static_cast<std::size_t>(id - 1)];
    const bool in_time = budget <= 0 || secs <= budget;
    const bool pass = o.pass && in_time;
    std::cout << "criterion " << id << " (" << name << "): " << (pass ? "PASS" : "FAIL") << " - " << o.detail
              << " [" << fmt(secs) << " s" << (budget > 0 ? ", budget " + fmt(budget) + " s" : "")
              << (in_time ? "" : ", over budget") << "]" << std::endl;
    failed += !pass;
  }
  return failed == 0 ? 0 : 1;
}
