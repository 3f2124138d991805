#include "istas/harness/ablation.hpp"

#include "istas/core/error.hpp"

#include <algorithm>
#include <chrono>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

namespace istas::harness {

using tracker::TrackerConfig;

std::vector<AblationVariant> ablation_variants(const TrackerConfig& base) {
  std::vector<AblationVariant> v;
  v.push_back({"baseline", "baseline", base});
  auto add = [&](const std::string& name, const std::string& axis, auto&& edit) {
    TrackerConfig c = base;
    edit(c);
    c.validate();
    v.push_back({name, axis, c});
  };
  add("rgb_only", "modality", [](TrackerConfig& c) { c.modality = tracker::Modality::RgbOnly; });
  add("event_only", "modality", [](TrackerConfig& c) { c.modality = tracker::Modality::EventOnly; });
  add("e2i_only", "direction", [](TrackerConfig& c) { c.direction = tracker::AdapterDirection::EventToImage; });
  add("i2e_only", "direction", [](TrackerConfig& c) { c.direction = tracker::AdapterDirection::ImageToEvent; });
  add("k0", "adapter_count", [](TrackerConfig& c) { c.adapter_layers = 0; });
  add("k4", "adapter_count", [](TrackerConfig& c) {
    c.adapter_layers = 4;
    c.snn_depth = std::max(c.snn_depth, 4);
    c.ann_depth = std::max(c.ann_depth, c.snn_depth);
  });
  add("placement_last", "placement", [](TrackerConfig& c) { c.placement = tracker::Placement::Last; });
  add("t1", "time_steps", [](TrackerConfig& c) { c.steps = 1; });
  add("no_tda", "reducer", [](TrackerConfig& c) { c.use_tda = false; });
  return v;
}

std::vector<AblationRow> run_ablation(const TrainConfig& base, const BenchmarkData& data, std::uint64_t seed,
                                      const std::vector<std::string>& only, std::ostream* log) {
  auto variants = ablation_variants(base.model);
  if (!only.empty()) {
    std::set<std::string> known;
    for (const auto& v : variants) known.insert(v.name);
    for (const auto& n : only)
      if (!known.count(n)) throw ConfigError("unknown ablation variant '" + n + "'");
    std::erase_if(variants, [&](const AblationVariant& v) {
      return std::find(only.begin(), only.end(), v.name) == only.end();
    });
  }
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    if (log) *log << "ablation: " << v.name << '\n';
    TrainConfig cfg = base;
    cfg.model = v.model;
    const auto t0 = std::chrono::steady_clock::now();
    auto trained = train_loop(cfg, data.train, seed, {}, log);
    const auto t1 = std::chrono::steady_clock::now();
    AblationRow row;
    row.name = v.name;
    row.axis = v.axis;
    row.params = trained.model->num_parameters();
    row.adapter_params = trained.model->num_adapter_parameters();
    row.final_loss = trained.log.epoch_loss.empty() ? 0.0 : trained.log.epoch_loss.back();
    row.train_seconds = std::chrono::duration<double>(t1 - t0).count();
    row.by_split = summarize_by_split(evaluate_tracker(*trained.model, data.test));
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

std::vector<std::string> split_columns(const std::vector<AblationRow>& rows) {
  std::set<std::string> names;
  for (const auto& r : rows)
    for (const auto& [k, _] : r.by_split) names.insert(k);
  std::vector<std::string> out;
  if (names.erase("all")) out.push_back("all");
  out.insert(out.end(), names.begin(), names.end());
  return out;
}

double metric_or_nan(const AblationRow& r, const std::string& split, bool pr) {
  const auto it = r.by_split.find(split);
  if (it == r.by_split.end()) return std::nan("");
  return pr ? it->second.pr20 : it->second.sr_auc;
}

}  // namespace

void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows) {
  const auto splits = split_columns(rows);
  os << "variant,axis,params,adapter_params,final_loss,train_seconds";
  for (const auto& s : splits) os << ",sr_auc_" << s << ",pr20_" << s;
  os << '\n' << std::setprecision(6);
  for (const auto& r : rows) {
    os << r.name << ',' << r.axis << ',' << r.params << ',' << r.adapter_params << ',' << r.final_loss << ','
       << r.train_seconds;
    for (const auto& s : splits) os << ',' << metric_or_nan(r, s, false) << ',' << metric_or_nan(r, s, true);
    os << '\n';
  }
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  const auto splits = split_columns(rows);
  std::vector<int> widths;
  for (const auto& s : splits) widths.push_back(static_cast<int>(std::max<std::size_t>(s.size(), 5) + 2));
  std::ostringstream os;
  os << "SR_AUC per split and PR@20 over all sequences, in %\n";
  os << std::left << std::setw(16) << "variant" << std::setw(15) << "axis" << std::right << std::setw(9) << "params"
     << std::setw(9) << "adapter";
  for (std::size_t i = 0; i < splits.size(); ++i) os << std::setw(widths[i]) << splits[i];
  os << std::setw(8) << "PR@20" << '\n';
  os << std::fixed << std::setprecision(1);
  for (const auto& r : rows) {
    os << std::left << std::setw(16) << r.name << std::setw(15) << r.axis << std::right << std::setw(9) << r.params
       << std::setw(9) << r.adapter_params;
    for (std::size_t i = 0; i < splits.size(); ++i) os << std::setw(widths[i]) << 100.0 * metric_or_nan(r, splits[i], false);
    os << std::setw(8) << 100.0 * metric_or_nan(r, "all", true) << '\n';
  }
  return os.str();
}

}  // namespace istas::harness
