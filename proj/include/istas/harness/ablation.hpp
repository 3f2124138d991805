#pragma once

// Ablation sweep over modality, adapter direction, adapter count, placement,
// time steps and the temporal reducer.

#include "istas/harness/train.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace istas::harness {

struct AblationVariant {
  std::string name;
  std::string axis;
  tracker::TrackerConfig model;
};

// Variants derived from `base`: baseline, rgb_only, event_only, e2i_only,
// i2e_only, k0, k4, placement_last, t1, no_tda. k4 deepens the SNN branch to
// four layers when needed so that four aligned layers exist.
std::vector<AblationVariant> ablation_variants(const tracker::TrackerConfig& base);

struct AblationRow {
  std::string name;
  std::string axis;
  std::size_t params = 0;
  std::size_t adapter_params = 0;
  double final_loss = 0;
  double train_seconds = 0;
  std::map<std::string, EvalResult> by_split;  // includes "all"
};

// Trains and evaluates every variant with the same data and seed. Names in
// `only` restrict the sweep (empty: all variants).
std::vector<AblationRow> run_ablation(const TrainConfig& base, const BenchmarkData& data, std::uint64_t seed,
                                      const std::vector<std::string>& only = {}, std::ostream* log = nullptr);

// CSV with one row per variant and SR_AUC / PR@20 columns per split.
void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows);
// Aligned text table of the same content.
std::string ablation_table(const std::vector<AblationRow>& rows);

}  // namespace istas::harness
