#pragma once

// Operation counting, firing-rate measurement and the 45 nm energy estimate
//   E = E_MAC * sum(op_mac) + E_AC * sum(op_ac * firing_rate).

#include "istas/core/op_recorder.hpp"
#include "istas/tracker/model.hpp"

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace istas::energy {

struct EnergyConstants {
  double mac_pj = 4.6;
  double ac_pj = 0.9;
};

struct OpCountReport {
  std::vector<OpRecord> layers;
  std::vector<std::string> uncounted;  // layers whose cost is not modelled

  double total_mac() const;
  double total_ac() const;      // peak accumulations
  double total_syops() const;   // sum op_ac * firing_rate
  double flops() const { return 2.0 * total_mac(); }
  double mac(Branch b) const;
  double syops(Branch b) const;
};

OpCountReport make_report(const std::vector<OpRecord>& records);
// Layer lists are appended; the result's energy is the sum of the parts.
OpCountReport concat(const OpCountReport& a, const OpCountReport& b);

// Per-sample counts of one inference pass.
OpCountReport count_ops(tracker::HybridModel& model, const tracker::ModelInput& sample);
// Counts averaged over a batch; firing rates pooled over every neuron, step and sample.
OpCountReport count_ops(tracker::HybridModel& model, const std::vector<tracker::ModelInput>& batch);
// Synaptic layer -> mean presynaptic spike rate over the batch.
std::map<std::string, double> measure_firing_rates(tracker::HybridModel& model,
                                                   const std::vector<tracker::ModelInput>& batch);

struct EnergyEstimate {
  double e_ann_mj = 0;
  double e_snn_mj = 0;
  double e_total_mj = 0;
};

double mac_energy_mj(double macs, const EnergyConstants& k = {});
double ac_energy_mj(double syops, const EnergyConstants& k = {});
double layer_energy_mj(const OpRecord& r, const EnergyConstants& k = {});
EnergyEstimate estimate_energy(const OpCountReport& report, const EnergyConstants& k = {});

// CSV: layer,branch,kind,op_mac,op_ac,firing_rate,syops,flops,energy_mJ then a totals row.
void write_energy_csv(std::ostream& os, const OpCountReport& report, const EnergyConstants& k = {});
// Aligned text table with Params, MAC, AC, FLOPs, SyOps, E_ANN, E_SNN, E.
std::string summary_table(std::size_t params, const OpCountReport& report, const EnergyConstants& k = {});

}  // namespace istas::energy
