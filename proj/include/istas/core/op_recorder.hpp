#pragma once

// Per-layer operation tallies collected during a forward pass.

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace istas {

enum class Branch { Ann, Snn };

struct OpRecord {
  std::string layer;
  Branch branch = Branch::Ann;
  double op_mac = 0;
  double op_ac = 0;          // peak accumulations (every presynaptic spike site counted)
  double firing_rate = 0;    // mean presynaptic spike value, synaptic layers only
  bool synaptic = false;
  bool counted = true;       // false: a layer kind the counter does not model
  std::string kind;
};

class OpRecorder {
 public:
  // Dense multiply-accumulate work (real-valued operands).
  void mac(const std::string& layer, Branch branch, double count, const std::string& kind = "linear");
  // Accumulate-only work driven by binary presynaptic activity `spikes`.
  void synaptic(const std::string& layer, Branch branch, double peak_count, const Eigen::MatrixXd& spikes,
                const std::string& kind = "linear");
  void synaptic_rate(const std::string& layer, Branch branch, double peak_count, double rate,
                     const std::string& kind = "linear");
  // A layer whose cost is not modelled. Reported, never silently dropped.
  void uncounted(const std::string& layer, Branch branch, const std::string& kind);

  const std::vector<OpRecord>& records() const { return records_; }
  void clear() { records_.clear(); }

 private:
  OpRecord& find_or_add(const std::string& layer, Branch branch, const std::string& kind);
  std::vector<OpRecord> records_;
};

}  // namespace istas
