#include "istas/core/op_recorder.hpp"

namespace istas {

OpRecord& OpRecorder::find_or_add(const std::string& layer, Branch branch, const std::string& kind) {
  for (auto& r : records_)
    if (r.layer == layer && r.branch == branch) return r;
  OpRecord r;
  r.layer = layer;
  r.branch = branch;
  r.kind = kind;
  records_.push_back(r);
  return records_.back();
}

void OpRecorder::mac(const std::string& layer, Branch branch, double count, const std::string& kind) {
  find_or_add(layer, branch, kind).op_mac += count;
}

void OpRecorder::synaptic(const std::string& layer, Branch branch, double peak_count, const Eigen::MatrixXd& spikes,
                          const std::string& kind) {
  const double rate = spikes.size() > 0 ? spikes.mean() : 0.0;
  synaptic_rate(layer, branch, peak_count, rate, kind);
}

void OpRecorder::synaptic_rate(const std::string& layer, Branch branch, double peak_count, double rate,
                               const std::string& kind) {
  OpRecord& r = find_or_add(layer, branch, kind);
  // Keep firing_rate as the peak-weighted mean so that op_ac * rate stays the SyOps total.
  const double total = r.op_ac + peak_count;
  r.firing_rate = total > 0 ? (r.op_ac * r.firing_rate + peak_count * rate) / total : 0.0;
  r.op_ac = total;
  r.synaptic = true;
}

void OpRecorder::uncounted(const std::string& layer, Branch branch, const std::string& kind) {
  OpRecord& r = find_or_add(layer, branch, kind);
  r.counted = false;
}

}  // namespace istas
