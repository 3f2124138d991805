#include "istas/energy/energy.hpp"

#include "istas/core/error.hpp"

#include <iomanip>
#include <ostream>
#include <sstream>

namespace istas::energy {

double OpCountReport::total_mac() const {
  double s = 0;
  for (const auto& r : layers) s += r.op_mac;
  return s;
}

double OpCountReport::total_ac() const {
  double s = 0;
  for (const auto& r : layers) s += r.op_ac;
  return s;
}

double OpCountReport::total_syops() const {
  double s = 0;
  for (const auto& r : layers) s += r.op_ac * r.firing_rate;
  return s;
}

double OpCountReport::mac(Branch b) const {
  double s = 0;
  for (const auto& r : layers)
    if (r.branch == b) s += r.op_mac;
  return s;
}

double OpCountReport::syops(Branch b) const {
  double s = 0;
  for (const auto& r : layers)
    if (r.branch == b) s += r.op_ac * r.firing_rate;
  return s;
}

OpCountReport make_report(const std::vector<OpRecord>& records) {
  OpCountReport rep;
  for (const auto& r : records) {
    if (r.op_mac < 0 || r.op_ac < 0) throw InvariantError("op report: negative count for " + r.layer);
    if (r.firing_rate < 0 || r.firing_rate > 1) throw InvariantError("op report: firing rate outside [0, 1]");
    rep.layers.push_back(r);
    if (!r.counted) rep.uncounted.push_back(r.layer);
  }
  return rep;
}

OpCountReport concat(const OpCountReport& a, const OpCountReport& b) {
  OpCountReport r = a;
  r.layers.insert(r.layers.end(), b.layers.begin(), b.layers.end());
  r.uncounted.insert(r.uncounted.end(), b.uncounted.begin(), b.uncounted.end());
  return r;
}

OpCountReport count_ops(tracker::HybridModel& model, const tracker::ModelInput& sample) {
  return count_ops(model, std::vector<tracker::ModelInput>{sample});
}

OpCountReport count_ops(tracker::HybridModel& model, const std::vector<tracker::ModelInput>& batch) {
  if (batch.empty()) throw ConfigError("count_ops: batch must be nonempty");
  std::vector<OpRecord> merged;
  auto find = [&merged](const OpRecord& r) -> OpRecord* {
    for (auto& m : merged)
      if (m.layer == r.layer && m.branch == r.branch) return &m;
    return nullptr;
  };
  for (const auto& sample : batch) {
    OpRecorder ops;
    ad::Tape tape(false);
    Context ctx{tape, &ops};
    model.forward(ctx, sample);
    for (const auto& r : ops.records()) {
      OpRecord* m = find(r);
      if (!m) {
        OpRecord z = r;
        z.op_mac = z.op_ac = z.firing_rate = 0;
        merged.push_back(z);
        m = &merged.back();
      }
      const double total = m->op_ac + r.op_ac;
      m->firing_rate = total > 0 ? (m->op_ac * m->firing_rate + r.op_ac * r.firing_rate) / total : 0.0;
      m->op_ac = total;
      m->op_mac += r.op_mac;
      m->synaptic = m->synaptic || r.synaptic;
      m->counted = m->counted && r.counted;
    }
  }
  const double n = static_cast<double>(batch.size());
  for (auto& m : merged) {
    m.op_mac /= n;
    m.op_ac /= n;
  }
  return make_report(merged);
}

std::map<std::string, double> measure_firing_rates(tracker::HybridModel& model,
                                                   const std::vector<tracker::ModelInput>& batch) {
  std::map<std::string, double> out;
  for (const auto& r : count_ops(model, batch).layers)
    if (r.synaptic) out[r.layer] = r.firing_rate;
  return out;
}

double mac_energy_mj(double macs, const EnergyConstants& k) { return macs * k.mac_pj * 1e-9; }

double ac_energy_mj(double syops, const EnergyConstants& k) { return syops * k.ac_pj * 1e-9; }

double layer_energy_mj(const OpRecord& r, const EnergyConstants& k) {
  return mac_energy_mj(r.op_mac, k) + ac_energy_mj(r.op_ac * r.firing_rate, k);
}

EnergyEstimate estimate_energy(const OpCountReport& report, const EnergyConstants& k) {
  EnergyEstimate e;
  for (const auto& r : report.layers) {
    const double v = layer_energy_mj(r, k);
    if (r.branch == Branch::Ann) {
      e.e_ann_mj += v;
    } else {
      e.e_snn_mj += v;
    }
  }
  e.e_total_mj = e.e_ann_mj + e.e_snn_mj;
  return e;
}

namespace {

const char* branch_name(Branch b) { return b == Branch::Ann ? "ann" : "snn"; }

std::string giga(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v / 1e9 << "G";
  return os.str();
}

}  // namespace

void write_energy_csv(std::ostream& os, const OpCountReport& report, const EnergyConstants& k) {
  os << "layer,branch,kind,op_mac,op_ac,firing_rate,syops,flops,energy_mJ,counted\n";
  os << std::setprecision(10);
  for (const auto& r : report.layers) {
    os << r.layer << ',' << branch_name(r.branch) << ',' << r.kind << ',' << r.op_mac << ',' << r.op_ac << ','
       << r.firing_rate << ',' << r.op_ac * r.firing_rate << ',' << 2.0 * r.op_mac << ',' << layer_energy_mj(r, k)
       << ',' << (r.counted ? 1 : 0) << '\n';
  }
  const auto e = estimate_energy(report, k);
  const double ac = report.total_ac();
  os << "TOTAL,all,total," << report.total_mac() << ',' << ac << ','
     << (ac > 0 ? report.total_syops() / ac : 0.0) << ',' << report.total_syops() << ',' << report.flops() << ','
     << e.e_total_mj << ',' << (report.uncounted.empty() ? 1 : 0) << '\n';
}

std::string summary_table(std::size_t params, const OpCountReport& report, const EnergyConstants& k) {
  const auto e = estimate_energy(report, k);
  std::ostringstream os;
  os << std::left << std::setw(10) << "Params" << std::setw(12) << "MAC" << std::setw(12) << "AC" << std::setw(12)
     << "FLOPs" << std::setw(12) << "SyOps" << std::setw(12) << "E_ANN" << std::setw(12) << "E_SNN" << "E" << '\n';
  std::ostringstream p;
  p << std::fixed << std::setprecision(3) << static_cast<double>(params) / 1e6 << "M";
  auto mj = [](double v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(4) << v << "mJ";
    return s.str();
  };
  os << std::setw(10) << p.str() << std::setw(12) << giga(report.total_mac()) << std::setw(12)
     << giga(report.total_ac()) << std::setw(12) << giga(report.flops()) << std::setw(12)
     << giga(report.total_syops()) << std::setw(12) << mj(e.e_ann_mj) << std::setw(12) << mj(e.e_snn_mj)
     << mj(e.e_total_mj) << '\n';
  if (!report.uncounted.empty()) {
    os << "uncounted layers:";
    for (const auto& l : report.uncounted) os << ' ' << l;
    os << '\n';
  }
  return os.str();
}

}  // namespace istas::energy
