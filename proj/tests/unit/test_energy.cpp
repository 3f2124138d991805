#include "istas/core/error.hpp"
#include "istas/energy/energy.hpp"
#include "istas/spiking/blocks.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace istas;
using namespace istas::energy;
using namespace istas::tracker;
using istas::testing::random_input;
using istas::testing::random_matrix;
using istas::testing::tiny_config;

namespace {

OpRecord mac_record(const std::string& name, Branch b, double mac) {
  OpRecord r;
  r.layer = name;
  r.branch = b;
  r.op_mac = mac;
  return r;
}

OpRecord ac_record(const std::string& name, double ac, double rate) {
  OpRecord r;
  r.layer = name;
  r.branch = Branch::Snn;
  r.op_ac = ac;
  r.firing_rate = rate;
  r.synaptic = true;
  return r;
}

double ac_total(const OpCountReport& r, Branch b) {
  double s = 0;
  for (const auto& l : r.layers)
    if (l.branch == b) s += l.op_ac;
  return s;
}

}  // namespace

TEST(Energy, DenseAnnTableRow) {
  const double e = mac_energy_mj(56.4e9);
  EXPECT_NEAR(e, 259.44, 1e-9);
  EXPECT_LT(std::abs(e - 259.3) / 259.3, 1e-3);
}

TEST(Energy, ZeroOpsZeroEnergy) {
  const auto est = estimate_energy(make_report({}));
  EXPECT_EQ(est.e_total_mj, 0.0);
  EXPECT_EQ(est.e_ann_mj, 0.0);
  EXPECT_EQ(est.e_snn_mj, 0.0);
}

TEST(Energy, SingleStepRowDecomposition) {
  const double ac = ac_energy_mj(4.2e9);
  EXPECT_NEAR(ac, 3.78, 1e-9);
  const double mac = mac_energy_mj(3.7e9 / 2);
  EXPECT_NEAR(mac, 8.51, 1e-9);
  EXPECT_NEAR(ac + mac, 12.2, 0.1);
}

TEST(Energy, WeightedSumOfMacAndSyops) {
  const auto report = make_report({mac_record("a", Branch::Ann, 1000), mac_record("b", Branch::Snn, 300),
                                   ac_record("c", 5000, 0.2), ac_record("d", 800, 0.5)});
  const auto est = estimate_energy(report);
  const double ann = 4.6e-9 * 1000;
  const double snn = 4.6e-9 * 300 + 0.9e-9 * (5000 * 0.2 + 800 * 0.5);
  EXPECT_DOUBLE_EQ(est.e_ann_mj, ann);
  EXPECT_DOUBLE_EQ(est.e_snn_mj, snn);
  EXPECT_DOUBLE_EQ(est.e_total_mj, ann + snn);
  EXPECT_DOUBLE_EQ(report.total_syops(), 5000 * 0.2 + 800 * 0.5);
  EXPECT_DOUBLE_EQ(report.flops(), 2 * 1300.0);
}

TEST(Energy, AdditiveOverConcatenation) {
  const auto a = make_report({mac_record("a", Branch::Ann, 123), ac_record("c", 77, 0.3)});
  const auto b = make_report({mac_record("b", Branch::Snn, 456), ac_record("d", 99, 0.9)});
  EXPECT_NEAR(estimate_energy(concat(a, b)).e_total_mj, estimate_energy(a).e_total_mj + estimate_energy(b).e_total_mj,
              1e-18);
}

TEST(Energy, InvalidRecordsRejected) {
  EXPECT_THROW(make_report({ac_record("x", 10, 1.5)}), InvariantError);
  EXPECT_THROW(make_report({mac_record("x", Branch::Ann, -1)}), InvariantError);
}

TEST(OpCount, DenseLayerOnRealInput) {
  Rng rng(1);
  Linear lin("lin", 6, 4, true, rng);
  OpRecorder ops;
  ad::Tape tape(false);
  Context ctx{tape, &ops};
  lin.forward(ctx, tape.constant(random_matrix(6, 5, 2)), "lin", Branch::Ann);
  ASSERT_EQ(ops.records().size(), 1u);
  EXPECT_EQ(ops.records()[0].op_mac, 6 * 4 * 5);
  EXPECT_EQ(ops.records()[0].op_ac, 0);
}

TEST(OpCount, SameLayerOnSpikesIsAccumulateOnly) {
  Rng rng(2);
  spiking::ConvBn conv("conv", 6, 4, 1, rng);
  OpRecorder ops;
  ad::Tape tape(false);
  Context ctx{tape, &ops};
  const Matrix spikes = (istas::testing::random_uniform(6, 5, 3).array() > 0.5).cast<double>();
  conv.forward(ctx, tape.constant(spikes), 1, true, "conv");
  const auto report = make_report(ops.records());
  const OpRecord* rec = nullptr;
  for (const auto& r : report.layers)
    if (r.layer == "conv.conv") rec = &r;
  ASSERT_NE(rec, nullptr);
  EXPECT_EQ(rec->op_ac, 6 * 4 * 5);
  EXPECT_EQ(rec->op_mac, 0);
  EXPECT_DOUBLE_EQ(rec->firing_rate, spikes.mean());
}

TEST(OpCount, ModelReportIsConsistent) {
  HybridModel model(tiny_config(), 1);
  const auto report = count_ops(model, random_input(model.config(), 2));
  EXPECT_GT(report.total_mac(), 0);
  EXPECT_GT(report.total_ac(), 0);
  for (const auto& r : report.layers) {
    EXPECT_GE(r.op_mac, 0);
    EXPECT_GE(r.op_ac, 0);
    EXPECT_GE(r.firing_rate, 0);
    EXPECT_LE(r.firing_rate, 1);
  }
  EXPECT_DOUBLE_EQ(report.flops(), 2 * report.total_mac());
  // Adapters, TDA and head are real-valued and count towards the ANN subtotal.
  for (const auto& r : report.layers)
    if (r.layer.rfind("adapter.", 0) == 0 || r.layer.rfind("head.", 0) == 0) { EXPECT_EQ(r.branch, Branch::Ann) << r.layer; }
}

TEST(OpCount, AccumulationsScaleWithStepsAndAnnAdaptersDoNot) {
  TrackerConfig c1 = tiny_config(), c3 = tiny_config();
  c1.steps = 1;
  c3.steps = 3;
  HybridModel m1(c1, 4), m3(c3, 4);
  const auto r1 = count_ops(m1, random_input(c1, 5));
  const auto r3 = count_ops(m3, random_input(c3, 5));
  EXPECT_DOUBLE_EQ(ac_total(r3, Branch::Snn), 3 * ac_total(r1, Branch::Snn));
  auto i2e_mac = [](const OpCountReport& r) {
    double s = 0;
    for (const auto& l : r.layers)
      if (l.layer.find(".i2e_") != std::string::npos) s += l.op_mac;
    return s;
  };
  EXPECT_GT(i2e_mac(r1), 0);
  EXPECT_DOUBLE_EQ(i2e_mac(r1), i2e_mac(r3));
}

TEST(FiringRates, ZeroEventsGiveZeroRates) {
  TrackerConfig c = tiny_config();
  c.modality = Modality::EventOnly;
  HybridModel model(c, 6);
  auto in = random_input(c, 7);
  in.z_events.setZero();
  in.x_events.setZero();
  const auto rates = measure_firing_rates(model, {in});
  EXPECT_FALSE(rates.empty());
  for (const auto& [layer, rate] : rates) EXPECT_EQ(rate, 0.0) << layer;
}

TEST(FiringRates, AllOnesSpikesGiveRateOne) {
  OpRecorder ops;
  ops.synaptic("x", Branch::Snn, 10, Matrix::Ones(3, 4));
  EXPECT_EQ(ops.records()[0].firing_rate, 1.0);
}

TEST(FiringRates, RandomInputsGiveRatesInUnitInterval) {
  HybridModel model(tiny_config(), 8);
  const auto rates = measure_firing_rates(model, {random_input(model.config(), 9), random_input(model.config(), 10)});
  for (const auto& [layer, rate] : rates) {
    EXPECT_GE(rate, 0.0);
    EXPECT_LE(rate, 1.0);
  }
}

TEST(EnergyCsv, HasHeaderLayersAndTotals) {
  HybridModel model(tiny_config(), 11);
  const auto report = count_ops(model, random_input(model.config(), 12));
  std::ostringstream os;
  write_energy_csv(os, report);
  const std::string csv = os.str();
  EXPECT_EQ(csv.rfind("layer,branch,kind,op_mac,op_ac,firing_rate,syops,flops,energy_mJ,counted", 0), 0u);
  EXPECT_NE(csv.find("\nTOTAL,"), std::string::npos);
  const std::string table = summary_table(model.num_parameters(), report);
  for (const char* col : {"Params", "MAC", "AC", "FLOPs", "SyOps", "E_ANN", "E_SNN", "E"})
    EXPECT_NE(table.find(col), std::string::npos) << col;
}
