#include "istas/ista/verify.hpp"

#include "istas/core/error.hpp"
#include "istas/ista/adapter.hpp"

#include <iomanip>
#include <ostream>
#include <random>

namespace istas::ista {

LassoInstance random_lasso(std::uint64_t seed, int m, int l, int n, double lambda) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  LassoInstance inst;
  inst.x = Matrix::NullaryExpr(m, n, [&]() { return g(rng); });
  inst.dict = Matrix::NullaryExpr(m, l, [&]() { return g(rng); });
  inst.dict.colwise().normalize();
  inst.lambda = lambda;
  inst.step = 0.9 * max_stable_step(inst.dict);
  return inst;
}

double adapter_oracle_maxdiff(const LassoInstance& inst, int chain) {
  const int m = static_cast<int>(inst.dict.rows());
  const int l = static_cast<int>(inst.dict.cols());
  const int n = static_cast<int>(inst.x.cols());
  Rng rng(0);
  ad::Tape tape(false);
  Context ctx{tape};
  Var x = tape.constant(inst.x);
  Var code = tape.constant(Matrix::Zero(l, n));
  std::vector<IstaAdapter> adapters;
  adapters.reserve(static_cast<std::size_t>(chain));
  for (int k = 0; k < chain; ++k) {
    adapters.emplace_back("verify" + std::to_string(k), m, l, m, rng);
    IstaAdapter& a = adapters.back();
    a.analysis.value = 2.0 * inst.step * inst.dict.transpose();
    a.dictionary.value = inst.dict;
    a.threshold.value = Matrix::Constant(l, 1, inst.step * inst.lambda);
    a.skip_average = false;
    code = a.forward(ctx, x, code, 1, 1, "verify").code;
  }
  const IstaResult ref = ista_reference_solve(inst.x, inst.dict, inst.lambda, inst.step, chain);
  return (code.value() - ref.code).cwiseAbs().maxCoeff();
}

IstaCheck check_ista(std::uint64_t seed, int iters, int chain) {
  const LassoInstance inst = random_lasso(seed);
  IstaCheck c;
  c.seed = seed;
  try {
    const IstaResult r = ista_reference_solve(inst.x, inst.dict, inst.lambda, inst.step, iters);
    c.objective_final = r.objective.back();
    c.kkt_residual = r.kkt;
  } catch (const StepSizeError&) {
    c.monotone = false;
    const IstaResult r = ista_reference_solve(inst.x, inst.dict, inst.lambda, inst.step, iters, 1e300);
    c.objective_final = r.objective.back();
    c.kkt_residual = r.kkt;
  }
  c.adapter_vs_oracle_maxdiff = adapter_oracle_maxdiff(inst, chain);
  return c;
}

std::vector<IstaCheck> check_ista_batch(int count, std::uint64_t first_seed, int iters, int chain) {
  std::vector<IstaCheck> out;
  for (int i = 0; i < count; ++i) out.push_back(check_ista(first_seed + static_cast<std::uint64_t>(i), iters, chain));
  return out;
}

void write_ista_csv(std::ostream& os, const std::vector<IstaCheck>& rows) {
  os << "seed,objective_final,kkt_residual,adapter_vs_oracle_maxdiff\n" << std::setprecision(12);
  for (const auto& r : rows)
    os << r.seed << ',' << r.objective_final << ',' << r.kkt_residual << ',' << r.adapter_vs_oracle_maxdiff << '\n';
}

}  // namespace istas::ista
