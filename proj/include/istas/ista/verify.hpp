#pragma once

// Random LASSO instances checked against the reference solver, and chained
// adapters with tied parameters checked against the same ISTA iterations.

#include "istas/ista/sparse_coding.hpp"

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace istas::ista {

struct LassoInstance {
  Matrix x;     // M x N
  Matrix dict;  // M x L
  double lambda = 1.0;
  double step = 0;
};

// Gaussian x and D with unit-norm atoms; step = 0.9 * max_stable_step(D).
LassoInstance random_lasso(std::uint64_t seed, int m = 8, int l = 16, int n = 4, double lambda = 1.0);

// Max abs difference between `chain` adapters run with P = 2 step D^T,
// theta = step lambda, pure thresholding and a zero initial code, and
// `chain` reference ISTA iterations.
double adapter_oracle_maxdiff(const LassoInstance& inst, int chain);

struct IstaCheck {
  std::uint64_t seed = 0;
  double objective_final = 0;
  double kkt_residual = 0;
  double adapter_vs_oracle_maxdiff = 0;
  bool monotone = true;
};

IstaCheck check_ista(std::uint64_t seed, int iters = 5000, int chain = 4);
std::vector<IstaCheck> check_ista_batch(int count, std::uint64_t first_seed = 0, int iters = 5000, int chain = 4);
// Header: seed,objective_final,kkt_residual,adapter_vs_oracle_maxdiff
void write_ista_csv(std::ostream& os, const std::vector<IstaCheck>& rows);

}  // namespace istas::ista
