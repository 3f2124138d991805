#pragma once

// Classical sparse coding: soft thresholding, the LASSO objective
//   f(a) = ||x - D a||_F^2 + lambda * ||a||_1
// and the ISTA iteration that minimises it. The reference solver is the
// oracle the unrolled adapters are checked against.

#include <Eigen/Dense>

#include <vector>

namespace istas::ista {

using Matrix = Eigen::MatrixXd;

// sign(x) * max(|x| - theta, 0). `theta` is either x-shaped, a column with
// one threshold per row, or 1 x 1. Throws InvariantError on negative theta.
Matrix soft_threshold(const Matrix& x, const Matrix& theta);
Matrix soft_threshold(const Matrix& x, double theta);

double lasso_objective(const Matrix& x, const Matrix& dict, const Matrix& code, double lambda);

// Largest violation of the LASSO optimality conditions
//   0 in 2 D^T (D a - x) + lambda * d||a||_1
// measured entrywise (infinity norm).
double kkt_residual(const Matrix& x, const Matrix& dict, const Matrix& code, double lambda);

// 1 / (2 * sigma_max(D)^2): the step size below which ISTA descends monotonically.
double max_stable_step(const Matrix& dict);

struct IstaResult {
  Matrix code;
  std::vector<double> objective;  // f(a_0), f(a_1), ..., f(a_iters)
  double kkt = 0;
};

// a <- soft_threshold(a + 2 * step * D^T (x - D a), step * lambda) from a = 0.
// Throws StepSizeError as soon as the objective rises by more than
// `increase_tol * max(1, f)`.
IstaResult ista_reference_solve(const Matrix& x, const Matrix& dict, double lambda, double step, int iters,
                                double increase_tol = 1e-12);

}  // namespace istas::ista
