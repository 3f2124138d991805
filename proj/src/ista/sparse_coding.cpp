#include "istas/ista/sparse_coding.hpp"

#include "istas/core/error.hpp"

#include <cmath>
#include <sstream>

namespace istas::ista {

namespace {

double shrink(double v, double th) {
  const double mag = std::abs(v) - th;
  if (mag <= 0) return 0.0;
  return v > 0 ? mag : -mag;
}

}  // namespace

Matrix soft_threshold(const Matrix& x, const Matrix& theta) {
  if ((theta.array() < 0.0).any()) throw InvariantError("soft_threshold: thresholds must be nonnegative");
  Matrix out(x.rows(), x.cols());
  if (theta.size() == 1) {
    const double th = theta(0, 0);
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      for (Eigen::Index i = 0; i < x.rows(); ++i) out(i, j) = shrink(x(i, j), th);
  } else if (theta.rows() == x.rows() && theta.cols() == x.cols()) {
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      for (Eigen::Index i = 0; i < x.rows(); ++i) out(i, j) = shrink(x(i, j), theta(i, j));
  } else if (theta.rows() == x.rows() && theta.cols() == 1) {
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      for (Eigen::Index i = 0; i < x.rows(); ++i) out(i, j) = shrink(x(i, j), theta(i, 0));
  } else {
    throw ShapeError("soft_threshold: theta is not broadcastable to x");
  }
  return out;
}

Matrix soft_threshold(const Matrix& x, double theta) {
  return soft_threshold(x, Matrix::Constant(1, 1, theta));
}

double lasso_objective(const Matrix& x, const Matrix& dict, const Matrix& code, double lambda) {
  if (lambda < 0) throw ConfigError("lasso_objective: lambda must be nonnegative");
  require_shape(dict.rows() == x.rows() && dict.cols() == code.rows() && code.cols() == x.cols(),
                "lasso_objective: x (MxN), D (MxL), a (LxN) shapes disagree");
  return (x - dict * code).squaredNorm() + lambda * code.cwiseAbs().sum();
}

double kkt_residual(const Matrix& x, const Matrix& dict, const Matrix& code, double lambda) {
  const Matrix g = 2.0 * dict.transpose() * (dict * code - x);
  double worst = 0;
  for (Eigen::Index j = 0; j < code.cols(); ++j) {
    for (Eigen::Index i = 0; i < code.rows(); ++i) {
      const double a = code(i, j);
      const double v = a != 0 ? std::abs(g(i, j) + lambda * (a > 0 ? 1.0 : -1.0))
                              : std::max(0.0, std::abs(g(i, j)) - lambda);
      worst = std::max(worst, v);
    }
  }
  return worst;
}

double max_stable_step(const Matrix& dict) {
  Eigen::JacobiSVD<Matrix> svd(dict);
  const double smax = svd.singularValues()(0);
  return 1.0 / (2.0 * smax * smax);
}

IstaResult ista_reference_solve(const Matrix& x, const Matrix& dict, double lambda, double step, int iters,
                                double increase_tol) {
  if (lambda < 0) throw ConfigError("ista: lambda must be nonnegative");
  if (!(step > 0)) throw ConfigError("ista: step must be positive");
  if (iters < 0) throw ConfigError("ista: iteration count must be nonnegative");
  require_shape(dict.rows() == x.rows(), "ista: dictionary rows must match x rows");

  IstaResult r;
  r.code = Matrix::Zero(dict.cols(), x.cols());
  r.objective.reserve(static_cast<std::size_t>(iters) + 1);
  r.objective.push_back(lasso_objective(x, dict, r.code, lambda));
  const Matrix dt = dict.transpose();
  const double th = step * lambda;
  for (int k = 0; k < iters; ++k) {
    r.code = soft_threshold(r.code + 2.0 * step * (dt * (x - dict * r.code)), th);
    const double f = lasso_objective(x, dict, r.code, lambda);
    const double prev = r.objective.back();
    if (f > prev + increase_tol * std::max(1.0, std::abs(prev))) {
      std::ostringstream msg;
      msg << "ista: objective increased from " << prev << " to " << f << " at iteration " << k + 1
          << " (step " << step << " exceeds the stable bound " << max_stable_step(dict) << ")";
      throw StepSizeError(msg.str());
    }
    r.objective.push_back(f);
  }
  r.kkt = kkt_residual(x, dict, r.code, lambda);
  return r;
}

}  // namespace istas::ista
