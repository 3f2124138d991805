#pragma once

// Helpers shared by the unit and acceptance tests: random inputs, a central
// finite-difference gradient checker and small synthetic fixtures.

#include "istas/core/layers.hpp"
#include "istas/eventsim/types.hpp"
#include "istas/tracker/config.hpp"
#include "istas/tracker/model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace istas::testing {

inline Matrix random_matrix(ad::Index rows, ad::Index cols, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  return Matrix::NullaryExpr(rows, cols, [&]() { return g(rng); });
}

inline Matrix random_uniform(ad::Index rows, ad::Index cols, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  return Matrix::NullaryExpr(rows, cols, [&]() { return u(rng); });
}

// Builds a scalar loss on a fresh tape. Inputs listed in `inputs` are passed
// as gradient-carrying variables in the same order.
using LossFn = std::function<Var(Context&, const std::vector<Var>&)>;

struct GradCheckResult {
  std::string name;
  double rel_error = 0;
  double analytic_norm = 0;
};

inline double relative_error(const Matrix& a, const Matrix& b) {
  const double denom = std::max({a.norm(), b.norm(), 1e-10});
  return (a - b).norm() / denom;
}

// Central differences with step h for every parameter and every input;
// one relative error (Frobenius) per tensor.
inline std::vector<GradCheckResult> grad_check(const LossFn& loss, const std::vector<Parameter*>& params,
                                               std::vector<Matrix> inputs, bool soft_spikes = false,
                                               double h = 1e-6) {
  auto eval = [&](const std::vector<Matrix>& in) {
    ad::Tape tape(false);
    Context ctx{tape, nullptr, soft_spikes};
    std::vector<Var> vars;
    for (const auto& m : in) vars.push_back(tape.constant(m));
    return loss(ctx, vars).scalar();
  };
  for (Parameter* p : params) p->zero_grad();
  ad::Tape tape;
  Context ctx{tape, nullptr, soft_spikes};
  std::vector<Var> vars;
  for (const auto& m : inputs) vars.push_back(tape.variable(m));
  tape.backward(loss(ctx, vars));

  std::vector<GradCheckResult> out;
  for (Parameter* p : params) {
    Matrix numeric(p->value.rows(), p->value.cols());
    for (ad::Index i = 0; i < p->value.size(); ++i) {
      const double keep = p->value(i);
      p->value(i) = keep + h;
      const double up = eval(inputs);
      p->value(i) = keep - h;
      const double down = eval(inputs);
      p->value(i) = keep;
      numeric(i) = (up - down) / (2 * h);
    }
    out.push_back({p->name, relative_error(p->grad, numeric), p->grad.norm()});
  }
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Matrix analytic = tape.grad(vars[k]);
    Matrix numeric(inputs[k].rows(), inputs[k].cols());
    for (ad::Index i = 0; i < inputs[k].size(); ++i) {
      const double keep = inputs[k](i);
      inputs[k](i) = keep + h;
      const double up = eval(inputs);
      inputs[k](i) = keep - h;
      const double down = eval(inputs);
      inputs[k](i) = keep;
      numeric(i) = (up - down) / (2 * h);
    }
    out.push_back({"input" + std::to_string(k), relative_error(analytic, numeric), analytic.norm()});
  }
  return out;
}

// Weighted sum with fixed random weights, so every output entry matters.
inline Var probe_loss(const Var& y, std::uint64_t seed) {
  ad::Tape& tape = *y.tape();
  Var w = tape.constant(random_matrix(y.rows(), y.cols(), seed));
  return ad::sum(ad::mul(y, w));
}

// Small hybrid config that keeps every mechanism but runs in milliseconds.
inline tracker::TrackerConfig tiny_config() {
  tracker::TrackerConfig c;
  c.embed_dim = 16;
  c.latent_dim = 8;
  c.heads = 2;
  c.ann_depth = 2;
  c.snn_depth = 2;
  c.adapter_layers = 2;
  c.patch = 16;
  c.template_size = 32;
  c.search_size = 64;
  c.head_hidden = 8;
  c.steps = 3;
  return c;
}

inline tracker::ModelInput random_input(const tracker::TrackerConfig& c, std::uint64_t seed) {
  const ad::Index rows = 3 * c.patch * c.patch;
  const ad::Index nz = c.template_grid() * c.template_grid();
  const ad::Index nx = c.search_grid() * c.search_grid();
  tracker::ModelInput in;
  if (c.has_rgb()) {
    in.z_rgb = random_uniform(rows, nz, seed);
    in.x_rgb = random_uniform(rows, nx, seed + 1);
  }
  if (c.has_events()) {
    // Sparse nonnegative event counts in [0, 1].
    Matrix z = random_uniform(rows, c.steps * nz, seed + 2);
    Matrix x = random_uniform(rows, c.steps * nx, seed + 3);
    in.z_events = (z.array() > 0.7).select(z, 0.0);
    in.x_events = (x.array() > 0.7).select(x, 0.0);
  }
  return in;
}

}  // namespace istas::testing
