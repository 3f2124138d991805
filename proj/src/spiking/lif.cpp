#include "istas/spiking/lif.hpp"

#include "istas/core/error.hpp"

#include <cmath>

namespace istas::spiking {

void LifConfig::validate() const {
  if (!(tau_decay > 0 && tau_decay <= 1)) throw ConfigError("LIF tau_decay must lie in (0, 1]");
  if (!(v_threshold > 0)) throw ConfigError("LIF v_threshold must be positive");
}

double surrogate_grad(double h, double v_threshold) {
  return std::max(0.0, 1.0 - std::abs(h - v_threshold));
}

double surrogate_primitive(double h, double v_threshold) {
  const double z = h - v_threshold;
  if (z <= -1) return 0.0;
  if (z >= 1) return 1.0;
  if (z < 0) return 0.5 * (z + 1) * (z + 1);
  return 1.0 - 0.5 * (1 - z) * (1 - z);
}

LifState LifState::zeros(ad::Index rows, ad::Index cols, const LifConfig& cfg) {
  return {Matrix::Zero(rows, cols), cfg};
}

LifStepResult lif_step(const LifState& state, const Matrix& input) {
  state.config.validate();
  require_shape(state.membrane.rows() == input.rows() && state.membrane.cols() == input.cols(),
                "lif_step: input shape does not match the membrane");
  const double vth = state.config.v_threshold;
  Matrix h = state.config.tau_decay * state.membrane + input;
  Matrix s = (h.array() >= vth).cast<double>().matrix();
  LifStepResult r;
  r.spikes = s;
  r.state.config = state.config;
  r.state.membrane = h.cwiseProduct((1.0 - s.array()).matrix());
  return r;
}

Var lif(Context& ctx, const Var& x, int steps, const LifConfig& cfg, const std::string& layer) {
  cfg.validate();
  require_shape(steps >= 1 && x.cols() % steps == 0, "lif: columns not divisible by steps");
  const ad::Index m = x.rows();
  const ad::Index n = x.cols() / steps;
  const double vth = cfg.v_threshold;
  const bool soft = ctx.soft_spikes;

  Matrix hist_h(m, x.cols());
  Matrix spikes(m, x.cols());
  Matrix u = Matrix::Zero(m, n);
  for (int t = 0; t < steps; ++t) {
    Matrix h = cfg.tau_decay * u + x.value().middleCols(t * n, n);
    Matrix s = soft ? Matrix(h.unaryExpr([vth](double v) { return surrogate_primitive(v, vth); }))
                    : Matrix((h.array() >= vth).cast<double>().matrix());
    u = h.cwiseProduct((1.0 - s.array()).matrix());
    hist_h.middleCols(t * n, n) = h;
    spikes.middleCols(t * n, n) = s;
  }
  if (ctx.ops) ctx.ops->mac(layer, Branch::Snn, static_cast<double>(x.value().size()), "lif");

  ad::Tape& tape = ctx.tape;
  Matrix s_copy = spikes;
  const double tau = cfg.tau_decay;
  const bool detach = cfg.detach_reset;
  return tape.push(std::move(spikes), {x}, [&tape, x, hist_h, s_copy, steps, m, n, tau, vth, detach](const Matrix& g) {
    Matrix dx(m, steps * n);
    Matrix du_next = Matrix::Zero(m, n);  // dL/du_t flowing back from step t+1
    for (int t = steps - 1; t >= 0; --t) {
      const auto h = hist_h.middleCols(t * n, n);
      const auto s = s_copy.middleCols(t * n, n);
      Matrix sg = h.unaryExpr([vth](double v) { return surrogate_grad(v, vth); });
      // u_t = h_t * (1 - s_t): du/dh = (1 - s) - h * ds/dh unless the reset is detached.
      Matrix du_dh = (1.0 - s.array()).matrix();
      if (!detach) du_dh -= h.cwiseProduct(sg);
      Matrix dh = g.middleCols(t * n, n).cwiseProduct(sg) + du_next.cwiseProduct(du_dh);
      dx.middleCols(t * n, n) = dh;
      du_next = tau * dh;
    }
    tape.accumulate(x, dx);
  });
}

}  // namespace istas::spiking
