#pragma once

#include "istas/core/layers.hpp"

namespace istas::spiking {

struct LifConfig {
  double tau_decay = 0.5;    // membrane retention per step, in (0, 1]
  double v_threshold = 1.0;
  // Treat the reset term as a constant in the backward pass.
  bool detach_reset = true;

  void validate() const;
};

// Triangular surrogate derivative of the spike w.r.t. the membrane potential:
// max(0, 1 - |h - v_threshold|). Peaks at the threshold with value one.
double surrogate_grad(double h, double v_threshold);
// Its integral: a C1 ramp from 0 (h <= v_th - 1) to 1 (h >= v_th + 1).
double surrogate_primitive(double h, double v_threshold);

struct LifState {
  Matrix membrane;
  LifConfig config;

  static LifState zeros(ad::Index rows, ad::Index cols, const LifConfig& cfg);
};

struct LifStepResult {
  Matrix spikes;
  LifState state;
};

// One step: h = tau * u + input; s = [h >= v_th]; u' = h * (1 - s).
LifStepResult lif_step(const LifState& state, const Matrix& input);

// Multi-step LIF over a wide M x (T*N) input, membranes starting at zero.
// Backward uses the surrogate derivative; with ctx.soft_spikes the forward
// emits surrogate_primitive(h) instead of a hard spike.
Var lif(Context& ctx, const Var& x, int steps, const LifConfig& cfg, const std::string& layer);

}  // namespace istas::spiking
