#pragma once

// Unrolled ISTA adapter and the temporal downsampling attention (TDA) that
// collapses a multi-step sparse code to a single step.

#include "istas/core/layers.hpp"

#include <optional>
#include <string>
#include <vector>

namespace istas::ista {

using istas::Context;
using istas::Parameter;
using istas::Rng;
using istas::Var;

// a0 = P0 x0, applied independently to every step of a wide input.
Matrix init_code(const Matrix& x0, const Matrix& p0);
Var init_code(Context& ctx, const Var& x0, Parameter& p0, const std::string& layer);

// Adaptive average and max pooling of every step block of a wide L x (T*N)
// tensor, flattened l-major (element (l, n) -> l*N + n), to `bins` values.
// Returns (T*bins) x 1 with step t in rows [t*bins, (t+1)*bins).
Var adaptive_avg_pool_steps(const Var& a, int steps, int bins);
Var adaptive_max_pool_steps(const Var& a, int steps, int bins);

class TemporalAttention {
 public:
  TemporalAttention() = default;
  // weight: steps x (steps * bins), shared between the two pooled descriptors.
  TemporalAttention(const std::string& name, int steps, int bins, Rng& rng);

  // alpha = sigmoid(W avg + W max); out = sum_t alpha_t a[t] (L x N).
  Var forward(Context& ctx, const Var& a, const std::string& layer);
  // Gate values of the last forward.
  const Matrix& last_alpha() const { return last_alpha_; }
  void collect(std::vector<Parameter*>& out);

  Parameter weight;
  int steps() const { return steps_; }
  int bins() const { return bins_; }

 private:
  int steps_ = 1;
  int bins_ = 8;
  Matrix last_alpha_;
};

enum class TemporalReduce { None, Attention, Mean };

struct AdapterOutput {
  Var mapped;  // M_out x N (or M_out x T*N when no reduction happens)
  Var code;    // L x (S*N), the updated code before any temporal reduction
};

class IstaAdapter {
 public:
  IstaAdapter() = default;
  // in_dim M (source features), latent L, out_dim M_out (target features).
  IstaAdapter(const std::string& name, int in_dim, int latent, int out_dim, Rng& rng);

  // a = a_prev + P (x - D a_prev); a = (soft(a, |theta|) + a) / 2 (or pure
  // thresholding without the skip); reduce T -> 1 when the source has more
  // steps than the target; mapped = D' a.
  AdapterOutput forward(Context& ctx, const Var& x_src, const Var& a_prev, int src_steps, int target_steps,
                        const std::string& layer);

  void collect(std::vector<Parameter*>& out);
  void zero_synthesis() { synthesis.value.setZero(); }

  Parameter analysis;    // P: L x M
  Parameter dictionary;  // D: M x L
  Parameter synthesis;   // D': M_out x L
  Parameter threshold;   // theta: L x 1, used through |.|
  bool skip_average = true;
  TemporalReduce reduce = TemporalReduce::None;
  std::optional<TemporalAttention> tda;
};

}  // namespace istas::ista
