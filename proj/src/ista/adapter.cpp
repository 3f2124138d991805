#include "istas/ista/adapter.hpp"

#include "istas/core/error.hpp"

#include <cmath>

namespace istas::ista {

Matrix init_code(const Matrix& x0, const Matrix& p0) {
  require_shape(p0.cols() == x0.rows(), "init_code: P0 columns must match the feature dimension");
  return p0 * x0;
}

Var init_code(Context& ctx, const Var& x0, Parameter& p0, const std::string& layer) {
  require_shape(p0.value.cols() == x0.rows(), "init_code: P0 columns must match the feature dimension");
  if (ctx.ops)
    ctx.ops->mac(layer, Branch::Ann, static_cast<double>(p0.value.rows() * p0.value.cols() * x0.cols()), "adapter");
  return ad::matmul(ctx.tape.param(p0), x0);
}

namespace {

// Bin r of an adaptive pool over `len` elements covers [floor(r*len/bins), ceil((r+1)*len/bins)).
std::pair<ad::Index, ad::Index> bin_range(ad::Index len, int bins, int r) {
  const ad::Index lo = (static_cast<ad::Index>(r) * len) / bins;
  const ad::Index hi = ((static_cast<ad::Index>(r) + 1) * len + bins - 1) / bins;
  return {lo, hi};
}

void check_pool(const Var& a, int steps, int bins) {
  require_shape(steps >= 1 && a.cols() % steps == 0, "pool: columns not divisible by steps");
  if (bins < 1) throw ConfigError("pool: bin count must be positive");
}

}  // namespace

Var adaptive_avg_pool_steps(const Var& a, int steps, int bins) {
  check_pool(a, steps, bins);
  const ad::Index l = a.rows();
  const ad::Index n = a.cols() / steps;
  const ad::Index len = l * n;
  const Matrix& av = a.value();
  Matrix out(static_cast<ad::Index>(steps) * bins, 1);
  for (int t = 0; t < steps; ++t) {
    for (int r = 0; r < bins; ++r) {
      const auto [lo, hi] = bin_range(len, bins, r);
      double s = 0;
      for (ad::Index f = lo; f < hi; ++f) s += av(f / n, t * n + f % n);
      out(t * bins + r, 0) = s / static_cast<double>(hi - lo);
    }
  }
  ad::Tape& tape = *a.tape();
  return tape.push(std::move(out), {a}, [&tape, a, steps, bins, l, n, len](const Matrix& g) {
    Matrix da = Matrix::Zero(l, static_cast<ad::Index>(steps) * n);
    for (int t = 0; t < steps; ++t) {
      for (int r = 0; r < bins; ++r) {
        const auto [lo, hi] = bin_range(len, bins, r);
        const double share = g(t * bins + r, 0) / static_cast<double>(hi - lo);
        for (ad::Index f = lo; f < hi; ++f) da(f / n, t * n + f % n) += share;
      }
    }
    tape.accumulate(a, da);
  });
}

Var adaptive_max_pool_steps(const Var& a, int steps, int bins) {
  check_pool(a, steps, bins);
  const ad::Index l = a.rows();
  const ad::Index n = a.cols() / steps;
  const ad::Index len = l * n;
  const Matrix& av = a.value();
  Matrix out(static_cast<ad::Index>(steps) * bins, 1);
  std::vector<ad::Index> arg(static_cast<std::size_t>(steps) * bins);
  for (int t = 0; t < steps; ++t) {
    for (int r = 0; r < bins; ++r) {
      const auto [lo, hi] = bin_range(len, bins, r);
      ad::Index best = lo;
      for (ad::Index f = lo + 1; f < hi; ++f)
        if (av(f / n, t * n + f % n) > av(best / n, t * n + best % n)) best = f;
      arg[static_cast<std::size_t>(t) * bins + r] = best;
      out(t * bins + r, 0) = av(best / n, t * n + best % n);
    }
  }
  ad::Tape& tape = *a.tape();
  return tape.push(std::move(out), {a}, [&tape, a, steps, bins, l, n, arg](const Matrix& g) {
    Matrix da = Matrix::Zero(l, static_cast<ad::Index>(steps) * n);
    for (int t = 0; t < steps; ++t) {
      for (int r = 0; r < bins; ++r) {
        const ad::Index f = arg[static_cast<std::size_t>(t) * bins + r];
        da(f / n, t * n + f % n) += g(t * bins + r, 0);
      }
    }
    tape.accumulate(a, da);
  });
}

TemporalAttention::TemporalAttention(const std::string& name, int steps, int bins, Rng& rng)
    : weight(name + ".weight", randn(steps, static_cast<ad::Index>(steps) * bins, 0.02, rng)), steps_(steps),
      bins_(bins) {
  if (steps < 1 || bins < 1) throw ConfigError("TDA: steps and bins must be positive");
}

Var TemporalAttention::forward(Context& ctx, const Var& a, const std::string& layer) {
  require_shape(a.cols() % steps_ == 0, "TDA: code columns not divisible by the step count");
  const ad::Index n = a.cols() / steps_;
  Var w = ctx.tape.param(weight);
  Var avg = adaptive_avg_pool_steps(a, steps_, bins_);
  Var mx = adaptive_max_pool_steps(a, steps_, bins_);
  Var alpha = ad::sigmoid(ad::add(ad::matmul(w, avg), ad::matmul(w, mx)));
  last_alpha_ = alpha.value();
  Var out;
  for (int t = 0; t < steps_; ++t) {
    Var term = ad::scale_by(ad::col_block(a, t * n, n), ad::entry(alpha, t, 0));
    out = t == 0 ? term : ad::add(out, term);
  }
  if (ctx.ops) {
    const double elems = static_cast<double>(a.value().size());
    ctx.ops->mac(layer + ".pool", Branch::Ann, 2.0 * elems, "pool");
    ctx.ops->mac(layer + ".gate", Branch::Ann, 2.0 * static_cast<double>(weight.value.size()) + steps_, "linear");
    ctx.ops->mac(layer + ".sum", Branch::Ann, elems, "weighted_sum");
  }
  return out;
}

void TemporalAttention::collect(std::vector<Parameter*>& out) { out.push_back(&weight); }

IstaAdapter::IstaAdapter(const std::string& name, int in_dim, int latent, int out_dim, Rng& rng)
    : analysis(name + ".analysis", xavier(latent, in_dim, rng)),
      dictionary(name + ".dictionary", xavier(in_dim, latent, rng)),
      synthesis(name + ".synthesis", randn(out_dim, latent, 0.02, rng)),
      threshold(name + ".threshold", Matrix::Constant(latent, 1, 0.05)) {
  if (in_dim < 1 || latent < 1 || out_dim < 1) throw ConfigError("adapter: dimensions must be positive");
}

AdapterOutput IstaAdapter::forward(Context& ctx, const Var& x_src, const Var& a_prev, int src_steps, int target_steps,
                                   const std::string& layer) {
  const ad::Index m = dictionary.value.rows();
  const ad::Index l = dictionary.value.cols();
  require_shape(x_src.rows() == m, "adapter: source feature dim does not match the dictionary");
  require_shape(a_prev.rows() == l && a_prev.cols() == x_src.cols(), "adapter: code shape does not match the source");
  require_shape(src_steps >= 1 && target_steps >= 1 && x_src.cols() % src_steps == 0, "adapter: bad step counts");
  const bool collapse = src_steps > 1 && target_steps == 1;
  if (collapse && reduce == TemporalReduce::None)
    throw ConfigError("adapter: multi-step code feeding a single-step branch needs a temporal reduction");
  if (collapse && reduce == TemporalReduce::Attention && (!tda || tda->steps() != src_steps))
    throw ConfigError("adapter: temporal attention missing or built for a different step count");

  Var dict = ctx.tape.param(dictionary);
  Var p = ctx.tape.param(analysis);
  Var residual = ad::sub(x_src, ad::matmul(dict, a_prev));
  Var a = ad::add(a_prev, ad::matmul(p, residual));
  Var th = ad::abs(ctx.tape.param(threshold));
  Var shrunk = ad::soft_threshold(a, th);
  Var code = skip_average ? ad::scale(ad::add(shrunk, a), 0.5) : shrunk;

  Var reduced = code;
  if (collapse) {
    reduced = reduce == TemporalReduce::Attention ? tda->forward(ctx, code, layer + ".tda")
                                                  : ad::step_mean(code, src_steps);
  }
  Var mapped = ad::matmul(ctx.tape.param(synthesis), reduced);

  if (ctx.ops) {
    const double cols = static_cast<double>(x_src.cols());
    ctx.ops->mac(layer + ".code", Branch::Ann, 2.0 * static_cast<double>(m * l) * cols + 3.0 * l * cols, "adapter");
    if (collapse && reduce == TemporalReduce::Mean)
      ctx.ops->mac(layer + ".mean", Branch::Ann, static_cast<double>(code.value().size()), "weighted_sum");
    ctx.ops->mac(layer + ".synthesis", Branch::Ann,
                 static_cast<double>(synthesis.value.rows() * l * reduced.cols()), "adapter");
  }
  return {mapped, code};
}

void IstaAdapter::collect(std::vector<Parameter*>& out) {
  out.push_back(&analysis);
  out.push_back(&dictionary);
  out.push_back(&synthesis);
  out.push_back(&threshold);
  if (tda) tda->collect(out);
}

}  // namespace istas::ista
