#include "istas/spiking/blocks.hpp"

#include "istas/core/error.hpp"

#include <cmath>

namespace istas::spiking {

ConvBn::ConvBn(const std::string& name, ad::Index in, ad::Index out, int k, Rng& rng)
    : weight(name + ".conv.weight", xavier(out, static_cast<ad::Index>(k) * in, rng)), norm(name + ".bn", out),
      kernel(k) {
  if (k < 1 || k % 2 == 0) throw ConfigError("ConvBn: kernel must be odd and positive");
}

Var ConvBn::forward(Context& ctx, const Var& x, int steps, bool spiking_input, const std::string& layer) {
  Var cols = ad::im2col_tokens(x, steps, kernel);
  Var y = ad::matmul(ctx.tape.param(weight), cols);
  if (ctx.ops) {
    const double work = static_cast<double>(weight.value.rows() * weight.value.cols() * cols.cols());
    if (spiking_input) {
      ctx.ops->synaptic(layer + ".conv", Branch::Snn, work, x.value(), "conv1d");
    } else {
      ctx.ops->mac(layer + ".conv", Branch::Snn, work, "conv1d");
    }
    ctx.ops->mac(layer + ".bn", Branch::Snn, static_cast<double>(y.value().size()), "norm");
  }
  return ad::norm_rows(y, ctx.tape.param(norm.gamma), ctx.tape.param(norm.beta));
}

void ConvBn::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight);
  norm.collect(out);
}

SpikingTokenizer::SpikingTokenizer(const std::string& name, int in_channels, int patch, ad::Index dim,
                                   int template_size, int search_size, const LifConfig& lif, Rng& rng)
    : name_(name), patch_(patch), template_size_(template_size), search_size_(search_size), lif_(lif),
      patch_conv_(name + ".patch", static_cast<ad::Index>(in_channels) * patch * patch, dim, 1, rng),
      proj_(name + ".proj", dim, dim, 1, rng) {
  if (patch <= 0 || template_size % patch != 0 || search_size % patch != 0)
    throw ConfigError("tokenizer: crop sizes must be multiples of the patch size");
  if (search_size != 2 * template_size) throw ConfigError("tokenizer: search crop must be twice the template crop");
}

ad::Index SpikingTokenizer::template_tokens() const {
  const ad::Index g = template_size_ / patch_;
  return g * g;
}

ad::Index SpikingTokenizer::search_tokens() const {
  const ad::Index g = search_size_ / patch_;
  return g * g;
}

Var SpikingTokenizer::embed(Context& ctx, const Var& patches, int steps, const std::string& layer) {
  return patch_conv_.forward(ctx, patches, steps, false, layer);
}

TokenizerOutput SpikingTokenizer::forward(Context& ctx, const eventsim::EventTensor& z, const eventsim::EventTensor& x) {
  if (z.num_steps() != x.num_steps() || z.num_steps() < 1)
    throw ShapeError("tokenizer: template and search need the same positive step count");
  for (const auto& s : z.steps)
    if (s.height() != template_size_ || s.width() != template_size_)
      throw ShapeError("tokenizer: template event frame size does not match the configured patch grid");
  for (const auto& s : x.steps)
    if (s.height() != search_size_ || s.width() != search_size_)
      throw ShapeError("tokenizer: search event frame size does not match the configured patch grid");
  return forward_patches(ctx, patchify_steps(z.steps, patch_), patchify_steps(x.steps, patch_), z.num_steps());
}

TokenizerOutput SpikingTokenizer::forward_patches(Context& ctx, const Matrix& z, const Matrix& x, int steps) {
  const ad::Index nz = template_tokens();
  const ad::Index nx = search_tokens();
  require_shape(z.cols() == nz * steps && x.cols() == nx * steps, "tokenizer: token count does not match patch grid");
  require_shape(z.rows() == patch_conv_.weight.value.cols() && x.rows() == z.rows(), "tokenizer: patch vector size");

  TokenizerOutput out;
  out.template_tokens = nz;
  out.search_tokens = nx;
  // Shared ConvBN weights; each input keeps its own LIF membranes.
  out.template_pre_lif = embed(ctx, ctx.tape.constant(z), steps, name_ + ".patch");
  out.search_pre_lif = embed(ctx, ctx.tape.constant(x), steps, name_ + ".patch");
  out.template_spikes = lif(ctx, out.template_pre_lif, steps, lif_, name_ + ".lif_template");
  out.search_spikes = lif(ctx, out.search_pre_lif, steps, lif_, name_ + ".lif_search");
  Var tz = proj_.forward(ctx, out.template_spikes, steps, true, name_ + ".proj");
  Var tx = proj_.forward(ctx, out.search_spikes, steps, true, name_ + ".proj");

  std::vector<Var> parts;
  for (int t = 0; t < steps; ++t) {
    parts.push_back(ad::col_block(tz, t * nz, nz));
    parts.push_back(ad::col_block(tx, t * nx, nx));
  }
  out.tokens = ad::hconcat(parts);
  return out;
}

void SpikingTokenizer::collect(std::vector<Parameter*>& out) {
  patch_conv_.collect(out);
  proj_.collect(out);
}

namespace {

bool is_binary(const Matrix& m) {
  return (m.array() == 0.0 || m.array() == 1.0).all();
}

}  // namespace

Matrix spike_attention(const Matrix& q, const Matrix& k, const Matrix& v, double scale, bool require_binary) {
  require_shape(q.rows() == k.rows() && q.cols() == k.cols() && v.cols() == q.cols(), "spike_attention: shapes");
  if (require_binary && !(is_binary(q) && is_binary(k) && is_binary(v)))
    throw InvariantError("spike_attention: Q, K and V must be binary spikes");
  return scale * (v * (k.transpose() * q));
}

Var spike_attention(Context& ctx, const Var& q, const Var& k, const Var& v, int steps, double scale,
                    bool require_binary, const std::string& layer) {
  require_shape(q.rows() == k.rows() && q.cols() == k.cols() && v.cols() == q.cols(), "spike_attention: shapes");
  require_shape(steps >= 1 && q.cols() % steps == 0, "spike_attention: bad step count");
  if (require_binary && !(is_binary(q.value()) && is_binary(k.value()) && is_binary(v.value())))
    throw InvariantError("spike_attention: Q, K and V must be binary spikes");
  const ad::Index n = q.cols() / steps;
  const ad::Index m = q.rows();
  std::vector<Var> outs;
  for (int t = 0; t < steps; ++t) {
    Var qt = ad::col_block(q, t * n, n);
    Var kt = ad::col_block(k, t * n, n);
    Var vt = ad::col_block(v, t * n, n);
    Var scores = ad::matmul(ad::transpose(kt), qt);  // N x N, integer counts for binary Q, K
    outs.push_back(ad::scale(ad::matmul(vt, scores), scale));
    if (ctx.ops) {
      ctx.ops->synaptic(layer + ".qk", Branch::Snn, static_cast<double>(n * n * m), qt.value(), "spike_attention");
      ctx.ops->synaptic(layer + ".av", Branch::Snn, static_cast<double>(m * n * n), vt.value(), "spike_attention");
    }
  }
  return steps == 1 ? outs.front() : ad::hconcat(outs);
}

SpikeMsa::SpikeMsa(const std::string& name, ad::Index dim, const LifConfig& lif, Rng& rng)
    : name_(name), lif_(lif), scale_(1.0 / std::sqrt(static_cast<double>(dim))),
      q_(name + ".q", dim, dim, 1, rng), k_(name + ".k", dim, dim, 1, rng), v_(name + ".v", dim, dim, 1, rng),
      proj_(name + ".proj", dim, dim, 1, rng) {}

Var SpikeMsa::forward(Context& ctx, const Var& x, int steps) {
  Var s = lif(ctx, x, steps, lif_, name_ + ".lif_in");
  Var q = lif(ctx, q_.forward(ctx, s, steps, true, name_ + ".q"), steps, lif_, name_ + ".lif_q");
  Var k = lif(ctx, k_.forward(ctx, s, steps, true, name_ + ".k"), steps, lif_, name_ + ".lif_k");
  Var v = lif(ctx, v_.forward(ctx, s, steps, true, name_ + ".v"), steps, lif_, name_ + ".lif_v");
  Var a = spike_attention(ctx, q, k, v, steps, scale_, !ctx.soft_spikes, name_ + ".attn");
  return proj_.forward(ctx, a, steps, false, name_ + ".proj");
}

void SpikeMsa::collect(std::vector<Parameter*>& out) {
  q_.collect(out);
  k_.collect(out);
  v_.collect(out);
  proj_.collect(out);
}

SpikeMlp::SpikeMlp(const std::string& name, ad::Index dim, double ratio, int kernel, const LifConfig& lif, Rng& rng)
    : name_(name), lif_(lif) {
  const auto hidden = static_cast<ad::Index>(std::lround(dim * ratio));
  if (hidden < 1) throw ConfigError("SpikeMlp: expansion ratio too small");
  fc1_ = ConvBn(name + ".fc1", dim, hidden, kernel, rng);
  fc2_ = ConvBn(name + ".fc2", hidden, dim, kernel, rng);
}

Var SpikeMlp::forward(Context& ctx, const Var& x, int steps) {
  Var s1 = lif(ctx, x, steps, lif_, name_ + ".lif1");
  Var h = fc1_.forward(ctx, s1, steps, true, name_ + ".fc1");
  Var s2 = lif(ctx, h, steps, lif_, name_ + ".lif2");
  return fc2_.forward(ctx, s2, steps, true, name_ + ".fc2");
}

void SpikeMlp::collect(std::vector<Parameter*>& out) {
  fc1_.collect(out);
  fc2_.collect(out);
}

SpikeBlock::SpikeBlock(const std::string& name, ad::Index dim, double mlp_ratio, int kernel, const LifConfig& lif,
                       Rng& rng)
    : attn_(name + ".attn", dim, lif, rng), mlp_(name + ".mlp", dim, mlp_ratio, kernel, lif, rng) {}

std::pair<Var, Var> SpikeBlock::forward(Context& ctx, const Var& x, int steps) {
  Var x1 = ad::add(x, msa(ctx, x, steps));
  Var x2 = ad::add(x1, mlp(ctx, x1, steps));
  return {x1, x2};
}

void SpikeBlock::collect(std::vector<Parameter*>& out) {
  attn_.collect(out);
  mlp_.collect(out);
}

}  // namespace istas::spiking
