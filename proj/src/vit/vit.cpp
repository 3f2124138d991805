#include "istas/vit/vit.hpp"

#include "istas/core/error.hpp"

#include <cmath>

namespace istas::vit {

void VitConfig::validate() const {
  if (depth < 0) throw ConfigError("vit: depth must be nonnegative");
  if (embed_dim <= 0 || heads <= 0 || embed_dim % heads != 0)
    throw ConfigError("vit: embed_dim must be divisible by heads");
  if (!(mlp_ratio > 0)) throw ConfigError("vit: mlp_ratio must be positive");
  if (patch <= 0 || template_size % patch != 0 || search_size % patch != 0)
    throw ConfigError("vit: crop sizes must be multiples of the patch size");
}

Var layer_norm(Context& ctx, Norm& n, const Var& x, const std::string& layer) {
  if (ctx.ops) ctx.ops->mac(layer, Branch::Ann, static_cast<double>(x.value().size()), "norm");
  return ad::layer_norm_cols(x, ctx.tape.param(n.gamma), ctx.tape.param(n.beta));
}

PatchEmbed::PatchEmbed(const std::string& name, const VitConfig& cfg, Rng& rng)
    : name_(name), cfg_(cfg), proj_(name + ".proj", 3L * cfg.patch * cfg.patch, cfg.embed_dim, true, rng),
      pos_template_(name + ".pos_template", randn(cfg.embed_dim, cfg.template_tokens(), 0.02, rng)),
      pos_search_(name + ".pos_search", randn(cfg.embed_dim, cfg.search_tokens(), 0.02, rng)) {
  cfg.validate();
}

Var PatchEmbed::forward(Context& ctx, const eventsim::Image& z, const eventsim::Image& x) {
  if (z.height() != cfg_.template_size || z.width() != cfg_.template_size || x.height() != cfg_.search_size ||
      x.width() != cfg_.search_size)
    throw ShapeError("patch_embed: image sizes do not match the configured patch grid");
  return forward_patches(ctx, patchify(z, cfg_.patch), patchify(x, cfg_.patch));
}

Var PatchEmbed::forward_patches(Context& ctx, const Matrix& zp, const Matrix& xp) {
  require_shape(zp.cols() == cfg_.template_tokens() && xp.cols() == cfg_.search_tokens(),
                "patch_embed: token count does not match the patch grid");
  Var tz = proj_.forward(ctx, ctx.tape.constant(zp), name_ + ".proj", Branch::Ann);
  Var tx = proj_.forward(ctx, ctx.tape.constant(xp), name_ + ".proj", Branch::Ann);
  tz = ad::add(tz, ctx.tape.param(pos_template_));
  tx = ad::add(tx, ctx.tape.param(pos_search_));
  return ad::hconcat({tz, tx});
}

void PatchEmbed::collect(std::vector<Parameter*>& out) {
  proj_.collect(out);
  out.push_back(&pos_template_);
  out.push_back(&pos_search_);
}

Attention::Attention(const std::string& name, int dim, int heads, Rng& rng)
    : name_(name), heads_(heads), qkv_(name + ".qkv", dim, 3L * dim, true, rng), proj_(name + ".proj", dim, dim, true, rng) {
  if (heads <= 0 || dim % heads != 0) throw ConfigError("attention: dim must be divisible by heads");
}

Var Attention::forward(Context& ctx, const Var& x) {
  const ad::Index m = x.rows();
  const ad::Index n = x.cols();
  const ad::Index dh = m / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Var qkv = qkv_.forward(ctx, x, name_ + ".qkv", Branch::Ann);
  std::vector<Var> heads;
  last_weights_.clear();
  for (int h = 0; h < heads_; ++h) {
    Var q = ad::row_block(qkv, h * dh, dh);
    Var k = ad::row_block(qkv, m + h * dh, dh);
    Var v = ad::row_block(qkv, 2 * m + h * dh, dh);
    // scores[i, j] = q_i . k_j / sqrt(dh); each row is a distribution over keys.
    Var w = ad::softmax_rows(ad::scale(ad::matmul(ad::transpose(q), k), scale));
    last_weights_.push_back(w.value());
    heads.push_back(ad::matmul(v, ad::transpose(w)));
  }
  if (ctx.ops) {
    ctx.ops->mac(name_ + ".scores", Branch::Ann, static_cast<double>(n * n * m), "attention");
    ctx.ops->mac(name_ + ".softmax", Branch::Ann, static_cast<double>(n * n * heads_), "softmax");
    ctx.ops->mac(name_ + ".mix", Branch::Ann, static_cast<double>(n * n * m), "attention");
  }
  Var merged = heads_ == 1 ? heads.front() : ad::vconcat(heads);
  return proj_.forward(ctx, merged, name_ + ".proj", Branch::Ann);
}

void Attention::collect(std::vector<Parameter*>& out) {
  qkv_.collect(out);
  proj_.collect(out);
}

VitBlock::VitBlock(const std::string& name, const VitConfig& cfg, Rng& rng)
    : name_(name), ln1_(name + ".ln1", cfg.embed_dim), ln2_(name + ".ln2", cfg.embed_dim),
      attn_(name + ".attn", cfg.embed_dim, cfg.heads, rng),
      fc1_(name + ".fc1", cfg.embed_dim, static_cast<ad::Index>(std::lround(cfg.embed_dim * cfg.mlp_ratio)), true, rng),
      fc2_(name + ".fc2", static_cast<ad::Index>(std::lround(cfg.embed_dim * cfg.mlp_ratio)), cfg.embed_dim, true, rng) {}

Var VitBlock::msa(Context& ctx, const Var& x) {
  return attn_.forward(ctx, layer_norm(ctx, ln1_, x, name_ + ".ln1"));
}

Var VitBlock::mlp(Context& ctx, const Var& x) {
  Var h = fc1_.forward(ctx, layer_norm(ctx, ln2_, x, name_ + ".ln2"), name_ + ".fc1", Branch::Ann);
  if (ctx.ops) ctx.ops->mac(name_ + ".gelu", Branch::Ann, static_cast<double>(h.value().size()), "activation");
  return fc2_.forward(ctx, ad::gelu(h), name_ + ".fc2", Branch::Ann);
}

std::pair<Var, Var> VitBlock::forward(Context& ctx, const Var& x) {
  Var x1 = ad::add(x, msa(ctx, x));
  Var x2 = ad::add(x1, mlp(ctx, x1));
  return {x1, x2};
}

void VitBlock::collect(std::vector<Parameter*>& out) {
  ln1_.collect(out);
  attn_.collect(out);
  ln2_.collect(out);
  fc1_.collect(out);
  fc2_.collect(out);
}

}  // namespace istas::vit
