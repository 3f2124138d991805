#pragma once

// RGB branch: patch embedding with separate template/search positional
// encodings and pre-norm transformer encoder blocks on M x N token matrices.

#include "istas/core/layers.hpp"
#include "istas/eventsim/types.hpp"

#include <string>
#include <utility>
#include <vector>

namespace istas::vit {

struct VitConfig {
  int depth = 4;
  int embed_dim = 64;
  int heads = 4;
  double mlp_ratio = 4.0;
  int patch = 16;
  int template_size = 64;
  int search_size = 128;

  void validate() const;
  int template_tokens() const { return (template_size / patch) * (template_size / patch); }
  int search_tokens() const { return (search_size / patch) * (search_size / patch); }
};

class PatchEmbed {
 public:
  PatchEmbed() = default;
  PatchEmbed(const std::string& name, const VitConfig& cfg, Rng& rng);

  // Template tokens first, then search tokens.
  Var forward(Context& ctx, const eventsim::Image& z, const eventsim::Image& x);
  Var forward_patches(Context& ctx, const Matrix& z_patches, const Matrix& x_patches);
  void collect(std::vector<Parameter*>& out);

  Parameter& pos_template() { return pos_template_; }
  Parameter& pos_search() { return pos_search_; }

 private:
  std::string name_;
  VitConfig cfg_;
  Linear proj_;
  Parameter pos_template_;
  Parameter pos_search_;
};

// Softmax multi-head self-attention (without the input norm).
class Attention {
 public:
  Attention() = default;
  Attention(const std::string& name, int dim, int heads, Rng& rng);
  Var forward(Context& ctx, const Var& x);
  void collect(std::vector<Parameter*>& out);
  // Attention weights of the last forward, one N x N matrix per head.
  const std::vector<Matrix>& last_weights() const { return last_weights_; }

 private:
  std::string name_;
  int heads_ = 1;
  Linear qkv_;
  Linear proj_;
  std::vector<Matrix> last_weights_;
};

class VitBlock {
 public:
  VitBlock() = default;
  VitBlock(const std::string& name, const VitConfig& cfg, Rng& rng);

  // MSA(LN(x)) and MLP(LN(x)); residuals are added by the caller.
  Var msa(Context& ctx, const Var& x);
  Var mlp(Context& ctx, const Var& x);
  // x1 = x + MSA(LN(x)); x2 = x1 + MLP(LN(x1)). Returns {x1, x2}.
  std::pair<Var, Var> forward(Context& ctx, const Var& x);
  void collect(std::vector<Parameter*>& out);
  Attention& attention() { return attn_; }

 private:
  std::string name_;
  Norm ln1_, ln2_;
  Attention attn_;
  Linear fc1_, fc2_;
};

Var layer_norm(Context& ctx, Norm& n, const Var& x, const std::string& layer);

}  // namespace istas::vit
