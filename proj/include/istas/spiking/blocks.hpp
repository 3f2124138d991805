#pragma once

// Spike-driven transformer pieces: shared-weight tokenizer with per-input LIF
// banks, softmax-free spiking self-attention, and a 1-D convolutional MLP.
// Multi-step tensors are wide M x (T*N) matrices (see autodiff.hpp).

#include "istas/core/layers.hpp"
#include "istas/eventsim/types.hpp"
#include "istas/spiking/lif.hpp"

#include <string>
#include <utility>
#include <vector>

namespace istas::spiking {

// 1-D convolution over the token axis (kernel k, zero padded, no bias)
// followed by normalization with statistics over all tokens and steps.
struct ConvBn {
  Parameter weight;  // out x (k * in)
  Norm norm;
  int kernel = 1;

  ConvBn() = default;
  ConvBn(const std::string& name, ad::Index in, ad::Index out, int kernel, Rng& rng);
  // `spiking_input` selects accumulate-only accounting for the convolution.
  Var forward(Context& ctx, const Var& x, int steps, bool spiking_input, const std::string& layer);
  void collect(std::vector<Parameter*>& out);
};

struct SpikeTokenTensor {
  Var data;        // M x (T*N)
  int steps = 1;
  bool binary = false;
};

struct TokenizerOutput {
  Var tokens;            // M x (T*N), per step [template tokens | search tokens]
  Var template_spikes;   // LIF output of the template bank
  Var search_spikes;     // LIF output of the search bank
  Var template_pre_lif;
  Var search_pre_lif;
  ad::Index template_tokens = 0;
  ad::Index search_tokens = 0;
};

class SpikingTokenizer {
 public:
  SpikingTokenizer() = default;
  SpikingTokenizer(const std::string& name, int in_channels, int patch, ad::Index dim, int template_size,
                   int search_size, const LifConfig& lif, Rng& rng);

  // Event crops: T x 3 x H1 x W1 template and T x 3 x H2 x W2 search.
  TokenizerOutput forward(Context& ctx, const eventsim::EventTensor& z, const eventsim::EventTensor& x);
  // Same on pre-patchified wide inputs ((3*p*p) x (T*Nz) and x (T*Nx)).
  TokenizerOutput forward_patches(Context& ctx, const Matrix& z, const Matrix& x, int steps);
  // The shared first ConvBN stage alone (pre-LIF activations).
  Var embed(Context& ctx, const Var& patches, int steps, const std::string& layer);

  void collect(std::vector<Parameter*>& out);
  int patch() const { return patch_; }
  ad::Index template_tokens() const;
  ad::Index search_tokens() const;

 private:
  std::string name_;
  int patch_ = 16;
  int template_size_ = 64;
  int search_size_ = 128;
  LifConfig lif_;
  ConvBn patch_conv_;
  ConvBn proj_;
};

// scale * V (K^T Q) on one step: column i of the result is
// sum_j scale * (q_i . k_j) v_j. Throws InvariantError if `require_binary`
// and any of Q, K, V has an entry outside {0, 1}.
Matrix spike_attention(const Matrix& q, const Matrix& k, const Matrix& v, double scale, bool require_binary);
Var spike_attention(Context& ctx, const Var& q, const Var& k, const Var& v, int steps, double scale,
                    bool require_binary, const std::string& layer);

class SpikeMsa {
 public:
  SpikeMsa() = default;
  SpikeMsa(const std::string& name, ad::Index dim, const LifConfig& lif, Rng& rng);
  Var forward(Context& ctx, const Var& x, int steps);
  void collect(std::vector<Parameter*>& out);
  double scale() const { return scale_; }

 private:
  std::string name_;
  LifConfig lif_;
  double scale_ = 1;
  ConvBn q_, k_, v_, proj_;
};

class SpikeMlp {
 public:
  SpikeMlp() = default;
  SpikeMlp(const std::string& name, ad::Index dim, double ratio, int kernel, const LifConfig& lif, Rng& rng);
  Var forward(Context& ctx, const Var& x, int steps);
  void collect(std::vector<Parameter*>& out);

 private:
  std::string name_;
  LifConfig lif_;
  ConvBn fc1_, fc2_;
};

// x1 = x + SpikeMSA(x); x2 = x1 + SpikeMLP(x1).
class SpikeBlock {
 public:
  SpikeBlock() = default;
  SpikeBlock(const std::string& name, ad::Index dim, double mlp_ratio, int kernel, const LifConfig& lif, Rng& rng);
  Var msa(Context& ctx, const Var& x, int steps) { return attn_.forward(ctx, x, steps); }
  Var mlp(Context& ctx, const Var& x, int steps) { return mlp_.forward(ctx, x, steps); }
  std::pair<Var, Var> forward(Context& ctx, const Var& x, int steps);
  void collect(std::vector<Parameter*>& out);

 private:
  SpikeMsa attn_;
  SpikeMlp mlp_;
};

}  // namespace istas::spiking
