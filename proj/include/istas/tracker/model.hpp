#pragma once

// Dual-branch tracker: ViT on RGB crops, spiking transformer on event crops,
// bidirectional ISTA adapters on the aligned layers, additive fusion and a
// center-based head.

#include "istas/eventsim/types.hpp"
#include "istas/ista/adapter.hpp"
#include "istas/spiking/blocks.hpp"
#include "istas/tracker/config.hpp"
#include "istas/tracker/head.hpp"
#include "istas/vit/vit.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace istas::tracker {

// Patch matrices of one template/search pair. RGB: (3p^2) x N; events: wide (3p^2) x (T*N).
struct ModelInput {
  Matrix z_rgb;
  Matrix x_rgb;
  Matrix z_events;
  Matrix x_events;
};

ModelInput make_input(const TrackerConfig& cfg, const eventsim::Image& z_rgb, const eventsim::Image& x_rgb,
                      const eventsim::EventTensor& z_events, const eventsim::EventTensor& x_events);

// Sparse codes carried from adapter to adapter. With a single chain per
// direction only `e2i` and `i2e` are used.
struct CodeChains {
  Var e2i;      // L x (T*N)
  Var i2e;      // L x N
  Var e2i_mlp;  // dual-chain mode: the MLP-stage chains
  Var i2e_mlp;
};

struct LayerAdapters {
  std::optional<ista::IstaAdapter> e2i_msa, e2i_mlp, i2e_msa, i2e_mlp;
};

struct EncoderOutput {
  Var ann;  // M x N after the final norm (invalid when the RGB branch is off)
  Var snn;  // M x (T*N) after the last spiking block (invalid when the event branch is off)
};

struct ForwardResult {
  EncoderOutput encoded;
  Var fused;  // M x N
  HeadOutput head;
};

class HybridModel {
 public:
  HybridModel(const TrackerConfig& cfg, std::uint64_t seed);
  HybridModel(const HybridModel&) = delete;
  HybridModel& operator=(const HybridModel&) = delete;

  const TrackerConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }

  ForwardResult forward(Context& ctx, const ModelInput& in);
  EncoderOutput encode(Context& ctx, const ModelInput& in);
  // Embedding outputs: ANN tokens M x N and SNN tokens M x (T*N).
  Var embed_rgb(Context& ctx, const ModelInput& in);
  Var embed_events(Context& ctx, const ModelInput& in);
  CodeChains init_chains(Context& ctx, const Var& ann0, const Var& snn0);

  // One aligned encoder layer with the adapters assigned to it (if any).
  std::pair<Var, Var> hybrid_layer(Context& ctx, int layer, const Var& x_ann, const Var& x_snn, CodeChains& chains);
  // Mean of the SNN output over steps plus the normed ANN output; search tokens go to the head.
  ForwardResult fuse_and_head(Context& ctx, const EncoderOutput& enc);

  std::vector<Parameter*> parameters() const { return params_; }
  // Groups: ann, snn, adapters, tda, head.
  std::map<std::string, std::vector<Parameter*>> parameter_groups() const;
  Parameter* find(const std::string& name) const;
  std::size_t num_parameters() const;
  std::size_t num_adapter_parameters() const;

  LayerAdapters* adapters_for(int layer);
  void zero_adapter_synthesis();

  void save(const std::filesystem::path& path) const;
  static std::unique_ptr<HybridModel> load(const std::filesystem::path& path);
  // Copies every same-named, same-shaped parameter; returns the copied names.
  std::vector<std::string> copy_parameters_from(const HybridModel& other);

 private:
  TrackerConfig cfg_;
  std::uint64_t seed_;
  vit::PatchEmbed embed_;
  std::vector<vit::VitBlock> vit_blocks_;
  Norm final_norm_;
  spiking::SpikingTokenizer tokenizer_;
  std::vector<spiking::SpikeBlock> snn_blocks_;
  Parameter init_e2i_, init_i2e_, init_e2i_mlp_, init_i2e_mlp_;
  std::map<int, LayerAdapters> adapters_;
  PredictionHead head_;
  std::vector<Parameter*> params_;
  std::map<std::string, std::string> group_of_;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace istas::tracker
