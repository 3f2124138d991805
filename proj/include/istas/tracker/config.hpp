#pragma once

// Hybrid tracker configuration. Serialized to JSON inside checkpoints and
// read from YAML run configs (see configs/toy.yaml for every key).

#include "istas/spiking/lif.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace istas::tracker {

enum class Modality { Hybrid, RgbOnly, EventOnly };
enum class AdapterDirection { Both, EventToImage, ImageToEvent };
enum class Placement { First, Last };

struct TrackerConfig {
  Modality modality = Modality::Hybrid;
  AdapterDirection direction = AdapterDirection::Both;
  int ann_depth = 4;
  int snn_depth = 3;
  int adapter_layers = 2;  // K
  Placement placement = Placement::First;
  int steps = 3;           // T
  int embed_dim = 64;      // M
  int latent_dim = 8;      // L
  int heads = 4;
  double mlp_ratio = 4.0;
  double snn_mlp_ratio = 4.0;
  int snn_kernel = 1;
  int patch = 16;
  int template_size = 64;
  int search_size = 128;
  double template_context = 2.0;
  double search_context = 4.0;
  int head_hidden = 32;
  bool head_bias = true;
  double w_focal = 2.0;
  double w_l1 = 5.0;
  double w_giou = 1.0;
  bool use_tda = true;      // false: plain mean over steps inside E->I adapters
  int tda_bins = 8;
  bool dual_chains = false; // separate code chains for the MSA and MLP stages
  bool literal_wiring = false;
  double contrast_threshold = 0.15;
  double event_cap = 5.0;
  spiking::LifConfig lif;

  void validate() const;
  bool has_rgb() const { return modality != Modality::EventOnly; }
  bool has_events() const { return modality != Modality::RgbOnly; }
  bool has_e2i() const { return modality == Modality::Hybrid && direction != AdapterDirection::ImageToEvent; }
  bool has_i2e() const { return modality == Modality::Hybrid && direction != AdapterDirection::EventToImage; }
  // Aligned encoder layers that carry adapters.
  std::vector<int> adapter_layer_indices() const;
  int search_grid() const { return search_size / patch; }
  int template_grid() const { return template_size / patch; }
  int tokens() const { return template_grid() * template_grid() + search_grid() * search_grid(); }

  // Full-size layout: 12 ANN layers, 8 SNN layers, K=4, 128/256 crops, M=768.
  static TrackerConfig full_scale();
};

std::string to_string(Modality m);
std::string to_string(AdapterDirection d);
std::string to_string(Placement p);
Modality parse_modality(const std::string& s);
AdapterDirection parse_direction(const std::string& s);
Placement parse_placement(const std::string& s);

nlohmann::json to_json(const TrackerConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
TrackerConfig tracker_config_from_json(const nlohmann::json& j);

}  // namespace istas::tracker
