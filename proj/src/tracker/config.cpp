#include "istas/tracker/config.hpp"

#include "istas/core/error.hpp"

#include <algorithm>

namespace istas::tracker {

void TrackerConfig::validate() const {
  lif.validate();
  if (ann_depth < 1) throw ConfigError("ann_depth must be at least 1");
  if (snn_depth < 1) throw ConfigError("snn_depth must be at least 1");
  if (modality == Modality::Hybrid && snn_depth > ann_depth)
    throw ConfigError("snn_depth must not exceed ann_depth: SNN layer k pairs with ANN layer k");
  if (adapter_layers < 0 || adapter_layers > std::min(ann_depth, snn_depth))
    throw ConfigError("adapter_layers must lie in [0, min(ann_depth, snn_depth)]");
  if (steps < 1) throw ConfigError("steps must be at least 1");
  if (embed_dim < 1 || heads < 1 || embed_dim % heads != 0) throw ConfigError("embed_dim must be divisible by heads");
  if (latent_dim < 1) throw ConfigError("latent_dim must be positive");
  if (mlp_ratio <= 0 || snn_mlp_ratio <= 0) throw ConfigError("mlp ratios must be positive");
  if (snn_kernel < 1 || snn_kernel % 2 == 0) throw ConfigError("snn_kernel must be odd and positive");
  if (patch < 1 || template_size % patch != 0 || search_size % patch != 0)
    throw ConfigError("template_size and search_size must be multiples of patch");
  if (search_size != 2 * template_size) throw ConfigError("search_size must be twice template_size");
  if (template_context <= 0 || search_context <= 0) throw ConfigError("crop context factors must be positive");
  if (head_hidden < 1) throw ConfigError("head_hidden must be positive");
  if (w_focal < 0 || w_l1 < 0 || w_giou < 0) throw ConfigError("loss weights must be nonnegative");
  if (tda_bins < 1) throw ConfigError("tda_bins must be positive");
  if (contrast_threshold <= 0) throw ConfigError("contrast_threshold must be positive");
  if (event_cap <= 0) throw ConfigError("event_cap must be positive");
}

std::vector<int> TrackerConfig::adapter_layer_indices() const {
  std::vector<int> out;
  if (modality != Modality::Hybrid) return out;
  const int first = placement == Placement::First ? 0 : snn_depth - adapter_layers;
  for (int k = 0; k < adapter_layers; ++k) out.push_back(first + k);
  return out;
}

TrackerConfig TrackerConfig::full_scale() {
  TrackerConfig c;
  c.ann_depth = 12;
  c.snn_depth = 8;
  c.adapter_layers = 4;
  c.embed_dim = 768;
  c.latent_dim = 48;
  c.heads = 12;
  c.template_size = 128;
  c.search_size = 256;
  c.head_hidden = 256;
  return c;
}

std::string to_string(Modality m) {
  switch (m) {
    case Modality::Hybrid: return "hybrid";
    case Modality::RgbOnly: return "rgb_only";
    case Modality::EventOnly: return "event_only";
  }
  return "hybrid";
}

std::string to_string(AdapterDirection d) {
  switch (d) {
    case AdapterDirection::Both: return "both";
    case AdapterDirection::EventToImage: return "e2i";
    case AdapterDirection::ImageToEvent: return "i2e";
  }
  return "both";
}

std::string to_string(Placement p) { return p == Placement::First ? "first" : "last"; }

Modality parse_modality(const std::string& s) {
  if (s == "hybrid") return Modality::Hybrid;
  if (s == "rgb_only") return Modality::RgbOnly;
  if (s == "event_only") return Modality::EventOnly;
  throw ConfigError("unknown modality '" + s + "' (hybrid | rgb_only | event_only)");
}

AdapterDirection parse_direction(const std::string& s) {
  if (s == "both") return AdapterDirection::Both;
  if (s == "e2i") return AdapterDirection::EventToImage;
  if (s == "i2e") return AdapterDirection::ImageToEvent;
  throw ConfigError("unknown adapter direction '" + s + "' (both | e2i | i2e)");
}

Placement parse_placement(const std::string& s) {
  if (s == "first") return Placement::First;
  if (s == "last") return Placement::Last;
  throw ConfigError("unknown placement '" + s + "' (first | last)");
}

nlohmann::json to_json(const TrackerConfig& c) {
  return {
      {"modality", to_string(c.modality)},
      {"adapter_direction", to_string(c.direction)},
      {"ann_depth", c.ann_depth},
      {"snn_depth", c.snn_depth},
      {"adapter_layers", c.adapter_layers},
      {"placement", to_string(c.placement)},
      {"steps", c.steps},
      {"embed_dim", c.embed_dim},
      {"latent_dim", c.latent_dim},
      {"heads", c.heads},
      {"mlp_ratio", c.mlp_ratio},
      {"snn_mlp_ratio", c.snn_mlp_ratio},
      {"snn_kernel", c.snn_kernel},
      {"patch", c.patch},
      {"template_size", c.template_size},
      {"search_size", c.search_size},
      {"template_context", c.template_context},
      {"search_context", c.search_context},
      {"head_hidden", c.head_hidden},
      {"head_bias", c.head_bias},
      {"w_focal", c.w_focal},
      {"w_l1", c.w_l1},
      {"w_giou", c.w_giou},
      {"use_tda", c.use_tda},
      {"tda_bins", c.tda_bins},
      {"dual_chains", c.dual_chains},
      {"literal_wiring", c.literal_wiring},
      {"contrast_threshold", c.contrast_threshold},
      {"event_cap", c.event_cap},
      {"lif_tau_decay", c.lif.tau_decay},
      {"lif_v_threshold", c.lif.v_threshold},
      {"lif_detach_reset", c.lif.detach_reset},
  };
}

TrackerConfig tracker_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a mapping");
  TrackerConfig c;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "modality") c.modality = parse_modality(v.get<std::string>());
      else if (key == "adapter_direction") c.direction = parse_direction(v.get<std::string>());
      else if (key == "ann_depth") c.ann_depth = v.get<int>();
      else if (key == "snn_depth") c.snn_depth = v.get<int>();
      else if (key == "adapter_layers") c.adapter_layers = v.get<int>();
      else if (key == "placement") c.placement = parse_placement(v.get<std::string>());
      else if (key == "steps") c.steps = v.get<int>();
      else if (key == "embed_dim") c.embed_dim = v.get<int>();
      else if (key == "latent_dim") c.latent_dim = v.get<int>();
      else if (key == "heads") c.heads = v.get<int>();
      else if (key == "mlp_ratio") c.mlp_ratio = v.get<double>();
      else if (key == "snn_mlp_ratio") c.snn_mlp_ratio = v.get<double>();
      else if (key == "snn_kernel") c.snn_kernel = v.get<int>();
      else if (key == "patch") c.patch = v.get<int>();
      else if (key == "template_size") c.template_size = v.get<int>();
      else if (key == "search_size") c.search_size = v.get<int>();
      else if (key == "template_context") c.template_context = v.get<double>();
      else if (key == "search_context") c.search_context = v.get<double>();
      else if (key == "head_hidden") c.head_hidden = v.get<int>();
      else if (key == "head_bias") c.head_bias = v.get<bool>();
      else if (key == "w_focal") c.w_focal = v.get<double>();
      else if (key == "w_l1") c.w_l1 = v.get<double>();
      else if (key == "w_giou") c.w_giou = v.get<double>();
      else if (key == "use_tda") c.use_tda = v.get<bool>();
      else if (key == "tda_bins") c.tda_bins = v.get<int>();
      else if (key == "dual_chains") c.dual_chains = v.get<bool>();
      else if (key == "literal_wiring") c.literal_wiring = v.get<bool>();
      else if (key == "contrast_threshold") c.contrast_threshold = v.get<double>();
      else if (key == "event_cap") c.event_cap = v.get<double>();
      else if (key == "lif_tau_decay") c.lif.tau_decay = v.get<double>();
      else if (key == "lif_v_threshold") c.lif.v_threshold = v.get<double>();
      else if (key == "lif_detach_reset") c.lif.detach_reset = v.get<bool>();
      else throw ConfigError("unknown model key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("model key '" + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

}  // namespace istas::tracker
