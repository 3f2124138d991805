#include "istas/tracker/model.hpp"

#include "istas/core/error.hpp"

#include <cstring>
#include <fstream>

namespace istas::tracker {

namespace {

// Independent generator per component so that toggling one part (for example
// the adapters) leaves every other part's initial weights unchanged.
Rng component_rng(std::uint64_t seed, std::uint32_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), tag, 0x5a17u};
  return Rng(seq);
}

vit::VitConfig vit_config(const TrackerConfig& c) {
  vit::VitConfig v;
  v.depth = c.ann_depth;
  v.embed_dim = c.embed_dim;
  v.heads = c.heads;
  v.mlp_ratio = c.mlp_ratio;
  v.patch = c.patch;
  v.template_size = c.template_size;
  v.search_size = c.search_size;
  return v;
}

}  // namespace

ModelInput make_input(const TrackerConfig& cfg, const eventsim::Image& z_rgb, const eventsim::Image& x_rgb,
                      const eventsim::EventTensor& z_events, const eventsim::EventTensor& x_events) {
  ModelInput in;
  if (cfg.has_rgb()) {
    in.z_rgb = patchify(z_rgb, cfg.patch);
    in.x_rgb = patchify(x_rgb, cfg.patch);
  }
  if (cfg.has_events()) {
    if (z_events.num_steps() != cfg.steps || x_events.num_steps() != cfg.steps)
      throw ShapeError("make_input: event tensors must have the configured step count");
    in.z_events = patchify_steps(z_events.steps, cfg.patch);
    in.x_events = patchify_steps(x_events.steps, cfg.patch);
  }
  return in;
}

HybridModel::HybridModel(const TrackerConfig& cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) {
  cfg_.validate();
  const int m = cfg_.embed_dim;
  const int l = cfg_.latent_dim;
  auto add_group = [this](const std::string& group, const std::vector<Parameter*>& ps) {
    for (Parameter* p : ps) {
      if (group_of_.count(p->name)) throw ConfigError("duplicate parameter name " + p->name);
      group_of_[p->name] = group;
      params_.push_back(p);
    }
  };

  if (cfg_.has_rgb()) {
    Rng rng = component_rng(seed, 1);
    const auto vc = vit_config(cfg_);
    embed_ = vit::PatchEmbed("ann.embed", vc, rng);
    vit_blocks_.reserve(static_cast<std::size_t>(cfg_.ann_depth));
    for (int k = 0; k < cfg_.ann_depth; ++k) vit_blocks_.emplace_back("ann.block" + std::to_string(k), vc, rng);
    final_norm_ = Norm("ann.norm", m);
    std::vector<Parameter*> ps;
    embed_.collect(ps);
    for (auto& b : vit_blocks_) b.collect(ps);
    final_norm_.collect(ps);
    add_group("ann", ps);
  }
  if (cfg_.has_events()) {
    Rng rng = component_rng(seed, 2);
    tokenizer_ = spiking::SpikingTokenizer("snn.tokenizer", 3, cfg_.patch, m, cfg_.template_size, cfg_.search_size,
                                           cfg_.lif, rng);
    snn_blocks_.reserve(static_cast<std::size_t>(cfg_.snn_depth));
    for (int k = 0; k < cfg_.snn_depth; ++k)
      snn_blocks_.emplace_back("snn.block" + std::to_string(k), m, cfg_.snn_mlp_ratio, cfg_.snn_kernel, cfg_.lif, rng);
    std::vector<Parameter*> ps;
    tokenizer_.collect(ps);
    for (auto& b : snn_blocks_) b.collect(ps);
    add_group("snn", ps);
  }

  const auto layers = cfg_.adapter_layer_indices();
  if (!layers.empty()) {
    Rng rng = component_rng(seed, 3);
    std::vector<Parameter*> ps;
    std::vector<Parameter*> tda_ps;
    if (cfg_.has_e2i()) {
      init_e2i_ = Parameter("adapter.init_e2i", xavier(l, m, rng));
      ps.push_back(&init_e2i_);
      if (cfg_.dual_chains) {
        init_e2i_mlp_ = Parameter("adapter.init_e2i_mlp", xavier(l, m, rng));
        ps.push_back(&init_e2i_mlp_);
      }
    }
    if (cfg_.has_i2e()) {
      init_i2e_ = Parameter("adapter.init_i2e", xavier(l, m, rng));
      ps.push_back(&init_i2e_);
      if (cfg_.dual_chains) {
        init_i2e_mlp_ = Parameter("adapter.init_i2e_mlp", xavier(l, m, rng));
        ps.push_back(&init_i2e_mlp_);
      }
    }
    for (int k : layers) {
      LayerAdapters& la = adapters_[k];
      const std::string base = "adapter.layer" + std::to_string(k);
      auto make_e2i = [&](const std::string& stage) {
        ista::IstaAdapter a(base + ".e2i_" + stage, m, l, m, rng);
        if (cfg_.steps > 1) {
          if (cfg_.use_tda) {
            a.reduce = ista::TemporalReduce::Attention;
            a.tda.emplace(base + ".e2i_" + stage + ".tda", cfg_.steps, cfg_.tda_bins, rng);
          } else {
            a.reduce = ista::TemporalReduce::Mean;
          }
        }
        return a;
      };
      if (cfg_.has_e2i()) {
        la.e2i_msa = make_e2i("msa");
        la.e2i_mlp = make_e2i("mlp");
      }
      if (cfg_.has_i2e()) {
        la.i2e_msa.emplace(base + ".i2e_msa", m, l, m, rng);
        la.i2e_mlp.emplace(base + ".i2e_mlp", m, l, m, rng);
      }
    }
    for (auto& [k, la] : adapters_) {
      for (auto* a : {&la.e2i_msa, &la.e2i_mlp, &la.i2e_msa, &la.i2e_mlp}) {
        if (!*a) continue;
        ps.push_back(&(*a)->analysis);
        ps.push_back(&(*a)->dictionary);
        ps.push_back(&(*a)->synthesis);
        ps.push_back(&(*a)->threshold);
        if ((*a)->tda) (*a)->tda->collect(tda_ps);
      }
    }
    add_group("adapters", ps);
    add_group("tda", tda_ps);
  }

  {
    Rng rng = component_rng(seed, 4);
    head_ = PredictionHead("head", m, cfg_.head_hidden, cfg_.search_grid(), cfg_.head_bias, rng);
    std::vector<Parameter*> ps;
    head_.collect(ps);
    add_group("head", ps);
  }
}

Var HybridModel::embed_rgb(Context& ctx, const ModelInput& in) { return embed_.forward_patches(ctx, in.z_rgb, in.x_rgb); }

Var HybridModel::embed_events(Context& ctx, const ModelInput& in) {
  return tokenizer_.forward_patches(ctx, in.z_events, in.x_events, cfg_.steps).tokens;
}

CodeChains HybridModel::init_chains(Context& ctx, const Var& ann0, const Var& snn0) {
  CodeChains c;
  if (adapters_.empty()) return c;
  if (cfg_.has_e2i()) {
    c.e2i = ista::init_code(ctx, snn0, init_e2i_, "adapter.init_e2i");
    if (cfg_.dual_chains) c.e2i_mlp = ista::init_code(ctx, snn0, init_e2i_mlp_, "adapter.init_e2i_mlp");
  }
  if (cfg_.has_i2e()) {
    c.i2e = ista::init_code(ctx, ann0, init_i2e_, "adapter.init_i2e");
    if (cfg_.dual_chains) c.i2e_mlp = ista::init_code(ctx, ann0, init_i2e_mlp_, "adapter.init_i2e_mlp");
  }
  return c;
}

LayerAdapters* HybridModel::adapters_for(int layer) {
  auto it = adapters_.find(layer);
  return it == adapters_.end() ? nullptr : &it->second;
}

std::pair<Var, Var> HybridModel::hybrid_layer(Context& ctx, int layer, const Var& x_ann, const Var& x_snn,
                                              CodeChains& chains) {
  if (layer < 0 || layer >= cfg_.snn_depth || layer >= cfg_.ann_depth)
    throw ConfigError("hybrid_layer: layer index outside the aligned range");
  vit::VitBlock& ann = vit_blocks_[static_cast<std::size_t>(layer)];
  spiking::SpikeBlock& snn = snn_blocks_[static_cast<std::size_t>(layer)];
  const int t = cfg_.steps;
  LayerAdapters* la = adapters_for(layer);
  const std::string name = "adapter.layer" + std::to_string(layer);
  Var& e2i_mlp_code = cfg_.dual_chains ? chains.e2i_mlp : chains.e2i;
  Var& i2e_mlp_code = cfg_.dual_chains ? chains.i2e_mlp : chains.i2e;

  // MSA stage: adapters read the layer inputs of the other branch.
  Var ann1 = ad::add(x_ann, ann.msa(ctx, x_ann));
  Var snn1 = ad::add(x_snn, snn.msa(ctx, x_snn, t));
  if (la && la->e2i_msa) {
    auto out = la->e2i_msa->forward(ctx, x_snn, chains.e2i, t, 1, name + ".e2i_msa");
    chains.e2i = out.code;
    ann1 = ad::add(ann1, out.mapped);
  }
  if (la && la->i2e_msa) {
    auto out = la->i2e_msa->forward(ctx, x_ann, chains.i2e, 1, t, name + ".i2e_msa");
    chains.i2e = out.code;
    snn1 = ad::add(snn1, ad::tile_cols(out.mapped, t));
  }

  // MLP stage: adapters read the stage-1 outputs of the other branch.
  const Var& ann_mlp_in = cfg_.literal_wiring ? x_ann : ann1;
  const Var& snn_mlp_in = cfg_.literal_wiring ? x_snn : snn1;
  Var ann2 = ad::add(ann1, ann.mlp(ctx, ann_mlp_in));
  Var snn2 = ad::add(snn1, snn.mlp(ctx, snn_mlp_in, t));
  if (la && la->e2i_mlp) {
    auto out = la->e2i_mlp->forward(ctx, snn1, e2i_mlp_code, t, 1, name + ".e2i_mlp");
    e2i_mlp_code = out.code;
    ann2 = ad::add(ann2, out.mapped);
  }
  if (la && la->i2e_mlp) {
    auto out = la->i2e_mlp->forward(ctx, ann1, i2e_mlp_code, 1, t, name + ".i2e_mlp");
    i2e_mlp_code = out.code;
    snn2 = ad::add(snn2, ad::tile_cols(out.mapped, t));
  }
  return {ann2, snn2};
}

EncoderOutput HybridModel::encode(Context& ctx, const ModelInput& in) {
  EncoderOutput out;
  Var ann = cfg_.has_rgb() ? embed_rgb(ctx, in) : Var{};
  Var snn = cfg_.has_events() ? embed_events(ctx, in) : Var{};
  const int t = cfg_.steps;
  if (cfg_.modality == Modality::Hybrid) {
    CodeChains chains = init_chains(ctx, ann, snn);
    for (int k = 0; k < cfg_.ann_depth; ++k) {
      if (k < cfg_.snn_depth) {
        std::tie(ann, snn) = hybrid_layer(ctx, k, ann, snn, chains);
      } else {
        ann = vit_blocks_[static_cast<std::size_t>(k)].forward(ctx, ann).second;
      }
    }
  } else if (cfg_.modality == Modality::RgbOnly) {
    for (auto& b : vit_blocks_) ann = b.forward(ctx, ann).second;
  } else {
    for (auto& b : snn_blocks_) snn = b.forward(ctx, snn, t).second;
  }
  if (cfg_.has_rgb()) out.ann = vit::layer_norm(ctx, final_norm_, ann, "ann.norm");
  if (cfg_.has_events()) out.snn = snn;
  return out;
}

ForwardResult HybridModel::fuse_and_head(Context& ctx, const EncoderOutput& enc) {
  ForwardResult r;
  r.encoded = enc;
  Var snn_mean;
  if (enc.snn.valid()) {
    snn_mean = ad::step_mean(enc.snn, cfg_.steps);
    if (ctx.ops) ctx.ops->mac("fusion.step_mean", Branch::Snn, static_cast<double>(enc.snn.value().size()), "mean");
  }
  if (enc.ann.valid() && snn_mean.valid()) {
    r.fused = ad::add(enc.ann, snn_mean);
  } else {
    r.fused = enc.ann.valid() ? enc.ann : snn_mean;
  }
  const auto nz = static_cast<ad::Index>(cfg_.template_grid()) * cfg_.template_grid();
  const auto nx = static_cast<ad::Index>(cfg_.search_grid()) * cfg_.search_grid();
  r.head = head_.forward(ctx, ad::col_block(r.fused, nz, nx));
  return r;
}

ForwardResult HybridModel::forward(Context& ctx, const ModelInput& in) { return fuse_and_head(ctx, encode(ctx, in)); }

std::map<std::string, std::vector<Parameter*>> HybridModel::parameter_groups() const {
  std::map<std::string, std::vector<Parameter*>> out;
  for (Parameter* p : params_) out[group_of_.at(p->name)].push_back(p);
  return out;
}

Parameter* HybridModel::find(const std::string& name) const {
  for (Parameter* p : params_)
    if (p->name == name) return p;
  return nullptr;
}

std::size_t HybridModel::num_parameters() const {
  std::size_t n = 0;
  for (const Parameter* p : params_) n += static_cast<std::size_t>(p->size());
  return n;
}

std::size_t HybridModel::num_adapter_parameters() const {
  std::size_t n = 0;
  for (const Parameter* p : params_) {
    const auto& g = group_of_.at(p->name);
    if (g == "adapters" || g == "tda") n += static_cast<std::size_t>(p->size());
  }
  return n;
}

void HybridModel::zero_adapter_synthesis() {
  for (auto& [k, la] : adapters_)
    for (auto* a : {&la.e2i_msa, &la.e2i_mlp, &la.i2e_msa, &la.i2e_mlp})
      if (*a) (*a)->zero_synthesis();
}

std::vector<std::string> HybridModel::copy_parameters_from(const HybridModel& other) {
  std::vector<std::string> copied;
  for (Parameter* p : params_) {
    const Parameter* q = other.find(p->name);
    if (q && q->value.rows() == p->value.rows() && q->value.cols() == p->value.cols()) {
      p->value = q->value;
      copied.push_back(p->name);
    }
  }
  return copied;
}

namespace {

constexpr char kMagic[8] = {'I', 'S', 'T', 'A', 'S', 'C', 'K', 'P'};

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("checkpoint: truncated file");
  return v;
}

std::string get_string(std::istream& is, std::uint64_t len) {
  if (len > (1ull << 30)) throw IoError("checkpoint: implausible string length");
  std::string s(len, '\0');
  is.read(s.data(), static_cast<std::streamsize>(len));
  if (!is) throw IoError("checkpoint: truncated file");
  return s;
}

}  // namespace

void HybridModel::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("checkpoint: cannot open " + path.string() + " for writing");
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint64_t>(os, seed_);
  const std::string cfg = to_json(cfg_).dump();
  put<std::uint64_t>(os, cfg.size());
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  put<std::uint64_t>(os, params_.size());
  for (const Parameter* p : params_) {
    put<std::uint64_t>(os, p->name.size());
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put<std::int64_t>(os, p->value.rows());
    put<std::int64_t>(os, p->value.cols());
    os.write(reinterpret_cast<const char*>(p->value.data()),
             static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(p->value.size())));
  }
  if (!os) throw IoError("checkpoint: write failed for " + path.string());
}

std::unique_ptr<HybridModel> HybridModel::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError("checkpoint: " + path.string() + " is not a tracker checkpoint");
  const auto version = get<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw IoError("checkpoint: unsupported version " + std::to_string(version));
  const auto seed = get<std::uint64_t>(is);
  const std::string cfg_text = get_string(is, get<std::uint64_t>(is));
  TrackerConfig cfg;
  try {
    cfg = tracker_config_from_json(nlohmann::json::parse(cfg_text));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint: bad embedded config: ") + e.what());
  }
  auto model = std::make_unique<HybridModel>(cfg, seed);
  const auto count = get<std::uint64_t>(is);
  std::size_t filled = 0;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = get_string(is, get<std::uint64_t>(is));
    const auto rows = get<std::int64_t>(is);
    const auto cols = get<std::int64_t>(is);
    if (rows < 0 || cols < 0 || rows * cols > (1ll << 32)) throw IoError("checkpoint: bad shape for " + name);
    Matrix value(rows, cols);
    is.read(reinterpret_cast<char*>(value.data()), static_cast<std::streamsize>(sizeof(double) * value.size()));
    if (!is) throw IoError("checkpoint: truncated parameter " + name);
    Parameter* p = model->find(name);
    if (!p) throw IoError("checkpoint: unexpected parameter " + name);
    if (p->value.rows() != rows || p->value.cols() != cols) throw IoError("checkpoint: shape mismatch for " + name);
    p->value = std::move(value);
    ++filled;
  }
  if (filled != model->params_.size()) throw IoError("checkpoint: missing parameters");
  return model;
}

}  // namespace istas::tracker
