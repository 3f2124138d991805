#include "istas/harness/train.hpp"

#include "istas/core/error.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace istas::harness {

namespace fs = std::filesystem;
using eventsim::BoundingBox;
using tracker::HybridModel;

void TrainConfig::validate() const {
  model.validate();
  data.validate();
  if (epochs < 1) throw ConfigError("train.epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be at least 1");
  if (samples_per_epoch < 1) throw ConfigError("train.samples_per_epoch must be at least 1");
  if (center_jitter < 0 || scale_jitter < 0) throw ConfigError("train jitter must be nonnegative");
  if (!(optim.lr > 0) || !(optim.pretrained_lr > 0)) throw ConfigError("learning rates must be positive");
  if (optim.weight_decay < 0) throw ConfigError("weight_decay must be nonnegative");
  if (optim.decay_at < 0 || optim.decay_at > 1) throw ConfigError("optim.decay_at must lie in [0, 1]");
  for (const auto& s : eval_splits) parse_split(s);
}

namespace {

nlohmann::json scalar_to_json(const YAML::Node& n) {
  const std::string text = n.Scalar();
  if (text == "true" || text == "false") return text == "true";
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  return text;
}

template <typename T>
T read_as(const YAML::Node& n, const std::string& key) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

std::vector<Split> read_mix(const YAML::Node& n, const std::string& key) {
  if (!n.IsSequence()) throw ConfigError("config key '" + key + "' must be a list of split names");
  std::vector<Split> out;
  for (const auto& item : n) out.push_back(parse_split(read_as<std::string>(item, key)));
  return out;
}

TrainConfig parse_config(const YAML::Node& root) {
  TrainConfig c;
  if (!root || root.IsNull()) return c;
  if (!root.IsMap()) throw ConfigError("run config must be a mapping");
  for (const auto& section : root) {
    const std::string name = section.first.as<std::string>();
    const YAML::Node& body = section.second;
    if (!body.IsMap() && !body.IsNull()) throw ConfigError("config section '" + name + "' must be a mapping");
    if (name == "model") {
      nlohmann::json j = nlohmann::json::object();
      for (const auto& kv : body) j[kv.first.as<std::string>()] = scalar_to_json(kv.second);
      c.model = tracker::tracker_config_from_json(j);
    } else if (name == "optim") {
      for (const auto& kv : body) {
        const std::string k = kv.first.as<std::string>();
        const std::string full = "optim." + k;
        const double v = read_as<double>(kv.second, full);
        if (k == "lr") c.optim.lr = v;
        else if (k == "pretrained_lr") c.optim.pretrained_lr = v;
        else if (k == "weight_decay") c.optim.weight_decay = v;
        else if (k == "beta1") c.optim.beta1 = v;
        else if (k == "beta2") c.optim.beta2 = v;
        else if (k == "eps") c.optim.eps = v;
        else if (k == "decay_at") c.optim.decay_at = v;
        else if (k == "decay_factor") c.optim.decay_factor = v;
        else throw ConfigError("unknown config key '" + full + "'");
      }
    } else if (name == "data") {
      for (const auto& kv : body) {
        const std::string k = kv.first.as<std::string>();
        const std::string full = "data." + k;
        if (k == "seed") c.data.seed = read_as<std::uint64_t>(kv.second, full);
        else if (k == "n_train") c.data.n_train = read_as<int>(kv.second, full);
        else if (k == "n_test") c.data.n_test = read_as<int>(kv.second, full);
        else if (k == "train_mix") c.data.train_mix = read_mix(kv.second, full);
        else if (k == "test_mix") c.data.test_mix = read_mix(kv.second, full);
        else if (k == "num_frames") c.data.num_frames = read_as<int>(kv.second, full);
        else if (k == "width") c.data.width = read_as<int>(kv.second, full);
        else if (k == "height") c.data.height = read_as<int>(kv.second, full);
        else if (k == "fps") c.data.fps = read_as<double>(kv.second, full);
        else if (k == "contrast_threshold") c.data.contrast_threshold = read_as<double>(kv.second, full);
        else if (k == "dir") c.data_dir = read_as<std::string>(kv.second, full);
        else throw ConfigError("unknown config key '" + full + "'");
      }
    } else if (name == "train") {
      for (const auto& kv : body) {
        const std::string k = kv.first.as<std::string>();
        const std::string full = "train." + k;
        if (k == "epochs") c.epochs = read_as<int>(kv.second, full);
        else if (k == "batch_size") c.batch_size = read_as<int>(kv.second, full);
        else if (k == "samples_per_epoch") c.samples_per_epoch = read_as<int>(kv.second, full);
        else if (k == "center_jitter") c.center_jitter = read_as<double>(kv.second, full);
        else if (k == "scale_jitter") c.scale_jitter = read_as<double>(kv.second, full);
        else if (k == "warm_start") c.warm_start = read_as<std::string>(kv.second, full);
        else if (k == "eval_splits") {
          c.eval_splits.clear();
          for (Split s : read_mix(kv.second, full)) c.eval_splits.push_back(to_string(s));
        } else {
          throw ConfigError("unknown config key '" + full + "'");
        }
      }
    } else {
      throw ConfigError("unknown config section '" + name + "' (model | optim | data | train)");
    }
  }
  c.validate();
  return c;
}

}  // namespace

TrainConfig train_config_from_yaml_text(const std::string& text) {
  try {
    return parse_config(YAML::Load(text));
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
}

TrainConfig load_train_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return train_config_from_yaml_text(ss.str());
}

std::vector<PreparedSequence> prepare_sequences(const std::vector<eventsim::SequenceData>& seqs,
                                                const tracker::TrackerConfig& cfg) {
  std::vector<PreparedSequence> out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) {
    PreparedSequence p;
    p.seq = &s;
    if (cfg.has_events()) p.events = tracker::frame_event_tensors(s.events, s.timestamps, cfg.steps, cfg.event_cap);
    out.push_back(std::move(p));
  }
  return out;
}

BoundingBox sample_search_box(const BoundingBox& gt, double center_jitter, double scale_jitter, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double side = std::sqrt(gt.w * gt.h);
  BoundingBox b = gt;
  b.cx += center_jitter * side * u(rng);
  b.cy += center_jitter * side * u(rng);
  const double s = std::exp(scale_jitter * u(rng));
  b.w *= s;
  b.h *= s;
  return b;
}

TrainSample make_sample(const tracker::TrackerConfig& cfg, const PreparedSequence& ps, int frame,
                        const BoundingBox& search_box) {
  const auto& seq = *ps.seq;
  static const eventsim::Image no_frame;
  static const eventsim::EventTensor no_events;
  const auto& f0 = cfg.has_rgb() ? seq.frames.at(0) : no_frame;
  const auto& fi = cfg.has_rgb() ? seq.frames.at(static_cast<std::size_t>(frame)) : no_frame;
  const auto& e0 = cfg.has_events() ? ps.events.at(0) : no_events;
  const auto& ei = cfg.has_events() ? ps.events.at(static_cast<std::size_t>(frame)) : no_events;
  const auto templ = tracker::template_crop(cfg, f0, e0, seq.boxes.at(0));
  const auto search = tracker::search_crop(cfg, fi, ei, search_box);
  TrainSample s;
  s.input = tracker::make_input(cfg, templ.rgb, search.rgb, templ.events, search.events);
  s.crop_gt = search.transform.to_crop(seq.boxes.at(static_cast<std::size_t>(frame)));
  return s;
}

Adam::Adam(std::vector<Parameter*> params, const OptimConfig& cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const Parameter* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

void Adam::step(double lr_scale) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    const double lr = lr_scale * (p.group == ad::ParamGroup::Pretrained ? cfg_.pretrained_lr : cfg_.lr);
    const Matrix g = p.grad + cfg_.weight_decay * p.value;
    m_[i] = cfg_.beta1 * m_[i] + (1 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1 - cfg_.beta2) * g.cwiseProduct(g);
    p.value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + cfg_.eps);
  }
}

double lr_scale_for_epoch(const OptimConfig& cfg, int epoch, int epochs) {
  const int decay_epoch = static_cast<int>(std::floor(cfg.decay_at * epochs));
  return epoch >= decay_epoch ? cfg.decay_factor : 1.0;
}

double evaluate_loss(HybridModel& model, const std::vector<TrainSample>& samples) {
  const auto& cfg = model.config();
  const tracker::LossWeights w{cfg.w_focal, cfg.w_l1, cfg.w_giou};
  double total = 0;
  int used = 0;
  for (const auto& s : samples) {
    ad::Tape tape(false);
    Context ctx{tape};
    const auto r = model.forward(ctx, s.input);
    const auto loss = tracker::loss_total(r.head, s.crop_gt, cfg.search_size, w);
    if (!loss) continue;
    total += loss->total.scalar();
    ++used;
  }
  return used > 0 ? total / used : 0.0;
}

StepStats train_step(HybridModel& model, Adam& opt, const std::vector<TrainSample>& batch,
                     const tracker::LossWeights& w, double lr_scale) {
  const auto& cfg = model.config();
  opt.zero_grad();
  StepStats st;
  for (const auto& s : batch) {
    ad::Tape tape;
    Context ctx{tape};
    const auto r = model.forward(ctx, s.input);
    const auto loss = tracker::loss_total(r.head, s.crop_gt, cfg.search_size, w);
    if (!loss) continue;
    const double v = loss->total.scalar();
    if (!std::isfinite(v)) throw NumericError("non-finite training loss");
    tape.backward(loss->total);
    st.loss += v;
    st.focal += loss->focal;
    st.l1 += loss->l1;
    st.giou += loss->giou;
    ++st.used;
  }
  if (st.used == 0) return st;
  const double inv = 1.0 / st.used;
  for (Parameter* p : model.parameters()) {
    p->grad *= inv;
    if (!p->grad.allFinite()) throw NumericError("non-finite gradient in " + p->name);
  }
  opt.step(lr_scale);
  st.loss *= inv;
  st.focal *= inv;
  st.l1 *= inv;
  st.giou *= inv;
  return st;
}

namespace {

void write_nan_dump(const fs::path& out_dir, const HybridModel& model, int epoch, long step, const std::string& what) {
  if (out_dir.empty()) return;
  nlohmann::json j;
  j["error"] = what;
  j["epoch"] = epoch;
  j["step"] = step;
  nlohmann::json norms = nlohmann::json::object();
  for (const Parameter* p : model.parameters()) {
    norms[p->name] = {{"value_norm", p->value.norm()},
                      {"grad_norm", p->grad.norm()},
                      {"finite", p->value.allFinite() && p->grad.allFinite()}};
  }
  j["parameters"] = norms;
  fs::create_directories(out_dir);
  std::ofstream(out_dir / "nan_dump.json") << j.dump(2) << '\n';
}

}  // namespace

TrainResult train_loop(const TrainConfig& cfg, const std::vector<eventsim::SequenceData>& train_set,
                       std::uint64_t seed, const fs::path& out_dir, std::ostream* log) {
  cfg.validate();
  if (train_set.empty()) throw ConfigError("train: empty training set");
  TrainResult res;
  res.model = std::make_unique<HybridModel>(cfg.model, seed);
  HybridModel& model = *res.model;
  if (!cfg.warm_start.empty()) {
    const auto prior = HybridModel::load(cfg.warm_start);
    for (const auto& name : model.copy_parameters_from(*prior)) model.find(name)->group = ad::ParamGroup::Pretrained;
  }
  Adam opt(model.parameters(), cfg.optim);
  const auto prepared = prepare_sequences(train_set, cfg.model);
  std::mt19937_64 rng(seed ^ 0xa5a5a5a5ull);
  std::uniform_int_distribution<std::size_t> pick_seq(0, prepared.size() - 1);
  const tracker::LossWeights w{cfg.model.w_focal, cfg.model.w_l1, cfg.model.w_giou};
  const int steps_per_epoch = (cfg.samples_per_epoch + cfg.batch_size - 1) / cfg.batch_size;

  std::ofstream csv;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    csv.open(out_dir / "train_log.csv");
    csv << "step,epoch,lr_scale,loss,focal,l1,giou,samples\n";
    nlohmann::json meta;
    meta["seed"] = seed;
    meta["model"] = tracker::to_json(cfg.model);
    meta["epochs"] = cfg.epochs;
    meta["batch_size"] = cfg.batch_size;
    meta["samples_per_epoch"] = cfg.samples_per_epoch;
    meta["lr"] = cfg.optim.lr;
    meta["pretrained_lr"] = cfg.optim.pretrained_lr;
    meta["weight_decay"] = cfg.optim.weight_decay;
    std::ofstream(out_dir / "config.json") << meta.dump(2) << '\n';
  }

  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double scale = lr_scale_for_epoch(cfg.optim, epoch, cfg.epochs);
    double epoch_sum = 0;
    int epoch_steps = 0;
    for (int s = 0; s < steps_per_epoch; ++s) {
      std::vector<TrainSample> batch;
      batch.reserve(static_cast<std::size_t>(cfg.batch_size));
      for (int b = 0; b < cfg.batch_size; ++b) {
        const auto& ps = prepared[pick_seq(rng)];
        const int n = static_cast<int>(ps.seq->frames.size());
        std::uniform_int_distribution<int> pick_frame(n > 1 ? 1 : 0, n - 1);
        const int frame = pick_frame(rng);
        const BoundingBox sb = sample_search_box(ps.seq->boxes.at(static_cast<std::size_t>(frame)), cfg.center_jitter,
                                                 cfg.scale_jitter, rng);
        batch.push_back(make_sample(cfg.model, ps, frame, sb));
      }
      StepStats st;
      try {
        st = train_step(model, opt, batch, w, scale);
      } catch (const NumericError& e) {
        write_nan_dump(out_dir, model, epoch, step, e.what());
        throw;
      }
      res.log.skipped_samples += cfg.batch_size - st.used;
      res.log.step_loss.push_back(st.loss);
      res.log.step_focal.push_back(st.focal);
      res.log.step_l1.push_back(st.l1);
      res.log.step_giou.push_back(st.giou);
      if (csv) {
        csv << step << ',' << epoch << ',' << scale << ',' << std::setprecision(10) << st.loss << ',' << st.focal << ','
            << st.l1 << ',' << st.giou << ',' << st.used << '\n';
      }
      epoch_sum += st.loss;
      ++epoch_steps;
      ++step;
    }
    res.log.epoch_loss.push_back(epoch_sum / std::max(epoch_steps, 1));
    if (log) {
      *log << "epoch " << epoch + 1 << '/' << cfg.epochs << " loss " << std::fixed << std::setprecision(4)
           << res.log.epoch_loss.back() << std::defaultfloat << '\n';
      log->flush();
    }
  }
  if (res.log.skipped_samples > 0 && log)
    *log << "warning: " << res.log.skipped_samples << " samples skipped (gt center outside the search crop)\n";
  if (!out_dir.empty()) model.save(out_dir / "checkpoint.bin");
  return res;
}

std::vector<SequenceEval> evaluate_tracker(HybridModel& model, const std::vector<eventsim::SequenceData>& seqs) {
  std::vector<SequenceEval> out;
  for (const auto& s : seqs) {
    SequenceEval e;
    e.name = s.name;
    e.split = s.split;
    e.predictions = tracker::track_sequence(model, s);
    e.result = compute_metrics(e.predictions, s.boxes, s.visible);
    out.push_back(std::move(e));
  }
  return out;
}

std::map<std::string, EvalResult> summarize_by_split(const std::vector<SequenceEval>& evals) {
  std::map<std::string, std::vector<EvalResult>> groups;
  for (const auto& e : evals) {
    groups[e.split].push_back(e.result);
    groups["all"].push_back(e.result);
  }
  std::map<std::string, EvalResult> out;
  for (const auto& [k, v] : groups) out[k] = average_results(v);
  return out;
}

}  // namespace istas::harness
