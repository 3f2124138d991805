#pragma once

// Training and evaluation of the tracker on synthetic sequences.

#include "istas/harness/benchmark.hpp"
#include "istas/harness/metrics.hpp"
#include "istas/tracker/model.hpp"
#include "istas/tracker/tracking.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace istas::harness {

struct OptimConfig {
  double lr = 1e-4;             // freshly initialized parameters
  double pretrained_lr = 1e-5;  // parameters warm-started from a checkpoint
  double weight_decay = 1e-4;   // L2 term added to the gradient
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double decay_at = 0.8;        // fraction of epochs after which lr is scaled
  double decay_factor = 0.1;
};

struct TrainConfig {
  tracker::TrackerConfig model;
  OptimConfig optim;
  BenchmarkConfig data;
  std::string data_dir;             // optional: read train/ and test/ from here instead of generating
  int epochs = 20;
  int batch_size = 8;
  int samples_per_epoch = 800;
  double center_jitter = 0.5;       // max per-axis search-center shift, in units of sqrt(w h)
  double scale_jitter = 0.25;       // log-uniform search scale jitter half-width
  std::string warm_start;           // checkpoint whose matching parameters form the pretrained group
  std::vector<std::string> eval_splits{"easy", "low_light"};

  void validate() const;
};

// YAML run config (keys documented in configs/toy.yaml). Unknown keys are rejected.
TrainConfig load_train_config(const std::filesystem::path& path);
TrainConfig train_config_from_yaml_text(const std::string& text);

// Full-canvas event frames per frame window, computed once per sequence.
struct PreparedSequence {
  const eventsim::SequenceData* seq = nullptr;
  std::vector<eventsim::EventTensor> events;
};

std::vector<PreparedSequence> prepare_sequences(const std::vector<eventsim::SequenceData>& seqs,
                                                const tracker::TrackerConfig& cfg);

struct TrainSample {
  tracker::ModelInput input;
  eventsim::BoundingBox crop_gt;  // gt box in search-crop coordinates
};

// Jittered search box around the gt box of a frame.
eventsim::BoundingBox sample_search_box(const eventsim::BoundingBox& gt, double center_jitter, double scale_jitter,
                                        std::mt19937_64& rng);
TrainSample make_sample(const tracker::TrackerConfig& cfg, const PreparedSequence& ps, int frame,
                        const eventsim::BoundingBox& search_box);

class Adam {
 public:
  Adam(std::vector<Parameter*> params, const OptimConfig& cfg);
  // One update with gradients already in Parameter::grad; lr_scale multiplies both group rates.
  void step(double lr_scale);
  void zero_grad();
  long steps() const { return t_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Matrix> m_, v_;
  OptimConfig cfg_;
  long t_ = 0;
};

double lr_scale_for_epoch(const OptimConfig& cfg, int epoch, int epochs);

struct TrainLog {
  std::vector<double> step_loss;
  std::vector<double> step_focal;
  std::vector<double> step_l1;
  std::vector<double> step_giou;
  std::vector<double> epoch_loss;
  int skipped_samples = 0;
};

struct TrainResult {
  std::unique_ptr<tracker::HybridModel> model;
  TrainLog log;
};

// Trains from `seed`. If `out_dir` is nonempty, writes checkpoint.bin,
// train_log.csv and config.json there. Throws NumericError on a non-finite
// loss after writing nan_dump.json.
TrainResult train_loop(const TrainConfig& cfg, const std::vector<eventsim::SequenceData>& train_set,
                       std::uint64_t seed, const std::filesystem::path& out_dir = {}, std::ostream* log = nullptr);

// Loss on a fixed set of samples without updating anything.
double evaluate_loss(tracker::HybridModel& model, const std::vector<TrainSample>& samples);
struct StepStats {
  double loss = 0;
  double focal = 0;
  double l1 = 0;
  double giou = 0;
  int used = 0;  // samples whose gt center fell inside the search crop
};

// One optimizer step on a batch; statistics are batch means before the update.
StepStats train_step(tracker::HybridModel& model, Adam& opt, const std::vector<TrainSample>& batch,
                  const tracker::LossWeights& w, double lr_scale);

struct SequenceEval {
  std::string name;
  std::string split;
  std::vector<eventsim::BoundingBox> predictions;
  EvalResult result;
};

std::vector<SequenceEval> evaluate_tracker(tracker::HybridModel& model,
                                           const std::vector<eventsim::SequenceData>& seqs);
// Split name -> averaged result ("all" holds every sequence).
std::map<std::string, EvalResult> summarize_by_split(const std::vector<SequenceEval>& evals);

}  // namespace istas::harness
