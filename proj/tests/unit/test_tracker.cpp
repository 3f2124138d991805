#include "istas/core/error.hpp"
#include "istas/eventsim/events.hpp"
#include "istas/eventsim/scene.hpp"
#include "istas/tracker/head.hpp"
#include "istas/tracker/model.hpp"
#include "istas/tracker/tracking.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace istas;
using namespace istas::tracker;
using istas::testing::random_input;
using istas::testing::random_matrix;
using istas::testing::tiny_config;
namespace fs = std::filesystem;

namespace {

HeadMaps delta_maps(int grid, int peak) {
  HeadMaps m;
  m.grid = grid;
  m.score = Matrix::Zero(1, grid * grid);
  m.score(0, peak) = 5;
  m.offset = Matrix::Zero(2, grid * grid);
  m.size = Matrix::Zero(2, grid * grid);
  return m;
}

ForwardResult run(HybridModel& model, const ModelInput& in) {
  static thread_local std::unique_ptr<ad::Tape> tape;
  tape = std::make_unique<ad::Tape>(false);
  Context ctx{*tape};
  return model.forward(ctx, in);
}

}  // namespace

TEST(Config, DefaultsAreTheToyLayout) {
  const TrackerConfig c;
  EXPECT_EQ(c.embed_dim, 64);
  EXPECT_EQ(c.adapter_layers, 2);
  EXPECT_EQ(c.steps, 3);
  EXPECT_EQ(c.latent_dim, 8);
  EXPECT_EQ(c.w_focal, 2.0);
  EXPECT_EQ(c.w_l1, 5.0);
  EXPECT_EQ(c.w_giou, 1.0);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, TooManyAdapterLayersRejected) {
  TrackerConfig c;
  c.adapter_layers = 4;  // the toy SNN branch has three layers
  EXPECT_THROW(c.validate(), ConfigError);
  c.snn_depth = 4;
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, PlacementSelectsLayers) {
  TrackerConfig c;
  EXPECT_EQ(c.adapter_layer_indices(), (std::vector<int>{0, 1}));
  c.placement = Placement::Last;
  EXPECT_EQ(c.adapter_layer_indices(), (std::vector<int>{1, 2}));
}

TEST(Config, JsonRoundTripAndUnknownKeys) {
  TrackerConfig c = tiny_config();
  c.direction = AdapterDirection::EventToImage;
  c.lif.tau_decay = 0.7;
  const auto back = tracker_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  auto j = to_json(c);
  j["no_such_key"] = 1;
  EXPECT_THROW(tracker_config_from_json(j), ConfigError);
}

TEST(Decode, DeltaAtCellGivesCellCenter) {
  const auto b = decode_box_crop(delta_maps(8, 2 * 8 + 5), 128);
  EXPECT_DOUBLE_EQ(b.cx, 5.5 * 16);
  EXPECT_DOUBLE_EQ(b.cy, 2.5 * 16);
  EXPECT_DOUBLE_EQ(b.w, 64);  // sigmoid(0) of the crop side
}

TEST(Decode, HalfCellOffsetShiftsHalfPatch) {
  auto m = delta_maps(8, 3 * 8 + 3);
  m.offset(0, 27) = 0.5;
  m.offset(1, 27) = 0.5;
  const auto b = decode_box_crop(m, 128);
  EXPECT_DOUBLE_EQ(b.cx, 3.5 * 16 + 8);
  EXPECT_DOUBLE_EQ(b.cy, 3.5 * 16 + 8);
}

TEST(Decode, CenterIsClampedIntoCrop) {
  auto m = delta_maps(8, 7);
  m.offset(0, 7) = 40;
  m.offset(1, 7) = -40;
  const auto b = decode_box_crop(m, 128);
  EXPECT_EQ(b.cx, 128);
  EXPECT_EQ(b.cy, 0);
}

TEST(Decode, NonFiniteMapsThrow) {
  auto m = delta_maps(8, 0);
  m.size(0, 3) = std::nan("");
  EXPECT_THROW(decode_box_crop(m, 128), NumericError);
}

TEST(Decode, EncodeDecodeRoundTrip) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int k = 0; k < 100; ++k) {
    const BoundingBox b{2 + 124 * u(rng), 2 + 124 * u(rng), 5 + 60 * u(rng), 5 + 60 * u(rng)};
    const auto t = encode_targets(b, 8, 128);
    ASSERT_TRUE(t.has_value());
    EXPECT_EQ(t->heatmap(0, t->peak), 1.0);
    const auto d = decode_box_crop(t->maps, 128);
    EXPECT_LT(std::abs(d.cx - b.cx), 0.5);
    EXPECT_LT(std::abs(d.cy - b.cy), 0.5);
    EXPECT_LT(std::abs(d.w - b.w), 0.5);
    EXPECT_LT(std::abs(d.h - b.h), 0.5);
  }
  EXPECT_FALSE(encode_targets({-3, 10, 5, 5}, 8, 128).has_value());
}

TEST(Loss, CornerTouchingSquaresGiou) {
  const BoundingBox a{0, 0, 1, 1}, b{1, 1, 1, 1};
  EXPECT_DOUBLE_EQ(eventsim::iou(a, b), 0.0);
  EXPECT_DOUBLE_EQ(giou(a, b), -0.5);
  ad::Tape tape;
  Matrix box(4, 1);
  box << 0, 0, 1, 1;
  EXPECT_DOUBLE_EQ(giou_loss(tape.variable(box), b).scalar(), 1.5);
}

TEST(Loss, CertainPositiveCellContributesNothing) {
  Matrix heat = Matrix::Zero(1, 4);
  heat(0, 1) = 1;
  Matrix logits = Matrix::Constant(1, 4, -50);
  logits(0, 1) = 50;
  EXPECT_NEAR(focal_loss(logits, heat), 0.0, 1e-12);
}

TEST(Loss, PerfectRegressionHasZeroL1AndGiou) {
  const BoundingBox gt{70.3, 41.2, 30, 22};
  const auto t = encode_targets(gt, 8, 128);
  ad::Tape tape;
  HeadOutput out;
  out.grid = 8;
  out.score = tape.variable(Matrix(t->heatmap.array() * 40 - 20));
  out.offset = tape.variable(t->maps.offset);
  out.size = tape.variable(t->maps.size);
  const auto parts = loss_total(out, gt, 128, {});
  ASSERT_TRUE(parts.has_value());
  EXPECT_NEAR(parts->l1, 0.0, 1e-9);
  EXPECT_NEAR(parts->giou, 0.0, 1e-9);
  EXPECT_GE(parts->total.scalar(), 0.0);
  EXPECT_FALSE(loss_total(out, {200, 10, 5, 5}, 128, {}).has_value());
}

TEST(Loss, FocalAndGiouGradientsMatchFiniteDifferences) {
  const auto t = encode_targets({50, 70, 30, 25}, 8, 128);
  auto focal = [&](Context&, const std::vector<Var>& in) { return focal_loss(in[0], t->heatmap); };
  for (const auto& r : istas::testing::grad_check(focal, {}, {random_matrix(1, 64, 1)})) EXPECT_LT(r.rel_error, 1e-4);
  // No edge coincides with a gt edge, where min / max are not differentiable.
  Matrix box(4, 1);
  box << 0.45, 0.5, 0.2, 0.3;
  auto g = [&](Context&, const std::vector<Var>& in) { return giou_loss(in[0], {0.5, 0.56, 0.25, 0.2}); };
  for (const auto& r : istas::testing::grad_check(g, {}, {box})) EXPECT_LT(r.rel_error, 1e-4);
}

TEST(Head, ScoreMapShapeFollowsGrid) {
  HybridModel model(tiny_config(), 1);
  const auto r = run(model, random_input(model.config(), 2));
  EXPECT_EQ(r.head.grid, 4);
  EXPECT_EQ(r.head.score.cols(), 16);
  EXPECT_EQ(r.head.offset.rows(), 2);
  EXPECT_EQ(r.head.size.rows(), 2);
}

TEST(Head, ZeroFeaturesWithoutBiasGiveUniformScores) {
  Rng rng(1);
  PredictionHead head("head", 8, 4, 4, false, rng);
  ad::Tape tape(false);
  Context ctx{tape};
  const auto out = head.forward(ctx, tape.constant(Matrix::Zero(8, 16)));
  EXPECT_TRUE(out.score.value().isZero());
}

TEST(Head, ScalingFeaturesKeepsArgmaxWithoutBias) {
  Rng rng(2);
  PredictionHead head("head", 8, 4, 4, false, rng);
  const Matrix x = random_matrix(8, 16, 3);
  ad::Tape tape(false);
  Context ctx{tape};
  Eigen::Index a = 0, b = 0;
  head.forward(ctx, tape.constant(x)).score.value().row(0).maxCoeff(&a);
  head.forward(ctx, tape.constant(2 * x)).score.value().row(0).maxCoeff(&b);
  EXPECT_EQ(a, b);
}

TEST(Model, ZeroedAdaptersMatchAdapterFreeModel) {
  TrackerConfig with = tiny_config();
  TrackerConfig without = with;
  without.adapter_layers = 0;
  HybridModel a(with, 9);
  HybridModel b(without, 9);
  a.zero_adapter_synthesis();
  for (std::uint64_t s = 0; s < 3; ++s) {
    const auto in = random_input(with, 10 * s);
    const auto ra = run(a, in);
    const Matrix score_a = ra.head.score.value(), size_a = ra.head.size.value(), fused_a = ra.fused.value();
    const auto rb = run(b, in);
    EXPECT_TRUE(score_a == rb.head.score.value());
    EXPECT_TRUE(size_a == rb.head.size.value());
    EXPECT_TRUE(fused_a == rb.fused.value());
  }
}

TEST(Model, NoAdaptersEqualsIndependentSingleModalityBranches) {
  TrackerConfig hybrid = tiny_config();
  hybrid.adapter_layers = 0;
  TrackerConfig rgb = hybrid, ev = hybrid;
  rgb.modality = Modality::RgbOnly;
  ev.modality = Modality::EventOnly;
  HybridModel mh(hybrid, 4), mr(rgb, 4), me(ev, 4);
  const auto in = random_input(hybrid, 5);
  ad::Tape tape(false);
  Context ctx{tape};
  const auto eh = mh.encode(ctx, in);
  const auto er = mr.encode(ctx, in);
  const auto ee = me.encode(ctx, in);
  EXPECT_TRUE(eh.ann.value() == er.ann.value());
  EXPECT_TRUE(eh.snn.value() == ee.snn.value());
}

TEST(Model, HybridLayerIsTokenPermutationEquivariant) {
  TrackerConfig c = tiny_config();
  c.latent_dim = 8;
  c.tda_bins = 8;  // one pooling bin per code row: pooling ignores token order
  HybridModel model(c, 6);
  const auto in = random_input(c, 7);
  const int steps = c.steps;
  const ad::Index nz = c.template_grid() * c.template_grid();
  const ad::Index n = c.tokens();
  std::vector<ad::Index> order;  // search block first, then template block
  for (ad::Index j = nz; j < n; ++j) order.push_back(j);
  for (ad::Index j = 0; j < nz; ++j) order.push_back(j);

  ad::Tape tape(false);
  Context ctx{tape};
  const Var ann0 = model.embed_rgb(ctx, in);
  const Var snn0 = model.embed_events(ctx, in);
  CodeChains chains = model.init_chains(ctx, ann0, snn0);
  const auto [ann1, snn1] = model.hybrid_layer(ctx, 0, ann0, snn0, chains);

  const Var ann0p = ad::permute_tokens(ann0, 1, order);
  const Var snn0p = ad::permute_tokens(snn0, steps, order);
  CodeChains chains_p = model.init_chains(ctx, ann0p, snn0p);
  const auto [ann1p, snn1p] = model.hybrid_layer(ctx, 0, ann0p, snn0p, chains_p);

  EXPECT_LT((ann1p.value() - ad::permute_tokens(ann1, 1, order).value()).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((snn1p.value() - ad::permute_tokens(snn1, steps, order).value()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Model, OneStepReachesEveryParameterGroup) {
  HybridModel model(tiny_config(), 3);
  for (Parameter* p : model.parameters()) p->zero_grad();
  const auto in = random_input(model.config(), 8);
  ad::Tape tape;
  Context ctx{tape};
  const auto r = model.forward(ctx, in);
  const auto loss = loss_total(r.head, {32, 30, 20, 18}, model.config().search_size, {});
  ASSERT_TRUE(loss.has_value());
  tape.backward(loss->total);
  for (const auto& [group, params] : model.parameter_groups()) {
    double norm = 0;
    for (const Parameter* p : params) norm += p->grad.squaredNorm();
    EXPECT_GT(norm, 0.0) << group;
  }
}

TEST(Model, CheckpointRoundTrip) {
  TrackerConfig c = tiny_config();
  c.placement = Placement::Last;
  c.adapter_layers = 1;
  HybridModel model(c, 12);
  const fs::path dir = fs::temp_directory_path() / "istas_test_ckpt";
  fs::create_directories(dir);
  model.save(dir / "m.bin");
  const auto back = HybridModel::load(dir / "m.bin");
  EXPECT_EQ(to_json(back->config()), to_json(c));
  EXPECT_EQ(back->seed(), 12u);
  const auto in = random_input(c, 13);
  const Matrix a = run(model, in).head.score.value();
  EXPECT_TRUE(a == run(*back, in).head.score.value());
}

TEST(Model, CorruptOrForeignCheckpointRejected) {
  const fs::path dir = fs::temp_directory_path() / "istas_test_ckpt_bad";
  fs::create_directories(dir);
  std::ofstream(dir / "bad.bin") << "not a checkpoint";
  EXPECT_THROW(HybridModel::load(dir / "bad.bin"), IoError);
  HybridModel model(tiny_config(), 1);
  model.save(dir / "good.bin");
  std::fstream f(dir / "good.bin", std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(8);
  const std::uint32_t future = kCheckpointVersion + 1;
  f.write(reinterpret_cast<const char*>(&future), sizeof future);
  f.close();
  EXPECT_THROW(HybridModel::load(dir / "good.bin"), IoError);
}

TEST(Tracking, SingleFrameSequenceGivesOneBox) {
  TrackerConfig c = tiny_config();
  HybridModel model(c, 2);
  eventsim::SceneSpec spec;
  spec.num_frames = 1;
  const auto scene = eventsim::render_scene(spec);
  const auto events = std::vector<eventsim::EventTensor>{eventsim::EventTensor{
      std::vector<eventsim::Image>(3, eventsim::Image(3, 120, 160)), {0, 0, 0, 0}}};
  const auto boxes = track_sequence(model, scene.frames, events, scene.boxes[0]);
  ASSERT_EQ(boxes.size(), 1u);
  EXPECT_TRUE(boxes[0].valid());
  EXPECT_TRUE(track_sequence(model, {}, {}, scene.boxes[0]).empty());
}

TEST(Tracking, PredictionsStayInsideSearchRegion) {
  TrackerConfig c = tiny_config();
  HybridModel model(c, 3);
  eventsim::SceneSpec spec;
  spec.num_frames = 6;
  spec.target.vx = 3;
  const auto scene = eventsim::render_scene(spec);
  eventsim::SequenceData seq;
  seq.frames = scene.frames;
  seq.timestamps = scene.timestamps;
  seq.boxes = scene.boxes;
  seq.visible = scene.visible;
  seq.events = eventsim::simulate_events(scene.radiance, scene.timestamps, 0.15);
  const auto preds = track_sequence(model, seq);
  ASSERT_EQ(preds.size(), 6u);
  BoundingBox prev = seq.boxes[0];
  for (const auto& p : preds) {
    const auto crop = eventsim::make_crop(prev, c.search_context, c.search_size, c.search_size);
    const auto local = crop.to_crop(p);
    EXPECT_GE(local.cx, -1e-9);
    EXPECT_LE(local.cx, c.search_size + 1e-9);
    EXPECT_GE(local.cy, -1e-9);
    EXPECT_LE(local.cy, c.search_size + 1e-9);
    // The next search is anchored on the prediction clamped to the canvas.
    prev = {std::clamp(p.cx, 0.0, 160.0), std::clamp(p.cy, 0.0, 120.0), std::clamp(p.w, 2.0, 160.0),
            std::clamp(p.h, 2.0, 120.0)};
  }
}
