#include "istas/core/error.hpp"
#include "istas/spiking/blocks.hpp"
#include "istas/spiking/lif.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace istas;
using namespace istas::spiking;
using istas::testing::random_matrix;
using istas::testing::random_uniform;

namespace {

bool binary(const Matrix& m) { return (m.array() == 0.0 || m.array() == 1.0).all(); }

void zero_all(const std::vector<Parameter*>& ps) {
  for (Parameter* p : ps) p->value.setZero();
}

}  // namespace

TEST(LifStep, StrongInputSpikesAndResets) {
  const auto r = lif_step(LifState::zeros(1, 1, {}), Matrix::Constant(1, 1, 2.0));
  EXPECT_EQ(r.spikes(0, 0), 1.0);
  EXPECT_EQ(r.state.membrane(0, 0), 0.0);
}

TEST(LifStep, ZeroInputNeverSpikes) {
  LifState s = LifState::zeros(3, 2, {});
  for (int t = 0; t < 50; ++t) {
    auto r = lif_step(s, Matrix::Zero(3, 2));
    EXPECT_TRUE(r.spikes.isZero());
    s = r.state;
  }
}

TEST(LifStep, NoLeakIntegratesToThirdStep) {
  LifConfig cfg;
  cfg.tau_decay = 1.0;
  LifState s = LifState::zeros(1, 1, cfg);
  const double expect_u[] = {0.4, 0.8};
  for (int t = 0; t < 3; ++t) {
    auto r = lif_step(s, Matrix::Constant(1, 1, 0.4));
    if (t < 2) {
      EXPECT_EQ(r.spikes(0, 0), 0.0);
      EXPECT_NEAR(r.state.membrane(0, 0), expect_u[t], 1e-15);
    } else {
      EXPECT_EQ(r.spikes(0, 0), 1.0);
    }
    s = r.state;
  }
}

TEST(LifStep, ShapeMismatchThrows) {
  EXPECT_THROW(lif_step(LifState::zeros(2, 2, {}), Matrix::Zero(2, 3)), ShapeError);
}

TEST(Lif, MultiStepMatchesRepeatedSingleSteps) {
  const Matrix x = random_matrix(4, 3 * 5, 7);
  ad::Tape tape(false);
  Context ctx{tape};
  const Matrix out = lif(ctx, tape.constant(x), 3, {}, "lif").value();
  LifState s = LifState::zeros(4, 5, {});
  for (int t = 0; t < 3; ++t) {
    auto r = lif_step(s, x.middleCols(t * 5, 5));
    EXPECT_TRUE(out.middleCols(t * 5, 5) == r.spikes);
    s = r.state;
  }
}

TEST(Lif, OutputsAreBinaryOnRandomInputs) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    ad::Tape tape(false);
    Context ctx{tape};
    const Matrix x = random_matrix(6, 4 * 3, seed, 2.0);
    EXPECT_TRUE(binary(lif(ctx, tape.constant(x), 4, {}, "lif").value()));
  }
}

TEST(Surrogate, NonnegativeAndPeaksAtThreshold) {
  double best = -1, best_h = 0;
  for (int i = -300; i <= 300; ++i) {
    const double h = 1.0 + i * 0.01;
    const double g = surrogate_grad(h, 1.0);
    EXPECT_GE(g, 0.0);
    if (g > best) {
      best = g;
      best_h = h;
    }
  }
  EXPECT_NEAR(best_h, 1.0, 1e-12);
  EXPECT_EQ(best, 1.0);
}

TEST(Surrogate, PrimitiveDerivativeIsSurrogate) {
  for (double h : {-0.3, 0.2, 0.7, 1.0, 1.4, 1.9, 2.5}) {
    const double d = 1e-6;
    const double fd = (surrogate_primitive(h + d, 1.0) - surrogate_primitive(h - d, 1.0)) / (2 * d);
    EXPECT_NEAR(fd, surrogate_grad(h, 1.0), 1e-6);
  }
}

TEST(Lif, SoftSpikeGradientMatchesFiniteDifferences) {
  LifConfig cfg;
  cfg.detach_reset = false;
  const Matrix x = random_uniform(5, 3 * 4, 21, 0.1, 1.6);
  auto loss = [&](Context& ctx, const std::vector<Var>& in) {
    return istas::testing::probe_loss(lif(ctx, in[0], 3, cfg, "lif"), 5);
  };
  for (const auto& r : istas::testing::grad_check(loss, {}, {x}, true)) EXPECT_LT(r.rel_error, 1e-4) << r.name;
}

TEST(Tokenizer, ZeroEventsGiveZeroSpikes) {
  Rng rng(1);
  SpikingTokenizer tok("tok", 3, 16, 8, 32, 64, {}, rng);
  ad::Tape tape(false);
  Context ctx{tape};
  const auto out = tok.forward_patches(ctx, Matrix::Zero(768, 3 * 4), Matrix::Zero(768, 3 * 16), 3);
  EXPECT_TRUE(out.template_spikes.value().isZero());
  EXPECT_TRUE(out.search_spikes.value().isZero());
}

TEST(Tokenizer, TokenCountFollowsPatchGrid) {
  Rng rng(1);
  SpikingTokenizer tok("tok", 3, 16, 8, 32, 64, {}, rng);
  EXPECT_EQ(tok.template_tokens() + tok.search_tokens(), 4 + 16);
  ad::Tape tape(false);
  Context ctx{tape};
  const auto out = tok.forward_patches(ctx, random_uniform(768, 2 * 4, 2), random_uniform(768, 2 * 16, 3), 2);
  EXPECT_EQ(out.tokens.cols(), 2 * 20);
  EXPECT_EQ(out.tokens.rows(), 8);
  EXPECT_THROW(tok.forward_patches(ctx, random_uniform(768, 2 * 5, 2), random_uniform(768, 2 * 16, 3), 2),
               ShapeError);
}

TEST(Tokenizer, SharedWeightsGiveIdenticalPreLif) {
  // A search input made of four copies of the template tokens has the same
  // normalization statistics, so every copy must map to the template output.
  Rng rng(2);
  SpikingTokenizer tok("tok", 3, 16, 8, 32, 64, {}, rng);
  const Matrix z = random_uniform(768, 3 * 4, 4);
  Matrix x(768, 3 * 16);
  for (int t = 0; t < 3; ++t)
    for (int r = 0; r < 4; ++r) x.middleCols(t * 16 + 4 * r, 4) = z.middleCols(t * 4, 4);
  ad::Tape tape(false);
  Context ctx{tape};
  const auto out = tok.forward_patches(ctx, z, x, 3);
  for (int t = 0; t < 3; ++t)
    for (int r = 0; r < 4; ++r) {
      const Matrix diff = out.search_pre_lif.value().middleCols(t * 16 + 4 * r, 4) -
                          out.template_pre_lif.value().middleCols(t * 4, 4);
      EXPECT_LT(diff.cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Tokenizer, TemplateBankDoesNotAffectSearchPath) {
  Rng rng(3);
  SpikingTokenizer tok("tok", 3, 16, 8, 32, 64, {}, rng);
  const Matrix x = random_uniform(768, 3 * 16, 5);
  ad::Tape tape(false);
  Context ctx{tape};
  const auto a = tok.forward_patches(ctx, random_uniform(768, 3 * 4, 6), x, 3);
  const auto b = tok.forward_patches(ctx, random_uniform(768, 3 * 4, 7, 0, 5), x, 3);
  EXPECT_TRUE(a.search_spikes.value() == b.search_spikes.value());
  EXPECT_TRUE(a.search_pre_lif.value() == b.search_pre_lif.value());
}

TEST(SpikeAttention, ZeroSpikesGiveZero) {
  const Matrix z = Matrix::Zero(4, 3);
  EXPECT_TRUE(spike_attention(z, z, z, 0.5, true).isZero());
}

TEST(SpikeAttention, SingleTokenOneDim) {
  const Matrix one = Matrix::Ones(1, 1);
  EXPECT_DOUBLE_EQ(spike_attention(one, one, one, 0.25, true)(0, 0), 0.25);
}

TEST(SpikeAttention, MatchesExplicitSumAndCountsAreBounded) {
  const int m = 6, n = 5;
  const Matrix q = (random_uniform(m, n, 1).array() > 0.5).cast<double>();
  const Matrix k = (random_uniform(m, n, 2).array() > 0.5).cast<double>();
  const Matrix v = (random_uniform(m, n, 3).array() > 0.5).cast<double>();
  const Matrix scores = k.transpose() * q;
  for (ad::Index i = 0; i < scores.size(); ++i) {
    EXPECT_GE(scores(i), 0.0);
    EXPECT_LE(scores(i), m);
    EXPECT_EQ(scores(i), std::round(scores(i)));
  }
  const Matrix out = spike_attention(q, k, v, 0.5, true);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd col = Eigen::VectorXd::Zero(m);
    for (int j = 0; j < n; ++j) col += 0.5 * q.col(i).dot(k.col(j)) * v.col(j);
    EXPECT_TRUE(out.col(i).isApprox(col));
  }
}

TEST(SpikeAttention, NonBinaryInputRejected) {
  Matrix q = Matrix::Ones(2, 2);
  q(0, 0) = 0.5;
  EXPECT_THROW(spike_attention(q, Matrix::Ones(2, 2), Matrix::Ones(2, 2), 1.0, true), InvariantError);
}

TEST(SpikeMlp, ZeroInputGivesZeroAndShapeIsKept) {
  Rng rng(4);
  SpikeMlp mlp("mlp", 8, 4.0, 3, {}, rng);
  ad::Tape tape(false);
  Context ctx{tape};
  EXPECT_TRUE(mlp.forward(ctx, tape.constant(Matrix::Zero(8, 3 * 5)), 3).value().isZero());
  const Var y = mlp.forward(ctx, tape.constant(random_matrix(8, 3 * 5, 9, 2.0)), 3);
  EXPECT_EQ(y.rows(), 8);
  EXPECT_EQ(y.cols(), 15);
}

TEST(SpikeMlp, KernelOneIsPerTokenMap) {
  Rng rng(5);
  SpikeMlp mlp("mlp", 8, 2.0, 1, {}, rng);
  const Matrix x = random_matrix(8, 2 * 6, 10, 2.0);
  std::vector<ad::Index> order{5, 4, 3, 2, 1, 0};
  ad::Tape tape(false);
  Context ctx{tape};
  const Matrix y = mlp.forward(ctx, tape.constant(x), 2).value();
  const Matrix yp = mlp.forward(ctx, ad::permute_tokens(tape.constant(x), 2, order), 2).value();
  const Matrix expect = ad::permute_tokens(tape.constant(y), 2, order).value();
  EXPECT_TRUE(yp.isApprox(expect, 1e-12));
}

TEST(SpikeMsa, ZeroInputGivesZero) {
  Rng rng(6);
  SpikeMsa msa("msa", 8, {}, rng);
  ad::Tape tape(false);
  Context ctx{tape};
  EXPECT_TRUE(msa.forward(ctx, tape.constant(Matrix::Zero(8, 3 * 4)), 3).value().isZero());
}

TEST(SpikeBlock, ZeroWeightsGiveIdentity) {
  Rng rng(7);
  SpikeBlock block("blk", 8, 4.0, 1, {}, rng);
  std::vector<Parameter*> ps;
  block.collect(ps);
  zero_all(ps);
  const Matrix x = random_matrix(8, 3 * 5, 11, 2.0);
  ad::Tape tape(false);
  Context ctx{tape};
  const auto [x1, x2] = block.forward(ctx, tape.constant(x), 3);
  EXPECT_TRUE(x1.value() == x);
  EXPECT_TRUE(x2.value() == x);
}
