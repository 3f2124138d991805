#pragma once

// Small building blocks shared by both backbones.

#include "istas/core/autodiff.hpp"
#include "istas/core/op_recorder.hpp"
#include "istas/eventsim/types.hpp"

#include <random>
#include <string>
#include <vector>

namespace istas {

using Rng = std::mt19937_64;
using ad::Matrix;
using ad::Parameter;
using ad::Var;

// State threaded through a forward pass.
struct Context {
  ad::Tape& tape;
  OpRecorder* ops = nullptr;
  // Replace the Heaviside spike by the integral of its surrogate (gradient checks only).
  bool soft_spikes = false;
};

Matrix randn(ad::Index rows, ad::Index cols, double stddev, Rng& rng);
// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Matrix xavier(ad::Index rows, ad::Index cols, Rng& rng);

// y = W x (+ b) over token columns.
struct Linear {
  Parameter weight;
  Parameter bias;
  bool has_bias = true;

  Linear() = default;
  Linear(const std::string& name, ad::Index in, ad::Index out, bool bias, Rng& rng);
  Var forward(Context& ctx, const Var& x, const std::string& layer, Branch branch);
  void collect(std::vector<Parameter*>& out);
  ad::Index in_dim() const { return weight.value.cols(); }
  ad::Index out_dim() const { return weight.value.rows(); }
};

struct Norm {
  Parameter gamma;
  Parameter beta;

  Norm() = default;
  Norm(const std::string& name, ad::Index dim);
  void collect(std::vector<Parameter*>& out);
};

// Non-overlapping p x p patches of a C x H x W image as a (C*p*p) x (H/p * W/p)
// matrix; tokens run row-major over the patch grid.
Matrix patchify(const eventsim::Image& img, int patch);
// Patches of every step of an event tensor, concatenated step-major.
Matrix patchify_steps(const std::vector<eventsim::Image>& steps, int patch);

}  // namespace istas
