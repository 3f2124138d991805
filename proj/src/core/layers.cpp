#include "istas/core/layers.hpp"

#include "istas/core/error.hpp"

#include <cmath>

namespace istas {

Matrix randn(ad::Index rows, ad::Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> d(0.0, stddev);
  Matrix m(rows, cols);
  for (ad::Index j = 0; j < cols; ++j)
    for (ad::Index i = 0; i < rows; ++i) m(i, j) = d(rng);
  return m;
}

Matrix xavier(ad::Index rows, ad::Index cols, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> d(-a, a);
  Matrix m(rows, cols);
  for (ad::Index j = 0; j < cols; ++j)
    for (ad::Index i = 0; i < rows; ++i) m(i, j) = d(rng);
  return m;
}

Linear::Linear(const std::string& name, ad::Index in, ad::Index out, bool bias, Rng& rng)
    : weight(name + ".weight", xavier(out, in, rng)), bias(name + ".bias", Matrix::Zero(out, 1)), has_bias(bias) {}

Var Linear::forward(Context& ctx, const Var& x, const std::string& layer, Branch branch) {
  Var w = ctx.tape.param(weight);
  Var y = ad::matmul(w, x);
  if (ctx.ops) ctx.ops->mac(layer, branch, static_cast<double>(out_dim() * in_dim() * x.cols()));
  if (has_bias) y = ad::add_bias(y, ctx.tape.param(bias));
  return y;
}

void Linear::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight);
  if (has_bias) out.push_back(&bias);
}

Norm::Norm(const std::string& name, ad::Index dim)
    : gamma(name + ".gamma", Matrix::Ones(dim, 1)), beta(name + ".beta", Matrix::Zero(dim, 1)) {}

void Norm::collect(std::vector<Parameter*>& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

Matrix patchify(const eventsim::Image& img, int patch) {
  if (patch <= 0 || img.height() % patch != 0 || img.width() % patch != 0)
    throw ShapeError("patchify: image " + std::to_string(img.height()) + "x" + std::to_string(img.width()) +
                     " not divisible by patch " + std::to_string(patch));
  const int gh = img.height() / patch;
  const int gw = img.width() / patch;
  const int c = img.channels();
  Matrix out(static_cast<ad::Index>(c) * patch * patch, static_cast<ad::Index>(gh) * gw);
  for (int r = 0; r < gh; ++r) {
    for (int q = 0; q < gw; ++q) {
      const ad::Index col = static_cast<ad::Index>(r) * gw + q;
      ad::Index row = 0;
      for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < patch; ++y)
          for (int x = 0; x < patch; ++x) out(row++, col) = img.at(ch, r * patch + y, q * patch + x);
    }
  }
  return out;
}

Matrix patchify_steps(const std::vector<eventsim::Image>& steps, int patch) {
  if (steps.empty()) throw ShapeError("patchify_steps: no steps");
  std::vector<Matrix> parts;
  ad::Index cols = 0;
  for (const auto& s : steps) {
    parts.push_back(patchify(s, patch));
    cols += parts.back().cols();
  }
  Matrix out(parts.front().rows(), cols);
  ad::Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p;
    c += p.cols();
  }
  return out;
}

}  // namespace istas
