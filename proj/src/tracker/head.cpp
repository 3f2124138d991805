#include "istas/tracker/head.hpp"

#include "istas/core/error.hpp"

#include <array>
#include <cmath>

namespace istas::tracker {

PredictionHead::PredictionHead(const std::string& name, int dim, int hidden, int grid, bool bias, Rng& rng)
    : name_(name), grid_(grid) {
  if (grid < 1) throw ConfigError("head: grid must be positive");
  auto make = [&](const std::string& branch, int out) {
    return Branch{Linear(name + "." + branch + ".conv1", 9 * dim, hidden, bias, rng),
                  Linear(name + "." + branch + ".conv2", 9 * hidden, out, bias, rng)};
  };
  score_ = make("score", 1);
  offset_ = make("offset", 2);
  size_ = make("size", 2);
}

Var PredictionHead::run(Context& ctx, Branch& b, const Var& x, const std::string& layer) {
  Var h = b.conv1.forward(ctx, ad::im2col_grid(x, grid_, grid_, 3), layer + ".conv1", istas::Branch::Ann);
  h = ad::relu(h);
  if (ctx.ops) ctx.ops->mac(layer + ".relu", istas::Branch::Ann, static_cast<double>(h.value().size()), "activation");
  return b.conv2.forward(ctx, ad::im2col_grid(h, grid_, grid_, 3), layer + ".conv2", istas::Branch::Ann);
}

HeadOutput PredictionHead::forward(Context& ctx, const Var& search_tokens) {
  require_shape(search_tokens.cols() == static_cast<ad::Index>(grid_) * grid_,
                "head: search token count does not match the grid");
  HeadOutput out;
  out.grid = grid_;
  out.score = run(ctx, score_, search_tokens, name_ + ".score");
  out.offset = run(ctx, offset_, search_tokens, name_ + ".offset");
  out.size = run(ctx, size_, search_tokens, name_ + ".size");
  return out;
}

void PredictionHead::collect(std::vector<Parameter*>& out) {
  for (Branch* b : {&score_, &offset_, &size_}) {
    b->conv1.collect(out);
    b->conv2.collect(out);
  }
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

void check_maps(const HeadMaps& m) {
  const ad::Index g2 = static_cast<ad::Index>(m.grid) * m.grid;
  require_shape(m.grid > 0 && m.score.rows() == 1 && m.score.cols() == g2 && m.offset.rows() == 2 &&
                    m.offset.cols() == g2 && m.size.rows() == 2 && m.size.cols() == g2,
                "decode: head map shapes do not match the grid");
  if (!m.score.allFinite() || !m.offset.allFinite() || !m.size.allFinite())
    throw NumericError("decode: head maps contain non-finite values");
}

}  // namespace

BoundingBox decode_box_crop(const HeadMaps& maps, int search_size) {
  check_maps(maps);
  Eigen::Index peak = 0;
  maps.score.row(0).maxCoeff(&peak);
  const int g = maps.grid;
  const double cell = static_cast<double>(search_size) / g;
  const auto i = static_cast<double>(peak / g);
  const auto j = static_cast<double>(peak % g);
  const double s = search_size;
  BoundingBox b;
  b.cx = std::clamp((j + 0.5 + maps.offset(0, peak)) * cell, 0.0, s);
  b.cy = std::clamp((i + 0.5 + maps.offset(1, peak)) * cell, 0.0, s);
  b.w = std::max(sigmoid(maps.size(0, peak)) * s, 1e-6);
  b.h = std::max(sigmoid(maps.size(1, peak)) * s, 1e-6);
  return b;
}

BoundingBox decode_box(const HeadMaps& maps, int search_size, const eventsim::CropTransform& crop) {
  return crop.to_canvas(decode_box_crop(maps, search_size));
}

double heatmap_sigma(const BoundingBox& crop_box, int grid, int search_size) {
  const double cell = static_cast<double>(search_size) / grid;
  return std::max(0.5, std::sqrt(crop_box.w * crop_box.h) / cell / 3.0);
}

std::optional<TargetMaps> encode_targets(const BoundingBox& crop_box, int grid, int search_size) {
  if (!crop_box.valid()) throw ConfigError("encode_targets: degenerate box");
  const double s = search_size;
  if (crop_box.cx < 0 || crop_box.cx >= s || crop_box.cy < 0 || crop_box.cy >= s) return std::nullopt;
  const double cell = s / grid;
  const int j = std::min(grid - 1, static_cast<int>(crop_box.cx / cell));
  const int i = std::min(grid - 1, static_cast<int>(crop_box.cy / cell));
  const double sigma = heatmap_sigma(crop_box, grid, search_size);
  const ad::Index g2 = static_cast<ad::Index>(grid) * grid;

  TargetMaps t;
  t.peak = i * grid + j;
  t.heatmap.resize(1, g2);
  for (int r = 0; r < grid; ++r)
    for (int c = 0; c < grid; ++c) {
      const double d2 = static_cast<double>((r - i) * (r - i) + (c - j) * (c - j));
      t.heatmap(0, r * grid + c) = std::exp(-d2 / (2 * sigma * sigma));
    }
  t.maps.grid = grid;
  t.maps.score = t.heatmap;
  t.maps.offset = Matrix::Zero(2, g2);
  t.maps.size = Matrix::Zero(2, g2);
  t.maps.offset(0, t.peak) = crop_box.cx / cell - j - 0.5;
  t.maps.offset(1, t.peak) = crop_box.cy / cell - i - 0.5;
  auto logit = [](double p) {
    p = std::clamp(p, 1e-9, 1 - 1e-9);
    return std::log(p / (1 - p));
  };
  t.maps.size(0, t.peak) = logit(crop_box.w / s);
  t.maps.size(1, t.peak) = logit(crop_box.h / s);
  return t;
}

namespace {

// Value plus gradient with respect to the four box inputs.
struct Jet {
  double v = 0;
  std::array<double, 4> d{};

  static Jet constant(double x) { return {x, {}}; }
  static Jet input(double x, int k) {
    Jet j{x, {}};
    j.d[static_cast<std::size_t>(k)] = 1.0;
    return j;
  }
};

Jet operator+(const Jet& a, const Jet& b) {
  Jet r{a.v + b.v, {}};
  for (std::size_t k = 0; k < 4; ++k) r.d[k] = a.d[k] + b.d[k];
  return r;
}
Jet operator-(const Jet& a, const Jet& b) {
  Jet r{a.v - b.v, {}};
  for (std::size_t k = 0; k < 4; ++k) r.d[k] = a.d[k] - b.d[k];
  return r;
}
Jet operator*(const Jet& a, const Jet& b) {
  Jet r{a.v * b.v, {}};
  for (std::size_t k = 0; k < 4; ++k) r.d[k] = a.d[k] * b.v + a.v * b.d[k];
  return r;
}
Jet operator/(const Jet& a, const Jet& b) {
  Jet r{a.v / b.v, {}};
  for (std::size_t k = 0; k < 4; ++k) r.d[k] = (a.d[k] * b.v - a.v * b.d[k]) / (b.v * b.v);
  return r;
}
Jet operator*(double s, const Jet& a) {
  Jet r{s * a.v, {}};
  for (std::size_t k = 0; k < 4; ++k) r.d[k] = s * a.d[k];
  return r;
}
Jet jmin(const Jet& a, const Jet& b) { return a.v <= b.v ? a : b; }
Jet jmax(const Jet& a, const Jet& b) { return a.v >= b.v ? a : b; }

template <typename T>
T giou_generic(const T& cx, const T& cy, const T& w, const T& h, const BoundingBox& gt) {
  const T px0 = cx - 0.5 * w, px1 = cx + 0.5 * w;
  const T py0 = cy - 0.5 * h, py1 = cy + 0.5 * h;
  const T gx0 = T::constant(gt.x0()), gx1 = T::constant(gt.x1());
  const T gy0 = T::constant(gt.y0()), gy1 = T::constant(gt.y1());
  const T zero = T::constant(0.0);
  const T iw = jmax(zero, jmin(px1, gx1) - jmax(px0, gx0));
  const T ih = jmax(zero, jmin(py1, gy1) - jmax(py0, gy0));
  const T inter = iw * ih;
  const T uni = w * h + T::constant(gt.area()) - inter;
  const T enclose = (jmax(px1, gx1) - jmin(px0, gx0)) * (jmax(py1, gy1) - jmin(py0, gy0));
  return inter / uni - (enclose - uni) / enclose;
}

}  // namespace

double giou(const BoundingBox& a, const BoundingBox& b) {
  if (!a.valid() || !b.valid()) throw ConfigError("giou: degenerate box");
  return giou_generic(Jet::constant(a.cx), Jet::constant(a.cy), Jet::constant(a.w), Jet::constant(a.h), b).v;
}

Var giou_loss(const Var& box, const BoundingBox& gt) {
  require_shape(box.rows() == 4 && box.cols() == 1, "giou_loss: box must be 4 x 1");
  const Matrix& b = box.value();
  if (!(b(2, 0) > 0 && b(3, 0) > 0) || !gt.valid()) throw ConfigError("giou_loss: degenerate box");
  const Jet g = giou_generic(Jet::input(b(0, 0), 0), Jet::input(b(1, 0), 1), Jet::input(b(2, 0), 2),
                             Jet::input(b(3, 0), 3), gt);
  Matrix val(1, 1);
  val(0, 0) = 1.0 - g.v;
  Matrix grad(4, 1);
  for (int k = 0; k < 4; ++k) grad(k, 0) = -g.d[static_cast<std::size_t>(k)];
  ad::Tape& tape = *box.tape();
  return tape.push(std::move(val), {box}, [&tape, box, grad](const Matrix& gout) {
    tape.accumulate(box, grad * gout(0, 0));
  });
}

namespace {

constexpr double kAlpha = 2.0;
constexpr double kBeta = 4.0;

// Loss and d loss / d logit for one cell.
std::pair<double, double> focal_cell(double x, double y) {
  const double p = sigmoid(x);
  const double log_p = -softplus(-x);
  const double log_q = -softplus(x);
  if (y >= 1.0) {
    const double q = 1.0 - p;
    const double loss = -std::pow(q, kAlpha) * log_p;
    const double grad = kAlpha * p * std::pow(q, kAlpha) * log_p - std::pow(q, kAlpha + 1);
    return {loss, grad};
  }
  const double wneg = std::pow(1.0 - y, kBeta);
  const double loss = -wneg * std::pow(p, kAlpha) * log_q;
  const double grad = -wneg * (kAlpha * std::pow(p, kAlpha) * (1.0 - p) * log_q - std::pow(p, kAlpha + 1));
  return {loss, grad};
}

}  // namespace

double focal_loss(const Matrix& logits, const Matrix& heatmap) {
  require_shape(logits.rows() == heatmap.rows() && logits.cols() == heatmap.cols(), "focal_loss: shapes");
  double total = 0;
  double pos = 0;
  for (Eigen::Index k = 0; k < logits.size(); ++k) {
    total += focal_cell(logits(k), heatmap(k)).first;
    if (heatmap(k) >= 1.0) pos += 1;
  }
  return total / std::max(pos, 1.0);
}

Var focal_loss(const Var& logits, const Matrix& heatmap) {
  require_shape(logits.rows() == heatmap.rows() && logits.cols() == heatmap.cols(), "focal_loss: shapes");
  const Matrix& x = logits.value();
  Matrix grad(x.rows(), x.cols());
  double total = 0;
  double pos = 0;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const auto [l, g] = focal_cell(x(k), heatmap(k));
    total += l;
    grad(k) = g;
    if (heatmap(k) >= 1.0) pos += 1;
  }
  const double norm = std::max(pos, 1.0);
  Matrix val(1, 1);
  val(0, 0) = total / norm;
  grad /= norm;
  ad::Tape& tape = *logits.tape();
  return tape.push(std::move(val), {logits}, [&tape, logits, grad](const Matrix& gout) {
    tape.accumulate(logits, grad * gout(0, 0));
  });
}

std::optional<LossParts> loss_total(const HeadOutput& out, const BoundingBox& crop_gt, int search_size,
                                    const LossWeights& weights) {
  const auto target = encode_targets(crop_gt, out.grid, search_size);
  if (!target) return std::nullopt;
  ad::Tape& tape = *out.score.tape();
  const int g = out.grid;
  const int peak = target->peak;
  const double i = peak / g;
  const double j = peak % g;

  // Predicted box at the gt cell, normalized by the crop side.
  Var cx = ad::add_scalar(ad::scale(ad::entry(out.offset, 0, peak), 1.0 / g), (j + 0.5) / g);
  Var cy = ad::add_scalar(ad::scale(ad::entry(out.offset, 1, peak), 1.0 / g), (i + 0.5) / g);
  Var w = ad::sigmoid(ad::entry(out.size, 0, peak));
  Var h = ad::sigmoid(ad::entry(out.size, 1, peak));
  Var box = ad::vconcat({cx, cy, w, h});

  const double s = search_size;
  const BoundingBox gt_norm{crop_gt.cx / s, crop_gt.cy / s, crop_gt.w / s, crop_gt.h / s};
  Matrix to_xyxy(4, 4);
  to_xyxy << 1, 0, -0.5, 0,
             0, 1, 0, -0.5,
             1, 0, 0.5, 0,
             0, 1, 0, 0.5;
  Matrix gt_xyxy(4, 1);
  gt_xyxy << gt_norm.x0(), gt_norm.y0(), gt_norm.x1(), gt_norm.y1();
  Var xyxy = ad::matmul(tape.constant(to_xyxy), box);
  Var l1 = ad::mean(ad::abs(ad::sub(xyxy, tape.constant(gt_xyxy))));
  Var gl = giou_loss(box, gt_norm);
  Var fl = focal_loss(out.score, target->heatmap);

  LossParts parts;
  parts.focal = fl.scalar();
  parts.l1 = l1.scalar();
  parts.giou = gl.scalar();
  parts.total = ad::add(ad::add(ad::scale(fl, weights.focal), ad::scale(l1, weights.l1)), ad::scale(gl, weights.giou));
  return parts;
}

}  // namespace istas::tracker
