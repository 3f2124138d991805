#include "istas/core/autodiff.hpp"

#include "istas/core/error.hpp"

#include <cmath>
#include <numbers>

namespace istas::ad {

const Matrix& Var::value() const { return tape_->value(*this); }

double Var::scalar() const {
  const Matrix& v = value();
  require_shape(v.size() == 1, "scalar() on a non 1x1 Var");
  return v(0, 0);
}

Var Tape::make(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return make(std::move(n));
}

Var Tape::variable(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = record_;
  return make(std::move(n));
}

Var Tape::param(Parameter& p) {
  Node n;
  n.value = p.value;
  n.requires_grad = record_;
  n.param = record_ ? &p : nullptr;
  return make(std::move(n));
}

Var Tape::push(Matrix value, std::initializer_list<Var> inputs, Backward fn) {
  return push(std::move(value), std::vector<Var>(inputs), std::move(fn));
}

Var Tape::push(Matrix value, const std::vector<Var>& inputs, Backward fn) {
  Node n;
  n.value = std::move(value);
  if (record_) {
    for (const Var& v : inputs) {
      if (v.tape_ != this) throw std::logic_error("Var from a different tape");
      if (nodes_[v.id_].requires_grad) {
        n.requires_grad = true;
        break;
      }
    }
    if (n.requires_grad) n.backward = std::move(fn);
  }
  return make(std::move(n));
}

void Tape::accumulate(const Var& v, const Matrix& g) {
  Node& n = nodes_[v.id_];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(const Var& out) {
  require_shape(out.value().size() == 1, "backward() needs a scalar output");
  backward(out, Matrix::Ones(1, 1));
}

void Tape::backward(const Var& out, const Matrix& seed) {
  require_shape(seed.rows() == out.rows() && seed.cols() == out.cols(), "backward seed shape");
  if (!record_) throw std::logic_error("backward() on a non-recording tape");
  accumulate(out, seed);
  for (int i = out.id_; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) continue;
    if (n.backward) n.backward(n.grad);
    if (n.param != nullptr) {
      if (n.param->grad.size() == 0) n.param->zero_grad();
      n.param->grad += n.grad;
    }
  }
}

Matrix Tape::grad(const Var& v) const {
  const Node& n = nodes_[v.id_];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

namespace {

void same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

}  // namespace

Var add(const Var& a, const Var& b) {
  same_shape(a, b, "add");
  Tape& t = *a.tape();
  return t.push(a.value() + b.value(), {a, b}, [&t, a, b](const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  same_shape(a, b, "sub");
  Tape& t = *a.tape();
  return t.push(a.value() - b.value(), {a, b}, [&t, a, b](const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

Var mul(const Var& a, const Var& b) {
  same_shape(a, b, "mul");
  Tape& t = *a.tape();
  return t.push(a.value().cwiseProduct(b.value()), {a, b}, [&t, a, b](const Matrix& g) {
    t.accumulate(a, g.cwiseProduct(b.value()));
    t.accumulate(b, g.cwiseProduct(a.value()));
  });
}

Var scale(const Var& a, double s) {
  Tape& t = *a.tape();
  return t.push(a.value() * s, {a}, [&t, a, s](const Matrix& g) { t.accumulate(a, g * s); });
}

Var add_scalar(const Var& a, double s) {
  Tape& t = *a.tape();
  return t.push(a.value().array() + s, {a}, [&t, a](const Matrix& g) { t.accumulate(a, g); });
}

Var add_bias(const Var& a, const Var& b) {
  require_shape(b.cols() == 1 && b.rows() == a.rows(), "add_bias: bias must be rows x 1");
  Tape& t = *a.tape();
  Matrix v = a.value();
  v.colwise() += b.value().col(0);
  return t.push(std::move(v), {a, b}, [&t, a, b](const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g.rowwise().sum());
  });
}

Var scale_by(const Var& a, const Var& s) {
  require_shape(s.rows() == 1 && s.cols() == 1, "scale_by: scale must be 1x1");
  Tape& t = *a.tape();
  return t.push(a.value() * s.value()(0, 0), {a, s}, [&t, a, s](const Matrix& g) {
    t.accumulate(a, g * s.value()(0, 0));
    t.accumulate(s, Matrix::Constant(1, 1, g.cwiseProduct(a.value()).sum()));
  });
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " * " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  Tape& t = *a.tape();
  Matrix v = a.value() * b.value();
  return t.push(std::move(v), {a, b}, [&t, a, b](const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * b.value().transpose());
    if (t.requires_grad(b)) t.accumulate(b, a.value().transpose() * g);
  });
}

Var transpose(const Var& a) {
  Tape& t = *a.tape();
  return t.push(a.value().transpose(), {a},
                [&t, a](const Matrix& g) { t.accumulate(a, g.transpose()); });
}

Var hconcat(const std::vector<Var>& parts) {
  require_shape(!parts.empty(), "hconcat of nothing");
  Tape& t = *parts.front().tape();
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const Var& p : parts) {
    require_shape(p.rows() == rows, "hconcat: row mismatch");
    cols += p.cols();
  }
  Matrix v(rows, cols);
  Index c = 0;
  for (const Var& p : parts) {
    v.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return t.push(std::move(v), parts, [&t, parts](const Matrix& g) {
    Index c0 = 0;
    for (const Var& p : parts) {
      if (t.requires_grad(p)) t.accumulate(p, g.middleCols(c0, p.cols()));
      c0 += p.cols();
    }
  });
}

Var vconcat(const std::vector<Var>& parts) {
  require_shape(!parts.empty(), "vconcat of nothing");
  Tape& t = *parts.front().tape();
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const Var& p : parts) {
    require_shape(p.cols() == cols, "vconcat: column mismatch");
    rows += p.rows();
  }
  Matrix v(rows, cols);
  Index r = 0;
  for (const Var& p : parts) {
    v.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return t.push(std::move(v), parts, [&t, parts](const Matrix& g) {
    Index r0 = 0;
    for (const Var& p : parts) {
      if (t.requires_grad(p)) t.accumulate(p, g.middleRows(r0, p.rows()));
      r0 += p.rows();
    }
  });
}

Var col_block(const Var& a, Index start, Index count) {
  require_shape(start >= 0 && count >= 0 && start + count <= a.cols(), "col_block out of range");
  Tape& t = *a.tape();
  return t.push(a.value().middleCols(start, count), {a}, [&t, a, start, count](const Matrix& g) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    full.middleCols(start, count) = g;
    t.accumulate(a, full);
  });
}

Var row_block(const Var& a, Index start, Index count) {
  require_shape(start >= 0 && count >= 0 && start + count <= a.rows(), "row_block out of range");
  Tape& t = *a.tape();
  return t.push(a.value().middleRows(start, count), {a}, [&t, a, start, count](const Matrix& g) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    full.middleRows(start, count) = g;
    t.accumulate(a, full);
  });
}

Var entry(const Var& a, Index row, Index col) {
  require_shape(row >= 0 && row < a.rows() && col >= 0 && col < a.cols(), "entry out of range");
  Tape& t = *a.tape();
  return t.push(Matrix::Constant(1, 1, a.value()(row, col)), {a}, [&t, a, row, col](const Matrix& g) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    full(row, col) = g(0, 0);
    t.accumulate(a, full);
  });
}

Var tile_cols(const Var& a, int reps) {
  require_shape(reps >= 1, "tile_cols: reps < 1");
  if (reps == 1) return a;
  Tape& t = *a.tape();
  const Index n = a.cols();
  Matrix v(a.rows(), n * reps);
  for (int r = 0; r < reps; ++r) v.middleCols(r * n, n) = a.value();
  return t.push(std::move(v), {a}, [&t, a, reps, n](const Matrix& g) {
    Matrix acc = g.middleCols(0, n);
    for (int r = 1; r < reps; ++r) acc += g.middleCols(r * n, n);
    t.accumulate(a, acc);
  });
}

Var step_mean(const Var& a, int steps) {
  require_shape(steps >= 1 && a.cols() % steps == 0, "step_mean: columns not divisible by steps");
  if (steps == 1) return a;
  Tape& t = *a.tape();
  const Index n = a.cols() / steps;
  Matrix v = a.value().middleCols(0, n);
  for (int s = 1; s < steps; ++s) v += a.value().middleCols(s * n, n);
  v /= static_cast<double>(steps);
  return t.push(std::move(v), {a}, [&t, a, steps, n](const Matrix& g) {
    Matrix full(a.rows(), a.cols());
    for (int s = 0; s < steps; ++s) full.middleCols(s * n, n) = g / static_cast<double>(steps);
    t.accumulate(a, full);
  });
}

Var permute_tokens(const Var& a, int steps, const std::vector<Index>& order) {
  require_shape(steps >= 1 && a.cols() % steps == 0, "permute_tokens: bad step count");
  const Index n = a.cols() / steps;
  require_shape(static_cast<Index>(order.size()) == n, "permute_tokens: order size");
  Tape& t = *a.tape();
  Matrix v(a.rows(), a.cols());
  for (int s = 0; s < steps; ++s)
    for (Index j = 0; j < n; ++j) v.col(s * n + j) = a.value().col(s * n + order[j]);
  return t.push(std::move(v), {a}, [&t, a, steps, n, order](const Matrix& g) {
    Matrix full(a.rows(), a.cols());
    for (int s = 0; s < steps; ++s)
      for (Index j = 0; j < n; ++j) full.col(s * n + order[j]) = g.col(s * n + j);
    t.accumulate(a, full);
  });
}

Var relu(const Var& a) {
  Tape& t = *a.tape();
  return t.push(a.value().cwiseMax(0.0), {a}, [&t, a](const Matrix& g) {
    t.accumulate(a, (a.value().array() > 0.0).cast<double>().matrix().cwiseProduct(g));
  });
}

Var gelu(const Var& a) {
  Tape& t = *a.tape();
  const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  Matrix v = a.value().unaryExpr(
      [inv_sqrt2](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); });
  return t.push(std::move(v), {a}, [&t, a, inv_sqrt2](const Matrix& g) {
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    Matrix d = a.value().unaryExpr([&](double x) {
      return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
    });
    t.accumulate(a, d.cwiseProduct(g));
  });
}

Var sigmoid(const Var& a) {
  Tape& t = *a.tape();
  Matrix v = a.value().unaryExpr([](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  Matrix y = v;
  return t.push(std::move(v), {a}, [&t, a, y](const Matrix& g) {
    t.accumulate(a, (y.array() * (1.0 - y.array()) * g.array()).matrix());
  });
}

Var abs(const Var& a) {
  Tape& t = *a.tape();
  return t.push(a.value().cwiseAbs(), {a}, [&t, a](const Matrix& g) {
    Matrix s = a.value().unaryExpr([](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
    t.accumulate(a, s.cwiseProduct(g));
  });
}

Var sum(const Var& a) {
  Tape& t = *a.tape();
  return t.push(Matrix::Constant(1, 1, a.value().sum()), {a}, [&t, a](const Matrix& g) {
    t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var softmax_rows(const Var& a) {
  Tape& t = *a.tape();
  Matrix y(a.rows(), a.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    const double mx = a.value().row(i).maxCoeff();
    y.row(i) = (a.value().row(i).array() - mx).exp().matrix();
    y.row(i) /= y.row(i).sum();
  }
  Matrix yc = y;
  return t.push(std::move(y), {a}, [&t, a, yc](const Matrix& g) {
    Matrix d(yc.rows(), yc.cols());
    for (Index i = 0; i < yc.rows(); ++i) {
      const double dot = g.row(i).dot(yc.row(i));
      d.row(i) = yc.row(i).cwiseProduct((g.row(i).array() - dot).matrix());
    }
    t.accumulate(a, d);
  });
}

Var layer_norm_cols(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Index m = x.rows();
  const Index n = x.cols();
  require_shape(gamma.rows() == m && gamma.cols() == 1 && beta.rows() == m && beta.cols() == 1,
                "layer_norm_cols: affine shape");
  Tape& t = *x.tape();
  const Matrix& xv = x.value();
  Eigen::RowVectorXd mu = xv.colwise().mean();
  Matrix xc = xv.rowwise() - mu;
  Eigen::RowVectorXd inv_std =
      ((xc.array().square().colwise().sum() / static_cast<double>(m)) + eps).rsqrt().matrix();
  Matrix xhat = xc.array().rowwise() * inv_std.array();
  Matrix y = (xhat.array().colwise() * gamma.value().col(0).array()).matrix();
  y.colwise() += beta.value().col(0);
  return t.push(std::move(y), {x, gamma, beta}, [&t, x, gamma, beta, xhat, inv_std, m, n](const Matrix& g) {
    if (t.requires_grad(gamma)) t.accumulate(gamma, g.cwiseProduct(xhat).rowwise().sum());
    if (t.requires_grad(beta)) t.accumulate(beta, g.rowwise().sum());
    if (t.requires_grad(x)) {
      Matrix dxhat = g.array().colwise() * gamma.value().col(0).array();
      Eigen::RowVectorXd m1 = dxhat.colwise().mean();
      Eigen::RowVectorXd m2 = dxhat.cwiseProduct(xhat).colwise().mean();
      Matrix dx = (dxhat.rowwise() - m1) - (xhat.array().rowwise() * m2.array()).matrix();
      dx = dx.array().rowwise() * inv_std.array();
      t.accumulate(x, dx);
    }
    (void)n;
  });
}

Var norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Index m = x.rows();
  const Index n = x.cols();
  require_shape(gamma.rows() == m && gamma.cols() == 1 && beta.rows() == m && beta.cols() == 1,
                "norm_rows: affine shape");
  Tape& t = *x.tape();
  const Matrix& xv = x.value();
  Vector mu = xv.rowwise().mean();
  Matrix xc = xv.colwise() - mu;
  Vector inv_std = ((xc.array().square().rowwise().sum() / static_cast<double>(n)) + eps).rsqrt().matrix();
  Matrix xhat = xc.array().colwise() * inv_std.array();
  Matrix y = (xhat.array().colwise() * gamma.value().col(0).array()).matrix();
  y.colwise() += beta.value().col(0);
  return t.push(std::move(y), {x, gamma, beta}, [&t, x, gamma, beta, xhat, inv_std](const Matrix& g) {
    if (t.requires_grad(gamma)) t.accumulate(gamma, g.cwiseProduct(xhat).rowwise().sum());
    if (t.requires_grad(beta)) t.accumulate(beta, g.rowwise().sum());
    if (t.requires_grad(x)) {
      Matrix dxhat = g.array().colwise() * gamma.value().col(0).array();
      Vector m1 = dxhat.rowwise().mean();
      Vector m2 = dxhat.cwiseProduct(xhat).rowwise().mean();
      Matrix dx = (dxhat.colwise() - m1) - (xhat.array().colwise() * m2.array()).matrix();
      dx = dx.array().colwise() * inv_std.array();
      t.accumulate(x, dx);
    }
  });
}

Var soft_threshold(const Var& a, const Var& theta) {
  require_shape(theta.rows() == a.rows() && theta.cols() == 1, "soft_threshold: theta must be rows x 1");
  if ((theta.value().array() < 0.0).any()) throw InvariantError("soft_threshold: negative threshold");
  Tape& t = *a.tape();
  const Matrix& av = a.value();
  const Vector th = theta.value().col(0);
  Matrix y(av.rows(), av.cols());
  for (Index j = 0; j < av.cols(); ++j) {
    for (Index i = 0; i < av.rows(); ++i) {
      const double x = av(i, j);
      const double mag = std::abs(x) - th(i);
      y(i, j) = mag > 0 ? (x > 0 ? mag : -mag) : 0.0;
    }
  }
  return t.push(std::move(y), {a, theta}, [&t, a, theta](const Matrix& g) {
    const Matrix& av2 = a.value();
    const Vector th2 = theta.value().col(0);
    Matrix da = Matrix::Zero(av2.rows(), av2.cols());
    Vector dth = Vector::Zero(av2.rows());
    for (Index j = 0; j < av2.cols(); ++j) {
      for (Index i = 0; i < av2.rows(); ++i) {
        const double x = av2(i, j);
        if (std::abs(x) > th2(i)) {
          da(i, j) = g(i, j);
          dth(i) -= (x > 0 ? 1.0 : -1.0) * g(i, j);
        }
      }
    }
    t.accumulate(a, da);
    t.accumulate(theta, dth);
  });
}

Var im2col_tokens(const Var& x, int steps, int k) {
  require_shape(k >= 1 && k % 2 == 1, "im2col_tokens: kernel must be odd");
  require_shape(steps >= 1 && x.cols() % steps == 0, "im2col_tokens: bad step count");
  if (k == 1) return x;
  Tape& t = *x.tape();
  const Index m = x.rows();
  const Index n = x.cols() / steps;
  const int half = k / 2;
  Matrix v = Matrix::Zero(k * m, x.cols());
  for (int s = 0; s < steps; ++s) {
    for (Index j = 0; j < n; ++j) {
      for (int o = 0; o < k; ++o) {
        const Index src = j + o - half;
        if (src < 0 || src >= n) continue;
        v.block(o * m, s * n + j, m, 1) = x.value().col(s * n + src);
      }
    }
  }
  return t.push(std::move(v), {x}, [&t, x, steps, k, m, n, half](const Matrix& g) {
    Matrix dx = Matrix::Zero(m, x.cols());
    for (int s = 0; s < steps; ++s) {
      for (Index j = 0; j < n; ++j) {
        for (int o = 0; o < k; ++o) {
          const Index src = j + o - half;
          if (src < 0 || src >= n) continue;
          dx.col(s * n + src) += g.block(o * m, s * n + j, m, 1);
        }
      }
    }
    t.accumulate(x, dx);
  });
}

Var im2col_grid(const Var& x, Index height, Index width, int k) {
  require_shape(k >= 1 && k % 2 == 1, "im2col_grid: kernel must be odd");
  require_shape(x.cols() == height * width, "im2col_grid: columns != H*W");
  if (k == 1) return x;
  Tape& t = *x.tape();
  const Index c = x.rows();
  const int half = k / 2;
  Matrix v = Matrix::Zero(static_cast<Index>(k) * k * c, height * width);
  for (Index r = 0; r < height; ++r) {
    for (Index q = 0; q < width; ++q) {
      for (int dy = 0; dy < k; ++dy) {
        for (int dx = 0; dx < k; ++dx) {
          const Index rr = r + dy - half;
          const Index qq = q + dx - half;
          if (rr < 0 || rr >= height || qq < 0 || qq >= width) continue;
          v.block((dy * k + dx) * c, r * width + q, c, 1) = x.value().col(rr * width + qq);
        }
      }
    }
  }
  return t.push(std::move(v), {x}, [&t, x, height, width, k, c, half](const Matrix& g) {
    Matrix dxm = Matrix::Zero(c, height * width);
    for (Index r = 0; r < height; ++r) {
      for (Index q = 0; q < width; ++q) {
        for (int dy = 0; dy < k; ++dy) {
          for (int dx = 0; dx < k; ++dx) {
            const Index rr = r + dy - half;
            const Index qq = q + dx - half;
            if (rr < 0 || rr >= height || qq < 0 || qq >= width) continue;
            dxm.col(rr * width + qq) += g.block((dy * k + dx) * c, r * width + q, c, 1);
          }
        }
      }
    }
    t.accumulate(x, dxm);
  });
}

}  // namespace istas::ad
