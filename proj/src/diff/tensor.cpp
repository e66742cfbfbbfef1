#include "hnp/diff/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace hnp::diff {

namespace {

using EMat = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<EMat>;
using CMapM = Eigen::Map<const EMat>;

MapM as_mat(std::vector<real>& v, std::size_t r, std::size_t c) {
  return MapM(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
CMapM as_mat(const std::vector<real>& v, std::size_t r, std::size_t c) {
  return CMapM(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
}

bool needs(const detail::Node& p) { return p.requires_grad; }

real stable_softplus(real x) {
  return std::max(x, real(0)) + std::log1p(std::exp(-std::abs(x)));
}
real sigmoid(real x) {
  if (x >= real(0)) return real(1) / (real(1) + std::exp(-x));
  const real e = std::exp(x);
  return e / (real(1) + e);
}
real norm_cdf(real x) { return real(0.5) * (real(1) + std::erf(x * real(M_SQRT1_2))); }
real norm_pdf(real x) {
  return std::exp(real(-0.5) * x * x) * real(0.3989422804014327);
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

// ---- Tensor basics ----

Tensor make_op(Shape shape, std::vector<Tensor> parents,
               std::function<void(detail::Node&)> backprop) {
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value.resize(shape_numel(n->shape));
  bool rg = false;
  for (const auto& p : parents) rg = rg || p.requires_grad();
  if (rg) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (const auto& p : parents) n->parents.push_back(p.handle());
    n->backprop = std::move(backprop);
  }
  return Tensor(std::move(n));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto t = make_op(std::move(shape), {}, nullptr);
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::constant(Shape shape, real v, bool requires_grad) {
  auto t = make_op(std::move(shape), {}, nullptr);
  std::fill(t.node_->value.begin(), t.node_->value.end(), v);
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<real> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("from: shape " + shape_str(shape) + " does not hold " +
                     std::to_string(data.size()) + " values");
  }
  auto t = make_op(std::move(shape), {}, nullptr);
  t.node_->value = std::move(data);
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::randn(Shape shape, Rng& rng, real sd, bool requires_grad) {
  auto t = zeros(std::move(shape), requires_grad);
  for (auto& v : t.node_->value) v = sd * rng.normal();
  return t;
}

Tensor Tensor::uniform(Shape shape, Rng& rng, real bound, bool requires_grad) {
  auto t = zeros(std::move(shape), requires_grad);
  for (auto& v : t.node_->value) v = rng.uniform(-bound, bound);
  return t;
}

std::size_t Tensor::rows() const { return rank() >= 2 ? shape()[0] : 1; }
std::size_t Tensor::cols() const { return rank() >= 2 ? shape()[1] : shape()[0]; }

real Tensor::scalar() const {
  if (numel() != 1) throw ShapeError("scalar(): tensor has shape " + shape_str(shape()));
  return node_->value[0];
}

std::span<const real> Tensor::grad() const {
  if (!has_grad()) throw GraphError("grad(): no gradient recorded on this tensor");
  return node_->grad;
}

std::span<real> Tensor::grad_mut() {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (has_grad()) std::fill(node_->grad.begin(), node_->grad.end(), real(0));
}

Tensor Tensor::detached(bool requires_grad) const {
  return from(shape(), {node_->value.begin(), node_->value.end()}, requires_grad);
}

// ---- elementwise ----

namespace {

template <typename Fwd, typename Bwd>
Tensor unary_op(const char* /*name*/, const Tensor& a, Fwd fwd, Bwd bwd) {
  Tensor out = make_op(a.shape(), {a}, [a, bwd](detail::Node& n) {
    auto& p = *a.node();
    if (!needs(p)) return;
    for (std::size_t i = 0; i < n.value.size(); ++i)
      p.grad[i] += n.grad[i] * bwd(a.value_at(i), n.value[i]);
  });
  auto vals = out.values_mut();
  auto in = a.values();
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = fwd(in[i]);
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  Tensor out = make_op(a.shape(), {a, b}, [a, b](detail::Node& n) {
    if (needs(*a.node()))
      for (std::size_t i = 0; i < n.grad.size(); ++i) a.node()->grad[i] += n.grad[i];
    if (needs(*b.node()))
      for (std::size_t i = 0; i < n.grad.size(); ++i) b.node()->grad[i] += n.grad[i];
  });
  auto v = out.values_mut();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value_at(i) + b.value_at(i);
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  Tensor out = make_op(a.shape(), {a, b}, [a, b](detail::Node& n) {
    if (needs(*a.node()))
      for (std::size_t i = 0; i < n.grad.size(); ++i) a.node()->grad[i] += n.grad[i];
    if (needs(*b.node()))
      for (std::size_t i = 0; i < n.grad.size(); ++i) b.node()->grad[i] -= n.grad[i];
  });
  auto v = out.values_mut();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value_at(i) - b.value_at(i);
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  Tensor out = make_op(a.shape(), {a, b}, [a, b](detail::Node& n) {
    if (needs(*a.node()))
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        a.node()->grad[i] += n.grad[i] * b.value_at(i);
    if (needs(*b.node()))
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        b.node()->grad[i] += n.grad[i] * a.value_at(i);
  });
  auto v = out.values_mut();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value_at(i) * b.value_at(i);
  return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
  check_same_shape("div", a, b);
  Tensor out = make_op(a.shape(), {a, b}, [a, b](detail::Node& n) {
    if (needs(*a.node()))
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        a.node()->grad[i] += n.grad[i] / b.value_at(i);
    if (needs(*b.node()))
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        b.node()->grad[i] -= n.grad[i] * n.value[i] / b.value_at(i);
  });
  auto v = out.values_mut();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value_at(i) / b.value_at(i);
  return out;
}

Tensor scale(const Tensor& a, real c) {
  return unary_op("scale", a, [c](real x) { return c * x; },
                  [c](real, real) { return c; });
}

Tensor add_scalar(const Tensor& a, real c) {
  return unary_op("add_scalar", a, [c](real x) { return x + c; },
                  [](real, real) { return real(1); });
}

Tensor exp(const Tensor& a) {
  return unary_op("exp", a, [](real x) { return std::exp(x); },
                  [](real, real y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary_op("log", a, [](real x) { return std::log(x); },
                  [](real x, real) { return real(1) / x; });
}

Tensor square(const Tensor& a) {
  return unary_op("square", a, [](real x) { return x * x; },
                  [](real x, real) { return real(2) * x; });
}

Tensor gelu(const Tensor& a) {
  return unary_op("gelu", a, [](real x) { return x * norm_cdf(x); },
                  [](real x, real) { return norm_cdf(x) + x * norm_pdf(x); });
}

Tensor softplus(const Tensor& a) {
  return unary_op("softplus", a, [](real x) { return stable_softplus(x); },
                  [](real x, real) { return sigmoid(x); });
}

// ---- broadcasts ----

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
  const std::size_t n = x.rows(), d = x.cols();
  if (v.numel() != d) {
    throw ShapeError("add_rowvec: row vector " + shape_str(v.shape()) +
                     " does not match " + shape_str(x.shape()));
  }
  Tensor out = make_op(x.shape(), {x, v}, [x, v, n, d](detail::Node& nd) {
    if (needs(*x.node()))
      for (std::size_t i = 0; i < nd.grad.size(); ++i) x.node()->grad[i] += nd.grad[i];
    if (needs(*v.node()))
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) v.node()->grad[c] += nd.grad[r * d + c];
  });
  auto o = out.values_mut();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) o[r * d + c] = x.value_at(r * d + c) + v.value_at(c);
  return out;
}

Tensor sub_colvec(const Tensor& x, const Tensor& v) {
  const std::size_t n = x.rows(), d = x.cols();
  if (v.numel() != n) {
    throw ShapeError("sub_colvec: column vector " + shape_str(v.shape()) +
                     " does not match " + shape_str(x.shape()));
  }
  Tensor out = make_op(x.shape(), {x, v}, [x, v, n, d](detail::Node& nd) {
    if (needs(*x.node()))
      for (std::size_t i = 0; i < nd.grad.size(); ++i) x.node()->grad[i] += nd.grad[i];
    if (needs(*v.node()))
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) v.node()->grad[r] -= nd.grad[r * d + c];
  });
  auto o = out.values_mut();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) o[r * d + c] = x.value_at(r * d + c) - v.value_at(r);
  return out;
}

// ---- dense linear algebra ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows(), k = a.cols(), k2 = b.rows(), m = b.cols();
  if (k != k2) {
    throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
  Tensor out = make_op({n, m}, {a, b}, [a, b, n, k, m](detail::Node& nd) {
    CMapM G(nd.grad.data(), n, m);
    if (needs(*a.node())) {
      MapM dA(a.node()->grad.data(), n, k);
      dA.noalias() += G * as_mat(b.node()->value, k, m).transpose();
    }
    if (needs(*b.node())) {
      MapM dB(b.node()->grad.data(), k, m);
      dB.noalias() += as_mat(a.node()->value, n, k).transpose() * G;
    }
  });
  as_mat(out.node()->value, n, m).noalias() =
      as_mat(a.node()->value, n, k) * as_mat(b.node()->value, k, m);
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  if (k != b.cols()) {
    throw ShapeError("matmul_nt: inner dimensions disagree, " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()) + " transposed");
  }
  Tensor out = make_op({n, m}, {a, b}, [a, b, n, k, m](detail::Node& nd) {
    CMapM G(nd.grad.data(), n, m);
    if (needs(*a.node())) {
      MapM dA(a.node()->grad.data(), n, k);
      dA.noalias() += G * as_mat(b.node()->value, m, k);
    }
    if (needs(*b.node())) {
      MapM dB(b.node()->grad.data(), m, k);
      dB.noalias() += G.transpose() * as_mat(a.node()->value, n, k);
    }
  });
  as_mat(out.node()->value, n, m).noalias() =
      as_mat(a.node()->value, n, k) * as_mat(b.node()->value, m, k).transpose();
  return out;
}

Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b) {
  if (x.cols() != W.cols()) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(W.shape()));
  }
  if (b.numel() != W.rows()) {
    throw ShapeError("linear: bias " + shape_str(b.shape()) + " incompatible with weight " +
                     shape_str(W.shape()));
  }
  return add_rowvec(matmul_nt(x, W), b);
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  const std::size_t n = x.rows(), d = x.cols();
  if (gain.numel() != d || bias.numel() != d) {
    throw ShapeError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" +
                     shape_str(bias.shape()) + " do not match " + shape_str(x.shape()));
  }
  constexpr real kEps = real(1e-5);
  auto xhat = std::make_shared<std::vector<real>>(n * d);
  auto inv_sd = std::make_shared<std::vector<real>>(n);

  Tensor out = make_op(x.shape(), {x, gain, bias},
                       [x, gain, bias, xhat, inv_sd, n, d](detail::Node& nd) {
    const auto& g = gain.values();
    for (std::size_t r = 0; r < n; ++r) {
      const real* gy = nd.grad.data() + r * d;
      const real* xh = xhat->data() + r * d;
      if (needs(*gain.node()) || needs(*bias.node())) {
        for (std::size_t c = 0; c < d; ++c) {
          if (needs(*gain.node())) gain.node()->grad[c] += gy[c] * xh[c];
          if (needs(*bias.node())) bias.node()->grad[c] += gy[c];
        }
      }
      if (needs(*x.node())) {
        real mean_h = 0, mean_hx = 0;
        for (std::size_t c = 0; c < d; ++c) {
          const real h = gy[c] * g[c];
          mean_h += h;
          mean_hx += h * xh[c];
        }
        mean_h /= real(d);
        mean_hx /= real(d);
        real* dx = x.node()->grad.data() + r * d;
        const real inv = (*inv_sd)[r];
        for (std::size_t c = 0; c < d; ++c) {
          const real h = gy[c] * g[c];
          dx[c] += inv * (h - mean_h - xh[c] * mean_hx);
        }
      }
    }
  });

  auto o = out.values_mut();
  const auto in = x.values();
  const auto g = gain.values();
  const auto b = bias.values();
  for (std::size_t r = 0; r < n; ++r) {
    real mean = 0;
    for (std::size_t c = 0; c < d; ++c) mean += in[r * d + c];
    mean /= real(d);
    real var = 0;
    for (std::size_t c = 0; c < d; ++c) {
      const real dvi = in[r * d + c] - mean;
      var += dvi * dvi;
    }
    var /= real(d);
    const real inv = real(1) / std::sqrt(var + kEps);
    (*inv_sd)[r] = inv;
    for (std::size_t c = 0; c < d; ++c) {
      const real xh = (in[r * d + c] - mean) * inv;
      (*xhat)[r * d + c] = xh;
      o[r * d + c] = g[c] * xh + b[c];
    }
  }
  return out;
}

Tensor softmax(const Tensor& x, int axis) {
  const std::size_t n = x.rows(), d = x.cols();
  if (x.rank() == 1) axis = 1;  // a vector is one row
  if (axis != 0 && axis != 1) throw ConfigError("softmax: axis must be 0 or 1");
  const std::size_t slices = (axis == 1) ? n : d;
  const std::size_t len = (axis == 1) ? d : n;
  const std::size_t stride = (axis == 1) ? 1 : d;
  const std::size_t slice_step = (axis == 1) ? d : 1;

  Tensor out = make_op(x.shape(), {x, }, [x, slices, len, stride, slice_step](detail::Node& nd) {
    if (!needs(*x.node())) return;
    for (std::size_t s = 0; s < slices; ++s) {
      const real* y = nd.value.data() + s * slice_step;
      const real* gy = nd.grad.data() + s * slice_step;
      real dot = 0;
      for (std::size_t i = 0; i < len; ++i) dot += gy[i * stride] * y[i * stride];
      real* dx = x.node()->grad.data() + s * slice_step;
      for (std::size_t i = 0; i < len; ++i)
        dx[i * stride] += y[i * stride] * (gy[i * stride] - dot);
    }
  });
  auto o = out.values_mut();
  const auto in = x.values();
  for (std::size_t s = 0; s < slices; ++s) {
    const real* src = in.data() + s * slice_step;
    real* dst = o.data() + s * slice_step;
    real mx = src[0];
    for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, src[i * stride]);
    real sum = 0;
    for (std::size_t i = 0; i < len; ++i) {
      const real e = std::exp(src[i * stride] - mx);
      dst[i * stride] = e;
      sum += e;
    }
    for (std::size_t i = 0; i < len; ++i) dst[i * stride] /= sum;
  }
  return out;
}

// ---- structural ----

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no parts");
  const std::size_t d = parts.front().cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.cols() != d) {
      throw ShapeError("concat_rows: column mismatch " + shape_str(p.shape()) + " vs width " +
                       std::to_string(d));
    }
    total += p.rows();
  }
  Tensor out = make_op({total, d}, parts, [parts, d](detail::Node& nd) {
    std::size_t r0 = 0;
    for (const auto& p : parts) {
      const std::size_t nr = p.rows();
      if (needs(*p.node())) {
        for (std::size_t i = 0; i < nr * d; ++i) p.node()->grad[i] += nd.grad[r0 * d + i];
      }
      r0 += nr;
    }
  });
  auto o = out.values_mut();
  std::size_t r0 = 0;
  for (const auto& p : parts) {
    const auto v = p.values();
    std::copy(v.begin(), v.end(), o.begin() + static_cast<std::ptrdiff_t>(r0 * d));
    r0 += p.rows();
  }
  return out;
}

Tensor narrow_rows(const Tensor& t, std::size_t row0, std::size_t nrows) {
  const std::size_t n = t.rows(), d = t.cols();
  if (row0 + nrows > n) {
    throw ShapeError("narrow_rows: rows [" + std::to_string(row0) + ", " +
                     std::to_string(row0 + nrows) + ") out of " + shape_str(t.shape()));
  }
  Tensor out = make_op({nrows, d}, {t}, [t, row0, d](detail::Node& nd) {
    if (!needs(*t.node())) return;
    for (std::size_t i = 0; i < nd.grad.size(); ++i)
      t.node()->grad[row0 * d + i] += nd.grad[i];
  });
  auto o = out.values_mut();
  const auto v = t.values();
  std::copy(v.begin() + static_cast<std::ptrdiff_t>(row0 * d),
            v.begin() + static_cast<std::ptrdiff_t>((row0 + nrows) * d), o.begin());
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts");
  const std::size_t n = parts.front().rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != n) {
      throw ShapeError("concat_cols: row mismatch " + shape_str(p.shape()) + " vs rows " +
                       std::to_string(n));
    }
    total += p.cols();
  }
  Tensor out = make_op({n, total}, parts, [parts, n, total](detail::Node& nd) {
    std::size_t c0 = 0;
    for (const auto& p : parts) {
      const std::size_t pc = p.cols();
      if (needs(*p.node())) {
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < pc; ++c)
            p.node()->grad[r * pc + c] += nd.grad[r * total + c0 + c];
      }
      c0 += pc;
    }
  });
  auto o = out.values_mut();
  std::size_t c0 = 0;
  for (const auto& p : parts) {
    const std::size_t pc = p.cols();
    const auto v = p.values();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < pc; ++c) o[r * total + c0 + c] = v[r * pc + c];
    c0 += pc;
  }
  return out;
}

Tensor narrow_cols(const Tensor& t, std::size_t col0, std::size_t ncols) {
  const std::size_t n = t.rows(), d = t.cols();
  if (col0 + ncols > d) {
    throw ShapeError("narrow_cols: cols [" + std::to_string(col0) + ", " +
                     std::to_string(col0 + ncols) + ") out of " + shape_str(t.shape()));
  }
  Tensor out = make_op({n, ncols}, {t}, [t, col0, ncols, n, d](detail::Node& nd) {
    if (!needs(*t.node())) return;
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < ncols; ++c)
        t.node()->grad[r * d + col0 + c] += nd.grad[r * ncols + c];
  });
  auto o = out.values_mut();
  const auto v = t.values();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < ncols; ++c) o[r * ncols + c] = v[r * d + col0 + c];
  return out;
}

Tensor gather_rows(const Tensor& t, const std::vector<std::size_t>& indices) {
  const std::size_t n = t.rows(), d = t.cols();
  for (std::size_t idx : indices) {
    if (idx >= n) {
      throw ShapeError("gather_rows: index " + std::to_string(idx) + " out of " +
                       shape_str(t.shape()));
    }
  }
  Tensor out = make_op({indices.size(), d}, {t}, [t, indices, d](detail::Node& nd) {
    if (!needs(*t.node())) return;
    for (std::size_t r = 0; r < indices.size(); ++r)
      for (std::size_t c = 0; c < d; ++c)
        t.node()->grad[indices[r] * d + c] += nd.grad[r * d + c];
  });
  auto o = out.values_mut();
  const auto v = t.values();
  for (std::size_t r = 0; r < indices.size(); ++r)
    std::copy(v.begin() + static_cast<std::ptrdiff_t>(indices[r] * d),
              v.begin() + static_cast<std::ptrdiff_t>((indices[r] + 1) * d),
              o.begin() + static_cast<std::ptrdiff_t>(r * d));
  return out;
}

Tensor interleave_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("interleave_cols: no parts");
  const std::size_t n = parts.front().rows(), s = parts.front().cols();
  const std::size_t num = parts.size();
  for (const auto& p : parts) {
    if (p.rows() != n || p.cols() != s) {
      throw ShapeError("interleave_cols: part " + shape_str(p.shape()) +
                       " differs from first part " + shape_str(parts.front().shape()));
    }
  }
  const std::size_t total = s * num;
  Tensor out = make_op({n, total}, parts, [parts, n, s, num, total](detail::Node& nd) {
    for (std::size_t p = 0; p < num; ++p) {
      if (!needs(*parts[p].node())) continue;
      real* dst = parts[p].node()->grad.data();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < s; ++c)
          dst[r * s + c] += nd.grad[r * total + c * num + p];
    }
  });
  auto o = out.values_mut();
  for (std::size_t p = 0; p < num; ++p) {
    const auto v = parts[p].values();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < s; ++c) o[r * total + c * num + p] = v[r * s + c];
  }
  return out;
}

Tensor repeat_rows(const Tensor& t, std::size_t k) {
  const std::size_t n = t.rows(), d = t.cols();
  Tensor out = make_op({n * k, d}, {t}, [t, k, n, d](detail::Node& nd) {
    if (!needs(*t.node())) return;
    for (std::size_t q = 0; q < k; ++q)
      for (std::size_t i = 0; i < n * d; ++i) t.node()->grad[i] += nd.grad[q * n * d + i];
  });
  auto o = out.values_mut();
  const auto v = t.values();
  for (std::size_t q = 0; q < k; ++q)
    std::copy(v.begin(), v.end(), o.begin() + static_cast<std::ptrdiff_t>(q * n * d));
  return out;
}

Tensor repeat_each_row(const Tensor& t, std::size_t k) {
  const std::size_t n = t.rows(), d = t.cols();
  Tensor out = make_op({n * k, d}, {t}, [t, k, n, d](detail::Node& nd) {
    if (!needs(*t.node())) return;
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t q = 0; q < k; ++q)
        for (std::size_t c = 0; c < d; ++c)
          t.node()->grad[r * d + c] += nd.grad[(r * k + q) * d + c];
  });
  auto o = out.values_mut();
  const auto v = t.values();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t q = 0; q < k; ++q)
      std::copy(v.begin() + static_cast<std::ptrdiff_t>(r * d),
                v.begin() + static_cast<std::ptrdiff_t>((r + 1) * d),
                o.begin() + static_cast<std::ptrdiff_t>((r * k + q) * d));
  return out;
}

Tensor mean_rows(const Tensor& t) {
  const std::size_t n = t.rows(), d = t.cols();
  Tensor out = make_op({std::size_t(1), d}, {t}, [t, n, d](detail::Node& nd) {
    if (!needs(*t.node())) return;
    const real inv = real(1) / real(n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c) t.node()->grad[r * d + c] += nd.grad[c] * inv;
  });
  auto o = out.values_mut();
  const auto v = t.values();
  std::fill(o.begin(), o.end(), real(0));
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) o[c] += v[r * d + c];
  for (std::size_t c = 0; c < d; ++c) o[c] /= real(n);
  return out;
}

Tensor sum_all(const Tensor& t) {
  Tensor out = make_op({std::size_t(1)}, {t}, [t](detail::Node& nd) {
    if (!needs(*t.node())) return;
    for (auto& g : t.node()->grad) g += nd.grad[0];
  });
  real s = 0;
  for (real v : t.values()) s += v;
  out.values_mut()[0] = s;
  return out;
}

Tensor mean_all(const Tensor& t) {
  return scale(sum_all(t), real(1) / real(t.numel()));
}

Tensor flatten(const Tensor& t) {
  Tensor out = make_op({t.numel()}, {t}, [t](detail::Node& nd) {
    if (!needs(*t.node())) return;
    for (std::size_t i = 0; i < nd.grad.size(); ++i) t.node()->grad[i] += nd.grad[i];
  });
  auto o = out.values_mut();
  const auto v = t.values();
  std::copy(v.begin(), v.end(), o.begin());
  return out;
}

Tensor reshape_2d(const Tensor& t, std::size_t rows, std::size_t cols) {
  if (rows * cols != t.numel()) {
    throw ShapeError("reshape_2d: " + shape_str(t.shape()) + " cannot become [" +
                     std::to_string(rows) + "x" + std::to_string(cols) + "]");
  }
  Tensor out = make_op({rows, cols}, {t}, [t](detail::Node& nd) {
    if (!needs(*t.node())) return;
    for (std::size_t i = 0; i < nd.grad.size(); ++i) t.node()->grad[i] += nd.grad[i];
  });
  auto o = out.values_mut();
  const auto v = t.values();
  std::copy(v.begin(), v.end(), o.begin());
  return out;
}

Tensor nll_categorical_segments(const Tensor& logits, const std::vector<int>& labels,
                                std::size_t width) {
  const std::size_t n = logits.rows(), total = logits.cols();
  if (width == 0 || total % width != 0) {
    throw ShapeError("nll_categorical_segments: width " + std::to_string(width) +
                     " does not divide " + shape_str(logits.shape()));
  }
  if (labels.size() != n) {
    throw ShapeError("nll_categorical_segments: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(n) + " rows");
  }
  const std::size_t segs = total / width;
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= width)
      throw ShapeError("nll_categorical_segments: label " + std::to_string(y) +
                       " outside [0, " + std::to_string(width) + ")");
  }
  // probabilities are kept from the forward pass for the backward rule
  auto probs = std::make_shared<std::vector<real>>(n * total);

  Tensor out = make_op({std::size_t(1)}, {logits},
                       [logits, labels, probs, n, segs, width, total](detail::Node& nd) {
    if (!needs(*logits.node())) return;
    const real up = nd.grad[0];
    real* dl = logits.node()->grad.data();
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t y = static_cast<std::size_t>(labels[r]);
      for (std::size_t s = 0; s < segs; ++s) {
        const real* p = probs->data() + r * total + s * width;
        real* g = dl + r * total + s * width;
        for (std::size_t c = 0; c < width; ++c) g[c] += up * (p[c] - (c == y ? real(1) : real(0)));
      }
    }
  });

  const auto in = logits.values();
  real loss = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t y = static_cast<std::size_t>(labels[r]);
    for (std::size_t s = 0; s < segs; ++s) {
      const real* src = in.data() + r * total + s * width;
      real* p = probs->data() + r * total + s * width;
      real mx = src[0];
      for (std::size_t c = 1; c < width; ++c) mx = std::max(mx, src[c]);
      real sum = 0;
      for (std::size_t c = 0; c < width; ++c) {
        p[c] = std::exp(src[c] - mx);
        sum += p[c];
      }
      for (std::size_t c = 0; c < width; ++c) p[c] /= sum;
      loss += std::log(sum) + mx - src[y];
    }
  }
  out.values_mut()[0] = loss;
  return out;
}

// ---- backward ----

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw GraphError("backward: loss must be a defined scalar, got " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("empty")));
  }
  if (!loss.requires_grad()) {
    throw GraphError("backward: loss is not connected to any grad-tracked tensor");
  }

  // topological order over the grad-tracked subgraph only
  std::vector<detail::Node*> topo;
  std::unordered_set<detail::Node*> seen;
  struct Frame {
    detail::Node* n;
    std::size_t next;
  };
  std::vector<Frame> stack{{loss.node(), 0}};
  seen.insert(loss.node());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      detail::Node* p = f.n->parents[f.next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      topo.push_back(f.n);
      stack.pop_back();
    }
  }

  for (detail::Node* n : topo) {
    if (n->is_leaf()) {
      n->ensure_grad();  // leaf grads persist and accumulate across sweeps
    } else {
      n->grad.assign(n->value.size(), real(0));
    }
  }
  loss.node()->grad[0] += real(1);
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop(**it);
  }
}

}  // namespace hnp::diff
