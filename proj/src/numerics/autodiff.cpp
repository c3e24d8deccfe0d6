#include "dare/numerics/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

namespace dare::ad {

namespace {

using StridedMap = Eigen::Map<MatrixR, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const MatrixR, 0, Eigen::OuterStride<>>;

std::int64_t last_dim(const Tensor& t) { return t.shape().empty() ? 1 : t.shape().back(); }
std::int64_t row_count(const Tensor& t) { return t.size() / last_dim(t); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

constexpr Real kGeluC = static_cast<Real>(0.7978845608028654);  // sqrt(2/pi)
constexpr Real kGeluA = static_cast<Real>(0.044715);

}  // namespace

const Tensor& Var::value() const { return tape->value(*this); }
const Shape& Var::shape() const { return tape->value(*this).shape(); }
std::int64_t Var::rows() const { return row_count(value()); }
std::int64_t Var::cols() const { return last_dim(value()); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor{}, false, {}});
  return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::parameter(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor{}, true, {}});
  return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (n.grad.empty()) return Tensor(n.value.shape());
  return n.grad;
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward fn) {
  bool needs = false;
  for (const Var& in : inputs) needs = needs || requires_grad(in);
  return record(std::move(value), needs, std::move(fn));
}

Var Tape::record(Tensor value, bool needs_grad, Backward fn) {
  value.require_finite("tape operation");
  nodes_.push_back(Node{std::move(value), Tensor{}, needs_grad, needs_grad ? std::move(fn) : Backward{}});
  return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Tensor* Tape::accumulator(Var v) {
  if (!requires_grad(v)) return nullptr;
  Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return &n.grad;
}

void Tape::backward(Var loss) {
  if (value(loss).size() != 1) throw ShapeError("backward() requires a single-element loss");
  for (auto& n : nodes_) n.grad = Tensor{};
  if (!requires_grad(loss)) return;
  nodes_[static_cast<std::size_t>(loss.id)].grad = Tensor(value(loss).shape(), Real{1});
  for (std::int64_t i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.backward && !n.grad.empty()) n.backward(*this, n.grad);
  }
}

// ---------------------------------------------------------------- elementwise

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  out.matrix() += b.value().matrix();
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (auto* ga = t.accumulator(a)) ga->matrix() += g.matrix();
    if (auto* gb = t.accumulator(b)) gb->matrix() += g.matrix();
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  out.matrix() -= b.value().matrix();
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (auto* ga = t.accumulator(a)) ga->matrix() += g.matrix();
    if (auto* gb = t.accumulator(b)) gb->matrix() -= g.matrix();
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  out.matrix().array() *= b.value().matrix().array();
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (auto* ga = t.accumulator(a)) ga->matrix().array() += g.matrix().array() * b.value().matrix().array();
    if (auto* gb = t.accumulator(b)) gb->matrix().array() += g.matrix().array() * a.value().matrix().array();
  });
}

Var scale(Var a, Real s) {
  Tensor out = a.value();
  out.matrix() *= s;
  return a.tape->record(std::move(out), {a}, [a, s](Tape& t, const Tensor& g) {
    if (auto* ga = t.accumulator(a)) ga->matrix() += s * g.matrix();
  });
}

Var scale_by(Var a, Var s) {
  if (s.value().size() != 1) throw ShapeError("scale_by expects a single-element scale");
  const Real sv = s.value()[0];
  Tensor out = a.value();
  out.matrix() *= sv;
  return a.tape->record(std::move(out), {a, s}, [a, s, sv](Tape& t, const Tensor& g) {
    if (auto* ga = t.accumulator(a)) ga->matrix() += sv * g.matrix();
    if (auto* gs = t.accumulator(s)) (*gs)[0] += (g.matrix().array() * a.value().matrix().array()).sum();
  });
}

Var exp(Var a) {
  auto y = std::make_shared<Tensor>(a.value());
  y->matrix() = y->matrix().array().exp().matrix();
  return a.tape->record(*y, {a}, [a, y](Tape& t, const Tensor& g) {
    if (auto* ga = t.accumulator(a)) ga->matrix().array() += g.matrix().array() * y->matrix().array();
  });
}

Real gelu_value(Real x) {
  const Real u = kGeluC * (x + kGeluA * x * x * x);
  return Real(0.5) * x * (Real(1) + std::tanh(u));
}

Var gelu(Var x) {
  const Tensor& xv = x.value();
  // tanh(u) is kept for the backward pass.
  auto th = std::make_shared<Tensor>(xv.shape());
  {
    auto xa = xv.matrix().array();
    auto ta = th->matrix().array();
    // tanh(u) = 1 - 2 / (1 + e^{2u}); Eigen vectorizes exp but not tanh for doubles.
    ta = Real(1) - Real(2) / (Real(1) + (Real(2) * kGeluC * (xa + kGeluA * xa * xa * xa)).exp());
  }
  Tensor out(xv.shape());
  out.matrix().array() = Real(0.5) * xv.matrix().array() * (Real(1) + th->matrix().array());
  return x.tape->record(std::move(out), {x}, [x, th](Tape& t, const Tensor& g) {
    if (auto* gx = t.accumulator(x)) {
      auto xa = x.value().matrix().array();
      auto ta = th->matrix().array();
      gx->matrix().array() +=
          g.matrix().array() * (Real(0.5) * (Real(1) + ta) +
                                Real(0.5) * xa * (Real(1) - ta * ta) * kGeluC * (Real(1) + 3 * kGeluA * xa * xa));
    }
  });
}

Var detach(Var a) { return a.tape->constant(a.value()); }

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    if (auto* ga = t.accumulator(a)) {
      VecMap(ga->data(), ga->size()) += ConstVecMap(g.data(), g.size());
    }
  });
}

// ---------------------------------------------------------------- row-wise

Var add_bias(Var x, Var bias) {
  const std::int64_t n = x.cols();
  if (bias.value().size() != n) throw ShapeError("add_bias: bias width mismatch");
  Tensor out = x.value();
  out.matrix().rowwise() += bias.value().matrix(1).row(0);
  return x.tape->record(std::move(out), {x, bias}, [x, bias](Tape& t, const Tensor& g) {
    if (auto* gx = t.accumulator(x)) gx->matrix() += g.matrix();
    if (auto* gb = t.accumulator(bias)) gb->matrix(1).row(0) += g.matrix().colwise().sum();
  });
}

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_string(av.shape()) + " x " + shape_string(bv.shape()));
  }
  Tensor out({av.dim(0), bv.dim(1)});
  out.matrix().noalias() = av.matrix() * bv.matrix();
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (auto* ga = t.accumulator(a)) ga->matrix().noalias() += g.matrix() * b.value().matrix().transpose();
    if (auto* gb = t.accumulator(b)) gb->matrix().noalias() += a.value().matrix().transpose() * g.matrix();
  });
}

Var matmul_bt(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(1)) {
    throw ShapeError("matmul_bt: incompatible shapes " + shape_string(av.shape()) + " x " +
                     shape_string(bv.shape()) + "^T");
  }
  Tensor out({av.dim(0), bv.dim(0)});
  out.matrix().noalias() = av.matrix() * bv.matrix().transpose();
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (auto* ga = t.accumulator(a)) ga->matrix().noalias() += g.matrix() * b.value().matrix();
    if (auto* gb = t.accumulator(b)) gb->matrix().noalias() += g.matrix().transpose() * a.value().matrix();
  });
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  if (av.rank() != 2) throw ShapeError("transpose expects a 2-D tensor");
  Tensor out({av.dim(1), av.dim(0)});
  out.matrix() = av.matrix().transpose();
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    if (auto* ga = t.accumulator(a)) ga->matrix() += g.matrix().transpose();
  });
}

Var linear(Var x, Var weight, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  const std::int64_t rows = row_count(xv);
  if (wv.rank() != 2 || last_dim(xv) != wv.dim(0)) {
    throw ShapeError("linear: input " + shape_string(xv.shape()) + " vs weight " + shape_string(wv.shape()));
  }
  Tensor out({rows, wv.dim(1)});
  out.matrix().noalias() = xv.matrix() * wv.matrix();
  if (bias.valid()) {
    if (bias.value().size() != wv.dim(1)) throw ShapeError("linear: bias width mismatch");
    out.matrix().rowwise() += bias.value().matrix(1).row(0);
  }
  return x.tape->record(std::move(out), {x, weight, bias}, [x, weight, bias](Tape& t, const Tensor& g) {
    if (auto* gx = t.accumulator(x)) {
      gx->matrix(row_count(g)).noalias() += g.matrix() * weight.value().matrix().transpose();
    }
    if (auto* gw = t.accumulator(weight)) {
      gw->matrix().noalias() += x.value().matrix(row_count(g)).transpose() * g.matrix();
    }
    if (bias.valid()) {
      if (auto* gb = t.accumulator(bias)) gb->matrix(1).row(0) += g.matrix().colwise().sum();
    }
  });
}

Var layer_norm(Var x, Var gamma, Var beta, Real eps) {
  const Tensor& xv = x.value();
  const std::int64_t d = last_dim(xv);
  const std::int64_t rows = row_count(xv);
  if (gamma.value().size() != d || beta.value().size() != d) throw ShapeError("layer_norm: affine width mismatch");
  auto xhat = std::make_shared<Tensor>(xv.shape());
  auto inv_std = std::make_shared<Storage>(static_cast<std::size_t>(rows));
  Tensor out(xv.shape());
  auto xm = xv.matrix();
  auto hm = xhat->matrix();
  auto om = out.matrix();
  auto gm = gamma.value().matrix(1).row(0);
  auto bm = beta.value().matrix(1).row(0);
  for (std::int64_t r = 0; r < rows; ++r) {
    const Real mu = xm.row(r).mean();
    const Real var = (xm.row(r).array() - mu).square().mean();
    const Real is = Real(1) / std::sqrt(var + eps);
    (*inv_std)[static_cast<std::size_t>(r)] = is;
    hm.row(r) = (xm.row(r).array() - mu) * is;
    om.row(r) = hm.row(r).cwiseProduct(gm) + bm;
  }
  return x.tape->record(std::move(out), {x, gamma, beta}, [x, gamma, beta, xhat, inv_std](Tape& t, const Tensor& g) {
    auto gm = g.matrix();
    auto hm = xhat->matrix();
    if (auto* gg = t.accumulator(gamma)) gg->matrix(1).row(0) += gm.cwiseProduct(hm).colwise().sum();
    if (auto* gb = t.accumulator(beta)) gb->matrix(1).row(0) += gm.colwise().sum();
    if (auto* gx = t.accumulator(x)) {
      auto gxm = gx->matrix();
      auto gam = gamma.value().matrix(1).row(0);
      const std::int64_t rows = hm.rows();
      Eigen::Matrix<Real, 1, Eigen::Dynamic> dy(hm.cols());
      for (std::int64_t r = 0; r < rows; ++r) {
        dy = gm.row(r).cwiseProduct(gam);
        const Real m1 = dy.mean();
        const Real m2 = dy.cwiseProduct(hm.row(r)).mean();
        gxm.row(r) += (*inv_std)[static_cast<std::size_t>(r)] * (dy.array() - m1 - hm.row(r).array() * m2).matrix();
      }
    }
  });
}

Var l2_normalize_rows(Var x) {
  const Tensor& xv = x.value();
  const std::int64_t rows = row_count(xv);
  auto norms = std::make_shared<Storage>(static_cast<std::size_t>(rows));
  Tensor out(xv.shape());
  for (std::int64_t r = 0; r < rows; ++r) {
    const Real n = xv.matrix().row(r).norm();
    if (!(n > Real(0))) throw NonFiniteError("l2_normalize_rows: zero-norm row");
    (*norms)[static_cast<std::size_t>(r)] = n;
    out.matrix().row(r) = xv.matrix().row(r) / n;
  }
  Tensor y = out;
  return x.tape->record(std::move(out), {x}, [x, norms, y = std::move(y)](Tape& t, const Tensor& g) {
    if (auto* gx = t.accumulator(x)) {
      auto ym = y.matrix();
      auto gm = g.matrix();
      for (std::int64_t r = 0; r < ym.rows(); ++r) {
        const Real dot = ym.row(r).dot(gm.row(r));
        gx->matrix().row(r) += (gm.row(r) - dot * ym.row(r)) / (*norms)[static_cast<std::size_t>(r)];
      }
    }
  });
}

Var gather_rows(Var x, std::vector<std::int32_t> index) {
  const Tensor& xv = x.value();
  const std::int64_t cols = last_dim(xv);
  const std::int64_t rows = row_count(xv);
  Tensor out({static_cast<std::int64_t>(index.size()), cols});
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= rows) throw ShapeError("gather_rows: index out of range");
    std::copy_n(xv.data() + index[i] * cols, cols, out.data() + static_cast<std::int64_t>(i) * cols);
  }
  return x.tape->record(std::move(out), {x}, [x, index = std::move(index), cols](Tape& t, const Tensor& g) {
    if (auto* gx = t.accumulator(x)) {
      Real* dst = gx->data();
      const Real* src = g.data();
      for (std::size_t i = 0; i < index.size(); ++i) {
        Real* d = dst + index[i] * cols;
        const Real* s = src + static_cast<std::int64_t>(i) * cols;
        for (std::int64_t c = 0; c < cols; ++c) d[c] += s[c];
      }
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::int64_t cols = parts.front().cols();
  std::int64_t rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: width mismatch");
    rows += p.rows();
  }
  Tensor out({rows, cols});
  std::int64_t off = 0;
  for (const Var& p : parts) {
    std::copy_n(p.value().data(), p.value().size(), out.data() + off);
    off += p.value().size();
  }
  Tape* tape = parts.front().tape;
  bool needs = false;
  for (const Var& p : parts) needs = needs || tape->requires_grad(p);
  return tape->record(std::move(out), needs, [parts](Tape& t, const Tensor& g) {
    std::int64_t off = 0;
    for (const Var& p : parts) {
      const std::int64_t n = p.value().size();
      if (auto* gp = t.accumulator(p)) VecMap(gp->data(), n) += ConstVecMap(g.data() + off, n);
      off += n;
    }
  });
}

Var segment_mean_rows(Var x, std::vector<std::int64_t> offsets) {
  const Tensor& xv = x.value();
  const std::int64_t cols = last_dim(xv);
  const auto groups = static_cast<std::int64_t>(offsets.size()) - 1;
  if (groups < 1 || offsets.back() > row_count(xv)) throw ShapeError("segment_mean_rows: bad offsets");
  Tensor out({groups, cols});
  for (std::int64_t gi = 0; gi < groups; ++gi) {
    const std::int64_t b = offsets[static_cast<std::size_t>(gi)];
    const std::int64_t n = offsets[static_cast<std::size_t>(gi) + 1] - b;
    if (n <= 0) throw ShapeError("segment_mean_rows: empty segment");
    out.matrix().row(gi) = xv.matrix().middleRows(b, n).colwise().sum() / static_cast<Real>(n);
  }
  return x.tape->record(std::move(out), {x}, [x, offsets = std::move(offsets)](Tape& t, const Tensor& g) {
    if (auto* gx = t.accumulator(x)) {
      for (std::size_t gi = 0; gi + 1 < offsets.size(); ++gi) {
        const std::int64_t b = offsets[gi];
        const std::int64_t n = offsets[gi + 1] - b;
        gx->matrix().middleRows(b, n).rowwise() += g.matrix().row(static_cast<std::int64_t>(gi)) / static_cast<Real>(n);
      }
    }
  });
}

// ---------------------------------------------------------------- attention

Var attention(Var qkv, std::vector<RowRange> groups, int heads) {
  const Tensor& in = qkv.value();
  const std::int64_t width = last_dim(in);
  if (width % 3 != 0) throw ShapeError("attention: qkv width must be 3*D");
  const std::int64_t d = width / 3;
  if (heads <= 0 || d % heads != 0) throw ShapeError("attention: D not divisible by heads");
  const std::int64_t dh = d / heads;
  const std::int64_t rows = row_count(in);
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(dh));

  std::int64_t prob_size = 0;
  for (const auto& g : groups) {
    if (g.begin < 0 || g.length <= 0 || g.begin + g.length > rows) throw ShapeError("attention: bad group");
    prob_size += g.length * g.length * heads;
  }
  auto probs = std::make_shared<Storage>(static_cast<std::size_t>(prob_size));
  Tensor out({rows, d});
  std::int64_t poff = 0;
  for (const auto& g : groups) {
    const std::int64_t n = g.length;
    for (int h = 0; h < heads; ++h) {
      const Real* base = in.data() + g.begin * width + h * dh;
      ConstStridedMap q(base, n, dh, Eigen::OuterStride<>(width));
      ConstStridedMap k(base + d, n, dh, Eigen::OuterStride<>(width));
      ConstStridedMap v(base + 2 * d, n, dh, Eigen::OuterStride<>(width));
      MatMap p(probs->data() + poff, n, n);
      p.noalias() = scale * (q * k.transpose());
      for (std::int64_t r = 0; r < n; ++r) {
        const Real mx = p.row(r).maxCoeff();
        p.row(r) = (p.row(r).array() - mx).exp();
        p.row(r) /= p.row(r).sum();
      }
      StridedMap o(out.data() + g.begin * d + h * dh, n, dh, Eigen::OuterStride<>(d));
      o.noalias() = p * v;
      poff += n * n;
    }
  }
  return qkv.tape->record(
      std::move(out), {qkv}, [qkv, groups = std::move(groups), heads, probs, d, dh, width, scale](Tape& t, const Tensor& g) {
        Tensor* gq = t.accumulator(qkv);
        if (gq == nullptr) return;
        const Tensor& in = qkv.value();
        std::int64_t poff = 0;
        MatrixR dp, ds;
        for (const auto& grp : groups) {
          const std::int64_t n = grp.length;
          for (int h = 0; h < heads; ++h) {
            const Real* base = in.data() + grp.begin * width + h * dh;
            ConstStridedMap q(base, n, dh, Eigen::OuterStride<>(width));
            ConstStridedMap k(base + d, n, dh, Eigen::OuterStride<>(width));
            ConstStridedMap v(base + 2 * d, n, dh, Eigen::OuterStride<>(width));
            ConstMatMap p(probs->data() + poff, n, n);
            ConstStridedMap go(g.data() + grp.begin * d + h * dh, n, dh, Eigen::OuterStride<>(d));
            Real* gbase = gq->data() + grp.begin * width + h * dh;
            StridedMap gqm(gbase, n, dh, Eigen::OuterStride<>(width));
            StridedMap gkm(gbase + d, n, dh, Eigen::OuterStride<>(width));
            StridedMap gvm(gbase + 2 * d, n, dh, Eigen::OuterStride<>(width));
            gvm.noalias() += p.transpose() * go;
            dp.noalias() = go * v.transpose();
            ds = p.array() * (dp.array().colwise() - (dp.array() * p.array()).rowwise().sum());
            gqm.noalias() += scale * (ds * k);
            gkm.noalias() += scale * (ds.transpose() * q);
            poff += n * n;
          }
        }
      });
}

// ---------------------------------------------------------------- rope

void rope_rows(Real* data, std::int64_t rows, std::int64_t cols, const std::vector<std::int32_t>& positions,
               double base, bool inverse) {
  if (cols % 2 != 0) throw ShapeError("rope: embedding width must be even");
  if (static_cast<std::int64_t>(positions.size()) != rows) throw ShapeError("rope: one position per row required");
  const std::int64_t half = cols / 2;
  std::vector<double> freq(static_cast<std::size_t>(half));
  for (std::int64_t k = 0; k < half; ++k) {
    freq[static_cast<std::size_t>(k)] = std::pow(base, -2.0 * static_cast<double>(k) / static_cast<double>(cols));
  }
  std::int32_t max_pos = 0;
  for (auto p : positions) max_pos = std::max(max_pos, std::abs(p));
  // cos/sin table indexed by (|position|, pair)
  std::vector<Real> cs(static_cast<std::size_t>((max_pos + 1) * half)), sn(cs.size());
  for (std::int32_t p = 0; p <= max_pos; ++p) {
    for (std::int64_t k = 0; k < half; ++k) {
      const double a = static_cast<double>(p) * freq[static_cast<std::size_t>(k)];
      cs[static_cast<std::size_t>(p * half + k)] = static_cast<Real>(std::cos(a));
      sn[static_cast<std::size_t>(p * half + k)] = static_cast<Real>(std::sin(a));
    }
  }
  for (std::int64_t r = 0; r < rows; ++r) {
    const std::int32_t p = positions[static_cast<std::size_t>(r)];
    const Real sign = ((p < 0) != inverse) ? Real(-1) : Real(1);
    const Real* c = cs.data() + std::abs(p) * half;
    const Real* s = sn.data() + std::abs(p) * half;
    Real* x = data + r * cols;
    for (std::int64_t k = 0; k < half; ++k) {
      const Real x0 = x[2 * k];
      const Real x1 = x[2 * k + 1];
      const Real sk = sign * s[k];
      x[2 * k] = x0 * c[k] - x1 * sk;
      x[2 * k + 1] = x0 * sk + x1 * c[k];
    }
  }
}

Var rope(Var x, std::vector<std::int32_t> positions, double base) {
  Tensor out = x.value();
  const std::int64_t cols = last_dim(out);
  rope_rows(out.data(), row_count(out), cols, positions, base, false);
  return x.tape->record(std::move(out), {x}, [x, positions = std::move(positions), base, cols](Tape& t, const Tensor& g) {
    if (auto* gx = t.accumulator(x)) {
      Tensor back = g;
      rope_rows(back.data(), row_count(back), cols, positions, base, true);
      VecMap(gx->data(), gx->size()) += ConstVecMap(back.data(), back.size());
    }
  });
}

// ---------------------------------------------------------------- reductions

Var sum(Var x) {
  const Real s = ConstVecMap(x.value().data(), x.value().size()).sum();
  return x.tape->record(Tensor::scalar(s), {x}, [x](Tape& t, const Tensor& g) {
    if (auto* gx = t.accumulator(x)) VecMap(gx->data(), gx->size()).array() += g[0];
  });
}

Var mean(Var x) {
  const auto n = static_cast<Real>(x.value().size());
  const Real s = ConstVecMap(x.value().data(), x.value().size()).sum() / n;
  return x.tape->record(Tensor::scalar(s), {x}, [x, n](Tape& t, const Tensor& g) {
    if (auto* gx = t.accumulator(x)) VecMap(gx->data(), gx->size()).array() += g[0] / n;
  });
}

Var mse(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mse");
  const std::int64_t n = a.value().size();
  auto diff = std::make_shared<Tensor>(a.value());
  VecMap(diff->data(), n) -= ConstVecMap(b.value().data(), n);
  const Real loss = ConstVecMap(diff->data(), n).squaredNorm() / static_cast<Real>(n);
  return a.tape->record(Tensor::scalar(loss), {a, b}, [a, b, diff, n](Tape& t, const Tensor& g) {
    const Real k = Real(2) * g[0] / static_cast<Real>(n);
    if (auto* ga = t.accumulator(a)) VecMap(ga->data(), n) += k * ConstVecMap(diff->data(), n);
    if (auto* gb = t.accumulator(b)) VecMap(gb->data(), n) -= k * ConstVecMap(diff->data(), n);
  });
}

Var cross_entropy(Var logits, const std::vector<std::int32_t>& labels) {
  const Tensor& lv = logits.value();
  if (lv.rank() != 2) throw ShapeError("cross_entropy: logits must be B x K");
  const std::int64_t b = lv.dim(0);
  const std::int64_t k = lv.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != b) throw ShapeError("cross_entropy: label count mismatch");
  auto probs = std::make_shared<Tensor>(lv.shape());
  Real loss = 0;
  for (std::int64_t i = 0; i < b; ++i) {
    const std::int32_t y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) throw std::out_of_range("cross_entropy: label out of range");
    const Real mx = lv.matrix().row(i).maxCoeff();
    probs->matrix().row(i) = (lv.matrix().row(i).array() - mx).exp();
    const Real z = probs->matrix().row(i).sum();
    probs->matrix().row(i) /= z;
    loss += std::log(z) + mx - lv.at(i, y);
  }
  loss /= static_cast<Real>(b);
  return logits.tape->record(Tensor::scalar(loss), {logits}, [logits, probs, labels, b](Tape& t, const Tensor& g) {
    if (auto* gl = t.accumulator(logits)) {
      const Real s = g[0] / static_cast<Real>(b);
      gl->matrix() += s * probs->matrix();
      for (std::int64_t i = 0; i < b; ++i) gl->at(i, labels[static_cast<std::size_t>(i)]) -= s;
    }
  });
}

Var log_softmax(Var x) {
  const Tensor& xv = x.value();
  const std::int64_t rows = row_count(xv);
  auto probs = std::make_shared<Tensor>(xv.shape());
  Tensor out(xv.shape());
  for (std::int64_t i = 0; i < rows; ++i) {
    const Real mx = xv.matrix().row(i).maxCoeff();
    probs->matrix().row(i) = (xv.matrix().row(i).array() - mx).exp();
    const Real z = probs->matrix().row(i).sum();
    probs->matrix().row(i) /= z;
    out.matrix().row(i) = xv.matrix().row(i).array() - (mx + std::log(z));
  }
  return x.tape->record(std::move(out), {x}, [x, probs, rows](Tape& t, const Tensor& g) {
    if (auto* gx = t.accumulator(x)) {
      for (std::int64_t i = 0; i < rows; ++i) {
        gx->matrix().row(i) += g.matrix().row(i) - g.matrix().row(i).sum() * probs->matrix().row(i);
      }
    }
  });
}

// ---------------------------------------------------------------- signal ops

Var channel_mix(Var x, Var weights) {
  const Tensor& xv = x.value();
  const Tensor& wv = weights.value();
  if (xv.rank() != 3 || wv.rank() != 2 || wv.dim(1) != xv.dim(1)) {
    throw ShapeError("channel_mix: input " + shape_string(xv.shape()) + " vs weights " + shape_string(wv.shape()));
  }
  const std::int64_t b = xv.dim(0), cin = xv.dim(1), tl = xv.dim(2), cout = wv.dim(0);
  Tensor out({b, cout, tl});
  for (std::int64_t i = 0; i < b; ++i) {
    MatMap(out.data() + i * cout * tl, cout, tl).noalias() = wv.matrix() * ConstMatMap(xv.data() + i * cin * tl, cin, tl);
  }
  return x.tape->record(std::move(out), {x, weights}, [x, weights, b, cin, cout, tl](Tape& t, const Tensor& g) {
    auto* gx = t.accumulator(x);
    auto* gw = t.accumulator(weights);
    for (std::int64_t i = 0; i < b; ++i) {
      ConstMatMap go(g.data() + i * cout * tl, cout, tl);
      if (gx) MatMap(gx->data() + i * cin * tl, cin, tl).noalias() += weights.value().matrix().transpose() * go;
      if (gw) gw->matrix().noalias() += go * ConstMatMap(x.value().data() + i * cin * tl, cin, tl).transpose();
    }
  });
}

Var depthwise_conv1d(Var x, Var kernels) {
  const Tensor& xv = x.value();
  const Tensor& kv = kernels.value();
  if (xv.rank() != 3 || kv.rank() != 2 || kv.dim(0) != xv.dim(1)) {
    throw ShapeError("depthwise_conv1d: input " + shape_string(xv.shape()) + " vs kernels " + shape_string(kv.shape()));
  }
  const std::int64_t b = xv.dim(0), c = xv.dim(1), tl = xv.dim(2), ks = kv.dim(1);
  if (ks % 2 == 0) throw ShapeError("depthwise_conv1d: kernel size must be odd");
  if (ks > tl) throw ShapeError("depthwise_conv1d: kernel longer than signal");
  const std::int64_t half = ks / 2;
  Tensor out({b, c, tl});
  for (std::int64_t i = 0; i < b; ++i) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const Real* xs = xv.data() + (i * c + ch) * tl;
      const Real* w = kv.data() + ch * ks;
      Real* o = out.data() + (i * c + ch) * tl;
      for (std::int64_t k = 0; k < ks; ++k) {
        const std::int64_t shift = k - half;
        const std::int64_t t0 = std::max<std::int64_t>(0, -shift);
        const std::int64_t t1 = std::min<std::int64_t>(tl, tl - shift);
        const Real wk = w[k];
        for (std::int64_t tt = t0; tt < t1; ++tt) o[tt] += wk * xs[tt + shift];
      }
    }
  }
  return x.tape->record(std::move(out), {x, kernels}, [x, kernels, b, c, tl, ks, half](Tape& t, const Tensor& g) {
    auto* gx = t.accumulator(x);
    auto* gk = t.accumulator(kernels);
    for (std::int64_t i = 0; i < b; ++i) {
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const Real* go = g.data() + (i * c + ch) * tl;
        const Real* xs = x.value().data() + (i * c + ch) * tl;
        const Real* w = kernels.value().data() + ch * ks;
        for (std::int64_t k = 0; k < ks; ++k) {
          const std::int64_t shift = k - half;
          const std::int64_t t0 = std::max<std::int64_t>(0, -shift);
          const std::int64_t t1 = std::min<std::int64_t>(tl, tl - shift);
          if (gx) {
            Real* dx = gx->data() + (i * c + ch) * tl;
            const Real wk = w[k];
            for (std::int64_t tt = t0; tt < t1; ++tt) dx[tt + shift] += wk * go[tt];
          }
          if (gk) {
            Real acc = 0;
            for (std::int64_t tt = t0; tt < t1; ++tt) acc += go[tt] * xs[tt + shift];
            (*gk)[ch * ks + k] += acc;
          }
        }
      }
    }
  });
}

Var dropout(Var x, Real rate, Rng& rng) {
  if (rate < Real(0) || rate >= Real(1)) throw std::invalid_argument("dropout rate must be in [0, 1)");
  if (rate == Real(0)) return x;
  const Real keep_scale = Real(1) / (Real(1) - rate);
  auto keep = std::make_shared<Tensor>(x.value().shape());
  for (std::int64_t i = 0; i < keep->size(); ++i) {
    (*keep)[i] = rng.uniform() >= static_cast<double>(rate) ? keep_scale : Real(0);
  }
  Tensor out = x.value();
  out.matrix().array() *= keep->matrix().array();
  return x.tape->record(std::move(out), {x}, [x, keep](Tape& t, const Tensor& g) {
    if (auto* gx = t.accumulator(x)) gx->matrix().array() += g.matrix().array() * keep->matrix().array();
  });
}

}  // namespace dare::ad
