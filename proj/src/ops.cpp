#include "slt/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace slt {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using CMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MMap = Eigen::Map<RowMat<T>>;

template <typename T>
CMap<T> as_mat(const Tensor<T>& t) {
  return CMap<T>(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
template <typename T>
MMap<T> as_mat(Tensor<T>& t) {
  return MMap<T>(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

Shape with_last(Shape s, std::size_t last) {
  if (s.empty()) s.push_back(last);
  else s.back() = last;
  return s;
}

void require_same(const char* op, const Shape& a, const Shape& b) {
  if (a != b) shape_fail(op, a, b);
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (b.rank() != 2 || a.cols() != b.dim(0)) shape_fail("matmul", a.shape(), b.shape());
  Tensor<T> out(with_last(a.rank() ? a.shape() : Shape{1}, b.cols()));
  as_mat(out).noalias() = as_mat(a) * as_mat(b);
  return out;
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.cols() != b.cols()) shape_fail("matmul_nt", a.shape(), b.shape());
  Tensor<T> out(Shape{a.rows(), b.rows()});
  as_mat(out).noalias() = as_mat(a) * as_mat(b).transpose();
  return out;
}

namespace ops {

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  Graph<T>& g = *a.graph;
  Tensor<T> out = slt::matmul(a.value(), b.value());
  return g.record(OpKind::MatMul, {a.id, b.id}, std::move(out), [a, b](Graph<T>& g, const Tensor<T>& go) {
    if (g.requires_grad(a.id)) as_mat(g.grad_buffer(a.id)).noalias() += as_mat(go) * as_mat(g.value(b.id)).transpose();
    if (g.requires_grad(b.id)) as_mat(g.grad_buffer(b.id)).noalias() += as_mat(g.value(a.id)).transpose() * as_mat(go);
  });
}

template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  Graph<T>& g = *a.graph;
  Tensor<T> out = slt::matmul_nt(a.value(), b.value());
  return g.record(OpKind::MatMulNT, {a.id, b.id}, std::move(out), [a, b](Graph<T>& g, const Tensor<T>& go) {
    if (g.requires_grad(a.id)) as_mat(g.grad_buffer(a.id)).noalias() += as_mat(go) * as_mat(g.value(b.id));
    if (g.requires_grad(b.id)) as_mat(g.grad_buffer(b.id)).noalias() += as_mat(go).transpose() * as_mat(g.value(a.id));
  });
}

template <typename T>
Var<T> transpose(Var<T> a) {
  const Tensor<T>& av = a.value();
  if (av.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + shape_str(av.shape()));
  Tensor<T> out(Shape{av.cols(), av.rows()});
  as_mat(out) = as_mat(av).transpose();
  return a.graph->record(OpKind::Transpose, {a.id}, std::move(out), [a](Graph<T>& g, const Tensor<T>& go) {
    as_mat(g.grad_buffer(a.id)) += as_mat(go).transpose();
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same("add", a.shape(), b.shape());
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
  return a.graph->record(OpKind::Add, {a.id, b.id}, std::move(out), [a, b](Graph<T>& g, const Tensor<T>& go) {
    for (int id : {a.id, b.id}) {
      if (!g.requires_grad(id)) continue;
      Tensor<T>& gi = g.grad_buffer(id);
      for (std::size_t i = 0; i < go.numel(); ++i) gi[i] += go[i];
    }
  });
}

template <typename T>
Var<T> add_row(Var<T> a, Var<T> bias) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = bias.value();
  if (bv.numel() != av.cols()) shape_fail("add_row", av.shape(), bv.shape());
  Tensor<T> out = av;
  const std::size_t c = av.cols();
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] += bv[j];
  return a.graph->record(OpKind::AddRowBroadcast, {a.id, bias.id}, std::move(out),
                         [a, bias](Graph<T>& g, const Tensor<T>& go) {
                           if (g.requires_grad(a.id)) {
                             Tensor<T>& ga = g.grad_buffer(a.id);
                             for (std::size_t i = 0; i < go.numel(); ++i) ga[i] += go[i];
                           }
                           if (g.requires_grad(bias.id)) {
                             Tensor<T>& gb = g.grad_buffer(bias.id);
                             const std::size_t c = go.cols();
                             for (std::size_t r = 0; r < go.rows(); ++r)
                               for (std::size_t j = 0; j < c; ++j) gb[j] += go[r * c + j];
                           }
                         });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same("sub", a.shape(), b.shape());
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= bv[i];
  return a.graph->record(OpKind::Sub, {a.id, b.id}, std::move(out), [a, b](Graph<T>& g, const Tensor<T>& go) {
    if (g.requires_grad(a.id)) {
      Tensor<T>& ga = g.grad_buffer(a.id);
      for (std::size_t i = 0; i < go.numel(); ++i) ga[i] += go[i];
    }
    if (g.requires_grad(b.id)) {
      Tensor<T>& gb = g.grad_buffer(b.id);
      for (std::size_t i = 0; i < go.numel(); ++i) gb[i] -= go[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same("mul", a.shape(), b.shape());
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
  return a.graph->record(OpKind::Mul, {a.id, b.id}, std::move(out), [a, b](Graph<T>& g, const Tensor<T>& go) {
    const Tensor<T>& av = g.value(a.id);
    const Tensor<T>& bv = g.value(b.id);
    if (g.requires_grad(a.id)) {
      Tensor<T>& ga = g.grad_buffer(a.id);
      for (std::size_t i = 0; i < go.numel(); ++i) ga[i] += go[i] * bv[i];
    }
    if (g.requires_grad(b.id)) {
      Tensor<T>& gb = g.grad_buffer(b.id);
      for (std::size_t i = 0; i < go.numel(); ++i) gb[i] += go[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v *= s;
  return a.graph->record(OpKind::Scale, {a.id}, std::move(out), [a, s](Graph<T>& g, const Tensor<T>& go) {
    Tensor<T>& ga = g.grad_buffer(a.id);
    for (std::size_t i = 0; i < go.numel(); ++i) ga[i] += s * go[i];
  });
}

template <typename T>
Var<T> softmax_rows(Var<T> a) {
  const Tensor<T>& av = a.value();
  Tensor<T> out(av.shape());
  const std::size_t c = av.cols();
  for (std::size_t r = 0; r < av.rows(); ++r) {
    auto x = av.row(r);
    auto y = out.row(r);
    const T mx = *std::max_element(x.begin(), x.end());
    T z = 0;
    for (std::size_t j = 0; j < c; ++j) z += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < c; ++j) y[j] /= z;
  }
  Tensor<T> saved = out;
  return a.graph->record(OpKind::Softmax, {a.id}, std::move(out), [a, y = std::move(saved)](Graph<T>& g, const Tensor<T>& go) {
    Tensor<T>& ga = g.grad_buffer(a.id);
    const std::size_t c = go.cols();
    for (std::size_t r = 0; r < go.rows(); ++r) {
      T dot = 0;
      for (std::size_t j = 0; j < c; ++j) dot += go[r * c + j] * y[r * c + j];
      for (std::size_t j = 0; j < c; ++j) ga[r * c + j] += y[r * c + j] * (go[r * c + j] - dot);
    }
  });
}

template <typename T>
Var<T> log_softmax_rows(Var<T> a) {
  const Tensor<T>& av = a.value();
  Tensor<T> out(av.shape());
  const std::size_t c = av.cols();
  for (std::size_t r = 0; r < av.rows(); ++r) {
    auto x = av.row(r);
    auto y = out.row(r);
    const T mx = *std::max_element(x.begin(), x.end());
    T z = 0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(x[j] - mx);
    const T lz = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) y[j] = x[j] - lz;
  }
  Tensor<T> probs(av.shape());
  for (std::size_t i = 0; i < probs.numel(); ++i) probs[i] = std::exp(out[i]);
  return a.graph->record(OpKind::LogSoftmax, {a.id}, std::move(out),
                         [a, probs = std::move(probs)](Graph<T>& g, const Tensor<T>& go) {
                           Tensor<T>& ga = g.grad_buffer(a.id);
                           const std::size_t c = go.cols();
                           for (std::size_t r = 0; r < go.rows(); ++r) {
                             T s = 0;
                             for (std::size_t j = 0; j < c; ++j) s += go[r * c + j];
                             for (std::size_t j = 0; j < c; ++j) ga[r * c + j] += go[r * c + j] - probs[r * c + j] * s;
                           }
                         });
}

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps) {
  const Tensor<T>& xv = x.value();
  const std::size_t c = xv.cols();
  if (gain.value().numel() != c || bias.value().numel() != c) shape_fail("layer_norm", xv.shape(), gain.shape());
  const Tensor<T>& gv = gain.value();
  const Tensor<T>& bv = bias.value();
  Tensor<T> out(xv.shape());
  Tensor<T> xhat(xv.shape());
  std::vector<T> rstd(xv.rows());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    auto xr = xv.row(r);
    T mean = 0;
    for (T v : xr) mean += v;
    mean /= static_cast<T>(c);
    T var = 0;
    for (T v : xr) var += (v - mean) * (v - mean);
    var /= static_cast<T>(c);
    rstd[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[r * c + j] = (xr[j] - mean) * rstd[r];
      out[r * c + j] = xhat[r * c + j] * gv[j] + bv[j];
    }
  }
  return x.graph->record(
      OpKind::LayerNorm, {x.id, gain.id, bias.id}, std::move(out),
      [x, gain, bias, xhat = std::move(xhat), rstd = std::move(rstd)](Graph<T>& g, const Tensor<T>& go) {
        const std::size_t c = go.cols();
        const Tensor<T>& gv = g.value(gain.id);
        if (g.requires_grad(gain.id) || g.requires_grad(bias.id)) {
          Tensor<T>* gg = g.requires_grad(gain.id) ? &g.grad_buffer(gain.id) : nullptr;
          Tensor<T>* gb = g.requires_grad(bias.id) ? &g.grad_buffer(bias.id) : nullptr;
          for (std::size_t r = 0; r < go.rows(); ++r)
            for (std::size_t j = 0; j < c; ++j) {
              if (gg) (*gg)[j] += go[r * c + j] * xhat[r * c + j];
              if (gb) (*gb)[j] += go[r * c + j];
            }
        }
        if (!g.requires_grad(x.id)) return;
        Tensor<T>& gx = g.grad_buffer(x.id);
        std::vector<T> dxhat(c);
        for (std::size_t r = 0; r < go.rows(); ++r) {
          T m1 = 0, m2 = 0;
          for (std::size_t j = 0; j < c; ++j) {
            dxhat[j] = go[r * c + j] * gv[j];
            m1 += dxhat[j];
            m2 += dxhat[j] * xhat[r * c + j];
          }
          m1 /= static_cast<T>(c);
          m2 /= static_cast<T>(c);
          for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += rstd[r] * (dxhat[j] - m1 - xhat[r * c + j] * m2);
        }
      });
}

template <typename T>
Var<T> relu(Var<T> x) {
  Tensor<T> out = x.value();
  for (auto& v : out.values()) v = v > T(0) ? v : T(0);
  return x.graph->record(OpKind::Relu, {x.id}, std::move(out), [x](Graph<T>& g, const Tensor<T>& go) {
    const Tensor<T>& xv = g.value(x.id);
    Tensor<T>& gx = g.grad_buffer(x.id);
    for (std::size_t i = 0; i < go.numel(); ++i)
      if (xv[i] > T(0)) gx[i] += go[i];
  });
}

template <typename T>
Var<T> conv1d_valid(Var<T> x, Var<T> weight, Var<T> bias, std::size_t kernel) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = weight.value();
  if (xv.rank() != 3 || wv.rank() != 2 || wv.dim(0) != kernel * xv.dim(2) || bias.value().numel() != wv.dim(1) ||
      xv.dim(1) < kernel) {
    throw ShapeError("conv1d_valid: input " + shape_str(xv.shape()) + ", weight " + shape_str(wv.shape()) +
                     ", bias " + shape_str(bias.shape()) + ", kernel " + std::to_string(kernel));
  }
  const std::size_t batch = xv.dim(0), n = xv.dim(1), cin = xv.dim(2), cout = wv.dim(1);
  const std::size_t nout = n - kernel + 1;
  const std::size_t width = kernel * cin;
  // Row (b, t) of the unfolded input is the contiguous slab x[b, t:t+k, :].
  Tensor<T> cols(Shape{batch * nout, width});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < nout; ++t)
      std::copy_n(xv.data() + (b * n + t) * cin, width, cols.data() + (b * nout + t) * width);
  Tensor<T> out(Shape{batch, nout, cout});
  auto om = as_mat(out);
  om.noalias() = as_mat(cols) * as_mat(wv);
  om.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.value().data(), cout);
  return x.graph->record(
      OpKind::Conv1d, {x.id, weight.id, bias.id}, std::move(out),
      [x, weight, bias, cols = std::move(cols), batch, n, cin, nout, width](Graph<T>& g, const Tensor<T>& go) {
        auto gm = as_mat(go);
        if (g.requires_grad(weight.id)) as_mat(g.grad_buffer(weight.id)).noalias() += as_mat(cols).transpose() * gm;
        if (g.requires_grad(bias.id)) {
          // Plain loop: Eigen's vectorized reductions pick a summation order
          // from the buffer's alignment, which would make runs irreproducible.
          Tensor<T>& gb = g.grad_buffer(bias.id);
          const std::size_t cout = gb.numel();
          for (std::size_t r = 0; r < batch * nout; ++r)
            for (std::size_t c = 0; c < cout; ++c) gb[c] += go[r * cout + c];
        }
        if (g.requires_grad(x.id)) {
          Tensor<T> gcols(Shape{batch * nout, width});
          as_mat(gcols).noalias() = gm * as_mat(g.value(weight.id)).transpose();
          Tensor<T>& gx = g.grad_buffer(x.id);
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t t = 0; t < nout; ++t) {
              const T* src = gcols.data() + (b * nout + t) * width;
              T* dst = gx.data() + (b * n + t) * cin;
              for (std::size_t i = 0; i < width; ++i) dst[i] += src[i];
            }
        }
      });
}

template <typename T>
Var<T> max_over_axis1(Var<T> x) {
  const Tensor<T>& xv = x.value();
  if (xv.rank() != 3 || xv.dim(1) == 0) throw ShapeError("max_over_axis1: expected (B, n>0, c), got " + shape_str(xv.shape()));
  const std::size_t batch = xv.dim(0), n = xv.dim(1), c = xv.dim(2);
  Tensor<T> out(Shape{batch, c});
  std::vector<std::uint32_t> arg(batch * c, 0);
  for (std::size_t b = 0; b < batch; ++b) {
    const T* base = xv.data() + b * n * c;
    for (std::size_t j = 0; j < c; ++j) out[b * c + j] = base[j];
    for (std::size_t t = 1; t < n; ++t)
      for (std::size_t j = 0; j < c; ++j)
        if (base[t * c + j] > out[b * c + j]) {
          out[b * c + j] = base[t * c + j];
          arg[b * c + j] = static_cast<std::uint32_t>(t);
        }
  }
  return x.graph->record(OpKind::MaxAxis, {x.id}, std::move(out),
                         [x, arg = std::move(arg), n, c](Graph<T>& g, const Tensor<T>& go) {
                           Tensor<T>& gx = g.grad_buffer(x.id);
                           for (std::size_t k = 0; k < arg.size(); ++k) {
                             const std::size_t b = k / c, j = k % c;
                             gx[(b * n + arg[k]) * c + j] += go[k];
                           }
                         });
}

template <typename T>
Var<T> gather_rows(Var<T> table, std::span<const int> idx) {
  const Tensor<T>& tv = table.value();
  const std::size_t c = tv.cols(), rows = tv.rows();
  Tensor<T> out(Shape{idx.size(), c});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= rows) {
      throw ShapeError("gather_rows: index " + std::to_string(idx[i]) + " outside table " + shape_str(tv.shape()));
    }
    std::copy_n(tv.data() + idx[i] * c, c, out.data() + i * c);
  }
  return table.graph->record(OpKind::GatherRows, {table.id}, std::move(out),
                             [table, ix = std::vector<int>(idx.begin(), idx.end())](Graph<T>& g, const Tensor<T>& go) {
                               Tensor<T>& gt = g.grad_buffer(table.id);
                               const std::size_t c = go.cols();
                               for (std::size_t i = 0; i < ix.size(); ++i) {
                                 T* dst = gt.data() + ix[i] * c;
                                 const T* src = go.data() + i * c;
                                 for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
                               }
                             });
}

template <typename T>
Var<T> gather_elements(Var<T> x, std::span<const int> rows, std::span<const int> cols, Shape shape) {
  const Tensor<T>& xv = x.value();
  if (rows.size() != cols.size() || shape_numel(shape) != rows.size()) {
    throw ShapeError("gather_elements: " + std::to_string(rows.size()) + " rows, " + std::to_string(cols.size()) +
                     " cols for output " + shape_str(shape));
  }
  std::vector<std::size_t> flat(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] < 0 || cols[k] < 0 || static_cast<std::size_t>(rows[k]) >= xv.rows() ||
        static_cast<std::size_t>(cols[k]) >= xv.cols()) {
      throw ShapeError("gather_elements: (" + std::to_string(rows[k]) + ", " + std::to_string(cols[k]) +
                       ") outside " + shape_str(xv.shape()));
    }
    flat[k] = static_cast<std::size_t>(rows[k]) * xv.cols() + static_cast<std::size_t>(cols[k]);
  }
  Tensor<T> out(std::move(shape));
  for (std::size_t k = 0; k < flat.size(); ++k) out[k] = xv[flat[k]];
  return x.graph->record(OpKind::GatherElements, {x.id}, std::move(out),
                         [x, flat = std::move(flat)](Graph<T>& g, const Tensor<T>& go) {
                           Tensor<T>& gx = g.grad_buffer(x.id);
                           for (std::size_t k = 0; k < flat.size(); ++k) gx[flat[k]] += go[k];
                         });
}

template <typename T>
Var<T> masked_fill(Var<T> x, std::span<const std::uint8_t> mask, T value) {
  const Tensor<T>& xv = x.value();
  if (mask.size() != xv.numel()) {
    throw ShapeError("masked_fill: mask of " + std::to_string(mask.size()) + " entries for " + shape_str(xv.shape()));
  }
  Tensor<T> out = xv;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) out[i] = value;
  return x.graph->record(OpKind::MaskedFill, {x.id}, std::move(out),
                         [x, m = std::vector<std::uint8_t>(mask.begin(), mask.end())](Graph<T>& g, const Tensor<T>& go) {
                           Tensor<T>& gx = g.grad_buffer(x.id);
                           for (std::size_t i = 0; i < m.size(); ++i)
                             if (!m[i]) gx[i] += go[i];
                         });
}

template <typename T>
Var<T> nll_loss(Var<T> logp, std::span<const int> targets, int ignore_index) {
  const Tensor<T>& lv = logp.value();
  if (targets.size() != lv.rows()) {
    throw ShapeError("nll_loss: " + std::to_string(targets.size()) + " targets for " + shape_str(lv.shape()));
  }
  T total = 0;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    if (targets[r] == ignore_index) continue;
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= lv.cols()) {
      throw ShapeError("nll_loss: target " + std::to_string(targets[r]) + " outside " + shape_str(lv.shape()));
    }
    total -= lv(r, static_cast<std::size_t>(targets[r]));
  }
  return logp.graph->record(
      OpKind::NllLoss, {logp.id}, Tensor<T>::scalar(total),
      [logp, tg = std::vector<int>(targets.begin(), targets.end()), ignore_index](Graph<T>& g, const Tensor<T>& go) {
        Tensor<T>& gl = g.grad_buffer(logp.id);
        const std::size_t c = gl.cols();
        for (std::size_t r = 0; r < tg.size(); ++r)
          if (tg[r] != ignore_index) gl[r * c + static_cast<std::size_t>(tg[r])] -= go[0];
      });
}

template <typename T>
Var<T> sum(Var<T> x) {
  T s = 0;
  for (T v : x.value().values()) s += v;
  return x.graph->record(OpKind::Sum, {x.id}, Tensor<T>::scalar(s), [x](Graph<T>& g, const Tensor<T>& go) {
    for (auto& v : g.grad_buffer(x.id).values()) v += go[0];
  });
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return x.graph->record(OpKind::Reshape, {x.id}, std::move(out), [x](Graph<T>& g, const Tensor<T>& go) {
    Tensor<T>& gx = g.grad_buffer(x.id);
    for (std::size_t i = 0; i < go.numel(); ++i) gx[i] += go[i];
  });
}

template <typename T>
Var<T> slice_cols(Var<T> x, std::size_t start, std::size_t len) {
  const Tensor<T>& xv = x.value();
  const std::size_t c = xv.cols();
  if (start + len > c) {
    throw ShapeError("slice_cols: [" + std::to_string(start) + ", " + std::to_string(start + len) + ") outside " +
                     shape_str(xv.shape()));
  }
  Tensor<T> out(with_last(xv.shape(), len));
  for (std::size_t r = 0; r < xv.rows(); ++r) std::copy_n(xv.data() + r * c + start, len, out.data() + r * len);
  return x.graph->record(OpKind::SliceCols, {x.id}, std::move(out), [x, start, len](Graph<T>& g, const Tensor<T>& go) {
    Tensor<T>& gx = g.grad_buffer(x.id);
    const std::size_t c = gx.cols();
    for (std::size_t r = 0; r < go.rows(); ++r)
      for (std::size_t j = 0; j < len; ++j) gx[r * c + start + j] += go[r * len + j];
  });
}

template <typename T>
Var<T> concat_cols(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts[0].value().rows();
  std::size_t total = 0;
  std::vector<int> ids;
  std::vector<std::size_t> widths;
  for (const Var<T>& p : parts) {
    if (p.value().rows() != rows) shape_fail("concat_cols", parts[0].shape(), p.shape());
    total += p.value().cols();
    ids.push_back(p.id);
    widths.push_back(p.value().cols());
  }
  Tensor<T> out(with_last(parts[0].shape(), total));
  std::size_t off = 0;
  for (const Var<T>& p : parts) {
    const Tensor<T>& pv = p.value();
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(pv.data() + r * pv.cols(), pv.cols(), out.data() + r * total + off);
    off += pv.cols();
  }
  return parts[0].graph->record(OpKind::ConcatCols, ids, std::move(out),
                                [ids, widths, total](Graph<T>& g, const Tensor<T>& go) {
                                  std::size_t off = 0;
                                  for (std::size_t k = 0; k < ids.size(); ++k) {
                                    if (g.requires_grad(ids[k])) {
                                      Tensor<T>& gp = g.grad_buffer(ids[k]);
                                      const std::size_t w = widths[k];
                                      for (std::size_t r = 0; r < go.rows(); ++r)
                                        for (std::size_t j = 0; j < w; ++j) gp[r * w + j] += go[r * total + off + j];
                                    }
                                    off += widths[k];
                                  }
                                });
}

template <typename T>
Var<T> dropout(Var<T> x, T p, std::mt19937_64& rng) {
  if (p <= T(0)) return x;
  if (p >= T(1)) throw std::invalid_argument("dropout: rate must be < 1");
  const Tensor<T>& xv = x.value();
  Tensor<T> keep(xv.shape());
  const T s = T(1) / (T(1) - p);
  for (auto& k : keep.values()) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    k = u >= static_cast<double>(p) ? s : T(0);
  }
  Tensor<T> out = xv;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= keep[i];
  return x.graph->record(OpKind::Dropout, {x.id}, std::move(out), [x, keep = std::move(keep)](Graph<T>& g, const Tensor<T>& go) {
    Tensor<T>& gx = g.grad_buffer(x.id);
    for (std::size_t i = 0; i < go.numel(); ++i) gx[i] += go[i] * keep[i];
  });
}

}  // namespace ops

#define SLT_INSTANTIATE_OPS(T)                                                                           \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> matmul_nt(const Tensor<T>&, const Tensor<T>&);                                      \
  namespace ops {                                                                                        \
  template Var<T> matmul(Var<T>, Var<T>);                                                                \
  template Var<T> matmul_nt(Var<T>, Var<T>);                                                             \
  template Var<T> transpose(Var<T>);                                                                     \
  template Var<T> add(Var<T>, Var<T>);                                                                   \
  template Var<T> add_row(Var<T>, Var<T>);                                                               \
  template Var<T> sub(Var<T>, Var<T>);                                                                   \
  template Var<T> mul(Var<T>, Var<T>);                                                                   \
  template Var<T> scale(Var<T>, T);                                                                      \
  template Var<T> softmax_rows(Var<T>);                                                                  \
  template Var<T> log_softmax_rows(Var<T>);                                                              \
  template Var<T> layer_norm(Var<T>, Var<T>, Var<T>, T);                                                 \
  template Var<T> relu(Var<T>);                                                                          \
  template Var<T> conv1d_valid(Var<T>, Var<T>, Var<T>, std::size_t);                                     \
  template Var<T> max_over_axis1(Var<T>);                                                                \
  template Var<T> gather_rows(Var<T>, std::span<const int>);                                             \
  template Var<T> gather_elements(Var<T>, std::span<const int>, std::span<const int>, Shape);            \
  template Var<T> masked_fill(Var<T>, std::span<const std::uint8_t>, T);                                 \
  template Var<T> nll_loss(Var<T>, std::span<const int>, int);                                           \
  template Var<T> sum(Var<T>);                                                                           \
  template Var<T> reshape(Var<T>, Shape);                                                                \
  template Var<T> slice_cols(Var<T>, std::size_t, std::size_t);                                          \
  template Var<T> concat_cols(std::span<const Var<T>>);                                                  \
  template Var<T> dropout(Var<T>, T, std::mt19937_64&);                                                  \
  }

SLT_INSTANTIATE_OPS(float)
SLT_INSTANTIATE_OPS(double)

}  // namespace slt
