#include "derc/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "derc/special.hpp"

namespace derc {

namespace autodiff_testing {
bool corrupt_tanh_backward = false;
}

namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw UsageError(msg);
}

void require_rank2(const Tensor& t, const char* msg) { require(t.rank() == 2, msg); }

// C += A * B, all rank-2, shapes already checked.
void gemm_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = pa + i * k;
    double* crow = pc + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const double av = arow[l];
      if (av == 0.0) continue;
      const double* brow = pb + l * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C += A * B^T.
void gemm_nt_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = pa + i * k;
    double* crow = pc + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = pb + j * k;
      double acc = 0.0;
      for (std::size_t l = 0; l < k; ++l) acc += arow[l] * brow[l];
      crow[j] += acc;
    }
  }
}

// C += A^T * B.
void gemm_tn_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  for (std::size_t l = 0; l < k; ++l) {
    const double* arow = pa + l * m;
    const double* brow = pb + l * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

const Tensor& Value::tensor() const {
  require(graph_ != nullptr && id_ >= 0, "Value: unbound handle");
  return graph_->value(*this);
}

Value Graph::emplace(Tensor value, bool requires_grad, std::function<void(Graph&)> backprop) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Value(this, static_cast<int>(nodes_.size()) - 1);
}

Tensor& Graph::grad_buffer(int id) {
  Node& n = node(id);
  if (!n.grad_live) {
    n.grad = Tensor::zeros_like(n.value);
    n.grad_live = true;
  }
  return n.grad;
}

const Tensor& Graph::value(Value v) const {
  require(v.graph_ == this, "Value belongs to a different graph");
  return node(v.id_).value;
}

Tensor Graph::grad(Value v) const {
  require(v.graph_ == this, "Value belongs to a different graph");
  const Node& n = node(v.id_);
  if (!n.grad_live) return Tensor::zeros_like(n.value);
  return n.grad;
}

bool Graph::requires_grad(Value v) const {
  require(v.graph_ == this, "Value belongs to a different graph");
  return node(v.id_).requires_grad;
}

Value Graph::constant(Tensor t) { return emplace(std::move(t), false, {}); }

Value Graph::leaf(Tensor t) { return emplace(std::move(t), true, {}); }

Value Graph::add(Value a, Value b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require(ta.same_shape(tb), "add: shape mismatch");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += tb[i];
  const int ia = a.id_, ib = b.id_, io = static_cast<int>(nodes_.size());
  return emplace(std::move(out), node(ia).requires_grad || node(ib).requires_grad,
                 [ia, ib, io](Graph& g) {
                   const Tensor& go = g.node(io).grad;
                   if (g.node(ia).requires_grad) {
                     Tensor& da = g.grad_buffer(ia);
                     for (std::size_t i = 0; i < go.size(); ++i) da[i] += go[i];
                   }
                   if (g.node(ib).requires_grad) {
                     Tensor& db = g.grad_buffer(ib);
                     for (std::size_t i = 0; i < go.size(); ++i) db[i] += go[i];
                   }
                 });
}

Value Graph::sub(Value a, Value b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require(ta.same_shape(tb), "sub: shape mismatch");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= tb[i];
  const int ia = a.id_, ib = b.id_, io = static_cast<int>(nodes_.size());
  return emplace(std::move(out), node(ia).requires_grad || node(ib).requires_grad,
                 [ia, ib, io](Graph& g) {
                   const Tensor& go = g.node(io).grad;
                   if (g.node(ia).requires_grad) {
                     Tensor& da = g.grad_buffer(ia);
                     for (std::size_t i = 0; i < go.size(); ++i) da[i] += go[i];
                   }
                   if (g.node(ib).requires_grad) {
                     Tensor& db = g.grad_buffer(ib);
                     for (std::size_t i = 0; i < go.size(); ++i) db[i] -= go[i];
                   }
                 });
}

Value Graph::mul(Value a, Value b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require(ta.same_shape(tb), "mul: shape mismatch");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= tb[i];
  const int ia = a.id_, ib = b.id_, io = static_cast<int>(nodes_.size());
  return emplace(std::move(out), node(ia).requires_grad || node(ib).requires_grad,
                 [ia, ib, io](Graph& g) {
                   const Tensor& go = g.node(io).grad;
                   if (g.node(ia).requires_grad) {
                     Tensor& da = g.grad_buffer(ia);
                     const Tensor& tb2 = g.node(ib).value;
                     for (std::size_t i = 0; i < go.size(); ++i) da[i] += go[i] * tb2[i];
                   }
                   if (g.node(ib).requires_grad) {
                     Tensor& db = g.grad_buffer(ib);
                     const Tensor& ta2 = g.node(ia).value;
                     for (std::size_t i = 0; i < go.size(); ++i) db[i] += go[i] * ta2[i];
                   }
                 });
}

Value Graph::affine(Value a, double mul, double add) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mul * out[i] + add;
  const int ia = a.id_, io = static_cast<int>(nodes_.size());
  return emplace(std::move(out), node(ia).requires_grad, [ia, io, mul](Graph& g) {
    if (!g.node(ia).requires_grad) return;
    const Tensor& go = g.node(io).grad;
    Tensor& da = g.grad_buffer(ia);
    for (std::size_t i = 0; i < go.size(); ++i) da[i] += mul * go[i];
  });
}

Value Graph::add_rowvec(Value mat, Value vec) {
  const Tensor& tm = value(mat);
  const Tensor& tv = value(vec);
  require_rank2(tm, "add_rowvec: matrix must be rank 2");
  require(tv.rank() == 1 && tv.size() == tm.cols(), "add_rowvec: vector length mismatch");
  Tensor out = tm;
  for (std::size_t r = 0; r < tm.rows(); ++r)
    for (std::size_t c = 0; c < tm.cols(); ++c) out.at(r, c) += tv[c];
  const int im = mat.id_, iv = vec.id_, io = static_cast<int>(nodes_.size());
  return emplace(std::move(out), node(im).requires_grad || node(iv).requires_grad,
                 [im, iv, io](Graph& g) {
                   const Tensor& go = g.node(io).grad;
                   if (g.node(im).requires_grad) {
                     Tensor& dm = g.grad_buffer(im);
                     for (std::size_t i = 0; i < go.size(); ++i) dm[i] += go[i];
                   }
                   if (g.node(iv).requires_grad) {
                     Tensor& dv = g.grad_buffer(iv);
                     const std::size_t cols = dv.size();
                     for (std::size_t i = 0; i < go.size(); ++i) dv[i % cols] += go[i];
                   }
                 });
}

Value Graph::matmul(Value a, Value b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require_rank2(ta, "matmul: lhs must be rank 2");
  require_rank2(tb, "matmul: rhs must be rank 2");
  require(ta.cols() == tb.rows(), "matmul: inner dimension mismatch");
  Tensor out({ta.rows(), tb.cols()});
  gemm_acc(ta, tb, out);
  const int ia = a.id_, ib = b.id_, io = static_cast<int>(nodes_.size());
  return emplace(std::move(out), node(ia).requires_grad || node(ib).requires_grad,
                 [ia, ib, io](Graph& g) {
                   const Tensor& go = g.node(io).grad;
                   if (g.node(ia).requires_grad)
                     gemm_nt_acc(go, g.node(ib).value, g.grad_buffer(ia));  // dA += G B^T
                   if (g.node(ib).requires_grad)
                     gemm_tn_acc(g.node(ia).value, go, g.grad_buffer(ib));  // dB += A^T G
                 });
}

Value Graph::matmul_nt(Value a, Value b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require_rank2(ta, "matmul_nt: lhs must be rank 2");
  require_rank2(tb, "matmul_nt: rhs must be rank 2");
  require(ta.cols() == tb.cols(), "matmul_nt: inner dimension mismatch");
  Tensor out({ta.rows(), tb.rows()});
  gemm_nt_acc(ta, tb, out);
  const int ia = a.id_, ib = b.id_, io = static_cast<int>(nodes_.size());
  return emplace(std::move(out), node(ia).requires_grad || node(ib).requires_grad,
                 [ia, ib, io](Graph& g) {
                   const Tensor& go = g.node(io).grad;
                   if (g.node(ia).requires_grad)
                     gemm_acc(go, g.node(ib).value, g.grad_buffer(ia));  // dA += G B
                   if (g.node(ib).requires_grad)
                     gemm_tn_acc(go, g.node(ia).value, g.grad_buffer(ib));  // dB += G^T A
                 });
}

Value Graph::tanh_(Value a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
  const int ia = a.id_, io = static_cast<int>(nodes_.size());
  return emplace(std::move(out), node(ia).requires_grad, [ia, io](Graph& g) {
    if (!g.node(ia).requires_grad) return;
    const Tensor& go = g.node(io).grad;
    const Tensor& y = g.node(io).value;
    Tensor& da = g.grad_buffer(ia);
    const double fault = autodiff_testing::corrupt_tanh_backward ? 0.5 : 0.0;
    for (std::size_t i = 0; i < go.size(); ++i) da[i] += go[i] * (1.0 - y[i] * y[i] + fault);
  });
}

Value Graph::relu(Value a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  const int ia = a.id_, io = static_cast<int>(nodes_.size());
  return emplace(std::move(out), node(ia).requires_grad, [ia, io](Graph& g) {
    if (!g.node(ia).requires_grad) return;
    const Tensor& go = g.node(io).grad;
    const Tensor& x = g.node(ia).value;
    Tensor& da = g.grad_buffer(ia);
    for (std::size_t i = 0; i < go.size(); ++i) da[i] += x[i] > 0.0 ? go[i] : 0.0;
  });
}

Value Graph::exp_(Value a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] > kExpCeiling) {
      out[i] = kExpCeiling;
      ++exp_clamps_;
    }
    out[i] = std::exp(out[i]);
  }
  const int ia = a.id_, io = static_cast<int>(nodes_.size());
  return emplace(std::move(out), node(ia).requires_grad, [ia, io](Graph& g) {
    if (!g.node(ia).requires_grad) return;
    const Tensor& go = g.node(io).grad;
    const Tensor& x = g.node(ia).value;
    const Tensor& y = g.node(io).value;
    Tensor& da = g.grad_buffer(ia);
    for (std::size_t i = 0; i < go.size(); ++i)
      da[i] += x[i] > kExpCeiling ? 0.0 : go[i] * y[i];
  });
}

Value Graph::log_(Value a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] < kLogFloor) {
      out[i] = kLogFloor;
      ++log_clamps_;
    }
    out[i] = std::log(out[i]);
  }
  const int ia = a.id_, io = static_cast<int>(nodes_.size());
  return emplace(std::move(out), node(ia).requires_grad, [ia, io](Graph& g) {
    if (!g.node(ia).requires_grad) return;
    const Tensor& go = g.node(io).grad;
    const Tensor& x = g.node(ia).value;
    Tensor& da = g.grad_buffer(ia);
    for (std::size_t i = 0; i < go.size(); ++i)
      da[i] += x[i] < kLogFloor ? 0.0 : go[i] / x[i];
  });
}

Value Graph::lgamma_(Value a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = lgamma_pos(out[i]);
  const int ia = a.id_, io = static_cast<int>(nodes_.size());
  return emplace(std::move(out), node(ia).requires_grad, [ia, io](Graph& g) {
    if (!g.node(ia).requires_grad) return;
    const Tensor& go = g.node(io).grad;
    const Tensor& x = g.node(ia).value;
    Tensor& da = g.grad_buffer(ia);
    for (std::size_t i = 0; i < go.size(); ++i) da[i] += go[i] * digamma_pos(x[i]);
  });
}

Value Graph::softmax_rows(Value a) {
  const Tensor& ta = value(a);
  require_rank2(ta, "softmax_rows: input must be rank 2");
  require(ta.cols() > 0, "softmax_rows: empty rows");
  Tensor out = ta;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    double* row = out.data() + r * out.cols();
    double mx = row[0];
    for (std::size_t c = 1; c < out.cols(); ++c) mx = std::max(mx, row[c]);
    double denom = 0.0;
    for (std::size_t c = 0; c < out.cols(); ++c) {
      row[c] = std::exp(row[c] - mx);
      denom += row[c];
    }
    for (std::size_t c = 0; c < out.cols(); ++c) row[c] /= denom;
  }
  const int ia = a.id_, io = static_cast<int>(nodes_.size());
  return emplace(std::move(out), node(ia).requires_grad, [ia, io](Graph& g) {
    if (!g.node(ia).requires_grad) return;
    const Tensor& go = g.node(io).grad;
    const Tensor& y = g.node(io).value;
    Tensor& da = g.grad_buffer(ia);
    const std::size_t cols = y.cols();
    for (std::size_t r = 0; r < y.rows(); ++r) {
      const double* yr = y.data() + r * cols;
      const double* gr = go.data() + r * cols;
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += yr[c] * gr[c];
      double* dr = da.data() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) dr[c] += yr[c] * (gr[c] - dot);
    }
  });
}

Value Graph::layer_norm(Value x, Value gain, Value bias) {
  const Tensor& tx = value(x);
  const Tensor& tg = value(gain);
  const Tensor& tb = value(bias);
  require_rank2(tx, "layer_norm: input must be rank 2");
  require(tg.rank() == 1 && tg.size() == tx.cols(), "layer_norm: gain length mismatch");
  require(tb.rank() == 1 && tb.size() == tx.cols(), "layer_norm: bias length mismatch");
  const std::size_t rows = tx.rows(), cols = tx.cols();
  Tensor out({rows, cols});
  std::vector<double> inv_std(rows);
  std::vector<double> normed(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = tx.data() + r * cols;
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += xr[c];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + kLayerNormEps);
    inv_std[r] = is;
    for (std::size_t c = 0; c < cols; ++c) {
      const double n = (xr[c] - mean) * is;
      normed[r * cols + c] = n;
      out.at(r, c) = n * tg[c] + tb[c];
    }
  }
  const int ix = x.id_, ig = gain.id_, ib = bias.id_, io = static_cast<int>(nodes_.size());
  return emplace(
      std::move(out), node(ix).requires_grad || node(ig).requires_grad || node(ib).requires_grad,
      [ix, ig, ib, io, inv_std = std::move(inv_std), normed = std::move(normed)](Graph& g) {
        const Tensor& go = g.node(io).grad;
        const std::size_t rows = go.rows(), cols = go.cols();
        if (g.node(ib).requires_grad) {
          Tensor& db = g.grad_buffer(ib);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) db[c] += go.at(r, c);
        }
        if (g.node(ig).requires_grad) {
          Tensor& dg = g.grad_buffer(ig);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) dg[c] += go.at(r, c) * normed[r * cols + c];
        }
        if (g.node(ix).requires_grad) {
          Tensor& dx = g.grad_buffer(ix);
          const Tensor& gainv = g.node(ig).value;
          for (std::size_t r = 0; r < rows; ++r) {
            // dn = dy * gain; dx = (dn - mean(dn) - n * mean(dn * n)) * inv_std
            double mean_dn = 0.0, mean_dn_n = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
              const double dn = go.at(r, c) * gainv[c];
              mean_dn += dn;
              mean_dn_n += dn * normed[r * cols + c];
            }
            mean_dn /= static_cast<double>(cols);
            mean_dn_n /= static_cast<double>(cols);
            for (std::size_t c = 0; c < cols; ++c) {
              const double dn = go.at(r, c) * gainv[c];
              dx.at(r, c) +=
                  (dn - mean_dn - normed[r * cols + c] * mean_dn_n) * inv_std[r];
            }
          }
        }
      });
}

Value Graph::sum(Value a) {
  const Tensor& ta = value(a);
  double acc = 0.0;
  for (std::size_t i = 0; i < ta.size(); ++i) acc += ta[i];
  const int ia = a.id_, io = static_cast<int>(nodes_.size());
  return emplace(Tensor::scalar(acc), node(ia).requires_grad, [ia, io](Graph& g) {
    if (!g.node(ia).requires_grad) return;
    const double go = g.node(io).grad.item();
    Tensor& da = g.grad_buffer(ia);
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += go;
  });
}

Value Graph::mean(Value a) {
  const Tensor& ta = value(a);
  require(ta.size() > 0, "mean: empty tensor");
  double acc = 0.0;
  for (std::size_t i = 0; i < ta.size(); ++i) acc += ta[i];
  acc /= static_cast<double>(ta.size());
  const int ia = a.id_, io = static_cast<int>(nodes_.size());
  return emplace(Tensor::scalar(acc), node(ia).requires_grad, [ia, io](Graph& g) {
    if (!g.node(ia).requires_grad) return;
    const double go = g.node(io).grad.item() / static_cast<double>(g.node(ia).value.size());
    Tensor& da = g.grad_buffer(ia);
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += go;
  });
}

Value Graph::sum_of(const std::vector<Value>& parts) {
  require(!parts.empty(), "sum_of: no inputs");
  Tensor out = value(parts[0]);
  bool rg = node(parts[0].id_).requires_grad;
  std::vector<int> ids{parts[0].id_};
  for (std::size_t p = 1; p < parts.size(); ++p) {
    const Tensor& tp = value(parts[p]);
    require(tp.same_shape(out), "sum_of: shape mismatch");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += tp[i];
    rg = rg || node(parts[p].id_).requires_grad;
    ids.push_back(parts[p].id_);
  }
  const int io = static_cast<int>(nodes_.size());
  return emplace(std::move(out), rg, [ids = std::move(ids), io](Graph& g) {
    const Tensor& go = g.node(io).grad;
    for (int id : ids) {
      if (!g.node(id).requires_grad) continue;
      Tensor& d = g.grad_buffer(id);
      for (std::size_t i = 0; i < go.size(); ++i) d[i] += go[i];
    }
  });
}

Value Graph::slice_rows(Value a, std::size_t r0, std::size_t r1) {
  const Tensor& ta = value(a);
  require_rank2(ta, "slice_rows: input must be rank 2");
  require(r0 < r1 && r1 <= ta.rows(), "slice_rows: range out of bounds");
  const std::size_t cols = ta.cols();
  Tensor out({r1 - r0, cols});
  std::copy(ta.data() + r0 * cols, ta.data() + r1 * cols, out.data());
  const int ia = a.id_, io = static_cast<int>(nodes_.size());
  return emplace(std::move(out), node(ia).requires_grad, [ia, io, r0, cols](Graph& g) {
    if (!g.node(ia).requires_grad) return;
    const Tensor& go = g.node(io).grad;
    Tensor& da = g.grad_buffer(ia);
    double* dst = da.data() + r0 * cols;
    for (std::size_t i = 0; i < go.size(); ++i) dst[i] += go[i];
  });
}

Value Graph::slice_cols(Value a, std::size_t c0, std::size_t c1) {
  const Tensor& ta = value(a);
  require_rank2(ta, "slice_cols: input must be rank 2");
  require(c0 < c1 && c1 <= ta.cols(), "slice_cols: range out of bounds");
  const std::size_t rows = ta.rows(), cols = ta.cols(), width = c1 - c0;
  Tensor out({rows, width});
  for (std::size_t r = 0; r < rows; ++r)
    std::copy(ta.data() + r * cols + c0, ta.data() + r * cols + c1, out.data() + r * width);
  const int ia = a.id_, io = static_cast<int>(nodes_.size());
  return emplace(std::move(out), node(ia).requires_grad, [ia, io, c0, width](Graph& g) {
    if (!g.node(ia).requires_grad) return;
    const Tensor& go = g.node(io).grad;
    Tensor& da = g.grad_buffer(ia);
    const std::size_t cols = da.cols();
    for (std::size_t r = 0; r < go.rows(); ++r)
      for (std::size_t c = 0; c < width; ++c) da[r * cols + c0 + c] += go[r * width + c];
  });
}

Value Graph::concat_rows(const std::vector<Value>& parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  const std::size_t cols = value(parts[0]).cols();
  std::size_t rows = 0;
  bool rg = false;
  for (const Value& p : parts) {
    const Tensor& tp = value(p);
    require_rank2(tp, "concat_rows: inputs must be rank 2");
    require(tp.cols() == cols, "concat_rows: column mismatch");
    rows += tp.rows();
    rg = rg || node(p.id_).requires_grad;
  }
  Tensor out({rows, cols});
  std::vector<int> ids;
  std::vector<std::size_t> offsets;
  std::size_t at = 0;
  for (const Value& p : parts) {
    const Tensor& tp = value(p);
    std::copy(tp.data(), tp.data() + tp.size(), out.data() + at);
    ids.push_back(p.id_);
    offsets.push_back(at);
    at += tp.size();
  }
  const int io = static_cast<int>(nodes_.size());
  return emplace(std::move(out), rg,
                 [ids = std::move(ids), offsets = std::move(offsets), io](Graph& g) {
                   const Tensor& go = g.node(io).grad;
                   for (std::size_t p = 0; p < ids.size(); ++p) {
                     if (!g.node(ids[p]).requires_grad) continue;
                     Tensor& d = g.grad_buffer(ids[p]);
                     const double* src = go.data() + offsets[p];
                     for (std::size_t i = 0; i < d.size(); ++i) d[i] += src[i];
                   }
                 });
}

Value Graph::concat_cols(const std::vector<Value>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t rows = value(parts[0]).rows();
  std::size_t cols = 0;
  bool rg = false;
  for (const Value& p : parts) {
    const Tensor& tp = value(p);
    require_rank2(tp, "concat_cols: inputs must be rank 2");
    require(tp.rows() == rows, "concat_cols: row mismatch");
    cols += tp.cols();
    rg = rg || node(p.id_).requires_grad;
  }
  Tensor out({rows, cols});
  std::vector<int> ids;
  std::vector<std::size_t> col0;
  std::size_t at = 0;
  for (const Value& p : parts) {
    const Tensor& tp = value(p);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(tp.data() + r * tp.cols(), tp.data() + (r + 1) * tp.cols(),
                out.data() + r * cols + at);
    ids.push_back(p.id_);
    col0.push_back(at);
    at += tp.cols();
  }
  const int io = static_cast<int>(nodes_.size());
  return emplace(std::move(out), rg,
                 [ids = std::move(ids), col0 = std::move(col0), io, cols](Graph& g) {
                   const Tensor& go = g.node(io).grad;
                   for (std::size_t p = 0; p < ids.size(); ++p) {
                     if (!g.node(ids[p]).requires_grad) continue;
                     Tensor& d = g.grad_buffer(ids[p]);
                     const std::size_t w = d.cols();
                     for (std::size_t r = 0; r < d.rows(); ++r)
                       for (std::size_t c = 0; c < w; ++c)
                         d[r * w + c] += go[r * cols + col0[p] + c];
                   }
                 });
}

Value Graph::dropout(Value a, double p, RngStream& rng) {
  require(p >= 0.0 && p < 1.0, "dropout: probability must be in [0, 1)");
  if (p == 0.0) return a;
  const Tensor& ta = value(a);
  Tensor mask = Tensor::zeros_like(ta);
  const double keep_scale = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < mask.size(); ++i)
    mask[i] = rng.uniform() < p ? 0.0 : keep_scale;
  return mul(a, constant(std::move(mask)));
}

void Graph::backward(Value root) {
  require(root.graph_ == this, "backward: root belongs to a different graph");
  const Tensor& rv = value(root);
  if (rv.size() != 1) throw UsageError("backward: root must be a scalar");
  // Reset state from any previous pass.
  for (Node& n : nodes_) n.grad_live = false;
  grad_buffer(root.id_)[0] = 1.0;
  for (int id = root.id_; id >= 0; --id) {
    Node& n = node(id);
    if (!n.grad_live || !n.requires_grad || !n.backprop) continue;
    n.backprop(*this);
  }
}

}  // namespace derc
