#include "gnas/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gnas/kernels.hpp"

namespace gnas {

namespace {

// valid output range [lo,hi) such that 0 <= o*stride + off < extent
inline void valid_range(int extent, int out_extent, int stride, int off, int& lo, int& hi) {
  lo = off < 0 ? (-off + stride - 1) / stride : 0;
  int rem = extent - off;
  hi = rem > 0 ? (rem + stride - 1) / stride : 0;
  if (hi > out_extent) hi = out_extent;
  if (lo > hi) lo = hi;
}

inline double softplus(double z) {
  return (z > 0.0 ? z : 0.0) + std::log1p(std::exp(-std::fabs(z)));
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

VarId Tape::push(Tensor t, std::function<void(Tape&)> back, bool requires_grad) {
  t.requires_grad = requires_grad;
  t.grad.clear();
  nodes_.push_back({std::move(t), requires_grad ? std::move(back) : nullptr});
  return static_cast<VarId>(nodes_.size()) - 1;
}

VarId Tape::leaf(Tensor t) {
  bool r = t.requires_grad;
  return push(std::move(t), nullptr, r);
}

VarId Tape::constant(Tensor t) { return push(std::move(t), nullptr, false); }

void Tape::backward(VarId loss) {
  check(loss);
  GNAS_CHECK(nodes_[loss].t.size() == 1, "backward: loss must be scalar");
  if (!rg(loss)) return;
  g(loss)[0] = 1.0;
  for (VarId id = loss; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.back && n.t.requires_grad && n.t.has_grad()) n.back(*this);
  }
}

VarId Tape::add(VarId a, VarId b) {
  check(a);
  check(b);
  GNAS_CHECK(val(a).shape == val(b).shape, "add: shape mismatch");
  Tensor out = val(a);
  kern::active().add(out.data(), val(b).data(), out.v.size());
  return push(std::move(out), [a, b, id = size()](Tape& t) {
    const auto& go = t.nodes_[id].t.grad;
    if (t.rg(a)) kern::active().add(t.g(a).data(), go.data(), go.size());
    if (t.rg(b)) kern::active().add(t.g(b).data(), go.data(), go.size());
  }, rg(a) || rg(b));
}

VarId Tape::sub(VarId a, VarId b) {
  check(a);
  check(b);
  GNAS_CHECK(val(a).shape == val(b).shape, "sub: shape mismatch");
  Tensor out = val(a);
  kern::active().axpy(out.data(), -1.0, val(b).data(), out.v.size());
  return push(std::move(out), [a, b, id = size()](Tape& t) {
    const auto& go = t.nodes_[id].t.grad;
    if (t.rg(a)) kern::active().add(t.g(a).data(), go.data(), go.size());
    if (t.rg(b)) kern::active().axpy(t.g(b).data(), -1.0, go.data(), go.size());
  }, rg(a) || rg(b));
}

VarId Tape::mul(VarId a, VarId b) {
  check(a);
  check(b);
  GNAS_CHECK(val(a).shape == val(b).shape, "mul: shape mismatch");
  Tensor out = val(a);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= val(b).v[i];
  return push(std::move(out), [a, b, id = size()](Tape& t) {
    const auto& go = t.nodes_[id].t.grad;
    if (t.rg(a)) {
      auto& ga = t.g(a);
      const auto& vb = t.val(b).v;
      for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * vb[i];
    }
    if (t.rg(b)) {
      auto& gb = t.g(b);
      const auto& va = t.val(a).v;
      for (size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * va[i];
    }
  }, rg(a) || rg(b));
}

VarId Tape::scale(VarId a, double c) {
  check(a);
  Tensor out = val(a);
  kern::active().scal(out.data(), c, out.v.size());
  return push(std::move(out), [a, c, id = size()](Tape& t) {
    const auto& go = t.nodes_[id].t.grad;
    if (t.rg(a)) kern::active().axpy(t.g(a).data(), c, go.data(), go.size());
  }, rg(a));
}

VarId Tape::add_many(const std::vector<VarId>& xs) {
  GNAS_CHECK(!xs.empty(), "add_many: empty");
  if (xs.size() == 1) return xs[0];
  bool any = false;
  for (VarId x : xs) {
    check(x);
    GNAS_CHECK(val(x).shape == val(xs[0]).shape, "add_many: shape mismatch");
    any = any || rg(x);
  }
  Tensor out = val(xs[0]);
  for (size_t k = 1; k < xs.size(); ++k)
    kern::active().add(out.data(), val(xs[k]).data(), out.v.size());
  return push(std::move(out), [xs, id = size()](Tape& t) {
    const auto& go = t.nodes_[id].t.grad;
    for (VarId x : xs)
      if (t.rg(x)) kern::active().add(t.g(x).data(), go.data(), go.size());
  }, any);
}

VarId Tape::weighted_sum(const std::vector<VarId>& xs, VarId w) {
  check(w);
  GNAS_CHECK(val(w).shape.size() == 1 &&
                 val(w).shape[0] == static_cast<int>(xs.size()),
             "weighted_sum: weight length must match operand count");
  bool any = rg(w);
  for (VarId x : xs) {
    check(x);
    GNAS_CHECK(val(x).shape == val(xs[0]).shape, "weighted_sum: shape mismatch");
    any = any || rg(x);
  }
  Tensor out = Tensor::zeros(val(xs[0]).shape);
  for (size_t k = 0; k < xs.size(); ++k)
    kern::active().axpy(out.data(), val(w).v[k], val(xs[k]).data(), out.v.size());
  return push(std::move(out), [xs, w, id = size()](Tape& t) {
    const auto& go = t.nodes_[id].t.grad;
    const auto& wv = t.val(w).v;
    for (size_t k = 0; k < xs.size(); ++k) {
      if (t.rg(xs[k]))
        kern::active().axpy(t.g(xs[k]).data(), wv[k], go.data(), go.size());
      if (t.rg(w)) {
        const auto& xv = t.val(xs[k]).v;
        double acc = 0.0;
        for (size_t i = 0; i < go.size(); ++i) acc += go[i] * xv[i];
        t.g(w)[k] += acc;
      }
    }
  }, any);
}

VarId Tape::relu(VarId x) {
  check(x);
  Tensor out(val(x).shape);
  kern::active().relu(out.data(), val(x).data(), out.v.size());
  return push(std::move(out), [x, id = size()](Tape& t) {
    const auto& go = t.nodes_[id].t.grad;
    if (t.rg(x))
      kern::active().relu_bwd(t.g(x).data(), t.val(x).data(), go.data(), go.size());
  }, rg(x));
}

VarId Tape::sum(VarId x) {
  check(x);
  double acc = 0.0;
  for (double v : val(x).v) acc += v;
  return push(Tensor::scalar(acc), [x, id = size()](Tape& t) {
    double go = t.nodes_[id].t.grad[0];
    if (t.rg(x)) {
      auto& gx = t.g(x);
      for (double& v : gx) v += go;
    }
  }, rg(x));
}

VarId Tape::mean(VarId x) {
  check(x);
  return scale(sum(x), 1.0 / static_cast<double>(val(x).size()));
}

VarId Tape::reshape(VarId x, std::vector<int> shape) {
  check(x);
  GNAS_CHECK(Tensor::numel(shape) == val(x).size(), "reshape: element count mismatch");
  Tensor out = val(x);
  out.shape = std::move(shape);
  return push(std::move(out), [x, id = size()](Tape& t) {
    const auto& go = t.nodes_[id].t.grad;
    if (t.rg(x)) kern::active().add(t.g(x).data(), go.data(), go.size());
  }, rg(x));
}

VarId Tape::conv2d(VarId x, VarId w, int stride, int dilation, int groups) {
  check(x);
  check(w);
  const Tensor& X = val(x);
  const Tensor& W = val(w);
  GNAS_CHECK(X.shape.size() == 4, "conv2d: input must be [N,C,H,W]");
  GNAS_CHECK(W.shape.size() == 4, "conv2d: weights must be 4-D");
  GNAS_CHECK(stride == 1 || stride == 2, "conv2d: stride must be 1 or 2");
  GNAS_CHECK(dilation == 1 || dilation == 2, "conv2d: dilation must be 1 or 2");
  const int N = X.shape[0], Ci = X.shape[1], H = X.shape[2], Wd = X.shape[3];
  const int k = W.shape[2];
  GNAS_CHECK(k == W.shape[3] && k % 2 == 1, "conv2d: kernel must be square and odd");
  GNAS_CHECK(groups == 1 || groups == Ci, "conv2d: groups must be 1 or C_in");
  const bool dw = groups != 1;
  const int Co = W.shape[0];
  if (dw)
    GNAS_CHECK(Co == Ci && W.shape[1] == 1, "conv2d: depthwise weights must be [C,1,k,k]");
  else
    GNAS_CHECK(W.shape[1] == Ci, "conv2d: weight channel mismatch");

  const int ek = dilation * (k - 1) + 1;
  const int p = (ek - 1) / 2;
  const int Ho = (H + 2 * p - ek) / stride + 1;
  const int Wo = (Wd + 2 * p - ek) / stride + 1;

  Tensor out = Tensor::zeros({N, Co, Ho, Wo});
  const auto& K = kern::active();
  for (int n = 0; n < N; ++n) {
    for (int co = 0; co < Co; ++co) {
      double* oplane = out.data() + (static_cast<int64_t>(n) * Co + co) * Ho * Wo;
      const int ci_lo = dw ? co : 0, ci_hi = dw ? co + 1 : Ci;
      for (int ci = ci_lo; ci < ci_hi; ++ci) {
        const double* iplane = X.data() + (static_cast<int64_t>(n) * Ci + ci) * H * Wd;
        const double* wk = W.data() + ((static_cast<int64_t>(co) * (dw ? 1 : Ci) + (dw ? 0 : ci)) * k) * k;
        for (int ky = 0; ky < k; ++ky) {
          const int offy = dilation * ky - p;
          int oy0, oy1;
          valid_range(H, Ho, stride, offy, oy0, oy1);
          for (int kx = 0; kx < k; ++kx) {
            const double a = wk[ky * k + kx];
            const int offx = dilation * kx - p;
            int ox0, ox1;
            valid_range(Wd, Wo, stride, offx, ox0, ox1);
            if (ox1 <= ox0) continue;
            for (int oy = oy0; oy < oy1; ++oy) {
              const double* irow = iplane + (oy * stride + offy) * Wd + ox0 * stride + offx;
              double* orow = oplane + oy * Wo + ox0;
              if (stride == 1)
                K.axpy(orow, a, irow, ox1 - ox0);
              else
                K.axpy_gather2(orow, a, irow, ox1 - ox0);
            }
          }
        }
      }
    }
  }

  auto back = [x, w, stride, dilation, dw, N, Ci, H, Wd, k, Co, p, Ho, Wo,
               id = size()](Tape& t) {
    const auto& go = t.nodes_[id].t.grad;
    const Tensor& X = t.val(x);
    const Tensor& W = t.val(w);
    const bool need_dx = t.rg(x), need_dw = t.rg(w);
    double* dx = need_dx ? t.g(x).data() : nullptr;
    double* dwv = need_dw ? t.g(w).data() : nullptr;
    const auto& K = kern::active();
    for (int n = 0; n < N; ++n) {
      for (int co = 0; co < Co; ++co) {
        const double* gplane = go.data() + (static_cast<int64_t>(n) * Co + co) * Ho * Wo;
        const int ci_lo = dw ? co : 0, ci_hi = dw ? co + 1 : Ci;
        for (int ci = ci_lo; ci < ci_hi; ++ci) {
          const int64_t pbase = (static_cast<int64_t>(n) * Ci + ci) * H * Wd;
          const int64_t wbase = ((static_cast<int64_t>(co) * (dw ? 1 : Ci) + (dw ? 0 : ci)) * k) * k;
          for (int ky = 0; ky < k; ++ky) {
            const int offy = dilation * ky - p;
            int oy0, oy1;
            valid_range(H, Ho, stride, offy, oy0, oy1);
            for (int kx = 0; kx < k; ++kx) {
              const int offx = dilation * kx - p;
              int ox0, ox1;
              valid_range(Wd, Wo, stride, offx, ox0, ox1);
              if (ox1 <= ox0) continue;
              const double a = W.v[wbase + ky * k + kx];
              double wacc = 0.0;
              for (int oy = oy0; oy < oy1; ++oy) {
                const int64_t ioff = pbase + (oy * stride + offy) * Wd + ox0 * stride + offx;
                const double* grow = gplane + oy * Wo + ox0;
                const int len = ox1 - ox0;
                if (need_dx) {
                  if (stride == 1)
                    K.axpy(dx + ioff, a, grow, len);
                  else
                    K.axpy_scatter2(dx + ioff, a, grow, len);
                }
                if (need_dw) {
                  const double* irow = X.data() + ioff;
                  for (int i = 0; i < len; ++i) wacc += grow[i] * irow[i * stride];
                }
              }
              if (need_dw) dwv[wbase + ky * k + kx] += wacc;
            }
          }
        }
      }
    }
  };
  return push(std::move(out), std::move(back), rg(x) || rg(w));
}

VarId Tape::pool2d(VarId x, PoolKind kind, int window, int stride) {
  check(x);
  const Tensor& X = val(x);
  GNAS_CHECK(X.shape.size() == 4, "pool2d: input must be [N,C,H,W]");
  GNAS_CHECK(window == 2 || window == 3, "pool2d: window must be 2 or 3");
  GNAS_CHECK(stride == 1 || stride == 2, "pool2d: stride must be 1 or 2");
  const int N = X.shape[0], C = X.shape[1], H = X.shape[2], W = X.shape[3];
  const int p = window == 3 ? 1 : 0;
  const int Ho = (H + 2 * p - window) / stride + 1;
  const int Wo = (W + 2 * p - window) / stride + 1;

  Tensor out = Tensor::zeros({N, C, Ho, Wo});
  std::vector<int32_t> argmax;
  if (kind == PoolKind::Max) argmax.assign(out.v.size(), -1);

  int64_t o = 0;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double* plane = X.data() + (static_cast<int64_t>(n) * C + c) * H * W;
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox, ++o) {
          const int y0 = oy * stride - p, x0 = ox * stride - p;
          if (kind == PoolKind::Avg) {
            double acc = 0.0;
            int cnt = 0;
            for (int wy = 0; wy < window; ++wy)
              for (int wx = 0; wx < window; ++wx) {
                const int iy = y0 + wy, ix = x0 + wx;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += plane[iy * W + ix];
                ++cnt;
              }
            out.v[o] = acc / cnt;
          } else {
            double best = -std::numeric_limits<double>::infinity();
            int32_t bi = -1;
            for (int wy = 0; wy < window; ++wy)
              for (int wx = 0; wx < window; ++wx) {
                const int iy = y0 + wy, ix = x0 + wx;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                const double v = plane[iy * W + ix];
                if (v > best) {  // first occurrence wins ties
                  best = v;
                  bi = static_cast<int32_t>((static_cast<int64_t>(n) * C + c) * H * W + iy * W + ix);
                }
              }
            out.v[o] = best;
            argmax[o] = bi;
          }
        }
    }

  auto back = [x, kind, window, stride, N, C, H, W, p, Ho, Wo,
               am = std::move(argmax), id = size()](Tape& t) {
    if (!t.rg(x)) return;
    const auto& go = t.nodes_[id].t.grad;
    auto& gx = t.g(x);
    if (kind == PoolKind::Max) {
      for (size_t o = 0; o < go.size(); ++o) gx[am[o]] += go[o];
      return;
    }
    int64_t o = 0;
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        double* plane = gx.data() + (static_cast<int64_t>(n) * C + c) * H * W;
        for (int oy = 0; oy < Ho; ++oy)
          for (int ox = 0; ox < Wo; ++ox, ++o) {
            const int y0 = oy * stride - p, x0 = ox * stride - p;
            int cnt = 0;
            for (int wy = 0; wy < window; ++wy)
              for (int wx = 0; wx < window; ++wx) {
                const int iy = y0 + wy, ix = x0 + wx;
                if (iy >= 0 && iy < H && ix >= 0 && ix < W) ++cnt;
              }
            const double gshare = go[o] / cnt;
            for (int wy = 0; wy < window; ++wy)
              for (int wx = 0; wx < window; ++wx) {
                const int iy = y0 + wy, ix = x0 + wx;
                if (iy >= 0 && iy < H && ix >= 0 && ix < W) plane[iy * W + ix] += gshare;
              }
          }
      }
  };
  return push(std::move(out), std::move(back), rg(x));
}

VarId Tape::concat_channels(const std::vector<VarId>& xs) {
  GNAS_CHECK(!xs.empty(), "concat_channels: empty");
  const Tensor& first = val(xs[0]);
  GNAS_CHECK(first.shape.size() == 4, "concat_channels: inputs must be [N,C,H,W]");
  const int N = first.shape[0], H = first.shape[2], W = first.shape[3];
  int Ct = 0;
  bool any = false;
  for (VarId x : xs) {
    check(x);
    const auto& s = val(x).shape;
    GNAS_CHECK(s.size() == 4 && s[0] == N && s[2] == H && s[3] == W,
               "concat_channels: spatial/batch mismatch");
    Ct += s[1];
    any = any || rg(x);
  }
  Tensor out = Tensor::zeros({N, Ct, H, W});
  const int64_t plane = static_cast<int64_t>(H) * W;
  for (int n = 0; n < N; ++n) {
    int64_t off = static_cast<int64_t>(n) * Ct * plane;
    for (VarId x : xs) {
      const Tensor& X = val(x);
      const int Cx = X.shape[1];
      std::copy_n(X.data() + static_cast<int64_t>(n) * Cx * plane, Cx * plane, out.data() + off);
      off += Cx * plane;
    }
  }
  return push(std::move(out), [xs, N, Ct, plane, id = size()](Tape& t) {
    const auto& go = t.nodes_[id].t.grad;
    for (int n = 0; n < N; ++n) {
      int64_t off = static_cast<int64_t>(n) * Ct * plane;
      for (VarId x : xs) {
        const int Cx = t.val(x).shape[1];
        if (t.rg(x))
          kern::active().add(t.g(x).data() + static_cast<int64_t>(n) * Cx * plane,
                             go.data() + off, Cx * plane);
        off += Cx * plane;
      }
    }
  }, any);
}

VarId Tape::global_avg_pool(VarId x) {
  check(x);
  const Tensor& X = val(x);
  GNAS_CHECK(X.shape.size() == 4, "global_avg_pool: input must be [N,C,H,W]");
  const int N = X.shape[0], C = X.shape[1];
  const int64_t plane = static_cast<int64_t>(X.shape[2]) * X.shape[3];
  Tensor out = Tensor::zeros({N, C});
  for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
    double acc = 0.0;
    const double* pp = X.data() + nc * plane;
    for (int64_t i = 0; i < plane; ++i) acc += pp[i];
    out.v[nc] = acc / static_cast<double>(plane);
  }
  return push(std::move(out), [x, N, C, plane, id = size()](Tape& t) {
    if (!t.rg(x)) return;
    const auto& go = t.nodes_[id].t.grad;
    auto& gx = t.g(x);
    for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
      const double gshare = go[nc] / static_cast<double>(plane);
      double* pp = gx.data() + nc * plane;
      for (int64_t i = 0; i < plane; ++i) pp[i] += gshare;
    }
  }, rg(x));
}

VarId Tape::linear(VarId x, VarId w, VarId b) {
  check(x);
  check(w);
  check(b);
  const Tensor& X = val(x);
  const Tensor& W = val(w);
  const Tensor& B = val(b);
  GNAS_CHECK(X.shape.size() == 2 && W.shape.size() == 2 && B.shape.size() == 1,
             "linear: expected [N,F],[O,F],[O]");
  const int N = X.shape[0], F = X.shape[1], O = W.shape[0];
  GNAS_CHECK(W.shape[1] == F && B.shape[0] == O, "linear: dimension mismatch");
  Tensor out = Tensor::zeros({N, O});
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < O; ++o) {
      double acc = B.v[o];
      const double* xr = X.data() + static_cast<int64_t>(n) * F;
      const double* wr = W.data() + static_cast<int64_t>(o) * F;
      for (int f = 0; f < F; ++f) acc += xr[f] * wr[f];
      out.v[static_cast<int64_t>(n) * O + o] = acc;
    }
  return push(std::move(out), [x, w, b, N, F, O, id = size()](Tape& t) {
    const auto& go = t.nodes_[id].t.grad;
    const Tensor& X = t.val(x);
    const Tensor& W = t.val(w);
    for (int n = 0; n < N; ++n)
      for (int o = 0; o < O; ++o) {
        const double gv = go[static_cast<int64_t>(n) * O + o];
        if (gv == 0.0) continue;
        if (t.rg(x))
          kern::active().axpy(t.g(x).data() + static_cast<int64_t>(n) * F, gv,
                              W.data() + static_cast<int64_t>(o) * F, F);
        if (t.rg(w))
          kern::active().axpy(t.g(w).data() + static_cast<int64_t>(o) * F, gv,
                              X.data() + static_cast<int64_t>(n) * F, F);
        if (t.rg(b)) t.g(b)[o] += gv;
      }
  }, rg(x) || rg(w) || rg(b));
}

VarId Tape::softmax(VarId logits) {
  check(logits);
  const Tensor& X = val(logits);
  GNAS_CHECK(X.shape.size() == 1, "softmax: expected 1-D logits");
  double mx = X.v[0];
  for (double v : X.v) mx = std::max(mx, v);
  Tensor out(X.shape);
  double z = 0.0;
  for (size_t i = 0; i < X.v.size(); ++i) {
    out.v[i] = std::exp(X.v[i] - mx);
    z += out.v[i];
  }
  for (double& v : out.v) v /= z;
  return push(std::move(out), [logits, id = size()](Tape& t) {
    if (!t.rg(logits)) return;
    const auto& y = t.nodes_[id].t.v;
    const auto& go = t.nodes_[id].t.grad;
    double dot = 0.0;
    for (size_t i = 0; i < y.size(); ++i) dot += go[i] * y[i];
    auto& gx = t.g(logits);
    for (size_t i = 0; i < y.size(); ++i) gx[i] += y[i] * (go[i] - dot);
  }, rg(logits));
}

VarId Tape::logistic_loss(VarId yhat1, const std::vector<double>& y1) {
  check(yhat1);
  const Tensor& Y = val(yhat1);
  GNAS_CHECK(Y.shape.size() == 1, "logistic_loss: expected 1-D predictions");
  GNAS_CHECK(Y.v.size() == y1.size(), "logistic_loss: batch size mismatch");
  GNAS_CHECK(!y1.empty(), "logistic_loss: empty batch");
  for (double l : y1)
    GNAS_CHECK(l == 1.0 || l == -1.0, "logistic_loss: labels must be -1 or +1");
  double acc = 0.0;
  for (size_t i = 0; i < y1.size(); ++i) acc += softplus(-y1[i] * Y.v[i]);
  acc /= static_cast<double>(y1.size());
  return push(Tensor::scalar(acc), [yhat1, y1, id = size()](Tape& t) {
    if (!t.rg(yhat1)) return;
    const double go = t.nodes_[id].t.grad[0];
    const auto& yv = t.val(yhat1).v;
    auto& gx = t.g(yhat1);
    const double inv = 1.0 / static_cast<double>(y1.size());
    for (size_t i = 0; i < y1.size(); ++i)
      gx[i] += go * inv * (-y1[i]) * sigmoid(-y1[i] * yv[i]);
  }, rg(yhat1));
}

VarId Tape::smooth_l1_loss(VarId yhat2, const Tensor& y2) {
  check(yhat2);
  const Tensor& Y = val(yhat2);
  GNAS_CHECK(Y.shape == y2.shape, "smooth_l1_loss: shape mismatch");
  GNAS_CHECK(Y.shape.size() == 2 && Y.shape[0] > 0, "smooth_l1_loss: expected [N,K]");
  const int N = Y.shape[0];
  double acc = 0.0;
  for (size_t i = 0; i < Y.v.size(); ++i) {
    const double r = Y.v[i] - y2.v[i];
    const double a = std::fabs(r);
    acc += a < 1.0 ? 0.5 * r * r : a - 0.5;
  }
  acc /= N;
  return push(Tensor::scalar(acc), [yhat2, tv = y2.v, N, id = size()](Tape& t) {
    if (!t.rg(yhat2)) return;
    const double go = t.nodes_[id].t.grad[0] / N;
    const auto& yv = t.val(yhat2).v;
    auto& gx = t.g(yhat2);
    for (size_t i = 0; i < yv.size(); ++i) {
      const double r = yv[i] - tv[i];
      gx[i] += go * std::clamp(r, -1.0, 1.0);
    }
  }, rg(yhat2));
}

VarId Tape::g_loss(VarId yhat1, VarId yhat2) {
  check(yhat1);
  check(yhat2);
  const Tensor& A = val(yhat1);
  const Tensor& B = val(yhat2);
  GNAS_CHECK(A.shape.size() == 1 && B.shape.size() == 2 && A.shape[0] == B.shape[0],
             "g_loss: expected [N] and [N,K]");
  GNAS_CHECK(A.shape[0] > 0, "g_loss: empty batch");
  const int N = A.shape[0];
  double s1 = 0.0, s2 = 0.0;
  for (double v : A.v) s1 += v * v;
  for (double v : B.v) s2 += v * v;
  const double out = 0.5 * s1 / N - 0.5 * s2 / N;
  return push(Tensor::scalar(out), [yhat1, yhat2, N, id = size()](Tape& t) {
    const double go = t.nodes_[id].t.grad[0] / N;
    if (t.rg(yhat1))
      kern::active().axpy(t.g(yhat1).data(), go, t.val(yhat1).data(), t.val(yhat1).v.size());
    if (t.rg(yhat2))
      kern::active().axpy(t.g(yhat2).data(), -go, t.val(yhat2).data(), t.val(yhat2).v.size());
  }, rg(yhat1) || rg(yhat2));
}

GradMap forward_backward(Tape& tape, VarId loss,
                         const std::vector<std::pair<std::string, VarId>>& params) {
  for (const auto& [name, id] : params)
    GNAS_CHECK(tape.val(id).requires_grad,
               "forward_backward: parameter not flagged requires_grad: " + name);
  tape.backward(loss);
  GradMap out;
  for (const auto& [name, id] : params) {
    const Tensor& p = tape.val(id);
    Tensor gt = Tensor::zeros(p.shape);
    if (p.has_grad()) gt.v = p.grad;
    out.emplace(name, std::move(gt));
  }
  return out;
}

}  // namespace gnas
