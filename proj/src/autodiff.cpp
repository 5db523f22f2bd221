#include "tcr/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace tcr::net {

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Map = Eigen::Map<MatR<T>>;
template <typename T>
using CMap = Eigen::Map<const MatR<T>>;

// Sequential reductions: Eigen's vectorized redux peels by address
// alignment, which would make results depend on where buffers land.
template <typename T>
T seq_sum(const T* x, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += x[i];
  return static_cast<T>(s);
}

template <typename T>
T seq_dot(const T* x, const T* y, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += static_cast<double>(x[i]) * y[i];
  return static_cast<T>(s);
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

// Range of output columns ox whose input column ox*stride + kx - pad is in [0, w).
inline void valid_range(int w, int wo, int kx, int stride, int pad, int& lo, int& hi) {
  const int off = kx - pad;
  lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
  hi = (w - 1 - off) >= 0 ? (w - 1 - off) / stride + 1 : 0;
  hi = std::min(hi, wo);
  lo = std::min(lo, hi);
}

template <typename T>
void im2col(const T* x, int c, int h, int w, int k, int stride, int pad, int ho, int wo, T* col) {
  const std::size_t p = static_cast<std::size_t>(ho) * wo;
  for (int ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* dst = col + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * p;
        int lo = 0, hi = 0;
        valid_range(w, wo, kx, stride, pad, lo, hi);
        const int off = kx - pad;
        for (int oy = 0; oy < ho; ++oy) {
          T* d = dst + static_cast<std::size_t>(oy) * wo;
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) {
            std::fill(d, d + wo, T(0));
            continue;
          }
          const T* src = x + (static_cast<std::size_t>(ci) * h + iy) * w;
          std::fill(d, d + lo, T(0));
          if (stride == 1) {
            for (int ox = lo; ox < hi; ++ox) d[ox] = src[ox + off];
          } else {
            for (int ox = lo; ox < hi; ++ox) d[ox] = src[ox * stride + off];
          }
          std::fill(d + hi, d + wo, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, int c, int h, int w, int k, int stride, int pad, int ho, int wo, T* x) {
  const std::size_t p = static_cast<std::size_t>(ho) * wo;
  for (int ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* s = col + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * p;
        int lo = 0, hi = 0;
        valid_range(w, wo, kx, stride, pad, lo, hi);
        const int off = kx - pad;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          const T* d = s + static_cast<std::size_t>(oy) * wo;
          T* dst = x + (static_cast<std::size_t>(ci) * h + iy) * w;
          if (stride == 1) {
            for (int ox = lo; ox < hi; ++ox) dst[ox + off] += d[ox];
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox * stride + off] += d[ox];
          }
        }
      }
    }
  }
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::string shape_string(const Shape& s) {
  std::ostringstream os;
  os << "(" << s[0] << "," << s[1] << "," << s[2] << "," << s[3] << ")";
  return os.str();
}

template <typename T>
int Tape<T>::make(Shape shape, bool needs_grad) {
  Node n;
  n.shape = shape;
  n.owned.assign(shape_size(shape), T(0));
  n.needs_grad = record_ && needs_grad;
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

template <typename T>
T* Tape<T>::grad_ptr(int id) {
  Node& n = nodes_[id];
  if (n.grad_ext) return n.grad_ext;
  if (n.grad_owned.empty()) n.grad_owned.assign(shape_size(n.shape), T(0));
  return n.grad_owned.data();
}

template <typename T>
typename Tape<T>::Var Tape<T>::constant(Shape shape, std::vector<T> data) {
  require(data.size() == shape_size(shape), "Tape::constant: data does not match shape " + shape_string(shape));
  Node n;
  n.shape = shape;
  n.owned = std::move(data);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
typename Tape<T>::Var Tape<T>::external(Shape shape, const T* data, T* grad_sink) {
  Node n;
  n.shape = shape;
  n.ext = data;
  n.grad_ext = grad_sink;
  n.needs_grad = record_ && grad_sink != nullptr;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
std::span<const T> Tape<T>::value(Var v) const {
  return std::span<const T>(val(v.id), shape_size(nodes_[v.id].shape));
}

template <typename T>
std::vector<T> Tape<T>::take_value(Var v) const {
  auto s = value(v);
  return std::vector<T>(s.begin(), s.end());
}

template <typename T>
void Tape<T>::backward(Var out) {
  require(record_, "Tape::backward: tape was not recording");
  require(shape_size(shape(out)) == 1, "Tape::backward: output must be scalar");
  if (!nodes_[out.id].needs_grad) return;
  grad_ptr(out.id)[0] += T(1);
  for (auto it = backward_ops_.rbegin(); it != backward_ops_.rend(); ++it) (*it)();
}

template <typename T>
typename Tape<T>::Var Tape<T>::conv2d(Var x, Var w, const Var* bias, int stride) {
  const Shape xs = shape(x);
  const Shape ws = shape(w);
  require(ws[2] == ws[3], "conv2d: kernel must be square, got " + shape_string(ws));
  require(ws[1] == xs[1], "conv2d: input channels " + std::to_string(xs[1]) + " do not match kernel " +
                              shape_string(ws));
  const int k = ws[2];
  const int pad = k / 2;
  const int n_batch = xs[0], ci = xs[1], h = xs[2], wd = xs[3];
  const int co = ws[0];
  const int ho = (h + 2 * pad - k) / stride + 1;
  const int wo = (wd + 2 * pad - k) / stride + 1;
  if (bias) require(shape_size(shape(*bias)) == static_cast<std::size_t>(co), "conv2d: bias size mismatch");
  const bool ng = needs(x) || needs(w) || (bias && needs(*bias));
  const int out = make({n_batch, co, ho, wo}, ng);
  const std::size_t kk = static_cast<std::size_t>(ci) * k * k;
  const std::size_t p = static_cast<std::size_t>(ho) * wo;
  const bool direct = (k == 1 && stride == 1);
  std::vector<T> col(direct ? 0 : kk * p);
  CMap<T> wm(val(w.id), co, static_cast<Eigen::Index>(kk));
  for (int n = 0; n < n_batch; ++n) {
    const T* xn = val(x.id) + static_cast<std::size_t>(n) * ci * h * wd;
    const T* cp = xn;
    if (!direct) {
      im2col(xn, ci, h, wd, k, stride, pad, ho, wo, col.data());
      cp = col.data();
    }
    CMap<T> cm(cp, static_cast<Eigen::Index>(kk), static_cast<Eigen::Index>(p));
    Map<T> ym(out_data(out) + static_cast<std::size_t>(n) * co * p, co, static_cast<Eigen::Index>(p));
    ym.noalias() = wm * cm;
    if (bias) {
      const T* b = val(bias->id);
      for (int c = 0; c < co; ++c) ym.row(c).array() += b[c];
    }
  }
  if (nodes_[out].needs_grad) {
    const int bid = bias ? bias->id : -1;
    push([=, this] {
      const bool gx = nodes_[x.id].needs_grad, gw = nodes_[w.id].needs_grad;
      const bool gb = bid >= 0 && nodes_[bid].needs_grad;
      std::vector<T> colb(direct ? 0 : kk * p);
      std::vector<T> dcol(gx && !direct ? kk * p : 0);
      CMap<T> wmb(val(w.id), co, static_cast<Eigen::Index>(kk));
      const T* gout = grad_ptr(out);
      for (int n = 0; n < n_batch; ++n) {
        CMap<T> dy(gout + static_cast<std::size_t>(n) * co * p, co, static_cast<Eigen::Index>(p));
        const T* xn = val(x.id) + static_cast<std::size_t>(n) * ci * h * wd;
        if (gw) {
          const T* cp = xn;
          if (!direct) {
            im2col(xn, ci, h, wd, k, stride, pad, ho, wo, colb.data());
            cp = colb.data();
          }
          CMap<T> cm(cp, static_cast<Eigen::Index>(kk), static_cast<Eigen::Index>(p));
          Map<T> dw(grad_ptr(w.id), co, static_cast<Eigen::Index>(kk));
          dw.noalias() += dy * cm.transpose();
        }
        if (gb) {
          T* db = grad_ptr(bid);
          for (int c = 0; c < co; ++c) db[c] += seq_sum(dy.row(c).data(), static_cast<int>(p));
        }
        if (gx) {
          T* dxn = grad_ptr(x.id) + static_cast<std::size_t>(n) * ci * h * wd;
          if (direct) {
            Map<T> dx(dxn, static_cast<Eigen::Index>(kk), static_cast<Eigen::Index>(p));
            dx.noalias() += wmb.transpose() * dy;
          } else {
            Map<T> dc(dcol.data(), static_cast<Eigen::Index>(kk), static_cast<Eigen::Index>(p));
            dc.noalias() = wmb.transpose() * dy;
            col2im_add(dcol.data(), ci, h, wd, k, stride, pad, ho, wo, dxn);
          }
        }
      }
    });
  }
  return Var{out};
}

template <typename T>
typename Tape<T>::Var Tape<T>::instance_norm(Var x, Var gamma, Var beta, T eps) {
  const Shape xs = shape(x);
  const int n_batch = xs[0], c = xs[1];
  const std::size_t m = static_cast<std::size_t>(xs[2]) * xs[3];
  require(shape_size(shape(gamma)) == static_cast<std::size_t>(c) &&
              shape_size(shape(beta)) == static_cast<std::size_t>(c),
          "instance_norm: affine parameters must have " + std::to_string(c) + " entries");
  const int out = make(xs, needs(x) || needs(gamma) || needs(beta));
  auto stats = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n_batch) * c * 2);
  const T* xv = val(x.id);
  const T* g = val(gamma.id);
  const T* b = val(beta.id);
  T* y = out_data(out);
  for (int n = 0; n < n_batch; ++n) {
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t base = (static_cast<std::size_t>(n) * c + ch) * m;
      double s = 0.0;
      for (std::size_t k = 0; k < m; ++k) s += xv[base + k];
      const double mean = s / static_cast<double>(m);
      double s2 = 0.0;
      for (std::size_t k = 0; k < m; ++k) {
        const double d = xv[base + k] - mean;
        s2 += d * d;
      }
      const double inv = 1.0 / std::sqrt(s2 / static_cast<double>(m) + static_cast<double>(eps));
      (*stats)[(static_cast<std::size_t>(n) * c + ch) * 2] = mean;
      (*stats)[(static_cast<std::size_t>(n) * c + ch) * 2 + 1] = inv;
      const T tm = static_cast<T>(mean), ti = static_cast<T>(inv);
      for (std::size_t k = 0; k < m; ++k) y[base + k] = g[ch] * ((xv[base + k] - tm) * ti) + b[ch];
    }
  }
  if (nodes_[out].needs_grad) {
    push([=, this] {
      const T* xv2 = val(x.id);
      const T* g2 = val(gamma.id);
      const T* gy = grad_ptr(out);
      const bool gx = nodes_[x.id].needs_grad, gg = nodes_[gamma.id].needs_grad,
                 gbeta = nodes_[beta.id].needs_grad;
      T* dx = gx ? grad_ptr(x.id) : nullptr;
      T* dg = gg ? grad_ptr(gamma.id) : nullptr;
      T* db = gbeta ? grad_ptr(beta.id) : nullptr;
      for (int n = 0; n < n_batch; ++n) {
        for (int ch = 0; ch < c; ++ch) {
          const std::size_t idx = static_cast<std::size_t>(n) * c + ch;
          const std::size_t base = idx * m;
          const double mean = (*stats)[idx * 2];
          const double inv = (*stats)[idx * 2 + 1];
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (std::size_t k = 0; k < m; ++k) {
            const double xhat = (xv2[base + k] - mean) * inv;
            sum_dy += gy[base + k];
            sum_dy_xhat += gy[base + k] * xhat;
          }
          if (dg) dg[ch] += static_cast<T>(sum_dy_xhat);
          if (db) db[ch] += static_cast<T>(sum_dy);
          if (dx) {
            const double gam = g2[ch];
            const double md = static_cast<double>(m);
            for (std::size_t k = 0; k < m; ++k) {
              const double xhat = (xv2[base + k] - mean) * inv;
              dx[base + k] += static_cast<T>(gam * inv / md * (md * gy[base + k] - sum_dy - xhat * sum_dy_xhat));
            }
          }
        }
      }
    });
  }
  return Var{out};
}

template <typename T>
typename Tape<T>::Var Tape<T>::silu(Var x) {
  const Shape xs = shape(x);
  const std::size_t sz = shape_size(xs);
  const int out = make(xs, needs(x));
  const T* xv = val(x.id);
  T* y = out_data(out);
  for (std::size_t k = 0; k < sz; ++k) {
    const T v = xv[k];
    y[k] = v / (T(1) + std::exp(-v));
  }
  if (nodes_[out].needs_grad) {
    push([=, this] {
      const T* xv2 = val(x.id);
      const T* gy = grad_ptr(out);
      T* dx = grad_ptr(x.id);
      for (std::size_t k = 0; k < sz; ++k) {
        const T v = xv2[k];
        const T s = T(1) / (T(1) + std::exp(-v));
        dx[k] += gy[k] * s * (T(1) + v * (T(1) - s));
      }
    });
  }
  return Var{out};
}

template <typename T>
typename Tape<T>::Var Tape<T>::add(Var a, Var b) {
  require(shape(a) == shape(b), "add: shape mismatch " + shape_string(shape(a)) + " vs " + shape_string(shape(b)));
  const std::size_t sz = shape_size(shape(a));
  const int out = make(shape(a), needs(a) || needs(b));
  const T* av = val(a.id);
  const T* bv = val(b.id);
  T* y = out_data(out);
  for (std::size_t k = 0; k < sz; ++k) y[k] = av[k] + bv[k];
  if (nodes_[out].needs_grad) {
    push([=, this] {
      const T* gy = grad_ptr(out);
      for (Var v : {a, b}) {
        if (!nodes_[v.id].needs_grad) continue;
        T* d = grad_ptr(v.id);
        for (std::size_t k = 0; k < sz; ++k) d[k] += gy[k];
      }
    });
  }
  return Var{out};
}

template <typename T>
typename Tape<T>::Var Tape<T>::add_channel_bias(Var x, Var bias) {
  const Shape xs = shape(x);
  const Shape bs = shape(bias);
  require(bs[0] == xs[0] && bs[1] == xs[1] && bs[2] == 1 && bs[3] == 1,
          "add_channel_bias: bias " + shape_string(bs) + " incompatible with " + shape_string(xs));
  const std::size_t m = static_cast<std::size_t>(xs[2]) * xs[3];
  const std::size_t nc = static_cast<std::size_t>(xs[0]) * xs[1];
  const int out = make(xs, needs(x) || needs(bias));
  const T* xv = val(x.id);
  const T* bv = val(bias.id);
  T* y = out_data(out);
  for (std::size_t q = 0; q < nc; ++q)
    for (std::size_t k = 0; k < m; ++k) y[q * m + k] = xv[q * m + k] + bv[q];
  if (nodes_[out].needs_grad) {
    push([=, this] {
      const T* gy = grad_ptr(out);
      if (nodes_[x.id].needs_grad) {
        T* dx = grad_ptr(x.id);
        for (std::size_t k = 0; k < nc * m; ++k) dx[k] += gy[k];
      }
      if (nodes_[bias.id].needs_grad) {
        T* db = grad_ptr(bias.id);
        for (std::size_t q = 0; q < nc; ++q) {
          T s = 0;
          for (std::size_t k = 0; k < m; ++k) s += gy[q * m + k];
          db[q] += s;
        }
      }
    });
  }
  return Var{out};
}

template <typename T>
typename Tape<T>::Var Tape<T>::add_broadcast(Var x, Var pos) {
  const Shape xs = shape(x);
  const Shape ps = shape(pos);
  require(ps[0] == 1 && ps[1] == xs[1] && ps[2] == xs[2] && ps[3] == xs[3],
          "add_broadcast: " + shape_string(ps) + " incompatible with " + shape_string(xs));
  const std::size_t per = shape_size(ps);
  const int out = make(xs, needs(x) || needs(pos));
  const T* xv = val(x.id);
  const T* pv = val(pos.id);
  T* y = out_data(out);
  for (int n = 0; n < xs[0]; ++n)
    for (std::size_t k = 0; k < per; ++k) y[n * per + k] = xv[n * per + k] + pv[k];
  if (nodes_[out].needs_grad) {
    const int nb = xs[0];
    push([=, this] {
      const T* gy = grad_ptr(out);
      if (nodes_[x.id].needs_grad) {
        T* dx = grad_ptr(x.id);
        for (std::size_t k = 0; k < per * nb; ++k) dx[k] += gy[k];
      }
      if (nodes_[pos.id].needs_grad) {
        T* dp = grad_ptr(pos.id);
        for (int n = 0; n < nb; ++n)
          for (std::size_t k = 0; k < per; ++k) dp[k] += gy[n * per + k];
      }
    });
  }
  return Var{out};
}

template <typename T>
typename Tape<T>::Var Tape<T>::linear(Var x, Var w, const Var* bias) {
  const Shape xs = shape(x);
  const Shape ws = shape(w);
  const int n_batch = xs[0];
  const int din = xs[1] * xs[2] * xs[3];
  const int dout = ws[0];
  require(ws[1] * ws[2] * ws[3] == din, "linear: weight " + shape_string(ws) + " incompatible with input " +
                                            shape_string(xs));
  if (bias) require(shape_size(shape(*bias)) == static_cast<std::size_t>(dout), "linear: bias size mismatch");
  const int out = make({n_batch, dout, 1, 1}, needs(x) || needs(w) || (bias && needs(*bias)));
  CMap<T> xm(val(x.id), n_batch, din);
  CMap<T> wm(val(w.id), dout, din);
  Map<T> ym(out_data(out), n_batch, dout);
  ym.noalias() = xm * wm.transpose();
  if (bias) {
    const T* b = val(bias->id);
    for (int n = 0; n < n_batch; ++n)
      for (int o = 0; o < dout; ++o) ym(n, o) += b[o];
  }
  if (nodes_[out].needs_grad) {
    const int bid = bias ? bias->id : -1;
    push([=, this] {
      CMap<T> gy(grad_ptr(out), n_batch, dout);
      CMap<T> xm2(val(x.id), n_batch, din);
      CMap<T> wm2(val(w.id), dout, din);
      if (nodes_[w.id].needs_grad) {
        Map<T> dw(grad_ptr(w.id), dout, din);
        dw.noalias() += gy.transpose() * xm2;
      }
      if (bid >= 0 && nodes_[bid].needs_grad) {
        T* db = grad_ptr(bid);
        for (int n = 0; n < n_batch; ++n)
          for (int o = 0; o < dout; ++o) db[o] += gy(n, o);
      }
      if (nodes_[x.id].needs_grad) {
        Map<T> dx(grad_ptr(x.id), n_batch, din);
        dx.noalias() += gy * wm2;
      }
    });
  }
  return Var{out};
}

template <typename T>
typename Tape<T>::Var Tape<T>::upsample_nearest2x(Var x) {
  const Shape xs = shape(x);
  const int h = xs[2], w = xs[3];
  const std::size_t nc = static_cast<std::size_t>(xs[0]) * xs[1];
  const int out = make({xs[0], xs[1], 2 * h, 2 * w}, needs(x));
  const T* xv = val(x.id);
  T* y = out_data(out);
  for (std::size_t q = 0; q < nc; ++q) {
    const T* src = xv + q * h * w;
    T* dst = y + q * 4 * h * w;
    for (int i = 0; i < 2 * h; ++i)
      for (int j = 0; j < 2 * w; ++j) dst[static_cast<std::size_t>(i) * 2 * w + j] = src[(i / 2) * w + j / 2];
  }
  if (nodes_[out].needs_grad) {
    push([=, this] {
      const T* gy = grad_ptr(out);
      T* dx = grad_ptr(x.id);
      for (std::size_t q = 0; q < nc; ++q) {
        const T* src = gy + q * 4 * h * w;
        T* dst = dx + q * h * w;
        for (int i = 0; i < 2 * h; ++i)
          for (int j = 0; j < 2 * w; ++j) dst[(i / 2) * w + j / 2] += src[static_cast<std::size_t>(i) * 2 * w + j];
      }
    });
  }
  return Var{out};
}

template <typename T>
typename Tape<T>::Var Tape<T>::concat_channels(Var a, Var b) {
  const Shape as = shape(a);
  const Shape bs = shape(b);
  require(as[0] == bs[0] && as[2] == bs[2] && as[3] == bs[3],
          "concat_channels: " + shape_string(as) + " vs " + shape_string(bs));
  const std::size_t pa = static_cast<std::size_t>(as[1]) * as[2] * as[3];
  const std::size_t pb = static_cast<std::size_t>(bs[1]) * bs[2] * bs[3];
  const int out = make({as[0], as[1] + bs[1], as[2], as[3]}, needs(a) || needs(b));
  T* y = out_data(out);
  for (int n = 0; n < as[0]; ++n) {
    std::copy_n(val(a.id) + n * pa, pa, y + n * (pa + pb));
    std::copy_n(val(b.id) + n * pb, pb, y + n * (pa + pb) + pa);
  }
  if (nodes_[out].needs_grad) {
    const int nb = as[0];
    push([=, this] {
      const T* gy = grad_ptr(out);
      if (nodes_[a.id].needs_grad) {
        T* d = grad_ptr(a.id);
        for (int n = 0; n < nb; ++n)
          for (std::size_t k = 0; k < pa; ++k) d[n * pa + k] += gy[n * (pa + pb) + k];
      }
      if (nodes_[b.id].needs_grad) {
        T* d = grad_ptr(b.id);
        for (int n = 0; n < nb; ++n)
          for (std::size_t k = 0; k < pb; ++k) d[n * pb + k] += gy[n * (pa + pb) + pa + k];
      }
    });
  }
  return Var{out};
}

template <typename T>
typename Tape<T>::Var Tape<T>::attention(Var x, Var wq, Var wk, Var wv, Var wo, Var bo) {
  const Shape xs = shape(x);
  const int n_batch = xs[0], c = xs[1];
  const int p = xs[2] * xs[3];
  for (Var wv_ : {wq, wk, wv, wo}) {
    require(shape_size(shape(wv_)) == static_cast<std::size_t>(c) * c, "attention: projection must be CxC");
  }
  require(shape_size(shape(bo)) == static_cast<std::size_t>(c), "attention: output bias must have C entries");
  const bool ng = needs(x) || needs(wq) || needs(wk) || needs(wv) || needs(wo) || needs(bo);
  const int out = make(xs, ng);
  const T scale = T(1) / std::sqrt(static_cast<T>(c));
  // Per-sample cache: Q, K, V, O (C x P each) and A (P x P).
  const std::size_t cp = static_cast<std::size_t>(c) * p;
  const std::size_t pp = static_cast<std::size_t>(p) * p;
  auto cache = std::make_shared<std::vector<T>>(static_cast<std::size_t>(n_batch) * (4 * cp + pp));
  CMap<T> mq(val(wq.id), c, c), mk(val(wk.id), c, c), mv(val(wv.id), c, c), mo(val(wo.id), c, c);
  const T* bov = val(bo.id);
  for (int n = 0; n < n_batch; ++n) {
    T* base = cache->data() + n * (4 * cp + pp);
    CMap<T> xm(val(x.id) + n * cp, c, p);
    Map<T> q(base, c, p), k(base + cp, c, p), v(base + 2 * cp, c, p), o(base + 3 * cp, c, p);
    Map<T> a(base + 4 * cp, p, p);
    q.noalias() = mq * xm;
    k.noalias() = mk * xm;
    v.noalias() = mv * xm;
    a.noalias() = (q.transpose() * k) * scale;
    for (int i = 0; i < p; ++i) {
      T* row = a.row(i).data();
      const T mx = *std::max_element(row, row + p);
      double s = 0.0;
      for (int j = 0; j < p; ++j) {
        row[j] = std::exp(row[j] - mx);
        s += row[j];
      }
      const T inv = static_cast<T>(1.0 / s);
      for (int j = 0; j < p; ++j) row[j] *= inv;
    }
    o.noalias() = v * a.transpose();
    Map<T> y(out_data(out) + n * cp, c, p);
    y.noalias() = mo * o;
    for (int ch = 0; ch < c; ++ch) y.row(ch).array() += bov[ch];
  }
  if (nodes_[out].needs_grad) {
    push([=, this] {
      CMap<T> mq2(val(wq.id), c, c), mk2(val(wk.id), c, c), mv2(val(wv.id), c, c), mo2(val(wo.id), c, c);
      MatR<T> d_o(c, p), dv(c, p), dq(c, p), dk(c, p), da(p, p);
      for (int n = 0; n < n_batch; ++n) {
        const T* base = cache->data() + n * (4 * cp + pp);
        CMap<T> xm(val(x.id) + n * cp, c, p);
        CMap<T> q(base, c, p), k(base + cp, c, p), v(base + 2 * cp, c, p), o(base + 3 * cp, c, p);
        CMap<T> a(base + 4 * cp, p, p);
        CMap<T> gy(grad_ptr(out) + n * cp, c, p);
        if (nodes_[wo.id].needs_grad) {
          Map<T> dwo(grad_ptr(wo.id), c, c);
          dwo.noalias() += gy * o.transpose();
        }
        if (nodes_[bo.id].needs_grad) {
          T* db = grad_ptr(bo.id);
          for (int ch = 0; ch < c; ++ch) db[ch] += seq_sum(gy.row(ch).data(), p);
        }
        d_o.noalias() = mo2.transpose() * gy;
        dv.noalias() = d_o * a;
        da.noalias() = d_o.transpose() * v;
        for (int i = 0; i < p; ++i) {
          const T dot = seq_dot(da.row(i).data(), a.row(i).data(), p);
          da.row(i) = a.row(i).array() * (da.row(i).array() - dot);
        }
        dq.noalias() = (k * da.transpose()) * scale;
        dk.noalias() = (q * da) * scale;
        if (nodes_[wq.id].needs_grad) Map<T>(grad_ptr(wq.id), c, c).noalias() += dq * xm.transpose();
        if (nodes_[wk.id].needs_grad) Map<T>(grad_ptr(wk.id), c, c).noalias() += dk * xm.transpose();
        if (nodes_[wv.id].needs_grad) Map<T>(grad_ptr(wv.id), c, c).noalias() += dv * xm.transpose();
        if (nodes_[x.id].needs_grad) {
          Map<T> dx(grad_ptr(x.id) + n * cp, c, p);
          dx.noalias() += mq2.transpose() * dq;
          dx.noalias() += mk2.transpose() * dk;
          dx.noalias() += mv2.transpose() * dv;
        }
      }
    });
  }
  return Var{out};
}

template <typename T>
typename Tape<T>::Var Tape<T>::global_avg_pool(Var x) {
  const Shape xs = shape(x);
  const std::size_t nc = static_cast<std::size_t>(xs[0]) * xs[1];
  const std::size_t m = static_cast<std::size_t>(xs[2]) * xs[3];
  const int out = make({xs[0], xs[1], 1, 1}, needs(x));
  const T* xv = val(x.id);
  T* y = out_data(out);
  for (std::size_t q = 0; q < nc; ++q) {
    double s = 0.0;
    for (std::size_t k = 0; k < m; ++k) s += xv[q * m + k];
    y[q] = static_cast<T>(s / static_cast<double>(m));
  }
  if (nodes_[out].needs_grad) {
    push([=, this] {
      const T* gy = grad_ptr(out);
      T* dx = grad_ptr(x.id);
      const T inv = T(1) / static_cast<T>(m);
      for (std::size_t q = 0; q < nc; ++q)
        for (std::size_t k = 0; k < m; ++k) dx[q * m + k] += gy[q] * inv;
    });
  }
  return Var{out};
}

template <typename T>
typename Tape<T>::Var Tape<T>::mse(Var pred, Var target, int n_begin, int n_end) {
  const Shape ps = shape(pred);
  require(ps == shape(target), "mse: prediction " + shape_string(ps) + " vs target " + shape_string(shape(target)));
  require(0 <= n_begin && n_begin < n_end && n_end <= ps[0], "mse: invalid sample range");
  const std::size_t per = static_cast<std::size_t>(ps[1]) * ps[2] * ps[3];
  const std::size_t lo = n_begin * per, hi = n_end * per;
  const int out = make({1, 1, 1, 1}, needs(pred) || needs(target));
  const T* pv = val(pred.id);
  const T* tv = val(target.id);
  // Extended accumulator keeps finite-difference checks above the rounding floor.
  long double s = 0.0L;
  for (std::size_t k = lo; k < hi; ++k) {
    const long double d = static_cast<long double>(pv[k]) - tv[k];
    s += d * d;
  }
  const double count = static_cast<double>(hi - lo);
  out_data(out)[0] = static_cast<T>(s / count);
  if (nodes_[out].needs_grad) {
    push([=, this] {
      const T g = grad_ptr(out)[0];
      const T f = static_cast<T>(2.0 / count) * g;
      const T* pv2 = val(pred.id);
      const T* tv2 = val(target.id);
      if (nodes_[pred.id].needs_grad) {
        T* d = grad_ptr(pred.id);
        for (std::size_t k = lo; k < hi; ++k) d[k] += f * (pv2[k] - tv2[k]);
      }
      if (nodes_[target.id].needs_grad) {
        T* d = grad_ptr(target.id);
        for (std::size_t k = lo; k < hi; ++k) d[k] -= f * (pv2[k] - tv2[k]);
      }
    });
  }
  return Var{out};
}

template <typename T>
typename Tape<T>::Var Tape<T>::mmd2(Var feats, std::vector<int> xs, std::vector<int> ys, std::vector<double> sigma2s) {
  const Shape fs = shape(feats);
  const int d = fs[1] * fs[2] * fs[3];
  require(!xs.empty() && !ys.empty(), "mmd2: both sample sets must be nonempty");
  require(!sigma2s.empty(), "mmd2: at least one bandwidth required");
  for (int r : xs) require(r >= 0 && r < fs[0], "mmd2: row index out of range");
  for (int r : ys) require(r >= 0 && r < fs[0], "mmd2: row index out of range");
  const int out = make({1, 1, 1, 1}, needs(feats));
  const T* f = val(feats.id);
  auto sqd = [f, d](int a, int b) {
    double s = 0.0;
    for (int k = 0; k < d; ++k) {
      const double diff = static_cast<double>(f[a * d + k]) - f[b * d + k];
      s += diff * diff;
    }
    return s;
  };
  const double m = static_cast<double>(xs.size()), n = static_cast<double>(ys.size());
  double total = 0.0;
  for (double s2 : sigma2s) {
    double kxx = 0.0, kyy = 0.0, kxy = 0.0;
    for (int a : xs)
      for (int b : xs) kxx += std::exp(-sqd(a, b) / (2.0 * s2));
    for (int a : ys)
      for (int b : ys) kyy += std::exp(-sqd(a, b) / (2.0 * s2));
    for (int a : xs)
      for (int b : ys) kxy += std::exp(-sqd(a, b) / (2.0 * s2));
    total += kxx / (m * m) + kyy / (n * n) - 2.0 * kxy / (m * n);
  }
  out_data(out)[0] = static_cast<T>(total / static_cast<double>(sigma2s.size()));
  if (nodes_[out].needs_grad) {
    push([=, this] {
      const double g = grad_ptr(out)[0] / static_cast<double>(sigma2s.size());
      const T* fv = val(feats.id);
      T* df = grad_ptr(feats.id);
      auto sqd2 = [fv, d](int a, int b) {
        double s = 0.0;
        for (int k = 0; k < d; ++k) {
          const double diff = static_cast<double>(fv[a * d + k]) - fv[b * d + k];
          s += diff * diff;
        }
        return s;
      };
      // d/da k(a,b) = -k(a,b) (a - b) / s2; each pair term contributes to both rows.
      auto pair = [&](int a, int b, double coef, double s2) {
        const double kv = std::exp(-sqd2(a, b) / (2.0 * s2));
        const double c = coef * g * (-kv / s2);
        for (int k = 0; k < d; ++k) {
          const double diff = static_cast<double>(fv[a * d + k]) - fv[b * d + k];
          df[a * d + k] += static_cast<T>(c * diff);
          df[b * d + k] -= static_cast<T>(c * diff);
        }
      };
      for (double s2 : sigma2s) {
        for (int a : xs)
          for (int b : xs) pair(a, b, 1.0 / (m * m), s2);
        for (int a : ys)
          for (int b : ys) pair(a, b, 1.0 / (n * n), s2);
        for (int a : xs)
          for (int b : ys) pair(a, b, -2.0 / (m * n), s2);
      }
    });
  }
  return Var{out};
}

template <typename T>
typename Tape<T>::Var Tape<T>::weighted_sum(const std::vector<std::pair<Var, double>>& terms) {
  bool ng = false;
  double s = 0.0;
  for (const auto& [v, wgt] : terms) {
    require(shape_size(shape(v)) == 1, "weighted_sum: terms must be scalar");
    ng = ng || needs(v);
    s += wgt * static_cast<double>(val(v.id)[0]);
  }
  const int out = make({1, 1, 1, 1}, ng);
  out_data(out)[0] = static_cast<T>(s);
  if (nodes_[out].needs_grad) {
    push([=, this] {
      const T g = grad_ptr(out)[0];
      for (const auto& [v, wgt] : terms) {
        if (nodes_[v.id].needs_grad) grad_ptr(v.id)[0] += static_cast<T>(wgt) * g;
      }
    });
  }
  return Var{out};
}

template class Tape<float>;
template class Tape<double>;

}  // namespace tcr::net
