#pragma once

#include <array>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace tcr::net {

using Shape = std::array<int, 4>;  // N, C, H, W

inline std::size_t shape_size(const Shape& s) {
  return static_cast<std::size_t>(s[0]) * s[1] * s[2] * s[3];
}
std::string shape_string(const Shape& s);

// Minimal reverse-mode tape over NCHW tensors. Every op appends a node; when
// recording, ops whose output depends on a differentiable input also append a
// backward closure. backward() replays closures in reverse order.
template <typename T>
class Tape {
 public:
  struct Var {
    int id = -1;
  };

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var constant(Shape shape, std::vector<T> data);
  // Value view into caller-owned memory; gradients accumulate into grad_sink
  // (nullptr for non-differentiable leaves). Both must outlive the tape.
  Var external(Shape shape, const T* data, T* grad_sink);

  const Shape& shape(Var v) const { return nodes_[v.id].shape; }
  std::span<const T> value(Var v) const;
  std::vector<T> take_value(Var v) const;
  T scalar(Var v) const { return value(v)[0]; }

  // Seeds d(out)/d(out) = 1 for a scalar node and replays the tape.
  void backward(Var out);

  // --- ops -----------------------------------------------------------------
  // Square kernel k = w.shape[2], zero padding k/2, optional bias (Co).
  Var conv2d(Var x, Var w, const Var* bias, int stride);
  Var instance_norm(Var x, Var gamma, Var beta, T eps = T(1e-5));
  Var silu(Var x);
  Var add(Var a, Var b);
  // bias: (N, C, 1, 1) broadcast over H, W.
  Var add_channel_bias(Var x, Var bias);
  // pos: (1, C, H, W) broadcast over N.
  Var add_broadcast(Var x, Var pos);
  // x: (N, Din, 1, 1), w: (Dout, Din), b: (Dout) -> (N, Dout, 1, 1)
  Var linear(Var x, Var w, const Var* bias);
  Var upsample_nearest2x(Var x);
  Var concat_channels(Var a, Var b);
  // Single-head self-attention over the H*W positions of each sample; the
  // caller adds the residual. q/k/v/o weights are (C, C), bo is (C).
  Var attention(Var x, Var wq, Var wk, Var wv, Var wo, Var bo);
  Var global_avg_pool(Var x);
  // Mean squared error over samples [n_begin, n_end) of pred vs target.
  Var mse(Var pred, Var target, int n_begin, int n_end);
  // Biased MMD^2 between rows xs and ys of feats (N, D, 1, 1), averaged over
  // Gaussian kernels with variances sigma2s (treated as constants).
  Var mmd2(Var feats, std::vector<int> xs, std::vector<int> ys, std::vector<double> sigma2s);
  // Weighted sum of scalar nodes.
  Var weighted_sum(const std::vector<std::pair<Var, double>>& terms);

 private:
  struct Node {
    Shape shape{0, 0, 0, 0};
    std::vector<T> owned;
    const T* ext = nullptr;
    std::vector<T> grad_owned;
    T* grad_ext = nullptr;
    bool needs_grad = false;
  };

  const T* val(int id) const { return nodes_[id].ext ? nodes_[id].ext : nodes_[id].owned.data(); }
  T* grad_ptr(int id);
  int make(Shape shape, bool needs_grad);
  T* out_data(int id) { return nodes_[id].owned.data(); }
  bool needs(Var v) const { return nodes_[v.id].needs_grad; }
  void push(std::function<void()> fn) { backward_ops_.push_back(std::move(fn)); }

  bool record_;
  std::vector<Node> nodes_;
  std::vector<std::function<void()>> backward_ops_;
};

}  // namespace tcr::net
