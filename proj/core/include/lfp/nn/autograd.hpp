#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "lfp/nn/resample.hpp"
#include "lfp/nn/tensor.hpp"

namespace lfp::nn {

/// Node of the reverse-mode tape. Values are immutable once created; grad is
/// allocated on first accumulation.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  Tensor& grad_buffer();
};

/// Shared handle to a tape node.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Tensor value);
  static Var leaf(Tensor value, bool requires_grad = true);

  const Tensor& value() const { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }
  const std::vector<int>& shape() const { return node_->value.shape(); }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

  // Leaf-only mutation hooks used by optimizers and gradient checks.
  Tensor& mutable_value() { return node_->value; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad();

 private:
  std::shared_ptr<Node> node_;
};

/// Runs reverse accumulation from a scalar root (seed gradient 1).
void backward(const Var& root);

/// Detaches a value from the tape.
Var detach(const Var& x);

// ---- elementwise -------------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double k);
Var add_scalar(const Var& a, double k);
Var abs(const Var& a);
Var relu(const Var& a);
Var sigmoid(const Var& a);
/// Multiplies by a constant tensor of the same shape.
Var mul_const(const Var& a, const Tensor& k);
/// Adds a constant tensor of the same shape.
Var add_const(const Var& a, const Tensor& k);

// ---- reductions ---------------------------------------------------------
Var sum(const Var& a);
Var mean(const Var& a);

// ---- channel plumbing ([C, H, W]) ----------------------------------------
Var concat_channels(std::span<const Var> parts);
Var concat_channels(std::initializer_list<Var> parts);
Var slice_channels(const Var& a, int begin, int end);
Var repeat_channels(const Var& a, int channels);

// ---- convolution --------------------------------------------------------
struct ConvGeometry {
  int stride = 1;
  int pad = 0;
  int dilation = 1;
};
int conv_output_size(int in, int kernel, const ConvGeometry& g);
/// x: [C, H, W]; weight: [O, C, K, K]; bias: [O] or undefined.
Var conv2d(const Var& x, const Var& weight, const Var& bias, const ConvGeometry& g);

/// (x - mean) / sqrt(var + eps) over `blocks` equal contiguous blocks.
/// Group normalisation and weight standardisation are both instances.
Var standardize_blocks(const Var& x, int blocks, double eps);
/// Per-channel affine transform y = gamma[c] * x + beta[c].
Var channel_affine(const Var& x, const Var& gamma, const Var& beta);

// ---- spatial linear maps -------------------------------------------------
/// out[c][y][x] = sum_i sum_j rows(y, i) cols(x, j) in[c][i][j].
Var resample(const Var& x, const AxisMap& rows, const AxisMap& cols);
Var resize_bilinear(const Var& x, int height, int width);
Var resize_nearest(const Var& x, int height, int width);
Var resize_bicubic(const Var& x, int height, int width);
Var crop(const Var& x, int y0, int x0, int height, int width);

Var max_pool(const Var& x, int kernel, int stride, int pad);

/// Dot-product attention over flattened positions. theta, phi: [K, H, W];
/// g: [V, H, W]. out_i = sum_j softmax_j(theta_i . phi_j) g_j.
Var attention(const Var& theta, const Var& phi, const Var& g);

}  // namespace lfp::nn
