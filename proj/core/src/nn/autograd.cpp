#include "lfp/nn/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "lfp/errors.hpp"

namespace lfp::nn {

Tensor& Node::grad_buffer() {
  if (grad.size() != value.size() || grad.shape() != value.shape()) grad = Tensor(value.shape());
  return grad;
}

Var Var::constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

Var Var::leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return Var(std::move(n));
}

void Var::zero_grad() {
  if (node_ && !node_->grad.empty()) node_->grad.fill(0.0);
}

namespace {

using NodePtr = std::shared_ptr<Node>;
using BackwardFn = std::function<void(Node&)>;

Var make_node(Tensor value, std::vector<Var> inputs, BackwardFn fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const auto& in : inputs) {
    if (in.requires_grad()) n->requires_grad = true;
  }
  if (n->requires_grad) {
    n->inputs.reserve(inputs.size());
    for (auto& in : inputs) n->inputs.push_back(in.shared());
    n->backward = std::move(fn);
  }
  return Var(std::move(n));
}

// Gradient sink for input i, or nullptr when that input is not tracked.
double* sink(Node& self, std::size_t i) {
  Node& in = *self.inputs[i];
  if (!in.requires_grad) return nullptr;
  return in.grad_buffer().data();
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

void require_rank3(const Var& a, const char* op) {
  if (a.value().rank() != 3) {
    throw DimensionError(std::string(op) + ": expected [C, H, W], got " +
                         shape_string(a.shape()));
  }
}

}  // namespace

void backward(const Var& root) {
  if (!root.requires_grad()) return;
  if (root.value().size() != 1) {
    throw DimensionError("backward() needs a scalar root, got " + shape_string(root.shape()));
  }
  // Iterative post-order DFS; reverse post-order is a valid topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node(), 0}};
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) {
    if (n->backward) n->grad = Tensor(n->value.shape());
  }
  root.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward) n->backward(*n);
  }
  // Interior gradients are not needed after the sweep.
  for (Node* n : order) {
    if (n->backward) n->grad = Tensor();
  }
}

Var detach(const Var& x) { return Var::constant(x.value()); }

// ---- elementwise -------------------------------------------------------

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_node(std::move(out), {a, b}, [](Node& self) {
    const std::size_t n = self.value.size();
    for (std::size_t k = 0; k < 2; ++k) {
      if (double* g = sink(self, k)) {
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i];
      }
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_node(std::move(out), {a, b}, [](Node& self) {
    const std::size_t n = self.value.size();
    if (double* g = sink(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i];
    }
    if (double* g = sink(self, 1)) {
      for (std::size_t i = 0; i < n; ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_node(std::move(out), {a, b}, [](Node& self) {
    const std::size_t n = self.value.size();
    const Tensor& av = self.inputs[0]->value;
    const Tensor& bv = self.inputs[1]->value;
    if (double* g = sink(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * bv[i];
    }
    if (double* g = sink(self, 1)) {
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

Var scale(const Var& a, double k) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= k;
  return make_node(std::move(out), {a}, [k](Node& self) {
    if (double* g = sink(self, 0)) {
      for (std::size_t i = 0; i < self.value.size(); ++i) g[i] += k * self.grad[i];
    }
  });
}

Var add_scalar(const Var& a, double k) {
  Tensor out = a.value();
  for (double& v : out.values()) v += k;
  return make_node(std::move(out), {a}, [](Node& self) {
    if (double* g = sink(self, 0)) {
      for (std::size_t i = 0; i < self.value.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Var abs(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = std::abs(v);
  return make_node(std::move(out), {a}, [](Node& self) {
    if (double* g = sink(self, 0)) {
      const Tensor& x = self.inputs[0]->value;
      for (std::size_t i = 0; i < self.value.size(); ++i) {
        const double s = x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0);
        g[i] += s * self.grad[i];
      }
    }
  });
}

Var relu(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return make_node(std::move(out), {a}, [](Node& self) {
    if (double* g = sink(self, 0)) {
      for (std::size_t i = 0; i < self.value.size(); ++i) {
        if (self.value[i] > 0.0) g[i] += self.grad[i];
      }
    }
  });
}

Var sigmoid(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  return make_node(std::move(out), {a}, [](Node& self) {
    if (double* g = sink(self, 0)) {
      for (std::size_t i = 0; i < self.value.size(); ++i) {
        const double s = self.value[i];
        g[i] += self.grad[i] * s * (1.0 - s);
      }
    }
  });
}

Var mul_const(const Var& a, const Tensor& k) {
  if (a.shape() != k.shape()) {
    throw DimensionError("mul_const: shape mismatch " + shape_string(a.shape()) + " vs " +
                         k.shape_string());
  }
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= k[i];
  return make_node(std::move(out), {a}, [k](Node& self) {
    if (double* g = sink(self, 0)) {
      for (std::size_t i = 0; i < self.value.size(); ++i) g[i] += self.grad[i] * k[i];
    }
  });
}

Var add_const(const Var& a, const Tensor& k) {
  if (a.shape() != k.shape()) {
    throw DimensionError("add_const: shape mismatch " + shape_string(a.shape()) + " vs " +
                         k.shape_string());
  }
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += k[i];
  return make_node(std::move(out), {a}, [](Node& self) {
    if (double* g = sink(self, 0)) {
      for (std::size_t i = 0; i < self.value.size(); ++i) g[i] += self.grad[i];
    }
  });
}

// ---- reductions ---------------------------------------------------------

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return make_node(Tensor::scalar(s), {a}, [](Node& self) {
    if (double* g = sink(self, 0)) {
      const double go = self.grad[0];
      const std::size_t n = self.inputs[0]->value.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += go;
    }
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

// ---- channel plumbing ----------------------------------------------------

Var concat_channels(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_channels: no inputs");
  int channels = 0;
  for (const auto& p : parts) {
    require_rank3(p, "concat_channels");
    if (p.value().height() != parts[0].value().height() ||
        p.value().width() != parts[0].value().width()) {
      throw DimensionError("concat_channels: spatial mismatch " + shape_string(p.shape()) +
                           " vs " + shape_string(parts[0].shape()));
    }
    channels += p.value().channels();
  }
  Tensor out = Tensor::chw(channels, parts[0].value().height(), parts[0].value().width());
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data(), p.value().data() + p.value().size(), out.data() + off);
    off += p.value().size();
  }
  return make_node(std::move(out), std::vector<Var>(parts.begin(), parts.end()), [](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      const std::size_t n = self.inputs[k]->value.size();
      if (double* g = sink(self, k)) {
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[off + i];
      }
      off += n;
    }
  });
}

Var concat_channels(std::initializer_list<Var> parts) {
  return concat_channels(std::span<const Var>(parts.begin(), parts.size()));
}

Var slice_channels(const Var& a, int begin, int end) {
  require_rank3(a, "slice_channels");
  if (begin < 0 || end > a.value().channels() || begin >= end) {
    throw DimensionError("slice_channels: bad range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") of " + shape_string(a.shape()));
  }
  const std::size_t plane = a.value().plane();
  Tensor out = Tensor::chw(end - begin, a.value().height(), a.value().width());
  std::copy(a.value().data() + begin * plane, a.value().data() + end * plane, out.data());
  return make_node(std::move(out), {a}, [begin, plane](Node& self) {
    if (double* g = sink(self, 0)) {
      g += begin * plane;
      for (std::size_t i = 0; i < self.value.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Var repeat_channels(const Var& a, int channels) {
  require_rank3(a, "repeat_channels");
  if (a.value().channels() != 1) throw DimensionError("repeat_channels expects one channel");
  const std::size_t plane = a.value().plane();
  Tensor out = Tensor::chw(channels, a.value().height(), a.value().width());
  for (int c = 0; c < channels; ++c) {
    std::copy(a.value().data(), a.value().data() + plane, out.data() + c * plane);
  }
  return make_node(std::move(out), {a}, [channels, plane](Node& self) {
    if (double* g = sink(self, 0)) {
      for (int c = 0; c < channels; ++c) {
        for (std::size_t i = 0; i < plane; ++i) g[i] += self.grad[c * plane + i];
      }
    }
  });
}

// ---- convolution --------------------------------------------------------

int conv_output_size(int in, int kernel, const ConvGeometry& g) {
  return (in + 2 * g.pad - g.dilation * (kernel - 1) - 1) / g.stride + 1;
}

namespace {

struct Range {
  int lo;
  int hi;
};

// Output indices o in [0, out) with 0 <= o * stride + shift < in.
Range valid_range(int shift, int stride, int in, int out) {
  const int lo = shift >= 0 ? 0 : (-shift + stride - 1) / stride;
  const int last = in - 1 - shift;
  const int hi = last < 0 ? 0 : std::min(out, last / stride + 1);
  return {std::min(lo, hi), hi};
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, const ConvGeometry& g) {
  require_rank3(x, "conv2d");
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  if (wv.rank() != 4 || wv.dim(2) != wv.dim(3)) {
    throw DimensionError("conv2d: weight must be [O, C, K, K], got " + wv.shape_string());
  }
  const int C = xv.channels(), H = xv.height(), W = xv.width();
  const int O = wv.dim(0), K = wv.dim(2);
  if (wv.dim(1) != C) {
    throw DimensionError("conv2d: input has " + std::to_string(C) + " channels, weight expects " +
                         std::to_string(wv.dim(1)));
  }
  if (bias.defined() && (bias.value().rank() != 1 || bias.value().dim(0) != O)) {
    throw DimensionError("conv2d: bias shape " + shape_string(bias.shape()));
  }
  const int OH = conv_output_size(H, K, g);
  const int OW = conv_output_size(W, K, g);
  if (OH < 1 || OW < 1) {
    throw DimensionError("conv2d: input " + xv.shape_string() + " too small for kernel " +
                         std::to_string(K));
  }
  Tensor out = Tensor::chw(O, OH, OW);
  const int s = g.stride;
  for (int o = 0; o < O; ++o) {
    double* out_o = out.data() + static_cast<std::size_t>(o) * OH * OW;
    if (bias.defined()) std::fill(out_o, out_o + static_cast<std::size_t>(OH) * OW, bias.value()[o]);
    for (int c = 0; c < C; ++c) {
      const double* in_c = xv.data() + static_cast<std::size_t>(c) * H * W;
      for (int ky = 0; ky < K; ++ky) {
        const int dy = ky * g.dilation - g.pad;
        const Range ry = valid_range(dy, s, H, OH);
        for (int kx = 0; kx < K; ++kx) {
          const double w = wv[((static_cast<std::size_t>(o) * C + c) * K + ky) * K + kx];
          const int dx = kx * g.dilation - g.pad;
          const Range rx = valid_range(dx, s, W, OW);
          for (int oy = ry.lo; oy < ry.hi; ++oy) {
            const double* row_in = in_c + static_cast<std::size_t>(oy * s + dy) * W + dx;
            double* row_out = out_o + static_cast<std::size_t>(oy) * OW;
            if (s == 1) {
              for (int ox = rx.lo; ox < rx.hi; ++ox) row_out[ox] += w * row_in[ox];
            } else {
              for (int ox = rx.lo; ox < rx.hi; ++ox) row_out[ox] += w * row_in[ox * s];
            }
          }
        }
      }
    }
  }
  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  const bool has_bias = bias.defined();
  return make_node(std::move(out), std::move(inputs), [g, has_bias](Node& self) {
    const Tensor& xv = self.inputs[0]->value;
    const Tensor& wv = self.inputs[1]->value;
    const int C = xv.channels(), H = xv.height(), W = xv.width();
    const int O = wv.dim(0), K = wv.dim(2);
    const int OH = self.value.height(), OW = self.value.width();
    const int s = g.stride;
    double* gx = sink(self, 0);
    double* gw = sink(self, 1);
    double* gb = has_bias ? sink(self, 2) : nullptr;
    for (int o = 0; o < O; ++o) {
      const double* go = self.grad.data() + static_cast<std::size_t>(o) * OH * OW;
      if (gb) {
        double acc = 0.0;
        for (std::size_t i = 0; i < static_cast<std::size_t>(OH) * OW; ++i) acc += go[i];
        gb[o] += acc;
      }
      if (!gx && !gw) continue;
      for (int c = 0; c < C; ++c) {
        const double* in_c = xv.data() + static_cast<std::size_t>(c) * H * W;
        double* gin_c = gx ? gx + static_cast<std::size_t>(c) * H * W : nullptr;
        for (int ky = 0; ky < K; ++ky) {
          const int dy = ky * g.dilation - g.pad;
          const Range ry = valid_range(dy, s, H, OH);
          for (int kx = 0; kx < K; ++kx) {
            const std::size_t widx = ((static_cast<std::size_t>(o) * C + c) * K + ky) * K + kx;
            const double w = wv[widx];
            const int dx = kx * g.dilation - g.pad;
            const Range rx = valid_range(dx, s, W, OW);
            double acc = 0.0;
            for (int oy = ry.lo; oy < ry.hi; ++oy) {
              const std::size_t in_off = static_cast<std::size_t>(oy * s + dy) * W + dx;
              const double* row_in = in_c + in_off;
              const double* row_go = go + static_cast<std::size_t>(oy) * OW;
              if (gin_c) {
                double* row_gin = gin_c + in_off;
                for (int ox = rx.lo; ox < rx.hi; ++ox) {
                  acc += row_go[ox] * row_in[ox * s];
                  row_gin[ox * s] += w * row_go[ox];
                }
              } else {
                for (int ox = rx.lo; ox < rx.hi; ++ox) acc += row_go[ox] * row_in[ox * s];
              }
            }
            if (gw) gw[widx] += acc;
          }
        }
      }
    }
  });
}

Var standardize_blocks(const Var& x, int blocks, double eps) {
  const std::size_t n = x.value().size();
  if (blocks < 1 || n % static_cast<std::size_t>(blocks) != 0) {
    throw DimensionError("standardize_blocks: " + std::to_string(n) +
                         " elements do not split into " + std::to_string(blocks) + " blocks");
  }
  const std::size_t len = n / static_cast<std::size_t>(blocks);
  Tensor out(x.value().shape());
  std::vector<double> inv_std(static_cast<std::size_t>(blocks));
  for (int b = 0; b < blocks; ++b) {
    const double* in = x.value().data() + b * len;
    double m = 0.0;
    for (std::size_t i = 0; i < len; ++i) m += in[i];
    m /= static_cast<double>(len);
    double v = 0.0;
    for (std::size_t i = 0; i < len; ++i) v += (in[i] - m) * (in[i] - m);
    v /= static_cast<double>(len);
    const double inv = 1.0 / std::sqrt(v + eps);
    inv_std[static_cast<std::size_t>(b)] = inv;
    double* o = out.data() + b * len;
    for (std::size_t i = 0; i < len; ++i) o[i] = (in[i] - m) * inv;
  }
  return make_node(std::move(out), {x}, [blocks, len, inv_std](Node& self) {
    double* g = sink(self, 0);
    if (!g) return;
    for (int b = 0; b < blocks; ++b) {
      const double* y = self.value.data() + b * len;
      const double* gy = self.grad.data() + b * len;
      double mg = 0.0, mgy = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        mg += gy[i];
        mgy += gy[i] * y[i];
      }
      mg /= static_cast<double>(len);
      mgy /= static_cast<double>(len);
      const double inv = inv_std[static_cast<std::size_t>(b)];
      double* gx = g + b * len;
      for (std::size_t i = 0; i < len; ++i) gx[i] += inv * (gy[i] - mg - y[i] * mgy);
    }
  });
}

Var channel_affine(const Var& x, const Var& gamma, const Var& beta) {
  require_rank3(x, "channel_affine");
  const int C = x.value().channels();
  if (gamma.value().size() != static_cast<std::size_t>(C) ||
      beta.value().size() != static_cast<std::size_t>(C)) {
    throw DimensionError("channel_affine: parameter length does not match " +
                         std::to_string(C) + " channels");
  }
  const std::size_t plane = x.value().plane();
  Tensor out = x.value();
  for (int c = 0; c < C; ++c) {
    const double a = gamma.value()[c], b = beta.value()[c];
    double* p = out.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) p[i] = a * p[i] + b;
  }
  return make_node(std::move(out), {x, gamma, beta}, [C, plane](Node& self) {
    const Tensor& xv = self.inputs[0]->value;
    const Tensor& gv = self.inputs[1]->value;
    double* gx = sink(self, 0);
    double* gg = sink(self, 1);
    double* gbeta = sink(self, 2);
    for (int c = 0; c < C; ++c) {
      const double* gy = self.grad.data() + c * plane;
      const double* xin = xv.data() + c * plane;
      double sg = 0.0, sgx = 0.0;
      for (std::size_t i = 0; i < plane; ++i) {
        sg += gy[i];
        sgx += gy[i] * xin[i];
      }
      if (gg) gg[c] += sgx;
      if (gbeta) gbeta[c] += sg;
      if (gx) {
        const double a = gv[c];
        double* gxc = gx + c * plane;
        for (std::size_t i = 0; i < plane; ++i) gxc[i] += a * gy[i];
      }
    }
  });
}

// ---- spatial linear maps -------------------------------------------------

Var resample(const Var& x, const AxisMap& rows, const AxisMap& cols) {
  require_rank3(x, "resample");
  const Tensor& xv = x.value();
  const int C = xv.channels(), H = xv.height(), W = xv.width();
  if (rows.in_size != H || cols.in_size != W) {
    throw DimensionError("resample: axis maps built for " + std::to_string(rows.in_size) + "x" +
                         std::to_string(cols.in_size) + ", input is " + xv.shape_string());
  }
  const int OH = rows.out_size, OW = cols.out_size;
  Tensor tmp = Tensor::chw(C, H, OW);
  for (int c = 0; c < C; ++c) {
    for (int i = 0; i < H; ++i) {
      const double* in = xv.row(c, i);
      double* t = tmp.row(c, i);
      for (int ox = 0; ox < OW; ++ox) {
        double acc = 0.0;
        for (int k = cols.offset[ox]; k < cols.offset[ox + 1]; ++k) {
          acc += cols.weight[k] * in[cols.index[k]];
        }
        t[ox] = acc;
      }
    }
  }
  Tensor out = Tensor::chw(C, OH, OW);
  for (int c = 0; c < C; ++c) {
    for (int oy = 0; oy < OH; ++oy) {
      double* o = out.row(c, oy);
      for (int k = rows.offset[oy]; k < rows.offset[oy + 1]; ++k) {
        const double w = rows.weight[k];
        const double* t = tmp.row(c, rows.index[k]);
        for (int ox = 0; ox < OW; ++ox) o[ox] += w * t[ox];
      }
    }
  }
  return make_node(std::move(out), {x}, [rows, cols](Node& self) {
    double* g = sink(self, 0);
    if (!g) return;
    const Tensor& xv = self.inputs[0]->value;
    const int C = xv.channels(), H = xv.height(), W = xv.width();
    const int OH = rows.out_size, OW = cols.out_size;
    Tensor gtmp = Tensor::chw(C, H, OW);
    for (int c = 0; c < C; ++c) {
      for (int oy = 0; oy < OH; ++oy) {
        const double* go = self.grad.row(c, oy);
        for (int k = rows.offset[oy]; k < rows.offset[oy + 1]; ++k) {
          const double w = rows.weight[k];
          double* t = gtmp.row(c, rows.index[k]);
          for (int ox = 0; ox < OW; ++ox) t[ox] += w * go[ox];
        }
      }
    }
    for (int c = 0; c < C; ++c) {
      for (int i = 0; i < H; ++i) {
        const double* t = gtmp.row(c, i);
        double* gi = g + (static_cast<std::size_t>(c) * H + i) * W;
        for (int ox = 0; ox < OW; ++ox) {
          for (int k = cols.offset[ox]; k < cols.offset[ox + 1]; ++k) {
            gi[cols.index[k]] += cols.weight[k] * t[ox];
          }
        }
      }
    }
  });
}

Var resize_bilinear(const Var& x, int height, int width) {
  require_rank3(x, "resize_bilinear");
  if (x.value().height() == height && x.value().width() == width) return x;
  return resample(x, bilinear_axis(x.value().height(), height),
                  bilinear_axis(x.value().width(), width));
}

Var resize_nearest(const Var& x, int height, int width) {
  require_rank3(x, "resize_nearest");
  if (x.value().height() == height && x.value().width() == width) return x;
  return resample(x, nearest_axis(x.value().height(), height),
                  nearest_axis(x.value().width(), width));
}

Var resize_bicubic(const Var& x, int height, int width) {
  require_rank3(x, "resize_bicubic");
  return resample(x, bicubic_axis(x.value().height(), height),
                  bicubic_axis(x.value().width(), width));
}

Var crop(const Var& x, int y0, int x0, int height, int width) {
  require_rank3(x, "crop");
  const Tensor& xv = x.value();
  if (y0 < 0 || x0 < 0 || height < 1 || width < 1 || y0 + height > xv.height() ||
      x0 + width > xv.width()) {
    throw GeometryError("crop window outside " + xv.shape_string());
  }
  const int C = xv.channels();
  Tensor out = Tensor::chw(C, height, width);
  for (int c = 0; c < C; ++c) {
    for (int y = 0; y < height; ++y) {
      std::copy_n(xv.row(c, y0 + y) + x0, width, out.row(c, y));
    }
  }
  return make_node(std::move(out), {x}, [y0, x0](Node& self) {
    double* g = sink(self, 0);
    if (!g) return;
    const Tensor& xv = self.inputs[0]->value;
    const int C = self.value.channels(), h = self.value.height(), w = self.value.width();
    for (int c = 0; c < C; ++c) {
      for (int y = 0; y < h; ++y) {
        double* dst = g + (static_cast<std::size_t>(c) * xv.height() + y0 + y) * xv.width() + x0;
        const double* src = self.grad.row(c, y);
        for (int i = 0; i < w; ++i) dst[i] += src[i];
      }
    }
  });
}

Var max_pool(const Var& x, int kernel, int stride, int pad) {
  require_rank3(x, "max_pool");
  const Tensor& xv = x.value();
  const int C = xv.channels(), H = xv.height(), W = xv.width();
  const ConvGeometry geom{stride, pad, 1};
  const int OH = conv_output_size(H, kernel, geom), OW = conv_output_size(W, kernel, geom);
  if (OH < 1 || OW < 1) throw DimensionError("max_pool: input too small " + xv.shape_string());
  Tensor out = Tensor::chw(C, OH, OW);
  std::vector<int> arg(out.size());
  for (int c = 0; c < C; ++c) {
    for (int oy = 0; oy < OH; ++oy) {
      for (int ox = 0; ox < OW; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        int best_i = -1;
        for (int ky = 0; ky < kernel; ++ky) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= W) continue;
            const double v = xv.at(c, iy, ix);
            if (v > best) {
              best = v;
              best_i = (c * H + iy) * W + ix;
            }
          }
        }
        const std::size_t oi = (static_cast<std::size_t>(c) * OH + oy) * OW + ox;
        out[oi] = best;
        arg[oi] = best_i;
      }
    }
  }
  return make_node(std::move(out), {x}, [arg = std::move(arg)](Node& self) {
    double* g = sink(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < arg.size(); ++i) g[arg[i]] += self.grad[i];
  });
}

Var attention(const Var& theta, const Var& phi, const Var& g) {
  require_rank3(theta, "attention");
  require_same_shape(theta, phi, "attention");
  require_rank3(g, "attention");
  const int K = theta.value().channels();
  const int V = g.value().channels();
  const int N = static_cast<int>(theta.value().plane());
  if (static_cast<int>(g.value().plane()) != N) throw DimensionError("attention: spatial mismatch");
  const double* th = theta.value().data();
  const double* ph = phi.value().data();
  const double* gv = g.value().data();
  // P[i][j] = softmax_j(sum_k th[k][i] ph[k][j])
  std::vector<double> P(static_cast<std::size_t>(N) * N);
  for (int i = 0; i < N; ++i) {
    double* row = &P[static_cast<std::size_t>(i) * N];
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < N; ++j) {
      double s = 0.0;
      for (int k = 0; k < K; ++k) s += th[k * N + i] * ph[k * N + j];
      row[j] = s;
      mx = std::max(mx, s);
    }
    double z = 0.0;
    for (int j = 0; j < N; ++j) {
      row[j] = std::exp(row[j] - mx);
      z += row[j];
    }
    for (int j = 0; j < N; ++j) row[j] /= z;
  }
  Tensor out = Tensor::chw(V, g.value().height(), g.value().width());
  for (int v = 0; v < V; ++v) {
    for (int i = 0; i < N; ++i) {
      const double* row = &P[static_cast<std::size_t>(i) * N];
      double acc = 0.0;
      for (int j = 0; j < N; ++j) acc += row[j] * gv[v * N + j];
      out[static_cast<std::size_t>(v) * N + i] = acc;
    }
  }
  return make_node(std::move(out), {theta, phi, g}, [P = std::move(P), K, V, N](Node& self) {
    const double* th = self.inputs[0]->value.data();
    const double* ph = self.inputs[1]->value.data();
    const double* gv = self.inputs[2]->value.data();
    const double* go = self.grad.data();
    double* gth = sink(self, 0);
    double* gph = sink(self, 1);
    double* gg = sink(self, 2);
    if (gg) {
      for (int v = 0; v < V; ++v) {
        for (int i = 0; i < N; ++i) {
          const double gi = go[v * N + i];
          const double* row = &P[static_cast<std::size_t>(i) * N];
          for (int j = 0; j < N; ++j) gg[v * N + j] += gi * row[j];
        }
      }
    }
    if (!gth && !gph) return;
    std::vector<double> dS(static_cast<std::size_t>(N) * N);
    for (int i = 0; i < N; ++i) {
      const double* row = &P[static_cast<std::size_t>(i) * N];
      double* ds = &dS[static_cast<std::size_t>(i) * N];
      double dot = 0.0;
      for (int j = 0; j < N; ++j) {
        double dp = 0.0;
        for (int v = 0; v < V; ++v) dp += go[v * N + i] * gv[v * N + j];
        ds[j] = dp;
        dot += dp * row[j];
      }
      for (int j = 0; j < N; ++j) ds[j] = row[j] * (ds[j] - dot);
    }
    for (int k = 0; k < K; ++k) {
      for (int i = 0; i < N; ++i) {
        const double* ds = &dS[static_cast<std::size_t>(i) * N];
        if (gth) {
          double acc = 0.0;
          for (int j = 0; j < N; ++j) acc += ds[j] * ph[k * N + j];
          gth[k * N + i] += acc;
        }
        if (gph) {
          const double t = th[k * N + i];
          for (int j = 0; j < N; ++j) gph[k * N + j] += ds[j] * t;
        }
      }
    }
  });
}

}  // namespace lfp::nn
