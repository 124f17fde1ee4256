#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "tcb/tensor.hpp"

namespace tcb {

/// A learnable tensor with its accumulated gradient.
struct Param {
  Tensor value;
  Tensor grad;
  bool trainable = true;
  std::string init;  // initialization scheme, recorded for checkpoints
};

/// Named parameters in a fixed (lexicographic) order.
class ParamStore {
 public:
  Param& add(const std::string& name, Tensor value, std::string init);
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  std::vector<std::string> names() const;
  std::vector<std::string> names_with_prefix(const std::string& prefix) const;
  std::size_t parameter_count() const;
  void zero_grad();
  void set_trainable(const std::string& prefix, bool trainable);
  bool all_finite() const;
  /// FNV-1a over names, shapes and the raw bytes of every value.
  std::uint64_t checksum() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::map<std::string, Param> params_;
};

class Graph;

/// Handle to a node of a Graph.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  const Tensor& value() const;
  double item() const { return value().item(); }
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so a reverse
/// sweep visits every node after all of its consumers.
class Graph {
 public:
  /// Called with the op's output value and the gradient flowing into it.
  using Backward = std::function<void(Graph&, const Tensor& out, const Tensor& grad_out)>;

  Var constant(Tensor value);
  /// Leaf bound to a parameter; backward() accumulates into param.grad when
  /// the parameter is trainable.
  Var param(Param& p);
  /// Leaf whose gradient is kept on the node (inputs of gradient checks).
  Var input(Tensor value);

  /// Append an op result. `backward` accumulates into the gradients of the
  /// op's inputs through add_grad / grad_buffer.
  Var record(Tensor value, const std::vector<Var>& inputs, Backward backward);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  /// Gradient of a node; an all-zero tensor if nothing flowed into it.
  const Tensor& grad(Var v);
  /// Accumulate into the gradient of `v` (no-op if v needs no gradient).
  void add_grad(Var v, const Tensor& g);
  Tensor& grad_buffer(Var v);

  /// Seed d(root)/d(root) = 1 (root must be a scalar) and sweep the tape.
  void backward(Var root);
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Param* param = nullptr;
    Backward backward;
  };
  Var push(Node node);
  std::deque<Node> nodes_;
};

enum class PadMode { zero, reflect, replicate };

namespace ops {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
/// Sum over the products coef_i * scalar_i of scalar (1-element) nodes.
Var lincomb(const std::vector<std::pair<double, Var>>& terms);
Var sum(Var a);
Var mean(Var a);

Var tanh(Var a);
Var elu(Var a);
Var softplus(Var a);
Var sigmoid(Var a);
/// Values outside [lo, hi] are clipped; the gradient there is zero.
Var clamp(Var a, double lo, double hi);

Var pad(Var x, int top, int bottom, int left, int right, PadMode mode);
Var crop(Var x, int top, int left, int height, int width);
Var concat_channels(Var a, Var b);
Var slice_channels(Var x, int begin, int end);
Var avgpool2(Var x);

/// Valid cross-correlation. w: Cout x Cin x k x k, b: 1 x Cout x 1 x 1.
Var conv2d(Var x, Var w, Var b, int stride);
/// Transposed convolution (adjoint of conv2d). w: Cin x Cout x k x k.
/// Output size (H - 1) * stride - 2 * padding + k + output_padding.
Var conv_transpose2d(Var x, Var w, Var b, int stride, int padding, int output_padding);

/// Mean squared error over all elements.
Var mse_loss(Var a, Var b);
/// Mean binary cross-entropy of sigmoid(logits) against {0,1} targets.
Var bce_with_logits(Var logits, const Tensor& targets);

}  // namespace ops

}  // namespace tcb
