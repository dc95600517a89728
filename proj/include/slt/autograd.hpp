#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "slt/tensor.hpp"

namespace slt {

/// Learnable tensor with a gradient accumulator. Addresses stay stable for the
/// lifetime of the owning ParameterStore.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  void zero_grad() { grad = Tensor<T>(value.shape()); }
};

/// Ordered, name-addressed collection of parameters.
template <typename T>
class ParameterStore {
 public:
  Parameter<T>& add(std::string name, Tensor<T> init);
  Parameter<T>& get(const std::string& name);
  const Parameter<T>& get(const std::string& name) const;
  const Parameter<T>* find(const std::string& name) const;

  std::size_t size() const { return params_.size(); }
  std::size_t total_numel() const;
  Parameter<T>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return *params_[i]; }

  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
};

enum class OpKind {
  Constant,
  Param,
  MatMul,
  MatMulNT,
  Transpose,
  Add,
  AddRowBroadcast,
  Sub,
  Mul,
  Scale,
  Softmax,
  LogSoftmax,
  LayerNorm,
  Relu,
  Conv1d,
  MaxAxis,
  GatherRows,
  GatherElements,
  MaskedFill,
  NllLoss,
  Sum,
  Reshape,
  SliceCols,
  ConcatCols,
  Dropout,
  CtcLoss,
};

const char* op_name(OpKind kind);

template <typename T>
class Graph;

/// Handle to a node of a Graph.
template <typename T>
struct Var {
  Graph<T>* graph = nullptr;
  int id = -1;

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
};

/// Tape-based reverse-mode differentiation. Nodes are appended in evaluation
/// order, so the reverse of insertion order is a valid topological order for
/// the backward sweep.
template <typename T>
class Graph {
 public:
  /// Propagates the node's output gradient into its inputs' gradient buffers.
  using BackwardFn = std::function<void(Graph&, const Tensor<T>& grad_out)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> constant(Tensor<T> value);
  Var<T> input(Tensor<T> value, bool requires_grad);
  Var<T> param(Parameter<T>& p);

  /// Appends a node. The backward closure is kept only when some input needs
  /// a gradient.
  Var<T> record(OpKind kind, std::vector<int> inputs, Tensor<T> value, BackwardFn fn);

  const Tensor<T>& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  OpKind kind(int id) const { return nodes_[id].kind; }
  std::size_t size() const { return nodes_.size(); }
  std::size_t record_count() const;
  bool grad_enabled() const { return grad_enabled_; }

  /// Gradient buffer of a node, allocated as zeros on first access.
  Tensor<T>& grad_buffer(int id);
  /// Gradient of a node after backward(); null when the node received none.
  const Tensor<T>* grad(Var<T> v) const;

  /// Seeds d(loss)/d(loss) = 1 and sweeps every record once in reverse order.
  /// Parameter leaves add their gradient into Parameter::grad.
  void backward(Var<T> loss);

 private:
  struct Node {
    OpKind kind;
    std::vector<int> inputs;
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
  };

  std::vector<Node> nodes_;
  bool grad_enabled_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return graph->value(id);
}

template <typename T>
bool Var<T>::requires_grad() const {
  return graph->requires_grad(id);
}

}  // namespace slt
