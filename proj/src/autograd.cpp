#include "slt/autograd.hpp"

#include <algorithm>
#include <utility>

namespace slt {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Constant: return "constant";
    case OpKind::Param: return "param";
    case OpKind::MatMul: return "matmul";
    case OpKind::MatMulNT: return "matmul_nt";
    case OpKind::Transpose: return "transpose";
    case OpKind::Add: return "add";
    case OpKind::AddRowBroadcast: return "add_row";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::Softmax: return "softmax";
    case OpKind::LogSoftmax: return "log_softmax";
    case OpKind::LayerNorm: return "layer_norm";
    case OpKind::Relu: return "relu";
    case OpKind::Conv1d: return "conv1d";
    case OpKind::MaxAxis: return "max_axis";
    case OpKind::GatherRows: return "gather_rows";
    case OpKind::GatherElements: return "gather_elements";
    case OpKind::MaskedFill: return "masked_fill";
    case OpKind::NllLoss: return "nll_loss";
    case OpKind::Sum: return "sum";
    case OpKind::Reshape: return "reshape";
    case OpKind::SliceCols: return "slice_cols";
    case OpKind::ConcatCols: return "concat_cols";
    case OpKind::Dropout: return "dropout";
    case OpKind::CtcLoss: return "ctc_loss";
  }
  return "?";
}

template <typename T>
Parameter<T>& ParameterStore<T>::add(std::string name, Tensor<T> init) {
  if (find(name)) throw std::invalid_argument("parameter '" + name + "' registered twice");
  auto p = std::make_unique<Parameter<T>>();
  p->name = std::move(name);
  p->value = std::move(init);
  p->zero_grad();
  params_.push_back(std::move(p));
  return *params_.back();
}

template <typename T>
const Parameter<T>* ParameterStore<T>::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

template <typename T>
Parameter<T>& ParameterStore<T>::get(const std::string& name) {
  return const_cast<Parameter<T>&>(std::as_const(*this).get(name));
}

template <typename T>
const Parameter<T>& ParameterStore<T>::get(const std::string& name) const {
  const Parameter<T>* p = find(name);
  if (!p) throw std::out_of_range("no parameter named '" + name + "'");
  return *p;
}

template <typename T>
std::size_t ParameterStore<T>::total_numel() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.numel();
  return n;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

template <typename T>
Var<T> Graph<T>::constant(Tensor<T> value) {
  return input(std::move(value), false);
}

template <typename T>
Var<T> Graph<T>::input(Tensor<T> value, bool requires_grad) {
  Node n;
  n.kind = OpKind::Constant;
  n.value = std::move(value);
  n.requires_grad = requires_grad && grad_enabled_;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

template <typename T>
Var<T> Graph<T>::param(Parameter<T>& p) {
  Node n;
  n.kind = OpKind::Param;
  n.value = p.value;
  n.requires_grad = grad_enabled_;
  n.param = grad_enabled_ ? &p : nullptr;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

template <typename T>
Var<T> Graph<T>::record(OpKind kind, std::vector<int> inputs, Tensor<T> value, BackwardFn fn) {
  Node n;
  n.kind = kind;
  n.value = std::move(value);
  n.requires_grad = grad_enabled_ &&
                    std::any_of(inputs.begin(), inputs.end(), [&](int i) { return nodes_[i].requires_grad; });
  if (n.requires_grad) n.backward = std::move(fn);
  n.inputs = std::move(inputs);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

template <typename T>
std::size_t Graph<T>::record_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return static_cast<bool>(n.backward); }));
}

template <typename T>
Tensor<T>& Graph<T>::grad_buffer(int id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && n.value.numel() > 0) n.grad = Tensor<T>(n.value.shape());
  return n.grad;
}

template <typename T>
const Tensor<T>* Graph<T>::grad(Var<T> v) const {
  const Node& n = nodes_[v.id];
  return n.grad.empty() ? nullptr : &n.grad;
}

template <typename T>
void Graph<T>::backward(Var<T> loss) {
  const Tensor<T>& lv = value(loss.id);
  if (lv.numel() != 1) throw ShapeError("backward: loss must be a scalar, got " + shape_str(lv.shape()));
  if (!nodes_[loss.id].requires_grad) return;
  grad_buffer(loss.id)[0] += T{1};
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) continue;
    if (n.backward) {
      n.backward(*this, n.grad);
    } else if (n.param) {
      Tensor<T>& pg = n.param->grad;
      if (pg.empty()) pg = Tensor<T>(n.param->value.shape());
      for (std::size_t i = 0; i < pg.numel(); ++i) pg[i] += n.grad[i];
    }
  }
}

template struct Parameter<float>;
template struct Parameter<double>;
template class ParameterStore<float>;
template class ParameterStore<double>;
template class Graph<float>;
template class Graph<double>;

}  // namespace slt
