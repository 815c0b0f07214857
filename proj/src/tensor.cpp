#include "sodetr/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace sodetr {

namespace {
thread_local bool g_grad_enabled = true;
}

Eigen::Index numel(const Shape& shape) {
  Eigen::Index n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, Array value, bool requires_grad) {
  for (int d : shape) {
    if (d <= 0) throw ShapeError("non-positive dimension in " + to_string(shape));
  }
  if (sodetr::numel(shape) != value.size()) {
    throw ShapeError("value size " + std::to_string(value.size()) + " does not match shape " +
                     to_string(shape));
  }
  node_ = std::make_shared<Node>();
  node_->shape = std::move(shape);
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return Tensor(shape, Array::Zero(sodetr::numel(shape)), requires_grad);
}

Tensor Tensor::full(const Shape& shape, double v, bool requires_grad) {
  return Tensor(shape, Array::Constant(sodetr::numel(shape), v), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) { return full({1}, v, requires_grad); }

Tensor Tensor::from_vector(const Shape& shape, const std::vector<double>& v, bool requires_grad) {
  Array a = Eigen::Map<const Array>(v.data(), static_cast<Eigen::Index>(v.size()));
  return Tensor(shape, std::move(a), requires_grad);
}

int Tensor::dim(int i) const {
  if (i < 0) i += rank();
  if (i < 0 || i >= rank()) throw ShapeError("dim index out of range for " + to_string(shape()));
  return node_->shape[i];
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return node_->value(0);
}

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->value, false); }

Array& Gradients::slot(const Node* n) {
  auto it = grads_.find(n);
  if (it == grads_.end()) {
    it = grads_.emplace(n, Array::Zero(n->value.size())).first;
  }
  return it->second;
}

const Array* Gradients::find(const Node* n) const {
  auto it = grads_.find(n);
  return it == grads_.end() ? nullptr : &it->second;
}

Array Gradients::of(const Tensor& t) const {
  if (const Array* g = find(t.node())) return *g;
  return Array::Zero(t.numel());
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor make_result(Shape shape, Array value, const std::vector<Tensor>& parents, BackwardFn fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (g_grad_enabled) {
    for (const Tensor& p : parents) {
      if (p.defined() && p.requires_grad()) {
        node->requires_grad = true;
        break;
      }
    }
  }
  if (node->requires_grad) {
    node->parents.reserve(parents.size());
    for (const Tensor& p : parents) node->parents.push_back(p.node_ptr());
    node->backward = std::move(fn);
  }
  return Tensor(std::move(node));
}

namespace {

// Reverse topological order over nodes that require grad.
std::vector<Node*> topo_order(Node* root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  return order;  // parents before children
}

}  // namespace

Gradients backward(const Tensor& loss) {
  if (loss.numel() != 1) throw ShapeError("backward() needs a single-element loss");
  Gradients grads;
  if (!loss.requires_grad()) return grads;
  std::vector<Node*> order = topo_order(loss.node());
  grads.slot(loss.node()).setConstant(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    auto g = grads.grads_.find(n);
    if (g == grads.grads_.end()) continue;
    if (n->backward) {
      Array gout = std::move(g->second);
      grads.grads_.erase(g);
      n->backward(*n, gout, grads);
    }
  }
  return grads;
}

Tensor grad_of(const Tensor& loss, const Tensor& param) {
  if (!param.requires_grad()) throw GraphError("parameter does not require grad");
  if (!loss.requires_grad()) throw GraphError("parameter is not part of the loss graph");
  std::vector<Node*> order = topo_order(loss.node());
  bool found = false;
  for (Node* n : order) found = found || n == param.node();
  if (!found) throw GraphError("parameter is not part of the loss graph");
  Gradients g = backward(loss);
  return Tensor(param.shape(), g.of(param), false);
}

}  // namespace sodetr
