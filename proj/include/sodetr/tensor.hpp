#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace sodetr {

using Shape = std::vector<int>;
using Array = Eigen::ArrayXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

Eigen::Index numel(const Shape& shape);
std::string to_string(const Shape& shape);

class Gradients;
struct Node;

// Receives the node being differentiated and d(loss)/d(node) and scatters
// contributions into the parents' slots.
using BackwardFn = std::function<void(const Node&, const Array&, Gradients&)>;

struct Node {
  Shape shape;
  Array value;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;
};

/// Dense row-major array of doubles with optional reverse-mode tracking.
///
/// A Tensor is a cheap handle; copies share the same node. Leaves created with
/// requires_grad act as parameters: their values may be mutated in place
/// between graph constructions (optimizer steps, finite differences).
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, Array value, bool requires_grad = false);

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, double v, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor from_vector(const Shape& shape, const std::vector<double>& v,
                            bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const;
  Eigen::Index numel() const { return node_->value.size(); }
  const Array& value() const { return node_->value; }
  Array& mutable_value() { return node_->value; }
  double item() const;
  double at(Eigen::Index i) const { return node_->value(i); }
  bool requires_grad() const { return node_->requires_grad; }

  /// Same values, cut from the graph.
  Tensor detach() const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  friend Tensor make_result(Shape, Array, const std::vector<Tensor>&, BackwardFn);

  std::shared_ptr<Node> node_;
};

/// Gradient slots keyed by node. Produced by backward(); owned by the caller,
/// so concurrent graphs that share parameters never race on gradient storage.
class Gradients {
 public:
  Array& slot(const Node* n);
  const Array* find(const Node* n) const;
  Array of(const Tensor& t) const;
  void erase(const Node* n) { grads_.erase(n); }
  std::size_t size() const { return grads_.size(); }

 private:
  friend Gradients backward(const Tensor& loss);
  std::unordered_map<const Node*, Array> grads_;
};

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Builds an op result. Parents and the backward closure are recorded only
/// when gradient mode is on and some parent requires grad.
Tensor make_result(Shape shape, Array value, const std::vector<Tensor>& parents,
                   BackwardFn fn);

/// Reverse sweep from a single-element loss. Intermediate gradients are
/// released as the sweep proceeds; leaf gradients remain.
Gradients backward(const Tensor& loss);

/// d(loss)/d(param). Throws GraphError when param is unreachable from loss.
Tensor grad_of(const Tensor& loss, const Tensor& param);

}  // namespace sodetr
