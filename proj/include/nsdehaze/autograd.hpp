#ifndef NSDEHAZE_AUTOGRAD_HPP
#define NSDEHAZE_AUTOGRAD_HPP

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "nsdehaze/tensor.hpp"

namespace nsd::ag {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One vertex of the dynamically recorded graph.
///
/// `backward` reads `grad` of this node and accumulates into the gradients of
/// `parents`; it is only recorded when some parent requires a gradient.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  /// Whether each parent required a gradient when this node was recorded.
  std::vector<char> parent_wants;
  std::function<void(Node&)> backward;

  /// Allocates a zero gradient on first use.
  Tensor& grad_buffer();
};

/// Handle to a graph node. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  /// Gradient accumulated by backward(); empty if none reached this node.
  const Tensor& grad() const { return node_->grad; }
  void zero_grad() { node_->grad = Tensor(); }

  Node* node() const { return node_.get(); }
  const NodePtr& ptr() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  NodePtr node_;
};

Var constant(Tensor value);
Var parameter(Tensor value);
/// Same value, cut from the graph.
Var detach(const Var& v);

/// Back-propagates from a single-element variable, seeding its gradient with 1.
void backward(const Var& loss);

/// Whether graph recording is active on this thread.
bool grad_enabled();

/// Disables graph recording for the enclosing scope.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Creates the output node of an op. The backward closure is attached only
/// when recording is enabled and a parent requires a gradient.
Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward);

}  // namespace nsd::ag

#endif  // NSDEHAZE_AUTOGRAD_HPP
