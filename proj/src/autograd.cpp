#include "nsdehaze/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "nsdehaze/error.hpp"

namespace nsd::ag {

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.numel(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.numel()) {
    throw ShapeError("Tensor: buffer of " + std::to_string(data_.size()) +
                     " elements does not match shape " + shape_.str());
  }
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("Tensor::item on tensor of shape " + shape_.str());
  return data_[0];
}

double Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

double Tensor::abs_max() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor from_images(std::span<const imaging::Image> images) {
  if (images.empty()) throw ArgumentError("from_images: empty batch");
  const int h = images[0].height();
  const int w = images[0].width();
  Tensor t(Shape{static_cast<int>(images.size()), 3, h, w});
  for (std::size_t b = 0; b < images.size(); ++b) {
    const auto& im = images[b];
    if (im.height() != h || im.width() != w) throw ShapeError("from_images: batch images differ in shape");
    for (int c = 0; c < 3; ++c) {
      double* p = t.plane(static_cast<int>(b), c);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) p[y * w + x] = im.at(y, x, c);
    }
  }
  return t;
}

Tensor from_image(const imaging::Image& image) { return from_images(std::span(&image, 1)); }

imaging::Image to_image(const Tensor& t, int b) {
  const Shape& s = t.shape();
  if (s.c != 3) throw ShapeError("to_image: tensor must have 3 channels, got " + s.str());
  imaging::Image im(s.h, s.w);
  for (int c = 0; c < 3; ++c) {
    const double* p = t.plane(b, c);
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) im.at(y, x, c) = p[y * s.w + x];
  }
  return im.clamp();
}

imaging::Map to_map(const Tensor& t, int b, int c) {
  const Shape& s = t.shape();
  imaging::Map m(s.h, s.w);
  std::copy(t.plane(b, c), t.plane(b, c) + s.plane(), m.data().begin());
  return m;
}

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

Var parameter(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  return Var(std::move(n));
}

Var detach(const Var& v) { return constant(v.value()); }

Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (g_grad_enabled) {
    const bool any = std::any_of(parents.begin(), parents.end(),
                                 [](const Var& p) { return p.requires_grad(); });
    if (any) {
      n->requires_grad = true;
      n->parents.reserve(parents.size());
      for (auto& p : parents) {
        n->parents.push_back(p.ptr());
        n->parent_wants.push_back(p.requires_grad() ? 1 : 0);
      }
      n->backward = std::move(backward_fn);
    }
  }
  return Var(std::move(n));
}

void backward(const Var& loss) {
  if (loss.value().numel() != 1) {
    throw ShapeError("backward: loss must hold one element, got " + loss.shape().str());
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  visited.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      const bool wanted = node->parent_wants[next] != 0;
      Node* p = node->parents[next++].get();
      if (wanted && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad_buffer().fill(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
  // Release intermediate gradients; leaves keep theirs.
  for (Node* n : order) {
    if (n->backward) {
      n->grad = Tensor();
    }
  }
}

}  // namespace nsd::ag
