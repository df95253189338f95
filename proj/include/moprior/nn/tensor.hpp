#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "moprior/core/error.hpp"
#include "moprior/core/image.hpp"

namespace moprior::nn {

/// Dense NCHW tensor. Convolution weights reuse the same container with the
/// convention (out_channels, in_channels, kh, kw).
template <typename T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> v;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, T fill = T(0))
      : n(n_), c(c_), h(h_), w(w_),
        v(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {
    if (n_ < 0 || c_ < 0 || h_ < 0 || w_ < 0) throw ShapeError("Tensor: negative dimension");
  }

  std::size_t numel() const { return v.size(); }

  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  std::size_t plane_index(int ni, int ci) const {
    return (static_cast<std::size_t>(ni) * c + static_cast<std::size_t>(ci)) *
           (static_cast<std::size_t>(h) * w);
  }

  T* plane(int ni, int ci) { return v.data() + plane_index(ni, ci); }
  const T* plane(int ni, int ci) const { return v.data() + plane_index(ni, ci); }

  T& at(int ni, int ci, int y, int x) {
    return v[plane_index(ni, ci) + static_cast<std::size_t>(y) * w + x];
  }
  const T& at(int ni, int ci, int y, int x) const {
    return v[plane_index(ni, ci) + static_cast<std::size_t>(y) * w + x];
  }

  static Tensor zeros_like(const Tensor& o) { return Tensor(o.n, o.c, o.h, o.w, T(0)); }

  static Tensor from_image(const Image2D<T>& img) {
    Tensor t(1, 1, img.height, img.width);
    std::copy(img.data.begin(), img.data.end(), t.v.begin());
    return t;
  }
};

/// Gradient recording switch. Disable around evaluation-only forward passes.
inline bool& grad_enabled() {
  thread_local bool on = true;
  return on;
}

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_enabled()) { grad_enabled() = false; }
  ~NoGradGuard() { grad_enabled() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

/// Define-by-run autograd node. Each op allocates the output value eagerly
/// and, when recording, stores its parents plus a closure that scatters the
/// output gradient into the parents' gradients.
template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad; // allocated lazily on first accumulation
  bool requires_grad = false;
  std::string name; // parameters only
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;

  void ensure_grad() {
    if (!grad.same_shape(value)) grad = Tensor<T>::zeros_like(value);
  }

  void zero_grad() {
    if (grad.same_shape(value)) std::fill(grad.v.begin(), grad.v.end(), T(0));
  }
};

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
NodePtr<T> constant(Tensor<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  return n;
}

template <typename T>
NodePtr<T> parameter(Tensor<T> value, std::string name) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = true;
  n->name = std::move(name);
  return n;
}

/// Builds an op node. Parents and the backward closure are only retained
/// while gradients are enabled and some parent needs them.
template <typename T>
NodePtr<T> make_op(Tensor<T> value, std::vector<NodePtr<T>> parents,
                   std::function<void(Node<T>&)> backprop) {
  auto out = std::make_shared<Node<T>>();
  out->value = std::move(value);
  bool needs = false;
  for (const auto& p : parents) needs = needs || p->requires_grad;
  if (grad_enabled() && needs) {
    out->requires_grad = true;
    out->parents = std::move(parents);
    out->backprop = std::move(backprop);
  }
  return out;
}

/// Reverse-mode sweep from a scalar root. Children always run before their
/// parents, so each node's gradient is complete when its closure fires.
template <typename T>
void backward(const NodePtr<T>& root) {
  if (root->value.numel() != 1) throw ShapeError("backward: root must be a scalar");

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad.v[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->requires_grad && node->backprop) node->backprop(*node);
  }
}

} // namespace moprior::nn
