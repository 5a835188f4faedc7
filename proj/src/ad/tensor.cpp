#include "cnav/ad/tensor.hpp"

#include <algorithm>
#include <atomic>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace cnav::ad {

namespace {

std::atomic<int64_t> g_next_id{1};
thread_local bool g_grad_enabled = true;
int g_threads = 1;

// Graph buffers are a few MB and churn every iteration; keeping them on
// the heap instead of mmap avoids refaulting the same pages forever.
[[maybe_unused]] const bool g_malloc_tuned = [] {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 256 * 1024 * 1024);
#endif
  return true;
}();

std::shared_ptr<Node> new_node(Shape shape, std::vector<double> values) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  if (shape_size(n->shape) != n->size())
    throw ShapeError("value length " + std::to_string(n->size()) +
                     " does not match shape " + shape_str(n->shape));
  return n;
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    out += std::to_string(s[i]);
    if (i + 1 < s.size()) out += ",";
  }
  return out + "]";
}

int64_t shape_size(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  auto n = new_node(shape, std::vector<double>(shape_size(shape), 0.0));
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::constant(const Shape& shape, std::vector<double> values) {
  return Tensor(new_node(shape, std::move(values)));
}

Tensor Tensor::scalar(double v) { return constant({1}, {v}); }

Tensor Tensor::parameter(const Shape& shape, std::vector<double> values) {
  auto n = new_node(shape, std::move(values));
  n->requires_grad = true;
  return Tensor(std::move(n));
}

Tensor make_node(Shape shape, std::vector<Tensor> parents,
                 std::function<void(Node&)> backward_fn) {
  auto n = new_node(std::move(shape), std::vector<double>(shape_size(shape), 0.0));
  bool needs_grad = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) needs_grad = needs_grad || p.requires_grad();
  }
  if (needs_grad) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(n));
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw UsageError("backward() requires a scalar loss");
  if (!loss.requires_grad()) return;

  // Reachable subgraph, visited in decreasing creation id: a node is
  // always created after its parents, so this is a reverse topological
  // order and it is deterministic.
  std::vector<Node*> order;
  std::vector<Node*> stack{loss.node().get()};
  std::vector<const Node*> seen;
  auto mark = [&seen](const Node* n) {
    auto it = std::lower_bound(seen.begin(), seen.end(), n);
    if (it != seen.end() && *it == n) return false;
    seen.insert(it, n);
    return true;
  };
  mark(loss.node().get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && mark(p.get())) stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const Node* a, const Node* b) { return a->id > b->id; });

  for (Node* n : order) n->ensure_grad();
  loss.node()->grad[0] += 1.0;
  for (Node* n : order) {
    if (n->backward_fn) n->backward_fn(*n);
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : saved_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = saved_; }

void set_threads(int n) { g_threads = n < 1 ? 1 : n; }
int threads() { return g_threads; }

}  // namespace cnav::ad
