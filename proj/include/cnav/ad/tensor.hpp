#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace cnav::ad {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
int64_t shape_size(const Shape& s);

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One vertex of the computation graph. Children own their parents, so a
// live Tensor handle keeps everything it depends on alive; the graph is a
// DAG built in creation order (id is a valid topological index).
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  int64_t id = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  int64_t size() const { return static_cast<int64_t>(value.size()); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

// Value handle over a graph node. Copies share the node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor constant(const Shape& shape, std::vector<double> values);
  static Tensor scalar(double v);
  // Leaf with requires_grad set; the unit of optimization and checkpointing.
  static Tensor parameter(const Shape& shape, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t size() const { return node_->size(); }
  int rank() const { return static_cast<int>(node_->shape.size()); }

  std::vector<double>& values() { return node_->value; }
  const std::vector<double>& values() const { return node_->value; }
  std::vector<double>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  bool requires_grad() const { return node_->requires_grad; }
  void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

  double item() const {
    if (node_->size() != 1)
      throw UsageError("item() on tensor of size " + std::to_string(node_->size()));
    return node_->value[0];
  }

  std::shared_ptr<Node>& node() { return node_; }
  const std::shared_ptr<Node>& node() const { return node_; }

  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<Node> node_;
};

// Fresh node wired to parents; requires_grad follows the parents unless
// grad recording is disabled.
Tensor make_node(Shape shape, std::vector<Tensor> parents,
                 std::function<void(Node&)> backward_fn);

// Runs reverse-mode accumulation from a scalar loss into every reachable
// parameter's grad buffer.
void backward(const Tensor& loss);

// Grad recording switch (thread local). Forward passes under NoGradGuard
// build value-only nodes with no parents.
bool grad_enabled();

struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};

// Worker count for the matmul kernels. 1 (default) runs fully serial.
// Any value produces bit-identical results: each output element keeps a
// fixed serial summation order regardless of the worker count.
void set_threads(int n);
int threads();

}  // namespace cnav::ad
