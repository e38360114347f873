#ifndef CPLAB_AUTOGRAD_HPP_
#define CPLAB_AUTOGRAD_HPP_

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cplab/matrix.hpp"

namespace cplab {

class Var;
struct Node;

// Local derivative rule: given the upstream gradient of `self`, return one
// gradient per parent (an empty Matrix means "no contribution").
using BackwardRule = std::function<std::vector<Matrix>(const Node& self, const Matrix& upstream)>;

struct Node {
  Matrix value;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardRule backward;
  bool requires_grad = false;
  // A detached node never forwards gradient to its parents.
  bool detached = false;
  std::string name;
};

// Handle to a node of a define-by-run graph. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  // Trainable leaf; its value may be updated in place between graphs.
  static Var parameter(Matrix value, std::string name = {});
  static Var constant(Matrix value);

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool detached() const { return node_->detached; }
  const std::string& name() const { return node_->name; }
  const Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

// Result of a backward pass: gradient of the root w.r.t. every node that
// requires grad and is reachable from it.
class Gradients {
 public:
  // Zero matrix of v's shape when v received no gradient.
  Matrix of(const Var& v) const;
  bool contains(const Var& v) const { return grads_.count(v.node()) != 0; }
  std::size_t size() const { return grads_.size(); }

 private:
  friend Gradients backward(const Var& root);
  std::unordered_map<const Node*, Matrix> grads_;
};

// Reverse-mode sweep from a 1x1 root in reverse topological order.
// Does not mutate the graph, so repeated calls give identical results.
Gradients backward(const Var& root);

// Same value, gradient stops here.
Var detach(const Var& x);

// Builds an op node. `rule` is dropped when no parent requires grad.
Var make_op(Matrix value, std::vector<Var> parents, BackwardRule rule);

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }
inline Var operator-(const Var& a) { return scale(a, -1.0); }

// a (r x c) combined with v (r x 1) along every column.
Var add_col_broadcast(const Var& a, const Var& v);
Var mul_col_broadcast(const Var& a, const Var& v);
// a (r x c) combined with v (1 x c) along every row.
Var add_row_broadcast(const Var& a, const Var& v);
Var mul_row_broadcast(const Var& a, const Var& v);

Var relu(const Var& a);
Var square(const Var& a);
// sqrt with a zero subgradient at 0.
Var safe_sqrt(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
// log(1 + e^x), stable for large |x|.
Var softplus(const Var& a);

Var sum(const Var& a);
Var mean(const Var& a);
// Per-column sum (1 x c) and per-row sum (r x 1).
Var col_sum(const Var& a);
Var row_sum(const Var& a);

// out[:, j] = a[:, index[j]]
Var gather_cols(const Var& a, std::span<const std::size_t> index);
Var l2_normalize_cols(const Var& a, double eps = 1e-12);
// N x N matrix of squared Euclidean distances between columns.
Var pairwise_sq_dists(const Var& x);

// Row-wise reductions restricted to entries where mask != 0; result is r x 1.
// Every row must have at least one masked entry.
Var masked_row_max(const Var& a, const Matrix& mask);
Var masked_row_min(const Var& a, const Matrix& mask);
Var masked_row_logsumexp(const Var& a, const Matrix& mask);

// Per-row standardization across columns with biased batch variance.
Var batch_norm_normalize(const Var& x, double eps);

// Mean softmax cross-entropy; logits are C x N, one label per column.
Var cross_entropy(const Var& logits, std::span<const int> labels);

}  // namespace cplab

#endif  // CPLAB_AUTOGRAD_HPP_
