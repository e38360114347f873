#include "cplab/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "cplab/error.hpp"

namespace cplab {
namespace {

Matrix map_values(const Matrix& a, double (*fn)(double)) {
  Matrix out = a;
  for (double& v : out.data()) v = fn(v);
  return out;
}

void require_finite(const Matrix& m, const char* op) {
  if (!m.all_finite()) throw NumericError(std::string(op) + " produced a non-finite value");
}

void require_mask_shape(const Matrix& a, const Matrix& mask, const char* op) {
  if (a.rows() != mask.rows() || a.cols() != mask.cols()) {
    throw ShapeError(std::string(op) + " mask shape " + mask.shape_string() +
                     " does not match " + a.shape_string());
  }
}

// Index of the extreme masked entry per row; lowest column wins ties.
std::vector<std::size_t> masked_arg(const Matrix& a, const Matrix& mask, bool want_max,
                                    const char* op) {
  require_mask_shape(a, mask, op);
  std::vector<std::size_t> arg(a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    bool found = false;
    std::size_t best = 0;
    for (std::size_t c = 0; c < a.cols(); ++c) {
      if (mask(r, c) == 0.0) continue;
      if (!found || (want_max ? a(r, c) > a(r, best) : a(r, c) < a(r, best))) {
        best = c;
        found = true;
      }
    }
    if (!found) {
      throw ContractError(std::string(op) + ": row " + std::to_string(r) +
                          " has no selected entries");
    }
    arg[r] = best;
  }
  return arg;
}

Var masked_extreme(const Var& a, const Matrix& mask, bool want_max, const char* op) {
  auto arg = masked_arg(a.value(), mask, want_max, op);
  Matrix out(a.rows(), 1);
  for (std::size_t r = 0; r < a.rows(); ++r) out[r] = a.value()(r, arg[r]);
  return make_op(std::move(out), {a}, [arg](const Node& self, const Matrix& g) {
    const Matrix& av = self.parents[0]->value;
    Matrix ga(av.rows(), av.cols());
    for (std::size_t r = 0; r < av.rows(); ++r) ga(r, arg[r]) = g[r];
    return std::vector<Matrix>{std::move(ga)};
  });
}

}  // namespace

Var Var::parameter(Matrix value, std::string name) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  n->name = std::move(name);
  return Var(std::move(n));
}

Var Var::constant(Matrix value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

Matrix Gradients::of(const Var& v) const {
  auto it = grads_.find(v.node());
  if (it == grads_.end()) return Matrix(v.rows(), v.cols());
  return it->second;
}

Gradients backward(const Var& root) {
  if (root.rows() != 1 || root.cols() != 1) {
    throw ContractError("backward requires a scalar root, got " +
                        root.value().shape_string());
  }
  Gradients out;
  if (!root.requires_grad()) return out;

  // Iterative post-order DFS; each node is emitted once.
  std::vector<const Node*> order;
  std::unordered_set<const Node*> seen;
  std::vector<std::pair<const Node*, std::size_t>> stack{{root.node(), 0}};
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (!node->detached && next < node->parents.size()) {
      const Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  out.grads_[root.node()] = Matrix::scalar(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Node* node = *it;
    if (node->detached || !node->backward) continue;
    auto gi = out.grads_.find(node);
    if (gi == out.grads_.end()) continue;
    std::vector<Matrix> pg = node->backward(*node, gi->second);
    for (std::size_t i = 0; i < node->parents.size() && i < pg.size(); ++i) {
      const Node* p = node->parents[i].get();
      if (!p->requires_grad || pg[i].empty()) continue;
      auto [slot, inserted] = out.grads_.try_emplace(p, std::move(pg[i]));
      if (!inserted) slot->second += pg[i];
    }
  }
  return out;
}

Var detach(const Var& x) {
  auto n = std::make_shared<Node>();
  n->value = x.value();
  n->parents = {x.shared()};
  n->detached = true;
  n->name = x.name();
  return Var(std::move(n));
}

Var make_op(Matrix value, std::vector<Var> parents, BackwardRule rule) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = std::any_of(parents.begin(), parents.end(),
                                 [](const Var& p) { return p.requires_grad(); });
  if (n->requires_grad) {
    for (auto& p : parents) n->parents.push_back(p.shared());
    n->backward = std::move(rule);
  }
  return Var(std::move(n));
}

Var matmul(const Var& a, const Var& b) {
  return make_op(matmul(a.value(), b.value()), {a, b}, [](const Node& self, const Matrix& g) {
    const Matrix& av = self.parents[0]->value;
    const Matrix& bv = self.parents[1]->value;
    std::vector<Matrix> out(2);
    if (self.parents[0]->requires_grad) out[0] = matmul(g, bv.transpose());
    if (self.parents[1]->requires_grad) out[1] = matmul(av.transpose(), g);
    return out;
  });
}

Var transpose(const Var& a) {
  return make_op(a.value().transpose(), {a}, [](const Node&, const Matrix& g) {
    return std::vector<Matrix>{g.transpose()};
  });
}

Var add(const Var& a, const Var& b) {
  return make_op(a.value() + b.value(), {a, b}, [](const Node&, const Matrix& g) {
    return std::vector<Matrix>{g, g};
  });
}

Var sub(const Var& a, const Var& b) {
  return make_op(a.value() - b.value(), {a, b}, [](const Node&, const Matrix& g) {
    return std::vector<Matrix>{g, g * -1.0};
  });
}

Var mul(const Var& a, const Var& b) {
  return make_op(hadamard(a.value(), b.value()), {a, b}, [](const Node& self, const Matrix& g) {
    return std::vector<Matrix>{hadamard(g, self.parents[1]->value),
                               hadamard(g, self.parents[0]->value)};
  });
}

Var scale(const Var& a, double s) {
  return make_op(a.value() * s, {a}, [s](const Node&, const Matrix& g) {
    return std::vector<Matrix>{g * s};
  });
}

Var add_scalar(const Var& a, double s) {
  Matrix v = a.value();
  for (double& x : v.data()) x += s;
  return make_op(std::move(v), {a}, [](const Node&, const Matrix& g) {
    return std::vector<Matrix>{g};
  });
}

Var add_col_broadcast(const Var& a, const Var& v) {
  if (v.rows() != a.rows() || v.cols() != 1) {
    throw ShapeError("add_col_broadcast: " + v.value().shape_string() + " onto " +
                     a.value().shape_string());
  }
  Matrix out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += v.value()[r];
  return make_op(std::move(out), {a, v}, [](const Node&, const Matrix& g) {
    Matrix gv(g.rows(), 1);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) gv[r] += g(r, c);
    return std::vector<Matrix>{g, std::move(gv)};
  });
}

Var mul_col_broadcast(const Var& a, const Var& v) {
  if (v.rows() != a.rows() || v.cols() != 1) {
    throw ShapeError("mul_col_broadcast: " + v.value().shape_string() + " onto " +
                     a.value().shape_string());
  }
  Matrix out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) *= v.value()[r];
  return make_op(std::move(out), {a, v}, [](const Node& self, const Matrix& g) {
    const Matrix& av = self.parents[0]->value;
    const Matrix& vv = self.parents[1]->value;
    Matrix ga(g.rows(), g.cols());
    Matrix gv(g.rows(), 1);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      for (std::size_t c = 0; c < g.cols(); ++c) {
        ga(r, c) = g(r, c) * vv[r];
        gv[r] += g(r, c) * av(r, c);
      }
    }
    return std::vector<Matrix>{std::move(ga), std::move(gv)};
  });
}

Var add_row_broadcast(const Var& a, const Var& v) {
  if (v.cols() != a.cols() || v.rows() != 1) {
    throw ShapeError("add_row_broadcast: " + v.value().shape_string() + " onto " +
                     a.value().shape_string());
  }
  Matrix out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += v.value()[c];
  return make_op(std::move(out), {a, v}, [](const Node&, const Matrix& g) {
    Matrix gv(1, g.cols());
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) gv[c] += g(r, c);
    return std::vector<Matrix>{g, std::move(gv)};
  });
}

Var mul_row_broadcast(const Var& a, const Var& v) {
  if (v.cols() != a.cols() || v.rows() != 1) {
    throw ShapeError("mul_row_broadcast: " + v.value().shape_string() + " onto " +
                     a.value().shape_string());
  }
  Matrix out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) *= v.value()[c];
  return make_op(std::move(out), {a, v}, [](const Node& self, const Matrix& g) {
    const Matrix& av = self.parents[0]->value;
    const Matrix& vv = self.parents[1]->value;
    Matrix ga(g.rows(), g.cols());
    Matrix gv(1, g.cols());
    for (std::size_t r = 0; r < g.rows(); ++r) {
      for (std::size_t c = 0; c < g.cols(); ++c) {
        ga(r, c) = g(r, c) * vv[c];
        gv[c] += g(r, c) * av(r, c);
      }
    }
    return std::vector<Matrix>{std::move(ga), std::move(gv)};
  });
}

Var relu(const Var& a) {
  return make_op(map_values(a.value(), [](double x) { return x > 0.0 ? x : 0.0; }), {a},
                 [](const Node& self, const Matrix& g) {
                   Matrix ga = g;
                   const Matrix& av = self.parents[0]->value;
                   for (std::size_t i = 0; i < ga.size(); ++i)
                     if (!(av[i] > 0.0)) ga[i] = 0.0;
                   return std::vector<Matrix>{std::move(ga)};
                 });
}

Var square(const Var& a) {
  return make_op(hadamard(a.value(), a.value()), {a}, [](const Node& self, const Matrix& g) {
    return std::vector<Matrix>{hadamard(g, self.parents[0]->value) * 2.0};
  });
}

Var safe_sqrt(const Var& a) {
  Matrix out = map_values(a.value(), [](double x) { return std::sqrt(std::max(x, 0.0)); });
  return make_op(std::move(out), {a}, [](const Node& self, const Matrix& g) {
    Matrix ga(g.rows(), g.cols());
    for (std::size_t i = 0; i < ga.size(); ++i) {
      double y = self.value[i];
      ga[i] = y > 0.0 ? g[i] * 0.5 / y : 0.0;
    }
    return std::vector<Matrix>{std::move(ga)};
  });
}

Var exp(const Var& a) {
  Matrix out = map_values(a.value(), [](double x) { return std::exp(x); });
  require_finite(out, "exp");
  return make_op(std::move(out), {a}, [](const Node& self, const Matrix& g) {
    return std::vector<Matrix>{hadamard(g, self.value)};
  });
}

Var log(const Var& a) {
  for (double v : a.value().data()) {
    if (!(v > 0.0)) throw NumericError("log of non-positive value");
  }
  return make_op(map_values(a.value(), [](double x) { return std::log(x); }), {a},
                 [](const Node& self, const Matrix& g) {
                   Matrix ga = g;
                   const Matrix& av = self.parents[0]->value;
                   for (std::size_t i = 0; i < ga.size(); ++i) ga[i] /= av[i];
                   return std::vector<Matrix>{std::move(ga)};
                 });
}

Var softplus(const Var& a) {
  Matrix out = map_values(a.value(), [](double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  });
  return make_op(std::move(out), {a}, [](const Node& self, const Matrix& g) {
    Matrix ga = g;
    const Matrix& av = self.parents[0]->value;
    for (std::size_t i = 0; i < ga.size(); ++i) {
      double x = av[i];
      double sig = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      ga[i] *= sig;
    }
    return std::vector<Matrix>{std::move(ga)};
  });
}

Var sum(const Var& a) {
  return make_op(Matrix::scalar(sum(a.value())), {a}, [](const Node& self, const Matrix& g) {
    const Matrix& av = self.parents[0]->value;
    return std::vector<Matrix>{Matrix(av.rows(), av.cols(), g.item())};
  });
}

Var mean(const Var& a) {
  if (a.value().empty()) throw ContractError("mean of an empty matrix");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var col_sum(const Var& a) {
  Matrix out(1, a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out[c] += a.value()(r, c);
  return make_op(std::move(out), {a}, [](const Node& self, const Matrix& g) {
    const Matrix& av = self.parents[0]->value;
    Matrix ga(av.rows(), av.cols());
    for (std::size_t r = 0; r < av.rows(); ++r)
      for (std::size_t c = 0; c < av.cols(); ++c) ga(r, c) = g[c];
    return std::vector<Matrix>{std::move(ga)};
  });
}

Var row_sum(const Var& a) {
  Matrix out(a.rows(), 1);
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out[r] += a.value()(r, c);
  return make_op(std::move(out), {a}, [](const Node& self, const Matrix& g) {
    const Matrix& av = self.parents[0]->value;
    Matrix ga(av.rows(), av.cols());
    for (std::size_t r = 0; r < av.rows(); ++r)
      for (std::size_t c = 0; c < av.cols(); ++c) ga(r, c) = g[r];
    return std::vector<Matrix>{std::move(ga)};
  });
}

Var gather_cols(const Var& a, std::span<const std::size_t> index) {
  std::vector<std::size_t> idx(index.begin(), index.end());
  Matrix out = select_cols(a.value(), idx);
  return make_op(std::move(out), {a}, [idx](const Node& self, const Matrix& g) {
    const Matrix& av = self.parents[0]->value;
    Matrix ga(av.rows(), av.cols());
    for (std::size_t j = 0; j < idx.size(); ++j)
      for (std::size_t r = 0; r < av.rows(); ++r) ga(r, idx[j]) += g(r, j);
    return std::vector<Matrix>{std::move(ga)};
  });
}

Var l2_normalize_cols(const Var& a, double eps) {
  const Matrix& x = a.value();
  Matrix norms(1, x.cols());
  Matrix out = x;
  for (std::size_t c = 0; c < x.cols(); ++c) {
    double s = eps;
    for (std::size_t r = 0; r < x.rows(); ++r) s += x(r, c) * x(r, c);
    norms[c] = std::sqrt(s);
    for (std::size_t r = 0; r < x.rows(); ++r) out(r, c) /= norms[c];
  }
  return make_op(std::move(out), {a}, [norms](const Node& self, const Matrix& g) {
    const Matrix& y = self.value;
    Matrix ga(g.rows(), g.cols());
    for (std::size_t c = 0; c < g.cols(); ++c) {
      double dot = 0.0;
      for (std::size_t r = 0; r < g.rows(); ++r) dot += y(r, c) * g(r, c);
      for (std::size_t r = 0; r < g.rows(); ++r) ga(r, c) = (g(r, c) - y(r, c) * dot) / norms[c];
    }
    return std::vector<Matrix>{std::move(ga)};
  });
}

Var pairwise_sq_dists(const Var& x) {
  const Matrix& xv = x.value();
  const std::size_t n = xv.cols(), d = xv.rows();
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        double diff = xv(k, i) - xv(k, j);
        s += diff * diff;
      }
      out(i, j) = out(j, i) = s;
    }
  }
  return make_op(std::move(out), {x}, [](const Node& self, const Matrix& g) {
    const Matrix& xv = self.parents[0]->value;
    const std::size_t n = xv.cols(), d = xv.rows();
    Matrix gx(d, n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        double w = 2.0 * (g(i, j) + g(j, i));
        if (w == 0.0) continue;
        for (std::size_t k = 0; k < d; ++k) gx(k, i) += w * (xv(k, i) - xv(k, j));
      }
    }
    return std::vector<Matrix>{std::move(gx)};
  });
}

Var masked_row_max(const Var& a, const Matrix& mask) {
  return masked_extreme(a, mask, true, "masked_row_max");
}

Var masked_row_min(const Var& a, const Matrix& mask) {
  return masked_extreme(a, mask, false, "masked_row_min");
}

Var masked_row_logsumexp(const Var& a, const Matrix& mask) {
  auto arg = masked_arg(a.value(), mask, true, "masked_row_logsumexp");
  const Matrix& av = a.value();
  Matrix out(av.rows(), 1);
  Matrix weights(av.rows(), av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    const double m = av(r, arg[r]);
    double s = 0.0;
    for (std::size_t c = 0; c < av.cols(); ++c) {
      if (mask(r, c) == 0.0) continue;
      weights(r, c) = std::exp(av(r, c) - m);
      s += weights(r, c);
    }
    for (std::size_t c = 0; c < av.cols(); ++c) weights(r, c) /= s;
    out[r] = m + std::log(s);
  }
  return make_op(std::move(out), {a}, [weights](const Node&, const Matrix& g) {
    Matrix ga = weights;
    for (std::size_t r = 0; r < ga.rows(); ++r)
      for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) *= g[r];
    return std::vector<Matrix>{std::move(ga)};
  });
}

Var batch_norm_normalize(const Var& x, double eps) {
  const Matrix& xv = x.value();
  const std::size_t n = xv.cols();
  if (n < 2) throw ContractError("batch normalization needs at least 2 samples, got " +
                                 std::to_string(n));
  Matrix out(xv.rows(), n);
  Matrix inv_std(xv.rows(), 1);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < n; ++c) mu += xv(r, c);
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (xv(r, c) - mu) * (xv(r, c) - mu);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) out(r, c) = (xv(r, c) - mu) * inv_std[r];
  }
  return make_op(std::move(out), {x}, [inv_std](const Node& self, const Matrix& g) {
    const Matrix& y = self.value;
    const std::size_t n = y.cols();
    const double nn = static_cast<double>(n);
    Matrix gx(y.rows(), n);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double sg = 0.0, sgy = 0.0;
      for (std::size_t c = 0; c < n; ++c) {
        sg += g(r, c);
        sgy += g(r, c) * y(r, c);
      }
      for (std::size_t c = 0; c < n; ++c)
        gx(r, c) = inv_std[r] / nn * (nn * g(r, c) - sg - y(r, c) * sgy);
    }
    return std::vector<Matrix>{std::move(gx)};
  });
}

Var cross_entropy(const Var& logits, std::span<const int> labels) {
  const Matrix& z = logits.value();
  const std::size_t classes = z.rows(), n = z.cols();
  if (labels.size() != n) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " columns");
  }
  if (n == 0) throw ContractError("cross_entropy on an empty batch");
  Matrix probs(classes, n);
  double total = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    if (labels[c] < 0 || static_cast<std::size_t>(labels[c]) >= classes) {
      throw ContractError("cross_entropy: label " + std::to_string(labels[c]) +
                          " out of range [0, " + std::to_string(classes) + ")");
    }
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < classes; ++k) m = std::max(m, z(k, c));
    double s = 0.0;
    for (std::size_t k = 0; k < classes; ++k) {
      probs(k, c) = std::exp(z(k, c) - m);
      s += probs(k, c);
    }
    for (std::size_t k = 0; k < classes; ++k) probs(k, c) /= s;
    total += m + std::log(s) - z(labels[c], c);
  }
  std::vector<int> y(labels.begin(), labels.end());
  return make_op(Matrix::scalar(total / static_cast<double>(n)), {logits},
                 [probs, y](const Node&, const Matrix& g) {
                   Matrix gz = probs;
                   for (std::size_t c = 0; c < y.size(); ++c) gz(y[c], c) -= 1.0;
                   gz *= g.item() / static_cast<double>(y.size());
                   return std::vector<Matrix>{std::move(gz)};
                 });
}

}  // namespace cplab
