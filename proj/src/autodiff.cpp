#include "rift/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace rift::ad {

Var leaf(Mat value) { return std::make_shared<Node>(std::move(value)); }

Var constant(Mat value) {
  auto n = std::make_shared<Node>(std::move(value));
  n->requires_grad = false;
  return n;
}

Var scalar(double x) {
  Mat m(1, 1);
  m(0, 0) = x;
  return constant(m);
}

namespace {

Var make(Mat value, std::vector<Var> parents, std::function<void(Node&)> back) {
  auto n = std::make_shared<Node>(std::move(value));
  bool any = false;
  for (const auto& p : parents) any = any || p->requires_grad;
  if (any) {
    n->parents = std::move(parents);
    n->back = std::move(back);
  } else {
    n->requires_grad = false;
  }
  return n;
}

void topo_order(const Var& root, std::vector<Node*>& order) {
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Node* p = n->parents[i++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
}

}  // namespace

void backward(const Var& root) {
  if (root->v.size() != 1) throw std::invalid_argument("backward: root must be 1x1");
  std::vector<Node*> order;
  topo_order(root, order);
  for (Node* n : order) n->zero_grad();
  root->g(0, 0) = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->back) n->back(*n);
  }
}

void zero_all(const Var& root) {
  std::vector<Node*> order;
  topo_order(root, order);
  for (Node* n : order) n->zero_grad();
}

Var add(const Var& a, const Var& b) {
  return make(a->v + b->v, {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->g += n.g;
    if (n.parents[1]->requires_grad) n.parents[1]->g += n.g;
  });
}

Var sub(const Var& a, const Var& b) {
  return make(a->v - b->v, {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->g += n.g;
    if (n.parents[1]->requires_grad) n.parents[1]->g -= n.g;
  });
}

Var mul(const Var& a, const Var& b) {
  return make(a->v.cwiseProduct(b->v), {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->g += n.g.cwiseProduct(n.parents[1]->v);
    if (n.parents[1]->requires_grad) n.parents[1]->g += n.g.cwiseProduct(n.parents[0]->v);
  });
}

Var matmul(const Var& a, const Var& b) {
  return make(a->v * b->v, {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->g += n.g * n.parents[1]->v.transpose();
    if (n.parents[1]->requires_grad) n.parents[1]->g += n.parents[0]->v.transpose() * n.g;
  });
}

Var scale(const Var& a, double s) {
  return make(a->v * s, {a}, [s](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->g += n.g * s;
  });
}

Var add_scalar(const Var& a, double s) {
  return make(a->v.array() + s, {a}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->g += n.g;
  });
}

Var transpose(const Var& a) {
  return make(a->v.transpose(), {a}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->g += n.g.transpose();
  });
}

Var relu(const Var& a) {
  return make(a->v.cwiseMax(0.0), {a}, [](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    n.parents[0]->g += n.g.cwiseProduct(
        (n.parents[0]->v.array() > 0.0).cast<double>().matrix());
  });
}

Var tanh_(const Var& a) {
  Mat t = a->v.array().tanh();
  return make(t, {a}, [](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    n.parents[0]->g += n.g.cwiseProduct((1.0 - n.v.array().square()).matrix());
  });
}

Var exp_(const Var& a) {
  return make(a->v.array().exp(), {a}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->g += n.g.cwiseProduct(n.v);
  });
}

Var log_(const Var& a) {
  Mat c = a->v.cwiseMax(1e-12);
  return make(c.array().log(), {a}, [c](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->g += n.g.cwiseQuotient(c);
  });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var sum(const Var& a) {
  Mat m(1, 1);
  m(0, 0) = a->v.sum();
  return make(m, {a}, [](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    n.parents[0]->g.array() += n.g(0, 0);
  });
}

Var mean(const Var& a) {
  const double inv = 1.0 / static_cast<double>(a->v.size());
  Mat m(1, 1);
  m(0, 0) = a->v.sum() * inv;
  return make(m, {a}, [inv](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    n.parents[0]->g.array() += n.g(0, 0) * inv;
  });
}

Var diag_sum(const Var& a) {
  if (a->v.rows() != a->v.cols()) throw std::invalid_argument("diag_sum: square matrix required");
  Mat m(1, 1);
  m(0, 0) = a->v.trace();
  return make(m, {a}, [](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    n.parents[0]->g.diagonal().array() += n.g(0, 0);
  });
}

Var hcat(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("hcat: no parts");
  Eigen::Index rows = parts[0]->v.rows(), cols = 0;
  for (const auto& p : parts) cols += p->v.cols();
  Mat out(rows, cols);
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p->v.cols()) = p->v;
    off += p->v.cols();
  }
  return make(out, parts, [](Node& n) {
    Eigen::Index off = 0;
    for (auto& p : n.parents) {
      if (p->requires_grad) p->g += n.g.middleCols(off, p->v.cols());
      off += p->v.cols();
    }
  });
}

Var vcat(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("vcat: no parts");
  Eigen::Index cols = parts[0]->v.cols(), rows = 0;
  for (const auto& p : parts) rows += p->v.rows();
  Mat out(rows, cols);
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.middleRows(off, p->v.rows()) = p->v;
    off += p->v.rows();
  }
  return make(out, parts, [](Node& n) {
    Eigen::Index off = 0;
    for (auto& p : n.parents) {
      if (p->requires_grad) p->g += n.g.middleRows(off, p->v.rows());
      off += p->v.rows();
    }
  });
}

Var sqrt_(const Var& a) {
  Mat s = a->v.cwiseMax(0.0).cwiseSqrt();
  return make(s, {a}, [](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    n.parents[0]->g += n.g.cwiseQuotient((2.0 * n.v.array()).cwiseMax(1e-12).matrix());
  });
}

Var add_rowvec(const Var& a, const Var& row) {
  if (row->v.rows() != 1 || row->v.cols() != a->v.cols())
    throw std::invalid_argument("add_rowvec: shape mismatch");
  Mat out = a->v.rowwise() + row->v.row(0);
  return make(out, {a, row}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->g += n.g;
    if (n.parents[1]->requires_grad) n.parents[1]->g += n.g.colwise().sum();
  });
}

Var softmax_rows(const Var& a) {
  Mat out(a->v.rows(), a->v.cols());
  for (Eigen::Index i = 0; i < a->v.rows(); ++i) {
    Eigen::RowVectorXd r = a->v.row(i);
    double m = r.maxCoeff();
    Eigen::RowVectorXd e = (r.array() - m).exp();
    out.row(i) = e / e.sum();
  }
  return make(out, {a}, [](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    for (Eigen::Index i = 0; i < n.v.rows(); ++i) {
      Eigen::RowVectorXd y = n.v.row(i), dy = n.g.row(i);
      double dot = y.dot(dy);
      n.parents[0]->g.row(i) += (dy.array() - dot).matrix().cwiseProduct(y);
    }
  });
}

Var log_softmax_rows(const Var& a) {
  Mat out(a->v.rows(), a->v.cols());
  for (Eigen::Index i = 0; i < a->v.rows(); ++i) {
    Eigen::RowVectorXd r = a->v.row(i);
    double m = r.maxCoeff();
    double lse = m + std::log((r.array() - m).exp().sum());
    out.row(i) = r.array() - lse;
  }
  return make(out, {a}, [](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    for (Eigen::Index i = 0; i < n.v.rows(); ++i) {
      Eigen::RowVectorXd y = n.v.row(i).array().exp();
      Eigen::RowVectorXd dy = n.g.row(i);
      n.parents[0]->g.row(i) += dy - y * dy.sum();
    }
  });
}

Var normalize_rows(const Var& a, double floor) {
  Mat out(a->v.rows(), a->v.cols());
  std::vector<double> norms(static_cast<size_t>(a->v.rows()));
  std::vector<bool> floored(static_cast<size_t>(a->v.rows()));
  for (Eigen::Index i = 0; i < a->v.rows(); ++i) {
    double nr = a->v.row(i).norm();
    floored[static_cast<size_t>(i)] = nr < floor;
    nr = std::max(nr, floor);
    norms[static_cast<size_t>(i)] = nr;
    out.row(i) = a->v.row(i) / nr;
  }
  return make(out, {a}, [norms, floored](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    for (Eigen::Index i = 0; i < n.v.rows(); ++i) {
      const double nr = norms[static_cast<size_t>(i)];
      Eigen::RowVectorXd y = n.v.row(i), dy = n.g.row(i);
      if (floored[static_cast<size_t>(i)]) {
        // divisor is the constant floor here
        n.parents[0]->g.row(i) += dy / nr;
      } else {
        n.parents[0]->g.row(i) += (dy - y * y.dot(dy)) / nr;
      }
    }
  });
}

Var layer_norm_rows(const Var& a, const Var& gamma, const Var& beta, double eps) {
  const Eigen::Index R = a->v.rows(), C = a->v.cols();
  if (gamma->v.cols() != C || beta->v.cols() != C)
    throw std::invalid_argument("layer_norm_rows: gamma/beta shape mismatch");
  Mat xhat(R, C);
  std::vector<double> inv_std(static_cast<size_t>(R));
  for (Eigen::Index i = 0; i < R; ++i) {
    double mu = a->v.row(i).mean();
    Eigen::RowVectorXd c = a->v.row(i).array() - mu;
    double var = c.squaredNorm() / static_cast<double>(C);
    double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(i)] = is;
    xhat.row(i) = c * is;
  }
  Mat out = (xhat.array().rowwise() * gamma->v.row(0).array()).rowwise() +
            beta->v.row(0).array();
  return make(out, {a, gamma, beta}, [xhat, inv_std, C](Node& n) {
    for (Eigen::Index i = 0; i < n.v.rows(); ++i) {
      Eigen::RowVectorXd dy = n.g.row(i);
      Eigen::RowVectorXd xh = xhat.row(i);
      Eigen::RowVectorXd dxhat = dy.cwiseProduct(n.parents[1]->v.row(0));
      if (n.parents[1]->requires_grad) n.parents[1]->g.row(0) += dy.cwiseProduct(xh);
      if (n.parents[2]->requires_grad) n.parents[2]->g.row(0) += dy;
      if (n.parents[0]->requires_grad) {
        const double c = static_cast<double>(C);
        double m1 = dxhat.sum() / c;
        double m2 = dxhat.dot(xh) / c;
        n.parents[0]->g.row(i) +=
            inv_std[static_cast<size_t>(i)] *
            (dxhat.array() - m1 - xh.array() * m2).matrix();
      }
    }
  });
}

Var gather_rows(const Var& table, const std::vector<int>& idx) {
  Mat out(static_cast<Eigen::Index>(idx.size()), table->v.cols());
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= table->v.rows())
      throw std::out_of_range("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = table->v.row(idx[i]);
  }
  return make(out, {table}, [idx](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    for (size_t i = 0; i < idx.size(); ++i)
      n.parents[0]->g.row(idx[i]) += n.g.row(static_cast<Eigen::Index>(i));
  });
}

Var mixture_rows(const Var& table, const std::vector<Var>& weights,
                 const std::vector<std::vector<int>>& cand) {
  if (weights.size() != cand.size())
    throw std::invalid_argument("mixture_rows: weights/cand size mismatch");
  const Eigen::Index L = static_cast<Eigen::Index>(cand.size());
  Mat out = Mat::Zero(L, table->v.cols());
  for (Eigen::Index i = 0; i < L; ++i) {
    const auto& ci = cand[static_cast<size_t>(i)];
    const auto& wi = weights[static_cast<size_t>(i)]->v;
    if (wi.rows() != 1 || wi.cols() != static_cast<Eigen::Index>(ci.size()))
      throw std::invalid_argument("mixture_rows: weight row shape mismatch");
    for (size_t k = 0; k < ci.size(); ++k)
      out.row(i) += wi(0, static_cast<Eigen::Index>(k)) * table->v.row(ci[k]);
  }
  std::vector<Var> parents;
  parents.push_back(table);
  for (const auto& w : weights) parents.push_back(w);
  return make(out, parents, [cand](Node& n) {
    Node* tab = n.parents[0].get();
    for (size_t i = 0; i < cand.size(); ++i) {
      Node* w = n.parents[i + 1].get();
      const auto& ci = cand[i];
      for (size_t k = 0; k < ci.size(); ++k) {
        if (tab->requires_grad)
          tab->g.row(ci[k]) +=
              w->v(0, static_cast<Eigen::Index>(k)) * n.g.row(static_cast<Eigen::Index>(i));
        if (w->requires_grad)
          w->g(0, static_cast<Eigen::Index>(k)) +=
              tab->v.row(ci[k]).dot(n.g.row(static_cast<Eigen::Index>(i)));
      }
    }
  });
}

Var dropout_mask(const Var& a, const Mat& keep_mask) {
  return make(a->v.cwiseProduct(keep_mask), {a}, [keep_mask](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->g += n.g.cwiseProduct(keep_mask);
  });
}

}  // namespace rift::ad
