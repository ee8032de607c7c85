#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <vector>

// Reverse-mode autodiff over Eigen double matrices. Graphs are built
// dynamically per forward pass; backward() walks the graph in reverse
// topological order. Double precision throughout so finite-difference
// checks at rel 1e-3 are meaningful.
namespace rift::ad {

using Mat = Eigen::MatrixXd;

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Mat v;                       // value
  Mat g;                       // accumulated gradient, same shape as v
  std::vector<Var> parents;
  std::function<void(Node&)> back;  // pushes this->g into parents' g
  bool requires_grad = true;

  explicit Node(Mat value) : v(std::move(value)) { g = Mat::Zero(v.rows(), v.cols()); }

  void zero_grad() { g.setZero(); }
};

// Leaf with gradient tracking (parameters, attack logits).
Var leaf(Mat value);
// Leaf without gradient tracking (inputs, detached values).
Var constant(Mat value);

Var scalar(double x);

// Runs backward from a 1x1 root with seed gradient 1.
void backward(const Var& root);

// Zeroes gradients of every node reachable from root.
void zero_all(const Var& root);

// ---- ops ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);        // elementwise
Var matmul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var transpose(const Var& a);
Var relu(const Var& a);
Var tanh_(const Var& a);
Var exp_(const Var& a);
Var log_(const Var& a);                     // clamps at 1e-12 before log
Var neg(const Var& a);
Var sum(const Var& a);                      // 1x1
Var mean(const Var& a);                     // 1x1
Var diag_sum(const Var& a);                 // 1x1, trace of a square matrix
Var hcat(const std::vector<Var>& parts);
Var vcat(const std::vector<Var>& parts);
Var sqrt_(const Var& a);                    // elementwise, guarded at 0
Var add_rowvec(const Var& a, const Var& row);   // broadcast add of 1xC row to each row
Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);
Var normalize_rows(const Var& a, double floor = 1e-8);  // row / max(||row||, floor)
Var layer_norm_rows(const Var& a, const Var& gamma, const Var& beta, double eps = 1e-5);
Var gather_rows(const Var& table, const std::vector<int>& idx);
// Per-row convex mixture over table rows: out.row(i) = sum_k w_i[k] * table.row(cand[i][k]).
// weights[i] is a 1 x cand[i].size() Var.
Var mixture_rows(const Var& table, const std::vector<Var>& weights,
                 const std::vector<std::vector<int>>& cand);
Var dropout_mask(const Var& a, const Mat& keep_mask);   // elementwise mul by constant mask

inline double item(const Var& v) { return v->v(0, 0); }

}  // namespace rift::ad
