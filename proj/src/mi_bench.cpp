#include "rift/mi_bench.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "rift/objectives.hpp"
#include "rift/optim.hpp"

namespace rift {

using ad::Mat;

void SyntheticJointSpec::validate() const {
  if (classes < 1) throw std::invalid_argument("spec: classes >= 1 required");
  if (family == Family::CorrelatedGaussian) {
    if (static_cast<int>(rho.size()) != classes)
      throw std::invalid_argument("spec: one rho per class required");
    for (double r : rho)
      if (std::abs(r) >= 1.0) throw std::invalid_argument("spec: |rho| < 1 required");
    if (dim < 1) throw std::invalid_argument("spec: dim >= 1 required");
  } else {
    if (static_cast<int>(tables.size()) != classes)
      throw std::invalid_argument("spec: one table per class required");
    for (const auto& t : tables) {
      if (t.rows() != t.cols() || t.rows() < 1)
        throw std::invalid_argument("spec: square tables required");
      if ((t.array() < 0).any() || std::abs(t.sum() - 1.0) > 1e-9)
        throw std::invalid_argument("spec: tables must be normalized distributions");
    }
  }
}

int SyntheticJointSpec::feature_dim() const {
  return family == Family::CorrelatedGaussian ? dim : static_cast<int>(tables[0].rows());
}

SyntheticJointSpec SyntheticJointSpec::gaussian(double correlation, int d, int classes) {
  SyntheticJointSpec s;
  s.family = Family::CorrelatedGaussian;
  s.classes = classes;
  s.dim = d;
  s.rho.assign(static_cast<size_t>(classes), correlation);
  std::ostringstream n;
  n << "gaussian_rho" << correlation << "_d" << d;
  s.name = n.str();
  s.validate();
  return s;
}

SyntheticJointSpec SyntheticJointSpec::discrete(const Mat& joint) {
  SyntheticJointSpec s;
  s.family = Family::DiscreteTable;
  s.classes = 1;
  s.tables = {joint};
  s.name = "discrete_k" + std::to_string(joint.rows());
  s.validate();
  return s;
}

SyntheticJointSpec SyntheticJointSpec::deterministic_uniform(int k) {
  Mat t = Mat::Zero(k, k);
  for (int i = 0; i < k; ++i) t(i, i) = 1.0 / static_cast<double>(k);
  SyntheticJointSpec s = discrete(t);
  s.name = "deterministic_k" + std::to_string(k);
  return s;
}

PairSample synth_sample(const SyntheticJointSpec& spec, int y, int n, std::mt19937_64& rng) {
  spec.validate();
  if (y < 0 || y >= spec.classes) throw std::invalid_argument("synth_sample: bad class");
  PairSample out;
  const int fd = spec.feature_dim();
  out.s = Mat::Zero(n, fd);
  out.t = Mat::Zero(n, fd);
  if (spec.family == SyntheticJointSpec::Family::CorrelatedGaussian) {
    std::normal_distribution<double> g(0.0, 1.0);
    const double r = spec.rho[static_cast<size_t>(y)];
    const double w = std::sqrt(1.0 - r * r);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < fd; ++j) {
        double s = g(rng);
        out.s(i, j) = s;
        out.t(i, j) = r * s + w * g(rng);
      }
  } else {
    const Mat& table = spec.tables[static_cast<size_t>(y)];
    std::vector<double> flat(static_cast<size_t>(table.size()));
    for (Eigen::Index i = 0; i < table.rows(); ++i)
      for (Eigen::Index j = 0; j < table.cols(); ++j)
        flat[static_cast<size_t>(i * table.cols() + j)] = table(i, j);
    std::discrete_distribution<int> d(flat.begin(), flat.end());
    for (int i = 0; i < n; ++i) {
      int cell = d(rng);
      out.s(i, cell / table.cols()) = 1.0;
      out.t(i, cell % table.cols()) = 1.0;
    }
  }
  return out;
}

double true_cmi(const SyntheticJointSpec& spec) {
  spec.validate();
  double total = 0.0;
  for (int y = 0; y < spec.classes; ++y) {
    if (spec.family == SyntheticJointSpec::Family::CorrelatedGaussian) {
      double r = spec.rho[static_cast<size_t>(y)];
      total += static_cast<double>(spec.dim) * (-0.5) * std::log1p(-r * r);
    } else {
      const Mat& t = spec.tables[static_cast<size_t>(y)];
      Eigen::VectorXd ps = t.rowwise().sum(), pt = t.colwise().sum();
      double mi = 0.0;
      for (Eigen::Index i = 0; i < t.rows(); ++i)
        for (Eigen::Index j = 0; j < t.cols(); ++j)
          if (t(i, j) > 0.0) mi += t(i, j) * std::log(t(i, j) / (ps(i) * pt(j)));
      total += mi;
    }
  }
  return total / static_cast<double>(spec.classes);
}

BoundEstimate estimate_bound(const SyntheticJointSpec& spec, int N, const BoundTrainConfig& cfg,
                             std::uint64_t seed) {
  spec.validate();
  if (N < 1) throw std::invalid_argument("estimate_bound: N >= 1 required");
  std::mt19937_64 rng(seed);
  const int fd = spec.feature_dim();
  ScoreHeads scorer(spec.classes, fd, fd, cfg.proj_dim, cfg.tau, rng);

  AdamW opt({.lr = cfg.lr});
  opt.add_group(scorer.params(), 0.0);
  std::uniform_int_distribution<int> pick_y(0, spec.classes - 1);
  for (int step = 0; step < cfg.steps; ++step) {
    int y = pick_y(rng);
    PairSample batch = synth_sample(spec, y, N, rng);
    Var loss = info_nce_loss(ad::constant(batch.s), ad::constant(batch.t), y, scorer);
    if (!std::isfinite(ad::item(loss)))
      throw std::runtime_error("estimate_bound: non-finite loss at step " + std::to_string(step) +
                               " on " + spec.name);
    opt.zero_grad();
    ad::backward(loss);
    opt.step();
  }

  // Held-out evaluation: fresh batches, no training.
  NoGradGuard guard(scorer.params());
  double sum = 0.0, sum_sq = 0.0;
  for (int b = 0; b < cfg.eval_batches; ++b) {
    int y = pick_y(rng);
    PairSample batch = synth_sample(spec, y, N, rng);
    double est =
        -ad::item(info_nce_loss(ad::constant(batch.s), ad::constant(batch.t), y, scorer));
    sum += est;
    sum_sq += est * est;
  }
  const double b = static_cast<double>(cfg.eval_batches);
  BoundEstimate out;
  out.mean = sum / b;
  double var = std::max(0.0, sum_sq / b - out.mean * out.mean);
  out.stderr_ = std::sqrt(var / b);
  return out;
}

BoundReport bound_report(const std::vector<SyntheticJointSpec>& specs,
                         const std::vector<int>& n_grid, int repeats,
                         const BoundTrainConfig& cfg, std::uint64_t seed) {
  if (specs.empty() || n_grid.empty()) throw std::invalid_argument("bound_report: empty grid");
  if (repeats < 1) throw std::invalid_argument("bound_report: repeats >= 1 required");
  BoundReport report;
  for (const auto& spec : specs) {
    double mi = true_cmi(spec);
    for (int n : n_grid) {
      BoundCell cell;
      cell.spec_name = spec.name;
      cell.N = n;
      cell.true_mi = mi;
      cell.log_n = std::log(static_cast<double>(n));
      double se_sum = 0.0;
      for (int r = 0; r < repeats; ++r) {
        BoundEstimate est = estimate_bound(spec, n, cfg, seed + static_cast<std::uint64_t>(r));
        cell.per_repeat.push_back(est.mean);
        cell.mean += est.mean;
        se_sum += est.stderr_;
      }
      cell.mean /= static_cast<double>(repeats);
      cell.mean_stderr = se_sum / static_cast<double>(repeats);
      double ss = 0.0;
      for (double v : cell.per_repeat) ss += (v - cell.mean) * (v - cell.mean);
      cell.sd = std::sqrt(ss / static_cast<double>(repeats));
      report.cells.push_back(std::move(cell));
    }
  }
  return report;
}

std::string BoundReport::to_table() const {
  std::ostringstream os;
  os << "spec\tN\ttrue_mi\tln_N\testimate\tsd\tgap\n";
  for (const auto& c : cells) {
    os << c.spec_name << "\t" << c.N << "\t" << c.true_mi << "\t" << c.log_n << "\t" << c.mean
       << "\t" << c.sd << "\t" << (c.true_mi - c.mean) << "\n";
  }
  return os.str();
}

void BoundReport::write_records(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("BoundReport: cannot write " + path);
  for (const auto& c : cells) {
    nlohmann::json j{{"spec", c.spec_name}, {"N", c.N},          {"true_mi", c.true_mi},
                     {"ln_N", c.log_n},     {"estimate", c.mean}, {"sd", c.sd},
                     {"stderr", c.mean_stderr}, {"repeats", c.per_repeat}};
    out << j.dump() << "\n";
  }
}

}  // namespace rift
