#include "rift/eval.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace rift {

using nlohmann::json;

AttackAlgo attack_from_string(const std::string& s) {
  if (s == "genetic") return AttackAlgo::Genetic;
  if (s == "pwws") return AttackAlgo::Pwws;
  throw std::invalid_argument("unknown attack: " + s);
}

std::string attack_name(AttackAlgo a) { return a == AttackAlgo::Genetic ? "genetic" : "pwws"; }

std::string EvalReport::to_json() const {
  json j{{"method", method},
         {"attack", attack},
         {"seed", seed},
         {"examples", examples},
         {"clean_acc", clean_acc},
         {"robust_acc", robust_acc},
         {"mean_queries", mean_queries},
         {"mean_substitutions", mean_substitutions}};
  return j.dump();
}

double evaluate_clean(const Model& model, const std::vector<TextExample>& examples) {
  return clean_accuracy(model, examples);
}

EvalReport evaluate_robust(const Model& model, const std::vector<TextExample>& examples,
                           const std::vector<AttackSpace>& spaces, const EvalConfig& cfg,
                           const NgramLM* lm) {
  if (examples.size() != spaces.size())
    throw std::invalid_argument("evaluate_robust: examples/spaces size mismatch");
  if (examples.empty()) throw std::invalid_argument("evaluate_robust: empty split");
  NoGradGuard guard(model.all_params());
  std::mt19937_64 rng(cfg.seed);
  int n = std::min<int>(cfg.n, static_cast<int>(examples.size()));
  auto idx = sample_indices(examples.size(), n, rng);

  EvalReport rep;
  rep.attack = attack_name(cfg.algo);
  rep.seed = cfg.seed;
  rep.examples = n;
  int clean_ok = 0, robust_ok = 0, successes = 0;
  long total_queries = 0, total_subs = 0;
  for (int i : idx) {
    const auto& ex = examples[static_cast<size_t>(i)];
    if (model.predict(ex.tokens) != ex.label) continue;
    ++clean_ok;
    AttackResult r = cfg.algo == AttackAlgo::Genetic
                         ? genetic_attack(ex, ex.label, model, spaces[static_cast<size_t>(i)],
                                          cfg.genetic, rng, lm)
                         : pwws_attack(ex, ex.label, model, spaces[static_cast<size_t>(i)]);
    total_queries += r.queries;
    if (r.success) {
      ++successes;
      total_subs += r.substitutions_made;
    } else {
      ++robust_ok;
    }
  }
  rep.clean_acc = static_cast<double>(clean_ok) / n;
  rep.robust_acc = static_cast<double>(robust_ok) / n;
  rep.mean_queries = clean_ok ? static_cast<double>(total_queries) / clean_ok : 0.0;
  rep.mean_substitutions = successes ? static_cast<double>(total_subs) / successes : 0.0;
  return rep;
}

namespace {

double cosine(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  double na = a.norm(), nb = b.norm();
  if (na < 1e-8 || nb < 1e-8) return 0.0;
  return a.dot(b) / (na * nb);
}

Eigen::RowVectorXd unit(const Eigen::RowVectorXd& v) {
  double n = v.norm();
  return n < 1e-8 ? v : Eigen::RowVectorXd(v / n);
}

}  // namespace

GeometryReport geometry_report(const Model& model, const TeacherEncoder& teacher,
                               const std::vector<TextExample>& examples, int max_samples,
                               bool identity_projection, std::uint64_t seed) {
  if (examples.empty()) throw std::invalid_argument("geometry_report: empty sample");
  NoGradGuard guard(model.all_params());
  std::mt19937_64 rng(seed);
  int n = std::min<int>(max_samples, static_cast<int>(examples.size()));
  auto idx = sample_indices(examples.size(), n, rng);

  GeometryReport rep;
  rep.labels.reserve(static_cast<size_t>(n));
  std::vector<Eigen::RowVectorXd> s_feats, t_feats;
  for (int i : idx) {
    const auto& ex = examples[static_cast<size_t>(i)];
    s_feats.push_back(model.student.encode(ex.tokens)->v.row(0));
    t_feats.push_back(teacher.encode(ex.tokens)->v.row(0));
    rep.labels.push_back(ex.label);
  }

  int present = 0;
  for (const auto& h : [&] {
         std::map<int, int> counts;
         for (int y : rep.labels) ++counts[y];
         return counts;
       }())
    if (h.second >= 2) ++present;
  if (present < 2) throw std::invalid_argument("geometry_report: need >= 2 classes with samples");

  std::map<int, std::vector<int>> by_class;
  for (int i = 0; i < n; ++i) by_class[rep.labels[static_cast<size_t>(i)]].push_back(i);

  for (const auto& [y, members] : by_class) {
    if (members.size() < 2) {
      rep.warnings.push_back("class " + std::to_string(y) + " has < 2 samples; skipped");
      continue;
    }
    std::vector<Eigen::RowVectorXd> us, ut;
    for (int i : members) {
      Eigen::RowVectorXd s = s_feats[static_cast<size_t>(i)];
      Eigen::RowVectorXd t = t_feats[static_cast<size_t>(i)];
      if (!identity_projection) {
        s = model.scorer.project1(y, ad::constant(s))->v.row(0);
        t = model.scorer.project2(y, ad::constant(t))->v.row(0);
      }
      us.push_back(s);
      ut.push_back(t);
    }
    double align = 0.0;
    for (size_t i = 0; i < us.size(); ++i) align += cosine(us[i], ut[i]);
    align /= static_cast<double>(us.size());

    double ksum = 0.0;
    int pairs = 0;
    for (size_t i = 0; i < us.size(); ++i) {
      Eigen::RowVectorXd ui = unit(us[i]);
      for (size_t j = i + 1; j < us.size(); ++j) {
        ksum += std::exp(-2.0 * (ui - unit(us[j])).squaredNorm());
        ++pairs;
      }
    }
    rep.classes_present.push_back(y);
    rep.alignment.push_back(align);
    rep.uniformity.push_back(std::log(ksum / pairs));
  }

  // Deterministic 2-D view: top principal directions of the student features,
  // each eigenvector signed so its largest-magnitude entry is positive.
  int d = static_cast<int>(s_feats[0].size());
  ad::Mat X(n, d);
  for (int i = 0; i < n; ++i) X.row(i) = s_feats[static_cast<size_t>(i)];
  Eigen::RowVectorXd mean = X.colwise().mean();
  X.rowwise() -= mean;
  ad::Mat cov = X.transpose() * X / std::max(1, n - 1);
  Eigen::SelfAdjointEigenSolver<ad::Mat> es(cov);
  ad::Mat dirs(d, 2);
  for (int k = 0; k < 2; ++k) {
    Eigen::VectorXd v = es.eigenvectors().col(d - 1 - k);  // eigenvalues ascend
    int arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    dirs.col(k) = v;
  }
  rep.coords = X * dirs;
  return rep;
}

std::vector<SweepPoint> tradeoff_sweep(const TrainConfig& base, const TaskData& data,
                                       const TeacherEncoder& teacher, const Encoder& init_encoder,
                                       const std::vector<double>& betas,
                                       const std::vector<std::uint64_t>& seeds,
                                       const std::string& cache_dir) {
  if (betas.empty() || seeds.empty()) throw std::invalid_argument("tradeoff_sweep: empty grid");
  if (!cache_dir.empty()) std::filesystem::create_directories(cache_dir);

  // Cache identity covers everything that changes the run besides the grid.
  std::ostringstream key;
  key << method_name(base.method) << "|" << base.epochs << "|" << base.batch << "|" << base.lr
      << "|" << base.task_decay << "|" << base.alpha << "|" << base.lambda << "|" << base.mixout_m
      << "|" << base.adversary.steps << "|" << base.adversary.proposals << "|"
      << data.train.size();
  std::uint64_t h = 1469598103934665603ull;
  for (char c : key.str()) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ull;

  std::vector<SweepPoint> out;
  for (double beta : betas) {
    for (std::uint64_t seed : seeds) {
      std::string cache;
      if (!cache_dir.empty()) {
        std::ostringstream name;
        name << cache_dir << "/sweep_" << std::hex << h << std::dec << "_b" << beta << "_s" << seed
             << ".json";
        cache = name.str();
      }
      SweepPoint p;
      p.beta = beta;
      p.seed = seed;
      if (!cache.empty() && std::filesystem::exists(cache)) {
        std::ifstream in(cache);
        json j = json::parse(in);
        p.clean_acc = j.at("clean_acc").get<double>();
        p.robust_acc = j.at("robust_acc").get<double>();
        p.rel_param_distance = j.at("rel_param_distance").get<double>();
        p.cached = true;
      } else {
        TrainConfig cfg = base;
        cfg.beta = beta;
        cfg.seed = seed;
        RunArtifacts art = train(cfg, data, teacher, init_encoder, "");
        const auto& best = art.history.at(static_cast<size_t>(art.best_epoch));
        p.clean_acc = best.clean_acc;
        p.robust_acc = best.robust_acc;
        p.rel_param_distance = art.history.back().rel_param_distance;
        if (!cache.empty()) {
          std::ofstream outf(cache);
          outf << json{{"beta", beta},
                       {"seed", seed},
                       {"clean_acc", p.clean_acc},
                       {"robust_acc", p.robust_acc},
                       {"rel_param_distance", p.rel_param_distance}}
                      .dump()
               << "\n";
        }
      }
      out.push_back(p);
    }
  }
  return out;
}

void write_sweep_records(const std::vector<SweepPoint>& points, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_sweep_records: cannot write " + path);
  for (const auto& p : points) {
    out << json{{"beta", p.beta},
                {"seed", p.seed},
                {"clean_acc", p.clean_acc},
                {"robust_acc", p.robust_acc},
                {"rel_param_distance", p.rel_param_distance}}
               .dump()
        << "\n";
  }
}

}  // namespace rift
