#pragma once

#include <string>
#include <vector>

#include "rift/attacks.hpp"
#include "rift/trainer.hpp"

namespace rift {

enum class AttackAlgo { Genetic, Pwws };

AttackAlgo attack_from_string(const std::string& s);
std::string attack_name(AttackAlgo a);

struct EvalConfig {
  AttackAlgo algo = AttackAlgo::Genetic;
  GeneticConfig genetic;
  int n = 1000;  // random evaluation subset size (clamped to split size)
  std::uint64_t seed = 0;
};

struct EvalReport {
  std::string method;
  std::string attack;
  std::uint64_t seed = 0;
  int examples = 0;
  double clean_acc = 0.0;
  double robust_acc = 0.0;
  double mean_queries = 0.0;
  double mean_substitutions = 0.0;  // over successful attacks
  std::string to_json() const;
};

double evaluate_clean(const Model& model, const std::vector<TextExample>& examples);

// Robust-correct means the clean prediction is right and the attack fails to
// flip it on the seeded n-example subset.
EvalReport evaluate_robust(const Model& model, const std::vector<TextExample>& examples,
                           const std::vector<AttackSpace>& spaces, const EvalConfig& cfg,
                           const NgramLM* lm = nullptr);

struct GeometryReport {
  std::vector<int> classes_present;  // classes with >= 2 samples
  std::vector<double> alignment;     // per present class, mean cosine of positive pairs
  std::vector<double> uniformity;    // per present class, log mean Gaussian-kernel similarity
  ad::Mat coords;                    // n x 2 principal-direction projection of student features
  std::vector<int> labels;           // n
  std::vector<std::string> warnings;
};

// identity_projection compares raw student/teacher features directly instead
// of the learned score projections (dims must match in that mode).
GeometryReport geometry_report(const Model& model, const TeacherEncoder& teacher,
                               const std::vector<TextExample>& examples, int max_samples,
                               bool identity_projection, std::uint64_t seed);

struct SweepPoint {
  double beta = 0.0;
  std::uint64_t seed = 0;
  double clean_acc = 0.0;
  double robust_acc = 0.0;
  double rel_param_distance = 0.0;
  bool cached = false;
};

// One training run per (beta, seed); results cached as JSON files under
// cache_dir so re-runs re-emit identical records.
std::vector<SweepPoint> tradeoff_sweep(const TrainConfig& base, const TaskData& data,
                                       const TeacherEncoder& teacher, const Encoder& init_encoder,
                                       const std::vector<double>& betas,
                                       const std::vector<std::uint64_t>& seeds,
                                       const std::string& cache_dir);

void write_sweep_records(const std::vector<SweepPoint>& points, const std::string& path);

}  // namespace rift
