#pragma once

#include <random>
#include <vector>

#include "rift/corpus.hpp"
#include "rift/model.hpp"
#include "rift/ngram_lm.hpp"

namespace rift {

enum class AdvKind { Mixture, Discrete };

struct AdversaryConfig {
  bool enabled = true;     // disabled: x_hat = x (Standard fine-tuning)
  AdvKind kind = AdvKind::Mixture;
  int steps = 10;          // PGD ascent steps on simplex logits
  double step_size = 1.0;
  int proposals = 30;      // discrete hill-climb budget
  std::size_t exhaustive_limit = 0;  // >0: enumerate spaces up to this size
};

// Self-supervised adversarial example. Never depends on the
// label: the objective is KL between clean and perturbed predictions.
struct AdvExample {
  AdvKind kind = AdvKind::Mixture;
  std::vector<int> tokens;                 // discrete kind
  std::vector<ad::Mat> weights;            // mixture kind: per position, 1 x |cand|
  std::vector<std::vector<int>> cand;      // candidate ids per position
  double objective_value = 0.0;            // achieved KL
};

AdvExample gen_train_adv(const TextExample& x, const Model& model, const AttackSpace& space,
                         const AdversaryConfig& cfg, std::mt19937_64& rng);

// The unperturbed point of the space (x itself, objective 0).
AdvExample adv_identity(const TextExample& x, const AttackSpace& space,
                        AdvKind kind = AdvKind::Discrete);

struct GeneticConfig {
  int population = 60;
  int iterations = 40;
  double lm_delta = 5.0;   // log-space filter width when an LM is supplied
};

struct AttackResult {
  bool success = false;
  std::vector<int> final_sequence;
  long queries = 0;        // model forward evaluations
  int substitutions_made = 0;
};

AttackResult genetic_attack(const TextExample& x, int y, const Model& model,
                            const AttackSpace& space, const GeneticConfig& cfg,
                            std::mt19937_64& rng, const NgramLM* lm = nullptr);

AttackResult pwws_attack(const TextExample& x, int y, const Model& model,
                         const AttackSpace& space);

// Keeps candidates whose windowed trigram score is within delta of the
// best candidate; the original token always survives.
std::vector<int> lm_filter(const std::vector<int>& candidates, const std::vector<int>& tokens,
                           std::size_t pos, const NgramLM& lm, double delta);

// KL(p || q) over probability rows, log-floored at 1e-12.
double kl_rows(const Eigen::RowVectorXd& p, const Eigen::RowVectorXd& q);

}  // namespace rift
