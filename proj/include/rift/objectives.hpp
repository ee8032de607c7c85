#pragma once

#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "rift/attacks.hpp"
#include "rift/corpus.hpp"
#include "rift/model.hpp"

namespace rift {

struct LossBreakdown {
  double ce = 0.0;
  double kl = 0.0;
  double info = 0.0;
  double reg = 0.0;
  double total = 0.0;
  double alpha = 0.0, beta = 0.0, lambda = 0.0;
};

struct LossTerm {
  Var value;             // graph root for backward
  LossBreakdown parts;
};

// ce = -log q(y|F_s(x)); kl = KL(q(.|F_s(x)) || q(.|F_s(x_hat))).
// Gradients flow through both KL arguments unless stop_clean_grad.
struct TaskLoss {
  Var ce, kl;
};
TaskLoss task_loss(const TextExample& x, const AdvExample& x_hat, int y, const Model& model,
                   bool stop_clean_grad = false);

// (1/N) sum_i -log( e^{f(s_i,t_i)} / sum_j e^{f(s_i,t_j)} ) - log N.
// s_rows: N x d student features, t_rows: N x d_t teacher features.
Var info_nce_loss(const Var& s_rows, const Var& t_rows, int y, const ScoreHeads& scorer);

// Student feature of an AdvExample (mixture weights enter as constants).
Var adv_student_feature(const Model& model, const AdvExample& adv);

struct RiftWeights {
  double alpha = 0.1;
  double beta = 10.0;
  double lambda = 0.0;  // PTWD weight, 0 disables
};

// Hooks let the trainer observe teacher inputs (tests assert the
// teacher-on-clean rule through this).
using TeacherProbe = std::function<void(const std::vector<int>&)>;

// Full combined objective over a class-pure batch. The adversary runs per
// example; the teacher sees only clean inputs. pre_encoder_values feeds
// the PTWD term when lambda > 0.
LossTerm rift_loss(const ClassBatch& batch, const std::vector<AttackSpace>& spaces,
                   const Model& model, const TeacherEncoder& teacher,
                   const AdversaryConfig& adv_cfg, const RiftWeights& w, std::mt19937_64& adv_rng,
                   const std::vector<ad::Mat>* pre_encoder_values = nullptr,
                   bool stop_clean_grad = false, TeacherProbe probe = nullptr);

// lambda * ||theta - theta_pre||_2 over encoder parameters, as a graph node.
Var ptwd_penalty(const std::vector<NamedParam>& params, const std::vector<ad::Mat>& pre_values,
                 double lambda);

double relative_param_distance(const std::vector<NamedParam>& params,
                               const std::vector<ad::Mat>& pre_values);

// Per-step parameter substitution with pre-trained values (probability m).
// apply() swaps values in place; masked gradients and value restoration
// happen in finish(). Original storage is preserved.
class MixoutMask {
 public:
  MixoutMask(const std::vector<NamedParam>& params, const std::vector<ad::Mat>& pre_values,
             double m, std::mt19937_64& rng);
  void apply();          // set substituted values for this step
  void finish();         // zero substituted gradients, restore originals
  double substituted_fraction() const;

 private:
  std::vector<NamedParam> params_;
  const std::vector<ad::Mat>* pre_;
  std::vector<ad::Mat> masks_;  // 1 where substituted
  std::vector<ad::Mat> saved_;
  bool applied_ = false;
};

}  // namespace rift
