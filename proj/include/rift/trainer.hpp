#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rift/objectives.hpp"
#include "rift/optim.hpp"

namespace rift {

enum class Method { Standard, AdvBase, AdvPTWD, AdvMixout, Rift };

Method method_from_string(const std::string& s);
std::string method_name(Method m);

struct TrainConfig {
  Method method = Method::Rift;
  int epochs = 20;
  int batch = 32;
  double lr = 2e-5;
  double task_decay = 2e-4;   // decoupled decay, task-specific layers only
  double alpha = 0.1;
  double beta = 10.0;
  double lambda = 0.01;       // Adv-PTWD
  double mixout_m = 0.6;      // Adv-Mixout
  std::uint64_t seed = 0;
  AdversaryConfig adversary;
  int steps_per_epoch = 0;    // 0: ceil(train size / batch)
  int eval_every = 1;         // epochs between dev evaluations
  int dev_eval_size = 200;    // fast dev-attack subset
  int dev_adv_proposals = 8;  // budget of the fast dev attack
  bool stop_clean_grad = false;
  double clip_norm = 1.0;     // global gradient-norm cap; 0 disables
};

// Encoded task with attack spaces.
struct TaskData {
  Vocabulary vocab;
  SubstitutionMap submap;
  int num_classes = 0;
  std::vector<TextExample> train, dev, test;
  std::vector<AttackSpace> train_spaces, dev_spaces, test_spaces;

  void build_spaces();
};

struct EpochMetrics {
  int epoch = 0;
  double clean_acc = 0.0;
  double robust_acc = 0.0;
  double rel_param_distance = 0.0;
  LossBreakdown mean_loss;
};

struct RunArtifacts {
  std::string dir;
  std::vector<EpochMetrics> history;
  int best_epoch = 0;
  double best_robust_acc = 0.0;
  std::string best_checkpoint, last_checkpoint;
};

using StepHook = std::function<void(int step, const LossBreakdown&)>;

// Training loop shared by all five methods. theta starts from
// init_encoder; phi and varphi start randomly. out_dir empty: nothing is
// persisted (in-memory runs for tests).
RunArtifacts train(const TrainConfig& cfg, const TaskData& data, const TeacherEncoder& teacher,
                   const Encoder& init_encoder, const std::string& out_dir,
                   const std::string& config_snapshot = "", StepHook hook = nullptr,
                   Model* out_model = nullptr);

// argmax of dev robust accuracy; ties broken by earliest epoch.
int early_stop_select(const std::vector<EpochMetrics>& history);

// Fast dev-time robust accuracy: clean-correct AND the discrete greedy KL
// adversary fails to flip.
double fast_robust_accuracy(const Model& model, const std::vector<TextExample>& examples,
                            const std::vector<AttackSpace>& spaces, int proposals,
                            std::mt19937_64& rng);

double clean_accuracy(const Model& model, const std::vector<TextExample>& examples);

// ---- teacher pretraining (masked-token prediction) ----
struct PretrainConfig {
  EncoderConfig arch;
  int epochs = 5;
  int batch = 32;
  double lr = 1e-3;
  double mask_prob = 0.15;
  std::uint64_t seed = 0;
};

struct PretrainResult {
  TeacherEncoder teacher;
  double heldout_masked_acc = 0.0;
  double majority_baseline = 0.0;  // frequency of the most common token
};

PretrainResult pretrain_teacher(const std::vector<std::vector<int>>& corpus,
                                const PretrainConfig& cfg);

}  // namespace rift
