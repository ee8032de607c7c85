#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "rift/encoders.hpp"

namespace rift {

// Frozen pre-trained encoder. Consumes clean token sequences only and
// never propagates gradients.
class TeacherEncoder {
 public:
  TeacherEncoder() = default;
  TeacherEncoder(Encoder enc, std::string provenance)
      : enc_(std::move(enc)), provenance_(std::move(provenance)) {
    enc_.set_trainable(false);
  }

  // Detached feature, 1 x dim.
  Var encode(const std::vector<int>& tokens) const {
    return ad::constant(enc_.encode(tokens)->v);
  }
  int dim() const { return enc_.config().embed_dim; }
  const Encoder& encoder() const { return enc_; }
  const std::string& provenance() const { return provenance_; }
  double checksum() const { return enc_.param_checksum(); }

  void save(const std::string& path, std::uint64_t seed) const;
  static TeacherEncoder load(const std::string& path);

 private:
  Encoder enc_;
  std::string provenance_;
};

struct ModelConfig {
  EncoderConfig encoder;
  int classes = 2;
  int head_hidden = 128;
  int proj_dim = 64;
  int teacher_dim = 128;
  double tau = 0.2;
};

// Student encoder + classifier head + per-class score heads.
struct Model {
  ModelConfig cfg;
  Encoder student;
  ClassifierHead head;
  ScoreHeads scorer;

  Var probs(const std::vector<int>& tokens) const { return head.probs(student.encode(tokens)); }
  Var log_probs(const std::vector<int>& tokens) const {
    return head.log_probs(student.encode(tokens));
  }
  int predict(const std::vector<int>& tokens) const;

  std::vector<NamedParam> encoder_params() const { return student.params(); }
  std::vector<NamedParam> task_params() const { return head.params(); }
  std::vector<NamedParam> score_params() const { return scorer.params(); }
  std::vector<NamedParam> all_params() const;

  void save(const std::string& path, std::uint64_t seed, const std::string& extra_meta = "") const;
};

// Fresh model: student initialized from the (pre-trained) init encoder,
// heads randomly.
Model make_model(const ModelConfig& cfg, const Encoder& init_encoder, std::mt19937_64& rng);
Model make_model(const ModelConfig& cfg, std::mt19937_64& rng);
Model load_model(const std::string& path);

// Temporarily disables gradient tracking on a parameter set (attack-time
// forwards build no graph through the model).
class NoGradGuard {
 public:
  explicit NoGradGuard(const std::vector<NamedParam>& params) : params_(params) {
    for (const auto& p : params_) {
      prev_.push_back(p.value->requires_grad);
      p.value->requires_grad = false;
    }
  }
  ~NoGradGuard() {
    for (size_t i = 0; i < params_.size(); ++i) params_[i].value->requires_grad = prev_[i];
  }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  std::vector<NamedParam> params_;
  std::vector<bool> prev_;
};

void save_encoder_checkpoint(const Encoder& enc, const std::string& path,
                             const std::string& provenance, std::uint64_t seed,
                             const std::string& extra_meta = "");
Encoder load_encoder_checkpoint(const std::string& path, std::string* provenance = nullptr);

}  // namespace rift
