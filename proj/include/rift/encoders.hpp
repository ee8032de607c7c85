#pragma once

#include <random>
#include <string>
#include <vector>

#include "rift/autodiff.hpp"
#include "rift/corpus.hpp"

namespace rift {

using ad::Var;

struct NamedParam {
  std::string name;
  Var value;
};

struct EncoderConfig {
  int vocab_size = 0;
  int max_len = 300;
  int embed_dim = 128;
  int depth = 2;
  int heads = 4;
  int hidden_dim = 256;  // FFN width
};

struct Linear {
  Var W, b;  // W: in x out, b: 1 x out

  Linear() = default;
  Linear(int in, int out, std::mt19937_64& rng);
  Var operator()(const Var& x) const;
  void collect(const std::string& prefix, std::vector<NamedParam>& out) const;
};

struct TransformerLayer {
  std::vector<Var> wq, wk, wv;  // per head, d x dk
  Linear proj;                  // d x d
  Linear ff1, ff2;
  Var ln1_g, ln1_b, ln2_g, ln2_b;
  int heads = 0;

  TransformerLayer() = default;
  TransformerLayer(const EncoderConfig& cfg, std::mt19937_64& rng);
  Var operator()(const Var& x) const;  // L x d -> L x d, pre-LN
  void collect(const std::string& prefix, std::vector<NamedParam>& out) const;
};

// Transformer encoder over word embeddings with learned positions and
// mean pooling. Accepts hard token sequences or per-position convex
// mixtures of embeddings over an AttackSpace.
class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig& cfg, std::mt19937_64& rng);

  const EncoderConfig& config() const { return cfg_; }

  // Per-position features, L x d.
  Var features(const std::vector<int>& tokens) const;
  // Pooled sequence feature, 1 x d.
  Var encode(const std::vector<int>& tokens) const;
  // Mixture input: weights[i] is a 1 x |cand[i]| simplex Var. Weights may
  // carry gradients (adversary) or not (training forward).
  Var encode_mixture(const std::vector<Var>& weights,
                     const std::vector<std::vector<int>>& cand) const;

  std::vector<NamedParam> params() const;
  // Sets requires_grad on every parameter (false freezes the encoder).
  void set_trainable(bool trainable);
  bool trainable() const { return trainable_; }

  // L2 norm over all parameters and checksum for frozenness assertions.
  double param_norm() const;
  double param_checksum() const;

  Var embedding_table() const { return embed_; }

 private:
  Var pooled(const Var& feats) const;
  Var run_stack(const Var& x0) const;

  EncoderConfig cfg_;
  Var embed_, pos_;
  std::vector<TransformerLayer> layers_;
  Var lnf_g_, lnf_b_;
  bool trainable_ = true;
};

// Two affine layers with a relu between, softmax output over C classes.
class ClassifierHead {
 public:
  ClassifierHead() = default;
  ClassifierHead(int in_dim, int hidden, int classes, std::mt19937_64& rng);

  Var logits(const Var& s) const;        // 1 x C (or B x C)
  Var log_probs(const Var& s) const;
  Var probs(const Var& s) const;
  int classes() const { return classes_; }

  std::vector<NamedParam> params() const;

 private:
  Linear l1_, l2_;
  int classes_ = 0;
};

// Per-class score function: temperature-scaled cosine of two projected
// features. One independent (g1, g2) MLP pair per class.
class ScoreHeads {
 public:
  ScoreHeads() = default;
  ScoreHeads(int classes, int student_dim, int teacher_dim, int proj_dim, double tau,
             std::mt19937_64& rng);

  // Pairwise score matrix for class y: (1/tau) * cos(g1(S_i), g2(T_j)), N x N.
  Var score_matrix(int y, const Var& s_rows, const Var& t_rows) const;
  // Scalar score for one pair, 1 x d inputs.
  Var score(int y, const Var& a, const Var& b) const;
  // Projected (un-normalized) features, for geometry diagnostics.
  Var project1(int y, const Var& x) const;
  Var project2(int y, const Var& x) const;
  double tau() const { return tau_; }
  int classes() const { return static_cast<int>(g1_.size()); }

  std::vector<NamedParam> params() const;

 private:
  struct Mlp {
    Linear l1, l2;
    Var operator()(const Var& x) const;
  };
  std::vector<Mlp> g1_, g2_;
  double tau_ = 0.2;
};

// ---- checkpoint container ----
// Versioned binary: magic, JSON metadata (arch, provenance, seed, tensor
// table), then raw little-endian doubles.
struct Checkpoint {
  std::string provenance;
  std::uint64_t seed = 0;
  std::string meta_json;  // architecture + extras
  std::vector<std::pair<std::string, ad::Mat>> tensors;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

void copy_params(const std::vector<NamedParam>& from, const std::vector<NamedParam>& to);
std::vector<ad::Mat> snapshot_values(const std::vector<NamedParam>& params);
void restore_values(const std::vector<NamedParam>& params, const std::vector<ad::Mat>& vals);

}  // namespace rift
