#include "rift/objectives.hpp"

#include <cmath>
#include <stdexcept>

namespace rift {

using ad::Mat;

Var adv_student_feature(const Model& model, const AdvExample& adv) {
  if (adv.kind == AdvKind::Discrete) return model.student.encode(adv.tokens);
  std::vector<Var> weights;
  weights.reserve(adv.weights.size());
  for (const auto& w : adv.weights) weights.push_back(ad::constant(w));
  return model.student.encode_mixture(weights, adv.cand);
}

namespace {

Var select_col(const Var& row, int j) {
  Mat sel = Mat::Zero(row->v.cols(), 1);
  sel(j, 0) = 1.0;
  return ad::matmul(row, ad::constant(sel));
}

// KL(p || q) from two log-prob rows, both differentiable.
Var kl_term(const Var& log_p, const Var& log_q) {
  Var p = ad::exp_(log_p);
  return ad::sum(ad::mul(p, ad::sub(log_p, log_q)));
}

}  // namespace

TaskLoss task_loss(const TextExample& x, const AdvExample& x_hat, int y, const Model& model,
                   bool stop_clean_grad) {
  Var s_clean = model.student.encode(x.tokens);
  Var log_p = model.head.log_probs(s_clean);
  Var ce = ad::neg(select_col(log_p, y));

  Var s_adv = adv_student_feature(model, x_hat);
  Var log_q = model.head.log_probs(s_adv);
  Var log_p_kl = stop_clean_grad ? ad::constant(log_p->v) : log_p;
  Var kl = kl_term(log_p_kl, log_q);
  return {ce, kl};
}

Var info_nce_loss(const Var& s_rows, const Var& t_rows, int y, const ScoreHeads& scorer) {
  const Eigen::Index n = s_rows->v.rows();
  if (t_rows->v.rows() != n) throw std::invalid_argument("info_nce_loss: N mismatch");
  if (n < 1) throw std::invalid_argument("info_nce_loss: N >= 1 required");
  Var f = scorer.score_matrix(y, s_rows, t_rows);
  Var log_soft = ad::log_softmax_rows(f);
  Var mean_diag = ad::scale(ad::diag_sum(log_soft), 1.0 / static_cast<double>(n));
  return ad::add_scalar(ad::neg(mean_diag), -std::log(static_cast<double>(n)));
}

Var ptwd_penalty(const std::vector<NamedParam>& params, const std::vector<Mat>& pre_values,
                 double lambda) {
  if (params.size() != pre_values.size())
    throw std::invalid_argument("ptwd_penalty: parameter count mismatch");
  Var acc = ad::scalar(0.0);
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i].value->v.rows() != pre_values[i].rows() ||
        params[i].value->v.cols() != pre_values[i].cols())
      throw std::invalid_argument("ptwd_penalty: shape mismatch at " + params[i].name);
    Var d = ad::sub(params[i].value, ad::constant(pre_values[i]));
    acc = ad::add(acc, ad::sum(ad::mul(d, d)));
  }
  return ad::scale(ad::sqrt_(acc), lambda);
}

double relative_param_distance(const std::vector<NamedParam>& params,
                               const std::vector<Mat>& pre_values) {
  if (params.size() != pre_values.size())
    throw std::invalid_argument("relative_param_distance: parameter count mismatch");
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < params.size(); ++i) {
    num += (params[i].value->v - pre_values[i]).squaredNorm();
    den += pre_values[i].squaredNorm();
  }
  if (den == 0.0) throw std::invalid_argument("relative_param_distance: zero reference norm");
  return std::sqrt(num) / std::sqrt(den);
}

LossTerm rift_loss(const ClassBatch& batch, const std::vector<AttackSpace>& spaces,
                   const Model& model, const TeacherEncoder& teacher,
                   const AdversaryConfig& adv_cfg, const RiftWeights& w, std::mt19937_64& adv_rng,
                   const std::vector<Mat>* pre_encoder_values, bool stop_clean_grad,
                   TeacherProbe probe) {
  if (batch.examples.empty()) throw std::invalid_argument("rift_loss: empty batch");
  if (spaces.size() != batch.examples.size())
    throw std::invalid_argument("rift_loss: spaces/examples mismatch");
  for (const auto& ex : batch.examples)
    if (ex.label != batch.label) throw std::invalid_argument("rift_loss: batch not class-pure");

  const double n = static_cast<double>(batch.examples.size());
  Var ce_sum = ad::scalar(0.0), kl_sum = ad::scalar(0.0);
  std::vector<Var> s_hat_rows, t_rows;
  for (size_t i = 0; i < batch.examples.size(); ++i) {
    const auto& x = batch.examples[i];
    AdvExample x_hat = gen_train_adv(x, model, spaces[i], adv_cfg, adv_rng);
    TaskLoss tl = task_loss(x, x_hat, batch.label, model, stop_clean_grad);
    ce_sum = ad::add(ce_sum, tl.ce);
    kl_sum = ad::add(kl_sum, tl.kl);
    if (w.alpha != 0.0) {
      s_hat_rows.push_back(adv_student_feature(model, x_hat));
      if (probe) probe(x.tokens);
      t_rows.push_back(teacher.encode(x.tokens));
    }
  }
  Var ce = ad::scale(ce_sum, 1.0 / n);
  Var kl = ad::scale(kl_sum, 1.0 / n);
  Var total = ad::add(ce, ad::scale(kl, w.beta));

  LossTerm out;
  out.parts.ce = ad::item(ce);
  out.parts.kl = ad::item(kl);
  out.parts.alpha = w.alpha;
  out.parts.beta = w.beta;
  out.parts.lambda = w.lambda;

  if (w.alpha != 0.0) {
    Var info = info_nce_loss(ad::vcat(s_hat_rows), ad::vcat(t_rows), batch.label, model.scorer);
    out.parts.info = ad::item(info);
    total = ad::add(total, ad::scale(info, w.alpha));
  }
  if (w.lambda != 0.0) {
    if (!pre_encoder_values)
      throw std::invalid_argument("rift_loss: PTWD requires pre-trained encoder values");
    Var reg = ptwd_penalty(model.encoder_params(), *pre_encoder_values, w.lambda);
    out.parts.reg = ad::item(reg);
    total = ad::add(total, reg);
  }
  out.value = total;
  out.parts.total = ad::item(total);
  return out;
}

MixoutMask::MixoutMask(const std::vector<NamedParam>& params, const std::vector<Mat>& pre_values,
                       double m, std::mt19937_64& rng)
    : params_(params), pre_(&pre_values) {
  if (m < 0.0 || m > 1.0) throw std::invalid_argument("MixoutMask: m must be in [0,1]");
  if (params.size() != pre_values.size())
    throw std::invalid_argument("MixoutMask: parameter count mismatch");
  std::bernoulli_distribution sub(m);
  for (const auto& p : params_) {
    Mat mask(p.value->v.rows(), p.value->v.cols());
    for (Eigen::Index i = 0; i < mask.rows(); ++i)
      for (Eigen::Index j = 0; j < mask.cols(); ++j) mask(i, j) = sub(rng) ? 1.0 : 0.0;
    masks_.push_back(std::move(mask));
  }
}

void MixoutMask::apply() {
  saved_.clear();
  for (size_t i = 0; i < params_.size(); ++i) {
    saved_.push_back(params_[i].value->v);
    params_[i].value->v =
        masks_[i].cwiseProduct((*pre_)[i]) + (1.0 - masks_[i].array()).matrix().cwiseProduct(
                                                 params_[i].value->v);
  }
  applied_ = true;
}

void MixoutMask::finish() {
  if (!applied_) return;
  for (size_t i = 0; i < params_.size(); ++i) {
    params_[i].value->g = params_[i].value->g.cwiseProduct(
        (1.0 - masks_[i].array()).matrix());
    params_[i].value->v = saved_[i];
  }
  applied_ = false;
}

double MixoutMask::substituted_fraction() const {
  double ones = 0.0, total = 0.0;
  for (const auto& m : masks_) {
    ones += m.sum();
    total += static_cast<double>(m.size());
  }
  return total == 0.0 ? 0.0 : ones / total;
}

}  // namespace rift
