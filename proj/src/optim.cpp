#include "rift/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace rift {

void AdamW::add_group(const std::vector<NamedParam>& params, double weight_decay) {
  for (const auto& p : params) {
    Slot s;
    s.param = p.value;
    s.decay = weight_decay;
    s.m = ad::Mat::Zero(p.value->v.rows(), p.value->v.cols());
    s.v = ad::Mat::Zero(p.value->v.rows(), p.value->v.cols());
    slots_.push_back(std::move(s));
  }
}

void AdamW::zero_grad() {
  for (auto& s : slots_) s.param->zero_grad();
}

void AdamW::step() {
  ++t_;
  if (cfg_.clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto& s : slots_) {
      if (!s.param->g.allFinite()) throw std::runtime_error("AdamW: non-finite gradient");
      sq += s.param->g.squaredNorm();
    }
    const double norm = std::sqrt(sq);
    if (norm > cfg_.clip_norm) {
      const double scale = cfg_.clip_norm / norm;
      for (auto& s : slots_) s.param->g *= scale;
    }
  }
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& s : slots_) {
    if (!s.param->g.allFinite()) throw std::runtime_error("AdamW: non-finite gradient");
    s.m = cfg_.beta1 * s.m + (1.0 - cfg_.beta1) * s.param->g;
    s.v = cfg_.beta2 * s.v + (1.0 - cfg_.beta2) * s.param->g.cwiseProduct(s.param->g);
    ad::Mat mhat = s.m / bc1;
    ad::Mat vhat = s.v / bc2;
    s.param->v -= cfg_.lr * mhat.cwiseQuotient((vhat.cwiseSqrt().array() + cfg_.eps).matrix());
    if (s.decay != 0.0) s.param->v *= (1.0 - cfg_.lr * s.decay);
  }
}

}  // namespace rift
