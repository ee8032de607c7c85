#pragma once

#include <vector>

#include "rift/encoders.hpp"

namespace rift {

// AdamW: adaptive moments with weight decay decoupled from the gradient
// update. Decay is per parameter group.
class AdamW {
 public:
  struct Config {
    double lr = 2e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 0.0;  // >0: scale gradients so the global norm fits
  };

  AdamW() = default;
  explicit AdamW(Config cfg) : cfg_(cfg) {}

  void add_group(const std::vector<NamedParam>& params, double weight_decay);
  void zero_grad();
  // Throws on non-finite gradients.
  void step();

  Config& config() { return cfg_; }

 private:
  struct Slot {
    Var param;
    double decay;
    ad::Mat m, v;
  };
  Config cfg_;
  std::vector<Slot> slots_;
  long t_ = 0;
};

}  // namespace rift
