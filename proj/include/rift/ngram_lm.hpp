#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

namespace rift {

// Trigram model with add-k smoothing over token ids. Unseen tokens and
// contexts fall back to the smoothed estimate.
class NgramLM {
 public:
  NgramLM() = default;
  NgramLM(int vocab_size, double add_k) : vocab_(vocab_size), k_(add_k) {}

  void fit(const std::vector<std::vector<int>>& sequences);

  // log p(w | w2, w1), add-k smoothed.
  double log_prob(int w2, int w1, int w) const;
  // Sum of trigram log-probs in the +-2 window around position i after
  // placing `candidate` there.
  double window_score(const std::vector<int>& tokens, std::size_t i, int candidate) const;

  int vocab_size() const { return vocab_; }

 private:
  // Exact packing; assumes vocab ids < 2^21.
  static std::uint64_t key2(int a, int b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 21) |
           static_cast<std::uint32_t>(b);
  }
  static std::uint64_t key3(int a, int b, int c) {
    return (key2(a, b) << 21) | static_cast<std::uint32_t>(c);
  }

  int vocab_ = 0;
  double k_ = 1.0;
  std::unordered_map<std::uint64_t, int> tri_, bi_;
};

}  // namespace rift
