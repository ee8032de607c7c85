#include "rift/ngram_lm.hpp"

#include <cmath>
#include <stdexcept>

namespace rift {

namespace {
// Sentence-boundary sentinel context; kept outside real vocab ids.
constexpr int kBoundary = (1 << 21) - 1;
}  // namespace

void NgramLM::fit(const std::vector<std::vector<int>>& sequences) {
  if (vocab_ <= 0) throw std::runtime_error("NgramLM: vocab size not set");
  for (const auto& seq : sequences) {
    int w2 = kBoundary, w1 = kBoundary;
    for (int w : seq) {
      ++tri_[key3(w2, w1, w)];
      ++bi_[key2(w2, w1)];
      w2 = w1;
      w1 = w;
    }
  }
}

double NgramLM::log_prob(int w2, int w1, int w) const {
  auto t = tri_.find(key3(w2, w1, w));
  auto b = bi_.find(key2(w2, w1));
  double num = k_ + (t == tri_.end() ? 0.0 : static_cast<double>(t->second));
  double den = k_ * static_cast<double>(vocab_) +
               (b == bi_.end() ? 0.0 : static_cast<double>(b->second));
  return std::log(num) - std::log(den);
}

double NgramLM::window_score(const std::vector<int>& tokens, std::size_t i, int candidate) const {
  auto at = [&](std::ptrdiff_t p) -> int {
    if (p < 0 || p >= static_cast<std::ptrdiff_t>(tokens.size())) return kBoundary;
    if (p == static_cast<std::ptrdiff_t>(i)) return candidate;
    return tokens[static_cast<std::size_t>(p)];
  };
  double s = 0.0;
  const auto pi = static_cast<std::ptrdiff_t>(i);
  // trigrams within the +-2 window whose last word covers position i
  for (std::ptrdiff_t end = pi; end <= pi + 2; ++end) {
    if (end >= static_cast<std::ptrdiff_t>(tokens.size())) break;
    s += log_prob(at(end - 2), at(end - 1), at(end));
  }
  return s;
}

}  // namespace rift
