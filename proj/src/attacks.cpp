#include "rift/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace rift {

using ad::Mat;
using ad::Var;

double kl_rows(const Eigen::RowVectorXd& p, const Eigen::RowVectorXd& q) {
  double kl = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    double pi = std::max(p(i), 1e-12), qi = std::max(q(i), 1e-12);
    kl += p(i) * (std::log(pi) - std::log(qi));
  }
  return std::max(kl, 0.0);
}

namespace {

Eigen::RowVectorXd predict_probs(const Model& model, const std::vector<int>& tokens) {
  NoGradGuard guard(model.all_params());
  return model.probs(tokens)->v.row(0);
}

std::vector<std::size_t> attackable_positions(const AttackSpace& space) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < space.candidates.size(); ++i)
    if (space.candidates[i].size() > 1) out.push_back(i);
  return out;
}

AdvExample original_adv(const TextExample& x, const AttackSpace& space, AdvKind kind) {
  AdvExample adv;
  adv.kind = kind;
  adv.cand = space.candidates;
  adv.tokens = x.tokens;
  adv.objective_value = 0.0;
  if (kind == AdvKind::Mixture) {
    for (const auto& c : space.candidates) {
      Mat w = Mat::Zero(1, static_cast<Eigen::Index>(c.size()));
      w(0, 0) = 1.0;  // original token is candidate 0
      adv.weights.push_back(w);
    }
  }
  return adv;
}

AdvExample discrete_adv(const TextExample& x, const Model& model, const AttackSpace& space,
                        const AdversaryConfig& cfg, std::mt19937_64& rng) {
  AdvExample best = original_adv(x, space, AdvKind::Discrete);
  Eigen::RowVectorXd p_clean = predict_probs(model, x.tokens);
  auto objective = [&](const std::vector<int>& seq) {
    return kl_rows(p_clean, predict_probs(model, seq));
  };

  if (cfg.exhaustive_limit > 0 && space.num_sequences() <= cfg.exhaustive_limit) {
    // Mixed-radix enumeration, position 0 fastest; first argmax wins.
    std::vector<std::size_t> digit(space.candidates.size(), 0);
    std::vector<int> seq = x.tokens;
    for (;;) {
      double kl = objective(seq);
      if (kl > best.objective_value) {
        best.objective_value = kl;
        best.tokens = seq;
      }
      std::size_t i = 0;
      for (; i < digit.size(); ++i) {
        if (++digit[i] < space.candidates[i].size()) {
          seq[i] = space.candidates[i][digit[i]];
          break;
        }
        digit[i] = 0;
        seq[i] = space.candidates[i][0];
      }
      if (i == digit.size()) break;
    }
    return best;
  }

  auto attackable = attackable_positions(space);
  if (attackable.empty()) return best;
  std::vector<int> cur = x.tokens;
  double cur_obj = 0.0;
  std::uniform_int_distribution<std::size_t> pick(0, attackable.size() - 1);
  for (int t = 0; t < cfg.proposals; ++t) {
    std::size_t pos = attackable[pick(rng)];
    int best_tok = cur[pos];
    double best_here = cur_obj;
    for (int c : space.candidates[pos]) {
      if (c == cur[pos]) continue;
      std::vector<int> trial = cur;
      trial[pos] = c;
      double kl = objective(trial);
      if (kl > best_here) {
        best_here = kl;
        best_tok = c;
      }
    }
    if (best_tok != cur[pos]) {
      cur[pos] = best_tok;
      cur_obj = best_here;
      if (cur_obj > best.objective_value) {
        best.objective_value = cur_obj;
        best.tokens = cur;
      }
    }
  }
  return best;
}

AdvExample mixture_adv(const TextExample& x, const Model& model, const AttackSpace& space,
                       const AdversaryConfig& cfg, std::mt19937_64& rng) {
  AdvExample best = original_adv(x, space, AdvKind::Mixture);
  auto attackable = attackable_positions(space);
  if (attackable.empty()) return best;

  NoGradGuard guard(model.all_params());
  Eigen::RowVectorXd p_clean_row = predict_probs(model, x.tokens);
  Var p_clean = ad::constant(p_clean_row);
  Var log_p_clean = ad::constant(p_clean_row.array().max(1e-12).log().matrix());

  // Simplex-parameterized logits, uniform start; singleton positions fixed.
  std::vector<Var> logits(space.candidates.size());
  for (std::size_t i = 0; i < space.candidates.size(); ++i)
    logits[i] = ad::leaf(Mat::Zero(1, static_cast<Eigen::Index>(space.candidates[i].size())));

  // Optional discrete warm start: every sequence is a vertex of the mixture
  // polytope, so a hill-climb solution seeds both the incumbent (as one-hot
  // weights) and the ascent starting point. proposals = 0 skips it.
  if (cfg.proposals > 0) {
    AdvExample seed = discrete_adv(x, model, space, cfg, rng);
    if (seed.objective_value > best.objective_value) {
      best.objective_value = seed.objective_value;
      for (std::size_t i = 0; i < space.candidates.size(); ++i) {
        const auto& c = space.candidates[i];
        Mat w = Mat::Zero(1, static_cast<Eigen::Index>(c.size()));
        for (std::size_t k = 0; k < c.size(); ++k)
          if (c[k] == seed.tokens[i]) {
            w(0, (Eigen::Index)k) = 1.0;
            logits[i]->v(0, (Eigen::Index)k) = 8.0;
            break;
          }
        best.weights[i] = w;
      }
    }
  }

  // Tracks the best feasible point seen, whether interior or a vertex.
  auto consider_vertex = [&](const std::vector<Var>& weights) {
    std::vector<int> seq(x.tokens);
    for (std::size_t i = 0; i < weights.size(); ++i) {
      Eigen::Index c = 0;
      weights[i]->v.row(0).maxCoeff(&c);
      seq[i] = space.candidates[i][(std::size_t)c];
    }
    double obj = kl_rows(p_clean_row, predict_probs(model, seq));
    if (obj > best.objective_value) {
      best.objective_value = obj;
      for (std::size_t i = 0; i < weights.size(); ++i) {
        Eigen::Index c = 0;
        weights[i]->v.row(0).maxCoeff(&c);
        Mat w = Mat::Zero(1, weights[i]->v.cols());
        w(0, c) = 1.0;
        best.weights[i] = w;
      }
    }
  };

  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<Var> weights(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) weights[i] = ad::softmax_rows(logits[i]);
    Var s = model.student.encode_mixture(weights, space.candidates);
    Var log_q = model.head.log_probs(s);
    // KL(p_clean || q): clean branch is constant here.
    Var kl = ad::sum(ad::mul(p_clean, ad::sub(log_p_clean, log_q)));
    double obj = ad::item(kl);
    if (obj > best.objective_value) {
      best.objective_value = obj;
      for (std::size_t i = 0; i < weights.size(); ++i) best.weights[i] = weights[i]->v;
    }
    if (step > 0) consider_vertex(weights);  // after the first ascent step the argmax is informed
    ad::backward(kl);
    // Steepest-ascent (sign) steps: raw gradients are tiny near the uniform
    // start, so fixed-size sign steps are what lets 10 iterations reach the
    // simplex corners.
    for (std::size_t i : attackable)
      logits[i]->v += cfg.step_size *
                      logits[i]->g.unaryExpr([](double g) { return g > 0 ? 1.0 : (g < 0 ? -1.0 : 0.0); });
  }
  // Evaluate the final point too (backward loop reports best-so-far).
  {
    std::vector<Var> weights(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) weights[i] = ad::softmax_rows(logits[i]);
    Var s = model.student.encode_mixture(weights, space.candidates);
    Var log_q = model.head.log_probs(s);
    Var kl = ad::sum(ad::mul(p_clean, ad::sub(log_p_clean, log_q)));
    double obj = ad::item(kl);
    if (obj > best.objective_value) {
      best.objective_value = obj;
      for (std::size_t i = 0; i < weights.size(); ++i) best.weights[i] = weights[i]->v;
    }
    consider_vertex(weights);
  }
  return best;
}

}  // namespace

AdvExample adv_identity(const TextExample& x, const AttackSpace& space, AdvKind kind) {
  return original_adv(x, space, kind);
}

AdvExample gen_train_adv(const TextExample& x, const Model& model, const AttackSpace& space,
                         const AdversaryConfig& cfg, std::mt19937_64& rng) {
  if (!cfg.enabled) return original_adv(x, space, cfg.kind);
  if (cfg.kind == AdvKind::Discrete) return discrete_adv(x, model, space, cfg, rng);
  return mixture_adv(x, model, space, cfg, rng);
}

std::vector<int> lm_filter(const std::vector<int>& candidates, const std::vector<int>& tokens,
                           std::size_t pos, const NgramLM& lm, double delta) {
  if (candidates.empty()) return candidates;
  std::vector<double> score(candidates.size());
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    score[i] = lm.window_score(tokens, pos, candidates[i]);
    best = std::max(best, score[i]);
  }
  std::vector<int> out;
  int original = tokens[pos];
  for (std::size_t i = 0; i < candidates.size(); ++i)
    if (candidates[i] == original || score[i] >= best - delta) out.push_back(candidates[i]);
  if (std::find(out.begin(), out.end(), original) == out.end()) out.push_back(original);
  return out;
}

AttackResult genetic_attack(const TextExample& x, int y, const Model& model,
                            const AttackSpace& space, const GeneticConfig& cfg,
                            std::mt19937_64& rng, const NgramLM* lm) {
  if (cfg.population < 2 || cfg.iterations < 1)
    throw std::invalid_argument("genetic_attack: population >= 2 and iterations >= 1 required");
  AttackResult res;
  res.final_sequence = x.tokens;
  long queries = 0;
  auto probs = [&](const std::vector<int>& seq) {
    ++queries;
    return predict_probs(model, seq);
  };
  auto count_subs = [&](const std::vector<int>& seq) {
    int k = 0;
    for (std::size_t i = 0; i < seq.size(); ++i) k += seq[i] != x.tokens[i];
    return k;
  };

  auto attackable = attackable_positions(space);
  if (attackable.empty()) {
    res.queries = queries;
    return res;
  }

  auto mutate = [&](std::vector<int>& seq) {
    std::uniform_int_distribution<std::size_t> pick(0, attackable.size() - 1);
    std::size_t pos = attackable[pick(rng)];
    std::vector<int> cand = space.candidates[pos];
    if (lm) cand = lm_filter(cand, seq, pos, *lm, cfg.lm_delta);
    std::uniform_int_distribution<std::size_t> pc(0, cand.size() - 1);
    seq[pos] = cand[pc(rng)];
  };

  std::vector<std::vector<int>> pop(static_cast<std::size_t>(cfg.population), x.tokens);
  for (auto& seq : pop) mutate(seq);

  for (int it = 0; it < cfg.iterations; ++it) {
    std::vector<double> fitness(pop.size());
    std::size_t elite = 0;
    for (std::size_t i = 0; i < pop.size(); ++i) {
      Eigen::RowVectorXd p = probs(pop[i]);
      Eigen::Index pred;
      p.maxCoeff(&pred);
      if (static_cast<int>(pred) != y) {
        res.success = true;
        res.final_sequence = pop[i];
        res.queries = queries;
        res.substitutions_made = count_subs(pop[i]);
        return res;
      }
      fitness[i] = 1.0 - p(y);
      if (fitness[i] > fitness[elite]) elite = i;
    }
    std::discrete_distribution<std::size_t> parent(fitness.begin(), fitness.end());
    std::vector<std::vector<int>> next;
    next.push_back(pop[elite]);
    std::uniform_int_distribution<int> coin(0, 1);
    while (next.size() < pop.size()) {
      const auto& a = pop[parent(rng)];
      const auto& b = pop[parent(rng)];
      std::vector<int> child(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) child[i] = coin(rng) ? a[i] : b[i];
      mutate(child);
      next.push_back(std::move(child));
    }
    pop = std::move(next);
  }
  res.queries = queries;
  return res;
}

AttackResult pwws_attack(const TextExample& x, int y, const Model& model,
                         const AttackSpace& space) {
  AttackResult res;
  res.final_sequence = x.tokens;
  long queries = 0;
  auto probs = [&](const std::vector<int>& seq) {
    ++queries;
    return predict_probs(model, seq);
  };

  Eigen::RowVectorXd p0 = probs(x.tokens);
  Eigen::Index pred0;
  p0.maxCoeff(&pred0);
  if (static_cast<int>(pred0) != y) {
    // Already misclassified; nothing to do.
    res.success = true;
    res.queries = queries;
    return res;
  }

  auto attackable = attackable_positions(space);
  struct PosPlan {
    std::size_t pos;
    int best_sub;
    double delta;     // true-class probability drop of best substitute
    double saliency;  // drop when replaced by <unk>
  };
  std::vector<PosPlan> plans;
  for (std::size_t pos : attackable) {
    std::vector<int> trial = x.tokens;
    trial[pos] = kUnkId;
    double sal = p0(y) - probs(trial)(y);
    int best_sub = x.tokens[pos];
    double best_delta = -std::numeric_limits<double>::infinity();
    for (int c : space.candidates[pos]) {
      if (c == x.tokens[pos]) continue;
      trial = x.tokens;
      trial[pos] = c;
      double d = p0(y) - probs(trial)(y);
      if (d > best_delta) {
        best_delta = d;
        best_sub = c;
      }
    }
    if (best_sub != x.tokens[pos]) plans.push_back({pos, best_sub, best_delta, sal});
  }
  if (plans.empty()) {
    res.queries = queries;
    return res;
  }
  // Saliency-softmax weighting, then greedy cumulative application.
  double smax = -std::numeric_limits<double>::infinity();
  for (const auto& p : plans) smax = std::max(smax, p.saliency);
  double z = 0.0;
  for (const auto& p : plans) z += std::exp(p.saliency - smax);
  std::vector<std::pair<double, std::size_t>> order;
  for (std::size_t i = 0; i < plans.size(); ++i)
    order.emplace_back(plans[i].delta * std::exp(plans[i].saliency - smax) / z, i);
  std::stable_sort(order.begin(), order.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });

  std::vector<int> cur = x.tokens;
  int made = 0;
  for (const auto& [score, idx] : order) {
    (void)score;
    cur[plans[idx].pos] = plans[idx].best_sub;
    ++made;
    Eigen::RowVectorXd p = probs(cur);
    Eigen::Index pred;
    p.maxCoeff(&pred);
    if (static_cast<int>(pred) != y) {
      res.success = true;
      res.final_sequence = cur;
      res.substitutions_made = made;
      res.queries = queries;
      return res;
    }
  }
  // Flip-only policy: failed attacks keep the original input.
  res.queries = queries;
  return res;
}

}  // namespace rift
