// End-to-end acceptance checks. Each test prints one PASS/FAIL line; all
// tolerances are pinned here, not configurable.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <iostream>
#include <random>

#include "rift/eval.hpp"
#include "rift/mi_bench.hpp"
#include "rift/synthdata.hpp"
#include "rift/trainer.hpp"

using namespace rift;
using ad::Var;

namespace {

void report(int id, const char* name, bool ok) {
  std::cout << "[criterion " << id << "] " << name << ": " << (ok ? "PASS" : "FAIL") << std::endl;
}

ModelConfig tiny_mc(int vocab = 16, int classes = 2) {
  ModelConfig mc;
  mc.encoder.vocab_size = vocab;
  mc.encoder.max_len = 12;
  mc.encoder.embed_dim = 8;
  mc.encoder.depth = 1;
  mc.encoder.heads = 2;
  mc.encoder.hidden_dim = 12;
  mc.classes = classes;
  mc.head_hidden = 8;
  mc.proj_dim = 4;
  mc.teacher_dim = 8;
  return mc;
}

TextExample random_example(std::mt19937_64& rng, int len, int vocab, int label = 0) {
  TextExample ex;
  for (int i = 0; i < len; ++i)
    ex.tokens.push_back(kNumReserved + (int)(rng() % (vocab - kNumReserved)));
  ex.attackable.assign((size_t)len, true);
  ex.label = label;
  return ex;
}

AttackSpace random_space(const TextExample& ex, std::mt19937_64& rng, int vocab, int max_extra) {
  AttackSpace sp;
  sp.source = &ex;
  for (int t : ex.tokens) {
    std::vector<int> c{t};
    int extra = (int)(rng() % (std::uint64_t)(max_extra + 1));
    for (int k = 0; k < extra; ++k) {
      int alt = kNumReserved + (int)(rng() % (std::uint64_t)(vocab - kNumReserved));
      if (std::find(c.begin(), c.end(), alt) == c.end()) c.push_back(alt);
    }
    sp.candidates.push_back(c);
  }
  return sp;
}

AttackSpace singleton_space(const TextExample& ex) {
  AttackSpace sp;
  sp.source = &ex;
  for (int t : ex.tokens) sp.candidates.push_back({t});
  return sp;
}

// Exhaustive argmax-KL over the space, position 0 fastest, first argmax wins.
std::pair<std::vector<int>, double> brute_force_kl(const TextExample& ex, const Model& model,
                                                   const AttackSpace& sp) {
  Eigen::RowVectorXd p_clean = model.probs(ex.tokens)->v.row(0);
  std::vector<size_t> idx(sp.candidates.size(), 0);
  std::vector<int> best;
  double best_kl = -1.0;
  while (true) {
    std::vector<int> seq;
    for (size_t i = 0; i < idx.size(); ++i) seq.push_back(sp.candidates[i][idx[i]]);
    double kl = kl_rows(p_clean, model.probs(seq)->v.row(0));
    if (kl > best_kl) {
      best_kl = kl;
      best = seq;
    }
    size_t pos = 0;
    while (pos < idx.size() && ++idx[pos] == sp.candidates[pos].size()) idx[pos++] = 0;
    if (pos == idx.size()) break;
  }
  return {best, best_kl};
}

// ---- shared toy-task fixture for the trend criteria ----

struct ToyFixture {
  TaskData data;
  TeacherEncoder teacher;

  ToyFixture() {
    SynthTaskConfig sc;
    sc.clusters_per_class = 12;
    sc.filler_clusters = 6;
    sc.synonyms = 8;
    sc.sentence_len = 6;
    sc.signal_words = 3;
    sc.train_size = 400;
    sc.dev_size = 200;
    sc.test_size = 300;
    sc.aux_factor = 20;  // teacher corpus is 20x the labelled set
    sc.train_synonym_bias = 1.0;
    sc.cluster_coherent = true;
    sc.seed = 100;
    SynthTask task = make_synth_task(sc);
    data.vocab = task.dataset.build_vocab(1);
    data.submap = task.submap;
    data.num_classes = 2;
    data.train = task.dataset.encode_split("train", data.vocab, 32);
    data.dev = task.dataset.encode_split("dev", data.vocab, 32);
    data.test = task.dataset.encode_split("test", data.vocab, 32);
    data.build_spaces();

    std::vector<std::vector<int>> corpus;
    for (const auto& s : task.aux_sentences) {
      std::vector<int> ids;
      for (const auto& w : tokenize_words(s)) ids.push_back(data.vocab.id(w));
      corpus.push_back(ids);
    }
    PretrainConfig pc;
    pc.arch.vocab_size = data.vocab.size();
    pc.arch.max_len = 32;
    pc.arch.embed_dim = 24;
    pc.arch.depth = 1;
    pc.arch.heads = 2;
    pc.arch.hidden_dim = 48;
    pc.epochs = 30;
    pc.batch = 32;
    pc.lr = 1e-3;
    pc.seed = 1;
    teacher = pretrain_teacher(corpus, pc).teacher;
  }

  static ToyFixture& instance() {
    static ToyFixture f;
    return f;
  }

  TrainConfig base_cfg(Method m, std::uint64_t seed) const {
    TrainConfig tc;
    tc.method = m;
    tc.epochs = 15;
    tc.batch = 32;
    tc.lr = 1e-3;
    tc.alpha = 1.0;
    tc.beta = 5.0;
    tc.seed = seed;
    tc.adversary.steps = 5;
    tc.dev_eval_size = 100;
    tc.dev_adv_proposals = 8;
    return tc;
  }

  struct Run {
    double clean = 0.0;
    double genetic_robust = 0.0;
    double fast_robust = 0.0;
    std::vector<double> distances;  // per epoch
  };

  Run run(const TrainConfig& tc, int eval_n) const {
    Model model;
    RunArtifacts art = train(tc, data, teacher, teacher.encoder(), "", "", nullptr, &model);
    Run r;
    r.clean = clean_accuracy(model, data.test);
    for (const auto& m : art.history) r.distances.push_back(m.rel_param_distance);
    std::mt19937_64 rng(99);
    r.fast_robust = fast_robust_accuracy(model, data.dev, data.dev_spaces, 8, rng);
    if (eval_n > 0) {
      EvalConfig ec;
      ec.algo = AttackAlgo::Genetic;
      ec.n = eval_n;
      ec.seed = 7;
      ec.genetic.population = 20;
      ec.genetic.iterations = 10;
      r.genetic_robust = evaluate_robust(model, data.test, data.test_spaces, ec).robust_acc;
    }
    return r;
  }
};

}  // namespace

TEST_CASE("1: contrastive estimate bounded by true MI and ln N") {
  const std::vector<double> rhos{0.0, 0.5, 0.9};
  const std::vector<int> ns{4, 16, 64};
  const int repeats = 5;
  BoundTrainConfig cfg;  // 2000 training steps, 30 held-out batches
  bool ok = true;
  for (double rho : rhos) {
    SyntheticJointSpec spec = SyntheticJointSpec::gaussian(rho);
    double truth = true_cmi(spec);
    for (int n : ns) {
      for (int r = 0; r < repeats; ++r) {
        BoundEstimate est = estimate_bound(spec, n, cfg, 1000 + (std::uint64_t)r);
        bool valid = est.mean <= truth + 3 * est.stderr_ &&
                     est.mean <= std::log((double)n) + 3 * est.stderr_;
        if (!valid)
          std::cout << "  violation at rho=" << rho << " N=" << n << " repeat=" << r
                    << " est=" << est.mean << " truth=" << truth << " se=" << est.stderr_ << "\n";
        ok = ok && valid;
        CHECK(valid);
      }
    }
  }
  report(1, "bound validity over rho x N x 5 repeats", ok);
}

TEST_CASE("2: larger contrastive batches tighten the bound at rho 0.9") {
  SyntheticJointSpec spec = SyntheticJointSpec::gaussian(0.9);
  BoundTrainConfig cfg;
  int wins = 0;
  for (int r = 0; r < 5; ++r) {
    double small = estimate_bound(spec, 4, cfg, 2000 + (std::uint64_t)r).mean;
    double large = estimate_bound(spec, 64, cfg, 2000 + (std::uint64_t)r).mean;
    wins += large > small;
  }
  bool ok = wins >= 4;
  report(2, "N=64 beats N=4 in >= 4/5 repeats", ok);
  CHECK(ok);
}

TEST_CASE("3: finite-difference gradient suite across all loss terms") {
  const double tol = 1e-3;
  const int instances = 20;
  std::mt19937_64 rng(300);
  int bad = 0;

  auto fd_ok = [&](const Var& loss, std::vector<NamedParam> params,
                   const std::function<double()>& eval) {
    ad::backward(loss);
    for (auto& p : params) {
      for (int k = 0; k < 2; ++k) {
        long r = (long)(rng() % (std::uint64_t)p.value->v.rows());
        long c = (long)(rng() % (std::uint64_t)p.value->v.cols());
        double h = 1e-5, orig = p.value->v(r, c);
        p.value->v(r, c) = orig + h;
        double up = eval();
        p.value->v(r, c) = orig - h;
        double dn = eval();
        p.value->v(r, c) = orig;
        double fd = (up - dn) / (2 * h);
        double an = p.value->g(r, c);
        if (std::abs(fd - an) > tol * std::max({1.0, std::abs(fd), std::abs(an)})) return false;
      }
    }
    return true;
  };

  // ce and kl terms
  for (int i = 0; i < instances; ++i) {
    Model model = make_model(tiny_mc(), rng);
    TextExample ex = random_example(rng, 3, 16, (int)(rng() % 2));
    TextExample other = random_example(rng, 3, 16, ex.label);
    AdvExample adv = adv_identity(other, singleton_space(other));
    TaskLoss tl = task_loss(ex, adv, ex.label, model);
    bad += !fd_ok(tl.ce, model.all_params(),
                  [&] { return ad::item(task_loss(ex, adv, ex.label, model).ce); });
    bad += !fd_ok(tl.kl, model.all_params(),
                  [&] { return ad::item(task_loss(ex, adv, ex.label, model).kl); });
  }

  // info nce (skipping ill-conditioned near-zero projections, where central
  // differences are meaningless)
  int done = 0;
  for (int i = 0; done < instances && i < 200; ++i) {
    ScoreHeads sh(1, 4, 4, 3, 0.2, rng);
    ad::Mat s = ad::Mat::Random(5, 4), t = ad::Mat::Random(5, 4);
    double min_norm = std::min(sh.project1(0, ad::constant(s))->v.rowwise().norm().minCoeff(),
                               sh.project2(0, ad::constant(t))->v.rowwise().norm().minCoeff());
    if (min_norm < 5e-2) continue;
    ++done;
    Var loss = info_nce_loss(ad::constant(s), ad::constant(t), 0, sh);
    bad += !fd_ok(loss, sh.params(),
                  [&] { return ad::item(info_nce_loss(ad::constant(s), ad::constant(t), 0, sh)); });
  }
  bad += done < instances;

  // ptwd
  for (int i = 0; i < instances; ++i) {
    Encoder enc(tiny_mc().encoder, rng);
    auto params = enc.params();
    auto pre = snapshot_values(params);
    for (auto& p : params) p.value->v.array() += 0.05;
    Var loss = ptwd_penalty(params, pre, 0.01);
    bad += !fd_ok(loss, params, [&] { return ad::item(ptwd_penalty(params, pre, 0.01)); });
  }

  // combined objective
  for (int i = 0; i < instances; ++i) {
    Model model = make_model(tiny_mc(), rng);
    Encoder tenc(tiny_mc().encoder, rng);
    TeacherEncoder teacher(tenc, "acc");
    ClassBatch batch;
    batch.label = 1;
    for (int b = 0; b < 3; ++b) batch.examples.push_back(random_example(rng, 3, 16, 1));
    std::vector<AttackSpace> spaces;
    for (auto& e : batch.examples) spaces.push_back(singleton_space(e));
    RiftWeights w;
    w.alpha = 0.3;
    w.beta = 2.0;
    w.lambda = 0.02;
    AdversaryConfig cfg;
    cfg.enabled = false;
    auto pre = snapshot_values(model.encoder_params());
    for (auto& p : model.encoder_params()) p.value->v.array() += 0.03;
    auto eval = [&] {
      std::mt19937_64 r(7);
      return rift_loss(batch, spaces, model, teacher, cfg, w, r, &pre).parts.total;
    };
    std::mt19937_64 adv_rng(7);
    LossTerm lt = rift_loss(batch, spaces, model, teacher, cfg, w, adv_rng, &pre);
    bad += !fd_ok(lt.value, model.all_params(), eval);
  }

  bool ok = bad == 0;
  report(3, "gradients match finite differences at 1e-3", ok);
  CHECK(ok);
}

TEST_CASE("4: training adversary matches the exhaustive oracle") {
  std::mt19937_64 rng(400);
  Model model = make_model(tiny_mc(), rng);
  AdversaryConfig exhaustive;
  exhaustive.kind = AdvKind::Discrete;
  exhaustive.exhaustive_limit = 200;
  AdversaryConfig mixture;  // reference PGD settings: 10 steps, step 1.0

  int exact = 0, dominated = 0, total = 0;
  while (total < 100) {
    TextExample ex = random_example(rng, 4, 16);
    AttackSpace sp = random_space(ex, rng, 16, 2);
    if (sp.num_sequences() > 200) continue;
    ++total;
    auto [best_seq, best_kl] = brute_force_kl(ex, model, sp);
    AdvExample d = gen_train_adv(ex, model, sp, exhaustive, rng);
    exact += d.tokens == best_seq;
    AdvExample m = gen_train_adv(ex, model, sp, mixture, rng);
    dominated += m.objective_value >= best_kl - 1e-9;
  }
  bool ok = exact == 100 && dominated >= 95;
  std::cout << "  exhaustive exact " << exact << "/100, mixture >= discrete optimum " << dominated
            << "/100\n";
  report(4, "adversary oracle equivalence", ok);
  CHECK(exact == 100);
  CHECK(dominated >= 95);
}

TEST_CASE("5: attacks never leave the perturbation space") {
  std::mt19937_64 rng(500);
  Model model = make_model(tiny_mc(), rng);
  GeneticConfig gc;
  gc.population = 10;
  gc.iterations = 5;
  int violations = 0;
  for (int i = 0; i < 500; ++i) {
    TextExample ex = random_example(rng, 5, 16, (int)(rng() % 2));
    AttackSpace sp = random_space(ex, rng, 16, 2);
    AttackResult g = genetic_attack(ex, ex.label, model, sp, gc, rng);
    AttackResult p = pwws_attack(ex, ex.label, model, sp);
    violations += !sp.contains(g.final_sequence);
    violations += !sp.contains(p.final_sequence);
  }
  bool ok = violations == 0;
  report(5, "containment over 1000 attack runs", ok);
  CHECK(ok);
}

TEST_CASE("6: objective reductions are numerically identical") {
  auto& f = ToyFixture::instance();
  const double tol = 1e-6;
  auto collect = [&](TrainConfig cfg) {
    std::vector<double> steps;
    cfg.epochs = 1;
    cfg.steps_per_epoch = 100;
    cfg.dev_eval_size = 4;
    cfg.dev_adv_proposals = 1;
    train(cfg, f.data, f.teacher, f.teacher.encoder(), "", "",
          [&](int, const LossBreakdown& lb) { steps.push_back(lb.total); });
    return steps;
  };

  TrainConfig rift0 = f.base_cfg(Method::Rift, 21);
  rift0.alpha = 0.0;
  auto s1 = collect(rift0);
  auto s2 = collect(f.base_cfg(Method::AdvBase, 21));
  bool adv_match = s1.size() == 100 && s1.size() == s2.size();
  for (size_t i = 0; adv_match && i < s1.size(); ++i)
    adv_match = std::abs(s1[i] - s2[i]) <= tol * std::max(1.0, std::abs(s2[i]));

  TrainConfig rift00 = rift0;
  rift00.beta = 0.0;
  rift00.adversary.enabled = false;
  auto s3 = collect(rift00);
  auto s4 = collect(f.base_cfg(Method::Standard, 21));
  bool std_match = s3.size() == 100 && s3.size() == s4.size();
  for (size_t i = 0; std_match && i < s3.size(); ++i)
    std_match = std::abs(s3[i] - s4[i]) <= tol * std::max(1.0, std::abs(s4[i]));

  bool ok = adv_match && std_match;
  report(6, "alpha=0 matches adv-base; alpha=beta=0 clean matches standard", ok);
  CHECK(adv_match);
  CHECK(std_match);
}

TEST_CASE("7: informative fine-tuning beats the plain adversarial baseline") {
  auto& f = ToyFixture::instance();
  const int seeds = 5;
  const int eval_n = 100;
  double rift_clean = 0, rift_rob = 0, base_clean = 0, base_rob = 0;
  for (int s = 0; s < seeds; ++s) {
    auto rb = f.run(f.base_cfg(Method::AdvBase, (std::uint64_t)s), eval_n);
    auto rr = f.run(f.base_cfg(Method::Rift, (std::uint64_t)s), eval_n);
    base_clean += rb.clean;
    base_rob += (rb.genetic_robust + rb.fast_robust) / 2;
    rift_clean += rr.clean;
    rift_rob += (rr.genetic_robust + rr.fast_robust) / 2;
    std::cout << "  seed " << s << ": adv-base clean " << rb.clean << " robust "
              << (rb.genetic_robust + rb.fast_robust) / 2 << " | rift clean " << rr.clean
              << " robust " << (rr.genetic_robust + rr.fast_robust) / 2 << "\n";
  }
  base_clean /= seeds;
  base_rob /= seeds;
  rift_clean /= seeds;
  rift_rob /= seeds;
  std::cout << "  means: adv-base clean " << base_clean << " robust " << base_rob
            << " | rift clean " << rift_clean << " robust " << rift_rob << "\n";
  bool robust_win = rift_rob > base_rob;
  bool clean_close = rift_clean >= base_clean - 0.01;
  report(7, "rift > adv-base robust, clean within 1 point", robust_win && clean_close);
  CHECK(robust_win);
  CHECK(clean_close);
}

TEST_CASE("8: parameter drift grows over training and with beta") {
  auto& f = ToyFixture::instance();
  const int seeds = 5;
  int monotone = 0;
  double final_b1 = 0, final_b10 = 0;
  for (int s = 0; s < seeds; ++s) {
    TrainConfig b10 = f.base_cfg(Method::AdvBase, (std::uint64_t)s);
    b10.beta = 10.0;
    auto r10 = f.run(b10, 0);
    TrainConfig b1 = b10;
    b1.beta = 1.0;
    auto r1 = f.run(b1, 0);
    final_b10 += r10.distances.back();
    final_b1 += r1.distances.back();
    bool inc = true;
    for (size_t i = 1; i < r10.distances.size(); ++i)
      inc = inc && r10.distances[i] >= r10.distances[i - 1] - 1e-12;
    monotone += inc;
  }
  bool ok = monotone >= 4 && final_b10 / seeds > final_b1 / seeds;
  std::cout << "  monotone " << monotone << "/5, mean final distance beta=10 "
            << final_b10 / seeds << " vs beta=1 " << final_b1 / seeds << "\n";
  report(8, "distance non-decreasing and increasing in beta", ok);
  CHECK(monotone >= 4);
  CHECK(final_b10 / seeds > final_b1 / seeds);
}

TEST_CASE("9: robustness is unimodal in alpha") {
  auto& f = ToyFixture::instance();
  const std::vector<double> alphas{0.0, 1.0, 2.0, 4.0};
  const int seeds = 5;
  std::vector<double> means;
  for (double a : alphas) {
    double acc = 0;
    for (int s = 0; s < seeds; ++s) {
      TrainConfig tc = f.base_cfg(Method::Rift, (std::uint64_t)s);
      tc.alpha = a;
      auto r = f.run(tc, 100);
      acc += (r.genetic_robust + r.fast_robust) / 2;
    }
    means.push_back(acc / seeds);
    std::cout << "  alpha " << a << ": mean robust " << means.back() << "\n";
  }
  size_t peak = 0;
  for (size_t i = 1; i < means.size(); ++i)
    if (means[i] > means[peak]) peak = i;
  bool interior = peak > 0 && peak + 1 < means.size();
  bool rises = interior && means[peak] > means.front();
  bool falls = interior && means[peak] > means.back();
  bool ok = interior && rises && falls;
  report(9, "alpha sweep rises then falls", ok);
  CHECK(ok);
}

TEST_CASE("10: the training adversary is label-blind") {
  std::mt19937_64 rng(1000);
  Model model = make_model(tiny_mc(), rng);
  int identical = 0;
  const int n = 200;
  for (int i = 0; i < n; ++i) {
    TextExample ex = random_example(rng, 5, 16, 0);
    AttackSpace sp = random_space(ex, rng, 16, 2);
    TextExample flipped = ex;
    flipped.label = 1;
    AdversaryConfig cfg;
    if (i % 2) {
      cfg.kind = AdvKind::Discrete;
      cfg.proposals = 10;
    }
    std::mt19937_64 r1((std::uint64_t)i), r2((std::uint64_t)i);
    AdvExample a = gen_train_adv(ex, model, sp, cfg, r1);
    AdvExample b = gen_train_adv(flipped, model, sp, cfg, r2);
    bool same = a.tokens == b.tokens && a.objective_value == b.objective_value &&
                a.weights.size() == b.weights.size();
    for (size_t k = 0; same && k < a.weights.size(); ++k)
      same = (a.weights[k] - b.weights[k]).cwiseAbs().maxCoeff() == 0.0;
    identical += same;
  }
  bool ok = identical == n;
  report(10, "label flip leaves adversary output bit-identical", ok);
  CHECK(ok);
}
