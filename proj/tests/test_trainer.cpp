#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "rift/synthdata.hpp"
#include "rift/trainer.hpp"

using namespace rift;
using ad::Var;

namespace {

TaskData build_task_data(const SynthTask& task, int max_len = 32) {
  TaskData d;
  d.vocab = task.dataset.build_vocab(1);
  d.submap = task.submap;
  d.num_classes = task.dataset.num_classes();
  d.train = task.dataset.encode_split("train", d.vocab, max_len);
  d.dev = task.dataset.encode_split("dev", d.vocab, max_len);
  d.test = task.dataset.encode_split("test", d.vocab, max_len);
  d.build_spaces();
  return d;
}

SynthTaskConfig small_synth(std::uint64_t seed) {
  SynthTaskConfig c;
  c.train_size = 80;
  c.dev_size = 24;
  c.test_size = 24;
  c.aux_factor = 2;
  c.sentence_len = 6;
  c.signal_words = 3;
  c.clusters_per_class = 2;
  c.filler_clusters = 3;
  c.synonyms = 3;
  c.seed = seed;
  return c;
}

TeacherEncoder tiny_teacher(const TaskData& d, const SynthTask& task, std::uint64_t seed) {
  std::vector<std::vector<int>> corpus;
  for (const auto& s : task.aux_sentences) {
    std::vector<int> ids;
    for (const auto& w : tokenize_words(s)) ids.push_back(d.vocab.id(w));
    corpus.push_back(ids);
  }
  PretrainConfig pc;
  pc.arch.vocab_size = d.vocab.size();
  pc.arch.max_len = 32;
  pc.arch.embed_dim = 12;
  pc.arch.depth = 1;
  pc.arch.heads = 2;
  pc.arch.hidden_dim = 16;
  pc.epochs = 2;
  pc.batch = 16;
  pc.seed = seed;
  return pretrain_teacher(corpus, pc).teacher;
}

TrainConfig fast_cfg(Method m, std::uint64_t seed) {
  TrainConfig c;
  c.method = m;
  c.epochs = 2;
  c.batch = 8;
  c.lr = 1e-3;
  c.seed = seed;
  c.adversary.steps = 2;
  c.dev_eval_size = 10;
  c.dev_adv_proposals = 2;
  return c;
}

}  // namespace

TEST_CASE("adamw: zero gradient with zero decay is a fixed point") {
  Var w = ad::leaf(ad::Mat::Random(3, 3));
  ad::Mat before = w->v;
  AdamW::Config c;
  c.lr = 1e-2;
  AdamW opt(c);
  opt.add_group({{"w", w}}, 0.0);
  w->g.setZero();
  opt.step();
  CHECK((w->v - before).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("adamw: decoupled decay shrinks weights by exactly (1 - lr d)") {
  Var w = ad::leaf(ad::Mat::Constant(2, 2, 3.0));
  AdamW::Config c;
  c.lr = 0.1;
  AdamW opt(c);
  opt.add_group({{"w", w}}, 0.5);
  w->g.setZero();
  opt.step();
  // zero gradient: only the decay multiplier applies
  CHECK(w->v(0, 0) == doctest::Approx(3.0 * (1.0 - 0.1 * 0.5)));
}

TEST_CASE("adamw: first step moves by exactly lr against the gradient sign") {
  Var w = ad::leaf(ad::Mat::Constant(1, 2, 1.0));
  AdamW::Config c;
  c.lr = 0.05;
  AdamW opt(c);
  opt.add_group({{"w", w}}, 0.0);
  w->g = ad::Mat::Constant(1, 2, 0.7);
  opt.step();
  // bias-corrected m/(sqrt(v)+eps) == g/|g| on step one
  CHECK(w->v(0, 0) == doctest::Approx(1.0 - 0.05).epsilon(1e-6));
  w->g = ad::Mat::Constant(1, 2, -0.7);
  for (int i = 0; i < 3; ++i) opt.step();
  CHECK(w->v(0, 0) > 1.0 - 0.05);  // heads back up
}

TEST_CASE("adamw minimizes a quadratic") {
  Var w = ad::leaf(ad::Mat::Constant(1, 1, 4.0));
  AdamW::Config c;
  c.lr = 1e-2;
  AdamW opt(c);
  opt.add_group({{"w", w}}, 0.0);
  for (int i = 0; i < 1000; ++i) {
    opt.zero_grad();
    Var loss = ad::mul(w, w);
    ad::backward(loss);
    opt.step();
  }
  CHECK(std::abs(w->v(0, 0)) < 0.05);
}

TEST_CASE("adamw rejects non-finite gradients") {
  Var w = ad::leaf(ad::Mat::Constant(1, 1, 1.0));
  AdamW opt{AdamW::Config{}};
  opt.add_group({{"w", w}}, 0.0);
  w->g(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS(opt.step());
}

TEST_CASE("early stopping picks the robust-accuracy argmax, earliest tie") {
  auto mk = [](std::initializer_list<double> accs) {
    std::vector<EpochMetrics> h;
    int e = 0;
    for (double a : accs) {
      EpochMetrics m;
      m.epoch = e++;
      m.robust_acc = a;
      h.push_back(m);
    }
    return h;
  };
  CHECK(early_stop_select(mk({0.70, 0.75, 0.73})) == 1);
  CHECK(early_stop_select(mk({0.70, 0.75, 0.75})) == 1);
  CHECK(early_stop_select(mk({0.80})) == 0);
  CHECK_THROWS(early_stop_select({}));
}

TEST_CASE("method names round trip") {
  for (Method m : {Method::Standard, Method::AdvBase, Method::AdvPTWD, Method::AdvMixout,
                   Method::Rift})
    CHECK(method_from_string(method_name(m)) == m);
  CHECK_THROWS(method_from_string("bogus"));
}

TEST_CASE("training is deterministic under a fixed seed") {
  SynthTask task = make_synth_task(small_synth(31));
  TaskData data = build_task_data(task);
  TeacherEncoder teacher = tiny_teacher(data, task, 2);

  Model m1, m2;
  RunArtifacts a1 = train(fast_cfg(Method::Rift, 5), data, teacher, teacher.encoder(), "", "",
                          nullptr, &m1);
  RunArtifacts a2 = train(fast_cfg(Method::Rift, 5), data, teacher, teacher.encoder(), "", "",
                          nullptr, &m2);
  REQUIRE(a1.history.size() == a2.history.size());
  for (size_t i = 0; i < a1.history.size(); ++i) {
    CHECK(a1.history[i].clean_acc == a2.history[i].clean_acc);
    CHECK(a1.history[i].robust_acc == a2.history[i].robust_acc);
    CHECK(a1.history[i].mean_loss.total == a2.history[i].mean_loss.total);
  }
  auto p1 = m1.all_params(), p2 = m2.all_params();
  for (size_t i = 0; i < p1.size(); ++i)
    CHECK((p1[i].value->v - p2[i].value->v).cwiseAbs().maxCoeff() == 0.0);

  RunArtifacts a3 = train(fast_cfg(Method::Rift, 6), data, teacher, teacher.encoder(), "");
  bool same = true;
  for (size_t i = 0; i < a1.history.size(); ++i)
    same = same && a1.history[i].mean_loss.total == a3.history[i].mean_loss.total;
  CHECK_FALSE(same);
}

TEST_CASE("standard fine-tuning fits an easy separable task") {
  SynthTaskConfig sc = small_synth(32);
  sc.train_size = 160;
  SynthTask task = make_synth_task(sc);
  TaskData data = build_task_data(task);
  TeacherEncoder teacher = tiny_teacher(data, task, 3);
  TrainConfig cfg = fast_cfg(Method::Standard, 7);
  cfg.epochs = 14;
  cfg.lr = 2e-3;
  Model model;
  train(cfg, data, teacher, teacher.encoder(), "", "", nullptr, &model);
  CHECK(clean_accuracy(model, data.train) > 0.95);
  CHECK(clean_accuracy(model, data.test) > 0.8);
}

TEST_CASE("per-step losses: rift with alpha 0 reduces to adv-base, and to standard") {
  SynthTask task = make_synth_task(small_synth(33));
  TaskData data = build_task_data(task);
  TeacherEncoder teacher = tiny_teacher(data, task, 4);

  auto collect = [&](TrainConfig cfg) {
    std::vector<double> steps;
    train(cfg, data, teacher, teacher.encoder(), "", "",
          [&](int, const LossBreakdown& lb) { steps.push_back(lb.total); });
    return steps;
  };

  TrainConfig rift0 = fast_cfg(Method::Rift, 9);
  rift0.alpha = 0.0;
  rift0.epochs = 1;
  TrainConfig advb = fast_cfg(Method::AdvBase, 9);
  advb.epochs = 1;
  auto s1 = collect(rift0), s2 = collect(advb);
  REQUIRE(s1.size() == s2.size());
  for (size_t i = 0; i < s1.size(); ++i) CHECK(s1[i] == doctest::Approx(s2[i]).epsilon(1e-6));

  TrainConfig rift00 = rift0;
  rift00.beta = 0.0;
  rift00.adversary.enabled = false;
  TrainConfig std_cfg = fast_cfg(Method::Standard, 9);
  std_cfg.epochs = 1;
  auto s3 = collect(rift00), s4 = collect(std_cfg);
  REQUIRE(s3.size() == s4.size());
  for (size_t i = 0; i < s3.size(); ++i) CHECK(s3[i] == doctest::Approx(s4[i]).epsilon(1e-6));
}

TEST_CASE("run directory artifacts: config snapshot, metrics, checkpoints") {
  SynthTask task = make_synth_task(small_synth(34));
  TaskData data = build_task_data(task);
  TeacherEncoder teacher = tiny_teacher(data, task, 5);
  std::string dir = "/tmp/rift_test_run";
  std::filesystem::remove_all(dir);
  TrainConfig cfg = fast_cfg(Method::AdvPTWD, 11);
  RunArtifacts art = train(cfg, data, teacher, teacher.encoder(), dir, "{\"k\":1}");
  CHECK(std::filesystem::exists(dir + "/config.json"));
  CHECK(std::filesystem::exists(dir + "/metrics.jsonl"));
  CHECK(std::filesystem::exists(art.best_checkpoint));
  CHECK(std::filesystem::exists(art.last_checkpoint));
  std::ifstream cfgf(dir + "/config.json");
  std::string snap((std::istreambuf_iterator<char>(cfgf)), std::istreambuf_iterator<char>());
  CHECK(snap == "{\"k\":1}");
  // best checkpoint reloads and reproduces the recorded dev accuracy
  Model best = load_model(art.best_checkpoint);
  double robust_best = art.history[(size_t)art.best_epoch].robust_acc;
  CHECK(art.best_robust_acc == doctest::Approx(robust_best));
  CHECK(best.cfg.classes == 2);
  std::filesystem::remove_all(dir);
}

TEST_CASE("history invariants: accuracies in range, distance well defined") {
  SynthTask task = make_synth_task(small_synth(35));
  TaskData data = build_task_data(task);
  TeacherEncoder teacher = tiny_teacher(data, task, 6);
  RunArtifacts art = train(fast_cfg(Method::AdvMixout, 13), data, teacher, teacher.encoder(), "");
  for (const auto& m : art.history) {
    CHECK(m.clean_acc >= 0.0);
    CHECK(m.clean_acc <= 1.0);
    CHECK(m.robust_acc <= m.clean_acc);
    CHECK(m.rel_param_distance >= 0.0);
    CHECK(std::isfinite(m.mean_loss.total));
  }
}
