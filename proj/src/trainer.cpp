#include "rift/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace rift {

namespace fs = std::filesystem;
using nlohmann::json;

Method method_from_string(const std::string& s) {
  if (s == "standard") return Method::Standard;
  if (s == "adv-base") return Method::AdvBase;
  if (s == "adv-ptwd") return Method::AdvPTWD;
  if (s == "adv-mixout") return Method::AdvMixout;
  if (s == "rift") return Method::Rift;
  throw std::invalid_argument("unknown method: " + s);
}

std::string method_name(Method m) {
  switch (m) {
    case Method::Standard: return "standard";
    case Method::AdvBase: return "adv-base";
    case Method::AdvPTWD: return "adv-ptwd";
    case Method::AdvMixout: return "adv-mixout";
    case Method::Rift: return "rift";
  }
  return "?";
}

void TaskData::build_spaces() {
  auto make = [&](const std::vector<TextExample>& exs) {
    std::vector<AttackSpace> out;
    out.reserve(exs.size());
    for (const auto& ex : exs) out.push_back(build_attack_space(ex, submap, vocab));
    return out;
  };
  train_spaces = make(train);
  dev_spaces = make(dev);
  test_spaces = make(test);
}

double clean_accuracy(const Model& model, const std::vector<TextExample>& examples) {
  if (examples.empty()) return 0.0;
  int ok = 0;
  for (const auto& ex : examples) ok += model.predict(ex.tokens) == ex.label;
  return static_cast<double>(ok) / static_cast<double>(examples.size());
}

double fast_robust_accuracy(const Model& model, const std::vector<TextExample>& examples,
                            const std::vector<AttackSpace>& spaces, int proposals,
                            std::mt19937_64& rng) {
  if (examples.empty()) return 0.0;
  AdversaryConfig cfg;
  cfg.kind = AdvKind::Discrete;
  cfg.proposals = proposals;
  int robust = 0;
  for (size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    if (model.predict(ex.tokens) != ex.label) continue;
    AdvExample adv = gen_train_adv(ex, model, spaces[i], cfg, rng);
    if (model.predict(adv.tokens) == ex.label) ++robust;
  }
  return static_cast<double>(robust) / static_cast<double>(examples.size());
}

int early_stop_select(const std::vector<EpochMetrics>& history) {
  if (history.empty()) throw std::invalid_argument("early_stop_select: empty history");
  int best = 0;
  for (int i = 1; i < static_cast<int>(history.size()); ++i)
    if (history[static_cast<size_t>(i)].robust_acc >
        history[static_cast<size_t>(best)].robust_acc)
      best = i;
  return best;
}

namespace {

json loss_json(const LossBreakdown& b) {
  return {{"ce", b.ce},       {"kl", b.kl},   {"info", b.info}, {"reg", b.reg},
          {"total", b.total}, {"alpha", b.alpha}, {"beta", b.beta}, {"lambda", b.lambda}};
}

void dump_abort_diagnostics(const std::string& dir, int step, const ClassBatch& batch,
                            const LossBreakdown& parts) {
  if (dir.empty()) return;
  json j;
  j["step"] = step;
  j["label"] = batch.label;
  j["loss"] = loss_json(parts);
  json toks = json::array();
  for (const auto& ex : batch.examples) toks.push_back(ex.tokens);
  j["batch_tokens"] = toks;
  std::ofstream out(dir + "/abort_diagnostics.json");
  out << j.dump(2) << "\n";
}

}  // namespace

RunArtifacts train(const TrainConfig& cfg, const TaskData& data, const TeacherEncoder& teacher,
                   const Encoder& init_encoder, const std::string& out_dir,
                   const std::string& config_snapshot, StepHook hook, Model* out_model) {
  if (data.train.empty()) throw std::invalid_argument("train: empty training set");
  if (data.train_spaces.size() != data.train.size())
    throw std::invalid_argument("train: attack spaces not built");

  const double teacher_checksum = teacher.checksum();

  // Separate seeded streams keep method comparisons aligned at equal seeds.
  std::mt19937_64 init_rng(cfg.seed);
  std::mt19937_64 batch_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  std::mt19937_64 adv_rng(cfg.seed ^ 0x6a09e667f3bcc909ull);
  std::mt19937_64 mixout_rng(cfg.seed ^ 0xbb67ae8584caa73bull);
  std::mt19937_64 dev_rng(cfg.seed ^ 0x3c6ef372fe94f82bull);

  ModelConfig mc;
  mc.encoder = init_encoder.config();
  mc.classes = data.num_classes;
  mc.head_hidden = init_encoder.config().embed_dim;
  mc.proj_dim = init_encoder.config().embed_dim / 2;
  mc.teacher_dim = teacher.dim();
  Model model = make_model(mc, init_encoder, init_rng);

  std::vector<ad::Mat> pre_values = snapshot_values(model.encoder_params());

  AdamW opt({.lr = cfg.lr, .clip_norm = cfg.clip_norm});
  opt.add_group(model.encoder_params(), 0.0);
  opt.add_group(model.task_params(), cfg.task_decay);
  opt.add_group(model.score_params(), cfg.task_decay);

  RiftWeights w;
  w.alpha = cfg.method == Method::Rift ? cfg.alpha : 0.0;
  w.beta = cfg.method == Method::Standard ? 0.0 : cfg.beta;
  w.lambda = cfg.method == Method::AdvPTWD ? cfg.lambda : 0.0;

  AdversaryConfig adv = cfg.adversary;
  adv.enabled = cfg.method != Method::Standard;

  // Index map from train pool to spaces (batch sampling copies examples,
  // so map by identity of the sampled pointer's tokens via index lookup).
  // sample_class_batch copies; we resample indices here instead to keep
  // the space association.
  std::vector<std::vector<int>> by_class(static_cast<size_t>(data.num_classes));
  for (size_t i = 0; i < data.train.size(); ++i)
    by_class[static_cast<size_t>(data.train[i].label)].push_back(static_cast<int>(i));
  for (const auto& c : by_class)
    if (c.empty()) throw std::invalid_argument("train: a class has no training examples");

  const int steps_per_epoch =
      cfg.steps_per_epoch > 0
          ? cfg.steps_per_epoch
          : static_cast<int>((data.train.size() + static_cast<size_t>(cfg.batch) - 1) /
                             static_cast<size_t>(cfg.batch));

  RunArtifacts run;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    run.dir = out_dir;
    std::ofstream cf(out_dir + "/config.json", std::ios::binary);
    cf << config_snapshot;
  }
  std::ofstream metrics_out, steps_out;
  if (!out_dir.empty()) {
    metrics_out.open(out_dir + "/metrics.jsonl");
    steps_out.open(out_dir + "/steps.jsonl");
  }

  // Dev subset for the fast attack, fixed across epochs.
  std::vector<TextExample> dev_sub;
  std::vector<AttackSpace> dev_sub_spaces;
  {
    int n = std::min<int>(cfg.dev_eval_size, static_cast<int>(data.dev.size()));
    auto idx = sample_indices(data.dev.size(), n, dev_rng);
    for (int i : idx) {
      dev_sub.push_back(data.dev[static_cast<size_t>(i)]);
      dev_sub_spaces.push_back(data.dev_spaces[static_cast<size_t>(i)]);
    }
  }

  int global_step = 0;
  std::vector<ad::Mat> best_params;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    LossBreakdown epoch_mean;
    for (int step = 0; step < steps_per_epoch; ++step, ++global_step) {
      // Class-pure sampling: y ~ p_D(y), then N i.i.d. examples of class y.
      std::uniform_int_distribution<size_t> pick(0, data.train.size() - 1);
      int y = data.train[pick(batch_rng)].label;
      const auto& cls = by_class[static_cast<size_t>(y)];
      std::uniform_int_distribution<size_t> pick_cls(0, cls.size() - 1);
      ClassBatch batch;
      batch.label = y;
      std::vector<AttackSpace> spaces;
      for (int i = 0; i < cfg.batch; ++i) {
        int idx = cls[pick_cls(batch_rng)];
        batch.examples.push_back(data.train[static_cast<size_t>(idx)]);
        spaces.push_back(data.train_spaces[static_cast<size_t>(idx)]);
        spaces.back().source = &batch.examples.back();
      }

      std::optional<MixoutMask> mixout;
      if (cfg.method == Method::AdvMixout) {
        mixout.emplace(model.encoder_params(), pre_values, cfg.mixout_m, mixout_rng);
        mixout->apply();
      }

      LossTerm loss = rift_loss(batch, spaces, model, teacher, adv, w, adv_rng,
                                w.lambda != 0.0 ? &pre_values : nullptr, cfg.stop_clean_grad);
      if (!std::isfinite(loss.parts.total)) {
        dump_abort_diagnostics(out_dir, global_step, batch, loss.parts);
        throw std::runtime_error("train: non-finite loss at step " + std::to_string(global_step));
      }
      opt.zero_grad();
      ad::backward(loss.value);
      if (mixout) mixout->finish();
      opt.step();

      if (hook) hook(global_step, loss.parts);
      if (steps_out.is_open())
        steps_out << json({{"step", global_step}, {"epoch", epoch}, {"loss", loss_json(loss.parts)}})
                         .dump()
                  << "\n";
      epoch_mean.ce += loss.parts.ce;
      epoch_mean.kl += loss.parts.kl;
      epoch_mean.info += loss.parts.info;
      epoch_mean.reg += loss.parts.reg;
      epoch_mean.total += loss.parts.total;
    }
    const double inv = 1.0 / static_cast<double>(steps_per_epoch);
    epoch_mean.ce *= inv;
    epoch_mean.kl *= inv;
    epoch_mean.info *= inv;
    epoch_mean.reg *= inv;
    epoch_mean.total *= inv;

    EpochMetrics em;
    em.epoch = epoch;
    em.mean_loss = epoch_mean;
    em.rel_param_distance = relative_param_distance(model.encoder_params(), pre_values);
    if ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs) {
      em.clean_acc = clean_accuracy(model, data.dev);
      std::mt19937_64 attack_rng(cfg.seed ^ 0xa54ff53a5f1d36f1ull ^
                                 static_cast<std::uint64_t>(epoch));
      em.robust_acc = fast_robust_accuracy(model, dev_sub, dev_sub_spaces,
                                           cfg.dev_adv_proposals, attack_rng);
    }
    run.history.push_back(em);
    if (metrics_out.is_open())
      metrics_out << json({{"epoch", em.epoch},
                           {"clean_acc", em.clean_acc},
                           {"robust_acc", em.robust_acc},
                           {"rel_param_distance", em.rel_param_distance},
                           {"loss", loss_json(em.mean_loss)}})
                         .dump()
                  << "\n";

    if (run.history.size() == 1 ||
        em.robust_acc > run.history[static_cast<size_t>(run.best_epoch)].robust_acc) {
      run.best_epoch = epoch;
      best_params = snapshot_values(model.all_params());
    }
  }
  run.best_epoch = early_stop_select(run.history);
  run.best_robust_acc = run.history[static_cast<size_t>(run.best_epoch)].robust_acc;

  if (!out_dir.empty()) {
    run.last_checkpoint = out_dir + "/last.ckpt";
    model.save(run.last_checkpoint, cfg.seed, method_name(cfg.method));
  }
  // Restore best parameters (early stopping) before returning the model.
  if (!best_params.empty()) restore_values(model.all_params(), best_params);
  if (!out_dir.empty()) {
    run.best_checkpoint = out_dir + "/best.ckpt";
    model.save(run.best_checkpoint, cfg.seed, method_name(cfg.method));
  }
  if (out_model) *out_model = model;

  if (teacher.checksum() != teacher_checksum)
    throw std::runtime_error("train: teacher parameters changed during training");
  return run;
}

PretrainResult pretrain_teacher(const std::vector<std::vector<int>>& corpus,
                                const PretrainConfig& cfg) {
  std::vector<const std::vector<int>*> usable;
  for (const auto& s : corpus)
    if (!s.empty() && static_cast<int>(s.size()) <= cfg.arch.max_len) usable.push_back(&s);
  if (static_cast<int>(usable.size()) < cfg.batch)
    throw std::invalid_argument("pretrain_teacher: corpus smaller than one batch");

  std::mt19937_64 rng(cfg.seed);
  Encoder enc(cfg.arch, rng);
  Linear mlm_head(cfg.arch.embed_dim, cfg.arch.vocab_size, rng);

  // 10% held out for the masked-accuracy check.
  size_t held = std::max<size_t>(1, usable.size() / 10);
  std::vector<const std::vector<int>*> heldout(usable.end() - static_cast<std::ptrdiff_t>(held),
                                               usable.end());
  usable.resize(usable.size() - held);

  AdamW opt({.lr = cfg.lr});
  opt.add_group(enc.params(), 0.0);
  std::vector<NamedParam> head_params;
  mlm_head.collect("mlm", head_params);
  opt.add_group(head_params, 0.0);

  std::bernoulli_distribution mask(cfg.mask_prob);
  std::uniform_int_distribution<size_t> pick(0, usable.size() - 1);
  const int steps = cfg.epochs * static_cast<int>(usable.size()) / cfg.batch;
  for (int step = 0; step < steps; ++step) {
    Var loss = ad::scalar(0.0);
    int n_masked = 0;
    for (int b = 0; b < cfg.batch; ++b) {
      const auto& seq = *usable[pick(rng)];
      std::vector<int> masked = seq;
      std::vector<int> pos, target;
      for (size_t i = 0; i < seq.size(); ++i) {
        if (mask(rng)) {
          masked[i] = kMaskId;
          pos.push_back(static_cast<int>(i));
          target.push_back(seq[i]);
        }
      }
      if (pos.empty()) continue;
      Var feats = enc.features(masked);
      Var picked = ad::gather_rows(feats, pos);
      Var logp = ad::log_softmax_rows(mlm_head(picked));
      ad::Mat sel = ad::Mat::Zero(logp->v.rows(), logp->v.cols());
      for (size_t i = 0; i < target.size(); ++i)
        sel(static_cast<Eigen::Index>(i), target[i]) = 1.0;
      loss = ad::add(loss, ad::neg(ad::sum(ad::mul(logp, ad::constant(sel)))));
      n_masked += static_cast<int>(pos.size());
    }
    if (n_masked == 0) continue;
    loss = ad::scale(loss, 1.0 / static_cast<double>(n_masked));
    opt.zero_grad();
    ad::backward(loss);
    opt.step();
  }

  // Held-out masked accuracy vs the majority-token baseline.
  std::unordered_map<int, long> freq;
  long total_tokens = 0;
  for (const auto* s : heldout)
    for (int t : *s) {
      ++freq[t];
      ++total_tokens;
    }
  long best_count = 0;
  for (const auto& [t, c] : freq) best_count = std::max(best_count, c);

  long correct = 0, evaluated = 0;
  std::mt19937_64 eval_rng(cfg.seed ^ 0x510e527fade682d1ull);
  std::bernoulli_distribution emask(cfg.mask_prob);
  NoGradGuard guard(enc.params());
  for (const auto* s : heldout) {
    std::vector<int> masked = *s;
    std::vector<int> pos, target;
    for (size_t i = 0; i < s->size(); ++i)
      if (emask(eval_rng)) {
        masked[i] = kMaskId;
        pos.push_back(static_cast<int>(i));
        target.push_back((*s)[i]);
      }
    if (pos.empty()) continue;
    Var feats = enc.features(masked);
    Var logits = mlm_head(ad::gather_rows(feats, pos));
    for (size_t i = 0; i < pos.size(); ++i) {
      Eigen::Index am;
      logits->v.row(static_cast<Eigen::Index>(i)).maxCoeff(&am);
      correct += static_cast<int>(am) == target[i];
      ++evaluated;
    }
  }

  PretrainResult out{TeacherEncoder(std::move(enc),
                                    "mlm-pretrain-seed" + std::to_string(cfg.seed)),
                     evaluated ? static_cast<double>(correct) / static_cast<double>(evaluated)
                               : 0.0,
                     total_tokens ? static_cast<double>(best_count) /
                                        static_cast<double>(total_tokens)
                                  : 0.0};
  return out;
}

}  // namespace rift
