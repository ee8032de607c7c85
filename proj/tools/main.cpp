#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rift/eval.hpp"
#include "rift/mi_bench.hpp"
#include "rift/svg_plot.hpp"
#include "rift/synthdata.hpp"
#include "rift/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rift;

namespace {

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  return json::parse(in);
}

template <typename T>
T pick(const CLI::App* sub, const std::string& flag, const T& cli_val, const json& cfg,
       const std::string& key, const T& def) {
  if (sub->count(flag)) return cli_val;
  if (cfg.contains(key)) return cfg.at(key).get<T>();
  return def;
}

struct LoadedTask {
  Dataset ds;
  TaskData data;
  std::vector<std::vector<int>> aux_tokens;  // empty when aux.txt absent
};

LoadedTask load_task(const std::string& dir, const json& cfg) {
  TaskKind schema = cfg.value("schema", std::string("single")) == "pair" ? TaskKind::Pair
                                                                         : TaskKind::Single;
  int max_len = cfg.value("max_len", 300);
  int min_freq = cfg.value("min_freq", 1);

  LoadedTask t;
  t.ds = Dataset::load(dir + "/data.jsonl", schema);
  Vocabulary vocab = t.ds.build_vocab(min_freq);

  // Fold the auxiliary pre-training corpus into the shared vocabulary so
  // teacher and student agree on token ids.
  std::string aux_path = dir + "/aux.txt";
  if (fs::exists(aux_path)) {
    std::ifstream in(aux_path);
    std::string line;
    std::vector<std::vector<std::string>> aux_words;
    while (std::getline(in, line))
      if (!line.empty()) aux_words.push_back(tokenize_words(line));
    for (const auto& ws : aux_words)
      for (const auto& w : ws) vocab.add(w);
    for (const auto& ws : aux_words) {
      std::vector<int> ids;
      ids.reserve(ws.size());
      for (const auto& w : ws) ids.push_back(vocab.id(w));
      if (static_cast<int>(ids.size()) > max_len) ids.resize(static_cast<size_t>(max_len));
      t.aux_tokens.push_back(std::move(ids));
    }
  }

  t.data.vocab = std::move(vocab);
  t.data.submap = SubstitutionMap::load(dir + "/subs.txt");
  t.data.num_classes = t.ds.num_classes();
  t.data.train = t.ds.encode_split("train", t.data.vocab, max_len);
  t.data.dev = t.ds.encode_split("dev", t.data.vocab, max_len);
  t.data.test = t.ds.encode_split("test", t.data.vocab, max_len);
  t.data.build_spaces();
  return t;
}

void check_vocab(const Model& model, const LoadedTask& task) {
  if (model.cfg.encoder.vocab_size != task.data.vocab.size())
    throw std::runtime_error("vocabulary mismatch vs checkpoint: data dir yields " +
                             std::to_string(task.data.vocab.size()) + " words, checkpoint has " +
                             std::to_string(model.cfg.encoder.vocab_size));
}

const std::vector<TextExample>& pick_split(const LoadedTask& t, const std::string& name) {
  if (name == "train") return t.data.train;
  if (name == "dev") return t.data.dev;
  if (name == "test") return t.data.test;
  throw std::runtime_error("unknown split: " + name);
}

const std::vector<AttackSpace>& pick_spaces(const LoadedTask& t, const std::string& name) {
  if (name == "train") return t.data.train_spaces;
  if (name == "dev") return t.data.dev_spaces;
  return t.data.test_spaces;
}

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

std::vector<std::uint64_t> parse_u64s(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoull(item));
  return out;
}

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  return out;
}

std::vector<json> read_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open records: " + path);
  std::vector<json> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(json::parse(line));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale robust fine-tuning laboratory"};
  app.require_subcommand(1);

  std::string config_path, out_path, data_dir, teacher_path, checkpoint_path;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--seed", seed, "random seed");
    sub->add_option("--out", out_path, "output path");
  };

  // datagen
  auto* datagen = app.add_subcommand("datagen", "generate the synthetic synonym-cluster task");
  add_common(datagen);

  // pretrain
  auto* pretrain = app.add_subcommand("pretrain", "masked-token pre-training of the teacher");
  add_common(pretrain);
  pretrain->add_option("--data", data_dir, "task data directory")->required();
  int pt_epochs = 5, pt_batch = 32;
  double pt_lr = 1e-3;
  pretrain->add_option("--epochs", pt_epochs);
  pretrain->add_option("--batch", pt_batch);
  pretrain->add_option("--lr", pt_lr);

  // train
  auto* train_cmd = app.add_subcommand("train", "fine-tune with one of the five methods");
  add_common(train_cmd);
  train_cmd->add_option("--data", data_dir, "task data directory")->required();
  train_cmd->add_option("--teacher", teacher_path, "teacher checkpoint")->required();
  std::string method_str = "rift";
  int tr_epochs = 20, tr_batch = 32;
  double tr_lr = 2e-5, tr_alpha = 0.1, tr_beta = 10.0, tr_lambda = 0.01, tr_mixout = 0.6;
  train_cmd->add_option("--method", method_str, "standard|adv-base|adv-ptwd|adv-mixout|rift");
  train_cmd->add_option("--epochs", tr_epochs);
  train_cmd->add_option("--batch", tr_batch);
  train_cmd->add_option("--lr", tr_lr);
  train_cmd->add_option("--alpha", tr_alpha);
  train_cmd->add_option("--beta", tr_beta);
  train_cmd->add_option("--lambda", tr_lambda);
  train_cmd->add_option("--mixout", tr_mixout);

  // attack
  auto* attack_cmd = app.add_subcommand("attack", "run a word-substitution attack, per-example records");
  add_common(attack_cmd);
  attack_cmd->add_option("--data", data_dir, "task data directory")->required();
  attack_cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
  std::string attack_str = "genetic", split_str = "test";
  int eval_n = 1000;
  attack_cmd->add_option("--attack", attack_str, "genetic|pwws");
  attack_cmd->add_option("--split", split_str);
  attack_cmd->add_option("--n", eval_n);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "clean + robust accuracy report");
  add_common(eval_cmd);
  eval_cmd->add_option("--data", data_dir, "task data directory")->required();
  eval_cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
  eval_cmd->add_option("--attack", attack_str, "genetic|pwws");
  eval_cmd->add_option("--split", split_str);
  eval_cmd->add_option("--n", eval_n);
  std::string method_label = "unknown", geometry_out, teacher_for_geo;
  eval_cmd->add_option("--method-label", method_label, "method name recorded in the report");
  eval_cmd->add_option("--geometry", geometry_out, "also write feature-geometry records here");
  eval_cmd->add_option("--teacher", teacher_for_geo, "teacher checkpoint (for --geometry)");

  // mibench
  auto* mibench = app.add_subcommand("mibench", "contrastive bound vs analytic mutual information");
  add_common(mibench);
  std::string families = "gaussian", rhos_str = "0,0.5,0.9", ns_str = "4,16,64";
  int repeats = 5;
  mibench->add_option("--families", families, "comma list: gaussian,discrete");
  mibench->add_option("--rho", rhos_str, "gaussian correlations");
  mibench->add_option("--N", ns_str, "contrastive batch sizes");
  mibench->add_option("--repeats", repeats);

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "beta grid x seeds trade-off sweep");
  add_common(sweep_cmd);
  sweep_cmd->add_option("--data", data_dir, "task data directory")->required();
  sweep_cmd->add_option("--teacher", teacher_path, "teacher checkpoint")->required();
  std::string betas_str = "1,5,10", seeds_str = "0,1,2";
  sweep_cmd->add_option("--betas", betas_str);
  sweep_cmd->add_option("--seeds", seeds_str);
  sweep_cmd->add_option("--method", method_str);
  sweep_cmd->add_option("--epochs", tr_epochs);

  // plot
  auto* plot_cmd = app.add_subcommand("plot", "render SVG charts from emitted records");
  add_common(plot_cmd);
  std::string plot_kind = "tradeoff", plot_in;
  plot_cmd->add_option("--kind", plot_kind, "tradeoff|history|geometry|mibench");
  plot_cmd->add_option("--in", plot_in, "record file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    json cfg = load_config(config_path);

    if (*datagen) {
      if (out_path.empty()) throw std::runtime_error("datagen: --out directory required");
      SynthTaskConfig sc;
      sc.classes = cfg.value("classes", sc.classes);
      sc.clusters_per_class = cfg.value("clusters_per_class", sc.clusters_per_class);
      sc.filler_clusters = cfg.value("filler_clusters", sc.filler_clusters);
      sc.synonyms = cfg.value("synonyms", sc.synonyms);
      sc.sentence_len = cfg.value("sentence_len", sc.sentence_len);
      sc.signal_words = cfg.value("signal_words", sc.signal_words);
      sc.train_size = cfg.value("train_size", sc.train_size);
      sc.dev_size = cfg.value("dev_size", sc.dev_size);
      sc.test_size = cfg.value("test_size", sc.test_size);
      sc.aux_factor = cfg.value("aux_factor", sc.aux_factor);
      sc.train_synonym_bias = cfg.value("train_synonym_bias", sc.train_synonym_bias);
      sc.label_noise = cfg.value("label_noise", sc.label_noise);
      sc.cluster_coherent = cfg.value("cluster_coherent", sc.cluster_coherent);
      sc.seed = pick(datagen, "--seed", seed, cfg, "seed", sc.seed);
      write_synth_task(make_synth_task(sc), out_path);
      std::cout << "wrote " << out_path << "/{data.jsonl,subs.txt,aux.txt}\n";
    }

    if (*pretrain) {
      if (out_path.empty()) throw std::runtime_error("pretrain: --out directory required");
      LoadedTask task = load_task(data_dir, cfg);
      if (task.aux_tokens.empty()) throw std::runtime_error("pretrain: no aux.txt in data dir");
      PretrainConfig pc;
      pc.arch.vocab_size = task.data.vocab.size();
      pc.arch.max_len = cfg.value("max_len", 300);
      pc.arch.embed_dim = cfg.value("embed_dim", pc.arch.embed_dim);
      pc.arch.depth = cfg.value("depth", pc.arch.depth);
      pc.arch.heads = cfg.value("heads", pc.arch.heads);
      pc.arch.hidden_dim = cfg.value("hidden_dim", pc.arch.hidden_dim);
      pc.epochs = pick(pretrain, "--epochs", pt_epochs, cfg, "epochs", 5);
      pc.batch = pick(pretrain, "--batch", pt_batch, cfg, "batch", 32);
      pc.lr = pick(pretrain, "--lr", pt_lr, cfg, "lr", 1e-3);
      pc.mask_prob = cfg.value("mask_prob", 0.15);
      pc.seed = pick(pretrain, "--seed", seed, cfg, "seed", std::uint64_t{0});
      PretrainResult res = pretrain_teacher(task.aux_tokens, pc);
      fs::create_directories(out_path);
      res.teacher.save(out_path + "/teacher.ckpt", pc.seed);
      std::ofstream rep(out_path + "/pretrain.json");
      rep << json{{"heldout_masked_acc", res.heldout_masked_acc},
                  {"majority_baseline", res.majority_baseline},
                  {"vocab_size", task.data.vocab.size()},
                  {"seed", pc.seed}}
                 .dump(2)
          << "\n";
      std::cout << "teacher saved; held-out masked accuracy " << res.heldout_masked_acc
                << " (majority baseline " << res.majority_baseline << ")\n";
    }

    if (*train_cmd) {
      if (out_path.empty()) throw std::runtime_error("train: --out directory required");
      LoadedTask task = load_task(data_dir, cfg);
      TeacherEncoder teacher = TeacherEncoder::load(teacher_path);
      TrainConfig tc;
      tc.method = method_from_string(pick(train_cmd, "--method", method_str, cfg, "method",
                                          std::string("rift")));
      tc.epochs = pick(train_cmd, "--epochs", tr_epochs, cfg, "epochs", 20);
      tc.batch = pick(train_cmd, "--batch", tr_batch, cfg, "batch", 32);
      tc.lr = pick(train_cmd, "--lr", tr_lr, cfg, "lr", 2e-5);
      tc.alpha = pick(train_cmd, "--alpha", tr_alpha, cfg, "alpha", 0.1);
      tc.beta = pick(train_cmd, "--beta", tr_beta, cfg, "beta", 10.0);
      tc.lambda = pick(train_cmd, "--lambda", tr_lambda, cfg, "lambda", 0.01);
      tc.mixout_m = pick(train_cmd, "--mixout", tr_mixout, cfg, "mixout_m", 0.6);
      tc.task_decay = cfg.value("task_decay", tc.task_decay);
      tc.seed = pick(train_cmd, "--seed", seed, cfg, "seed", std::uint64_t{0});
      tc.adversary.kind = cfg.value("adv_kind", std::string("mixture")) == "discrete"
                              ? AdvKind::Discrete
                              : AdvKind::Mixture;
      tc.adversary.steps = cfg.value("adv_steps", tc.adversary.steps);
      tc.adversary.proposals = cfg.value("adv_proposals", tc.adversary.proposals);
      tc.dev_eval_size = cfg.value("dev_eval_size", tc.dev_eval_size);
      tc.dev_adv_proposals = cfg.value("dev_adv_proposals", tc.dev_adv_proposals);
      tc.clip_norm = cfg.value("clip_norm", tc.clip_norm);
      RunArtifacts art = train(tc, task.data, teacher, teacher.encoder(), out_path, cfg.dump(2));
      const auto& best = art.history.at(static_cast<size_t>(art.best_epoch));
      std::cout << method_name(tc.method) << ": best epoch " << art.best_epoch << ", dev clean "
                << best.clean_acc << ", dev robust " << best.robust_acc << "\n"
                << "checkpoints: " << art.best_checkpoint << " , " << art.last_checkpoint << "\n";
    }

    if (*attack_cmd) {
      if (out_path.empty()) throw std::runtime_error("attack: --out file required");
      LoadedTask task = load_task(data_dir, cfg);
      Model model = load_model(checkpoint_path);
      check_vocab(model, task);
      NoGradGuard guard(model.all_params());
      const auto& examples = pick_split(task, split_str);
      const auto& spaces = pick_spaces(task, split_str);
      AttackAlgo algo = attack_from_string(attack_str);
      GeneticConfig gc;
      gc.population = cfg.value("population", gc.population);
      gc.iterations = cfg.value("iterations", gc.iterations);
      std::mt19937_64 rng(seed);
      int n = std::min<int>(eval_n, static_cast<int>(examples.size()));
      auto idx = sample_indices(examples.size(), n, rng);
      std::ofstream outf(out_path);
      if (!outf) throw std::runtime_error("cannot write " + out_path);
      int flipped = 0;
      for (int i : idx) {
        const auto& ex = examples[static_cast<size_t>(i)];
        bool clean_ok = model.predict(ex.tokens) == ex.label;
        json rec{{"index", i}, {"label", ex.label}, {"clean_correct", clean_ok}};
        if (clean_ok) {
          AttackResult r = algo == AttackAlgo::Genetic
                               ? genetic_attack(ex, ex.label, model,
                                                spaces[static_cast<size_t>(i)], gc, rng)
                               : pwws_attack(ex, ex.label, model, spaces[static_cast<size_t>(i)]);
          flipped += r.success;
          std::vector<std::string> words;
          for (int t : r.final_sequence) words.push_back(task.data.vocab.word(t));
          rec["success"] = r.success;
          rec["queries"] = r.queries;
          rec["substitutions"] = r.substitutions_made;
          rec["final_text"] = detokenize(words);
        }
        outf << rec.dump() << "\n";
      }
      std::cout << attack_str << " on " << n << " examples: " << flipped << " flips\n";
    }

    if (*eval_cmd) {
      if (out_path.empty()) throw std::runtime_error("eval: --out file required");
      LoadedTask task = load_task(data_dir, cfg);
      Model model = load_model(checkpoint_path);
      check_vocab(model, task);
      EvalConfig ec;
      ec.algo = attack_from_string(attack_str);
      ec.n = eval_n;
      ec.seed = seed;
      ec.genetic.population = cfg.value("population", ec.genetic.population);
      ec.genetic.iterations = cfg.value("iterations", ec.genetic.iterations);
      EvalReport rep = evaluate_robust(model, pick_split(task, split_str),
                                       pick_spaces(task, split_str), ec);
      rep.method = method_label;
      std::ofstream outf(out_path);
      if (!outf) throw std::runtime_error("cannot write " + out_path);
      outf << rep.to_json() << "\n";
      std::cout << rep.to_json() << "\n";
      if (!geometry_out.empty()) {
        if (teacher_for_geo.empty())
          throw std::runtime_error("eval: --geometry requires --teacher");
        TeacherEncoder teacher = TeacherEncoder::load(teacher_for_geo);
        GeometryReport geo = geometry_report(model, teacher, pick_split(task, split_str),
                                             cfg.value("geometry_samples", 500), false, seed);
        std::ofstream gout(geometry_out);
        json summary{{"classes", geo.classes_present},
                     {"alignment", geo.alignment},
                     {"uniformity", geo.uniformity},
                     {"warnings", geo.warnings}};
        gout << summary.dump() << "\n";
        for (int i = 0; i < geo.coords.rows(); ++i)
          gout << json{{"x", geo.coords(i, 0)},
                       {"y", geo.coords(i, 1)},
                       {"label", geo.labels[static_cast<size_t>(i)]}}
                      .dump()
               << "\n";
      }
    }

    if (*mibench) {
      if (out_path.empty()) throw std::runtime_error("mibench: --out directory required");
      std::vector<SyntheticJointSpec> specs;
      if (families.find("gaussian") != std::string::npos)
        for (double r : parse_doubles(rhos_str)) specs.push_back(SyntheticJointSpec::gaussian(r));
      if (families.find("discrete") != std::string::npos) {
        specs.push_back(SyntheticJointSpec::deterministic_uniform(4));
        ad::Mat uniform = ad::Mat::Constant(3, 3, 1.0 / 9.0);
        specs.push_back(SyntheticJointSpec::discrete(uniform));
      }
      if (specs.empty()) throw std::runtime_error("mibench: no families selected");
      BoundTrainConfig bc;
      bc.steps = cfg.value("steps", bc.steps);
      BoundReport rep = bound_report(specs, parse_ints(ns_str), repeats, bc, seed);
      fs::create_directories(out_path);
      rep.write_records(out_path + "/mibench.jsonl");
      std::cout << rep.to_table();
    }

    if (*sweep_cmd) {
      if (out_path.empty()) throw std::runtime_error("sweep: --out directory required");
      LoadedTask task = load_task(data_dir, cfg);
      TeacherEncoder teacher = TeacherEncoder::load(teacher_path);
      TrainConfig tc;
      tc.method = method_from_string(pick(sweep_cmd, "--method", method_str, cfg, "method",
                                          std::string("adv-base")));
      tc.epochs = pick(sweep_cmd, "--epochs", tr_epochs, cfg, "epochs", 10);
      tc.batch = cfg.value("batch", tc.batch);
      tc.lr = cfg.value("lr", tc.lr);
      tc.alpha = cfg.value("alpha", tc.alpha);
      auto pts = tradeoff_sweep(tc, task.data, teacher, teacher.encoder(),
                                parse_doubles(betas_str), parse_u64s(seeds_str), out_path);
      write_sweep_records(pts, out_path + "/sweep.jsonl");
      for (const auto& p : pts)
        std::cout << "beta " << p.beta << " seed " << p.seed << ": clean " << p.clean_acc
                  << " robust " << p.robust_acc << " dist " << p.rel_param_distance
                  << (p.cached ? " (cached)" : "") << "\n";
    }

    if (*plot_cmd) {
      if (out_path.empty()) throw std::runtime_error("plot: --out file required");
      auto records = read_records(plot_in);
      if (records.empty()) throw std::runtime_error("plot: no records in " + plot_in);
      if (plot_kind == "tradeoff") {
        std::map<double, std::vector<std::pair<double, double>>> by_beta;
        for (const auto& r : records)
          by_beta[r.at("beta").get<double>()].push_back(
              {r.at("clean_acc").get<double>(), r.at("robust_acc").get<double>()});
        Series clean{"clean", {}, {}}, robust{"robust", {}, {}};
        for (const auto& [b, v] : by_beta) {
          double c = 0, ra = 0;
          for (auto [cv, rv] : v) c += cv, ra += rv;
          clean.x.push_back(b);
          clean.y.push_back(c / v.size());
          robust.x.push_back(b);
          robust.y.push_back(ra / v.size());
        }
        write_line_chart(out_path, "robustness / accuracy trade-off", "beta", "accuracy",
                         {clean, robust});
      } else if (plot_kind == "history") {
        Series clean{"clean", {}, {}}, robust{"robust", {}, {}}, dist{"rel distance", {}, {}};
        for (const auto& r : records) {
          double e = r.at("epoch").get<double>();
          clean.x.push_back(e);
          clean.y.push_back(r.at("clean_acc").get<double>());
          robust.x.push_back(e);
          robust.y.push_back(r.at("robust_acc").get<double>());
          dist.x.push_back(e);
          dist.y.push_back(r.at("rel_param_distance").get<double>());
        }
        write_line_chart(out_path, "training history", "epoch", "value", {clean, robust, dist});
      } else if (plot_kind == "geometry") {
        std::vector<double> xs, ys;
        std::vector<int> labels;
        for (const auto& r : records) {
          if (!r.contains("x")) continue;  // summary line
          xs.push_back(r.at("x").get<double>());
          ys.push_back(r.at("y").get<double>());
          labels.push_back(r.at("label").get<int>());
        }
        write_scatter_chart(out_path, "feature geometry (principal directions)", xs, ys, labels);
      } else if (plot_kind == "mibench") {
        std::map<std::string, Series> by_spec;
        Series truth{"true MI", {}, {}}, cap{"ln N", {}, {}};
        for (const auto& r : records) {
          std::string name = r.at("spec").get<std::string>();
          auto& s = by_spec[name];
          s.name = name;
          s.x.push_back(r.at("N").get<int>());
          s.y.push_back(r.at("mean").get<double>());
          truth.x.push_back(r.at("N").get<int>());
          truth.y.push_back(r.at("true_mi").get<double>());
          cap.x.push_back(r.at("N").get<int>());
          cap.y.push_back(r.at("log_n").get<double>());
        }
        std::vector<Series> series;
        for (auto& [_, s] : by_spec) series.push_back(s);
        series.push_back(truth);
        series.push_back(cap);
        write_line_chart(out_path, "contrastive bound vs batch size", "N", "nats", series);
      } else {
        throw std::runtime_error("unknown plot kind: " + plot_kind);
      }
      std::cout << "wrote " << out_path << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
