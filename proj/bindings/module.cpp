#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <random>

#include "rift/eval.hpp"
#include "rift/mi_bench.hpp"
#include "rift/synthdata.hpp"
#include "rift/trainer.hpp"

namespace py = pybind11;
using namespace rift;

PYBIND11_MODULE(riftlab, m) {
  m.doc() = "desk-scale robust fine-tuning laboratory";

  // ---- corpus ----
  py::enum_<TaskKind>(m, "TaskKind")
      .value("Single", TaskKind::Single)
      .value("Pair", TaskKind::Pair);

  m.def("tokenize_words", &tokenize_words);
  m.def("detokenize", &detokenize);

  py::class_<Vocabulary>(m, "Vocabulary")
      .def(py::init<>())
      .def("add", &Vocabulary::add)
      .def("id", &Vocabulary::id)
      .def("word", &Vocabulary::word)
      .def("contains", &Vocabulary::contains)
      .def("__len__", &Vocabulary::size);

  py::class_<TextExample>(m, "TextExample")
      .def(py::init<>())
      .def_readwrite("tokens", &TextExample::tokens)
      .def_readwrite("label", &TextExample::label)
      .def_readwrite("attackable", &TextExample::attackable);

  py::class_<SubstitutionMap>(m, "SubstitutionMap")
      .def_static("load", &SubstitutionMap::load)
      .def("save", &SubstitutionMap::save)
      .def_readwrite("entries", &SubstitutionMap::entries);

  py::class_<AttackSpace>(m, "AttackSpace")
      .def_readonly("candidates", &AttackSpace::candidates)
      .def("log_cardinality", &AttackSpace::log_cardinality)
      .def("num_sequences", &AttackSpace::num_sequences)
      .def("contains", &AttackSpace::contains);

  py::class_<Dataset>(m, "Dataset")
      .def_static("load", &Dataset::load)
      .def("save", &Dataset::save)
      .def("num_classes", &Dataset::num_classes)
      .def("label_names", &Dataset::label_names)
      .def("build_vocab", &Dataset::build_vocab)
      .def("encode_split", &Dataset::encode_split)
      .def("__len__", [](const Dataset& d) { return d.records().size(); });

  m.def("build_attack_space", &build_attack_space, py::keep_alive<0, 1>());

  // ---- synthetic task ----
  py::class_<SynthTaskConfig>(m, "SynthTaskConfig")
      .def(py::init<>())
      .def_readwrite("classes", &SynthTaskConfig::classes)
      .def_readwrite("clusters_per_class", &SynthTaskConfig::clusters_per_class)
      .def_readwrite("filler_clusters", &SynthTaskConfig::filler_clusters)
      .def_readwrite("synonyms", &SynthTaskConfig::synonyms)
      .def_readwrite("sentence_len", &SynthTaskConfig::sentence_len)
      .def_readwrite("signal_words", &SynthTaskConfig::signal_words)
      .def_readwrite("train_size", &SynthTaskConfig::train_size)
      .def_readwrite("dev_size", &SynthTaskConfig::dev_size)
      .def_readwrite("test_size", &SynthTaskConfig::test_size)
      .def_readwrite("aux_factor", &SynthTaskConfig::aux_factor)
      .def_readwrite("train_synonym_bias", &SynthTaskConfig::train_synonym_bias)
      .def_readwrite("label_noise", &SynthTaskConfig::label_noise)
      .def_readwrite("cluster_coherent", &SynthTaskConfig::cluster_coherent)
      .def_readwrite("seed", &SynthTaskConfig::seed);

  py::class_<SynthTask>(m, "SynthTask")
      .def_readonly("dataset", &SynthTask::dataset)
      .def_readonly("submap", &SynthTask::submap)
      .def_readonly("aux_sentences", &SynthTask::aux_sentences);

  m.def("make_synth_task", &make_synth_task);
  m.def("write_synth_task", &write_synth_task);

  // ---- models ----
  py::class_<TeacherEncoder>(m, "TeacherEncoder")
      .def_static("load", &TeacherEncoder::load)
      .def("save", &TeacherEncoder::save)
      .def("dim", &TeacherEncoder::dim)
      .def("checksum", &TeacherEncoder::checksum)
      .def("encode",
           [](const TeacherEncoder& t, const std::vector<int>& tokens) {
             return Eigen::RowVectorXd(t.encode(tokens)->v.row(0));
           });

  py::class_<Model>(m, "Model")
      .def_static("load", &load_model)
      .def("save", &Model::save, py::arg("path"), py::arg("seed"), py::arg("extra_meta") = "")
      .def("predict", &Model::predict)
      .def("probs",
           [](const Model& mo, const std::vector<int>& tokens) {
             return Eigen::RowVectorXd(mo.probs(tokens)->v.row(0));
           })
      .def("encode", [](const Model& mo, const std::vector<int>& tokens) {
        return Eigen::RowVectorXd(mo.student.encode(tokens)->v.row(0));
      });

  // ---- attacks ----
  py::class_<GeneticConfig>(m, "GeneticConfig")
      .def(py::init<>())
      .def_readwrite("population", &GeneticConfig::population)
      .def_readwrite("iterations", &GeneticConfig::iterations)
      .def_readwrite("lm_delta", &GeneticConfig::lm_delta);

  py::class_<AttackResult>(m, "AttackResult")
      .def_readonly("success", &AttackResult::success)
      .def_readonly("final_sequence", &AttackResult::final_sequence)
      .def_readonly("queries", &AttackResult::queries)
      .def_readonly("substitutions_made", &AttackResult::substitutions_made);

  m.def(
      "genetic_attack",
      [](const TextExample& x, int y, const Model& model, const AttackSpace& space,
         const GeneticConfig& cfg, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        return genetic_attack(x, y, model, space, cfg, rng);
      },
      py::arg("example"), py::arg("label"), py::arg("model"), py::arg("space"), py::arg("config"),
      py::arg("seed"));
  m.def("pwws_attack", &pwws_attack);

  // ---- training ----
  py::enum_<Method>(m, "Method")
      .value("Standard", Method::Standard)
      .value("AdvBase", Method::AdvBase)
      .value("AdvPTWD", Method::AdvPTWD)
      .value("AdvMixout", Method::AdvMixout)
      .value("Rift", Method::Rift);

  py::class_<AdversaryConfig>(m, "AdversaryConfig")
      .def(py::init<>())
      .def_readwrite("enabled", &AdversaryConfig::enabled)
      .def_readwrite("steps", &AdversaryConfig::steps)
      .def_readwrite("proposals", &AdversaryConfig::proposals);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("method", &TrainConfig::method)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("batch", &TrainConfig::batch)
      .def_readwrite("lr", &TrainConfig::lr)
      .def_readwrite("alpha", &TrainConfig::alpha)
      .def_readwrite("beta", &TrainConfig::beta)
      .def_readwrite("lambda_", &TrainConfig::lambda)
      .def_readwrite("mixout_m", &TrainConfig::mixout_m)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("adversary", &TrainConfig::adversary)
      .def_readwrite("dev_eval_size", &TrainConfig::dev_eval_size)
      .def_readwrite("dev_adv_proposals", &TrainConfig::dev_adv_proposals)
      .def_readwrite("clip_norm", &TrainConfig::clip_norm);

  py::class_<TaskData>(m, "TaskData")
      .def(py::init<>())
      .def_readwrite("vocab", &TaskData::vocab)
      .def_readwrite("submap", &TaskData::submap)
      .def_readwrite("num_classes", &TaskData::num_classes)
      .def_readwrite("train", &TaskData::train)
      .def_readwrite("dev", &TaskData::dev)
      .def_readwrite("test", &TaskData::test)
      .def("build_spaces", &TaskData::build_spaces);

  py::class_<EpochMetrics>(m, "EpochMetrics")
      .def_readonly("epoch", &EpochMetrics::epoch)
      .def_readonly("clean_acc", &EpochMetrics::clean_acc)
      .def_readonly("robust_acc", &EpochMetrics::robust_acc)
      .def_readonly("rel_param_distance", &EpochMetrics::rel_param_distance);

  py::class_<RunArtifacts>(m, "RunArtifacts")
      .def_readonly("dir", &RunArtifacts::dir)
      .def_readonly("history", &RunArtifacts::history)
      .def_readonly("best_epoch", &RunArtifacts::best_epoch)
      .def_readonly("best_robust_acc", &RunArtifacts::best_robust_acc)
      .def_readonly("best_checkpoint", &RunArtifacts::best_checkpoint)
      .def_readonly("last_checkpoint", &RunArtifacts::last_checkpoint);

  m.def(
      "train",
      [](const TrainConfig& cfg, const TaskData& data, const TeacherEncoder& teacher,
         const std::string& out_dir) {
        return train(cfg, data, teacher, teacher.encoder(), out_dir);
      },
      py::arg("config"), py::arg("data"), py::arg("teacher"), py::arg("out_dir") = "");

  py::class_<PretrainConfig>(m, "PretrainConfig")
      .def(py::init<>())
      .def_readwrite("epochs", &PretrainConfig::epochs)
      .def_readwrite("batch", &PretrainConfig::batch)
      .def_readwrite("lr", &PretrainConfig::lr)
      .def_readwrite("mask_prob", &PretrainConfig::mask_prob)
      .def_readwrite("seed", &PretrainConfig::seed)
      .def_property(
          "vocab_size", [](const PretrainConfig& c) { return c.arch.vocab_size; },
          [](PretrainConfig& c, int v) { c.arch.vocab_size = v; })
      .def_property(
          "embed_dim", [](const PretrainConfig& c) { return c.arch.embed_dim; },
          [](PretrainConfig& c, int v) { c.arch.embed_dim = v; })
      .def_property(
          "depth", [](const PretrainConfig& c) { return c.arch.depth; },
          [](PretrainConfig& c, int v) { c.arch.depth = v; })
      .def_property(
          "heads", [](const PretrainConfig& c) { return c.arch.heads; },
          [](PretrainConfig& c, int v) { c.arch.heads = v; })
      .def_property(
          "hidden_dim", [](const PretrainConfig& c) { return c.arch.hidden_dim; },
          [](PretrainConfig& c, int v) { c.arch.hidden_dim = v; });

  py::class_<PretrainResult>(m, "PretrainResult")
      .def_readonly("teacher", &PretrainResult::teacher)
      .def_readonly("heldout_masked_acc", &PretrainResult::heldout_masked_acc)
      .def_readonly("majority_baseline", &PretrainResult::majority_baseline);

  m.def("pretrain_teacher", &pretrain_teacher);

  // ---- evaluation ----
  py::class_<EvalConfig>(m, "EvalConfig")
      .def(py::init<>())
      .def_readwrite("genetic", &EvalConfig::genetic)
      .def_readwrite("n", &EvalConfig::n)
      .def_readwrite("seed", &EvalConfig::seed)
      .def_property(
          "algo", [](const EvalConfig& c) { return attack_name(c.algo); },
          [](EvalConfig& c, const std::string& s) { c.algo = attack_from_string(s); });

  py::class_<EvalReport>(m, "EvalReport")
      .def_readonly("clean_acc", &EvalReport::clean_acc)
      .def_readonly("robust_acc", &EvalReport::robust_acc)
      .def_readonly("mean_queries", &EvalReport::mean_queries)
      .def_readonly("examples", &EvalReport::examples)
      .def("to_json", &EvalReport::to_json);

  m.def("evaluate_clean", &evaluate_clean);
  m.def(
      "evaluate_robust",
      [](const Model& model, const std::vector<TextExample>& examples,
         const std::vector<AttackSpace>& spaces, const EvalConfig& cfg) {
        return evaluate_robust(model, examples, spaces, cfg);
      },
      py::arg("model"), py::arg("examples"), py::arg("spaces"), py::arg("config"));

  py::class_<GeometryReport>(m, "GeometryReport")
      .def_readonly("classes_present", &GeometryReport::classes_present)
      .def_readonly("alignment", &GeometryReport::alignment)
      .def_readonly("uniformity", &GeometryReport::uniformity)
      .def_readonly("coords", &GeometryReport::coords)
      .def_readonly("labels", &GeometryReport::labels)
      .def_readonly("warnings", &GeometryReport::warnings);

  m.def("geometry_report", &geometry_report, py::arg("model"), py::arg("teacher"),
        py::arg("examples"), py::arg("max_samples") = 500,
        py::arg("identity_projection") = false, py::arg("seed") = 0);

  // ---- mutual-information bench ----
  py::class_<SyntheticJointSpec>(m, "SyntheticJointSpec")
      .def_static("gaussian", &SyntheticJointSpec::gaussian, py::arg("correlation"),
                  py::arg("d") = 1, py::arg("classes") = 1)
      .def_static("discrete", &SyntheticJointSpec::discrete)
      .def_static("deterministic_uniform", &SyntheticJointSpec::deterministic_uniform)
      .def_readonly("name", &SyntheticJointSpec::name);

  py::class_<BoundTrainConfig>(m, "BoundTrainConfig")
      .def(py::init<>())
      .def_readwrite("steps", &BoundTrainConfig::steps)
      .def_readwrite("lr", &BoundTrainConfig::lr)
      .def_readwrite("proj_dim", &BoundTrainConfig::proj_dim)
      .def_readwrite("eval_batches", &BoundTrainConfig::eval_batches);

  py::class_<BoundEstimate>(m, "BoundEstimate")
      .def_readonly("mean", &BoundEstimate::mean)
      .def_readonly("stderr", &BoundEstimate::stderr_);

  m.def("true_cmi", &true_cmi);
  m.def("estimate_bound", &estimate_bound, py::arg("spec"), py::arg("N"), py::arg("config"),
        py::arg("seed"));
}
