#include "rift/model.hpp"

#include <nlohmann/json.hpp>

namespace rift {

using nlohmann::json;

int Model::predict(const std::vector<int>& tokens) const {
  NoGradGuard guard(all_params());
  Var p = probs(tokens);
  Eigen::Index best;
  p->v.row(0).maxCoeff(&best);
  return static_cast<int>(best);
}

std::vector<NamedParam> Model::all_params() const {
  std::vector<NamedParam> out = encoder_params();
  for (auto& p : task_params()) out.push_back(p);
  for (auto& p : score_params()) out.push_back(p);
  return out;
}

namespace {

json arch_json(const EncoderConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"max_len", c.max_len},   {"embed_dim", c.embed_dim},
          {"depth", c.depth},           {"heads", c.heads},       {"hidden_dim", c.hidden_dim}};
}

EncoderConfig arch_from_json(const json& j) {
  EncoderConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.max_len = j.at("max_len").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.depth = j.at("depth").get<int>();
  c.heads = j.at("heads").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  return c;
}

}  // namespace

void save_encoder_checkpoint(const Encoder& enc, const std::string& path,
                             const std::string& provenance, std::uint64_t seed,
                             const std::string& extra_meta) {
  Checkpoint ck;
  ck.provenance = provenance;
  ck.seed = seed;
  json meta;
  meta["arch"] = arch_json(enc.config());
  meta["extra"] = extra_meta;
  ck.meta_json = meta.dump();
  for (const auto& p : enc.params()) ck.tensors.emplace_back("enc." + p.name, p.value->v);
  ck.save(path);
}

Encoder load_encoder_checkpoint(const std::string& path, std::string* provenance) {
  Checkpoint ck = Checkpoint::load(path);
  json meta = json::parse(ck.meta_json);
  std::mt19937_64 rng(0);
  Encoder enc(arch_from_json(meta.at("arch")), rng);
  auto params = enc.params();
  size_t i = 0;
  for (const auto& p : params) {
    if (i >= ck.tensors.size() || ck.tensors[i].first != "enc." + p.name)
      throw std::runtime_error("load_encoder_checkpoint: tensor mismatch at " + p.name);
    p.value->v = ck.tensors[i].second;
    ++i;
  }
  if (provenance) *provenance = ck.provenance;
  return enc;
}

void TeacherEncoder::save(const std::string& path, std::uint64_t seed) const {
  save_encoder_checkpoint(enc_, path, provenance_, seed, "teacher");
}

TeacherEncoder TeacherEncoder::load(const std::string& path) {
  std::string prov;
  Encoder enc = load_encoder_checkpoint(path, &prov);
  return TeacherEncoder(std::move(enc), prov);
}

Model make_model(const ModelConfig& cfg, std::mt19937_64& rng) {
  Model m;
  m.cfg = cfg;
  m.student = Encoder(cfg.encoder, rng);
  m.head = ClassifierHead(cfg.encoder.embed_dim, cfg.head_hidden, cfg.classes, rng);
  m.scorer = ScoreHeads(cfg.classes, cfg.encoder.embed_dim, cfg.teacher_dim, cfg.proj_dim,
                        cfg.tau, rng);
  return m;
}

Model make_model(const ModelConfig& cfg, const Encoder& init_encoder, std::mt19937_64& rng) {
  Model m = make_model(cfg, rng);
  copy_params(init_encoder.params(), m.student.params());
  return m;
}

Model load_model(const std::string& path) {
  Checkpoint ck = Checkpoint::load(path);
  json meta = json::parse(ck.meta_json);
  ModelConfig cfg;
  cfg.encoder = arch_from_json(meta.at("arch"));
  cfg.classes = meta.at("classes").get<int>();
  cfg.head_hidden = meta.at("head_hidden").get<int>();
  cfg.proj_dim = meta.at("proj_dim").get<int>();
  cfg.teacher_dim = meta.at("teacher_dim").get<int>();
  cfg.tau = meta.at("tau").get<double>();
  std::mt19937_64 rng(0);
  Model m = make_model(cfg, rng);
  auto params = m.all_params();
  if (params.size() != ck.tensors.size())
    throw std::runtime_error("load_model: tensor count mismatch");
  for (size_t i = 0; i < params.size(); ++i) {
    if (ck.tensors[i].first != params[i].name)
      throw std::runtime_error("load_model: tensor mismatch at " + params[i].name);
    params[i].value->v = ck.tensors[i].second;
  }
  return m;
}

void Model::save(const std::string& path, std::uint64_t seed, const std::string& extra_meta) const {
  Checkpoint ck;
  ck.provenance = "student";
  ck.seed = seed;
  json meta;
  meta["arch"] = arch_json(student.config());
  meta["classes"] = head.classes();
  meta["head_hidden"] = cfg.head_hidden;
  meta["proj_dim"] = cfg.proj_dim;
  meta["teacher_dim"] = cfg.teacher_dim;
  meta["tau"] = scorer.tau();
  meta["extra"] = extra_meta;
  ck.meta_json = meta.dump();
  for (const auto& p : all_params()) ck.tensors.emplace_back(p.name, p.value->v);
  ck.save(path);
}

}  // namespace rift
