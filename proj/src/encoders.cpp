#include "rift/encoders.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace rift {

using ad::Mat;

namespace {

Mat randn(int r, int c, double std_dev, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, std_dev);
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = d(rng);
  return m;
}

}  // namespace

Linear::Linear(int in, int out, std::mt19937_64& rng) {
  W = ad::leaf(randn(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng));
  b = ad::leaf(Mat::Zero(1, out));
}

Var Linear::operator()(const Var& x) const { return ad::add_rowvec(ad::matmul(x, W), b); }

void Linear::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
  out.push_back({prefix + ".W", W});
  out.push_back({prefix + ".b", b});
}

TransformerLayer::TransformerLayer(const EncoderConfig& cfg, std::mt19937_64& rng)
    : proj(cfg.embed_dim, cfg.embed_dim, rng),
      ff1(cfg.embed_dim, cfg.hidden_dim, rng),
      ff2(cfg.hidden_dim, cfg.embed_dim, rng),
      heads(cfg.heads) {
  if (cfg.embed_dim % cfg.heads != 0)
    throw std::invalid_argument("TransformerLayer: embed_dim must divide by heads");
  int dk = cfg.embed_dim / cfg.heads;
  for (int h = 0; h < cfg.heads; ++h) {
    double s = 1.0 / std::sqrt(static_cast<double>(cfg.embed_dim));
    wq.push_back(ad::leaf(randn(cfg.embed_dim, dk, s, rng)));
    wk.push_back(ad::leaf(randn(cfg.embed_dim, dk, s, rng)));
    wv.push_back(ad::leaf(randn(cfg.embed_dim, dk, s, rng)));
  }
  ln1_g = ad::leaf(Mat::Ones(1, cfg.embed_dim));
  ln1_b = ad::leaf(Mat::Zero(1, cfg.embed_dim));
  ln2_g = ad::leaf(Mat::Ones(1, cfg.embed_dim));
  ln2_b = ad::leaf(Mat::Zero(1, cfg.embed_dim));
}

Var TransformerLayer::operator()(const Var& x) const {
  Var h = ad::layer_norm_rows(x, ln1_g, ln1_b);
  int dk = static_cast<int>(wq[0]->v.cols());
  double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<Var> head_out;
  for (size_t i = 0; i < wq.size(); ++i) {
    Var q = ad::matmul(h, wq[i]);
    Var k = ad::matmul(h, wk[i]);
    Var v = ad::matmul(h, wv[i]);
    Var att = ad::softmax_rows(ad::scale(ad::matmul(q, ad::transpose(k)), inv_sqrt_dk));
    head_out.push_back(ad::matmul(att, v));
  }
  Var attn = proj(ad::hcat(head_out));
  Var x1 = ad::add(x, attn);
  Var h2 = ad::layer_norm_rows(x1, ln2_g, ln2_b);
  Var ff = ff2(ad::relu(ff1(h2)));
  return ad::add(x1, ff);
}

void TransformerLayer::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
  for (size_t i = 0; i < wq.size(); ++i) {
    out.push_back({prefix + ".h" + std::to_string(i) + ".Wq", wq[i]});
    out.push_back({prefix + ".h" + std::to_string(i) + ".Wk", wk[i]});
    out.push_back({prefix + ".h" + std::to_string(i) + ".Wv", wv[i]});
  }
  proj.collect(prefix + ".proj", out);
  ff1.collect(prefix + ".ff1", out);
  ff2.collect(prefix + ".ff2", out);
  out.push_back({prefix + ".ln1.g", ln1_g});
  out.push_back({prefix + ".ln1.b", ln1_b});
  out.push_back({prefix + ".ln2.g", ln2_g});
  out.push_back({prefix + ".ln2.b", ln2_b});
}

Encoder::Encoder(const EncoderConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
  if (cfg.vocab_size <= 0) throw std::invalid_argument("Encoder: vocab_size required");
  embed_ = ad::leaf(randn(cfg.vocab_size, cfg.embed_dim, 0.1, rng));
  pos_ = ad::leaf(randn(cfg.max_len, cfg.embed_dim, 0.1, rng));
  for (int l = 0; l < cfg.depth; ++l) layers_.emplace_back(cfg, rng);
  lnf_g_ = ad::leaf(Mat::Ones(1, cfg.embed_dim));
  lnf_b_ = ad::leaf(Mat::Zero(1, cfg.embed_dim));
}

Var Encoder::run_stack(const Var& x0) const {
  const Eigen::Index L = x0->v.rows();
  std::vector<int> pidx(static_cast<size_t>(L));
  for (Eigen::Index i = 0; i < L; ++i) pidx[static_cast<size_t>(i)] = static_cast<int>(i);
  Var x = ad::add(x0, ad::gather_rows(pos_, pidx));
  for (const auto& layer : layers_) x = layer(x);
  return ad::layer_norm_rows(x, lnf_g_, lnf_b_);
}

Var Encoder::features(const std::vector<int>& tokens) const {
  if (tokens.empty()) throw std::invalid_argument("Encoder: empty input");
  if (static_cast<int>(tokens.size()) > cfg_.max_len)
    throw std::invalid_argument("Encoder: input exceeds max_len");
  return run_stack(ad::gather_rows(embed_, tokens));
}

Var Encoder::pooled(const Var& feats) const {
  const Eigen::Index L = feats->v.rows();
  Mat w = Mat::Constant(1, L, 1.0 / static_cast<double>(L));
  return ad::matmul(ad::constant(w), feats);
}

Var Encoder::encode(const std::vector<int>& tokens) const { return pooled(features(tokens)); }

Var Encoder::encode_mixture(const std::vector<Var>& weights,
                            const std::vector<std::vector<int>>& cand) const {
  if (weights.empty()) throw std::invalid_argument("Encoder: empty mixture input");
  if (static_cast<int>(weights.size()) > cfg_.max_len)
    throw std::invalid_argument("Encoder: input exceeds max_len");
  for (const auto& w : weights) {
    if ((w->v.array() < -1e-12).any() || std::abs(w->v.sum() - 1.0) > 1e-5)
      throw std::invalid_argument("Encoder: mixture weights must lie on the simplex");
  }
  return pooled(run_stack(ad::mixture_rows(embed_, weights, cand)));
}

std::vector<NamedParam> Encoder::params() const {
  std::vector<NamedParam> out;
  out.push_back({"embed", embed_});
  out.push_back({"pos", pos_});
  for (size_t l = 0; l < layers_.size(); ++l)
    layers_[l].collect("layer" + std::to_string(l), out);
  out.push_back({"lnf.g", lnf_g_});
  out.push_back({"lnf.b", lnf_b_});
  return out;
}

void Encoder::set_trainable(bool trainable) {
  trainable_ = trainable;
  for (auto& p : params()) p.value->requires_grad = trainable;
}

double Encoder::param_norm() const {
  double s = 0.0;
  for (const auto& p : params()) s += p.value->v.squaredNorm();
  return std::sqrt(s);
}

double Encoder::param_checksum() const {
  double s = 0.0;
  int k = 1;
  for (const auto& p : params()) {
    s += p.value->v.sum() * static_cast<double>(k);
    ++k;
  }
  return s;
}

ClassifierHead::ClassifierHead(int in_dim, int hidden, int classes, std::mt19937_64& rng)
    : l1_(in_dim, hidden, rng), l2_(hidden, classes, rng), classes_(classes) {}

Var ClassifierHead::logits(const Var& s) const {
  if (s->v.cols() != l1_.W->v.rows())
    throw std::invalid_argument("ClassifierHead: feature dimension mismatch");
  return l2_(ad::relu(l1_(s)));
}

Var ClassifierHead::log_probs(const Var& s) const { return ad::log_softmax_rows(logits(s)); }
Var ClassifierHead::probs(const Var& s) const { return ad::softmax_rows(logits(s)); }

std::vector<NamedParam> ClassifierHead::params() const {
  std::vector<NamedParam> out;
  l1_.collect("head.l1", out);
  l2_.collect("head.l2", out);
  return out;
}

Var ScoreHeads::Mlp::operator()(const Var& x) const { return l2(ad::relu(l1(x))); }

ScoreHeads::ScoreHeads(int classes, int student_dim, int teacher_dim, int proj_dim, double tau,
                       std::mt19937_64& rng)
    : tau_(tau) {
  if (tau <= 0.0) throw std::invalid_argument("ScoreHeads: tau must be positive");
  for (int y = 0; y < classes; ++y) {
    g1_.push_back({Linear(student_dim, proj_dim, rng), Linear(proj_dim, proj_dim, rng)});
    g2_.push_back({Linear(teacher_dim, proj_dim, rng), Linear(proj_dim, proj_dim, rng)});
  }
}

Var ScoreHeads::score_matrix(int y, const Var& s_rows, const Var& t_rows) const {
  if (y < 0 || y >= classes()) throw std::invalid_argument("ScoreHeads: unknown class index");
  Var a = ad::normalize_rows(g1_[static_cast<size_t>(y)](s_rows));
  Var b = ad::normalize_rows(g2_[static_cast<size_t>(y)](t_rows));
  return ad::scale(ad::matmul(a, ad::transpose(b)), 1.0 / tau_);
}

Var ScoreHeads::score(int y, const Var& a, const Var& b) const {
  return score_matrix(y, a, b);  // 1x1 for row inputs
}

Var ScoreHeads::project1(int y, const Var& x) const {
  if (y < 0 || y >= classes()) throw std::invalid_argument("ScoreHeads: unknown class index");
  return g1_[static_cast<size_t>(y)](x);
}

Var ScoreHeads::project2(int y, const Var& x) const {
  if (y < 0 || y >= classes()) throw std::invalid_argument("ScoreHeads: unknown class index");
  return g2_[static_cast<size_t>(y)](x);
}

std::vector<NamedParam> ScoreHeads::params() const {
  std::vector<NamedParam> out;
  for (size_t y = 0; y < g1_.size(); ++y) {
    g1_[y].l1.collect("score.y" + std::to_string(y) + ".g1.l1", out);
    g1_[y].l2.collect("score.y" + std::to_string(y) + ".g1.l2", out);
    g2_[y].l1.collect("score.y" + std::to_string(y) + ".g2.l1", out);
    g2_[y].l2.collect("score.y" + std::to_string(y) + ".g2.l2", out);
  }
  return out;
}

// ---- checkpoint io ----

namespace {
constexpr char kMagic[8] = {'R', 'I', 'F', 'T', 'C', 'K', 'P', '1'};
}

void Checkpoint::save(const std::string& path) const {
  nlohmann::json j;
  j["provenance"] = provenance;
  j["seed"] = seed;
  j["meta"] = meta_json;
  nlohmann::json table = nlohmann::json::array();
  for (const auto& [name, m] : tensors)
    table.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  j["tensors"] = table;
  std::string header = j.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("Checkpoint: cannot write " + path);
  out.write(kMagic, sizeof(kMagic));
  std::uint64_t hlen = header.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& [name, m] : tensors) {
    (void)name;
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(m.size())));
  }
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("Checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("Checkpoint: bad magic in " + path);
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string header(hlen, '\0');
  in.read(header.data(), static_cast<std::streamsize>(hlen));
  auto j = nlohmann::json::parse(header);
  Checkpoint ck;
  ck.provenance = j.value("provenance", "");
  ck.seed = j.value("seed", std::uint64_t{0});
  ck.meta_json = j.value("meta", "");
  for (const auto& t : j.at("tensors")) {
    Mat m(t.at("rows").get<Eigen::Index>(), t.at("cols").get<Eigen::Index>());
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(m.size())));
    if (!in) throw std::runtime_error("Checkpoint: truncated tensor data in " + path);
    ck.tensors.emplace_back(t.at("name").get<std::string>(), std::move(m));
  }
  return ck;
}

void copy_params(const std::vector<NamedParam>& from, const std::vector<NamedParam>& to) {
  if (from.size() != to.size()) throw std::invalid_argument("copy_params: size mismatch");
  for (size_t i = 0; i < from.size(); ++i) {
    if (from[i].value->v.rows() != to[i].value->v.rows() ||
        from[i].value->v.cols() != to[i].value->v.cols())
      throw std::invalid_argument("copy_params: shape mismatch at " + from[i].name);
    to[i].value->v = from[i].value->v;
  }
}

std::vector<Mat> snapshot_values(const std::vector<NamedParam>& params) {
  std::vector<Mat> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.value->v);
  return out;
}

void restore_values(const std::vector<NamedParam>& params, const std::vector<Mat>& vals) {
  if (params.size() != vals.size()) throw std::invalid_argument("restore_values: size mismatch");
  for (size_t i = 0; i < params.size(); ++i) params[i].value->v = vals[i];
}

}  // namespace rift
