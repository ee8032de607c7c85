#include "rift/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace rift {

using nlohmann::json;

Vocabulary::Vocabulary() {
  for (const char* w : {"<pad>", "<unk>", "<mask>", "<sep>"}) add(w);
}

int Vocabulary::add(const std::string& word) {
  auto it = map_.find(word);
  if (it != map_.end()) return it->second;
  int id = static_cast<int>(words_.size());
  map_.emplace(word, id);
  words_.push_back(word);
  return id;
}

int Vocabulary::id(const std::string& word) const {
  auto it = map_.find(word);
  return it == map_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::word(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("Vocabulary::word: bad id");
  return words_[static_cast<size_t>(id)];
}

std::vector<std::string> tokenize_words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  };
  for (char ch : text) {
    unsigned char c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c) && c != '\'') {
      flush();
      out.push_back(std::string(1, ch));
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

std::string detokenize(const std::vector<std::string>& words) {
  std::string out;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(' ');
    out += words[i];
  }
  return out;
}

void TextExample::validate(int vocab_size, int max_len) const {
  if (static_cast<int>(tokens.size()) > max_len)
    throw std::invalid_argument("TextExample: sequence exceeds max length");
  if (tokens.size() != attackable.size())
    throw std::invalid_argument("TextExample: attackable mask size mismatch");
  for (int t : tokens)
    if (t < 0 || t >= vocab_size) throw std::out_of_range("TextExample: token out of vocab bounds");
  if (pair_boundary) {
    for (int i = 0; i < *pair_boundary && i < static_cast<int>(tokens.size()); ++i)
      if (attackable[static_cast<size_t>(i)])
        throw std::invalid_argument("TextExample: premise positions must be non-attackable");
  }
}

SubstitutionMap SubstitutionMap::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("SubstitutionMap: cannot open " + path);
  SubstitutionMap m;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto colon = line.find(':');
    if (colon == std::string::npos)
      throw std::runtime_error("SubstitutionMap: missing ':' at line " + std::to_string(lineno));
    std::string word = line.substr(0, colon);
    while (!word.empty() && word.back() == ' ') word.pop_back();
    std::vector<std::string> subs;
    std::stringstream ss(line.substr(colon + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item.erase(std::remove(item.begin(), item.end(), ' '), item.end());
      if (item.empty() || item == word) continue;  // no self-substitution
      subs.push_back(item);
    }
    if (!subs.empty()) m.entries[word] = std::move(subs);
  }
  return m;
}

void SubstitutionMap::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("SubstitutionMap: cannot write " + path);
  for (const auto& [w, subs] : entries) {
    out << w << ": ";
    for (size_t i = 0; i < subs.size(); ++i) out << (i ? "," : "") << subs[i];
    out << "\n";
  }
}

double AttackSpace::log_cardinality() const {
  double lc = 0.0;
  for (const auto& c : candidates) lc += std::log(static_cast<double>(c.size()));
  return lc;
}

std::size_t AttackSpace::num_sequences() const {
  std::size_t n = 1;
  for (const auto& c : candidates) {
    if (n > std::numeric_limits<std::size_t>::max() / c.size())
      return std::numeric_limits<std::size_t>::max();
    n *= c.size();
  }
  return n;
}

bool AttackSpace::contains(const std::vector<int>& seq) const {
  if (seq.size() != candidates.size()) return false;
  for (size_t i = 0; i < seq.size(); ++i) {
    const auto& c = candidates[i];
    if (std::find(c.begin(), c.end(), seq[i]) == c.end()) return false;
  }
  return true;
}

Dataset Dataset::load(const std::string& path, TaskKind schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("Dataset: cannot open " + path);
  Dataset ds;
  ds.schema_ = schema;
  std::unordered_map<std::string, int> labels;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error("Dataset: malformed record at line " + std::to_string(lineno) +
                               ": " + e.what());
    }
    RawRecord rec;
    try {
      if (schema == TaskKind::Single) {
        rec.text = j.at("text").get<std::string>();
      } else {
        rec.premise = j.at("premise").get<std::string>();
        rec.hypothesis = j.at("hypothesis").get<std::string>();
      }
      std::string lab = j.at("label").get<std::string>();
      auto it = labels.find(lab);
      if (it == labels.end()) {
        it = labels.emplace(lab, static_cast<int>(ds.label_names_.size())).first;
        ds.label_names_.push_back(lab);
      }
      rec.label = it->second;
      rec.split = j.value("split", "train");
    } catch (const json::exception& e) {
      throw std::runtime_error("Dataset: malformed record at line " + std::to_string(lineno) +
                               ": " + e.what());
    }
    ds.records_.push_back(std::move(rec));
  }
  ds.num_classes_ = static_cast<int>(ds.label_names_.size());
  return ds;
}

Dataset Dataset::from_records(std::vector<RawRecord> records, std::vector<std::string> label_names,
                              TaskKind schema) {
  Dataset ds;
  ds.schema_ = schema;
  ds.records_ = std::move(records);
  ds.label_names_ = std::move(label_names);
  ds.num_classes_ = static_cast<int>(ds.label_names_.size());
  for (const auto& r : ds.records_)
    if (r.label < 0 || r.label >= ds.num_classes_)
      throw std::invalid_argument("Dataset: record label out of range");
  return ds;
}

void Dataset::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("Dataset: cannot write " + path);
  for (const auto& r : records_) {
    json j;
    if (schema_ == TaskKind::Single) {
      j["text"] = r.text;
    } else {
      j["premise"] = r.premise;
      j["hypothesis"] = r.hypothesis;
    }
    j["label"] = label_names_.at(static_cast<size_t>(r.label));
    j["split"] = r.split;
    out << j.dump() << "\n";
  }
}

std::vector<const RawRecord*> Dataset::split(const std::string& name) const {
  std::vector<const RawRecord*> out;
  for (const auto& r : records_)
    if (r.split == name) out.push_back(&r);
  return out;
}

std::map<int, int> Dataset::class_histogram(const std::string& split_name) const {
  std::map<int, int> h;
  for (const auto& r : records_)
    if (r.split == split_name) ++h[r.label];
  return h;
}

Vocabulary Dataset::build_vocab(int min_freq) const {
  if (records_.empty()) throw std::runtime_error("build_vocab: empty dataset");
  // Deterministic: first-appearance order over the record stream.
  std::unordered_map<std::string, int> freq;
  std::vector<std::string> order;
  auto count = [&](const std::string& text) {
    for (const auto& w : tokenize_words(text)) {
      if (++freq[w] == 1) order.push_back(w);
    }
  };
  for (const auto& r : records_) {
    if (schema_ == TaskKind::Single) {
      count(r.text);
    } else {
      count(r.premise);
      count(r.hypothesis);
    }
  }
  Vocabulary v;
  for (const auto& w : order)
    if (freq[w] >= min_freq) v.add(w);
  return v;
}

TextExample Dataset::encode(const RawRecord& rec, const Vocabulary& vocab, int max_len) const {
  TextExample ex;
  ex.label = rec.label;
  auto push = [&](const std::string& text, bool attackable) {
    for (const auto& w : tokenize_words(text)) {
      if (static_cast<int>(ex.tokens.size()) >= max_len) return;
      ex.tokens.push_back(vocab.id(w));
      ex.attackable.push_back(attackable);
    }
  };
  if (schema_ == TaskKind::Single) {
    push(rec.text, true);
  } else {
    push(rec.premise, false);
    if (static_cast<int>(ex.tokens.size()) < max_len) {
      ex.tokens.push_back(kSepId);
      ex.attackable.push_back(false);
    }
    ex.pair_boundary = static_cast<int>(ex.tokens.size());
    push(rec.hypothesis, true);
  }
  return ex;
}

std::vector<TextExample> Dataset::encode_split(const std::string& split_name,
                                               const Vocabulary& vocab, int max_len) const {
  std::vector<TextExample> out;
  for (const RawRecord* r : split(split_name)) out.push_back(encode(*r, vocab, max_len));
  return out;
}

AttackSpace build_attack_space(const TextExample& ex, const SubstitutionMap& submap,
                               const Vocabulary& vocab) {
  AttackSpace space;
  space.source = &ex;
  space.candidates.resize(ex.tokens.size());
  for (size_t i = 0; i < ex.tokens.size(); ++i) {
    int orig = ex.tokens[i];
    auto& cand = space.candidates[i];
    cand.push_back(orig);
    if (!ex.attackable[i] || orig < kNumReserved) continue;
    auto it = submap.entries.find(vocab.word(orig));
    if (it == submap.entries.end()) continue;
    for (const auto& sub : it->second) {
      if (!vocab.contains(sub)) continue;  // out-of-vocab substitutes are dropped
      int id = vocab.id(sub);
      if (id != orig && std::find(cand.begin(), cand.end(), id) == cand.end())
        cand.push_back(id);
    }
  }
  return space;
}

ClassBatch sample_class_batch(const std::vector<TextExample>& pool, int num_classes, int n,
                              std::mt19937_64& rng) {
  if (n <= 0) throw std::invalid_argument("sample_class_batch: N must be positive");
  if (pool.empty()) throw std::invalid_argument("sample_class_batch: empty pool");
  std::vector<std::vector<const TextExample*>> by_class(static_cast<size_t>(num_classes));
  for (const auto& ex : pool) by_class.at(static_cast<size_t>(ex.label)).push_back(&ex);
  for (const auto& c : by_class)
    if (c.empty()) throw std::invalid_argument("sample_class_batch: a class has no examples");
  // Label from the empirical class distribution = label of a uniform example.
  std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
  int y = pool[pick(rng)].label;
  const auto& cls = by_class[static_cast<size_t>(y)];
  ClassBatch batch;
  batch.label = y;
  std::uniform_int_distribution<size_t> pick_cls(0, cls.size() - 1);
  for (int i = 0; i < n; ++i) batch.examples.push_back(*cls[pick_cls(rng)]);
  return batch;
}

std::vector<int> sample_indices(std::size_t pool_size, int n, std::mt19937_64& rng) {
  if (n < 0 || static_cast<std::size_t>(n) > pool_size)
    throw std::invalid_argument("sample_indices: n exceeds pool size");
  std::vector<int> idx(pool_size);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> d(static_cast<std::size_t>(i), pool_size - 1);
    std::swap(idx[static_cast<size_t>(i)], idx[d(rng)]);
  }
  idx.resize(static_cast<size_t>(n));
  return idx;
}

}  // namespace rift
