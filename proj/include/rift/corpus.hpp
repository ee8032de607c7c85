#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace rift {

// Reserved vocabulary slots.
inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kMaskId = 2;
inline constexpr int kSepId = 3;
inline constexpr int kNumReserved = 4;

enum class TaskKind { Single, Pair };

struct RawRecord {
  std::string text;        // single-text tasks
  std::string premise;     // pair tasks
  std::string hypothesis;  // pair tasks
  int label = -1;
  std::string split;       // train / dev / test
};

class Vocabulary {
 public:
  Vocabulary();

  int add(const std::string& word);  // returns existing id if present
  int id(const std::string& word) const;  // kUnkId if absent
  const std::string& word(int id) const;
  bool contains(const std::string& word) const { return map_.count(word) > 0; }
  int size() const { return static_cast<int>(words_.size()); }

 private:
  std::unordered_map<std::string, int> map_;
  std::vector<std::string> words_;
};

// Lowercase word-level split on whitespace and punctuation.
std::vector<std::string> tokenize_words(const std::string& text);
std::string detokenize(const std::vector<std::string>& words);

struct TextExample {
  std::vector<int> tokens;
  int label = -1;
  std::optional<int> pair_boundary;  // index of first hypothesis token
  std::vector<bool> attackable;

  void validate(int vocab_size, int max_len) const;
};

struct SubstitutionMap {
  std::map<std::string, std::vector<std::string>> entries;

  static SubstitutionMap load(const std::string& path);
  void save(const std::string& path) const;
};

struct AttackSpace {
  std::vector<std::vector<int>> candidates;  // per position; original first
  const TextExample* source = nullptr;

  double log_cardinality() const;
  std::size_t num_sequences() const;  // saturates at SIZE_MAX
  bool contains(const std::vector<int>& seq) const;
};

struct ClassBatch {
  std::vector<TextExample> examples;
  int label = -1;
};

struct DatasetConfig {
  TaskKind schema = TaskKind::Single;
  int max_len = 300;
  int min_freq = 1;
};

class Dataset {
 public:
  // Line-delimited records: JSON objects with fields
  // {text|premise,hypothesis}, label, split.
  static Dataset load(const std::string& path, TaskKind schema);
  static Dataset from_records(std::vector<RawRecord> records, std::vector<std::string> label_names,
                              TaskKind schema);
  void save(const std::string& path) const;  // line-delimited JSON

  const std::vector<RawRecord>& records() const { return records_; }
  std::vector<const RawRecord*> split(const std::string& name) const;
  std::map<int, int> class_histogram(const std::string& split_name) const;
  int num_classes() const { return num_classes_; }
  TaskKind schema() const { return schema_; }
  const std::vector<std::string>& label_names() const { return label_names_; }

  Vocabulary build_vocab(int min_freq) const;

  // Tokenizes one record under a vocabulary; truncates to max_len.
  TextExample encode(const RawRecord& rec, const Vocabulary& vocab, int max_len) const;
  std::vector<TextExample> encode_split(const std::string& split_name, const Vocabulary& vocab,
                                        int max_len) const;

 private:
  std::vector<RawRecord> records_;
  std::vector<std::string> label_names_;
  int num_classes_ = 0;
  TaskKind schema_ = TaskKind::Single;
};

AttackSpace build_attack_space(const TextExample& ex, const SubstitutionMap& submap,
                               const Vocabulary& vocab);

// Label sampled from the empirical class distribution, then N i.i.d.
// examples of that class (with replacement below N).
ClassBatch sample_class_batch(const std::vector<TextExample>& pool, int num_classes, int n,
                              std::mt19937_64& rng);

// Draws n distinct indices without replacement (n <= pool size).
std::vector<int> sample_indices(std::size_t pool_size, int n, std::mt19937_64& rng);

}  // namespace rift
