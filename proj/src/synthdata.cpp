#include "rift/synthdata.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

namespace rift {

void SynthTaskConfig::validate() const {
  if (classes < 2) throw std::invalid_argument("SynthTaskConfig: classes < 2");
  if (clusters_per_class < 1 || filler_clusters < 1)
    throw std::invalid_argument("SynthTaskConfig: need at least one cluster per group");
  if (synonyms < 2) throw std::invalid_argument("SynthTaskConfig: synonyms < 2");
  if (signal_words < 1 || signal_words > sentence_len)
    throw std::invalid_argument("SynthTaskConfig: signal_words out of range");
  if (train_size < 1 || dev_size < 1 || test_size < 1)
    throw std::invalid_argument("SynthTaskConfig: empty split");
  if (train_synonym_bias < 0.0 || train_synonym_bias > 1.0)
    throw std::invalid_argument("SynthTaskConfig: bias outside [0,1]");
  if (label_noise < 0.0 || label_noise >= 0.5)
    throw std::invalid_argument("SynthTaskConfig: label_noise outside [0,0.5)");
}

namespace {

std::string signal_word(int cls, int cluster, int syn) {
  return "s" + std::to_string(cls) + "c" + std::to_string(cluster) + "v" + std::to_string(syn);
}

std::string filler_word(int cluster, int syn) {
  return "f" + std::to_string(cluster) + "v" + std::to_string(syn);
}

}  // namespace

SynthTask make_synth_task(const SynthTaskConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  auto pick_syn = [&](bool biased) {
    if (biased && unit(rng) < cfg.train_synonym_bias) return 0;
    return static_cast<int>(rng() % static_cast<std::uint64_t>(cfg.synonyms));
  };

  auto make_sentence = [&](int label, bool biased) {
    std::vector<std::string> words(static_cast<size_t>(cfg.sentence_len));
    std::vector<int> pos(static_cast<size_t>(cfg.sentence_len));
    for (int i = 0; i < cfg.sentence_len; ++i) pos[static_cast<size_t>(i)] = i;
    std::shuffle(pos.begin(), pos.end(), rng);
    int shared = static_cast<int>(rng() % static_cast<std::uint64_t>(cfg.clusters_per_class));
    for (int i = 0; i < cfg.sentence_len; ++i) {
      int p = pos[static_cast<size_t>(i)];
      if (i < cfg.signal_words) {
        int cluster =
            cfg.cluster_coherent
                ? shared
                : static_cast<int>(rng() % static_cast<std::uint64_t>(cfg.clusters_per_class));
        words[static_cast<size_t>(p)] = signal_word(label, cluster, pick_syn(biased));
      } else {
        int cluster = static_cast<int>(rng() % static_cast<std::uint64_t>(cfg.filler_clusters));
        words[static_cast<size_t>(p)] = filler_word(cluster, pick_syn(false));
      }
    }
    return detokenize(words);
  };

  std::vector<std::string> label_names;
  for (int c = 0; c < cfg.classes; ++c) label_names.push_back("class" + std::to_string(c));

  std::vector<RawRecord> records;
  auto emit = [&](const std::string& split, int n, bool biased) {
    for (int i = 0; i < n; ++i) {
      int y = static_cast<int>(rng() % static_cast<std::uint64_t>(cfg.classes));
      RawRecord r;
      r.text = make_sentence(y, biased);
      r.label = y;
      if (cfg.label_noise > 0.0 && unit(rng) < cfg.label_noise)
        r.label = (y + 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(cfg.classes - 1))) %
                  cfg.classes;
      r.split = split;
      records.push_back(std::move(r));
    }
  };
  emit("train", cfg.train_size, true);
  emit("dev", cfg.dev_size, false);
  emit("test", cfg.test_size, false);

  SynthTask task;
  task.dataset = Dataset::from_records(std::move(records), std::move(label_names), TaskKind::Single);

  for (int i = 0; i < cfg.aux_factor * cfg.train_size; ++i) {
    int y = static_cast<int>(rng() % static_cast<std::uint64_t>(cfg.classes));
    task.aux_sentences.push_back(make_sentence(y, false));
  }

  auto link_cluster = [&](auto name_fn) {
    for (int v = 0; v < cfg.synonyms; ++v) {
      std::vector<std::string> subs;
      for (int u = 0; u < cfg.synonyms; ++u)
        if (u != v) subs.push_back(name_fn(u));
      task.submap.entries[name_fn(v)] = std::move(subs);
    }
  };
  for (int c = 0; c < cfg.classes; ++c)
    for (int k = 0; k < cfg.clusters_per_class; ++k)
      link_cluster([&](int v) { return signal_word(c, k, v); });
  for (int k = 0; k < cfg.filler_clusters; ++k)
    link_cluster([&](int v) { return filler_word(k, v); });

  return task;
}

void write_synth_task(const SynthTask& task, const std::string& dir) {
  std::filesystem::create_directories(dir);
  task.dataset.save(dir + "/data.jsonl");
  task.submap.save(dir + "/subs.txt");
  std::ofstream aux(dir + "/aux.txt");
  if (!aux) throw std::runtime_error("write_synth_task: cannot write aux corpus");
  for (const auto& s : task.aux_sentences) aux << s << "\n";
}

}  // namespace rift
