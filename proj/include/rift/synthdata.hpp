#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rift/corpus.hpp"

namespace rift {

// Synthetic sentiment-style task built from synonym clusters. Each class owns
// a set of signal clusters; sentences mix signal words of the true class with
// neutral filler words. The labelled train split can be biased toward one
// synonym per cluster while the (much larger) unlabelled auxiliary corpus
// uses synonyms uniformly, so an encoder pre-trained on the auxiliary corpus
// sees all variants as interchangeable even when the fine-tuning data does
// not.
struct SynthTaskConfig {
  int classes = 2;
  int clusters_per_class = 6;  // signal clusters per class
  int filler_clusters = 8;
  int synonyms = 4;  // per cluster
  int sentence_len = 12;
  int signal_words = 4;  // signal positions per sentence
  int train_size = 1000;
  int dev_size = 200;
  int test_size = 400;
  int aux_factor = 10;               // aux sentences = aux_factor * train_size
  double train_synonym_bias = 0.85;  // P(synonym 0) at train signal positions
  double label_noise = 0.0;
  bool cluster_coherent = false;  // one signal cluster per sentence
  std::uint64_t seed = 1;

  void validate() const;
};

struct SynthTask {
  Dataset dataset;
  SubstitutionMap submap;
  std::vector<std::string> aux_sentences;
};

SynthTask make_synth_task(const SynthTaskConfig& cfg);

// Writes data.jsonl, subs.txt and aux.txt under dir (created if needed).
void write_synth_task(const SynthTask& task, const std::string& dir);

}  // namespace rift
