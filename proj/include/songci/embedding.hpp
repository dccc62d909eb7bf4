#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "songci/corpus.hpp"
#include "songci/model.hpp"
#include "songci/tensor.hpp"

namespace songci {

enum class EmbeddingStrategy { FixV, AdaptV };

EmbeddingStrategy parse_strategy(const std::string& name);
const char* strategy_name(EmbeddingStrategy strategy);

struct EmbeddingMatrix {
  Tensor matrix;  // [vocab x dim]
  bool trainable = true;
};

struct SkipGramConfig {
  int dim = 200;
  int window = 5;
  int negatives = 5;
  int epochs = 5;
  double learning_rate = 0.025;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SkipGramResult {
  EmbeddingMatrix embedding;
  // Mean negative-sampling loss per (center, context) pair, one per epoch.
  std::vector<double> epoch_loss;
};

// Skip-gram with negative sampling over id sequences. Single-threaded and
// fully determined by config.seed.
SkipGramResult train_skipgram(const std::vector<std::vector<int>>& corpus_ids, int vocab_size,
                              const SkipGramConfig& config);

// Character id sequences (each iambic's full text) for pretraining.
std::vector<std::vector<int>> skipgram_corpus(const std::vector<Iambic>& iambics, const Vocabulary& vocab);

// Copies rows into the model and sets the trainable flag per strategy.
void init_embedding(Seq2SeqModel& model, const EmbeddingMatrix& pretrained, EmbeddingStrategy strategy);

double cosine(const Tensor& matrix, int row_a, int row_b);

// "V d" header, then "token v1 ... vd" per row in vocabulary order.
void write_vectors(const std::filesystem::path& path, const EmbeddingMatrix& embedding, const Vocabulary& vocab);
std::string render_vectors(const EmbeddingMatrix& embedding, const Vocabulary& vocab);

struct LoadedVectors {
  EmbeddingMatrix embedding;
  int missing_rows = 0;  // vocabulary entries absent from the file, left at zero
};

// Rows are matched to `vocab` by token; entries for unknown tokens are ignored.
LoadedVectors read_vectors(const std::filesystem::path& path, const Vocabulary& vocab);

}  // namespace songci
