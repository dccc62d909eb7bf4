#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "songci/autodiff.hpp"
#include "songci/corpus.hpp"
#include "songci/tensor.hpp"

namespace songci {

struct ModelConfig {
  int vocab_size = 0;
  int embed_dim = 200;
  int enc_hidden = 500;  // per direction
  int dec_hidden = 500;
  int nonrec = 600;
  int maxout = 300;  // nonrec / 2
  int attn_dim = 200;
  int indicator_dim = 200;
  int num_tunes = 1;

  // Throws UsageError naming the first inconsistency.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Gate blocks are stacked in the order input, forget, output, candidate:
// w is [4h x in], u is [4h x h], b is [4h].
struct LstmParams {
  Tensor w;
  Tensor u;
  Tensor b;

  int input_dim() const { return static_cast<int>(w.dim(1)); }
  int hidden_dim() const { return static_cast<int>(u.dim(1)); }
};

struct AttentionParams {
  Tensor w;  // [attn x dec_hidden]
  Tensor u;  // [attn x 2 enc_hidden]
  Tensor v;  // [attn]
};

// Fixed orthonormal tune codes, one row per tune.
struct TuneIndicatorTable {
  Tensor vectors;  // [num_tunes x indicator_dim]
};

// Rows are the leading eigenvectors (eigenvalue-descending) of (M + M^T) / 2,
// M a seeded dim x dim standard-normal matrix.
TuneIndicatorTable make_tune_indicators(int num_tunes, std::uint64_t seed, int dim = 200);

struct Seq2SeqModel {
  ModelConfig config;
  Tensor embedding;  // [vocab x embed]
  bool embedding_trainable = true;
  LstmParams enc_fwd;
  LstmParams enc_bwd;
  LstmParams dec;  // input is [embed(y_prev); c_t]
  AttentionParams attn;
  Tensor init_proj;  // [dec_hidden x 2 enc_hidden]
  Tensor tune_proj;  // [dec_hidden x indicator_dim]
  Tensor nonrec_w;   // [nonrec x (dec_hidden + 2 enc_hidden + embed)]
  Tensor nonrec_b;   // [nonrec]
  Tensor out_w;      // [vocab x maxout]
  Tensor out_b;      // [vocab]
  TuneIndicatorTable tune_indicators;

  // Zero-filled model with every shape set from `config`.
  static Seq2SeqModel zeros(const ModelConfig& config);
  // Trainable tensors uniform in [-scale, scale]; indicators from indicator_seed.
  static Seq2SeqModel random(const ModelConfig& config, std::uint64_t seed, double scale = 0.08,
                             std::uint64_t indicator_seed = 7);

  // Trainable tensors in checkpoint order; the embedding is always listed.
  std::vector<std::pair<std::string, Tensor*>> parameters();
  std::vector<std::pair<std::string, const Tensor*>> parameters() const;

  std::size_t parameter_count() const;
};

// ---------------------------------------------------------------------------
// Graph-level building blocks.

struct BoundLstm {
  ad::Var w, u, b;
};

// Model tensors attached to one graph. With a null gradient model every
// tensor is a constant; otherwise gradients land in the matching tensors of
// `grads` (the embedding only when trainable).
struct BoundModel {
  ad::Graph* graph = nullptr;
  const Seq2SeqModel* model = nullptr;
  ad::Var embedding;
  BoundLstm enc_fwd, enc_bwd, dec;
  ad::Var attn_w, attn_u, attn_v;
  ad::Var init_proj, tune_proj;
  ad::Var nonrec_w, nonrec_b;
  ad::Var out_w, out_b;
  ad::Var tune_indicators;
};

BoundModel bind(ad::Graph& graph, const Seq2SeqModel& model, Seq2SeqModel* grads = nullptr);

struct LstmState {
  ad::Var h;
  ad::Var c;
};

LstmState lstm_step(const BoundLstm& params, ad::Var x, ad::Var h_prev, ad::Var c_prev);

struct Encoded {
  std::vector<ad::Var> states;  // h_j = [fwd_j; bwd_j]
  ad::Var fwd_last;             // forward state at the last position
  ad::Var bwd_first;            // backward state at the first position (its last step)
  ad::Var states_t;             // [2 enc_hidden x Tx], columns are h_j
  std::vector<ad::Var> keys;    // U_a h_j, reused by every decode step
};

Encoded encode(const BoundModel& m, std::span<const int> ids);

// alpha_j = softmax_j(v_a . tanh(W_a s_prev + U_a h_j))
ad::Var attention_weights(const BoundModel& m, ad::Var s_prev, const Encoded& enc);
// c = sum_j alpha_j h_j
ad::Var context(ad::Var alpha, const Encoded& enc);

// s_0 = tanh(init_proj [fwd_last; bwd_first] + tune_proj indicator(tune)), cell_0 = 0
LstmState init_decoder_state(const BoundModel& m, const Encoded& enc, int tune_id);

struct DecodeStep {
  ad::Var probs;
  ad::Var alpha;
  LstmState state;
};

DecodeStep decode_step(const BoundModel& m, const LstmState& prev, int y_prev, const Encoded& enc);

// Checkpoint file: manifest, vocabulary, tune names, tensors, FNV-1a trailer.
struct Checkpoint {
  Seq2SeqModel model;
  Vocabulary vocab;
  TuneRegistry tunes;
  std::uint64_t seed = 0;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(const std::string& bytes);

}  // namespace songci
