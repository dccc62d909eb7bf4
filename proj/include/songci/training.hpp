#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "songci/corpus.hpp"
#include "songci/model.hpp"

namespace songci {

// Zeiler's AdaDelta, one pair of running averages per parameter element.
struct AdaDeltaAccumulators {
  Tensor mean_sq_grad;   // E[g^2]
  Tensor mean_sq_delta;  // E[dx^2]
};

struct AdaDeltaConfig {
  double rho = 0.95;
  double epsilon = 1e-6;
};

void adadelta_update(Tensor& param, const Tensor& grad, AdaDeltaAccumulators& acc, const AdaDeltaConfig& config);

struct AdaDeltaState {
  AdaDeltaConfig config;
  std::vector<AdaDeltaAccumulators> slots;  // parallel to Seq2SeqModel::parameters()

  explicit AdaDeltaState(const Seq2SeqModel& model, AdaDeltaConfig config = {});
};

struct PairLoss {
  double total = 0.0;       // summed over target characters
  std::size_t targets = 0;  // number of predicted tokens
  double per_char() const { return targets ? total / static_cast<double>(targets) : 0.0; }
};

// Teacher-forced cross entropy of one pair. When `grads` is set the summed
// loss is backpropagated and gradients accumulate into it.
PairLoss pair_loss(const Seq2SeqModel& model, const TrainPair& pair, Seq2SeqModel* grads = nullptr);

// Summed teacher-forced loss of one pair as a graph node.
ad::Var pair_loss_var(const BoundModel& m, const TrainPair& pair);

// Central-difference check of every trainable tensor against the pair loss.
ad::GradCheckReport check_pair_gradients(Seq2SeqModel& model, const TrainPair& pair, double step = 1e-4,
                                         double tolerance = 1e-4, std::size_t max_elements = 0);

struct TrainConfig {
  int minibatch_size = 60;
  int max_epochs = 10;
  std::uint64_t shuffle_seed = 1;
  int checkpoint_every = 0;  // epochs; 0 disables intermediate checkpoints
  double clip_norm = 0.0;    // global gradient norm cap; 0 disables
  AdaDeltaConfig adadelta;

  void validate() const;
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double wall_seconds = 0.0;
};

struct TrainHooks {
  std::function<void(const EpochStats&)> on_epoch;
  // Called after epochs that are a multiple of checkpoint_every.
  std::function<void(int epoch, const Seq2SeqModel&)> on_checkpoint;
};

// Seeded-shuffle minibatch AdaDelta. The embedding is updated only when
// model.embedding_trainable; tune indicators never change.
std::vector<EpochStats> train(Seq2SeqModel& model, std::span<const TrainPair> pairs, const TrainConfig& config,
                              const TrainHooks& hooks = {});

std::string format_epoch_line(const EpochStats& stats);

}  // namespace songci
