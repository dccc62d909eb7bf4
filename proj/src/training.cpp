#include "songci/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "songci/error.hpp"
#include "songci/rng.hpp"

namespace songci {

namespace {

constexpr const char* kModule = "training";

}  // namespace

void adadelta_update(Tensor& param, const Tensor& grad, AdaDeltaAccumulators& acc, const AdaDeltaConfig& config) {
  if (grad.shape() != param.shape() || acc.mean_sq_grad.shape() != param.shape() ||
      acc.mean_sq_delta.shape() != param.shape()) {
    throw UsageError(kModule, "adadelta: shape mismatch, parameter " + shape_string(param.shape()) + " vs gradient " +
                                  shape_string(grad.shape()));
  }
  const double rho = config.rho;
  const double eps = config.epsilon;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    double& eg = acc.mean_sq_grad[i];
    double& edx = acc.mean_sq_delta[i];
    eg = rho * eg + (1.0 - rho) * g * g;
    const double dx = -(std::sqrt(edx + eps) / std::sqrt(eg + eps)) * g;
    edx = rho * edx + (1.0 - rho) * dx * dx;
    param[i] += dx;
  }
}

AdaDeltaState::AdaDeltaState(const Seq2SeqModel& model, AdaDeltaConfig cfg) : config(cfg) {
  for (const auto& [name, tensor] : model.parameters()) {
    slots.push_back({Tensor(tensor->shape()), Tensor(tensor->shape())});
  }
}

ad::Var pair_loss_var(const BoundModel& m, const TrainPair& pair) {
  if (pair.target_ids.empty()) throw UsageError(kModule, "pair has an empty target");
  Encoded enc = encode(m, pair.cue_ids);
  LstmState state = init_decoder_state(m, enc, pair.tune_id);
  std::vector<ad::Var> losses;
  losses.reserve(pair.target_ids.size());
  int prev = Vocabulary::kBos;
  for (int target : pair.target_ids) {
    DecodeStep step = decode_step(m, state, prev, enc);
    losses.push_back(ad::cross_entropy(step.probs, target));
    state = step.state;
    prev = target;
  }
  return ad::add_n(losses);
}

PairLoss pair_loss(const Seq2SeqModel& model, const TrainPair& pair, Seq2SeqModel* grads) {
  ad::Graph g;
  BoundModel m = bind(g, model, grads);
  ad::Var total = pair_loss_var(m, pair);
  if (grads != nullptr) g.backward(total);
  return {total.value().item(), pair.target_ids.size()};
}

ad::GradCheckReport check_pair_gradients(Seq2SeqModel& model, const TrainPair& pair, double step, double tolerance,
                                         std::size_t max_elements) {
  Seq2SeqModel grads = Seq2SeqModel::zeros(model.config);
  auto values = model.parameters();
  auto sinks = grads.parameters();
  std::vector<ad::ParamRef> refs;
  for (std::size_t p = 0; p < values.size(); ++p) {
    if (values[p].second == &model.embedding && !model.embedding_trainable) continue;
    refs.push_back({values[p].first, values[p].second, sinks[p].second});
  }
  auto loss_fn = [&](ad::Graph& g) { return pair_loss_var(bind(g, model, &grads), pair); };
  return ad::grad_check(loss_fn, refs, step, tolerance, max_elements);
}

void TrainConfig::validate() const {
  if (minibatch_size < 1) throw UsageError(kModule, "minibatch_size must be >= 1");
  if (max_epochs < 0) throw UsageError(kModule, "max_epochs must be >= 0");
  if (checkpoint_every < 0) throw UsageError(kModule, "checkpoint_every must be >= 0");
  if (clip_norm < 0.0) throw UsageError(kModule, "clip_norm must be >= 0");
  if (!(adadelta.epsilon > 0.0) || !(adadelta.rho > 0.0 && adadelta.rho < 1.0)) {
    throw UsageError(kModule, "adadelta needs 0 < rho < 1 and epsilon > 0");
  }
}

std::vector<EpochStats> train(Seq2SeqModel& model, std::span<const TrainPair> pairs, const TrainConfig& config,
                              const TrainHooks& hooks) {
  config.validate();
  if (pairs.empty()) throw UsageError(kModule, "no training pairs");

  AdaDeltaState optimizer(model, config.adadelta);
  Seq2SeqModel grads = Seq2SeqModel::zeros(model.config);
  auto grad_list = grads.parameters();
  auto param_list = model.parameters();

  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(config.shuffle_seed);

  std::vector<EpochStats> log;
  std::size_t batch_index = 0;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    rng.shuffle(order.begin(), order.end());
    double epoch_loss = 0.0;
    std::size_t epoch_targets = 0;

    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(config.minibatch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.minibatch_size));
      for (auto& [name, g] : grad_list) g->fill(0.0);
      try {
        // Gradients are summed in a fixed pair order.
        for (std::size_t k = begin; k < end; ++k) {
          const PairLoss loss = pair_loss(model, pairs[order[k]], &grads);
          epoch_loss += loss.total;
          epoch_targets += loss.targets;
        }
      } catch (const NumericError& e) {
        throw NumericError(kModule, "batch " + std::to_string(batch_index) + " (epoch " + std::to_string(epoch) +
                                        "): " + e.what());
      }

      if (config.clip_norm > 0.0) {
        double sq = 0.0;
        for (auto& [name, g] : grad_list) {
          if (g == &grads.embedding && !model.embedding_trainable) continue;
          for (double v : g->data()) sq += v * v;
        }
        const double norm = std::sqrt(sq);
        if (norm > config.clip_norm) {
          const double factor = config.clip_norm / norm;
          for (auto& [name, g] : grad_list) {
            for (double& v : g->data()) v *= factor;
          }
        }
      }

      for (std::size_t p = 0; p < param_list.size(); ++p) {
        if (param_list[p].second == &model.embedding && !model.embedding_trainable) continue;
        adadelta_update(*param_list[p].second, *grad_list[p].second, optimizer.slots[p], optimizer.config);
        if (!param_list[p].second->all_finite()) {
          throw NumericError(kModule, "batch " + std::to_string(batch_index) + ": parameter '" + param_list[p].first +
                                          "' became non-finite");
        }
      }
      ++batch_index;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = epoch_targets ? epoch_loss / static_cast<double>(epoch_targets) : 0.0;
    stats.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log.push_back(stats);
    if (hooks.on_epoch) hooks.on_epoch(stats);
    if (hooks.on_checkpoint && config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0) {
      hooks.on_checkpoint(epoch, model);
    }
  }
  return log;
}

std::string format_epoch_line(const EpochStats& stats) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%d\t%.9f\t%.3f", stats.epoch, stats.mean_loss, stats.wall_seconds);
  return buf;
}

}  // namespace songci
