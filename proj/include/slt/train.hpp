#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "slt/corpus.hpp"
#include "slt/model.hpp"
#include "slt/optim.hpp"

namespace slt {

struct TrainConfig {
  std::size_t steps = 3000;
  std::size_t batch_size = 8;
  /// Shorter warmup than the schedule's own default: a 3000-step toy run
  /// would otherwise never reach the peak rate.
  LrSchedule schedule{6.8e-4, 1000};
  AdamConfig adam;
  std::uint64_t seed = 0;
  std::size_t log_every = 100;
  /// Save a checkpoint every this many steps (0: only at the end).
  std::size_t checkpoint_every = 100;
  /// Number of most recent checkpoints averaged for evaluation.
  std::size_t average_last = 5;
};

/// One line of the metrics stream. Losses are batch means: ctc per sequence,
/// ce per target token; total = λ_R * ctc + λ_T * ce.
struct StepMetrics {
  std::size_t step = 0;
  double lr = 0.0;
  double ctc_loss = 0.0;
  double ce_loss = 0.0;
  double total = 0.0;
  bool accepted = true;
  std::string rejection;
};

/// Deterministic epoch-wise shuffling: each epoch is a fresh permutation drawn
/// from (seed, epoch); the final short batch of an epoch is kept.
class BatchSampler {
 public:
  BatchSampler(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed);
  std::vector<std::size_t> next();

 private:
  void reshuffle();
  std::size_t size_;
  std::size_t batch_;
  std::uint64_t seed_;
  std::size_t epoch_ = 0;
  std::size_t cursor_ = 0;
  std::vector<std::size_t> order_;
};

/// Forward + backward over a batch and one Adam update at lr(optimizer step + 1).
/// A non-finite loss or gradient leaves parameters and optimizer untouched
/// and is reported through StepMetrics::accepted.
template <typename T>
StepMetrics train_step(Model<T>& model, Adam<T>& optimizer, const LrSchedule& schedule,
                       std::span<const Sample* const> batch, Rng* dropout_rng);

/// Mean joint loss over `samples` without dropout, in the same units as
/// StepMetrics (the whole set is one batch).
template <typename T>
StepMetrics evaluate_loss(const Model<T>& model, std::span<const Sample> samples);

using StepCallback = std::function<void(const StepMetrics&)>;

/// Runs steps optimizer.steps()+1 .. config.steps. `on_step` sees every step;
/// `on_checkpoint` runs after steps that are multiples of checkpoint_every and
/// after the final one.
template <typename T>
void train_loop(Model<T>& model, Adam<T>& optimizer, std::span<const Sample> train, const TrainConfig& config,
                const StepCallback& on_step, const std::function<void(std::size_t step)>& on_checkpoint = {});

}  // namespace slt
