#include "slt/train.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace slt {

BatchSampler::BatchSampler(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed)
    : size_(dataset_size), batch_(batch_size), seed_(seed) {
  if (dataset_size == 0) throw std::invalid_argument("batch sampler: empty training set");
  if (batch_size == 0) throw std::invalid_argument("batch sampler: batch_size must be positive");
  reshuffle();
}

void BatchSampler::reshuffle() {
  order_.resize(size_);
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  Rng rng(derive_seed(seed_, 0x62617463ULL, epoch_));
  for (std::size_t i = size_; i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(i) - 1));
    std::swap(order_[i - 1], order_[j]);
  }
  cursor_ = 0;
}

std::vector<std::size_t> BatchSampler::next() {
  if (cursor_ >= size_) {
    ++epoch_;
    reshuffle();
  }
  const std::size_t end = std::min(size_, cursor_ + batch_);
  std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                               order_.begin() + static_cast<std::ptrdiff_t>(end));
  cursor_ = end;
  return out;
}

namespace {

template <typename T>
std::size_t batch_token_count(std::span<const Sample* const> batch) {
  std::size_t n = 0;
  for (const Sample* s : batch) n += s->words.size() + 1;  // + eos
  return n;
}

template <typename T>
bool grads_finite(const ParameterStore<T>& params) {
  for (std::size_t i = 0; i < params.size(); ++i)
    for (T v : params[i].grad.values())
      if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

template <typename T>
StepMetrics train_step(Model<T>& model, Adam<T>& optimizer, const LrSchedule& schedule,
                       std::span<const Sample* const> batch, Rng* dropout_rng) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  const ModelConfig& mc = model.config();
  const std::size_t tokens = batch_token_count<T>(batch);
  StepMetrics m;
  m.step = optimizer.steps() + 1;
  m.lr = schedule.rate(m.step);
  model.params().zero_grad();
  double ctc_sum = 0.0, nll_sum = 0.0;
  for (const Sample* s : batch) {
    Graph<T> g;
    SampleLoss<T> loss =
        model.sample_loss(g, s->features.cast<T>(), s->glosses, s->words, batch.size(), tokens, dropout_rng);
    ctc_sum += loss.ctc;
    nll_sum += loss.nll;
    if (!std::isfinite(static_cast<double>(loss.total.value().item()))) {
      m.accepted = false;
      m.rejection = loss.ctc_feasible ? "non-finite loss" : "CTC target infeasible for a sample";
      break;
    }
    g.backward(loss.total);
  }
  m.ctc_loss = ctc_sum / static_cast<double>(batch.size());
  m.ce_loss = nll_sum / static_cast<double>(tokens);
  m.total = mc.lambda_recognition * m.ctc_loss + mc.lambda_translation * m.ce_loss;
  if (m.accepted && !grads_finite(model.params())) {
    m.accepted = false;
    m.rejection = "non-finite gradient";
  }
  if (!m.accepted) {
    model.params().zero_grad();
    return m;
  }
  optimizer.step(m.lr);
  return m;
}

template <typename T>
StepMetrics evaluate_loss(const Model<T>& model, std::span<const Sample> samples) {
  if (samples.empty()) throw std::invalid_argument("evaluate_loss: no samples");
  std::size_t tokens = 0;
  for (const Sample& s : samples) tokens += s.words.size() + 1;
  StepMetrics m;
  double ctc_sum = 0.0, nll_sum = 0.0;
  for (const Sample& s : samples) {
    Graph<T> g(false);
    SampleLoss<T> loss = model.sample_loss(g, s.features.cast<T>(), s.glosses, s.words, samples.size(), tokens);
    ctc_sum += loss.ctc;
    nll_sum += loss.nll;
  }
  m.ctc_loss = ctc_sum / static_cast<double>(samples.size());
  m.ce_loss = nll_sum / static_cast<double>(tokens);
  m.total = model.config().lambda_recognition * m.ctc_loss + model.config().lambda_translation * m.ce_loss;
  return m;
}

template <typename T>
void train_loop(Model<T>& model, Adam<T>& optimizer, std::span<const Sample> train, const TrainConfig& config,
                const StepCallback& on_step, const std::function<void(std::size_t)>& on_checkpoint) {
  BatchSampler sampler(train.size(), config.batch_size, config.seed);
  // Replay the sampler so a resumed run sees the same batches.
  for (std::size_t s = 0; s < optimizer.steps(); ++s) sampler.next();
  std::vector<const Sample*> batch;
  while (optimizer.steps() < config.steps) {
    batch.clear();
    for (std::size_t i : sampler.next()) batch.push_back(&train[i]);
    // Dropout masks are keyed by step so a resumed run draws the same ones.
    Rng dropout_rng(derive_seed(config.seed, 0x64726f70ULL, optimizer.steps() + 1));
    StepMetrics m = train_step(model, optimizer, config.schedule, batch, &dropout_rng);
    if (!m.accepted) {
      // Keep the step counter moving so a bad batch cannot stall the run.
      optimizer.set_steps(optimizer.steps() + 1);
    }
    if (on_step) on_step(m);
    const std::size_t step = optimizer.steps();
    const bool last = step == config.steps;
    if (on_checkpoint && (last || (config.checkpoint_every && step % config.checkpoint_every == 0))) {
      on_checkpoint(step);
    }
  }
}

#define SLT_INSTANTIATE_TRAIN(T)                                                                               \
  template StepMetrics train_step<T>(Model<T>&, Adam<T>&, const LrSchedule&, std::span<const Sample* const>,  \
                                     Rng*);                                                                    \
  template StepMetrics evaluate_loss<T>(const Model<T>&, std::span<const Sample>);                             \
  template void train_loop<T>(Model<T>&, Adam<T>&, std::span<const Sample>, const TrainConfig&,               \
                              const StepCallback&, const std::function<void(std::size_t)>&);

SLT_INSTANTIATE_TRAIN(float)
SLT_INSTANTIATE_TRAIN(double)

}  // namespace slt
