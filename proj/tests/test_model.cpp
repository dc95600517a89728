#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "slt/checkpoint.hpp"
#include "slt/corpus.hpp"
#include "slt/gradcheck_suite.hpp"
#include "slt/model.hpp"
#include "slt/optim.hpp"
#include "slt/train.hpp"
#include "support.hpp"

using namespace slt;
using namespace slt::testing;

namespace {

CorpusConfig toy_corpus() {
  CorpusConfig c;
  c.glosses = 4;
  c.train_size = 6;
  c.dev_size = 2;
  c.test_size = 0;
  c.min_glosses = 2;
  c.max_glosses = 3;
  c.min_frames = 4;
  c.max_frames = 6;
  c.feature_dim = 6;
  c.noise = 0.3;
  return c;
}

ModelConfig toy_model() {
  const CorpusConfig c = toy_corpus();
  ModelConfig m;
  m.input_dim = c.feature_dim;
  m.d_model = 16;
  m.heads = 2;
  m.encoder_layers = 1;
  m.decoder_layers = 1;
  m.dropout = 0.0;
  m.gloss_vocab = c.glosses;
  m.word_vocab = c.word_vocab();
  m.cptcn.gathering.window = 4;
  m.max_distance = 8;
  return m;
}

double batch_loss(Model<double>& model, const std::vector<Sample>& batch, bool backward) {
  std::size_t tokens = 0;
  for (const Sample& s : batch) tokens += s.words.size() + 1;
  double total = 0.0;
  for (const Sample& s : batch) {
    Graph<double> g(backward);
    SampleLoss<double> l = model.sample_loss(g, s.features.cast<double>(), s.glosses, s.words, batch.size(), tokens);
    total += l.total.value().item();
    if (backward) g.backward(l.total);
  }
  return total;
}

bool has_grad(const ParameterStore<double>& p, const std::string& prefix) {
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i].name.rfind(prefix, 0) == 0)
      for (double v : p[i].grad.values())
        if (v != 0.0) return true;
  return false;
}

}  // namespace

TEST_CASE("encoder and decoder output shapes") {
  Model<double> model(toy_model(), 1);
  Rng rng(2);
  Graph<double> g;
  const Tensor<double> x = random_tensor({11, 6}, rng);
  Encoded<double> enc = model.encode(g, x);
  CHECK(enc.states.shape() == Shape{11, 16});
  CHECK(enc.gloss_log_probs.shape() == Shape{11, 5});
  const std::vector<int> in{kBos, 3, 4, 5};
  CHECK(model.decode(g, in, enc).shape() == Shape{4, model.config().word_vocab});
  CHECK_THROWS_AS(model.encode(g, random_tensor({4, 6}, rng)), GatherError);
  CHECK_THROWS_AS(model.encode(g, random_tensor({11, 5}, rng)), ShapeError);
  const std::vector<int> no_bos{3, 4};
  CHECK_THROWS_AS(model.decode(g, no_bos, enc), std::invalid_argument);
}

TEST_CASE("decoder is causal") {
  for (const char* sites : {"all", "none"}) {
    ModelConfig mc = toy_model();
    mc.drpe_sites = DrpeSites::parse(sites);
    Model<double> model(mc, 3);
    Rng rng(4);
    Graph<double> g;
    Encoded<double> enc = model.encode(g, random_tensor({9, 6}, rng));
    std::vector<int> a{kBos, 3, 4, 5, 6}, b = a;
    b[3] = 7;
    const Tensor<double> ya = model.decode(g, a, enc).value(), yb = model.decode(g, b, enc).value();
    for (std::size_t i = 0; i < 5; ++i) {
      double diff = 0.0;
      for (std::size_t w = 0; w < ya.cols(); ++w) diff = std::max(diff, std::abs(ya(i, w) - yb(i, w)));
      if (i < 3) {
        CHECK(diff == 0.0);
      } else {
        CHECK(diff > 0.0);
      }
    }
  }
}

TEST_CASE("padded frames do not change real frames") {
  for (const char* sites : {"all", "none"}) {
    ModelConfig mc = toy_model();
    mc.drpe_sites = DrpeSites::parse(sites);
    Model<double> model(mc, 5);
    Rng rng(6);
    const Tensor<double> real = random_tensor({8, 6}, rng);
    Tensor<double> padded(Shape{12, 6});
    for (std::size_t i = 0; i < 12; ++i)
      for (std::size_t j = 0; j < 6; ++j) padded(i, j) = i < 8 ? real(i, j) : uniform(rng, -5.0, 5.0);
    Graph<double> g;
    Encoded<double> e1 = model.encode(g, real);
    Encoded<double> e2 = model.encode(g, padded, 8);
    CHECK(e2.valid_length == 8);
    CHECK(max_abs_diff(e1.gloss_log_probs.value(), e2.gloss_log_probs.value()) < 1e-12);
    const std::vector<int> in{kBos, 3, 4};
    // Copies: a later record may reallocate the graph's node storage.
    const Tensor<double> y1 = model.decode(g, in, e1).value();
    const Tensor<double> y2 = model.decode(g, in, e2).value();
    CHECK(max_abs_diff(y1, y2) < 1e-12);
  }
}

TEST_CASE("lambda weights select the trained branches") {
  const Corpus corpus = generate_corpus(toy_corpus());
  const std::vector<Sample> batch(corpus.train.begin(), corpus.train.begin() + 2);
  for (int mode = 0; mode < 3; ++mode) {
    ModelConfig mc = toy_model();
    if (mode == 1) mc.lambda_translation = 0.0;
    if (mode == 2) mc.lambda_recognition = 0.0;
    Model<double> model(mc, 7);
    model.params().zero_grad();
    batch_loss(model, batch, true);
    CHECK(has_grad(model.params(), "encoder.layer0") == true);
    CHECK(has_grad(model.params(), "encoder.gloss") == (mode != 2));
    CHECK(has_grad(model.params(), "decoder.") == (mode != 1));
  }
}

TEST_CASE("joint loss is the weighted sum of its parts") {
  const Corpus corpus = generate_corpus(toy_corpus());
  ModelConfig mc = toy_model();
  mc.lambda_recognition = 0.3;
  mc.lambda_translation = 2.0;
  Model<double> model(mc, 8);
  const Sample& s = corpus.train[0];
  Graph<double> g;
  SampleLoss<double> l = model.sample_loss(g, s.features.cast<double>(), s.glosses, s.words, 4, 20);
  CHECK(l.tokens == s.words.size() + 1);
  CHECK(l.total.value().item() == doctest::Approx(0.3 * l.ctc / 4 + 2.0 * l.nll / 20).epsilon(1e-12));
}

TEST_CASE("gradient descent on one fixed batch lowers the loss every step") {
  const Corpus corpus = generate_corpus(toy_corpus());
  const std::vector<Sample> batch(corpus.train.begin(), corpus.train.begin() + 4);
  Model<double> model(toy_model(), 9);
  double prev = INFINITY;
  for (int step = 0; step < 50; ++step) {
    model.params().zero_grad();
    const double loss = batch_loss(model, batch, true);
    INFO("step " << step << " loss " << loss << " previous " << prev);
    CHECK(loss < prev);
    prev = loss;
    for (std::size_t i = 0; i < model.params().size(); ++i) {
      Parameter<double>& p = model.params()[i];
      for (std::size_t k = 0; k < p.value.numel(); ++k) p.value[k] -= 1e-3 * p.grad[k];
    }
  }
}

TEST_CASE("learning rate schedule") {
  LrSchedule s;
  CHECK(s.rate(0) == 0.0);
  CHECK(s.rate(4000) == doctest::Approx(6.8e-4).epsilon(1e-12));
  CHECK(s.rate(16000) == doctest::Approx(3.4e-4).epsilon(1e-12));
  CHECK(s.rate(2000) == doctest::Approx(3.4e-4).epsilon(1e-12));
  for (std::size_t t = 1; t < 4000; t += 97) CHECK(s.rate(t) < s.rate(t + 1));
  for (std::size_t t = 4000; t < 20000; t += 997) CHECK(s.rate(t) > s.rate(t + 1));
}

TEST_CASE("adam with zero gradients leaves parameters unchanged") {
  Model<double> model(toy_model(), 10);
  Adam<double> opt(model.params());
  const ModelCheckpoint before = capture_checkpoint<double>(model, nullptr, 0, 0, "");
  model.params().zero_grad();
  opt.step(1e-3);
  opt.step(1e-3);
  CHECK(opt.steps() == 2);
  CHECK(capture_checkpoint<double>(model, nullptr, 0, 0, "").params == before.params);
}

TEST_CASE("adam first step moves each weight by about lr against its gradient sign") {
  ParameterStore<double> store;
  Parameter<double>& p = store.add("w", Tensor<double>(Shape{3}, std::vector<double>{1.0, 2.0, 3.0}));
  Adam<double> opt(store);
  p.grad = Tensor<double>(Shape{3}, std::vector<double>{0.5, -2.0, 0.0});
  opt.step(0.1);
  CHECK(p.value[0] == doctest::Approx(0.9).epsilon(1e-9));
  CHECK(p.value[1] == doctest::Approx(2.1).epsilon(1e-9));
  CHECK(p.value[2] == 3.0);
}

TEST_CASE("an infeasible batch is rejected without touching parameters") {
  const Corpus corpus = generate_corpus(toy_corpus());
  Model<double> model(toy_model(), 11);
  Adam<double> opt(model.params());
  Sample bad = corpus.train[0];
  bad.glosses.assign(bad.features.rows() + 1, 1);
  const Sample* batch[] = {&bad};
  const ModelCheckpoint before = capture_checkpoint(model, &opt, 0, 0, "");
  const StepMetrics m = train_step(model, opt, LrSchedule{}, std::span<const Sample* const>(batch), nullptr);
  CHECK_FALSE(m.accepted);
  CHECK_FALSE(m.rejection.empty());
  CHECK(opt.steps() == 0);
  CHECK(capture_checkpoint(model, &opt, 0, 0, "") == before);
}

TEST_CASE("checkpoint reload preserves evaluation loss bit-identically") {
  const Corpus corpus = generate_corpus(toy_corpus());
  for (int precision = 0; precision < 2; ++precision) {
    auto run = [&](auto tag) {
      using T = decltype(tag);
      Model<T> model(toy_model(), 12);
      Adam<T> opt(model.params());
      TrainConfig tc;
      tc.steps = 3;
      tc.batch_size = 2;
      tc.schedule.warmup = 2;
      train_loop<T>(model, opt, corpus.train, tc, [](const StepMetrics&) {});
      const StepMetrics before = evaluate_loss<T>(model, corpus.dev);
      const ModelCheckpoint back = decode_checkpoint(encode_checkpoint(capture_checkpoint(model, &opt, 3, 1, "{}")));
      Model<T> fresh(toy_model(), 99);
      Adam<T> fresh_opt(fresh.params());
      restore_checkpoint(back, fresh, &fresh_opt);
      const StepMetrics after = evaluate_loss<T>(fresh, corpus.dev);
      CHECK(after.total == before.total);
      CHECK(after.ctc_loss == before.ctc_loss);
      CHECK(after.ce_loss == before.ce_loss);
      CHECK(fresh_opt.steps() == 3);
    };
    if (precision == 0) run(float{});
    else run(double{});
  }
}

TEST_CASE("training trajectory is reproducible") {
  const Corpus corpus = generate_corpus(toy_corpus());
  auto trajectory = [&]() {
    ModelConfig mc = toy_model();
    mc.dropout = 0.1;
    Model<float> model(mc, 13);
    Adam<float> opt(model.params());
    TrainConfig tc;
    tc.steps = 4;
    tc.batch_size = 3;
    std::vector<double> losses;
    train_loop<float>(model, opt, corpus.train, tc, [&](const StepMetrics& m) { losses.push_back(m.total); });
    return std::make_pair(losses, encode_checkpoint(capture_checkpoint(model, &opt, 4, 0, "")));
  };
  CHECK(trajectory() == trajectory());
}

TEST_CASE("resuming from a checkpoint continues the same trajectory") {
  const Corpus corpus = generate_corpus(toy_corpus());
  ModelConfig mc = toy_model();
  mc.dropout = 0.1;
  TrainConfig tc;
  tc.steps = 6;
  tc.batch_size = 4;
  Model<float> straight(mc, 14);
  Adam<float> opt1(straight.params());
  train_loop<float>(straight, opt1, corpus.train, tc, [](const StepMetrics&) {});

  Model<float> first(mc, 14);
  Adam<float> opt2(first.params());
  TrainConfig half = tc;
  half.steps = 3;
  train_loop<float>(first, opt2, corpus.train, half, [](const StepMetrics&) {});
  const ModelCheckpoint mid = capture_checkpoint(first, &opt2, 3, 0, "");
  Model<float> resumed(mc, 77);
  Adam<float> opt3(resumed.params());
  restore_checkpoint(mid, resumed, &opt3);
  train_loop<float>(resumed, opt3, corpus.train, tc, [](const StepMetrics&) {});
  CHECK(capture_checkpoint(resumed, &opt3, 6, 0, "") == capture_checkpoint(straight, &opt1, 6, 0, ""));
}

TEST_CASE("joint model gradients") {
  for (const GradcheckOutcome& o : run_gradcheck_group("model")) {
    INFO(o.module << "\n" << o.detail);
    CHECK(o.passed);
  }
}
