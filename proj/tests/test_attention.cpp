#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "slt/attention.hpp"
#include "slt/gradcheck_suite.hpp"
#include "slt/ops.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace slt;
using namespace slt::testing;

TEST_CASE("bucket facts") {
  CHECK(rel_bucket(5, 5, 32) == 32);
  CHECK(rel_bucket(0, 100, 32) == 0);
  CHECK(rel_bucket(100, 0, 32) == 63);
  CHECK(rel_bucket(3, 1, 4) == 6);
  CHECK(rel_bucket(1, 3, 4) == 2);
  for (int d = -40; d <= 40; ++d) {
    const int b = rel_bucket(d, 0, 32);
    CHECK(b >= 0);
    CHECK(b <= 63);
  }
}

TEST_CASE("term sets") {
  CHECK(TermSet::parse("all") == TermSet{});
  CHECK(TermSet::parse("c2c").str() == "c2c");
  CHECK(TermSet::parse("c2c,c2p,p2c").str() == "c2c,c2p,p2c");
  CHECK_THROWS(TermSet::parse("c2p"));
  CHECK_THROWS(TermSet::parse("c2c,x"));
}

TEST_CASE("vectorized disentangled scores equal the per-pair loop") {
  for_all(100, 21, [](Rng& rng, std::size_t i) {
    const std::size_t mq = random_size(rng, 1, 8), mk = random_size(rng, 1, 8), d = random_size(rng, 1, 16);
    const int L = static_cast<int>(random_size(rng, 1, 6));
    const std::size_t rows = static_cast<std::size_t>(2 * L);
    const Tensor<double> qc = random_tensor({mq, d}, rng), kc = random_tensor({mk, d}, rng),
                         qp = random_tensor({rows, d}, rng), kp = random_tensor({rows, d}, rng);
    TermSet t;
    if (i % 4 == 1) t = TermSet::parse("c2c");
    if (i % 4 == 2) t = TermSet::parse("c2c,c2p,p2c");
    Graph<double> g;
    const Tensor<double> got =
        drpe_scores(g.constant(qc), g.constant(kc), g.constant(qp), g.constant(kp), t, L).value();
    CHECK(max_abs_diff(got, naive_drpe(qc, kc, qp, kp, t, L)) < 1e-12);
  });
}

TEST_CASE("with a zero position table, relative attention is standard attention at the relative scale") {
  for_all(20, 22, [](Rng& rng, std::size_t) { CHECK(zero_table_attention_gap(rng) < 1e-12); });
}

TEST_CASE("score scale does not depend on the enabled terms") {
  Rng rng(1);
  for (const char* terms : {"c2c", "c2c,p2c", "all"}) {
    AttentionConfig cfg;
    cfg.d_model = 8;
    cfg.heads = 2;
    cfg.max_distance = 2;
    cfg.terms = TermSet::parse(terms);
    ParameterStore<double> s;
    Parameter<double>& table = s.add("P", Tensor<double>(Shape{4, 8}));
    MultiHeadAttention<double> attn(s, "a", cfg, &table, rng);
    CHECK(attn.score_scale() == doctest::Approx(1.0 / std::sqrt(16.0)));
  }
  AttentionConfig plain;
  plain.d_model = 8;
  plain.heads = 2;
  plain.relative = false;
  ParameterStore<double> s;
  MultiHeadAttention<double> attn(s, "a", plain, nullptr, rng);
  CHECK(attn.score_scale() == doctest::Approx(0.5));
  CHECK(s.find("a.w_query_pos") == nullptr);
}

TEST_CASE("masks") {
  Rng rng(2);
  AttentionConfig cfg;
  cfg.d_model = 4;
  cfg.heads = 2;
  cfg.max_distance = 3;
  ParameterStore<double> s;
  Parameter<double>& table = s.add("P", random_tensor({6, 4}, rng));
  MultiHeadAttention<double> attn(s, "a", cfg, &table, rng);
  const Tensor<double> x = random_tensor({6, 4}, rng);
  Graph<double> g;
  const AttentionMask pad = AttentionMask::key_padding(6, 6, 4);
  attn.forward(g, g.constant(x), g.constant(x), g.constant(x), &pad);
  for (const Var<double>& w : attn.last_weights())
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(w.value()(i, 4) == 0.0);
      CHECK(w.value()(i, 5) == 0.0);
    }
  const AttentionMask causal = AttentionMask::causal(6);
  attn.forward(g, g.constant(x), g.constant(x), g.constant(x), &causal);
  for (const Var<double>& w : attn.last_weights())
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = i + 1; j < 6; ++j) CHECK(w.value()(i, j) == 0.0);
  AttentionMask merged = AttentionMask::causal(3);
  merged.merge(AttentionMask::key_padding(3, 3, 1));
  CHECK(merged.masked == std::vector<std::uint8_t>{0, 1, 1, 0, 1, 1, 0, 1, 1});
  CHECK_THROWS_AS(merged.merge(AttentionMask::causal(2)), ShapeError);
}

TEST_CASE("multi-head shape checks") {
  Rng rng(3);
  AttentionConfig cfg;
  cfg.d_model = 6;
  cfg.heads = 4;
  ParameterStore<double> s;
  CHECK_THROWS_AS(MultiHeadAttention<double>(s, "a", cfg, nullptr, rng), std::invalid_argument);
  cfg.heads = 2;
  CHECK_THROWS_AS(MultiHeadAttention<double>(s, "b", cfg, nullptr, rng), std::invalid_argument);
}

TEST_CASE("disentangled attention gradients including the position table") {
  for (const GradcheckOutcome& o : run_gradcheck_group("drpe")) {
    INFO(o.module << "\n" << o.detail);
    CHECK(o.passed);
  }
}
