#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "slt/cptcn.hpp"
#include "slt/gradcheck_suite.hpp"
#include "slt/ops.hpp"
#include "support.hpp"

using namespace slt;
using namespace slt::testing;

namespace {

// Scalar conv -> LN -> relu block over one clip (n, d); weight (3d, d).
std::vector<std::vector<double>> scalar_block(const std::vector<std::vector<double>>& x, const Tensor<double>& w,
                                              const Tensor<double>& b, const Tensor<double>& gain,
                                              const Tensor<double>& shift) {
  const std::size_t n = x.size(), d = x[0].size();
  std::vector<std::vector<double>> y(n - 2, std::vector<double>(d));
  for (std::size_t t = 0; t + 2 < n; ++t) {
    for (std::size_t o = 0; o < d; ++o) {
      double s = b[o];
      for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t c = 0; c < d; ++c) s += x[t + k][c] * w(k * d + c, o);
      y[t][o] = s;
    }
    double mean = 0.0, var = 0.0;
    for (double v : y[t]) mean += v;
    mean /= static_cast<double>(d);
    for (double v : y[t]) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    for (std::size_t o = 0; o < d; ++o)
      y[t][o] = std::max(0.0, (y[t][o] - mean) / std::sqrt(var + 1e-5) * gain[o] + shift[o]);
  }
  return y;
}

CptcnConfig config(int l, GatherVariant v = GatherVariant::ContentAware, ClipPosition p = ClipPosition::Relative) {
  CptcnConfig c;
  c.gathering.variant = v;
  c.gathering.window = l;
  c.position = p;
  return c;
}

}  // namespace

TEST_CASE("conv stack shapes for the default window") {
  ParameterStore<double> s;
  Rng rng(1);
  Cptcn<double> layer(s, "c", 4, config(16), rng);
  Graph<double> g;
  Var<double> clips = g.constant(random_tensor({3, 17, 4}, rng));
  Var<double> x = ops::conv1d_valid(clips, g.param(*layer.conv_weight(0)), g.constant(Tensor<double>(Shape{4})), 3);
  CHECK(x.shape() == Shape{3, 15, 4});
  x = ops::conv1d_valid(x, g.param(*layer.conv_weight(1)), g.constant(Tensor<double>(Shape{4})), 3);
  CHECK(x.shape() == Shape{3, 13, 4});
  CHECK(ops::max_over_axis1(x).shape() == Shape{3, 4});
  CHECK(layer.aggregate(g, clips, g.constant(Tensor<double>(Shape{3, 4}))).shape() == Shape{3, 4});
}

TEST_CASE("clip offsets and table lookups") {
  ParameterStore<double> s;
  Rng rng(2);
  Cptcn<double> layer(s, "c", 3, config(4), rng);
  CHECK(layer.table_half_width() == 4);
  CHECK(layer.table()->value.shape() == Shape{9, 3});
  ClipLayout layout;
  layout.anchors = 1;
  layout.clip_length = 4;
  layout.source = {3, 4, 5, 6};
  layout.offset = {-2, -1, 0, 1};
  const std::vector<int> rows = relative_table_rows(layout.offset, 4);
  CHECK(rows == std::vector<int>{2, 3, 4, 5});
  CHECK_THROWS_AS(relative_table_rows(std::vector<int>{5}, 4), GatherError);

  // rpe adds exactly table[offset + h] to each clip element.
  Graph<double> g;
  const Tensor<double> f = random_tensor({1, 4, 3}, rng);
  ClipTensor<double> clips{g.constant(f), layout};
  const Tensor<double> out = layer.add_position(g, clips).values.value();
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t c = 0; c < 3; ++c)
      CHECK(out[k * 3 + c] == f[k * 3 + c] + layer.table()->value(static_cast<std::size_t>(rows[k]), c));

  // A zero table is the identity.
  layer.table()->value.fill(0.0);
  CHECK(layer.add_position(g, ClipTensor<double>{g.constant(f), layout}).values.value() == f);
}

TEST_CASE("aggregation matches a scalar conv/LN/relu/max reference") {
  for_all(5, 3, [](Rng& rng, std::size_t) {
    ParameterStore<double> s;
    const std::size_t d = 4, n = 7, m = 3;
    CptcnConfig cfg = config(6);
    Cptcn<double> layer(s, "c", d, cfg, rng);
    // Non-trivial LN parameters and biases.
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s[i].name.find(".bias") != std::string::npos || s[i].name.find(".ln.") != std::string::npos)
        s[i].value = random_tensor(s[i].value.shape(), rng, 0.5, 1.5);
    const Tensor<double> clips = random_tensor({m, n, d}, rng), feats = random_tensor({m, d}, rng);
    Graph<double> g;
    const Tensor<double> got = layer.aggregate(g, g.constant(clips), g.constant(feats)).value();
    for (std::size_t a = 0; a < m; ++a) {
      std::vector<std::vector<double>> x(n, std::vector<double>(d));
      for (std::size_t t = 0; t < n; ++t)
        for (std::size_t c = 0; c < d; ++c) x[t][c] = clips[(a * n + t) * d + c];
      for (std::size_t b = 0; b < 2; ++b) {
        const std::string p = "c.conv" + std::to_string(b + 1);
        x = scalar_block(x, s.get(p + ".weight").value, s.get(p + ".bias").value, s.get(p + ".ln.gain").value,
                         s.get(p + ".ln.bias").value);
      }
      for (std::size_t c = 0; c < d; ++c) {
        double mx = -INFINITY;
        for (const auto& row : x) mx = std::max(mx, row[c]);
        CHECK(std::abs(got(a, c) - (mx + feats(a, c))) < 1e-10);
      }
    }
  });
}

TEST_CASE("zero clips and zero biases leave only the residual") {
  ParameterStore<double> s;
  Rng rng(4);
  Cptcn<double> layer(s, "c", 4, config(4), rng);
  const Tensor<double> feats = random_tensor({5, 4}, rng);
  Graph<double> g;
  const Tensor<double> out = layer.aggregate(g, g.constant(Tensor<double>(Shape{5, 5, 4})), g.constant(feats)).value();
  CHECK(max_abs_diff(out, feats) == 0.0);
}

TEST_CASE("attention inputs: query stays raw, keys and values aggregated") {
  Rng rng(5);
  const Tensor<double> f = random_tensor({12, 4}, rng);
  for (GatherVariant v : {GatherVariant::ContentAware, GatherVariant::Centered, GatherVariant::Sparse}) {
    ParameterStore<double> s;
    Cptcn<double> layer(s, "c", 4, config(4, v), rng);
    Graph<double> g;
    const AttentionInputs<double> in = layer.attention_inputs(g, g.constant(f));
    CHECK(in.query.value() == f);
    CHECK(in.key.id == in.value.id);
    CHECK(in.key.shape() == Shape{12, 4});
    CHECK(in.key.value() != f);
  }
  ParameterStore<double> s;
  Cptcn<double> none(s, "c", 4, config(4, GatherVariant::None), rng);
  CHECK(s.size() == 0);
  Graph<double> g;
  const AttentionInputs<double> in = none.attention_inputs(g, g.constant(f));
  CHECK(in.query.value() == f);
  CHECK(in.key.value() == f);
  CHECK(in.value.value() == f);

  CptcnConfig all = config(4);
  all.qkv = QkvSource::AllAggregated;
  ParameterStore<double> s2;
  Cptcn<double> agg(s2, "c", 4, all, rng);
  Graph<double> g2;
  const AttentionInputs<double> in2 = agg.attention_inputs(g2, g2.constant(f));
  CHECK(in2.query.id == in2.key.id);
}

TEST_CASE("ablation flags") {
  Rng rng(6);
  const Tensor<double> f = random_tensor({10, 4}, rng);
  CptcnConfig c = config(4);
  c.residual = false;
  c.layer_norm = false;
  ParameterStore<double> s;
  Cptcn<double> layer(s, "c", 4, c, rng);
  CHECK(s.find("c.conv1.ln.gain") == nullptr);
  Graph<double> g;
  const Tensor<double> k = layer.attention_inputs(g, g.constant(f)).key.value();
  // Without residual the output is a max of rectified values.
  for (double v : k.values()) CHECK(v >= 0.0);

  CHECK_THROWS_AS(Cptcn<double>(s, "short", 4, config(3), rng), GatherError);
  ParameterStore<double> s3;
  Cptcn<double> ape(s3, "c", 4, config(4, GatherVariant::ContentAware, ClipPosition::Absolute), rng);
  CHECK(ape.table() == nullptr);
}

TEST_CASE("full CPTcn pipeline passes finite-difference checks") {
  for (const GradcheckOutcome& o : run_gradcheck_group("cptcn")) {
    INFO(o.module << "\n" << o.detail);
    CHECK(o.passed);
  }
}
