#include "slt/gradcheck_suite.hpp"

#include <functional>
#include <stdexcept>

#include "slt/attention.hpp"
#include "slt/ctc.hpp"
#include "slt/cptcn.hpp"
#include "slt/model.hpp"
#include "slt/ops.hpp"
#include "slt/rng.hpp"

namespace slt {
namespace {

using G = Graph<double>;
using V = Var<double>;
using LossFn = std::function<V(G&)>;

Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (double& v : t.values()) v = uniform(rng, lo, hi);
  return t;
}

// Values bounded away from zero so relu kinks stay outside the probe step.
Tensor<double> away_from_zero(Shape shape, Rng& rng) {
  Tensor<double> t(std::move(shape));
  for (double& v : t.values()) v = (uniform01(rng) < 0.5 ? -1.0 : 1.0) * uniform(rng, 0.1, 1.0);
  return t;
}

// Weighted sum with fixed random weights, so each output entry gets a
// distinct upstream gradient.
V project(G& g, V x, std::uint64_t seed) {
  Rng rng(seed);
  return ops::sum(ops::mul(x, g.constant(random_tensor(x.shape(), rng))));
}

GradcheckOutcome check(const std::string& module, const LossFn& loss, const std::vector<Parameter<double>*>& params,
                       std::size_t max_entries = 0) {
  GradCheckOptions opt;
  opt.max_entries = max_entries;
  const GradCheckReport r = finite_difference_check(loss, params, opt);
  return {module, r.passed(), r.max_error(), r.summary()};
}

std::vector<Parameter<double>*> all_params(ParameterStore<double>& s) {
  std::vector<Parameter<double>*> out;
  for (std::size_t i = 0; i < s.size(); ++i) out.push_back(&s[i]);
  return out;
}

std::vector<GradcheckOutcome> primitives(std::uint64_t seed) {
  std::vector<GradcheckOutcome> out;
  Rng rng(derive_seed(seed, 1));
  ParameterStore<double> s;
  Parameter<double>& a = s.add("a", random_tensor({4, 5}, rng));
  Parameter<double>& b = s.add("b", random_tensor({5, 3}, rng));
  Parameter<double>& c = s.add("c", random_tensor({4, 5}, rng));
  Parameter<double>& row = s.add("row", random_tensor({5}, rng));
  Parameter<double>& r = s.add("r", away_from_zero({4, 5}, rng));
  Parameter<double>& x3 = s.add("x3", random_tensor({2, 6, 4}, rng));
  Parameter<double>& cw = s.add("conv.w", random_tensor({3 * 4, 3}, rng));
  Parameter<double>& cb = s.add("conv.b", random_tensor({3}, rng));
  Parameter<double>& gain = s.add("gain", random_tensor({5}, rng, 0.5, 1.5));
  Parameter<double>& shift = s.add("shift", random_tensor({5}, rng));
  // Max input with well separated entries so the argmax cannot flip.
  Tensor<double> mx({2, 4, 3});
  for (std::size_t i = 0; i < mx.numel(); ++i) mx[i] = 0.37 * static_cast<double>((i * 7) % mx.numel());
  Parameter<double>& m = s.add("m", mx);

  const std::vector<int> rows{2, 0, 3, 2}, er{0, 1, 3, 2, 0, 1}, ec{4, 0, 2, 2, 1, 3};
  const std::vector<std::uint8_t> mask{0, 1, 0, 0, 0, 0, 0, 1, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 1};
  const std::vector<int> targets{1, -1, 4, 0};

  auto p = [](G& g, Parameter<double>& q) { return g.param(q); };
  const std::vector<std::pair<std::string, std::pair<LossFn, std::vector<Parameter<double>*>>>> cases{
      {"matmul", {[&](G& g) { return project(g, ops::matmul(p(g, a), p(g, b)), 11); }, {&a, &b}}},
      {"matmul_nt", {[&](G& g) { return project(g, ops::matmul_nt(p(g, a), p(g, c)), 12); }, {&a, &c}}},
      {"transpose", {[&](G& g) { return project(g, ops::transpose(p(g, a)), 13); }, {&a}}},
      {"add", {[&](G& g) { return project(g, ops::add(p(g, a), p(g, c)), 14); }, {&a, &c}}},
      {"add_row", {[&](G& g) { return project(g, ops::add_row(p(g, a), p(g, row)), 15); }, {&a, &row}}},
      {"sub", {[&](G& g) { return project(g, ops::sub(p(g, a), p(g, c)), 16); }, {&a, &c}}},
      {"mul", {[&](G& g) { return project(g, ops::mul(p(g, a), p(g, c)), 17); }, {&a, &c}}},
      {"scale", {[&](G& g) { return project(g, ops::scale(p(g, a), 0.7), 18); }, {&a}}},
      {"softmax_rows", {[&](G& g) { return project(g, ops::softmax_rows(p(g, a)), 19); }, {&a}}},
      {"log_softmax_rows", {[&](G& g) { return project(g, ops::log_softmax_rows(p(g, a)), 20); }, {&a}}},
      {"layer_norm",
       {[&](G& g) { return project(g, ops::layer_norm(p(g, a), p(g, gain), p(g, shift)), 21); }, {&a, &gain, &shift}}},
      {"relu", {[&](G& g) { return project(g, ops::relu(p(g, r)), 22); }, {&r}}},
      {"conv1d_valid",
       {[&](G& g) { return project(g, ops::conv1d_valid(p(g, x3), p(g, cw), p(g, cb), 3), 23); }, {&x3, &cw, &cb}}},
      {"max_over_axis1", {[&](G& g) { return project(g, ops::max_over_axis1(p(g, m)), 24); }, {&m}}},
      {"gather_rows",
       {[&](G& g) { return project(g, ops::gather_rows(p(g, a), std::span<const int>(rows)), 25); }, {&a}}},
      {"gather_elements",
       {[&](G& g) {
          return project(g, ops::gather_elements(p(g, a), std::span<const int>(er), std::span<const int>(ec), {2, 3}),
                         26);
        },
        {&a}}},
      {"masked_fill",
       {[&](G& g) { return project(g, ops::softmax_rows(ops::masked_fill(p(g, a), mask)), 31); }, {&a}}},
      {"nll_loss",
       {[&](G& g) {
          return ops::nll_loss(ops::log_softmax_rows(p(g, a)), std::span<const int>(targets), -1);
        },
        {&a}}},
      {"sum", {[&](G& g) { return ops::sum(ops::mul(p(g, a), p(g, a))); }, {&a}}},
      {"reshape", {[&](G& g) { return project(g, ops::reshape(p(g, a), {2, 10}), 27); }, {&a}}},
      {"slice_cols", {[&](G& g) { return project(g, ops::slice_cols(p(g, a), 1, 3), 28); }, {&a}}},
      {"concat_cols",
       {[&](G& g) {
          const std::vector<V> parts{p(g, a), p(g, c)};
          return project(g, ops::concat_cols(std::span<const V>(parts)), 29);
        },
        {&a, &c}}},
      {"dropout",
       {[&](G& g) {
          Rng drng(99);
          return project(g, ops::dropout(p(g, a), 0.3, drng), 30);
        },
        {&a}}},
  };
  for (const auto& [name, lp] : cases) out.push_back(check("primitive/" + name, lp.first, lp.second));
  return out;
}

std::vector<GradcheckOutcome> cptcn(std::uint64_t seed) {
  std::vector<GradcheckOutcome> out;
  const std::vector<std::pair<GatherVariant, ClipPosition>> cases{{GatherVariant::ContentAware, ClipPosition::Relative},
                                                                   {GatherVariant::Centered, ClipPosition::Relative},
                                                                   {GatherVariant::Sparse, ClipPosition::Relative},
                                                                   {GatherVariant::ContentAware, ClipPosition::Absolute}};
  for (const auto& [variant, position] : cases) {
    Rng rng(derive_seed(seed, 2, 4 * static_cast<std::uint64_t>(variant) + static_cast<std::uint64_t>(position)));
    ParameterStore<double> s;
    Parameter<double>& f = s.add("features", random_tensor({20, 8}, rng));
    CptcnConfig cfg;
    cfg.gathering.variant = variant;
    cfg.gathering.window = 4;
    cfg.gathering.gamma = 1.0;
    cfg.position = position;
    Cptcn<double> layer(s, "cptcn", 8, cfg, rng);
    auto loss = [&](G& g) {
      AttentionInputs<double> in = layer.attention_inputs(g, g.param(f));
      return ops::add(project(g, in.key, 41), project(g, in.query, 42));
    };
    out.push_back(check("cptcn/" + to_string(variant) + "+" + to_string(position), loss, all_params(s)));
  }
  return out;
}

std::vector<GradcheckOutcome> drpe(std::uint64_t seed) {
  std::vector<GradcheckOutcome> out;
  for (const bool self : {true, false}) {
    Rng rng(derive_seed(seed, 3, self));
    ParameterStore<double> s;
    AttentionConfig cfg;
    cfg.d_model = 8;
    cfg.heads = 2;
    cfg.max_distance = 3;
    Parameter<double>& table = s.add("rel_table", random_tensor({6, 8}, rng));
    Parameter<double>& q = s.add("queries", random_tensor({self ? 7u : 5u, 8}, rng));
    Parameter<double>& k = s.add("keys", random_tensor({7, 8}, rng));
    MultiHeadAttention<double> attn(s, "attn", cfg, &table, rng);
    const AttentionMask mask = self ? AttentionMask::causal(7) : AttentionMask::key_padding(5, 7, 6);
    auto loss = [&](G& g) {
      V kv = g.param(k);
      V qv = self ? kv : g.param(q);
      return project(g, attn.forward(g, qv, kv, kv, &mask), 51);
    };
    std::vector<Parameter<double>*> ps = all_params(s);
    if (self) std::erase(ps, &q);
    out.push_back(check(self ? "drpe/self-causal" : "drpe/cross-padded", loss, ps));
  }
  return out;
}

std::vector<GradcheckOutcome> ctc(std::uint64_t seed) {
  std::vector<GradcheckOutcome> out;
  Rng rng(derive_seed(seed, 4));
  ParameterStore<double> s;
  Parameter<double>& x = s.add("logits", random_tensor({9, 4}, rng, -2.0, 2.0));
  for (const std::vector<int>& target : {std::vector<int>{1, 2, 2}, std::vector<int>{3}, std::vector<int>{1, 2, 3, 1}}) {
    auto loss = [&](G& g) { return ctc_loss(ops::log_softmax_rows(g.param(x)), std::span<const int>(target)); };
    out.push_back(check("ctc/target_len_" + std::to_string(target.size()), loss, {&x}));
  }
  return out;
}

std::vector<GradcheckOutcome> model(std::uint64_t seed) {
  ModelConfig mc;
  mc.input_dim = 6;
  mc.d_model = 16;
  mc.heads = 2;
  mc.encoder_layers = 1;
  mc.decoder_layers = 1;
  mc.dropout = 0.0;
  mc.gloss_vocab = 4;
  mc.word_vocab = 10;
  mc.cptcn.gathering.window = 4;
  mc.cptcn.gathering.gamma = 1.0;
  mc.max_distance = 8;
  Model<double> m(mc, derive_seed(seed, 5));
  Rng rng(derive_seed(seed, 6));
  const Tensor<double> features = random_tensor({20, 6}, rng);
  const std::vector<int> glosses{1, 3, 2, 4}, words{5, 3, 8, 4, 9};
  auto loss = [&](G& g) { return m.sample_loss(g, features, glosses, words, 1, words.size() + 1).total; };
  return {check("model/joint_loss", loss, all_params(m.params()))};
}

}  // namespace

std::vector<GradcheckOutcome> run_gradcheck_group(const std::string& group, std::uint64_t seed) {
  if (group == "primitives") return primitives(seed);
  if (group == "cptcn") return cptcn(seed);
  if (group == "drpe") return drpe(seed);
  if (group == "ctc") return ctc(seed);
  if (group == "model") return model(seed);
  throw std::invalid_argument("gradcheck: unknown group '" + group + "'");
}

std::vector<GradcheckOutcome> run_gradcheck_suite(std::uint64_t seed) {
  std::vector<GradcheckOutcome> out;
  for (const char* group : {"primitives", "cptcn", "drpe", "ctc", "model"}) {
    std::vector<GradcheckOutcome> part = run_gradcheck_group(group, seed);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

}  // namespace slt
