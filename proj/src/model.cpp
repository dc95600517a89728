#include "slt/model.hpp"

#include <cmath>
#include <numeric>

#include "slt/ctc.hpp"
#include "slt/ops.hpp"
#include "slt/positional.hpp"

namespace slt {

DrpeSites DrpeSites::parse(std::string_view spec) {
  if (spec == "all") return DrpeSites{};
  DrpeSites s{false, false, false};
  if (spec == "none" || spec.empty()) return s;
  std::size_t pos = 0;
  while (pos <= spec.size()) {
    const std::size_t end = std::min(spec.find(',', pos), spec.size());
    const std::string_view tok = spec.substr(pos, end - pos);
    if (tok == "enc") s.encoder = true;
    else if (tok == "dec") s.decoder = true;
    else if (tok == "cross") s.cross = true;
    else throw std::invalid_argument("unknown DRPE site '" + std::string(tok) + "' (expected enc, dec, cross)");
    pos = end + 1;
  }
  return s;
}

std::string DrpeSites::str() const {
  std::string s;
  auto put = [&](bool on, const char* name) {
    if (!on) return;
    if (!s.empty()) s += ",";
    s += name;
  };
  put(encoder, "enc");
  put(decoder, "dec");
  put(cross, "cross");
  return s.empty() ? "none" : s;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("model config: " + m); };
  if (input_dim == 0) fail("input_dim must be positive");
  if (d_model == 0 || heads == 0 || d_model % heads != 0) fail("d_model must be a positive multiple of heads");
  if (encoder_layers == 0 || decoder_layers == 0) fail("at least one encoder and one decoder layer required");
  if (dropout < 0.0 || dropout >= 1.0) fail("dropout must be in [0, 1)");
  if (gloss_vocab == 0) fail("gloss vocabulary is empty");
  if (word_vocab <= static_cast<std::size_t>(kFirstWord)) fail("word vocabulary has no words beyond pad/bos/eos");
  if (lambda_recognition < 0.0 || lambda_translation < 0.0 || lambda_recognition + lambda_translation <= 0.0) {
    fail("loss weights need lambda_r >= 0, lambda_t >= 0 and lambda_r + lambda_t > 0");
  }
  if (!terms.c2c) fail("attention.terms must include c2c");
  if (max_distance < 1) fail("attention.L must be >= 1");
  if (cptcn.gathering.window < 1) fail("gathering.l must be >= 1");
  if (cptcn.gathering.gamma <= 0.0) fail("gathering.gamma must be positive");
  if (cptcn.gathering.variant != GatherVariant::None &&
      static_cast<std::size_t>(cptcn.gathering.clip_length()) < kMinClipLength) {
    fail("clip length l_r + 1 = " + std::to_string(cptcn.gathering.clip_length()) + " is below " +
         std::to_string(kMinClipLength));
  }
}

template <typename T>
typename Model<T>::Norm Model<T>::make_norm(const std::string& name) {
  const std::size_t d = config_.d_model;
  return {&params_.add(name + ".gain", Tensor<T>(Shape{d}, T(1))), &params_.add(name + ".bias", Tensor<T>(Shape{d}))};
}

template <typename T>
typename Model<T>::FeedForward Model<T>::make_ff(const std::string& name, Rng& rng) {
  const std::size_t d = config_.d_model, f = config_.feed_forward_dim();
  FeedForward ff;
  ff.w1 = &params_.add(name + ".w1", xavier_uniform<T>(d, f, rng));
  ff.b1 = &params_.add(name + ".b1", Tensor<T>(Shape{f}));
  ff.w2 = &params_.add(name + ".w2", xavier_uniform<T>(f, d, rng));
  ff.b2 = &params_.add(name + ".b2", Tensor<T>(Shape{d}));
  return ff;
}

template <typename T>
Model<T>::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(derive_seed(seed, 0x6d6f64656cULL));
  const std::size_t d = config_.d_model;
  const std::size_t table_rows = static_cast<std::size_t>(2 * config_.max_distance);
  auto rel_table = [&](const std::string& name) {
    Tensor<T> t(Shape{table_rows, d});
    for (auto& v : t.values()) v = static_cast<T>(normal(rng));
    return &params_.add(name, std::move(t));
  };

  input_w_ = &params_.add("encoder.input.w", xavier_uniform<T>(config_.input_dim, d, rng));
  input_b_ = &params_.add("encoder.input.b", Tensor<T>(Shape{d}));
  if (config_.drpe_sites.encoder) enc_table_ = rel_table("encoder.rel_table");
  if (config_.drpe_sites.decoder) dec_table_ = rel_table("decoder.rel_table");
  if (config_.drpe_sites.cross) cross_table_ = rel_table("cross.rel_table");

  auto attn_config = [&](bool relative) {
    AttentionConfig a;
    a.d_model = d;
    a.heads = config_.heads;
    a.relative = relative;
    a.terms = config_.terms;
    a.max_distance = config_.max_distance;
    a.dropout = config_.dropout;
    return a;
  };

  for (std::size_t l = 0; l < config_.encoder_layers; ++l) {
    const std::string p = "encoder.layer" + std::to_string(l);
    EncoderLayer layer;
    layer.attn_norm = make_norm(p + ".attn_norm");
    if (config_.cptcn.gathering.variant != GatherVariant::None && (config_.cptcn_all_layers || l == 0)) {
      layer.cptcn.emplace(params_, p + ".cptcn", d, config_.cptcn, rng);
    }
    layer.attn = std::make_unique<MultiHeadAttention<T>>(params_, p + ".attn", attn_config(config_.drpe_sites.encoder),
                                                          enc_table_, rng);
    layer.ff_norm = make_norm(p + ".ff_norm");
    layer.ff = make_ff(p + ".ff", rng);
    enc_layers_.push_back(std::move(layer));
  }
  enc_final_ = make_norm("encoder.final_norm");
  gloss_w_ = &params_.add("encoder.gloss.w", xavier_uniform<T>(d, config_.gloss_vocab + 1, rng));
  gloss_b_ = &params_.add("encoder.gloss.b", Tensor<T>(Shape{config_.gloss_vocab + 1}));

  {
    Tensor<T> e(Shape{config_.word_vocab, d});
    for (auto& v : e.values()) v = static_cast<T>(normal(rng));
    embed_ = &params_.add("decoder.embedding", std::move(e));
  }
  for (std::size_t l = 0; l < config_.decoder_layers; ++l) {
    const std::string p = "decoder.layer" + std::to_string(l);
    DecoderLayer layer;
    layer.self_norm = make_norm(p + ".self_norm");
    layer.self_attn = std::make_unique<MultiHeadAttention<T>>(params_, p + ".self_attn",
                                                               attn_config(config_.drpe_sites.decoder), dec_table_, rng);
    layer.cross_norm = make_norm(p + ".cross_norm");
    layer.cross_attn = std::make_unique<MultiHeadAttention<T>>(params_, p + ".cross_attn",
                                                                attn_config(config_.drpe_sites.cross), cross_table_, rng);
    layer.ff_norm = make_norm(p + ".ff_norm");
    layer.ff = make_ff(p + ".ff", rng);
    dec_layers_.push_back(std::move(layer));
  }
  dec_final_ = make_norm("decoder.final_norm");
  word_w_ = &params_.add("decoder.output.w", xavier_uniform<T>(d, config_.word_vocab, rng));
  word_b_ = &params_.add("decoder.output.b", Tensor<T>(Shape{config_.word_vocab}));
}

template <typename T>
Var<T> Model<T>::norm(Graph<T>& g, const Norm& n, Var<T> x) const {
  return ops::layer_norm(x, g.param(*n.gain), g.param(*n.bias));
}

template <typename T>
Var<T> Model<T>::drop(Var<T> x, Rng* dropout_rng) const {
  if (!dropout_rng || config_.dropout <= 0.0) return x;
  return ops::dropout(x, static_cast<T>(config_.dropout), *dropout_rng);
}

template <typename T>
Var<T> Model<T>::feed_forward(Graph<T>& g, const FeedForward& f, Var<T> x, Rng* dropout_rng) const {
  Var<T> h = ops::relu(ops::add_row(ops::matmul(x, g.param(*f.w1)), g.param(*f.b1)));
  h = drop(h, dropout_rng);
  return ops::add_row(ops::matmul(h, g.param(*f.w2)), g.param(*f.b2));
}

template <typename T>
Encoded<T> Model<T>::encode(Graph<T>& g, const Tensor<T>& features, std::size_t valid_length,
                            Rng* dropout_rng) const {
  if (features.rank() != 2 || features.cols() != config_.input_dim) {
    throw ShapeError("encode: expected (M, " + std::to_string(config_.input_dim) + ") features, got " +
                     shape_str(features.shape()));
  }
  const std::size_t m = features.rows();
  const std::size_t valid = valid_length == 0 ? m : valid_length;
  if (valid > m) throw ShapeError("encode: valid length " + std::to_string(valid) + " exceeds " + std::to_string(m));
  if (config_.cptcn.gathering.variant != GatherVariant::None &&
      valid < static_cast<std::size_t>(config_.cptcn.gathering.clip_length())) {
    throw GatherError("sequence shorter than clip: " + std::to_string(valid) + " frames < l_r + 1 = " +
                      std::to_string(config_.cptcn.gathering.clip_length()));
  }

  Var<T> x = ops::add_row(ops::matmul(g.constant(features), g.param(*input_w_)), g.param(*input_b_));
  if (!config_.drpe_sites.encoder) x = ops::add(x, g.constant(sinusoidal_encoding<T>(m, config_.d_model)));
  x = drop(x, dropout_rng);

  const bool padded = valid < m;
  const AttentionMask mask = AttentionMask::key_padding(m, m, valid);
  std::vector<int> valid_rows(valid), padded_rows(m, 0);
  std::iota(valid_rows.begin(), valid_rows.end(), 0);
  std::iota(padded_rows.begin(), padded_rows.begin() + static_cast<std::ptrdiff_t>(valid), 0);

  for (const EncoderLayer& layer : enc_layers_) {
    Var<T> h = norm(g, layer.attn_norm, x);
    AttentionInputs<T> in{h, h, h};
    if (layer.cptcn) {
      if (padded) {
        // Gather only over real frames. Padded key rows are filler; the mask
        // removes them from every softmax.
        Var<T> real = ops::gather_rows(h, std::span<const int>(valid_rows));
        AttentionInputs<T> agg = layer.cptcn->attention_inputs(g, real);
        in.key = ops::gather_rows(agg.key, std::span<const int>(padded_rows));
        in.value = in.key;
        if (layer.cptcn->config().qkv == QkvSource::AllAggregated) in.query = in.key;
      } else {
        in = layer.cptcn->attention_inputs(g, h);
      }
    }
    Var<T> a = layer.attn->forward(g, in.query, in.key, in.value, padded ? &mask : nullptr, dropout_rng);
    x = ops::add(x, drop(a, dropout_rng));
    x = ops::add(x, drop(feed_forward(g, layer.ff, norm(g, layer.ff_norm, x), dropout_rng), dropout_rng));
  }
  x = norm(g, enc_final_, x);
  Var<T> real = padded ? ops::gather_rows(x, std::span<const int>(valid_rows)) : x;
  Var<T> logits = ops::add_row(ops::matmul(real, g.param(*gloss_w_)), g.param(*gloss_b_));
  return {x, ops::log_softmax_rows(logits), valid};
}

template <typename T>
Var<T> Model<T>::decode(Graph<T>& g, std::span<const int> inputs, const Encoded<T>& encoded, Rng* dropout_rng) const {
  if (inputs.empty()) throw std::invalid_argument("decode: empty target sequence");
  if (inputs[0] != kBos) throw std::invalid_argument("decode: target sequence must start with bos");
  const std::size_t n = inputs.size(), m = encoded.states.value().rows();
  Var<T> y = ops::gather_rows(g.param(*embed_), inputs);
  if (!config_.drpe_sites.decoder) y = ops::add(y, g.constant(sinusoidal_encoding<T>(n, config_.d_model)));
  y = drop(y, dropout_rng);

  const AttentionMask causal = AttentionMask::causal(n);
  const AttentionMask padding = AttentionMask::key_padding(n, m, encoded.valid_length);
  const bool padded = encoded.valid_length < m;
  for (const DecoderLayer& layer : dec_layers_) {
    Var<T> h = norm(g, layer.self_norm, y);
    y = ops::add(y, drop(layer.self_attn->forward(g, h, h, h, &causal, dropout_rng), dropout_rng));
    h = norm(g, layer.cross_norm, y);
    y = ops::add(y, drop(layer.cross_attn->forward(g, h, encoded.states, encoded.states, padded ? &padding : nullptr,
                                                   dropout_rng),
                         dropout_rng));
    y = ops::add(y, drop(feed_forward(g, layer.ff, norm(g, layer.ff_norm, y), dropout_rng), dropout_rng));
  }
  y = norm(g, dec_final_, y);
  return ops::log_softmax_rows(ops::add_row(ops::matmul(y, g.param(*word_w_)), g.param(*word_b_)));
}

template <typename T>
SampleLoss<T> Model<T>::sample_loss(Graph<T>& g, const Tensor<T>& features, std::span<const int> glosses,
                                    std::span<const int> words, std::size_t batch_size, std::size_t batch_tokens,
                                    Rng* dropout_rng) const {
  SampleLoss<T> out;
  Encoded<T> enc = encode(g, features, 0, dropout_rng);
  std::vector<Var<T>> terms;
  if (config_.lambda_recognition > 0.0) {
    Var<T> ctc = ctc_loss(enc.gloss_log_probs, glosses);
    out.ctc = static_cast<double>(ctc.value().item());
    out.ctc_feasible = std::isfinite(out.ctc);
    terms.push_back(ops::scale(ctc, static_cast<T>(config_.lambda_recognition / static_cast<double>(batch_size))));
  }
  if (config_.lambda_translation > 0.0) {
    std::vector<int> inputs{kBos}, targets(words.begin(), words.end());
    inputs.insert(inputs.end(), words.begin(), words.end());
    targets.push_back(kEos);
    Var<T> logp = decode(g, inputs, enc, dropout_rng);
    Var<T> nll = ops::nll_loss(logp, std::span<const int>(targets), kPad);
    out.nll = static_cast<double>(nll.value().item());
    out.tokens = targets.size();
    terms.push_back(ops::scale(nll, static_cast<T>(config_.lambda_translation / static_cast<double>(batch_tokens))));
  }
  out.total = terms.size() == 1 ? terms[0] : ops::add(terms[0], terms[1]);
  return out;
}

template class Model<float>;
template class Model<double>;

}  // namespace slt
