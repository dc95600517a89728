#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "slt/metrics.hpp"
#include "slt/translate.hpp"
#include "support.hpp"

using namespace slt;
using namespace slt::testing;

namespace {

using Seq = std::vector<int>;

Seq random_seq(Rng& rng, std::size_t min_len, std::size_t max_len, int vocab) {
  Seq s(random_size(rng, min_len, max_len));
  for (int& v : s) v = static_cast<int>(random_size(rng, 1, static_cast<std::size_t>(vocab)));
  return s;
}

// Plain Levenshtein distance.
std::size_t edit_distance(const Seq& a, const Seq& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

ModelConfig tiny_model(std::size_t words) {
  ModelConfig m;
  m.input_dim = 4;
  m.d_model = 8;
  m.heads = 2;
  m.encoder_layers = 1;
  m.decoder_layers = 1;
  m.dropout = 0.0;
  m.gloss_vocab = 3;
  m.word_vocab = words;
  m.cptcn.gathering.window = 4;
  m.max_distance = 4;
  return m;
}

double sequence_log_prob(const Model<double>& model, Graph<double>& g, const Encoded<double>& enc, const Seq& tokens) {
  Seq in{kBos};
  in.insert(in.end(), tokens.begin(), tokens.end() - 1);
  const Tensor<double> lp = model.decode(g, in, enc).value();
  double s = 0.0;
  for (std::size_t i = 0; i < tokens.size(); ++i) s += lp(i, static_cast<std::size_t>(tokens[i]));
  return s;
}

}  // namespace

TEST_CASE("error counts on small examples") {
  const Seq ref{1, 2, 3, 4};
  CHECK(wer(ref, ref) == 0.0);
  const ErrorCounts del = align_errors(ref, Seq{1, 3, 4});
  CHECK(del.deletions == 1);
  CHECK(del.errors() == 1);
  const ErrorCounts ins = align_errors(ref, Seq{1, 2, 9, 3, 4});
  CHECK(ins.insertions == 1);
  CHECK(ins.errors() == 1);
  const ErrorCounts sub = align_errors(ref, Seq{1, 2, 5, 4});
  CHECK(sub.substitutions == 1);
  CHECK(wer(ref, Seq{}) == 1.0);
  CHECK(wer(Seq{1}, Seq{2, 3, 4}) == 3.0);
  CHECK_THROWS(align_errors(Seq{}, Seq{1}));
}

TEST_CASE("error counts agree with an independent edit distance") {
  for_all(300, 41, [](Rng& rng, std::size_t) {
    const Seq a = random_seq(rng, 1, 8, 4), b = random_seq(rng, 0, 8, 4);
    const ErrorCounts e = align_errors(a, b);
    CHECK(e.errors() == edit_distance(a, b));
    CHECK(e.reference_length == a.size());
    CHECK(a.size() - e.deletions - e.substitutions + e.insertions + e.substitutions == b.size());
  });
}

TEST_CASE("edit cost is symmetric") {
  for_all(300, 42, [](Rng& rng, std::size_t) {
    const Seq a = random_seq(rng, 1, 8, 4), b = random_seq(rng, 1, 8, 4);
    CHECK(wer(a, b) * static_cast<double>(a.size()) ==
          doctest::Approx(wer(b, a) * static_cast<double>(b.size())).epsilon(1e-12));
  });
}

TEST_CASE("corpus error totals pool counts") {
  const std::vector<Seq> refs{{1, 2, 3}, {4, 5}};
  const std::vector<Seq> hyps{{1, 3}, {4, 5, 6}};
  const ErrorCounts e = corpus_errors(refs, hyps);
  CHECK(e.reference_length == 5);
  CHECK(e.deletions == 1);
  CHECK(e.insertions == 1);
  CHECK(e.wer() == doctest::Approx(0.4));
  CHECK(e.deletion_rate() == doctest::Approx(0.2));
}

TEST_CASE("BLEU identities") {
  const std::vector<Seq> refs{{1, 2, 3, 4, 5}};
  CHECK(corpus_bleu(refs, refs).bleu[3] == doctest::Approx(1.0));
  const std::vector<Seq> scrambled{{2, 1, 4, 3, 5}};
  CHECK(corpus_bleu(refs, scrambled).bleu[3] == 0.0);
  const std::vector<Seq> short_ref{{1, 2}}, repeated{{1, 1, 1, 1}};
  CHECK(corpus_bleu(short_ref, repeated).precision[0] == doctest::Approx(0.25));
}

TEST_CASE("BLEU matches hand-counted precisions on a two-sentence corpus") {
  const std::vector<Seq> refs{{1, 2, 3, 4, 5}, {7, 8, 9}};
  const std::vector<Seq> hyps{{1, 2, 3, 6, 5}, {7, 8}};
  const BleuScores b = corpus_bleu(refs, hyps);
  // unigrams 4/5 + 2/2, bigrams 2/4 + 1/1, trigrams 1/3 + 0/0, 4-grams 0/2.
  CHECK(b.precision[0] == doctest::Approx(6.0 / 7.0).epsilon(1e-12));
  CHECK(b.precision[1] == doctest::Approx(3.0 / 5.0).epsilon(1e-12));
  CHECK(b.precision[2] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(b.precision[3] == 0.0);
  const double bp = std::exp(1.0 - 8.0 / 7.0);
  CHECK(b.brevity_penalty == doctest::Approx(bp).epsilon(1e-12));
  CHECK(b.bleu[0] == doctest::Approx(bp * 6.0 / 7.0).epsilon(1e-12));
  CHECK(b.bleu[1] == doctest::Approx(bp * std::sqrt(6.0 / 7.0 * 3.0 / 5.0)).epsilon(1e-12));
  CHECK(b.bleu[2] == doctest::Approx(bp * std::cbrt(6.0 / 7.0 * 3.0 / 5.0 / 3.0)).epsilon(1e-12));
  CHECK(b.bleu[3] == 0.0);
  CHECK(b.hypothesis_length == 7);
  CHECK(b.reference_length == 8);
}

TEST_CASE("BLEU is invariant under a consistent vocabulary permutation") {
  for_all(100, 43, [](Rng& rng, std::size_t) {
    std::vector<int> perm(7);
    std::iota(perm.begin(), perm.end(), 1);
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[random_size(rng, 0, i - 1)]);
    std::vector<Seq> refs, hyps, prefs, phyps;
    for (int k = 0; k < 4; ++k) {
      refs.push_back(random_seq(rng, 1, 9, 7));
      hyps.push_back(random_seq(rng, 1, 9, 7));
    }
    auto map = [&](const Seq& s) {
      Seq out;
      for (int v : s) out.push_back(perm[static_cast<std::size_t>(v - 1)]);
      return out;
    };
    for (const Seq& s : refs) prefs.push_back(map(s));
    for (const Seq& s : hyps) phyps.push_back(map(s));
    const BleuScores a = corpus_bleu(refs, hyps), b = corpus_bleu(prefs, phyps);
    CHECK(a.bleu == b.bleu);
    CHECK(a.precision == b.precision);
  });
}

TEST_CASE("smoothed sentence BLEU stays positive without 4-gram overlap") {
  const Seq ref{1, 2, 3, 4, 5}, hyp{1, 2, 4, 3, 5};
  const std::vector<Seq> r{ref}, h{hyp};
  CHECK(corpus_bleu(r, h).bleu[3] == 0.0);
  CHECK(smoothed_sentence_bleu(ref, hyp) > 0.0);
  CHECK(smoothed_sentence_bleu(ref, ref) == doctest::Approx(1.0));
}

TEST_CASE("length penalty") {
  CHECK(length_penalty(1, 1.0) == doctest::Approx(1.0));
  CHECK(length_penalty(7, 1.0) == doctest::Approx(2.0));
  CHECK(length_penalty(7, 0.0) == 1.0);
  CHECK(length_penalty(13, 0.5) == doctest::Approx(std::sqrt(3.0)));
}

TEST_CASE("beam width 1 is greedy decoding") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Model<double> model(tiny_model(8), seed);
    Rng rng(50 + seed);
    Graph<double> g(false);
    Encoded<double> enc = model.encode(g, random_tensor({7, 4}, rng));
    BeamOptions o;
    o.beam_width = 1;
    o.max_len = 6;
    const std::vector<Hypothesis> beam = beam_translate(model, g, enc, o);
    const Hypothesis greedy = greedy_translate(model, g, enc, 6);
    REQUIRE(beam.size() == 1);
    CHECK(beam[0].tokens == greedy.tokens);
    CHECK(beam[0].log_prob == greedy.log_prob);
  }
}

TEST_CASE("returned hypotheses are ranked by penalized score") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Model<double> model(tiny_model(8), seed);
    Rng rng(60 + seed);
    Graph<double> g(false);
    Encoded<double> enc = model.encode(g, random_tensor({7, 4}, rng));
    BeamOptions o;
    o.max_len = 6;
    o.alpha = 0.6;
    const std::vector<Hypothesis> hyps = beam_translate(model, g, enc, o);
    for (std::size_t i = 0; i < hyps.size(); ++i) {
      const Hypothesis& h = hyps[i];
      CHECK(h.score == doctest::Approx(h.log_prob / length_penalty(h.tokens.size(), 0.6)));
      CHECK(sequence_log_prob(model, g, enc, h.tokens) == doctest::Approx(h.log_prob).epsilon(1e-12));
      for (int t : h.tokens) {
        CHECK(t != kPad);
        CHECK(t != kBos);
      }
      if (i > 0) CHECK(hyps[i - 1].score >= h.score);
    }
  }
}

TEST_CASE("an unpruned beam finds the exhaustive best and no narrower beam beats it") {
  // Vocabulary {pad, bos, eos, 3, 4, 5}: four expansions per step, so width 64
  // never prunes within three steps.
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    Model<double> model(tiny_model(6), seed);
    Rng rng(70 + seed);
    Graph<double> g(false);
    Encoded<double> enc = model.encode(g, random_tensor({6, 4}, rng));
    double oracle = -INFINITY;
    const std::vector<int> body{3, 4, 5};
    std::vector<Seq> candidates{{kEos}};
    for (int a : body) {
      candidates.push_back({a, kEos});
      for (int b : body) {
        candidates.push_back({a, b, kEos});
      }
    }
    for (const Seq& c : candidates)
      oracle = std::max(oracle, sequence_log_prob(model, g, enc, c) / length_penalty(c.size(), 1.0));
    BeamOptions o;
    o.max_len = 3;
    o.beam_width = 64;
    const double full = beam_translate(model, g, enc, o).front().score;
    CHECK(full == doctest::Approx(oracle).epsilon(1e-12));
    for (std::size_t w = 1; w < 64; w *= 2) {
      o.beam_width = w;
      const std::vector<Hypothesis> narrow = beam_translate(model, g, enc, o);
      if (narrow.front().finished) CHECK(narrow.front().score <= full + 1e-12);
    }
  }
}

TEST_CASE("beam options are validated") {
  Model<double> model(tiny_model(6), 1);
  Rng rng(80);
  Graph<double> g(false);
  Encoded<double> enc = model.encode(g, random_tensor({6, 4}, rng));
  BeamOptions o;
  o.beam_width = 0;
  CHECK_THROWS_AS(beam_translate(model, g, enc, o), std::invalid_argument);
  o.beam_width = 2;
  o.alpha = 3.0;
  CHECK_THROWS_AS(beam_translate(model, g, enc, o), std::invalid_argument);
}
