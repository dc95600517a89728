#include "slt/corpus.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "slt/model.hpp"
#include "slt/rng.hpp"

namespace slt {
namespace {

constexpr std::uint64_t kPrototypeStream = 0x70726f746fULL;
constexpr std::uint64_t kLexiconStream = 0x6c6578ULL;

bool known_rule(const std::string& r) { return r == "swap_pairs_length" || r == "identity"; }

// word id of each gloss, a seeded permutation of the gloss word block.
std::vector<int> lexicon(const CorpusConfig& c) {
  std::vector<int> perm(c.glosses);
  std::iota(perm.begin(), perm.end(), kFirstWord);
  Rng rng(derive_seed(c.seed, kLexiconStream));
  for (std::size_t i = perm.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(i) - 1));
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

Sample make_sample(const CorpusConfig& c, const std::vector<std::vector<double>>& prototypes, std::uint64_t seed) {
  Rng rng(seed);
  Sample s;
  const auto u = static_cast<std::size_t>(
      uniform_int(rng, static_cast<std::int64_t>(c.min_glosses), static_cast<std::int64_t>(c.max_glosses)));
  int prev = 0;
  for (std::size_t k = 0; k < u; ++k) {
    int g;
    do {
      g = static_cast<int>(uniform_int(rng, 1, static_cast<std::int64_t>(c.glosses)));
    } while (g == prev && c.glosses > 1);
    s.glosses.push_back(g);
    prev = g;
  }
  std::vector<std::size_t> lengths(u);
  std::size_t total = 0;
  for (auto& len : lengths) {
    len = static_cast<std::size_t>(
        uniform_int(rng, static_cast<std::int64_t>(c.min_frames), static_cast<std::int64_t>(c.max_frames)));
    total += len;
  }
  s.features = Tensor<float>(Shape{total, c.feature_dim});
  std::size_t row = 0;
  for (std::size_t k = 0; k < u; ++k) {
    s.boundaries.push_back(static_cast<int>(row));
    const auto& proto = prototypes[static_cast<std::size_t>(s.glosses[k] - 1)];
    for (std::size_t f = 0; f < lengths[k]; ++f, ++row)
      for (std::size_t j = 0; j < c.feature_dim; ++j)
        s.features(row, j) = static_cast<float>(proto[j] + c.noise * normal(rng));
  }
  s.boundaries.push_back(static_cast<int>(total));
  s.words = glosses_to_words(s.glosses, c);
  return s;
}

}  // namespace

std::size_t CorpusConfig::word_vocab() const {
  return static_cast<std::size_t>(kFirstWord) + glosses + (max_glosses - min_glosses + 1);
}

void CorpusConfig::validate(std::size_t min_video_frames) const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("corpus config: " + m); };
  if (glosses < 2) fail("need at least 2 glosses");
  if (min_glosses == 0 || min_glosses > max_glosses) fail("gloss count range is empty");
  if (min_frames == 0 || min_frames > max_frames) fail("frame count range is empty");
  if (feature_dim == 0) fail("feature_dim must be positive");
  if (noise < 0.0) fail("noise must be non-negative");
  if (!known_rule(reorder)) fail("unknown reorder rule '" + reorder + "'");
  if (min_glosses * min_frames < min_video_frames) {
    fail("shortest video has " + std::to_string(min_glosses * min_frames) + " frames, model needs " +
         std::to_string(min_video_frames));
  }
}

std::vector<int> glosses_to_words(const std::vector<int>& glosses, const CorpusConfig& config) {
  const std::vector<int> lex = lexicon(config);
  std::vector<int> words;
  for (int g : glosses) words.push_back(lex.at(static_cast<std::size_t>(g - 1)));
  if (config.reorder == "swap_pairs_length") {
    for (std::size_t i = 0; i + 1 < words.size(); i += 2) std::swap(words[i], words[i + 1]);
    words.push_back(static_cast<int>(kFirstWord + config.glosses + (glosses.size() - config.min_glosses)));
  }
  return words;
}

std::vector<int> words_to_glosses(const std::vector<int>& words, const CorpusConfig& config) {
  const std::vector<int> lex = lexicon(config);
  std::vector<int> body = words;
  if (config.reorder == "swap_pairs_length") {
    if (body.empty()) throw std::invalid_argument("words_to_glosses: missing length word");
    const int len_word = body.back();
    body.pop_back();
    const int expect = static_cast<int>(kFirstWord + config.glosses + (body.size() - config.min_glosses));
    if (body.size() < config.min_glosses || len_word != expect) {
      throw std::invalid_argument("words_to_glosses: length word does not match sentence");
    }
    for (std::size_t i = 0; i + 1 < body.size(); i += 2) std::swap(body[i], body[i + 1]);
  }
  std::vector<int> glosses;
  for (int w : body) {
    const auto it = std::find(lex.begin(), lex.end(), w);
    if (it == lex.end()) throw std::invalid_argument("words_to_glosses: word " + std::to_string(w) + " is not a gloss word");
    glosses.push_back(static_cast<int>(it - lex.begin()) + 1);
  }
  return glosses;
}

Corpus generate_corpus(const CorpusConfig& config) {
  config.validate(0);
  Rng proto_rng(derive_seed(config.seed, kPrototypeStream));
  std::vector<std::vector<double>> prototypes(config.glosses, std::vector<double>(config.feature_dim));
  for (auto& p : prototypes)
    for (auto& v : p) v = normal(proto_rng);

  Corpus corpus;
  auto fill = [&](std::vector<Sample>& split, std::size_t count, std::uint64_t split_id) {
    split.reserve(count);
    for (std::size_t i = 0; i < count; ++i) split.push_back(make_sample(config, prototypes, derive_seed(config.seed, split_id, i)));
  };
  fill(corpus.train, config.train_size, 1);
  fill(corpus.dev, config.dev_size, 2);
  fill(corpus.test, config.test_size, 3);
  return corpus;
}

}  // namespace slt
