#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "slt/binary_io.hpp"
#include "slt/checkpoint.hpp"
#include "slt/corpus.hpp"
#include "slt/dataset_io.hpp"
#include "slt/experiment.hpp"
#include "support.hpp"

using namespace slt;
using namespace slt::testing;
namespace fs = std::filesystem;

namespace {

CorpusConfig small_corpus(std::uint64_t seed = 0) {
  CorpusConfig c;
  c.seed = seed;
  c.train_size = 20;
  c.dev_size = 5;
  c.test_size = 5;
  c.feature_dim = 8;
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("slt_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ModelCheckpoint random_checkpoint(Rng& rng, std::uint64_t digest) {
  ModelCheckpoint c;
  c.config_digest = digest;
  c.config_json = "{}";
  c.step = 10;
  c.dtype_bytes = 8;
  c.params.push_back({"a", random_tensor({2, 3}, rng)});
  c.params.push_back({"b", random_tensor({4}, rng)});
  return c;
}

}  // namespace

TEST_CASE("the engine is the standard mt19937_64") {
  Rng rng;
  rng.discard(9999);
  CHECK(rng() == 9981545732273789042ULL);
}

TEST_CASE("generation is deterministic and seed-sensitive") {
  CHECK(generate_corpus(small_corpus()).train == generate_corpus(small_corpus()).train);
  CHECK(generate_corpus(small_corpus()).dev == generate_corpus(small_corpus()).dev);
  CHECK_FALSE(generate_corpus(small_corpus(1)).train == generate_corpus(small_corpus()).train);
}

TEST_CASE("generated samples respect the configured ranges") {
  const CorpusConfig c = small_corpus();
  const Corpus corpus = generate_corpus(c);
  CHECK(corpus.train.size() == 20);
  for (const Sample& s : corpus.train) {
    const std::size_t u = s.glosses.size(), m = s.features.rows();
    CHECK(u >= c.min_glosses);
    CHECK(u <= c.max_glosses);
    CHECK(m >= u * c.min_frames);
    CHECK(m <= u * c.max_frames);
    CHECK(m >= 17);
    CHECK(s.features.cols() == c.feature_dim);
    REQUIRE(s.boundaries.size() == u + 1);
    CHECK(s.boundaries.front() == 0);
    CHECK(static_cast<std::size_t>(s.boundaries.back()) == m);
    for (std::size_t k = 0; k < u; ++k) {
      CHECK(s.boundaries[k + 1] - s.boundaries[k] >= static_cast<int>(c.min_frames));
      CHECK(s.glosses[k] >= 1);
      CHECK(s.glosses[k] <= static_cast<int>(c.glosses));
      if (k > 0) CHECK(s.glosses[k] != s.glosses[k - 1]);
    }
    for (int w : s.words) {
      CHECK(w >= kFirstWord);
      CHECK(w < static_cast<int>(c.word_vocab()));
    }
  }
}

TEST_CASE("without noise every segment is its gloss prototype") {
  CorpusConfig c = small_corpus();
  c.noise = 0.0;
  const Corpus corpus = generate_corpus(c);
  std::vector<std::vector<float>> proto(c.glosses + 1);
  for (const Sample& s : corpus.train)
    for (std::size_t k = 0; k < s.glosses.size(); ++k)
      for (int f = s.boundaries[k]; f < s.boundaries[k + 1]; ++f) {
        const auto row = s.features.row(static_cast<std::size_t>(f));
        std::vector<float>& p = proto[static_cast<std::size_t>(s.glosses[k])];
        if (p.empty()) p.assign(row.begin(), row.end());
        CHECK(std::equal(p.begin(), p.end(), row.begin()));
      }
}

TEST_CASE("config validation") {
  CorpusConfig c = small_corpus();
  CHECK_NOTHROW(c.validate(17));
  c.min_frames = 3;
  c.min_glosses = 4;
  CHECK_THROWS_WITH_AS(c.validate(17), doctest::Contains("shortest video has 12 frames"), std::invalid_argument);
  c = small_corpus();
  c.reorder = "shuffle";
  CHECK_THROWS_AS(c.validate(0), std::invalid_argument);
  c = small_corpus();
  c.min_glosses = 9;
  CHECK_THROWS_AS(c.validate(0), std::invalid_argument);
}

TEST_CASE("the gloss to word rewrite is a bijection") {
  for (const char* rule : {"swap_pairs_length", "identity"}) {
    CorpusConfig c = small_corpus();
    c.reorder = rule;
    for_all(200, 91, [&](Rng& rng, std::size_t) {
      std::vector<int> g(random_size(rng, c.min_glosses, c.max_glosses));
      for (int& v : g) v = static_cast<int>(random_size(rng, 1, c.glosses));
      const std::vector<int> w = glosses_to_words(g, c);
      CHECK(words_to_glosses(w, c) == g);
    });
  }
  CorpusConfig c = small_corpus();
  const std::vector<int> g{1, 2, 3, 4, 5};
  const std::vector<int> w = glosses_to_words(g, c);
  CHECK(w.size() == 6);
  std::vector<int> bad = w;
  bad.back() = kFirstWord;
  CHECK_THROWS_AS(words_to_glosses(bad, c), std::invalid_argument);
  CHECK_THROWS_AS(words_to_glosses(std::vector<int>{}, c), std::invalid_argument);
}

TEST_CASE("the rewrite is not monotonic") {
  const CorpusConfig c = small_corpus();
  const std::vector<int> g{1, 2, 3, 4};
  const std::vector<int> w = glosses_to_words(g, c);
  CHECK(w[0] == glosses_to_words(std::vector<int>{2, 1, 3, 4}, c)[1]);
}

TEST_CASE("dataset files round-trip bit-exactly") {
  RunConfig rc;
  rc.corpus = small_corpus();
  const Corpus corpus = generate_corpus(rc.corpus);
  const DatasetFile file = make_dataset_file(rc, corpus.train);
  const DatasetFile back = decode_dataset(encode_dataset(file));
  CHECK(back.samples == file.samples);
  CHECK(back.rng_name == std::string(kRngName));
  CHECK(back.config_digest == file.config_digest);
  CHECK(back.config_json == file.config_json);
  CHECK(encode_dataset(back) == encode_dataset(file));

  const DatasetFile empty = make_dataset_file(rc, {});
  CHECK(decode_dataset(encode_dataset(empty)).samples.empty());
}

TEST_CASE("truncated dataset files name the failing byte offset") {
  RunConfig rc;
  rc.corpus = small_corpus();
  rc.corpus.train_size = 2;
  const std::string bytes = encode_dataset(make_dataset_file(rc, generate_corpus(rc.corpus).train));
  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{40}, bytes.size() / 2, bytes.size() - 1}) {
    INFO("cut at " << cut);
    CHECK_THROWS_WITH_AS(decode_dataset(bytes.substr(0, cut), "train.sltd"),
                         doctest::Contains("train.sltd"), FormatError);
    CHECK_THROWS_WITH_AS(decode_dataset(bytes.substr(0, cut)), doctest::Contains("byte offset"), FormatError);
  }
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x40;
  CHECK_THROWS_WITH_AS(decode_dataset(flipped), doctest::Contains("checksum"), FormatError);
  std::string magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_WITH_AS(decode_dataset(magic), doctest::Contains("byte offset 0"), FormatError);
  CHECK_THROWS_AS(decode_dataset(bytes + "x"), FormatError);
  CHECK_THROWS_AS(load_dataset("/nonexistent/slt/train.sltd"), IoError);
}

TEST_CASE("corpus directories round-trip") {
  RunConfig rc;
  rc.corpus = small_corpus();
  const Corpus corpus = generate_corpus(rc.corpus);
  const fs::path dir = scratch("corpus");
  write_corpus(rc, corpus, dir);
  const auto [back, json] = read_corpus(dir);
  CHECK(back.train == corpus.train);
  CHECK(back.dev == corpus.dev);
  CHECK(back.test == corpus.test);
  CHECK(json == corpus_json(rc));
  const std::string first = read_file((dir / "train.sltd").string());
  write_corpus(rc, generate_corpus(rc.corpus), dir);
  CHECK(read_file((dir / "train.sltd").string()) == first);
  fs::remove_all(dir);
}

TEST_CASE("checkpoint files round-trip and reject damage") {
  Rng rng(5);
  ModelCheckpoint c = random_checkpoint(rng, 42);
  c.optimizer_steps = 7;
  c.adam_m = c.params;
  c.adam_v = c.params;
  const std::string bytes = encode_checkpoint(c);
  CHECK(decode_checkpoint(bytes) == c);
  CHECK_THROWS_WITH_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), doctest::Contains("byte offset"),
                       FormatError);
  std::string flipped = bytes;
  flipped[30] ^= 1;
  CHECK_THROWS_AS(decode_checkpoint(flipped), FormatError);

  c.dtype_bytes = 4;
  const ModelCheckpoint narrow = decode_checkpoint(encode_checkpoint(c));
  CHECK(narrow.params[0].value[0] == static_cast<double>(static_cast<float>(c.params[0].value[0])));
}

TEST_CASE("checkpoint averaging") {
  Rng rng(6);
  const ModelCheckpoint x = random_checkpoint(rng, 1);
  const std::vector<ModelCheckpoint> copies(5, x);
  CHECK(average_checkpoints(copies).params == x.params);
  CHECK(average_checkpoints(std::vector<ModelCheckpoint>{x}).params == x.params);

  ModelCheckpoint neg = x;
  for (NamedTensor& t : neg.params)
    for (double& v : t.value.values()) v = -v;
  for (const NamedTensor& t : average_checkpoints(std::vector<ModelCheckpoint>{x, neg, x, neg}).params)
    for (double v : t.value.values()) CHECK(v == 0.0);

  const ModelCheckpoint y = random_checkpoint(rng, 1);
  const ModelCheckpoint avg = average_checkpoints(std::vector<ModelCheckpoint>{x, y});
  for (std::size_t i = 0; i < x.params.size(); ++i)
    for (std::size_t k = 0; k < x.params[i].value.numel(); ++k)
      CHECK(avg.params[i].value[k] == doctest::Approx((x.params[i].value[k] + y.params[i].value[k]) / 2).epsilon(1e-15));
  CHECK(avg.adam_m.empty());

  const ModelCheckpoint other = random_checkpoint(rng, 2);
  CHECK_THROWS_WITH_AS(average_checkpoints(std::vector<ModelCheckpoint>{x, other}), doctest::Contains("digest"),
                       std::invalid_argument);
  ModelCheckpoint renamed = y;
  renamed.params[0].name = "c";
  CHECK_THROWS_AS(average_checkpoints(std::vector<ModelCheckpoint>{x, renamed}), std::invalid_argument);
  CHECK_THROWS_AS(average_checkpoints(std::vector<ModelCheckpoint>{}), std::invalid_argument);
}
