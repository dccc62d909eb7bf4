#include <doctest.h>

#include <filesystem>

#include "songci/embedding.hpp"
#include "songci/error.hpp"
#include "songci/training.hpp"

using namespace songci;

namespace {

// A and B share the context D and sit within two positions of each other;
// C only ever appears beside E.
constexpr int A = 4, B = 5, C = 6, D = 7, E = 8;

std::vector<std::vector<int>> toy_corpus() {
  std::vector<std::vector<int>> out;
  for (int i = 0; i < 60; ++i) {
    out.push_back({A, D, B});
    out.push_back({B, D, A});
    out.push_back({C, E, C, E});
  }
  return out;
}

SkipGramConfig toy_sg() {
  SkipGramConfig c;
  c.dim = 8;
  c.window = 2;
  c.negatives = 3;
  c.epochs = 20;
  c.seed = 4;
  return c;
}

ModelConfig tiny_model(int vocab) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.embed_dim = 4;
  c.enc_hidden = 4;
  c.dec_hidden = 4;
  c.nonrec = 6;
  c.maxout = 3;
  c.attn_dim = 3;
  c.indicator_dim = 3;
  c.num_tunes = 1;
  return c;
}

std::vector<TrainPair> tiny_pairs() {
  return {{{0, 4, 5, 1}, {6, 7, 1}, 0}, {{0, 6, 4, 1}, {5, 7, 8, 1}, 0}, {{0, 8, 1}, {4, 4, 1}, 0}};
}

}  // namespace

TEST_CASE("skip-gram puts co-occurring characters closer together") {
  const auto r = train_skipgram(toy_corpus(), 9, toy_sg());
  CHECK(cosine(r.embedding.matrix, A, B) > cosine(r.embedding.matrix, A, C));
  CHECK(r.epoch_loss.size() == 20);
  CHECK(r.epoch_loss.back() < r.epoch_loss.front());
}

TEST_CASE("skip-gram is deterministic under its seed") {
  const auto a = train_skipgram(toy_corpus(), 9, toy_sg());
  const auto b = train_skipgram(toy_corpus(), 9, toy_sg());
  CHECK(a.embedding.matrix == b.embedding.matrix);
  CHECK(a.epoch_loss == b.epoch_loss);
  auto other = toy_sg();
  other.seed = 5;
  CHECK_FALSE(train_skipgram(toy_corpus(), 9, other).embedding.matrix == a.embedding.matrix);
}

TEST_CASE("skip-gram with dimension 2 on ten tokens returns a V x 2 matrix") {
  SkipGramConfig c;
  c.dim = 2;
  c.epochs = 1;
  const auto r = train_skipgram({{4, 5, 6, 7, 8, 4, 5, 6, 7, 8}}, 9, c);
  CHECK(r.embedding.matrix.shape() == Shape{9, 2});
  CHECK(r.embedding.matrix.all_finite());
}

TEST_CASE("skip-gram rejects bad input") {
  CHECK_THROWS_AS(train_skipgram({{4, 9}}, 9, toy_sg()), DataError);
  CHECK_THROWS_AS(train_skipgram({{}}, 9, toy_sg()), DataError);
  auto c = toy_sg();
  c.window = 0;
  CHECK_THROWS_AS(train_skipgram(toy_corpus(), 9, c), UsageError);
}

TEST_CASE("fixV keeps the embedding, adaptV moves it, and both start from the same loss") {
  const auto cfg = tiny_model(9);
  const auto pretrained = train_skipgram(toy_corpus(), 9, [] {
    auto c = toy_sg();
    c.dim = 4;
    return c;
  }());
  const auto pairs = tiny_pairs();
  TrainConfig tc;
  tc.minibatch_size = static_cast<int>(pairs.size());
  tc.max_epochs = 5;

  auto fix = Seq2SeqModel::random(cfg, 2);
  init_embedding(fix, pretrained.embedding, EmbeddingStrategy::FixV);
  auto adapt = Seq2SeqModel::random(cfg, 2);
  init_embedding(adapt, pretrained.embedding, EmbeddingStrategy::AdaptV);
  CHECK_FALSE(fix.embedding_trainable);
  CHECK(adapt.embedding_trainable);

  for (const auto& p : pairs) CHECK(pair_loss(fix, p).total == pair_loss(adapt, p).total);

  // The embedding sits on the loss path, so adaptV sees a nonzero gradient.
  auto grads = Seq2SeqModel::zeros(cfg);
  pair_loss(adapt, pairs[0], &grads);
  double norm = 0.0;
  for (double g : grads.embedding.storage()) norm += g * g;
  CHECK(norm > 0.0);

  train(fix, pairs, tc);
  train(adapt, pairs, tc);
  CHECK(fix.embedding == pretrained.embedding.matrix);
  CHECK_FALSE(adapt.embedding == pretrained.embedding.matrix);
}

TEST_CASE("mismatched pretrained vectors name both shapes") {
  auto model = Seq2SeqModel::random(tiny_model(9), 1);
  EmbeddingMatrix wrong{Tensor({9, 5}), true};
  try {
    init_embedding(model, wrong, EmbeddingStrategy::FixV);
    FAIL("expected a shape error");
  } catch (const UsageError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[9x5]") != std::string::npos);
    CHECK(msg.find("[9x4]") != std::string::npos);
  }
}

TEST_CASE("strategy names parse") {
  CHECK(parse_strategy("fixV") == EmbeddingStrategy::FixV);
  CHECK(parse_strategy("adaptV") == EmbeddingStrategy::AdaptV);
  CHECK(std::string(strategy_name(EmbeddingStrategy::AdaptV)) == "adaptV");
  CHECK_THROWS_AS(parse_strategy("frozen"), UsageError);
}

TEST_CASE("vectors files round trip and match rows by token") {
  const auto vocab = Vocabulary::from_chars({U'春', U'花', U'，', U'。'});
  const auto r = train_skipgram({{4, 5, 6, 7, 4, 5}}, vocab.size(), [] {
    auto c = toy_sg();
    c.dim = 3;
    return c;
  }());
  const auto path = std::filesystem::temp_directory_path() / "songci_vectors_test.txt";
  write_vectors(path, r.embedding, vocab);
  const auto back = read_vectors(path, vocab);
  CHECK(back.missing_rows == 0);
  CHECK(back.embedding.matrix == r.embedding.matrix);

  // A smaller vocabulary picks its rows out by token.
  const auto sub = Vocabulary::from_chars({U'花', U'月'});
  const auto partial = read_vectors(path, sub);
  std::filesystem::remove(path);
  CHECK(partial.missing_rows == 1);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(partial.embedding.matrix.at(4, k) == r.embedding.matrix.at(5, k));
    CHECK(partial.embedding.matrix.at(5, k) == 0.0);
  }
}
