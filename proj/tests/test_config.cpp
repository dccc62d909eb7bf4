#include <doctest.h>

#include "songci/config.hpp"
#include "songci/error.hpp"

using namespace songci;

TEST_CASE("defaults carry the full-scale model dimensions") {
  const RunConfig cfg;
  const auto m = cfg.model_config(100, 3);
  CHECK(m.embed_dim == 200);
  CHECK(m.enc_hidden == 500);
  CHECK(m.dec_hidden == 500);
  CHECK(m.nonrec == 600);
  CHECK(m.maxout == 300);
  CHECK(m.indicator_dim == 200);
  CHECK(m.vocab_size == 100);
  CHECK(m.num_tunes == 3);
  CHECK(cfg.train_config().minibatch_size == 60);
  CHECK(cfg.train_config().adadelta.rho == 0.95);
  CHECK(cfg.strategy() == EmbeddingStrategy::FixV);
  CHECK(cfg.generation_config().n_best == 10);
  CHECK(cfg.checkpoint_path() == std::filesystem::path("work") / "model.ckpt");
  CHECK(cfg.vectors_path() == std::filesystem::path("work") / "vectors.txt");
}

TEST_CASE("config files parse with comments, and overrides win") {
  auto cfg = RunConfig::parse("# sample\nenc_hidden = 48   # per direction\n\nstrategy=adaptV\nwork_dir = runs/a\n");
  CHECK(cfg.get_int("enc_hidden") == 48);
  CHECK(cfg.strategy() == EmbeddingStrategy::AdaptV);
  cfg.apply_override("enc_hidden=64");
  cfg.apply_override(" n_best = 3 ");
  CHECK(cfg.get_int("enc_hidden") == 64);
  CHECK(cfg.generation_config().n_best == 3);
  CHECK(cfg.checkpoint_path() == std::filesystem::path("runs/a") / "model.ckpt");
  cfg.set("checkpoint", "elsewhere.ckpt");
  CHECK(cfg.checkpoint_path() == std::filesystem::path("elsewhere.ckpt"));
}

TEST_CASE("unknown keys and malformed lines are reported with their location") {
  try {
    RunConfig::parse("epochs = 3\nhidden = 4\n", "run.conf");
    FAIL("expected an error");
  } catch (const UsageError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("run.conf:2") != std::string::npos);
    CHECK(msg.find("hidden") != std::string::npos);
  }
  CHECK_THROWS_AS(RunConfig::parse("epochs 3\n"), UsageError);
  RunConfig cfg;
  CHECK_THROWS_AS(cfg.apply_override("epochs"), UsageError);
  CHECK_THROWS_AS(cfg.apply_override("nope=1"), UsageError);
  cfg.set("epochs", "three");
  CHECK_THROWS_AS(cfg.get_int("epochs"), UsageError);
  cfg.set("rho", "0.9x");
  CHECK_THROWS_AS(cfg.get_double("rho"), UsageError);
  cfg.set("seed", "-1");
  CHECK_THROWS_AS(cfg.get_u64("seed"), UsageError);
  CHECK_THROWS_AS(RunConfig::load("/nonexistent/songci.conf"), UsageError);
}

TEST_CASE("render lists every key once and parses back to the same config") {
  RunConfig cfg;
  cfg.apply_override("epochs=7");
  cfg.apply_override("corpus=data/x.txt");
  const std::string text = cfg.render();
  CHECK(text.find("epochs = 7\n") != std::string::npos);
  const auto back = RunConfig::parse(text);
  CHECK(back.entries() == cfg.entries());
  std::size_t lines = 0;
  for (char c : text) lines += c == '\n';
  CHECK(lines == cfg.entries().size());
}
