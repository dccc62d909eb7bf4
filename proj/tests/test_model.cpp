#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "songci/error.hpp"
#include "songci/model.hpp"
#include "songci/rng.hpp"
#include "songci/training.hpp"

using namespace songci;

namespace {

using Vec = std::vector<double>;

ModelConfig small_config(int vocab = 9, int tunes = 2) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.embed_dim = 4;
  c.enc_hidden = 3;
  c.dec_hidden = 5;
  c.nonrec = 6;
  c.maxout = 3;
  c.attn_dim = 4;
  c.indicator_dim = 4;
  c.num_tunes = tunes;
  return c;
}

Vec as_vec(const Tensor& t) { return t.storage(); }

Vec matvec(const Tensor& w, const Vec& x) {
  Vec y(w.dim(0), 0.0);
  for (std::size_t r = 0; r < w.dim(0); ++r)
    for (std::size_t c = 0; c < w.dim(1); ++c) y[r] += w.at(r, c) * x[c];
  return y;
}

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// The four gate equations written out element by element.
std::pair<Vec, Vec> lstm_oracle(const LstmParams& p, const Vec& x, const Vec& h_prev, const Vec& c_prev) {
  const std::size_t h = p.u.dim(1);
  const Vec wx = matvec(p.w, x), uh = matvec(p.u, h_prev);
  Vec h_out(h), c_out(h);
  for (std::size_t k = 0; k < h; ++k) {
    auto pre = [&](std::size_t block) { return wx[block * h + k] + uh[block * h + k] + p.b[block * h + k]; };
    const double i = sigm(pre(0)), f = sigm(pre(1)), o = sigm(pre(2)), g = std::tanh(pre(3));
    c_out[k] = f * c_prev[k] + i * g;
    h_out[k] = o * std::tanh(c_out[k]);
  }
  return {h_out, c_out};
}

Vec random_vec(std::size_t n, Rng& rng) {
  Vec v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

double max_diff(const Vec& a, const Vec& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::vector<ad::ParamRef> param_refs(Seq2SeqModel& model, Seq2SeqModel& grads) {
  std::vector<ad::ParamRef> refs;
  auto values = model.parameters();
  auto sinks = grads.parameters();
  for (std::size_t i = 0; i < values.size(); ++i) refs.push_back({values[i].first, values[i].second, sinks[i].second});
  return refs;
}

}  // namespace

TEST_CASE("an all-zero LSTM cell from a zero state outputs exactly zero") {
  LstmParams p{Tensor({12, 2}), Tensor({12, 3}), Tensor({12})};
  ad::Graph g;
  const BoundLstm b{g.constant(p.w), g.constant(p.u), g.constant(p.b)};
  const auto s = lstm_step(b, g.constant(Tensor::vector({0.7, -0.2})), g.constant(Tensor({3})), g.constant(Tensor({3})));
  CHECK(s.h.value() == Tensor({3}, 0.0));
  CHECK(s.c.value() == Tensor({3}, 0.0));
}

TEST_CASE("the LSTM step matches a straight-line implementation") {
  Rng rng(21);
  const std::size_t in = 4, h = 3;
  LstmParams p{Tensor({4 * h, in}, random_vec(4 * h * in, rng)), Tensor({4 * h, h}, random_vec(4 * h * h, rng)),
               Tensor({4 * h}, random_vec(4 * h, rng))};
  const Vec x = random_vec(in, rng), h0 = random_vec(h, rng), c0 = random_vec(h, rng);
  ad::Graph g;
  const BoundLstm b{g.constant(p.w), g.constant(p.u), g.constant(p.b)};
  const auto s = lstm_step(b, g.constant(Tensor::vector(x)), g.constant(Tensor::vector(h0)), g.constant(Tensor::vector(c0)));
  const auto [h_ref, c_ref] = lstm_oracle(p, x, h0, c0);
  CHECK(max_diff(as_vec(s.h.value()), h_ref) < 1e-12);
  CHECK(max_diff(as_vec(s.c.value()), c_ref) < 1e-12);
}

TEST_CASE("gradients through two chained LSTM steps match finite differences") {
  Rng rng(22);
  const std::size_t in = 3, h = 2;
  LstmParams p{Tensor({4 * h, in}, random_vec(4 * h * in, rng)), Tensor({4 * h, h}, random_vec(4 * h * h, rng)),
               Tensor({4 * h}, random_vec(4 * h, rng))};
  LstmParams gp{Tensor({4 * h, in}), Tensor({4 * h, h}), Tensor({4 * h})};
  Tensor x1 = Tensor::vector(random_vec(in, rng)), x2 = Tensor::vector(random_vec(in, rng));
  Tensor gx1({in});
  const ad::ParamRef refs[] = {{"w", &p.w, &gp.w}, {"u", &p.u, &gp.u}, {"b", &p.b, &gp.b}, {"x1", &x1, &gx1}};
  const auto report = ad::grad_check(
      [&](ad::Graph& g) {
        const BoundLstm b{g.parameter(p.w, &gp.w), g.parameter(p.u, &gp.u), g.parameter(p.b, &gp.b)};
        auto s = lstm_step(b, g.parameter(x1, &gx1), g.constant(Tensor({h})), g.constant(Tensor({h})));
        s = lstm_step(b, g.constant(x2), s.h, s.c);
        return ad::add(ad::sum(s.h), ad::dot(s.c, s.c));
      },
      refs, 1e-5);
  CHECK(report.max_rel_error() < 1e-4);
}

TEST_CASE("encoder states have width twice the per-direction hidden size") {
  auto cfg = small_config();
  const auto model = Seq2SeqModel::random(cfg, 3, 0.3);
  ad::Graph g;
  const auto m = bind(g, model);
  const int ids[] = {4, 5, 6, 7, 8, 4, 5};
  const auto enc = encode(m, ids);
  CHECK(enc.states.size() == 7);
  for (const auto& s : enc.states) CHECK(s.shape() == Shape{6});
  CHECK(enc.states_t.shape() == Shape{6, 7});
  CHECK_THROWS_AS(encode(m, std::span<const int>{}), UsageError);
  const int bad[] = {9};
  CHECK_THROWS_AS(encode(m, bad), UsageError);
}

TEST_CASE("a single-token input runs both directions from the same embedding") {
  auto cfg = small_config();
  auto model = Seq2SeqModel::random(cfg, 4, 0.3);
  model.enc_bwd = model.enc_fwd;
  ad::Graph g;
  const auto m = bind(g, model);
  const int ids[] = {6};
  const auto enc = encode(m, ids);
  REQUIRE(enc.states.size() == 1);
  const auto& s = enc.states[0].value();
  for (std::size_t k = 0; k < 3; ++k) CHECK(s[k] == s[k + 3]);
  CHECK(enc.fwd_last.value() == enc.bwd_first.value());
}

TEST_CASE("reversing the input and swapping directions mirrors the encoder bit for bit") {
  auto cfg = small_config();
  const auto model = Seq2SeqModel::random(cfg, 5, 0.3);
  auto swapped = model;
  std::swap(swapped.enc_fwd, swapped.enc_bwd);
  std::vector<int> ids = {4, 7, 5, 8, 6};
  std::vector<int> rev(ids.rbegin(), ids.rend());
  ad::Graph g1, g2;
  const auto e1 = encode(bind(g1, model), ids);
  const auto e2 = encode(bind(g2, swapped), rev);
  const std::size_t n = ids.size(), h = 3;
  for (std::size_t j = 0; j < n; ++j) {
    const auto& a = e1.states[j].value();
    const auto& b = e2.states[n - 1 - j].value();
    for (std::size_t k = 0; k < h; ++k) {
      CHECK(a[k] == b[k + h]);
      CHECK(a[k + h] == b[k]);
    }
  }
}

TEST_CASE("attention is uniform when scores cannot differ") {
  auto cfg = small_config();
  const int ids[] = {4, 5, 6, 7};
  for (int variant = 0; variant < 2; ++variant) {
    auto model = Seq2SeqModel::random(cfg, 6, 0.5);
    if (variant == 0) {
      model.attn.w.fill(0.0);
      model.attn.u.fill(0.0);
    } else {
      model.attn.v.fill(0.0);
    }
    ad::Graph g;
    const auto m = bind(g, model);
    const auto enc = encode(m, ids);
    Rng rng(1);
    const auto alpha = attention_weights(m, g.constant(Tensor::vector(random_vec(5, rng))), enc);
    for (double a : alpha.value().storage()) CHECK(a == doctest::Approx(0.25).epsilon(1e-15));
  }
}

TEST_CASE("attention weights and context match a direct-formula oracle") {
  auto cfg = small_config();
  const auto model = Seq2SeqModel::random(cfg, 7, 0.5);
  ad::Graph g;
  const auto m = bind(g, model);
  const int ids[] = {4, 8, 5, 6};
  const auto enc = encode(m, ids);
  Rng rng(2);
  const Vec s_prev = random_vec(5, rng);
  const auto alpha = attention_weights(m, g.constant(Tensor::vector(s_prev)), enc);

  const Vec q = matvec(model.attn.w, s_prev);
  Vec e(4);
  for (std::size_t j = 0; j < 4; ++j) {
    const Vec k = matvec(model.attn.u, as_vec(enc.states[j].value()));
    for (std::size_t a = 0; a < q.size(); ++a) e[j] += model.attn.v[a] * std::tanh(q[a] + k[a]);
  }
  const double mx = *std::max_element(e.begin(), e.end());
  double z = 0.0;
  for (double v : e) z += std::exp(v - mx);
  Vec alpha_ref(4);
  for (std::size_t j = 0; j < 4; ++j) alpha_ref[j] = std::exp(e[j] - mx) / z;
  CHECK(max_diff(as_vec(alpha.value()), alpha_ref) < 1e-12);

  double total = 0.0;
  for (double a : alpha.value().storage()) {
    CHECK(a >= 0.0);
    total += a;
  }
  CHECK(std::abs(total - 1.0) < 1e-12);

  const auto ctx = context(alpha, enc);
  Vec ctx_ref(6, 0.0);
  for (std::size_t j = 0; j < 4; ++j)
    for (std::size_t k = 0; k < 6; ++k) ctx_ref[k] += alpha_ref[j] * enc.states[j].value()[k];
  CHECK(max_diff(as_vec(ctx.value()), ctx_ref) < 1e-12);
}

TEST_CASE("context of one-hot and uniform weights") {
  auto cfg = small_config();
  const auto model = Seq2SeqModel::random(cfg, 8, 0.5);
  ad::Graph g;
  const auto m = bind(g, model);
  const int ids[] = {4, 5};
  const auto enc = encode(m, ids);
  CHECK(context(g.constant(Tensor::vector({0.0, 1.0})), enc).value() == enc.states[1].value());
  const auto mean = context(g.constant(Tensor::vector({0.5, 0.5})), enc).value();
  for (std::size_t k = 0; k < 6; ++k) {
    CHECK(mean[k] == doctest::Approx(0.5 * (enc.states[0].value()[k] + enc.states[1].value()[k])).epsilon(1e-15));
  }
  CHECK_THROWS_AS(context(g.constant(Tensor::vector({1.0})), enc), UsageError);
}

TEST_CASE("initial decoder state") {
  auto cfg = small_config();
  const int ids[] = {4, 5, 6};
  SUBCASE("zero projections give a zero state") {
    auto model = Seq2SeqModel::random(cfg, 9, 0.5);
    model.init_proj.fill(0.0);
    model.tune_proj.fill(0.0);
    ad::Graph g;
    const auto m = bind(g, model);
    const auto s0 = init_decoder_state(m, encode(m, ids), 1);
    CHECK(s0.h.value() == Tensor({5}, 0.0));
    CHECK(s0.c.value() == Tensor({5}, 0.0));
  }
  SUBCASE("different tunes give different states, matching the direct formula") {
    const auto model = Seq2SeqModel::random(cfg, 10, 0.5);
    ad::Graph g;
    const auto m = bind(g, model);
    const auto enc = encode(m, ids);
    const auto a = init_decoder_state(m, enc, 0).h.value();
    const auto b = init_decoder_state(m, enc, 1).h.value();
    CHECK(max_abs_diff(a, b) > 0.0);
    for (double v : a.storage()) CHECK(std::abs(v) < 1.0);

    Vec global = as_vec(enc.fwd_last.value());
    const Vec bwd = as_vec(enc.bwd_first.value());
    global.insert(global.end(), bwd.begin(), bwd.end());
    const Vec p = matvec(model.init_proj, global);
    Vec ind(4);
    for (std::size_t k = 0; k < 4; ++k) ind[k] = model.tune_indicators.vectors.at(1, k);
    const Vec t = matvec(model.tune_proj, ind);
    Vec ref(5);
    for (std::size_t k = 0; k < 5; ++k) ref[k] = std::tanh(p[k] + t[k]);
    CHECK(max_diff(as_vec(b), ref) < 1e-12);
    CHECK_THROWS_AS(init_decoder_state(m, enc, 2), UsageError);
  }
}

TEST_CASE("a decode step yields a strictly positive distribution summing to one") {
  auto cfg = small_config();
  const auto model = Seq2SeqModel::random(cfg, 11, 0.5);
  ad::Graph g;
  const auto m = bind(g, model);
  const int ids[] = {4, 5, 6};
  const auto enc = encode(m, ids);
  const auto s0 = init_decoder_state(m, enc, 0);
  const auto step = decode_step(m, s0, Vocabulary::kBos, enc);
  double total = 0.0;
  for (double p : step.probs.value().storage()) {
    CHECK(p > 0.0);
    total += p;
  }
  CHECK(std::abs(total - 1.0) < 1e-12);
  CHECK_THROWS_AS(decode_step(m, s0, 9, enc), UsageError);
}

TEST_CASE("the argmax of a decode step follows hand-set output biases") {
  auto cfg = small_config();
  auto model = Seq2SeqModel::random(cfg, 12, 0.01);
  model.out_b.fill(0.0);
  model.out_b[7] = 10.0;
  ad::Graph g;
  const auto m = bind(g, model);
  const int ids[] = {4, 5};
  const auto enc = encode(m, ids);
  const auto probs = decode_step(m, init_decoder_state(m, enc, 0), 4, enc).probs.value();
  const auto& v = probs.storage();
  CHECK(std::max_element(v.begin(), v.end()) - v.begin() == 7);
}

TEST_CASE("gradients through one decode step match finite differences") {
  auto cfg = small_config();
  auto model = Seq2SeqModel::random(cfg, 13, 0.5);
  auto grads = Seq2SeqModel::zeros(cfg);
  const auto refs = param_refs(model, grads);
  const int ids[] = {4, 6, 5};
  const auto report = ad::grad_check(
      [&](ad::Graph& g) {
        const auto m = bind(g, model, &grads);
        const auto enc = encode(m, ids);
        const auto step = decode_step(m, init_decoder_state(m, enc, 1), 5, enc);
        return ad::cross_entropy(step.probs, 7);
      },
      refs, 1e-5);
  for (const auto& e : report.entries) {
    CAPTURE(e.name);
    CHECK(e.max_rel_error < 1e-4);
  }
}

TEST_CASE("the full model passes a finite-difference check on a toy instance") {
  ModelConfig cfg;
  cfg.vocab_size = 12;
  cfg.embed_dim = 6;
  cfg.enc_hidden = 8;
  cfg.dec_hidden = 8;
  cfg.nonrec = 10;
  cfg.maxout = 5;
  cfg.attn_dim = 6;
  cfg.indicator_dim = 6;
  cfg.num_tunes = 2;
  auto model = Seq2SeqModel::random(cfg, 14, 0.5);
  const TrainPair pair{{0, 4, 5, 6, 11, 1}, {7, 8, 9, 10, 2, 1}, 1};
  const auto report = check_pair_gradients(model, pair);
  CHECK(report.entries.size() == model.parameters().size());
  CHECK(report.max_rel_error() < 1e-4);
}

TEST_CASE("tune indicators are orthonormal, deterministic and bounded by their dimension") {
  const auto t = make_tune_indicators(5, 7, 200);
  CHECK(t.vectors.shape() == Shape{5, 200});
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      double d = 0.0;
      for (std::size_t k = 0; k < 200; ++k) d += t.vectors.at(i, k) * t.vectors.at(j, k);
      if (i == j) CHECK(std::abs(d - 1.0) < 1e-9);
      else CHECK(std::abs(d) < 1e-9);
    }
  }
  CHECK(make_tune_indicators(5, 7, 200).vectors == t.vectors);
  CHECK_FALSE(make_tune_indicators(5, 8, 200).vectors == t.vectors);
  CHECK_THROWS_AS(make_tune_indicators(201, 7, 200), UsageError);
  CHECK_THROWS_AS(make_tune_indicators(0, 7, 200), UsageError);
}

TEST_CASE("model config rejects inconsistent dimensions") {
  auto cfg = small_config();
  cfg.maxout = 4;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg = small_config();
  cfg.num_tunes = 5;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg = small_config(4);
  CHECK_THROWS_AS(cfg.validate(), UsageError);
}

TEST_CASE("checkpoints round trip and detect corruption") {
  auto cfg = small_config(7, 2);
  Checkpoint ck;
  ck.model = Seq2SeqModel::random(cfg, 15, 0.3);
  ck.model.embedding_trainable = false;
  ck.vocab = Vocabulary::from_chars({U'春', U'花', U'，'});
  ck.tunes = TuneRegistry({"Beauty Yu", "Pusaman"});
  ck.seed = 42;
  const std::string bytes = serialize_checkpoint(ck);
  const Checkpoint back = deserialize_checkpoint(bytes);
  CHECK(back.model.config == cfg);
  CHECK(back.vocab == ck.vocab);
  CHECK(back.tunes.names() == ck.tunes.names());
  CHECK(back.seed == 42);
  CHECK_FALSE(back.model.embedding_trainable);
  const auto a = ck.model.parameters();
  const auto b = back.model.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i].second == *b[i].second);
  CHECK(back.model.tune_indicators.vectors == ck.model.tune_indicators.vectors);
  CHECK(serialize_checkpoint(back) == bytes);

  std::string flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x01;
  CHECK_THROWS_AS(deserialize_checkpoint(flipped), DataError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 5)), DataError);
}
