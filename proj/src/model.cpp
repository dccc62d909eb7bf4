#include "songci/model.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <numeric>

#include "songci/error.hpp"
#include "songci/rng.hpp"

namespace songci {

namespace {

constexpr const char* kModule = "seq2seq";

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

LstmParams make_lstm(int input, int hidden) {
  return {Tensor({4 * sz(hidden), sz(input)}), Tensor({4 * sz(hidden), sz(hidden)}), Tensor({4 * sz(hidden)})};
}

BoundLstm bind_lstm(ad::Graph& g, const LstmParams& p, LstmParams* grads) {
  return {g.parameter(p.w, grads ? &grads->w : nullptr), g.parameter(p.u, grads ? &grads->u : nullptr),
          g.parameter(p.b, grads ? &grads->b : nullptr)};
}

}  // namespace

void ModelConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw UsageError(kModule, "model config: " + what);
  };
  need(vocab_size > Vocabulary::kNumSpecials, "vocab_size must exceed the special tokens");
  need(embed_dim > 0 && enc_hidden > 0 && dec_hidden > 0 && attn_dim > 0 && indicator_dim > 0,
       "all dimensions must be positive");
  need(nonrec > 0 && maxout > 0 && nonrec == 2 * maxout,
       "nonrec (" + std::to_string(nonrec) + ") must be twice maxout (" + std::to_string(maxout) + ")");
  need(num_tunes >= 1 && num_tunes <= indicator_dim,
       "num_tunes (" + std::to_string(num_tunes) + ") must be in [1, indicator_dim]");
}

TuneIndicatorTable make_tune_indicators(int num_tunes, std::uint64_t seed, int dim) {
  if (dim < 1) throw UsageError(kModule, "indicator dimension must be positive");
  if (num_tunes < 1 || num_tunes > dim) {
    throw UsageError(kModule, "num_tunes " + std::to_string(num_tunes) + " exceeds indicator dimension " +
                                  std::to_string(dim));
  }
  Rng rng(seed);
  Eigen::MatrixXd m(dim, dim);
  for (int r = 0; r < dim; ++r) {
    for (int c = 0; c < dim; ++c) m(r, c) = rng.normal();
  }
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success) throw NumericError(kModule, "eigendecomposition failed");
  // Eigen returns ascending eigenvalues.
  TuneIndicatorTable table;
  table.vectors = Tensor({sz(num_tunes), sz(dim)});
  for (int t = 0; t < num_tunes; ++t) {
    const int col = dim - 1 - t;
    auto v = solver.eigenvectors().col(col);
    // Fix the sign so the largest-magnitude component is positive.
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    const double sign = v(arg) < 0.0 ? -1.0 : 1.0;
    for (int k = 0; k < dim; ++k) table.vectors.at(sz(t), sz(k)) = sign * v(k);
  }
  return table;
}

Seq2SeqModel Seq2SeqModel::zeros(const ModelConfig& config) {
  config.validate();
  const int two_h = 2 * config.enc_hidden;
  Seq2SeqModel m;
  m.config = config;
  m.embedding = Tensor({sz(config.vocab_size), sz(config.embed_dim)});
  m.enc_fwd = make_lstm(config.embed_dim, config.enc_hidden);
  m.enc_bwd = make_lstm(config.embed_dim, config.enc_hidden);
  m.dec = make_lstm(config.embed_dim + two_h, config.dec_hidden);
  m.attn.w = Tensor({sz(config.attn_dim), sz(config.dec_hidden)});
  m.attn.u = Tensor({sz(config.attn_dim), sz(two_h)});
  m.attn.v = Tensor({sz(config.attn_dim)});
  m.init_proj = Tensor({sz(config.dec_hidden), sz(two_h)});
  m.tune_proj = Tensor({sz(config.dec_hidden), sz(config.indicator_dim)});
  m.nonrec_w = Tensor({sz(config.nonrec), sz(config.dec_hidden + two_h + config.embed_dim)});
  m.nonrec_b = Tensor({sz(config.nonrec)});
  m.out_w = Tensor({sz(config.vocab_size), sz(config.maxout)});
  m.out_b = Tensor({sz(config.vocab_size)});
  m.tune_indicators.vectors = Tensor({sz(config.num_tunes), sz(config.indicator_dim)});
  return m;
}

Seq2SeqModel Seq2SeqModel::random(const ModelConfig& config, std::uint64_t seed, double scale,
                                  std::uint64_t indicator_seed) {
  Seq2SeqModel m = zeros(config);
  Rng rng(seed);
  for (auto& [name, tensor] : m.parameters()) {
    for (double& v : tensor->data()) v = rng.uniform(-scale, scale);
  }
  m.tune_indicators = make_tune_indicators(config.num_tunes, indicator_seed, config.indicator_dim);
  return m;
}

std::vector<std::pair<std::string, Tensor*>> Seq2SeqModel::parameters() {
  return {{"embedding", &embedding},
          {"enc_fwd.w", &enc_fwd.w},
          {"enc_fwd.u", &enc_fwd.u},
          {"enc_fwd.b", &enc_fwd.b},
          {"enc_bwd.w", &enc_bwd.w},
          {"enc_bwd.u", &enc_bwd.u},
          {"enc_bwd.b", &enc_bwd.b},
          {"dec.w", &dec.w},
          {"dec.u", &dec.u},
          {"dec.b", &dec.b},
          {"attn.w", &attn.w},
          {"attn.u", &attn.u},
          {"attn.v", &attn.v},
          {"init_proj", &init_proj},
          {"tune_proj", &tune_proj},
          {"nonrec.w", &nonrec_w},
          {"nonrec.b", &nonrec_b},
          {"out.w", &out_w},
          {"out.b", &out_b}};
}

std::vector<std::pair<std::string, const Tensor*>> Seq2SeqModel::parameters() const {
  auto mutable_list = const_cast<Seq2SeqModel*>(this)->parameters();
  std::vector<std::pair<std::string, const Tensor*>> out;
  out.reserve(mutable_list.size());
  for (auto& [name, t] : mutable_list) out.emplace_back(name, t);
  return out;
}

std::size_t Seq2SeqModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : parameters()) n += t->size();
  return n;
}

BoundModel bind(ad::Graph& g, const Seq2SeqModel& model, Seq2SeqModel* grads) {
  auto sink = [&](Tensor Seq2SeqModel::*member) -> Tensor* { return grads ? &(grads->*member) : nullptr; };
  BoundModel b;
  b.graph = &g;
  b.model = &model;
  b.embedding =
      g.parameter(model.embedding, (grads && model.embedding_trainable) ? &grads->embedding : nullptr);
  b.enc_fwd = bind_lstm(g, model.enc_fwd, grads ? &grads->enc_fwd : nullptr);
  b.enc_bwd = bind_lstm(g, model.enc_bwd, grads ? &grads->enc_bwd : nullptr);
  b.dec = bind_lstm(g, model.dec, grads ? &grads->dec : nullptr);
  b.attn_w = g.parameter(model.attn.w, grads ? &grads->attn.w : nullptr);
  b.attn_u = g.parameter(model.attn.u, grads ? &grads->attn.u : nullptr);
  b.attn_v = g.parameter(model.attn.v, grads ? &grads->attn.v : nullptr);
  b.init_proj = g.parameter(model.init_proj, sink(&Seq2SeqModel::init_proj));
  b.tune_proj = g.parameter(model.tune_proj, sink(&Seq2SeqModel::tune_proj));
  b.nonrec_w = g.parameter(model.nonrec_w, sink(&Seq2SeqModel::nonrec_w));
  b.nonrec_b = g.parameter(model.nonrec_b, sink(&Seq2SeqModel::nonrec_b));
  b.out_w = g.parameter(model.out_w, sink(&Seq2SeqModel::out_w));
  b.out_b = g.parameter(model.out_b, sink(&Seq2SeqModel::out_b));
  b.tune_indicators = g.parameter(model.tune_indicators.vectors, nullptr);
  return b;
}

LstmState lstm_step(const BoundLstm& p, ad::Var x, ad::Var h_prev, ad::Var c_prev) {
  const Tensor& u = p.u.value();
  const std::size_t h = u.dim(1);
  if (x.value().rank() != 1 || x.value().dim(0) != p.w.value().dim(1)) {
    throw UsageError(kModule, "lstm input " + shape_string(x.shape()) + " does not match weights " +
                                  shape_string(p.w.shape()));
  }
  if (h_prev.shape() != Shape{h} || c_prev.shape() != Shape{h}) {
    throw UsageError(kModule, "lstm state " + shape_string(h_prev.shape()) + "/" + shape_string(c_prev.shape()) +
                                  " does not match hidden size " + std::to_string(h));
  }
  using namespace ad;
  Var pre = add(add(matmul(p.w, x), matmul(p.u, h_prev)), p.b);
  Var i = sigmoid(slice(pre, 0, h));
  Var f = sigmoid(slice(pre, h, h));
  Var o = sigmoid(slice(pre, 2 * h, h));
  Var cand = ad::tanh(slice(pre, 3 * h, h));
  Var c = add(mul(f, c_prev), mul(i, cand));
  Var hs = mul(o, ad::tanh(c));
  return {hs, c};
}

Encoded encode(const BoundModel& m, std::span<const int> ids) {
  if (ids.empty()) throw UsageError(kModule, "encode: empty input");
  const int vocab = m.model->config.vocab_size;
  for (int id : ids) {
    if (id < 0 || id >= vocab) throw UsageError(kModule, "encode: id " + std::to_string(id) + " out of range");
  }
  ad::Graph& g = *m.graph;
  const std::size_t n = ids.size();
  const std::size_t h = sz(m.model->config.enc_hidden);
  ad::Var rows = ad::embedding_gather(m.embedding, ids);
  std::vector<ad::Var> xs;
  xs.reserve(n);
  for (std::size_t t = 0; t < n; ++t) xs.push_back(ad::reshape(ad::slice(rows, t, 1), {rows.value().dim(1)}));

  std::vector<ad::Var> fwd(n), bwd(n);
  LstmState s{g.constant(Tensor({h})), g.constant(Tensor({h}))};
  for (std::size_t t = 0; t < n; ++t) {
    s = lstm_step(m.enc_fwd, xs[t], s.h, s.c);
    fwd[t] = s.h;
  }
  s = {g.constant(Tensor({h})), g.constant(Tensor({h}))};
  for (std::size_t t = n; t-- > 0;) {
    s = lstm_step(m.enc_bwd, xs[t], s.h, s.c);
    bwd[t] = s.h;
  }

  Encoded enc;
  enc.states.reserve(n);
  for (std::size_t t = 0; t < n; ++t) enc.states.push_back(ad::concat({fwd[t], bwd[t]}));
  enc.fwd_last = fwd[n - 1];
  enc.bwd_first = bwd[0];
  enc.states_t = ad::transpose(ad::stack(enc.states));
  enc.keys.reserve(n);
  for (const auto& state : enc.states) enc.keys.push_back(ad::matmul(m.attn_u, state));
  return enc;
}

ad::Var attention_weights(const BoundModel& m, ad::Var s_prev, const Encoded& enc) {
  if (s_prev.value().rank() != 1 || s_prev.value().dim(0) != m.attn_w.value().dim(1)) {
    throw UsageError(kModule, "attention: decoder state " + shape_string(s_prev.shape()) + " does not match W_a " +
                                  shape_string(m.attn_w.shape()));
  }
  ad::Var query = ad::matmul(m.attn_w, s_prev);
  std::vector<ad::Var> scores;
  scores.reserve(enc.keys.size());
  for (const auto& key : enc.keys) {
    scores.push_back(ad::reshape(ad::dot(m.attn_v, ad::tanh(ad::add(query, key))), {1}));
  }
  return ad::softmax(ad::concat(scores));
}

ad::Var context(ad::Var alpha, const Encoded& enc) {
  if (alpha.value().rank() != 1 || alpha.value().dim(0) != enc.states.size()) {
    throw UsageError(kModule, "context: " + std::to_string(alpha.value().size()) + " weights for " +
                                  std::to_string(enc.states.size()) + " states");
  }
  return ad::matmul(enc.states_t, alpha);
}

LstmState init_decoder_state(const BoundModel& m, const Encoded& enc, int tune_id) {
  const int tunes = m.model->config.num_tunes;
  if (tune_id < 0 || tune_id >= tunes) {
    throw UsageError(kModule, "unknown tune id " + std::to_string(tune_id) + " (" + std::to_string(tunes) + " tunes)");
  }
  const std::size_t dim = sz(m.model->config.indicator_dim);
  ad::Var indicator = ad::reshape(ad::slice(m.tune_indicators, sz(tune_id), 1), {dim});
  ad::Var global = ad::concat({enc.fwd_last, enc.bwd_first});
  ad::Var s0 = ad::tanh(ad::add(ad::matmul(m.init_proj, global), ad::matmul(m.tune_proj, indicator)));
  ad::Var c0 = m.graph->constant(Tensor({sz(m.model->config.dec_hidden)}));
  return {s0, c0};
}

DecodeStep decode_step(const BoundModel& m, const LstmState& prev, int y_prev, const Encoded& enc) {
  if (y_prev < 0 || y_prev >= m.model->config.vocab_size) {
    throw UsageError(kModule, "decode: id " + std::to_string(y_prev) + " out of range");
  }
  ad::Var alpha = attention_weights(m, prev.h, enc);
  ad::Var ctx = context(alpha, enc);
  ad::Var emb = ad::embedding_row(m.embedding, y_prev);
  LstmState next = lstm_step(m.dec, ad::concat({emb, ctx}), prev.h, prev.c);
  ad::Var hidden = ad::add(ad::matmul(m.nonrec_w, ad::concat({next.h, ctx, emb})), m.nonrec_b);
  ad::Var pooled = ad::max_pool_pairs(hidden);
  ad::Var logits = ad::add(ad::matmul(m.out_w, pooled), m.out_b);
  return {ad::softmax(logits), alpha, next};
}

}  // namespace songci
