// End-to-end acceptance run. Prints one PASS/FAIL/SKIP line per criterion and
// exits non-zero when any criterion fails. Criterion 10 needs the full corpus:
// set SONGCI_FULL_CORPUS to its path (SONGCI_FULL_EPOCHS, default 3, sets the
// training length).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "songci/app.hpp"
#include "songci/config.hpp"
#include "songci/embedding.hpp"
#include "songci/evaluation.hpp"
#include "songci/generation.hpp"
#include "songci/rng.hpp"
#include "songci/training.hpp"
#include "songci/utf8.hpp"

using namespace songci;
namespace fs = std::filesystem;

namespace {

const std::string kData = SONGCI_DATA_DIR;

struct Outcome {
  enum Kind { Pass, Fail, Skip } kind;
  std::string detail;
};

Outcome check(bool ok, std::string detail) { return {ok ? Outcome::Pass : Outcome::Fail, std::move(detail)}; }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Shared fixtures.
struct Tables {
  std::vector<Iambic> corpus = load_corpus(kData + "/sample_corpus.txt");
  std::map<std::string, TuneSchema> schemas = load_schema_dir(kData + "/schemas");
  ToneTable tones = load_tone_table(kData + "/tones.tsv");
  RhymeTable rhymes = load_rhyme_table(kData + "/rhymes.tsv");
};

struct Trained {
  std::vector<Iambic> poems;
  Vocabulary vocab;
  TuneRegistry tunes;
  std::vector<TrainPair> pairs;
  Seq2SeqModel model;
  Tensor indicators_before;
  double final_loss = 0.0;
  int epochs = 0;
  double seconds = 0.0;
};

double mean_per_char_loss(const Seq2SeqModel& model, const std::vector<TrainPair>& pairs) {
  double total = 0.0;
  std::size_t targets = 0;
  for (const auto& p : pairs) {
    const PairLoss l = pair_loss(model, p);
    total += l.total;
    targets += l.targets;
  }
  return total / static_cast<double>(targets);
}

std::u32string cue_of(const Iambic& poem) { return poem.lines[0] + std::u32string(1, poem.terminators[0]); }

// Ten sample iambics trained with minibatch 1 until memorised.
Trained overfit(const Tables& t) {
  Trained r;
  r.poems.assign(t.corpus.begin(), t.corpus.begin() + 10);
  r.vocab = build_vocabulary(r.poems);
  r.tunes = TuneRegistry::from_iambics(r.poems);
  r.pairs = make_train_pairs(r.poems, r.vocab, r.tunes);
  ModelConfig mc;
  mc.vocab_size = r.vocab.size();
  mc.embed_dim = 32;
  mc.enc_hidden = 64;
  mc.dec_hidden = 64;
  mc.nonrec = 128;
  mc.maxout = 64;
  mc.attn_dim = 32;
  mc.indicator_dim = 16;
  mc.num_tunes = r.tunes.size();
  r.model = Seq2SeqModel::random(mc, 1);
  r.indicators_before = r.model.tune_indicators.vectors;

  TrainConfig tc;
  tc.minibatch_size = 1;
  tc.max_epochs = 20;
  const auto t0 = std::chrono::steady_clock::now();
  // Blocks of 20 epochs up to 500, stopping once the loss is below 0.01.
  while (r.epochs < 500) {
    tc.shuffle_seed = static_cast<std::uint64_t>(r.epochs + 1);
    train(r.model, r.pairs, tc);
    r.epochs += tc.max_epochs;
    r.final_loss = mean_per_char_loss(r.model, r.pairs);
    if (r.final_loss < 0.01) break;
  }
  r.seconds = seconds_since(t0);
  return r;
}

struct GenerationAudit {
  int runs = 0;
  int completed = 0;
  int fully_admissible = 0;
  int flagged_steps = 0;
  int unexplained = 0;  // violations not traceable to a flagged step
  double worst_alpha_sum = 0.0;
  double min_alpha = 1.0;

  void add(const GenerationResult& r, const TuneSchema& schema, const Tables& t) {
    ++runs;
    for (const auto& step : r.trace) {
      double sum = 0.0;
      for (double a : step.alpha) {
        sum += a;
        min_alpha = std::min(min_alpha, a);
      }
      worst_alpha_sum = std::max(worst_alpha_sum, std::abs(sum - 1.0));
      if (!step.admissible || step.forced) ++flagged_steps;
    }
    if (!r.completed) return;
    ++completed;
    const ComplianceSummary s = compliance_report(r.iambic, schema, t.tones, t.rhymes);
    const bool clean = r.fully_admissible();
    if (clean) ++fully_admissible;
    for (const auto& v : s.violations) {
      if (v.line == 0) continue;  // the cue is given, not generated
      switch (v.kind) {
        case ViolationKind::LineCount:
        case ViolationKind::LineLength:
        case ViolationKind::Terminator:
          ++unexplained;
          break;
        case ViolationKind::Tone:
        case ViolationKind::Unknown:
        case ViolationKind::Rhyme: {
          bool flagged = false;
          for (const auto& step : r.trace) {
            if (step.admissible && !step.forced) continue;
            if (step.line == v.line && step.pos == v.position) flagged = true;
            // Rhyme references are a plurality vote, so a flagged final can
            // outvote an admissible one sharing its label.
            const auto& pattern = schema.lines[static_cast<std::size_t>(step.line)];
            const bool rhyme_final = pattern.rhymed && step.pos + 1 == static_cast<int>(pattern.positions.size());
            if (v.kind == ViolationKind::Rhyme && rhyme_final &&
                pattern.rhyme_label == schema.lines[static_cast<std::size_t>(v.line)].rhyme_label) {
              flagged = true;
            }
          }
          if (clean || !flagged) ++unexplained;
          break;
        }
      }
    }
  }
};

void audit_model(GenerationAudit& audit, const Seq2SeqModel& model, const Vocabulary& vocab,
                 const TuneRegistry& tunes, const Tables& t, int count) {
  std::vector<const TuneSchema*> usable;
  for (const auto& [name, schema] : t.schemas) {
    if (tunes.find(name)) usable.push_back(&schema);
  }
  for (int i = 0; i < count; ++i) {
    const TuneSchema& schema = *usable[static_cast<std::size_t>(i) % usable.size()];
    const Iambic& source = t.corpus[static_cast<std::size_t>(i * 7 + i / 12) % t.corpus.size()];
    const auto r = generate(model, vocab, tunes, schema, t.tones, t.rhymes, cue_of(source), {});
    audit.add(r, schema, t);
  }
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  std::ostringstream out;
  const bool passed = app::run_gradcheck(RunConfig(), out);
  const double secs = seconds_since(t0);
  const std::string table = out.str();
  bool covered = true;
  for (const char* name : {"embedding", "enc_fwd.w", "enc_bwd.u", "dec.w", "attn.v", "attn.w", "attn.u", "init_proj",
                           "tune_proj", "nonrec.w", "out.w", "out.b"}) {
    covered = covered && table.find(name) != std::string::npos;
  }
  const auto last = table.substr(table.rfind("grad-check:"));
  return check(passed && covered && secs < 60.0,
               last.substr(0, last.size() - 1) + ", " + fmt("%.1f s", secs));
}

Outcome criterion2(const Trained& tr, const Tables& t) {
  int exact = 0;
  for (const auto& poem : tr.poems) {
    const auto r = generate(tr.model, tr.vocab, tr.tunes, t.schemas.at(poem.tune_name), t.tones, t.rhymes,
                            cue_of(poem), {});
    if (r.iambic.text(1) == poem.text(1)) ++exact;
  }
  return check(tr.final_loss < 0.1 && exact >= 8 && tr.epochs <= 500 && tr.seconds < 600.0,
               fmt("loss %.5f", tr.final_loss) + " after " + std::to_string(tr.epochs) + " epochs, " +
                   std::to_string(exact) + "/10 exact, " + fmt("%.1f s", tr.seconds));
}

Outcome criterion3_4(const Trained& tr, const Tables& t, bool attention) {
  static GenerationAudit audit;
  static bool done = false;
  if (!done) {
    audit_model(audit, tr.model, tr.vocab, tr.tunes, t, 100);
    const auto vocab = build_vocabulary(t.corpus);
    const auto tunes = TuneRegistry::from_iambics(t.corpus);
    ModelConfig mc = tr.model.config;
    mc.vocab_size = vocab.size();
    mc.num_tunes = tunes.size();
    const auto random_model = Seq2SeqModel::random(mc, 99, 0.3);
    audit_model(audit, random_model, vocab, tunes, t, 100);
    done = true;
  }
  if (attention) {
    return check(audit.worst_alpha_sum <= 1e-12 && audit.min_alpha >= 0.0,
                 fmt("max |sum(alpha) - 1| = %.2e", audit.worst_alpha_sum) + fmt(", min alpha %.3e", audit.min_alpha));
  }
  return check(audit.completed == audit.runs && audit.unexplained == 0,
               std::to_string(audit.runs) + " generations, " + std::to_string(audit.completed) + " completed, " +
                   std::to_string(audit.fully_admissible) + " fully admissible, " +
                   std::to_string(audit.flagged_steps) + " flagged steps, " + std::to_string(audit.unexplained) +
                   " unexplained violations");
}

Outcome criterion5(const Trained& tr) {
  auto orthonormal = [](const Tensor& v) {
    double worst = 0.0;
    for (std::size_t i = 0; i < v.dim(0); ++i) {
      for (std::size_t j = 0; j < v.dim(0); ++j) {
        double d = 0.0;
        for (std::size_t k = 0; k < v.dim(1); ++k) d += v.at(i, k) * v.at(j, k);
        worst = std::max(worst, std::abs(d - (i == j ? 1.0 : 0.0)));
      }
    }
    return worst;
  };
  const double full = orthonormal(make_tune_indicators(40, 7, 200).vectors);
  const double trained = orthonormal(tr.model.tune_indicators.vectors);
  const bool unchanged = tr.model.tune_indicators.vectors == tr.indicators_before;

  ModelConfig mc = tr.model.config;
  const auto model = Seq2SeqModel::random(mc, 5, 0.3);
  ad::Graph g;
  const BoundModel m = bind(g, model);
  const auto ids = tr.pairs[0].cue_ids;
  const Encoded enc = encode(m, ids);
  const double diff = max_abs_diff(init_decoder_state(m, enc, 0).h.value(), init_decoder_state(m, enc, 1).h.value());
  return check(full < 1e-9 && trained < 1e-9 && unchanged && diff > 0.0,
               fmt("orthonormality error %.2e (200-dim)", full) + fmt(", %.2e (trained model)", trained) +
                   (unchanged ? ", unchanged by training" : ", CHANGED by training") +
                   fmt(", s0 tune difference %.3e", diff));
}

Outcome criterion6(const Tables& t) {
  const std::vector<Iambic> poems(t.corpus.begin(), t.corpus.end());
  const auto vocab = build_vocabulary(poems);
  const auto tunes = TuneRegistry::from_iambics(poems);
  const auto pairs = make_train_pairs(poems, vocab, tunes);
  SkipGramConfig sg;
  sg.dim = 16;
  sg.epochs = 10;
  const auto pre = train_skipgram(skipgram_corpus(poems, vocab), vocab.size(), sg);

  ModelConfig mc;
  mc.vocab_size = vocab.size();
  mc.embed_dim = 16;
  mc.enc_hidden = 16;
  mc.dec_hidden = 16;
  mc.nonrec = 16;
  mc.maxout = 8;
  mc.attn_dim = 8;
  mc.indicator_dim = 16;
  mc.num_tunes = tunes.size();
  auto fix = Seq2SeqModel::random(mc, 3);
  auto adapt = Seq2SeqModel::random(mc, 3);
  init_embedding(fix, pre.embedding, EmbeddingStrategy::FixV);
  init_embedding(adapt, pre.embedding, EmbeddingStrategy::AdaptV);
  const double initial_diff = std::abs(mean_per_char_loss(fix, pairs) - mean_per_char_loss(adapt, pairs));

  TrainConfig tc;
  tc.minibatch_size = 4;
  tc.max_epochs = 3;
  const auto fix_stats = train(fix, pairs, tc);
  const auto adapt_stats = train(adapt, pairs, tc);
  const bool fixed = fix.embedding == pre.embedding.matrix;
  const bool moved = !(adapt.embedding == pre.embedding.matrix);
  return check(fixed && moved && initial_diff < 1e-12,
               std::string(fixed ? "fixV embedding unchanged" : "fixV embedding CHANGED") +
                   (moved ? ", adaptV embedding changed" : ", adaptV embedding UNCHANGED") +
                   fmt(", initial loss difference %.1e", initial_diff));
}

Outcome criterion7() {
  auto u = [](const char* s) { return utf8::decode(s); };
  const double exact = bleu2(u("春花秋月何时了"), {u("春花秋月何时了")}).bleu2;
  const double ab = bleu2(u("AB"), {u("BC")}).bleu2;
  const double disjoint = bleu2(u("AB"), {u("CD")}).bleu2;
  const bool examples = std::abs(exact - 1.0) < 1e-9 && std::abs(ab - 0.5) < 1e-9 && std::abs(disjoint) < 1e-9;

  Rng rng(2024);
  const std::u32string pool = u("春花秋月何时了往事知多少");
  auto text = [&] {
    std::u32string s;
    const auto n = 1 + rng.below(10);
    for (std::uint64_t i = 0; i < n; ++i) s.push_back(pool[rng.below(pool.size())]);
    return s;
  };
  int invariant = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto cand = text();
    std::vector<std::u32string> refs;
    const auto n = 2 + rng.below(4);
    for (std::uint64_t i = 0; i < n; ++i) refs.push_back(text());
    const double base = bleu2(cand, refs).bleu2;
    auto perm = refs;
    rng.shuffle(perm.begin(), perm.end());
    if (bleu2(cand, perm).bleu2 == base) ++invariant;
  }
  return check(examples && invariant == 100, fmt("exact %.9f", exact) + fmt(", AB/BC %.9f", ab) +
                                                 fmt(", disjoint %.9f", disjoint) + ", permutation-invariant " +
                                                 std::to_string(invariant) + "/100");
}

Outcome criterion8(const Tables& t) {
  const auto vocab = build_vocabulary(t.corpus);
  const auto tunes = TuneRegistry::from_iambics(t.corpus);
  const auto pairs = make_train_pairs(t.corpus, vocab, tunes);
  // Full-size dimensions; only the output layer is shrunk.
  RunConfig defaults;
  auto model = Seq2SeqModel::random(defaults.model_config(vocab.size(), tunes.size()), 4);
  for (double& w : model.out_w.storage()) w *= 1e-6;
  model.out_b.fill(0.0);
  const double loss = mean_per_char_loss(model, {pairs.begin(), pairs.begin() + 3});
  const double expected = std::log(static_cast<double>(vocab.size()));
  const double rel = std::abs(loss - expected) / expected;
  return check(rel < 0.01, fmt("loss %.6f", loss) + fmt(" vs ln V %.6f", expected) + fmt(" (%.2e relative)", rel));
}

Outcome criterion9() {
  auto run = [](const fs::path& dir) {
    fs::remove_all(dir);
    RunConfig cfg = RunConfig::load(kData + "/sample.conf");
    cfg.set("corpus", kData + "/sample_corpus.txt");
    cfg.set("tone_table", kData + "/tones.tsv");
    cfg.set("rhyme_table", kData + "/rhymes.tsv");
    cfg.set("schemas", kData + "/schemas");
    cfg.set("work_dir", dir.string());
    cfg.set("epochs", "4");
    cfg.set("sg_epochs", "3");
    std::ostringstream sink;
    app::run_ingest(cfg, sink);
    app::run_pretrain(cfg, sink);
    cfg.set("vectors", cfg.vectors_path().string());
    app::run_train(cfg, sink);
    app::run_generate(cfg, "春花秋月何时了，", "Beauty Yu", {}, sink);
    app::run_evaluate(cfg, sink);
  };
  const fs::path base = fs::temp_directory_path() / "songci_acceptance";
  run(base / "a");
  run(base / "b");
  const char* artifacts[] = {app::kVocabFile,  app::kTunesFile, app::kTrainCorpus, app::kTestCorpus,
                             app::kTrainPairs, app::kTestPairs, "vectors.txt",     "model.ckpt",
                             app::kTraceFile,  app::kEvalFile,  app::kTrainLog};
  std::string mismatched;
  for (const char* name : artifacts) {
    std::string a = read_file(base / "a" / name);
    std::string b = read_file(base / "b" / name);
    if (std::string(name) == app::kTrainLog) {
      // The third column is wall-clock time.
      auto strip = [](const std::string& log) {
        std::string out;
        std::istringstream in(log);
        std::string line;
        while (std::getline(in, line)) out += line.substr(0, line.rfind('\t')) + "\n";
        return out;
      };
      a = strip(a);
      b = strip(b);
    }
    if (a != b || a.empty()) mismatched += std::string(" ") + name;
  }
  fs::remove_all(base);
  return check(mismatched.empty(), mismatched.empty()
                                       ? std::to_string(std::size(artifacts)) + " artifacts byte-identical"
                                       : "differing:" + mismatched);
}

Outcome criterion10(const Tables& t) {
  const char* path = std::getenv("SONGCI_FULL_CORPUS");
  if (path == nullptr || *path == '\0') return {Outcome::Skip, "SONGCI_FULL_CORPUS not set"};
  const char* ep = std::getenv("SONGCI_FULL_EPOCHS");
  const int epochs = ep ? std::atoi(ep) : 3;

  const auto corpus = load_corpus(path);
  const auto split = split_corpus(corpus.size(), 688, 1);
  std::vector<Iambic> train_all, test;
  for (auto i : split.train) train_all.push_back(corpus[i]);
  for (auto i : split.test) test.push_back(corpus[i]);

  // The single-tune baseline uses the most common tune that has a schema.
  std::map<std::string, int> counts;
  for (const auto& p : train_all) {
    if (t.schemas.count(p.tune_name)) ++counts[p.tune_name];
  }
  if (counts.empty()) return {Outcome::Fail, "no training iambic has a bundled schema"};
  std::string tune;
  for (const auto& [name, c] : counts) {
    if (tune.empty() || c > counts[tune]) tune = name;
  }
  std::vector<Iambic> train_one, test_one;
  for (const auto& p : train_all) {
    if (p.tune_name == tune) train_one.push_back(p);
  }
  for (const auto& p : test) {
    if (p.tune_name == tune) test_one.push_back(p);
  }
  if (test_one.empty()) return {Outcome::Fail, "no test iambic of tune " + tune};

  const auto vocab = build_vocabulary(train_all);
  const auto tunes = TuneRegistry::from_iambics(corpus);
  RunConfig defaults;
  ModelConfig mc = defaults.model_config(vocab.size(), tunes.size());
  TrainConfig tc = defaults.train_config();
  tc.max_epochs = epochs;
  const auto refs = build_reference_sets(test_one, train_all, 20);

  auto score = [&](const std::vector<Iambic>& data) {
    auto model = Seq2SeqModel::random(mc, 1);
    train(model, make_train_pairs(data, vocab, tunes), tc);
    return evaluate_corpus(model, vocab, tunes, t.schemas, t.tones, t.rhymes, test_one, refs, {}).mean_bleu2;
  };
  const double all = score(train_all);
  const double one = score(train_one);
  return check(all > one, "tune " + tune + fmt(": all tunes %.4f", all) + fmt(" vs single tune %.4f", one));
}

}  // namespace

int main() {
  const Tables tables;
  int failures = 0;
  auto report = [&](int n, const char* title, const std::function<Outcome()>& body) {
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {Outcome::Fail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.kind == Outcome::Pass ? "PASS" : o.kind == Outcome::Fail ? "FAIL" : "SKIP";
    if (o.kind == Outcome::Fail) ++failures;
    std::printf("criterion %2d %s: %s (%s)\n", n, tag, title, o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "gradient integrity", criterion1);
  const Trained tr = overfit(tables);
  report(2, "overfit memorisation", [&] { return criterion2(tr, tables); });
  report(3, "constraint soundness", [&] { return criterion3_4(tr, tables, false); });
  report(4, "attention normalisation", [&] { return criterion3_4(tr, tables, true); });
  report(5, "tune indicators", [&] { return criterion5(tr); });
  report(6, "fixV/adaptV contract", [&] { return criterion6(tables); });
  report(7, "BLEU-2 oracle", criterion7);
  report(8, "uniform-start loss", [&] { return criterion8(tables); });
  report(9, "determinism", criterion9);
  report(10, "all tunes beat a single tune (full corpus)", [&] { return criterion10(tables); });
  return failures == 0 ? 0 : 1;
}
