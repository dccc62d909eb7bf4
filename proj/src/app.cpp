#include "songci/app.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "songci/embedding.hpp"
#include "songci/error.hpp"
#include "songci/kernels.hpp"
#include "songci/model.hpp"
#include "songci/training.hpp"
#include "songci/utf8.hpp"

namespace songci::app {

namespace fs = std::filesystem;

namespace {

constexpr const char* kModule = "cli";

fs::path require_path(const RunConfig& cfg, const std::string& key) {
  const fs::path p = cfg.get_path(key);
  if (p.empty()) throw UsageError(kModule, "config key '" + key + "' is required");
  if (!fs::exists(p)) throw UsageError(kModule, key + " not found: " + p.string());
  return p;
}

fs::path require_artifact(const RunConfig& cfg, const char* name, const char* producer) {
  const fs::path p = cfg.work_dir() / name;
  if (!fs::exists(p)) throw UsageError(kModule, p.string() + " is missing; run '" + producer + "' first");
  return p;
}

void apply_threads(const RunConfig& cfg) {
  const long threads = cfg.get_int("threads");
  if (threads < 0) throw UsageError(kModule, "threads must be >= 0");
  if (threads > 0) kernels::set_num_threads(static_cast<int>(threads));
}

std::vector<int> parse_ids(const std::string& field, std::size_t line_no) {
  std::vector<int> ids;
  std::istringstream in(field);
  std::string tok;
  while (in >> tok) {
    try {
      std::size_t used = 0;
      ids.push_back(std::stoi(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw DataError(kModule, "pairs line " + std::to_string(line_no) + ": bad id '" + tok + "'");
    }
  }
  return ids;
}

std::string join_ids(const std::vector<int>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(ids[i]);
  }
  return out;
}

TuneRegistry load_tunes(const fs::path& path) {
  std::vector<std::string> names;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) names.push_back(line);
  }
  return TuneRegistry(std::move(names));
}

}  // namespace

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(kModule, "cannot write " + path.string());
  out << text;
  if (!out) throw DataError(kModule, "write failed: " + path.string());
}

std::string render_vocabulary(const Vocabulary& vocab) {
  std::string out;
  for (int id = 0; id < vocab.size(); ++id) out += std::to_string(id) + "\t" + vocab.token(id) + "\n";
  return out;
}

Vocabulary parse_vocabulary(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::vector<char32_t> chars;
  int expected = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.substr(0, tab) != std::to_string(expected)) {
      throw DataError(kModule, "vocabulary line " + std::to_string(expected + 1) + " is malformed");
    }
    if (expected >= Vocabulary::kNumSpecials) {
      const std::u32string ch = utf8::decode(line.substr(tab + 1));
      if (ch.size() != 1) throw DataError(kModule, "vocabulary entry " + std::to_string(expected) + " is not one character");
      chars.push_back(ch.front());
    }
    ++expected;
  }
  return Vocabulary::from_chars(chars);
}

std::string render_pairs(const std::vector<TrainPair>& pairs) {
  std::string out;
  for (const auto& p : pairs) {
    out += std::to_string(p.tune_id) + "\t" + join_ids(p.cue_ids) + "\t" + join_ids(p.target_ids) + "\n";
  }
  return out;
}

std::vector<TrainPair> parse_pairs(std::string_view text) {
  std::vector<TrainPair> pairs;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t tab; (tab = line.find('\t', start)) != std::string::npos; start = tab + 1) {
      fields.push_back(line.substr(start, tab - start));
    }
    fields.push_back(line.substr(start));
    if (fields.size() != 3) throw DataError(kModule, "pairs line " + std::to_string(line_no) + ": expected 3 fields");
    TrainPair p;
    const auto tune = parse_ids(fields[0], line_no);
    if (tune.size() != 1) throw DataError(kModule, "pairs line " + std::to_string(line_no) + ": bad tune id");
    p.tune_id = tune.front();
    p.cue_ids = parse_ids(fields[1], line_no);
    p.target_ids = parse_ids(fields[2], line_no);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

std::string render_corpus(const std::vector<Iambic>& iambics) {
  std::string out;
  for (std::size_t i = 0; i < iambics.size(); ++i) {
    if (i) out += "\n";
    out += render_iambic(iambics[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------

void run_ingest(const RunConfig& cfg, std::ostream& out) {
  const auto corpus = load_corpus(require_path(cfg, "corpus"));
  const long test_count = cfg.get_int("test_count");
  if (test_count < 0 || static_cast<std::size_t>(test_count) >= corpus.size()) {
    throw UsageError(kModule, "test_count " + std::to_string(test_count) + " must be in [0, " +
                                  std::to_string(corpus.size()) + ")");
  }
  const auto split = split_corpus(corpus.size(), static_cast<std::size_t>(test_count), cfg.get_u64("split_seed"));
  std::vector<Iambic> train, test;
  for (std::size_t i : split.train) train.push_back(corpus[i]);
  for (std::size_t i : split.test) test.push_back(corpus[i]);

  // Vocabulary and tunes come from the training side only.
  const Vocabulary vocab = build_vocabulary(train, static_cast<int>(cfg.get_int("min_count")));
  const TuneRegistry tunes = TuneRegistry::from_iambics(corpus);

  const fs::path dir = cfg.work_dir();
  write_text(dir / kVocabFile, render_vocabulary(vocab));
  write_text(dir / kTunesFile, tunes.joined("\n") + "\n");
  write_text(dir / kTrainCorpus, render_corpus(train));
  write_text(dir / kTestCorpus, render_corpus(test));
  write_text(dir / kTrainPairs, render_pairs(make_train_pairs(train, vocab, tunes)));
  write_text(dir / kTestPairs, render_pairs(make_train_pairs(test, vocab, tunes)));
  out << "ingest: " << corpus.size() << " iambics, " << train.size() << " train, " << test.size() << " test, vocabulary "
      << vocab.size() << ", tunes " << tunes.size() << "\n";
}

void run_pretrain(const RunConfig& cfg, std::ostream& out) {
  const Vocabulary vocab = parse_vocabulary(read_file(require_artifact(cfg, kVocabFile, "ingest")));
  const auto train = load_corpus(require_artifact(cfg, kTrainCorpus, "ingest"));
  const SkipGramResult result = train_skipgram(skipgram_corpus(train, vocab), vocab.size(), cfg.skipgram_config());
  const fs::path path = cfg.vectors_path();
  write_text(path, render_vectors(result.embedding, vocab));
  char buf[64];
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu\t%.9f\n", e + 1, result.epoch_loss[e]);
    out << "skip-gram epoch " << buf;
  }
  out << "pretrain: wrote " << path.string() << "\n";
}

void run_train(const RunConfig& cfg, std::ostream& out) {
  apply_threads(cfg);
  const Vocabulary vocab = parse_vocabulary(read_file(require_artifact(cfg, kVocabFile, "ingest")));
  const TuneRegistry tunes = load_tunes(require_artifact(cfg, kTunesFile, "ingest"));
  const auto pairs = parse_pairs(read_file(require_artifact(cfg, kTrainPairs, "ingest")));
  for (const auto& p : pairs) {
    if (p.tune_id < 0 || p.tune_id >= tunes.size()) throw DataError(kModule, "pair tune id out of range");
  }

  const ModelConfig mc = cfg.model_config(vocab.size(), tunes.size());
  Checkpoint ckpt{Seq2SeqModel::random(mc, cfg.get_u64("seed"), cfg.get_double("init_scale"),
                                       cfg.get_u64("indicator_seed")),
                  vocab, tunes, cfg.get_u64("seed")};
  if (!cfg.get("vectors").empty()) {
    const LoadedVectors loaded = read_vectors(require_path(cfg, "vectors"), vocab);
    init_embedding(ckpt.model, loaded.embedding, cfg.strategy());
    if (loaded.missing_rows > 0) out << "train: " << loaded.missing_rows << " vocabulary rows missing from vectors\n";
  }

  const fs::path ckpt_path = cfg.checkpoint_path();
  std::string log;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochStats& s) {
    const std::string line = format_epoch_line(s);
    log += line + "\n";
    out << "epoch " << line << "\n";
  };
  hooks.on_checkpoint = [&](int epoch, const Seq2SeqModel& m) {
    Checkpoint snap{m, vocab, tunes, ckpt.seed};
    fs::path p = ckpt_path;
    p.replace_extension(".epoch" + std::to_string(epoch) + ".ckpt");
    save_checkpoint(p, snap);
  };
  train(ckpt.model, pairs, cfg.train_config(), hooks);
  write_text(cfg.work_dir() / kTrainLog, log);
  if (ckpt_path.has_parent_path()) fs::create_directories(ckpt_path.parent_path());
  save_checkpoint(ckpt_path, ckpt);
  out << "train: " << pairs.size() << " pairs, " << ckpt.model.parameter_count() << " parameters, embedding "
      << (ckpt.model.embedding_trainable ? "trainable" : "fixed") << ", wrote " << ckpt_path.string() << "\n";
}

GenerationResult run_generate(const RunConfig& cfg, const std::string& cue, const std::string& tune,
                              const fs::path& trace, std::ostream& out) {
  apply_threads(cfg);
  const Checkpoint ckpt = load_checkpoint(cfg.checkpoint_path());
  ckpt.tunes.id_of(tune);  // unknown tunes fail here with the registered list
  const auto schemas = load_schema_dir(require_path(cfg, "schemas"));
  auto schema = schemas.find(tune);
  if (schema == schemas.end()) throw UsageError(kModule, "no schema for tune '" + tune + "'");
  const ToneTable tones = load_tone_table(require_path(cfg, "tone_table"));
  const RhymeTable rhymes = load_rhyme_table(require_path(cfg, "rhyme_table"));

  GenerationResult result = generate(ckpt.model, ckpt.vocab, ckpt.tunes, schema->second, tones, rhymes,
                                     utf8::decode(cue), cfg.generation_config());
  for (char32_t ch : result.unknown_cue_chars) out << "warning: cue character '" << utf8::encode(ch) << "' is unknown\n";
  for (const auto& v : result.cue_violations) out << "warning: cue " << v.describe() << "\n";
  if (!result.completed) out << "warning: stopped after max_steps before completing the schema\n";

  const fs::path trace_path = trace.empty() ? cfg.work_dir() / kTraceFile : trace;
  write_text(trace_path, render_trace(result.trace));
  out << render_iambic(result.iambic);
  return result;
}

bool run_validate(const RunConfig& cfg, const fs::path& file, std::ostream& out) {
  if (!fs::exists(file)) throw UsageError(kModule, "file not found: " + file.string());
  const auto iambics = load_corpus(file);
  const auto schemas = load_schema_dir(require_path(cfg, "schemas"));
  const ToneTable tones = load_tone_table(require_path(cfg, "tone_table"));
  const RhymeTable rhymes = load_rhyme_table(require_path(cfg, "rhyme_table"));
  bool all = true;
  for (std::size_t i = 0; i < iambics.size(); ++i) {
    auto schema = schemas.find(iambics[i].tune_name);
    if (schema == schemas.end()) throw UsageError(kModule, "no schema for tune '" + iambics[i].tune_name + "'");
    const ComplianceSummary s = compliance_report(iambics[i], schema->second, tones, rhymes);
    out << "iambic " << i << " (" << iambics[i].tune_name << "): " << (s.compliant() ? "compliant" : "non-compliant")
        << "\n";
    for (const auto& v : s.violations) out << "  " << v.describe() << "\n";
    all = all && s.compliant();
  }
  return all;
}

EvalReport run_evaluate(const RunConfig& cfg, std::ostream& out) {
  apply_threads(cfg);
  const Checkpoint ckpt = load_checkpoint(cfg.checkpoint_path());
  const auto train = load_corpus(require_artifact(cfg, kTrainCorpus, "ingest"));
  const auto test = load_corpus(require_artifact(cfg, kTestCorpus, "ingest"));
  const auto schemas = load_schema_dir(require_path(cfg, "schemas"));
  const ToneTable tones = load_tone_table(require_path(cfg, "tone_table"));
  const RhymeTable rhymes = load_rhyme_table(require_path(cfg, "rhyme_table"));

  const auto refs = build_reference_sets(test, train, static_cast<int>(cfg.get_int("ref_k")));
  EvalReport report = evaluate_corpus(ckpt.model, ckpt.vocab, ckpt.tunes, schemas, tones, rhymes, test, refs,
                                      cfg.generation_config());
  const std::string text = render_eval_report(report);
  write_text(cfg.work_dir() / kEvalFile, text);
  out << text;
  return report;
}

ModelConfig toy_model_config() {
  ModelConfig m;
  m.vocab_size = 12;
  m.embed_dim = 6;
  m.enc_hidden = 8;
  m.dec_hidden = 8;
  m.nonrec = 10;
  m.maxout = 5;
  m.attn_dim = 6;
  m.indicator_dim = 6;
  m.num_tunes = 2;
  return m;
}

bool run_gradcheck(const RunConfig& cfg, std::ostream& out) {
  const Vocabulary vocab = Vocabulary::from_chars({U'春', U'花', U'秋', U'月', U'何', U'时', U'了', U'往'});
  const TuneRegistry tunes({"Toy A", "Toy B"});
  const Iambic poem{"Toy B", {U"春花秋", U"月何时了"}, {kComma, kPeriod}};
  const TrainPair pair = make_train_pairs({poem}, vocab, tunes).front();

  Seq2SeqModel model = Seq2SeqModel::random(toy_model_config(), cfg.get_u64("gc_seed"), 0.5, cfg.get_u64("gc_seed"));
  model.embedding_trainable = true;
  const ad::GradCheckReport report =
      check_pair_gradients(model, pair, cfg.get_double("gc_step"), cfg.get_double("gc_tolerance"));
  char buf[160];
  for (const auto& e : report.entries) {
    std::snprintf(buf, sizeof buf, "%-12s checked=%-4zu max_rel=%.3e max_abs=%.3e\n", e.name.c_str(), e.checked,
                  e.max_rel_error, e.max_abs_error);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "grad-check: %zu tensors, max relative error %.3e (tolerance %.1e): %s\n",
                report.entries.size(), report.max_rel_error(), report.tolerance, report.passed() ? "PASS" : "FAIL");
  out << buf;
  return report.passed();
}

}  // namespace songci::app
