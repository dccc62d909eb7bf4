#include "songci/generation.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "songci/error.hpp"

namespace songci {

namespace {

constexpr const char* kModule = "generation";

// Ids ranked by probability, ties by id.
std::vector<int> ranked(const Tensor& probs) {
  std::vector<int> ids(probs.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
    return probs[static_cast<std::size_t>(a)] > probs[static_cast<std::size_t>(b)];
  });
  return ids;
}

bool is_character(const Vocabulary& vocab, int id) { return !vocab.is_special(id) && id < vocab.size(); }

}  // namespace

// ---------------------------------------------------------------------------
// GenerationConstraint

GenerationConstraint::GenerationConstraint(const TuneSchema& schema, std::size_t start_line)
    : schema_(&schema), line_(start_line) {}

const LinePattern& GenerationConstraint::current_line() const {
  if (finished()) throw UsageError(kModule, "constraint cursor is finished");
  return schema_->lines[line_];
}

bool GenerationConstraint::at_terminator() const { return pos_ == current_line().positions.size(); }

ToneConstraint GenerationConstraint::cell() const {
  const auto& line = current_line();
  if (pos_ >= line.positions.size()) throw UsageError(kModule, "cursor is on a terminator cell");
  return line.positions[pos_];
}

bool GenerationConstraint::at_rhyme_cell() const {
  const auto& line = current_line();
  return line.rhymed && pos_ + 1 == line.positions.size();
}

std::optional<int> GenerationConstraint::committed_rhyme(const std::string& label) const {
  auto it = committed_.find(label);
  if (it == committed_.end()) return std::nullopt;
  return it->second;
}

void GenerationConstraint::commit_rhyme(const std::string& label, int group) { committed_.emplace(label, group); }

void GenerationConstraint::advance(char32_t emitted, const RhymeTable& rhymes) {
  if (finished()) throw UsageError(kModule, "advance past the end of the schema");
  if (at_terminator()) {
    ++line_;
    pos_ = 0;
    return;
  }
  if (at_rhyme_cell()) {
    if (auto it = rhymes.find(emitted); it != rhymes.end()) commit_rhyme(current_line().rhyme_label, it->second);
  }
  ++pos_;
}

bool admissible(char32_t candidate, const GenerationConstraint& constraint, const ToneTable& tones,
                const RhymeTable& rhymes) {
  if (constraint.finished()) return false;
  if (constraint.at_terminator()) return candidate == constraint.current_line().terminator;
  if (is_terminator(candidate)) return false;
  const ToneConstraint cell = constraint.cell();
  if (cell != ToneConstraint::Any) {
    auto it = tones.find(candidate);
    if (it == tones.end() || !tone_satisfies(it->second, cell)) return false;
  }
  if (constraint.at_rhyme_cell()) {
    auto it = rhymes.find(candidate);
    if (it == rhymes.end()) return false;
    const auto committed = constraint.committed_rhyme(constraint.current_line().rhyme_label);
    if (committed && *committed != it->second) return false;
  }
  return true;
}

void GenerationConfig::validate() const {
  if (n_best < 1) throw UsageError(kModule, "n_best must be >= 1");
  if (max_steps < 1) throw UsageError(kModule, "max_steps must be >= 1");
}

bool GenerationResult::fully_admissible() const {
  return std::all_of(trace.begin(), trace.end(), [](const TraceStep& s) { return s.admissible && !s.forced; });
}

std::pair<std::u32string, char32_t> split_cue(std::u32string_view cue, const TuneSchema& schema) {
  std::u32string text(cue);
  while (!text.empty() && (text.back() == U' ' || text.back() == U'\n' || text.back() == U'\r')) text.pop_back();
  char32_t term = schema.lines.front().terminator;
  if (!text.empty() && is_terminator(text.back())) {
    term = text.back();
    text.pop_back();
  }
  if (text.empty()) throw UsageError(kModule, "cue sentence is empty");
  if (std::any_of(text.begin(), text.end(), is_terminator)) {
    throw UsageError(kModule, "cue must be a single sentence");
  }
  return {text, term};
}

std::vector<int> cue_ids(const Vocabulary& vocab, std::u32string_view text, char32_t terminator) {
  std::vector<int> ids{Vocabulary::kBos};
  for (int id : vocab.encode(text)) ids.push_back(id);
  ids.push_back(vocab.id_of(terminator));
  ids.push_back(Vocabulary::kEos);
  return ids;
}

GenerationResult generate(const Seq2SeqModel& model, const Vocabulary& vocab, const TuneRegistry& tunes,
                          const TuneSchema& schema, const ToneTable& tones, const RhymeTable& rhymes,
                          std::u32string_view cue, const GenerationConfig& config) {
  config.validate();
  if (vocab.size() != model.config.vocab_size) throw UsageError(kModule, "vocabulary does not match the model");
  const int tune_id = tunes.id_of(schema.tune_name);

  GenerationResult result;
  auto [cue_text, cue_term] = split_cue(cue, schema);
  for (char32_t ch : cue_text) {
    if (!vocab.contains(ch)) result.unknown_cue_chars.push_back(ch);
  }

  Iambic& out = result.iambic;
  out.tune_name = schema.tune_name;
  out.lines.push_back(cue_text);
  out.terminators.push_back(cue_term);
  {
    Iambic cue_only = out;
    TuneSchema first_line{schema.tune_name, {schema.lines.front()}};
    first_line.lines.front().rhymed = false;
    result.cue_violations = validate_iambic(cue_only, first_line, tones, rhymes);
  }

  GenerationConstraint constraint(schema, 1);
  if (schema.lines.front().rhymed) {
    if (auto it = rhymes.find(cue_text.back()); it != rhymes.end()) {
      constraint.commit_rhyme(schema.lines.front().rhyme_label, it->second);
    }
  }

  ad::Graph g;
  BoundModel m = bind(g, model);
  const auto ids = cue_ids(vocab, cue_text, cue_term);
  Encoded enc = encode(m, ids);
  LstmState state = init_decoder_state(m, enc, tune_id);
  int prev = Vocabulary::kBos;
  std::u32string line;

  for (int step = 0; step < config.max_steps && !constraint.finished(); ++step) {
    DecodeStep ds = decode_step(m, state, prev, enc);
    const Tensor& probs = ds.probs.value();
    const auto order = ranked(probs);
    const std::size_t n = std::min(order.size(), static_cast<std::size_t>(config.n_best));

    TraceStep ts;
    ts.step = step;
    ts.line = static_cast<int>(constraint.line());
    ts.pos = static_cast<int>(constraint.position());
    for (std::size_t k = 0; k < n; ++k) ts.nbest.emplace_back(order[k], probs[static_cast<std::size_t>(order[k])]);
    ts.alpha.assign(ds.alpha.value().data().begin(), ds.alpha.value().data().end());

    int chosen = -1;
    for (std::size_t k = 0; k < n && chosen < 0; ++k) {
      const int id = order[k];
      if (is_character(vocab, id) && admissible(vocab.char_of(id), constraint, tones, rhymes)) {
        chosen = id;
        ts.admissible = true;
      }
    }
    if (chosen < 0) {
      if (constraint.at_terminator()) {
        // Structure is never left to chance: insert the terminator.
        chosen = vocab.id_of(constraint.current_line().terminator);
        ts.forced = true;
      } else {
        // Best non-structural candidate; the filter has nothing to offer.
        for (std::size_t k = 0; k < order.size() && chosen < 0; ++k) {
          const int id = order[k];
          if (is_character(vocab, id) && !is_terminator(vocab.char_of(id))) {
            chosen = id;
            ts.forced = k >= n;
          }
        }
        if (chosen < 0) throw DataError(kModule, "vocabulary has no characters to emit");
      }
    }
    ts.chosen = chosen;

    const char32_t ch = vocab.char_of(chosen);
    if (constraint.at_terminator()) {
      out.lines.push_back(line);
      out.terminators.push_back(ch);
      line.clear();
    } else {
      line.push_back(ch);
    }
    constraint.advance(ch, rhymes);
    result.emitted_ids.push_back(chosen);
    result.trace.push_back(std::move(ts));
    state = ds.state;
    prev = chosen;
  }
  result.completed = constraint.finished();
  if (!line.empty()) {
    // Truncated by max_steps mid-line.
    out.lines.push_back(line);
    out.terminators.push_back(schema.lines[std::min(constraint.line(), schema.lines.size() - 1)].terminator);
  }
  return result;
}

std::vector<int> greedy_decode(const Seq2SeqModel& model, const std::vector<int>& cue, int tune_id, int max_steps) {
  ad::Graph g;
  BoundModel m = bind(g, model);
  Encoded enc = encode(m, cue);
  LstmState state = init_decoder_state(m, enc, tune_id);
  std::vector<int> out;
  int prev = Vocabulary::kBos;
  for (int step = 0; step < max_steps; ++step) {
    DecodeStep ds = decode_step(m, state, prev, enc);
    const Tensor& p = ds.probs.value();
    const int best = static_cast<int>(std::max_element(p.data().begin(), p.data().end()) - p.data().begin());
    if (best == Vocabulary::kEos) break;
    out.push_back(best);
    state = ds.state;
    prev = best;
  }
  return out;
}

ComplianceSummary compliance_report(const Iambic& iambic, const TuneSchema& schema, const ToneTable& tones,
                                    const RhymeTable& rhymes) {
  ComplianceSummary s;
  s.violations = validate_iambic(iambic, schema, tones, rhymes);
  for (const auto& v : s.violations) {
    switch (v.kind) {
      case ViolationKind::LineCount:
        ++s.line_count;
        break;
      case ViolationKind::LineLength:
        ++s.length;
        break;
      case ViolationKind::Tone:
        ++s.tone;
        break;
      case ViolationKind::Rhyme:
        ++s.rhyme;
        break;
      case ViolationKind::Terminator:
        ++s.terminator;
        break;
      case ViolationKind::Unknown:
        ++s.unknown;
        break;
    }
  }
  return s;
}

std::string render_trace(const std::vector<TraceStep>& trace) {
  std::string out;
  char buf[64];
  for (const auto& s : trace) {
    std::snprintf(buf, sizeof buf, "step=%d\tline=%d\tpos=%d\tnbest=", s.step, s.line, s.pos);
    out += buf;
    for (std::size_t k = 0; k < s.nbest.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%s%d:%.17g", k ? "," : "", s.nbest[k].first, s.nbest[k].second);
      out += buf;
    }
    std::snprintf(buf, sizeof buf, "\tchosen=%d\tadmissible=%d\tforced=%d\talpha=", s.chosen, s.admissible ? 1 : 0,
                  s.forced ? 1 : 0);
    out += buf;
    for (std::size_t k = 0; k < s.alpha.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%s%.17g", k ? "," : "", s.alpha[k]);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace songci
