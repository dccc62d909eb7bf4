#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "songci/corpus.hpp"
#include "songci/model.hpp"

namespace songci {

// Cursor over a schema. Positions [0, len) are character cells; position
// len is the line's terminator cell.
class GenerationConstraint {
 public:
  explicit GenerationConstraint(const TuneSchema& schema, std::size_t start_line = 0);

  const TuneSchema& schema() const { return *schema_; }
  bool finished() const { return line_ >= schema_->lines.size(); }
  std::size_t line() const { return line_; }
  std::size_t position() const { return pos_; }
  const LinePattern& current_line() const;

  bool at_terminator() const;
  // Tone constraint of the current character cell.
  ToneConstraint cell() const;
  // Last character of a rhymed line.
  bool at_rhyme_cell() const;

  std::optional<int> committed_rhyme(const std::string& label) const;
  // First commitment per label wins; later calls are ignored.
  void commit_rhyme(const std::string& label, int group);

  // Moves past the current cell, committing the rhyme group of `emitted`
  // when it fills a rhymed-line final cell.
  void advance(char32_t emitted, const RhymeTable& rhymes);

 private:
  const TuneSchema* schema_;
  std::size_t line_ = 0;
  std::size_t pos_ = 0;
  std::map<std::string, int> committed_;
};

bool admissible(char32_t candidate, const GenerationConstraint& constraint, const ToneTable& tones,
                const RhymeTable& rhymes);

struct GenerationConfig {
  int n_best = 10;
  int max_steps = 400;

  void validate() const;
};

struct TraceStep {
  int step = 0;
  int line = 0;
  int pos = 0;
  std::vector<std::pair<int, double>> nbest;  // (id, probability), best first
  int chosen = 0;
  bool admissible = false;
  bool forced = false;  // emitted from outside the n-best list
  std::vector<double> alpha;
};

struct GenerationResult {
  Iambic iambic;  // cue line first
  std::vector<TraceStep> trace;
  std::vector<int> emitted_ids;
  bool completed = false;  // false when max_steps stopped the run
  std::vector<Violation> cue_violations;
  std::vector<char32_t> unknown_cue_chars;

  // Every step picked an admissible candidate from its n-best list.
  bool fully_admissible() const;
};

// Splits the cue into its text and terminator; a missing terminator is
// taken from the schema's first line.
std::pair<std::u32string, char32_t> split_cue(std::u32string_view cue, const TuneSchema& schema);

// Cue ids as used for training: BOS, text, terminator, EOS.
std::vector<int> cue_ids(const Vocabulary& vocab, std::u32string_view text, char32_t terminator);

// Greedy n-best filtered generation under `schema`.
GenerationResult generate(const Seq2SeqModel& model, const Vocabulary& vocab, const TuneRegistry& tunes,
                          const TuneSchema& schema, const ToneTable& tones, const RhymeTable& rhymes,
                          std::u32string_view cue, const GenerationConfig& config);

// Plain argmax decoding until EOS or max_steps; no regulation applied.
std::vector<int> greedy_decode(const Seq2SeqModel& model, const std::vector<int>& cue, int tune_id, int max_steps);

struct ComplianceSummary {
  int line_count = 0;
  int length = 0;
  int tone = 0;
  int rhyme = 0;
  int terminator = 0;
  int unknown = 0;
  std::vector<Violation> violations;

  bool compliant() const { return violations.empty(); }
};

ComplianceSummary compliance_report(const Iambic& iambic, const TuneSchema& schema, const ToneTable& tones,
                                    const RhymeTable& rhymes);

// One tab-separated record per step.
std::string render_trace(const std::vector<TraceStep>& trace);

}  // namespace songci
