#pragma once

#include <map>
#include <string>
#include <vector>

#include "songci/corpus.hpp"
#include "songci/generation.hpp"
#include "songci/model.hpp"

namespace songci {

struct BleuScore {
  double bleu2 = 0.0;
  double p1 = 0.0;
  double p2 = 0.0;
  double brevity_penalty = 1.0;
};

// Character BLEU-2. Terminators are ignored on both sides. Zero bigram
// matches smooth p2 to 1 / (2 * candidate bigrams); a one-character
// candidate scores BP * p1.
BleuScore bleu2(std::u32string_view candidate, const std::vector<std::u32string>& references);

// Dice coefficient over clipped character-bigram multisets. Identical
// strings score 1 even without bigrams.
double bigram_dice(std::u32string_view a, std::u32string_view b);

struct ReferenceSet {
  std::u32string cue;
  std::string tune_name;
  std::vector<std::size_t> sources;  // indices into the training iambics
  std::vector<std::u32string> references;
};

// One set per test iambic, in test order: the k same-tune training iambics
// whose first lines best match the cue, ties by corpus order.
std::vector<ReferenceSet> build_reference_sets(const std::vector<Iambic>& test, const std::vector<Iambic>& train,
                                               int k);

struct EvalItem {
  std::u32string cue;
  std::u32string candidate;
  BleuScore score;
  std::size_t num_refs = 0;
  bool scored = false;
};

struct EvalReport {
  std::vector<EvalItem> items;
  double mean_bleu2 = 0.0;
  std::size_t scored = 0;
  std::size_t empty_references = 0;  // excluded: no same-tune training iambic
  std::size_t missing_schema = 0;    // excluded: tune has no schema

  double min_bleu2() const;
  double max_bleu2() const;
};

// Constrained generation from every test cue, scored against its set.
EvalReport evaluate_corpus(const Seq2SeqModel& model, const Vocabulary& vocab, const TuneRegistry& tunes,
                           const std::map<std::string, TuneSchema>& schemas, const ToneTable& tones,
                           const RhymeTable& rhymes, const std::vector<Iambic>& test,
                           const std::vector<ReferenceSet>& references, const GenerationConfig& config);

// "cue<TAB>bleu2<TAB>p1<TAB>p2<TAB>bp<TAB>num_refs" per scored item, then a
// summary line starting with '#'.
std::string render_eval_report(const EvalReport& report);

}  // namespace songci
