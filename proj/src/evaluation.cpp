#include "songci/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <numeric>

#include "songci/error.hpp"
#include "songci/utf8.hpp"

namespace songci {

namespace {

constexpr const char* kModule = "evaluation";

std::u32string strip_terminators(std::u32string_view s) {
  std::u32string out;
  for (char32_t c : s) {
    if (!is_terminator(c)) out.push_back(c);
  }
  return out;
}

using Bigram = std::pair<char32_t, char32_t>;

std::map<char32_t, int> unigram_counts(std::u32string_view s) {
  std::map<char32_t, int> out;
  for (char32_t c : s) ++out[c];
  return out;
}

std::map<Bigram, int> bigram_counts(std::u32string_view s) {
  std::map<Bigram, int> out;
  for (std::size_t i = 1; i < s.size(); ++i) ++out[{s[i - 1], s[i]}];
  return out;
}

// Sum over candidate n-grams of min(count, max count in any reference).
template <typename Key>
int clipped_matches(const std::map<Key, int>& cand, const std::vector<std::map<Key, int>>& refs) {
  int total = 0;
  for (const auto& [key, count] : cand) {
    int best = 0;
    for (const auto& ref : refs) {
      auto it = ref.find(key);
      if (it != ref.end()) best = std::max(best, it->second);
    }
    total += std::min(count, best);
  }
  return total;
}

}  // namespace

BleuScore bleu2(std::u32string_view candidate, const std::vector<std::u32string>& references) {
  if (references.empty()) throw UsageError(kModule, "bleu2 needs at least one reference");
  const std::u32string cand = strip_terminators(candidate);
  if (cand.empty()) throw UsageError(kModule, "bleu2 candidate is empty");

  std::vector<std::u32string> refs;
  refs.reserve(references.size());
  for (const auto& r : references) refs.push_back(strip_terminators(r));

  std::vector<std::map<char32_t, int>> ref_uni;
  std::vector<std::map<Bigram, int>> ref_bi;
  for (const auto& r : refs) {
    ref_uni.push_back(unigram_counts(r));
    ref_bi.push_back(bigram_counts(r));
  }

  BleuScore s;
  const double c = static_cast<double>(cand.size());
  s.p1 = clipped_matches(unigram_counts(cand), ref_uni) / c;

  // Closest reference length, shorter on ties.
  std::size_t r = refs.front().size();
  for (const auto& ref : refs) {
    const auto d_new = std::abs(static_cast<long>(ref.size()) - static_cast<long>(cand.size()));
    const auto d_old = std::abs(static_cast<long>(r) - static_cast<long>(cand.size()));
    if (d_new < d_old || (d_new == d_old && ref.size() < r)) r = ref.size();
  }
  s.brevity_penalty = cand.size() < r ? std::exp(1.0 - static_cast<double>(r) / c) : 1.0;

  if (cand.size() < 2) {
    s.p2 = 0.0;
    s.bleu2 = s.brevity_penalty * s.p1;
    return s;
  }
  const double bigrams = static_cast<double>(cand.size() - 1);
  const int matches = clipped_matches(bigram_counts(cand), ref_bi);
  s.p2 = matches > 0 ? matches / bigrams : 1.0 / (2.0 * bigrams);
  s.bleu2 = s.p1 > 0.0 ? s.brevity_penalty * std::exp(0.5 * (std::log(s.p1) + std::log(s.p2))) : 0.0;
  return s;
}

double bigram_dice(std::u32string_view a, std::u32string_view b) {
  if (a == b) return 1.0;
  const auto ba = bigram_counts(a);
  const auto bb = bigram_counts(b);
  const double total = static_cast<double>(a.size() > 1 ? a.size() - 1 : 0) +
                       static_cast<double>(b.size() > 1 ? b.size() - 1 : 0);
  if (total == 0.0) return 0.0;
  int shared = 0;
  for (const auto& [key, count] : ba) {
    auto it = bb.find(key);
    if (it != bb.end()) shared += std::min(count, it->second);
  }
  return 2.0 * shared / total;
}

std::vector<ReferenceSet> build_reference_sets(const std::vector<Iambic>& test, const std::vector<Iambic>& train,
                                               int k) {
  if (k < 1) throw UsageError(kModule, "reference set size k must be >= 1");
  std::vector<ReferenceSet> out;
  out.reserve(test.size());
  for (const auto& item : test) {
    ReferenceSet set;
    set.cue = item.lines.front();
    set.tune_name = item.tune_name;
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t i = 0; i < train.size(); ++i) {
      if (train[i].tune_name != item.tune_name || train[i].lines.size() < 2) continue;
      scored.emplace_back(bigram_dice(set.cue, train[i].lines.front()), i);
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    const std::size_t take = std::min(scored.size(), static_cast<std::size_t>(k));
    for (std::size_t j = 0; j < take; ++j) {
      set.sources.push_back(scored[j].second);
      set.references.push_back(train[scored[j].second].text(1));
    }
    out.push_back(std::move(set));
  }
  return out;
}

double EvalReport::min_bleu2() const {
  double v = std::numeric_limits<double>::infinity();
  for (const auto& it : items) {
    if (it.scored) v = std::min(v, it.score.bleu2);
  }
  return scored ? v : 0.0;
}

double EvalReport::max_bleu2() const {
  double v = 0.0;
  for (const auto& it : items) {
    if (it.scored) v = std::max(v, it.score.bleu2);
  }
  return v;
}

EvalReport evaluate_corpus(const Seq2SeqModel& model, const Vocabulary& vocab, const TuneRegistry& tunes,
                           const std::map<std::string, TuneSchema>& schemas, const ToneTable& tones,
                           const RhymeTable& rhymes, const std::vector<Iambic>& test,
                           const std::vector<ReferenceSet>& references, const GenerationConfig& config) {
  if (references.size() != test.size()) {
    throw UsageError(kModule, "reference sets (" + std::to_string(references.size()) + ") do not match test items (" +
                                  std::to_string(test.size()) + ")");
  }
  EvalReport report;
  report.items.resize(test.size());
  const long n = static_cast<long>(test.size());
  std::vector<std::exception_ptr> errors(test.size());

  // Items are independent; results land in their own slots and are
  // aggregated in test order afterwards.
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    EvalItem& item = report.items[idx];
    item.cue = test[idx].lines.front();
    item.num_refs = references[idx].references.size();
    auto schema = schemas.find(test[idx].tune_name);
    if (item.num_refs == 0 || schema == schemas.end()) continue;
    try {
      std::u32string cue = item.cue;
      cue.push_back(test[idx].terminators.front());
      const GenerationResult gen = generate(model, vocab, tunes, schema->second, tones, rhymes, cue, config);
      item.candidate = gen.iambic.text(1);
      if (strip_terminators(item.candidate).empty()) {
        item.score = BleuScore{0.0, 0.0, 0.0, 0.0};
      } else {
        item.score = bleu2(item.candidate, references[idx].references);
      }
      item.scored = true;
    } catch (...) {
      errors[idx] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  double sum = 0.0;
  for (std::size_t i = 0; i < report.items.size(); ++i) {
    const auto& item = report.items[i];
    if (item.scored) {
      sum += item.score.bleu2;
      ++report.scored;
    } else if (item.num_refs == 0) {
      ++report.empty_references;
    } else {
      ++report.missing_schema;
    }
  }
  report.mean_bleu2 = report.scored ? sum / static_cast<double>(report.scored) : 0.0;
  return report;
}

std::string render_eval_report(const EvalReport& report) {
  std::string out;
  char buf[160];
  for (const auto& item : report.items) {
    if (!item.scored) continue;
    std::snprintf(buf, sizeof buf, "\t%.9f\t%.9f\t%.9f\t%.9f\t%zu\n", item.score.bleu2, item.score.p1, item.score.p2,
                  item.score.brevity_penalty, item.num_refs);
    out += utf8::encode(item.cue);
    out += buf;
  }
  std::snprintf(buf, sizeof buf,
                "# mean_bleu2=%.9f\tscored=%zu\tmin=%.9f\tmax=%.9f\texcluded_no_refs=%zu\texcluded_no_schema=%zu\n",
                report.mean_bleu2, report.scored, report.min_bleu2(), report.max_bleu2(), report.empty_references,
                report.missing_schema);
  out += buf;
  return out;
}

}  // namespace songci
