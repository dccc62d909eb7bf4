#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "songci/config.hpp"
#include "songci/corpus.hpp"
#include "songci/evaluation.hpp"
#include "songci/generation.hpp"

// Subcommand bodies. Each reads and writes artifacts under work_dir and
// reports to `out`; failures propagate as UsageError/DataError/NumericError.
namespace songci::app {

// Artifact names inside work_dir.
inline constexpr const char* kVocabFile = "vocab.txt";
inline constexpr const char* kTunesFile = "tunes.txt";
inline constexpr const char* kTrainCorpus = "train.txt";
inline constexpr const char* kTestCorpus = "test.txt";
inline constexpr const char* kTrainPairs = "train_pairs.tsv";
inline constexpr const char* kTestPairs = "test_pairs.tsv";
inline constexpr const char* kTrainLog = "train.log";
inline constexpr const char* kTraceFile = "trace.tsv";
inline constexpr const char* kEvalFile = "eval.tsv";

void write_text(const std::filesystem::path& path, const std::string& text);

std::string render_vocabulary(const Vocabulary& vocab);
Vocabulary parse_vocabulary(std::string_view text);
std::string render_pairs(const std::vector<TrainPair>& pairs);
std::vector<TrainPair> parse_pairs(std::string_view text);
std::string render_corpus(const std::vector<Iambic>& iambics);

void run_ingest(const RunConfig& cfg, std::ostream& out);
void run_pretrain(const RunConfig& cfg, std::ostream& out);
void run_train(const RunConfig& cfg, std::ostream& out);
// Empty trace path writes <work_dir>/trace.tsv.
GenerationResult run_generate(const RunConfig& cfg, const std::string& cue, const std::string& tune,
                              const std::filesystem::path& trace, std::ostream& out);
// True when every iambic in `file` complies with its tune's schema.
bool run_validate(const RunConfig& cfg, const std::filesystem::path& file, std::ostream& out);
EvalReport run_evaluate(const RunConfig& cfg, std::ostream& out);
// Toy-scale finite-difference check; true when every tensor passes.
bool run_gradcheck(const RunConfig& cfg, std::ostream& out);

// The grad-check toy: vocabulary 12, encoder 8, decoder 8, non-recurrent 10,
// maxout 5, attention 6, indicator 6, embedding 6, two tunes.
ModelConfig toy_model_config();

}  // namespace songci::app
