#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace songci {

// The two line terminators that may close a sentence.
inline constexpr char32_t kComma = U'，';
inline constexpr char32_t kPeriod = U'。';

inline bool is_terminator(char32_t ch) { return ch == kComma || ch == kPeriod; }

enum class Tone { Level, Downward, Both };
enum class ToneConstraint { Any, Level, Downward };

char tone_code(Tone tone);
char constraint_code(ToneConstraint constraint);

// True when a character of `tone` may fill a cell constrained by `constraint`.
bool tone_satisfies(Tone tone, ToneConstraint constraint);

using ToneTable = std::unordered_map<char32_t, Tone>;
using RhymeTable = std::unordered_map<char32_t, int>;

struct CharEntry {
  char32_t ch = 0;
  Tone tone = Tone::Both;
  std::optional<int> rhyme_group;
};

CharEntry lookup_char(char32_t ch, const ToneTable& tones, const RhymeTable& rhymes);

struct Iambic {
  std::string tune_name;
  std::vector<std::u32string> lines;  // punctuation stripped
  std::vector<char32_t> terminators;  // one per line

  // Line i followed by its terminator, for i in [from, size).
  std::u32string text(std::size_t from = 0) const;
};

struct LinePattern {
  std::vector<ToneConstraint> positions;
  bool rhymed = false;
  // Rhymed lines sharing a label must end in one rhyme group. The empty label
  // is the default group for a bare "R".
  std::string rhyme_label;
  char32_t terminator = kPeriod;

  bool operator==(const LinePattern&) const = default;
};

struct TuneSchema {
  std::string tune_name;
  std::vector<LinePattern> lines;

  std::size_t total_chars() const;
  bool operator==(const TuneSchema&) const = default;
};

class Vocabulary {
 public:
  static constexpr int kBos = 0;
  static constexpr int kEos = 1;
  static constexpr int kUnk = 2;
  static constexpr int kPad = 3;
  static constexpr int kNumSpecials = 4;

  Vocabulary();

  // Specials first, then chars in the given order. Duplicates are rejected.
  static Vocabulary from_chars(const std::vector<char32_t>& chars);

  int size() const { return static_cast<int>(tokens_.size()); }
  bool is_special(int id) const { return id >= 0 && id < kNumSpecials; }
  bool contains(char32_t ch) const { return id_of_.count(ch) != 0; }

  // Unknown characters map to kUnk.
  int id_of(char32_t ch) const;
  // Throws for special ids and out-of-range ids.
  char32_t char_of(int id) const;
  // Human-readable token, "<bos>" etc. for specials.
  std::string token(int id) const;

  std::vector<int> encode(std::u32string_view text) const;
  std::u32string decode(const std::vector<int>& ids) const;

  // Characters in id order, specials excluded.
  const std::vector<char32_t>& chars() const { return chars_; }

  bool operator==(const Vocabulary& other) const { return chars_ == other.chars_; }

 private:
  std::vector<std::string> tokens_;
  std::vector<char32_t> chars_;
  std::unordered_map<char32_t, int> id_of_;
};

// Sorted tune names; the position of a name is its tune id.
class TuneRegistry {
 public:
  TuneRegistry() = default;
  explicit TuneRegistry(std::vector<std::string> names);

  static TuneRegistry from_iambics(const std::vector<Iambic>& iambics);

  int size() const { return static_cast<int>(names_.size()); }
  std::optional<int> find(const std::string& name) const;
  // Throws UsageError listing the registered names.
  int id_of(const std::string& name) const;
  const std::string& name_of(int id) const;
  const std::vector<std::string>& names() const { return names_; }
  std::string joined(const std::string& sep = ", ") const;

 private:
  std::vector<std::string> names_;
};

struct TrainPair {
  std::vector<int> cue_ids;     // BOS, first line, terminator, EOS
  std::vector<int> target_ids;  // remaining lines with terminators, EOS
  int tune_id = 0;

  bool operator==(const TrainPair&) const = default;
};

enum class ViolationKind { LineCount, LineLength, Tone, Rhyme, Terminator, Unknown };

const char* violation_kind_name(ViolationKind kind);

struct Violation {
  int line = -1;      // -1 for whole-poem facts
  int position = -1;  // -1 for whole-line facts
  ViolationKind kind = ViolationKind::Unknown;
  std::string expected;
  std::string found;

  std::string describe() const;
};

// Parsing. Every function throws DataError with a location on malformed input.
std::vector<Iambic> parse_corpus(std::string_view text);
std::vector<Iambic> load_corpus(const std::filesystem::path& path);
std::string render_iambic(const Iambic& iambic);

ToneTable parse_tone_table(std::string_view text);
ToneTable load_tone_table(const std::filesystem::path& path);
RhymeTable parse_rhyme_table(std::string_view text);
RhymeTable load_rhyme_table(const std::filesystem::path& path);

TuneSchema parse_tune_schema(std::string_view text);
TuneSchema compile_tune_schema(const std::filesystem::path& path);
std::string render_tune_schema(const TuneSchema& schema);
// Every *.schema file in `dir`, keyed by tune name.
std::map<std::string, TuneSchema> load_schema_dir(const std::filesystem::path& dir);

Vocabulary build_vocabulary(const std::vector<Iambic>& iambics, int min_count = 1);

std::vector<TrainPair> make_train_pairs(const std::vector<Iambic>& iambics, const Vocabulary& vocab,
                                        const TuneRegistry& registry);

// Seeded split into (train, test); both keep corpus order.
struct CorpusSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};
CorpusSplit split_corpus(std::size_t count, std::size_t test_count, std::uint64_t seed);

std::vector<Violation> validate_iambic(const Iambic& iambic, const TuneSchema& schema,
                                       const ToneTable& tones, const RhymeTable& rhymes);

std::string read_file(const std::filesystem::path& path);

}  // namespace songci
