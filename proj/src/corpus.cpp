#include "songci/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "songci/error.hpp"
#include "songci/rng.hpp"
#include "songci/utf8.hpp"

namespace songci {

namespace {

constexpr const char* kModule = "corpus";

std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) {
      if (start < text.size()) lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return lines;
}

std::vector<std::string_view> split_spaces(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string at_line(std::size_t line_no) { return "line " + std::to_string(line_no); }

}  // namespace

char tone_code(Tone tone) {
  switch (tone) {
    case Tone::Level:
      return 'P';
    case Tone::Downward:
      return 'Z';
    case Tone::Both:
      return 'B';
  }
  return '?';
}

char constraint_code(ToneConstraint constraint) {
  switch (constraint) {
    case ToneConstraint::Any:
      return '*';
    case ToneConstraint::Level:
      return 'P';
    case ToneConstraint::Downward:
      return 'Z';
  }
  return '?';
}

bool tone_satisfies(Tone tone, ToneConstraint constraint) {
  switch (constraint) {
    case ToneConstraint::Any:
      return true;
    case ToneConstraint::Level:
      return tone == Tone::Level || tone == Tone::Both;
    case ToneConstraint::Downward:
      return tone == Tone::Downward || tone == Tone::Both;
  }
  return false;
}

CharEntry lookup_char(char32_t ch, const ToneTable& tones, const RhymeTable& rhymes) {
  CharEntry entry;
  entry.ch = ch;
  if (auto it = tones.find(ch); it != tones.end()) entry.tone = it->second;
  if (auto it = rhymes.find(ch); it != rhymes.end()) entry.rhyme_group = it->second;
  return entry;
}

std::u32string Iambic::text(std::size_t from) const {
  std::u32string out;
  for (std::size_t i = from; i < lines.size(); ++i) {
    out += lines[i];
    out.push_back(terminators[i]);
  }
  return out;
}

std::size_t TuneSchema::total_chars() const {
  std::size_t n = 0;
  for (const auto& line : lines) n += line.positions.size();
  return n;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() : tokens_{"<bos>", "<eos>", "<unk>", "<pad>"} {}

Vocabulary Vocabulary::from_chars(const std::vector<char32_t>& chars) {
  Vocabulary vocab;
  for (char32_t ch : chars) {
    if (vocab.id_of_.count(ch) != 0) {
      throw DataError(kModule, "duplicate vocabulary character '" + utf8::encode(ch) + "'");
    }
    vocab.id_of_.emplace(ch, vocab.size());
    vocab.tokens_.push_back(utf8::encode(ch));
    vocab.chars_.push_back(ch);
  }
  return vocab;
}

int Vocabulary::id_of(char32_t ch) const {
  auto it = id_of_.find(ch);
  return it == id_of_.end() ? kUnk : it->second;
}

char32_t Vocabulary::char_of(int id) const {
  if (id < kNumSpecials || id >= size()) {
    throw UsageError(kModule, "id " + std::to_string(id) + " does not name a character");
  }
  return chars_[static_cast<std::size_t>(id - kNumSpecials)];
}

std::string Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) return "<invalid:" + std::to_string(id) + ">";
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(std::u32string_view text) const {
  std::vector<int> ids;
  ids.reserve(text.size());
  for (char32_t ch : text) ids.push_back(id_of(ch));
  return ids;
}

std::u32string Vocabulary::decode(const std::vector<int>& ids) const {
  std::u32string out;
  for (int id : ids) {
    if (id == kBos || id == kEos || id == kPad) continue;
    if (id == kUnk) {
      out.push_back(U'�');
      continue;
    }
    out.push_back(char_of(id));
  }
  return out;
}

// ---------------------------------------------------------------------------
// TuneRegistry

TuneRegistry::TuneRegistry(std::vector<std::string> names) : names_(std::move(names)) {
  std::sort(names_.begin(), names_.end());
  names_.erase(std::unique(names_.begin(), names_.end()), names_.end());
}

TuneRegistry TuneRegistry::from_iambics(const std::vector<Iambic>& iambics) {
  std::vector<std::string> names;
  names.reserve(iambics.size());
  for (const auto& iambic : iambics) names.push_back(iambic.tune_name);
  return TuneRegistry(std::move(names));
}

std::optional<int> TuneRegistry::find(const std::string& name) const {
  auto it = std::lower_bound(names_.begin(), names_.end(), name);
  if (it == names_.end() || *it != name) return std::nullopt;
  return static_cast<int>(it - names_.begin());
}

int TuneRegistry::id_of(const std::string& name) const {
  if (auto id = find(name)) return *id;
  throw UsageError(kModule, "unknown tune '" + name + "'; registered tunes: " + joined());
}

const std::string& TuneRegistry::name_of(int id) const {
  if (id < 0 || id >= size()) throw UsageError(kModule, "unknown tune id " + std::to_string(id));
  return names_[static_cast<std::size_t>(id)];
}

std::string TuneRegistry::joined(const std::string& sep) const {
  std::string out;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (i != 0) out += sep;
    out += names_[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Violations

const char* violation_kind_name(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::LineCount:
      return "line-count";
    case ViolationKind::LineLength:
      return "line-length";
    case ViolationKind::Tone:
      return "tone";
    case ViolationKind::Rhyme:
      return "rhyme";
    case ViolationKind::Terminator:
      return "terminator";
    case ViolationKind::Unknown:
      return "unknown";
  }
  return "?";
}

std::string Violation::describe() const {
  std::ostringstream os;
  os << violation_kind_name(kind);
  if (line >= 0) os << " line " << line + 1;
  if (position >= 0) os << " pos " << position + 1;
  os << ": expected " << expected << ", found " << found;
  return os.str();
}

// ---------------------------------------------------------------------------
// File formats

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("io", "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw DataError("io", "read failure on " + path.string());
  return ss.str();
}

std::vector<Iambic> parse_corpus(std::string_view text) {
  std::vector<Iambic> out;
  const auto lines = split_lines(text);
  std::size_t i = 0;
  while (i < lines.size()) {
    if (trim(lines[i]).empty()) {
      ++i;
      continue;
    }
    const std::size_t record_index = out.size();
    const std::size_t record_start = i + 1;
    auto fail = [&](std::size_t line_no, const std::string& what) {
      throw DataError(kModule, "record " + std::to_string(record_index) + " (starting " +
                                   at_line(record_start) + "), " + at_line(line_no) + ": " + what);
    };
    Iambic iambic;
    iambic.tune_name = std::string(trim(lines[i]));
    ++i;
    while (i < lines.size() && !trim(lines[i]).empty()) {
      const std::size_t line_no = i + 1;
      std::u32string sentence;
      try {
        sentence = utf8::decode(trim(lines[i]));
      } catch (const DataError& e) {
        fail(line_no, e.what());
      }
      const char32_t last = sentence.back();
      if (!is_terminator(last)) {
        fail(line_no, "sentence must end in '，' or '。', found '" + utf8::encode(last) + "'");
      }
      sentence.pop_back();
      if (sentence.empty()) fail(line_no, "empty sentence");
      for (char32_t ch : sentence) {
        if (is_terminator(ch)) fail(line_no, "terminator inside a sentence");
      }
      iambic.lines.push_back(std::move(sentence));
      iambic.terminators.push_back(last);
      ++i;
    }
    if (iambic.lines.empty()) fail(record_start, "record has a tune name but no sentences");
    out.push_back(std::move(iambic));
  }
  return out;
}

std::vector<Iambic> load_corpus(const std::filesystem::path& path) {
  return parse_corpus(read_file(path));
}

std::string render_iambic(const Iambic& iambic) {
  std::string out = iambic.tune_name + "\n";
  for (std::size_t i = 0; i < iambic.lines.size(); ++i) {
    out += utf8::encode(iambic.lines[i]);
    out += utf8::encode(iambic.terminators[i]);
    out += "\n";
  }
  return out;
}

ToneTable parse_tone_table(std::string_view text) {
  ToneTable table;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line = trim(lines[i]);
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) {
      throw DataError("tones", at_line(i + 1) + ": expected \"char<TAB>code\"");
    }
    const auto chars = utf8::decode(trim(line.substr(0, tab)));
    const auto code = trim(line.substr(tab + 1));
    if (chars.size() != 1) throw DataError("tones", at_line(i + 1) + ": expected a single character");
    Tone tone;
    if (code == "P") {
      tone = Tone::Level;
    } else if (code == "Z") {
      tone = Tone::Downward;
    } else if (code == "B") {
      tone = Tone::Both;
    } else {
      throw DataError("tones", at_line(i + 1) + ": unknown tone code '" + std::string(code) + "'");
    }
    if (!table.emplace(chars[0], tone).second) {
      throw DataError("tones", at_line(i + 1) + ": duplicate entry for '" + utf8::encode(chars[0]) + "'");
    }
  }
  return table;
}

ToneTable load_tone_table(const std::filesystem::path& path) { return parse_tone_table(read_file(path)); }

RhymeTable parse_rhyme_table(std::string_view text) {
  RhymeTable table;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line = trim(lines[i]);
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) {
      throw DataError("rhymes", at_line(i + 1) + ": expected \"group_id<TAB>chars\"");
    }
    const std::string id_text(trim(line.substr(0, tab)));
    int group = 0;
    try {
      std::size_t used = 0;
      group = std::stoi(id_text, &used);
      if (used != id_text.size() || group < 0) throw std::invalid_argument(id_text);
    } catch (const std::exception&) {
      throw DataError("rhymes", at_line(i + 1) + ": bad group id '" + id_text + "'");
    }
    for (char32_t ch : utf8::decode(trim(line.substr(tab + 1)))) {
      if (!table.emplace(ch, group).second) {
        throw DataError("rhymes", at_line(i + 1) + ": duplicate entry for '" + utf8::encode(ch) + "'");
      }
    }
  }
  return table;
}

RhymeTable load_rhyme_table(const std::filesystem::path& path) { return parse_rhyme_table(read_file(path)); }

TuneSchema parse_tune_schema(std::string_view text) {
  const auto lines = split_lines(text);
  TuneSchema schema;
  std::size_t i = 0;
  while (i < lines.size() && trim(lines[i]).empty()) ++i;
  if (i == lines.size()) throw DataError("schema", "empty schema");
  schema.tune_name = std::string(trim(lines[i]));
  ++i;
  for (; i < lines.size(); ++i) {
    const auto line = trim(lines[i]);
    if (line.empty()) continue;
    const std::string where = at_line(i + 1);
    const auto tokens = split_spaces(line);
    if (tokens.size() < 2) throw DataError("schema", where + ": missing terminator");
    if (tokens.size() > 3) throw DataError("schema", where + ": too many fields");
    LinePattern pattern;
    for (std::size_t k = 0; k < tokens[0].size(); ++k) {
      switch (tokens[0][k]) {
        case '*':
          pattern.positions.push_back(ToneConstraint::Any);
          break;
        case 'P':
          pattern.positions.push_back(ToneConstraint::Level);
          break;
        case 'Z':
          pattern.positions.push_back(ToneConstraint::Downward);
          break;
        default:
          throw DataError("schema", where + ", position " + std::to_string(k + 1) +
                                        ": pattern character '" + std::string(1, tokens[0][k]) +
                                        "' not in {P,Z,*}");
      }
    }
    if (tokens.size() == 3) {
      const auto mark = tokens[1];
      if (mark.front() != 'R') throw DataError("schema", where + ": expected rhyme mark 'R', found '" + std::string(mark) + "'");
      for (char c : mark.substr(1)) {
        if (!std::isalnum(static_cast<unsigned char>(c))) {
          throw DataError("schema", where + ": rhyme label must be alphanumeric");
        }
      }
      pattern.rhymed = true;
      pattern.rhyme_label = std::string(mark.substr(1));
    }
    const auto term = utf8::decode(tokens.back());
    if (term.size() != 1 || !is_terminator(term[0])) {
      throw DataError("schema", where + ": missing terminator, expected '，' or '。'");
    }
    pattern.terminator = term[0];
    schema.lines.push_back(std::move(pattern));
  }
  if (schema.lines.empty()) throw DataError("schema", "tune '" + schema.tune_name + "' has no lines");
  if (std::none_of(schema.lines.begin(), schema.lines.end(), [](const LinePattern& l) { return l.rhymed; })) {
    throw DataError("schema", "tune '" + schema.tune_name + "' has no rhymed line");
  }
  return schema;
}

TuneSchema compile_tune_schema(const std::filesystem::path& path) {
  try {
    return parse_tune_schema(read_file(path));
  } catch (const DataError& e) {
    throw DataError("schema", path.filename().string() + ": " + e.what());
  }
}

std::string render_tune_schema(const TuneSchema& schema) {
  std::string out = schema.tune_name + "\n";
  for (const auto& line : schema.lines) {
    for (auto c : line.positions) out.push_back(constraint_code(c));
    if (line.rhymed) out += " R" + line.rhyme_label;
    out += " " + utf8::encode(line.terminator) + "\n";
  }
  return out;
}

std::map<std::string, TuneSchema> load_schema_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("schema", "not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".schema") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::map<std::string, TuneSchema> out;
  for (const auto& file : files) {
    auto schema = compile_tune_schema(file);
    const std::string name = schema.tune_name;
    if (!out.emplace(name, std::move(schema)).second) {
      throw DataError("schema", "tune '" + name + "' defined twice (" + file.string() + ")");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary and pairs

Vocabulary build_vocabulary(const std::vector<Iambic>& iambics, int min_count) {
  if (min_count < 1) throw UsageError(kModule, "min_count must be >= 1");
  if (iambics.empty()) throw DataError(kModule, "cannot build a vocabulary from an empty corpus");
  std::unordered_map<char32_t, long> counts;
  counts[kComma] = 0;
  counts[kPeriod] = 0;
  for (const auto& iambic : iambics) {
    for (char32_t ch : iambic.text()) ++counts[ch];
  }
  std::vector<std::pair<char32_t, long>> kept;
  for (const auto& [ch, n] : counts) {
    if (n >= min_count || is_terminator(ch)) kept.emplace_back(ch, n);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<char32_t> chars;
  chars.reserve(kept.size());
  for (const auto& entry : kept) chars.push_back(entry.first);
  return Vocabulary::from_chars(chars);
}

std::vector<TrainPair> make_train_pairs(const std::vector<Iambic>& iambics, const Vocabulary& vocab,
                                        const TuneRegistry& registry) {
  std::vector<TrainPair> pairs;
  pairs.reserve(iambics.size());
  for (std::size_t i = 0; i < iambics.size(); ++i) {
    const auto& iambic = iambics[i];
    if (iambic.lines.size() < 2) {
      throw DataError(kModule, "iambic " + std::to_string(i) + " has fewer than 2 lines");
    }
    const auto tune = registry.find(iambic.tune_name);
    if (!tune) throw DataError(kModule, "iambic " + std::to_string(i) + " uses unregistered tune '" + iambic.tune_name + "'");
    TrainPair pair;
    pair.tune_id = *tune;
    pair.cue_ids.push_back(Vocabulary::kBos);
    for (int id : vocab.encode(iambic.lines[0])) pair.cue_ids.push_back(id);
    pair.cue_ids.push_back(vocab.id_of(iambic.terminators[0]));
    pair.cue_ids.push_back(Vocabulary::kEos);
    pair.target_ids = vocab.encode(iambic.text(1));
    pair.target_ids.push_back(Vocabulary::kEos);
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

CorpusSplit split_corpus(std::size_t count, std::size_t test_count, std::uint64_t seed) {
  if (test_count >= count) {
    throw UsageError(kModule, "test_count " + std::to_string(test_count) + " leaves no training data out of " +
                                  std::to_string(count));
  }
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());
  std::vector<bool> is_test(count, false);
  for (std::size_t i = 0; i < test_count; ++i) is_test[order[i]] = true;
  CorpusSplit split;
  for (std::size_t i = 0; i < count; ++i) (is_test[i] ? split.test : split.train).push_back(i);
  return split;
}

// ---------------------------------------------------------------------------
// Validation

std::vector<Violation> validate_iambic(const Iambic& iambic, const TuneSchema& schema, const ToneTable& tones,
                                       const RhymeTable& rhymes) {
  std::vector<Violation> out;
  if (iambic.lines.size() != schema.lines.size()) {
    out.push_back({-1, -1, ViolationKind::LineCount, std::to_string(schema.lines.size()),
                   std::to_string(iambic.lines.size())});
  }
  const std::size_t n = std::min(iambic.lines.size(), schema.lines.size());

  // label -> (line, group) of the rhymed finals that have a known group
  std::map<std::string, std::vector<std::pair<int, int>>> rhyme_finals;

  for (std::size_t li = 0; li < n; ++li) {
    const auto& line = iambic.lines[li];
    const auto& pattern = schema.lines[li];
    const int L = static_cast<int>(li);
    // A line of the wrong length has no cell alignment, so its tones go unchecked.
    const bool aligned = line.size() == pattern.positions.size();
    if (!aligned) {
      out.push_back({L, -1, ViolationKind::LineLength, std::to_string(pattern.positions.size()),
                     std::to_string(line.size())});
    }
    for (std::size_t p = 0; aligned && p < line.size(); ++p) {
      const auto constraint = pattern.positions[p];
      if (constraint == ToneConstraint::Any) continue;
      const int P = static_cast<int>(p);
      const std::string expected(1, constraint_code(constraint));
      auto it = tones.find(line[p]);
      if (it == tones.end()) {
        out.push_back({L, P, ViolationKind::Unknown, expected, utf8::encode(line[p]) + " (no tone entry)"});
      } else if (!tone_satisfies(it->second, constraint)) {
        out.push_back({L, P, ViolationKind::Tone, expected, std::string(1, tone_code(it->second))});
      }
    }
    if (iambic.terminators[li] != pattern.terminator) {
      out.push_back({L, -1, ViolationKind::Terminator, utf8::encode(pattern.terminator),
                     utf8::encode(iambic.terminators[li])});
    }
    if (pattern.rhymed && !line.empty()) {
      const int last = static_cast<int>(line.size()) - 1;
      auto it = rhymes.find(line.back());
      if (it == rhymes.end()) {
        out.push_back({L, last, ViolationKind::Unknown, "rhyme group", utf8::encode(line.back()) + " (no rhyme entry)"});
      } else {
        rhyme_finals[pattern.rhyme_label].emplace_back(L, it->second);
      }
    }
  }

  // Within a label the plurality group is the reference, earliest line wins ties.
  for (const auto& [label, finals] : rhyme_finals) {
    std::map<int, int> votes;
    for (const auto& f : finals) ++votes[f.second];
    int best_group = finals.front().second;
    for (const auto& f : finals) {
      if (votes[f.second] > votes[best_group]) best_group = f.second;
    }
    for (const auto& [line_idx, group] : finals) {
      if (group != best_group) {
        const int last = static_cast<int>(iambic.lines[static_cast<std::size_t>(line_idx)].size()) - 1;
        out.push_back({line_idx, last, ViolationKind::Rhyme, "group " + std::to_string(best_group),
                       "group " + std::to_string(group)});
      }
    }
  }

  std::stable_sort(out.begin(), out.end(), [](const Violation& a, const Violation& b) {
    return a.line != b.line ? a.line < b.line : a.position < b.position;
  });
  return out;
}

}  // namespace songci
