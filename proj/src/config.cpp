#include "songci/config.hpp"

#include <cerrno>
#include <cstdlib>
#include <sstream>

#include "songci/corpus.hpp"
#include "songci/error.hpp"

namespace songci {

namespace {

constexpr const char* kModule = "config";

const std::vector<std::pair<std::string, std::string>>& defaults() {
  static const std::vector<std::pair<std::string, std::string>> d = {
      // paths
      {"corpus", ""},
      {"tone_table", ""},
      {"rhyme_table", ""},
      {"schemas", ""},
      {"vectors", ""},  // empty: random trainable embedding
      {"work_dir", "work"},
      {"checkpoint", ""},  // empty: <work_dir>/model.ckpt
      // data
      {"min_count", "1"},
      {"test_count", "688"},
      {"split_seed", "1"},
      // model
      {"embed_dim", "200"},
      {"enc_hidden", "500"},
      {"dec_hidden", "500"},
      {"nonrec", "600"},
      {"maxout", "300"},
      {"attn_dim", "200"},
      {"indicator_dim", "200"},
      {"init_scale", "0.08"},
      {"seed", "1"},
      {"indicator_seed", "7"},
      // training
      {"minibatch", "60"},
      {"epochs", "10"},
      {"shuffle_seed", "1"},
      {"strategy", "fixV"},
      {"rho", "0.95"},
      {"epsilon", "1e-6"},
      {"clip_norm", "0"},
      {"checkpoint_every", "0"},
      // skip-gram
      {"sg_window", "5"},
      {"sg_negatives", "5"},
      {"sg_epochs", "5"},
      {"sg_learning_rate", "0.025"},
      {"sg_seed", "1"},
      // generation and evaluation
      {"n_best", "10"},
      {"max_steps", "400"},
      {"ref_k", "20"},
      // grad-check
      {"gc_step", "1e-4"},
      {"gc_tolerance", "1e-4"},
      {"gc_seed", "3"},
      // 0 keeps the OpenMP default
      {"threads", "0"},
  };
  return d;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

RunConfig::RunConfig() : entries_(defaults()) {}

std::string* RunConfig::find(const std::string& key) {
  for (auto& [k, v] : entries_) {
    if (k == key) return &v;
  }
  return nullptr;
}

const std::string* RunConfig::find(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return &v;
  }
  return nullptr;
}

RunConfig RunConfig::parse(std::string_view text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw UsageError(kModule, origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    try {
      cfg.set(key, trim(std::string_view(body).substr(eq + 1)));
    } catch (const UsageError&) {
      throw UsageError(kModule, origin + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw UsageError(kModule, "config file not found: " + path.string());
  return parse(read_file(path), path.string());
}

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw UsageError(kModule, "override '" + assignment + "' is not key=value");
  set(trim(std::string_view(assignment).substr(0, eq)), trim(std::string_view(assignment).substr(eq + 1)));
}

void RunConfig::set(const std::string& key, const std::string& value) {
  std::string* slot = find(key);
  if (slot == nullptr) throw UsageError(kModule, "unknown key '" + key + "'");
  *slot = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  const std::string* v = find(key);
  if (v == nullptr) throw UsageError(kModule, "unknown key '" + key + "'");
  return *v;
}

long RunConfig::get_int(const std::string& key) const {
  const std::string& v = get(key);
  char* end = nullptr;
  errno = 0;
  const long out = std::strtol(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0' || errno != 0) throw UsageError(kModule, key + " = '" + v + "' is not an integer");
  return out;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  const std::string& v = get(key);
  char* end = nullptr;
  errno = 0;
  const unsigned long long out = std::strtoull(v.c_str(), &end, 10);
  if (v.empty() || v.front() == '-' || *end != '\0' || errno != 0) {
    throw UsageError(kModule, key + " = '" + v + "' is not an unsigned integer");
  }
  return out;
}

double RunConfig::get_double(const std::string& key) const {
  const std::string& v = get(key);
  char* end = nullptr;
  errno = 0;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0' || errno != 0) throw UsageError(kModule, key + " = '" + v + "' is not a number");
  return out;
}

std::filesystem::path RunConfig::get_path(const std::string& key) const { return get(key); }

std::string RunConfig::render() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

ModelConfig RunConfig::model_config(int vocab_size, int num_tunes) const {
  ModelConfig m;
  m.vocab_size = vocab_size;
  m.num_tunes = num_tunes;
  m.embed_dim = static_cast<int>(get_int("embed_dim"));
  m.enc_hidden = static_cast<int>(get_int("enc_hidden"));
  m.dec_hidden = static_cast<int>(get_int("dec_hidden"));
  m.nonrec = static_cast<int>(get_int("nonrec"));
  m.maxout = static_cast<int>(get_int("maxout"));
  m.attn_dim = static_cast<int>(get_int("attn_dim"));
  m.indicator_dim = static_cast<int>(get_int("indicator_dim"));
  m.validate();
  return m;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.minibatch_size = static_cast<int>(get_int("minibatch"));
  t.max_epochs = static_cast<int>(get_int("epochs"));
  t.shuffle_seed = get_u64("shuffle_seed");
  t.checkpoint_every = static_cast<int>(get_int("checkpoint_every"));
  t.clip_norm = get_double("clip_norm");
  t.adadelta.rho = get_double("rho");
  t.adadelta.epsilon = get_double("epsilon");
  t.validate();
  return t;
}

SkipGramConfig RunConfig::skipgram_config() const {
  SkipGramConfig s;
  s.dim = static_cast<int>(get_int("embed_dim"));
  s.window = static_cast<int>(get_int("sg_window"));
  s.negatives = static_cast<int>(get_int("sg_negatives"));
  s.epochs = static_cast<int>(get_int("sg_epochs"));
  s.learning_rate = get_double("sg_learning_rate");
  s.seed = get_u64("sg_seed");
  s.validate();
  return s;
}

GenerationConfig RunConfig::generation_config() const {
  GenerationConfig g;
  g.n_best = static_cast<int>(get_int("n_best"));
  g.max_steps = static_cast<int>(get_int("max_steps"));
  g.validate();
  return g;
}

EmbeddingStrategy RunConfig::strategy() const { return parse_strategy(get("strategy")); }

std::filesystem::path RunConfig::checkpoint_path() const {
  const std::string& c = get("checkpoint");
  return c.empty() ? work_dir() / "model.ckpt" : std::filesystem::path(c);
}

std::filesystem::path RunConfig::vectors_path() const {
  const std::string& v = get("vectors");
  return v.empty() ? work_dir() / "vectors.txt" : std::filesystem::path(v);
}

}  // namespace songci
