#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>

#include "songci/error.hpp"
#include "songci/model.hpp"

namespace songci {

namespace {

constexpr const char* kModule = "checkpoint";
constexpr std::string_view kMagic = "SONGCI-CKPT 1\n";

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

void put_u64(std::ostream& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>(v >> (8 * i)));
}

std::uint64_t get_u64(std::istream& in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    const int c = in.get();
    if (c == EOF) throw DataError(kModule, "truncated file");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  const std::uint64_t n = get_u64(in);
  if (n > (std::uint64_t{1} << 30)) throw DataError(kModule, "implausible string length");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw DataError(kModule, "truncated file");
  return s;
}

std::string manifest(const Checkpoint& ck) {
  const ModelConfig& c = ck.model.config;
  std::ostringstream os;
  os << "vocab_size=" << c.vocab_size << "\n"
     << "embed_dim=" << c.embed_dim << "\n"
     << "enc_hidden=" << c.enc_hidden << "\n"
     << "dec_hidden=" << c.dec_hidden << "\n"
     << "nonrec=" << c.nonrec << "\n"
     << "maxout=" << c.maxout << "\n"
     << "attn_dim=" << c.attn_dim << "\n"
     << "indicator_dim=" << c.indicator_dim << "\n"
     << "num_tunes=" << c.num_tunes << "\n"
     << "embedding_trainable=" << (ck.model.embedding_trainable ? 1 : 0) << "\n"
     << "seed=" << ck.seed << "\n";
  return os.str();
}

std::map<std::string, std::string> parse_manifest(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError(kModule, "bad manifest line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ck) {
  if (ck.vocab.size() != ck.model.config.vocab_size) {
    throw UsageError(kModule, "vocabulary size " + std::to_string(ck.vocab.size()) + " does not match model " +
                                  std::to_string(ck.model.config.vocab_size));
  }
  if (ck.tunes.size() != ck.model.config.num_tunes) {
    throw UsageError(kModule, "tune registry size does not match model");
  }
  std::ostringstream os(std::ios::binary);
  os << kMagic;
  put_string(os, manifest(ck));
  put_u64(os, ck.vocab.chars().size());
  for (char32_t ch : ck.vocab.chars()) put_u64(os, ch);
  put_u64(os, static_cast<std::uint64_t>(ck.tunes.size()));
  for (const auto& name : ck.tunes.names()) put_string(os, name);
  const auto params = ck.model.parameters();
  put_u64(os, params.size() + 1);
  for (const auto& [name, tensor] : params) write_tensor(os, *tensor);
  write_tensor(os, ck.model.tune_indicators.vectors);
  std::string bytes = os.str();
  std::ostringstream trailer(std::ios::binary);
  put_u64(trailer, fnv1a(bytes));
  return bytes + trailer.str();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < kMagic.size() + 8 || bytes.compare(0, kMagic.size(), kMagic) != 0) {
    throw DataError(kModule, "not a checkpoint file");
  }
  const std::string_view body(bytes.data(), bytes.size() - 8);
  std::istringstream trailer(bytes.substr(bytes.size() - 8), std::ios::binary);
  if (get_u64(trailer) != fnv1a(body)) throw DataError(kModule, "checksum mismatch");

  std::istringstream in(std::string(body.substr(kMagic.size())), std::ios::binary);
  const auto kv = parse_manifest(get_string(in));
  auto num = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError(kModule, "manifest lacks '" + key + "'");
    return std::stoll(it->second);
  };
  ModelConfig config;
  config.vocab_size = static_cast<int>(num("vocab_size"));
  config.embed_dim = static_cast<int>(num("embed_dim"));
  config.enc_hidden = static_cast<int>(num("enc_hidden"));
  config.dec_hidden = static_cast<int>(num("dec_hidden"));
  config.nonrec = static_cast<int>(num("nonrec"));
  config.maxout = static_cast<int>(num("maxout"));
  config.attn_dim = static_cast<int>(num("attn_dim"));
  config.indicator_dim = static_cast<int>(num("indicator_dim"));
  config.num_tunes = static_cast<int>(num("num_tunes"));

  Checkpoint ck;
  ck.seed = static_cast<std::uint64_t>(num("seed"));
  ck.model = Seq2SeqModel::zeros(config);
  ck.model.embedding_trainable = num("embedding_trainable") != 0;

  const std::uint64_t nchars = get_u64(in);
  std::vector<char32_t> chars;
  chars.reserve(nchars);
  for (std::uint64_t i = 0; i < nchars; ++i) chars.push_back(static_cast<char32_t>(get_u64(in)));
  ck.vocab = Vocabulary::from_chars(chars);
  if (ck.vocab.size() != config.vocab_size) throw DataError(kModule, "vocabulary size disagrees with manifest");

  const std::uint64_t ntunes = get_u64(in);
  std::vector<std::string> names;
  for (std::uint64_t i = 0; i < ntunes; ++i) names.push_back(get_string(in));
  ck.tunes = TuneRegistry(names);
  if (ck.tunes.size() != config.num_tunes || ck.tunes.names() != names) {
    throw DataError(kModule, "tune registry disagrees with manifest");
  }

  auto params = ck.model.parameters();
  if (get_u64(in) != params.size() + 1) throw DataError(kModule, "unexpected tensor count");
  auto load_into = [&](const std::string& name, Tensor& dst) {
    Tensor t = read_tensor(in);
    if (t.shape() != dst.shape()) {
      throw DataError(kModule, "tensor '" + name + "' has shape " + shape_string(t.shape()) + ", expected " +
                                   shape_string(dst.shape()));
    }
    dst = std::move(t);
  };
  for (auto& [name, tensor] : params) load_into(name, *tensor);
  load_into("tune_indicators", ck.model.tune_indicators.vectors);
  if (in.peek() != EOF) throw DataError(kModule, "trailing bytes after tensors");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const std::string bytes = serialize_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(kModule, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError(kModule, "write failure on " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(kModule, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace songci
