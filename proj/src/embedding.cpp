#include "songci/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "songci/error.hpp"
#include "songci/rng.hpp"
#include "songci/utf8.hpp"

namespace songci {

namespace {

constexpr const char* kModule = "embedding";

double log_sigmoid(double x) { return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }
double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

// Cumulative unigram^0.75 distribution for negative draws.
class NegativeSampler {
 public:
  NegativeSampler(const std::vector<long>& counts) {
    cumulative_.reserve(counts.size());
    double total = 0.0;
    for (long c : counts) {
      total += c > 0 ? std::pow(static_cast<double>(c), 0.75) : 0.0;
      cumulative_.push_back(total);
    }
    total_ = total;
  }

  int draw(Rng& rng) const {
    const double u = rng.uniform() * total_;
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    if (it == cumulative_.end()) --it;
    return static_cast<int>(it - cumulative_.begin());
  }

 private:
  std::vector<double> cumulative_;
  double total_ = 0.0;
};

}  // namespace

EmbeddingStrategy parse_strategy(const std::string& name) {
  if (name == "fixV") return EmbeddingStrategy::FixV;
  if (name == "adaptV") return EmbeddingStrategy::AdaptV;
  throw UsageError(kModule, "unknown strategy '" + name + "' (expected fixV or adaptV)");
}

const char* strategy_name(EmbeddingStrategy strategy) {
  return strategy == EmbeddingStrategy::FixV ? "fixV" : "adaptV";
}

void SkipGramConfig::validate() const {
  if (dim < 1 || window < 1 || negatives < 1 || epochs < 1 || !(learning_rate > 0.0)) {
    throw UsageError(kModule, "skip-gram dim, window, negatives, epochs and learning rate must all be positive");
  }
}

SkipGramResult train_skipgram(const std::vector<std::vector<int>>& corpus_ids, int vocab_size,
                              const SkipGramConfig& config) {
  config.validate();
  if (vocab_size < 1) throw UsageError(kModule, "vocabulary is empty");
  std::vector<long> counts(static_cast<std::size_t>(vocab_size), 0);
  long tokens = 0;
  for (const auto& seq : corpus_ids) {
    for (int id : seq) {
      if (id < 0 || id >= vocab_size) {
        throw DataError(kModule, "corpus id " + std::to_string(id) + " outside vocabulary of " +
                                     std::to_string(vocab_size));
      }
      ++counts[static_cast<std::size_t>(id)];
      ++tokens;
    }
  }
  if (tokens == 0) throw DataError(kModule, "skip-gram corpus is empty");

  const auto V = static_cast<std::size_t>(vocab_size);
  const auto d = static_cast<std::size_t>(config.dim);
  Rng rng(config.seed);
  Tensor input({V, d});
  for (double& v : input.data()) v = (rng.uniform() - 0.5) / static_cast<double>(d);
  std::vector<double> output(V * d, 0.0);
  const NegativeSampler sampler(counts);

  const double total_steps = static_cast<double>(tokens) * config.epochs;
  double processed = 0.0;
  std::vector<double> grad_in(d);

  SkipGramResult result;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double loss = 0.0;
    long pairs = 0;
    for (const auto& seq : corpus_ids) {
      const auto n = static_cast<long>(seq.size());
      for (long pos = 0; pos < n; ++pos) {
        const double lr = std::max(config.learning_rate * (1.0 - processed / total_steps), config.learning_rate * 1e-4);
        processed += 1.0;
        const int shrink = static_cast<int>(rng.below(static_cast<std::uint64_t>(config.window)));
        const int reach = config.window - shrink;
        const auto center = static_cast<std::size_t>(seq[static_cast<std::size_t>(pos)]);
        for (long ctx_pos = pos - reach; ctx_pos <= pos + reach; ++ctx_pos) {
          if (ctx_pos < 0 || ctx_pos >= n || ctx_pos == pos) continue;
          const auto context = static_cast<std::size_t>(seq[static_cast<std::size_t>(ctx_pos)]);
          double* vin = input.data().data() + context * d;
          std::fill(grad_in.begin(), grad_in.end(), 0.0);
          for (int k = 0; k <= config.negatives; ++k) {
            std::size_t target = center;
            double label = 1.0;
            if (k > 0) {
              target = static_cast<std::size_t>(sampler.draw(rng));
              if (target == center) continue;
              label = 0.0;
            }
            double* vout = output.data() + target * d;
            double score = 0.0;
            for (std::size_t j = 0; j < d; ++j) score += vin[j] * vout[j];
            loss -= label > 0.5 ? log_sigmoid(score) : log_sigmoid(-score);
            const double gscale = (label - sigmoid(score)) * lr;
            for (std::size_t j = 0; j < d; ++j) {
              grad_in[j] += gscale * vout[j];
              vout[j] += gscale * vin[j];
            }
          }
          for (std::size_t j = 0; j < d; ++j) vin[j] += grad_in[j];
          ++pairs;
        }
      }
    }
    result.epoch_loss.push_back(pairs > 0 ? loss / static_cast<double>(pairs) : 0.0);
  }
  if (!input.all_finite()) throw NumericError(kModule, "skip-gram produced non-finite vectors");
  result.embedding.matrix = std::move(input);
  return result;
}

std::vector<std::vector<int>> skipgram_corpus(const std::vector<Iambic>& iambics, const Vocabulary& vocab) {
  std::vector<std::vector<int>> out;
  out.reserve(iambics.size());
  for (const auto& iambic : iambics) out.push_back(vocab.encode(iambic.text()));
  return out;
}

void init_embedding(Seq2SeqModel& model, const EmbeddingMatrix& pretrained, EmbeddingStrategy strategy) {
  if (pretrained.matrix.shape() != model.embedding.shape()) {
    throw UsageError(kModule, "pretrained vectors " + shape_string(pretrained.matrix.shape()) +
                                  " do not match model embedding " + shape_string(model.embedding.shape()));
  }
  model.embedding = pretrained.matrix;
  model.embedding_trainable = strategy == EmbeddingStrategy::AdaptV;
}

double cosine(const Tensor& matrix, int row_a, int row_b) {
  const std::size_t d = matrix.dim(1);
  const auto a = static_cast<std::size_t>(row_a) * d;
  const auto b = static_cast<std::size_t>(row_b) * d;
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    ab += matrix[a + j] * matrix[b + j];
    aa += matrix[a + j] * matrix[a + j];
    bb += matrix[b + j] * matrix[b + j];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

std::string render_vectors(const EmbeddingMatrix& embedding, const Vocabulary& vocab) {
  const Tensor& m = embedding.matrix;
  if (m.rank() != 2 || static_cast<int>(m.dim(0)) != vocab.size()) {
    throw UsageError(kModule, "embedding " + shape_string(m.shape()) + " does not match vocabulary of " +
                                  std::to_string(vocab.size()));
  }
  std::string out = std::to_string(m.dim(0)) + " " + std::to_string(m.dim(1)) + "\n";
  char buf[32];
  for (std::size_t r = 0; r < m.dim(0); ++r) {
    out += vocab.token(static_cast<int>(r));
    for (std::size_t j = 0; j < m.dim(1); ++j) {
      std::snprintf(buf, sizeof buf, " %.17g", m.at(r, j));
      out += buf;
    }
    out += "\n";
  }
  return out;
}

void write_vectors(const std::filesystem::path& path, const EmbeddingMatrix& embedding, const Vocabulary& vocab) {
  const std::string text = render_vectors(embedding, vocab);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(kModule, "cannot write " + path.string());
  out << text;
}

LoadedVectors read_vectors(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::istringstream in(read_file(path));
  std::string header;
  if (!std::getline(in, header)) throw DataError(kModule, path.string() + ": missing header");
  std::istringstream hs(header);
  long rows = 0, dim = 0;
  if (!(hs >> rows >> dim) || rows < 1 || dim < 1) throw DataError(kModule, path.string() + ": bad header '" + header + "'");

  std::unordered_map<std::string, int> by_token;
  for (int id = 0; id < vocab.size(); ++id) by_token.emplace(vocab.token(id), id);

  LoadedVectors loaded;
  loaded.embedding.matrix = Tensor({static_cast<std::size_t>(vocab.size()), static_cast<std::size_t>(dim)});
  std::vector<bool> seen(static_cast<std::size_t>(vocab.size()), false);
  std::string line;
  long line_no = 1;
  long read_rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string token;
    ls >> token;
    std::vector<double> values;
    double v;
    while (ls >> v) values.push_back(v);
    if (!ls.eof() || static_cast<long>(values.size()) != dim) {
      throw DataError(kModule, path.string() + ": line " + std::to_string(line_no) + " does not hold " +
                                   std::to_string(dim) + " values");
    }
    ++read_rows;
    auto it = by_token.find(token);
    if (it == by_token.end()) continue;
    const auto r = static_cast<std::size_t>(it->second);
    if (seen[r]) throw DataError(kModule, path.string() + ": duplicate token '" + token + "'");
    seen[r] = true;
    for (std::size_t j = 0; j < values.size(); ++j) loaded.embedding.matrix.at(r, j) = values[j];
  }
  if (read_rows != rows) {
    throw DataError(kModule, path.string() + ": header promises " + std::to_string(rows) + " rows, found " +
                                 std::to_string(read_rows));
  }
  loaded.missing_rows = static_cast<int>(std::count(seen.begin(), seen.end(), false));
  return loaded;
}

}  // namespace songci
