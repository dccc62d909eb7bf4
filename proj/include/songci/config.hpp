#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "songci/embedding.hpp"
#include "songci/generation.hpp"
#include "songci/model.hpp"
#include "songci/training.hpp"

namespace songci {

// Flat "key = value" settings. Every key has a default; unknown keys are
// rejected. Later assignments override earlier ones.
class RunConfig {
 public:
  RunConfig();

  static RunConfig parse(std::string_view text, const std::string& origin = "<config>");
  static RunConfig load(const std::filesystem::path& path);

  // "key=value" override, as given on the command line.
  void apply_override(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  long get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::filesystem::path get_path(const std::string& key) const;

  // All keys in declaration order, one "key = value" per line.
  std::string render() const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  // Typed views.
  ModelConfig model_config(int vocab_size, int num_tunes) const;
  TrainConfig train_config() const;
  SkipGramConfig skipgram_config() const;
  GenerationConfig generation_config() const;
  EmbeddingStrategy strategy() const;

  std::filesystem::path work_dir() const { return get_path("work_dir"); }
  std::filesystem::path checkpoint_path() const;
  std::filesystem::path vectors_path() const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::string* find(const std::string& key);
  const std::string* find(const std::string& key) const;
};

}  // namespace songci
