// songci: corpus ingest, embedding pretraining, training, constrained
// generation, validation, BLEU-2 evaluation and gradient checking.
//
// Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numeric
// failure. validate exits 2 on a non-compliant iambic; grad-check exits 3
// when any tensor exceeds the tolerance.

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "songci/app.hpp"
#include "songci/config.hpp"
#include "songci/error.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Song iambic generation toolkit"};
  cli.require_subcommand(1);
  cli.fallthrough();

  std::string config_file;
  std::vector<std::string> overrides;
  cli.add_option("-c,--config", config_file, "key = value config file")->check(CLI::ExistingFile);
  cli.add_option("-s,--set", overrides, "override a config key (key=value); repeatable")
      ->allow_extra_args(false);

  auto* ingest = cli.add_subcommand("ingest", "split the corpus and write vocabulary, tunes and pairs");
  auto* pretrain = cli.add_subcommand("pretrain-embeddings", "train skip-gram character vectors");
  auto* train = cli.add_subcommand("train", "train the model and write a checkpoint and log");

  auto* generate = cli.add_subcommand("generate", "generate an iambic from a cue sentence");
  std::string cue, tune, trace;
  generate->add_option("--cue", cue, "first sentence, optionally ending in a terminator")->required();
  generate->add_option("--tune", tune, "tune name")->required();
  generate->add_option("--trace", trace, "trace output path (default <work_dir>/trace.tsv)");

  auto* validate = cli.add_subcommand("validate", "check iambics against their tune schemas");
  std::string validate_file;
  validate->add_option("--file", validate_file, "iambics in corpus format")->required();

  auto* evaluate = cli.add_subcommand("evaluate", "BLEU-2 of generations for the test cues");
  auto* gradcheck = cli.add_subcommand("grad-check", "finite-difference check on a toy model");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    songci::RunConfig cfg = config_file.empty() ? songci::RunConfig() : songci::RunConfig::load(config_file);
    for (const auto& o : overrides) cfg.apply_override(o);
    std::cerr << "# resolved config\n" << cfg.render();

    namespace app = songci::app;
    if (*ingest) {
      app::run_ingest(cfg, std::cout);
    } else if (*pretrain) {
      app::run_pretrain(cfg, std::cout);
    } else if (*train) {
      app::run_train(cfg, std::cout);
    } else if (*generate) {
      app::run_generate(cfg, cue, tune, trace, std::cout);
    } else if (*validate) {
      if (!app::run_validate(cfg, validate_file, std::cout)) return kData;
    } else if (*evaluate) {
      app::run_evaluate(cfg, std::cout);
    } else if (*gradcheck) {
      if (!app::run_gradcheck(cfg, std::cout)) return kNumeric;
    }
  } catch (const songci::UsageError& e) {
    std::cerr << e.what() << "\n";
    return kUsage;
  } catch (const songci::DataError& e) {
    std::cerr << e.what() << "\n";
    return kData;
  } catch (const songci::NumericError& e) {
    std::cerr << e.what() << "\n";
    return kNumeric;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "cli: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}
