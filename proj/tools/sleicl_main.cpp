// sleicl command-line driver: ties the pipeline together.
//
// Subcommands: preprocess | annotate | select | generate | train-ranker |
//              evaluate | report
// Exit codes: 0 success, 2 config error, 3 dependency error, 4 provider
// error, 1 anything else.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sleicl/common.hpp"
#include "sleicl/config.hpp"
#include "sleicl/pipeline.hpp"

namespace {

struct Options {
  std::string config_path;
  std::string run_id = "default";
  int64_t seed = -1;  // -1: keep the config's global seed
  bool dry_run = false;
  bool mock = false;
};

int dispatch(const std::string& command, const Options& options) {
  sleicl::PipelineConfig config = sleicl::load_config(options.config_path);
  if (options.mock) sleicl::force_mock(config);
  if (options.seed >= 0) {
    config.global_seed = options.seed;
    config.selection.seed = options.seed;
    config.ranker.hyper.seed = static_cast<uint64_t>(options.seed);
  }

  sleicl::Pipeline pipeline(std::move(config), options.run_id, options.dry_run);
  if (command == "preprocess") pipeline.preprocess();
  else if (command == "annotate") pipeline.annotate();
  else if (command == "select") pipeline.select();
  else if (command == "generate") pipeline.generate();
  else if (command == "train-ranker") pipeline.train_ranker();
  else if (command == "evaluate") pipeline.evaluate();
  else if (command == "report") pipeline.report();
  else throw sleicl::ConfigError("unknown subcommand: " + command);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SLEICL pipeline: grimoire generation, ranking and evaluation"};
  app.require_subcommand(1);

  Options options;
  app.add_option("--config", options.config_path, "pipeline config file (JSON)")
      ->required();
  app.add_option("--run-id", options.run_id, "run identifier (default: 'default')");
  app.add_option("--seed", options.seed, "override the config's global seed");
  app.add_flag("--dry-run", options.dry_run,
               "print planned model-call counts without calling anything");
  app.add_flag("--mock", options.mock,
               "force mock models and the offline embedding provider");

  for (const char* name : {"preprocess", "annotate", "select", "generate",
                           "train-ranker", "evaluate", "report"}) {
    app.add_subcommand(name);
  }

  CLI11_PARSE(app, argc, argv);

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return dispatch(command, options);
  } catch (const sleicl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const sleicl::DependencyError& e) {
    std::cerr << "dependency error: " << e.what() << "\n";
    return 3;
  } catch (const sleicl::ProviderError& e) {
    std::cerr << "provider error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
