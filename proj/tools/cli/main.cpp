// clip: command-line driver. Exit codes: 0 success, 2 invalid input, 1 internal failure.
#include <CLI11.hpp>

#include <iostream>

#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "common.hpp"

int main(int argc, char** argv) {
  using namespace clip::cli;
  CLI::App app{"Contrastive image-text pretraining at desk scale"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Seed overriding the config");
  app.add_option("--config", g.config, "JSON or key=value config file");
  app.add_option("--out", g.out, "Report file (train: run directory); stdout when absent");

  register_dataset(app, g);
  register_train(app, g);
  register_zeroshot(app, g);
  register_probe(app, g);
  register_robustness(app, g);
  register_overlap(app, g);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const std::invalid_argument& e) {
    // ValidationError, shape errors and bad config values all land here.
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed JSON input: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
