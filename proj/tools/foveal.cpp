#include <CLI11.hpp>

#include <iostream>

#include "foveal/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Recurrent foveal attention classifier: synth, pretrain, train, eval, viz"};
  app.require_subcommand(1);
  app.footer(foveal::config_help());

  std::string config_file;
  std::vector<std::string> overrides;
  struct Stage {
    const char* name;
    const char* help;
    void (*run)(const foveal::RunConfig&, std::ostream&);
  };
  const Stage stages[] = {
      {"synth", "write the cluttered digit corpus (train, test, pretrain)", foveal::run_synth},
      {"pretrain", "pretrain the visual core with per-resolution heads", foveal::run_pretrain},
      {"train", "train the attention model on a frozen core", foveal::run_train},
      {"eval", "evaluate a trained model and write the mA report",
       [](const foveal::RunConfig& c, std::ostream& o) { foveal::run_eval(c, o); }},
      {"viz", "render fixation overlays, composites and glimpse strips", foveal::run_viz},
  };
  for (const auto& s : stages) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("--config", config_file, "config file of 'key = value' lines")->check(CLI::ExistingFile);
    sub->add_option("overrides", overrides, "key=value settings that win over the config file");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const foveal::RunConfig cfg = foveal::parse_config(config_file, overrides);
    for (const auto& s : stages)
      if (app.got_subcommand(s.name)) s.run(cfg, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "foveal: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
