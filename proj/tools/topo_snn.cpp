#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "topo_snn/commands.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 1, kConfig = 2, kCorrupt = 3 };

topo::RunConfig resolve(const std::string& path, const std::vector<std::string>& sets) {
  auto cfg = topo::load_config(path);
  for (const auto& s : sets) topo::apply_override(cfg, s);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Topographic spiking network toolkit"};
  app.require_subcommand(1);
  std::string config;
  std::vector<std::string> sets;
  bool quiet = false;

  struct Cmd {
    const char* name;
    const char* help;
    topo::Json (*run)(const topo::RunConfig&, const topo::CommandContext&);
  };
  const Cmd cmds[] = {
      {"preopt", "pre-optimize unit positions on the cortical sheets", topo::cmd_preopt},
      {"train", "train a network (with the STC loss when alpha or beta > 0)", topo::cmd_train},
      {"analyze", "run the analysis battery on a checkpoint", topo::cmd_analyze},
      {"attack", "accuracy under input perturbations", topo::cmd_attack},
  };
  for (const auto& c : cmds) {
    auto* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", config, "run configuration file")->required();
    sub->add_option("--set", sets, "override a key, section.key=value")->take_all();
    sub->add_flag("-q,--quiet", quiet, "no progress messages");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    const auto cfg = resolve(config, sets);
    topo::CommandContext ctx;
    if (quiet) ctx.log = nullptr;
    for (const auto& c : cmds)
      if (app.got_subcommand(c.name)) c.run(cfg, ctx);
    return kOk;
  } catch (const topo::CorruptArtifact& e) {
    std::cerr << "topo-snn: corrupt artifact: " << e.what() << '\n';
    return kCorrupt;
  } catch (const topo::IngestError& e) {
    std::cerr << "topo-snn: data error: " << e.what() << '\n';
    return kConfig;
  } catch (const topo::ConfigError& e) {
    std::cerr << "topo-snn: configuration error: " << e.what() << '\n';
    return kConfig;
  } catch (const topo::ContractViolation& e) {
    std::cerr << "topo-snn: invalid input: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "topo-snn: error: " << e.what() << '\n';
    return kConfig;
  }
}
