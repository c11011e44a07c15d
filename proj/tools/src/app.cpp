#include <map>
#include <ostream>

#include "CLI11.hpp"
#include "dgcw/parallel.hpp"
#include "dgcw/training.hpp"
#include "dgcw_cli/commands.hpp"

namespace dgcw::cli {

namespace {

using Command = int (*)(const RunConfig&, const std::filesystem::path&, std::ostream&);

struct CommandInfo {
  const char* name;
  const char* help;
  Command run;
};

const CommandInfo kCommands[] = {
    {"gen-data", "write the synthetic dataset (DGT1 pairs plus manifest)", cmd_gen_data},
    {"train", "train a network and write metrics.csv and a checkpoint", cmd_train},
    {"eval", "evaluate a checkpoint with optional multi-scale and flip inference", cmd_eval},
    {"gradcheck", "run the finite-difference gradient suites at 64 bits", cmd_gradcheck},
    {"bench", "compare naive and fused DGCW memory and time over a shape grid", cmd_bench},
    {"variance", "class-wise feature variance histogram of one or two checkpoints", cmd_variance},
};

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"DGCW segmentation toolkit"};
  app.require_subcommand(1);
  std::string config_path;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::App*> subs;
  for (const auto& c : kCommands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", config_path, "flat key=value config file");
    for (const auto& k : config_keys()) {
      const std::string key(k.name);
      std::string names = "--" + key;
      if (key == std::string(c.name) + ".target") names += ",--target";  // gradcheck --target
      sub->add_option(names, values[key], std::string(k.help) + " [" + std::string(k.default_value) + "]");
    }
    subs[c.name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  for (const auto& c : kCommands) {
    auto* sub = subs[c.name];
    if (!sub->parsed()) continue;
    try {
      RunConfig cfg;
      if (!config_path.empty()) cfg.load_file(config_path);
      for (const auto& k : config_keys()) {
        const std::string key(k.name);
        if (sub->count("--" + key) > 0) cfg.set(key, values[key]);
      }
      // Validate every section before anything is written.
      use_f64(cfg);
      synth_spec(cfg);
      network_config(cfg);
      train_config(cfg);
      if (const auto threads = cfg.get_size("threads"); threads > 0) set_worker_count(threads);

      const auto run_dir = make_run_dir(cfg.get("out"), c.name);
      cfg.write_resolved(run_dir / "config.resolved");
      out << "run_dir: " << run_dir.string() << "\n";
      const int code = c.run(cfg, run_dir, out);
      out.flush();
      return code;
    } catch (const ConfigError& e) {
      err << "error: " << e.what() << "\n";
      return kExitUsage;
    } catch (const NumericalError& e) {
      err << "numerical failure: " << e.what() << "\n";
      return kExitNumerical;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << "\n";
      return kExitUsage;
    }
  }
  return kExitUsage;
}

}  // namespace dgcw::cli
