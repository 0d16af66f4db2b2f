#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "config.hpp"
#include "plot.hpp"
#include "presets.hpp"
#include "runner.hpp"

using namespace geolearn::cli;

namespace {

int report(const RunOutcome& r) {
  for (const auto& c : r.checks)
    std::printf("%s %s = %.6g (%s %.6g)\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.value,
                c.lower_bound ? ">=" : "<=", c.threshold);
  if (!r.error.empty()) std::fprintf(stderr, "error: %s\n", r.error.c_str());
  if (!r.dir.empty()) std::printf("outputs: %s (%.3f s)\n", r.dir.string().c_str(), r.wall_seconds);
  return r.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Geometric learning dynamics simulator"};
  app.require_subcommand(1);

  std::string config, out_dir;
  std::uint64_t seed = 0;
  auto* run = app.add_subcommand("run", "Run an experiment from a config file or preset name");
  run->add_option("config", config, "Config file path, or the name of a shipped preset")->required();
  auto* out_opt = run->add_option("--out", out_dir, "Output directory (overrides output.dir)");
  auto* seed_opt = run->add_option("--seed", seed, "Seed (overrides the config seed)");

  std::string csv, spec;
  auto* plot = app.add_subcommand("plot", "Render a CSV artifact as SVG");
  plot->add_option("csv", csv, "CSV file")->required();
  plot->add_option("spec", spec, "Plot spec: YAML file or inline mapping")->required();

  auto* presets_cmd = app.add_subcommand("presets", "Shipped experiment configs");
  presets_cmd->require_subcommand(1);
  auto* list = presets_cmd->add_subcommand("list", "List preset names");
  std::string show_name;
  auto* show = presets_cmd->add_subcommand("show", "Print a preset");
  show->add_option("name", show_name)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (*run) {
    std::optional<std::string> out;
    std::optional<std::uint64_t> s;
    if (*out_opt) out = out_dir;
    if (*seed_opt) s = seed;
    return report(run_config_file(config, out, s));
  }
  if (*plot) {
    try {
      const auto path = emit_plot(csv, parse_plot_spec(spec));
      std::printf("%s\n", path.string().c_str());
      return kExitOk;
    } catch (const ConfigError& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      return kExitConfig;
    } catch (const std::exception& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      return kExitRuntime;
    }
  }
  if (*list) {
    for (const auto& p : presets()) std::printf("%.*s\n", static_cast<int>(p.name.size()), p.name.data());
    return kExitOk;
  }
  if (*show) {
    if (auto text = preset_text(show_name)) {
      std::cout << *text;
      return kExitOk;
    }
    std::fprintf(stderr, "error: no preset named '%s'\n", show_name.c_str());
    return kExitConfig;
  }
  return kExitOk;
}
