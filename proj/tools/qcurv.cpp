#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "qcurv/app.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"qcurv: prescribed Q-curvature on products of closed surfaces"};
  cli.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  for (const auto& name : qcurv::app::command_names()) {
    auto* sub = cli.add_subcommand(name, "run the '" + name + "' command");
    sub->add_option("-c,--config", config_path, "JSON configuration file")->required();
    sub->add_option("--seed", seed, "override the configured seed");
    sub->add_option("-o,--out", out_dir, "output directory (default from config, else ./out)");
  }

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  const std::string command = cli.get_subcommands().front()->get_name();

  try {
    const auto root = qcurv::app::read_json_file(config_path);
    const auto base = std::filesystem::path(config_path).parent_path();
    const auto rc = qcurv::app::parse_config(root, command, seed, out_dir, base.empty() ? "." : base);
    const auto res = qcurv::app::execute(rc);
    qcurv::app::write_outputs(rc, res);
    std::cout << res.report["result"].dump(2) << "\n";
    return 0;
  } catch (const qcurv::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
}
