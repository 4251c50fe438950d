#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"

#include "stochinv/commands.hpp"
#include "stochinv/config.hpp"
#include "stochinv/error.hpp"

namespace {

// Exit codes, one per error family.
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;
constexpr int kExitIo = 5;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stochastic inversion toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  int threads = 0;

  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "run configuration file")
        ->required();
    cmd->add_option("--seed", seed, "override the run seed");
    cmd->add_option("--out", out_dir, "override the output directory");
    cmd->add_option("--threads", threads,
                    "worker threads for batch model evaluation");
  };

  CLI::App* generate =
      app.add_subcommand("generate", "write a synthetic dataset");
  add_common(generate);
  CLI::App* fit =
      app.add_subcommand("fit-surrogate", "fit and persist the surrogate");
  add_common(fit);
  CLI::App* infer =
      app.add_subcommand("infer", "run the configured identification");
  add_common(infer);
  CLI::App* diagnose =
      app.add_subcommand("diagnose", "sensitivity, density, and chain reports");
  add_common(diagnose);

  CLI::App* compare =
      app.add_subcommand("compare", "join two comparison files into one CSV");
  std::string path_a, path_b, out_csv;
  compare->add_option("a", path_a, "first comparison.json")->required();
  compare->add_option("b", path_b, "second comparison.json")->required();
  compare->add_option("--out", out_csv, "output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (compare->parsed()) {
      stochinv::cmd_compare(path_a, path_b, out_csv);
      return 0;
    }
#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#endif
    stochinv::RunConfig config = stochinv::RunConfig::load(config_path);
    stochinv::apply_overrides(config, seed, out_dir);
    if (generate->parsed()) {
      stochinv::cmd_generate(config);
    } else if (fit->parsed()) {
      stochinv::cmd_fit_surrogate(config);
    } else if (infer->parsed()) {
      stochinv::cmd_infer(config);
    } else if (diagnose->parsed()) {
      stochinv::cmd_diagnose(config);
    }
    return 0;
  } catch (const stochinv::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const stochinv::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const stochinv::DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const stochinv::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const stochinv::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
