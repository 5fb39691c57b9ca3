// Command-line runner: neqlab run|validate|list.
// Exit codes: 0 ok, 2 validation error, 3 numerical failure, 1 anything else.

#include <CLI11.hpp>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "neqlab/bench.hpp"
#include "neqlab/common.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitOther = 1;

int cmd_run(const std::string& manifest, std::optional<std::uint64_t> seed, const std::string& out, int threads) {
  neqlab::bench::RunOptions opt;
  opt.seed = seed;
  if (!out.empty()) opt.output = out;
  opt.threads = threads;
  const auto rec = neqlab::bench::run_file(manifest, opt);
  std::cout << "wrote " << rec.output_dir.string() << " (" << rec.wall_time_s << " s)\n";
  for (const auto& f : rec.outputs) std::cout << "  " << f.sha256 << "  " << f.name << "\n";
  return 0;
}

int cmd_validate(const std::string& manifest) {
  const auto errors = neqlab::bench::validate_file(manifest);
  if (errors.empty()) {
    std::cout << "ok\n";
    return 0;
  }
  for (const auto& e : errors) std::cerr << e.str() << "\n";
  return kExitValidation;
}

int cmd_list() {
  for (const auto& e : neqlab::bench::list_experiments())
    std::cout << e.kind << "\t" << e.description << " [" << e.topic << "]\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"neqlab: manifest-driven pilot-wave and collapse experiments"};
  app.set_version_flag("--version", neqlab::bench::kToolVersion);
  app.require_subcommand(1);

  std::string manifest, out;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  auto* run = app.add_subcommand("run", "run the experiment described by a manifest");
  run->add_option("manifest", manifest, "manifest file (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "override the manifest seed");
  run->add_option("--out", out, "override the output directory");
  run->add_option("--threads", threads, "worker threads (0 = all cores); results do not depend on it")
      ->check(CLI::NonNegativeNumber);

  auto* validate = app.add_subcommand("validate", "check a manifest without running it");
  validate->add_option("manifest", manifest, "manifest file (JSON)")->required();
  auto* list = app.add_subcommand("list", "list experiment kinds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*run) return cmd_run(manifest, seed, out, threads);
    if (*validate) return cmd_validate(manifest);
    if (*list) return cmd_list();
  } catch (const neqlab::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const neqlab::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
  return kExitOther;
}
