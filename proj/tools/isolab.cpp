#include <CLI11.hpp>

#include <iostream>

#include "isolab/lab.hpp"

using namespace isolab;

int main(int argc, char** argv) {
  CLI::App app{"isolab: isoperimetric and spectral experiments on convex bodies"};
  app.require_subcommand(1);

  std::string config, run_dir, suite_dir, out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;

  auto* run = app.add_subcommand("run", "run one experiment config");
  run->add_option("config", config, "experiment config (TOML)")->required();
  run->add_option("--out", out, "output directory (default: runs, or the config's `out`)");
  run->add_option("--seed", seed, "override the config seed");
  run->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);

  auto* rep = app.add_subcommand("report", "render the report bundle of a run");
  rep->add_option("run-dir", run_dir, "run directory")->required();

  auto* su = app.add_subcommand("suite", "run and report every config in a directory");
  su->add_option("dir", suite_dir, "directory of *.toml configs")->required();
  su->add_option("--out", out, "output directory (default: runs)");
  su->add_option("--seed", seed, "override every config seed");
  su->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : lab::kConfigError;
  }

  lab::RunOptions opt;
  if (!out.empty()) opt.out = out;
  opt.threads = threads;

  try {
    if (*run) {
      const auto rec = lab::run_file(config, opt, seed);
      std::cout << rec.dir.string() << "\n";
      if (rec.ok()) {
        std::cout << "status ok, summary " << rec.summary_hash << "\n";
      } else {
        std::cerr << "run failed (" << rec.error_type << "): " << rec.error << "\n";
      }
      return rec.exit_code;
    }
    if (*rep) {
      const auto b = lab::report(run_dir);
      std::cout << b.dir.string() << "\n";
      for (const auto& a : b.absent) std::cout << "absent: " << a << "\n";
      return lab::kOk;
    }
    const auto s = lab::suite(suite_dir, opt, seed);
    for (const auto& e : s.entries)
      std::cout << e.config.filename().string() << "  exit " << e.exit_code
                << (e.record ? "  " + e.record->dir.string() : "  " + e.error) << "\n";
    std::cout << s.index.string() << "\n";
    return s.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return lab::exit_code_for(e);
  }
}
