// postkernel: command-line front end.
//
//   postkernel verify --config configs/verify_four_function.cfg
//   postkernel risk   --config configs/risk_mixture.cfg --mode mc --samples 10000
//   postkernel ntk    --config configs/ntk_default.cfg --out trace.csv --svg
//
// Exit status: 0 on success (verify: every check passed), 1 when a verify
// check fails, 2 on configuration or input errors.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "postkernel/experiments.hpp"

namespace {

using namespace postkernel;

template <class Write>
void emit(const std::string& path, Write&& write) {
  if (path.empty()) {
    write(std::cout);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  write(out);
}

int run(const ExperimentConfig& cfg) {
  if (cfg.command == "verify") {
    const VerifyReport report = run_verify(cfg);
    print_verify_report(cfg.out.empty() ? std::cerr : std::cout, report);
    if (!cfg.out.empty()) emit(cfg.out, [&](std::ostream& o) { write_verify_csv(o, report); });
    else write_verify_csv(std::cout, report);
    return report.all_passed() ? 0 : 1;
  }
  if (cfg.command == "risk") {
    const auto rows = run_risk(cfg);
    emit(cfg.out, [&](std::ostream& o) { write_risk_csv(o, rows); });
    return 0;
  }
  try {
    const auto trace = run_ntk(cfg);
    emit(cfg.out, [&](std::ostream& o) { write_trace_csv(o, trace); });
    if (cfg.svg) {
      const std::string svg_path =
          cfg.out.empty() ? "ntk_trace.svg" : std::filesystem::path(cfg.out).replace_extension(".svg").string();
      emit(svg_path, [&](std::ostream& o) { write_trace_svg(o, trace); });
    }
  } catch (const DivergedRunError& e) {
    std::cerr << "postkernel: run diverged at epoch " << e.epoch() << ": " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prior and posterior kernels for kernel regression"};
  std::string command;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> mode;
  std::optional<std::size_t> samples;
  std::optional<std::size_t> n_train;
  std::optional<std::size_t> trials;
  std::optional<double> rtol;
  std::optional<double> eps;
  bool svg = false;

  app.add_option("command", command, "verify | risk | ntk (overrides the config's command key)");
  app.add_option("--config", config_path, "key=value experiment config");
  app.add_option("--seed", seed, "random seed");
  app.add_option("--out", out, "output CSV path (default: stdout)");
  app.add_option("--mode", mode, "risk mode")->check(CLI::IsMember({"exact", "mc"}));
  app.add_option("--samples", samples, "Monte Carlo sample count");
  app.add_option("--n-train", n_train, "training set size");
  app.add_option("--trials", trials, "verification trials");
  app.add_option("--rtol", rtol, "pseudoinverse relative tolerance");
  app.add_option("--eps", eps, "effective-rank eigenvalue floor");
  app.add_flag("--svg", svg, "also write an SVG plot of the NTK trace");
  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
    if (!command.empty()) cfg.command = command;
    if (seed) cfg.seed = *seed;
    if (out) cfg.out = *out;
    if (mode) cfg.mode = *mode;
    if (samples) cfg.samples = *samples;
    if (n_train) cfg.n_train = *n_train;
    if (trials) cfg.trials = *trials;
    if (rtol) cfg.rtol = *rtol;
    if (eps) cfg.eps = *eps;
    if (svg) cfg.svg = true;
    return run(cfg);
  } catch (const Error& e) {
    std::cerr << "postkernel: " << e.what() << '\n';
    return 2;
  }
}
