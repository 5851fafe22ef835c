#pragma once

// Command-line orchestration: a sectioned key = value config file, the
// check-cd / solve / verify / report subcommands and their artifacts.
//
//   [model]    dim, lower, upper, cells, diffusion, drift | potential (+ perturbation)
//   [solver]   dt, t_end, scheme, snapshots, initial
//   [verify]   checks, phi, p, seed, battery, dynamic, times, t, rho,
//              entropy_constant, core
//   [output]   directory, formats
//
// Lists are comma separated; expressions are double-quoted strings. Lines
// starting with ';' are comments.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fplab/errors.hpp"
#include "fplab/model.hpp"
#include "fplab/pde.hpp"
#include "fplab/phi.hpp"
#include "fplab/verify.hpp"

namespace fplab::cli {

enum ExitCode : int {
  exit_ok = 0,
  exit_config_error = 1,
  exit_model_invalid = 2,
  exit_checks_failed = 3,
};

/// Malformed or inconsistent config. `line` is 1-based, 0 when the error
/// concerns a field rather than a line.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& message, int line = 0)
      : Error(message), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

struct ModelSection {
  int dim = 1;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<int> cells;
  std::vector<std::string> diffusion;
  std::vector<std::string> drift;
  std::optional<std::string> potential;
  std::vector<std::string> perturbation;
};

struct SolverSection {
  double dt = 1e-3;
  double t_end = 2.0;
  Scheme scheme = Scheme::implicit_euler;
  std::vector<double> snapshots;
  /// Initial density u0 (unnormalized).
  std::optional<std::string> initial;
};

struct VerifySection {
  std::vector<CheckId> checks;
  /// Entropy generators; "power" expands over `p`.
  std::vector<PhiKind> phis{PhiKind::variance, PhiKind::boltzmann};
  std::vector<double> p{1.5};
  std::uint64_t seed = 1;
  int battery = 20;
  /// Battery members used by time-dependent checks.
  int dynamic = 3;
  std::vector<double> times{0.05, 0.1, 0.2};
  double t = 0.5;
  /// Overrides the curvature constant from check-cd.
  std::optional<double> rho;
  std::optional<double> entropy_constant;
  double core = 0.5;
};

struct OutputSection {
  std::filesystem::path directory = ".";
  bool json = true;
  bool csv = true;
};

struct RunConfig {
  ModelSection model;
  SolverSection solver;
  VerifySection verify;
  OutputSection output;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Throws ConfigError for inconsistent grids and the library's model errors
/// for invalid expressions.
GridPtr make_grid(const RunConfig& config);
Model make_model(const RunConfig& config);

struct CdSummary {
  CdEstimate estimate;
  /// True when the estimate comes from Gamma_2 sampling.
  bool sampled = false;
};

/// Constant-D eigenvalue when D is constant, Gamma_2 sampling otherwise.
CdSummary estimate_rho(const Model& model, const GridPtr& grid);

struct VerifyOutcome {
  std::vector<CheckResult> results;
  /// Decay reports with the CSV file name each was written to.
  std::vector<std::pair<std::string, DecayReport>> decays;
  double rho = 0.0;
  std::string rho_source;
};

/// Runs the configured suite. Writes nothing.
VerifyOutcome run_verify(const RunConfig& config, const Model& model, const GridPtr& grid);

/// Subcommands. Each writes its artifacts under config.output.directory and a
/// summary to `out`; diagnostics go to `err`.
int cmd_check_cd(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_solve(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_verify(const RunConfig& config, std::ostream& out, std::ostream& err);
/// Prints the pass/fail table of an existing report.json.
int cmd_report(const std::filesystem::path& directory, std::ostream& out, std::ostream& err);

/// Full command line: subcommand, --config, --out, --seed, --dt, --t-end.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// CSV writers used by the subcommands.
void write_decay_csv(const std::filesystem::path& path, const DecayReport& report);
void write_snapshot_csv(const std::filesystem::path& path, const Field& density);

}  // namespace fplab::cli
