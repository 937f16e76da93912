#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fusionest/estimators.hpp"
#include "fusionest/nuisance.hpp"
#include "fusionest/simulation.hpp"

namespace fusionest::cli {

enum class Command { Simulate, Estimate, Benchmark };
std::string_view to_string(Command c) noexcept;

struct RunConfig {
  Command command = Command::Benchmark;

  ScenarioSpec scenario;
  std::filesystem::path input;
  std::filesystem::path out;
  OutcomeKind outcome = OutcomeKind::Binary;

  std::vector<EstimandKind> kinds = {EstimandKind::Rct, EstimandKind::Obs, EstimandKind::Tgt};
  std::vector<Method> methods;
  std::vector<Variant> variants = {Variant::Feasible, Variant::Oracle};
  Restriction restriction = Restriction::None;
  FeatureMap psi;
  std::optional<FeatureMap> psi_v;
  // Per nuisance learner; absent means the command's default.
  std::optional<LearnerSpec> learner_p, learner_e, learner_q, learner_m;

  int k = 5;
  int replicates = 1000;
  int boot = 1000;
  std::optional<int> calibration_replicates;
  int cv_bootstrap = 0;
  int cv_points = 50;
  int jobs = 1;
};

struct ParseOutcome {
  std::optional<RunConfig> config;
  int exit_code = 0;  // meaningful when config is empty (help, print-config, errors)
};

/// Parses argv (plus an optional --config file; flags win) and validates.
/// Help text, --print-config output and error messages go to `out` / `err`.
ParseOutcome parse_config(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Effective configuration in the same key = value format --config reads.
std::string print_config(const RunConfig& config);

/// Throws fusionest::Error (UnknownFlag, MissingRequired, ConflictingOptions).
void validate(const RunConfig& config);

/// Available parallelism: FUSIONEST_JOBS if set, else hardware concurrency.
int default_jobs();

}  // namespace fusionest::cli
