#include "cli/run_config.hpp"

#include <algorithm>
#include <cstdlib>
#include <ostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "fusionest/error.hpp"

namespace fusionest::cli {

std::string_view to_string(Command c) noexcept {
  switch (c) {
    case Command::Simulate: return "simulate";
    case Command::Estimate: return "estimate";
    case Command::Benchmark: return "benchmark";
  }
  return "benchmark";
}

int default_jobs() {
  if (const char* env = std::getenv("FUSIONEST_JOBS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != nullptr && *end == '\0' && v >= 1 && v <= 4096) return static_cast<int>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

namespace {

std::string joined(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& v : items) {
    if (!out.empty()) out += ',';
    out += v;
  }
  return out;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

template <class T, class Parse>
std::vector<T> parse_list(const std::string& text, Parse parse) {
  std::vector<T> out;
  for (const auto& item : split_list(text)) {
    const T v = parse(item);
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
  }
  return out;
}

template <class T, class Fmt>
std::string join(const std::vector<T>& items, Fmt fmt) {
  std::string out;
  for (const auto& v : items) {
    if (!out.empty()) out += ',';
    out += fmt(v);
  }
  return out;
}

// Raw option values as read from argv or the config file.
struct RawOptions {
  std::string scenario = "discrete";
  std::size_t n_rct = 3000;
  std::size_t m_obs = 3000;
  double case_keep = 0.9;
  double control_keep = 0.1;
  std::uint64_t seed = 7;
  bool homoskedastic = false;
  std::string input;
  std::string out;
  std::string outcome = "binary";
  std::vector<std::string> kinds = {"rct", "obs", "tgt"};
  std::vector<std::string> methods = {"auto"};
  std::vector<std::string> variants = {"feasible", "oracle"};
  std::string restriction = "auto";
  std::vector<std::string> psi;
  std::vector<std::string> psi_v;
  std::string learner_p = "auto", learner_e = "auto", learner_q = "auto", learner_m = "auto";
  int k = 5;
  int replicates = 1000;
  int boot = 1000;
  int calibration_replicates = 0;
  int cv_bootstrap = 0;
  int cv_points = 50;
  int jobs = 0;
  bool print_config = false;
};

std::optional<LearnerSpec> learner_or_auto(const std::string& text) {
  if (text == "auto" || text.empty()) return std::nullopt;
  return LearnerSpec::parse(text);
}

RunConfig resolve(Command command, const RawOptions& raw) {
  RunConfig c;
  c.command = command;
  c.scenario.kind = parse_scenario_kind(raw.scenario);
  c.scenario.n_rct = raw.n_rct;
  c.scenario.m_obs = raw.m_obs;
  c.scenario.case_keep = raw.case_keep;
  c.scenario.control_keep = raw.control_keep;
  c.scenario.seed = raw.seed;
  c.scenario.homoskedastic = raw.homoskedastic;
  c.input = raw.input;
  c.out = raw.out;
  if (raw.outcome == "binary") {
    c.outcome = OutcomeKind::Binary;
  } else if (raw.outcome == "continuous") {
    c.outcome = OutcomeKind::Continuous;
  } else {
    throw Error(ErrorKind::ConflictingOptions, "--outcome must be binary or continuous");
  }
  if (command != Command::Estimate) c.outcome = c.scenario.outcome_kind();

  c.kinds = parse_list<EstimandKind>(joined(raw.kinds), parse_estimand_kind);
  c.variants = parse_list<Variant>(joined(raw.variants), parse_variant);

  if (raw.restriction == "auto") {
    c.restriction = command == Command::Estimate ? Restriction::None : c.scenario.restriction();
  } else {
    c.restriction = parse_restriction(raw.restriction);
  }
  if (!joined(raw.psi).empty()) c.psi = FeatureMap::parse(joined(raw.psi));
  if (c.restriction == Restriction::M4 && c.psi.empty() && command != Command::Estimate) c.psi = M4Design::psi();
  if (!joined(raw.psi_v).empty()) c.psi_v = FeatureMap::parse(joined(raw.psi_v));

  if (joined(raw.methods) == "auto") {
    c.methods = {Method::Baseline};
    if (c.restriction == Restriction::M4) c.methods.push_back(Method::EffM4);
    if (c.restriction == Restriction::M5) {
      c.methods.push_back(Method::EffM5);
      if (command == Command::Benchmark || raw.cv_bootstrap > 0) c.methods.push_back(Method::ControlVariate);
    }
  } else {
    c.methods = parse_list<Method>(joined(raw.methods), parse_method);
  }

  c.learner_p = learner_or_auto(raw.learner_p);
  c.learner_e = learner_or_auto(raw.learner_e);
  c.learner_q = learner_or_auto(raw.learner_q);
  c.learner_m = learner_or_auto(raw.learner_m);

  c.k = raw.k;
  c.replicates = raw.replicates;
  c.boot = raw.boot;
  if (raw.calibration_replicates > 0) c.calibration_replicates = raw.calibration_replicates;
  c.cv_bootstrap = raw.cv_bootstrap;
  c.cv_points = raw.cv_points;
  c.jobs = raw.jobs > 0 ? raw.jobs : default_jobs();
  return c;
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::UnknownFlag:
    case ErrorKind::MissingRequired:
    case ErrorKind::ConflictingOptions:
    case ErrorKind::UnsupportedScenario:
    case ErrorKind::BadFoldCount: return 1;
    default: return 2;
  }
}

}  // namespace

void validate(const RunConfig& c) {
  auto conflict = [](const std::string& msg) { return Error(ErrorKind::ConflictingOptions, msg); };
  auto missing = [](const std::string& msg) { return Error(ErrorKind::MissingRequired, msg); };

  if (c.k < 2) throw Error(ErrorKind::BadFoldCount, "--k must be at least 2");
  if (c.jobs < 1) throw conflict("--jobs must be at least 1");
  if (c.kinds.empty()) throw missing("--kinds is empty; use e.g. --kinds rct,obs,tgt");
  if (c.methods.empty()) throw missing("--methods is empty; use e.g. --methods baseline");
  if (c.cv_bootstrap < 0 || c.cv_points < 1) throw conflict("--cv-bootstrap must be >= 0 and --cv-points >= 1");
  if (c.restriction == Restriction::M5 && c.outcome == OutcomeKind::Continuous) {
    throw conflict("restriction m5 needs a binary outcome; use --restriction m4 or none with --outcome continuous");
  }
  if (c.restriction == Restriction::M4 && c.psi.empty()) {
    throw missing("restriction m4 needs a confounding basis; add e.g. --psi intercept,x1,x2");
  }
  for (Method m : c.methods) {
    if (m == Method::EffM4 && c.restriction != Restriction::M4) {
      throw conflict("eff_m4 needs --restriction m4");
    }
    if ((m == Method::EffM5 || m == Method::ControlVariate) && c.restriction != Restriction::M5) {
      throw conflict(std::string(to_string(m)) + " needs --restriction m5");
    }
  }

  switch (c.command) {
    case Command::Simulate:
      if (c.out.empty()) throw missing("simulate needs --out FILE for the dataset CSV");
      c.scenario.validate();
      break;
    case Command::Estimate: {
      if (c.input.empty()) throw missing("estimate needs --input FILE (columns s,z,y,x1..xd)");
      for (const auto* l : {&c.learner_p, &c.learner_e, &c.learner_q, &c.learner_m}) {
        if (*l && (*l)->kind == LearnerSpec::Kind::Oracle) {
          throw conflict("oracle learners need a known data generating process; use them with benchmark");
        }
      }
      const bool cv = std::find(c.methods.begin(), c.methods.end(), Method::ControlVariate) != c.methods.end();
      if (cv && c.cv_bootstrap == 0) {
        throw conflict("cv on a single dataset needs --cv-bootstrap B to estimate its adjustment factor");
      }
      break;
    }
    case Command::Benchmark: {
      if (c.restriction != c.scenario.restriction()) {
        throw conflict("scenario " + std::string(to_string(c.scenario.kind)) + " is generated under restriction " +
                       std::string(to_string(c.scenario.restriction())) + "; drop --restriction or set it to match");
      }
      if (c.variants.empty()) throw missing("--variants is empty; use feasible,oracle");
      BenchmarkConfig b;
      b.scenario = c.scenario;
      b.methods = c.methods;
      b.kinds = c.kinds;
      b.variants = c.variants;
      b.replicates = c.replicates;
      b.boot = c.boot;
      b.jobs = c.jobs;
      b.k_folds = c.k;
      b.calibration_replicates = c.calibration_replicates;
      b.validate();
      break;
    }
  }
}

std::string print_config(const RunConfig& c) {
  auto learner = [](const std::optional<LearnerSpec>& l) { return l ? l->to_string() : std::string("auto"); };
  auto quoted = [](const std::filesystem::path& p) { return "\"" + p.string() + "\""; };
  std::ostringstream os;
  os << "; fusionest " << to_string(c.command) << "\n";
  os << "scenario = " << to_string(c.scenario.kind) << "\n";
  os << "n-rct = " << c.scenario.n_rct << "\n";
  os << "m-obs = " << c.scenario.m_obs << "\n";
  os << "case-keep = " << format_double(c.scenario.case_keep) << "\n";
  os << "control-keep = " << format_double(c.scenario.control_keep) << "\n";
  os << "seed = " << c.scenario.seed << "\n";
  os << "homoskedastic = " << (c.scenario.homoskedastic ? "true" : "false") << "\n";
  os << "input = " << quoted(c.input) << "\n";
  os << "out = " << quoted(c.out) << "\n";
  os << "outcome = " << to_string(c.outcome) << "\n";
  os << "kinds = " << join(c.kinds, [](EstimandKind k) { return std::string(to_string(k)); }) << "\n";
  os << "methods = " << join(c.methods, [](Method m) { return std::string(to_string(m)); }) << "\n";
  os << "variants = " << join(c.variants, [](Variant v) { return std::string(to_string(v)); }) << "\n";
  os << "restriction = " << to_string(c.restriction) << "\n";
  os << "psi = " << (c.psi.empty() ? std::string("\"\"") : c.psi.to_string()) << "\n";
  os << "psi-v = " << (c.psi_v ? c.psi_v->to_string() : std::string("\"\"")) << "\n";
  os << "learner-p = " << learner(c.learner_p) << "\n";
  os << "learner-e = " << learner(c.learner_e) << "\n";
  os << "learner-q = " << learner(c.learner_q) << "\n";
  os << "learner-m = " << learner(c.learner_m) << "\n";
  os << "k = " << c.k << "\n";
  os << "replicates = " << c.replicates << "\n";
  os << "boot = " << c.boot << "\n";
  os << "calibration-replicates = " << c.calibration_replicates.value_or(0) << "\n";
  os << "cv-bootstrap = " << c.cv_bootstrap << "\n";
  os << "cv-points = " << c.cv_points << "\n";
  os << "jobs = " << c.jobs << "\n";
  return os.str();
}

ParseOutcome parse_config(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  RawOptions raw;
  CLI::App app{"Fused RCT + observational average treatment effect estimation", "fusionest"};
  app.config_formatter(std::make_shared<CLI::ConfigINI>());
  app.set_config("--config", "", "Read key = value options from FILE (flags given on the command line win)");
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  auto* simulate = app.add_subcommand("simulate", "Draw one dataset from a scenario and write it as CSV");
  auto* estimate = app.add_subcommand("estimate", "Estimate treatment effects from a dataset CSV");
  auto* benchmark = app.add_subcommand("benchmark", "Monte Carlo comparison of estimators on a scenario");
  for (auto* sub : {simulate, estimate, benchmark}) sub->fallthrough();

  app.add_option("--scenario", raw.scenario, "discrete | continuous | m4_synthetic");
  app.add_option("--n-rct", raw.n_rct, "RCT sample size");
  app.add_option("--m-obs", raw.m_obs, "Observational rows retained after selection");
  app.add_option("--case-keep", raw.case_keep, "Selection probability of observational rows with y = 1");
  app.add_option("--control-keep", raw.control_keep, "Selection probability of observational rows with y = 0");
  app.add_option("--seed", raw.seed, "Base seed; every random draw derives from it");
  app.add_flag("--homoskedastic", raw.homoskedastic, "m4_synthetic: constant outcome variances");
  app.add_option("--input", raw.input, "estimate: dataset CSV with header s,z,y,x1..xd");
  app.add_option("--out", raw.out,
                 "simulate: dataset CSV; estimate: estimates CSV; benchmark: output directory");
  app.add_option("--outcome", raw.outcome, "estimate: binary | continuous");
  app.add_option("--kinds", raw.kinds, "Estimands, comma separated: rct,obs,tgt")->delimiter(',');
  app.add_option("--methods", raw.methods,
                 "baseline,eff_m4,eff_m5,cv (auto: baseline plus the restriction's efficient estimator, "
                 "and cv in benchmarks)")->delimiter(',');
  app.add_option("--variants", raw.variants, "benchmark: feasible,oracle")->delimiter(',');
  app.add_option("--restriction", raw.restriction, "none | m4 | m5 (auto: none for estimate, scenario's otherwise)");
  app.add_option("--psi", raw.psi, "Confounding basis for m4, e.g. intercept,x1,x2")->delimiter(',');
  app.add_option("--psi-v", raw.psi_v, "Variance regression basis (default: psi, else intercept plus linear)")->delimiter(',');
  for (auto [name, target] : {std::pair{"--learner-p", &raw.learner_p}, std::pair{"--learner-e", &raw.learner_e},
                              std::pair{"--learner-q", &raw.learner_q}, std::pair{"--learner-m", &raw.learner_m}}) {
    app.add_option(name, *target, "cell_mean | irls:<degree> | oracle | known:<value> | auto");
  }
  app.add_option("--k", raw.k, "Cross-fitting folds");
  app.add_option("--replicates", raw.replicates, "benchmark: Monte Carlo replicates");
  app.add_option("--boot", raw.boot, "benchmark: bootstrap resamples for relative-efficiency intervals");
  app.add_option("--calibration-replicates", raw.calibration_replicates,
                 "benchmark: independent replicates for the cv adjustment factor (0: same as --replicates)");
  app.add_option("--cv-bootstrap", raw.cv_bootstrap,
                 "Estimate the cv adjustment factor from B bootstraps of each dataset (0: off)");
  app.add_option("--cv-points", raw.cv_points, "Covariate rows probed by the continuous cv statistic");
  app.add_option("--jobs", raw.jobs, "Worker threads (0: FUSIONEST_JOBS, else available parallelism)");
  app.add_flag("--print-config", raw.print_config, "Print the effective configuration and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return {std::nullopt, 0};
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return {std::nullopt, 0};
  } catch (const CLI::ExtrasError& e) {
    err << "error: " << to_string(ErrorKind::UnknownFlag) << ": " << e.what()
        << "\nhint: run 'fusionest --help' for the list of flags\n";
    return {std::nullopt, 1};
  } catch (const CLI::RequiredError& e) {
    err << "error: " << to_string(ErrorKind::MissingRequired) << ": " << e.what()
        << "\nhint: pick one of simulate, estimate, benchmark\n";
    return {std::nullopt, 1};
  } catch (const CLI::ParseError& e) {
    err << "error: " << to_string(ErrorKind::ConflictingOptions) << ": " << e.what()
        << "\nhint: run 'fusionest --help' for accepted values\n";
    return {std::nullopt, 1};
  }

  Command command = Command::Benchmark;
  if (simulate->parsed()) command = Command::Simulate;
  if (estimate->parsed()) command = Command::Estimate;

  try {
    RunConfig config = resolve(command, raw);
    validate(config);
    if (raw.print_config) {
      out << print_config(config);
      return {std::nullopt, 0};
    }
    return {std::move(config), 0};
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return {std::nullopt, exit_code_for(e.kind())};
  }
}

}  // namespace fusionest::cli
