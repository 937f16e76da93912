#include "fusionest/simulation.hpp"

#include <cmath>

#include "fusionest/error.hpp"

namespace fusionest {

std::string_view to_string(ScenarioKind kind) noexcept {
  switch (kind) {
    case ScenarioKind::Discrete: return "discrete";
    case ScenarioKind::Continuous: return "continuous";
    case ScenarioKind::M4Synthetic: return "m4_synthetic";
  }
  return "discrete";
}

ScenarioKind parse_scenario_kind(std::string_view text) {
  if (text == "discrete") return ScenarioKind::Discrete;
  if (text == "continuous") return ScenarioKind::Continuous;
  if (text == "m4_synthetic") return ScenarioKind::M4Synthetic;
  throw Error(ErrorKind::UnsupportedScenario,
              "unknown scenario '" + std::string(text) + "' (expected discrete, continuous or m4_synthetic)");
}

void ScenarioSpec::validate() const {
  if (n_rct < 1 || m_obs < 1) {
    throw Error(ErrorKind::ConflictingOptions, "n_rct and m_obs must both be at least 1");
  }
  auto open_unit = [](double v) { return v > 0.0 && v < 1.0; };
  if (kind != ScenarioKind::M4Synthetic && (!open_unit(case_keep) || !open_unit(control_keep))) {
    // Boundary values are allowed for apply_selection itself, but the
    // oracle p and q need both outcomes to survive selection.
    throw Error(ErrorKind::ConflictingOptions, "case_keep and control_keep must lie in (0, 1)");
  }
  if (homoskedastic && kind != ScenarioKind::M4Synthetic) {
    throw Error(ErrorKind::ConflictingOptions, "homoskedastic applies only to m4_synthetic");
  }
}

double logistic_treatment(std::span<const double> x) { return expit(x[0] - x[1]); }

double logistic_outcome(int z, std::span<const double> x, bool interaction) {
  double eta = -0.5 + z + (1.0 - 2.0 * z) * (x[0] - x[1]);
  if (interaction) eta += (1.5 * z - 1.0) * x[0] * x[1];
  return expit(eta);
}

double M4Design::cate(std::span<const double> x) { return 1.0 + x[0] * x[1] + 0.5 * x[0]; }

double M4Design::confounding(std::span<const double> x) {
  return theta[0] + theta[1] * x[0] + theta[2] * x[1];
}

double M4Design::mean(int s, int z, std::span<const double> x) {
  if (s == 1) {
    const double m10 = x[0] + 0.5 * x[1] * x[1];
    return z == 1 ? m10 + cate(x) : m10;
  }
  const double m00 = 0.2 * x[1] + 0.3 * std::cos(x[0]);
  return z == 1 ? m00 + cate(x) - confounding(x) : m00;
}

double M4Design::variance(int s, int z, std::span<const double> x, bool homoskedastic) {
  if (homoskedastic) return s == 1 ? 0.5 : 0.05;
  const double r2 = x[0] * x[0] + x[1] * x[1];
  if (s == 1) return 0.1 * std::exp(z == 1 ? 2.5 * r2 : 2.0 * r2);
  return 0.05 * std::exp(z == 1 ? 0.5 * x[1] : -0.5 * x[0]);
}

double M4Design::obs_propensity(std::span<const double> x) { return expit(0.5 * x[0] - 0.5 * x[1]); }

FeatureMap M4Design::psi() { return FeatureMap::parse("intercept,x1,x2"); }

std::vector<std::size_t> apply_selection(std::span<const double> y, double case_keep, double control_keep,
                                         Rng& rng) {
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) {
      throw Error(ErrorKind::NonBinaryOutcome, "selection needs a binary outcome");
    }
    if (rng.bernoulli(y[i] == 1.0 ? case_keep : control_keep)) kept.push_back(i);
  }
  return kept;
}

namespace {

// Observational rows by rejection through the selection step, then RCT rows.
Dataset gen_logistic(const ScenarioSpec& spec, Rng& rng, bool continuous) {
  spec.validate();
  DatasetColumns cols;
  cols.d = 2;
  std::array<double, 2> x{};
  auto draw_x = [&] {
    if (continuous) {
      x[0] = rng.uniform(-1.0, 1.0);
      x[1] = rng.uniform(-1.0, 1.0);
    } else {
      x[0] = rng.bernoulli(0.5) ? 1.0 : 0.0;
      x[1] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    }
  };

  const std::size_t cap = 100 * spec.m_obs;
  std::size_t draws = 0;
  std::size_t kept = 0;
  while (kept < spec.m_obs) {
    if (draws++ >= cap) {
      throw Error(ErrorKind::SelectionStarved, "kept " + std::to_string(kept) + " of " +
                                                   std::to_string(spec.m_obs) + " rows after " +
                                                   std::to_string(cap) + " draws");
    }
    draw_x();
    const int z = rng.bernoulli(logistic_treatment(x)) ? 1 : 0;
    const double y = rng.bernoulli(logistic_outcome(z, x, continuous)) ? 1.0 : 0.0;
    const double y_arr[1] = {y};
    if (apply_selection(y_arr, spec.case_keep, spec.control_keep, rng).empty()) continue;
    cols.push_back(0, z, y, x);
    ++kept;
  }
  for (std::size_t i = 0; i < spec.n_rct; ++i) {
    draw_x();
    const int z = rng.bernoulli(logistic_treatment(x)) ? 1 : 0;
    const double y = rng.bernoulli(logistic_outcome(z, x, continuous)) ? 1.0 : 0.0;
    cols.push_back(1, z, y, x);
  }
  return Dataset(std::move(cols), OutcomeKind::Binary);
}

}  // namespace

Dataset gen_discrete(const ScenarioSpec& spec, Rng& rng) {
  if (spec.kind != ScenarioKind::Discrete) {
    throw Error(ErrorKind::UnsupportedScenario, "gen_discrete needs the discrete scenario");
  }
  return gen_logistic(spec, rng, false);
}

Dataset gen_continuous(const ScenarioSpec& spec, Rng& rng) {
  if (spec.kind != ScenarioKind::Continuous) {
    throw Error(ErrorKind::UnsupportedScenario, "gen_continuous needs the continuous scenario");
  }
  return gen_logistic(spec, rng, true);
}

Dataset gen_m4_synthetic(const ScenarioSpec& spec, Rng& rng) {
  if (spec.kind != ScenarioKind::M4Synthetic) {
    throw Error(ErrorKind::UnsupportedScenario, "gen_m4_synthetic needs the m4_synthetic scenario");
  }
  spec.validate();
  DatasetColumns cols;
  cols.d = 2;
  std::array<double, 2> x{};
  auto outcome = [&](int s, int z) {
    return M4Design::mean(s, z, x) + std::sqrt(M4Design::variance(s, z, x, spec.homoskedastic)) * rng.normal();
  };
  for (std::size_t i = 0; i < spec.m_obs; ++i) {
    do {
      x[0] = rng.uniform(-1.0, 1.0);
      x[1] = rng.uniform(-1.0, 1.0);
    } while (rng.uniform() * (1.0 + M4Design::tilt) >= 1.0 + M4Design::tilt * x[0]);
    const int z = rng.bernoulli(M4Design::obs_propensity(x)) ? 1 : 0;
    cols.push_back(0, z, outcome(0, z), x);
  }
  for (std::size_t i = 0; i < spec.n_rct; ++i) {
    x[0] = rng.uniform(-1.0, 1.0);
    x[1] = rng.uniform(-1.0, 1.0);
    const int z = rng.bernoulli(M4Design::e) ? 1 : 0;
    cols.push_back(1, z, outcome(1, z), x);
  }
  return Dataset(std::move(cols), OutcomeKind::Continuous);
}

Dataset generate(const ScenarioSpec& spec, Rng& rng) {
  switch (spec.kind) {
    case ScenarioKind::Discrete: return gen_discrete(spec, rng);
    case ScenarioKind::Continuous: return gen_continuous(spec, rng);
    case ScenarioKind::M4Synthetic: return gen_m4_synthetic(spec, rng);
  }
  throw Error(ErrorKind::UnsupportedScenario, "unknown scenario");
}

}  // namespace fusionest
