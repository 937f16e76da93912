#include "fusionest/simulation.hpp"

#include <cmath>

#include "fusionest/error.hpp"
#include "fusionest/quadrature.hpp"

namespace fusionest {

namespace {

// Probability that a candidate at x survives selection, given arm z.
double keep_given(int z, std::span<const double> x, const ScenarioSpec& spec, bool interaction) {
  const double m = logistic_outcome(z, x, interaction);
  return spec.case_keep * m + spec.control_keep * (1.0 - m);
}

double keep_rate(std::span<const double> x, const ScenarioSpec& spec, bool interaction) {
  const double e = logistic_treatment(x);
  return e * keep_given(1, x, spec, interaction) + (1.0 - e) * keep_given(0, x, spec, interaction);
}

// Average keep rate under the base covariate law.
double keep_normalizer(const ScenarioSpec& spec) {
  const bool interaction = spec.kind == ScenarioKind::Continuous;
  if (spec.kind == ScenarioKind::Discrete) {
    double sum = 0.0;
    for (double a : {0.0, 1.0})
      for (double b : {0.0, 1.0}) {
        const double x[2] = {a, b};
        sum += keep_rate(x, spec, interaction);
      }
    return sum / 4.0;
  }
  return integrate_square([&](double a, double b) {
           const double x[2] = {a, b};
           return keep_rate(x, spec, interaction);
         }) /
         4.0;
}

NuisanceModel::Component analytic(std::function<double(std::span<const double>)> fn) {
  return {std::make_shared<FunctionRegressor>(std::move(fn)), std::nullopt};
}

NuisanceModelPtr logistic_oracle(const ScenarioSpec& spec) {
  const bool interaction = spec.kind == ScenarioKind::Continuous;
  const double rho = spec.rho();
  const double norm = keep_normalizer(spec);
  const ScenarioSpec sc = spec;

  auto model = std::make_shared<NuisanceModel>();
  model->rho = rho;
  model->outcome_kind = OutcomeKind::Binary;
  model->restriction = Restriction::None;
  model->p = analytic([=](std::span<const double> x) {
    return rho / (rho + (1.0 - rho) * keep_rate(x, sc, interaction) / norm);
  });
  model->e = analytic([](std::span<const double> x) { return logistic_treatment(x); });
  model->q = analytic([=](std::span<const double> x) {
    const double e = logistic_treatment(x);
    return e * keep_given(1, x, sc, interaction) / keep_rate(x, sc, interaction);
  });
  for (int z = 0; z <= 1; ++z) {
    model->m[cell(1, z)] = analytic([=](std::span<const double> x) { return logistic_outcome(z, x, interaction); });
    model->m[cell(0, z)] = analytic([=](std::span<const double> x) {
      const double m = logistic_outcome(z, x, interaction);
      return sc.case_keep * m / keep_given(z, x, sc, interaction);
    });
  }
  model->description = "oracle " + std::string(to_string(spec.kind));
  return model;
}

NuisanceModelPtr m4_oracle(const ScenarioSpec& spec) {
  const double rho = spec.rho();
  const bool homo = spec.homoskedastic;
  auto model = std::make_shared<NuisanceModel>();
  model->rho = rho;
  model->outcome_kind = OutcomeKind::Continuous;
  model->restriction = Restriction::None;
  model->theta.assign(M4Design::theta.begin(), M4Design::theta.end());
  model->psi = M4Design::psi();
  model->p = analytic([=](std::span<const double> x) {
    return rho / (rho + (1.0 - rho) * (1.0 + M4Design::tilt * x[0]));
  });
  model->e = {std::make_shared<ConstantRegressor>(M4Design::e), std::nullopt};
  model->q = analytic([](std::span<const double> x) { return M4Design::obs_propensity(x); });
  for (int s = 0; s <= 1; ++s) {
    for (int z = 0; z <= 1; ++z) {
      model->m[cell(s, z)] = analytic([=](std::span<const double> x) { return M4Design::mean(s, z, x); });
      model->v[cell(s, z)] = std::make_shared<FunctionRegressor>(
          [=](std::span<const double> x) { return M4Design::variance(s, z, x, homo); });
    }
  }
  model->description = "oracle m4_synthetic";
  return model;
}

}  // namespace

NuisanceModelPtr oracle_nuisances(const ScenarioSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case ScenarioKind::Discrete:
    case ScenarioKind::Continuous: return logistic_oracle(spec);
    case ScenarioKind::M4Synthetic: return m4_oracle(spec);
  }
  throw Error(ErrorKind::UnsupportedScenario, "no oracle for this scenario");
}

double TrueTaus::of(EstimandKind kind) const {
  switch (kind) {
    case EstimandKind::Rct: return rct;
    case EstimandKind::Obs: return obs;
    case EstimandKind::Tgt: return tgt;
  }
  return rct;
}

TrueTaus true_taus(const ScenarioSpec& spec) {
  spec.validate();
  const double rho = spec.rho();
  TrueTaus t;
  switch (spec.kind) {
    case ScenarioKind::Discrete:
      return enumerate_population(spec).tau;
    case ScenarioKind::Continuous: {
      auto cate = [](double a, double b) {
        const double x[2] = {a, b};
        return logistic_outcome(1, x, true) - logistic_outcome(0, x, true);
      };
      t.rct = integrate_square(cate) / 4.0;
      const double weighted = integrate_square([&](double a, double b) {
        const double x[2] = {a, b};
        return cate(a, b) * keep_rate(x, spec, true);
      });
      t.obs = weighted / (4.0 * keep_normalizer(spec));
      break;
    }
    case ScenarioKind::M4Synthetic:
      // CATE 1 + x1 x2 + x1/2; the observational law has E[x1] = tilt/3, E[x1 x2] = 0.
      t.rct = 1.0;
      t.obs = 1.0 + 0.5 * M4Design::tilt / 3.0;
      break;
  }
  t.tgt = rho * t.rct + (1.0 - rho) * t.obs;
  return t;
}

Population enumerate_population(const ScenarioSpec& spec) {
  if (spec.kind != ScenarioKind::Discrete) {
    throw Error(ErrorKind::UnsupportedScenario, "exact enumeration exists only for the discrete scenario");
  }
  spec.validate();
  Population pop;
  pop.rho = spec.rho();
  pop.eta = logistic_oracle(spec);
  const double rho = pop.rho;
  const double norm = keep_normalizer(spec);
  double tau_rct = 0.0;
  double tau_obs = 0.0;
  for (double a : {0.0, 1.0}) {
    for (double b : {0.0, 1.0}) {
      const std::array<double, 2> x = {a, b};
      const NuisanceAt eta = pop.eta->at(x);
      const double obs_x = 0.25 * keep_rate(x, spec, false) / norm;
      tau_rct += 0.25 * eta.cate();
      tau_obs += obs_x * eta.cate();
      for (int s = 0; s <= 1; ++s) {
        const double px = s == 1 ? rho * 0.25 : (1.0 - rho) * obs_x;
        const double pz1 = s == 1 ? eta.e : eta.q;
        for (int z = 0; z <= 1; ++z) {
          const double m = eta.m_sz(s, z);
          for (int y = 0; y <= 1; ++y) {
            SupportPoint pt;
            pt.x = x;
            pt.s = s;
            pt.z = z;
            pt.y = y;
            pt.prob = px * (z == 1 ? pz1 : 1.0 - pz1) * (y == 1 ? m : 1.0 - m);
            pop.points.push_back(pt);
          }
        }
      }
    }
  }
  pop.tau.rct = tau_rct;
  pop.tau.obs = tau_obs;
  pop.tau.tgt = rho * tau_rct + (1.0 - rho) * tau_obs;
  return pop;
}

double Population::expect(const std::function<double(const SupportPoint&)>& f) const {
  double sum = 0.0;
  for (const auto& pt : points) sum += pt.prob * f(pt);
  return sum;
}

double Population::x_prob(std::span<const double> x) const {
  double sum = 0.0;
  for (const auto& pt : points)
    if (pt.x[0] == x[0] && pt.x[1] == x[1]) sum += pt.prob;
  return sum;
}

}  // namespace fusionest
