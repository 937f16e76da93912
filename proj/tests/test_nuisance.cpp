#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "fusionest/error.hpp"
#include "fusionest/learners.hpp"
#include "fusionest/nuisance.hpp"
#include "fusionest/simulation.hpp"
#include "helpers.hpp"

using namespace fusionest;
using testing::constant_model;

namespace {

Dataset rows_to_data(const std::vector<std::array<double, 4>>& rows, OutcomeKind kind) {
  DatasetColumns c;
  c.d = 1;
  for (const auto& r : rows) {
    const double x[1] = {r[3]};
    c.push_back(static_cast<int>(r[0]), static_cast<int>(r[1]), r[2], x);
  }
  return Dataset(c, kind);
}

std::shared_ptr<NuisanceModel> smooth_draft(Rng& rng, OutcomeKind kind) {
  // random logistic-index probabilities / linear means in two covariates
  auto coef = [&] { return std::array<double, 3>{rng.normal(), rng.normal(), rng.normal()}; };
  auto prob = [](std::array<double, 3> c) {
    return NuisanceModel::Component{std::make_shared<FunctionRegressor>([c](std::span<const double> x) {
                                      return expit(c[0] + c[1] * x[0] + c[2] * x[1]);
                                    }),
                                    std::nullopt};
  };
  auto lin = [](std::array<double, 3> c) {
    return NuisanceModel::Component{std::make_shared<FunctionRegressor>([c](std::span<const double> x) {
                                      return c[0] + c[1] * x[0] + c[2] * x[1];
                                    }),
                                    std::nullopt};
  };
  auto model = std::make_shared<NuisanceModel>();
  model->outcome_kind = kind;
  model->p = prob(coef());
  model->e = prob(coef());
  model->q = prob(coef());
  for (std::size_t c = 0; c < 4; ++c) model->m[c] = kind == OutcomeKind::Binary ? prob(coef()) : lin(coef());
  return model;
}

}  // namespace

TEST_CASE("truncation band examples") {
  CHECK(truncate_probability(0.0001, 100) == doctest::Approx(0.1));
  CHECK(truncate_probability(0.5, 7) == 0.5);
  CHECK(truncate_probability(1.2, 400) == doctest::Approx(0.95));
  CHECK(truncation_band(3).lo == 0.5);
  CHECK(truncation_band(3).hi == 0.5);
}

TEST_CASE("truncation keeps values in the band (property)") {
  Rng rng(31);
  for (int i = 0; i < 2000; ++i) {
    const std::size_t n = 4 + rng.below(10000);
    const double v = rng.uniform(-0.5, 1.5);
    const double t = truncate_probability(v, n);
    const double eps = 1.0 / std::sqrt(static_cast<double>(n));
    CHECK(t >= eps);
    CHECK(t <= 1.0 - eps);
    if (v >= eps && v <= 1.0 - eps) CHECK(t == v);
  }
}

TEST_CASE("enforce_m5 examples") {
  auto eval = [](double m10, double m01, double m00) {
    auto model = enforce_m5(*constant_model(0.5, 0.5, 0.5, {m00, m01, m10, 0.0}, 0.5));
    const double x[1] = {0.0};
    return model.at(x).m_sz(1, 1);
  };
  CHECK(eval(0.5, 0.5, 0.5) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(eval(0.5, 0.9, 0.5) == doctest::Approx(0.9).epsilon(1e-14));
  // hand evaluation: odds .6/.4 * (.7/.3) / (.4/.6) = 5.25 -> 5.25/6.25
  CHECK(eval(0.6, 0.7, 0.4) == doctest::Approx(0.84).epsilon(1e-14));
  auto cont = *constant_model(0.5, 0.5, 0.5, {1, 2, 3, 4}, 0.5, OutcomeKind::Continuous);
  CHECK_ERROR_KIND(enforce_m5(cont), ErrorKind::NotBinaryOutcome);
}

TEST_CASE("enforce_m4 examples") {
  const double x[1] = {0.5};
  auto model = enforce_m4(*constant_model(0.5, 0.5, 0.5, {2, 2, 1, 0}, 0.5, OutcomeKind::Continuous), {0.0},
                          FeatureMap::intercept_only());
  CHECK(model.at(x).m_sz(1, 1) == 1.0);

  auto zero = enforce_m4(*constant_model(0.5, 0.5, 0.5, {0.3, 1.7, -0.4, 0}, 0.5, OutcomeKind::Continuous),
                         {0.0, 0.0}, FeatureMap::parse("intercept,x1"));
  const auto at = zero.at(x);
  CHECK(at.m_sz(1, 1) - at.m_sz(1, 0) == doctest::Approx(at.m_sz(0, 1) - at.m_sz(0, 0)).epsilon(1e-15));

  auto root = enforce_m4(*constant_model(0.5, 0.5, 0.5, {2, 5, 1, 0}, 0.5, OutcomeKind::Continuous), {1.0, -2.0},
                         FeatureMap::parse("intercept,x1"));
  CHECK(root.at(x).m_sz(1, 1) == 4.0);

  CHECK_ERROR_KIND(enforce_m4(NuisanceModel{}, {1.0}, FeatureMap::parse("intercept,x1")),
                   ErrorKind::DimensionMismatch);
}

TEST_CASE("restriction identities on 1000 random drafts") {
  Rng rng(77);
  const auto psi = FeatureMap::parse("intercept,x1,x2,x1*x2");
  double worst5 = 0.0, worst4 = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto m5 = enforce_m5(*smooth_draft(rng, OutcomeKind::Binary));
    std::vector<double> theta{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    const auto m4 = enforce_m4(*smooth_draft(rng, OutcomeKind::Continuous), theta, psi);
    const double x[2] = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const auto a = m5.at(x);
    worst5 = std::max(worst5, std::abs(logit(a.m_sz(1, 1)) - logit(a.m_sz(1, 0)) - logit(a.m_sz(0, 1)) +
                                       logit(a.m_sz(0, 0))));
    const auto b = m4.at(x);
    const auto f = psi(x);
    const double lin = std::inner_product(f.begin(), f.end(), theta.begin(), 0.0);
    worst4 = std::max(worst4, std::abs(b.m_sz(1, 1) - b.m_sz(1, 0) - b.m_sz(0, 1) + b.m_sz(0, 0) - lin));
  }
  CHECK(worst5 < 1e-12);
  CHECK(worst4 < 1e-12);
}

TEST_CASE("binary variances follow the means") {
  const double x[1] = {0.0};
  const auto at = constant_model(0.5, 0.5, 0.5, {0.1, 0.2, 0.3, 0.4}, 0.5)->at(x);
  for (std::size_t c = 0; c < 4; ++c) CHECK(at.v[c] == doctest::Approx(at.m[c] * (1 - at.m[c])));
}

TEST_CASE("learner specs parse and print") {
  for (const char* text : {"cell_mean", "irls:2", "oracle", "known:0.5", "known:0.25"}) {
    CHECK(LearnerSpec::parse(text).to_string() == text);
  }
  CHECK(LearnerSpec::parse("irls") == LearnerSpec::irls(1));
  CHECK_ERROR_KIND(LearnerSpec::parse("forest"), ErrorKind::ConflictingOptions);
  CHECK_ERROR_KIND(LearnerSpec::parse("irls:x"), ErrorKind::ConflictingOptions);
  CHECK_ERROR_KIND(LearnerSpec::parse("known:"), ErrorKind::ConflictingOptions);
  CHECK(parse_restriction("m4") == Restriction::M4);
  CHECK(to_string(Restriction::M5) == "m5");
}

TEST_CASE("theta_wls examples") {
  // two RCT rows and two observational rows, x1 in {0, 1}
  const Dataset d = rows_to_data({{1, 1, 1.0, 0.0}, {1, 0, 0.5, 1.0}, {0, 1, 0.0, 0.0}, {0, 0, 0.0, 1.0}},
                                 OutcomeKind::Continuous);
  const FoldAssignment folds({0, 1, 1, 0}, 2);
  auto draft = constant_model(0.5, 0.5, 0.5, {0.1, 0.3, 0.0, 0.0}, 0.5, OutcomeKind::Continuous);
  const std::vector<NuisanceModelPtr> drafts{draft, draft};

  SUBCASE("two rows are interpolated") {
    // targets: 1*(1/0.5) - 0.2 = 1.8 at x1=0; 0.5*(-1/0.5) - 0.2 = -1.2 at x1=1
    const auto theta = theta_wls(d, folds, drafts, FeatureMap::parse("intercept,x1"), 0.5);
    CHECK(theta[0] == doctest::Approx(1.8).epsilon(1e-13));
    CHECK(theta[1] == doctest::Approx(-3.0).epsilon(1e-13));
  }
  SUBCASE("intercept only gives the mean target") {
    const auto theta = theta_wls(d, folds, drafts, FeatureMap::intercept_only(), 0.5);
    CHECK(theta[0] == doctest::Approx(0.3).epsilon(1e-13));
  }
  SUBCASE("zero target gives zero") {
    const Dataset z = rows_to_data({{1, 1, 0.0, 0.0}, {1, 0, 0.0, 1.0}, {0, 1, 0.0, 0.0}, {0, 0, 0.0, 1.0}},
                                   OutcomeKind::Continuous);
    auto flat = constant_model(0.5, 0.5, 0.5, {0.2, 0.2, 0.0, 0.0}, 0.5, OutcomeKind::Continuous);
    const std::vector<NuisanceModelPtr> flats{flat, flat};
    const auto theta = theta_wls(z, folds, flats, FeatureMap::parse("intercept,x1"), 0.5);
    CHECK(theta[0] == 0.0);
    CHECK(theta[1] == 0.0);
  }
  SUBCASE("per-row propensity when e is not known") {
    auto e25 = constant_model(0.5, 0.25, 0.5, {0.1, 0.3, 0.0, 0.0}, 0.5, OutcomeKind::Continuous);
    const std::vector<NuisanceModelPtr> ds{e25, e25};
    // 1/0.25 - 0.2 = 3.8 ; -0.5/0.75 - 0.2
    const auto theta = theta_wls(d, folds, ds, FeatureMap::parse("intercept,x1"), std::nullopt);
    CHECK(theta[0] == doctest::Approx(3.8).epsilon(1e-13));
    CHECK(theta[0] + theta[1] == doctest::Approx(-0.5 / 0.75 - 0.2).epsilon(1e-13));
  }
  const Dataset obs_only = rows_to_data({{0, 1, 0.0, 0.0}, {0, 0, 0.0, 1.0}}, OutcomeKind::Continuous);
  CHECK_ERROR_KIND(theta_wls(obs_only, FoldAssignment({0, 1}, 2), drafts, FeatureMap::intercept_only(), 0.5),
                   ErrorKind::NoRctRows);
}

TEST_CASE("fit_variance_glm examples") {
  ModelDiagnostics diag;
  const Dataset d = rows_to_data({{1, 1, 0, 0.0}, {1, 1, 0, 1.0}, {1, 0, 0, 0.0}, {0, 1, 0, 0.0}, {0, 0, 0, 1.0}},
                                 OutcomeKind::Continuous);
  std::vector<std::size_t> all{0, 1, 2, 3, 4};
  SUBCASE("constant residuals with an intercept") {
    const std::vector<double> r2(5, 2.5);
    const auto v = fit_variance_glm(d, all, r2, FeatureMap::intercept_only(), {}, diag);
    const double x[1] = {0.3};
    for (const auto& f : v) CHECK(f->predict(x) == doctest::Approx(2.5).epsilon(1e-10));
    CHECK(diag.pooled_variance_fits == 0);
  }
  SUBCASE("two distinct x are reproduced") {
    const std::vector<double> r2{1.0, 4.0, 1.0, 1.0, 1.0};
    const auto v = fit_variance_glm(d, all, r2, FeatureMap::parse("intercept,x1"), {}, diag);
    const double x0[1] = {0.0}, x1[1] = {1.0};
    CHECK(v[cell(1, 1)]->predict(x0) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(v[cell(1, 1)]->predict(x1) == doctest::Approx(4.0).epsilon(1e-8));
  }
  SUBCASE("an empty stratum takes the pooled fit") {
    const std::vector<std::size_t> train{0, 1, 3, 4};  // no (1,0) rows
    const std::vector<double> r2(5, 0.7);
    const auto v = fit_variance_glm(d, train, r2, FeatureMap::intercept_only(), {}, diag);
    CHECK(diag.pooled_variance_fits == 1);
    const double x[1] = {0.0};
    CHECK(v[cell(1, 0)]->predict(x) == doctest::Approx(0.7).epsilon(1e-10));
  }
  const Dataset b = rows_to_data({{1, 1, 0, 0.0}}, OutcomeKind::Binary);
  const std::vector<std::size_t> one{0};
  const std::vector<double> r1{1.0};
  CHECK_ERROR_KIND(fit_variance_glm(b, one, r1, FeatureMap::intercept_only(), {}, diag),
                   ErrorKind::ConflictingOptions);
}

TEST_CASE("cross_fit on the discrete design") {
  ScenarioSpec spec;
  spec.n_rct = 400;
  spec.m_obs = 400;
  Rng rng(5);
  const Dataset data = generate(spec, rng);
  const auto folds = make_folds(data.size(), 2, rng);

  CrossFitSpec cs;
  cs.restriction = Restriction::M5;
  const auto bundle = cross_fit(data, folds, cs);
  REQUIRE(bundle.models.size() == 2);
  CHECK_FALSE(bundle.shared_model());
  CHECK(bundle.rho == doctest::Approx(0.5));

  for (int k = 0; k < 2; ++k) {
    const auto train = folds.complement(k);
    CHECK(bundle.training_hash[k] == hash_indices(train));
    const auto& model = *bundle.models[k];
    // cell tables come from the complementary half
    const auto direct = CellMeanRegressor::fit(data, train, RegressionTarget::outcome(0, 1));
    const auto band = truncation_band(select_rows(data, train, RegressionTarget::outcome(0, 1)).size());
    for (double a : {0.0, 1.0}) {
      for (double b : {0.0, 1.0}) {
        const double x[2] = {a, b};
        CHECK(model.m[cell(0, 1)](x) == band.apply(direct.predict(x)));
        const auto at = model.at(x);
        CHECK(std::abs(logit(at.m_sz(1, 1)) - logit(at.m_sz(1, 0)) - logit(at.m_sz(0, 1)) + logit(at.m_sz(0, 0))) <
              1e-12);
        const auto p_band = truncation_band(train.size());
        CHECK(at.p >= p_band.lo);
        CHECK(at.p <= p_band.hi);
      }
    }
  }
}

TEST_CASE("known propensity is passed through untruncated") {
  ScenarioSpec spec;
  spec.n_rct = 200;
  spec.m_obs = 200;
  Rng rng(6);
  const Dataset data = generate(spec, rng);
  const auto folds = make_folds(data.size(), 5, rng);
  CrossFitSpec cs;
  cs.e = LearnerSpec::known(0.03);
  const auto eta = evaluate_out_of_fold(data, cross_fit(data, folds, cs));
  for (const auto& n : eta) CHECK(n.e == 0.03);
}

TEST_CASE("cross_fit is invariant to row order within fold membership") {
  ScenarioSpec spec;
  spec.n_rct = 300;
  spec.m_obs = 300;
  Rng rng(8);
  const Dataset data = generate(spec, rng);
  const auto folds = make_folds(data.size(), 5, rng);

  std::vector<std::size_t> perm(data.size());
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm.begin(), perm.end());
  const Dataset shuffled = data.subset(perm);
  std::vector<int> labels(data.size());
  for (std::size_t i = 0; i < perm.size(); ++i) labels[i] = folds.fold_of(perm[i]);
  const FoldAssignment shuffled_folds(labels, 5);

  CrossFitSpec cs;
  cs.restriction = Restriction::M5;
  const auto a = cross_fit(data, folds, cs);
  const auto b = cross_fit(shuffled, shuffled_folds, cs);
  for (int k = 0; k < 5; ++k) {
    for (double x1 : {0.0, 1.0}) {
      for (double x2 : {0.0, 1.0}) {
        const double x[2] = {x1, x2};
        const auto u = a.models[k]->at(x);
        const auto v = b.models[k]->at(x);
        CHECK(u.p == v.p);
        CHECK(u.q == v.q);
        CHECK(u.m == v.m);
      }
    }
  }
}

TEST_CASE("oracle bypass shares one model") {
  ScenarioSpec spec;
  spec.n_rct = 100;
  spec.m_obs = 100;
  Rng rng(9);
  const Dataset data = generate(spec, rng);
  const auto folds = make_folds(data.size(), 5, rng);
  CrossFitSpec cs;
  cs.p = cs.e = cs.q = cs.m = LearnerSpec::oracle();
  cs.oracle = oracle_nuisances(spec);
  cs.restriction = Restriction::M5;
  const auto bundle = cross_fit(data, folds, cs);
  CHECK(bundle.shared_model());
  CHECK(bundle.models[0] == cs.oracle);
  CHECK(bundle.models.size() == 5);
}

TEST_CASE("cross_fit argument errors") {
  ScenarioSpec spec;
  spec.kind = ScenarioKind::M4Synthetic;
  spec.n_rct = 100;
  spec.m_obs = 100;
  Rng rng(10);
  const Dataset data = generate(spec, rng);
  const auto folds = make_folds(data.size(), 5, rng);
  CrossFitSpec cs;
  cs.p = cs.e = cs.q = cs.m = LearnerSpec::irls(1);
  cs.restriction = Restriction::M5;
  CHECK_ERROR_KIND(cross_fit(data, folds, cs), ErrorKind::NotBinaryOutcome);
  cs.restriction = Restriction::M4;
  CHECK_ERROR_KIND(cross_fit(data, folds, cs), ErrorKind::DimensionMismatch);
  cs.psi = M4Design::psi();
  cs.m = LearnerSpec::oracle();
  try {
    cross_fit(data, folds, cs);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ConflictingOptions);
    CHECK(std::string(e.what()).find("fold 0") != std::string::npos);
  }
}

TEST_CASE("theta estimate is consistent on the synthetic confounding design") {
  ScenarioSpec spec;
  spec.kind = ScenarioKind::M4Synthetic;
  spec.n_rct = 20000;
  spec.m_obs = 20000;
  spec.homoskedastic = true;
  Rng rng(12);
  const Dataset data = generate(spec, rng);
  const auto folds = make_folds(data.size(), 5, rng);
  CrossFitSpec cs;
  cs.p = cs.q = cs.m = LearnerSpec::oracle();
  cs.e = LearnerSpec::known(M4Design::e);
  cs.oracle = oracle_nuisances(spec);
  cs.restriction = Restriction::M4;
  cs.psi = M4Design::psi();
  const auto bundle = cross_fit(data, folds, cs);
  REQUIRE(bundle.theta.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(bundle.theta[k] - M4Design::theta[k]) < 0.1);
  // variance regressions come from the oracle
  const double x[2] = {0.2, -0.4};
  CHECK(bundle.models[0]->at(x).v_sz(1, 1) == doctest::Approx(M4Design::variance(1, 1, x, true)));
}
