#include "fusionest/nuisance.hpp"

#include <charconv>
#include <cmath>

#include "fusionest/error.hpp"
#include "fusionest/linalg.hpp"

namespace fusionest {

std::string_view to_string(Restriction r) noexcept {
  switch (r) {
    case Restriction::None: return "none";
    case Restriction::M4: return "m4";
    case Restriction::M5: return "m5";
  }
  return "none";
}

Restriction parse_restriction(std::string_view text) {
  if (text == "none") return Restriction::None;
  if (text == "m4" || text == "M4") return Restriction::M4;
  if (text == "m5" || text == "M5") return Restriction::M5;
  throw Error(ErrorKind::ConflictingOptions,
              "unknown restriction '" + std::string(text) + "' (expected none, m4 or m5)");
}

Band truncation_band(std::size_t n_train) {
  if (n_train < 4) return {0.5, 0.5};
  const double eps = 1.0 / std::sqrt(static_cast<double>(n_train));
  return {eps, 1.0 - eps};
}

double truncate_probability(double value, std::size_t n_train) {
  return truncation_band(n_train).apply(value);
}

NuisanceAt NuisanceModel::at(std::span<const double> x) const {
  NuisanceAt r;
  r.p = p(x);
  r.e = e(x);
  r.q = q(x);
  const double m10 = m[cell(1, 0)](x);
  const double m01 = m[cell(0, 1)](x);
  const double m00 = m[cell(0, 0)](x);
  r.m[cell(1, 0)] = m10;
  r.m[cell(0, 1)] = m01;
  r.m[cell(0, 0)] = m00;
  switch (restriction) {
    case Restriction::None:
      r.m[cell(1, 1)] = m[cell(1, 1)](x);
      break;
    case Restriction::M5:
      r.m[cell(1, 1)] = expit(logit(m10) + logit(m01) - logit(m00));
      break;
    case Restriction::M4: {
      double shift = 0.0;
      const auto& terms = psi.terms();
      for (std::size_t k = 0; k < terms.size(); ++k) {
        double f = 1.0;
        for (std::size_t j : terms[k]) f *= x[j];
        shift += theta[k] * f;
      }
      r.m[cell(1, 1)] = m10 + m01 - m00 + shift;
      break;
    }
  }
  if (outcome_kind == OutcomeKind::Binary) {
    for (std::size_t c = 0; c < 4; ++c) r.v[c] = r.m[c] * (1.0 - r.m[c]);
  } else {
    for (std::size_t c = 0; c < 4; ++c) r.v[c] = v[c] ? v[c]->predict(x) : 0.0;
  }
  return r;
}

NuisanceModel enforce_m5(NuisanceModel draft) {
  if (draft.outcome_kind != OutcomeKind::Binary) {
    throw Error(ErrorKind::NotBinaryOutcome, "the odds-ratio restriction needs a binary outcome");
  }
  draft.restriction = Restriction::M5;
  draft.m[cell(1, 1)] = {};
  draft.theta.clear();
  draft.psi = {};
  return draft;
}

NuisanceModel enforce_m4(NuisanceModel draft, std::vector<double> theta, FeatureMap psi) {
  if (theta.size() != psi.size()) {
    throw Error(ErrorKind::DimensionMismatch, "theta has " + std::to_string(theta.size()) +
                                                  " entries, psi has " + std::to_string(psi.size()) +
                                                  " terms");
  }
  draft.restriction = Restriction::M4;
  draft.m[cell(1, 1)] = {};
  draft.theta = std::move(theta);
  draft.psi = std::move(psi);
  return draft;
}

// ---------------------------------------------------------------------------

LearnerSpec LearnerSpec::parse(std::string_view text) {
  auto bad = [&](const std::string& why) {
    return Error(ErrorKind::ConflictingOptions,
                 "learner '" + std::string(text) + "': " + why +
                     " (expected cell_mean, irls:<degree>, oracle or known:<value>)");
  };
  if (text == "cell_mean") return cell_mean();
  if (text == "oracle") return oracle();
  if (text == "irls") return irls(1);
  if (text.starts_with("irls:")) {
    int degree = 0;
    const auto arg = text.substr(5);
    const auto [ptr, ec] = std::from_chars(arg.data(), arg.data() + arg.size(), degree);
    if (ec != std::errc() || ptr != arg.data() + arg.size() || degree < 0 || degree > 6) {
      throw bad("degree must be an integer in [0, 6]");
    }
    return irls(degree);
  }
  if (text.starts_with("known:")) {
    const auto arg = text.substr(6);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(arg.data(), arg.data() + arg.size(), v);
    if (ec != std::errc() || ptr != arg.data() + arg.size() || !std::isfinite(v)) {
      throw bad("value is not a finite number");
    }
    return known(v);
  }
  throw bad("unrecognized kind");
}

std::string LearnerSpec::to_string() const {
  switch (kind) {
    case Kind::CellMean: return "cell_mean";
    case Kind::Irls: return "irls:" + std::to_string(degree);
    case Kind::Oracle: return "oracle";
    case Kind::Known: return "known:" + format_double(value);
  }
  return "cell_mean";
}

bool CrossFitBundle::shared_model() const {
  for (const auto& m : models)
    if (m != models.front()) return false;
  return !models.empty();
}

ModelDiagnostics CrossFitBundle::diagnostics() const {
  ModelDiagnostics d;
  if (shared_model()) return models.front()->diagnostics;
  for (const auto& m : models) d += m->diagnostics;
  return d;
}

std::uint64_t hash_indices(std::span<const std::size_t> rows) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i : rows) {
    auto v = static_cast<std::uint64_t>(i);
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

// ---------------------------------------------------------------------------

NuisanceModel::Component fit_component(const Dataset& data, std::span<const std::size_t> rows,
                                       const RegressionTarget& target, const LearnerSpec& learner,
                                       bool probability, const NuisanceModel::Component* oracle,
                                       const IrlsOptions& irls, ModelDiagnostics& diag) {
  using Kind = LearnerSpec::Kind;
  if (learner.kind == Kind::Known) {
    return {std::make_shared<ConstantRegressor>(learner.value), std::nullopt};
  }
  if (learner.kind == Kind::Oracle) {
    if (oracle == nullptr || !*oracle) {
      throw Error(ErrorKind::ConflictingOptions,
                  "oracle learner requested for " + target.name() + " but no oracle model is available");
    }
    return *oracle;
  }

  RegressionTarget effective = target;
  std::size_t n_fit = select_rows(data, rows, target).size();
  if (n_fit == 0) {
    ++diag.empty_strata;
    effective = target.pooled();
    n_fit = rows.size();
    if (n_fit == 0) throw Error(ErrorKind::EmptyStratum, "no training rows at all");
  }

  NuisanceModel::Component out;
  if (learner.kind == Kind::CellMean) {
    out.fn = std::make_shared<CellMeanRegressor>(CellMeanRegressor::fit(data, rows, effective));
  } else {
    const FeatureMap features = FeatureMap::polynomial(data.dim(), learner.degree);
    auto fit = fit_logistic_irls(data, rows, effective, features,
                                 probability ? Link::Logit : Link::Identity, irls);
    if (!fit.converged) ++diag.irls_not_converged;
    if (fit.ridge_used) ++diag.ridge_fallbacks;
    out.fn = std::make_shared<GlmRegressor>(std::move(fit));
  }
  if (probability) out.band = truncation_band(n_fit);
  return out;
}

std::vector<double> theta_wls(const Dataset& data, const FoldAssignment& folds,
                              std::span<const NuisanceModelPtr> drafts, const FeatureMap& psi,
                              std::optional<double> e_star) {
  if (psi.empty()) throw Error(ErrorKind::DimensionMismatch, "empty confounding basis");
  if (psi.min_dim() > data.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "confounding basis '" + psi.to_string() +
                                                  "' references more covariates than the data has");
  }
  if (e_star && !(*e_star > 0.0 && *e_star < 1.0)) {
    throw Error(ErrorKind::DegeneratePropensity, "known RCT propensity must lie in (0, 1)");
  }
  NormalEquations ne(psi.size());
  std::vector<double> f(psi.size());
  std::size_t n_rct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.s(i) != 1) continue;
    ++n_rct;
    const auto x = data.x(i);
    const NuisanceModel& model = *drafts[static_cast<std::size_t>(folds.fold_of(i))];
    const double e = e_star ? *e_star : model.e(x);
    const double z = data.z(i);
    const double ipw = data.y(i) * (z / e - (1.0 - z) / (1.0 - e));
    const double obs_contrast = model.m[cell(0, 1)](x) - model.m[cell(0, 0)](x);
    psi.evaluate(x, f);
    ne.add(f, 1.0, ipw - obs_contrast);
  }
  if (n_rct == 0) throw Error(ErrorKind::NoRctRows, "confounding regression needs RCT rows");
  return ne.solve(ErrorKind::SingularDesign).solution;
}

std::array<RegressorPtr, 4> fit_variance_glm(const Dataset& data, std::span<const std::size_t> train,
                                             std::span<const double> residual_sq,
                                             const FeatureMap& psi_v, const IrlsOptions& irls,
                                             ModelDiagnostics& diag) {
  if (data.outcome_kind() != OutcomeKind::Continuous) {
    throw Error(ErrorKind::ConflictingOptions,
                "variance regression is for continuous outcomes; binary outcomes use m(1-m)");
  }
  if (residual_sq.size() != data.size()) {
    throw Error(ErrorKind::DimensionMismatch, "need one squared residual per row");
  }
  auto fit_rows = [&](auto&& keep) -> std::shared_ptr<GlmRegressor> {
    std::vector<double> x;
    std::vector<double> y;
    for (std::size_t i : train) {
      if (!keep(i)) continue;
      const auto xi = data.x(i);
      x.insert(x.end(), xi.begin(), xi.end());
      y.push_back(residual_sq[i]);
    }
    if (y.empty()) return nullptr;
    auto fit = fit_glm(x, data.dim(), y, psi_v, Link::Log, irls);
    if (!fit.converged) ++diag.irls_not_converged;
    if (fit.ridge_used) ++diag.ridge_fallbacks;
    return std::make_shared<GlmRegressor>(std::move(fit));
  };

  std::array<RegressorPtr, 4> out;
  RegressorPtr pooled;
  for (int s = 0; s <= 1; ++s) {
    for (int z = 0; z <= 1; ++z) {
      auto fit = fit_rows([&](std::size_t i) { return data.s(i) == s && data.z(i) == z; });
      if (!fit) {
        ++diag.pooled_variance_fits;
        if (!pooled) pooled = fit_rows([](std::size_t) { return true; });
        if (!pooled) throw Error(ErrorKind::EmptyStratum, "no rows for the variance regression");
        out[cell(s, z)] = pooled;
      } else {
        out[cell(s, z)] = std::move(fit);
      }
    }
  }
  return out;
}

namespace {

FeatureMap variance_features(const CrossFitSpec& spec, std::size_t d) {
  if (spec.psi_variance) return *spec.psi_variance;
  if (!spec.psi.empty()) return spec.psi;
  return FeatureMap::polynomial(d, 1);
}

NuisanceModel fit_draft(const Dataset& data, std::span<const std::size_t> train,
                        const CrossFitSpec& spec, bool fit_m11, double rho) {
  NuisanceModel model;
  model.rho = rho;
  model.outcome_kind = data.outcome_kind();
  const NuisanceModel* oracle = spec.oracle.get();
  auto& diag = model.diagnostics;
  const bool binary = data.outcome_kind() == OutcomeKind::Binary;

  model.p = fit_component(data, train, RegressionTarget::selection(), spec.p, true,
                          oracle ? &oracle->p : nullptr, spec.irls, diag);
  model.e = fit_component(data, train, RegressionTarget::rct_propensity(), spec.e, true,
                          oracle ? &oracle->e : nullptr, spec.irls, diag);
  model.q = fit_component(data, train, RegressionTarget::obs_propensity(), spec.q, true,
                          oracle ? &oracle->q : nullptr, spec.irls, diag);
  for (int s = 0; s <= 1; ++s) {
    for (int z = 0; z <= 1; ++z) {
      if (s == 1 && z == 1 && !fit_m11) continue;
      const auto c = cell(s, z);
      model.m[c] = fit_component(data, train, RegressionTarget::outcome(s, z), spec.m, binary,
                                 oracle ? &oracle->m[c] : nullptr, spec.irls, diag);
    }
  }
  if (spec.m.kind == LearnerSpec::Kind::Oracle && oracle) model.v = oracle->v;
  model.training_hash = hash_indices(train);
  model.description = "p=" + spec.p.to_string() + " e=" + spec.e.to_string() +
                      " q=" + spec.q.to_string() + " m=" + spec.m.to_string();
  return model;
}

void validate_spec(const Dataset& data, const CrossFitSpec& spec) {
  if (spec.restriction == Restriction::M5 && data.outcome_kind() != OutcomeKind::Binary) {
    throw Error(ErrorKind::NotBinaryOutcome, "restriction m5 needs a binary outcome");
  }
  if (spec.restriction == Restriction::M4 && spec.psi.empty()) {
    throw Error(ErrorKind::DimensionMismatch, "restriction m4 needs a confounding basis psi");
  }
  if (spec.psi.min_dim() > data.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "psi '" + spec.psi.to_string() +
                                                  "' references more covariates than the data has");
  }
}

}  // namespace

CrossFitBundle cross_fit(const Dataset& data, const FoldAssignment& folds, const CrossFitSpec& spec) {
  if (folds.size() != data.size()) {
    throw Error(ErrorKind::DimensionMismatch, "fold assignment does not cover the dataset");
  }
  validate_spec(data, spec);
  const int k_folds = folds.k();
  using Kind = LearnerSpec::Kind;

  CrossFitBundle bundle{folds, {}, 0.0, spec.restriction, {}, spec.psi, {}};

  const bool all_oracle = spec.oracle && spec.p.kind == Kind::Oracle && spec.e.kind == Kind::Oracle &&
                          spec.q.kind == Kind::Oracle && spec.m.kind == Kind::Oracle;
  if (all_oracle) {
    bundle.models.assign(static_cast<std::size_t>(k_folds), spec.oracle);
    bundle.rho = spec.oracle->rho;
    bundle.theta = spec.oracle->theta;
    bundle.training_hash.assign(static_cast<std::size_t>(k_folds), 0);
    return bundle;
  }

  const double rho = static_cast<double>(data.n_rct()) / static_cast<double>(data.size());
  bundle.rho = rho;

  std::vector<NuisanceModelPtr> drafts;
  std::vector<std::vector<std::size_t>> train_rows;
  for (int k = 0; k < k_folds; ++k) {
    train_rows.push_back(folds.complement(k));
    try {
      drafts.push_back(std::make_shared<NuisanceModel>(
          fit_draft(data, train_rows.back(), spec, spec.restriction == Restriction::None, rho)));
    } catch (const Error& err) {
      throw Error(err.kind(), "fold " + std::to_string(k) + ": " + err.what());
    }
    bundle.training_hash.push_back(drafts.back()->training_hash);
  }

  std::vector<std::shared_ptr<NuisanceModel>> models;
  if (spec.restriction == Restriction::M4) {
    const std::optional<double> e_star =
        spec.e.kind == Kind::Known ? std::optional<double>(spec.e.value) : std::nullopt;
    bundle.theta = theta_wls(data, folds, drafts, spec.psi, e_star);
  }
  for (const auto& d : drafts) {
    switch (spec.restriction) {
      case Restriction::None: models.push_back(std::make_shared<NuisanceModel>(*d)); break;
      case Restriction::M5: models.push_back(std::make_shared<NuisanceModel>(enforce_m5(*d))); break;
      case Restriction::M4:
        models.push_back(std::make_shared<NuisanceModel>(enforce_m4(*d, bundle.theta, spec.psi)));
        break;
    }
  }

  const bool need_variance = data.outcome_kind() == OutcomeKind::Continuous &&
                             !(spec.m.kind == Kind::Oracle && spec.oracle && spec.oracle->v[0]);
  if (need_variance) {
    std::vector<double> residual_sq(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& model = *models[static_cast<std::size_t>(folds.fold_of(i))];
      const double r = data.y(i) - model.at(data.x(i)).mean_at(data.s(i), data.z(i));
      residual_sq[i] = r * r;
    }
    const FeatureMap psi_v = variance_features(spec, data.dim());
    for (int k = 0; k < k_folds; ++k) {
      auto& model = *models[static_cast<std::size_t>(k)];
      try {
        model.v = fit_variance_glm(data, train_rows[static_cast<std::size_t>(k)], residual_sq, psi_v,
                                   spec.irls, model.diagnostics);
      } catch (const Error& err) {
        throw Error(err.kind(), "fold " + std::to_string(k) + " variance: " + err.what());
      }
    }
  }

  for (auto& m : models) bundle.models.push_back(std::move(m));
  return bundle;
}

NuisanceModel fit_full_sample(const Dataset& data, const CrossFitSpec& spec) {
  std::vector<std::size_t> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const double rho = static_cast<double>(data.n_rct()) / static_cast<double>(data.size());
  NuisanceModel model = fit_draft(data, all, spec, true, rho);
  model.restriction = Restriction::None;
  return model;
}

std::vector<NuisanceAt> evaluate_out_of_fold(const Dataset& data, const CrossFitBundle& bundle) {
  if (bundle.folds.size() != data.size()) {
    throw Error(ErrorKind::DimensionMismatch, "bundle does not cover the dataset");
  }
  std::vector<NuisanceAt> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out.push_back(bundle.model_for_row(i).at(data.x(i)));
  return out;
}

}  // namespace fusionest
