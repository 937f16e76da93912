#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <span>
#include <vector>

#include "fusionest/dataset.hpp"
#include "fusionest/nuisance.hpp"
#include "fusionest/rng.hpp"

namespace fusionest::testing {

// Nuisance values set by hand.
inline NuisanceAt make_eta(double p, double e, double q, std::array<double, 4> m, std::array<double, 4> v = {}) {
  NuisanceAt n;
  n.p = p;
  n.e = e;
  n.q = q;
  n.m = m;
  n.v = v;
  return n;
}

inline NuisanceAt symmetric_eta() {
  return make_eta(0.5, 0.5, 0.5, {0.5, 0.5, 0.5, 0.5}, {0.25, 0.25, 0.25, 0.25});
}

// A model whose every component is a constant.
inline std::shared_ptr<NuisanceModel> constant_model(double p, double e, double q, std::array<double, 4> m,
                                                     double rho, OutcomeKind kind = OutcomeKind::Binary) {
  auto model = std::make_shared<NuisanceModel>();
  auto c = [](double v) { return NuisanceModel::Component{std::make_shared<ConstantRegressor>(v), std::nullopt}; };
  model->p = c(p);
  model->e = c(e);
  model->q = c(q);
  for (std::size_t i = 0; i < 4; ++i) model->m[i] = c(m[i]);
  model->rho = rho;
  model->outcome_kind = kind;
  return model;
}

inline CrossFitBundle shared_bundle(const FoldAssignment& folds, NuisanceModelPtr model, Restriction r) {
  CrossFitBundle b{folds, {}, model->rho, r, {}, {}, {}};
  b.models.assign(static_cast<std::size_t>(folds.k()), model);
  b.training_hash.assign(static_cast<std::size_t>(folds.k()), 0);
  return b;
}

// Random interior probability.
inline double draw_prob(Rng& rng, double lo = 0.05, double hi = 0.95) { return rng.uniform(lo, hi); }

}  // namespace fusionest::testing

// Evaluates `expr` and checks that it throws fusionest::Error of the given kind.
#define CHECK_ERROR_KIND(expr, expected_kind)                       \
  do {                                                              \
    bool thrown_ = false;                                           \
    try {                                                           \
      (void)(expr);                                                 \
    } catch (const ::fusionest::Error& e_) {                        \
      thrown_ = true;                                               \
      CHECK_MESSAGE(e_.kind() == (expected_kind), e_.what());       \
    }                                                               \
    CHECK_MESSAGE(thrown_, "expected " #expected_kind " from " #expr); \
  } while (0)
