#include "fusionest/features.hpp"

#include <algorithm>
#include <charconv>

#include "fusionest/error.hpp"

namespace fusionest {

FeatureMap::FeatureMap(std::vector<Term> terms) : terms_(std::move(terms)) {
  for (auto& t : terms_) std::sort(t.begin(), t.end());
}

FeatureMap FeatureMap::intercept_only() { return FeatureMap({Term{}}); }

FeatureMap FeatureMap::polynomial(std::size_t d, int degree) {
  std::vector<Term> terms{Term{}};
  std::vector<Term> previous{Term{}};
  for (int deg = 1; deg <= degree; ++deg) {
    std::vector<Term> next;
    for (const auto& base : previous) {
      const std::size_t start = base.empty() ? 0 : base.back();
      for (std::size_t j = start; j < d; ++j) {
        Term t = base;
        t.push_back(j);
        next.push_back(std::move(t));
      }
    }
    terms.insert(terms.end(), next.begin(), next.end());
    previous = std::move(next);
  }
  return FeatureMap(std::move(terms));
}

namespace {

std::size_t parse_covariate(std::string_view name, std::string_view whole) {
  std::size_t idx = 0;
  if (name.size() < 2 || name.front() != 'x') {
    throw Error(ErrorKind::ConflictingOptions,
                "feature term '" + std::string(whole) + "': expected names like x1, x2");
  }
  const auto [ptr, ec] = std::from_chars(name.data() + 1, name.data() + name.size(), idx);
  if (ec != std::errc() || ptr != name.data() + name.size() || idx == 0) {
    throw Error(ErrorKind::ConflictingOptions,
                "feature term '" + std::string(whole) + "': bad covariate '" + std::string(name) + "'");
  }
  return idx - 1;
}

}  // namespace

FeatureMap FeatureMap::parse(std::string_view spec) {
  std::vector<Term> terms;
  std::size_t start = 0;
  while (start <= spec.size()) {
    std::size_t end = spec.find(',', start);
    if (end == std::string_view::npos) end = spec.size();
    std::string_view item = spec.substr(start, end - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (item.empty()) {
      throw Error(ErrorKind::ConflictingOptions, "empty term in feature list '" + std::string(spec) + "'");
    }
    Term term;
    if (item != "intercept" && item != "1") {
      std::size_t f0 = 0;
      while (f0 <= item.size()) {
        std::size_t f1 = item.find('*', f0);
        if (f1 == std::string_view::npos) f1 = item.size();
        std::string_view factor = item.substr(f0, f1 - f0);
        int power = 1;
        if (auto caret = factor.find('^'); caret != std::string_view::npos) {
          std::string_view p = factor.substr(caret + 1);
          const auto [ptr, ec] = std::from_chars(p.data(), p.data() + p.size(), power);
          if (ec != std::errc() || ptr != p.data() + p.size() || power < 1) {
            throw Error(ErrorKind::ConflictingOptions, "bad power in '" + std::string(item) + "'");
          }
          factor = factor.substr(0, caret);
        }
        const std::size_t j = parse_covariate(factor, item);
        for (int r = 0; r < power; ++r) term.push_back(j);
        f0 = f1 + 1;
      }
    }
    terms.push_back(std::move(term));
    start = end + 1;
  }
  return FeatureMap(std::move(terms));
}

bool FeatureMap::has_intercept() const noexcept {
  return std::any_of(terms_.begin(), terms_.end(), [](const Term& t) { return t.empty(); });
}

std::size_t FeatureMap::min_dim() const noexcept {
  std::size_t m = 0;
  for (const auto& t : terms_)
    for (std::size_t j : t) m = std::max(m, j + 1);
  return m;
}

void FeatureMap::evaluate(std::span<const double> x, std::span<double> out) const {
  for (std::size_t k = 0; k < terms_.size(); ++k) {
    double v = 1.0;
    for (std::size_t j : terms_[k]) v *= x[j];
    out[k] = v;
  }
}

std::vector<double> FeatureMap::operator()(std::span<const double> x) const {
  std::vector<double> out(terms_.size());
  evaluate(x, out);
  return out;
}

std::string FeatureMap::to_string() const {
  std::string out;
  for (std::size_t k = 0; k < terms_.size(); ++k) {
    if (k) out += ',';
    if (terms_[k].empty()) {
      out += "intercept";
      continue;
    }
    for (std::size_t f = 0; f < terms_[k].size(); ++f) {
      if (f) out += '*';
      out += 'x' + std::to_string(terms_[k][f] + 1);
    }
  }
  return out;
}

}  // namespace fusionest
