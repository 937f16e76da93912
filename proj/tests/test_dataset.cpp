#include <charconv>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "fusionest/dataset.hpp"
#include "fusionest/error.hpp"
#include "helpers.hpp"

using namespace fusionest;

TEST_CASE("parse_csv reads rows and infers the covariate dimension") {
  const Dataset d = parse_csv("s,z,y,x1,x2\n1,1,1,0,1\n0,0,0,1,0\n", OutcomeKind::Binary);
  CHECK(d.size() == 2);
  CHECK(d.dim() == 2);
  CHECK(d.s(0) == 1);
  CHECK(d.x(0)[1] == 1.0);
  CHECK(d.s(1) == 0);
  CHECK(d.x(1)[0] == 1.0);
  CHECK(d.n_rct() == 1);
  CHECK(d.n_obs() == 1);
}

TEST_CASE("parse_csv validation") {
  CHECK_ERROR_KIND(parse_csv("s,z,y,x1\n2,1,1,0\n", OutcomeKind::Binary), ErrorKind::NonBinaryIndicator);
  CHECK_ERROR_KIND(parse_csv("s,z,y,x1\n1,3,1,0\n", OutcomeKind::Binary), ErrorKind::NonBinaryIndicator);
  CHECK_ERROR_KIND(parse_csv("s,z,y,x1\n1,1,0.5,0\n", OutcomeKind::Binary), ErrorKind::NonBinaryOutcome);
  CHECK_ERROR_KIND(parse_csv("", OutcomeKind::Binary), ErrorKind::EmptyFile);
  CHECK_ERROR_KIND(parse_csv("s,z,y,x1\n", OutcomeKind::Binary), ErrorKind::EmptyFile);
  CHECK_ERROR_KIND(parse_csv("a,b,c\n1,1,1\n", OutcomeKind::Binary), ErrorKind::MalformedHeader);
  CHECK_ERROR_KIND(parse_csv("s,z,y,x1\n1,1,1\n", OutcomeKind::Binary), ErrorKind::MalformedRow);
  CHECK_ERROR_KIND(parse_csv("s,z,y,x1\n1,1,1,abc\n", OutcomeKind::Binary), ErrorKind::MalformedRow);
  // continuous outcomes accept any finite y
  CHECK(parse_csv("s,z,y,x1\n1,1,0.5,0\n", OutcomeKind::Continuous).y(0) == 0.5);
}

TEST_CASE("single-group files load") {
  const Dataset d = parse_csv("s,z,y,x1\n1,1,1,0\n1,0,0,1\n", OutcomeKind::Binary);
  CHECK(d.n_rct() == 2);
  CHECK(d.n_obs() == 0);
}

TEST_CASE("make_folds examples") {
  Rng rng(3);
  const auto f10 = make_folds(10, 5, rng);
  for (int k = 0; k < 5; ++k) CHECK(f10.members(k).size() == 2);

  Rng rng2(3);
  const auto f11 = make_folds(11, 5, rng2);
  std::multiset<std::size_t> sizes;
  for (int k = 0; k < 5; ++k) sizes.insert(f11.members(k).size());
  CHECK(sizes == std::multiset<std::size_t>{2, 2, 2, 2, 3});

  Rng a(99), b(99);
  CHECK(make_folds(57, 4, a).labels() == make_folds(57, 4, b).labels());

  Rng r(1);
  CHECK_ERROR_KIND(make_folds(10, 1, r), ErrorKind::BadFoldCount);
  CHECK_ERROR_KIND(make_folds(3, 4, r), ErrorKind::BadFoldCount);
}

TEST_CASE("make_folds partitions the index set (property)") {
  Rng gen(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + gen.below(300);
    const int k = 2 + static_cast<int>(gen.below(std::min<std::size_t>(n - 1, 9)));
    Rng rng(gen.next());
    const auto folds = make_folds(n, k, rng);
    std::vector<int> seen(n, 0);
    std::size_t lo = n, hi = 0;
    for (int f = 0; f < k; ++f) {
      const auto m = folds.members(f);
      const auto c = folds.complement(f);
      CHECK(m.size() + c.size() == n);
      lo = std::min(lo, m.size());
      hi = std::max(hi, m.size());
      for (auto i : m) ++seen[i];
    }
    CHECK(hi - lo <= 1);
    for (int v : seen) CHECK(v == 1);
  }
}

TEST_CASE("format_double round trips") {
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(1.0 / 3.0) != "");
  Rng gen(5);
  for (int i = 0; i < 5000; ++i) {
    const double v = (gen.uniform() - 0.5) * std::pow(10.0, static_cast<double>(gen.below(40)) - 20.0);
    const std::string s = format_double(v);
    double back = 0.0;
    std::from_chars(s.data(), s.data() + s.size(), back);
    CHECK(back == v);
  }
}

TEST_CASE("to_csv layout") {
  Table t;
  t.columns = {"a", "b"};
  CHECK(to_csv(t) == "a,b\n");
  t.add_row({std::string("x,y"), 0.5});
  t.add_row({std::string("q\"t"), std::int64_t{3}});
  CHECK(to_csv(t) == "a,b\n\"x,y\",0.5\n\"q\"\"t\",3\n");
}

TEST_CASE("write_csv then load_csv is the identity (property)") {
  const auto dir = std::filesystem::temp_directory_path() / "fusionest_test_dataset";
  std::filesystem::create_directories(dir);
  Rng gen(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 1 + gen.below(4);
    const bool binary = trial % 2 == 0;
    DatasetColumns cols;
    cols.d = d;
    const std::size_t n = 1 + gen.below(50);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> x(d);
      for (auto& v : x) v = gen.normal() * 1e3;
      const double y = binary ? static_cast<double>(gen.bernoulli(0.5)) : gen.normal() / 7.0;
      cols.push_back(gen.bernoulli(0.5), gen.bernoulli(0.5), y, x);
    }
    const OutcomeKind kind = binary ? OutcomeKind::Binary : OutcomeKind::Continuous;
    const Dataset original(cols, kind);
    const auto path = dir / ("d" + std::to_string(trial) + ".csv");
    write_csv(original, path);
    CHECK(load_csv(path, kind) == original);
  }
  std::filesystem::remove_all(dir);
  CHECK_ERROR_KIND(load_csv(dir / "missing.csv", OutcomeKind::Binary), ErrorKind::IoError);
}

TEST_CASE("subset keeps order and repeats") {
  const Dataset d = parse_csv("s,z,y,x1\n1,1,1,0\n0,0,0,1\n1,0,1,1\n", OutcomeKind::Binary);
  const std::vector<std::size_t> rows{2, 2, 0};
  const Dataset sub = d.subset(rows);
  CHECK(sub.size() == 3);
  CHECK(sub.row(0).z == 0);
  CHECK(sub.row(1).x[0] == 1.0);
  CHECK(sub.row(2).z == 1);
}

TEST_CASE("seed derivation and generator") {
  CHECK(derive_seed(7, 0, seed_tag::replicate) != derive_seed(7, 0, seed_tag::calibration));
  CHECK(derive_seed(7, 1) != derive_seed(7, 2));
  CHECK(derive_seed(7, 3) == mix64(mix64(7 ^ mix64(0)) ^ 3));

  Rng rng(1);
  double sum = 0.0, sq = 0.0;
  int hits = 0;
  bool in_range = true;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    in_range = in_range && u >= 0.0 && u < 1.0;
    const double g = rng.normal();
    sum += g;
    sq += g * g;
    hits += rng.bernoulli(0.3);
  }
  CHECK(in_range);
  CHECK(std::abs(sum / n) < 4.0 / std::sqrt(n));
  CHECK(std::abs(sq / n - 1.0) < 4.0 * std::sqrt(2.0 / n));
  CHECK(std::abs(hits / double(n) - 0.3) < 4.0 * std::sqrt(0.21 / n));
}
