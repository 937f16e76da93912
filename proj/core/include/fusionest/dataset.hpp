#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "fusionest/rng.hpp"

namespace fusionest {

enum class OutcomeKind { Binary, Continuous };

std::string_view to_string(OutcomeKind kind) noexcept;

/// One record of the fused sample. `s == 1` marks the experimental (RCT) rows.
/// The covariate span points into the owning Dataset.
struct FusedObservation {
  int s = 0;
  int z = 0;
  double y = 0.0;
  std::span<const double> x;
};

/// Column storage used to build a Dataset. `x` is row-major with `d` columns.
struct DatasetColumns {
  std::size_t d = 0;
  std::vector<int> s;
  std::vector<int> z;
  std::vector<double> y;
  std::vector<double> x;

  void push_back(int s_value, int z_value, double y_value, std::span<const double> x_row);
  std::size_t size() const noexcept { return s.size(); }
};

/// Immutable fused dataset. Construction validates s, z in {0,1}, a common
/// covariate dimension, and binary y when outcome_kind is Binary. It does not
/// require both s-groups to be present; estimators check that themselves.
class Dataset {
 public:
  Dataset(DatasetColumns columns, OutcomeKind outcome_kind);

  std::size_t size() const noexcept { return s_.size(); }
  std::size_t dim() const noexcept { return d_; }
  OutcomeKind outcome_kind() const noexcept { return outcome_kind_; }

  int s(std::size_t i) const { return s_[i]; }
  int z(std::size_t i) const { return z_[i]; }
  double y(std::size_t i) const { return y_[i]; }
  std::span<const double> x(std::size_t i) const {
    return {x_.data() + i * d_, d_};
  }
  FusedObservation row(std::size_t i) const { return {s_[i], z_[i], y_[i], x(i)}; }

  std::size_t n_rct() const noexcept { return n_rct_; }
  std::size_t n_obs() const noexcept { return size() - n_rct_; }

  /// New dataset made of the given rows (repeats allowed), in the given order.
  Dataset subset(std::span<const std::size_t> rows) const;

  bool operator==(const Dataset&) const = default;

 private:
  std::size_t d_;
  OutcomeKind outcome_kind_;
  std::vector<int> s_;
  std::vector<int> z_;
  std::vector<double> y_;
  std::vector<double> x_;
  std::size_t n_rct_ = 0;
};

/// Balanced K-fold partition of {0, ..., N-1}.
class FoldAssignment {
 public:
  FoldAssignment(std::vector<int> fold_of, int k);

  int k() const noexcept { return k_; }
  std::size_t size() const noexcept { return fold_of_.size(); }
  int fold_of(std::size_t i) const { return fold_of_[i]; }
  const std::vector<int>& labels() const noexcept { return fold_of_; }

  /// Row indices in fold `k`, ascending.
  std::vector<std::size_t> members(int k) const;
  /// Row indices outside fold `k`, ascending.
  std::vector<std::size_t> complement(int k) const;

 private:
  std::vector<int> fold_of_;
  int k_;
};

/// Uniformly random balanced partition; deterministic for a given generator state.
FoldAssignment make_folds(std::size_t n, int k, Rng& rng);

/// Reads a CSV with header `s,z,y,x1,...,xd`.
Dataset load_csv(const std::filesystem::path& path, OutcomeKind outcome_kind);
Dataset parse_csv(std::string_view text, OutcomeKind outcome_kind);

// ---------------------------------------------------------------------------
// Tabular output

using Cell = std::variant<std::string, double, std::int64_t>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void add_row(std::vector<Cell> row);
};

/// Shortest decimal that parses back to the identical double.
std::string format_double(double value);

/// RFC-4180 style, '\n' line endings, header always present.
std::string to_csv(const Table& table);
void write_csv(const Table& table, const std::filesystem::path& path);

Table to_table(const Dataset& data);
void write_csv(const Dataset& data, const std::filesystem::path& path);

}  // namespace fusionest
