#include "fusionest/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fusionest/error.hpp"

namespace fusionest {

std::string_view to_string(OutcomeKind kind) noexcept {
  return kind == OutcomeKind::Binary ? "binary" : "continuous";
}

void DatasetColumns::push_back(int s_value, int z_value, double y_value,
                               std::span<const double> x_row) {
  if (s.empty() && x.empty()) {
    d = x_row.size();
  } else if (x_row.size() != d) {
    throw Error(ErrorKind::DimensionMismatch,
                "covariate row of length " + std::to_string(x_row.size()) +
                    ", expected " + std::to_string(d));
  }
  s.push_back(s_value);
  z.push_back(z_value);
  y.push_back(y_value);
  x.insert(x.end(), x_row.begin(), x_row.end());
}

Dataset::Dataset(DatasetColumns columns, OutcomeKind outcome_kind)
    : d_(columns.d),
      outcome_kind_(outcome_kind),
      s_(std::move(columns.s)),
      z_(std::move(columns.z)),
      y_(std::move(columns.y)),
      x_(std::move(columns.x)) {
  const std::size_t n = s_.size();
  if (n == 0) throw Error(ErrorKind::EmptyFile, "dataset has no observations");
  if (z_.size() != n || y_.size() != n || x_.size() != n * d_) {
    throw Error(ErrorKind::DimensionMismatch, "column lengths disagree");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if ((s_[i] != 0 && s_[i] != 1) || (z_[i] != 0 && z_[i] != 1)) {
      throw Error(ErrorKind::NonBinaryIndicator,
                  "row " + std::to_string(i) + ": s and z must be 0 or 1");
    }
    if (!std::isfinite(y_[i])) {
      throw Error(ErrorKind::MalformedRow, "row " + std::to_string(i) + ": y is not finite");
    }
    if (outcome_kind_ == OutcomeKind::Binary && y_[i] != 0.0 && y_[i] != 1.0) {
      throw Error(ErrorKind::NonBinaryOutcome,
                  "row " + std::to_string(i) + ": y=" + format_double(y_[i]) +
                      " but outcome kind is binary");
    }
    n_rct_ += static_cast<std::size_t>(s_[i]);
  }
  for (double v : x_) {
    if (!std::isfinite(v)) throw Error(ErrorKind::MalformedRow, "non-finite covariate");
  }
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  DatasetColumns cols;
  cols.d = d_;
  cols.s.reserve(rows.size());
  cols.z.reserve(rows.size());
  cols.y.reserve(rows.size());
  cols.x.reserve(rows.size() * d_);
  for (std::size_t i : rows) {
    cols.s.push_back(s_[i]);
    cols.z.push_back(z_[i]);
    cols.y.push_back(y_[i]);
    auto xi = x(i);
    cols.x.insert(cols.x.end(), xi.begin(), xi.end());
  }
  return Dataset(std::move(cols), outcome_kind_);
}

// ---------------------------------------------------------------------------

FoldAssignment::FoldAssignment(std::vector<int> fold_of, int k)
    : fold_of_(std::move(fold_of)), k_(k) {
  if (k_ < 2) throw Error(ErrorKind::BadFoldCount, "K must be at least 2");
  std::vector<std::size_t> sizes(static_cast<std::size_t>(k_), 0);
  for (int f : fold_of_) {
    if (f < 0 || f >= k_) throw Error(ErrorKind::BadFoldCount, "fold label out of range");
    ++sizes[static_cast<std::size_t>(f)];
  }
  const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
  if (*lo == 0) throw Error(ErrorKind::BadFoldCount, "empty fold");
  if (*hi - *lo > 1) throw Error(ErrorKind::BadFoldCount, "folds are not balanced");
}

std::vector<std::size_t> FoldAssignment::members(int k) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of_.size(); ++i)
    if (fold_of_[i] == k) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldAssignment::complement(int k) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of_.size(); ++i)
    if (fold_of_[i] != k) out.push_back(i);
  return out;
}

FoldAssignment make_folds(std::size_t n, int k, Rng& rng) {
  if (k < 2 || static_cast<std::size_t>(k) > n) {
    throw Error(ErrorKind::BadFoldCount,
                "need 2 <= K <= N, got K=" + std::to_string(k) + ", N=" + std::to_string(n));
  }
  // Which folds receive the N mod K surplus rows is itself randomized.
  std::vector<int> label_order(static_cast<std::size_t>(k));
  std::iota(label_order.begin(), label_order.end(), 0);
  rng.shuffle(label_order.begin(), label_order.end());

  std::vector<int> fold_of(n);
  for (std::size_t i = 0; i < n; ++i) fold_of[i] = label_order[i % static_cast<std::size_t>(k)];
  rng.shuffle(fold_of.begin(), fold_of.end());
  return FoldAssignment(std::move(fold_of), k);
}

// ---------------------------------------------------------------------------
// CSV input

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

double parse_number(std::string_view cell, std::size_t line_no) {
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(value)) {
    throw Error(ErrorKind::MalformedRow, "line " + std::to_string(line_no) + ": cannot parse '" +
                                             std::string(cell) + "' as a finite number");
  }
  return value;
}

int parse_indicator(std::string_view cell, std::string_view name, std::size_t line_no) {
  const double v = parse_number(cell, line_no);
  if (v != 0.0 && v != 1.0) {
    throw Error(ErrorKind::NonBinaryIndicator, "line " + std::to_string(line_no) + ": " +
                                                   std::string(name) + "=" + std::string(cell) +
                                                   " is not 0 or 1");
  }
  return static_cast<int>(v);
}

}  // namespace

Dataset parse_csv(std::string_view text, OutcomeKind outcome_kind) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = trim(text.substr(start, end - start));
    if (!line.empty()) lines.push_back(line);
    start = end + 1;
  }
  if (lines.empty()) throw Error(ErrorKind::EmptyFile, "no header row");

  const auto header = split_commas(lines.front());
  if (header.size() < 3 || header[0] != "s" || header[1] != "z" || header[2] != "y") {
    throw Error(ErrorKind::MalformedHeader, "header must start with s,z,y");
  }
  for (std::size_t j = 3; j < header.size(); ++j) {
    if (header[j] != "x" + std::to_string(j - 2)) {
      throw Error(ErrorKind::MalformedHeader, "column " + std::to_string(j + 1) + " is '" +
                                                  std::string(header[j]) + "', expected x" +
                                                  std::to_string(j - 2));
    }
  }
  if (lines.size() == 1) throw Error(ErrorKind::EmptyFile, "header present but no data rows");

  DatasetColumns cols;
  cols.d = header.size() - 3;
  std::vector<double> xrow(cols.d);
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto cells = split_commas(lines[li]);
    if (cells.size() != header.size()) {
      throw Error(ErrorKind::MalformedRow, "line " + std::to_string(li + 1) + " has " +
                                               std::to_string(cells.size()) + " cells, expected " +
                                               std::to_string(header.size()));
    }
    const int s = parse_indicator(cells[0], "s", li + 1);
    const int z = parse_indicator(cells[1], "z", li + 1);
    const double y = parse_number(cells[2], li + 1);
    if (outcome_kind == OutcomeKind::Binary && y != 0.0 && y != 1.0) {
      throw Error(ErrorKind::NonBinaryOutcome, "line " + std::to_string(li + 1) + ": y=" +
                                                   std::string(cells[2]) + " is not 0 or 1");
    }
    for (std::size_t j = 0; j < cols.d; ++j) xrow[j] = parse_number(cells[3 + j], li + 1);
    cols.push_back(s, z, y, xrow);
  }
  cols.d = header.size() - 3;
  return Dataset(std::move(cols), outcome_kind);
}

Dataset load_csv(const std::filesystem::path& path, OutcomeKind outcome_kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), outcome_kind);
}

// ---------------------------------------------------------------------------
// CSV output

void Table::add_row(std::vector<Cell> row) {
  if (row.size() != columns.size()) {
    throw Error(ErrorKind::DimensionMismatch, "row has " + std::to_string(row.size()) +
                                                  " cells, table has " +
                                                  std::to_string(columns.size()) + " columns");
  }
  rows.push_back(std::move(row));
}

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

namespace {

void append_field(std::string& out, std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) {
    out.append(field);
    return;
  }
  out.push_back('"');
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
}

struct CellFormatter {
  std::string operator()(const std::string& s) const { return s; }
  std::string operator()(double v) const { return format_double(v); }
  std::string operator()(std::int64_t v) const { return std::to_string(v); }
};

}  // namespace

std::string to_csv(const Table& table) {
  std::string out;
  for (std::size_t j = 0; j < table.columns.size(); ++j) {
    if (j) out.push_back(',');
    append_field(out, table.columns[j]);
  }
  out.push_back('\n');
  for (const auto& row : table.rows) {
    if (row.size() != table.columns.size()) {
      throw Error(ErrorKind::DimensionMismatch, "ragged table row");
    }
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out.push_back(',');
      append_field(out, std::visit(CellFormatter{}, row[j]));
    }
    out.push_back('\n');
  }
  return out;
}

void write_csv(const Table& table, const std::filesystem::path& path) {
  const std::string text = to_csv(table);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

Table to_table(const Dataset& data) {
  Table t;
  t.columns = {"s", "z", "y"};
  for (std::size_t j = 0; j < data.dim(); ++j) t.columns.push_back("x" + std::to_string(j + 1));
  t.rows.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::vector<Cell> row;
    row.reserve(t.columns.size());
    row.emplace_back(std::int64_t{data.s(i)});
    row.emplace_back(std::int64_t{data.z(i)});
    row.emplace_back(data.y(i));
    for (double v : data.x(i)) row.emplace_back(v);
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
  write_csv(to_table(data), path);
}

}  // namespace fusionest
