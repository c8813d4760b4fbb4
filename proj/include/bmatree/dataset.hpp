#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "bmatree/error.hpp"
#include "bmatree/rng.hpp"

namespace bmatree {

// Tabular classification data. Features are stored row-major; labels are
// dense class indices 0..C-1. class_names keeps the original label text in
// sorted order, so class_names[c] is what label c was called on input.
class Dataset {
 public:
  Dataset() = default;

  Dataset(std::vector<double> features, std::vector<int> labels,
          std::vector<std::string> attribute_names,
          std::vector<std::string> class_names)
      : features_(std::move(features)),
        labels_(std::move(labels)),
        attribute_names_(std::move(attribute_names)),
        class_names_(std::move(class_names)) {
    validate();
  }

  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t attribute_count() const noexcept { return attribute_names_.size(); }
  std::size_t class_count() const noexcept { return class_names_.size(); }

  double at(std::size_t row, std::size_t attribute) const {
    return features_[row * attribute_count() + attribute];
  }
  std::span<const double> row(std::size_t i) const {
    return {features_.data() + i * attribute_count(), attribute_count()};
  }
  int label(std::size_t i) const { return labels_[i]; }

  const std::vector<int>& labels() const noexcept { return labels_; }
  const std::vector<double>& features() const noexcept { return features_; }
  const std::vector<std::string>& attribute_names() const noexcept {
    return attribute_names_;
  }
  const std::vector<std::string>& class_names() const noexcept { return class_names_; }

  std::vector<std::size_t> class_sizes() const {
    std::vector<std::size_t> sizes(class_count(), 0);
    for (int y : labels_) ++sizes[static_cast<std::size_t>(y)];
    return sizes;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  void validate() const {
    const std::size_t m = attribute_names_.size();
    if (m == 0) throw ParameterError("dataset needs at least one attribute");
    if (features_.size() != labels_.size() * m)
      throw ParameterError("feature matrix does not match n x m");
    std::set<std::string> distinct(attribute_names_.begin(), attribute_names_.end());
    if (distinct.size() != m) throw ParameterError("attribute names must be distinct");
    const int c = static_cast<int>(class_names_.size());
    if (c < 2) throw DegenerateDataError("need at least two classes");
    std::vector<bool> seen(class_names_.size(), false);
    for (int y : labels_) {
      if (y < 0 || y >= c) throw ParameterError("label out of range");
      seen[static_cast<std::size_t>(y)] = true;
    }
    if (!std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }))
      throw DegenerateDataError("every class must appear at least once");
  }

  std::vector<double> features_;
  std::vector<int> labels_;
  std::vector<std::string> attribute_names_;
  std::vector<std::string> class_names_;
};

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      return cells;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline bool parse_finite(std::string_view text, double& out) {
  text = trim(text);
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

// 17 significant digits: enough to round-trip any double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

// Builds a Dataset from raw label text, remapping to dense indices in sorted
// label order (numeric order when every label is numeric).
inline Dataset make_dataset(std::vector<double> features,
                            const std::vector<std::string>& raw_labels,
                            std::vector<std::string> attribute_names) {
  bool numeric = true;
  std::map<std::string, double> values;
  for (const auto& l : raw_labels) {
    double v = 0.0;
    if (!detail::parse_finite(l, v)) numeric = false;
    values[l] = v;
  }
  std::vector<std::string> names;
  for (const auto& [text, v] : values) names.push_back(text);
  if (numeric) {
    std::stable_sort(names.begin(), names.end(), [&](const auto& a, const auto& b) {
      return values.at(a) < values.at(b);
    });
  }
  if (names.size() < 2)
    throw DegenerateDataError("single distinct class label '" +
                              (names.empty() ? std::string() : names.front()) + "'");
  std::map<std::string, int> index;
  for (std::size_t c = 0; c < names.size(); ++c) index[names[c]] = static_cast<int>(c);
  std::vector<int> labels;
  labels.reserve(raw_labels.size());
  for (const auto& l : raw_labels) labels.push_back(index.at(l));
  return Dataset(std::move(features), std::move(labels), std::move(attribute_names),
                 std::move(names));
}

// Parses CSV text: header of attribute names plus one column named "class".
inline Dataset parse_csv(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = nl + 1;
  }
  while (!lines.empty() && detail::trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw ParseError("empty file");

  const auto header = detail::split_commas(lines.front());
  std::ptrdiff_t class_col = -1;
  std::vector<std::string> names;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto cell = detail::trim(header[c]);
    if (cell == "class") {
      if (class_col >= 0) throw ParseError("duplicate 'class' column");
      class_col = static_cast<std::ptrdiff_t>(c);
    } else {
      names.emplace_back(cell);
    }
  }
  if (class_col < 0) throw ParseError("header has no 'class' column");
  if (names.empty()) throw ParseError("header has no feature columns");
  if (lines.size() < 3) throw ParseError("need at least two data rows");

  std::vector<double> features;
  std::vector<std::string> raw_labels;
  features.reserve((lines.size() - 1) * names.size());
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto cells = detail::split_commas(lines[r]);
    if (cells.size() != header.size())
      throw ParseError("row " + std::to_string(r) + " has " + std::to_string(cells.size()) +
                       " cells, expected " + std::to_string(header.size()));
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (static_cast<std::ptrdiff_t>(c) == class_col) {
        const auto label = detail::trim(cells[c]);
        if (label.empty())
          throw ParseError("row " + std::to_string(r) + ", column 'class': empty label");
        raw_labels.emplace_back(label);
        continue;
      }
      double v = 0.0;
      if (!detail::parse_finite(cells[c], v))
        throw ParseError("row " + std::to_string(r) + ", column '" +
                         std::string(detail::trim(header[c])) + "': '" +
                         std::string(detail::trim(cells[c])) + "' is not a finite number");
      features.push_back(v);
    }
  }
  return make_dataset(std::move(features), raw_labels, std::move(names));
}

inline Dataset load_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str());
}

// Renders the CSV format read by parse_csv: attribute columns then "class",
// cells at 17 significant digits, '\n' line endings.
inline std::string to_csv(const Dataset& data) {
  std::string out;
  for (const auto& name : data.attribute_names()) {
    out += name;
    out += ',';
  }
  out += "class\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.row(i)) {
      out += detail::format_double(v);
      out += ',';
    }
    out += data.class_names()[static_cast<std::size_t>(data.label(i))];
    out += '\n';
  }
  return out;
}

inline void write_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << to_csv(data);
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline std::string dataset_digest(const Dataset& data) { return hex_digest(to_csv(data)); }

struct SyntheticSpec {
  std::size_t n = 686;
  std::size_t m = 72;
  std::size_t classes = 6;
  std::size_t informative = 12;
  double effect = 0.5;
  std::uint64_t seed = 7;
};

// Class-balanced Gaussian data. Informative attribute j < informative has
// mean effect * c for class c (1-based) and unit variance; the rest are
// standard normal noise independent of the class.
inline Dataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.informative < 1 || spec.informative > spec.m)
    throw ParameterError("informative must lie in [1, m]");
  if (spec.classes < 2) throw ParameterError("need at least two classes");
  if (spec.n < spec.classes) throw ParameterError("need n >= classes");

  Rng rng(spec.seed);
  std::vector<int> labels(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) labels[i] = static_cast<int>(i % spec.classes);
  rng.shuffle(labels.begin(), labels.end());

  std::vector<double> features(spec.n * spec.m);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const double class_mean = spec.effect * static_cast<double>(labels[i] + 1);
    for (std::size_t j = 0; j < spec.m; ++j) {
      const double shift = j < spec.informative ? class_mean : 0.0;
      features[i * spec.m + j] = shift + rng.normal();
    }
  }
  std::vector<std::string> names;
  for (std::size_t j = 0; j < spec.m; ++j) names.push_back("attr_" + std::to_string(j + 1));
  std::vector<std::string> class_names;
  for (std::size_t c = 0; c < spec.classes; ++c) class_names.push_back(std::to_string(c + 1));
  return Dataset(std::move(features), std::move(labels), std::move(names),
                 std::move(class_names));
}

// Permutes the labels, destroying any association with the features.
inline Dataset shuffle_labels(const Dataset& data, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> labels = data.labels();
  rng.shuffle(labels.begin(), labels.end());
  return Dataset(data.features(), std::move(labels), data.attribute_names(),
                 data.class_names());
}

// Row subset in the given order. Class names (and thus C) are kept, so every
// class must still be present.
inline Dataset select_rows(const Dataset& data, std::span<const std::size_t> rows) {
  const std::size_t m = data.attribute_count();
  std::vector<double> features;
  features.reserve(rows.size() * m);
  std::vector<int> labels;
  labels.reserve(rows.size());
  for (std::size_t r : rows) {
    const auto x = data.row(r);
    features.insert(features.end(), x.begin(), x.end());
    labels.push_back(data.label(r));
  }
  return Dataset(std::move(features), std::move(labels), data.attribute_names(),
                 data.class_names());
}

// Column projection; result attribute j is input attribute columns[j].
inline Dataset select_columns(const Dataset& data, std::span<const std::size_t> columns) {
  std::vector<double> features;
  features.reserve(data.size() * columns.size());
  std::vector<std::string> names;
  for (std::size_t c : columns) {
    if (c >= data.attribute_count()) throw ParameterError("column index out of range");
    names.push_back(data.attribute_names()[c]);
  }
  for (std::size_t i = 0; i < data.size(); ++i)
    for (std::size_t c : columns) features.push_back(data.at(i, c));
  return Dataset(std::move(features), data.labels(), std::move(names), data.class_names());
}

// Candidate thresholds per attribute: midpoints between consecutive distinct
// observed values, strictly increasing.
class RuleCatalog {
 public:
  RuleCatalog() = default;
  explicit RuleCatalog(std::vector<std::vector<double>> thresholds)
      : thresholds_(std::move(thresholds)) {
    for (std::size_t j = 0; j < thresholds_.size(); ++j)
      if (!thresholds_[j].empty()) splittable_.push_back(j);
  }

  std::size_t attribute_count() const noexcept { return thresholds_.size(); }
  std::size_t rule_count(std::size_t attribute) const { return thresholds_[attribute].size(); }
  double threshold(std::size_t attribute, std::size_t rule) const {
    return thresholds_[attribute][rule];
  }
  const std::vector<double>& thresholds(std::size_t attribute) const {
    return thresholds_[attribute];
  }
  // Attributes with at least one candidate rule, increasing.
  const std::vector<std::size_t>& splittable() const noexcept { return splittable_; }

  friend bool operator==(const RuleCatalog&, const RuleCatalog&) = default;

 private:
  std::vector<std::vector<double>> thresholds_;
  std::vector<std::size_t> splittable_;
};

inline RuleCatalog build_rule_catalog(const Dataset& data) {
  std::vector<std::vector<double>> thresholds(data.attribute_count());
  std::vector<double> column(data.size());
  for (std::size_t j = 0; j < data.attribute_count(); ++j) {
    for (std::size_t i = 0; i < data.size(); ++i) column[i] = data.at(i, j);
    std::sort(column.begin(), column.end());
    const auto last = std::unique(column.begin(), column.end());
    for (auto it = column.begin(); it + 1 < last; ++it) {
      // a + (b - a) / 2 stays strictly inside (a, b) unless a and b are
      // adjacent doubles, in which case a itself separates them under <=.
      double mid = *it + (*(it + 1) - *it) / 2.0;
      if (!(mid < *(it + 1))) mid = *it;
      thresholds[j].push_back(mid);
    }
  }
  return RuleCatalog(std::move(thresholds));
}

struct FoldPlan {
  std::size_t k_folds = 0;
  std::vector<std::size_t> assignment;  // fold index 0..k-1 per sample

  std::vector<std::size_t> test_rows(std::size_t fold) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < assignment.size(); ++i)
      if (assignment[i] == fold) rows.push_back(i);
    return rows;
  }
  std::vector<std::size_t> train_rows(std::size_t fold) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < assignment.size(); ++i)
      if (assignment[i] != fold) rows.push_back(i);
    return rows;
  }
  std::vector<std::size_t> fold_sizes() const {
    std::vector<std::size_t> sizes(k_folds, 0);
    for (std::size_t f : assignment) ++sizes[f];
    return sizes;
  }
};

// Stratified k-fold assignment. Each class's members are shuffled and the
// classes are laid end to end; position p goes to fold p mod k. This keeps
// both total and per-class fold sizes within one of each other.
inline FoldPlan make_folds(const Dataset& data, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ParameterError("need at least two folds");
  const auto sizes = data.class_sizes();
  for (std::size_t c = 0; c < sizes.size(); ++c)
    if (sizes[c] < k)
      throw StratificationError("class '" + data.class_names()[c] + "' has " +
                                std::to_string(sizes[c]) + " members, fewer than " +
                                std::to_string(k) + " folds");
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> members(data.class_count());
  for (std::size_t i = 0; i < data.size(); ++i)
    members[static_cast<std::size_t>(data.label(i))].push_back(i);
  FoldPlan plan{k, std::vector<std::size_t>(data.size(), 0)};
  std::size_t position = 0;
  for (auto& group : members) {
    rng.shuffle(group.begin(), group.end());
    for (std::size_t i : group) plan.assignment[i] = position++ % k;
  }
  return plan;
}

}  // namespace bmatree
