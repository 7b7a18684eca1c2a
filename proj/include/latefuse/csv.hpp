// Copyright 2026 The latefuse Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef LATEFUSE_CSV_HPP
#define LATEFUSE_CSV_HPP

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "latefuse/core.hpp"
#include "latefuse/dataio.hpp"

// File formats. All numeric fields use '.' as the decimal separator and are
// written with the shortest representation that parses back to the same
// double, so save/load round-trips are bit-exact.

namespace latefuse {

inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view field, const std::string& context) {
  double v = 0.0;
  auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  require(res.ec == std::errc() && res.ptr == field.data() + field.size(),
          context + ": malformed number '" + std::string(field) + "'");
  return v;
}

inline long parse_long(std::string_view field, const std::string& context) {
  long v = 0;
  auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  require(res.ec == std::errc() && res.ptr == field.data() + field.size(),
          context + ": malformed integer '" + std::string(field) + "'");
  return v;
}

namespace detail {

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open '" + path.string() + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      fields.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return fields;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), "cannot write '" + path.string() + "'");
  out << content;
  require(out.good(), "write failed for '" + path.string() + "'");
}

inline void check_id(const std::string& id) {
  require(!id.empty(), "empty sample id");
  require(id.find(',') == std::string::npos && id.find('\n') == std::string::npos,
          "sample id '" + id + "' contains a separator");
}

}  // namespace detail

struct ProbabilityCsv {
  std::vector<std::string> ids;
  ProbabilityMatrix probs;
  std::vector<std::string> warnings;  // renormalized rows
};

/// Loads `id,p0,...,p{C-1}`. Rows whose sums are off by more than 1e-6 but
/// at most 1e-4 are renormalized with a warning; worse rows are rejected.
/// Row order is file order.
inline ProbabilityCsv load_probability_matrix(const std::filesystem::path& path,
                                              std::size_t expected_classes) {
  require(expected_classes >= 1, "load_probability_matrix: expected_classes must be >= 1");
  auto lines = detail::read_lines(path);
  require(!lines.empty(), path.string() + ": empty file");
  auto header = detail::split_fields(lines[0]);
  require(!header.empty() && header[0] == "id", path.string() + ": header must start with 'id'");
  require(header.size() == expected_classes + 1,
          path.string() + ": expected " + std::to_string(expected_classes) +
              " probability columns, found " + std::to_string(header.size() - 1));

  ProbabilityCsv out;
  const std::size_t n = lines.size() - 1;
  Matrix m(n, expected_classes);
  for (std::size_t r = 0; r < n; ++r) {
    const std::string context = path.string() + ":" + std::to_string(r + 2);
    auto fields = detail::split_fields(lines[r + 1]);
    require(fields.size() == expected_classes + 1, context + ": wrong column count");
    out.ids.emplace_back(fields[0]);
    double sum = 0.0;
    for (std::size_t k = 0; k < expected_classes; ++k) {
      double v = parse_double(fields[k + 1], context);
      require(std::isfinite(v) && v >= 0.0, context + ": invalid probability");
      m(r, k) = v;
      sum += v;
    }
    double dev = std::abs(sum - 1.0);
    if (dev > ProbabilityMatrix::kRowSumTolerance) {
      require(dev <= 1e-4, context + ": row sum " + format_double(sum) +
                               " deviates beyond 1e-4, rejecting");
      require(sum > 0.0, context + ": row sum not positive");
      for (std::size_t k = 0; k < expected_classes; ++k) m(r, k) /= sum;
      out.warnings.push_back(context + ": row sum " + format_double(sum) + " renormalized");
    }
  }
  out.probs = ProbabilityMatrix(std::move(m));
  return out;
}

inline void save_probability_matrix(const std::filesystem::path& path,
                                    const std::vector<std::string>& ids,
                                    const ProbabilityMatrix& probs) {
  require(ids.size() == probs.n_samples(), "save_probability_matrix: id/row count mismatch");
  std::ostringstream out;
  out << "id";
  for (std::size_t k = 0; k < probs.n_classes(); ++k) out << ",p" << k;
  out << "\n";
  for (std::size_t i = 0; i < probs.n_samples(); ++i) {
    detail::check_id(ids[i]);
    out << ids[i];
    for (double v : probs.row(i)) out << ',' << format_double(v);
    out << "\n";
  }
  detail::write_file(path, out.str());
}

inline IdLabels load_label_csv(const std::filesystem::path& path) {
  auto lines = detail::read_lines(path);
  require(!lines.empty(), path.string() + ": empty file");
  auto header = detail::split_fields(lines[0]);
  require(header.size() == 2 && header[0] == "id" && header[1] == "label",
          path.string() + ": expected header 'id,label'");
  IdLabels out;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const std::string context = path.string() + ":" + std::to_string(r + 1);
    auto fields = detail::split_fields(lines[r]);
    require(fields.size() == 2, context + ": wrong column count");
    out.ids.emplace_back(fields[0]);
    long y = parse_long(fields[1], context);
    require(y >= 0, context + ": negative label");
    out.labels.push_back(static_cast<int>(y));
  }
  return out;
}

inline void save_label_csv(const std::filesystem::path& path,
                           const std::vector<std::string>& ids,
                           const std::vector<int>& labels) {
  require(ids.size() == labels.size(), "save_label_csv: id/label count mismatch");
  std::ostringstream out;
  out << "id,label\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    detail::check_id(ids[i]);
    out << ids[i] << ',' << labels[i] << "\n";
  }
  detail::write_file(path, out.str());
}

inline IdFeatures load_feature_csv(const std::filesystem::path& path) {
  auto lines = detail::read_lines(path);
  require(!lines.empty(), path.string() + ": empty file");
  auto header = detail::split_fields(lines[0]);
  require(header.size() >= 2 && header[0] == "id",
          path.string() + ": header must start with 'id'");
  const std::size_t dim = header.size() - 1;
  IdFeatures out;
  Matrix m(lines.size() - 1, dim);
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const std::string context = path.string() + ":" + std::to_string(r + 1);
    auto fields = detail::split_fields(lines[r]);
    require(fields.size() == dim + 1, context + ": wrong column count");
    out.ids.emplace_back(fields[0]);
    for (std::size_t k = 0; k < dim; ++k) m(r - 1, k) = parse_double(fields[k + 1], context);
  }
  out.features = std::move(m);
  return out;
}

inline void save_feature_csv(const std::filesystem::path& path,
                             const std::vector<std::string>& ids,
                             const Matrix& features) {
  require(ids.size() == features.rows(), "save_feature_csv: id/row count mismatch");
  std::ostringstream out;
  out << "id";
  for (std::size_t k = 0; k < features.cols(); ++k) out << ",f" << k;
  out << "\n";
  for (std::size_t i = 0; i < features.rows(); ++i) {
    detail::check_id(ids[i]);
    out << ids[i];
    for (double v : features.row(i)) out << ',' << format_double(v);
    out << "\n";
  }
  detail::write_file(path, out.str());
}

inline void save_lines(const std::filesystem::path& path,
                       const std::vector<std::string>& lines) {
  std::ostringstream out;
  for (const auto& line : lines) out << line << "\n";
  detail::write_file(path, out.str());
}

inline std::vector<std::string> load_lines(const std::filesystem::path& path) {
  return detail::read_lines(path);
}

}  // namespace latefuse

#endif  // LATEFUSE_CSV_HPP
