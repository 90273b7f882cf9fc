#include "lmmsubset/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <unordered_map>

#include "lmmsubset/digest.hpp"
#include "lmmsubset/errors.hpp"

namespace lmmsubset {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Splits one CSV record. Double-quoted fields may contain commas and "" escapes.
std::vector<std::string> split_record(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(trim(cur));
  return fields;
}

bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  return out + "\"";
}

}  // namespace

Schema Schema::from_json(const nlohmann::json& j) {
  Schema s;
  try {
    s.subject = j.at("subject").get<std::string>();
    s.response = j.at("response").get<std::string>();
    s.covariates = j.at("covariates").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("schema error: ") + e.what());
  }
  if (s.covariates.empty()) throw ValidationError("schema error: at least one covariate is required");
  return s;
}

nlohmann::json Schema::to_json() const {
  return {{"subject", subject}, {"response", response}, {"covariates", covariates}};
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

int LongitudinalDataset::group_of_row(int row) const {
  const auto it = std::upper_bound(offsets.begin(), offsets.end(), row);
  return static_cast<int>(it - offsets.begin()) - 1;
}

void LongitudinalDataset::validate() const {
  const int n = subjects();
  if (n == 0) throw ValidationError("validation error: dataset has no subjects");
  if (static_cast<int>(subject_labels.size()) != n || static_cast<int>(offsets.size()) != n + 1)
    throw ValidationError("validation error: group bookkeeping is inconsistent");
  long total = 0;
  for (int i = 0; i < n; ++i) {
    if (group_sizes[i] < 1)
      throw ValidationError("validation error: subject '" + subject_labels[i] + "' has no rows");
    if (offsets[i] != total) throw ValidationError("validation error: groups are not contiguous");
    total += group_sizes[i];
  }
  if (offsets[n] != total || total != y.size() || X.rows() != y.size())
    throw ValidationError("validation error: N does not equal the sum of group sizes");
  if (static_cast<int>(column_names.size()) != X.cols())
    throw ValidationError("validation error: column names do not match X");
  if (!y.allFinite() || !X.allFinite()) throw ValidationError("validation error: non-finite values");
  if (has_intercept && (X.cols() == 0 || (X.col(0).array() != 1.0).any()))
    throw ValidationError("validation error: intercept column must be all ones");
}

LongitudinalDataset LongitudinalDataset::from_groups(std::vector<std::string> labels,
                                                     std::vector<int> group_sizes, Eigen::VectorXd y,
                                                     Eigen::MatrixXd X,
                                                     std::vector<std::string> column_names,
                                                     bool has_intercept) {
  LongitudinalDataset d;
  d.subject_labels = std::move(labels);
  d.group_sizes = std::move(group_sizes);
  d.offsets.assign(d.group_sizes.size() + 1, 0);
  for (std::size_t i = 0; i < d.group_sizes.size(); ++i)
    d.offsets[i + 1] = d.offsets[i] + d.group_sizes[i];
  d.y = std::move(y);
  d.X = std::move(X);
  d.column_names = std::move(column_names);
  d.has_intercept = has_intercept;
  d.validate();
  return d;
}

LongitudinalDataset LongitudinalDataset::subset_subjects(const std::vector<int>& subjects) const {
  int total = 0;
  for (int s : subjects) {
    if (s < 0 || s >= this->subjects()) throw ValidationError("subset_subjects: index out of range");
    total += group_sizes[s];
  }
  Eigen::VectorXd ys(total);
  Eigen::MatrixXd Xs(total, X.cols());
  std::vector<std::string> labels;
  std::vector<int> sizes;
  int r = 0;
  for (int s : subjects) {
    const int m = group_sizes[s];
    ys.segment(r, m) = y.segment(offsets[s], m);
    Xs.middleRows(r, m) = X.middleRows(offsets[s], m);
    labels.push_back(subject_labels[s]);
    sizes.push_back(m);
    r += m;
  }
  auto out = from_groups(std::move(labels), std::move(sizes), std::move(ys), std::move(Xs),
                         column_names, has_intercept);
  out.subject_column = subject_column;
  out.response_column = response_column;
  return out;
}

bool operator==(const LongitudinalDataset& a, const LongitudinalDataset& b) {
  return a.subject_labels == b.subject_labels && a.group_sizes == b.group_sizes &&
         a.offsets == b.offsets && a.y.size() == b.y.size() && a.y == b.y &&
         a.X.rows() == b.X.rows() && a.X.cols() == b.X.cols() && a.X == b.X &&
         a.column_names == b.column_names && a.has_intercept == b.has_intercept &&
         a.subject_column == b.subject_column && a.response_column == b.response_column;
}

LongitudinalDataset parse_dataset(const std::string& text, const Schema& schema,
                                  bool include_intercept) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    if (!trim(line).empty()) lines.push_back(line);
    pos = end + 1;
  }
  if (lines.empty()) throw ValidationError("parse error: empty file");

  const auto header = split_record(lines[0]);
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ValidationError("schema error: missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t subj_col = column(schema.subject);
  const std::size_t resp_col = column(schema.response);
  std::vector<std::size_t> cov_cols;
  for (const auto& c : schema.covariates) cov_cols.push_back(column(c));
  if (cov_cols.empty()) throw ValidationError("schema error: at least one covariate is required");

  struct Row {
    int group;
    double y;
    std::vector<double> x;
  };
  std::vector<Row> rows;
  std::unordered_map<std::string, int> group_index;
  std::vector<std::string> labels;
  std::vector<int> sizes;

  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto fields = split_record(lines[li]);
    const std::string where = "line " + std::to_string(li + 1);
    if (fields.size() != header.size())
      throw ValidationError("parse error: " + where + " has " + std::to_string(fields.size()) +
                            " fields, expected " + std::to_string(header.size()));
    const std::string& label = fields[subj_col];
    if (label.empty()) throw ValidationError("parse error: " + where + " has an empty subject");
    Row row;
    if (!parse_number(fields[resp_col], row.y) || !std::isfinite(row.y))
      throw ValidationError("parse error: " + where + " column '" + schema.response +
                            "' is not numeric: '" + fields[resp_col] + "'");
    for (std::size_t c = 0; c < cov_cols.size(); ++c) {
      double v;
      if (!parse_number(fields[cov_cols[c]], v) || !std::isfinite(v))
        throw ValidationError("parse error: " + where + " column '" + schema.covariates[c] +
                              "' is not numeric: '" + fields[cov_cols[c]] + "'");
      row.x.push_back(v);
    }
    auto [it, inserted] = group_index.try_emplace(label, static_cast<int>(labels.size()));
    if (inserted) {
      labels.push_back(label);
      sizes.push_back(0);
    }
    row.group = it->second;
    ++sizes[row.group];
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ValidationError("validation error: file has no data rows");

  // Stable regrouping: subjects in first-appearance order, rows in file order.
  std::stable_sort(rows.begin(), rows.end(),
                   [](const Row& a, const Row& b) { return a.group < b.group; });
  const int p = static_cast<int>(cov_cols.size()) + (include_intercept ? 1 : 0);
  Eigen::VectorXd y(rows.size());
  Eigen::MatrixXd X(rows.size(), p);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    y(r) = rows[r].y;
    int c = 0;
    if (include_intercept) X(r, c++) = 1.0;
    for (double v : rows[r].x) X(r, c++) = v;
  }
  std::vector<std::string> names;
  if (include_intercept) names.emplace_back("(Intercept)");
  names.insert(names.end(), schema.covariates.begin(), schema.covariates.end());
  auto d = LongitudinalDataset::from_groups(std::move(labels), std::move(sizes), std::move(y),
                                            std::move(X), std::move(names), include_intercept);
  d.subject_column = schema.subject;
  d.response_column = schema.response;
  return d;
}

LongitudinalDataset load_dataset(const std::filesystem::path& path, const Schema& schema,
                                 bool include_intercept) {
  return parse_dataset(read_file(path), schema, include_intercept);
}

Schema canonical_schema(const LongitudinalDataset& data) {
  Schema s;
  s.subject = data.subject_column;
  s.response = data.response_column;
  s.covariates.assign(data.column_names.begin() + (data.has_intercept ? 1 : 0),
                      data.column_names.end());
  return s;
}

std::string dataset_to_csv(const LongitudinalDataset& data) {
  const Schema s = canonical_schema(data);
  std::string out = csv_field(s.subject) + "," + csv_field(s.response);
  for (const auto& c : s.covariates) out += "," + csv_field(c);
  out += "\n";
  const int first = data.has_intercept ? 1 : 0;
  for (int i = 0; i < data.subjects(); ++i) {
    for (int r = data.offsets[i]; r < data.offsets[i + 1]; ++r) {
      out += csv_field(data.subject_labels[i]);
      out += ",";
      out += format_double(data.y(r));
      for (int c = first; c < data.cols(); ++c) {
        out += ",";
        out += format_double(data.X(r, c));
      }
      out += "\n";
    }
  }
  return out;
}

void save_dataset(const LongitudinalDataset& data, const std::filesystem::path& path) {
  write_file_atomic(path, dataset_to_csv(data));
}

}  // namespace lmmsubset
