#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace lmmsubset {

/// Column mapping for long-format CSV input.
struct Schema {
  std::string subject;
  std::string response;
  std::vector<std::string> covariates;

  static Schema from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Grouped longitudinal data in long format.
///
/// Rows are stored grouped by subject: the rows of subject i occupy
/// [offsets[i], offsets[i] + group_sizes[i]). Subjects are numbered 0..n-1
/// in order of first appearance in the input; the original labels are kept
/// in `subject_labels`. The random-intercept design Z is implied by the
/// grouping and never materialized.
struct LongitudinalDataset {
  std::vector<std::string> subject_labels;
  std::vector<int> group_sizes;
  std::vector<int> offsets;
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
  std::vector<std::string> column_names;
  bool has_intercept = false;
  std::string subject_column = "subject";
  std::string response_column = "y";

  int rows() const { return static_cast<int>(y.size()); }
  int subjects() const { return static_cast<int>(group_sizes.size()); }
  int cols() const { return static_cast<int>(X.cols()); }
  int group_of_row(int row) const;

  // Throws ValidationError when an invariant does not hold.
  void validate() const;

  // Dataset restricted to the given subjects (in the given order).
  LongitudinalDataset subset_subjects(const std::vector<int>& subjects) const;

  static LongitudinalDataset from_groups(std::vector<std::string> labels,
                                         std::vector<int> group_sizes, Eigen::VectorXd y,
                                         Eigen::MatrixXd X, std::vector<std::string> column_names,
                                         bool has_intercept);

  friend bool operator==(const LongitudinalDataset&, const LongitudinalDataset&);
};

LongitudinalDataset load_dataset(const std::filesystem::path& path, const Schema& schema,
                                 bool include_intercept = true);
LongitudinalDataset parse_dataset(const std::string& csv_text, const Schema& schema,
                                  bool include_intercept = true);

/// Writes the canonical long-format CSV (subject, y, covariates without the
/// intercept column). Values are written in shortest round-trip form so that
/// loading with `canonical_schema` reproduces the dataset bit for bit.
std::string dataset_to_csv(const LongitudinalDataset& data);
void save_dataset(const LongitudinalDataset& data, const std::filesystem::path& path);
Schema canonical_schema(const LongitudinalDataset& data);

// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace lmmsubset
