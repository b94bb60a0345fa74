#pragma once

// Domain records shared by the trend, risk and simulation modules.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace icu {

// Per-day admissions and K-dimensional mobility of one hospital's catchment.
// Day d (1-based) is stored at index d-1.
struct HospitalSeries {
  std::string hospital_id;
  std::vector<double> admissions;  // nonnegative integers
  Eigen::MatrixXd mobility;        // days x K, relative change in [-1, 1]

  int days() const noexcept { return static_cast<int>(admissions.size()); }
  Eigen::Index k() const noexcept { return mobility.cols(); }
  void validate() const;
  // First `days` days only.
  HospitalSeries truncated(int days) const;
};

struct HospitalInfo {
  std::string hospital_id;
  double population = 0;
  std::string region = "national";
};

enum class Outcome { icu = 0, mortality = 1, discharge = 2, ventilation = 3 };
inline constexpr std::array<Outcome, 4> kAllOutcomes{Outcome::icu, Outcome::mortality, Outcome::discharge,
                                                     Outcome::ventilation};
std::string_view outcome_name(Outcome o);

// Current UTC time as YYYY-MM-DDTHH:MM:SSZ.
std::string utc_timestamp();
Outcome parse_outcome(std::string_view name);

enum class FeatureKind { numeric, categorical };

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::numeric;
  int levels = 0;  // categorical only; values are level indices 0..levels-1
};

struct FeatureSchema {
  std::vector<FeatureSpec> features;

  std::size_t size() const noexcept { return features.size(); }
  // Width after one-hot encoding (categoricals get levels + 1 columns, the
  // extra one flagging a missing value).
  std::size_t encoded_size() const;
  // Encodes one raw row; numeric missing values stay NaN.
  void encode(const std::vector<double>& raw, double* out) const;
  Eigen::MatrixXd encode_rows(const std::vector<const std::vector<double>*>& rows) const;
  bool operator==(const FeatureSchema&) const = default;
};

inline bool operator==(const FeatureSpec& a, const FeatureSpec& b) {
  return a.name == b.name && a.kind == b.kind && a.levels == b.levels;
}

inline bool is_missing(double v) noexcept { return std::isnan(v); }
inline double missing_value() noexcept { return std::nan(""); }

struct PatientRecord {
  std::string patient_id;
  std::vector<double> features;  // NaN marks a missing entry
  std::string hospital_id;
  int admission_day = 1;
  std::array<std::optional<int>, 4> events{};  // indexed by Outcome
  int censor_day = 1;

  const std::optional<int>& event(Outcome o) const { return events[static_cast<std::size_t>(o)]; }
  void validate(const FeatureSchema& schema) const;
};

}  // namespace icu
