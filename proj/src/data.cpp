#include "icuplan/data.hpp"

#include <chrono>
#include <ctime>

#include "icuplan/errors.hpp"

namespace icu {

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void HospitalSeries::validate() const {
  if (hospital_id.empty()) throw InvalidArgument("hospital id must be nonempty");
  if (mobility.rows() != static_cast<Eigen::Index>(admissions.size()))
    throw InvalidArgument("hospital " + hospital_id + ": admissions and mobility differ in length");
  for (double a : admissions)
    if (!(a >= 0) || a != std::floor(a)) throw InvalidArgument("hospital " + hospital_id + ": admissions must be nonnegative integers");
  if (!mobility.allFinite()) throw InvalidArgument("hospital " + hospital_id + ": mobility must be finite");
}

HospitalSeries HospitalSeries::truncated(int days) const {
  if (days < 0 || days > this->days()) throw InvalidArgument("truncation outside the observed range");
  HospitalSeries out;
  out.hospital_id = hospital_id;
  out.admissions.assign(admissions.begin(), admissions.begin() + days);
  out.mobility = mobility.topRows(days);
  return out;
}

std::string_view outcome_name(Outcome o) {
  switch (o) {
    case Outcome::icu: return "icu";
    case Outcome::mortality: return "mortality";
    case Outcome::discharge: return "discharge";
    case Outcome::ventilation: return "ventilation";
  }
  return "unknown";
}

Outcome parse_outcome(std::string_view name) {
  for (Outcome o : kAllOutcomes)
    if (outcome_name(o) == name) return o;
  throw InvalidArgument("unknown outcome label '" + std::string(name) + "'");
}

std::size_t FeatureSchema::encoded_size() const {
  std::size_t n = 0;
  for (const auto& f : features) n += f.kind == FeatureKind::numeric ? 1 : static_cast<std::size_t>(f.levels) + 1;
  return n;
}

void FeatureSchema::encode(const std::vector<double>& raw, double* out) const {
  if (raw.size() != features.size()) throw InvalidArgument("feature vector does not match the schema");
  std::size_t c = 0;
  for (std::size_t f = 0; f < features.size(); ++f) {
    const double v = raw[f];
    if (features[f].kind == FeatureKind::numeric) {
      out[c++] = v;
      continue;
    }
    const int levels = features[f].levels;
    for (int l = 0; l <= levels; ++l) out[c + static_cast<std::size_t>(l)] = 0.0;
    if (is_missing(v)) {
      out[c + static_cast<std::size_t>(levels)] = 1.0;
    } else {
      const int level = static_cast<int>(v);
      if (level < 0 || level >= levels || level != v)
        throw InvalidArgument("feature '" + features[f].name + "' has an unknown level");
      out[c + static_cast<std::size_t>(level)] = 1.0;
    }
    c += static_cast<std::size_t>(levels) + 1;
  }
}

Eigen::MatrixXd FeatureSchema::encode_rows(const std::vector<const std::vector<double>*>& rows) const {
  const auto width = encoded_size();
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> m(rows.size(), width);
  for (std::size_t i = 0; i < rows.size(); ++i) encode(*rows[i], m.data() + i * width);
  return m;
}

void PatientRecord::validate(const FeatureSchema& schema) const {
  if (censor_day < 1) throw InvalidArgument("patient " + patient_id + ": censor day must be at least 1");
  if (features.size() != schema.size()) throw InvalidArgument("patient " + patient_id + ": feature count mismatch");
  for (Outcome o : kAllOutcomes) {
    const auto& e = event(o);
    if (e && (*e < 1 || *e > censor_day))
      throw InvalidArgument("patient " + patient_id + ": event day outside [1, censor day]");
  }
}

}  // namespace icu
