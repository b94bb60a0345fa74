#pragma once

// Delimited-text tables for the trend and patient datasets.
//
//   hospitals.csv   hospital_id,population[,region]
//   mobility.csv    hospital_id,day,<K mobility columns>
//   admissions.csv  hospital_id,day,count
//   patients.csv    patient_id,hospital_id,admission_day,<features>,
//                   icu_day,mortality_day,discharge_day,ventilation_day,censor_day
//
// Patient feature headers carry their kind: a plain name is numeric and
// `name:cat<L>` is categorical with L levels. Empty cells are missing.
// Malformed input raises SchemaError with the 1-based row and column.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "icuplan/data.hpp"
#include "icuplan/synth.hpp"

namespace icu::io {

struct TrendTables {
  std::vector<HospitalInfo> hospitals;
  std::vector<HospitalSeries> series;  // same order as hospitals
};

struct PatientTable {
  FeatureSchema schema;
  std::vector<PatientRecord> patients;
};

std::vector<std::string> mobility_column_names(Eigen::Index k);

void write_trend(const std::filesystem::path& dir, const std::vector<HospitalInfo>& hospitals,
                 const std::vector<HospitalSeries>& series);
TrendTables read_trend(const std::filesystem::path& dir);

void write_patients(const std::filesystem::path& file, const PatientTable& table);
PatientTable read_patients(const std::filesystem::path& file);

// Ground truth goes to <dir>/truth/ and is only read by tests and reports.
void write_truth(const std::filesystem::path& dir, const synth::TrendWorld& trend, const synth::PatientWorld& patients);

// Full synthetic dataset directory (tables plus truth).
void write_world(const std::filesystem::path& dir, const synth::TrendWorld& trend, const synth::PatientWorld& patients);

std::string format_double(double v);

// Future-mobility upload: a header naming the K categories in order, one row
// per forecast day, every cell in [-1, 1].
Eigen::MatrixXd parse_mobility_series(std::string_view text, Eigen::Index k = 6);
std::string format_mobility_series(const Eigen::MatrixXd& series);

}  // namespace icu::io
