#include "icuplan/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "icuplan/errors.hpp"

namespace fs = std::filesystem;

namespace icu::io {
namespace {

struct Table {
  std::string name;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;  // row i is file line i + 2
  std::vector<long> lines;                     // actual line numbers, blank lines included
};

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

Table read_table(std::istream& in, std::string name) {
  Table t;
  t.name = std::move(name);
  std::string line;
  if (!std::getline(in, line)) throw SchemaError(t.name + ": missing header", 1, 0);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  t.header = split(line);
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != t.header.size())
      throw SchemaError(t.name + ": expected " + std::to_string(t.header.size()) + " cells, found " +
                            std::to_string(cells.size()),
                        lineno, 0);
    t.rows.push_back(std::move(cells));
    t.lines.push_back(lineno);
  }
  return t;
}

Table read_table(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw NotFound("cannot open " + file.string());
  return read_table(in, file.filename().string());
}

void expect_header(const Table& t, std::size_t col, const std::string& name) {
  if (col >= t.header.size() || t.header[col] != name)
    throw SchemaError(t.name + ": expected column '" + name + "'", 1, static_cast<long>(col + 1));
}

double parse_double(const Table& t, std::size_t row, std::size_t col) {
  const std::string& s = t.rows[row][col];
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw SchemaError(t.name + ": '" + s + "' is not a number", static_cast<long>(row + 2), static_cast<long>(col + 1));
  return v;
}

int parse_int(const Table& t, std::size_t row, std::size_t col) {
  const std::string& s = t.rows[row][col];
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw SchemaError(t.name + ": '" + s + "' is not an integer", static_cast<long>(row + 2), static_cast<long>(col + 1));
  return v;
}

std::ofstream open_out(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw InvalidArgument("cannot write " + file.string());
  return out;
}

constexpr std::array<const char*, 4> kEventColumns{"icu_day", "mortality_day", "discharge_day", "ventilation_day"};

}  // namespace

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> mobility_column_names(Eigen::Index k) {
  if (k == 6) return {"retail_recreation", "grocery_pharmacy", "parks", "transit", "workplaces", "residential"};
  std::vector<std::string> out;
  for (Eigen::Index j = 0; j < k; ++j) out.push_back("m" + std::to_string(j + 1));
  return out;
}

void write_trend(const fs::path& dir, const std::vector<HospitalInfo>& hospitals,
                 const std::vector<HospitalSeries>& series) {
  if (hospitals.size() != series.size()) throw InvalidArgument("hospital and series counts differ");
  auto h = open_out(dir / "hospitals.csv");
  h << "hospital_id,population,region\n";
  for (const auto& info : hospitals) h << info.hospital_id << ',' << format_double(info.population) << ',' << info.region << '\n';

  auto m = open_out(dir / "mobility.csv");
  auto a = open_out(dir / "admissions.csv");
  const Eigen::Index k = series.empty() ? 6 : series.front().k();
  m << "hospital_id,day";
  for (const auto& name : mobility_column_names(k)) m << ',' << name;
  m << '\n';
  a << "hospital_id,day,count\n";
  for (const auto& s : series) {
    s.validate();
    if (s.k() != k) throw InvalidArgument("all hospitals must share the mobility dimension");
    for (int d = 1; d <= s.days(); ++d) {
      m << s.hospital_id << ',' << d;
      for (Eigen::Index j = 0; j < k; ++j) m << ',' << format_double(s.mobility(d - 1, j));
      m << '\n';
      a << s.hospital_id << ',' << d << ',' << static_cast<long long>(s.admissions[static_cast<std::size_t>(d - 1)]) << '\n';
    }
  }
}

TrendTables read_trend(const fs::path& dir) {
  TrendTables out;
  const Table h = read_table(dir / "hospitals.csv");
  expect_header(h, 0, "hospital_id");
  expect_header(h, 1, "population");
  const bool has_region = h.header.size() > 2 && h.header[2] == "region";
  std::map<std::string, std::size_t> index;
  for (std::size_t r = 0; r < h.rows.size(); ++r) {
    HospitalInfo info;
    info.hospital_id = h.rows[r][0];
    if (info.hospital_id.empty()) throw SchemaError(h.name + ": empty hospital id", static_cast<long>(r + 2), 1);
    info.population = parse_double(h, r, 1);
    if (!(info.population > 0)) throw SchemaError(h.name + ": population must be positive", static_cast<long>(r + 2), 2);
    if (has_region && !h.rows[r][2].empty()) info.region = h.rows[r][2];
    if (!index.emplace(info.hospital_id, out.hospitals.size()).second)
      throw SchemaError(h.name + ": duplicate hospital id " + info.hospital_id, static_cast<long>(r + 2), 1);
    out.hospitals.push_back(info);
  }

  const Table m = read_table(dir / "mobility.csv");
  expect_header(m, 0, "hospital_id");
  expect_header(m, 1, "day");
  const auto k = static_cast<Eigen::Index>(m.header.size()) - 2;
  if (k < 1) throw SchemaError(m.name + ": no mobility columns", 1, 3);
  const Table a = read_table(dir / "admissions.csv");
  expect_header(a, 0, "hospital_id");
  expect_header(a, 1, "day");
  expect_header(a, 2, "count");

  std::vector<std::map<int, std::vector<double>>> mob(out.hospitals.size());
  std::vector<std::map<int, double>> adm(out.hospitals.size());
  auto lookup = [&](const Table& t, std::size_t r) {
    auto it = index.find(t.rows[r][0]);
    if (it == index.end())
      throw SchemaError(t.name + ": unknown hospital '" + t.rows[r][0] + "'", static_cast<long>(r + 2), 1);
    return it->second;
  };
  for (std::size_t r = 0; r < m.rows.size(); ++r) {
    const auto hi = lookup(m, r);
    const int day = parse_int(m, r, 1);
    std::vector<double> v;
    for (Eigen::Index j = 0; j < k; ++j) {
      const double x = parse_double(m, r, static_cast<std::size_t>(j) + 2);
      if (!(x >= -1.0 && x <= 1.0))
        throw SchemaError(m.name + ": mobility outside [-1, 1]", static_cast<long>(r + 2), static_cast<long>(j + 3));
      v.push_back(x);
    }
    if (!mob[hi].emplace(day, std::move(v)).second) throw SchemaError(m.name + ": duplicate day", static_cast<long>(r + 2), 2);
  }
  for (std::size_t r = 0; r < a.rows.size(); ++r) {
    const auto hi = lookup(a, r);
    const int day = parse_int(a, r, 1);
    const int count = parse_int(a, r, 2);
    if (count < 0) throw SchemaError(a.name + ": negative count", static_cast<long>(r + 2), 3);
    if (!adm[hi].emplace(day, count).second) throw SchemaError(a.name + ": duplicate day", static_cast<long>(r + 2), 2);
  }
  for (std::size_t hi = 0; hi < out.hospitals.size(); ++hi) {
    HospitalSeries s;
    s.hospital_id = out.hospitals[hi].hospital_id;
    const int days = static_cast<int>(adm[hi].size());
    s.mobility.resize(days, k);
    int expected = 1;
    for (const auto& [day, count] : adm[hi]) {
      if (day != expected) throw SchemaError(a.name + ": days of " + s.hospital_id + " are not contiguous from 1");
      auto it = mob[hi].find(day);
      if (it == mob[hi].end()) throw SchemaError(m.name + ": missing day " + std::to_string(day) + " for " + s.hospital_id);
      for (Eigen::Index j = 0; j < k; ++j) s.mobility(day - 1, j) = it->second[static_cast<std::size_t>(j)];
      s.admissions.push_back(count);
      ++expected;
    }
    if (mob[hi].size() != adm[hi].size())
      throw SchemaError(m.name + ": mobility and admissions days differ for " + s.hospital_id);
    out.series.push_back(std::move(s));
  }
  return out;
}

void write_patients(const fs::path& file, const PatientTable& table) {
  auto out = open_out(file);
  out << "patient_id,hospital_id,admission_day";
  for (const auto& f : table.schema.features) {
    out << ',' << f.name;
    if (f.kind == FeatureKind::categorical) out << ":cat" << f.levels;
  }
  for (const char* c : kEventColumns) out << ',' << c;
  out << ",censor_day\n";
  for (const auto& p : table.patients) {
    p.validate(table.schema);
    out << p.patient_id << ',' << p.hospital_id << ',' << p.admission_day;
    for (std::size_t f = 0; f < p.features.size(); ++f) {
      out << ',';
      if (is_missing(p.features[f])) continue;
      if (table.schema.features[f].kind == FeatureKind::categorical)
        out << static_cast<int>(p.features[f]);
      else
        out << format_double(p.features[f]);
    }
    for (const auto& e : p.events) {
      out << ',';
      if (e) out << *e;
    }
    out << ',' << p.censor_day << '\n';
  }
}

PatientTable read_patients(const fs::path& file) {
  const Table t = read_table(file);
  expect_header(t, 0, "patient_id");
  expect_header(t, 1, "hospital_id");
  expect_header(t, 2, "admission_day");
  if (t.header.size() < 8) throw SchemaError(t.name + ": too few columns", 1, 0);
  const std::size_t n_features = t.header.size() - 8;
  PatientTable out;
  for (std::size_t c = 3; c < 3 + n_features; ++c) {
    const std::string& h = t.header[c];
    const auto colon = h.find(":cat");
    if (colon == std::string::npos) {
      out.schema.features.push_back({h, FeatureKind::numeric, 0});
      continue;
    }
    int levels = 0;
    const std::string lv = h.substr(colon + 4);
    auto [p, ec] = std::from_chars(lv.data(), lv.data() + lv.size(), levels);
    if (ec != std::errc() || p != lv.data() + lv.size() || levels < 1)
      throw SchemaError(t.name + ": bad categorical header '" + h + "'", 1, static_cast<long>(c + 1));
    out.schema.features.push_back({h.substr(0, colon), FeatureKind::categorical, levels});
  }
  for (std::size_t i = 0; i < 4; ++i) expect_header(t, 3 + n_features + i, kEventColumns[i]);
  expect_header(t, 7 + n_features, "censor_day");

  std::set<std::string> seen;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    PatientRecord p;
    p.patient_id = row[0];
    if (!seen.insert(p.patient_id).second)
      throw SchemaError(t.name + ": duplicate patient id " + p.patient_id, static_cast<long>(r + 2), 1);
    p.hospital_id = row[1];
    p.admission_day = parse_int(t, r, 2);
    for (std::size_t f = 0; f < n_features; ++f)
      p.features.push_back(row[3 + f].empty() ? missing_value() : parse_double(t, r, 3 + f));
    for (std::size_t i = 0; i < 4; ++i) {
      const std::size_t c = 3 + n_features + i;
      if (!row[c].empty()) p.events[i] = parse_int(t, r, c);
    }
    p.censor_day = parse_int(t, r, 7 + n_features);
    try {
      p.validate(out.schema);
      std::vector<double> scratch(out.schema.encoded_size());
      out.schema.encode(p.features, scratch.data());
    } catch (const InvalidArgument& e) {
      throw SchemaError(t.name + ": " + e.what(), static_cast<long>(r + 2), 0);
    }
    out.patients.push_back(std::move(p));
  }
  return out;
}

void write_truth(const fs::path& dir, const synth::TrendWorld& trend, const synth::PatientWorld& patients) {
  const fs::path truth = dir / "truth";
  auto e = open_out(truth / "epidemics.csv");
  e << "hospital_id,alpha,gamma,eta,e0,i0,lockdown_day\n";
  for (const auto& t : trend.truth)
    e << t.hospital_id << ',' << format_double(t.params.alpha) << ',' << format_double(t.params.gamma) << ','
      << format_double(t.params.eta) << ',' << format_double(t.e0) << ',' << format_double(t.i0) << ','
      << t.lockdown_day << '\n';
  auto b = open_out(truth / "trend.csv");
  b << "hospital_id,day,beta,expected_admissions\n";
  for (const auto& t : trend.truth)
    for (std::size_t d = 0; d < t.beta.size(); ++d)
      b << t.hospital_id << ',' << d + 1 << ',' << format_double(t.beta[d]) << ','
        << format_double(t.expected_admissions[d]) << '\n';
  auto hz = open_out(truth / "hazards.csv");
  hz << "outcome,term,index,value\n";
  for (Outcome o : kAllOutcomes) {
    const auto& h = patients.truth[static_cast<std::size_t>(o)];
    for (std::size_t i = 0; i < h.intercept.size(); ++i)
      hz << outcome_name(o) << ",intercept," << i + 1 << ',' << format_double(h.intercept[i]) << '\n';
    for (std::size_t i = 0; i < h.coefficients.size(); ++i)
      hz << outcome_name(o) << ",coefficient," << i << ',' << format_double(h.coefficients[i]) << '\n';
  }
  PatientTable complete{patients.schema, patients.patients};
  for (std::size_t i = 0; i < complete.patients.size(); ++i) complete.patients[i].features = patients.complete_features[i];
  write_patients(truth / "patients_complete.csv", complete);
}

void write_world(const fs::path& dir, const synth::TrendWorld& trend, const synth::PatientWorld& patients) {
  write_trend(dir, trend.hospitals, trend.series);
  write_patients(dir / "patients.csv", PatientTable{patients.schema, patients.patients});
  write_truth(dir, trend, patients);
}

Eigen::MatrixXd parse_mobility_series(std::string_view text, Eigen::Index k) {
  std::istringstream in{std::string(text)};
  const Table t = read_table(in, "mobility upload");
  const auto names = mobility_column_names(k);
  if (t.header.size() != names.size())
    throw SchemaError("mobility upload: expected " + std::to_string(names.size()) + " columns, found " +
                          std::to_string(t.header.size()),
                      1, 0);
  for (std::size_t c = 0; c < names.size(); ++c) expect_header(t, c, names[c]);
  if (t.rows.empty()) throw SchemaError("mobility upload: no rows", 1, 0);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(t.rows.size()), k);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    for (std::size_t c = 0; c < names.size(); ++c) {
      double v = 0;
      try {
        v = parse_double(t, r, c);
      } catch (const SchemaError& e) {
        throw SchemaError(e.what(), t.lines[r], static_cast<long>(c + 1));
      }
      if (!(v >= -1.0 && v <= 1.0))
        throw SchemaError("mobility upload: value " + t.rows[r][c] + " outside [-1, 1]", t.lines[r],
                          static_cast<long>(c + 1));
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }
  }
  return m;
}

std::string format_mobility_series(const Eigen::MatrixXd& series) {
  std::ostringstream out;
  const auto names = mobility_column_names(series.cols());
  for (std::size_t c = 0; c < names.size(); ++c) out << (c ? "," : "") << names[c];
  out << '\n';
  for (Eigen::Index r = 0; r < series.rows(); ++r) {
    for (Eigen::Index c = 0; c < series.cols(); ++c) out << (c ? "," : "") << format_double(series(r, c));
    out << '\n';
  }
  return out.str();
}

}  // namespace icu::io
