#include "icuplan/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "icuplan/errors.hpp"
#include "icuplan/numeric.hpp"

namespace icu::synth {

double HazardTruth::hazard(int tau, const double* encoded) const {
  if (tau < 1 || tau > static_cast<int>(intercept.size())) throw InvalidArgument("hazard day outside the horizon");
  double z = intercept[static_cast<std::size_t>(tau - 1)];
  for (std::size_t k = 0; k < coefficients.size(); ++k) z += coefficients[k] * encoded[k];
  return sigmoid(z);
}

void WorldConfig::validate() const {
  if (n_hospitals < 1 || n_regions < 1 || days < 1 || k_mobility < 1 || n_patients < 1 || horizon < 1)
    throw InvalidArgument("world counts must be at least 1");
  if (static_cast<int>(contact_weights.size()) != k_mobility + 1)
    throw InvalidArgument("contact weights need a bias plus one weight per mobility category");
  if (static_cast<int>(mobility_drop.size()) != k_mobility) throw InvalidArgument("one mobility drop per category");
  if (ramp_days < 0) throw InvalidArgument("ramp length must be nonnegative");
  for (double r : {missing_rate, censor_rate})
    if (!(r >= 0 && r <= 1)) throw InvalidArgument("rates must lie in [0, 1]");
  if (!(population_min > 0 && population_max >= population_min)) throw InvalidArgument("invalid population range");
  if (seed_min < 0 || seed_max < seed_min) throw InvalidArgument("invalid seed range");
  if (censor_max_day < 1) throw InvalidArgument("censor_max_day must be at least 1");
}

FeatureSchema WorldConfig::feature_schema() const {
  FeatureSchema s;
  for (int k = 0; k < numeric_features; ++k) s.features.push_back({"x" + std::to_string(k + 1), FeatureKind::numeric, 0});
  for (int k = 0; k < categorical_features; ++k)
    s.features.push_back({"c" + std::to_string(k + 1), FeatureKind::categorical, categorical_levels});
  return s;
}

HazardTruth WorldConfig::hazard_truth(Outcome o) const {
  const auto idx = static_cast<std::size_t>(o);
  const FeatureSchema schema = feature_schema();
  if (!hazards[idx].intercept.empty()) {
    if (hazards[idx].coefficients.size() != schema.encoded_size() || static_cast<int>(hazards[idx].intercept.size()) < horizon)
      throw InvalidArgument("hazard truth does not match the schema or horizon");
    return hazards[idx];
  }
  // Reference profiles: a base daily rate with a bump, and a linear effect
  // of the leading numeric features and categorical levels.
  struct Profile {
    double base, bump, peak, width;
    std::array<double, 6> numeric;
    std::array<double, 2> level_effect;
  };
  static constexpr std::array<Profile, 4> profiles{{
      {0.008, 0.9, 4.0, 3.0, {2.4, -1.6, 1.3, 1.0, 0.0, 0.0}, {1.0, 2.0}},   // icu
      {0.006, 1.2, 10.0, 5.0, {1.2, 0.0, -0.6, 0.0, 0.8, 0.0}, {0.5, 1.0}},  // mortality
      {0.03, 0.8, 8.0, 4.0, {-0.8, 0.5, 0.0, -0.4, 0.0, 0.3}, {-0.3, -0.6}}, // discharge
      {0.01, 0.9, 5.0, 3.0, {1.0, -0.8, 0.6, 0.0, 0.0, 0.5}, {0.6, 1.2}},    // ventilation
  }};
  const Profile& p = profiles[idx];
  HazardTruth t;
  for (int tau = 1; tau <= horizon; ++tau)
    t.intercept.push_back(logit(p.base) + p.bump * std::exp(-0.5 * std::pow((tau - p.peak) / p.width, 2)));
  t.coefficients.assign(schema.encoded_size(), 0.0);
  std::size_t c = 0;
  for (const auto& f : schema.features) {
    if (f.kind == FeatureKind::numeric) {
      t.coefficients[c] = c < p.numeric.size() ? p.numeric[c] : 0.0;
      ++c;
    } else {
      // Level 0 is the reference; the trailing missing-level column stays 0.
      for (int l = 1; l < f.levels; ++l)
        t.coefficients[c + static_cast<std::size_t>(l)] = p.level_effect[static_cast<std::size_t>(std::min(l - 1, 1))] * std::max(1, l - 1);
      c += static_cast<std::size_t>(f.levels) + 1;
    }
  }
  return t;
}

int draw_poisson(double rate, Rng& rng) {
  if (!(rate >= 0) || !std::isfinite(rate)) throw InvalidArgument("Poisson rate must be finite and nonnegative");
  if (rate == 0.0) return 0;
  return std::poisson_distribution<int>(rate)(rng);
}

TrendWorld generate_trend_world(const WorldConfig& cfg) {
  cfg.validate();
  TrendWorld world;
  const auto K = static_cast<Eigen::Index>(cfg.k_mobility);
  for (int h = 0; h < cfg.n_hospitals; ++h) {
    const std::string id = "H" + std::string(h + 1 < 10 ? "0" : "") + std::to_string(h + 1);
    Rng mob = make_rng(derive_seed(cfg.seed, "mobility"), static_cast<std::uint64_t>(h));
    Rng epi_rng = make_rng(derive_seed(cfg.seed, "epidemics"), static_cast<std::uint64_t>(h));
    Rng adm = make_rng(derive_seed(cfg.seed, "admissions"), static_cast<std::uint64_t>(h));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto uniform = [&](Rng& r, double lo, double hi) { return lo + (hi - lo) * u01(r); };

    HospitalInfo info{id, std::round(uniform(epi_rng, cfg.population_min, cfg.population_max)),
                      "R" + std::to_string(h % cfg.n_regions + 1)};
    HospitalTruth truth;
    truth.hospital_id = id;
    truth.params = {uniform(epi_rng, cfg.alpha_min, cfg.alpha_max), uniform(epi_rng, cfg.gamma_min, cfg.gamma_max),
                    uniform(epi_rng, cfg.eta_min, cfg.eta_max), info.population};
    truth.e0 = uniform(epi_rng, cfg.seed_min, cfg.seed_max);
    truth.i0 = uniform(epi_rng, cfg.seed_min, cfg.seed_max);

    const int jitter = std::uniform_int_distribution<int>(-cfg.lockdown_jitter, cfg.lockdown_jitter)(mob);
    truth.lockdown_day = cfg.lockdown_day + jitter;
    const double scale = uniform(mob, cfg.drop_scale_min, cfg.drop_scale_max);
    HospitalSeries series;
    series.hospital_id = id;
    series.mobility.resize(cfg.days, K);
    std::normal_distribution<double> noise(0.0, cfg.mobility_noise);
    for (int d = 1; d <= cfg.days; ++d) {
      double z = cfg.contact_weights[0];
      const double progress =
          cfg.ramp_days > 0
              ? std::clamp(static_cast<double>(d - truth.lockdown_day + cfg.ramp_days) / cfg.ramp_days, 0.0, 1.0)
              : (d >= truth.lockdown_day ? 1.0 : 0.0);
      for (Eigen::Index k = 0; k < K; ++k) {
        const double base = cfg.mobility_drop[static_cast<std::size_t>(k)] * scale * progress;
        const double m = std::clamp(base + noise(mob), -1.0, 1.0);
        series.mobility(d - 1, k) = m;
        z += cfg.contact_weights[static_cast<std::size_t>(k) + 1] * m;
      }
      truth.beta.push_back(softplus(z) / info.population);
    }

    const auto traj = epi::integrate_euler(epi::CompartmentState::seeded(info.population, truth.e0, truth.i0),
                                           epi::ContactRateSeries::from_daily(truth.beta, cfg.truth_dt), truth.params,
                                           cfg.days);
    truth.expected_admissions = epi::daily_admission_prior(traj);
    for (double lambda : truth.expected_admissions) series.admissions.push_back(draw_poisson(lambda, adm));

    world.hospitals.push_back(info);
    world.series.push_back(std::move(series));
    world.truth.push_back(std::move(truth));
  }
  return world;
}

PatientWorld generate_patient_world(const WorldConfig& cfg, const std::vector<HospitalInfo>& hospitals) {
  cfg.validate();
  if (hospitals.empty()) throw InvalidArgument("patient world needs at least one hospital");
  PatientWorld world;
  world.schema = cfg.feature_schema();
  for (Outcome o : kAllOutcomes) world.truth[static_cast<std::size_t>(o)] = cfg.hazard_truth(o);

  Rng rng = make_rng(cfg.seed, "patients");
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick_h(0, hospitals.size() - 1);
  std::uniform_int_distribution<int> pick_day(1, cfg.days);
  std::uniform_int_distribution<int> pick_censor(1, cfg.censor_max_day);
  // Categorical levels are skewed toward the reference level.
  std::discrete_distribution<int> pick_level = [&] {
    std::vector<double> w;
    for (int l = 0; l < cfg.categorical_levels; ++l) w.push_back(1.0 / (1.0 + l));
    return std::discrete_distribution<int>(w.begin(), w.end());
  }();

  // Same-day ties between outcomes are resolved by this priority; a
  // lower-priority outcome that fires on a day already taken does not occur
  // that day.
  constexpr std::array<Outcome, 4> priority{Outcome::icu, Outcome::ventilation, Outcome::mortality, Outcome::discharge};
  std::vector<double> encoded(world.schema.encoded_size());
  world.patients.reserve(static_cast<std::size_t>(cfg.n_patients));
  for (int p = 0; p < cfg.n_patients; ++p) {
    PatientRecord rec;
    rec.patient_id = "P" + std::to_string(p + 1);
    rec.hospital_id = hospitals[pick_h(rng)].hospital_id;
    rec.admission_day = pick_day(rng);
    std::vector<double> x;
    for (const auto& f : world.schema.features)
      x.push_back(f.kind == FeatureKind::numeric ? normal(rng) : static_cast<double>(pick_level(rng)));
    world.schema.encode(x, encoded.data());

    std::array<std::optional<int>, 4> events{};
    for (int tau = 1; tau <= cfg.horizon; ++tau) {
      bool taken = false;
      for (Outcome o : priority) {
        auto& ev = events[static_cast<std::size_t>(o)];
        if (ev) continue;
        const bool fires = u01(rng) < world.truth[static_cast<std::size_t>(o)].hazard(tau, encoded.data());
        if (fires && !taken) {
          ev = tau;
          taken = true;
        }
      }
    }
    rec.censor_day = u01(rng) < cfg.censor_rate ? pick_censor(rng) : cfg.horizon;
    for (auto& ev : events)
      if (ev && *ev > rec.censor_day) ev.reset();
    rec.events = events;

    rec.features = x;
    for (double& v : rec.features)
      if (u01(rng) < cfg.missing_rate) v = missing_value();
    world.complete_features.push_back(std::move(x));
    world.patients.push_back(std::move(rec));
  }
  return world;
}

}  // namespace icu::synth
