#include "icuplan/epi.hpp"

#include <cmath>
#include <string>

#include "icuplan/errors.hpp"
#include "icuplan/simd.hpp"

namespace icu::epi {

void EpidemicParams::validate() const {
  if (!(alpha > 0) || !std::isfinite(alpha)) throw InvalidArgument("alpha must be positive");
  if (!(gamma > 0) || !std::isfinite(gamma)) throw InvalidArgument("gamma must be positive");
  if (!(eta >= 0 && eta <= 1)) throw InvalidArgument("eta must lie in [0, 1]");
  if (!(population > 0) || !std::isfinite(population)) throw InvalidArgument("population must be positive");
}

CompartmentState CompartmentState::seeded(double population, double e0, double i0) {
  if (e0 < 0 || i0 < 0 || e0 + i0 > population) throw InvalidArgument("initial seeds must lie in [0, C]");
  return {population - e0 - i0, e0, i0, 0.0, 0.0};
}

void CompartmentState::validate(double population) const {
  for (double c : {s, e, i, h, r})
    if (!(c >= 0) || !std::isfinite(c)) throw InvalidArgument("compartments must be finite and nonnegative");
  if (std::abs(total() - population) > 1e-9 * population)
    throw InvalidArgument("compartments must sum to the population");
}

ContactRateSeries ContactRateSeries::from_daily(std::span<const double> daily, double dt) {
  const int spd = steps_per_day(dt);
  ContactRateSeries out;
  out.dt = dt;
  out.values.reserve(daily.size() * static_cast<std::size_t>(spd));
  for (double b : daily)
    for (int k = 0; k < spd; ++k) out.values.push_back(b);
  return out;
}

bool Trajectory::any_clamped() const noexcept {
  for (bool c : clamped)
    if (c) return true;
  return false;
}

Derivatives seihr_derivatives(const CompartmentState& state, double beta, const EpidemicParams& params) {
  if (!(beta >= 0) || !std::isfinite(beta)) throw InvalidArgument("contact rate must be finite and nonnegative");
  params.validate();
  state.validate(params.population);
  Derivatives d;
  seihr_rhs(state.s, state.e, state.i, beta, params.alpha, params.gamma, params.eta, d.ds, d.de, d.di, d.dh, d.dr);
  return d;
}

bool clamp_and_renormalize(CompartmentState& x) noexcept {
  if (x.s >= 0 && x.e >= 0 && x.i >= 0 && x.h >= 0 && x.r >= 0) return false;
  double deficit = 0.0;
  for (double* c : {&x.e, &x.i, &x.h, &x.r}) {
    if (*c < 0) {
      deficit += *c;
      *c = 0.0;
    }
  }
  x.s += deficit;
  if (x.s < 0) {
    // S cannot absorb the excess; shrink the others proportionally.
    const double excess = -x.s;
    x.s = 0.0;
    const double rest = x.e + x.i + x.h + x.r;
    const double scale = rest > 0 ? (rest - excess) / rest : 0.0;
    x.e *= scale;
    x.i *= scale;
    x.h *= scale;
    x.r *= scale;
  }
  return true;
}

int steps_per_day(double dt) {
  if (!(dt > 0) || dt > 1.0) throw InvalidArgument("dt must lie in (0, 1]");
  const double n = std::round(1.0 / dt);
  if (std::abs(n * dt - 1.0) > 1e-9) throw InvalidArgument("dt must evenly divide one day");
  return static_cast<int>(n);
}

Trajectory integrate_euler(const CompartmentState& initial, const ContactRateSeries& beta,
                           const EpidemicParams& params, int horizon_days) {
  params.validate();
  initial.validate(params.population);
  if (horizon_days < 0) throw InvalidArgument("horizon must be nonnegative");
  const int spd = steps_per_day(beta.dt);
  const std::size_t steps = static_cast<std::size_t>(horizon_days) * static_cast<std::size_t>(spd);
  if (beta.values.size() < steps)
    throw InvalidArgument("contact-rate series has " + std::to_string(beta.values.size()) + " steps, need " +
                          std::to_string(steps));

  Trajectory traj;
  traj.dt = beta.dt;
  traj.steps_per_day = spd;
  traj.states.reserve(steps + 1);
  traj.clamped.reserve(steps);
  traj.states.push_back(initial);
  CompartmentState x = initial;
  const double dt = beta.dt;
  for (std::size_t k = 0; k < steps; ++k) {
    const double b = beta.values[k];
    if (!(b >= 0) || !std::isfinite(b)) throw NumericalError("contact rate is negative or nonfinite", static_cast<long>(k));
    Derivatives d;
    seihr_rhs(x.s, x.e, x.i, b, params.alpha, params.gamma, params.eta, d.ds, d.de, d.di, d.dh, d.dr);
    x.s = x.s + dt * d.ds;
    x.e = x.e + dt * d.de;
    x.i = x.i + dt * d.di;
    x.h = x.h + dt * d.dh;
    x.r = x.r + dt * d.dr;
    if (!std::isfinite(x.total())) throw NumericalError("nonfinite compartment", static_cast<long>(k));
    traj.clamped.push_back(clamp_and_renormalize(x));
    traj.states.push_back(x);
  }
  return traj;
}

std::vector<double> daily_admission_prior(const Trajectory& trajectory) {
  if (trajectory.states.empty() || (trajectory.states.size() - 1) % static_cast<std::size_t>(trajectory.steps_per_day) != 0)
    throw InvalidArgument("trajectory must span an integer number of days");
  const int days = trajectory.days();
  std::vector<double> out(static_cast<std::size_t>(days));
  for (int d = 1; d <= days; ++d) {
    const double inc = trajectory.at_day(d).h - trajectory.at_day(d - 1).h;
    out[static_cast<std::size_t>(d - 1)] = inc > 0 ? inc : 0.0;
  }
  return out;
}

EnsembleOutput integrate_ensemble(std::span<const CompartmentState> initial, std::span<const EpidemicParams> params,
                                  std::span<const double> daily_beta, double dt, int days) {
  const std::size_t lanes = initial.size();
  if (params.size() != lanes) throw InvalidArgument("one parameter set per lane required");
  if (days < 0) throw InvalidArgument("days must be nonnegative");
  if (daily_beta.size() < static_cast<std::size_t>(days) * lanes) throw InvalidArgument("contact-rate matrix too short");
  const int spd = steps_per_day(dt);

  std::vector<double> s(lanes), e(lanes), i(lanes), h(lanes), r(lanes), a(lanes), g(lanes), eta(lanes);
  for (std::size_t j = 0; j < lanes; ++j) {
    params[j].validate();
    initial[j].validate(params[j].population);
    s[j] = initial[j].s;
    e[j] = initial[j].e;
    i[j] = initial[j].i;
    h[j] = initial[j].h;
    r[j] = initial[j].r;
    a[j] = params[j].alpha;
    g[j] = params[j].gamma;
    eta[j] = params[j].eta;
  }
  for (double b : daily_beta.first(static_cast<std::size_t>(days) * lanes))
    if (!(b >= 0) || !std::isfinite(b)) throw InvalidArgument("contact rate must be finite and nonnegative");

  EnsembleOutput out;
  out.days = days;
  out.lanes = lanes;
  out.daily_admissions.assign(static_cast<std::size_t>(days) * lanes, 0.0);
  out.clamped.assign(lanes, 0);

  const simd::KernelTable& k = simd::active_kernels();
  const simd::SeihrLanes view{s.data(), e.data(), i.data(), h.data(), r.data(), a.data(), g.data(), eta.data(), lanes};
  std::vector<double> h_prev = h;
  for (int d = 1; d <= days; ++d) {
    const double* beta = daily_beta.data() + static_cast<std::size_t>(d - 1) * lanes;
    for (int step = 0; step < spd; ++step) {
      k.seihr_euler_step(view, beta, dt);
      for (std::size_t j = 0; j < lanes; ++j) {
        if (s[j] < 0 || e[j] < 0 || i[j] < 0 || h[j] < 0 || r[j] < 0) {
          CompartmentState x{s[j], e[j], i[j], h[j], r[j]};
          clamp_and_renormalize(x);
          s[j] = x.s;
          e[j] = x.e;
          i[j] = x.i;
          h[j] = x.h;
          r[j] = x.r;
          out.clamped[j] = 1;
        }
      }
    }
    double* row = out.daily_admissions.data() + static_cast<std::size_t>(d - 1) * lanes;
    for (std::size_t j = 0; j < lanes; ++j) {
      if (!std::isfinite(h[j])) throw NumericalError("nonfinite compartment in ensemble", static_cast<long>(d) * spd);
      const double inc = h[j] - h_prev[j];
      row[j] = inc > 0 ? inc : 0.0;
      h_prev[j] = h[j];
    }
  }
  return out;
}

}  // namespace icu::epi
