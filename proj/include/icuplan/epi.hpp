#pragma once

// SEIHR compartmental model: derivative evaluation and fixed-step explicit
// Euler integration.

#include <span>
#include <vector>

namespace icu::epi {

struct EpidemicParams {
  double alpha = 0.2;        // exposed -> infectious, per day
  double gamma = 0.2;        // infectious exit, per day
  double eta = 0.05;         // share of infectious exits that are hospitalized
  double population = 1e5;   // C

  void validate() const;
};

struct CompartmentState {
  double s = 0, e = 0, i = 0, h = 0, r = 0;

  double total() const noexcept { return s + e + i + h + r; }
  // S = C - E0 - I0, H = R = 0.
  static CompartmentState seeded(double population, double e0, double i0);
  void validate(double population) const;
};

struct Derivatives {
  double ds = 0, de = 0, di = 0, dh = 0, dr = 0;
};

// Contact rate per integration step (piecewise constant within a step).
struct ContactRateSeries {
  std::vector<double> values;
  double dt = 0.25;

  // Expands one value per day to one value per step.
  static ContactRateSeries from_daily(std::span<const double> daily, double dt);
};

struct Trajectory {
  double dt = 0.25;
  int steps_per_day = 4;
  // states[0] is the initial state, states[k] the state after k steps.
  std::vector<CompartmentState> states;
  // clamped[k] is set when step k (producing states[k+1]) hit a negative compartment.
  std::vector<bool> clamped;

  int days() const noexcept { return static_cast<int>(states.size() - 1) / steps_per_day; }
  bool any_clamped() const noexcept;
  const CompartmentState& at_day(int day) const { return states.at(static_cast<std::size_t>(day * steps_per_day)); }
};

// Generic right-hand side, shared by the double path and the dual-number
// path used for gradients.
template <typename T, typename B, typename P>
inline void seihr_rhs(const T& s, const T& e, const T& i, const B& beta, const P& alpha, const P& gamma,
                      const P& eta, T& ds, T& de, T& di, T& dh, T& dr) {
  const T inf = beta * s * i;
  const T to_i = alpha * e;
  const T leave = gamma * i;
  ds = -inf;
  de = inf - to_i;
  di = to_i - leave;
  dh = eta * leave;
  dr = (1.0 - eta) * leave;
}

Derivatives seihr_derivatives(const CompartmentState& state, double beta, const EpidemicParams& params);

// Negative compartments are clamped to zero and the clamped mass is taken
// out of S so the total stays at C. Returns true when anything was clamped.
bool clamp_and_renormalize(CompartmentState& state) noexcept;

int steps_per_day(double dt);

Trajectory integrate_euler(const CompartmentState& initial, const ContactRateSeries& beta,
                           const EpidemicParams& params, int horizon_days);

// Expected new hospitalizations per day: H(d) - H(d-1), d = 1..days.
std::vector<double> daily_admission_prior(const Trajectory& trajectory);

// Many independent trajectories advanced together on the vector kernels.
// Per lane the arithmetic is identical to integrate_euler followed by
// daily_admission_prior.
struct EnsembleOutput {
  int days = 0;
  std::size_t lanes = 0;
  std::vector<double> daily_admissions;  // day-major: [(d-1) * lanes + lane]
  std::vector<char> clamped;             // per lane
  double at(int day, std::size_t lane) const { return daily_admissions[static_cast<std::size_t>(day - 1) * lanes + lane]; }
};

// daily_beta is day-major: daily_beta[(d-1) * lanes + lane], piecewise
// constant within each day.
EnsembleOutput integrate_ensemble(std::span<const CompartmentState> initial, std::span<const EpidemicParams> params,
                                  std::span<const double> daily_beta, double dt, int days);

}  // namespace icu::epi
