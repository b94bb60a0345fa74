#pragma once

// Hierarchical GP trend model: a shared GP maps mobility to a contact rate,
// each hospital runs an SEIHR curve on that rate, and a per-hospital GP on
// admissions uses the curve as its prior mean.

#include <Eigen/Dense>
#include <array>
#include <json.hpp>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "icuplan/data.hpp"
#include "icuplan/epi.hpp"
#include "icuplan/forecast.hpp"
#include "icuplan/gp.hpp"
#include "icuplan/rng.hpp"

namespace icu::hgpcp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr int kSchemaVersion = 1;
// Unconstrained epidemic parameters per hospital: alpha, gamma, eta, e0, i0.
inline constexpr int kEpiParams = 5;
// Tangent directions carried through the SEIHR integration: the epidemic
// parameters plus bias, K mobility weights and the inducing values.
inline constexpr int kMaxTangents = 24;

struct HgpcpConfig {
  double dt = 0.25;
  int inducing_points = 6;
  double upper_lengthscale = 0.5;
  double upper_variance = 0.05;
  double upper_nugget = 1e-6;  // relative to upper_variance
  // Gaussian prior on the mobility weights of the upper mean.
  double weight_prior_sd = 1.0;
  // softplus(bias) at initialization, i.e. the population-scaled contact rate.
  double initial_contact = 0.5;
  double seed_init = 10.0;
  // Initial lower lengthscale in days and centre of its log-normal prior.
  double lower_lengthscale = 14.0;
  double lower_lengthscale_prior_sd = 0.5;
  // Log-normal prior on the lower signal variance centred at
  // lower_variance_scale * mean admissions: deviations from the compartmental
  // curve are expected on the Poisson scale of the series.
  double lower_variance_scale = 1.0;
  double lower_variance_prior_sd = 0.5;
  // White component of the lower kernel, relative to its signal variance.
  double lower_nugget = 0.05;
  int steps = 2000;
  double learning_rate = 1e-2;
  int mc_samples = 8;
  // Fixed draws used for the reported initial/final ELBO and checkpointing.
  int eval_samples = 32;
  int checkpoint_every = 100;
  int forecast_samples = 200;
  std::uint64_t seed = 0;
  // Gaussian prior over the unconstrained epidemic parameters.
  std::array<double, kEpiParams> prior_mean{-1.5078, -1.5078, -2.1972, 0.0, 0.0};
  std::array<double, kEpiParams> prior_sd{0.5, 0.5, 1.0, 4.0, 4.0};

  void validate(Eigen::Index k) const;
  nlohmann::json to_json() const;
  static HgpcpConfig from_json(const nlohmann::json& j);
};

struct HospitalFit {
  std::string hospital_id;
  double population = 0;
  // Epidemic parameters are point-estimated under their prior; the spread
  // comes from the curvature at the estimate and is used when forecasting.
  std::array<double, kEpiParams> rho_mean{};
  std::array<double, kEpiParams> rho_log_sd{};
  double log_lengthscale = 0;
  double log_signal_variance = 0;
  double log_noise = 0;
  VectorXd q_mean;    // variational mean of the latent admission rate, per training day
  VectorXd q_log_sd;  // log standard deviation, per training day
  std::vector<double> admissions;
  MatrixXd mobility;

  int days() const noexcept { return static_cast<int>(admissions.size()); }
  // Epidemic parameters at the variational mean.
  epi::EpidemicParams params() const;
  gp::RbfKernel lower_kernel() const;
  double lower_noise() const;
};

// Maps unconstrained values to (alpha, gamma, eta, e0, i0).
epi::EpidemicParams transform_params(const std::array<double, kEpiParams>& rho, double population);
std::array<double, 2> transform_seeds(const std::array<double, kEpiParams>& rho, double seed_init);

struct HgpcpModel {
  HgpcpConfig config;
  Eigen::Index k = 0;
  double bias = 0;           // upper prior mean: bias + weights . m
  VectorXd weights;          // K
  MatrixXd inducing_inputs;  // M x K
  VectorXd inducing_values;  // M
  std::vector<HospitalFit> hospitals;
  std::vector<double> elbo_trace;
  double initial_elbo = 0;
  double final_elbo = 0;
  std::string created_at;

  static HgpcpModel untrained(Eigen::Index k, const HgpcpConfig& config = {});

  gp::RbfKernel upper_kernel() const;
  gp::GpModel upper_gp() const;
  double upper_mean(const Eigen::Ref<const Eigen::RowVectorXd>& m) const;
  const HospitalFit& hospital(std::string_view id) const;
  // (e0, i0) at the variational mean.
  std::array<double, 2> seeds(const HospitalFit& h) const;
  std::vector<std::string> hospital_ids() const;

  nlohmann::json to_json() const;
  static HgpcpModel from_json(const nlohmann::json& j);
};

// Upper-layer posterior at a sequence of mobility vectors. Values are
// population-scaled: hospital h's contact rate is intensity / C_h.
struct ContactRateDistribution {
  VectorXd latent_mean;
  MatrixXd latent_covariance;

  // softplus of the latent mean.
  VectorXd mean() const;
  // count x days draws of softplus(f).
  MatrixXd sample(int count, Rng& rng) const;
};

ContactRateDistribution contact_rate(const HgpcpModel& model, const MatrixXd& mobility);

// Daily admissions implied by the compartmental layer at the variational mean
// of the epidemic parameters and the upper posterior mean, days 1..days.
std::vector<double> prior_admissions(const HgpcpModel& model, std::string_view hospital_id, const MatrixXd& mobility);

// ELBO over a flat parameter vector, exposed for optimization and checking.
class ElboObjective {
 public:
  ElboObjective(std::span<const HospitalSeries> series, std::span<const double> populations, const HgpcpConfig& config,
                const MatrixXd& inducing_inputs);

  // Standard normal draws for the latent trajectory, per hospital and sample.
  struct Draws {
    int samples = 0;
    std::vector<MatrixXd> per_hospital;  // samples x days
  };
  Draws draw(int samples, Rng& rng) const;

  Eigen::Index size() const noexcept { return size_; }
  VectorXd pack(const HgpcpModel& model) const;
  void unpack(const VectorXd& theta, HgpcpModel& model) const;
  HgpcpModel initial_model() const;

  double value(const VectorXd& theta, const Draws& draws, VectorXd* gradient = nullptr) const;
  // Coarse search over the shared contact level and per-hospital seed scale
  // so the starting compartmental curve sits near the data.
  void align_initial_curve(VectorXd& theta) const;
  // Mean-field Gaussian over the epidemic parameters around the point
  // estimate: each log sd is set from the diagonal curvature of the objective.
  void set_epi_spread(const VectorXd& theta, HgpcpModel& model) const;

 private:
  struct Hospital {
    std::string id;
    double population = 0;
    VectorXd admissions;
    MatrixXd mobility;
    // Centered 7-day mean of the admissions: the initial variational mean,
    // and its Poisson-scale sqrt(max(., 1)) sets the units of that mean
    // inside the parameter vector.
    VectorXd smooth;
    VectorXd scale;
    double log_variance_centre = 0;
    MatrixXd coupling;  // days x G: latent contact = coupling * psi
    Eigen::Index offset = 0;
  };

  double hospital_term(const Hospital& h, const VectorXd& theta, const MatrixXd& draws, VectorXd* gradient) const;
  // Priors on the mobility weights and the inducing values.
  double global_term(const VectorXd& theta, VectorXd* gradient) const;

  HgpcpConfig config_;
  Eigen::Index k_ = 0;
  Eigen::Index m_ = 0;
  MatrixXd inducing_;
  Eigen::LLT<MatrixXd> kzz_;
  double kzz_logdet_ = 0;
  std::vector<Hospital> hospitals_;
  Eigen::Index globals_ = 0;
  Eigen::Index size_ = 0;
};

// Farthest-point subset of the rows, starting from the row farthest from the
// centroid; stops early when the remaining rows coincide with chosen ones.
MatrixXd select_inducing(const MatrixXd& rows, int count);

HgpcpModel fit(std::span<const HospitalSeries> series, std::span<const HospitalInfo> hospitals,
               const HgpcpConfig& config = {});

ForecastDistribution forecast(const HgpcpModel& model, std::string_view hospital_id, const MatrixXd& future_mobility,
                              int mc_samples, std::uint64_t seed);

// Component-wise mean of the last seven observed days, repeated `days` times.
MatrixXd default_mobility(const HospitalSeries& series, int days);

}  // namespace icu::hgpcp
