#pragma once

// Exact Gaussian-process regression with an RBF kernel and an arbitrary
// prior mean function.

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "icuplan/rng.hpp"

namespace icu::gp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct RbfKernel {
  VectorXd lengthscales;  // one per input dimension
  double signal_variance = 1.0;

  static RbfKernel isotropic(Eigen::Index dim, double lengthscale, double variance);
  Eigen::Index dim() const noexcept { return lengthscales.size(); }
  void validate() const;
};

// Prior mean evaluated on one input row.
using MeanFunction = std::function<double(const Eigen::Ref<const Eigen::RowVectorXd>&)>;
MeanFunction zero_mean();
MeanFunction constant_mean(double c);

struct GpModel {
  RbfKernel kernel;
  double noise_variance = 0.0;
  // Optional per-point noise; when nonempty it replaces noise_variance.
  VectorXd noise_diagonal;
  MatrixXd train_inputs;  // n x d
  VectorXd train_targets;
  MeanFunction prior_mean = zero_mean();

  Eigen::Index size() const noexcept { return train_inputs.rows(); }
  void validate() const;
};

struct PosteriorGaussian {
  VectorXd mean;
  MatrixXd covariance;
};

MatrixXd kernel_matrix(const RbfKernel& kernel, const MatrixXd& a, const MatrixXd& b);
VectorXd evaluate_mean(const MeanFunction& mean, const MatrixXd& points);

// Cholesky of a symmetric matrix with additive jitter escalation: first
// without jitter, then 1e-10 * trace/n growing x10 up to 1e-4 * trace/n.
struct JitteredCholesky {
  Eigen::LLT<MatrixXd> llt;
  double jitter = 0.0;
};
JitteredCholesky factorize(const MatrixXd& symmetric);

PosteriorGaussian posterior(const GpModel& model, const MatrixXd& test_inputs);
double log_marginal_likelihood(const GpModel& model);

// count x m matrix of draws from N(mean, covariance).
MatrixXd sample(const PosteriorGaussian& posterior, int count, Rng& rng);

// Factor L with L L^T = covariance, tolerant to tiny negative eigenvalues
// (>= -1e-8 * trace), which are zeroed.
MatrixXd covariance_factor(const MatrixXd& covariance);

struct HyperFitOptions {
  bool fit_noise = true;
  // Share one lengthscale across all input dimensions.
  bool isotropic = false;
  double min_noise = 1e-8;
  double max_noise = 1e6;
  double min_lengthscale = 1e-3;
  double max_lengthscale = 1e4;
  int restarts = 3;
  int max_iterations = 400;
};

// Maximizes the log marginal likelihood over log lengthscales, log signal
// variance and (optionally) log noise, starting from the model's current
// values plus deterministic perturbations. The prior mean is kept.
GpModel fit_hyperparameters(GpModel model, const HyperFitOptions& options = {});

}  // namespace icu::gp
