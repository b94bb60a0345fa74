#include "icuplan/gp.hpp"

#include <cmath>
#include <numbers>

#include "icuplan/errors.hpp"
#include "icuplan/optim.hpp"
#include "icuplan/simd.hpp"

namespace icu::gp {

RbfKernel RbfKernel::isotropic(Eigen::Index dim, double lengthscale, double variance) {
  return RbfKernel{VectorXd::Constant(dim, lengthscale), variance};
}

void RbfKernel::validate() const {
  if (lengthscales.size() == 0) throw InvalidArgument("kernel needs at least one lengthscale");
  for (Eigen::Index k = 0; k < lengthscales.size(); ++k)
    if (!(lengthscales[k] > 0) || !std::isfinite(lengthscales[k])) throw InvalidArgument("lengthscales must be positive");
  if (!(signal_variance > 0) || !std::isfinite(signal_variance)) throw InvalidArgument("signal variance must be positive");
}

MeanFunction zero_mean() {
  return [](const Eigen::Ref<const Eigen::RowVectorXd>&) { return 0.0; };
}

MeanFunction constant_mean(double c) {
  return [c](const Eigen::Ref<const Eigen::RowVectorXd>&) { return c; };
}

void GpModel::validate() const {
  kernel.validate();
  if (train_inputs.rows() != train_targets.size()) throw InvalidArgument("inputs and targets differ in length");
  if (train_inputs.rows() > 0 && train_inputs.cols() != kernel.dim())
    throw InvalidArgument("training inputs do not match kernel dimension");
  if (!(noise_variance >= 0)) throw InvalidArgument("noise variance must be nonnegative");
  if (noise_diagonal.size() != 0 && noise_diagonal.size() != train_targets.size())
    throw InvalidArgument("per-point noise must match the number of targets");
  if (!train_inputs.allFinite() || !train_targets.allFinite()) throw InvalidArgument("training data must be finite");
}

MatrixXd kernel_matrix(const RbfKernel& kernel, const MatrixXd& a, const MatrixXd& b) {
  kernel.validate();
  if (a.cols() != kernel.dim() || b.cols() != kernel.dim())
    throw InvalidArgument("kernel_matrix: dimensionality mismatch");
  const auto n = static_cast<std::size_t>(b.rows());
  const auto d = static_cast<std::size_t>(kernel.dim());
  // Eigen is column-major, so b's storage is already dimension-major.
  const MatrixXd bcols = b;
  const VectorXd inv_ls = kernel.lengthscales.cwiseInverse();
  const simd::KernelTable& k = simd::active_kernels();
  MatrixXd out(a.rows(), b.rows());
  std::vector<double> x(d), sq(n), row(n);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (std::size_t c = 0; c < d; ++c) x[c] = a(i, static_cast<Eigen::Index>(c));
    k.scaled_sq_dist_row(x.data(), bcols.data(), n, d, inv_ls.data(), sq.data());
    k.rbf_from_sq_dist(sq.data(), n, kernel.signal_variance, row.data());
    for (std::size_t j = 0; j < n; ++j) out(i, static_cast<Eigen::Index>(j)) = row[j];
  }
  return out;
}

VectorXd evaluate_mean(const MeanFunction& mean, const MatrixXd& points) {
  VectorXd m(points.rows());
  for (Eigen::Index i = 0; i < points.rows(); ++i) m[i] = mean(points.row(i));
  return m;
}

JitteredCholesky factorize(const MatrixXd& a) {
  const auto n = a.rows();
  JitteredCholesky out;
  out.llt.compute(a);
  if (out.llt.info() == Eigen::Success) return out;
  const double base = n > 0 ? std::max(a.trace(), 0.0) / static_cast<double>(n) : 0.0;
  const double unit = base > 0 ? base : 1.0;
  for (double rel = 1e-10; rel <= 1e-4 * (1 + 1e-9); rel *= 10.0) {
    out.jitter = rel * unit;
    MatrixXd j = a;
    j.diagonal().array() += out.jitter;
    out.llt.compute(j);
    if (out.llt.info() == Eigen::Success) return out;
  }
  throw SingularKernel("kernel matrix not positive definite after maximum jitter");
}

namespace {

MatrixXd train_covariance(const GpModel& m) {
  MatrixXd k = kernel_matrix(m.kernel, m.train_inputs, m.train_inputs);
  if (m.noise_diagonal.size() != 0)
    k.diagonal() += m.noise_diagonal;
  else
    k.diagonal().array() += m.noise_variance;
  return k;
}

}  // namespace

PosteriorGaussian posterior(const GpModel& model, const MatrixXd& test) {
  model.validate();
  if (!test.allFinite()) throw InvalidArgument("test inputs must be finite");
  if (test.cols() != model.kernel.dim()) throw InvalidArgument("test inputs do not match kernel dimension");
  PosteriorGaussian post;
  post.mean = evaluate_mean(model.prior_mean, test);
  post.covariance = kernel_matrix(model.kernel, test, test);
  if (model.size() == 0) return post;

  const JitteredCholesky chol = factorize(train_covariance(model));
  const VectorXd resid = model.train_targets - evaluate_mean(model.prior_mean, model.train_inputs);
  const MatrixXd kstar = kernel_matrix(model.kernel, model.train_inputs, test);  // n x m
  post.mean += kstar.transpose() * chol.llt.solve(resid);
  const MatrixXd v = chol.llt.matrixL().solve(kstar);
  post.covariance -= v.transpose() * v;
  post.covariance = 0.5 * (post.covariance + post.covariance.transpose()).eval();
  return post;
}

double log_marginal_likelihood(const GpModel& model) {
  model.validate();
  const auto n = model.size();
  if (n < 1) throw InvalidArgument("log marginal likelihood needs at least one observation");
  const JitteredCholesky chol = factorize(train_covariance(model));
  const VectorXd resid = model.train_targets - evaluate_mean(model.prior_mean, model.train_inputs);
  const VectorXd alpha = chol.llt.solve(resid);
  const double logdet = 2.0 * chol.llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * resid.dot(alpha) - 0.5 * logdet - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

MatrixXd covariance_factor(const MatrixXd& covariance) {
  const auto m = covariance.rows();
  if (m == 0) return MatrixXd(0, 0);
  if (!covariance.allFinite()) throw InvalidArgument("covariance must be finite");
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (covariance + covariance.transpose()));
  const double trace = std::abs(covariance.trace());
  VectorXd ev = es.eigenvalues();
  if (ev.minCoeff() < -1e-8 * std::max(trace, 1e-300) && ev.minCoeff() < -1e-300)
    throw SingularKernel("covariance is not positive semidefinite");
  ev = ev.cwiseMax(0.0);
  return es.eigenvectors() * ev.cwiseSqrt().asDiagonal();
}

MatrixXd sample(const PosteriorGaussian& post, int count, Rng& rng) {
  if (count < 1) throw InvalidArgument("sample count must be at least 1");
  const auto m = post.mean.size();
  const MatrixXd l = covariance_factor(post.covariance);
  MatrixXd draws(count, m);
  VectorXd z(m);
  for (int c = 0; c < count; ++c) {
    for (Eigen::Index j = 0; j < m; ++j) z[j] = standard_normal(rng);
    draws.row(c) = (post.mean + l * z).transpose();
  }
  return draws;
}

GpModel fit_hyperparameters(GpModel model, const HyperFitOptions& opt) {
  model.validate();
  if (model.size() < 1) throw InvalidArgument("cannot fit hyperparameters without data");
  const auto dim_in = model.kernel.dim();
  const Eigen::Index d = opt.isotropic ? 1 : dim_in;
  const bool noise = opt.fit_noise && model.noise_diagonal.size() == 0;
  const std::size_t dim = static_cast<std::size_t>(d) + 1 + (noise ? 1 : 0);
  const double lo_ls = std::log(opt.min_lengthscale), hi_ls = std::log(opt.max_lengthscale);
  const double lo_n = std::log(opt.min_noise), hi_n = std::log(opt.max_noise);

  auto unpack = [&](const std::vector<double>& p, GpModel& m) {
    for (Eigen::Index k = 0; k < dim_in; ++k)
      m.kernel.lengthscales[k] = std::exp(std::clamp(p[static_cast<std::size_t>(opt.isotropic ? 0 : k)], lo_ls, hi_ls));
    m.kernel.signal_variance = std::exp(std::clamp(p[static_cast<std::size_t>(d)], -30.0, 30.0));
    if (noise) m.noise_variance = std::exp(std::clamp(p[static_cast<std::size_t>(d) + 1], lo_n, hi_n));
  };
  auto objective = [&](const std::vector<double>& p) {
    GpModel m = model;
    unpack(p, m);
    try {
      return -log_marginal_likelihood(m);
    } catch (const Error&) {
      return 1e300;
    }
  };

  std::vector<double> start(dim);
  for (Eigen::Index k = 0; k < d; ++k)
    start[static_cast<std::size_t>(k)] = opt.isotropic ? std::log(model.kernel.lengthscales.mean()) : std::log(model.kernel.lengthscales[k]);
  start[static_cast<std::size_t>(d)] = std::log(model.kernel.signal_variance);
  if (noise) start[static_cast<std::size_t>(d) + 1] = std::log(std::max(model.noise_variance, opt.min_noise));

  optim::MinimizeResult best;
  best.value = objective(start);
  best.x = start;
  for (int r = 0; r < std::max(opt.restarts, 1); ++r) {
    std::vector<double> x0 = start;
    // Deterministic spread of starting points: shorter/longer lengthscales.
    const double shift = (r == 0) ? 0.0 : (r % 2 == 1 ? -1.0 : 1.0) * static_cast<double>((r + 1) / 2);
    for (Eigen::Index k = 0; k < d; ++k) x0[static_cast<std::size_t>(k)] += shift;
    auto res = optim::nelder_mead(objective, x0, std::vector<double>(dim, 0.5), opt.max_iterations, 1e-6);
    if (res.value < best.value) best = res;
  }
  unpack(best.x, model);
  return model;
}

}  // namespace icu::gp
