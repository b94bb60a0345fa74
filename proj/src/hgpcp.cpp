#include "icuplan/hgpcp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <limits>
#include <numbers>

#include "icuplan/dual.hpp"
#include "icuplan/errors.hpp"
#include "icuplan/numeric.hpp"
#include "icuplan/optim.hpp"
#include "json_eigen.hpp"

namespace icu::hgpcp {

namespace {

using D = Dual<kMaxTangents>;
constexpr double kLog2Pi = 1.8378770664093453;

MatrixXd upper_kzz(const HgpcpConfig& c, const MatrixXd& z) {
  const gp::RbfKernel kern = gp::RbfKernel::isotropic(z.cols(), c.upper_lengthscale, c.upper_variance);
  MatrixXd k = gp::kernel_matrix(kern, z, z);
  k.diagonal().array() += c.upper_nugget * c.upper_variance;
  return k;
}

// Lower-layer covariance over days 1..n: sv * (R + nugget * I).
void lower_kernel(double lengthscale, double signal_variance, double nugget, Eigen::Index n, MatrixXd& k,
                  MatrixXd* scaled_sq_dist) {
  k.resize(n, n);
  if (scaled_sq_dist) scaled_sq_dist->resize(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) {
      const double diff = static_cast<double>(a - b) / lengthscale;
      const double r = std::exp(-0.5 * diff * diff);
      k(a, b) = signal_variance * (r + (a == b ? nugget : 0.0));
      if (scaled_sq_dist) (*scaled_sq_dist)(a, b) = signal_variance * r * diff * diff;
    }
  }
}

template <typename T>
void clamp_state(T& s, T& e, T& i, T& h, T& r) {
  if (value_of(s) >= 0 && value_of(e) >= 0 && value_of(i) >= 0 && value_of(h) >= 0 && value_of(r) >= 0) return;
  T deficit(0.0);
  for (T* c : {&e, &i, &h, &r}) {
    if (value_of(*c) < 0) {
      deficit += *c;
      *c = T(0.0);
    }
  }
  s += deficit;
  if (value_of(s) < 0) {
    const T excess = -s;
    s = T(0.0);
    const T rest = e + i + h + r;
    const T scale = value_of(rest) > 0 ? (rest - excess) / rest : T(0.0);
    e = e * scale;
    i = i * scale;
    h = h * scale;
    r = r * scale;
  }
}

// Daily admissions with tangents w.r.t. the epidemic parameters (slots
// 0..4) and the upper-layer parameters psi (slots 5..).
void forward_admissions(const std::array<double, kEpiParams>& rho, const MatrixXd& coupling, const VectorXd& psi,
                        double population, const HgpcpConfig& c, std::vector<D>& out) {
  std::array<D, kEpiParams> x;
  for (int j = 0; j < kEpiParams; ++j) x[j] = D::variable(rho[j], j);
  const D alpha = softplus(x[0]);
  const D gamma = softplus(x[1]);
  const D eta = sigmoid(x[2]);
  const double seed_scale = c.seed_init / std::numbers::ln2;
  const D e0 = softplus(x[3]) * seed_scale;
  const D i0 = softplus(x[4]) * seed_scale;

  D s = population - e0 - i0, e = e0, i = i0, h(0.0), r(0.0);
  D ds, de, di, dh, dr;
  const int spd = epi::steps_per_day(c.dt);
  const auto days = coupling.rows();
  const auto g = coupling.cols();
  out.resize(static_cast<std::size_t>(days));
  for (Eigen::Index d = 0; d < days; ++d) {
    D f(coupling.row(d).dot(psi));
    for (Eigen::Index j = 0; j < g; ++j) f.d[static_cast<std::size_t>(kEpiParams + j)] = coupling(d, j);
    const D beta = softplus(f) * (1.0 / population);
    const D h_prev = h;
    for (int step = 0; step < spd; ++step) {
      epi::seihr_rhs(s, e, i, beta, alpha, gamma, eta, ds, de, di, dh, dr);
      s += ds * c.dt;
      e += de * c.dt;
      i += di * c.dt;
      h += dh * c.dt;
      r += dr * c.dt;
      clamp_state(s, e, i, h, r);
    }
    out[static_cast<std::size_t>(d)] = h - h_prev;
  }
}

}  // namespace

// ---------------------------------------------------------------- config

void HgpcpConfig::validate(Eigen::Index k) const {
  epi::steps_per_day(dt);
  if (inducing_points < 0) throw InvalidArgument("inducing point count must be nonnegative");
  if (1 + k + inducing_points + kEpiParams > kMaxTangents)
    throw InvalidArgument("too many mobility features and inducing points for the gradient capacity");
  if (!(upper_lengthscale > 0) || !(upper_variance > 0) || !(upper_nugget > 0) || !(weight_prior_sd > 0))
    throw InvalidArgument("upper kernel settings must be positive");
  if (!(initial_contact > 0) || !(seed_init > 0) || !(lower_lengthscale > 0) || !(lower_nugget > 0) ||
      !(lower_lengthscale_prior_sd > 0) || !(lower_variance_scale > 0) || !(lower_variance_prior_sd > 0))
    throw InvalidArgument("initial values must be positive");
  if (steps < 0 || mc_samples < 1 || eval_samples < 1 || checkpoint_every < 1 || forecast_samples < 1)
    throw InvalidArgument("invalid optimization or sampling counts");
  if (!(learning_rate > 0)) throw InvalidArgument("learning rate must be positive");
  for (int j = 0; j < kEpiParams; ++j)
    if (!std::isfinite(prior_mean[j]) || !(prior_sd[j] > 0)) throw InvalidArgument("invalid epidemic prior");
}

nlohmann::json HgpcpConfig::to_json() const {
  return {{"dt", dt},
          {"inducing_points", inducing_points},
          {"upper_lengthscale", upper_lengthscale},
          {"upper_variance", upper_variance},
          {"upper_nugget", upper_nugget},
          {"weight_prior_sd", weight_prior_sd},
          {"initial_contact", initial_contact},
          {"seed_init", seed_init},
          {"lower_lengthscale", lower_lengthscale},
          {"lower_nugget", lower_nugget},
          {"lower_lengthscale_prior_sd", lower_lengthscale_prior_sd},
          {"lower_variance_scale", lower_variance_scale},
          {"lower_variance_prior_sd", lower_variance_prior_sd},
          {"steps", steps},
          {"learning_rate", learning_rate},
          {"mc_samples", mc_samples},
          {"eval_samples", eval_samples},
          {"checkpoint_every", checkpoint_every},
          {"forecast_samples", forecast_samples},
          {"seed", seed},
          {"prior_mean", prior_mean},
          {"prior_sd", prior_sd}};
}

HgpcpConfig HgpcpConfig::from_json(const nlohmann::json& j) {
  HgpcpConfig c;
  c.dt = j.at("dt").get<double>();
  c.inducing_points = j.at("inducing_points").get<int>();
  c.upper_lengthscale = j.at("upper_lengthscale").get<double>();
  c.upper_variance = j.at("upper_variance").get<double>();
  c.upper_nugget = j.at("upper_nugget").get<double>();
  c.weight_prior_sd = j.at("weight_prior_sd").get<double>();
  c.initial_contact = j.at("initial_contact").get<double>();
  c.seed_init = j.at("seed_init").get<double>();
  c.lower_lengthscale = j.at("lower_lengthscale").get<double>();
  c.lower_nugget = j.at("lower_nugget").get<double>();
  c.lower_lengthscale_prior_sd = j.at("lower_lengthscale_prior_sd").get<double>();
  c.lower_variance_scale = j.at("lower_variance_scale").get<double>();
  c.lower_variance_prior_sd = j.at("lower_variance_prior_sd").get<double>();
  c.steps = j.at("steps").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.mc_samples = j.at("mc_samples").get<int>();
  c.eval_samples = j.at("eval_samples").get<int>();
  c.checkpoint_every = j.at("checkpoint_every").get<int>();
  c.forecast_samples = j.at("forecast_samples").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.prior_mean = j.at("prior_mean").get<std::array<double, kEpiParams>>();
  c.prior_sd = j.at("prior_sd").get<std::array<double, kEpiParams>>();
  return c;
}

// ---------------------------------------------------------------- model

epi::EpidemicParams transform_params(const std::array<double, kEpiParams>& rho, double population) {
  epi::EpidemicParams p;
  p.alpha = softplus(rho[0]);
  p.gamma = softplus(rho[1]);
  p.eta = sigmoid(rho[2]);
  p.population = population;
  return p;
}

std::array<double, 2> transform_seeds(const std::array<double, kEpiParams>& rho, double seed_init) {
  const double scale = seed_init / std::numbers::ln2;
  return {scale * softplus(rho[3]), scale * softplus(rho[4])};
}

epi::EpidemicParams HospitalFit::params() const { return transform_params(rho_mean, population); }

gp::RbfKernel HospitalFit::lower_kernel() const {
  return gp::RbfKernel::isotropic(1, std::exp(log_lengthscale), std::exp(log_signal_variance));
}
double HospitalFit::lower_noise() const { return std::exp(log_noise); }

HgpcpModel HgpcpModel::untrained(Eigen::Index k, const HgpcpConfig& config) {
  if (k < 1) throw InvalidArgument("mobility dimension must be positive");
  config.validate(k);
  HgpcpModel m;
  m.config = config;
  m.k = k;
  m.bias = inverse_softplus(config.initial_contact);
  m.weights = VectorXd::Zero(k);
  m.inducing_inputs.resize(0, k);
  m.inducing_values.resize(0);
  return m;
}

gp::RbfKernel HgpcpModel::upper_kernel() const {
  return gp::RbfKernel::isotropic(k, config.upper_lengthscale, config.upper_variance);
}

double HgpcpModel::upper_mean(const Eigen::Ref<const Eigen::RowVectorXd>& m) const { return bias + m.dot(weights); }

gp::GpModel HgpcpModel::upper_gp() const {
  gp::GpModel g;
  g.kernel = upper_kernel();
  g.noise_variance = config.upper_nugget * config.upper_variance;
  g.train_inputs = inducing_inputs;
  g.train_targets = inducing_values;
  const double b = bias;
  const VectorXd w = weights;
  g.prior_mean = [b, w](const Eigen::Ref<const Eigen::RowVectorXd>& m) { return b + m.dot(w); };
  return g;
}

std::array<double, 2> HgpcpModel::seeds(const HospitalFit& h) const {
  return transform_seeds(h.rho_mean, config.seed_init);
}

const HospitalFit& HgpcpModel::hospital(std::string_view id) const {
  for (const auto& h : hospitals)
    if (h.hospital_id == id) return h;
  throw NotFound("unknown hospital: " + std::string(id));
}

std::vector<std::string> HgpcpModel::hospital_ids() const {
  std::vector<std::string> ids;
  for (const auto& h : hospitals) ids.push_back(h.hospital_id);
  return ids;
}

nlohmann::json HgpcpModel::to_json() const {
  using detail::matrix_json;
  using detail::vector_json;
  nlohmann::json hs = nlohmann::json::array();
  for (const auto& h : hospitals) {
    hs.push_back({{"hospital_id", h.hospital_id},
                  {"population", h.population},
                  {"rho_mean", h.rho_mean},
                  {"rho_log_sd", h.rho_log_sd},
                  {"log_lengthscale", h.log_lengthscale},
                  {"log_signal_variance", h.log_signal_variance},
                  {"log_noise", h.log_noise},
                  {"q_mean", vector_json(h.q_mean)},
                  {"q_log_sd", vector_json(h.q_log_sd)},
                  {"admissions", h.admissions},
                  {"mobility", matrix_json(h.mobility)}});
  }
  return {{"manifest",
           {{"schema_version", kSchemaVersion},
            {"created_at", created_at},
            {"hospital_ids", hospital_ids()},
            {"k", k},
            {"inducing_points", inducing_inputs.rows()},
            {"hyperparameters", config.to_json()}}},
          {"parameters",
           {{"bias", bias},
            {"weights", vector_json(weights)},
            {"inducing_inputs", matrix_json(inducing_inputs)},
            {"inducing_values", vector_json(inducing_values)},
            {"elbo", {{"initial", initial_elbo}, {"final", final_elbo}, {"trace", elbo_trace}}},
            {"hospitals", hs}}}};
}

HgpcpModel HgpcpModel::from_json(const nlohmann::json& j) {
  const auto& man = j.at("manifest");
  if (man.at("schema_version").get<int>() != kSchemaVersion) throw InvalidArgument("unsupported trend model schema");
  HgpcpModel m;
  m.config = HgpcpConfig::from_json(man.at("hyperparameters"));
  m.k = man.at("k").get<Eigen::Index>();
  m.created_at = man.at("created_at").get<std::string>();
  const auto& p = j.at("parameters");
  m.bias = p.at("bias").get<double>();
  m.weights = detail::json_vector(p.at("weights"));
  m.inducing_inputs = detail::json_matrix(p.at("inducing_inputs"));
  m.inducing_values = detail::json_vector(p.at("inducing_values"));
  m.initial_elbo = p.at("elbo").at("initial").get<double>();
  m.final_elbo = p.at("elbo").at("final").get<double>();
  m.elbo_trace = p.at("elbo").at("trace").get<std::vector<double>>();
  for (const auto& hj : p.at("hospitals")) {
    HospitalFit h;
    h.hospital_id = hj.at("hospital_id").get<std::string>();
    h.population = hj.at("population").get<double>();
    h.rho_mean = hj.at("rho_mean").get<std::array<double, kEpiParams>>();
    h.rho_log_sd = hj.at("rho_log_sd").get<std::array<double, kEpiParams>>();
    h.log_lengthscale = hj.at("log_lengthscale").get<double>();
    h.log_signal_variance = hj.at("log_signal_variance").get<double>();
    h.log_noise = hj.at("log_noise").get<double>();
    h.q_mean = detail::json_vector(hj.at("q_mean"));
    h.q_log_sd = detail::json_vector(hj.at("q_log_sd"));
    h.admissions = hj.at("admissions").get<std::vector<double>>();
    h.mobility = detail::json_matrix(hj.at("mobility"));
    m.hospitals.push_back(std::move(h));
  }
  if (m.weights.size() != m.k || m.inducing_inputs.cols() != m.k ||
      m.inducing_values.size() != m.inducing_inputs.rows())
    throw InvalidArgument("trend model arrays are inconsistent");
  return m;
}

// ---------------------------------------------------------------- upper layer

VectorXd ContactRateDistribution::mean() const { return latent_mean.unaryExpr([](double f) { return softplus(f); }); }

MatrixXd ContactRateDistribution::sample(int count, Rng& rng) const {
  gp::PosteriorGaussian post{latent_mean, latent_covariance};
  return gp::sample(post, count, rng).unaryExpr([](double f) { return softplus(f); });
}

ContactRateDistribution contact_rate(const HgpcpModel& model, const MatrixXd& mobility) {
  if (mobility.cols() != model.k) throw InvalidArgument("mobility dimension does not match the model");
  const gp::PosteriorGaussian post = gp::posterior(model.upper_gp(), mobility);
  return {post.mean, post.covariance};
}

std::vector<double> prior_admissions(const HgpcpModel& model, std::string_view hospital_id, const MatrixXd& mobility) {
  const HospitalFit& h = model.hospital(hospital_id);
  const VectorXd intensity = contact_rate(model, mobility).mean();
  const epi::EpidemicParams p = h.params();
  const auto seeds = model.seeds(h);
  const epi::CompartmentState init = epi::CompartmentState::seeded(h.population, seeds[0], seeds[1]);
  std::vector<double> beta(static_cast<std::size_t>(mobility.rows()));
  for (Eigen::Index d = 0; d < mobility.rows(); ++d) beta[static_cast<std::size_t>(d)] = intensity[d] / h.population;
  const epi::EnsembleOutput out = epi::integrate_ensemble({&init, 1}, {&p, 1}, beta, model.config.dt,
                                                          static_cast<int>(mobility.rows()));
  return out.daily_admissions;
}

MatrixXd select_inducing(const MatrixXd& rows, int count) {
  const auto n = rows.rows();
  if (n == 0 || count <= 0) return MatrixXd(0, rows.cols());
  const Eigen::RowVectorXd centroid = rows.colwise().mean();
  Eigen::Index first = 0;
  (rows.rowwise() - centroid).rowwise().squaredNorm().maxCoeff(&first);
  std::vector<Eigen::Index> chosen{first};
  VectorXd nearest = (rows.rowwise() - rows.row(first)).rowwise().squaredNorm();
  while (static_cast<int>(chosen.size()) < count) {
    Eigen::Index next = 0;
    if (!(nearest.maxCoeff(&next) > 0)) break;
    chosen.push_back(next);
    nearest = nearest.cwiseMin((rows.rowwise() - rows.row(next)).rowwise().squaredNorm());
  }
  MatrixXd z(static_cast<Eigen::Index>(chosen.size()), rows.cols());
  for (std::size_t c = 0; c < chosen.size(); ++c) z.row(static_cast<Eigen::Index>(c)) = rows.row(chosen[c]);
  return z;
}

// ---------------------------------------------------------------- ELBO

ElboObjective::ElboObjective(std::span<const HospitalSeries> series, std::span<const double> populations,
                             const HgpcpConfig& config, const MatrixXd& inducing_inputs)
    : config_(config), inducing_(inducing_inputs) {
  if (series.empty()) throw InvalidArgument("empty trend dataset");
  if (populations.size() != series.size()) throw InvalidArgument("one population per hospital required");
  k_ = series.front().k();
  if (inducing_.rows() > 0 && inducing_.cols() != k_) throw InvalidArgument("inducing inputs have the wrong dimension");
  m_ = inducing_.rows();
  config_.validate(k_);
  globals_ = 1 + k_ + m_;

  if (m_ > 0) {
    kzz_.compute(upper_kzz(config_, inducing_));
    if (kzz_.info() != Eigen::Success) throw SingularKernel("inducing covariance is not positive definite");
    kzz_logdet_ = 2.0 * kzz_.matrixLLT().diagonal().array().log().sum();
  }
  const gp::RbfKernel kern = gp::RbfKernel::isotropic(k_, config_.upper_lengthscale, config_.upper_variance);

  Eigen::Index offset = globals_;
  for (std::size_t h = 0; h < series.size(); ++h) {
    const HospitalSeries& s = series[h];
    s.validate();
    if (s.k() != k_) throw InvalidArgument("mobility dimension differs between hospitals");
    if (s.days() < 7) throw InvalidArgument("each hospital needs at least 7 days of data: " + s.hospital_id);
    if (!(populations[h] > 0)) throw InvalidArgument("population must be positive: " + s.hospital_id);
    Hospital hs;
    hs.id = s.hospital_id;
    hs.population = populations[h];
    hs.admissions = Eigen::Map<const VectorXd>(s.admissions.data(), s.days());
    hs.mobility = s.mobility;
    hs.smooth.resize(s.days());
    for (Eigen::Index d = 0; d < s.days(); ++d) {
      const Eigen::Index lo = std::max<Eigen::Index>(0, d - 3), hi = std::min<Eigen::Index>(s.days() - 1, d + 3);
      hs.smooth[d] = hs.admissions.segment(lo, hi - lo + 1).mean();
    }
    hs.scale = hs.smooth.cwiseMax(1.0).cwiseSqrt();
    hs.log_variance_centre = std::log(config_.lower_variance_scale * std::max(hs.admissions.mean(), 1.0));
    hs.coupling.resize(s.days(), globals_);
    for (Eigen::Index d = 0; d < s.days(); ++d) {
      const Eigen::RowVectorXd md = s.mobility.row(d);
      if (m_ > 0) {
        const VectorXd kz = gp::kernel_matrix(kern, inducing_, md).col(0);
        const VectorXd v = kzz_.solve(kz);
        hs.coupling(d, 0) = 1.0 - v.sum();
        hs.coupling.block(d, 1, 1, k_) = md - (inducing_.transpose() * v).transpose();
        hs.coupling.block(d, 1 + k_, 1, m_) = v.transpose();
      } else {
        hs.coupling(d, 0) = 1.0;
        hs.coupling.block(d, 1, 1, k_) = md;
      }
    }
    hs.offset = offset;
    offset += kEpiParams + 3 + 2 * s.days();
    hospitals_.push_back(std::move(hs));
  }
  size_ = offset;
}

ElboObjective::Draws ElboObjective::draw(int samples, Rng& rng) const {
  Draws d;
  d.samples = samples;
  for (const auto& h : hospitals_) {
    MatrixXd z(samples, h.admissions.size());
    for (Eigen::Index r = 0; r < z.rows(); ++r)
      for (Eigen::Index c = 0; c < z.cols(); ++c) z(r, c) = standard_normal(rng);
    d.per_hospital.push_back(std::move(z));
  }
  return d;
}

VectorXd ElboObjective::pack(const HgpcpModel& model) const {
  VectorXd theta(size_);
  theta[0] = model.bias;
  theta.segment(1, k_) = model.weights;
  theta.segment(1 + k_, m_) = model.inducing_values;
  for (std::size_t h = 0; h < hospitals_.size(); ++h) {
    const HospitalFit& f = model.hospitals[h];
    const Eigen::Index o = hospitals_[h].offset;
    const Eigen::Index t = hospitals_[h].admissions.size();
    for (int j = 0; j < kEpiParams; ++j) theta[o + j] = f.rho_mean[j];
    theta[o + kEpiParams] = f.log_lengthscale;
    theta[o + kEpiParams + 1] = f.log_signal_variance;
    theta[o + kEpiParams + 2] = f.log_noise;
    theta.segment(o + kEpiParams + 3, t) = f.q_mean.cwiseQuotient(hospitals_[h].scale);
    theta.segment(o + kEpiParams + 3 + t, t) = f.q_log_sd;
  }
  return theta;
}

void ElboObjective::unpack(const VectorXd& theta, HgpcpModel& model) const {
  if (theta.size() != size_) throw InvalidArgument("parameter vector has the wrong size");
  model.bias = theta[0];
  model.weights = theta.segment(1, k_);
  model.inducing_values = theta.segment(1 + k_, m_);
  for (std::size_t h = 0; h < hospitals_.size(); ++h) {
    HospitalFit& f = model.hospitals[h];
    const Eigen::Index o = hospitals_[h].offset;
    const Eigen::Index t = hospitals_[h].admissions.size();
    for (int j = 0; j < kEpiParams; ++j) f.rho_mean[j] = theta[o + j];
    f.log_lengthscale = theta[o + kEpiParams];
    f.log_signal_variance = theta[o + kEpiParams + 1];
    f.log_noise = theta[o + kEpiParams + 2];
    f.q_mean = theta.segment(o + kEpiParams + 3, t).cwiseProduct(hospitals_[h].scale);
    f.q_log_sd = theta.segment(o + kEpiParams + 3 + t, t);
  }
}

HgpcpModel ElboObjective::initial_model() const {
  HgpcpModel m = HgpcpModel::untrained(k_, config_);
  m.inducing_inputs = inducing_;
  m.inducing_values = VectorXd::Constant(m_, m.bias);
  for (Eigen::Index z = 0; z < m_; ++z) m.inducing_values[z] = m.upper_mean(inducing_.row(z));
  for (const auto& h : hospitals_) {
    HospitalFit f;
    f.hospital_id = h.id;
    f.population = h.population;
    f.rho_mean = config_.prior_mean;
    for (int j = 0; j < kEpiParams; ++j) f.rho_log_sd[j] = std::log(config_.prior_sd[j]);
    f.log_lengthscale = std::log(config_.lower_lengthscale);
    f.log_signal_variance = h.log_variance_centre;
    f.log_noise = 0.0;
    f.q_mean = h.smooth;
    f.q_log_sd = h.admissions.unaryExpr([](double a) { return std::log(0.5 * std::sqrt(std::max(a, 1.0))); });
    f.admissions.assign(h.admissions.data(), h.admissions.data() + h.admissions.size());
    f.mobility = h.mobility;
    m.hospitals.push_back(std::move(f));
  }
  return m;
}

double ElboObjective::global_term(const VectorXd& theta, VectorXd* grad) const {
  const VectorXd w = theta.segment(1, k_);
  const double pv = config_.weight_prior_sd * config_.weight_prior_sd;
  double value = -0.5 * w.squaredNorm() / pv - 0.5 * static_cast<double>(k_) * (kLog2Pi + std::log(pv));
  if (grad) grad->segment(1, k_) -= w / pv;
  if (m_ == 0) return value;
  const double b = theta[0];
  const VectorXd u = theta.segment(1 + k_, m_);
  const VectorXd resid = u - ((inducing_ * w).array() + b).matrix();
  const VectorXd alpha = kzz_.solve(resid);
  if (grad) {
    (*grad)[0] += alpha.sum();
    grad->segment(1, k_) += inducing_.transpose() * alpha;
    grad->segment(1 + k_, m_) -= alpha;
  }
  return value - 0.5 * resid.dot(alpha) - 0.5 * kzz_logdet_ - 0.5 * static_cast<double>(m_) * kLog2Pi;
}

double ElboObjective::hospital_term(const Hospital& h, const VectorXd& theta, const MatrixXd& draws,
                                    VectorXd* grad) const {
  const Eigen::Index o = h.offset;
  const Eigen::Index t = h.admissions.size();
  const Eigen::Index lo = o + kEpiParams;
  const auto samples = draws.rows();
  const double inv_s = 1.0 / static_cast<double>(samples);
  const VectorXd psi = theta.head(globals_);

  std::array<double, kEpiParams> rho{};
  for (int j = 0; j < kEpiParams; ++j) rho[j] = theta[o + j];
  const double ls = std::exp(theta[lo]);
  const double sv = std::exp(theta[lo + 1]);
  const double noise = std::exp(theta[lo + 2]);
  const VectorXd m = theta.segment(lo + 3, t).cwiseProduct(h.scale);
  const VectorXd sd = theta.segment(lo + 3 + t, t).array().exp();

  MatrixXd k, dk_dls;
  lower_kernel(ls, sv, config_.lower_nugget, t, k, grad ? &dk_dls : nullptr);
  const Eigen::LLT<MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) throw SingularKernel("lower kernel is not positive definite for " + h.id);
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const MatrixXd kinv = llt.solve(MatrixXd::Identity(t, t));

  // E_Q log N(g; a, K) with the compartmental curve a at the point estimate.
  std::vector<D> a;
  forward_admissions(rho, h.coupling, psi, h.population, config_, a);
  VectorXd resid(t);
  for (Eigen::Index d = 0; d < t; ++d) resid[d] = m[d] - a[static_cast<std::size_t>(d)].v;
  const VectorXd alpha = kinv * resid;
  const VectorXd var_q = sd.array().square();
  const double td = static_cast<double>(t);
  double value = -0.5 * resid.dot(alpha) - 0.5 * kinv.diagonal().dot(var_q) - 0.5 * logdet - 0.5 * td * kLog2Pi;
  value += sd.array().log().sum() + 0.5 * td * (1.0 + kLog2Pi);

  VectorXd g_m, g_lsd_q;
  double g_noise = 0.0;
  if (grad) {
    g_m = -alpha;
    g_lsd_q = (1.0 - kinv.diagonal().array() * var_q.array()).matrix();
  }
  for (Eigen::Index s = 0; s < samples; ++s) {
    for (Eigen::Index d = 0; d < t; ++d) {
      const double z = draws(s, d);
      const double g = m[d] + sd[d] * z;
      const double diff = h.admissions[d] - g;
      if (g > noise) {
        value += (-0.5 * (kLog2Pi + std::log(g)) - diff * diff / (2.0 * g)) * inv_s;
        if (grad) {
          const double dg = -0.5 / g + diff / g + diff * diff / (2.0 * g * g);
          g_m[d] += dg * inv_s;
          g_lsd_q[d] += dg * sd[d] * z * inv_s;
        }
      } else {
        value += (-0.5 * (kLog2Pi + std::log(noise)) - diff * diff / (2.0 * noise)) * inv_s;
        if (grad) {
          const double dg = diff / noise;
          g_m[d] += dg * inv_s;
          g_lsd_q[d] += dg * sd[d] * z * inv_s;
          g_noise += (-0.5 + diff * diff / (2.0 * noise)) * inv_s;
        }
      }
    }
  }

  std::array<double, kEpiParams> g_rho{};
  for (int j = 0; j < kEpiParams; ++j) {
    const double s0 = config_.prior_sd[j];
    const double dm = rho[j] - config_.prior_mean[j];
    value -= 0.5 * dm * dm / (s0 * s0) + std::log(s0) + 0.5 * kLog2Pi;
    g_rho[j] = -dm / (s0 * s0);
  }

  const double ls_z = (theta[lo] - std::log(config_.lower_lengthscale)) / config_.lower_lengthscale_prior_sd;
  const double sv_z = (theta[lo + 1] - h.log_variance_centre) / config_.lower_variance_prior_sd;
  value += -0.5 * ls_z * ls_z - 0.5 * sv_z * sv_z;

  if (grad) {
    std::array<double, kMaxTangents> tangent{};
    for (Eigen::Index d = 0; d < t; ++d) {
      const D& ad = a[static_cast<std::size_t>(d)];
      for (Eigen::Index j = 0; j < kEpiParams + globals_; ++j) tangent[j] += alpha[d] * ad.d[j];
    }
    const MatrixXd w = alpha * alpha.transpose() + kinv * var_q.asDiagonal() * kinv - kinv;
    VectorXd& gr = *grad;
    for (Eigen::Index j = 0; j < globals_; ++j) gr[j] += tangent[kEpiParams + j];
    for (int j = 0; j < kEpiParams; ++j) gr[o + j] += g_rho[j] + tangent[j];
    gr[lo] += 0.5 * w.cwiseProduct(dk_dls).sum() - ls_z / config_.lower_lengthscale_prior_sd;
    gr[lo + 1] += 0.5 * w.cwiseProduct(k).sum() - sv_z / config_.lower_variance_prior_sd;
    gr[lo + 2] += g_noise;
    gr.segment(lo + 3, t) += g_m.cwiseProduct(h.scale);
    gr.segment(lo + 3 + t, t) += g_lsd_q;
  }
  return value;
}

void ElboObjective::align_initial_curve(VectorXd& theta) const {
  if (theta.size() != size_) throw InvalidArgument("parameter vector has the wrong size");
  std::vector<MatrixXd> draws;
  for (const auto& h : hospitals_) draws.push_back(MatrixXd::Zero(1, h.admissions.size()));
  const VectorXd w = theta.segment(1, k_);
  double best = -std::numeric_limits<double>::infinity();
  VectorXd best_theta = theta;
  for (int c = 1; c <= 20; ++c) {
    VectorXd trial = theta;
    const double b = inverse_softplus(0.1 * c);
    trial[0] = b;
    if (m_ > 0) trial.segment(1 + k_, m_) = ((inducing_ * w).array() + b).matrix();
    double total = global_term(trial, nullptr);
    for (std::size_t i = 0; i < hospitals_.size(); ++i) {
      const Hospital& h = hospitals_[i];
      double best_h = -std::numeric_limits<double>::infinity();
      double best_seed = trial[h.offset + 3];
      for (int k = -6; k <= 8; ++k) {
        trial[h.offset + 3] = trial[h.offset + 4] = 0.5 * k;
        double v = -std::numeric_limits<double>::infinity();
        try {
          v = hospital_term(h, trial, draws[i], nullptr);
        } catch (const Error&) {
        }
        if (v > best_h) {
          best_h = v;
          best_seed = 0.5 * k;
        }
      }
      trial[h.offset + 3] = trial[h.offset + 4] = best_seed;
      total += best_h;
    }
    if (total > best) {
      best = total;
      best_theta = trial;
    }
  }
  theta = best_theta;
}

void ElboObjective::set_epi_spread(const VectorXd& theta, HgpcpModel& model) const {
  if (theta.size() != size_) throw InvalidArgument("parameter vector has the wrong size");
  for (std::size_t i = 0; i < hospitals_.size(); ++i) {
    const Hospital& h = hospitals_[i];
    const MatrixXd draws = MatrixXd::Zero(1, h.admissions.size());
    HospitalFit& f = model.hospitals[i];
    for (int j = 0; j < kEpiParams; ++j) {
      constexpr double step = 1e-4;
      VectorXd up = theta, down = theta, g_up = VectorXd::Zero(size_), g_down = VectorXd::Zero(size_);
      up[h.offset + j] += step;
      down[h.offset + j] -= step;
      hospital_term(h, up, draws, &g_up);
      hospital_term(h, down, draws, &g_down);
      const double curvature = -(g_up[h.offset + j] - g_down[h.offset + j]) / (2.0 * step);
      const double prior_precision = 1.0 / (config_.prior_sd[j] * config_.prior_sd[j]);
      f.rho_log_sd[j] = -0.5 * std::log(std::max(curvature, prior_precision));
    }
  }
}

double ElboObjective::value(const VectorXd& theta, const Draws& draws, VectorXd* grad) const {
  if (theta.size() != size_) throw InvalidArgument("parameter vector has the wrong size");
  if (draws.per_hospital.size() != hospitals_.size()) throw InvalidArgument("draws do not match the dataset");
  if (grad) *grad = VectorXd::Zero(size_);
  double total = global_term(theta, grad);
  for (std::size_t h = 0; h < hospitals_.size(); ++h)
    total += hospital_term(hospitals_[h], theta, draws.per_hospital[h], grad);
  return total;
}

// ---------------------------------------------------------------- fit

HgpcpModel fit(std::span<const HospitalSeries> series, std::span<const HospitalInfo> hospitals,
               const HgpcpConfig& config) {
  if (series.empty()) throw InvalidArgument("empty trend dataset");
  std::vector<double> populations;
  for (const auto& s : series) {
    const auto it = std::find_if(hospitals.begin(), hospitals.end(),
                                 [&](const HospitalInfo& h) { return h.hospital_id == s.hospital_id; });
    if (it == hospitals.end()) throw NotFound("no population for hospital " + s.hospital_id);
    populations.push_back(it->population);
  }
  const Eigen::Index k = series.front().k();
  config.validate(k);

  Eigen::Index rows = 0;
  for (const auto& s : series) rows += s.mobility.rows();
  MatrixXd pooled(rows, k);
  rows = 0;
  for (const auto& s : series) {
    if (s.k() != k) throw InvalidArgument("mobility dimension differs between hospitals");
    pooled.middleRows(rows, s.mobility.rows()) = s.mobility;
    rows += s.mobility.rows();
  }

  const ElboObjective objective(series, populations, config, select_inducing(pooled, config.inducing_points));
  HgpcpModel model = objective.initial_model();
  VectorXd theta = objective.pack(model);
  objective.align_initial_curve(theta);

  Rng eval_rng = make_rng(config.seed, "hgpcp/eval");
  Rng rng = make_rng(config.seed, "hgpcp/train");
  const auto eval_draws = objective.draw(config.eval_samples, eval_rng);
  const double initial = objective.value(theta, eval_draws);
  if (!std::isfinite(initial)) throw NumericalError("non-finite ELBO", 0);

  double best = initial;
  VectorXd best_theta = theta;
  VectorXd grad;
  optim::Adam adam(static_cast<std::size_t>(theta.size()), config.learning_rate);
  std::vector<double> params(theta.data(), theta.data() + theta.size());
  std::vector<double> g(params.size());
  for (int step = 1; step <= config.steps; ++step) {
    const auto draws = objective.draw(config.mc_samples, rng);
    const double v = objective.value(theta, draws, &grad);
    if (!std::isfinite(v) || !grad.allFinite()) throw NumericalError("non-finite ELBO", step);
    model.elbo_trace.push_back(v);
    std::copy(grad.data(), grad.data() + grad.size(), g.begin());
    adam.step(params, g, true);
    theta = Eigen::Map<const VectorXd>(params.data(), theta.size());
    if (step % config.checkpoint_every == 0 || step == config.steps) {
      const double e = objective.value(theta, eval_draws);
      if (std::isfinite(e) && e > best) {
        best = e;
        best_theta = theta;
      }
    }
  }
  objective.unpack(best_theta, model);
  objective.set_epi_spread(best_theta, model);
  model.initial_elbo = initial;
  model.final_elbo = best;
  model.created_at = utc_timestamp();
  return model;
}

// ---------------------------------------------------------------- forecast

ForecastDistribution forecast(const HgpcpModel& model, std::string_view hospital_id, const MatrixXd& future_mobility,
                              int mc_samples, std::uint64_t seed) {
  const HospitalFit& h = model.hospital(hospital_id);
  if (mc_samples < 1) throw InvalidArgument("at least one Monte Carlo sample is required");
  if (future_mobility.cols() != model.k) throw InvalidArgument("mobility dimension does not match the model");
  const Eigen::Index t = h.days();
  const Eigen::Index horizon = future_mobility.rows();
  if (horizon == 0) return ForecastDistribution::from_samples(static_cast<int>(t), MatrixXd(mc_samples, 0));
  const Eigen::Index n = t + horizon;
  const auto lanes = static_cast<std::size_t>(mc_samples);

  MatrixXd mobility(n, model.k);
  mobility << h.mobility, future_mobility;
  Rng rng = make_rng(seed, "hgpcp/forecast/" + h.hospital_id);
  const MatrixXd intensity = contact_rate(model, mobility).sample(mc_samples, rng);  // S x n

  std::vector<epi::CompartmentState> init(lanes);
  std::vector<epi::EpidemicParams> params(lanes);
  std::array<double, kEpiParams> rho{};
  for (std::size_t s = 0; s < lanes; ++s) {
    for (int j = 0; j < kEpiParams; ++j) rho[j] = h.rho_mean[j] + std::exp(h.rho_log_sd[j]) * standard_normal(rng);
    params[s] = transform_params(rho, h.population);
    const auto seeds = transform_seeds(rho, model.config.seed_init);
    init[s] = epi::CompartmentState::seeded(h.population, seeds[0], seeds[1]);
  }
  std::vector<double> beta(static_cast<std::size_t>(n) * lanes);
  for (Eigen::Index d = 0; d < n; ++d)
    for (std::size_t s = 0; s < lanes; ++s)
      beta[static_cast<std::size_t>(d) * lanes + s] = intensity(static_cast<Eigen::Index>(s), d) / h.population;
  const epi::EnsembleOutput prior = epi::integrate_ensemble(init, params, beta, model.config.dt, static_cast<int>(n));

  MatrixXd k;
  lower_kernel(std::exp(h.log_lengthscale), std::exp(h.log_signal_variance), model.config.lower_nugget, n, k, nullptr);
  const Eigen::LLT<MatrixXd> ktt(k.topLeftCorner(t, t));
  if (ktt.info() != Eigen::Success) throw SingularKernel("lower kernel is not positive definite for " + h.hospital_id);
  const MatrixXd gain = ktt.solve(k.topRightCorner(t, horizon)).transpose();  // horizon x t
  const MatrixXd cond = k.bottomRightCorner(horizon, horizon) - gain * k.topRightCorner(t, horizon);
  const MatrixXd factor = gp::covariance_factor(cond);
  const VectorXd q_sd = h.q_log_sd.array().exp();
  const double noise = h.lower_noise();

  MatrixXd out(mc_samples, horizon);
  VectorXd resid(t), z(horizon);
  for (std::size_t s = 0; s < lanes; ++s) {
    for (Eigen::Index d = 0; d < t; ++d)
      resid[d] = h.q_mean[d] + q_sd[d] * standard_normal(rng) - prior.at(static_cast<int>(d) + 1, s);
    for (Eigen::Index d = 0; d < horizon; ++d) z[d] = standard_normal(rng);
    const VectorXd g = gain * resid + factor * z;
    for (Eigen::Index d = 0; d < horizon; ++d) {
      const double latent = g[d] + prior.at(static_cast<int>(t + d) + 1, s);
      const double y = latent + std::sqrt(std::max(noise, latent)) * standard_normal(rng);
      out(static_cast<Eigen::Index>(s), d) = std::max(y, 0.0);
    }
  }
  return ForecastDistribution::from_samples(static_cast<int>(t), std::move(out));
}

MatrixXd default_mobility(const HospitalSeries& series, int days) {
  if (days < 0) throw InvalidArgument("horizon must be nonnegative");
  if (series.mobility.rows() < 7) throw InvalidArgument("default mobility needs at least 7 observed days");
  const Eigen::RowVectorXd mean = series.mobility.bottomRows(7).colwise().mean();
  return mean.replicate(days, 1);
}

}  // namespace icu::hgpcp
