#include <algorithm>
#include <cmath>
#include <numeric>

#include "../json_eigen.hpp"
#include "icuplan/errors.hpp"
#include "icuplan/numeric.hpp"
#include "stages.hpp"

namespace icu::risk {
namespace {

using detail::json_matrix;
using detail::json_vector;
using detail::matrix_json;
using detail::vector_json;

Matrix standardize(const Matrix& x, const ColumnStats& s) {
  return (x.rowwise() - s.mean.transpose()).array().rowwise() / s.scale.transpose().array();
}

class IdentityProcessor final : public FeatureProcessor {
 public:
  void fit(const Matrix&, const std::vector<int>&) override {}
  Matrix transform(const Matrix& x) const override { return x; }
  nlohmann::json save() const override { return {{"name", "identity"}}; }
};

class PcaProcessor final : public FeatureProcessor {
 public:
  explicit PcaProcessor(double variance_kept) : variance_kept_(variance_kept) {}

  void fit(const Matrix& x, const std::vector<int>&) override {
    stats_ = ColumnStats::of(x);
    const Matrix z = standardize(x, stats_);
    const Matrix cov = z.transpose() * z / std::max<double>(1.0, static_cast<double>(x.rows()));
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
    // Eigen sorts ascending; take the leading components.
    const Vector values = eig.eigenvalues().reverse();
    const Matrix vectors = eig.eigenvectors().rowwise().reverse();
    const double total = std::max(values.sum(), 1e-300);
    Eigen::Index keep = 1;
    double acc = values[0];
    while (keep < values.size() && acc < variance_kept_ * total) acc += values[keep++];
    components_ = vectors.leftCols(keep);
  }
  Matrix transform(const Matrix& x) const override { return standardize(x, stats_) * components_; }
  nlohmann::json save() const override {
    return {{"name", "pca"}, {"variance_kept", variance_kept_}, {"mean", vector_json(stats_.mean)},
            {"scale", vector_json(stats_.scale)}, {"components", matrix_json(components_)}};
  }
  void load(const nlohmann::json& j) {
    stats_.mean = json_vector(j.at("mean"));
    stats_.scale = json_vector(j.at("scale"));
    components_ = json_matrix(j.at("components"));
  }

 private:
  double variance_kept_;
  ColumnStats stats_;
  Matrix components_;
};

// Recursive elimination: refit an elastic-net logistic model and drop the
// column with the smallest standardized weight until the target count.
class RfeProcessor final : public FeatureProcessor {
 public:
  explicit RfeProcessor(double keep_fraction) : keep_fraction_(keep_fraction) {}

  void fit(const Matrix& x, const std::vector<int>& y) override {
    const auto d = x.cols();
    const auto keep = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::lround(keep_fraction_ * static_cast<double>(d))));
    kept_.resize(static_cast<std::size_t>(d));
    std::iota(kept_.begin(), kept_.end(), 0);
    while (static_cast<Eigen::Index>(kept_.size()) > keep) {
      const LogisticFit fit = LogisticFit::fit(select(x), y, 1e-3, 0.5);
      std::size_t worst = 0;
      for (std::size_t k = 1; k < kept_.size(); ++k)
        if (std::abs(fit.weights[static_cast<Eigen::Index>(k)]) < std::abs(fit.weights[static_cast<Eigen::Index>(worst)])) worst = k;
      kept_.erase(kept_.begin() + static_cast<std::ptrdiff_t>(worst));
    }
  }
  Matrix transform(const Matrix& x) const override { return select(x); }
  nlohmann::json save() const override { return {{"name", "rfe"}, {"keep_fraction", keep_fraction_}, {"kept", kept_}}; }
  void load(const nlohmann::json& j) { kept_ = j.at("kept").get<std::vector<Eigen::Index>>(); }

 private:
  Matrix select(const Matrix& x) const {
    Matrix out(x.rows(), static_cast<Eigen::Index>(kept_.size()));
    for (std::size_t k = 0; k < kept_.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = x.col(kept_[k]);
    return out;
  }

  double keep_fraction_;
  std::vector<Eigen::Index> kept_;
};

double soft_threshold(double z, double t) { return z > t ? z - t : (z < -t ? z + t : 0.0); }

}  // namespace

LogisticFit LogisticFit::fit(const Matrix& x, const std::vector<int>& y, double lambda, double l1_ratio) {
  const Eigen::Index n = x.rows(), d = x.cols();
  if (n == 0 || static_cast<Eigen::Index>(y.size()) != n) throw InvalidArgument("logistic fit needs matching rows");
  LogisticFit f;
  f.stats = ColumnStats::of(x);
  const Matrix z = standardize(x, f.stats);
  Vector yv(n);
  for (Eigen::Index i = 0; i < n; ++i) yv[i] = y[static_cast<std::size_t>(i)];
  const double rate = std::clamp(yv.mean(), 1e-6, 1 - 1e-6);
  f.intercept = logit(rate);
  f.weights = Vector::Zero(d);
  const double l1 = lambda * l1_ratio, l2 = lambda * (1 - l1_ratio);
  Vector eta(n), w(n), work(n), resid(n);
  for (int outer = 0; outer < 50; ++outer) {
    eta = (z * f.weights).array() + f.intercept;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = sigmoid(eta[i]);
      w[i] = std::max(p * (1 - p), 1e-5);
      work[i] = eta[i] + (yv[i] - p) / w[i];
    }
    const double b0_old = f.intercept;
    const Vector w_old = f.weights;
    resid = work - eta;
    const double wsum = w.sum();
    Vector curvature(d);
    for (Eigen::Index j = 0; j < d; ++j)
      curvature[j] = (w.array() * z.col(j).array().square()).sum() / static_cast<double>(n);
    for (int sweep = 0; sweep < 100; ++sweep) {
      double max_step = 0;
      const double db0 = w.dot(resid) / wsum;
      f.intercept += db0;
      resid.array() -= db0;
      max_step = std::abs(db0);
      for (Eigen::Index j = 0; j < d; ++j) {
        const auto col = z.col(j);
        const double curv = curvature[j];
        const double grad = (w.array() * col.array() * resid.array()).sum() / static_cast<double>(n) + curv * f.weights[j];
        const double next = soft_threshold(grad, l1) / (curv + l2 + 1e-12);
        const double step = next - f.weights[j];
        if (step != 0.0) {
          resid -= step * col;
          f.weights[j] = next;
        }
        max_step = std::max(max_step, std::abs(step));
      }
      if (max_step < 1e-8) break;
    }
    const double change = std::max(std::abs(f.intercept - b0_old), (f.weights - w_old).cwiseAbs().maxCoeff() * (d > 0));
    if (!std::isfinite(change)) throw NumericalError("logistic fit diverged", outer);
    if (change < 1e-7) break;
  }
  return f;
}

Vector LogisticFit::linear_predictor(const Matrix& x) const {
  return (standardize(x, stats) * weights).array() + intercept;
}

std::unique_ptr<FeatureProcessor> make_feature_processor(const pipeline::StageChoice& c) {
  if (c.name == "identity") return std::make_unique<IdentityProcessor>();
  if (c.name == "pca") return std::make_unique<PcaProcessor>(c.params.at("variance_kept"));
  if (c.name == "rfe") return std::make_unique<RfeProcessor>(c.params.at("keep_fraction"));
  throw InvalidArgument("unknown feature processor '" + c.name + "'");
}

std::unique_ptr<FeatureProcessor> load_feature_processor(const nlohmann::json& j) {
  const auto name = j.at("name").get<std::string>();
  if (name == "identity") return std::make_unique<IdentityProcessor>();
  if (name == "pca") {
    auto p = std::make_unique<PcaProcessor>(j.at("variance_kept").get<double>());
    p->load(j);
    return p;
  }
  if (name == "rfe") {
    auto p = std::make_unique<RfeProcessor>(j.at("keep_fraction").get<double>());
    p->load(j);
    return p;
  }
  throw InvalidArgument("unknown feature processor '" + name + "'");
}

}  // namespace icu::risk
