#include <algorithm>
#include <cmath>
#include <numeric>

#include "../json_eigen.hpp"
#include "icuplan/errors.hpp"
#include "icuplan/rng.hpp"
#include "stages.hpp"

namespace icu::risk {
namespace {

using detail::json_matrix;
using detail::json_vector;
using detail::matrix_json;
using detail::vector_json;

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

Matrix fill_with(const Matrix& x, const Vector& values) {
  Matrix out = x;
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      if (std::isnan(out(i, j))) out(i, j) = values[j];
  return out;
}

class MedianImputer final : public Imputer {
 public:
  void fit(const Matrix& x) override {
    medians_.resize(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      std::vector<double> col;
      for (Eigen::Index i = 0; i < x.rows(); ++i)
        if (!std::isnan(x(i, j))) col.push_back(x(i, j));
      medians_[j] = median_of(std::move(col));
    }
  }
  Matrix transform(const Matrix& x) const override { return fill_with(x, medians_); }
  nlohmann::json save() const override { return {{"name", "median"}, {"medians", vector_json(medians_)}}; }
  void load(const nlohmann::json& j) { medians_ = json_vector(j.at("medians")); }

 private:
  Vector medians_;
};

// Chained equations: start from column means, then for a number of rounds
// regress each incomplete column on all others (ridge) and refill its
// missing cells from the prediction.
class IterativeImputer final : public Imputer {
 public:
  IterativeImputer(int rounds, double ridge) : rounds_(rounds), ridge_(ridge) {}

  void fit(const Matrix& x) override {
    const ColumnStats stats = ColumnStats::of(x);
    means_ = stats.mean;
    targets_.clear();
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      if (x.col(j).array().isNaN().any() && (x.col(j).array() == x.col(j).array()).any()) targets_.push_back(j);
    models_.assign(static_cast<std::size_t>(rounds_), Matrix::Zero(x.cols(), static_cast<Eigen::Index>(targets_.size())));
    Matrix cur = fill_with(x, means_);
    for (int r = 0; r < rounds_; ++r) {
      for (std::size_t t = 0; t < targets_.size(); ++t) {
        const Eigen::Index j = targets_[t];
        std::vector<Eigen::Index> obs;
        for (Eigen::Index i = 0; i < x.rows(); ++i)
          if (!std::isnan(x(i, j))) obs.push_back(i);
        Matrix a(static_cast<Eigen::Index>(obs.size()), x.cols());
        Vector b(static_cast<Eigen::Index>(obs.size()));
        for (std::size_t k = 0; k < obs.size(); ++k) {
          a.row(static_cast<Eigen::Index>(k)) = cur.row(obs[k]);
          a(static_cast<Eigen::Index>(k), j) = 1.0;  // the target's own slot carries the intercept
          b[static_cast<Eigen::Index>(k)] = x(obs[k], j);
        }
        Matrix gram = a.transpose() * a;
        for (Eigen::Index c = 0; c < gram.rows(); ++c)
          if (c != j) gram(c, c) += ridge_ * static_cast<double>(obs.size());
        Vector w = gram.ldlt().solve(a.transpose() * b);
        if (!w.allFinite()) w.setZero(), w[j] = means_[j];
        models_[static_cast<std::size_t>(r)].col(static_cast<Eigen::Index>(t)).head(x.cols()) = w;
        apply_column(x, cur, j, w);
      }
    }
  }

  Matrix transform(const Matrix& x) const override {
    Matrix cur = fill_with(x, means_);
    for (int r = 0; r < rounds_; ++r)
      for (std::size_t t = 0; t < targets_.size(); ++t)
        apply_column(x, cur, targets_[t], models_[static_cast<std::size_t>(r)].col(static_cast<Eigen::Index>(t)).head(x.cols()));
    return cur;
  }

  nlohmann::json save() const override {
    nlohmann::json models = nlohmann::json::array();
    for (const auto& m : models_) models.push_back(matrix_json(m));
    return {{"name", "iterative"}, {"rounds", rounds_}, {"ridge", ridge_}, {"means", vector_json(means_)},
            {"targets", targets_}, {"models", models}};
  }
  void load(const nlohmann::json& j) {
    means_ = json_vector(j.at("means"));
    targets_ = j.at("targets").get<std::vector<Eigen::Index>>();
    models_.clear();
    for (const auto& m : j.at("models")) models_.push_back(json_matrix(m));
  }

 private:
  static void apply_column(const Matrix& raw, Matrix& cur, Eigen::Index j, const Vector& w) {
    for (Eigen::Index i = 0; i < raw.rows(); ++i) {
      if (!std::isnan(raw(i, j))) continue;
      double v = w[j];
      for (Eigen::Index c = 0; c < raw.cols(); ++c)
        if (c != j) v += w[c] * cur(i, c);
      cur(i, j) = v;
    }
  }

  int rounds_;
  double ridge_;
  Vector means_;
  std::vector<Eigen::Index> targets_;
  std::vector<Matrix> models_;  // per round: cols x targets
};

// Nearest-neighbour imputation over a fixed reference subsample, with
// distances on standardized coordinates observed in both rows.
class KnnImputer final : public Imputer {
 public:
  KnnImputer(int k, std::uint64_t seed) : k_(k), seed_(seed) {}

  void fit(const Matrix& x) override {
    stats_ = ColumnStats::of(x);
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(x.rows()));
    std::iota(idx.begin(), idx.end(), 0);
    if (idx.size() > kMaxReference) {
      Rng rng = make_rng(seed_, "knn-reference");
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(kMaxReference);
      std::sort(idx.begin(), idx.end());
    }
    reference_.resize(static_cast<Eigen::Index>(idx.size()), x.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) reference_.row(static_cast<Eigen::Index>(r)) = x.row(idx[r]);
  }

  Matrix transform(const Matrix& x) const override {
    Matrix out = x;
    const Eigen::Index d = x.cols(), m = reference_.rows();
    std::vector<std::pair<double, Eigen::Index>> dist(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      if (!x.row(i).array().isNaN().any()) continue;
      for (Eigen::Index r = 0; r < m; ++r) {
        double s = 0;
        int shared = 0;
        for (Eigen::Index c = 0; c < d; ++c) {
          const double a = x(i, c), b = reference_(r, c);
          if (std::isnan(a) || std::isnan(b)) continue;
          const double z = (a - b) / stats_.scale[c];
          s += z * z;
          ++shared;
        }
        dist[static_cast<std::size_t>(r)] = {shared ? s * static_cast<double>(d) / shared : HUGE_VAL, r};
      }
      std::sort(dist.begin(), dist.end());
      for (Eigen::Index c = 0; c < d; ++c) {
        if (!std::isnan(x(i, c))) continue;
        double sum = 0;
        int found = 0;
        for (const auto& [dd, r] : dist) {
          if (found == k_) break;
          if (std::isnan(reference_(r, c))) continue;
          sum += reference_(r, c);
          ++found;
        }
        out(i, c) = found ? sum / found : stats_.mean[c];
      }
    }
    return out;
  }

  nlohmann::json save() const override {
    return {{"name", "knn"}, {"k", k_}, {"seed", seed_}, {"mean", vector_json(stats_.mean)},
            {"scale", vector_json(stats_.scale)}, {"reference", matrix_json(nan_to_sentinel(reference_))}};
  }
  void load(const nlohmann::json& j) {
    stats_.mean = json_vector(j.at("mean"));
    stats_.scale = json_vector(j.at("scale"));
    reference_ = sentinel_to_nan(json_matrix(j.at("reference")));
  }

 private:
  // JSON has no NaN; missing reference cells are stored as a sentinel.
  static constexpr double kSentinel = -1.7976931348623157e308;
  static Matrix nan_to_sentinel(Matrix m) {
    for (Eigen::Index i = 0; i < m.size(); ++i)
      if (std::isnan(m.data()[i])) m.data()[i] = kSentinel;
    return m;
  }
  static Matrix sentinel_to_nan(Matrix m) {
    for (Eigen::Index i = 0; i < m.size(); ++i)
      if (m.data()[i] == kSentinel) m.data()[i] = std::nan("");
    return m;
  }

  static constexpr std::size_t kMaxReference = 1000;
  int k_;
  std::uint64_t seed_;
  ColumnStats stats_;
  Matrix reference_;
};

}  // namespace

ColumnStats ColumnStats::of(const Matrix& x) {
  ColumnStats s;
  s.mean = Vector::Zero(x.cols());
  s.scale = Vector::Ones(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    double sum = 0, sq = 0;
    long n = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      if (!std::isnan(x(i, j))) sum += x(i, j), ++n;
    if (n == 0) continue;
    s.mean[j] = sum / static_cast<double>(n);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      if (!std::isnan(x(i, j))) sq += (x(i, j) - s.mean[j]) * (x(i, j) - s.mean[j]);
    const double sd = std::sqrt(sq / static_cast<double>(n));
    if (sd > 1e-12) s.scale[j] = sd;
  }
  return s;
}

std::unique_ptr<Imputer> make_imputer(const pipeline::StageChoice& c, std::uint64_t seed) {
  if (c.name == "median") return std::make_unique<MedianImputer>();
  if (c.name == "iterative")
    return std::make_unique<IterativeImputer>(static_cast<int>(c.params.at("rounds")), c.params.at("ridge"));
  if (c.name == "knn") return std::make_unique<KnnImputer>(static_cast<int>(c.params.at("k")), seed);
  throw InvalidArgument("unknown imputer '" + c.name + "'");
}

std::unique_ptr<Imputer> load_imputer(const nlohmann::json& j) {
  const auto name = j.at("name").get<std::string>();
  if (name == "median") {
    auto m = std::make_unique<MedianImputer>();
    m->load(j);
    return m;
  }
  if (name == "iterative") {
    auto m = std::make_unique<IterativeImputer>(j.at("rounds").get<int>(), j.at("ridge").get<double>());
    m->load(j);
    return m;
  }
  if (name == "knn") {
    auto m = std::make_unique<KnnImputer>(j.at("k").get<int>(), j.at("seed").get<std::uint64_t>());
    m->load(j);
    return m;
  }
  throw InvalidArgument("unknown imputer '" + name + "'");
}

}  // namespace icu::risk
