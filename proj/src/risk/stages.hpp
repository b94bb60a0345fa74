#pragma once

#include <Eigen/Dense>
#include <json.hpp>
#include <memory>
#include <vector>

#include "icuplan/pipeline_config.hpp"

namespace icu::risk {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class Imputer {
 public:
  virtual ~Imputer() = default;
  virtual void fit(const Matrix& x) = 0;
  // Output has no NaN entries.
  virtual Matrix transform(const Matrix& x) const = 0;
  virtual nlohmann::json save() const = 0;
};

class FeatureProcessor {
 public:
  virtual ~FeatureProcessor() = default;
  virtual void fit(const Matrix& x, const std::vector<int>& y) = 0;
  virtual Matrix transform(const Matrix& x) const = 0;
  virtual nlohmann::json save() const = 0;
};

class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual void fit(const Matrix& x, const std::vector<int>& y) = 0;
  // Probabilities in [0, 1].
  virtual Vector predict(const Matrix& x) const = 0;
  virtual nlohmann::json save() const = 0;
};

class Calibrator {
 public:
  virtual ~Calibrator() = default;
  virtual void fit(const Vector& scores, const std::vector<int>& y) = 0;
  // Nondecreasing in the score; strictly increasing for sigmoid and isotonic.
  virtual Vector apply(const Vector& scores) const = 0;
  virtual nlohmann::json save() const = 0;
};

std::unique_ptr<Imputer> make_imputer(const pipeline::StageChoice& choice, std::uint64_t seed);
std::unique_ptr<FeatureProcessor> make_feature_processor(const pipeline::StageChoice& choice);
std::unique_ptr<Classifier> make_classifier(const pipeline::StageChoice& choice, std::uint64_t seed);
std::unique_ptr<Calibrator> make_calibrator(const pipeline::StageChoice& choice);

std::unique_ptr<Imputer> load_imputer(const nlohmann::json& j);
std::unique_ptr<FeatureProcessor> load_feature_processor(const nlohmann::json& j);
std::unique_ptr<Classifier> load_classifier(const nlohmann::json& j);
std::unique_ptr<Calibrator> load_calibrator(const nlohmann::json& j);

// Column statistics ignoring NaN; an all-missing column has mean 0 and an
// empty-column scale of 1.
struct ColumnStats {
  Vector mean, scale;
  static ColumnStats of(const Matrix& x);
};

// Elastic-net penalized logistic regression on standardized inputs, fitted
// by iteratively reweighted least squares with coordinate descent.
struct LogisticFit {
  double intercept = 0;
  Vector weights;  // in standardized units
  ColumnStats stats;

  static LogisticFit fit(const Matrix& x, const std::vector<int>& y, double lambda, double l1_ratio);
  Vector linear_predictor(const Matrix& x) const;
};

}  // namespace icu::risk
