#pragma once

// Discrete-time hazard models built from per-day pipelines.
//
// For outcome o and day tau the training slice holds every patient still
// observed on tau (censor_day >= tau) with no o-event before tau; the label
// says whether the event happened on tau itself. One pipeline per day is
// trained on that slice, and its calibrated probability is the hazard.

#include <Eigen/Dense>
#include <functional>
#include <json.hpp>
#include <memory>
#include <vector>

#include "icuplan/data.hpp"
#include "icuplan/pipeline_config.hpp"

namespace icu::risk {

struct Slice {
  std::vector<std::size_t> rows;  // indices into the patient list
  std::vector<int> labels;
};

Slice derive_slice(const std::vector<PatientRecord>& patients, Outcome outcome, int tau);
Slice derive_slice(const std::vector<PatientRecord>& patients, std::string_view outcome, int tau);

// Encoded design matrix of the selected patients, or of all of them.
Eigen::MatrixXd design_matrix(const FeatureSchema& schema, const std::vector<PatientRecord>& patients,
                              const std::vector<std::size_t>& rows);
Eigen::MatrixXd design_matrix(const FeatureSchema& schema, const std::vector<PatientRecord>& patients);
Eigen::MatrixXd select_rows(const Eigen::MatrixXd& x, const std::vector<std::size_t>& rows);

class Imputer;
class FeatureProcessor;
class Classifier;
class Calibrator;

class FittedPipeline {
 public:
  FittedPipeline();
  ~FittedPipeline();
  FittedPipeline(FittedPipeline&&) noexcept;
  FittedPipeline& operator=(FittedPipeline&&) noexcept;

  // Predictor that always returns `rate`; used when a slice cannot be fitted.
  static FittedPipeline constant(double rate);

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;
  Eigen::VectorXd predict_uncalibrated(const Eigen::MatrixXd& x) const;
  bool is_constant() const noexcept { return constant_; }
  double constant_rate() const noexcept { return rate_; }
  const pipeline::PipelineConfig& config() const noexcept { return config_; }

  nlohmann::json to_json() const;
  static FittedPipeline from_json(const nlohmann::json& j);

  friend FittedPipeline fit_pipeline(const pipeline::PipelineConfig&, const Eigen::MatrixXd&, const std::vector<int>&,
                                     std::uint64_t);

 private:
  pipeline::PipelineConfig config_;
  bool constant_ = false;
  double rate_ = 0;
  std::unique_ptr<Imputer> imputer_;
  std::unique_ptr<FeatureProcessor> features_;
  std::unique_ptr<Classifier> classifier_;
  std::unique_ptr<Calibrator> calibrator_;
};

inline constexpr std::size_t kMinSliceRows = 20;

// Fits imputer -> feature processor -> classifier -> calibrator in order.
// The calibrator is fitted on 3-fold out-of-fold classifier scores. Throws
// DegenerateSlice when the slice has fewer than 20 rows or one class, and
// InvalidArgument for configs outside the registry.
FittedPipeline fit_pipeline(const pipeline::PipelineConfig& config, const Eigen::MatrixXd& x,
                            const std::vector<int>& y, std::uint64_t seed);

// Stratified, seeded fold ids in [0, folds).
std::vector<int> stratified_folds(const std::vector<int>& y, int folds, std::uint64_t seed);

using Predictor = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;
using Fitter = std::function<Predictor(const Eigen::MatrixXd&, const std::vector<int>&)>;

struct CvResult {
  double mean_loss = 0;
  std::vector<double> fold_losses;  // NaN for skipped folds
  std::vector<int> skipped_folds;
};

// Mean held-out Brier score over folds. A fold is skipped (and listed) when
// its fitter throws DegenerateSlice; if every fold is skipped the
// DegenerateSlice propagates.
CvResult cross_validate(const Fitter& fitter, const Eigen::MatrixXd& x, const std::vector<int>& y, int folds,
                        std::uint64_t seed);
CvResult cross_validate(const pipeline::PipelineConfig& config, const Eigen::MatrixXd& x, const std::vector<int>& y,
                        int folds, std::uint64_t seed);
CvResult cross_validate(const pipeline::PipelineConfig& config, const std::vector<PatientRecord>& patients,
                        const FeatureSchema& schema, Outcome outcome, int tau, int folds, std::uint64_t seed);

struct HazardModel {
  Outcome outcome = Outcome::icu;
  int horizon = 30;
  FeatureSchema schema;
  std::vector<FittedPipeline> per_day;  // index tau-1
  std::vector<bool> degenerate;         // slice fell back to its event rate

  // Hazard for one raw feature vector (NaN = missing).
  std::vector<double> predict_hazard(const std::vector<double>& features) const;
  // n x horizon hazards for an encoded design matrix.
  Eigen::MatrixXd predict_hazards(const Eigen::MatrixXd& encoded) const;

  nlohmann::json to_json() const;
  static HazardModel from_json(const nlohmann::json& j);
};

struct HazardFitOptions {
  int horizon = 30;
  std::uint64_t seed = 0;
  // One config for every day, or one per day.
  std::vector<pipeline::PipelineConfig> configs{pipeline::default_risk_config()};
};

HazardModel fit_hazard_model(const std::vector<PatientRecord>& patients, const FeatureSchema& schema, Outcome outcome,
                             const HazardFitOptions& options);

// F(d) = 1 - prod_{tau <= d} (1 - h(tau)).
std::vector<double> event_curve(const std::vector<double>& hazards);

}  // namespace icu::risk
