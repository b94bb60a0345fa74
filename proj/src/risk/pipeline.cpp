#include <algorithm>
#include <cmath>
#include <numeric>

#include "icuplan/errors.hpp"
#include "icuplan/metrics.hpp"
#include "icuplan/risk.hpp"
#include "icuplan/rng.hpp"
#include "stages.hpp"

namespace icu::risk {

Slice derive_slice(const std::vector<PatientRecord>& patients, Outcome outcome, int tau) {
  if (tau < 1) throw InvalidArgument("slice day must be at least 1");
  Slice s;
  for (std::size_t i = 0; i < patients.size(); ++i) {
    const auto& p = patients[i];
    const auto& e = p.event(outcome);
    if (p.censor_day < tau) continue;
    if (e && *e < tau) continue;
    s.rows.push_back(i);
    s.labels.push_back(e && *e == tau ? 1 : 0);
  }
  return s;
}

Slice derive_slice(const std::vector<PatientRecord>& patients, std::string_view outcome, int tau) {
  return derive_slice(patients, parse_outcome(outcome), tau);
}

Eigen::MatrixXd design_matrix(const FeatureSchema& schema, const std::vector<PatientRecord>& patients,
                              const std::vector<std::size_t>& rows) {
  std::vector<const std::vector<double>*> raw;
  for (auto r : rows) raw.push_back(&patients.at(r).features);
  return schema.encode_rows(raw);
}

Eigen::MatrixXd design_matrix(const FeatureSchema& schema, const std::vector<PatientRecord>& patients) {
  std::vector<const std::vector<double>*> raw;
  for (const auto& p : patients) raw.push_back(&p.features);
  return schema.encode_rows(raw);
}

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& x, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = x.row(static_cast<Eigen::Index>(rows[k]));
  return out;
}

FittedPipeline::FittedPipeline() = default;
FittedPipeline::~FittedPipeline() = default;
FittedPipeline::FittedPipeline(FittedPipeline&&) noexcept = default;
FittedPipeline& FittedPipeline::operator=(FittedPipeline&&) noexcept = default;

FittedPipeline FittedPipeline::constant(double rate) {
  if (!(rate >= 0 && rate <= 1)) throw InvalidArgument("constant rate must lie in [0, 1]");
  FittedPipeline p;
  p.constant_ = true;
  p.rate_ = rate;
  return p;
}

Eigen::VectorXd FittedPipeline::predict_uncalibrated(const Eigen::MatrixXd& x) const {
  if (constant_) return Eigen::VectorXd::Constant(x.rows(), rate_);
  if (!classifier_) throw InvalidArgument("pipeline is not fitted");
  return classifier_->predict(features_->transform(imputer_->transform(x)));
}

Eigen::VectorXd FittedPipeline::predict(const Eigen::MatrixXd& x) const {
  if (constant_) return Eigen::VectorXd::Constant(x.rows(), rate_);
  return calibrator_->apply(predict_uncalibrated(x)).cwiseMax(0.0).cwiseMin(1.0);
}

nlohmann::json FittedPipeline::to_json() const {
  if (constant_) return {{"constant", true}, {"rate", rate_}};
  return {{"constant", false},
          {"config", pipeline::to_json(config_)},
          {"imputer", imputer_->save()},
          {"feature_processor", features_->save()},
          {"classifier", classifier_->save()},
          {"calibrator", calibrator_->save()}};
}

FittedPipeline FittedPipeline::from_json(const nlohmann::json& j) {
  try {
    if (j.at("constant").get<bool>()) return constant(j.at("rate").get<double>());
    FittedPipeline p;
    p.config_ = pipeline::config_from_json(j.at("config"));
    p.imputer_ = load_imputer(j.at("imputer"));
    p.features_ = load_feature_processor(j.at("feature_processor"));
    p.classifier_ = load_classifier(j.at("classifier"));
    p.calibrator_ = load_calibrator(j.at("calibrator"));
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed pipeline artifact: ") + e.what());
  }
}

std::vector<int> stratified_folds(const std::vector<int>& y, int folds, std::uint64_t seed) {
  if (folds < 2) throw InvalidArgument("need at least two folds");
  std::vector<int> fold(y.size());
  Rng rng = make_rng(seed, "folds");
  int next = 0;
  for (int cls : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < y.size(); ++i)
      if (y[i] == cls) idx.push_back(i);
    std::shuffle(idx.begin(), idx.end(), rng);
    // Continue the round-robin across classes so fold sizes stay balanced.
    for (auto i : idx) fold[i] = next++ % folds;
  }
  return fold;
}

FittedPipeline fit_pipeline(const pipeline::PipelineConfig& config, const Eigen::MatrixXd& x, const std::vector<int>& y,
                            std::uint64_t seed) {
  pipeline::reduced_registry().check(config);
  if (static_cast<std::size_t>(x.rows()) != y.size()) throw InvalidArgument("features and labels differ in length");
  const auto positives = std::count(y.begin(), y.end(), 1);
  if (y.size() < kMinSliceRows || positives == 0 || positives == static_cast<long>(y.size()))
    throw DegenerateSlice("slice has " + std::to_string(y.size()) + " rows and " + std::to_string(positives) + " events");

  FittedPipeline p;
  p.config_ = config;
  p.imputer_ = make_imputer(config.imputer(), derive_seed(seed, "imputer"));
  p.imputer_->fit(x);
  const Eigen::MatrixXd x1 = p.imputer_->transform(x);
  p.features_ = make_feature_processor(config.feature_processor());
  p.features_->fit(x1, y);
  const Eigen::MatrixXd x2 = p.features_->transform(x1);

  p.calibrator_ = make_calibrator(config.calibrator());
  if (config.calibrator().name != "none") {
    // Cross-fitted scores so the calibrator sees out-of-sample behaviour.
    constexpr int kCalibrationFolds = 3;
    const auto fold = stratified_folds(y, kCalibrationFolds, derive_seed(seed, "calibration"));
    Eigen::VectorXd oof(x2.rows());
    for (int f = 0; f < kCalibrationFolds; ++f) {
      std::vector<std::size_t> train, test;
      std::vector<int> ytrain;
      for (std::size_t i = 0; i < y.size(); ++i) {
        if (fold[i] == f) {
          test.push_back(i);
        } else {
          train.push_back(i);
          ytrain.push_back(y[i]);
        }
      }
      auto clf = make_classifier(config.classifier(), derive_seed(seed, static_cast<std::uint64_t>(f) + 1));
      clf->fit(select_rows(x2, train), ytrain);
      const Eigen::VectorXd s = clf->predict(select_rows(x2, test));
      for (std::size_t k = 0; k < test.size(); ++k) oof[static_cast<Eigen::Index>(test[k])] = s[static_cast<Eigen::Index>(k)];
    }
    p.calibrator_->fit(oof, y);
  }
  p.classifier_ = make_classifier(config.classifier(), derive_seed(seed, "classifier"));
  p.classifier_->fit(x2, y);
  return p;
}

CvResult cross_validate(const Fitter& fitter, const Eigen::MatrixXd& x, const std::vector<int>& y, int folds,
                        std::uint64_t seed) {
  if (static_cast<std::size_t>(x.rows()) != y.size()) throw InvalidArgument("features and labels differ in length");
  const auto fold = stratified_folds(y, folds, seed);
  CvResult r;
  double total = 0;
  int used = 0;
  std::string last_error;
  for (int f = 0; f < folds; ++f) {
    std::vector<std::size_t> train, test;
    std::vector<int> ytrain, ytest;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (fold[i] == f) {
        test.push_back(i);
        ytest.push_back(y[i]);
      } else {
        train.push_back(i);
        ytrain.push_back(y[i]);
      }
    }
    if (test.empty()) {
      r.fold_losses.push_back(std::nan(""));
      r.skipped_folds.push_back(f);
      continue;
    }
    try {
      const Predictor predict = fitter(select_rows(x, train), ytrain);
      const Eigen::VectorXd p = predict(select_rows(x, test));
      const double loss = metrics::brier(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())), ytest);
      r.fold_losses.push_back(loss);
      total += loss;
      ++used;
    } catch (const DegenerateSlice& e) {
      r.fold_losses.push_back(std::nan(""));
      r.skipped_folds.push_back(f);
      last_error = e.what();
    }
  }
  if (used == 0) throw DegenerateSlice("every fold was skipped: " + last_error);
  r.mean_loss = total / used;
  return r;
}

CvResult cross_validate(const pipeline::PipelineConfig& config, const Eigen::MatrixXd& x, const std::vector<int>& y,
                        int folds, std::uint64_t seed) {
  pipeline::reduced_registry().check(config);
  auto fitter = [&](const Eigen::MatrixXd& xt, const std::vector<int>& yt) -> Predictor {
    auto fitted = std::make_shared<FittedPipeline>(fit_pipeline(config, xt, yt, seed));
    return [fitted](const Eigen::MatrixXd& xs) { return fitted->predict(xs); };
  };
  return cross_validate(fitter, x, y, folds, seed);
}

CvResult cross_validate(const pipeline::PipelineConfig& config, const std::vector<PatientRecord>& patients,
                        const FeatureSchema& schema, Outcome outcome, int tau, int folds, std::uint64_t seed) {
  const Slice s = derive_slice(patients, outcome, tau);
  return cross_validate(config, design_matrix(schema, patients, s.rows), s.labels, folds, seed);
}

}  // namespace icu::risk
