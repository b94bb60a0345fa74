#pragma once

// Pipeline configurations and the space they are drawn from. A pipeline is
// one choice per stage, each with its own hyperparameters. The risk model
// uses four stages (imputer, feature processor, classifier, calibrator);
// search works on any staged space.

#include <json.hpp>
#include <map>
#include <string>
#include <vector>

namespace icu::pipeline {

struct ParamSpec {
  std::string name;
  double lo = 0, hi = 1;
  bool integer = false;
  double default_value = 0;
};

struct ChoiceSpec {
  std::string name;
  std::vector<ParamSpec> params;
};

struct StageSpec {
  std::string name;
  std::vector<ChoiceSpec> choices;
};

struct StageChoice {
  std::string name;
  std::map<std::string, double> params;
  bool operator==(const StageChoice&) const = default;
};

struct PipelineConfig {
  std::vector<StageChoice> stages;

  const StageChoice& imputer() const { return stages.at(0); }
  const StageChoice& feature_processor() const { return stages.at(1); }
  const StageChoice& classifier() const { return stages.at(2); }
  const StageChoice& calibrator() const { return stages.at(3); }
  double param(std::size_t stage, const std::string& name) const;
  std::string describe() const;
  bool operator==(const PipelineConfig&) const = default;
};

struct SearchSpace {
  std::vector<StageSpec> stages;

  void validate() const;
  // Number of categorical skeletons (product of per-stage choice counts).
  std::size_t skeleton_count() const;
  // One-hot width per stage plus one slot per hyperparameter of every choice.
  std::size_t encoded_size() const;
  std::size_t choice_index(std::size_t stage, const std::string& name) const;
  // Throws InvalidArgument when the config is not a member of the space.
  void check(const PipelineConfig& config) const;
  // Skeleton with every hyperparameter at its default.
  PipelineConfig skeleton(const std::vector<std::size_t>& choice_indices) const;
  std::vector<PipelineConfig> enumerate_skeletons() const;
};

// Four-stage registry the risk pipelines implement.
SearchSpace reduced_registry();
// Names-only registry of the full published design space (four imputers,
// four feature processors, four classifiers, three calibrators).
SearchSpace reference_registry();

PipelineConfig default_risk_config();

nlohmann::json to_json(const PipelineConfig& config);
PipelineConfig config_from_json(const nlohmann::json& j);

}  // namespace icu::pipeline
