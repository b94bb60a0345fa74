#include "icuplan/pipeline_config.hpp"

#include <cmath>
#include <sstream>

#include "icuplan/errors.hpp"

namespace icu::pipeline {

double PipelineConfig::param(std::size_t stage, const std::string& name) const {
  const auto& p = stages.at(stage).params;
  auto it = p.find(name);
  if (it == p.end()) throw InvalidArgument("stage '" + stages.at(stage).name + "' has no parameter '" + name + "'");
  return it->second;
}

std::string PipelineConfig::describe() const {
  std::ostringstream out;
  for (std::size_t s = 0; s < stages.size(); ++s) {
    if (s) out << " -> ";
    out << stages[s].name;
    if (!stages[s].params.empty()) {
      out << '(';
      bool first = true;
      for (const auto& [k, v] : stages[s].params) {
        out << (first ? "" : ", ") << k << '=' << v;
        first = false;
      }
      out << ')';
    }
  }
  return out.str();
}

void SearchSpace::validate() const {
  if (stages.empty()) throw InvalidArgument("search space has no stages");
  for (const auto& s : stages) {
    if (s.choices.empty()) throw InvalidArgument("stage '" + s.name + "' has no choices");
    for (const auto& c : s.choices)
      for (const auto& p : c.params)
        if (!(p.lo <= p.hi) || p.default_value < p.lo || p.default_value > p.hi)
          throw InvalidArgument("parameter '" + p.name + "' of '" + c.name + "' has an invalid range");
  }
}

std::size_t SearchSpace::skeleton_count() const {
  std::size_t n = 1;
  for (const auto& s : stages) n *= s.choices.size();
  return n;
}

std::size_t SearchSpace::encoded_size() const {
  std::size_t n = 0;
  for (const auto& s : stages) {
    n += s.choices.size();
    for (const auto& c : s.choices) n += c.params.size();
  }
  return n;
}

std::size_t SearchSpace::choice_index(std::size_t stage, const std::string& name) const {
  const auto& choices = stages.at(stage).choices;
  for (std::size_t i = 0; i < choices.size(); ++i)
    if (choices[i].name == name) return i;
  throw InvalidArgument("'" + name + "' is not a registered " + stages.at(stage).name);
}

void SearchSpace::check(const PipelineConfig& config) const {
  if (config.stages.size() != stages.size()) throw InvalidArgument("config has the wrong number of stages");
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const auto& spec = stages[s].choices[choice_index(s, config.stages[s].name)];
    if (config.stages[s].params.size() != spec.params.size())
      throw InvalidArgument("stage '" + spec.name + "' has unexpected parameters");
    for (const auto& p : spec.params) {
      auto it = config.stages[s].params.find(p.name);
      if (it == config.stages[s].params.end()) throw InvalidArgument("missing parameter '" + p.name + "'");
      const double v = it->second;
      if (!(v >= p.lo && v <= p.hi) || (p.integer && v != std::round(v)))
        throw InvalidArgument("parameter '" + p.name + "' outside its declared range");
    }
  }
}

PipelineConfig SearchSpace::skeleton(const std::vector<std::size_t>& idx) const {
  if (idx.size() != stages.size()) throw InvalidArgument("one choice index per stage required");
  PipelineConfig c;
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const auto& choice = stages[s].choices.at(idx[s]);
    StageChoice sc{choice.name, {}};
    for (const auto& p : choice.params) sc.params[p.name] = p.default_value;
    c.stages.push_back(std::move(sc));
  }
  return c;
}

std::vector<PipelineConfig> SearchSpace::enumerate_skeletons() const {
  std::vector<PipelineConfig> out;
  std::vector<std::size_t> idx(stages.size(), 0);
  for (std::size_t n = 0; n < skeleton_count(); ++n) {
    out.push_back(skeleton(idx));
    for (std::size_t s = stages.size(); s-- > 0;) {
      if (++idx[s] < stages[s].choices.size()) break;
      idx[s] = 0;
    }
  }
  return out;
}

SearchSpace reduced_registry() {
  SearchSpace s;
  s.stages = {
      {"imputer",
       {{"median", {}},
        {"iterative", {{"rounds", 1, 10, true, 5}, {"ridge", 1e-3, 10.0, false, 1.0}}},
        {"knn", {{"k", 1, 25, true, 5}}}}},
      {"feature_processor",
       {{"identity", {}},
        {"pca", {{"variance_kept", 0.5, 0.999, false, 0.95}}},
        {"rfe", {{"keep_fraction", 0.2, 1.0, false, 0.6}}}}},
      {"classifier",
       {{"elastic_net", {{"lambda", 1e-5, 0.1, false, 1e-3}, {"l1_ratio", 0.0, 1.0, false, 0.5}}},
        {"random_forest", {{"n_trees", 20, 200, true, 100}, {"max_depth", 2, 12, true, 8}, {"min_leaf", 1, 50, true, 10}}},
        {"gbt", {{"n_trees", 20, 300, true, 100}, {"learning_rate", 0.01, 0.3, false, 0.1}, {"max_depth", 1, 6, true, 3}}}}},
      {"calibrator", {{"sigmoid", {}}, {"isotonic", {}}, {"none", {}}}},
  };
  return s;
}

SearchSpace reference_registry() {
  auto names = [](std::initializer_list<const char*> ns) {
    std::vector<ChoiceSpec> out;
    for (const char* n : ns) out.push_back({n, {}});
    return out;
  };
  SearchSpace s;
  s.stages = {
      {"imputer", names({"median", "mice", "missforest", "gain"})},
      {"feature_processor", names({"none", "pca", "fast_ica", "recursive_elimination"})},
      {"classifier", names({"elastic_net", "random_forest", "xgboost", "mlp"})},
      {"calibrator", names({"isotonic", "bootstrap", "platt"})},
  };
  return s;
}

PipelineConfig default_risk_config() {
  const SearchSpace s = reduced_registry();
  return s.skeleton({0, 0, 0, 0});
}

nlohmann::json to_json(const PipelineConfig& config) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : config.stages) stages.push_back({{"name", s.name}, {"params", s.params}});
  return {{"stages", stages}};
}

PipelineConfig config_from_json(const nlohmann::json& j) {
  PipelineConfig c;
  try {
    for (const auto& s : j.at("stages"))
      c.stages.push_back({s.at("name").get<std::string>(), s.value("params", std::map<std::string, double>{})});
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed pipeline config: ") + e.what());
  }
  return c;
}

}  // namespace icu::pipeline
