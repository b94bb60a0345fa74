#pragma once

// Bayesian optimization over pipeline configurations: a GP surrogate on
// config encodings, expected improvement over a random candidate pool.

#include <Eigen/Dense>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "icuplan/pipeline_config.hpp"
#include "icuplan/rng.hpp"

namespace icu::search {

using pipeline::PipelineConfig;
using pipeline::SearchSpace;

// One-hot block per stage followed by every choice's hyperparameters scaled
// to [0, 1]; hyperparameters of unselected choices are 0.
Eigen::VectorXd encode(const PipelineConfig& config, const SearchSpace& space);

PipelineConfig sample_config(const SearchSpace& space, Rng& rng);

// For minimization: E[max(best - f, 0)] with f ~ N(mean, sd^2).
double expected_improvement(double mean, double sd, double best);

using Objective = std::function<double(const PipelineConfig&)>;

struct Evaluation {
  PipelineConfig config;
  double loss = 0;  // +inf when the objective failed
  std::string timestamp;
  std::string error;
};

struct SearchResult {
  PipelineConfig best_config;
  double best_loss = 0;
  std::vector<Evaluation> history;
  std::vector<double> best_trace;  // best loss after each evaluation
};

struct SearchOptions {
  int budget = 60;
  int init_count = 10;
  int pool_size = 512;
  std::uint64_t seed = 0;
};

// Stops early only when every configuration of a finite space has been
// evaluated.
SearchResult search(const SearchSpace& space, const Objective& objective, const SearchOptions& options);
SearchResult random_search(const SearchSpace& space, const Objective& objective, int budget, std::uint64_t seed);

// One JSON object per line: {"config", "loss", "timestamp"}.
void export_history(const SearchResult& result, std::ostream& out);

}  // namespace icu::search
