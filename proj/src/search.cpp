#include "icuplan/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <set>

#include "icuplan/data.hpp"
#include "icuplan/errors.hpp"
#include "icuplan/gp.hpp"

namespace icu::search {
namespace {

using Key = std::vector<double>;

Key key_of(const Eigen::VectorXd& e) { return {e.data(), e.data() + e.size()}; }

bool param_free(const SearchSpace& space) {
  for (const auto& s : space.stages)
    for (const auto& c : s.choices)
      if (!c.params.empty()) return false;
  return true;
}

class Runner {
 public:
  Runner(const SearchSpace& space, const Objective& objective) : space_(space), objective_(objective) {}

  bool seen(const Key& k) const { return keys_.count(k) > 0; }

  void evaluate(const PipelineConfig& c) {
    Evaluation e{c, 0, utc_timestamp(), {}};
    try {
      e.loss = objective_(c);
      if (std::isnan(e.loss)) throw InvalidArgument("objective returned NaN");
    } catch (const std::exception& ex) {
      e.loss = std::numeric_limits<double>::infinity();
      e.error = ex.what();
    }
    const Eigen::VectorXd enc = encode(c, space_);
    keys_.insert(key_of(enc));
    encodings_.push_back(enc);
    if (result_.history.empty() || e.loss < result_.best_loss) {
      result_.best_loss = e.loss;
      result_.best_config = c;
    }
    result_.history.push_back(std::move(e));
    result_.best_trace.push_back(result_.best_loss);
  }

  // Uniform draw not evaluated yet; gives up after many collisions.
  bool draw_fresh(Rng& rng, PipelineConfig& out) const {
    for (int attempt = 0; attempt < 10000; ++attempt) {
      out = sample_config(space_, rng);
      if (!seen(key_of(encode(out, space_)))) return true;
    }
    return false;
  }

  std::vector<PipelineConfig> unevaluated_skeletons() const {
    std::vector<PipelineConfig> out;
    for (auto& c : space_.enumerate_skeletons())
      if (!seen(key_of(encode(c, space_)))) out.push_back(std::move(c));
    return out;
  }

  SearchResult& result() { return result_; }
  const std::vector<Eigen::VectorXd>& encodings() const { return encodings_; }

 private:
  const SearchSpace& space_;
  const Objective& objective_;
  std::set<Key> keys_;
  std::vector<Eigen::VectorXd> encodings_;
  SearchResult result_;
};

}  // namespace

Eigen::VectorXd encode(const PipelineConfig& config, const SearchSpace& space) {
  space.check(config);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(space.encoded_size()));
  Eigen::Index pos = 0;
  for (std::size_t s = 0; s < space.stages.size(); ++s) {
    const auto& stage = space.stages[s];
    const std::size_t chosen = space.choice_index(s, config.stages[s].name);
    e[pos + static_cast<Eigen::Index>(chosen)] = 1.0;
    pos += static_cast<Eigen::Index>(stage.choices.size());
    for (std::size_t c = 0; c < stage.choices.size(); ++c)
      for (const auto& p : stage.choices[c].params) {
        if (c == chosen && p.hi > p.lo) e[pos] = (config.stages[s].params.at(p.name) - p.lo) / (p.hi - p.lo);
        ++pos;
      }
  }
  return e;
}

PipelineConfig sample_config(const SearchSpace& space, Rng& rng) {
  space.validate();
  PipelineConfig c;
  for (const auto& stage : space.stages) {
    const auto& choice = stage.choices[std::uniform_int_distribution<std::size_t>(0, stage.choices.size() - 1)(rng)];
    pipeline::StageChoice sc{choice.name, {}};
    for (const auto& p : choice.params) {
      sc.params[p.name] = p.integer ? static_cast<double>(std::uniform_int_distribution<long>(std::lround(p.lo), std::lround(p.hi))(rng))
                                    : std::uniform_real_distribution<double>(p.lo, p.hi)(rng);
    }
    c.stages.push_back(std::move(sc));
  }
  return c;
}

double expected_improvement(double mean, double sd, double best) {
  const double gap = best - mean;
  if (!(sd > 0)) return std::max(gap, 0.0);
  const double z = gap / sd;
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2 * std::numbers::pi);
  return std::max(gap * cdf + sd * pdf, 0.0);
}

SearchResult search(const SearchSpace& space, const Objective& objective, const SearchOptions& opt) {
  space.validate();
  if (opt.init_count < 1 || opt.budget < opt.init_count) throw InvalidArgument("budget must cover the initial design");
  if (opt.pool_size < 1) throw InvalidArgument("candidate pool must be nonempty");
  Runner run(space, objective);
  Rng rng = make_rng(opt.seed, "search");
  const bool finite = param_free(space);

  PipelineConfig c;
  for (int k = 0; k < opt.init_count; ++k) {
    if (!run.draw_fresh(rng, c)) break;
    run.evaluate(c);
  }

  const auto dim = static_cast<Eigen::Index>(space.encoded_size());
  gp::GpModel model;
  model.kernel = gp::RbfKernel::isotropic(dim, std::sqrt(static_cast<double>(space.stages.size())), 1.0);
  model.noise_variance = 1e-2;
  gp::HyperFitOptions fit;
  fit.isotropic = true;
  fit.min_noise = 1e-6;
  fit.restarts = 2;
  fit.max_iterations = 200;

  while (static_cast<int>(run.result().history.size()) < opt.budget) {
    const auto& hist = run.result().history;
    const auto n = static_cast<Eigen::Index>(hist.size());
    // Failed evaluations enter the surrogate just above the worst finite loss.
    double lo = HUGE_VAL, hi = -HUGE_VAL;
    for (const auto& e : hist)
      if (std::isfinite(e.loss)) lo = std::min(lo, e.loss), hi = std::max(hi, e.loss);
    if (!std::isfinite(lo)) lo = hi = 0;
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double l = hist[static_cast<std::size_t>(i)].loss;
      y[i] = std::isfinite(l) ? l : hi + std::max(hi - lo, 1.0);
    }
    const double mu = y.mean();
    const double sd = std::sqrt((y.array() - mu).square().mean());
    y = (y.array() - mu) / (sd > 0 ? sd : 1.0);
    model.train_inputs.resize(n, dim);
    for (Eigen::Index i = 0; i < n; ++i) model.train_inputs.row(i) = run.encodings()[static_cast<std::size_t>(i)].transpose();
    model.train_targets = y;
    model = gp::fit_hyperparameters(model, fit);

    std::vector<PipelineConfig> pool;
    std::set<Key> pool_keys;
    if (finite && space.skeleton_count() <= static_cast<std::size_t>(opt.pool_size)) {
      pool = run.unevaluated_skeletons();
    } else {
      for (int k = 0; k < opt.pool_size; ++k) {
        PipelineConfig cand = sample_config(space, rng);
        Key key = key_of(encode(cand, space));
        if (run.seen(key) || !pool_keys.insert(std::move(key)).second) continue;
        pool.push_back(std::move(cand));
      }
      if (pool.empty()) {
        if (finite) {
          pool = run.unevaluated_skeletons();
        } else if (run.draw_fresh(rng, c)) {
          pool.push_back(c);
        }
      }
    }
    if (pool.empty()) break;

    Eigen::MatrixXd px(static_cast<Eigen::Index>(pool.size()), dim);
    for (std::size_t k = 0; k < pool.size(); ++k) px.row(static_cast<Eigen::Index>(k)) = encode(pool[k], space).transpose();
    const auto post = gp::posterior(model, px);
    const double best = y.minCoeff();
    std::size_t pick = 0;
    double pick_ei = -1;
    Key pick_key;
    for (std::size_t k = 0; k < pool.size(); ++k) {
      const auto i = static_cast<Eigen::Index>(k);
      const double ei = expected_improvement(post.mean[i], std::sqrt(std::max(post.covariance(i, i), 0.0)), best);
      Key key = key_of(px.row(i).transpose());
      if (ei > pick_ei || (ei == pick_ei && key < pick_key)) pick = k, pick_ei = ei, pick_key = std::move(key);
    }
    run.evaluate(pool[pick]);
  }
  return std::move(run.result());
}

SearchResult random_search(const SearchSpace& space, const Objective& objective, int budget, std::uint64_t seed) {
  space.validate();
  if (budget < 1) throw InvalidArgument("budget must be at least 1");
  Runner run(space, objective);
  Rng rng = make_rng(seed, "random-search");
  PipelineConfig c;
  for (int k = 0; k < budget && run.draw_fresh(rng, c); ++k) run.evaluate(c);
  return std::move(run.result());
}

void export_history(const SearchResult& result, std::ostream& out) {
  for (const auto& e : result.history) {
    nlohmann::json j{{"config", pipeline::to_json(e.config)}, {"timestamp", e.timestamp}};
    j["loss"] = std::isfinite(e.loss) ? nlohmann::json(e.loss) : nlohmann::json(nullptr);
    if (!e.error.empty()) j["error"] = e.error;
    out << j.dump() << '\n';
  }
}

}  // namespace icu::search
