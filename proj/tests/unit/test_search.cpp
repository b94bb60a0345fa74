#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "../support/landscape.hpp"
#include "icuplan/errors.hpp"
#include "icuplan/search.hpp"

using namespace icu;
using namespace icu::search;
using pipeline::SearchSpace;

namespace {

SearchSpace toy_space(std::initializer_list<int> sizes) {
  SearchSpace s;
  int k = 0;
  for (int n : sizes) {
    pipeline::StageSpec st{"s" + std::to_string(k++), {}};
    for (int c = 0; c < n; ++c) st.choices.push_back({"c" + std::to_string(c), {}});
    s.stages.push_back(st);
  }
  return s;
}

}  // namespace

TEST_CASE("skeleton counts") {
  CHECK(pipeline::reference_registry().skeleton_count() == 192);
  CHECK(pipeline::reduced_registry().skeleton_count() == 81);
  CHECK(toy_space({1, 1, 1, 1}).skeleton_count() == 1);
  CHECK(pipeline::reduced_registry().enumerate_skeletons().size() == 81);
}

TEST_CASE("encodings separate skeletons and scale hyperparameters") {
  const auto space = toy_space({2, 3, 2});
  std::set<std::vector<double>> seen;
  for (const auto& c : space.enumerate_skeletons()) {
    const auto e = encode(c, space);
    CHECK(seen.insert(std::vector<double>(e.data(), e.data() + e.size())).second);
  }
  CHECK(seen.size() == 12);

  const auto reg = pipeline::reduced_registry();
  auto c = reg.skeleton({0, 0, 0, 0});
  c.stages[2].params["l1_ratio"] = 0.5;
  const auto e = encode(c, reg);
  // Layout: 3 imputers + 3 iterative/knn params, 3 processors + 2 params, then the classifiers.
  const Eigen::Index l1_slot = 3 + 3 + 3 + 2 + 3 + 1;
  CHECK(e[l1_slot] == 0.5);
  c.stages[2].params["l1_ratio"] = 1.5;
  CHECK_THROWS_AS(encode(c, reg), InvalidArgument);
  auto bad = reg.skeleton({0, 0, 0, 0});
  bad.stages[0].name = "gain";
  CHECK_THROWS_AS(encode(bad, reg), InvalidArgument);
}

TEST_CASE("expected improvement is nonnegative and matches quadrature") {
  CHECK(expected_improvement(1.0, 0.0, 0.5) == 0.0);
  CHECK(expected_improvement(0.5, 0.0, 0.5) == 0.0);
  for (double mean : {-1.0, 0.0, 0.3, 2.0})
    for (double sd : {0.1, 1.0, 3.0}) {
      // Midpoint rule over +-12 sd.
      double q = 0;
      const int n = 200000;
      const double h = 24 * sd / n;
      for (int k = 0; k < n; ++k) {
        const double f = mean - 12 * sd + (k + 0.5) * h;
        const double dens = std::exp(-0.5 * std::pow((f - mean) / sd, 2)) / (sd * std::sqrt(2 * std::numbers::pi));
        q += std::max(0.0 - f, 0.0) * dens * h;
      }
      const double ei = expected_improvement(mean, sd, 0.0);
      CHECK(ei >= 0.0);
      CHECK(ei == doctest::Approx(q).epsilon(1e-6));
    }
}

TEST_CASE("a 12-config space is exhausted and its minimum found") {
  const auto space = toy_space({2, 3, 2});
  auto objective = [&](const PipelineConfig& c) {
    const auto e = encode(c, space);
    return std::pow(e[1] - 1, 2) + 3 * e[3] + e[4] * 2 + std::pow(e[6], 2) + 0.5;
  };
  double global = HUGE_VAL;
  for (const auto& c : space.enumerate_skeletons()) global = std::min(global, objective(c));
  SearchOptions opt;
  opt.budget = 12;
  opt.init_count = 3;
  const auto r = search::search(space, objective, opt);
  CHECK(r.history.size() == 12);
  CHECK(r.best_loss == global);
  std::set<std::string> names;
  for (const auto& h : r.history) names.insert(h.config.describe());
  CHECK(names.size() == 12);
}

TEST_CASE("constant objective, monotone trace, failures and determinism") {
  const auto space = pipeline::reduced_registry();
  SearchOptions opt;
  opt.budget = 14;
  opt.pool_size = 64;
  opt.seed = 5;
  const auto r = search::search(space, [](const PipelineConfig&) { return 0.37; }, opt);
  CHECK(r.best_loss == 0.37);
  CHECK(r.history.size() == 14);

  int calls = 0;
  auto flaky = [&](const PipelineConfig& c) {
    if (++calls % 4 == 0) throw std::runtime_error("fit failed");
    return encode(c, space).sum();
  };
  const auto f = search::search(space, flaky, opt);
  CHECK(f.history.size() == 14);
  CHECK(std::any_of(f.history.begin(), f.history.end(), [](const Evaluation& e) { return std::isinf(e.loss); }));
  for (std::size_t k = 1; k < f.best_trace.size(); ++k) CHECK(f.best_trace[k] <= f.best_trace[k - 1]);
  CHECK(f.best_loss == *std::min_element(f.best_trace.begin(), f.best_trace.end()));

  calls = 0;
  const auto g = search::search(space, flaky, opt);
  for (std::size_t k = 0; k < g.history.size(); ++k) {
    CHECK(g.history[k].config == f.history[k].config);
    CHECK(g.history[k].loss == f.history[k].loss);
  }
  std::ostringstream out;
  export_history(f, out);
  const std::string lines = out.str();
  CHECK(std::count(lines.begin(), lines.end(), '\n') == 14);
  CHECK_THROWS_AS(search::search(space, flaky, SearchOptions{5, 10, 512, 0}), InvalidArgument);
}

TEST_CASE("search beats random sampling on the benchmark landscape") {
  std::vector<double> bo, rs;
  int top = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto land = testing::make_landscape(100 + seed);
    const auto r = search::search(land.space, std::cref(land), SearchOptions{60, 10, 512, seed});
    const auto q = random_search(land.space, std::cref(land), 60, seed);
    bo.push_back(r.best_loss);
    rs.push_back(q.best_loss);
    top += r.best_loss <= land.quantile(0.05);
  }
  std::sort(bo.begin(), bo.end());
  std::sort(rs.begin(), rs.end());
  MESSAGE("top-5% hits " << top << "/5, median best " << bo[2] << " vs random " << rs[2]);
  CHECK(top >= 4);
  CHECK(bo[2] <= rs[2]);
}
