#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "../json_eigen.hpp"
#include "icuplan/errors.hpp"
#include "icuplan/numeric.hpp"
#include "icuplan/rng.hpp"
#include "stages.hpp"

namespace icu::risk {
namespace {

using detail::json_vector;
using detail::vector_json;

class ElasticNetClassifier final : public Classifier {
 public:
  ElasticNetClassifier(double lambda, double l1_ratio) : lambda_(lambda), l1_ratio_(l1_ratio) {}
  void fit(const Matrix& x, const std::vector<int>& y) override { fit_ = LogisticFit::fit(x, y, lambda_, l1_ratio_); }
  Vector predict(const Matrix& x) const override {
    return fit_.linear_predictor(x).unaryExpr([](double z) { return sigmoid(z); });
  }
  nlohmann::json save() const override {
    return {{"name", "elastic_net"}, {"lambda", lambda_}, {"l1_ratio", l1_ratio_}, {"intercept", fit_.intercept},
            {"weights", vector_json(fit_.weights)}, {"mean", vector_json(fit_.stats.mean)},
            {"scale", vector_json(fit_.stats.scale)}};
  }
  void load(const nlohmann::json& j) {
    fit_.intercept = j.at("intercept").get<double>();
    fit_.weights = json_vector(j.at("weights"));
    fit_.stats.mean = json_vector(j.at("mean"));
    fit_.stats.scale = json_vector(j.at("scale"));
  }

 private:
  double lambda_, l1_ratio_;
  LogisticFit fit_;
};

// Histogram regression trees shared by the forest and the boosted model.
// Each node predicts G / (H + lambda) from the summed targets G and
// weights H of its samples; splits maximize the matching gain.
struct TreeNode {
  int feature = -1;
  double threshold = 0;
  int left = -1, right = -1;
  double value = 0;
};

struct Tree {
  std::vector<TreeNode> nodes;

  double predict(const Matrix& x, Eigen::Index row) const {
    int n = 0;
    while (nodes[static_cast<std::size_t>(n)].feature >= 0) {
      const auto& node = nodes[static_cast<std::size_t>(n)];
      n = x(row, node.feature) <= node.threshold ? node.left : node.right;
    }
    return nodes[static_cast<std::size_t>(n)].value;
  }

  nlohmann::json save() const {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& n : nodes) j.push_back({n.feature, n.threshold, n.left, n.right, n.value});
    return j;
  }
  static Tree load(const nlohmann::json& j) {
    Tree t;
    for (const auto& n : j)
      t.nodes.push_back({n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<int>(), n.at(3).get<int>(), n.at(4).get<double>()});
    return t;
  }
};

struct BinnedData {
  Eigen::Index n = 0, d = 0;
  std::vector<std::vector<double>> edges;  // candidate thresholds per feature
  std::vector<std::uint8_t> bins;          // column-major n x d

  static constexpr std::size_t kMaxBins = 32;

  explicit BinnedData(const Matrix& x) : n(x.rows()), d(x.cols()), edges(static_cast<std::size_t>(x.cols())) {
    bins.resize(static_cast<std::size_t>(n * d));
    std::vector<double> col(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < d; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) col[static_cast<std::size_t>(i)] = x(i, j);
      std::sort(col.begin(), col.end());
      col.erase(std::unique(col.begin(), col.end()), col.end());
      auto& e = edges[static_cast<std::size_t>(j)];
      if (col.size() <= kMaxBins) {
        // Midpoints between consecutive distinct values.
        for (std::size_t k = 0; k + 1 < col.size(); ++k) e.push_back(0.5 * (col[k] + col[k + 1]));
      } else {
        for (std::size_t q = 1; q < kMaxBins; ++q) {
          const std::size_t k = q * col.size() / kMaxBins;
          e.push_back(0.5 * (col[k - 1] + col[k]));
        }
        e.erase(std::unique(e.begin(), e.end()), e.end());
      }
      for (Eigen::Index i = 0; i < n; ++i)
        bins[static_cast<std::size_t>(j * n + i)] =
            static_cast<std::uint8_t>(std::lower_bound(e.begin(), e.end(), x(i, j)) - e.begin());
    }
  }
  std::uint8_t bin(Eigen::Index i, Eigen::Index j) const { return bins[static_cast<std::size_t>(j * n + i)]; }
};

struct TreeParams {
  int max_depth = 6;
  int min_leaf = 1;
  double lambda = 0;
  int features_per_split = 0;  // 0 = all
};

class TreeBuilder {
 public:
  TreeBuilder(const BinnedData& data, const std::vector<double>& g, const std::vector<double>& h, TreeParams p, Rng& rng)
      : data_(data), g_(g), h_(h), p_(p), rng_(rng) {}

  Tree build(std::vector<Eigen::Index> samples) {
    Tree t;
    grow(t, samples, 0);
    return t;
  }

 private:
  int grow(Tree& t, std::vector<Eigen::Index>& samples, int depth) {
    double G = 0, H = 0;
    for (auto i : samples) G += g_[static_cast<std::size_t>(i)], H += h_[static_cast<std::size_t>(i)];
    const int id = static_cast<int>(t.nodes.size());
    t.nodes.push_back({-1, 0, -1, -1, H + p_.lambda > 0 ? G / (H + p_.lambda) : 0.0});
    const auto count = static_cast<long>(samples.size());
    if (depth >= p_.max_depth || count < 2L * p_.min_leaf) return id;

    std::vector<Eigen::Index> features(static_cast<std::size_t>(data_.d));
    std::iota(features.begin(), features.end(), 0);
    if (p_.features_per_split > 0 && p_.features_per_split < data_.d) {
      std::shuffle(features.begin(), features.end(), rng_);
      features.resize(static_cast<std::size_t>(p_.features_per_split));
    }
    const double parent = G * G / (H + p_.lambda + 1e-300);
    double best_gain = 1e-12;
    Eigen::Index best_feature = -1;
    std::size_t best_bin = 0;
    std::vector<double> hg(BinnedData::kMaxBins + 1), hh(BinnedData::kMaxBins + 1);
    std::vector<long> hc(BinnedData::kMaxBins + 1);
    for (Eigen::Index j : features) {
      const std::size_t nb = data_.edges[static_cast<std::size_t>(j)].size() + 1;
      if (nb < 2) continue;
      std::fill_n(hg.begin(), nb, 0.0);
      std::fill_n(hh.begin(), nb, 0.0);
      std::fill_n(hc.begin(), nb, 0L);
      for (auto i : samples) {
        const auto b = data_.bin(i, j);
        hg[b] += g_[static_cast<std::size_t>(i)];
        hh[b] += h_[static_cast<std::size_t>(i)];
        ++hc[b];
      }
      double gl = 0, hl = 0;
      long cl = 0;
      for (std::size_t b = 0; b + 1 < nb; ++b) {
        gl += hg[b], hl += hh[b], cl += hc[b];
        if (cl < p_.min_leaf) continue;
        if (count - cl < p_.min_leaf) break;
        const double gr = G - gl, hr = H - hl;
        const double gain = gl * gl / (hl + p_.lambda + 1e-300) + gr * gr / (hr + p_.lambda + 1e-300) - parent;
        if (gain > best_gain) best_gain = gain, best_feature = j, best_bin = b;
      }
    }
    if (best_feature < 0) return id;
    std::vector<Eigen::Index> left, right;
    for (auto i : samples) (data_.bin(i, best_feature) <= best_bin ? left : right).push_back(i);
    samples.clear();
    samples.shrink_to_fit();
    t.nodes[static_cast<std::size_t>(id)].feature = static_cast<int>(best_feature);
    t.nodes[static_cast<std::size_t>(id)].threshold = data_.edges[static_cast<std::size_t>(best_feature)][best_bin];
    const int l = grow(t, left, depth + 1);
    const int r = grow(t, right, depth + 1);
    t.nodes[static_cast<std::size_t>(id)].left = l;
    t.nodes[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  const BinnedData& data_;
  const std::vector<double>& g_;
  const std::vector<double>& h_;
  TreeParams p_;
  Rng& rng_;
};

class RandomForestClassifier final : public Classifier {
 public:
  RandomForestClassifier(int n_trees, int max_depth, int min_leaf, std::uint64_t seed)
      : n_trees_(n_trees), max_depth_(max_depth), min_leaf_(min_leaf), seed_(seed) {}

  void fit(const Matrix& x, const std::vector<int>& y) override {
    const BinnedData data(x);
    std::vector<double> g(y.begin(), y.end()), h(y.size(), 1.0);
    TreeParams p{max_depth_, min_leaf_, 0.0,
                 std::max(1, static_cast<int>(std::lround(std::sqrt(static_cast<double>(x.cols())))))};
    Rng rng = make_rng(seed_, "random-forest");
    std::uniform_int_distribution<Eigen::Index> pick(0, x.rows() - 1);
    trees_.clear();
    for (int t = 0; t < n_trees_; ++t) {
      std::vector<Eigen::Index> boot(static_cast<std::size_t>(x.rows()));
      for (auto& b : boot) b = pick(rng);
      trees_.push_back(TreeBuilder(data, g, h, p, rng).build(std::move(boot)));
    }
  }
  Vector predict(const Matrix& x) const override {
    Vector out = Vector::Zero(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (const auto& t : trees_) out[i] += t.predict(x, i);
      out[i] = std::clamp(out[i] / static_cast<double>(trees_.size()), 0.0, 1.0);
    }
    return out;
  }
  nlohmann::json save() const override {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : trees_) trees.push_back(t.save());
    return {{"name", "random_forest"}, {"n_trees", n_trees_}, {"max_depth", max_depth_}, {"min_leaf", min_leaf_},
            {"seed", seed_}, {"trees", trees}};
  }
  void load(const nlohmann::json& j) {
    trees_.clear();
    for (const auto& t : j.at("trees")) trees_.push_back(Tree::load(t));
  }

 private:
  int n_trees_, max_depth_, min_leaf_;
  std::uint64_t seed_;
  std::vector<Tree> trees_;
};

// Logistic-loss gradient boosting with Newton leaf values.
class BoostedTreesClassifier final : public Classifier {
 public:
  BoostedTreesClassifier(int n_trees, double learning_rate, int max_depth)
      : n_trees_(n_trees), learning_rate_(learning_rate), max_depth_(max_depth) {}

  void fit(const Matrix& x, const std::vector<int>& y) override {
    const BinnedData data(x);
    const auto n = static_cast<std::size_t>(x.rows());
    double rate = 0;
    for (int v : y) rate += v;
    base_ = logit(std::clamp(rate / static_cast<double>(n), 1e-6, 1 - 1e-6));
    std::vector<double> f(n, base_), g(n), h(n);
    std::vector<Eigen::Index> all(n);
    std::iota(all.begin(), all.end(), 0);
    TreeParams p{max_depth_, 5, 1.0, 0};
    Rng rng = make_rng(0, "boosting");  // never drawn: every split sees all features
    trees_.clear();
    for (int t = 0; t < n_trees_; ++t) {
      for (std::size_t i = 0; i < n; ++i) {
        const double q = sigmoid(f[i]);
        g[i] = y[i] - q;
        h[i] = std::max(q * (1 - q), 1e-12);
      }
      Tree tree = TreeBuilder(data, g, h, p, rng).build(all);
      for (auto& node : tree.nodes) node.value *= learning_rate_;
      for (std::size_t i = 0; i < n; ++i) f[i] += tree.predict(x, static_cast<Eigen::Index>(i));
      trees_.push_back(std::move(tree));
    }
  }
  Vector predict(const Matrix& x) const override {
    Vector out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      double f = base_;
      for (const auto& t : trees_) f += t.predict(x, i);
      out[i] = sigmoid(f);
    }
    return out;
  }
  nlohmann::json save() const override {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : trees_) trees.push_back(t.save());
    return {{"name", "gbt"}, {"n_trees", n_trees_}, {"learning_rate", learning_rate_}, {"max_depth", max_depth_},
            {"base", base_}, {"trees", trees}};
  }
  void load(const nlohmann::json& j) {
    base_ = j.at("base").get<double>();
    trees_.clear();
    for (const auto& t : j.at("trees")) trees_.push_back(Tree::load(t));
  }

 private:
  int n_trees_;
  double learning_rate_;
  int max_depth_;
  double base_ = 0;
  std::vector<Tree> trees_;
};

}  // namespace

std::unique_ptr<Classifier> make_classifier(const pipeline::StageChoice& c, std::uint64_t seed) {
  auto geti = [&](const char* k) { return static_cast<int>(std::lround(c.params.at(k))); };
  if (c.name == "elastic_net") return std::make_unique<ElasticNetClassifier>(c.params.at("lambda"), c.params.at("l1_ratio"));
  if (c.name == "random_forest")
    return std::make_unique<RandomForestClassifier>(geti("n_trees"), geti("max_depth"), geti("min_leaf"), seed);
  if (c.name == "gbt") return std::make_unique<BoostedTreesClassifier>(geti("n_trees"), c.params.at("learning_rate"), geti("max_depth"));
  throw InvalidArgument("unknown classifier '" + c.name + "'");
}

std::unique_ptr<Classifier> load_classifier(const nlohmann::json& j) {
  const auto name = j.at("name").get<std::string>();
  if (name == "elastic_net") {
    auto c = std::make_unique<ElasticNetClassifier>(j.at("lambda").get<double>(), j.at("l1_ratio").get<double>());
    c->load(j);
    return c;
  }
  if (name == "random_forest") {
    auto c = std::make_unique<RandomForestClassifier>(j.at("n_trees").get<int>(), j.at("max_depth").get<int>(),
                                                      j.at("min_leaf").get<int>(), j.at("seed").get<std::uint64_t>());
    c->load(j);
    return c;
  }
  if (name == "gbt") {
    auto c = std::make_unique<BoostedTreesClassifier>(j.at("n_trees").get<int>(), j.at("learning_rate").get<double>(),
                                                      j.at("max_depth").get<int>());
    c->load(j);
    return c;
  }
  throw InvalidArgument("unknown classifier '" + name + "'");
}

}  // namespace icu::risk
