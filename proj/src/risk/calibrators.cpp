#include <algorithm>
#include <cmath>
#include <numeric>

#include "icuplan/errors.hpp"
#include "icuplan/numeric.hpp"
#include "stages.hpp"

namespace icu::risk {
namespace {

double clipped_logit(double s) { return logit(std::clamp(s, 1e-300, std::nextafter(1.0, 0.0))); }

// Platt-style: p = sigmoid(a * logit(s) + b) by maximum likelihood, with the
// slope kept positive so the map stays increasing.
class SigmoidCalibrator final : public Calibrator {
 public:
  static constexpr double kMinSlope = 1e-3;

  void fit(const Vector& scores, const std::vector<int>& y) override {
    const Eigen::Index n = scores.size();
    Vector u = scores.unaryExpr(&clipped_logit);
    double a = 1, b = 0;
    auto nll = [&](double aa, double bb) {
      double s = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double z = aa * u[i] + bb;
        // log(1 + e^z) - y z, evaluated stably.
        s += (z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z))) - y[static_cast<std::size_t>(i)] * z;
      }
      return s;
    };
    double f = nll(a, b);
    for (int it = 0; it < 100; ++it) {
      double ga = 0, gb = 0, haa = 1e-9, hab = 0, hbb = 1e-9;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double p = sigmoid(a * u[i] + b);
        const double r = p - y[static_cast<std::size_t>(i)], w = p * (1 - p);
        ga += r * u[i], gb += r;
        haa += w * u[i] * u[i], hab += w * u[i], hbb += w;
      }
      const double det = haa * hbb - hab * hab;
      if (!(det > 0)) break;
      double da = -(hbb * ga - hab * gb) / det, db = -(haa * gb - hab * ga) / det;
      double step = 1;
      double na = a + da, nb = b + db, nf = nll(na, nb);
      while (nf > f && step > 1e-8) {
        step *= 0.5;
        na = a + step * da, nb = b + step * db;
        nf = nll(na, nb);
      }
      if (nf > f) break;
      const bool done = std::abs(na - a) + std::abs(nb - b) < 1e-10;
      a = na, b = nb, f = nf;
      if (done) break;
    }
    a_ = std::max(a, kMinSlope);
    b_ = b;
  }
  Vector apply(const Vector& s) const override {
    return s.unaryExpr([&](double v) { return sigmoid(a_ * clipped_logit(v) + b_); });
  }
  nlohmann::json save() const override { return {{"name", "sigmoid"}, {"a", a_}, {"b", b_}}; }
  void load(const nlohmann::json& j) {
    a_ = j.at("a").get<double>();
    b_ = j.at("b").get<double>();
  }

 private:
  double a_ = 1, b_ = 0;
};

// Pool-adjacent-violators fit, linearly interpolated between block edges and
// blended with a tiny multiple of the raw score so that distinct scores stay
// distinct (keeps the ranking, hence AUC, intact).
class IsotonicCalibrator final : public Calibrator {
 public:
  static constexpr double kBlend = 1e-9;

  void fit(const Vector& scores, const std::vector<int>& y) override {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(scores.size()));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto i, auto j) { return scores[i] < scores[j]; });
    struct Block {
      double sum, weight, lo, hi;
    };
    std::vector<Block> blocks;
    for (std::size_t k = 0; k < order.size();) {
      // Tied scores form one initial block.
      std::size_t e = k;
      double sum = 0;
      while (e < order.size() && scores[order[e]] == scores[order[k]]) sum += y[static_cast<std::size_t>(order[e++])];
      blocks.push_back({sum, static_cast<double>(e - k), scores[order[k]], scores[order[k]]});
      while (blocks.size() > 1) {
        auto& prev = blocks[blocks.size() - 2];
        const auto& last = blocks.back();
        if (prev.sum / prev.weight < last.sum / last.weight) break;
        prev.sum += last.sum, prev.weight += last.weight, prev.hi = last.hi;
        blocks.pop_back();
      }
      k = e;
    }
    xs_.clear(), ys_.clear();
    for (const auto& b : blocks) {
      const double v = b.sum / b.weight;
      xs_.push_back(b.lo), ys_.push_back(v);
      if (b.hi > b.lo) xs_.push_back(b.hi), ys_.push_back(v);
    }
  }
  Vector apply(const Vector& s) const override {
    return s.unaryExpr([&](double v) { return (1 - kBlend) * interpolate(v) + kBlend * v; });
  }
  nlohmann::json save() const override { return {{"name", "isotonic"}, {"x", xs_}, {"y", ys_}}; }
  void load(const nlohmann::json& j) {
    xs_ = j.at("x").get<std::vector<double>>();
    ys_ = j.at("y").get<std::vector<double>>();
  }

 private:
  double interpolate(double v) const {
    if (xs_.empty()) return v;
    if (v <= xs_.front()) return ys_.front();
    if (v >= xs_.back()) return ys_.back();
    const auto k = static_cast<std::size_t>(std::upper_bound(xs_.begin(), xs_.end(), v) - xs_.begin());
    const double t = (v - xs_[k - 1]) / (xs_[k] - xs_[k - 1]);
    return ys_[k - 1] + t * (ys_[k] - ys_[k - 1]);
  }

  std::vector<double> xs_, ys_;
};

class NoCalibrator final : public Calibrator {
 public:
  void fit(const Vector&, const std::vector<int>&) override {}
  Vector apply(const Vector& s) const override { return s; }
  nlohmann::json save() const override { return {{"name", "none"}}; }
};

}  // namespace

std::unique_ptr<Calibrator> make_calibrator(const pipeline::StageChoice& c) {
  if (c.name == "sigmoid") return std::make_unique<SigmoidCalibrator>();
  if (c.name == "isotonic") return std::make_unique<IsotonicCalibrator>();
  if (c.name == "none") return std::make_unique<NoCalibrator>();
  throw InvalidArgument("unknown calibrator '" + c.name + "'");
}

std::unique_ptr<Calibrator> load_calibrator(const nlohmann::json& j) {
  const auto name = j.at("name").get<std::string>();
  if (name == "sigmoid") {
    auto c = std::make_unique<SigmoidCalibrator>();
    c->load(j);
    return c;
  }
  if (name == "isotonic") {
    auto c = std::make_unique<IsotonicCalibrator>();
    c->load(j);
    return c;
  }
  if (name == "none") return std::make_unique<NoCalibrator>();
  throw InvalidArgument("unknown calibrator '" + name + "'");
}

}  // namespace icu::risk
