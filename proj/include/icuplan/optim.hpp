#pragma once

#include <functional>
#include <vector>

namespace icu::optim {

struct MinimizeResult {
  std::vector<double> x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Derivative-free local minimization (GSL nmsimplex2). `step` is the
// initial simplex size per coordinate. Nonfinite objective values are
// treated as +huge so the simplex moves away from them.
MinimizeResult nelder_mead(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x0,
                           std::vector<double> step, int max_iterations = 2000, double size_tolerance = 1e-8);

// Adam with the usual bias correction; maximizes when `ascend` is set.
class Adam {
 public:
  explicit Adam(std::size_t dim, double learning_rate = 1e-2, double beta1 = 0.9, double beta2 = 0.999,
                double epsilon = 1e-8);
  void step(std::vector<double>& params, const std::vector<double>& gradient, bool ascend);

 private:
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace icu::optim
