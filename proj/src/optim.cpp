#include "icuplan/optim.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <cmath>
#include <memory>

#include "icuplan/errors.hpp"

namespace icu::optim {
namespace {

struct Callback {
  const std::function<double(const std::vector<double>&)>* f;
  std::vector<double> scratch;
};

double trampoline(const gsl_vector* v, void* params) {
  auto* cb = static_cast<Callback*>(params);
  for (std::size_t k = 0; k < cb->scratch.size(); ++k) cb->scratch[k] = gsl_vector_get(v, k);
  const double y = (*cb->f)(cb->scratch);
  return std::isfinite(y) ? y : 1e300;
}

struct VectorDeleter {
  void operator()(gsl_vector* v) const { gsl_vector_free(v); }
};
struct MinimizerDeleter {
  void operator()(gsl_multimin_fminimizer* m) const { gsl_multimin_fminimizer_free(m); }
};

}  // namespace

MinimizeResult nelder_mead(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x0,
                           std::vector<double> step, int max_iterations, double size_tolerance) {
  const std::size_t n = x0.size();
  if (n == 0 || step.size() != n) throw InvalidArgument("nelder_mead: dimension mismatch");
  gsl_set_error_handler_off();

  Callback cb{&f, std::vector<double>(n)};
  gsl_multimin_function fn{&trampoline, n, &cb};
  std::unique_ptr<gsl_vector, VectorDeleter> x(gsl_vector_alloc(n));
  std::unique_ptr<gsl_vector, VectorDeleter> ss(gsl_vector_alloc(n));
  for (std::size_t k = 0; k < n; ++k) {
    gsl_vector_set(x.get(), k, x0[k]);
    gsl_vector_set(ss.get(), k, step[k]);
  }
  std::unique_ptr<gsl_multimin_fminimizer, MinimizerDeleter> m(
      gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n));
  gsl_multimin_fminimizer_set(m.get(), &fn, x.get(), ss.get());

  MinimizeResult result;
  int status = GSL_CONTINUE;
  for (result.iterations = 0; result.iterations < max_iterations && status == GSL_CONTINUE; ++result.iterations) {
    if (gsl_multimin_fminimizer_iterate(m.get()) != GSL_SUCCESS) break;
    status = gsl_multimin_test_size(gsl_multimin_fminimizer_size(m.get()), size_tolerance);
  }
  result.converged = status == GSL_SUCCESS;
  result.x.resize(n);
  for (std::size_t k = 0; k < n; ++k) result.x[k] = gsl_vector_get(m->x, k);
  result.value = m->fval;
  return result;
}

Adam::Adam(std::size_t dim, double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), b1_(beta1), b2_(beta2), eps_(epsilon), m_(dim, 0.0), v_(dim, 0.0) {}

void Adam::step(std::vector<double>& params, const std::vector<double>& gradient, bool ascend) {
  if (params.size() != m_.size() || gradient.size() != m_.size()) throw InvalidArgument("Adam: dimension mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  const double sign = ascend ? 1.0 : -1.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    m_[k] = b1_ * m_[k] + (1.0 - b1_) * gradient[k];
    v_[k] = b2_ * v_[k] + (1.0 - b2_) * gradient[k] * gradient[k];
    params[k] += sign * lr_ * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + eps_);
  }
}

}  // namespace icu::optim
