#pragma once

#include <functional>

#include "lowramp/common.hpp"

namespace lowramp {

// Nodes/weights so that sum_i w_i f(x_i) approximates the target integral.
struct QuadratureRule {
  VectorXd nodes;
  VectorXd weights;
};

// E[f(W)] for W ~ N(0,1); Gauss-Hermite rescaled to the probabilists' weight.
const QuadratureRule& gauss_hermite_normal(int n);

// int_a^b f(x) dx
QuadratureRule gauss_legendre(int n, double a, double b);

// int_0^inf e^{-t} f(t) dt
const QuadratureRule& gauss_laguerre(int n);

double expect_normal(const std::function<double(double)>& f, int n);

// Doubles the node count until two successive evaluations agree to tol.
double expect_normal_adaptive(const std::function<double(double)>& f,
                              int n0 = 201, double tol = 1e-10,
                              int n_max = 3217);

// Inverse standard normal CDF (Acklam rational approximation + one Halley
// refinement through erfc), good to ~1e-14.
double inverse_normal_cdf(double p);

// Low-discrepancy points in [0,1)^dim: Kronecker additive recurrence on
// sqrt-prime irrationals with a seeded Cranley-Patterson shift.
class QmcSequence {
 public:
  QmcSequence(int dim, std::uint64_t seed);
  // Fills `out` (size dim) with point #k.
  void point(long k, double* out) const;
  int dim() const { return dim_; }

 private:
  int dim_;
  std::vector<double> alpha_;
  std::vector<double> shift_;
};

struct IntegrationConfig {
  int gh_nodes = 201;        // odd, >= 61
  long mc_samples = 200000;  // >= 1e5, used for dimensions >= 2
  std::uint64_t seed = 12345;
  double target_tol = 1e-10;

  void validate() const {
    if (gh_nodes < 61 || gh_nodes % 2 == 0)
      throw ConfigError("gh_nodes must be odd and >= 61");
    if (mc_samples < 100000) throw ConfigError("mc_samples must be >= 1e5");
  }
};

}  // namespace lowramp
