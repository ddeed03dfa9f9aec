#pragma once

#include <functional>
#include <optional>

#include "lowramp/state_evolution.hpp"

namespace lowramp {

struct Thresholds {
  std::optional<double> delta_c;
  std::optional<double> delta_alg, delta_it, delta_dyn;
  bool tri_critical = false;  // set by the boundary search when at the merge
};

struct FixedPointCurve {
  VectorXd x, delta, m;
  std::vector<bool> stable;
  VectorXd free_energy_gap;  // informative-vs-lower-branch potential difference
};

struct ThresholdGrid {
  double x_min = 1e-6;
  double x_max = 60.0;
  int points = 900;
};

using ScalarSe = std::function<double(double)>;

FixedPointCurve fixed_point_curve(const ScalarSe& f, const ThresholdGrid& grid);

// Parametric method on m' = f(m/Delta): Delta(x) = f(x)/x, m(x) = f(x).
// delta_c: analytic stability point when known (used when the bifurcation is
// first order at Delta_c and no interior minimum exists).
Thresholds find_thresholds(const ScalarSe& f, const ThresholdGrid& grid,
                           std::optional<double> delta_c = std::nullopt);

// Scalar SE function + metadata for a named model.
struct ScalarSeModel {
  ScalarSe f;
  std::optional<double> delta_c;
  ThresholdGrid grid;
};

// tags: bernoulli, rademacher_bernoulli, gauss_bernoulli(, _joint),
// two_balanced, community (rank required)
ScalarSeModel make_scalar_se_model(const std::string& tag, double rho, int rank,
                                   const IntegrationConfig& cfg = {});

// Largest rho at which a first-order transition (three fixed points) still
// exists; bisection on the existence predicate. Returns {delta_tri, rho_tri}.
struct TriCriticalPoint {
  double delta = 0, rho = 0;
};
TriCriticalPoint find_first_order_boundary(const std::string& tag,
                                           double rho_with, double rho_without,
                                           double rho_tol = 1e-5,
                                           const IntegrationConfig& cfg = {});

// Stability point of the uniform fixed point (spectral threshold). Absent for
// nonzero-mean priors without the community symmetry.
std::optional<double> uniform_stability(const PriorSpec& prior);
std::optional<double> uniform_stability_bipartite(const PriorSpec& prior_u,
                                                  const PriorSpec& prior_v,
                                                  double alpha);

enum class TransitionOrder { second_order, first_order, inconclusive };
TransitionOrder first_order_criterion(const PriorSpec& prior);

// Closed-form leading-order thresholds in the small-rho / large-rank regimes.
struct AsymptoticThresholds {
  std::optional<double> delta_c, delta_alg, delta_it, delta_dyn;
};
AsymptoticThresholds asymptotic_small_rho(const std::string& tag, double rho,
                                          double alpha = 1.0);
AsymptoticThresholds asymptotic_large_rank(const std::string& tag, int rank,
                                           double rho = 0.0);

}  // namespace lowramp
