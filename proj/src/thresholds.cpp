#include "lowramp/thresholds.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace lowramp {

namespace {

VectorXd log_grid(double x_min, double x_max, int points) {
  VectorXd g(points);
  double l0 = std::log(x_min), l1 = std::log(x_max);
  for (int i = 0; i < points; ++i)
    g(i) = std::exp(l0 + (l1 - l0) * i / (points - 1));
  return g;
}

// golden-section refinement of an extremum of delta(x) = f(x)/x
double refine_extremum(const ScalarSe& f, double lo, double hi, bool maximize,
                       double* x_at = nullptr) {
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  auto val = [&](double x) {
    double v = f(x) / x;
    return maximize ? v : -v;
  };
  double a = lo, b = hi;
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = val(c), fd = val(d);
  for (int it = 0; it < 160 && (b - a) > 1e-12 * b; ++it) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = val(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = val(d);
    }
  }
  double x = 0.5 * (a + b);
  if (x_at) *x_at = x;
  double v = f(x) / x;
  return v;
}

struct CurveData {
  VectorXd x, fval, delta, cum;  // cum(i) = int_0^{x_i} f
};

CurveData evaluate_curve(const ScalarSe& f, const ThresholdGrid& grid) {
  CurveData c;
  c.x = log_grid(grid.x_min, grid.x_max, grid.points);
  c.fval.resize(grid.points);
  c.delta.resize(grid.points);
  for (int i = 0; i < grid.points; ++i) {
    c.fval(i) = f(c.x(i));
    c.delta(i) = c.fval(i) / c.x(i);
  }
  c.cum.resize(grid.points);
  // head segment: f ~ f(x0)/x0 * x near zero for the zero-mean case, and the
  // segment is negligible anyway (x0 = 1e-6 scale)
  c.cum(0) = 0.5 * (f(c.x(0) * 1e-3) + c.fval(0)) * c.x(0);
  for (int i = 1; i < grid.points; ++i)
    c.cum(i) = c.cum(i - 1) +
               0.5 * (c.fval(i) + c.fval(i - 1)) * (c.x(i) - c.x(i - 1));
  return c;
}

// integral of f over [a, b] by Gauss-Legendre (local refinement helper)
double local_integral(const ScalarSe& f, double a, double b) {
  if (b <= a) return 0.0;
  QuadratureRule q = gauss_legendre(24, a, b);
  double acc = 0;
  for (int i = 0; i < q.nodes.size(); ++i) acc += q.weights(i) * f(q.nodes(i));
  return acc;
}

}  // namespace

FixedPointCurve fixed_point_curve(const ScalarSe& f, const ThresholdGrid& grid) {
  CurveData c = evaluate_curve(f, grid);
  FixedPointCurve out;
  out.x = c.x;
  out.delta = c.delta;
  out.m = c.fval;
  out.stable.resize(grid.points);
  out.free_energy_gap.resize(grid.points);
  for (int i = 0; i < grid.points; ++i) {
    double slope;
    if (i == 0)
      slope = c.delta(1) - c.delta(0);
    else if (i == grid.points - 1)
      slope = c.delta(i) - c.delta(i - 1);
    else
      slope = c.delta(i + 1) - c.delta(i - 1);
    out.stable[i] = slope < 0;
    // potential difference vs the m = 0 reference at the same Delta(x)
    out.free_energy_gap(i) =
        0.5 * (c.cum(i) - 0.5 * c.x(i) * c.fval(i));
  }
  return out;
}

Thresholds find_thresholds(const ScalarSe& f, const ThresholdGrid& grid,
                           std::optional<double> delta_c) {
  CurveData c = evaluate_curve(f, grid);
  const int n = grid.points;
  Thresholds out;
  out.delta_c = delta_c;

  // locate interior extrema of delta(x)
  std::vector<int> maxima, minima;
  for (int i = 1; i + 1 < n; ++i) {
    double dl = c.delta(i) - c.delta(i - 1);
    double dr = c.delta(i + 1) - c.delta(i);
    double scale = std::fabs(c.delta(i)) + 1e-300;
    bool up_l = dl > 1e-13 * scale, dn_l = dl < -1e-13 * scale;
    bool up_r = dr > 1e-13 * scale, dn_r = dr < -1e-13 * scale;
    if (up_l && dn_r) maxima.push_back(i);
    if (dn_l && up_r) minima.push_back(i);
  }
  if (maxima.empty()) return out;  // monotone: no first-order transition

  // dynamic spinodal: the largest interior maximum
  double best_dyn = -1, x_dyn = 0;
  for (int i : maxima) {
    double xa;
    double v = refine_extremum(f, c.x(i - 1), c.x(i + 1), true, &xa);
    if (v > best_dyn) {
      best_dyn = v;
      x_dyn = xa;
    }
  }
  out.delta_dyn = best_dyn;

  // algorithmic spinodal: interior minimum below the max, else the
  // first-order bifurcation sits at Delta_c itself
  double x_min_loc = -1;
  std::optional<double> alg;
  for (int i : minima)
    if (c.x(i) < x_dyn) {
      double xa;
      double v = refine_extremum(f, c.x(i - 1), c.x(i + 1), false, &xa);
      if (!alg || v < *alg) {
        alg = v;
        x_min_loc = xa;
      }
    }
  if (alg)
    out.delta_alg = alg;
  else
    out.delta_alg = delta_c ? delta_c : std::optional<double>(c.delta(0));

  // information-theoretic transition on the upper branch:
  // G(x) = int_{x1}^{x} f - Delta(x) (x^2 - x1^2)/2, x1 = lower stable root
  auto lower_root = [&](double delta) -> double {
    double hi = x_min_loc > 0 ? x_min_loc : 0.0;
    if (hi <= 0) return 0.0;
    // delta(u) decreasing on [x_min_grid, x_min_loc]
    if (delta >= c.delta(0)) return 0.0;  // uniform point is the stable branch
    if (delta <= f(hi) / hi) return hi;
    double a = c.x(0), b = hi;
    for (int it = 0; it < 200 && (b - a) > 1e-12 * b; ++it) {
      double mid = std::sqrt(a * b);
      if (f(mid) / mid > delta)
        a = mid;
      else
        b = mid;
    }
    return 0.5 * (a + b);
  };
  auto cum_at = [&](double x) -> double {
    // cumulative integral with local refinement from the nearest grid point
    int lo = 0, hi = n - 1;
    while (lo + 1 < hi) {
      int mid = (lo + hi) / 2;
      if (c.x(mid) <= x)
        lo = mid;
      else
        hi = mid;
    }
    return c.cum(lo) + local_integral(f, c.x(lo), x);
  };
  auto g_of = [&](double x) -> double {
    double fx = f(x);
    double delta = fx / x;
    double x1 = lower_root(delta);
    double tail = x1 > 0 ? cum_at(x1) : 0.0;
    return (cum_at(x) - tail) - 0.5 * delta * (x * x - x1 * x1);
  };
  // scan the stable upper branch for the sign change of G
  double prev_x = x_dyn * 1.0000001;
  double prev_g = g_of(prev_x);
  bool found = false;
  for (int i = 0; i < n; ++i) {
    if (c.x(i) <= prev_x) continue;
    double gx = g_of(c.x(i));
    if (prev_g < 0 && gx >= 0) {
      double a = prev_x, b = c.x(i);
      for (int it = 0; it < 200 && (b - a) > 1e-9 * b; ++it) {
        double mid = 0.5 * (a + b);
        if (g_of(mid) < 0)
          a = mid;
        else
          b = mid;
      }
      double x_it = 0.5 * (a + b);
      out.delta_it = f(x_it) / x_it;
      found = true;
      break;
    }
    prev_x = c.x(i);
    prev_g = gx;
  }
  if (!found) {
    if (prev_g >= 0) {
      // free-energy crossing sits below the dynamic spinodal already
      out.delta_it = out.delta_dyn;
    } else {
      throw GridTooCoarse(
          "no free-energy crossing found on the grid; extend x_max");
    }
  }
  return out;
}

ScalarSeModel make_scalar_se_model(const std::string& tag, double rho, int rank,
                                   const IntegrationConfig& cfg) {
  ScalarSeModel out;
  if (tag == "community") {
    if (rank < 2) throw ConfigError("community model needs rank >= 2");
    out.f = [rank, cfg](double x) { return community_m(rank, x, cfg); };
    out.delta_c = 1.0 / (static_cast<double>(rank) * rank);
    out.grid.x_min = 1e-4;
    out.grid.x_max = 6.0 * rank * std::log(static_cast<double>(rank)) + 20.0;
    out.grid.points = 220;  // QMC evaluations are costly
    return out;
  }
  if (tag == "jointly_sparse" || tag == "gauss_bernoulli_joint_rank") {
    out.f = [rho, rank, cfg](double x) {
      return se_jointly_sparse(rho, rank, x, cfg);
    };
    out.delta_c = rho * rho;
    out.grid.x_max = std::max(60.0, 12.0 * std::fabs(std::log(rho)));
    return out;
  }
  ScalarModel m = scalar_model_from_tag(tag);
  out.f = [m, rho, cfg](double x) { return se_scalar_bayes(m, rho, x, cfg); };
  switch (m) {
    case ScalarModel::bernoulli:
      out.delta_c = std::nullopt;  // nonzero mean: no uniform fixed point
      break;
    case ScalarModel::two_balanced:
      out.delta_c = 1.0;
      break;
    default:
      out.delta_c = rho * rho;
  }
  double lr = std::fabs(std::log(rho));
  out.grid.x_max = std::max(60.0, 8.0 * lr);
  if (m == ScalarModel::two_balanced)
    out.grid.x_max =
        std::max(40.0, 6.0 * rho * (1 - rho) * std::fabs(std::log(rho * (1 - rho))) * 4.0 + 20.0);
  return out;
}

TriCriticalPoint find_first_order_boundary(const std::string& tag,
                                           double rho_with, double rho_without,
                                           double rho_tol,
                                           const IntegrationConfig& cfg) {
  auto exists = [&](double rho) {
    ScalarSeModel m = make_scalar_se_model(tag, rho, 1, cfg);
    Thresholds t = find_thresholds(m.f, m.grid, m.delta_c);
    return t.delta_dyn.has_value();
  };
  if (!exists(rho_with))
    throw GridTooCoarse("no transition at the supposed transition side");
  if (exists(rho_without))
    throw GridTooCoarse("transition exists at the supposed smooth side");
  double lo = rho_with, hi = rho_without;  // lo has, hi does not
  while (std::fabs(hi - lo) > rho_tol) {
    double mid = 0.5 * (lo + hi);
    if (exists(mid))
      lo = mid;
    else
      hi = mid;
  }
  TriCriticalPoint out;
  out.rho = 0.5 * (lo + hi);
  ScalarSeModel m = make_scalar_se_model(tag, lo, 1, cfg);
  Thresholds t = find_thresholds(m.f, m.grid, m.delta_c);
  out.delta = 0.5 * (*t.delta_alg + *t.delta_dyn);
  return out;
}

std::optional<double> uniform_stability(const PriorSpec& prior) {
  if (prior.family == PriorFamily::community) {
    double r = prior.rank;
    return 1.0 / (r * r);
  }
  if (!prior.zero_mean()) return std::nullopt;
  Moments m = moments(prior);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(m.second_moment);
  double lmax = es.eigenvalues().maxCoeff();
  return lmax * lmax;
}

std::optional<double> uniform_stability_bipartite(const PriorSpec& prior_u,
                                                  const PriorSpec& prior_v,
                                                  double alpha) {
  if (!prior_u.zero_mean() || !prior_v.zero_mean()) return std::nullopt;
  MatrixXd su = moments(prior_u).second_moment;
  MatrixXd sv = moments(prior_v).second_moment;
  // eigenvalues of su*sv through the symmetrized product
  Eigen::SelfAdjointEigenSolver<MatrixXd> esu(su);
  MatrixXd root = esu.operatorSqrt();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(root * sv * root);
  return std::sqrt(alpha) * es.eigenvalues().maxCoeff();
}

TransitionOrder first_order_criterion(const PriorSpec& prior) {
  if (prior.rank != 1)
    throw RankUnsupported("first_order_criterion: rank 1 only");
  if (!prior.zero_mean())
    throw UnsupportedValue("first_order_criterion needs a zero-mean prior");
  double m2 = moments(prior).second_moment(0, 0);
  double m3 = third_moment_scalar(prior);
  double lhs = m3 * m3, rhs = 2.0 * m2 * m2 * m2;
  double scale = std::max(std::fabs(lhs), std::fabs(rhs));
  if (std::fabs(lhs - rhs) <= 1e-12 * std::max(scale, 1e-300))
    return TransitionOrder::inconclusive;
  return lhs > rhs ? TransitionOrder::first_order
                   : TransitionOrder::second_order;
}

AsymptoticThresholds asymptotic_small_rho(const std::string& tag, double rho,
                                          double alpha) {
  AsymptoticThresholds a;
  double lr = std::log(rho);
  if (tag == "bernoulli") {
    a.delta_alg = M_E * rho * rho;
    a.delta_dyn = -rho / (2.0 * lr);
    a.delta_it = -rho / (4.0 * lr);
    return a;
  }
  if (tag == "rademacher_bernoulli") {
    a.delta_c = rho * rho;
    a.delta_alg = rho * rho;
    a.delta_dyn = -rho / (2.0 * lr);
    a.delta_it = -rho / (4.0 * lr);
    return a;
  }
  if (tag == "gauss_bernoulli" || tag == "gauss_bernoulli_joint") {
    a.delta_c = rho * rho;
    a.delta_alg = rho * rho;
    a.delta_dyn = 0.595 * (-rho / lr);
    a.delta_it = 0.528 * (-rho / lr);
    return a;
  }
  if (tag == "two_balanced") {
    double l = std::log(rho * (1.0 - rho));
    a.delta_c = 1.0;
    a.delta_alg = 1.0;
    a.delta_dyn = 1.0 / (-2.0 * rho * (1.0 - rho) * l);
    a.delta_it = 1.0 / (-4.0 * rho * (1.0 - rho) * l);
    return a;
  }
  if (tag == "bipartite_rademacher_bernoulli") {
    a.delta_c = rho * std::sqrt(alpha);
    a.delta_alg = a.delta_c;
    a.delta_dyn = std::sqrt(-rho * alpha / (2.0 * lr));
    a.delta_it = std::sqrt(-rho * alpha / (4.0 * lr));
    return a;
  }
  if (tag == "bipartite_gauss_bernoulli") {
    a.delta_c = rho * std::sqrt(alpha);
    a.delta_alg = a.delta_c;
    a.delta_dyn = 0.771 * std::sqrt(-rho * alpha / lr);
    a.delta_it = 0.726 * std::sqrt(-rho * alpha / lr);
    return a;
  }
  throw ConfigError("asymptotic_small_rho: unknown tag " + tag);
}

AsymptoticThresholds asymptotic_large_rank(const std::string& tag, int rank,
                                           double rho) {
  AsymptoticThresholds a;
  if (tag == "community") {
    double r = rank;
    a.delta_c = 1.0 / (r * r);
    a.delta_dyn = 1.0 / (2.0 * r * std::log(r));
    a.delta_it = 1.0 / (4.0 * r * std::log(r));
    return a;
  }
  if (tag == "jointly_sparse" || tag == "gauss_bernoulli_joint") {
    a.delta_c = rho * rho;
    a.delta_alg = rho * rho;
    a.delta_it = rho;
    a.delta_dyn = rho;
    return a;
  }
  throw ConfigError("asymptotic_large_rank: unknown tag " + tag);
}

}  // namespace lowramp
