#include "lowramp/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <map>
#include <mutex>

namespace lowramp {

namespace {

// Golub-Welsch: eigen-decompose the Jacobi matrix of the orthogonal family.
QuadratureRule golub_welsch(const VectorXd& diag, const VectorXd& offdiag,
                            double mu0) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es;
  es.computeFromTridiagonal(diag, offdiag, Eigen::ComputeEigenvectors);
  QuadratureRule r;
  r.nodes = es.eigenvalues();
  const int n = static_cast<int>(diag.size());
  r.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double v0 = es.eigenvectors()(0, i);
    r.weights(i) = mu0 * v0 * v0;
  }
  return r;
}

QuadratureRule hermite_normal_rule(int n) {
  // Probabilists' Hermite: w(x) = e^{-x^2/2}, mu0 = sqrt(2*pi); Jacobi matrix
  // has zero diagonal and offdiag sqrt(k).
  VectorXd diag = VectorXd::Zero(n);
  VectorXd off(n - 1);
  for (int k = 1; k < n; ++k) off(k - 1) = std::sqrt(static_cast<double>(k));
  QuadratureRule r = golub_welsch(diag, off, std::sqrt(2.0 * M_PI));
  r.weights /= std::sqrt(2.0 * M_PI);  // normalize to E[.] under N(0,1)
  return r;
}

QuadratureRule laguerre_rule(int n) {
  VectorXd diag(n), off(n - 1);
  for (int k = 0; k < n; ++k) diag(k) = 2.0 * k + 1.0;
  for (int k = 1; k < n; ++k) off(k - 1) = static_cast<double>(k);
  return golub_welsch(diag, off, 1.0);
}

template <typename Maker>
const QuadratureRule& cached_rule(int n, std::map<int, QuadratureRule>& cache,
                                  std::mutex& mtx, Maker make) {
  std::lock_guard<std::mutex> lock(mtx);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, make(n)).first;
  return it->second;
}

}  // namespace

const QuadratureRule& gauss_hermite_normal(int n) {
  static std::map<int, QuadratureRule> cache;
  static std::mutex mtx;
  return cached_rule(n, cache, mtx, hermite_normal_rule);
}

const QuadratureRule& gauss_laguerre(int n) {
  static std::map<int, QuadratureRule> cache;
  static std::mutex mtx;
  return cached_rule(n, cache, mtx, laguerre_rule);
}

QuadratureRule gauss_legendre(int n, double a, double b) {
  VectorXd diag = VectorXd::Zero(n);
  VectorXd off(n - 1);
  for (int k = 1; k < n; ++k)
    off(k - 1) = k / std::sqrt(4.0 * k * k - 1.0);
  QuadratureRule r = golub_welsch(diag, off, 2.0);
  // map from [-1,1] to [a,b]
  double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  r.nodes = (r.nodes.array() * half + mid).matrix();
  r.weights *= half;
  return r;
}

double expect_normal(const std::function<double(double)>& f, int n) {
  const QuadratureRule& r = gauss_hermite_normal(n);
  double acc = 0.0;
  for (int i = 0; i < r.nodes.size(); ++i) acc += r.weights(i) * f(r.nodes(i));
  return acc;
}

double expect_normal_adaptive(const std::function<double(double)>& f, int n0,
                              double tol, int n_max) {
  double prev = expect_normal(f, n0);
  int n = n0;
  while (n < n_max) {
    n = 2 * n + 1;
    double cur = expect_normal(f, n);
    if (std::fabs(cur - prev) <= tol * std::max(1.0, std::fabs(cur)))
      return cur;
    prev = cur;
  }
  return prev;
}

double inverse_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw UnsupportedValue("inverse_normal_cdf: p outside (0,1)");
  // Acklam's coefficients
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1 - plow;
  double x;
  if (p < plow) {
    double q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p <= phigh) {
    double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    double q = std::sqrt(-2 * std::log(1 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
          c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  // One Halley step on Phi(x) - p = 0.
  double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
  x = x - u / (1 + x * u / 2);
  return x;
}

namespace {
bool is_prime(int k) {
  if (k < 2) return false;
  for (int d = 2; d * d <= k; ++d)
    if (k % d == 0) return false;
  return true;
}
}  // namespace

QmcSequence::QmcSequence(int dim, std::uint64_t seed) : dim_(dim) {
  alpha_.reserve(dim);
  int p = 2;
  while (static_cast<int>(alpha_.size()) < dim) {
    if (is_prime(p)) {
      double s = std::sqrt(static_cast<double>(p));
      alpha_.push_back(s - std::floor(s));
    }
    ++p;
  }
  shift_.resize(dim);
  std::mt19937_64 rng = make_rng(seed, 0x51ab);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int k = 0; k < dim; ++k) shift_[k] = unif(rng);
}

void QmcSequence::point(long k, double* out) const {
  for (int j = 0; j < dim_; ++j) {
    double v = shift_[j] + (k + 1) * alpha_[j];
    out[j] = v - std::floor(v);
  }
}

}  // namespace lowramp
