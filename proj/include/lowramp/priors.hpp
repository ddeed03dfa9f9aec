#pragma once

#include <optional>
#include <vector>

#include "lowramp/common.hpp"

namespace lowramp {

enum class PriorFamily {
  ising,
  bernoulli,
  rademacher_bernoulli,
  gauss_bernoulli_joint,
  gauss_bernoulli_indep,
  gaussian,
  community,
  two_balanced,
  spherical,
};

std::string prior_tag(PriorFamily f);
PriorFamily prior_family_from_tag(const std::string& tag);

// Immutable description of a prior on the r-dimensional spin variables.
struct PriorSpec {
  PriorFamily family = PriorFamily::gaussian;
  int rank = 1;
  double rho = 0.5;  // atom weight where applicable
  VectorXd mu;       // gaussian mean
  MatrixXd cov;      // gaussian covariance (symmetric PSD)

  static PriorSpec ising(double rho);
  static PriorSpec bernoulli(double rho);
  static PriorSpec rademacher_bernoulli(double rho);
  static PriorSpec gauss_bernoulli_joint(double rho, int rank);
  static PriorSpec gauss_bernoulli_indep(double rho, int rank);
  static PriorSpec gaussian(const VectorXd& mu, const MatrixXd& cov);
  static PriorSpec community(int rank);
  static PriorSpec two_balanced(double rho);
  static PriorSpec spherical(int rank);

  bool zero_mean() const;
  bool is_discrete() const;
};

// Posterior mean/covariance of the local measure P(x) e^{B.x - x.A.x/2}.
struct InputResult {
  VectorXd mean;
  MatrixXd covariance;  // = d f_in / dB
  double log_z = 0.0;   // log Z_x(A,B)
};

InputResult f_in(const PriorSpec& prior, const MatrixXd& A, const VectorXd& B);

// Scalar fast path, rank-1 priors only.
InputResult f_in_scalar(const PriorSpec& prior, double a, double b);

struct Moments {
  VectorXd mean;
  MatrixXd second_moment;
};

Moments moments(const PriorSpec& prior);

double third_moment_scalar(const PriorSpec& prior);

// n i.i.d. rows, deterministic in seed.
MatrixXd sample(const PriorSpec& prior, int n, std::uint64_t seed);

// Atom list for finite-support families (empty optional otherwise).
struct DiscreteSupport {
  std::vector<VectorXd> atoms;
  std::vector<double> log_w;
};
std::optional<DiscreteSupport> discrete_support(const PriorSpec& prior);

}  // namespace lowramp
