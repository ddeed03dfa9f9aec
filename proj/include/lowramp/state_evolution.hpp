#pragma once

#include <functional>
#include <optional>

#include "lowramp/channels.hpp"
#include "lowramp/priors.hpp"
#include "lowramp/quadrature.hpp"

namespace lowramp {

// Order parameters (M, Q, Sigma); scalar m suffices in rank-1 Bayes mode.
struct SEOrderParams {
  MatrixXd m;      // r x r0
  MatrixXd q;      // r x r
  MatrixXd sigma;  // r x r
};

enum class SEMode { general, bayes_optimal, quenched_conventional };

struct SEModel {
  PriorSpec prior;   // assumed prior (posterior side)
  PriorSpec prior0;  // planted distribution
  NoiseParams noise;
  double alpha = 1.0;  // bipartite only
  SEMode mode = SEMode::bayes_optimal;
  IntegrationConfig integration;
};

// One step of the general (possibly mismatched) state evolution.
SEOrderParams se_step_general(const SEModel& model, const SEOrderParams& p);

// ---------------------------------------------------------------------------
// scalar Bayes-optimal state evolution functions f^SE so that m' = f(m/Delta)

enum class ScalarModel { bernoulli, rademacher_bernoulli, gauss_bernoulli, two_balanced };

std::string scalar_model_tag(ScalarModel m);
ScalarModel scalar_model_from_tag(const std::string& tag);

double se_scalar_bayes(ScalarModel model, double rho, double x,
                       const IntegrationConfig& cfg = {});

// Community b' = M_r(b/Delta); m_r is the underlying map on x = b/Delta.
double community_m(int r, double x, const IntegrationConfig& cfg = {});
double se_community(int r, double b, double delta,
                    const IntegrationConfig& cfg = {});

// Jointly-sparse PCA at general rank: radial one-dimensional form.
double se_jointly_sparse(double rho, int r, double x,
                         const IntegrationConfig& cfg = {});

// Bipartite Bayes-optimal composed scalar maps (Gaussian U side, variance 1).
double se_bipartite_gaussian_u(double alpha, double m_v, double delta);
double se_bipartite_composed(ScalarModel v_model, double rho, double alpha,
                             double m_v, double delta,
                             const IntegrationConfig& cfg = {});

struct SEBipartiteParams {
  SEOrderParams u, v;
};
SEBipartiteParams se_bipartite_step(const SEModel& model_u,
                                    const SEModel& model_v, double alpha,
                                    const SEBipartiteParams& p);

// ---------------------------------------------------------------------------
// replica free energies

// Bayes-optimal symmetric rank-1: phi(m) = E[log Z(m/D, m/D x0 + sqrt(m/D) W)] - m^2/(4D)
double replica_free_energy_bayes_rank1(const PriorSpec& prior, double m,
                                       double delta,
                                       const IntegrationConfig& cfg = {});

// General symmetric replica potential at (M, Q, Sigma), rank 1 only.
double replica_free_energy_general_rank1(const SEModel& model,
                                         const SEOrderParams& p);

// Bipartite Bayes-optimal rank-1.
double replica_free_energy_bipartite_rank1(const PriorSpec& prior_u,
                                           const PriorSpec& prior_v,
                                           double alpha, double m_u,
                                           double m_v, double delta,
                                           const IntegrationConfig& cfg = {});

// SK replica-symmetric free energy at overlap q (coupling J).
double sk_free_energy(double j_coupling, double q,
                      const IntegrationConfig& cfg = {});

// Fixed point of Q' = E[tanh^2(J sqrt(Q) W)] from q0, tolerance 1e-12.
double sk_state_evolution(double j_coupling, double q0,
                          const IntegrationConfig& cfg = {});

// ---------------------------------------------------------------------------
// spectral / PCA analysis (beta -> infinity maximum likelihood limit)

struct PcaResult {
  double m = 0, q = 0, sigma_prime = 0;
  bool informative = false;
  double mse = 0;        // denoised spectral MSE
  double overlap2 = 0;   // squared correlation of the estimator with x0
};

// Rank-1 analysis given the generalized-PCA noise parameters (computed at
// beta = 1 for g(Y,w) = -(D(Y)-w)^2/2).
PcaResult pca_analysis(const PriorSpec& prior, double delta_hat,
                       double delta_tilde, double r_bar,
                       const IntegrationConfig& cfg = {});

// Parameters for PCA run on the Fisher score matrix of a Bayes channel.
NoiseParams pca_params_score(const ChannelSpec& channel);
// Parameters for PCA run on the raw data matrix Y.
NoiseParams pca_params_raw(const ChannelSpec& channel);

// Scalar-prior expectation helper E_{x0}[h(x0)], exact atoms + quadrature.
double expect_prior_scalar(const PriorSpec& prior,
                           const std::function<double(double)>& h,
                           int gh_nodes = 201);

// Bayes-optimal MSE bridge.
inline double mse_from_m(const PriorSpec& prior, double m) {
  return moments(prior).second_moment.trace() - m;
}

// Fixed point of m' = f(m/Delta) by damped iteration.
double se_fixed_point(const std::function<double(double)>& f_se, double delta,
                      double m0, double damping = 0.5, double tol = 1e-12,
                      long max_iters = 100000);

}  // namespace lowramp
