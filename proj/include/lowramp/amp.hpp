#pragma once

#include <optional>
#include <vector>

#include "lowramp/instance.hpp"

namespace lowramp {

enum class AmpVariant { full, self_averaged, bayes_optimal };
enum class AmpInit { random, planted };

std::string amp_variant_tag(AmpVariant v);
AmpVariant amp_variant_from_tag(const std::string& tag);

struct AmpConfig {
  double damping = 1.0;  // lambda in (0,1]
  double tol = 1e-8;
  int max_iters = 1000;
  AmpInit init = AmpInit::random;
  double init_scale = 1e-3;  // exact-zero init is forbidden
  std::optional<AmpVariant> variant;  // default: self_averaged for N >= 500
  bool adaptive_damping = false;
  std::uint64_t seed = 0;
  // Bethe free energy per iteration: exact contraction below this size,
  // self-averaged form above it.
  int exact_free_energy_max_n = 4000;
  bool track_free_energy = true;

  void validate() const {
    if (!(damping > 0.0 && damping <= 1.0))
      throw ConfigError("damping must lie in (0,1]");
    if (!(init_scale > 0.0))
      throw ConfigError("init scale must be positive; zero init is forbidden");
    if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
  }
  AmpVariant resolve_variant(int n) const {
    if (variant) return *variant;
    return n >= 500 ? AmpVariant::self_averaged : AmpVariant::full;
  }
};

// Per-variable estimators plus the fields driving them. sigma and a store one
// flattened r x r matrix per row.
struct AmpState {
  RowMat x_hat, x_hat_old;  // N x r
  RowMat sigma;             // N x r^2, row i = flattened sigma_i
  RowMat b, b_old;          // N x r
  RowMat a, a_old;          // N x r^2, or 1 x r^2 when shared
  bool shared_a = false;
  int t = 0;
  double conv = std::numeric_limits<double>::infinity();
  std::vector<double> free_energy_trace;

  int rank() const { return static_cast<int>(x_hat.cols()); }
  Eigen::Map<const MatrixXd> sigma_at(int i) const {
    return Eigen::Map<const MatrixXd>(sigma.row(i).data(), rank(), rank());
  }
  Eigen::Map<const MatrixXd> a_at(int i) const {
    int row = shared_a ? 0 : i;
    return Eigen::Map<const MatrixXd>(a.row(row).data(), rank(), rank());
  }
};

struct TraceRow {
  int t;
  double conv;
  double mse;  // nan when no planted truth
  double free_energy;
};

struct AmpResult {
  AmpState state;
  bool converged = false;
  std::vector<TraceRow> trace;
};

// Symmetric Low-RAMP. Exposed as a class so tests can drive single steps.
class SymmetricAmp {
 public:
  SymmetricAmp(const ProblemInstance& inst, const PriorSpec& prior,
               const AmpConfig& config);

  void step();
  AmpResult run();

  const AmpState& state() const { return state_; }
  AmpState& mutable_state() { return state_; }
  double current_mse() const;
  double free_energy() const;  // Bethe free energy at the current state
  AmpVariant variant() const { return variant_; }
  double damping() const { return lambda_; }

 private:
  const ProblemInstance& inst_;
  PriorSpec prior_;
  AmpConfig cfg_;
  AmpVariant variant_;
  AmpState state_;
  MatrixXd s2_;            // elementwise S^2, full variant only
  double inv_tilde_ = 0.0; // empirical 1/tilde-Delta
  double r_bar_ = 0.0;     // empirical R-bar
  double inv_delta_ = 0.0; // analytic 1/Delta, bayes variant
  double lambda_;
  int conv_up_count_ = 0;
  double prev_conv_ = std::numeric_limits<double>::infinity();
};

struct BipartiteAmpResult {
  AmpState u, v;
  bool converged = false;
  std::vector<TraceRow> trace;
  double alpha = 1.0;
};

class BipartiteAmp {
 public:
  BipartiteAmp(const ProblemInstance& inst, const PriorSpec& prior_u,
               const PriorSpec& prior_v, const AmpConfig& config);

  void step();
  BipartiteAmpResult run();

  const AmpState& state_u() const { return u_; }
  const AmpState& state_v() const { return v_; }
  AmpState& mutable_state_u() { return u_; }
  AmpState& mutable_state_v() { return v_; }
  double free_energy() const;
  double conv() const { return conv_; }
  int iteration() const { return t_; }

 private:
  const ProblemInstance& inst_;
  PriorSpec prior_u_, prior_v_;
  AmpConfig cfg_;
  AmpVariant variant_;
  AmpState u_, v_;
  MatrixXd s2_;
  double inv_tilde_ = 0.0, r_bar_ = 0.0, inv_delta_ = 0.0;
  double lambda_;
  int t_ = 0;
  double conv_ = std::numeric_limits<double>::infinity();
  int conv_up_count_ = 0;
  double prev_conv_ = std::numeric_limits<double>::infinity();
};

AmpResult run_symmetric(const ProblemInstance& inst, const PriorSpec& prior,
                        const AmpConfig& config);
BipartiteAmpResult run_bipartite(const ProblemInstance& inst,
                                 const PriorSpec& prior_u,
                                 const PriorSpec& prior_v,
                                 const AmpConfig& config);

// Variational mean field baseline: no Onsager correction, (S^2 - R) variance
// combination.
AmpResult mean_field_run(const ProblemInstance& inst, const PriorSpec& prior,
                         const AmpConfig& config);

// Bethe free energy of a symmetric state, exact S/R contraction.
double bethe_free_energy(const ProblemInstance& inst, const PriorSpec& prior,
                         const AmpState& state);
double bethe_free_energy_bipartite(const ProblemInstance& inst,
                                   const PriorSpec& prior_u,
                                   const PriorSpec& prior_v, const AmpState& u,
                                   const AmpState& v);

// Max-norm of the finite-difference gradient of the Bethe free energy over
// all (A_i, B_i), recomputing x_hat/sigma through f_in at perturbed fields.
double bethe_gradient_max_norm(const ProblemInstance& inst,
                               const PriorSpec& prior, const AmpState& state,
                               double h = 1e-5);

}  // namespace lowramp
