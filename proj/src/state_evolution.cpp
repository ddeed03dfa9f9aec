#include "lowramp/state_evolution.hpp"

#include <Eigen/Eigenvalues>

namespace lowramp {

std::string scalar_model_tag(ScalarModel m) {
  switch (m) {
    case ScalarModel::bernoulli: return "bernoulli";
    case ScalarModel::rademacher_bernoulli: return "rademacher_bernoulli";
    case ScalarModel::gauss_bernoulli: return "gauss_bernoulli";
    case ScalarModel::two_balanced: return "two_balanced";
  }
  throw ConfigError("unknown scalar model");
}

ScalarModel scalar_model_from_tag(const std::string& tag) {
  if (tag == "bernoulli") return ScalarModel::bernoulli;
  if (tag == "rademacher_bernoulli") return ScalarModel::rademacher_bernoulli;
  if (tag == "gauss_bernoulli" || tag == "gauss_bernoulli_joint")
    return ScalarModel::gauss_bernoulli;
  if (tag == "two_balanced") return ScalarModel::two_balanced;
  throw ConfigError("no scalar SE function for tag: " + tag);
}

namespace {

double expect_w_adaptive(const std::function<double(double)>& f,
                         const IntegrationConfig& cfg) {
  return expect_normal_adaptive(f, cfg.gh_nodes, cfg.target_tol);
}

}  // namespace

double se_scalar_bayes(ScalarModel model, double rho, double x,
                       const IntegrationConfig& cfg) {
  if (x < 0) throw UnsupportedValue("se_scalar_bayes: x must be >= 0");
  if (x == 0 && model != ScalarModel::bernoulli) return 0.0;
  const double sx = std::sqrt(x);
  switch (model) {
    case ScalarModel::bernoulli:
      // rho E_W[ rho / (rho + (1-rho) exp(-x/2 + W sqrt(x))) ]
      return rho * expect_w_adaptive(
                       [&](double w) {
                         double t = std::log1p(-rho) - 0.5 * x + w * sx;
                         return std::exp(std::log(rho) -
                                         logaddexp(std::log(rho), t));
                       },
                       cfg);
    case ScalarModel::rademacher_bernoulli:
      // rho E_W[ tanh(x + W sqrt(x)) rho / ((1-rho) e^{x/2}/cosh(x+W sqrt x) + rho) ]
      return rho * expect_w_adaptive(
                       [&](double w) {
                         double z = x + w * sx;
                         double t = std::log1p(-rho) + 0.5 * x - log_cosh(z);
                         double weight = std::exp(std::log(rho) -
                                                  logaddexp(std::log(rho), t));
                         return std::tanh(z) * weight;
                       },
                       cfg);
    case ScalarModel::gauss_bernoulli:
      // rho x/(1+x) E_W[ W^2 rho_hat(x, W^2(x^2+x)) ],
      // rho_hat = rho / ((1-rho) sqrt(1+x) e^{-x W^2/2} + rho)
      return rho * x / (1.0 + x) *
             expect_w_adaptive(
                 [&](double w) {
                   double t = std::log1p(-rho) + 0.5 * std::log1p(x) -
                              0.5 * x * w * w;
                   double rh =
                       std::exp(std::log(rho) - logaddexp(std::log(rho), t));
                   return w * w * rh;
                 },
                 cfg);
    case ScalarModel::two_balanced: {
      const double c = rho * (1.0 - rho);
      return expect_w_adaptive(
          [&](double u) {
            double z = x / (2.0 * c) + u * std::sqrt(x / c);
            // 2c sinh(z) / (1 + 2c (cosh z - 1)), overflow-safe
            double az = std::fabs(z);
            double e2 = std::exp(-2.0 * az);
            double num = c * (1.0 - e2) * sgn(z);
            double den = (1.0 - 2.0 * c) * std::exp(-az) + c * (1.0 + e2);
            return num / den;
          },
          cfg);
    }
  }
  throw ConfigError("se_scalar_bayes: unknown model");
}

double community_m(int r, double x, const IntegrationConfig& cfg) {
  if (r < 2) throw RankUnsupported("community needs r >= 2");
  if (x < 0) throw UnsupportedValue("community_m: x must be >= 0");
  if (x == 0) return 0.0;
  QmcSequence seq(r, cfg.seed);
  const long npairs = cfg.mc_samples / 2;
  const double a = x / r;
  const double sq = std::sqrt(x / r);
  std::vector<double> u(r), z(r);
  double acc = 0.0;
  for (long k = 0; k < npairs; ++k) {
    seq.point(k, u.data());
    for (int sign = 0; sign < 2; ++sign) {  // antithetic pair
      for (int i = 0; i < r; ++i) {
        double p = sign == 0 ? u[i] : 1.0 - u[i];
        p = std::min(std::max(p, 1e-15), 1.0 - 1e-15);
        z[i] = inverse_normal_cdf(p);
      }
      // p1 = e^{a + sq z1} / (e^{a + sq z1} + sum_{i>=2} e^{sq zi})
      double e1 = a + sq * z[0];
      double mx = e1;
      for (int i = 1; i < r; ++i) mx = std::max(mx, sq * z[i]);
      double num = std::exp(e1 - mx);
      double den = num;
      for (int i = 1; i < r; ++i) den += std::exp(sq * z[i] - mx);
      acc += num / den;
    }
  }
  double p1 = acc / (2.0 * npairs);
  return (r * p1 - 1.0) / (r - 1.0);
}

double se_community(int r, double b, double delta, const IntegrationConfig& cfg) {
  if (!(b >= 0.0 && b <= 1.0))
    throw UnsupportedValue("se_community: b must lie in [0,1]");
  double v = community_m(r, b / delta, cfg);
  return std::min(std::max(v, 0.0), 1.0);
}

double se_jointly_sparse(double rho, int r, double x,
                         const IntegrationConfig& cfg) {
  if (x < 0) throw UnsupportedValue("se_jointly_sparse: x must be >= 0");
  if (x == 0) return 0.0;
  // radial integral against the chi_r density
  // u^{r-1} e^{-u^2/2} / (2^{r/2-1} Gamma(r/2))
  const double log_norm =
      (0.5 * r - 1.0) * M_LN2 + std::lgamma(0.5 * r);
  const double u_max = std::sqrt(static_cast<double>(r)) + 12.0;
  const int nodes = 801;
  QuadratureRule q = gauss_legendre(nodes, 1e-12, u_max);
  const double log_rho = std::log(rho);
  const double l1mr = std::log1p(-rho);
  double acc = 0.0;
  for (int i = 0; i < q.nodes.size(); ++i) {
    double u = q.nodes(i);
    double logw = (r - 1.0) * std::log(u) - 0.5 * u * u - log_norm;
    double t = l1mr + 0.5 * r * std::log1p(x) - 0.5 * x * u * u;
    double rh = std::exp(log_rho - logaddexp(log_rho, t));
    double integrand = (1.0 + x * u * u * (1.0 - rh) / r) * rh;
    acc += q.weights(i) * std::exp(logw) * integrand;
  }
  return rho * x / (1.0 + x) * acc;
}

double se_bipartite_gaussian_u(double alpha, double m_v, double delta) {
  return alpha * m_v / (delta + alpha * m_v);
}

double se_bipartite_composed(ScalarModel v_model, double rho, double alpha,
                             double m_v, double delta,
                             const IntegrationConfig& cfg) {
  double m_u = se_bipartite_gaussian_u(alpha, m_v, delta);
  return se_scalar_bayes(v_model, rho, m_u / delta, cfg);
}

// ---------------------------------------------------------------------------
// general SE step

namespace {

MatrixXd psd_sqrt(const MatrixXd& q) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(q);
  VectorXd ev = es.eigenvalues();
  if (ev.minCoeff() < -1e-10)
    throw NonPSDOrderParam("order parameter Q has a negative eigenvalue");
  VectorXd s = ev.cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * s.asDiagonal() * es.eigenvectors().transpose();
}

struct SEStepAccum {
  MatrixXd m, q, sigma;
};

// rank-1 path: tensorized quadrature over (x0, W)
SEStepAccum se_step_rank1(const SEModel& model, const SEOrderParams& p) {
  double qv = p.q(0, 0);
  if (qv < -1e-10) throw NonPSDOrderParam("negative scalar Q");
  qv = std::max(qv, 0.0);
  double inv_tilde = model.noise.inv_tilde();
  double inv_hat = model.noise.inv_hat();
  double r_bar = model.noise.r_bar;
  double a = qv * inv_tilde - r_bar * (qv + p.sigma(0, 0));
  double mcoef = p.m(0, 0) * inv_hat;
  double bw = std::sqrt(qv * inv_tilde);
  double m1 = 0, q1 = 0, s1 = 0;
  const int gh = model.integration.gh_nodes;
  const QuadratureRule& qw = gauss_hermite_normal(gh);
  auto inner = [&](double x0) {
    double em = 0, eq = 0, es = 0;
    for (int i = 0; i < qw.nodes.size(); ++i) {
      InputResult res =
          f_in_scalar(model.prior, a, mcoef * x0 + bw * qw.nodes(i));
      em += qw.weights(i) * res.mean(0) * x0;
      eq += qw.weights(i) * res.mean(0) * res.mean(0);
      es += qw.weights(i) * res.covariance(0, 0);
    }
    return std::array<double, 3>{em, eq, es};
  };
  // expectation over the planted prior
  auto accumulate = [&](double weight, double x0) {
    auto v = inner(x0);
    m1 += weight * v[0];
    q1 += weight * v[1];
    s1 += weight * v[2];
  };
  if (auto s = discrete_support(model.prior0)) {
    for (size_t k = 0; k < s->atoms.size(); ++k)
      accumulate(std::exp(s->log_w[k]), s->atoms[k](0));
  } else if (model.prior0.family == PriorFamily::gaussian) {
    double mu = model.prior0.mu(0), sd = std::sqrt(model.prior0.cov(0, 0));
    for (int i = 0; i < qw.nodes.size(); ++i)
      accumulate(qw.weights(i), mu + sd * qw.nodes(i));
  } else if (model.prior0.family == PriorFamily::spherical) {
    for (int i = 0; i < qw.nodes.size(); ++i)
      accumulate(qw.weights(i), qw.nodes(i));
  } else if (model.prior0.family == PriorFamily::gauss_bernoulli_joint ||
             model.prior0.family == PriorFamily::gauss_bernoulli_indep) {
    accumulate(1.0 - model.prior0.rho, 0.0);
    for (int i = 0; i < qw.nodes.size(); ++i)
      accumulate(model.prior0.rho * qw.weights(i), qw.nodes(i));
  } else {
    throw InvalidPrior("se_step_rank1: unhandled planted prior");
  }
  SEStepAccum out;
  out.m = MatrixXd::Constant(1, 1, m1);
  out.q = MatrixXd::Constant(1, 1, q1);
  out.sigma = MatrixXd::Constant(1, 1, s1);
  return out;
}

SEStepAccum se_step_mc(const SEModel& model, const SEOrderParams& p) {
  const int r = model.prior.rank;
  const int r0 = model.prior0.rank;
  double inv_tilde = model.noise.inv_tilde();
  double inv_hat = model.noise.inv_hat();
  double r_bar = model.noise.r_bar;
  MatrixXd a = p.q * inv_tilde - r_bar * (p.q + p.sigma);
  MatrixXd broot = psd_sqrt(p.q * inv_tilde);
  MatrixXd mh = p.m * inv_hat;  // r x r0

  const long nsamp = model.integration.mc_samples;
  MatrixXd x0s = sample(model.prior0, static_cast<int>(nsamp),
                        mix_seed(model.integration.seed, 0xf00));
  std::mt19937_64 rng = make_rng(model.integration.seed, 0xf01);
  std::normal_distribution<double> normal(0.0, 1.0);
  SEStepAccum out;
  out.m = MatrixXd::Zero(r, r0);
  out.q = MatrixXd::Zero(r, r);
  out.sigma = MatrixXd::Zero(r, r);
  VectorXd w(r);
  for (long k = 0; k < nsamp; ++k) {
    for (int i = 0; i < r; ++i) w(i) = normal(rng);
    VectorXd x0 = x0s.row(static_cast<int>(k)).transpose();
    VectorXd b = mh * x0 + broot * w;
    InputResult res = f_in(model.prior, a, b);
    out.m += res.mean * x0.transpose();
    out.q += res.mean * res.mean.transpose();
    out.sigma += res.covariance;
  }
  out.m /= static_cast<double>(nsamp);
  out.q /= static_cast<double>(nsamp);
  out.sigma /= static_cast<double>(nsamp);
  return out;
}

}  // namespace

SEOrderParams se_step_general(const SEModel& model, const SEOrderParams& p) {
  const int r = model.prior.rank;
  const int r0 = model.prior0.rank;
  check_shape(p.m.rows() == r && p.m.cols() == r0 && p.q.rows() == r &&
                  p.q.cols() == r && p.sigma.rows() == r && p.sigma.cols() == r,
              "se_step_general: order parameter shapes");
  SEStepAccum acc = (r == 1 && r0 == 1) ? se_step_rank1(model, p)
                                        : se_step_mc(model, p);
  SEOrderParams next;
  next.m = acc.m;
  next.q = acc.q;
  next.sigma = acc.sigma;
  return next;
}

SEBipartiteParams se_bipartite_step(const SEModel& model_u,
                                    const SEModel& model_v, double alpha,
                                    const SEBipartiteParams& p) {
  if (!(alpha > 0)) throw UnsupportedValue("alpha must be positive");
  // U side sees alpha-scaled V order parameters.
  SEModel mu = model_u;
  SEOrderParams pv_scaled = p.v;
  pv_scaled.m *= alpha;
  pv_scaled.q *= alpha;
  pv_scaled.sigma *= alpha;
  SEBipartiteParams next;
  next.u = se_step_general(mu, pv_scaled);
  // V side from the updated U.
  next.v = se_step_general(model_v, next.u);
  return next;
}

// ---------------------------------------------------------------------------
// replica free energies

double expect_prior_scalar(const PriorSpec& prior,
                           const std::function<double(double)>& h,
                           int gh_nodes) {
  if (prior.rank != 1) throw RankUnsupported("expect_prior_scalar: rank 1");
  if (auto s = discrete_support(prior)) {
    double acc = 0;
    for (size_t k = 0; k < s->atoms.size(); ++k)
      acc += std::exp(s->log_w[k]) * h(s->atoms[k](0));
    return acc;
  }
  const QuadratureRule& q = gauss_hermite_normal(gh_nodes);
  switch (prior.family) {
    case PriorFamily::gaussian: {
      double mu = prior.mu(0), sd = std::sqrt(prior.cov(0, 0));
      double acc = 0;
      for (int i = 0; i < q.nodes.size(); ++i)
        acc += q.weights(i) * h(mu + sd * q.nodes(i));
      return acc;
    }
    case PriorFamily::spherical: {
      double acc = 0;
      for (int i = 0; i < q.nodes.size(); ++i)
        acc += q.weights(i) * h(q.nodes(i));
      return acc;
    }
    case PriorFamily::gauss_bernoulli_joint:
    case PriorFamily::gauss_bernoulli_indep: {
      double acc = (1.0 - prior.rho) * h(0.0);
      for (int i = 0; i < q.nodes.size(); ++i)
        acc += prior.rho * q.weights(i) * h(q.nodes(i));
      return acc;
    }
    default:
      throw InvalidPrior("expect_prior_scalar: unhandled family");
  }
}

double replica_free_energy_bayes_rank1(const PriorSpec& prior, double m,
                                       double delta,
                                       const IntegrationConfig& cfg) {
  if (m < 0) throw UnsupportedValue("m must be >= 0");
  double a = m / delta;
  double bw = std::sqrt(std::max(m / delta, 0.0));
  const QuadratureRule& q = gauss_hermite_normal(cfg.gh_nodes);
  double e = expect_prior_scalar(
      prior,
      [&](double x0) {
        double acc = 0;
        for (int i = 0; i < q.nodes.size(); ++i)
          acc += q.weights(i) *
                 f_in_scalar(prior, a, a * x0 + bw * q.nodes(i)).log_z;
        return acc;
      },
      cfg.gh_nodes);
  return e - m * m / (4.0 * delta);
}

double replica_free_energy_general_rank1(const SEModel& model,
                                         const SEOrderParams& p) {
  double m = p.m(0, 0), q = p.q(0, 0), sig = p.sigma(0, 0);
  double inv_tilde = model.noise.inv_tilde();
  double inv_hat = model.noise.inv_hat();
  double r_bar = model.noise.r_bar;
  double a = q * inv_tilde - r_bar * (q + sig);
  double bw = std::sqrt(std::max(q * inv_tilde, 0.0));
  const QuadratureRule& qw = gauss_hermite_normal(model.integration.gh_nodes);
  double e = expect_prior_scalar(
      model.prior0,
      [&](double x0) {
        double acc = 0;
        for (int i = 0; i < qw.nodes.size(); ++i)
          acc += qw.weights(i) *
                 f_in_scalar(model.prior, a, m * inv_hat * x0 + bw * qw.nodes(i))
                     .log_z;
        return acc;
      },
      model.integration.gh_nodes);
  return q * q * inv_tilde / 4.0 - m * m * inv_hat / 2.0 -
         0.5 * r_bar * (q + sig) * (q + sig) + e;
}

double replica_free_energy_bipartite_rank1(const PriorSpec& prior_u,
                                           const PriorSpec& prior_v,
                                           double alpha, double m_u, double m_v,
                                           double delta,
                                           const IntegrationConfig& cfg) {
  const QuadratureRule& qw = gauss_hermite_normal(cfg.gh_nodes);
  auto elogz = [&](const PriorSpec& pr, double a, double mean_coef) {
    return expect_prior_scalar(
        pr,
        [&](double x0) {
          double acc = 0;
          double bw = std::sqrt(std::max(a, 0.0));
          for (int i = 0; i < qw.nodes.size(); ++i)
            acc += qw.weights(i) *
                   f_in_scalar(pr, a, mean_coef * x0 + bw * qw.nodes(i)).log_z;
          return acc;
        },
        cfg.gh_nodes);
  };
  double au = alpha * m_v / delta;
  double av = m_u / delta;
  return elogz(prior_u, au, au) + alpha * elogz(prior_v, av, av) -
         alpha * m_u * m_v / (2.0 * delta);
}

double sk_free_energy(double j, double q, const IntegrationConfig& cfg) {
  double e = expect_normal_adaptive(
      [&](double w) { return log_cosh(j * std::sqrt(std::max(q, 0.0)) * w); },
      cfg.gh_nodes, cfg.target_tol);
  return j * j * ((1.0 - q) * (1.0 - q) - 1.0) / 4.0 + e;
}

double sk_state_evolution(double j, double q0, const IntegrationConfig& cfg) {
  if (!(j > 0)) throw UnsupportedValue("sk coupling must be positive");
  double q = q0;
  for (long t = 0; t < 200000; ++t) {
    double qn = expect_normal_adaptive(
        [&](double w) {
          double th = std::tanh(j * std::sqrt(std::max(q, 0.0)) * w);
          return th * th;
        },
        cfg.gh_nodes, cfg.target_tol);
    if (std::fabs(qn - q) <= 1e-12) return qn;
    q = 0.5 * q + 0.5 * qn;
  }
  return q;
}

// ---------------------------------------------------------------------------
// PCA analysis

PcaResult pca_analysis(const PriorSpec& prior, double delta_hat,
                       double delta_tilde, double r_bar,
                       const IntegrationConfig& cfg) {
  if (prior.rank != 1) throw RankUnsupported("pca_analysis: rank 1 only");
  const double s0 = moments(prior).second_moment(0, 0);
  const double inv_tilde = 1.0 / delta_tilde;
  const double inv_hat = 1.0 / delta_hat;
  PcaResult out;
  // damped iteration of the beta -> infinity equations from informative init
  double m = s0, q = s0, sp = std::sqrt(delta_tilde);
  const double lam = 0.5;
  for (long t = 0; t < 200000; ++t) {
    double den = q * (inv_tilde - r_bar) - sp * inv_tilde;
    if (den <= 1e-12) throw NonConvergentIntegral("pca iteration lost positivity");
    double sp_new = 1.0 / den;
    double m_new = sp_new * m * s0 * inv_hat;
    double q_new =
        sp_new * sp_new * (m * m * s0 * inv_hat * inv_hat + q * inv_tilde);
    double dm = std::fabs(m_new - m) + std::fabs(q_new - q) +
                std::fabs(sp_new - sp);
    m = lam * m_new + (1 - lam) * m;
    q = lam * q_new + (1 - lam) * q;
    sp = lam * sp_new + (1 - lam) * sp;
    if (dm < 1e-13) break;
  }
  out.m = m;
  out.q = q;
  out.sigma_prime = sp;
  out.informative = m * m > 1e-9 * s0 * s0;
  if (!out.informative) {
    out.mse = s0;  // uninformative spectrum: prior-variance error
    out.overlap2 = 0.0;
    return out;
  }
  out.overlap2 = m * m / (q * s0);
  // denoised spectral MSE through f_in with t = M_hat^2 / Q_hat
  double t_snr = m * m * inv_hat * inv_hat /
                 (q * inv_tilde);  // (sp cancels) = m^2 Delta_tilde / (q Dhat^2)
  double st = std::sqrt(std::max(t_snr, 0.0));
  const QuadratureRule& qw = gauss_hermite_normal(cfg.gh_nodes);
  out.mse = expect_prior_scalar(
      prior,
      [&](double x0) {
        double acc = 0;
        for (int i = 0; i < qw.nodes.size(); ++i) {
          double est =
              f_in_scalar(prior, t_snr, t_snr * x0 + st * qw.nodes(i)).mean(0);
          acc += qw.weights(i) * (x0 - est) * (x0 - est);
        }
        return acc;
      },
      cfg.gh_nodes);
  return out;
}

NoiseParams pca_params_score(const ChannelSpec& channel) {
  // PCA on S: g(Y,w) = -(S(Y)-w)^2/2 at beta = 1 under the true channel.
  double delta = channel.fisher_delta();
  NoiseParams np;
  np.delta_tilde = delta;  // E[S^2] = 1/Delta
  np.delta_hat = delta;    // E[S * S] = 1/Delta (Bayes channel score)
  np.r_bar = 1.0 / delta - 1.0;  // E[S^2] - 1
  np.delta_fisher = delta;
  return np;
}

NoiseParams pca_params_raw(const ChannelSpec& channel) {
  // PCA on Y: g(Y,w) = -(Y-w)^2/2 at beta = 1 under the true channel.
  double ey2, eys;  // E[Y^2], E[Y * score_true(Y)] at w = 0
  switch (channel.family) {
    case ChannelFamily::gaussian:
      ey2 = channel.delta;
      eys = 1.0;
      break;
    case ChannelFamily::exponential:
      ey2 = 2.0;  // Laplace(1) second moment
      eys = 1.0;  // E[|Y|]
      break;
    default: {
      const QuadratureRule& q = gauss_laguerre(201);
      (void)q;
      throw NonIntegrableChannel("pca_params_raw: unsupported channel");
    }
  }
  NoiseParams np;
  np.delta_tilde = 1.0 / ey2;
  np.delta_hat = 1.0 / eys;
  np.r_bar = ey2 - 1.0;
  np.delta_fisher = channel.fisher_delta();
  return np;
}

double se_fixed_point(const std::function<double(double)>& f_se, double delta,
                      double m0, double damping, double tol, long max_iters) {
  double m = m0;
  for (long t = 0; t < max_iters; ++t) {
    double mn = f_se(m / delta);
    if (std::fabs(mn - m) <= tol) return mn;
    m = (1.0 - damping) * m + damping * mn;
  }
  return m;
}

}  // namespace lowramp
