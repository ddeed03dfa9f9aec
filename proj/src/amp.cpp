#include "lowramp/amp.hpp"

#include <map>

namespace lowramp {

std::string amp_variant_tag(AmpVariant v) {
  switch (v) {
    case AmpVariant::full: return "full";
    case AmpVariant::self_averaged: return "self-averaged";
    case AmpVariant::bayes_optimal: return "bayes";
  }
  throw ConfigError("unknown variant");
}

AmpVariant amp_variant_from_tag(const std::string& tag) {
  if (tag == "full") return AmpVariant::full;
  if (tag == "self-averaged" || tag == "self_averaged")
    return AmpVariant::self_averaged;
  if (tag == "bayes" || tag == "bayes_optimal") return AmpVariant::bayes_optimal;
  throw ConfigError("unknown variant: " + tag);
}

namespace {

RowMat initial_estimates(const MatrixXd& planted, const PriorSpec& prior,
                         const AmpConfig& cfg, int n) {
  const int r = prior.rank;
  RowMat x(n, r);
  if (cfg.init == AmpInit::planted) {
    if (planted.size() == 0)
      throw ConfigError("planted init requested but instance has no planted truth");
    if (planted.cols() != r)
      throw ShapeMismatch("planted rank differs from assumed prior rank");
    x = planted;
    return x;
  }
  std::mt19937_64 rng = make_rng(cfg.seed, 0xa3b1);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < r; ++k) x(i, k) = cfg.init_scale * normal(rng);
  return x;
}

void init_state(AmpState& st, int n, int r, bool shared_a) {
  st.x_hat.setZero(n, r);
  st.x_hat_old.setZero(n, r);
  st.sigma.setZero(n, r * r);
  st.b.setZero(n, r);
  st.b_old.setZero(n, r);
  st.shared_a = shared_a;
  int arows = shared_a ? 1 : n;
  st.a.setZero(arows, r * r);
  st.a_old.setZero(arows, r * r);
  st.t = 0;
  st.conv = std::numeric_limits<double>::infinity();
}

// row i of a stacked N x r^2 matrix <- flattened outer/covariance
inline void set_row_mat(RowMat& stack, int i, const MatrixXd& m) {
  Eigen::Map<MatrixXd>(stack.row(i).data(), m.rows(), m.cols()) = m;
}

// Symmetric empirical pair means, the 2/N^2 sums over i<j.
void empirical_noise_symmetric(const MatrixXd& s, const MatrixXd* r, int n,
                               double& inv_tilde, double& r_bar) {
  // diagonals are zero, so full sums halve cleanly
  inv_tilde = s.squaredNorm() / (static_cast<double>(n) * n);
  r_bar = r ? r->sum() / (static_cast<double>(n) * n) : 0.0;
}

double estimate_divergence_guard(const RowMat& x_hat) {
  return x_hat.cwiseAbs().maxCoeff();
}

}  // namespace

SymmetricAmp::SymmetricAmp(const ProblemInstance& inst, const PriorSpec& prior,
                           const AmpConfig& config)
    : inst_(inst), prior_(prior), cfg_(config) {
  cfg_.validate();
  if (inst.kind != InstanceKind::symmetric)
    throw ConfigError("SymmetricAmp needs a symmetric instance");
  const int n = inst.n;
  variant_ = cfg_.resolve_variant(n);
  lambda_ = cfg_.damping;
  init_state(state_, n, prior.rank, variant_ != AmpVariant::full);
  state_.x_hat = initial_estimates(inst.x0, prior, cfg_, n);

  if (variant_ == AmpVariant::full) {
    if (!inst.has_r())
      throw ConfigError("full variant needs the R matrix materialized");
    s2_ = inst.s.cwiseAbs2();
  } else {
    empirical_noise_symmetric(inst.s, inst.has_r() ? &inst.r : nullptr, n,
                              inv_tilde_, r_bar_);
    if (variant_ == AmpVariant::self_averaged && !inst.has_r())
      throw ConfigError("self-averaged variant needs R for the R-bar estimate");
  }
  if (variant_ == AmpVariant::bayes_optimal) {
    inv_delta_ = 1.0 / inst.noise().delta_fisher;
    inv_tilde_ = inv_delta_;
    r_bar_ = 0.0;
  }
}

void SymmetricAmp::step() {
  const int n = inst_.n;
  const int r = prior_.rank;
  const double sqn = std::sqrt(static_cast<double>(n));

  // B update, Onsager term on the previous-iteration estimate
  RowMat sx = inst_.s * state_.x_hat;  // N x r
  RowMat b_new(n, r);
  if (variant_ == AmpVariant::full) {
    RowMat ons = (s2_ * state_.sigma) / n;  // N x r^2
    for (int i = 0; i < n; ++i) {
      Eigen::Map<const MatrixXd> oi(ons.row(i).data(), r, r);
      b_new.row(i) =
          sx.row(i) / sqn -
          (oi * state_.x_hat_old.row(i).transpose()).transpose();
    }
  } else {
    MatrixXd sigma_bar = MatrixXd::Zero(r, r);
    for (int i = 0; i < n; ++i) sigma_bar += state_.sigma_at(i);
    sigma_bar = (inv_tilde_ / n) * sigma_bar;
    b_new = sx / sqn - state_.x_hat_old * sigma_bar.transpose();
  }

  // A update
  RowMat a_new;
  if (variant_ == AmpVariant::full) {
    RowMat p(n, r * r), tmat(n, r * r);
    for (int i = 0; i < n; ++i) {
      MatrixXd pi = state_.x_hat.row(i).transpose() * state_.x_hat.row(i);
      set_row_mat(p, i, pi);
      set_row_mat(tmat, i, pi + MatrixXd(state_.sigma_at(i)));
    }
    a_new = (s2_ * p - inst_.r * tmat) / n;
  } else {
    MatrixXd q = (state_.x_hat.transpose() * state_.x_hat) / n;  // r x r
    MatrixXd t_bar = q;
    for (int i = 0; i < n; ++i) t_bar += MatrixXd(state_.sigma_at(i)) / n;
    MatrixXd a_shared;
    if (variant_ == AmpVariant::bayes_optimal)
      a_shared = inv_delta_ * q;
    else
      a_shared = inv_tilde_ * q - r_bar_ * t_bar;
    a_new.resize(1, r * r);
    set_row_mat(a_new, 0, a_shared);
  }

  // damping on B and A
  state_.b_old = state_.b;
  state_.a_old = state_.a;
  state_.b = lambda_ * b_new + (1.0 - lambda_) * state_.b;
  state_.a = lambda_ * a_new + (1.0 - lambda_) * state_.a;

  // thresholding
  state_.x_hat_old = state_.x_hat;
  try {
    if (r == 1) {
      for (int i = 0; i < n; ++i) {
        InputResult res =
            f_in_scalar(prior_, state_.a(state_.shared_a ? 0 : i, 0),
                        state_.b(i, 0));
        state_.x_hat(i, 0) = res.mean(0);
        state_.sigma(i, 0) = res.covariance(0, 0);
      }
    } else {
      for (int i = 0; i < n; ++i) {
        InputResult res = f_in(prior_, MatrixXd(state_.a_at(i)),
                               state_.b.row(i).transpose());
        state_.x_hat.row(i) = res.mean.transpose();
        set_row_mat(state_.sigma, i, res.covariance);
      }
    }
  } catch (const NonConvergentIntegral& e) {
    throw DivergedEstimates(std::string("f_in failed: ") + e.what());
  }
  if (estimate_divergence_guard(state_.x_hat) > 1e8)
    throw DivergedEstimates("estimate norm exceeded 1e8");

  state_.conv = (state_.x_hat - state_.x_hat_old).rowwise().norm().sum() / n;
  ++state_.t;

  if (cfg_.adaptive_damping) {
    if (state_.conv > prev_conv_) {
      if (++conv_up_count_ >= 2) {
        lambda_ = std::max(0.5 * lambda_, 1e-3);
        conv_up_count_ = 0;
      }
    } else {
      conv_up_count_ = 0;
      lambda_ = std::min(1.1 * lambda_, cfg_.damping);
    }
    prev_conv_ = state_.conv;
  }
}

double SymmetricAmp::current_mse() const {
  if (inst_.x0.size() == 0 || !inst_.prior0)
    return std::numeric_limits<double>::quiet_NaN();
  if (inst_.x0.cols() != prior_.rank)
    return std::numeric_limits<double>::quiet_NaN();
  return empirical_mse(state_.x_hat, inst_.x0, natural_alignment(*inst_.prior0));
}

double SymmetricAmp::free_energy() const {
  return bethe_free_energy(inst_, prior_, state_);
}

AmpResult SymmetricAmp::run() {
  AmpResult out;
  bool track =
      cfg_.track_free_energy && inst_.n <= cfg_.exact_free_energy_max_n &&
      inst_.has_r();
  while (state_.conv * lambda_ > cfg_.tol && state_.t < cfg_.max_iters) {
    step();
    TraceRow row;
    row.t = state_.t;
    row.conv = state_.conv;
    row.mse = current_mse();
    row.free_energy =
        track ? free_energy() : std::numeric_limits<double>::quiet_NaN();
    if (track) state_.free_energy_trace.push_back(row.free_energy);
    out.trace.push_back(row);
  }
  out.converged = state_.conv * lambda_ <= cfg_.tol;
  out.state = state_;
  return out;
}

AmpResult run_symmetric(const ProblemInstance& inst, const PriorSpec& prior,
                        const AmpConfig& config) {
  SymmetricAmp amp(inst, prior, config);
  return amp.run();
}

// ---------------------------------------------------------------------------
// bipartite

BipartiteAmp::BipartiteAmp(const ProblemInstance& inst,
                           const PriorSpec& prior_u, const PriorSpec& prior_v,
                           const AmpConfig& config)
    : inst_(inst), prior_u_(prior_u), prior_v_(prior_v), cfg_(config) {
  cfg_.validate();
  if (inst.kind != InstanceKind::bipartite)
    throw ConfigError("BipartiteAmp needs a bipartite instance");
  if (prior_u.rank != prior_v.rank)
    throw ShapeMismatch("bipartite priors must share the rank");
  variant_ = cfg_.resolve_variant(inst.n);
  lambda_ = cfg_.damping;
  const int r = prior_u.rank;
  init_state(u_, inst.n, r, variant_ != AmpVariant::full);
  init_state(v_, inst.m, r, variant_ != AmpVariant::full);
  u_.x_hat = initial_estimates(inst.u0, prior_u, cfg_, inst.n);
  {
    AmpConfig vcfg = cfg_;
    vcfg.seed = mix_seed(cfg_.seed, 0xbee);
    v_.x_hat = initial_estimates(inst.v0, prior_v, vcfg, inst.m);
  }
  if (variant_ == AmpVariant::full) {
    if (!inst.has_r())
      throw ConfigError("full variant needs the R matrix materialized");
    s2_ = inst.s.cwiseAbs2();
  } else {
    inv_tilde_ = inst.s.squaredNorm() /
                 (static_cast<double>(inst.n) * inst.m);
    r_bar_ = inst.has_r()
                 ? inst.r.sum() / (static_cast<double>(inst.n) * inst.m)
                 : 0.0;
    if (variant_ == AmpVariant::self_averaged && !inst.has_r())
      throw ConfigError("self-averaged variant needs R for the R-bar estimate");
  }
  if (variant_ == AmpVariant::bayes_optimal) {
    inv_delta_ = 1.0 / inst.noise().delta_fisher;
    inv_tilde_ = inv_delta_;
    r_bar_ = 0.0;
  }
}

namespace {

// One side of the bipartite update. `s_to_side` maps the other side's
// estimates into this side's fields: rows index this side.
void bipartite_side_update(
    AmpState& side, const AmpState& other, const PriorSpec& prior,
    const RowMat* onsager_weights,  // S^2 oriented (this x other); null if shared
    const MatrixXd& s_oriented, const MatrixXd* r_oriented, double inv_tilde,
    double r_bar, double inv_delta, AmpVariant variant, double lambda,
    double n_scale /* 1/N factors use N of the U side */) {
  const int n = static_cast<int>(side.x_hat.rows());
  const int r = prior.rank;
  const double sqn = std::sqrt(n_scale);

  // The side's own estimate enters only through the Onsager term, so the
  // one-step-back value required there is the stored (pre-update) x_hat.
  RowMat sx = s_oriented * other.x_hat;
  RowMat b_new(n, r);
  if (variant == AmpVariant::full) {
    RowMat ons = (*onsager_weights * other.sigma) / n_scale;
    for (int i = 0; i < n; ++i) {
      Eigen::Map<const MatrixXd> oi(ons.row(i).data(), r, r);
      b_new.row(i) =
          sx.row(i) / sqn - (oi * side.x_hat.row(i).transpose()).transpose();
    }
  } else {
    MatrixXd sigma_bar = MatrixXd::Zero(r, r);
    const int m_other = static_cast<int>(other.x_hat.rows());
    for (int j = 0; j < m_other; ++j) sigma_bar += other.sigma_at(j);
    sigma_bar = (inv_tilde / n_scale) * sigma_bar;
    b_new = sx / sqn - side.x_hat * sigma_bar.transpose();
  }

  RowMat a_new;
  if (variant == AmpVariant::full) {
    const int m_other = static_cast<int>(other.x_hat.rows());
    RowMat p(m_other, r * r), tmat(m_other, r * r);
    for (int j = 0; j < m_other; ++j) {
      MatrixXd pj = other.x_hat.row(j).transpose() * other.x_hat.row(j);
      set_row_mat(p, j, pj);
      set_row_mat(tmat, j, pj + MatrixXd(other.sigma_at(j)));
    }
    a_new = (*onsager_weights * p - *r_oriented * tmat) / n_scale;
  } else {
    const int m_other = static_cast<int>(other.x_hat.rows());
    MatrixXd q = (other.x_hat.transpose() * other.x_hat) / n_scale;
    MatrixXd t_bar = q;
    for (int j = 0; j < m_other; ++j)
      t_bar += MatrixXd(other.sigma_at(j)) / n_scale;
    MatrixXd a_shared = variant == AmpVariant::bayes_optimal
                            ? MatrixXd(inv_delta * q)
                            : MatrixXd(inv_tilde * q - r_bar * t_bar);
    a_new.resize(1, r * r);
    set_row_mat(a_new, 0, a_shared);
  }

  side.b_old = side.b;
  side.a_old = side.a;
  side.b = lambda * b_new + (1.0 - lambda) * side.b;
  side.a = lambda * a_new + (1.0 - lambda) * side.a;

  side.x_hat_old = side.x_hat;
  try {
    if (r == 1) {
      for (int i = 0; i < n; ++i) {
        InputResult res = f_in_scalar(
            prior, side.a(side.shared_a ? 0 : i, 0), side.b(i, 0));
        side.x_hat(i, 0) = res.mean(0);
        side.sigma(i, 0) = res.covariance(0, 0);
      }
    } else {
      for (int i = 0; i < n; ++i) {
        InputResult res =
            f_in(prior, MatrixXd(side.a_at(i)), side.b.row(i).transpose());
        side.x_hat.row(i) = res.mean.transpose();
        set_row_mat(side.sigma, i, res.covariance);
      }
    }
  } catch (const NonConvergentIntegral& e) {
    throw DivergedEstimates(std::string("f_in failed: ") + e.what());
  }
  if (estimate_divergence_guard(side.x_hat) > 1e8)
    throw DivergedEstimates("estimate norm exceeded 1e8");
  side.conv =
      (side.x_hat - side.x_hat_old).rowwise().norm().sum() / n;
  ++side.t;
}

}  // namespace

void BipartiteAmp::step() {
  const double n_scale = static_cast<double>(inst_.n);
  MatrixXd st = inst_.s.transpose();
  RowMat s2t;
  const MatrixXd* r_ptr = nullptr;
  MatrixXd rt;
  if (variant_ == AmpVariant::full) {
    rt = inst_.r.transpose();
    r_ptr = &inst_.r;
  }
  // U first, then V with the updated U.
  if (variant_ == AmpVariant::full) {
    RowMat s2 = s2_;
    bipartite_side_update(u_, v_, prior_u_, &s2, inst_.s, r_ptr, inv_tilde_,
                          r_bar_, inv_delta_, variant_, lambda_, n_scale);
    RowMat s2tt = s2_.transpose();
    bipartite_side_update(v_, u_, prior_v_, &s2tt, st, &rt, inv_tilde_, r_bar_,
                          inv_delta_, variant_, lambda_, n_scale);
  } else {
    bipartite_side_update(u_, v_, prior_u_, nullptr, inst_.s, nullptr,
                          inv_tilde_, r_bar_, inv_delta_, variant_, lambda_,
                          n_scale);
    bipartite_side_update(v_, u_, prior_v_, nullptr, st, nullptr, inv_tilde_,
                          r_bar_, inv_delta_, variant_, lambda_, n_scale);
  }
  conv_ = u_.conv + v_.conv;
  ++t_;
  if (cfg_.adaptive_damping) {
    if (conv_ > prev_conv_) {
      if (++conv_up_count_ >= 2) {
        lambda_ = std::max(0.5 * lambda_, 1e-3);
        conv_up_count_ = 0;
      }
    } else {
      conv_up_count_ = 0;
      lambda_ = std::min(1.1 * lambda_, cfg_.damping);
    }
    prev_conv_ = conv_;
  }
}

double BipartiteAmp::free_energy() const {
  return bethe_free_energy_bipartite(inst_, prior_u_, prior_v_, u_, v_);
}

BipartiteAmpResult BipartiteAmp::run() {
  BipartiteAmpResult out;
  out.alpha = inst_.alpha();
  bool track = cfg_.track_free_energy &&
               inst_.n <= cfg_.exact_free_energy_max_n && inst_.has_r();
  while (conv_ * lambda_ > cfg_.tol && t_ < cfg_.max_iters) {
    step();
    TraceRow row;
    row.t = t_;
    row.conv = conv_;
    double mse = std::numeric_limits<double>::quiet_NaN();
    if (inst_.u0.size() && inst_.prior_u0 &&
        inst_.u0.cols() == prior_u_.rank)
      mse = empirical_mse(u_.x_hat, inst_.u0,
                          natural_alignment(*inst_.prior_u0));
    row.mse = mse;
    row.free_energy =
        track ? free_energy() : std::numeric_limits<double>::quiet_NaN();
    out.trace.push_back(row);
  }
  out.converged = conv_ * lambda_ <= cfg_.tol;
  out.u = u_;
  out.v = v_;
  return out;
}

BipartiteAmpResult run_bipartite(const ProblemInstance& inst,
                                 const PriorSpec& prior_u,
                                 const PriorSpec& prior_v,
                                 const AmpConfig& config) {
  BipartiteAmp amp(inst, prior_u, prior_v, config);
  return amp.run();
}

// ---------------------------------------------------------------------------
// variational mean field baseline

AmpResult mean_field_run(const ProblemInstance& inst, const PriorSpec& prior,
                         const AmpConfig& config) {
  AmpConfig cfg = config;
  cfg.validate();
  if (inst.kind != InstanceKind::symmetric)
    throw ConfigError("mean_field_run needs a symmetric instance");
  if (!inst.has_r()) throw ConfigError("mean field needs the R matrix");
  const int n = inst.n;
  const int r = prior.rank;
  const double sqn = std::sqrt(static_cast<double>(n));
  AmpState st;
  init_state(st, n, r, false);
  st.x_hat = initial_estimates(inst.x0, prior, cfg, n);
  MatrixXd s2r = inst.s.cwiseAbs2() - inst.r;  // (S^2 - R)

  AmpResult out;
  double lambda = cfg.damping;
  while (st.conv * lambda > cfg.tol && st.t < cfg.max_iters) {
    RowMat b_new = (inst.s * st.x_hat) / sqn;
    RowMat tmat(n, r * r);
    for (int i = 0; i < n; ++i)
      set_row_mat(tmat, i,
                  MatrixXd(st.x_hat.row(i).transpose() * st.x_hat.row(i)) +
                      MatrixXd(st.sigma_at(i)));
    RowMat a_new = (s2r * tmat) / n;
    st.b_old = st.b;
    st.a_old = st.a;
    st.b = lambda * b_new + (1.0 - lambda) * st.b;
    st.a = lambda * a_new + (1.0 - lambda) * st.a;
    st.x_hat_old = st.x_hat;
    try {
      for (int i = 0; i < n; ++i) {
        InputResult res =
            f_in(prior, MatrixXd(st.a_at(i)), st.b.row(i).transpose());
        st.x_hat.row(i) = res.mean.transpose();
        set_row_mat(st.sigma, i, res.covariance);
      }
    } catch (const NonConvergentIntegral& e) {
      throw DivergedEstimates(std::string("f_in failed: ") + e.what());
    }
    if (estimate_divergence_guard(st.x_hat) > 1e8)
      throw DivergedEstimates("estimate norm exceeded 1e8");
    st.conv = (st.x_hat - st.x_hat_old).rowwise().norm().sum() / n;
    ++st.t;
    TraceRow row;
    row.t = st.t;
    row.conv = st.conv;
    row.mse = std::numeric_limits<double>::quiet_NaN();
    if (inst.x0.size() && inst.prior0 && inst.x0.cols() == r)
      row.mse = empirical_mse(st.x_hat, inst.x0, natural_alignment(*inst.prior0));
    row.free_energy = std::numeric_limits<double>::quiet_NaN();
    out.trace.push_back(row);
  }
  out.converged = st.conv * lambda <= cfg.tol;
  out.state = st;
  return out;
}

// ---------------------------------------------------------------------------
// Bethe free energy
//
// Pair term uses the stationarity-consistent combination
//   S x.x/sqrt(N) + (R-S^2)/(2N) Tr(T_i T_j) + S^2/(2N) Tr(sigma_i sigma_j),
// which reduces to the classic TAP form at R = S^2 and whose stationary
// points are exactly the fixed points of the iteration.

namespace {

struct NodeMoments {
  RowMat x;      // N x r
  RowMat sig;    // N x r^2
  RowMat tmat;   // N x r^2
  VectorXd logz; // N
};

// Estimators come from the state (the update loop keeps them equal to
// f_in(A,B)); only log Z needs evaluating.
NodeMoments state_moments(const PriorSpec& prior, const AmpState& st) {
  const int n = static_cast<int>(st.b.rows());
  const int r = prior.rank;
  NodeMoments nm;
  nm.x = st.x_hat;
  nm.sig = st.sigma;
  nm.tmat.resize(n, r * r);
  nm.logz.resize(n);
  for (int i = 0; i < n; ++i) {
    InputResult res =
        f_in(prior, MatrixXd(st.a_at(i)), st.b.row(i).transpose());
    nm.logz(i) = res.log_z;
    MatrixXd ti = MatrixXd(st.sigma_at(i)) +
                  st.x_hat.row(i).transpose() * st.x_hat.row(i);
    set_row_mat(nm.tmat, i, ti);
  }
  return nm;
}

double site_sum(const AmpState& st, const NodeMoments& nm) {
  const int n = static_cast<int>(st.b.rows());
  double acc = 0;
  for (int i = 0; i < n; ++i) {
    acc += nm.logz(i) - st.b.row(i).dot(nm.x.row(i));
    acc += 0.5 * (st.a_at(i).array() *
                  Eigen::Map<const MatrixXd>(nm.tmat.row(i).data(),
                                             st.rank(), st.rank())
                      .array())
                     .sum();
  }
  return acc;
}

}  // namespace

double bethe_free_energy(const ProblemInstance& inst, const PriorSpec& prior,
                         const AmpState& state) {
  if (inst.kind != InstanceKind::symmetric)
    throw ConfigError("bethe_free_energy: symmetric instance expected");
  if (!inst.has_r()) throw ConfigError("bethe_free_energy needs R");
  const int n = inst.n;
  const double sqn = std::sqrt(static_cast<double>(n));
  NodeMoments nm = state_moments(prior, state);
  double acc = site_sum(state, nm);
  MatrixXd s2 = inst.s.cwiseAbs2();
  MatrixXd rm = inst.r - s2;
  // 1/2 sum_ij S_ij x_i.x_j / sqrt(N)
  acc += 0.5 * (nm.x.array() * (inst.s * nm.x).array()).sum() / sqn;
  // 1/2 sum_ij (R-S^2)_ij <T_i, T_j> / (2N)
  acc += 0.25 * (nm.tmat.array() * (rm * nm.tmat).array()).sum() / n;
  // 1/2 sum_ij S^2_ij <sig_i, sig_j> / (2N)
  acc += 0.25 * (nm.sig.array() * (s2 * nm.sig).array()).sum() / n;
  return acc;
}

double bethe_free_energy_bipartite(const ProblemInstance& inst,
                                   const PriorSpec& prior_u,
                                   const PriorSpec& prior_v, const AmpState& u,
                                   const AmpState& v) {
  if (inst.kind != InstanceKind::bipartite)
    throw ConfigError("bethe_free_energy_bipartite: bipartite instance expected");
  if (!inst.has_r()) throw ConfigError("bethe free energy needs R");
  const double sqn = std::sqrt(static_cast<double>(inst.n));
  NodeMoments nu = state_moments(prior_u, u);
  NodeMoments nv = state_moments(prior_v, v);
  double acc = site_sum(u, nu) + site_sum(v, nv);
  MatrixXd s2 = inst.s.cwiseAbs2();
  MatrixXd rm = inst.r - s2;
  acc += (nu.x.array() * (inst.s * nv.x).array()).sum() / sqn;
  acc += 0.5 * (nu.tmat.array() * (rm * nv.tmat).array()).sum() / inst.n;
  acc += 0.5 * (nu.sig.array() * (s2 * nv.sig).array()).sum() / inst.n;
  return acc;
}

double bethe_gradient_max_norm(const ProblemInstance& inst,
                               const PriorSpec& prior, const AmpState& state,
                               double h) {
  if (inst.kind != InstanceKind::symmetric)
    throw ConfigError("bethe_gradient_max_norm: symmetric instance expected");
  if (!inst.has_r()) throw ConfigError("needs R");
  const int n = inst.n;
  const int r = prior.rank;
  const double sqn = std::sqrt(static_cast<double>(n));
  NodeMoments nm = state_moments(prior, state);
  MatrixXd s2 = inst.s.cwiseAbs2();
  MatrixXd rm = inst.r - s2;
  // aggregates seen by node i (S_ii = 0 keeps self terms out)
  RowMat sx = inst.s * nm.x;          // N x r
  RowMat rmt = rm * nm.tmat;          // N x r^2
  RowMat s2sig = s2 * nm.sig;         // N x r^2

  auto node_value = [&](int i, const MatrixXd& ai,
                        const VectorXd& bi) -> double {
    InputResult res = f_in(prior, ai, bi);
    MatrixXd t = res.covariance + res.mean * res.mean.transpose();
    double val = res.log_z - bi.dot(res.mean) + 0.5 * (ai.array() * t.array()).sum();
    val += res.mean.dot(sx.row(i)) / sqn;
    val += 0.5 *
           (t.array() *
            Eigen::Map<const MatrixXd>(rmt.row(i).data(), r, r).array())
               .sum() /
           n;
    val += 0.5 *
           (res.covariance.array() *
            Eigen::Map<const MatrixXd>(s2sig.row(i).data(), r, r).array())
               .sum() /
           n;
    return val;
  };

  double gmax = 0;
  for (int i = 0; i < n; ++i) {
    MatrixXd ai = state.a_at(i);
    VectorXd bi = state.b.row(i).transpose();
    for (int k = 0; k < r; ++k) {
      VectorXd bp = bi, bm = bi;
      bp(k) += h;
      bm(k) -= h;
      gmax = std::max(gmax,
                      std::fabs(node_value(i, ai, bp) - node_value(i, ai, bm)) /
                          (2 * h));
    }
    for (int k = 0; k < r; ++k)
      for (int l = k; l < r; ++l) {
        MatrixXd ap = ai, am = ai;
        ap(k, l) += h;
        am(k, l) -= h;
        if (l != k) {
          ap(l, k) += h;
          am(l, k) -= h;
        }
        gmax = std::max(
            gmax,
            std::fabs(node_value(i, ap, bi) - node_value(i, am, bi)) / (2 * h));
      }
  }
  return gmax;
}

}  // namespace lowramp
