#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "lowramp/amp.hpp"

using namespace lowramp;

namespace {

// Direct loop evaluation of the symmetric update equations, kept independent
// of the solver's matrix algebra.
struct BruteState {
  // row-major stacks so that row(i).data() is the flattened r x r block
  RowMat x, x_old, sig, b, a;
};

void brute_step(const ProblemInstance& inst, const PriorSpec& prior,
                double lambda, BruteState& st) {
  const int n = inst.n, r = prior.rank;
  const double sqn = std::sqrt(double(n));
  RowMat b_new = RowMat::Zero(n, r), a_new = RowMat::Zero(n, r * r);
  for (int i = 0; i < n; ++i) {
    VectorXd sum_sx = VectorXd::Zero(r);
    MatrixXd sum_ons = MatrixXd::Zero(r, r);
    MatrixXd sum_a = MatrixXd::Zero(r, r);
    for (int k = 0; k < n; ++k) {
      double s = inst.s(k, i);
      double rr = inst.r(k, i);
      VectorXd xk = st.x.row(k).transpose();
      MatrixXd sk = Eigen::Map<const MatrixXd>(st.sig.row(k).data(), r, r);
      sum_sx += s * xk;
      sum_ons += s * s * sk;
      sum_a += s * s * xk * xk.transpose() - rr * (xk * xk.transpose() + sk);
    }
    b_new.row(i) =
        (sum_sx / sqn - sum_ons / n * st.x_old.row(i).transpose()).transpose();
    MatrixXd ai = sum_a / n;
    Eigen::Map<MatrixXd>(a_new.row(i).data(), r, r) = ai;
  }
  st.b = lambda * b_new + (1 - lambda) * st.b;
  st.a = lambda * a_new + (1 - lambda) * st.a;
  st.x_old = st.x;
  for (int i = 0; i < n; ++i) {
    MatrixXd ai = Eigen::Map<const MatrixXd>(st.a.row(i).data(), r, r);
    InputResult res = f_in(prior, ai, st.b.row(i).transpose());
    st.x.row(i) = res.mean.transpose();
    Eigen::Map<MatrixXd>(st.sig.row(i).data(), r, r) = res.covariance;
  }
}

BruteState from_amp_state(const AmpState& s) {
  BruteState b;
  b.x = s.x_hat;
  b.x_old = s.x_hat_old;
  b.sig = s.sigma;
  b.b = s.b;
  b.a = s.a;  // full variant: per-node rows
  return b;
}

}  // namespace

TEST_CASE("small-instance oracle reproduces the full-variant iteration") {
  for (int rank : {1, 2}) {
    PriorSpec prior =
        rank == 1 ? PriorSpec::ising(0.6) : PriorSpec::community(2);
    ProblemInstance inst = generate_symmetric(
        prior, ChannelSpec::gaussian_noise(1.0), 4, 21);
    AmpConfig cfg;
    cfg.variant = AmpVariant::full;
    cfg.damping = 0.7;
    cfg.seed = 5;
    SymmetricAmp amp(inst, prior, cfg);
    BruteState oracle = from_amp_state(amp.state());
    for (int t = 0; t < 4; ++t) {
      amp.step();
      brute_step(inst, prior, 0.7, oracle);
      CAPTURE(rank);
      CAPTURE(t);
      CHECK((amp.state().x_hat - oracle.x).cwiseAbs().maxCoeff() < 1e-13);
      CHECK((amp.state().b - oracle.b).cwiseAbs().maxCoeff() < 1e-13);
      CHECK((amp.state().a - oracle.a).cwiseAbs().maxCoeff() < 1e-13);
    }
  }
}

TEST_CASE("onsager correction multiplies the previous-iteration estimate") {
  // freeze a state where x_hat and x_hat_old differ; the exact B must use
  // x_hat_old in the correction and x_hat in the score sum
  const int n = 8;
  PriorSpec prior = PriorSpec::ising(0.5);
  ProblemInstance inst =
      generate_quenched(ChannelSpec::conventional(0.8), n, 0, 2);
  AmpConfig cfg;
  cfg.variant = AmpVariant::full;
  cfg.damping = 1.0;
  SymmetricAmp amp(inst, prior, cfg);
  AmpState& st = amp.mutable_state();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unif(-0.9, 0.9);
  for (int i = 0; i < n; ++i) {
    st.x_hat(i, 0) = unif(rng);
    st.x_hat_old(i, 0) = unif(rng);
    st.sigma(i, 0) = 1.0 - st.x_hat(i, 0) * st.x_hat(i, 0);
  }
  MatrixXd x = st.x_hat, x_old = st.x_hat_old;
  amp.step();
  const double beta = 0.8, sqn = std::sqrt(double(n));
  for (int i = 0; i < n; ++i) {
    double field = 0, ons = 0, ons_wrong = 0;
    for (int k = 0; k < n; ++k) {
      if (k == i) continue;
      double y = inst.y_sym(k, i);
      field += beta * y * x(k, 0) / sqn;
      ons += beta * beta * y * y * (1 - x(k, 0) * x(k, 0)) / n;
      ons_wrong = ons;
    }
    double expect = std::tanh(field - x_old(i, 0) * ons);
    double wrong = std::tanh(field - x(i, 0) * ons_wrong);
    CHECK(amp.state().x_hat(i, 0) == doctest::Approx(expect).epsilon(1e-12));
    if (std::fabs(expect - wrong) > 1e-9)
      CHECK(amp.state().x_hat(i, 0) != doctest::Approx(wrong).epsilon(1e-12));
  }
}

TEST_CASE("fixed point of the undamped map stays fixed under damping") {
  PriorSpec prior = PriorSpec::gauss_bernoulli_joint(0.3, 1);
  ProblemInstance inst = generate_symmetric(
      prior, ChannelSpec::gaussian_noise(0.02), 300, 31);
  AmpConfig cfg;
  cfg.variant = AmpVariant::full;
  cfg.damping = 1.0;
  cfg.tol = 1e-13;
  cfg.max_iters = 4000;
  cfg.init = AmpInit::planted;
  AmpResult res = run_symmetric(inst, prior, cfg);
  REQUIRE(res.converged);
  // resume from the fixed point with damping 0.3: nothing should move
  AmpConfig cfg2 = cfg;
  cfg2.damping = 0.3;
  SymmetricAmp amp(inst, prior, cfg2);
  amp.mutable_state() = res.state;
  amp.step();
  CHECK(amp.state().conv < 1e-10);
}

TEST_CASE("bayes-optimal variant keeps A symmetric PSD") {
  PriorSpec prior = PriorSpec::community(3);
  ProblemInstance inst =
      generate_symmetric(prior, ChannelSpec::sbm(0.5, 3.0), 400, 7);
  AmpConfig cfg;
  cfg.variant = AmpVariant::bayes_optimal;
  cfg.damping = 0.8;
  cfg.max_iters = 60;
  SymmetricAmp amp(inst, prior, cfg);
  for (int t = 0; t < 40; ++t) {
    amp.step();
    MatrixXd a = amp.state().a_at(0);
    CHECK((a - a.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(a);
    CHECK(es.eigenvalues().minCoeff() >= -1e-12);
  }
}

TEST_CASE("deterministic given instance, config, seed") {
  PriorSpec prior = PriorSpec::rademacher_bernoulli(0.2);
  ProblemInstance inst = generate_symmetric(
      prior, ChannelSpec::gaussian_noise(0.03), 200, 3);
  AmpConfig cfg;
  cfg.seed = 11;
  cfg.max_iters = 50;
  AmpResult a = run_symmetric(inst, prior, cfg);
  AmpResult b = run_symmetric(inst, prior, cfg);
  CHECK((a.state.x_hat - b.state.x_hat).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("planted init stays on the informative branch below delta_dyn") {
  // the planted start has zero error, strictly below the informative fixed
  // point, so the error relaxes upward to it; the invariant is that it never
  // escapes toward the prior variance
  PriorSpec prior = PriorSpec::gauss_bernoulli_joint(0.1, 1);
  ProblemInstance inst = generate_symmetric(
      prior, ChannelSpec::gaussian_noise(0.005), 2000, 5);
  AmpConfig cfg;
  cfg.init = AmpInit::planted;
  cfg.variant = AmpVariant::bayes_optimal;
  cfg.max_iters = 10;
  cfg.track_free_energy = false;
  AmpResult res = run_symmetric(inst, prior, cfg);
  REQUIRE(res.trace.size() == 10);
  for (size_t t = 1; t < res.trace.size(); ++t) {
    CHECK(res.trace[t].mse < 0.05);  // far from the random-guess error 0.1
    CHECK(res.trace[t].mse <= res.trace[0].mse + 5e-3);
  }
}

TEST_CASE("divergence raises instead of silently regularizing") {
  // mismatched variance-like term drives (1 + A) negative for the gaussian slab
  PriorSpec prior = PriorSpec::spherical(1);
  ProblemInstance inst = generate_quenched(
      ChannelSpec::gaussian_noise(1.0).with_assumed(
          ChannelSpec::conventional(2.0)),
      60, 0, 13);
  AmpConfig cfg;
  cfg.variant = AmpVariant::full;
  cfg.damping = 1.0;
  cfg.max_iters = 400;
  cfg.init_scale = 0.5;
  CHECK_THROWS_AS(run_symmetric(inst, prior, cfg), DivergedEstimates);
}

// ---------------------------------------------------------------------------
// bipartite

TEST_CASE("bipartite small-instance oracle") {
  PriorSpec pu = PriorSpec::ising(0.5);
  PriorSpec pv = PriorSpec::rademacher_bernoulli(0.6);
  ProblemInstance inst =
      generate_bipartite(pu, pv, ChannelSpec::gaussian_noise(1.0), 3, 3, 17);
  AmpConfig cfg;
  cfg.variant = AmpVariant::full;
  cfg.damping = 1.0;
  cfg.seed = 9;
  BipartiteAmp amp(inst, pu, pv, cfg);
  // mirror by hand: U update sees V, then V sees the updated U
  MatrixXd u = amp.state_u().x_hat, u_old = amp.state_u().x_hat_old;
  MatrixXd v = amp.state_v().x_hat, v_old = amp.state_v().x_hat_old;
  VectorXd su = amp.state_u().sigma.col(0), sv = amp.state_v().sigma.col(0);
  const int n = 3, m = 3;
  const double sqn = std::sqrt(double(n));
  for (int t = 0; t < 3; ++t) {
    MatrixXd u_new(n, 1), v_new(m, 1);
    VectorXd su_new(n), sv_new(m);
    for (int i = 0; i < n; ++i) {
      double field = 0, ons = 0, a = 0;
      for (int l = 0; l < m; ++l) {
        double s = inst.s(i, l), rr = inst.r(i, l);
        field += s * v(l, 0) / sqn;
        ons += s * s * sv(l) / n;
        a += (s * s * v(l, 0) * v(l, 0) - rr * (v(l, 0) * v(l, 0) + sv(l))) / n;
      }
      double b = field - ons * u(i, 0);  // own estimate, one step back
      InputResult res = f_in_scalar(pu, a, b);
      u_new(i, 0) = res.mean(0);
      su_new(i) = res.covariance(0, 0);
    }
    u_old = u;
    u = u_new;
    su = su_new;
    for (int j = 0; j < m; ++j) {
      double field = 0, ons = 0, a = 0;
      for (int k = 0; k < n; ++k) {
        double s = inst.s(k, j), rr = inst.r(k, j);
        field += s * u(k, 0) / sqn;
        ons += s * s * su(k) / n;
        a += (s * s * u(k, 0) * u(k, 0) - rr * (u(k, 0) * u(k, 0) + su(k))) / n;
      }
      double b = field - ons * v(j, 0);  // own estimate, one step back
      InputResult res = f_in_scalar(pv, a, b);
      v_new(j, 0) = res.mean(0);
      sv_new(j) = res.covariance(0, 0);
    }
    v_old = v;
    v = v_new;
    sv = sv_new;
    amp.step();
    CHECK((amp.state_u().x_hat - u).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((amp.state_v().x_hat - v).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("hopfield configuration collapses to the scalar TAP recursions") {
  const int n = 48, m = 24;
  const double beta = 0.4, alpha = double(m) / n;
  PriorSpec pu = PriorSpec::ising(0.5);
  PriorSpec pv = PriorSpec::gaussian(VectorXd::Zero(1),
                                     MatrixXd::Constant(1, 1, 1.0 / beta));
  ProblemInstance inst =
      generate_quenched(ChannelSpec::conventional(beta), n, m, 8);
  AmpConfig cfg;
  cfg.variant = AmpVariant::full;
  cfg.damping = 1.0;
  cfg.seed = 14;
  cfg.init_scale = 0.3;
  BipartiteAmp amp(inst, pu, pv, cfg);
  amp.step();  // first step builds consistent sigmas
  const MatrixXd& y = inst.y_rect;
  const double sqn = std::sqrt(double(n));
  MatrixXd j = y * y.transpose() / n;  // Hebb couplings, diagonal = alpha
  VectorXd u = amp.state_u().x_hat.col(0);
  VectorXd u_prev = amp.state_u().x_hat_old.col(0);
  VectorXd v = amp.state_v().x_hat.col(0);
  auto q_of = [&](const VectorXd& w) { return w.squaredNorm() / n; };
  auto c_of = [&](double q) { return 1.0 / beta - (1.0 - q); };
  for (int t = 0; t < 6; ++t) {
    double c_prev = c_of(q_of(u));
    // magnetization update: tanh[(beta/sqrt N) Y v - (alpha/C) u]
    VectorXd u_new =
        ((beta / sqn) * (y * v) - (alpha / c_prev) * u).array().tanh();
    // closed form on u alone, hidden field eliminated through
    // atanh(u) = (beta/sqrt N) Y v_prev - (alpha/C_pp) u_prev
    if (t > 0) {
      double c_pp = c_of(q_of(u_prev));
      VectorXd atanh_u = u.array().atanh();
      VectorXd closed =
          ((j * u - (1.0 - q_of(u)) * (atanh_u + (alpha / c_pp) * u_prev)) /
               c_prev -
           (alpha / c_prev) * u)
              .array()
              .tanh();
      CHECK((u_new - closed).cwiseAbs().maxCoeff() < 1e-10);
    }
    double q_new = q_of(u_new);
    double c_new = c_of(q_new);
    // hidden-unit update: [(1/(beta sqrt N)) Y^T u - (1-q) v]/C
    VectorXd v_new =
        ((y.transpose() * u_new) / (beta * sqn) - (1.0 - q_new) * v) / c_new;
    amp.step();
    CHECK((amp.state_u().x_hat.col(0) - u_new).cwiseAbs().maxCoeff() < 1e-11);
    CHECK((amp.state_v().x_hat.col(0) - v_new).cwiseAbs().maxCoeff() < 1e-11);
    u_prev = u;
    u = u_new;
    v = v_new;
  }
  BipartiteAmpResult res = BipartiteAmp(inst, pu, pv, cfg).run();
  CHECK(res.alpha == doctest::Approx(alpha));
}

TEST_CASE("mean field baseline") {
  SUBCASE("two-node field is the plain score sum") {
    ProblemInstance inst = generate_symmetric(
        PriorSpec::ising(0.5), ChannelSpec::gaussian_noise(0.5), 2, 3);
    AmpConfig cfg;
    cfg.damping = 1.0;
    cfg.max_iters = 1;
    cfg.seed = 2;
    AmpConfig full = cfg;
    full.variant = AmpVariant::full;
    SymmetricAmp ref(inst, PriorSpec::ising(0.5), full);
    VectorXd x0 = ref.state().x_hat.col(0);
    AmpResult res = mean_field_run(inst, PriorSpec::ising(0.5), cfg);
    double sq2 = std::sqrt(2.0);
    CHECK(res.state.b(0, 0) ==
          doctest::Approx(inst.s(1, 0) * x0(1) / sq2).epsilon(1e-12));
    CHECK(res.state.b(1, 0) ==
          doctest::Approx(inst.s(0, 1) * x0(0) / sq2).epsilon(1e-12));
  }
  SUBCASE("identical trajectories when S^2 = R and sigma vanishes") {
    ProblemInstance inst = generate_quenched(
        ChannelSpec::conventional(0.7), 40, 0, 5);
    PriorSpec prior = PriorSpec::bernoulli(1.0);  // deterministic spins
    AmpConfig cfg;
    cfg.variant = AmpVariant::full;
    cfg.damping = 1.0;
    cfg.max_iters = 6;
    cfg.seed = 4;
    AmpResult lr = run_symmetric(inst, prior, cfg);
    AmpResult mf = mean_field_run(inst, prior, cfg);
    CHECK((lr.state.x_hat - mf.state.x_hat).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((lr.state.b - mf.state.b).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("mean field does not beat the message passer on sparse PCA") {
    PriorSpec prior = PriorSpec::gauss_bernoulli_joint(0.1, 1);
    ProblemInstance inst = generate_symmetric(
        prior, ChannelSpec::gaussian_noise(0.005), 3000, 9);
    AmpConfig cfg;
    cfg.damping = 0.7;
    cfg.max_iters = 300;
    cfg.tol = 1e-7;
    cfg.seed = 6;
    cfg.track_free_energy = false;
    AmpConfig lr_cfg = cfg;
    lr_cfg.variant = AmpVariant::bayes_optimal;
    AmpResult lr = run_symmetric(inst, prior, lr_cfg);
    double lr_mse = empirical_mse(lr.state.x_hat, inst.x0, Alignment::sign);
    double mf_mse;
    try {
      AmpResult mf = mean_field_run(inst, prior, cfg);
      mf_mse = empirical_mse(mf.state.x_hat, inst.x0, Alignment::sign);
    } catch (const DivergedEstimates&) {
      mf_mse = moments(prior).second_moment(0, 0);  // random-guess error
    }
    MESSAGE("mean-field mse = ", mf_mse, ", low-ramp mse = ", lr_mse);
    CHECK(mf_mse >= lr_mse - 1e-3);
  }
}

TEST_CASE("bethe free energy") {
  SUBCASE("zero fields with a normalized prior give zero") {
    PriorSpec prior = PriorSpec::gaussian(VectorXd::Zero(1),
                                          MatrixXd::Identity(1, 1));
    ProblemInstance inst =
        generate_symmetric(prior, ChannelSpec::gaussian_noise(0.5), 30, 2);
    AmpConfig cfg;
    cfg.variant = AmpVariant::full;
    SymmetricAmp amp(inst, prior, cfg);
    AmpState st = amp.state();
    st.x_hat.setZero();
    st.sigma.setZero();
    st.b.setZero();
    st.a.setZero();
    CHECK(bethe_free_energy(inst, prior, st) == doctest::Approx(0.0));
  }
  SUBCASE("gradient vanishes at a converged fixed point") {
    PriorSpec prior = PriorSpec::bernoulli(0.3);
    ProblemInstance inst = generate_symmetric(
        prior, ChannelSpec::gaussian_noise(0.05), 250, 12);
    AmpConfig cfg;
    cfg.variant = AmpVariant::full;
    cfg.damping = 0.6;
    cfg.tol = 1e-12;
    cfg.max_iters = 4000;
    cfg.init = AmpInit::planted;
    AmpResult res = run_symmetric(inst, prior, cfg);
    REQUIRE(res.converged);
    CHECK(bethe_gradient_max_norm(inst, prior, res.state) < 1e-6);
  }
  SUBCASE("informative branch has larger free energy below the IT point") {
    // two balanced groups: first-order bifurcation at delta_c = 1, both
    // branches coexist just above it; sbm scores stay O(1) so the full
    // per-node variant is well behaved
    const double rho = 0.1, delta = 1.02;
    const double mu = std::sqrt(0.25 / delta);
    PriorSpec prior = PriorSpec::two_balanced(rho);
    ProblemInstance inst =
        generate_symmetric(prior, ChannelSpec::sbm(0.5, mu), 2000, 3);
    AmpConfig cfg;
    cfg.variant = AmpVariant::full;
    cfg.damping = 0.5;
    cfg.tol = 1e-10;
    cfg.max_iters = 3000;
    cfg.track_free_energy = false;
    AmpConfig inf_cfg = cfg;
    inf_cfg.init = AmpInit::planted;
    AmpResult inf = run_symmetric(inst, prior, inf_cfg);
    AmpConfig uninf_cfg = cfg;
    uninf_cfg.init = AmpInit::random;
    uninf_cfg.seed = 19;
    AmpResult uninf = run_symmetric(inst, prior, uninf_cfg);
    double phi_inf = bethe_free_energy(inst, prior, inf.state);
    double phi_uninf = bethe_free_energy(inst, prior, uninf.state);
    double mse_inf = empirical_mse(inf.state.x_hat, inst.x0, Alignment::sign);
    double mse_uninf =
        empirical_mse(uninf.state.x_hat, inst.x0, Alignment::sign);
    MESSAGE("phi_inf=", phi_inf, " phi_uninf=", phi_uninf,
            " mse_inf=", mse_inf, " mse_uninf=", mse_uninf);
    REQUIRE(mse_inf < mse_uninf);
    CHECK(phi_inf > phi_uninf);
  }
}

TEST_CASE("adaptive damping heuristic stays within bounds") {
  PriorSpec prior = PriorSpec::gauss_bernoulli_joint(0.1, 1);
  ProblemInstance inst = generate_symmetric(
      prior, ChannelSpec::gaussian_noise(0.009), 600, 4);
  AmpConfig cfg;
  cfg.adaptive_damping = true;
  cfg.damping = 0.9;
  cfg.max_iters = 400;
  cfg.tol = 1e-9;
  SymmetricAmp amp(inst, prior, cfg);
  for (int t = 0; t < 200 && amp.state().conv * amp.damping() > cfg.tol; ++t) {
    amp.step();
    CHECK(amp.damping() <= 0.9 + 1e-12);
    CHECK(amp.damping() >= 1e-3 - 1e-12);
  }
}
