#include "lowramp/priors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <map>

namespace lowramp {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw InvalidPrior(msg);
}

void check_rho(double rho) {
  require(rho > 0.0 && rho <= 1.0, "rho must lie in (0, 1]");
}

}  // namespace

std::string prior_tag(PriorFamily f) {
  switch (f) {
    case PriorFamily::ising: return "ising";
    case PriorFamily::bernoulli: return "bernoulli";
    case PriorFamily::rademacher_bernoulli: return "rademacher_bernoulli";
    case PriorFamily::gauss_bernoulli_joint: return "gauss_bernoulli_joint";
    case PriorFamily::gauss_bernoulli_indep: return "gauss_bernoulli_indep";
    case PriorFamily::gaussian: return "gaussian";
    case PriorFamily::community: return "community";
    case PriorFamily::two_balanced: return "two_balanced";
    case PriorFamily::spherical: return "spherical";
  }
  throw InvalidPrior("unknown prior family");
}

PriorFamily prior_family_from_tag(const std::string& tag) {
  static const std::map<std::string, PriorFamily> m = {
      {"ising", PriorFamily::ising},
      {"bernoulli", PriorFamily::bernoulli},
      {"rademacher_bernoulli", PriorFamily::rademacher_bernoulli},
      {"gauss_bernoulli_joint", PriorFamily::gauss_bernoulli_joint},
      {"gauss_bernoulli_indep", PriorFamily::gauss_bernoulli_indep},
      {"gaussian", PriorFamily::gaussian},
      {"community", PriorFamily::community},
      {"two_balanced", PriorFamily::two_balanced},
      {"spherical", PriorFamily::spherical}};
  auto it = m.find(tag);
  if (it == m.end()) throw InvalidPrior("unknown prior tag: " + tag);
  return it->second;
}

PriorSpec PriorSpec::ising(double rho) {
  check_rho(rho);
  PriorSpec p;
  p.family = PriorFamily::ising;
  p.rank = 1;
  p.rho = rho;
  return p;
}

PriorSpec PriorSpec::bernoulli(double rho) {
  check_rho(rho);
  PriorSpec p;
  p.family = PriorFamily::bernoulli;
  p.rank = 1;
  p.rho = rho;
  return p;
}

PriorSpec PriorSpec::rademacher_bernoulli(double rho) {
  check_rho(rho);
  PriorSpec p;
  p.family = PriorFamily::rademacher_bernoulli;
  p.rank = 1;
  p.rho = rho;
  return p;
}

PriorSpec PriorSpec::gauss_bernoulli_joint(double rho, int rank) {
  check_rho(rho);
  require(rank >= 1, "rank must be >= 1");
  PriorSpec p;
  p.family = PriorFamily::gauss_bernoulli_joint;
  p.rank = rank;
  p.rho = rho;
  return p;
}

PriorSpec PriorSpec::gauss_bernoulli_indep(double rho, int rank) {
  check_rho(rho);
  require(rank >= 1, "rank must be >= 1");
  require(rank <= 16, "independently sparse prior enumerates 2^r patterns; rank capped at 16");
  PriorSpec p;
  p.family = PriorFamily::gauss_bernoulli_indep;
  p.rank = rank;
  p.rho = rho;
  return p;
}

PriorSpec PriorSpec::gaussian(const VectorXd& mu, const MatrixXd& cov) {
  require(mu.size() >= 1, "gaussian prior needs a mean vector");
  require(cov.rows() == cov.cols() && cov.rows() == mu.size(),
          "gaussian covariance shape mismatch");
  require(cov.isApprox(cov.transpose(), 1e-12), "covariance must be symmetric");
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(cov);
  require(es.eigenvalues().minCoeff() > 0.0,
          "covariance must be positive definite");
  PriorSpec p;
  p.family = PriorFamily::gaussian;
  p.rank = static_cast<int>(mu.size());
  p.mu = mu;
  p.cov = cov;
  return p;
}

PriorSpec PriorSpec::community(int rank) {
  require(rank >= 2, "community prior needs rank >= 2");
  PriorSpec p;
  p.family = PriorFamily::community;
  p.rank = rank;
  return p;
}

PriorSpec PriorSpec::two_balanced(double rho) {
  require(rho > 0.0 && rho < 1.0, "two_balanced rho must lie in (0,1)");
  PriorSpec p;
  p.family = PriorFamily::two_balanced;
  p.rank = 1;
  p.rho = rho;
  return p;
}

PriorSpec PriorSpec::spherical(int rank) {
  require(rank >= 1, "rank must be >= 1");
  PriorSpec p;
  p.family = PriorFamily::spherical;
  p.rank = rank;
  return p;
}

bool PriorSpec::zero_mean() const {
  return moments(*this).mean.cwiseAbs().maxCoeff() < 1e-14;
}

bool PriorSpec::is_discrete() const {
  switch (family) {
    case PriorFamily::ising:
    case PriorFamily::bernoulli:
    case PriorFamily::rademacher_bernoulli:
    case PriorFamily::community:
    case PriorFamily::two_balanced:
      return true;
    default:
      return false;
  }
}

std::optional<DiscreteSupport> discrete_support(const PriorSpec& p) {
  DiscreteSupport s;
  auto atom = [&](double v) {
    VectorXd a(1);
    a(0) = v;
    return a;
  };
  switch (p.family) {
    case PriorFamily::ising:
      s.atoms = {atom(1.0), atom(-1.0)};
      s.log_w = {std::log(p.rho), std::log1p(-p.rho)};
      if (p.rho == 1.0) {
        s.atoms = {atom(1.0)};
        s.log_w = {0.0};
      }
      return s;
    case PriorFamily::bernoulli:
      s.atoms = {atom(1.0), atom(0.0)};
      s.log_w = {std::log(p.rho), std::log1p(-p.rho)};
      if (p.rho == 1.0) {
        s.atoms = {atom(1.0)};
        s.log_w = {0.0};
      }
      return s;
    case PriorFamily::rademacher_bernoulli:
      s.atoms = {atom(1.0), atom(-1.0), atom(0.0)};
      s.log_w = {std::log(p.rho / 2), std::log(p.rho / 2), std::log1p(-p.rho)};
      if (p.rho == 1.0) {
        s.atoms = {atom(1.0), atom(-1.0)};
        s.log_w = {std::log(0.5), std::log(0.5)};
      }
      return s;
    case PriorFamily::two_balanced:
      s.atoms = {atom(std::sqrt((1.0 - p.rho) / p.rho)),
                 atom(-std::sqrt(p.rho / (1.0 - p.rho)))};
      s.log_w = {std::log(p.rho), std::log1p(-p.rho)};
      return s;
    case PriorFamily::community: {
      for (int k = 0; k < p.rank; ++k) {
        VectorXd e = VectorXd::Zero(p.rank);
        e(k) = 1.0;
        s.atoms.push_back(e);
        s.log_w.push_back(-std::log(static_cast<double>(p.rank)));
      }
      return s;
    }
    default:
      return std::nullopt;
  }
}

namespace {

InputResult f_in_discrete(const DiscreteSupport& s, const MatrixXd& A,
                          const VectorXd& B) {
  const int k = static_cast<int>(s.atoms.size());
  const int r = static_cast<int>(B.size());
  VectorXd ex(k);
  for (int i = 0; i < k; ++i) {
    const VectorXd& a = s.atoms[i];
    ex(i) = s.log_w[i] + B.dot(a) - 0.5 * a.dot(A * a);
  }
  double m = ex.maxCoeff();
  VectorXd w = (ex.array() - m).exp();
  double z = w.sum();
  w /= z;
  InputResult res;
  res.mean = VectorXd::Zero(r);
  MatrixXd smom = MatrixXd::Zero(r, r);
  for (int i = 0; i < k; ++i) {
    res.mean += w(i) * s.atoms[i];
    smom += w(i) * s.atoms[i] * s.atoms[i].transpose();
  }
  res.covariance = smom - res.mean * res.mean.transpose();
  res.log_z = m + std::log(z);
  return res;
}

// Gaussian prior N(mu, cov): completes the square against e^{B.x - x.A.x/2}.
InputResult f_in_gaussian(const VectorXd& mu, const MatrixXd& cov_inv,
                          double logdet_cov, const MatrixXd& A,
                          const VectorXd& B) {
  const int r = static_cast<int>(B.size());
  MatrixXd P = cov_inv + A;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(P);
  if (es.eigenvalues().minCoeff() < 1e-12)
    throw NonConvergentIntegral(
        "gaussian quadratic form lost positive definiteness");
  // P^{-1} and log det P via the eigendecomposition already at hand
  VectorXd inv_ev = es.eigenvalues().cwiseInverse();
  MatrixXd P_inv =
      es.eigenvectors() * inv_ev.asDiagonal() * es.eigenvectors().transpose();
  double logdet_P = es.eigenvalues().array().log().sum();
  VectorXd h = B + cov_inv * mu;
  InputResult res;
  res.mean = P_inv * h;
  res.covariance = P_inv;
  res.log_z = 0.5 * h.dot(res.mean) - 0.5 * mu.dot(cov_inv * mu) -
              0.5 * (logdet_P + logdet_cov);
  (void)r;
  return res;
}

// Standard-normal slab: P = I + A.
InputResult f_in_std_gaussian(const MatrixXd& A, const VectorXd& B) {
  const int r = static_cast<int>(B.size());
  return f_in_gaussian(VectorXd::Zero(r), MatrixXd::Identity(r, r), 0.0, A, B);
}

InputResult f_in_gb_joint(double rho, const MatrixXd& A, const VectorXd& B) {
  const int r = static_cast<int>(B.size());
  InputResult g = f_in_std_gaussian(A, B);
  double log_mix[2] = {std::log1p(-rho), std::log(rho) + g.log_z};
  double lz = logaddexp(log_mix[0], log_mix[1]);
  double w = std::exp(log_mix[1] - lz);  // responsibility of the slab
  InputResult res;
  res.mean = w * g.mean;
  MatrixXd smom = w * (g.covariance + g.mean * g.mean.transpose());
  res.covariance = smom - res.mean * res.mean.transpose();
  res.log_z = lz;
  (void)r;
  return res;
}

InputResult f_in_gb_indep(double rho, const MatrixXd& A, const VectorXd& B) {
  const int r = static_cast<int>(B.size());
  const int npat = 1 << r;
  double lz = -std::numeric_limits<double>::infinity();
  std::vector<double> logp(npat);
  std::vector<VectorXd> means(npat);
  std::vector<MatrixXd> smoms(npat);
  for (int pat = 0; pat < npat; ++pat) {
    std::vector<int> on;
    for (int k = 0; k < r; ++k)
      if (pat & (1 << k)) on.push_back(k);
    int nr = static_cast<int>(on.size());
    double lw =
        nr * std::log(rho) + (r - nr) * std::log1p(-rho);
    VectorXd mean = VectorXd::Zero(r);
    MatrixXd smom = MatrixXd::Zero(r, r);
    double lzg = 0.0;
    if (nr > 0) {
      MatrixXd As(nr, nr);
      VectorXd Bs(nr);
      for (int a = 0; a < nr; ++a) {
        Bs(a) = B(on[a]);
        for (int b = 0; b < nr; ++b) As(a, b) = A(on[a], on[b]);
      }
      InputResult sub = f_in_std_gaussian(As, Bs);
      lzg = sub.log_z;
      for (int a = 0; a < nr; ++a) {
        mean(on[a]) = sub.mean(a);
        for (int b = 0; b < nr; ++b)
          smom(on[a], on[b]) = sub.covariance(a, b) + sub.mean(a) * sub.mean(b);
      }
    }
    logp[pat] = lw + lzg;
    means[pat] = mean;
    smoms[pat] = smom;
    lz = logaddexp(lz, logp[pat]);
  }
  InputResult res;
  res.mean = VectorXd::Zero(r);
  MatrixXd smom = MatrixXd::Zero(r, r);
  for (int pat = 0; pat < npat; ++pat) {
    double w = std::exp(logp[pat] - lz);
    res.mean += w * means[pat];
    smom += w * smoms[pat];
  }
  res.covariance = smom - res.mean * res.mean.transpose();
  res.log_z = lz;
  return res;
}

struct GaussianCache {
  MatrixXd cov_inv;
  double logdet_cov;
};

GaussianCache gaussian_cache(const PriorSpec& p) {
  Eigen::LLT<MatrixXd> llt(p.cov);
  if (llt.info() != Eigen::Success)
    throw InvalidPrior("gaussian covariance not positive definite");
  GaussianCache c;
  c.cov_inv = llt.solve(MatrixXd::Identity(p.rank, p.rank));
  c.logdet_cov =
      2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return c;
}

}  // namespace

InputResult f_in(const PriorSpec& prior, const MatrixXd& A, const VectorXd& B) {
  const int r = prior.rank;
  check_shape(A.rows() == r && A.cols() == r && B.size() == r,
              "f_in: A must be r x r and B length r");
  MatrixXd As = 0.5 * (A + A.transpose());
  if (auto s = discrete_support(prior)) return f_in_discrete(*s, As, B);
  switch (prior.family) {
    case PriorFamily::gaussian: {
      GaussianCache c = gaussian_cache(prior);
      return f_in_gaussian(prior.mu, c.cov_inv, c.logdet_cov, As, B);
    }
    case PriorFamily::spherical:
      return f_in_std_gaussian(As, B);
    case PriorFamily::gauss_bernoulli_joint:
      return f_in_gb_joint(prior.rho, As, B);
    case PriorFamily::gauss_bernoulli_indep:
      return f_in_gb_indep(prior.rho, As, B);
    default:
      throw InvalidPrior("f_in: unhandled family");
  }
}

InputResult f_in_scalar(const PriorSpec& prior, double a, double b) {
  if (prior.rank != 1) throw RankUnsupported("f_in_scalar needs rank 1");
  InputResult res;
  res.mean.resize(1);
  res.covariance.resize(1, 1);
  switch (prior.family) {
    case PriorFamily::ising: {
      if (prior.rho == 1.0) {
        res.mean(0) = 1.0;
        res.covariance(0, 0) = 0.0;
        res.log_z = b - 0.5 * a;
        return res;
      }
      // atoms +-1; A contributes equally to both and cancels
      double h = 0.5 * (std::log(prior.rho) - std::log1p(-prior.rho));
      double t = std::tanh(b + h);
      res.mean(0) = t;
      res.covariance(0, 0) = 1.0 - t * t;
      res.log_z = -0.5 * a + log_cosh(b + h) - log_cosh(h);
      return res;
    }
    case PriorFamily::gaussian: {
      double vi = 1.0 / prior.cov(0, 0);
      double p = vi + a;
      if (p < 1e-12)
        throw NonConvergentIntegral("gaussian quadratic form not PD");
      double h = b + vi * prior.mu(0);
      res.mean(0) = h / p;
      res.covariance(0, 0) = 1.0 / p;
      res.log_z = 0.5 * h * h / p - 0.5 * vi * prior.mu(0) * prior.mu(0) -
                  0.5 * (std::log(p) - std::log(vi));
      return res;
    }
    case PriorFamily::spherical: {
      double p = 1.0 + a;
      if (p < 1e-12)
        throw NonConvergentIntegral("gaussian quadratic form not PD");
      res.mean(0) = b / p;
      res.covariance(0, 0) = 1.0 / p;
      res.log_z = 0.5 * b * b / p - 0.5 * std::log(p);
      return res;
    }
    case PriorFamily::gauss_bernoulli_joint:
    case PriorFamily::gauss_bernoulli_indep: {
      double p = 1.0 + a;
      if (p < 1e-12)
        throw NonConvergentIntegral("gaussian quadratic form not PD");
      double lzg = 0.5 * b * b / p - 0.5 * std::log(p);
      double l0 = std::log1p(-prior.rho);
      double l1 = std::log(prior.rho) + lzg;
      double lz = logaddexp(l0, l1);
      double w = std::exp(l1 - lz);
      double mg = b / p;
      res.mean(0) = w * mg;
      res.covariance(0, 0) = w * (1.0 / p + mg * mg) - res.mean(0) * res.mean(0);
      res.log_z = lz;
      return res;
    }
    default: {
      auto s = discrete_support(prior);
      if (!s) throw InvalidPrior("f_in_scalar: unhandled family");
      double lz = -std::numeric_limits<double>::infinity();
      for (size_t i = 0; i < s->atoms.size(); ++i) {
        double x = s->atoms[i](0);
        lz = logaddexp(lz, s->log_w[i] + b * x - 0.5 * a * x * x);
      }
      double m1 = 0, m2 = 0;
      for (size_t i = 0; i < s->atoms.size(); ++i) {
        double x = s->atoms[i](0);
        double w = std::exp(s->log_w[i] + b * x - 0.5 * a * x * x - lz);
        m1 += w * x;
        m2 += w * x * x;
      }
      res.mean(0) = m1;
      res.covariance(0, 0) = m2 - m1 * m1;
      res.log_z = lz;
      return res;
    }
  }
}

Moments moments(const PriorSpec& p) {
  Moments m;
  const int r = p.rank;
  if (auto s = discrete_support(p)) {
    m.mean = VectorXd::Zero(r);
    m.second_moment = MatrixXd::Zero(r, r);
    for (size_t i = 0; i < s->atoms.size(); ++i) {
      double w = std::exp(s->log_w[i]);
      m.mean += w * s->atoms[i];
      m.second_moment += w * s->atoms[i] * s->atoms[i].transpose();
    }
    return m;
  }
  switch (p.family) {
    case PriorFamily::gaussian:
      m.mean = p.mu;
      m.second_moment = p.cov + p.mu * p.mu.transpose();
      return m;
    case PriorFamily::spherical:
      m.mean = VectorXd::Zero(r);
      m.second_moment = MatrixXd::Identity(r, r);
      return m;
    case PriorFamily::gauss_bernoulli_joint:
    case PriorFamily::gauss_bernoulli_indep:
      m.mean = VectorXd::Zero(r);
      m.second_moment = p.rho * MatrixXd::Identity(r, r);
      return m;
    default:
      throw InvalidPrior("moments: unhandled family");
  }
}

double third_moment_scalar(const PriorSpec& p) {
  if (p.rank != 1)
    throw RankUnsupported("third moment only defined for rank 1");
  if (auto s = discrete_support(p)) {
    double m3 = 0;
    for (size_t i = 0; i < s->atoms.size(); ++i)
      m3 += std::exp(s->log_w[i]) * std::pow(s->atoms[i](0), 3);
    return m3;
  }
  switch (p.family) {
    case PriorFamily::gaussian: {
      double mu = p.mu(0), v = p.cov(0, 0);
      return mu * mu * mu + 3.0 * mu * v;
    }
    case PriorFamily::spherical:
    case PriorFamily::gauss_bernoulli_joint:
    case PriorFamily::gauss_bernoulli_indep:
      return 0.0;
    default:
      throw InvalidPrior("third_moment_scalar: unhandled family");
  }
}

MatrixXd sample(const PriorSpec& p, int n, std::uint64_t seed) {
  if (n < 1) throw InvalidPrior("sample: n must be >= 1");
  const int r = p.rank;
  MatrixXd out(n, r);
  std::mt19937_64 rng = make_rng(seed, 0x5a11);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  if (auto s = discrete_support(p)) {
    std::vector<double> cumw(s->atoms.size());
    double acc = 0;
    for (size_t i = 0; i < s->atoms.size(); ++i) {
      acc += std::exp(s->log_w[i]);
      cumw[i] = acc;
    }
    for (int i = 0; i < n; ++i) {
      double u = unif(rng) * acc;
      size_t k = 0;
      while (k + 1 < cumw.size() && u > cumw[k]) ++k;
      out.row(i) = s->atoms[k].transpose();
    }
    return out;
  }
  switch (p.family) {
    case PriorFamily::gaussian: {
      Eigen::LLT<MatrixXd> llt(p.cov);
      MatrixXd L = llt.matrixL();
      for (int i = 0; i < n; ++i) {
        VectorXd z(r);
        for (int k = 0; k < r; ++k) z(k) = normal(rng);
        out.row(i) = (p.mu + L * z).transpose();
      }
      return out;
    }
    case PriorFamily::spherical:
      for (int i = 0; i < n; ++i)
        for (int k = 0; k < r; ++k) out(i, k) = normal(rng);
      return out;
    case PriorFamily::gauss_bernoulli_joint:
      for (int i = 0; i < n; ++i) {
        bool on = unif(rng) < p.rho;
        for (int k = 0; k < r; ++k) out(i, k) = on ? normal(rng) : 0.0;
      }
      return out;
    case PriorFamily::gauss_bernoulli_indep:
      for (int i = 0; i < n; ++i)
        for (int k = 0; k < r; ++k)
          out(i, k) = (unif(rng) < p.rho) ? normal(rng) : 0.0;
      return out;
    default:
      throw InvalidPrior("sample: unhandled family");
  }
}

}  // namespace lowramp
