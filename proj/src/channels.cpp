#include "lowramp/channels.hpp"

#include <map>

#include "lowramp/quadrature.hpp"

namespace lowramp {

std::string channel_tag(ChannelFamily f) {
  switch (f) {
    case ChannelFamily::gaussian: return "gaussian";
    case ChannelFamily::conventional: return "conventional";
    case ChannelFamily::sbm: return "sbm";
    case ChannelFamily::exponential: return "exponential";
  }
  throw UnsupportedValue("unknown channel family");
}

ChannelFamily channel_family_from_tag(const std::string& tag) {
  static const std::map<std::string, ChannelFamily> m = {
      {"gaussian", ChannelFamily::gaussian},
      {"conventional", ChannelFamily::conventional},
      {"sbm", ChannelFamily::sbm},
      {"exponential", ChannelFamily::exponential}};
  auto it = m.find(tag);
  if (it == m.end()) throw UnsupportedValue("unknown channel tag: " + tag);
  return it->second;
}

ChannelSpec ChannelSpec::gaussian_noise(double delta) {
  if (!(delta > 0)) throw UnsupportedValue("gaussian channel needs delta > 0");
  ChannelSpec c;
  c.family = ChannelFamily::gaussian;
  c.delta = delta;
  return c;
}

ChannelSpec ChannelSpec::conventional(double beta) {
  if (!(beta > 0)) throw UnsupportedValue("conventional channel needs beta > 0");
  ChannelSpec c;
  c.family = ChannelFamily::conventional;
  c.beta = beta;
  return c;
}

ChannelSpec ChannelSpec::sbm(double p_out, double mu) {
  if (!(p_out > 0 && p_out < 1))
    throw UnsupportedValue("sbm channel needs p_out in (0,1)");
  ChannelSpec c;
  c.family = ChannelFamily::sbm;
  c.p_out = p_out;
  c.mu = mu;
  return c;
}

ChannelSpec ChannelSpec::exponential() {
  ChannelSpec c;
  c.family = ChannelFamily::exponential;
  return c;
}

ChannelSpec ChannelSpec::with_assumed(const ChannelSpec& a) const {
  ChannelSpec c = *this;
  c.assumed = std::make_shared<ChannelSpec>(a);
  c.assumed->assumed.reset();
  return c;
}

const ChannelSpec& ChannelSpec::assumed_or_self() const {
  return assumed ? *assumed : *this;
}

double ChannelSpec::g(double y, double w) const {
  switch (family) {
    case ChannelFamily::gaussian:
      return -(y - w) * (y - w) / (2.0 * delta) -
             0.5 * std::log(2.0 * M_PI * delta);
    case ChannelFamily::conventional:
      return beta * y * w;
    case ChannelFamily::sbm: {
      if (y == 1.0) {
        double p = p_out + mu * w;
        if (p <= 0 || p >= 1)
          throw ProbabilityOutOfRange("sbm probability outside (0,1)");
        return std::log(p);
      }
      if (y == 0.0) {
        double p = p_out + mu * w;
        if (p <= 0 || p >= 1)
          throw ProbabilityOutOfRange("sbm probability outside (0,1)");
        return std::log1p(-p);
      }
      throw UnsupportedValue("sbm output must be 0 or 1");
    }
    case ChannelFamily::exponential:
      return -std::fabs(y - w) - M_LN2;
  }
  throw UnsupportedValue("g: unknown family");
}

double ChannelSpec::score(double y) const {
  switch (family) {
    case ChannelFamily::gaussian:
      return y / delta;
    case ChannelFamily::conventional:
      return beta * y;
    case ChannelFamily::sbm:
      if (y == 1.0) return mu / p_out;
      if (y == 0.0) return -mu / (1.0 - p_out);
      throw UnsupportedValue("sbm output must be 0 or 1");
    case ChannelFamily::exponential:
      return sgn(y);  // subgradient midpoint at y = 0
  }
  throw UnsupportedValue("score: unknown family");
}

double ChannelSpec::second(double y) const {
  switch (family) {
    case ChannelFamily::gaussian:
      return y * y / (delta * delta) - 1.0 / delta;
    case ChannelFamily::conventional:
      return beta * beta * y * y;
    case ChannelFamily::sbm: {
      // d2/dw2 log(p + mu w) = -mu^2/p^2 cancels the squared score exactly
      if (y == 1.0 || y == 0.0) return 0.0;
      throw UnsupportedValue("sbm output must be 0 or 1");
    }
    case ChannelFamily::exponential:
      return 1.0;  // away from the kink; the kink itself has measure zero
  }
  throw UnsupportedValue("second: unknown family");
}

double ChannelSpec::fisher_delta() const {
  switch (family) {
    case ChannelFamily::gaussian:
      return delta;
    case ChannelFamily::sbm:
      return p_out * (1.0 - p_out) / (mu * mu);
    case ChannelFamily::exponential:
      return 1.0;  // E[sign(Y)^2] = 1 under the Laplace output
    case ChannelFamily::conventional:
      // quenched +-1 disorder convention: E[(beta Y)^2] = beta^2
      return 1.0 / (beta * beta);
  }
  throw UnsupportedValue("fisher_delta: unknown family");
}

double ChannelSpec::sample_output(double w, std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  switch (family) {
    case ChannelFamily::gaussian: {
      std::normal_distribution<double> normal(0.0, 1.0);
      return w + std::sqrt(delta) * normal(rng);
    }
    case ChannelFamily::conventional:
      return unif(rng) < 0.5 ? 1.0 : -1.0;
    case ChannelFamily::sbm: {
      double p = p_out + mu * w;
      if (p < 0.0 || p > 1.0)
        throw ProbabilityOutOfRange(
            "sbm success probability left [0,1]; check the mu/sqrt(N) scaling");
      return unif(rng) < p ? 1.0 : 0.0;
    }
    case ChannelFamily::exponential: {
      double u = unif(rng);
      // Laplace(1) via inverse CDF
      double noise = u < 0.5 ? std::log(2.0 * u) : -std::log(2.0 * (1.0 - u));
      return w + noise;
    }
  }
  throw UnsupportedValue("sample_output: unknown family");
}

namespace {

// E_{P_out(Y|0)}[h(Y)] for the generating channel, by closed quadrature.
double expect_output(const ChannelSpec& gen,
                     const std::function<double(double)>& h) {
  switch (gen.family) {
    case ChannelFamily::gaussian: {
      double s = std::sqrt(gen.delta);
      const QuadratureRule& q = gauss_hermite_normal(201);
      double acc = 0;
      for (int i = 0; i < q.nodes.size(); ++i)
        acc += q.weights(i) * h(s * q.nodes(i));
      return acc;
    }
    case ChannelFamily::sbm:
      return gen.p_out * h(1.0) + (1.0 - gen.p_out) * h(0.0);
    case ChannelFamily::exponential: {
      const QuadratureRule& q = gauss_laguerre(201);
      double acc = 0;
      for (int i = 0; i < q.nodes.size(); ++i)
        acc += q.weights(i) * 0.5 * (h(q.nodes(i)) + h(-q.nodes(i)));
      return acc;
    }
    case ChannelFamily::conventional:
      return 0.5 * (h(1.0) + h(-1.0));  // quenched +-1 convention
  }
  throw UnsupportedValue("expect_output: unknown family");
}

// Score of the generating channel itself, d/dw log P_out(Y|w) at 0.
double generating_score(const ChannelSpec& gen, double y) {
  return gen.score(y);
}

}  // namespace

NoiseParams noise_params(const ChannelSpec& generating,
                         const ChannelSpec& assumed, bool quenched) {
  const ChannelSpec& gen = generating;  // its own params generate the data
  bool same = gen.family == assumed.family && gen.delta == assumed.delta &&
              gen.beta == assumed.beta && gen.p_out == assumed.p_out &&
              gen.mu == assumed.mu;
  if (same && !quenched) return NoiseParams::bayes(gen.fisher_delta());

  double mean_s = expect_output(gen, [&](double y) { return assumed.score(y); });
  if (std::fabs(mean_s) > 1e-8)
    throw NonIntegrableChannel(
        "assumed score has nonzero mean under the generating channel; the "
        "analysis does not apply to this mismatch");
  double inv_tilde = expect_output(gen, [&](double y) {
    double s = assumed.score(y);
    return s * s;
  });
  if (!(inv_tilde > 0))
    throw NonIntegrableChannel("assumed score has zero variance");
  double inv_hat =
      quenched ? 0.0 : expect_output(gen, [&](double y) {
        return assumed.score(y) * generating_score(gen, y);
      });
  double r_bar = expect_output(gen, [&](double y) { return assumed.second(y); });
  NoiseParams np;
  np.delta_tilde = 1.0 / inv_tilde;
  np.delta_hat = inv_hat == 0.0 ? std::numeric_limits<double>::infinity()
                                : 1.0 / inv_hat;
  np.r_bar = r_bar;
  np.delta_fisher = gen.fisher_delta();
  return np;
}

std::pair<MatrixXd, MatrixXd> score_matrices(const ChannelSpec& channel,
                                             const MatrixXd& y) {
  const ChannelSpec& a = channel.assumed_or_self();
  MatrixXd s(y.rows(), y.cols()), r(y.rows(), y.cols());
  for (Eigen::Index i = 0; i < y.rows(); ++i)
    for (Eigen::Index j = 0; j < y.cols(); ++j) {
      s(i, j) = a.score(y(i, j));
      r(i, j) = a.second(y(i, j));
    }
  return {std::move(s), std::move(r)};
}

}  // namespace lowramp
