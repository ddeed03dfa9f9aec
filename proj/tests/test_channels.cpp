#include <doctest.h>

#include "lowramp/channels.hpp"
#include "lowramp/instance.hpp"

using namespace lowramp;

TEST_CASE("score matrices per family") {
  SUBCASE("gaussian") {
    ChannelSpec c = ChannelSpec::gaussian_noise(0.5);
    MatrixXd y(1, 2);
    y << 0.3, -1.1;
    auto [s, r] = score_matrices(c, y);
    CHECK(s(0, 0) == doctest::Approx(0.3 / 0.5));
    CHECK(r(0, 1) == doctest::Approx(1.21 / 0.25 - 2.0));
  }
  SUBCASE("sbm") {
    ChannelSpec c = ChannelSpec::sbm(0.4, 2.0);
    MatrixXd y(1, 2);
    y << 1.0, 0.0;
    auto [s, r] = score_matrices(c, y);
    CHECK(s(0, 0) == doctest::Approx(2.0 / 0.4));
    CHECK(s(0, 1) == doctest::Approx(-2.0 / 0.6));
    CHECK(r(0, 0) == 0.0);
    CHECK(r(0, 1) == 0.0);
    MatrixXd bad(1, 1);
    bad << 0.5;
    CHECK_THROWS_AS(score_matrices(c, bad), UnsupportedValue);
  }
  SUBCASE("conventional") {
    ChannelSpec c = ChannelSpec::conventional(1.3);
    MatrixXd y(1, 1);
    y << -1.0;
    auto [s, r] = score_matrices(c, y);
    CHECK(s(0, 0) == doctest::Approx(-1.3));
    CHECK(r(0, 0) == doctest::Approx(1.69));
  }
  SUBCASE("exponential") {
    ChannelSpec c = ChannelSpec::exponential();
    MatrixXd y(1, 3);
    y << 2.0, -0.7, 0.0;
    auto [s, r] = score_matrices(c, y);
    CHECK(s(0, 0) == 1.0);
    CHECK(s(0, 1) == -1.0);
    CHECK(s(0, 2) == 0.0);  // subgradient midpoint at the kink
    CHECK(r(0, 0) == 1.0);
  }
}

TEST_CASE("finite differences of g reproduce the score") {
  std::mt19937_64 rng(4);
  const double h = 1e-5;
  for (ChannelSpec c : {ChannelSpec::gaussian_noise(0.7),
                        ChannelSpec::conventional(0.9), ChannelSpec::sbm(0.5, 1.0),
                        ChannelSpec::exponential()}) {
    for (int rep = 0; rep < 100; ++rep) {
      double y = c.sample_output(0.0, rng);
      if (c.family == ChannelFamily::exponential && std::fabs(y) < 10 * h)
        continue;  // kink
      double fd = (c.g(y, h) - c.g(y, -h)) / (2 * h);
      CHECK(std::fabs(fd - c.score(y)) < 1e-6);
    }
  }
}

TEST_CASE("bayes identities: E[S] and E[R] vanish under the channel") {
  std::mt19937_64 rng(8);
  const int n = 400000;
  for (ChannelSpec c :
       {ChannelSpec::gaussian_noise(0.5), ChannelSpec::sbm(0.35, 1.5)}) {
    double ms = 0, mr = 0, vs = 0;
    for (int i = 0; i < n; ++i) {
      double y = c.sample_output(0.0, rng);
      double s = c.score(y);
      ms += s;
      mr += c.second(y);
      vs += s * s;
    }
    ms /= n;
    mr /= n;
    vs /= n;
    double band = 4 * std::sqrt(vs / n);
    CHECK(std::fabs(ms) < band + 1e-12);
    CHECK(std::fabs(mr) < 6 * std::sqrt(vs) / std::sqrt(double(n)) + 1e-12);
  }
}

TEST_CASE("noise params") {
  SUBCASE("gaussian bayes") {
    NoiseParams np = noise_params(ChannelSpec::gaussian_noise(0.5));
    CHECK(np.delta_tilde == doctest::Approx(0.5));
    CHECK(np.delta_hat == doctest::Approx(0.5));
    CHECK(np.r_bar == 0.0);
  }
  SUBCASE("sbm effective delta") {
    NoiseParams np = noise_params(ChannelSpec::sbm(0.5, 1.0));
    CHECK(np.delta_fisher == doctest::Approx(0.25));
    CHECK(np.delta_tilde == doctest::Approx(0.25));
  }
  SUBCASE("quenched gaussian disorder with conventional hamiltonian") {
    NoiseParams np = noise_params(ChannelSpec::gaussian_noise(1.0),
                                  ChannelSpec::conventional(1.0),
                                  /*quenched=*/true);
    CHECK(np.inv_tilde() == doctest::Approx(1.0));
    CHECK(np.inv_hat() == 0.0);
    CHECK(np.r_bar == doctest::Approx(1.0));
  }
  SUBCASE("mismatched gaussian pair has a closed form") {
    // generating variance 0.5, assumed variance 1.2
    NoiseParams np = noise_params(ChannelSpec::gaussian_noise(0.5),
                                  ChannelSpec::gaussian_noise(1.2));
    CHECK(np.inv_tilde() == doctest::Approx(0.5 / (1.2 * 1.2)).epsilon(1e-9));
    CHECK(np.inv_hat() == doctest::Approx(1.0 / 1.2).epsilon(1e-9));
    CHECK(np.r_bar == doctest::Approx(0.5 / 1.44 - 1.0 / 1.2).epsilon(1e-9));
  }
  SUBCASE("sbm assumed on gaussian data is rejected (nonzero mean score)") {
    CHECK_THROWS_AS(noise_params(ChannelSpec::gaussian_noise(1.0),
                                 ChannelSpec::sbm(0.3, 1.0)),
                    Error);
  }
}

TEST_CASE("empirical 1/delta-tilde matches the analytic value at N=2000") {
  const int n = 2000;
  PriorSpec prior = PriorSpec::rademacher_bernoulli(0.3);
  ChannelSpec channel = ChannelSpec::gaussian_noise(0.2);
  ProblemInstance inst = generate_symmetric(prior, channel, n, 5);
  double inv_tilde_emp =
      2.0 * inst.s.cwiseAbs2().sum() / 2.0 / (double(n) * n);
  double inv_tilde = 1.0 / noise_params(channel).delta_tilde;
  CHECK(inv_tilde_emp == doctest::Approx(inv_tilde).epsilon(0.05));
}

TEST_CASE("sampling the channels") {
  std::mt19937_64 rng(21);
  SUBCASE("gaussian variance within 2 percent") {
    ChannelSpec c = ChannelSpec::gaussian_noise(0.8);
    const int n = 100000;
    double s2 = 0;
    for (int i = 0; i < n; ++i) {
      double y = c.sample_output(0.0, rng);
      s2 += y * y;
    }
    CHECK(s2 / n == doctest::Approx(0.8).epsilon(0.02));
  }
  SUBCASE("sbm at w=0 is bernoulli(p_out)") {
    ChannelSpec c = ChannelSpec::sbm(0.3, 1.0);
    const int n = 200000;
    double mean = 0;
    for (int i = 0; i < n; ++i) mean += c.sample_output(0.0, rng);
    mean /= n;
    CHECK(std::fabs(mean - 0.3) < 3 * std::sqrt(0.3 * 0.7 / n));
  }
  SUBCASE("sbm out-of-range probability raises") {
    ChannelSpec c = ChannelSpec::sbm(0.9, 1.0);
    CHECK_THROWS_AS(c.sample_output(0.5, rng), ProbabilityOutOfRange);
  }
  SUBCASE("exponential noise has median at w") {
    ChannelSpec c = ChannelSpec::exponential();
    const int n = 100000;
    int above = 0;
    for (int i = 0; i < n; ++i)
      if (c.sample_output(3.0, rng) > 3.0) ++above;
    CHECK(std::fabs(above - n / 2.0) < 3 * std::sqrt(n * 0.25));
  }
}
