#include <doctest.h>

#include <filesystem>

#include "lowramp/instance.hpp"

using namespace lowramp;

TEST_CASE("vanishing noise recovers the planted product") {
  SUBCASE("all-ones signal at n=4") {
    ProblemInstance inst = generate_symmetric(
        PriorSpec::bernoulli(1.0), ChannelSpec::gaussian_noise(1e-8), 4, 3);
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j)
        CHECK(inst.y_sym(i, j) == doctest::Approx(0.5).epsilon(1e-2));
  }
  SUBCASE("bipartite gaussian factors") {
    PriorSpec g = PriorSpec::gaussian(VectorXd::Zero(1), MatrixXd::Identity(1, 1));
    ProblemInstance inst =
        generate_bipartite(g, g, ChannelSpec::gaussian_noise(1e-8), 3, 3, 11);
    MatrixXd expect = inst.u0 * inst.v0.transpose() / std::sqrt(3.0);
    CHECK((inst.y_rect - expect).cwiseAbs().maxCoeff() < 1e-3);
    CHECK(inst.alpha() == 1.0);
  }
}

TEST_CASE("sparse rows appear at the planted rate") {
  const int n = 2000;
  ProblemInstance inst = generate_symmetric(
      PriorSpec::rademacher_bernoulli(0.1), ChannelSpec::gaussian_noise(0.01),
      n, 7);
  int nonzero = 0;
  for (int i = 0; i < n; ++i)
    if (inst.x0(i, 0) != 0.0) ++nonzero;
  double sigma = std::sqrt(n * 0.1 * 0.9);
  CHECK(std::fabs(nonzero - 0.1 * n) < 3 * sigma);
}

TEST_CASE("sbm community instance: within-group score exceeds cross-group") {
  const int n = 1000;
  ProblemInstance inst = generate_symmetric(
      PriorSpec::community(2), ChannelSpec::sbm(0.5, 2.0), n, 13);
  double win = 0, cross = 0;
  long nw = 0, nc = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      bool same = inst.x0.row(i) == inst.x0.row(j);
      if (same) {
        win += inst.s(i, j);
        ++nw;
      } else {
        cross += inst.s(i, j);
        ++nc;
      }
    }
  CHECK(win / nw > cross / nc);
}

TEST_CASE("bipartite uses sqrt(N) scaling and stores alpha = M/N") {
  PriorSpec g = PriorSpec::gaussian(VectorXd::Zero(1), MatrixXd::Identity(1, 1));
  ProblemInstance inst =
      generate_bipartite(g, g, ChannelSpec::gaussian_noise(1e-10), 8, 4, 2);
  CHECK(inst.alpha() == doctest::Approx(0.5));
  MatrixXd expect = inst.u0 * inst.v0.transpose() / std::sqrt(8.0);
  CHECK((inst.y_rect - expect).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("hopfield configuration assembles") {
  // Ising spins against gaussian hidden units under the conventional coupling
  PriorSpec pu = PriorSpec::ising(0.5);
  double beta = 0.6;
  PriorSpec pv = PriorSpec::gaussian(VectorXd::Zero(1),
                                     MatrixXd::Constant(1, 1, 1.0 / beta));
  ProblemInstance inst =
      generate_quenched(ChannelSpec::conventional(beta), 30, 12, 4);
  CHECK(inst.kind == InstanceKind::bipartite);
  CHECK((inst.y_rect.cwiseAbs().array() == 1.0).all());
  CHECK(inst.s(0, 0) == doctest::Approx(beta * inst.y_rect(0, 0)));
  (void)pu;
  (void)pv;
}

TEST_CASE("quenched generation") {
  SUBCASE("gaussian disorder mean within the CLT band") {
    const int n = 500;
    ProblemInstance inst =
        generate_quenched(ChannelSpec::gaussian_noise(1.0), n, 0, 17);
    double mean = inst.y_sym.data.mean();
    CHECK(std::fabs(mean) < 3.0 / std::sqrt(n * (n - 1) / 2.0));
  }
  SUBCASE("pm-one disorder") {
    ProblemInstance inst =
        generate_quenched(ChannelSpec::conventional(1.0), 100, 0, 9);
    CHECK((inst.y_sym.data.cwiseAbs().array() == 1.0).all());
  }
  SUBCASE("seed determinism") {
    ProblemInstance a = generate_quenched(ChannelSpec::gaussian_noise(1.0), 50, 0, 5);
    ProblemInstance b = generate_quenched(ChannelSpec::gaussian_noise(1.0), 50, 0, 5);
    CHECK((a.y_sym.data - b.y_sym.data).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("symmetric storage round-trips across the diagonal") {
  ProblemInstance inst = generate_symmetric(
      PriorSpec::bernoulli(0.5), ChannelSpec::gaussian_noise(1.0), 20, 1);
  for (int i = 0; i < 20; ++i)
    for (int j = i + 1; j < 20; ++j) {
      CHECK(inst.y_sym(i, j) == inst.y_sym(j, i));
      CHECK(inst.s(i, j) == inst.s(j, i));
    }
  CHECK(inst.s.diagonal().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gaussian channel noise statistics at n=2000") {
  const int n = 2000;
  const double delta = 0.3;
  ProblemInstance inst = generate_symmetric(
      PriorSpec::rademacher_bernoulli(0.4), ChannelSpec::gaussian_noise(delta),
      n, 23);
  const double sqn = std::sqrt(double(n));
  double sum = 0, sum2 = 0;
  long cnt = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double resid =
          inst.y_sym(i, j) - inst.x0.row(i).dot(inst.x0.row(j)) / sqn;
      sum += resid;
      sum2 += resid * resid;
      ++cnt;
    }
  double mean = sum / cnt, var = sum2 / cnt - mean * mean;
  CHECK(std::fabs(mean) < 4 * std::sqrt(delta) / n);
  CHECK(var == doctest::Approx(delta).epsilon(0.05));
}

TEST_CASE("bit-reproducible generation") {
  ProblemInstance a = generate_symmetric(
      PriorSpec::gauss_bernoulli_joint(0.2, 1), ChannelSpec::gaussian_noise(0.1),
      100, 77);
  ProblemInstance b = generate_symmetric(
      PriorSpec::gauss_bernoulli_joint(0.2, 1), ChannelSpec::gaussian_noise(0.1),
      100, 77);
  CHECK((a.y_sym.data - b.y_sym.data).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.x0 - b.x0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("empirical mse alignment") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  MatrixXd planted(40, 3);
  for (int i = 0; i < 40; ++i)
    for (int k = 0; k < 3; ++k) planted(i, k) = normal(rng);
  SUBCASE("identity") {
    CHECK(empirical_mse(planted, planted, Alignment::none) == 0.0);
  }
  SUBCASE("sign orbit") {
    MatrixXd flipped = -planted;
    CHECK(empirical_mse(flipped, planted, Alignment::sign) ==
          doctest::Approx(0.0));
    CHECK(empirical_mse(flipped, planted, Alignment::none) > 0.1);
  }
  SUBCASE("permutation orbit") {
    MatrixXd perm(40, 3);
    perm.col(0) = planted.col(2);
    perm.col(1) = planted.col(0);
    perm.col(2) = planted.col(1);
    CHECK(empirical_mse(perm, planted, Alignment::permutation) ==
          doctest::Approx(0.0));
  }
  SUBCASE("greedy matching handles rank above 8") {
    MatrixXd big(60, 9);
    for (int i = 0; i < 60; ++i)
      for (int k = 0; k < 9; ++k) big(i, k) = normal(rng);
    MatrixXd perm = big;
    perm.col(0).swap(perm.col(8));
    perm.col(3).swap(perm.col(5));
    CHECK(empirical_mse(perm, big, Alignment::permutation) ==
          doctest::Approx(0.0));
  }
  SUBCASE("shape mismatch raises") {
    CHECK_THROWS_AS(
        empirical_mse(planted.topRows(10), planted, Alignment::none),
        ShapeMismatch);
  }
}

TEST_CASE("persistence round trip") {
  namespace fs = std::filesystem;
  std::string dir = (fs::temp_directory_path() / "lowramp_inst_test").string();
  fs::remove_all(dir);
  for (std::string format : {"bin", "csv"}) {
    ProblemInstance inst = generate_symmetric(
        PriorSpec::gauss_bernoulli_joint(0.3, 1),
        ChannelSpec::gaussian_noise(0.2), 30, 19);
    save_instance(inst, dir, format);
    ProblemInstance loaded = load_instance(dir);
    CHECK(loaded.n == inst.n);
    CHECK((loaded.y_sym.data - inst.y_sym.data).cwiseAbs().maxCoeff() <=
          (format == "bin" ? 0.0 : 1e-10));
    CHECK((loaded.x0 - inst.x0).cwiseAbs().maxCoeff() <=
          (format == "bin" ? 0.0 : 1e-10));
    CHECK((loaded.s - inst.s).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(loaded.prior0->family == PriorFamily::gauss_bernoulli_joint);
    CHECK(loaded.channel.delta == inst.channel.delta);
    fs::remove_all(dir);
  }
}

TEST_CASE("bipartite persistence with mismatch channel") {
  namespace fs = std::filesystem;
  std::string dir = (fs::temp_directory_path() / "lowramp_inst_bip").string();
  fs::remove_all(dir);
  PriorSpec g = PriorSpec::gaussian(VectorXd::Zero(1), MatrixXd::Identity(1, 1));
  ChannelSpec c = ChannelSpec::gaussian_noise(0.5).with_assumed(
      ChannelSpec::gaussian_noise(0.7));
  ProblemInstance inst = generate_bipartite(g, g, c, 12, 7, 3);
  save_instance(inst, dir);
  ProblemInstance loaded = load_instance(dir);
  CHECK(loaded.kind == InstanceKind::bipartite);
  CHECK(loaded.channel.assumed->delta == doctest::Approx(0.7));
  CHECK((loaded.y_rect - inst.y_rect).cwiseAbs().maxCoeff() == 0.0);
  CHECK((loaded.u0 - inst.u0).cwiseAbs().maxCoeff() == 0.0);
  // S computed with the assumed channel
  CHECK(loaded.s(0, 0) == doctest::Approx(inst.y_rect(0, 0) / 0.7));
  fs::remove_all(dir);
}
