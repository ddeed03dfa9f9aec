#pragma once

#include <optional>
#include <string>

#include "lowramp/channels.hpp"
#include "lowramp/priors.hpp"

namespace lowramp {

enum class InstanceKind { symmetric, bipartite };

// Packed strict upper triangle of a symmetric N x N matrix, diagonal excluded.
struct PackedSymmetric {
  int n = 0;
  VectorXd data;  // length n(n-1)/2, row-major over i < j

  void resize(int n_) {
    n = n_;
    data.resize(static_cast<Eigen::Index>(n) * (n - 1) / 2);
  }
  Eigen::Index idx(int i, int j) const {
    if (i > j) std::swap(i, j);
    return static_cast<Eigen::Index>(i) * n - static_cast<Eigen::Index>(i) * (i + 1) / 2 + (j - i - 1);
  }
  double operator()(int i, int j) const { return data(idx(i, j)); }
  double& at(int i, int j) { return data(idx(i, j)); }
  MatrixXd dense() const;  // zero diagonal
};

struct GenOptions {
  bool materialize_r = true;  // skip the R matrix for very large instances
};

struct ProblemInstance {
  InstanceKind kind = InstanceKind::symmetric;
  int n = 0, m = 0;
  int rank0 = 1;
  bool quenched = false;
  MatrixXd x0;          // N x r0 (symmetric planted)
  MatrixXd u0, v0;      // bipartite planted
  PackedSymmetric y_sym;
  MatrixXd y_rect;      // bipartite N x M
  MatrixXd s, r;        // dense score matrices (zero diagonal when symmetric)
  ChannelSpec channel;
  std::optional<PriorSpec> prior0, prior_u0, prior_v0;
  std::uint64_t seed = 0;

  double alpha() const {
    return kind == InstanceKind::bipartite ? static_cast<double>(m) / n : 1.0;
  }
  bool has_r() const { return r.size() > 0; }
  NoiseParams noise() const {
    return noise_params(channel, channel.assumed_or_self(), quenched);
  }
};

ProblemInstance generate_symmetric(const PriorSpec& prior0,
                                   const ChannelSpec& channel, int n,
                                   std::uint64_t seed,
                                   const GenOptions& opts = {});

ProblemInstance generate_bipartite(const PriorSpec& prior_u,
                                   const PriorSpec& prior_v,
                                   const ChannelSpec& channel, int n, int m,
                                   std::uint64_t seed,
                                   const GenOptions& opts = {});

// m == 0 gives a symmetric quenched instance.
ProblemInstance generate_quenched(const ChannelSpec& channel_rand, int n,
                                  int m, std::uint64_t seed,
                                  const GenOptions& opts = {});

enum class Alignment { none, sign, permutation };

// Mean per-row squared error against the planted truth, minimized over the
// declared symmetry group.
double empirical_mse(const MatrixXd& estimate, const MatrixXd& planted,
                     Alignment symmetry);

Alignment natural_alignment(const PriorSpec& prior);

// Persistence: meta.json plus flat little-endian float64 binaries (or CSV).
void save_instance(const ProblemInstance& inst, const std::string& dir,
                   const std::string& format = "bin");
ProblemInstance load_instance(const std::string& dir);

void save_matrix_bin(const MatrixXd& m, const std::string& path);
MatrixXd load_matrix_bin(const std::string& path, Eigen::Index rows,
                         Eigen::Index cols);
void save_matrix_csv(const MatrixXd& m, const std::string& path);

}  // namespace lowramp
