#pragma once

#include <memory>

#include "lowramp/common.hpp"

namespace lowramp {

enum class ChannelFamily { gaussian, conventional, sbm, exponential };

std::string channel_tag(ChannelFamily f);
ChannelFamily channel_family_from_tag(const std::string& tag);

// Output channel g(Y, w). When `assumed` is set this spec generates the data
// while `assumed` supplies the likelihood the algorithm works with.
struct ChannelSpec {
  ChannelFamily family = ChannelFamily::gaussian;
  double delta = 1.0;  // gaussian noise variance
  double beta = 1.0;   // conventional inverse temperature
  double p_out = 0.5;  // sbm base edge probability
  double mu = 1.0;     // sbm signal strength
  std::shared_ptr<ChannelSpec> assumed;

  static ChannelSpec gaussian_noise(double delta);
  static ChannelSpec conventional(double beta);
  static ChannelSpec sbm(double p_out, double mu);
  static ChannelSpec exponential();

  ChannelSpec with_assumed(const ChannelSpec& a) const;
  const ChannelSpec& assumed_or_self() const;

  double g(double y, double w) const;   // log-likelihood term
  double score(double y) const;         // dg/dw at w = 0
  double second(double y) const;        // (dg/dw)^2 + d2g/dw2 at w = 0

  // Fisher information parameter of the channel itself (Bayes-optimal Delta).
  double fisher_delta() const;

  // One draw from P_out(.|w). Conventional acts as randomly quenched +-1
  // disorder and ignores w.
  double sample_output(double w, std::mt19937_64& rng) const;
};

// Effective noise parameters of an (assumed, generating) channel pair.
struct NoiseParams {
  double delta_tilde = 1.0;  // 1/delta_tilde = E[score_a^2]
  double delta_hat = 1.0;    // 1/delta_hat = E[score_a * score_gen]
  double r_bar = 0.0;        // E[second_a]
  double delta_fisher = 1.0; // Fisher Delta of the generating channel

  double inv_tilde() const { return 1.0 / delta_tilde; }
  double inv_hat() const {
    return std::isinf(delta_hat) ? 0.0 : 1.0 / delta_hat;
  }
  static NoiseParams bayes(double delta) {
    return NoiseParams{delta, delta, 0.0, delta};
  }
};

// quenched = Y drawn with no w dependence (generating score treated as 0).
NoiseParams noise_params(const ChannelSpec& generating,
                         const ChannelSpec& assumed, bool quenched = false);

inline NoiseParams noise_params(const ChannelSpec& generating,
                                bool quenched = false) {
  return noise_params(generating, generating.assumed_or_self(), quenched);
}

// Elementwise S and R with the assumed channel.
std::pair<MatrixXd, MatrixXd> score_matrices(const ChannelSpec& channel,
                                             const MatrixXd& y);

}  // namespace lowramp
