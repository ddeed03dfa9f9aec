#include "lowramp/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "lowramp/amp.hpp"
#include "lowramp/thresholds.hpp"

namespace lowramp {

namespace {

std::string fmt12(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::vector<double> parse_grid(const std::string& list,
                               const std::string& range) {
  std::vector<double> out;
  if (!list.empty()) {
    std::stringstream ss(list);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
    return out;
  }
  if (range.empty()) return out;
  // "a:b:n" linear, "log:a:b:n" logarithmic
  std::vector<std::string> parts;
  std::stringstream ss(range);
  std::string tok;
  while (std::getline(ss, tok, ':')) parts.push_back(tok);
  bool logspace = !parts.empty() && parts[0] == "log";
  size_t off = logspace ? 1 : 0;
  if (parts.size() != off + 3) throw ConfigError("bad range: " + range);
  double a = std::stod(parts[off]), b = std::stod(parts[off + 1]);
  int n = std::stoi(parts[off + 2]);
  if (n < 1) throw ConfigError("range needs at least one point");
  for (int i = 0; i < n; ++i) {
    double t = n == 1 ? 0.0 : static_cast<double>(i) / (n - 1);
    out.push_back(logspace ? std::exp(std::log(a) + t * (std::log(b) - std::log(a)))
                           : a + t * (b - a));
  }
  return out;
}

struct PriorFlags {
  std::string tag;
  double rho = -1;
  int rank = 1;
  std::vector<double> mu, var;

  void attach(CLI::App* cmd, const std::string& prefix) {
    cmd->add_option("--" + prefix, tag, "prior family tag");
    cmd->add_option("--" + prefix + "-rho", rho, "sparsity / atom weight");
    cmd->add_option("--" + prefix + "-rank", rank, "prior rank");
    cmd->add_option("--" + prefix + "-mu", mu, "gaussian mean components");
    cmd->add_option("--" + prefix + "-var", var, "gaussian variance diagonal");
  }

  PriorSpec build() const {
    if (tag.empty()) throw ConfigError("missing prior tag");
    PriorFamily f = prior_family_from_tag(tag);
    auto need_rho = [&]() {
      if (rho < 0)
        throw ConfigError("missing required parameter rho for prior " + tag);
      return rho;
    };
    switch (f) {
      case PriorFamily::ising: return PriorSpec::ising(need_rho());
      case PriorFamily::bernoulli: return PriorSpec::bernoulli(need_rho());
      case PriorFamily::rademacher_bernoulli:
        return PriorSpec::rademacher_bernoulli(need_rho());
      case PriorFamily::gauss_bernoulli_joint:
        return PriorSpec::gauss_bernoulli_joint(need_rho(), rank);
      case PriorFamily::gauss_bernoulli_indep:
        return PriorSpec::gauss_bernoulli_indep(need_rho(), rank);
      case PriorFamily::gaussian: {
        int r = mu.empty() ? rank : static_cast<int>(mu.size());
        VectorXd muv = VectorXd::Zero(r);
        for (size_t i = 0; i < mu.size(); ++i) muv(i) = mu[i];
        MatrixXd cov = MatrixXd::Identity(r, r);
        for (size_t i = 0; i < var.size() && i < static_cast<size_t>(r); ++i)
          cov(i, i) = var[i];
        return PriorSpec::gaussian(muv, cov);
      }
      case PriorFamily::community: return PriorSpec::community(rank);
      case PriorFamily::two_balanced: return PriorSpec::two_balanced(need_rho());
      case PriorFamily::spherical: return PriorSpec::spherical(rank);
    }
    throw ConfigError("unknown prior");
  }
};

struct ChannelFlags {
  std::string tag;
  double delta = -1, beta = -1, p_out = -1, mu = 1;
  std::string assumed_tag;
  double assumed_delta = -1, assumed_beta = -1, assumed_p_out = -1,
         assumed_mu = 1;

  void attach(CLI::App* cmd) {
    cmd->add_option("--channel", tag, "channel family tag");
    cmd->add_option("--delta", delta, "gaussian noise variance");
    cmd->add_option("--beta", beta, "conventional inverse temperature");
    cmd->add_option("--p-out", p_out, "sbm base probability");
    cmd->add_option("--mu", mu, "sbm signal strength");
    cmd->add_option("--assumed", assumed_tag, "assumed channel for mismatch");
    cmd->add_option("--assumed-delta", assumed_delta, "");
    cmd->add_option("--assumed-beta", assumed_beta, "");
    cmd->add_option("--assumed-p-out", assumed_p_out, "");
    cmd->add_option("--assumed-mu", assumed_mu, "");
  }

  static ChannelSpec build_one(const std::string& t, double d, double b,
                               double p, double m) {
    ChannelFamily f = channel_family_from_tag(t);
    switch (f) {
      case ChannelFamily::gaussian:
        if (d <= 0) throw ConfigError("missing required parameter delta");
        return ChannelSpec::gaussian_noise(d);
      case ChannelFamily::conventional:
        if (b <= 0) throw ConfigError("missing required parameter beta");
        return ChannelSpec::conventional(b);
      case ChannelFamily::sbm:
        if (p <= 0) throw ConfigError("missing required parameter p-out");
        return ChannelSpec::sbm(p, m);
      case ChannelFamily::exponential:
        return ChannelSpec::exponential();
    }
    throw ConfigError("unknown channel");
  }

  ChannelSpec build() const {
    if (tag.empty()) throw ConfigError("missing channel tag");
    ChannelSpec c = build_one(tag, delta, beta, p_out, mu);
    if (!assumed_tag.empty())
      c = c.with_assumed(build_one(assumed_tag, assumed_delta, assumed_beta,
                                   assumed_p_out, assumed_mu));
    return c;
  }
};

void write_text(const std::string& path, const std::string& content) {
  if (path == "-") {
    std::cout << content;
    return;
  }
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path);
  f << content;
}

int thread_count(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("LOWRAMP_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 0;  // library default
}

void apply_threads(int n) {
  if (n <= 0) return;
#ifdef _OPENMP
  omp_set_num_threads(n);
#endif
  Eigen::setNbThreads(n);
}

// ---------------------------------------------------------------------------

struct GenArgs {
  PriorFlags prior, prior_u, prior_v;
  ChannelFlags channel;
  int n = 0, m = 0;
  bool quenched = false;
  std::uint64_t seed = 0;
  std::string out, format = "bin";
};

int cmd_gen(const GenArgs& a) {
  if (a.n < 1) throw ConfigError("missing or invalid --n");
  if (a.out.empty()) throw ConfigError("missing --out directory");
  ChannelSpec channel = a.channel.build();
  ProblemInstance inst;
  if (a.quenched) {
    inst = generate_quenched(channel, a.n, a.m, a.seed);
  } else if (a.m > 0) {
    inst = generate_bipartite(a.prior_u.build(), a.prior_v.build(), channel,
                              a.n, a.m, a.seed);
  } else {
    inst = generate_symmetric(a.prior.build(), channel, a.n, a.seed);
  }
  save_instance(inst, a.out, a.format);
  std::cout << "wrote instance to " << a.out << " (n=" << inst.n
            << ", m=" << inst.m << ")\n";
  return 0;
}

struct AmpArgs {
  std::string instance_dir, trace_path, variant = "self-averaged";
  std::string init = "random";
  double damping = 1.0, tol = 1e-8;
  int max_iters = 1000;
  bool adaptive = false;
  std::uint64_t seed = 0;
};

int cmd_amp(const AmpArgs& a) {
  if (a.instance_dir.empty()) throw ConfigError("missing --instance");
  ProblemInstance inst = load_instance(a.instance_dir);
  PriorSpec prior = [&]() {
    if (inst.prior0) return *inst.prior0;
    throw ConfigError("instance has no symmetric prior; bipartite runs use the library API");
  }();
  AmpConfig cfg;
  cfg.damping = a.damping;
  cfg.tol = a.tol;
  cfg.max_iters = a.max_iters;
  cfg.variant = amp_variant_from_tag(a.variant);
  cfg.adaptive_damping = a.adaptive;
  cfg.seed = a.seed;
  cfg.init = a.init == "planted" ? AmpInit::planted : AmpInit::random;
  AmpResult res = run_symmetric(inst, prior, cfg);

  std::string trace = a.trace_path.empty() ? a.instance_dir + "/trace.csv"
                                           : a.trace_path;
  std::ostringstream ss;
  ss << "t,conv,mse,free_energy\n";
  for (const TraceRow& row : res.trace)
    ss << row.t << "," << fmt12(row.conv) << "," << fmt12(row.mse) << ","
       << fmt12(row.free_energy) << "\n";
  write_text(trace, ss.str());
  save_matrix_bin(res.state.x_hat, a.instance_dir + "/x_hat.bin");
  save_matrix_bin(res.state.sigma, a.instance_dir + "/sigma.bin");
  std::cout << "converged=" << (res.converged ? 1 : 0)
            << " iterations=" << res.state.t
            << " mse=" << fmt12(res.trace.empty()
                                    ? std::numeric_limits<double>::quiet_NaN()
                                    : res.trace.back().mse)
            << "\n";
  return 0;
}

struct SeArgs {
  std::string model, out = "-";
  double rho = -1;
  int rank = 1;
  double x_min = -1, x_max = -1;
  int points = 0;
  bool fixed_point = false;
  double delta = 0;
  std::string init = "uninformative";
};

int cmd_se(const SeArgs& a) {
  if (a.model.empty()) throw ConfigError("missing --model");
  ScalarSeModel m = make_scalar_se_model(a.model, a.rho, a.rank);
  if (a.x_min > 0) m.grid.x_min = a.x_min;
  if (a.x_max > 0) m.grid.x_max = a.x_max;
  if (a.points > 1) m.grid.points = a.points;
  if (a.fixed_point) {
    if (a.delta <= 0) throw ConfigError("fixed point mode needs --delta");
    double s0 = a.model == "community"
                    ? 1.0
                    : (a.model == "two_balanced" ? 1.0 : a.rho);
    double m0 = a.init == "informative" ? s0 : 1e-6 * s0;
    double mfp = se_fixed_point(m.f, a.delta, m0);
    std::cout << "m=" << fmt12(mfp) << " mse=" << fmt12(s0 - mfp) << "\n";
    return 0;
  }
  FixedPointCurve curve = fixed_point_curve(m.f, m.grid);
  std::ostringstream ss;
  ss << "x,delta,m,stable,free_energy_gap\n";
  for (int i = 0; i < curve.x.size(); ++i)
    ss << fmt12(curve.x(i)) << "," << fmt12(curve.delta(i)) << ","
       << fmt12(curve.m(i)) << "," << (curve.stable[i] ? 1 : 0) << ","
       << fmt12(curve.free_energy_gap(i)) << "\n";
  write_text(a.out, ss.str());
  return 0;
}

struct PhaseScanArgs {
  std::string model, out = "-", rho_list, rho_range, rescale;
  int rank = 1;
  int threads = 0;
};

int cmd_phase_scan(const PhaseScanArgs& a) {
  if (a.model.empty()) throw ConfigError("missing --model");
  std::vector<double> rhos = parse_grid(a.rho_list, a.rho_range);
  if (rhos.empty()) throw ConfigError("empty rho grid");
  for (double r : rhos)
    if (r <= 0) throw ConfigError("rho grid must be positive");
  apply_threads(thread_count(a.threads));
  std::vector<std::string> rows(rhos.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
  for (size_t i = 0; i < rhos.size(); ++i) {
    ScalarSeModel m = make_scalar_se_model(a.model, rhos[i], a.rank);
    Thresholds t = find_thresholds(m.f, m.grid, m.delta_c);
    double scale = a.rescale == "rho2" ? rhos[i] * rhos[i] : 1.0;
    auto field = [&](const std::optional<double>& v) {
      return v ? fmt12(*v / scale) : std::string("nan");
    };
    rows[i] = fmt12(rhos[i]) + "," + field(t.delta_c) + "," +
              field(t.delta_alg) + "," + field(t.delta_it) + "," +
              field(t.delta_dyn);
  }
  std::ostringstream ss;
  ss << "rho,delta_c,delta_alg,delta_it,delta_dyn\n";
  for (const std::string& row : rows) ss << row << "\n";
  write_text(a.out, ss.str());
  return 0;
}

struct SpectralArgs {
  int n = 2000;
  double sigma = 1.4;
  int seeds = 5;
  std::uint64_t seed0 = 1;
  std::string out = "-";
};

int cmd_spectral(const SpectralArgs& a) {
  // exponential output channel, gaussian prior of variance sigma
  PriorSpec prior = PriorSpec::gaussian(VectorXd::Zero(1),
                                        MatrixXd::Constant(1, 1, a.sigma));
  ChannelSpec channel = ChannelSpec::exponential();
  std::ostringstream ss;
  ss << "matrix,seed,overlap2,theory_overlap2,theory_informative\n";
  PcaResult th_s = pca_analysis(prior, pca_params_score(channel).delta_hat,
                                pca_params_score(channel).delta_tilde,
                                pca_params_score(channel).r_bar);
  PcaResult th_y = pca_analysis(prior, pca_params_raw(channel).delta_hat,
                                pca_params_raw(channel).delta_tilde,
                                pca_params_raw(channel).r_bar);
  for (int k = 0; k < a.seeds; ++k) {
    ProblemInstance inst =
        generate_symmetric(prior, channel, a.n, a.seed0 + k);
    MatrixXd y = inst.y_sym.dense();
    Eigen::SelfAdjointEigenSolver<MatrixXd> es_s(inst.s);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es_y(y);
    auto overlap2 = [&](const Eigen::SelfAdjointEigenSolver<MatrixXd>& es) {
      VectorXd v = es.eigenvectors().col(inst.n - 1);
      double d = v.dot(inst.x0.col(0));
      return d * d / inst.x0.col(0).squaredNorm();
    };
    ss << "S," << (a.seed0 + k) << "," << fmt12(overlap2(es_s)) << ","
       << fmt12(th_s.overlap2) << "," << (th_s.informative ? 1 : 0) << "\n";
    ss << "Y," << (a.seed0 + k) << "," << fmt12(overlap2(es_y)) << ","
       << fmt12(th_y.overlap2) << "," << (th_y.informative ? 1 : 0) << "\n";
  }
  write_text(a.out, ss.str());
  return 0;
}

struct CompareArgs {
  std::string model = "gauss_bernoulli";
  double rho = 0.1;
  int n = 20000;
  std::string delta_list, delta_range, out = "-";
  std::uint64_t seed = 1;
  double damping = 0.85, tol = 1e-7;
  int max_iters = 800;
  int threads = 0;
};

int cmd_compare(const CompareArgs& a) {
  std::vector<double> deltas = parse_grid(a.delta_list, a.delta_range);
  if (deltas.empty()) throw ConfigError("empty delta grid");
  apply_threads(thread_count(a.threads));
  PriorSpec prior = [&]() {
    if (a.model == "gauss_bernoulli" || a.model == "gauss_bernoulli_joint")
      return PriorSpec::gauss_bernoulli_joint(a.rho, 1);
    if (a.model == "rademacher_bernoulli")
      return PriorSpec::rademacher_bernoulli(a.rho);
    if (a.model == "bernoulli") return PriorSpec::bernoulli(a.rho);
    if (a.model == "two_balanced") return PriorSpec::two_balanced(a.rho);
    throw ConfigError("compare supports rank-1 scalar models only");
  }();
  ScalarSeModel se = make_scalar_se_model(a.model, a.rho, 1);
  double s0 = moments(prior).second_moment(0, 0);

  std::ostringstream ss;
  ss << "delta,mse_amp_uninformative,mse_amp_informative,mse_se_uninformative,"
        "mse_se_informative,mse_pca\n";
  for (size_t i = 0; i < deltas.size(); ++i) {
    double delta = deltas[i];
    ChannelSpec channel = ChannelSpec::gaussian_noise(delta);
    GenOptions opts;
    opts.materialize_r = false;
    ProblemInstance inst =
        generate_symmetric(prior, channel, a.n, mix_seed(a.seed, i));
    AmpConfig cfg;
    cfg.damping = a.damping;
    cfg.tol = a.tol;
    cfg.max_iters = a.max_iters;
    cfg.variant = AmpVariant::bayes_optimal;
    cfg.track_free_energy = false;
    cfg.seed = mix_seed(a.seed, 1000 + i);
    double amp_uninf, amp_inf;
    {
      AmpConfig c = cfg;
      c.init = AmpInit::random;
      AmpResult r = run_symmetric(inst, prior, c);
      amp_uninf = empirical_mse(r.state.x_hat, inst.x0, Alignment::sign);
    }
    {
      AmpConfig c = cfg;
      c.init = AmpInit::planted;
      AmpResult r = run_symmetric(inst, prior, c);
      amp_inf = empirical_mse(r.state.x_hat, inst.x0, Alignment::sign);
    }
    double m_uninf = se_fixed_point(se.f, delta, 1e-6 * s0);
    double m_inf = se_fixed_point(se.f, delta, s0);
    PcaResult pca = pca_analysis(prior, delta, delta, 1.0 / delta - 1.0);
    ss << fmt12(delta) << "," << fmt12(amp_uninf) << "," << fmt12(amp_inf)
       << "," << fmt12(s0 - m_uninf) << "," << fmt12(s0 - m_inf) << ","
       << fmt12(pca.mse) << "\n";
  }
  write_text(a.out, ss.str());
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"low-rank matrix estimation: planted instances, message "
               "passing, state evolution, phase diagrams"};
  app.set_config("--config", "", "key=value config file (flags win)");
  app.require_subcommand(1);

  GenArgs gen;
  CLI::App* cgen = app.add_subcommand("gen", "generate a planted instance");
  gen.prior.attach(cgen, "prior");
  gen.prior_u.attach(cgen, "prior-u");
  gen.prior_v.attach(cgen, "prior-v");
  gen.channel.attach(cgen);
  cgen->add_option("--n", gen.n, "rows");
  cgen->add_option("--m", gen.m, "columns (bipartite when > 0)");
  cgen->add_flag("--quenched", gen.quenched, "randomly quenched disorder");
  cgen->add_option("--seed", gen.seed, "rng seed");
  cgen->add_option("--out", gen.out, "output directory");
  cgen->add_option("--format", gen.format, "bin or csv");

  AmpArgs ampa;
  CLI::App* camp = app.add_subcommand("amp", "run the message-passing solver");
  camp->add_option("--instance", ampa.instance_dir, "instance directory");
  camp->add_option("--damping", ampa.damping, "damping in (0,1]");
  camp->add_option("--tol", ampa.tol, "convergence tolerance");
  camp->add_option("--max-iters", ampa.max_iters, "iteration cap");
  camp->add_option("--init", ampa.init, "random or planted");
  camp->add_option("--variant", ampa.variant, "full, self-averaged or bayes");
  camp->add_flag("--adaptive", ampa.adaptive, "adaptive damping");
  camp->add_option("--seed", ampa.seed, "init seed");
  camp->add_option("--trace", ampa.trace_path, "trace csv path");

  SeArgs sea;
  CLI::App* cse = app.add_subcommand("se", "state-evolution fixed-point curve");
  cse->add_option("--model", sea.model, "scalar model tag or community");
  cse->add_option("--rho", sea.rho, "sparsity");
  cse->add_option("--rank", sea.rank, "rank (community)");
  cse->add_option("--x-min", sea.x_min, "");
  cse->add_option("--x-max", sea.x_max, "");
  cse->add_option("--points", sea.points, "");
  cse->add_flag("--fixed-point", sea.fixed_point, "iterate to a fixed point");
  cse->add_option("--se-delta", sea.delta, "noise for fixed-point mode");
  cse->add_option("--init", sea.init, "informative or uninformative");
  cse->add_option("--out", sea.out, "output path or -");

  PhaseScanArgs psa;
  CLI::App* cps = app.add_subcommand("phase-scan", "threshold scan over rho");
  cps->add_option("--model", psa.model, "model tag");
  cps->add_option("--rho-list", psa.rho_list, "comma separated rho values");
  cps->add_option("--rho-range", psa.rho_range, "a:b:n or log:a:b:n");
  cps->add_option("--rank", psa.rank, "rank (community)");
  cps->add_option("--rescale", psa.rescale, "rho2 divides deltas by rho^2");
  cps->add_option("--threads", psa.threads, "worker threads");
  cps->add_option("--out", psa.out, "output path or -");

  SpectralArgs spa;
  CLI::App* csp = app.add_subcommand(
      "spectral", "score-matrix vs raw-matrix eigenvector overlap");
  csp->add_option("--n", spa.n, "instance size");
  csp->add_option("--sigma", spa.sigma, "prior variance");
  csp->add_option("--seeds", spa.seeds, "number of seeds");
  csp->add_option("--seed0", spa.seed0, "first seed");
  csp->add_option("--out", spa.out, "output path or -");

  CompareArgs cma;
  CLI::App* ccm = app.add_subcommand(
      "compare", "empirical solver MSE against the state-evolution prediction");
  ccm->add_option("--model", cma.model, "rank-1 model tag");
  ccm->add_option("--rho", cma.rho, "sparsity");
  ccm->add_option("--n", cma.n, "instance size");
  ccm->add_option("--delta-list", cma.delta_list, "comma separated deltas");
  ccm->add_option("--delta-range", cma.delta_range, "a:b:n or log:a:b:n");
  ccm->add_option("--seed", cma.seed, "base seed");
  ccm->add_option("--damping", cma.damping, "");
  ccm->add_option("--tol", cma.tol, "");
  ccm->add_option("--max-iters", cma.max_iters, "");
  ccm->add_option("--threads", cma.threads, "");
  ccm->add_option("--out", cma.out, "output path or -");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (cgen->parsed()) return cmd_gen(gen);
    if (camp->parsed()) return cmd_amp(ampa);
    if (cse->parsed()) return cmd_se(sea);
    if (cps->parsed()) return cmd_phase_scan(psa);
    if (csp->parsed()) return cmd_spectral(spa);
    if (ccm->parsed()) return cmd_compare(cma);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidPrior& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}

}  // namespace lowramp
