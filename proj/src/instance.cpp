#include "lowramp/instance.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

namespace lowramp {

namespace fs = std::filesystem;
using nlohmann::json;

MatrixXd PackedSymmetric::dense() const {
  MatrixXd d = MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      d(i, j) = (*this)(i, j);
      d(j, i) = d(i, j);
    }
  return d;
}

namespace {

void score_symmetric(ProblemInstance& inst, const GenOptions& opts) {
  const ChannelSpec& a = inst.channel.assumed_or_self();
  const int n = inst.n;
  inst.s = MatrixXd::Zero(n, n);
  if (opts.materialize_r) inst.r = MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double y = inst.y_sym(i, j);
      double sv = a.score(y);
      inst.s(i, j) = sv;
      inst.s(j, i) = sv;
      if (opts.materialize_r) {
        double rv = a.second(y);
        inst.r(i, j) = rv;
        inst.r(j, i) = rv;
      }
    }
}

void score_bipartite(ProblemInstance& inst, const GenOptions& opts) {
  const ChannelSpec& a = inst.channel.assumed_or_self();
  inst.s.resize(inst.n, inst.m);
  if (opts.materialize_r) inst.r.resize(inst.n, inst.m);
  for (int i = 0; i < inst.n; ++i)
    for (int j = 0; j < inst.m; ++j) {
      inst.s(i, j) = a.score(inst.y_rect(i, j));
      if (opts.materialize_r) inst.r(i, j) = a.second(inst.y_rect(i, j));
    }
}

}  // namespace

ProblemInstance generate_symmetric(const PriorSpec& prior0,
                                   const ChannelSpec& channel, int n,
                                   std::uint64_t seed, const GenOptions& opts) {
  if (n < 2) throw UnsupportedValue("symmetric instance needs n >= 2");
  ProblemInstance inst;
  inst.kind = InstanceKind::symmetric;
  inst.n = n;
  inst.m = n;
  inst.rank0 = prior0.rank;
  inst.prior0 = prior0;
  inst.channel = channel;
  inst.seed = seed;
  inst.x0 = sample(prior0, n, mix_seed(seed, 1));
  inst.y_sym.resize(n);
  const double sqn = std::sqrt(static_cast<double>(n));
  for (int i = 0; i < n; ++i) {
    std::mt19937_64 rng = make_rng(seed, 1000 + static_cast<std::uint64_t>(i));
    for (int j = i + 1; j < n; ++j) {
      double w = inst.x0.row(i).dot(inst.x0.row(j)) / sqn;
      inst.y_sym.at(i, j) = channel.sample_output(w, rng);
    }
  }
  score_symmetric(inst, opts);
  return inst;
}

ProblemInstance generate_bipartite(const PriorSpec& prior_u,
                                   const PriorSpec& prior_v,
                                   const ChannelSpec& channel, int n, int m,
                                   std::uint64_t seed, const GenOptions& opts) {
  if (n < 1 || m < 1) throw UnsupportedValue("bipartite instance needs n, m >= 1");
  if (prior_u.rank != prior_v.rank)
    throw ShapeMismatch("bipartite priors must share the rank");
  ProblemInstance inst;
  inst.kind = InstanceKind::bipartite;
  inst.n = n;
  inst.m = m;
  inst.rank0 = prior_u.rank;
  inst.prior_u0 = prior_u;
  inst.prior_v0 = prior_v;
  inst.channel = channel;
  inst.seed = seed;
  inst.u0 = sample(prior_u, n, mix_seed(seed, 1));
  inst.v0 = sample(prior_v, m, mix_seed(seed, 2));
  inst.y_rect.resize(n, m);
  const double sqn = std::sqrt(static_cast<double>(n));  // sqrt(N), not sqrt(M)
  for (int i = 0; i < n; ++i) {
    std::mt19937_64 rng = make_rng(seed, 1000 + static_cast<std::uint64_t>(i));
    for (int j = 0; j < m; ++j) {
      double w = inst.u0.row(i).dot(inst.v0.row(j)) / sqn;
      inst.y_rect(i, j) = channel.sample_output(w, rng);
    }
  }
  score_bipartite(inst, opts);
  return inst;
}

ProblemInstance generate_quenched(const ChannelSpec& channel_rand, int n, int m,
                                  std::uint64_t seed, const GenOptions& opts) {
  ProblemInstance inst;
  inst.channel = channel_rand;
  inst.seed = seed;
  inst.quenched = true;
  inst.n = n;
  if (m == 0) {
    if (n < 2) throw UnsupportedValue("symmetric instance needs n >= 2");
    inst.kind = InstanceKind::symmetric;
    inst.m = n;
    inst.y_sym.resize(n);
    for (int i = 0; i < n; ++i) {
      std::mt19937_64 rng = make_rng(seed, 1000 + static_cast<std::uint64_t>(i));
      for (int j = i + 1; j < n; ++j)
        inst.y_sym.at(i, j) = channel_rand.sample_output(0.0, rng);
    }
    score_symmetric(inst, opts);
  } else {
    inst.kind = InstanceKind::bipartite;
    inst.m = m;
    inst.y_rect.resize(n, m);
    for (int i = 0; i < n; ++i) {
      std::mt19937_64 rng = make_rng(seed, 1000 + static_cast<std::uint64_t>(i));
      for (int j = 0; j < m; ++j)
        inst.y_rect(i, j) = channel_rand.sample_output(0.0, rng);
    }
    score_bipartite(inst, opts);
  }
  return inst;
}

Alignment natural_alignment(const PriorSpec& prior) {
  if (prior.family == PriorFamily::community) return Alignment::permutation;
  if (prior.zero_mean()) return Alignment::sign;
  return Alignment::none;
}

namespace {

double mse_plain(const MatrixXd& a, const MatrixXd& b) {
  return (a - b).squaredNorm() / a.rows();
}

}  // namespace

double empirical_mse(const MatrixXd& estimate, const MatrixXd& planted,
                     Alignment symmetry) {
  check_shape(estimate.rows() == planted.rows() &&
                  estimate.cols() == planted.cols(),
              "empirical_mse: shapes differ");
  const int r = static_cast<int>(estimate.cols());
  switch (symmetry) {
    case Alignment::none:
      return mse_plain(estimate, planted);
    case Alignment::sign: {
      // per-column sign flips decouple
      double total = 0.0;
      for (int c = 0; c < r; ++c) {
        double dot = estimate.col(c).dot(planted.col(c));
        double sgn_c = dot >= 0 ? 1.0 : -1.0;
        total += (sgn_c * estimate.col(c) - planted.col(c)).squaredNorm();
      }
      return total / estimate.rows();
    }
    case Alignment::permutation: {
      MatrixXd cross = estimate.transpose() * planted;  // r x r
      double base = estimate.squaredNorm() + planted.squaredNorm();
      std::vector<int> perm(r);
      std::iota(perm.begin(), perm.end(), 0);
      double best_cross;
      if (r <= 8) {
        best_cross = -std::numeric_limits<double>::infinity();
        std::vector<int> p = perm;
        std::sort(p.begin(), p.end());
        do {
          double c = 0;
          for (int k = 0; k < r; ++k) c += cross(p[k], k);
          best_cross = std::max(best_cross, c);
        } while (std::next_permutation(p.begin(), p.end()));
      } else {
        // greedy matching by largest correlation
        std::vector<bool> used_row(r, false), used_col(r, false);
        best_cross = 0;
        for (int step = 0; step < r; ++step) {
          int bi = -1, bj = -1;
          double bv = -std::numeric_limits<double>::infinity();
          for (int i = 0; i < r; ++i)
            if (!used_row[i])
              for (int j = 0; j < r; ++j)
                if (!used_col[j] && cross(i, j) > bv) {
                  bv = cross(i, j);
                  bi = i;
                  bj = j;
                }
          used_row[bi] = used_col[bj] = true;
          best_cross += bv;
        }
      }
      return (base - 2.0 * best_cross) / estimate.rows();
    }
  }
  throw UnsupportedValue("empirical_mse: unknown symmetry");
}

// ---------------------------------------------------------------------------
// persistence

void save_matrix_bin(const MatrixXd& m, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  // row-major on disk
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      double v = m(i, j);
      f.write(reinterpret_cast<const char*>(&v), sizeof(double));
    }
  if (!f) throw IoError("write failed: " + path);
}

MatrixXd load_matrix_bin(const std::string& path, Eigen::Index rows,
                         Eigen::Index cols) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) {
      double v;
      f.read(reinterpret_cast<char*>(&v), sizeof(double));
      if (!f) throw IoError("truncated file: " + path);
      m(i, j) = v;
    }
  return m;
}

void save_matrix_csv(const MatrixXd& m, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path + " for writing");
  char buf[64];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.12g", m(i, j));
      f << buf << (j + 1 < m.cols() ? "," : "");
    }
    f << "\n";
  }
}

namespace {

MatrixXd load_matrix_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    size_t pos = 0;
    while (pos <= line.size()) {
      size_t nxt = line.find(',', pos);
      if (nxt == std::string::npos) nxt = line.size();
      row.push_back(std::stod(line.substr(pos, nxt - pos)));
      pos = nxt + 1;
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("empty csv: " + path);
  MatrixXd m(rows.size(), rows[0].size());
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  return m;
}

json channel_to_json(const ChannelSpec& c) {
  json j;
  j["family"] = channel_tag(c.family);
  json params;
  switch (c.family) {
    case ChannelFamily::gaussian: params["delta"] = c.delta; break;
    case ChannelFamily::conventional: params["beta"] = c.beta; break;
    case ChannelFamily::sbm:
      params["p_out"] = c.p_out;
      params["mu"] = c.mu;
      break;
    case ChannelFamily::exponential: break;
  }
  j["params"] = params;
  if (c.assumed) j["assumed"] = channel_to_json(*c.assumed);
  return j;
}

ChannelSpec channel_from_json(const json& j) {
  ChannelFamily f = channel_family_from_tag(j.at("family"));
  const json& p = j.at("params");
  ChannelSpec c;
  switch (f) {
    case ChannelFamily::gaussian:
      c = ChannelSpec::gaussian_noise(p.at("delta"));
      break;
    case ChannelFamily::conventional:
      c = ChannelSpec::conventional(p.at("beta"));
      break;
    case ChannelFamily::sbm:
      c = ChannelSpec::sbm(p.at("p_out"), p.at("mu"));
      break;
    case ChannelFamily::exponential:
      c = ChannelSpec::exponential();
      break;
  }
  if (j.contains("assumed"))
    c = c.with_assumed(channel_from_json(j.at("assumed")));
  return c;
}

json prior_to_json(const PriorSpec& p) {
  json j;
  j["family"] = prior_tag(p.family);
  json params;
  params["rank"] = p.rank;
  switch (p.family) {
    case PriorFamily::gaussian: {
      params["mu"] = std::vector<double>(p.mu.data(), p.mu.data() + p.mu.size());
      std::vector<double> cov(p.cov.data(), p.cov.data() + p.cov.size());
      params["cov"] = cov;  // column-major r*r
      break;
    }
    case PriorFamily::community:
    case PriorFamily::spherical:
      break;
    default:
      params["rho"] = p.rho;
  }
  j["params"] = params;
  return j;
}

PriorSpec prior_from_json(const json& j) {
  PriorFamily f = prior_family_from_tag(j.at("family"));
  const json& p = j.at("params");
  int rank = p.value("rank", 1);
  switch (f) {
    case PriorFamily::ising: return PriorSpec::ising(p.at("rho"));
    case PriorFamily::bernoulli: return PriorSpec::bernoulli(p.at("rho"));
    case PriorFamily::rademacher_bernoulli:
      return PriorSpec::rademacher_bernoulli(p.at("rho"));
    case PriorFamily::gauss_bernoulli_joint:
      return PriorSpec::gauss_bernoulli_joint(p.at("rho"), rank);
    case PriorFamily::gauss_bernoulli_indep:
      return PriorSpec::gauss_bernoulli_indep(p.at("rho"), rank);
    case PriorFamily::gaussian: {
      std::vector<double> mu = p.at("mu");
      std::vector<double> cov = p.at("cov");
      VectorXd muv = Eigen::Map<VectorXd>(mu.data(), mu.size());
      MatrixXd covm = Eigen::Map<MatrixXd>(cov.data(), mu.size(), mu.size());
      return PriorSpec::gaussian(muv, covm);
    }
    case PriorFamily::community: return PriorSpec::community(rank);
    case PriorFamily::two_balanced: return PriorSpec::two_balanced(p.at("rho"));
    case PriorFamily::spherical: return PriorSpec::spherical(rank);
  }
  throw InvalidPrior("prior_from_json: unknown family");
}

}  // namespace

void save_instance(const ProblemInstance& inst, const std::string& dir,
                   const std::string& format) {
  if (format != "bin" && format != "csv")
    throw ConfigError("format must be bin or csv");
  fs::create_directories(dir);
  json meta;
  meta["kind"] = inst.kind == InstanceKind::symmetric ? "symmetric" : "bipartite";
  meta["n"] = inst.n;
  meta["m"] = inst.m;
  meta["rank0"] = inst.rank0;
  meta["quenched"] = inst.quenched;
  meta["seed"] = inst.seed;
  meta["format"] = format;
  meta["channel"] = channel_to_json(inst.channel);
  if (inst.prior0) meta["prior0"] = prior_to_json(*inst.prior0);
  if (inst.prior_u0) meta["prior_u0"] = prior_to_json(*inst.prior_u0);
  if (inst.prior_v0) meta["prior_v0"] = prior_to_json(*inst.prior_v0);
  std::ofstream mf(dir + "/meta.json");
  mf << meta.dump(2) << "\n";

  std::string ext = format == "bin" ? ".bin" : ".csv";
  auto save = [&](const MatrixXd& m, const std::string& name) {
    if (format == "bin")
      save_matrix_bin(m, dir + "/" + name + ".bin");
    else
      save_matrix_csv(m, dir + "/" + name + ".csv");
  };
  if (inst.kind == InstanceKind::symmetric) {
    save(inst.y_sym.data, "Y");
    if (inst.x0.size()) save(inst.x0, "X0");
  } else {
    save(inst.y_rect, "Y");
    if (inst.u0.size()) save(inst.u0, "U0");
    if (inst.v0.size()) save(inst.v0, "V0");
  }
}

ProblemInstance load_instance(const std::string& dir) {
  std::ifstream mf(dir + "/meta.json");
  if (!mf) throw IoError("cannot open " + dir + "/meta.json");
  json meta = json::parse(mf);
  ProblemInstance inst;
  inst.kind = meta.at("kind") == "symmetric" ? InstanceKind::symmetric
                                             : InstanceKind::bipartite;
  inst.n = meta.at("n");
  inst.m = meta.at("m");
  inst.rank0 = meta.at("rank0");
  inst.quenched = meta.value("quenched", false);
  inst.seed = meta.at("seed");
  inst.channel = channel_from_json(meta.at("channel"));
  if (meta.contains("prior0")) inst.prior0 = prior_from_json(meta.at("prior0"));
  if (meta.contains("prior_u0"))
    inst.prior_u0 = prior_from_json(meta.at("prior_u0"));
  if (meta.contains("prior_v0"))
    inst.prior_v0 = prior_from_json(meta.at("prior_v0"));
  std::string format = meta.value("format", "bin");

  auto load = [&](const std::string& name, Eigen::Index rows,
                  Eigen::Index cols) {
    if (format == "bin")
      return load_matrix_bin(dir + "/" + name + ".bin", rows, cols);
    MatrixXd m = load_matrix_csv(dir + "/" + name + ".csv");
    if (m.rows() != rows || m.cols() != cols)
      throw IoError(name + " has unexpected shape");
    return m;
  };
  GenOptions opts;
  if (inst.kind == InstanceKind::symmetric) {
    Eigen::Index ny = static_cast<Eigen::Index>(inst.n) * (inst.n - 1) / 2;
    MatrixXd y = load("Y", ny, 1);
    inst.y_sym.resize(inst.n);
    inst.y_sym.data = y.col(0);
    if (fs::exists(dir + "/X0.bin") || fs::exists(dir + "/X0.csv"))
      inst.x0 = load("X0", inst.n, inst.rank0);
    score_symmetric(inst, opts);
  } else {
    inst.y_rect = load("Y", inst.n, inst.m);
    if (fs::exists(dir + "/U0.bin") || fs::exists(dir + "/U0.csv"))
      inst.u0 = load("U0", inst.n, inst.rank0);
    if (fs::exists(dir + "/V0.bin") || fs::exists(dir + "/V0.csv"))
      inst.v0 = load("V0", inst.m, inst.rank0);
    score_bipartite(inst, opts);
  }
  return inst;
}

}  // namespace lowramp
