#include "sqs/sqs_conditions.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <fstream>
#include <mutex>
#include <sstream>

#include "json.hpp"
#include "sqs/errors.hpp"
#include "sqs/hash.hpp"

namespace sqs {

namespace {

using nlohmann::json;

constexpr int kTablesVersion = 1;

/// C1 value of a fine cell of a grid whose unit cells have r sub-cells per side.
const Matrix& c1_of_cell(const FieldSpec& spec, int r, const Index3& fine) {
  Index3 sub{0, 0, 0};
  for (int a = 0; a < spec.dimension(); ++a) sub[a] = ((fine[a] % r) + r) % r;
  return spec.c1().at(r, sub);
}

/// Periodic or dirichlet solve of -div(C0 grad u) = div(G) on a box of n cells per side.
Vector solve_source(const Q1Space& space, const FeSystem& system, const Matrix& G, double tol) {
  const Vector load = space.restrict_to_dofs(load_from_cell_field(space, G));
  const double floor = 1e-14 * std::pow(space.h(), space.dimension() - 1) * std::max(G.cwiseAbs().maxCoeff(), 1e-300) *
                       std::sqrt(static_cast<double>(std::max<std::size_t>(space.dof_count(), 1)));
  Vector x;
  pcg_solve(system, load, x, tol, static_cast<int>(std::max<std::int64_t>(50 * space.cells_per_side(), 50)),
            space.boundary() != Boundary::dirichlet, floor);
  return space.expand_from_dofs(x);
}

/// Integral of C1 grad u over each unit cell of the grid; column p of entry k is
/// filled from `grads` (d x cells) of direction p.
void accumulate_unit_integrals(const FieldSpec& spec, int r, std::int64_t cells_per_side, const Matrix& grads, int p,
                               std::vector<Matrix>& per_unit) {
  const int d = spec.dimension();
  const BoxIndexer fine{d, cells_per_side};
  const BoxIndexer units{d, cells_per_side / r};
  const double cell_volume = std::pow(1.0 / r, d);
  for (std::size_t cell = 0; cell < fine.size(); ++cell) {
    const Index3 m = fine.multi(cell);
    Index3 u{0, 0, 0};
    for (int a = 0; a < d; ++a) u[a] = m[a] / r;
    per_unit[units.linear(u)].col(p) += cell_volume * c1_of_cell(spec, r, m) * grads.col(static_cast<Eigen::Index>(cell));
  }
}

std::int64_t linf(const Index3& k, int d) {
  std::int64_t v = 0;
  for (int a = 0; a < d; ++a) v = std::max<std::int64_t>(v, std::abs(k[a]));
  return v;
}

// Periodic autocorrelation c(m) = sum_k x_k x_{k+m} through a real FFT.
class Autocorrelation {
 public:
  Autocorrelation(int d, int N) : d_(d), N_(N), real_(BoxIndexer{d, N}.size()) {
    complex_ = real_ / static_cast<std::size_t>(N) * static_cast<std::size_t>(N / 2 + 1);
    int dims[3] = {N, N, N};
    double* in = fftw_alloc_real(real_);
    fftw_complex* out = fftw_alloc_complex(complex_);
    std::lock_guard lock(planner_mutex());
    forward_ = fftw_plan_dft_r2c(d, dims, in, out, FFTW_ESTIMATE);
    backward_ = fftw_plan_dft_c2r(d, dims, out, in, FFTW_ESTIMATE);
    fftw_free(in);
    fftw_free(out);
  }
  ~Autocorrelation() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
  }
  Autocorrelation(const Autocorrelation&) = delete;
  Autocorrelation& operator=(const Autocorrelation&) = delete;

  std::vector<double> operator()(const std::vector<double>& x) const {
    double* in = fftw_alloc_real(real_);
    fftw_complex* out = fftw_alloc_complex(complex_);
    std::copy(x.begin(), x.end(), in);
    fftw_execute_dft_r2c(forward_, in, out);
    for (std::size_t i = 0; i < complex_; ++i) {
      out[i][0] = out[i][0] * out[i][0] + out[i][1] * out[i][1];
      out[i][1] = 0.0;
    }
    fftw_execute_dft_c2r(backward_, out, in);
    std::vector<double> c(in, in + real_);
    for (double& v : c) v /= static_cast<double>(real_);
    fftw_free(in);
    fftw_free(out);
    return c;
  }

  static const Autocorrelation& get(int d, int N) {
    static std::mutex mutex;
    static std::map<std::pair<int, int>, std::unique_ptr<Autocorrelation>> cache;
    std::lock_guard lock(mutex);
    auto& slot = cache[{d, N}];
    if (!slot) slot = std::make_unique<Autocorrelation>(d, N);
    return *slot;
  }

 private:
  static std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
  }

  int d_;
  int N_;
  std::size_t real_;
  std::size_t complex_ = 0;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
};

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  return m;
}

json vector_to_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Vector vector_from_json(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

const Matrix& OfflineTables::IkjN_at(const Index3& k, const Index3& j) const {
  Index3 m{0, 0, 0};
  for (int a = 0; a < d; ++a) m[a] = j[a] - k[a];
  return IkjN[BoxIndexer{d, N}.wrapped(m)];
}

std::string offline_hash(const FieldSpec& spec, const OfflineParams& params) {
  std::ostringstream os;
  os << "tables-v" << kTablesVersion << '|' << spec.fingerprint() << "|N=" << params.N << "|r=" << params.r
     << "|R=" << params.effective_R() << "|K=" << params.K << "|thr=" << params.decay_threshold
     << "|tol=" << params.tol;
  return content_hash(os.str());
}

OfflineTables build_offline_tables(const FieldSpec& spec, const OfflineParams& params) {
  const int d = spec.dimension();
  const int N = params.N;
  const int r = params.r;
  const int R = params.effective_R();
  if (N < 1) throw SpecError("N must be >= 1");
  if (r < 1 || r % spec.c1().resolution() != 0) throw SpecError("resolution does not resolve the C1 table");
  if (R < N) throw SpecError("truncation radius R must be >= N");
  if (params.K < 0 || params.K > R - 1) throw SpecError("K must lie in [0, R - 1]");

  OfflineTables t;
  t.spec_fingerprint = spec.fingerprint();
  t.hash = offline_hash(spec, params);
  t.d = d;
  t.N = N;
  t.r = r;
  t.R = R;
  t.decay_threshold = params.decay_threshold;
  const LawMoments moments = law_moments(spec);
  t.mean = moments.mean;
  const Matrix& C0 = spec.c0();

  // Unit-cell periodic problem for u1bar.
  {
    const Q1Space space(d, r, 1.0 / r, Boundary::periodic);
    const FeSystem system = assemble(space, constant_grid(C0, d, 1, r));
    const BoxIndexer fine{d, r};
    t.u1bar_integral = Matrix::Zero(d, d);
    for (int p = 0; p < d; ++p) {
      Matrix G(d, static_cast<Eigen::Index>(fine.size()));
      for (std::size_t cell = 0; cell < fine.size(); ++cell)
        G.col(static_cast<Eigen::Index>(cell)) = c1_of_cell(spec, r, fine.multi(cell)).col(p);
      t.u1bar.push_back(solve_source(space, system, G, params.tol));
      ++t.solves;
      std::vector<Matrix> unit(1, Matrix::Zero(d, d));
      accumulate_unit_integrals(spec, r, r, cell_mean_gradients(space, t.u1bar.back()), p, unit);
      t.u1bar_integral.col(p) = unit[0].col(p);
    }
  }

  // Q_N periodic problem for phi_1^N with source in unit cell 0.
  {
    const std::int64_t n = static_cast<std::int64_t>(N) * r;
    const Q1Space space(d, n, 1.0 / r, Boundary::periodic);
    const FeSystem system = assemble(space, constant_grid(C0, d, N, r));
    const BoxIndexer fine{d, n};
    t.IkjN.assign(BoxIndexer{d, N}.size(), Matrix::Zero(d, d));
    for (int p = 0; p < d; ++p) {
      Matrix G = Matrix::Zero(d, static_cast<Eigen::Index>(fine.size()));
      for (std::size_t cell = 0; cell < fine.size(); ++cell) {
        const Index3 m = fine.multi(cell);
        if (linf(m, d) < r) G.col(static_cast<Eigen::Index>(cell)) = c1_of_cell(spec, r, m).col(p);
      }
      t.phi1N.push_back(solve_source(space, system, G, params.tol));
      ++t.solves;
      accumulate_unit_integrals(spec, r, n, cell_mean_gradients(space, t.phi1N.back()), p, t.IkjN);
    }
    Matrix bar = Matrix::Zero(d, d);
    for (const auto& m : t.IkjN) bar += m;
    // Translation invariance makes the integral over Q_N independent of k.
    t.Ibar_kN.assign(t.IkjN.size(), bar);
    t.IkN.assign(t.IkjN.size(), bar + t.u1bar_integral);
  }

  // Truncated whole-space problem for phi_1 on the box of units [-R, R]^d.
  {
    const std::int64_t n = static_cast<std::int64_t>(2 * R + 1) * r;
    const Q1Space space(d, n, 1.0 / r, Boundary::dirichlet);
    const FeSystem system = assemble(space, constant_grid(C0, d, 2 * R + 1, r));
    const BoxIndexer fine{d, n};
    const BoxIndexer units{d, 2 * R + 1};
    std::vector<Matrix> per_unit(units.size(), Matrix::Zero(d, d));
    for (int p = 0; p < d; ++p) {
      Matrix G = Matrix::Zero(d, static_cast<Eigen::Index>(fine.size()));
      for (std::size_t cell = 0; cell < fine.size(); ++cell) {
        const Index3 m = fine.multi(cell);
        bool inside = true;
        for (int a = 0; a < d; ++a) inside = inside && m[a] / r == R;
        if (inside) G.col(static_cast<Eigen::Index>(cell)) = c1_of_cell(spec, r, m).col(p);
      }
      const Vector phi = solve_source(space, system, G, params.tol);
      ++t.solves;
      t.phi1_gradients.push_back(cell_mean_gradients(space, phi));
      accumulate_unit_integrals(spec, r, n, t.phi1_gradients.back(), p, per_unit);
    }
    double overall = 0.0;
    t.shell_ratio.assign(static_cast<std::size_t>(R), 0.0);
    for (std::size_t u = 0; u < units.size(); ++u) {
      Index3 k = units.multi(u);
      for (int a = 0; a < d; ++a) k[a] -= R;
      const std::int64_t shell = linf(k, d);
      if (shell > R - 1) continue;
      const double norm = per_unit[u].norm();
      overall = std::max(overall, norm);
      t.shell_ratio[static_cast<std::size_t>(shell)] = std::max(t.shell_ratio[static_cast<std::size_t>(shell)], norm);
    }
    for (double& s : t.shell_ratio) s = overall > 0.0 ? s / overall : 0.0;

    if (params.K > 0) {
      t.K = params.K;
      if (t.shell_ratio[static_cast<std::size_t>(t.K)] > params.decay_threshold)
        throw SpecError("decay threshold violated at K = " + std::to_string(t.K) + " (shell ratio " +
                        std::to_string(t.shell_ratio[static_cast<std::size_t>(t.K)]) + ")");
    } else {
      t.K = -1;
      for (int K = 1; K <= R - 1; ++K) {
        if (t.shell_ratio[static_cast<std::size_t>(K)] <= params.decay_threshold) {
          t.K = K;
          break;
        }
      }
      if (t.K < 0) throw SpecError("decay threshold not reached for any K <= R - 1; increase R");
    }
    for (std::size_t u = 0; u < units.size(); ++u) {
      Index3 k = units.multi(u);
      for (int a = 0; a < d; ++a) k[a] -= R;
      if (linf(k, d) <= t.K) t.Ik_inf.emplace(k, per_unit[u]);
    }
  }

  t.rhs2 = Matrix::Zero(d, d);
  for (const auto& [k, cov] : moments.covariance_series) {
    auto it = t.Ik_inf.find(k);
    if (it != t.Ik_inf.end()) t.rhs2 += cov * it->second;
  }
  return t;
}

std::string tables_to_json(const OfflineTables& t) {
  json j;
  j["version"] = kTablesVersion;
  j["hash"] = t.hash;
  j["spec"] = t.spec_fingerprint;
  j["d"] = t.d;
  j["N"] = t.N;
  j["r"] = t.r;
  j["R"] = t.R;
  j["K"] = t.K;
  j["decay_threshold"] = t.decay_threshold;
  j["mean"] = t.mean;
  j["solves"] = t.solves;
  for (const auto& v : t.u1bar) j["u1bar"].push_back(vector_to_json(v));
  for (const auto& v : t.phi1N) j["phi1N"].push_back(vector_to_json(v));
  for (const auto& [k, m] : t.Ik_inf) j["Ik_inf"].push_back({{"k", json(std::vector<std::int64_t>(k.begin(), k.end()))}, {"I", matrix_to_json(m)}});
  j["shell_ratio"] = t.shell_ratio;
  for (const auto& m : t.IkjN) j["IkjN"].push_back(matrix_to_json(m));
  j["u1bar_integral"] = matrix_to_json(t.u1bar_integral);
  for (const auto& m : t.IkN) j["IkN"].push_back(matrix_to_json(m));
  for (const auto& m : t.Ibar_kN) j["Ibar_kN"].push_back(matrix_to_json(m));
  j["rhs2"] = matrix_to_json(t.rhs2);
  return j.dump();
}

OfflineTables tables_from_json(const std::string& text) {
  OfflineTables t;
  try {
    const json j = json::parse(text);
    if (j.at("version").get<int>() != kTablesVersion) throw SpecError("offline tables have an unsupported version");
    t.hash = j.at("hash").get<std::string>();
    t.spec_fingerprint = j.at("spec").get<std::string>();
    t.d = j.at("d").get<int>();
    t.N = j.at("N").get<int>();
    t.r = j.at("r").get<int>();
    t.R = j.at("R").get<int>();
    t.K = j.at("K").get<int>();
    t.decay_threshold = j.at("decay_threshold").get<double>();
    t.mean = j.at("mean").get<double>();
    t.solves = j.at("solves").get<int>();
    for (const auto& v : j.at("u1bar")) t.u1bar.push_back(vector_from_json(v));
    for (const auto& v : j.at("phi1N")) t.phi1N.push_back(vector_from_json(v));
    for (const auto& e : j.at("Ik_inf")) {
      const auto k = e.at("k").get<std::vector<std::int64_t>>();
      t.Ik_inf.emplace(Index3{k.at(0), k.at(1), k.at(2)}, matrix_from_json(e.at("I")));
    }
    t.shell_ratio = j.at("shell_ratio").get<std::vector<double>>();
    for (const auto& m : j.at("IkjN")) t.IkjN.push_back(matrix_from_json(m));
    t.u1bar_integral = matrix_from_json(j.at("u1bar_integral"));
    for (const auto& m : j.at("IkN")) t.IkN.push_back(matrix_from_json(m));
    for (const auto& m : j.at("Ibar_kN")) t.Ibar_kN.push_back(matrix_from_json(m));
    t.rhs2 = matrix_from_json(j.at("rhs2"));
  } catch (const json::exception& e) {
    throw SpecError(std::string("malformed offline tables: ") + e.what());
  }
  return t;
}

OfflineTables load_or_build_tables(const FieldSpec& spec, const OfflineParams& params,
                                   const std::filesystem::path& cache_dir, bool* built) {
  const std::string hash = offline_hash(spec, params);
  const auto path = cache_dir / (hash + ".json");
  if (std::filesystem::exists(path)) {
    std::ifstream in(path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    OfflineTables t = tables_from_json(buffer.str());
    if (t.hash != hash) throw SpecError("cached offline tables carry a mismatched hash");
    if (built) *built = false;
    return t;
  }
  OfflineTables t = build_offline_tables(spec, params);
  std::filesystem::create_directories(cache_dir);
  std::ofstream(path) << tables_to_json(t);
  if (built) *built = true;
  return t;
}

double sqs1_error(const Environment& env, const LawMoments& moments) { return std::abs(env.mean() - moments.mean); }

Matrix sqs2_lhs(const Environment& env, const OfflineTables& tables, const LawMoments& moments, bool use_bar_tables) {
  if (env.domain.d != tables.d || env.domain.N != tables.N)
    throw SpecError("offline tables were built for a different domain");
  std::vector<double> centered(env.cells.size());
  for (std::size_t k = 0; k < centered.size(); ++k) centered[k] = env.cells[k] - moments.mean;
  const std::vector<double> c = Autocorrelation::get(tables.d, tables.N)(centered);
  const auto volume = static_cast<double>(centered.size());
  Matrix lhs = Matrix::Zero(tables.d, tables.d);
  for (std::size_t m = 0; m < c.size(); ++m) lhs += c[m] * tables.IkjN[m];
  lhs /= volume;
  if (moments.mean != 0.0) {
    const auto& linear = use_bar_tables ? tables.Ibar_kN : tables.IkN;
    Matrix acc = Matrix::Zero(tables.d, tables.d);
    for (std::size_t k = 0; k < centered.size(); ++k) acc += centered[k] * linear[k];
    lhs += (moments.mean / volume) * acc;
  }
  return lhs;
}

double sqs2_error(const Environment& env, const OfflineTables& tables, const LawMoments& moments) {
  const bool balanced = sqs1_error(env, moments) == 0.0;
  return (sqs2_lhs(env, tables, moments, balanced) - tables.rhs2).norm();
}

double superposition_check(const FieldSpec& spec, const Environment& env, const OfflineTables& tables,
                           const Vector& p, double tol) {
  const int d = spec.dimension();
  const int N = env.domain.N;
  const int r = tables.r;
  if (env.domain.d != tables.d || N != tables.N) throw SpecError("offline tables were built for a different domain");
  if (p.size() != d) throw SpecError("direction has the wrong dimension");
  const LawMoments moments = law_moments(spec);
  const std::int64_t n = static_cast<std::int64_t>(N) * r;
  const Q1Space space(d, n, 1.0 / r, Boundary::periodic);
  const FeSystem system = assemble(space, constant_grid(spec.c0(), d, N, r));
  const BoxIndexer fine{d, n};
  const BoxIndexer units{d, N};

  Matrix G(d, static_cast<Eigen::Index>(fine.size()));
  for (std::size_t cell = 0; cell < fine.size(); ++cell) {
    const Index3 m = fine.multi(cell);
    Index3 u{0, 0, 0};
    for (int a = 0; a < d; ++a) u[a] = m[a] / r;
    G.col(static_cast<Eigen::Index>(cell)) = env.cells[units.linear(u)] * c1_of_cell(spec, r, m) * p;
  }
  const Matrix direct = cell_mean_gradients(space, solve_source(space, system, G, tol));

  Vector phi = Vector::Zero(static_cast<Eigen::Index>(space.node_count()));
  for (int a = 0; a < d; ++a) phi += p[a] * tables.phi1N[static_cast<std::size_t>(a)];
  const Matrix phi_grad = cell_mean_gradients(space, phi);
  const Q1Space unit_space(d, r, 1.0 / r, Boundary::periodic);
  Vector ubar = Vector::Zero(static_cast<Eigen::Index>(unit_space.node_count()));
  for (int a = 0; a < d; ++a) ubar += p[a] * tables.u1bar[static_cast<std::size_t>(a)];
  const Matrix ubar_grad = cell_mean_gradients(unit_space, ubar);
  const BoxIndexer unit_fine{d, r};

  Matrix sup(d, static_cast<Eigen::Index>(fine.size()));
  for (std::size_t cell = 0; cell < fine.size(); ++cell) {
    const Index3 m = fine.multi(cell);
    Vector g = moments.mean * ubar_grad.col(static_cast<Eigen::Index>(unit_fine.wrapped(m)));
    for (std::size_t k = 0; k < units.size(); ++k) {
      const double xbar = env.cells[k] - moments.mean;
      if (xbar == 0.0) continue;
      const Index3 ku = units.multi(k);
      Index3 shifted = m;
      for (int a = 0; a < d; ++a) shifted[a] -= ku[a] * r;
      g += xbar * phi_grad.col(static_cast<Eigen::Index>(fine.wrapped(shifted)));
    }
    sup.col(static_cast<Eigen::Index>(cell)) = g;
  }
  const double denom = direct.norm();
  const double diff = (direct - sup).norm();
  return denom > 0.0 ? diff / denom : diff;
}

double combined_score(double err1, double err2, double weight, const ScoreNormalizers& normalizers) {
  if (!(weight > 0.0 && weight < 1.0)) throw SpecError("score weight must lie in (0, 1)");
  if (normalizers.sigma1 > 0.0 && normalizers.sigma2 > 0.0)
    return weight * err1 / normalizers.sigma1 + (1.0 - weight) * err2 / normalizers.sigma2;
  return weight * err1 + (1.0 - weight) * err2;
}

SQSScore score_environment(const Environment& env, const OfflineTables& tables, const LawMoments& moments,
                           double weight, const ScoreNormalizers& normalizers) {
  SQSScore s;
  s.err1 = sqs1_error(env, moments);
  s.err2 = sqs2_error(env, tables, moments);
  s.combined = combined_score(s.err1, s.err2, weight, normalizers);
  s.seed = env.seed;
  return s;
}

}  // namespace sqs
