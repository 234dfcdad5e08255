#include "sqs/cli.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <algorithm>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "sqs/analytic.hpp"
#include "sqs/hash.hpp"
#include "sqs/rng.hpp"
#include "sqs/statistics.hpp"

namespace sqs {

namespace {

using nlohmann::json;

// ------------------------------------------------------------ json helpers

void allow_keys(const json& j, const std::set<std::string>& keys, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + " must be an object");
  for (const auto& [key, value] : j.items())
    if (!keys.count(key)) throw ConfigError("unknown key '" + (path.empty() ? key : path + "." + key) + "'");
}

template <class T>
T get(const json& j, const std::string& key, const std::string& path, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("key '" + path + "." + key + "' has the wrong type");
  }
}

template <class T>
T require(const json& j, const std::string& key, const std::string& path) {
  if (!j.contains(key)) throw ConfigError("missing key '" + path + "." + key + "'");
  return get<T>(j, key, path, T{});
}

const json& section(const json& j, const std::string& key) {
  static const json empty = json::object();
  return j.contains(key) ? j.at(key) : empty;
}

Matrix parse_matrix(const json& j, int d, const std::string& path) {
  if (j.is_number()) return j.get<double>() * Matrix::Identity(d, d);
  if (!j.is_array() || static_cast<int>(j.size()) != d) throw ConfigError(path + " must be a number or a d x d array");
  Matrix m(d, d);
  for (int i = 0; i < d; ++i) {
    if (!j[i].is_array() || static_cast<int>(j[i].size()) != d) throw ConfigError(path + " must be d x d");
    for (int c = 0; c < d; ++c) {
      if (!j[i][c].is_number()) throw ConfigError(path + " entries must be numbers");
      m(i, c) = j[i][c].get<double>();
    }
  }
  return m;
}

FieldSpec parse_field(const json& j, bool eta_required) {
  allow_keys(j, {"d", "eta", "C0", "C1", "law"}, "field");
  const int d = require<int>(j, "d", "field");
  if (d < 1 || d > 3) throw ConfigError("field.d must be 1, 2 or 3");
  const double eta = eta_required ? require<double>(j, "eta", "field") : get<double>(j, "eta", "field", 0.0);
  const Matrix c0 = j.contains("C0") ? parse_matrix(j.at("C0"), d, "field.C0") : Matrix::Identity(d, d);
  UnitCellCoefficient c1(Matrix::Identity(d, d));
  if (j.contains("C1")) {
    const json& c = j.at("C1");
    if (c.is_object()) {
      allow_keys(c, {"resolution", "table"}, "field.C1");
      const int res = require<int>(c, "resolution", "field.C1");
      if (!c.contains("table") || !c.at("table").is_array()) throw ConfigError("field.C1.table must be an array");
      std::vector<Matrix> table;
      for (const auto& m : c.at("table")) table.push_back(parse_matrix(m, d, "field.C1.table"));
      c1 = UnitCellCoefficient(res, std::move(table));
    } else {
      c1 = UnitCellCoefficient(parse_matrix(c, d, "field.C1"));
    }
  }
  const CellLaw law = CellLaw::parse(get<std::string>(j, "law", "field", "bernoulli:0.5"));
  return FieldSpec(d, eta, c0, c1, law);
}

SolverOptions parse_solver(const json& j) {
  allow_keys(j, {"tol", "max_iterations"}, "solver");
  SolverOptions s;
  s.tol = get<double>(j, "tol", "solver", s.tol);
  s.max_iterations = get<int>(j, "max_iterations", "solver", 0);
  if (!(s.tol > 0.0 && s.tol < 1.0)) throw ConfigError("solver.tol must lie in (0, 1)");
  if (s.max_iterations < 0) throw ConfigError("solver.max_iterations must be >= 0");
  return s;
}

// An empty cache_dir means "<output>/cache", resolved once the output directory is final.
OfflineParams parse_offline(const json& j, std::filesystem::path& cache_dir) {
  allow_keys(j, {"R", "K", "decay_threshold", "cache_dir"}, "offline");
  OfflineParams p;
  p.R = get<int>(j, "R", "offline", 0);
  p.K = get<int>(j, "K", "offline", 0);
  p.decay_threshold = get<double>(j, "decay_threshold", "offline", p.decay_threshold);
  cache_dir = get<std::string>(j, "cache_dir", "offline", "");
  if (p.R < 0 || p.K < 0) throw ConfigError("offline.R and offline.K must be >= 0");
  if (!(p.decay_threshold > 0.0)) throw ConfigError("offline.decay_threshold must be > 0");
  return p;
}

double parse_tol(const json& j) {
  if (!j.contains("tol")) return std::numeric_limits<double>::infinity();
  const json& t = j.at("tol");
  if (t.is_string() && t.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
  if (!t.is_number()) throw ConfigError("sampler.tol must be a number or \"inf\"");
  return t.get<double>();
}

json parse_document(const std::string& text) {
  try {
    json j = json::parse(text);
    if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("configuration is not valid JSON: ") + e.what());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read configuration '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

template <class Fn>
auto wrap_config_errors(Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const SpecError& e) {
    throw ConfigError(e.what());
  } catch (const json::exception& e) {
    throw ConfigError(e.what());
  }
}

// ------------------------------------------------------------------ output

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

std::string entry_name(int i, int j) { return "A" + std::to_string(i + 1) + std::to_string(j + 1); }

void write_header(std::ostream& out, const std::string& hash, const std::string& seeds,
                  const std::vector<std::string>& extra = {}) {
  out << "# sqs " << kVersion << " config_hash=" << hash << '\n';
  out << "# seeds " << seeds << '\n';
  for (const auto& line : extra) out << "# " << line << '\n';
}

std::ofstream open_output(const std::filesystem::path& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / name);
  if (!out) throw ConfigError("cannot write '" + (dir / name).string() + "'");
  return out;
}

template <class Fn>
int guarded(std::ostream& log, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const SolverError& e) {
    log << "solver failure: " << e.what() << '\n';
    return kExitSolver;
  } catch (const RejectionCapExceeded& e) {
    log << "rejection cap exceeded: " << e.what() << '\n';
    return kExitRejectionCap;
  } catch (const SpecError& e) {
    log << "invalid specification: " << e.what() << '\n';
    return kExitConfig;
  }
}

Matrix reference_tensor(const RunConfig& rc, std::ostream& log) {
  const FieldSpec& f = *rc.field;
  const int d = f.dimension();
  switch (rc.reference.mode) {
    case ReferenceMode::none:
      return {};
    case ReferenceMode::tensor:
      return rc.reference.tensor;
    case ReferenceMode::checkerboard: {
      const bool ok = d == 2 && f.c0().isIdentity(0.0) && f.c1().is_constant() && f.c1().table()[0].isIdentity(0.0) &&
                      f.law().kind == LawKind::bernoulli && f.law().q == 0.5;
      if (!ok) throw ConfigError("checkerboard reference needs d = 2, C0 = C1 = Id and a symmetric Bernoulli law");
      return std::sqrt((1.0 + f.eta()) * (1.0 - f.eta())) * Matrix::Identity(2, 2);
    }
    case ReferenceMode::harmonic: {
      if (d != 1 || !f.c1().is_constant()) throw ConfigError("harmonic reference needs d = 1 and a constant C1");
      const double c0 = f.c0()(0, 0);
      const double c1 = f.eta() * f.c1().table()[0](0, 0);
      double inv = 0.0;
      if (f.law().kind == LawKind::bernoulli) {
        inv = f.law().q / (c0 + c1) + (1.0 - f.law().q) / (c0 - c1);
      } else if (f.law().kind == LawKind::uniform) {
        inv = c1 == 0.0 ? 1.0 / c0 : std::log((c0 + c1) / (c0 - c1)) / (2.0 * c1);
      } else {
        throw ConfigError("harmonic reference supports Bernoulli and uniform laws");
      }
      return Matrix::Constant(1, 1, 1.0 / inv);
    }
    case ReferenceMode::surrogate: {
      SurrogateOptions so;
      so.M_ref = rc.reference.M_ref;
      so.N_ref = rc.reference.N_ref;
      so.r = rc.sampler.r;
      so.bc = rc.sampler.bc;
      so.base_seed = rc.sampler.base_seed + 0x5eed0000ULL;
      so.workers = rc.sampler.workers;
      so.solver = rc.sampler.solver;
      log << "surrogate reference: " << so.M_ref << " exact SQS-1 samples at N = " << so.N_ref << '\n';
      return surrogate_reference(f, so);
    }
  }
  return {};
}

}  // namespace

double eta_from_contrast(double contrast) {
  if (!(contrast >= 1.0)) throw ConfigError("contrast must be >= 1");
  return (contrast - 1.0) / (contrast + 1.0);
}

// ----------------------------------------------------------------- parsers

RunConfig parse_run_config(const std::string& text, const std::optional<std::uint64_t>& seed) {
  return wrap_config_errors([&] {
    json j = parse_document(text);
    allow_keys(j, {"field", "domain", "resolution", "boundary", "sampler", "solver", "offline", "reference", "output"},
               "");
    if (seed) j["sampler"]["base_seed"] = *seed;
    RunConfig rc;
    if (!j.contains("field")) throw ConfigError("missing key 'field'");
    rc.field = parse_field(j.at("field"), true);
    const int d = rc.field->dimension();

    const json& dom = section(j, "domain");
    allow_keys(dom, {"N"}, "domain");
    if (!dom.contains("N")) throw ConfigError("missing key 'domain.N'");
    if (dom.at("N").is_array()) {
      rc.N = get<std::vector<int>>(dom, "N", "domain", {});
    } else {
      rc.N = {require<int>(dom, "N", "domain")};
    }
    if (rc.N.empty()) throw ConfigError("domain.N must not be empty");
    for (int n : rc.N)
      if (n < 1) throw ConfigError("domain.N entries must be >= 1");

    rc.output = get<std::string>(j, "output", "", "out");
    const json& s = section(j, "sampler");
    allow_keys(s,
               {"mode", "M", "calM", "tol", "lambda", "sqs1_exact", "base_seed", "weight", "pilot", "rejection_cap",
                "pair_with_classical"},
               "sampler");
    SamplerConfig& sc = rc.sampler;
    sc.mode = parse_sampler_mode(get<std::string>(s, "mode", "sampler", "classical"));
    sc.r = get<int>(j, "resolution", "", 1);
    sc.bc = parse_boundary(get<std::string>(j, "boundary", "", "periodic"));
    sc.M = get<int>(s, "M", "sampler", sc.M);
    sc.calM = get<int>(s, "calM", "sampler", sc.calM);
    sc.tol = parse_tol(s);
    sc.lambda = get<double>(s, "lambda", "sampler", 0.0);
    sc.sqs1_exact = get<bool>(s, "sqs1_exact", "sampler", false);
    sc.base_seed = get<std::uint64_t>(s, "base_seed", "sampler", 0);
    sc.weight = get<double>(s, "weight", "sampler", sc.weight);
    sc.pilot = get<int>(s, "pilot", "sampler", sc.pilot);
    sc.rejection_cap = get<std::uint64_t>(s, "rejection_cap", "sampler", sc.rejection_cap);
    rc.pair_with_classical = get<bool>(s, "pair_with_classical", "sampler", true);
    sc.solver = parse_solver(section(j, "solver"));
    sc.N = rc.N.front();
    sc.validate();

    rc.offline = parse_offline(section(j, "offline"), rc.cache_dir);
    rc.offline.tol = sc.solver.tol;
    rc.offline.r = sc.r;

    const json& ref = section(j, "reference");
    allow_keys(ref, {"mode", "tensor", "M_ref", "N_ref"}, "reference");
    const std::string mode = get<std::string>(ref, "mode", "reference", "none");
    if (mode == "none") rc.reference.mode = ReferenceMode::none;
    else if (mode == "tensor") rc.reference.mode = ReferenceMode::tensor;
    else if (mode == "checkerboard") rc.reference.mode = ReferenceMode::checkerboard;
    else if (mode == "harmonic") rc.reference.mode = ReferenceMode::harmonic;
    else if (mode == "surrogate") rc.reference.mode = ReferenceMode::surrogate;
    else throw ConfigError("unknown reference.mode '" + mode + "'");
    if (rc.reference.mode == ReferenceMode::tensor) {
      if (!ref.contains("tensor")) throw ConfigError("reference.tensor is required for mode 'tensor'");
      rc.reference.tensor = parse_matrix(ref.at("tensor"), d, "reference.tensor");
    }
    rc.reference.M_ref = get<int>(ref, "M_ref", "reference", 500);
    rc.reference.N_ref = get<int>(ref, "N_ref", "reference", 40);
    if (rc.reference.M_ref < 1 || rc.reference.N_ref < 1) throw ConfigError("reference sizes must be >= 1");
    rc.hash = content_hash(j.dump());
    return rc;
  });
}

Table1Config parse_table1_config(const std::string& text, const std::optional<std::uint64_t>& seed) {
  return wrap_config_errors([&] {
    json j = parse_document(text);
    allow_keys(j,
               {"field", "contrasts", "N", "resolution", "boundary", "M", "calM", "base_seed", "solver", "offline",
                "output"},
               "");
    if (seed) j["base_seed"] = *seed;
    Table1Config tc;
    if (!j.contains("field")) throw ConfigError("missing key 'field'");
    tc.field = parse_field(j.at("field"), false);
    tc.contrasts = get<std::vector<double>>(j, "contrasts", "", {1.0, 3.0, 9.0, 19.0});
    if (tc.contrasts.empty()) throw ConfigError("contrasts must not be empty");
    for (double c : tc.contrasts) eta_from_contrast(c);
    tc.N = get<int>(j, "N", "", tc.N);
    tc.r = get<int>(j, "resolution", "", tc.r);
    tc.bc = parse_boundary(get<std::string>(j, "boundary", "", "periodic"));
    tc.M = get<int>(j, "M", "", tc.M);
    tc.calM = get<int>(j, "calM", "", tc.calM);
    tc.base_seed = get<std::uint64_t>(j, "base_seed", "", 0);
    tc.solver = parse_solver(section(j, "solver"));
    tc.output = get<std::string>(j, "output", "", "out");
    tc.offline = parse_offline(section(j, "offline"), tc.cache_dir);
    tc.offline.tol = tc.solver.tol;
    if (tc.N < 1 || tc.r < 1 || tc.M < 2 || tc.calM < tc.M)
      throw ConfigError("table1 needs N >= 1, resolution >= 1, M >= 2 and calM >= M");
    tc.hash = content_hash(j.dump());
    return tc;
  });
}

AnalyticConfig parse_analytic_config(const std::string& text, const std::optional<std::uint64_t>& seed) {
  return wrap_config_errors([&] {
    json j = parse_document(text);
    allow_keys(j, {"seed", "prop2", "prop3", "prop4", "harmonic", "output"}, "");
    if (seed) j["seed"] = *seed;
    AnalyticConfig ac;
    ac.seed = get<std::uint64_t>(j, "seed", "", ac.seed);
    ac.output = get<std::string>(j, "output", "", "out");

    const json& p2 = section(j, "prop2");
    allow_keys(p2, {"g", "n", "samples", "ratio_tolerance", "bias_sigmas"}, "prop2");
    ac.prop2_g = get<std::string>(p2, "g", "prop2", ac.prop2_g);
    ac.prop2_n = get<int>(p2, "n", "prop2", ac.prop2_n);
    ac.prop2_samples = get<std::size_t>(p2, "samples", "prop2", ac.prop2_samples);
    ac.prop2_ratio_tol = get<double>(p2, "ratio_tolerance", "prop2", ac.prop2_ratio_tol);
    ac.prop2_bias_sigmas = get<double>(p2, "bias_sigmas", "prop2", ac.prop2_bias_sigmas);

    const json& p3 = section(j, "prop3");
    allow_keys(p3, {"g", "n", "samples", "windows", "tolerance"}, "prop3");
    ac.prop3_g = get<std::string>(p3, "g", "prop3", ac.prop3_g);
    ac.prop3_n = get<int>(p3, "n", "prop3", ac.prop3_n);
    ac.prop3_samples = get<std::size_t>(p3, "samples", "prop3", ac.prop3_samples);
    ac.prop3_windows = get<std::vector<std::pair<double, double>>>(p3, "windows", "prop3", ac.prop3_windows);
    ac.prop3_tol = get<double>(p3, "tolerance", "prop3", ac.prop3_tol);
    for (const auto& [z0, z1] : ac.prop3_windows)
      if (!(z1 > z0)) throw ConfigError("prop3.windows entries need z1 > z0");

    const json& p4 = section(j, "prop4");
    allow_keys(p4, {"g", "N", "samples", "ratio_tolerance", "bias_band", "slope_tolerance"}, "prop4");
    ac.prop4_g = get<std::string>(p4, "g", "prop4", ac.prop4_g);
    ac.prop4_N = get<std::vector<int>>(p4, "N", "prop4", ac.prop4_N);
    ac.prop4_samples = get<std::size_t>(p4, "samples", "prop4", ac.prop4_samples);
    ac.prop4_ratio_tol = get<double>(p4, "ratio_tolerance", "prop4", ac.prop4_ratio_tol);
    const auto band = get<std::vector<double>>(p4, "bias_band", "prop4", {ac.prop4_bias_lo, ac.prop4_bias_hi});
    if (band.size() != 2 || !(band[1] > band[0])) throw ConfigError("prop4.bias_band must be [lo, hi] with hi > lo");
    ac.prop4_bias_lo = band[0];
    ac.prop4_bias_hi = band[1];
    ac.prop4_slope_tol = get<double>(p4, "slope_tolerance", "prop4", ac.prop4_slope_tol);
    if (ac.prop4_N.empty()) throw ConfigError("prop4.N must not be empty");

    const json& h = section(j, "harmonic");
    allow_keys(h, {"environments", "N", "values", "tolerance"}, "harmonic");
    ac.harmonic_environments = get<int>(h, "environments", "harmonic", ac.harmonic_environments);
    ac.harmonic_N = get<int>(h, "N", "harmonic", ac.harmonic_N);
    ac.harmonic_values = get<std::vector<double>>(h, "values", "harmonic", ac.harmonic_values);
    ac.harmonic_tol = get<double>(h, "tolerance", "harmonic", ac.harmonic_tol);
    if (ac.harmonic_values.empty()) throw ConfigError("harmonic.values must not be empty");
    for (double v : ac.harmonic_values)
      if (!(v > 0.0)) throw ConfigError("harmonic.values must be positive");

    parse_catalog_function(ac.prop2_g);
    parse_catalog_function(ac.prop3_g);
    OneDSpec{ac.prop4_N.front(), parse_catalog_function(ac.prop4_g)}.validate();
    if (ac.prop2_n < 2 || ac.prop3_n < 2 || ac.prop2_samples < 2 || ac.prop3_samples < 2 || ac.prop4_samples < 2)
      throw ConfigError("analytic checks need n >= 2 and at least two samples");
    ac.hash = content_hash(j.dump());
    return ac;
  });
}

// ---------------------------------------------------------------- commands

int cmd_run(const CommandOptions& options, std::ostream& log) {
  return guarded(log, [&] {
    RunConfig rc = parse_run_config(read_file(options.config), options.seed);
    if (options.out) rc.output = *options.out;
    if (rc.cache_dir.empty()) rc.cache_dir = rc.output / "cache";
    rc.sampler.workers = options.workers;
    const FieldSpec& field = *rc.field;
    const int d = field.dimension();
    const bool needs_tables = rc.sampler.mode != SamplerMode::classical;
    const bool paired = rc.pair_with_classical && rc.sampler.mode != SamplerMode::classical;
    const Matrix reference = reference_tensor(rc, log);

    std::ostringstream samples_csv;
    std::ostringstream summary_csv;
    std::ostringstream ratios_csv;
    std::vector<std::string> notes;
    samples_csv << "mode,N,r,seed,err1,err2";
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) samples_csv << ',' << entry_name(i, j);
    samples_csv << ",iters,ms\n";
    summary_csv << "mode,N,entry,mean,var,ci95,ref,total_error,var_ratio\n";
    ratios_csv << "mode,N,entry,var_mode,var_classical,ratio\n";

    // `paired_with` is the classical report of the same seeds; it fills var_ratio.
    auto emit = [&](const RunRecord& rec, int N, const EstimatorReport* paired_with) {
      const EstimatorReport rep = estimate(rec);
      for (const auto& s : rec.samples) {
        samples_csv << rep.mode << ',' << N << ',' << rec.config.r << ',' << s.seed << ',' << fmt(s.score.err1) << ','
                    << fmt(s.score.err2);
        for (int i = 0; i < d; ++i)
          for (int j = 0; j < d; ++j) samples_csv << ',' << fmt(s.sample.tensor(i, j));
        samples_csv << ',' << s.sample.iterations << ',' << fmt(s.sample.wall_ms) << '\n';
      }
      for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
          const bool has_ref = reference.size() > 0;
          summary_csv << rep.mode << ',' << N << ',' << entry_name(i, j) << ',' << fmt(rep.mean(i, j)) << ','
                      << fmt(rep.variance(i, j)) << ',' << fmt(rep.half_width(i, j)) << ','
                      << (has_ref ? fmt(reference(i, j)) : "") << ','
                      << (has_ref ? fmt(std::abs(rep.mean(i, j) - reference(i, j))) : "") << ',';
          if (paired_with) {
            const double vm = rep.variance(i, j);
            summary_csv << (vm > 0.0 ? fmt(paired_with->variance(i, j) / vm) : "nan");
          }
          summary_csv << '\n';
        }
      }
      if (reference.size() > 0)
        summary_csv << rep.mode << ',' << N << ",max,,,,," << fmt(total_error(rep, reference)) << ",\n";
      log << rep.mode << " N=" << N << " mean A11=" << fmt(rep.mean(0, 0)) << " var=" << fmt(rep.variance(0, 0))
          << " ci95=" << fmt(rep.half_width(0, 0)) << " solves=" << rec.counters.solves
          << " criterion_evaluations=" << rec.counters.criterion_evaluations << " rejections=" << rec.rejections
          << '\n';
      return rep;
    };

    for (int N : rc.N) {
      SamplerConfig sc = rc.sampler;
      sc.N = N;
      std::optional<OfflineTables> tables;
      if (needs_tables) {
        OfflineParams op = rc.offline;
        op.N = N;
        bool built = false;
        tables = load_or_build_tables(field, op, rc.cache_dir, &built);
        notes.push_back("offline N=" + std::to_string(N) + " tables=" + tables->hash +
                        (built ? " cache=built" : " cache=hit") +
                        " table_solves=" + std::to_string(built ? tables->solves : 0) + " K=" + std::to_string(tables->K));
        log << notes.back() << '\n';
      }
      const RunRecord rec = run_sampler(field, sc, tables ? &*tables : nullptr);
      if (!paired) {
        emit(rec, N, nullptr);
      } else {
        SamplerConfig cc = sc;
        cc.mode = SamplerMode::classical;
        cc.sqs1_exact = false;
        const RunRecord base = run_classical(field, cc, tables ? &*tables : nullptr);
        const EstimatorReport brep = emit(base, N, nullptr);
        const EstimatorReport rep = emit(rec, N, &brep);
        for (int i = 0; i < d; ++i) {
          for (int j = 0; j < d; ++j) {
            const double vm = rep.variance(i, j);
            const double vc = brep.variance(i, j);
            ratios_csv << rep.mode << ',' << N << ',' << entry_name(i, j) << ',' << fmt(vm) << ',' << fmt(vc) << ','
                       << (vm > 0.0 ? fmt(vc / vm) : "nan") << '\n';
          }
        }
        log << "variance ratio classical/" << rep.mode << " A11 = "
            << (rep.variance(0, 0) > 0.0 ? fmt(brep.variance(0, 0) / rep.variance(0, 0)) : "nan") << '\n';
      }
    }

    const std::uint64_t draws =
        rc.sampler.mode == SamplerMode::sqs_selection ? static_cast<std::uint64_t>(rc.sampler.calM) : rc.sampler.M;
    const std::string seeds = "base=" + std::to_string(rc.sampler.base_seed) + " first_draws=" + std::to_string(draws);
    auto write = [&](const std::string& name, const std::string& body) {
      std::ofstream out = open_output(rc.output, name);
      write_header(out, rc.hash, seeds, notes);
      out << body;
    };
    write("samples.csv", samples_csv.str());
    write("summary.csv", summary_csv.str());
    if (paired) write("ratios.csv", ratios_csv.str());
    log << "wrote " << rc.output.string() << '\n';
    return static_cast<int>(kExitOk);
  });
}

int cmd_table1(const CommandOptions& options, std::ostream& log) {
  return guarded(log, [&] {
    Table1Config tc = parse_table1_config(read_file(options.config), options.seed);
    if (options.out) tc.output = *options.out;
    if (tc.cache_dir.empty()) tc.cache_dir = tc.output / "cache";
    std::ostringstream csv;
    std::vector<std::string> notes;
    csv << "contrast,V_MC,V_exactSQS1,V_SQS2,ratio1,ratio2,flag\n";
    for (double contrast : tc.contrasts) {
      const FieldSpec field = tc.field->with_eta(eta_from_contrast(contrast));
      OfflineParams op = tc.offline;
      op.N = tc.N;
      op.r = tc.r;
      bool built = false;
      const OfflineTables tables = load_or_build_tables(field, op, tc.cache_dir, &built);
      notes.push_back("contrast=" + fmt(contrast) + " tables=" + tables.hash + (built ? " cache=built" : " cache=hit"));

      SamplerConfig sc;
      sc.N = tc.N;
      sc.r = tc.r;
      sc.bc = tc.bc;
      sc.M = tc.M;
      sc.calM = tc.calM;
      sc.base_seed = tc.base_seed;
      sc.workers = options.workers;
      sc.solver = tc.solver;
      const double v_mc = estimate(run_classical(field, sc)).variance(0, 0);
      sc.sqs1_exact = true;
      const double v_exact = estimate(run_classical(field, sc)).variance(0, 0);
      sc.mode = SamplerMode::sqs_selection;
      const double v_sqs2 = estimate(run_sqs_selection(field, sc, tables)).variance(0, 0);
      const bool degenerate = !(v_exact > 0.0) || !(v_sqs2 > 0.0) || !(v_mc > 0.0);
      const double r1 = degenerate ? std::numeric_limits<double>::quiet_NaN() : v_mc / v_exact;
      const double r2 = degenerate ? std::numeric_limits<double>::quiet_NaN() : v_mc / v_sqs2;
      csv << fmt(contrast) << ',' << fmt(v_mc) << ',' << fmt(v_exact) << ',' << fmt(v_sqs2) << ',' << fmt(r1) << ','
          << fmt(r2) << ',' << (degenerate ? "degenerate" : "ok") << '\n';
      log << "contrast " << fmt(contrast) << ": V_MC=" << fmt(v_mc) << " V_exactSQS1=" << fmt(v_exact)
          << " V_SQS2=" << fmt(v_sqs2) << " ratio1=" << fmt(r1) << " ratio2=" << fmt(r2)
          << (degenerate ? " (degenerate)" : "") << '\n';
    }
    std::ofstream out = open_output(tc.output, "table1.csv");
    write_header(out, tc.hash,
                 "base=" + std::to_string(tc.base_seed) + " M=" + std::to_string(tc.M) + " calM=" +
                     std::to_string(tc.calM),
                 notes);
    out << csv.str();
    log << "wrote " << (tc.output / "table1.csv").string() << '\n';
    return static_cast<int>(kExitOk);
  });
}

int cmd_analytic(const CommandOptions& options, std::ostream& log) {
  return guarded(log, [&] {
    AnalyticConfig ac = parse_analytic_config(read_file(options.config), options.seed);
    if (options.out) ac.output = *options.out;
    std::ostringstream csv;
    csv << "check,parameter,measured,predicted,tolerance,pass\n";
    bool all_pass = true;
    auto row = [&](const std::string& check, const std::string& param, double measured, double predicted, double tol,
                   const std::string& verdict) {
      csv << check << ',' << param << ',' << fmt(measured) << ',' << fmt(predicted) << ',' << fmt(tol) << ','
          << verdict << '\n';
      log << check << ' ' << param << ": measured " << fmt(measured) << " predicted " << fmt(predicted) << " tol "
          << fmt(tol) << ' ' << verdict << '\n';
    };
    auto check = [&](const std::string& name, const std::string& param, double measured, double predicted, double tol,
                     bool pass) {
      all_pass = all_pass && pass;
      row(name, param, measured, predicted, tol, pass ? "pass" : "FAIL");
    };

    const ZeroDSpec z2{ac.prop2_n, parse_catalog_function(ac.prop2_g), {}};
    const Prop2Result p2 = prop2_check(z2, ac.prop2_samples, ac.seed, options.workers);
    const std::string p2param = "g=" + ac.prop2_g + " n=" + std::to_string(ac.prop2_n);
    check("prop2_ratio", p2param, p2.ratio, p2.predicted_ratio, ac.prop2_ratio_tol,
          std::abs(p2.ratio - p2.predicted_ratio) <= ac.prop2_ratio_tol);
    check("prop2_bias", p2param, p2.bias, p2.predicted_bias, ac.prop2_bias_sigmas * p2.bias_stderr,
          std::abs(p2.bias - p2.predicted_bias) <= ac.prop2_bias_sigmas * p2.bias_stderr);

    const ZeroDSpec z3{ac.prop3_n, parse_catalog_function(ac.prop3_g), {}};
    for (std::size_t w = 0; w < ac.prop3_windows.size(); ++w) {
      const auto [z0, z1] = ac.prop3_windows[w];
      const Prop3Result p3 = prop3_check(z3, z0, z1, ac.prop3_samples, ac.seed + 1 + w, options.workers);
      check("prop3_ratio",
            "g=" + ac.prop3_g + " n=" + std::to_string(ac.prop3_n) + " window=[" + fmt(z0) + ":" + fmt(z1) +
                "] C=" + fmt(p3.C),
            p3.ratio, p3.predicted_ratio, ac.prop3_tol, std::abs(p3.ratio - p3.predicted_ratio) <= ac.prop3_tol);
    }

    std::vector<std::pair<double, double>> bias_points;
    const int n_max = *std::max_element(ac.prop4_N.begin(), ac.prop4_N.end());
    for (int N : ac.prop4_N) {
      const OneDSpec spec{N, parse_catalog_function(ac.prop4_g)};
      const Prop4Result p4 = prop4_check(spec, ac.prop4_samples, ac.seed + 100 + static_cast<std::uint64_t>(N),
                                         options.workers);
      const std::string param = "g=" + ac.prop4_g + " N=" + std::to_string(N);
      if (p4.degenerate) {
        row("prop4_ratio", param, p4.ratio, p4.predicted_ratio, ac.prop4_ratio_tol, "degenerate");
        continue;
      }
      const double rel = p4.bias_mc / p4.predicted_bias_mc;
      if (N == n_max) {
        check("prop4_ratio", param, p4.ratio, p4.predicted_ratio, ac.prop4_ratio_tol,
              std::abs(p4.ratio - p4.predicted_ratio) <= ac.prop4_ratio_tol);
        check("prop4_bias_mc_rel", param, rel, 1.0, ac.prop4_bias_hi - 1.0,
              rel >= ac.prop4_bias_lo && rel <= ac.prop4_bias_hi);
      } else {
        row("prop4_ratio", param, p4.ratio, p4.predicted_ratio, ac.prop4_ratio_tol, "info");
        row("prop4_bias_mc_rel", param, rel, 1.0, ac.prop4_bias_hi - 1.0, "info");
      }
      row("prop4_bias_sqs", param, p4.bias_sqs, p4.predicted_bias_sqs, 3.0 * p4.bias_sqs_stderr, "info");
      if (p4.bias_mc > 0.0) bias_points.emplace_back(N, p4.bias_mc);
    }
    if (bias_points.size() >= 3) {
      const DecayFit fit = loglog_slope(bias_points);
      check("prop4_bias_slope", "g=" + ac.prop4_g, fit.slope, -1.0, ac.prop4_slope_tol,
            std::abs(fit.slope + 1.0) <= ac.prop4_slope_tol);
    }

    {
      double worst = 0.0;
      for (int e = 0; e < ac.harmonic_environments; ++e) {
        RngStream stream(ac.seed, 0x68726dULL, static_cast<std::uint64_t>(e) * 1000003ULL);
        CoefficientGrid grid(1, ac.harmonic_N, 1.0);
        std::vector<double> values(static_cast<std::size_t>(ac.harmonic_N));
        for (int k = 0; k < ac.harmonic_N; ++k) {
          values[k] = ac.harmonic_values[stream.below(ac.harmonic_values.size())];
          grid.at(static_cast<std::size_t>(k))(0, 0) = values[k];
        }
        const double a = compute_homogenized(grid, Boundary::periodic).tensor(0, 0);
        const double h = harmonic_oracle(values);
        worst = std::max(worst, std::abs(a - h) / h);
      }
      check("harmonic_oracle", "N=" + std::to_string(ac.harmonic_N) + " environments=" +
                                   std::to_string(ac.harmonic_environments),
            worst, 0.0, ac.harmonic_tol, worst <= ac.harmonic_tol);
    }

    std::ofstream out = open_output(ac.output, "analytic.csv");
    write_header(out, ac.hash, "base=" + std::to_string(ac.seed));
    out << csv.str();
    log << "wrote " << (ac.output / "analytic.csv").string() << '\n';
    return static_cast<int>(all_pass ? kExitOk : kExitCheckFailed);
  });
}

}  // namespace sqs
