#include "sqs/lattice_field.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "sqs/errors.hpp"
#include "sqs/rng.hpp"

namespace sqs {
namespace {

constexpr std::uint64_t kCellStream = 0x63656c6c;     // "cell"
constexpr std::uint64_t kShuffleStream = 0x73687566;  // "shuf"

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
    throw SpecError("cannot parse number '" + std::string(text) + "'");
  return v;
}

double min_eigenvalue(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double max_eigenvalue(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

bool is_symmetric(const Matrix& m) { return (m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-14 * (1.0 + m.cwiseAbs().maxCoeff()); }

}  // namespace

// ---------------------------------------------------------------- CellLaw

CellLaw CellLaw::bernoulli(double q) {
  if (!(q >= 0.0 && q <= 1.0)) throw SpecError("bernoulli parameter q must lie in [0,1]");
  return CellLaw{LawKind::bernoulli, q, 0.5};
}

CellLaw CellLaw::uniform() { return CellLaw{LawKind::uniform, 0.5, 0.5}; }

CellLaw CellLaw::truncated_gaussian(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw SpecError("truncated gaussian sigma must be positive");
  return CellLaw{LawKind::truncated_gaussian, 0.5, sigma};
}

double CellLaw::from_uniform(double u) const {
  switch (kind) {
    case LawKind::bernoulli:
      return u < q ? 1.0 : -1.0;
    case LawKind::uniform:
      return 2.0 * u - 1.0;
    case LawKind::truncated_gaussian: {
      const boost::math::normal_distribution<double> n01;
      const double beta = 1.0 / sigma;
      const double lo = boost::math::cdf(n01, -beta);
      const double hi = boost::math::cdf(n01, beta);
      const double x = sigma * boost::math::quantile(n01, lo + u * (hi - lo));
      return std::clamp(x, -1.0, 1.0);
    }
  }
  return 0.0;
}

std::string CellLaw::to_string() const {
  switch (kind) {
    case LawKind::bernoulli:
      return "bernoulli:" + format_double(q);
    case LawKind::uniform:
      return "uniform";
    case LawKind::truncated_gaussian:
      return "truncated_gaussian:" + format_double(sigma);
  }
  return {};
}

CellLaw CellLaw::parse(const std::string& text) {
  const auto colon = text.find(':');
  const std::string name = text.substr(0, colon);
  const std::string arg = colon == std::string::npos ? std::string{} : text.substr(colon + 1);
  if (name == "bernoulli") return bernoulli(arg.empty() ? 0.5 : parse_double(arg));
  if (name == "uniform") return uniform();
  if (name == "truncated_gaussian") return truncated_gaussian(arg.empty() ? 0.5 : parse_double(arg));
  throw SpecError("unknown cell law '" + text + "'");
}

// ------------------------------------------------------ UnitCellCoefficient

UnitCellCoefficient::UnitCellCoefficient(Matrix constant) : resolution_(1), table_{std::move(constant)} {}

UnitCellCoefficient::UnitCellCoefficient(int resolution, std::vector<Matrix> table)
    : resolution_(resolution), table_(std::move(table)) {
  if (resolution_ < 1) throw SpecError("C1 table resolution must be >= 1");
  if (table_.empty()) throw SpecError("C1 table is empty");
  const int d = dimension();
  if (d < 1 || d > 3) throw SpecError("dimension must be 1, 2 or 3");
  const BoxIndexer ix{d, resolution_};
  if (table_.size() != ix.size()) throw SpecError("C1 table must hold resolution^d entries");
  for (const auto& m : table_)
    if (m.rows() != d || m.cols() != d) throw SpecError("C1 table entries must be d x d");
}

const Matrix& UnitCellCoefficient::at(int r, const Index3& sub) const {
  if (resolution_ == 1) return table_.front();
  if (r % resolution_ != 0) throw SpecError("resolution does not resolve the C1 table");
  const int ratio = r / resolution_;
  const int d = dimension();
  Index3 coarse{0, 0, 0};
  for (int a = 0; a < d; ++a) coarse[a] = sub[a] / ratio;
  return table_[BoxIndexer{d, resolution_}.linear(coarse)];
}

// ---------------------------------------------------------------- FieldSpec

FieldSpec::FieldSpec(int dimension, double eta, Matrix c0, UnitCellCoefficient c1, CellLaw law)
    : d_(dimension), eta_(eta), c0_(std::move(c0)), c1_(std::move(c1)), law_(law) {
  if (d_ < 1 || d_ > 3) throw SpecError("dimension must be 1, 2 or 3");
  if (!(eta_ > -1.0 && eta_ < 1.0)) throw SpecError("eta must lie in (-1, 1)");
  if (c0_.rows() != d_ || c0_.cols() != d_) throw SpecError("C0 must be d x d");
  if (c1_.dimension() != d_) throw SpecError("C1 must be d x d");
  if (!is_symmetric(c0_)) throw SpecError("C0 must be symmetric");
  lambda_min_ = std::numeric_limits<double>::infinity();
  lambda_max_ = 0.0;
  // The coefficient is affine in the cell value, so checking c = +-1 covers [-1, 1].
  for (const auto& m : c1_.table()) {
    if (!is_symmetric(m)) throw SpecError("C1 must be symmetric");
    for (double c : {-1.0, 1.0}) {
      const Matrix a = c0_ + eta_ * c * m;
      lambda_min_ = std::min(lambda_min_, min_eigenvalue(a));
      lambda_max_ = std::max(lambda_max_, max_eigenvalue(a));
    }
  }
  if (!(lambda_min_ > 0.0)) throw SpecError("coefficient field is not uniformly coercive");
}

Matrix FieldSpec::coefficient(double x, int r, const Index3& sub) const { return c0_ + (eta_ * x) * c1_.at(r, sub); }

FieldSpec FieldSpec::with_eta(double eta) const { return FieldSpec(d_, eta, c0_, c1_, law_); }

std::string FieldSpec::fingerprint() const {
  std::ostringstream os;
  os << "d=" << d_ << ";eta=" << format_double(eta_) << ";law=" << law_.to_string() << ";C0=";
  for (Eigen::Index i = 0; i < c0_.size(); ++i) os << format_double(c0_.data()[i]) << ',';
  os << ";C1r=" << c1_.resolution() << ";C1=";
  for (const auto& m : c1_.table())
    for (Eigen::Index i = 0; i < m.size(); ++i) os << format_double(m.data()[i]) << ',';
  return os.str();
}

// --------------------------------------------------------------- Domain/Env

void DomainSpec::validate() const {
  if (N < 1) throw SpecError("N must be >= 1");
  if (d < 1 || d > 3) throw SpecError("dimension must be 1, 2 or 3");
}

double Environment::mean() const noexcept {
  if (cells.empty()) return 0.0;
  return std::accumulate(cells.begin(), cells.end(), 0.0) / static_cast<double>(cells.size());
}

Environment sample_environment(const FieldSpec& spec, const DomainSpec& domain, std::uint64_t seed) {
  domain.validate();
  if (domain.d != spec.dimension()) throw SpecError("domain and field dimensions differ");
  Environment env{domain, std::vector<double>(domain.cell_count()), seed};
  const CounterRng rng(seed, kCellStream);
  for (std::size_t k = 0; k < env.cells.size(); ++k) env.cells[k] = spec.law().from_uniform(rng.uniform(k));
  return env;
}

Environment sample_environment_sqs1_exact(const FieldSpec& spec, const DomainSpec& domain, std::uint64_t seed) {
  domain.validate();
  if (domain.d != spec.dimension()) throw SpecError("domain and field dimensions differ");
  const CellLaw& law = spec.law();
  if (law.kind != LawKind::bernoulli) throw SpecError("exact SQS-1 sampling requires a Bernoulli law");
  const std::size_t n = domain.cell_count();
  std::size_t plus = 0;
  if (law.q == 0.5) {
    if (n % 2 != 0) throw SpecError("exact balance impossible: odd number of cells");
    plus = n / 2;
  } else {
    plus = static_cast<std::size_t>(std::llround(static_cast<double>(n) * law.q));
  }
  // Partial Fisher-Yates: the first `plus` slots form a uniform random subset.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  RngStream stream(seed, kShuffleStream);
  for (std::size_t i = 0; i < plus; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(stream.below(n - i));
    std::swap(order[i], order[j]);
  }
  Environment env{domain, std::vector<double>(n, -1.0), seed};
  for (std::size_t i = 0; i < plus; ++i) env.cells[order[i]] = 1.0;
  return env;
}

Matrix coefficient_at(const FieldSpec& spec, const Environment& env, std::span<const double> x) {
  const int d = spec.dimension();
  if (static_cast<int>(x.size()) != d) throw SpecError("point dimension mismatch");
  const int N = env.domain.N;
  const int r = spec.c1().resolution();
  Index3 cell{0, 0, 0};
  Index3 sub{0, 0, 0};
  for (int a = 0; a < d; ++a) {
    if (!(x[a] >= 0.0 && x[a] <= N)) throw SpecError("point outside Q_N");
    const double fine = std::min(x[a] * r, static_cast<double>(N) * r - 0.5);
    const auto f = static_cast<std::int64_t>(std::floor(fine));
    cell[a] = f / r;
    sub[a] = f % r;
  }
  return spec.coefficient(env.cells[env.domain.indexer().linear(cell)], r, sub);
}

LawMoments law_moments(const CellLaw& law) {
  LawMoments m;
  switch (law.kind) {
    case LawKind::bernoulli:
      m.mean = 2.0 * law.q - 1.0;
      m.variance = 4.0 * law.q * (1.0 - law.q);
      break;
    case LawKind::uniform:
      m.mean = 0.0;
      m.variance = 1.0 / 3.0;
      break;
    case LawKind::truncated_gaussian: {
      const boost::math::normal_distribution<double> n01;
      const double beta = 1.0 / law.sigma;
      const double mass = 2.0 * boost::math::cdf(n01, beta) - 1.0;
      m.mean = 0.0;
      m.variance = law.sigma * law.sigma * (1.0 - 2.0 * beta * boost::math::pdf(n01, beta) / mass);
      break;
    }
  }
  m.covariance_series[Index3{0, 0, 0}] = m.variance;
  m.total_covariance = m.variance;
  return m;
}

// ------------------------------------------------------------ serialization

void write_environment(std::ostream& out, const FieldSpec& spec, const Environment& env) {
  out << "# sqs environment v1\n";
  out << "d " << env.domain.d << '\n';
  out << "N " << env.domain.N << '\n';
  out << "law " << spec.law().to_string() << '\n';
  out << "eta " << format_double(spec.eta()) << '\n';
  out << "seed " << env.seed << '\n';
  out << "cells " << env.cells.size() << '\n';
  for (double v : env.cells) out << format_double(v) << '\n';
}

EnvironmentFile read_environment(std::istream& in) {
  EnvironmentFile file;
  std::string line;
  if (!std::getline(in, line) || line != "# sqs environment v1") throw SpecError("not an environment file");
  auto field = [&](const std::string& key) {
    if (!std::getline(in, line)) throw SpecError("truncated environment header");
    const auto sp = line.find(' ');
    if (sp == std::string::npos || line.substr(0, sp) != key) throw SpecError("expected header field '" + key + "'");
    return line.substr(sp + 1);
  };
  file.env.domain.d = std::stoi(field("d"));
  file.env.domain.N = std::stoi(field("N"));
  file.env.domain.validate();
  file.law = field("law");
  file.eta = parse_double(field("eta"));
  file.env.seed = std::stoull(field("seed"));
  const std::size_t count = std::stoull(field("cells"));
  if (count != file.env.domain.cell_count()) throw SpecError("cell count does not match N^d");
  file.env.cells.resize(count);
  for (auto& v : file.env.cells) {
    if (!std::getline(in, line)) throw SpecError("truncated cell array");
    v = parse_double(line);
  }
  return file;
}

}  // namespace sqs
