#pragma once

// Method-of-simulated-moments objective: moving block bootstrap of the
// reference log prices, inverse-covariance weight matrix, and the quadratic
// form f(theta) = G(theta)' W G(theta).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "abmcal/common.hpp"
#include "abmcal/engine.hpp"
#include "abmcal/moments.hpp"
#include "abmcal/params.hpp"

namespace abmcal {

using Matrix5 = Eigen::Matrix<double, 5, 5>;
using Vector5 = Eigen::Matrix<double, 5, 1>;

// ---------------------------------------------------------------------------
// Moving block bootstrap

/// Start offsets of the blocks making up one resample of a series of length
/// `len`; the last block is truncated to fit.
inline std::vector<std::size_t> bootstrap_offsets(std::size_t len, std::size_t b, Rng& rng) {
  std::uniform_int_distribution<std::size_t> start(0, len - b);
  std::vector<std::size_t> out((len + b - 1) / b);
  for (auto& o : out) o = start(rng);
  return out;
}

inline std::vector<double> assemble_sample(std::span<const double> series, std::size_t b,
                                           std::span<const std::size_t> offsets) {
  std::vector<double> out;
  out.reserve(series.size());
  for (std::size_t off : offsets) {
    std::size_t take = std::min(b, series.size() - out.size());
    out.insert(out.end(), series.begin() + static_cast<std::ptrdiff_t>(off),
               series.begin() + static_cast<std::ptrdiff_t>(off + take));
  }
  return out;
}

inline void check_bootstrap_args(std::size_t len, std::size_t b, std::size_t n) {
  if (b == 0 || b > len) throw ValidationError("block length must be in [1, series length]");
  if (n == 0) throw ValidationError("bootstrap sample count must be >= 1");
}

inline std::vector<std::vector<double>> block_bootstrap(std::span<const double> series,
                                                        std::size_t b, std::size_t n, Rng& rng) {
  check_bootstrap_args(series.size(), b, n);
  std::vector<std::vector<double>> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    auto offsets = bootstrap_offsets(series.size(), b, rng);
    out.push_back(assemble_sample(series, b, offsets));
  }
  return out;
}

struct BootstrapCovariance {
  Matrix5 cov;
  std::vector<MomentVector> samples;
};

inline Matrix5 empirical_covariance(std::span<const MomentVector> samples) {
  if (samples.size() < 2) throw ValidationError("covariance needs at least two samples");
  Vector5 mean = Vector5::Zero();
  for (const auto& s : samples) mean += Eigen::Map<const Vector5>(s.as_array().data());
  mean /= static_cast<double>(samples.size());
  Matrix5 cov = Matrix5::Zero();
  for (const auto& s : samples) {
    auto a = s.as_array();
    Vector5 d = Eigen::Map<const Vector5>(a.data()) - mean;
    cov.noalias() += d * d.transpose();
  }
  cov /= static_cast<double>(samples.size() - 1);
  return 0.5 * (cov + cov.transpose());
}

/// Moment vectors of n block-bootstrap resamples; each KS entry compares the
/// resample with the original series. Draws the same offsets as
/// block_bootstrap with the same rng state.
inline BootstrapCovariance bootstrap_covariance(std::span<const double> series, std::size_t b,
                                                std::size_t n, Rng& rng,
                                                const MomentOptions& opt = {},
                                                std::size_t threads = 1) {
  check_bootstrap_args(series.size(), b, n);
  std::vector<std::vector<std::size_t>> offsets(n);
  for (auto& o : offsets) o = bootstrap_offsets(series.size(), b, rng);
  std::vector<double> sorted(series.begin(), series.end());
  std::sort(sorted.begin(), sorted.end());
  BootstrapCovariance out;
  out.samples = parallel_map(n, threads, [&](std::size_t k) {
    auto sample = assemble_sample(series, b, offsets[k]);
    return moment_vector_sorted_ref(sample, sorted, opt);
  });
  out.cov = empirical_covariance(out.samples);
  return out;
}

// ---------------------------------------------------------------------------
// Weight matrix

struct WeightMatrix {
  Matrix5 entries = Matrix5::Identity();
  double condition_number = 1.0;
  std::size_t b = 0;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  bool ill_conditioned = false;
};

inline constexpr double kConditionWarn = 1e8;
inline constexpr double kConditionReject = 1e12;

/// 2-norm condition number of a symmetric matrix.
inline double condition_number(const Matrix5& m) {
  Eigen::SelfAdjointEigenSolver<Matrix5> es(m, Eigen::EigenvaluesOnly);
  auto ev = es.eigenvalues().cwiseAbs();
  double lo = ev.minCoeff();
  return lo > 0.0 ? ev.maxCoeff() / lo : std::numeric_limits<double>::infinity();
}

/// Inverts the covariance through a pivoted LDL' factorization and
/// symmetrizes the result. Warns above 1e8; rejects above 1e12.
inline WeightMatrix weight_matrix(const Matrix5& cov) {
  if (!cov.allFinite()) throw ValidationError("covariance has non-finite entries");
  double scale = cov.cwiseAbs().maxCoeff();
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(scale, 1e-300))
    throw ValidationError("covariance matrix is not symmetric");
  WeightMatrix w;
  w.condition_number = condition_number(cov);
  if (!(w.condition_number <= kConditionReject))
    throw ValidationError("covariance is numerically singular (condition number " +
                          std::to_string(w.condition_number) + ")");
  w.ill_conditioned = w.condition_number > kConditionWarn;
  Eigen::LDLT<Matrix5> ldlt(cov);
  if (ldlt.info() != Eigen::Success) throw ValidationError("LDLT factorization failed");
  Matrix5 inv = ldlt.solve(Matrix5::Identity());
  w.entries = 0.5 * (inv + inv.transpose());
  return w;
}

inline void to_json(nlohmann::json& j, const WeightMatrix& w) {
  std::vector<double> flat;
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 5; ++c) flat.push_back(w.entries(r, c));
  j = nlohmann::json{{"entries", flat},
                     {"condition_number", w.condition_number},
                     {"b", w.b},
                     {"n", w.n},
                     {"seed", w.seed}};
}

inline void from_json(const nlohmann::json& j, WeightMatrix& w) {
  auto flat = j.at("entries").get<std::vector<double>>();
  if (flat.size() != 25) throw ValidationError("weight matrix must have 25 entries");
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 5; ++c) w.entries(r, c) = flat[static_cast<std::size_t>(r * 5 + c)];
  w.condition_number = j.at("condition_number").get<double>();
  w.b = j.value("b", std::size_t{0});
  w.n = j.value("n", std::size_t{0});
  w.seed = j.value("seed", std::uint64_t{0});
  w.ill_conditioned = w.condition_number > kConditionWarn;
}

// ---------------------------------------------------------------------------
// Objective

struct FreeParameter {
  std::string name;
  double lower = 0.0;
  double upper = 0.1;

  bool integer() const { return is_integer_param(name); }
};

/// Search box used when none is configured: [100, 10000] for trader counts,
/// [0, 0.1] for scale parameters and [1e-6, 0.1] for parameters that must be
/// strictly positive.
inline FreeParameter default_free_parameter(const std::string& name) {
  if (!is_param_name(name)) throw ValidationError("unknown free parameter '" + name + "'");
  if (name == "N_L" || name == "N_H") return {name, 100.0, 10000.0};
  if (name == "delta" || name == "alpha_c" || name == "alpha_f" || name == "lambda" ||
      name == "zeta")
    return {name, 1e-6, 0.1};
  return {name, 0.0, 0.1};
}

inline void validate_free(std::span<const FreeParameter> free) {
  if (free.empty()) throw ValidationError("at least one free parameter is required");
  for (std::size_t i = 0; i < free.size(); ++i) {
    if (!is_param_name(free[i].name))
      throw ValidationError("unknown free parameter '" + free[i].name + "'");
    if (!(free[i].lower <= free[i].upper))
      throw ValidationError("empty bounds for '" + free[i].name + "'");
    for (std::size_t j = 0; j < i; ++j)
      if (free[j].name == free[i].name)
        throw ValidationError("duplicate free parameter '" + free[i].name + "'");
  }
}

struct ObjectiveSpec {
  std::vector<double> reference_log_prices;
  MomentVector estimated;
  WeightMatrix weights;
  int replications = 5;
  ModelParams fixed;
  std::vector<FreeParameter> free;
  MomentOptions moments;
};

/// Builds an objective around a measured price series: the simulation starts
/// from its first two prices, runs for as many sessions as it has bars, and
/// the estimated moments are those of its log prices against themselves.
inline ObjectiveSpec make_objective_spec(std::span<const double> reference_prices,
                                         const WeightMatrix& weights, ModelParams base,
                                         std::vector<FreeParameter> free, int replications = 5,
                                         MomentOptions moments = {}) {
  if (reference_prices.size() < 2) throw DataError("reference series needs at least 2 prices");
  if (replications < 1) throw ValidationError("replications must be >= 1");
  validate_free(free);
  ObjectiveSpec spec;
  spec.reference_log_prices = log_prices(reference_prices);
  spec.estimated = moment_vector(spec.reference_log_prices, spec.reference_log_prices, moments);
  spec.weights = weights;
  spec.replications = replications;
  base.P0 = reference_prices[0];
  base.F0 = reference_prices[0];
  base.P1 = reference_prices[1];
  base.T = static_cast<int>(reference_prices.size());
  spec.fixed = base;
  spec.free = std::move(free);
  spec.moments = moments;
  return spec;
}

/// Clamps theta into the box, rounds integer coordinates, and writes the
/// result over the fixed parameters.
inline ModelParams apply_theta(const ObjectiveSpec& spec, std::span<const double> theta) {
  if (theta.size() != spec.free.size())
    throw ValidationError("theta has " + std::to_string(theta.size()) + " entries, expected " +
                          std::to_string(spec.free.size()));
  ModelParams p = spec.fixed;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const auto& fp = spec.free[i];
    double v = std::clamp(theta[i], fp.lower, fp.upper);
    set_param(p, fp.name, v);
  }
  return p;
}

inline double quadratic_form(const Matrix5& w, const Vector5& g) { return g.dot(w * g); }

/// Returns the session price series (length T) for one replication.
using Simulator = std::function<std::vector<double>(const ModelParams&, std::uint64_t)>;

inline std::vector<double> simulate_prices(const ModelParams& p, std::uint64_t seed) {
  auto r = run_simulation(p, seed);
  auto s = r.session_prices();
  return {s.begin(), s.end()};
}

/// Objective bound to one master seed. Replication i of every evaluation
/// uses replication_seed(master_seed, i) whatever theta is, so repeated
/// evaluations agree and nearby points share random numbers.
class MsmObjective {
 public:
  MsmObjective(ObjectiveSpec spec, std::uint64_t master_seed, std::size_t threads = 1,
               Simulator simulator = simulate_prices)
      : spec_(std::move(spec)),
        master_seed_(master_seed),
        threads_(std::max<std::size_t>(1, threads)),
        simulator_(std::move(simulator)) {
    validate_free(spec_.free);
    ref_sorted_ = spec_.reference_log_prices;
    std::sort(ref_sorted_.begin(), ref_sorted_.end());
  }

  const ObjectiveSpec& spec() const { return spec_; }
  std::size_t dimension() const { return spec_.free.size(); }
  std::uint64_t master_seed() const { return master_seed_; }
  std::size_t threads() const { return threads_; }

  Vector5 g_hat(std::span<const double> theta, int replications = 0) const {
    return g_hat_batch({std::vector<double>(theta.begin(), theta.end())}, replications).front();
  }

  double operator()(std::span<const double> theta, int replications = 0) const {
    return value_of(g_hat(theta, replications));
  }

  std::vector<double> evaluate_batch(const std::vector<std::vector<double>>& thetas,
                                     int replications = 0) const {
    auto gs = g_hat_batch(thetas, replications);
    std::vector<double> out(gs.size());
    for (std::size_t i = 0; i < gs.size(); ++i) out[i] = value_of(gs[i]);
    return out;
  }

  /// All (point, replication) simulations run on the worker pool; the
  /// per-point averages are reduced in replication order.
  std::vector<Vector5> g_hat_batch(const std::vector<std::vector<double>>& thetas,
                                   int replications = 0) const {
    const int reps = replications > 0 ? replications : spec_.replications;
    std::vector<ModelParams> params;
    params.reserve(thetas.size());
    for (const auto& t : thetas) {
      params.push_back(apply_theta(spec_, t));
      validate(params.back());
    }
    const std::size_t total = thetas.size() * static_cast<std::size_t>(reps);
    auto moments = parallel_map(total, threads_, [&](std::size_t k) {
      std::size_t point = k / static_cast<std::size_t>(reps);
      std::size_t rep = k % static_cast<std::size_t>(reps);
      // Diverged or degenerate paths (overflow, no price movement) have no
      // moments; the point is then scored as infinitely bad.
      try {
        auto prices = simulator_(params[point], replication_seed(master_seed_, rep));
        auto lp = log_prices(prices);
        return moment_vector_sorted_ref(lp, ref_sorted_, spec_.moments);
      } catch (const DivergenceError&) {
      } catch (const ValidationError&) {
      }
      return MomentVector::from_array(nan_moments());
    });
    auto me = spec_.estimated.as_array();
    std::vector<Vector5> out(thetas.size(), Vector5::Zero());
    for (std::size_t point = 0; point < thetas.size(); ++point) {
      for (int rep = 0; rep < reps; ++rep) {
        auto m = moments[point * static_cast<std::size_t>(reps) + rep].as_array();
        for (std::size_t i = 0; i < kMomentCount; ++i) out[point](i) += m[i] - me[i];
      }
      out[point] /= static_cast<double>(reps);
    }
    return out;
  }

  /// The quadratic form, clamped at zero (it can dip to -1e-9 * scale
  /// through rounding when W is only positive semi-definite).
  double value_of(const Vector5& g) const {
    if (!g.allFinite()) return std::numeric_limits<double>::infinity();
    return std::max(0.0, quadratic_form(spec_.weights.entries, g));
  }

 private:
  static std::array<double, kMomentCount> nan_moments() {
    std::array<double, kMomentCount> a;
    a.fill(std::numeric_limits<double>::quiet_NaN());
    return a;
  }

  ObjectiveSpec spec_;
  std::uint64_t master_seed_;
  std::size_t threads_;
  Simulator simulator_;
  std::vector<double> ref_sorted_;
};

inline Vector5 g_hat(const ObjectiveSpec& spec, std::span<const double> theta,
                     std::uint64_t master_seed) {
  return MsmObjective(spec, master_seed).g_hat(theta);
}

inline double objective(const ObjectiveSpec& spec, std::span<const double> theta,
                        std::uint64_t master_seed) {
  return MsmObjective(spec, master_seed)(theta);
}

}  // namespace abmcal
