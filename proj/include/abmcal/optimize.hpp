#pragma once

// Heuristic calibrators: Nelder-Mead simplex combined with threshold
// accepting, and a simple real-coded genetic algorithm.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "abmcal/common.hpp"
#include "abmcal/objective.hpp"

namespace abmcal {

using Point = std::vector<double>;

struct Bounds {
  std::vector<double> lower;
  std::vector<double> upper;

  std::size_t size() const { return lower.size(); }
  double width(std::size_t i) const { return upper[i] - lower[i]; }

  Point clamp(Point x) const {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lower[i], upper[i]);
    return x;
  }
};

inline Bounds bounds_of(std::span<const FreeParameter> free) {
  Bounds b;
  for (const auto& p : free) {
    b.lower.push_back(p.lower);
    b.upper.push_back(p.upper);
  }
  return b;
}

/// Objective seen by the optimizers: a batch of points evaluated with a given
/// number of replications (0 means the objective's default).
class Evaluator {
 public:
  using Batch = std::function<std::vector<double>(const std::vector<Point>&, int)>;

  explicit Evaluator(Batch batch) : batch_(std::move(batch)) {}

  /// Wraps a deterministic scalar function; the replication count is ignored.
  static Evaluator scalar(std::function<double(std::span<const double>)> f) {
    return Evaluator([f = std::move(f)](const std::vector<Point>& xs, int) {
      std::vector<double> out;
      out.reserve(xs.size());
      for (const auto& x : xs) out.push_back(f(x));
      return out;
    });
  }

  static Evaluator from(const MsmObjective& obj) {
    return Evaluator([&obj](const std::vector<Point>& xs, int reps) {
      return obj.evaluate_batch(xs, reps);
    });
  }

  double operator()(const Point& x, int reps = 0) const { return batch_({x}, reps).front(); }
  std::vector<double> operator()(const std::vector<Point>& xs, int reps = 0) const {
    if (xs.empty()) return {};
    return batch_(xs, reps);
  }

 private:
  Batch batch_;
};

// ---------------------------------------------------------------------------
// Nelder-Mead

struct NmCoefficients {
  double rho = 1.0;
  double xi = 2.0;
  double psi = 0.5;
  double sigma = 0.5;
};

enum class NmMove { Reflect, Expand, OutContract, InContract };
enum class NmBranch { Expand, Reflect, OutContract, InContract, Shrink };

struct Simplex {
  std::vector<Point> vertices;
  std::vector<double> values;

  std::size_t dimension() const { return vertices.empty() ? 0 : vertices.front().size(); }

  /// Stable ascending order by value, so ties keep their previous order.
  void sort() {
    std::vector<std::size_t> idx(vertices.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<Point> v;
    std::vector<double> f;
    for (std::size_t i : idx) {
      v.push_back(std::move(vertices[i]));
      f.push_back(values[i]);
    }
    vertices = std::move(v);
    values = std::move(f);
  }

  std::size_t best_index() const {
    return static_cast<std::size_t>(std::min_element(values.begin(), values.end()) -
                                    values.begin());
  }
  double best_value() const { return values[best_index()]; }

  double diameter() const {
    double d = 0.0;
    for (std::size_t i = 0; i < vertices.size(); ++i)
      for (std::size_t j = i + 1; j < vertices.size(); ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < vertices[i].size(); ++k)
          s += (vertices[i][k] - vertices[j][k]) * (vertices[i][k] - vertices[j][k]);
        d = std::max(d, std::sqrt(s));
      }
    return d;
  }
};

inline void check_simplex(const Simplex& s) {
  std::size_t n = s.dimension();
  if (n == 0 || s.vertices.size() != n + 1)
    throw ValidationError("simplex must have n+1 vertices of dimension n >= 1");
  for (const auto& v : s.vertices)
    if (v.size() != n) throw ValidationError("simplex vertices differ in dimension");
}

inline Simplex make_simplex(std::vector<Point> vertices, const Evaluator& f, int reps = 0) {
  Simplex s;
  s.vertices = std::move(vertices);
  check_simplex(s);
  s.values = f(s.vertices, reps);
  return s;
}

/// Centroid of the best n vertices of a sorted simplex.
inline Point centroid(const Simplex& s) {
  std::size_t n = s.dimension();
  Point c(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) c[k] += s.vertices[i][k];
  for (double& v : c) v /= static_cast<double>(n);
  return c;
}

/// Transformed point for a simplex whose vertices are sorted best to worst.
inline Point nm_transform(const Simplex& s, NmMove kind, const NmCoefficients& c = {}) {
  Point bar = centroid(s);
  const Point& worst = s.vertices.back();
  double a = 0.0;  // point = (1 + a) * bar - a * worst
  switch (kind) {
    case NmMove::Reflect: a = c.rho; break;
    case NmMove::Expand: a = c.rho * c.xi; break;
    case NmMove::OutContract: a = c.psi * c.rho; break;
    case NmMove::InContract: a = -c.psi * c.rho; break;
  }
  Point out(bar.size());
  for (std::size_t k = 0; k < bar.size(); ++k) out[k] = (1.0 + a) * bar[k] - a * worst[k];
  return out;
}

/// One pass of the simplex search. Proposals outside the box are clamped
/// componentwise before evaluation.
inline Simplex nm_step(Simplex s, const Evaluator& f, const Bounds& box, int reps = 0,
                       NmBranch* taken = nullptr, const NmCoefficients& c = {}) {
  check_simplex(s);
  s.sort();
  const std::size_t n = s.dimension();
  auto propose = [&](NmMove m) { return box.clamp(nm_transform(s, m, c)); };

  Point r = propose(NmMove::Reflect);
  double fr = f(r, reps);
  Point star;
  double fstar = 0.0;
  NmBranch branch;

  if (fr < s.values[0]) {
    Point e = propose(NmMove::Expand);
    double fe = f(e, reps);
    if (fe < fr) {
      star = std::move(e), fstar = fe, branch = NmBranch::Expand;
    } else {
      star = std::move(r), fstar = fr, branch = NmBranch::Reflect;
    }
  } else if (fr < s.values[n - 1]) {
    star = std::move(r), fstar = fr, branch = NmBranch::Reflect;
  } else {
    NmMove m = fr < s.values[n] ? NmMove::OutContract : NmMove::InContract;
    Point q = propose(m);
    double fq = f(q, reps);
    if (fq < s.values[n]) {
      star = std::move(q), fstar = fq;
      branch = m == NmMove::OutContract ? NmBranch::OutContract : NmBranch::InContract;
    } else {
      branch = NmBranch::Shrink;
    }
  }

  if (branch == NmBranch::Shrink) {
    const Point& best = s.vertices[0];
    std::vector<Point> moved;
    for (std::size_t i = 1; i <= n; ++i) {
      Point v = s.vertices[i];
      for (std::size_t k = 0; k < n; ++k) v[k] = best[k] + c.sigma * (v[k] - best[k]);
      moved.push_back(std::move(v));
    }
    auto fv = f(moved, reps);
    for (std::size_t i = 1; i <= n; ++i) {
      s.vertices[i] = std::move(moved[i - 1]);
      s.values[i] = fv[i - 1];
    }
  } else {
    s.vertices[n] = std::move(star);
    s.values[n] = fstar;
  }
  if (taken) *taken = branch;
  s.sort();
  return s;
}

// ---------------------------------------------------------------------------
// Threshold accepting

struct ThresholdSchedule {
  std::vector<double> thresholds{0.2, 0.1, 0.0};
  std::vector<int> replications{3, 4, 5};
  int steps_per_round = 5;
  double probability = 0.15;

  void validate() const {
    if (thresholds.empty() || thresholds.size() != replications.size())
      throw ValidationError("threshold schedule needs one replication count per round");
    for (std::size_t r = 1; r < thresholds.size(); ++r)
      if (thresholds[r] > thresholds[r - 1])
        throw ValidationError("thresholds must be non-increasing");
    if (thresholds.back() != 0.0) throw ValidationError("final threshold must be 0");
    for (int reps : replications)
      if (reps < 1) throw ValidationError("replication counts must be >= 1");
    if (steps_per_round < 1) throw ValidationError("steps per round must be >= 1");
    if (!(probability >= 0.0 && probability <= 1.0))
      throw ValidationError("threshold accepting probability must be in [0, 1]");
  }
};

/// Adds mean(param) * u to coordinate `param` of every vertex and clamps.
/// Cached values are left untouched and must be refreshed by the caller.
inline Simplex ta_shift(Simplex s, std::size_t param, double u, const Bounds& box) {
  check_simplex(s);
  if (param >= s.dimension()) throw ValidationError("shift parameter index out of range");
  double mean = 0.0;
  for (const auto& v : s.vertices) mean += v[param];
  mean /= static_cast<double>(s.vertices.size());
  for (auto& v : s.vertices)
    v[param] = std::clamp(v[param] + mean * u, box.lower[param], box.upper[param]);
  return s;
}

inline Simplex ta_shift(Simplex s, Rng& rng, const Bounds& box) {
  std::uniform_int_distribution<std::size_t> pick(0, s.dimension() - 1);
  std::size_t param = pick(rng);
  double u = uniform01(rng) - 0.5;
  return ta_shift(std::move(s), param, u, box);
}

struct NmTaOptions {
  int iterations = 250;
  int replications = 5;  // simplex-branch evaluations
  ThresholdSchedule schedule;
  NmCoefficients coefficients;
};

struct NmTaResult {
  Point best_theta;
  double best_f = std::numeric_limits<double>::infinity();
  std::vector<double> trace;    // best-ever value after each iteration
  std::vector<double> current;  // best value of the working simplex after each iteration
  int iterations = 0;
  int ta_phases = 0;
  int accepted_shifts = 0;
};

/// Combined search. Each top-level pass is one iteration: with probability
/// `schedule.probability` a full threshold-accepting phase, otherwise one
/// simplex step. During a round the current simplex is re-evaluated with the
/// round's replication count so that old and shifted simplices are compared
/// on the same footing; after the phase it is re-evaluated with the simplex
/// replication count. Best-ever tracking only uses values at that count.
inline NmTaResult nm_ta_run(const Evaluator& f, std::vector<Point> initial, const Bounds& box,
                            Rng& rng, const NmTaOptions& opt = {}) {
  opt.schedule.validate();
  if (opt.iterations < 0) throw ValidationError("iterations must be >= 0");
  for (auto& v : initial) v = box.clamp(std::move(v));
  const int reps = opt.replications;
  Simplex s = make_simplex(std::move(initial), f, reps);

  NmTaResult res;
  auto track = [&](const Simplex& sx) {
    std::size_t i = sx.best_index();
    if (sx.values[i] < res.best_f) {
      res.best_f = sx.values[i];
      res.best_theta = sx.vertices[i];
    }
  };
  track(s);

  for (int it = 0; it < opt.iterations; ++it) {
    if (uniform01(rng) < opt.schedule.probability) {
      ++res.ta_phases;
      for (std::size_t r = 0; r < opt.schedule.thresholds.size(); ++r) {
        const int round_reps = opt.schedule.replications[r];
        s.values = f(s.vertices, round_reps);
        if (round_reps == reps) track(s);
        for (int step = 0; step < opt.schedule.steps_per_round; ++step) {
          Simplex cand = ta_shift(s, rng, box);
          cand.values = f(cand.vertices, round_reps);
          if (round_reps == reps) track(cand);
          if (cand.best_value() < s.best_value() + opt.schedule.thresholds[r]) {
            s = std::move(cand);
            ++res.accepted_shifts;
          }
        }
      }
      if (opt.schedule.replications.back() != reps) {
        s.values = f(s.vertices, reps);
        track(s);
      }
    } else {
      s = nm_step(std::move(s), f, box, reps, nullptr, opt.coefficients);
      track(s);
    }
    res.trace.push_back(res.best_f);
    res.current.push_back(s.best_value());
    ++res.iterations;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Genetic algorithm

struct GaOptions {
  int population = 100;
  int generations = 100;
  double crossover_probability = 0.8;
  double mutation_probability = 0.01;
  double mutation_scale = 0.1;  // fraction of each gene's bound width
  int elite = 2;
  int replications = 5;
};

struct GaGeneration {
  double best = 0.0;
  double mean = 0.0;
};

struct GaResult {
  Point best_theta;
  double best_f = std::numeric_limits<double>::infinity();
  std::vector<GaGeneration> trace;  // entry 0 is the initial population
  std::vector<Point> population;
  std::vector<double> fitness;
};

/// Selection weights for a population sorted best first: linear in rank from
/// 2 (best) down to 0 (worst).
inline std::vector<double> rank_weights(std::size_t n) {
  if (n == 1) return {1.0};
  std::vector<double> w(n);
  for (std::size_t r = 0; r < n; ++r)
    w[r] = 2.0 * static_cast<double>(n - 1 - r) / static_cast<double>(n - 1);
  return w;
}

inline GaResult ga_run(const Evaluator& f, std::vector<Point> population, const Bounds& box,
                       Rng& rng, const GaOptions& opt = {}) {
  const auto n = population.size();
  if (n == 0 || static_cast<int>(n) != opt.population)
    throw ValidationError("initial population size must equal the configured size");
  if (opt.elite < 0 || static_cast<std::size_t>(opt.elite) > n)
    throw ValidationError("elite count must be in [0, population]");
  if (opt.generations < 0) throw ValidationError("generations must be >= 0");
  for (auto& x : population) x = box.clamp(std::move(x));
  std::vector<double> fit = f(population, opt.replications);

  GaResult res;
  auto record = [&] {
    double sum = 0.0;
    std::size_t best = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sum += fit[i];
      if (fit[i] < fit[best]) best = i;
    }
    if (fit[best] < res.best_f) {
      res.best_f = fit[best];
      res.best_theta = population[best];
    }
    res.trace.push_back({fit[best], sum / static_cast<double>(n)});
  };
  record();

  const auto elite = static_cast<std::size_t>(opt.elite);
  const auto weights = rank_weights(n);
  std::normal_distribution<double> gauss(0.0, 1.0);

  for (int g = 0; g < opt.generations; ++g) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return fit[a] < fit[b]; });

    std::discrete_distribution<std::size_t> select(weights.begin(), weights.end());
    std::vector<Point> kids;
    kids.reserve(n - elite);
    for (std::size_t k = 0; k < n - elite; ++k) kids.push_back(population[order[select(rng)]]);

    for (std::size_t k = 0; k + 1 < kids.size(); k += 2) {
      if (uniform01(rng) >= opt.crossover_probability) continue;
      double w = uniform01(rng);
      for (std::size_t i = 0; i < box.size(); ++i) {
        double a = kids[k][i], b = kids[k + 1][i];
        kids[k][i] = w * a + (1.0 - w) * b;
        kids[k + 1][i] = (1.0 - w) * a + w * b;
      }
    }

    for (auto& kid : kids)
      for (std::size_t i = 0; i < box.size(); ++i)
        if (uniform01(rng) < opt.mutation_probability)
          kid[i] = std::clamp(kid[i] + opt.mutation_scale * box.width(i) * gauss(rng),
                              box.lower[i], box.upper[i]);

    auto kid_fit = f(kids, opt.replications);
    std::vector<Point> next;
    std::vector<double> next_fit;
    next.reserve(n);
    next_fit.reserve(n);
    for (std::size_t e = 0; e < elite; ++e) {
      next.push_back(population[order[e]]);
      next_fit.push_back(fit[order[e]]);
    }
    for (std::size_t k = 0; k < kids.size(); ++k) {
      next.push_back(std::move(kids[k]));
      next_fit.push_back(kid_fit[k]);
    }
    population = std::move(next);
    fit = std::move(next_fit);
    record();
  }
  res.population = std::move(population);
  res.fitness = std::move(fit);
  return res;
}

// ---------------------------------------------------------------------------
// Initialization and reporting

/// Uniform draw inside each parameter's box; integer parameters draw whole
/// numbers.
inline Point init_free_params(std::span<const FreeParameter> free, Rng& rng) {
  Point x;
  x.reserve(free.size());
  for (const auto& p : free) {
    if (!is_param_name(p.name)) throw ValidationError("unknown free parameter '" + p.name + "'");
    if (p.integer()) {
      std::uniform_int_distribution<long> d(std::lround(std::ceil(p.lower)),
                                            std::lround(std::floor(p.upper)));
      x.push_back(static_cast<double>(d(rng)));
    } else {
      x.push_back(std::uniform_real_distribution<double>(p.lower, p.upper)(rng));
    }
  }
  return x;
}

inline Point init_free_params(std::span<const std::string> names, Rng& rng) {
  std::vector<FreeParameter> free;
  for (const auto& n : names) free.push_back(default_free_parameter(n));
  return init_free_params(free, rng);
}

inline std::vector<Point> random_simplex(std::span<const FreeParameter> free, Rng& rng) {
  std::vector<Point> v;
  for (std::size_t i = 0; i <= free.size(); ++i) v.push_back(init_free_params(free, rng));
  return v;
}

inline std::vector<Point> random_population(std::span<const FreeParameter> free, int size,
                                            Rng& rng) {
  std::vector<Point> v;
  for (int i = 0; i < size; ++i) v.push_back(init_free_params(free, rng));
  return v;
}

struct ConfidenceInterval {
  double mean = 0.0;
  double half_width = 0.0;
  std::size_t n = 0;

  double lower() const { return mean - half_width; }
  double upper() const { return mean + half_width; }
};

/// mean +/- t* s / sqrt(n) with t* the two-sided Student-t critical value.
inline ConfidenceInterval confidence_interval(std::span<const double> xs, double level = 0.95) {
  if (xs.size() < 2) throw ValidationError("confidence interval needs at least 2 samples");
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("confidence level must be in (0, 1)");
  double n = static_cast<double>(xs.size());
  double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  double s = std::sqrt(ss / (n - 1.0));
  boost::math::students_t dist(n - 1.0);
  double t = boost::math::quantile(dist, 0.5 + level / 2.0);
  return {mean, t * s / std::sqrt(n), xs.size()};
}

}  // namespace abmcal
