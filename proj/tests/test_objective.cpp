#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "abmcal/objective.hpp"
#include "oracles.hpp"

using namespace abmcal;
using Catch::Approx;

namespace {

std::vector<double> gbm_prices(std::uint64_t seed, std::size_t n, double sigma = 0.01) {
  Rng rng(seed);
  std::normal_distribution<double> z(0.0, sigma);
  std::vector<double> p{100.0};
  while (p.size() < n) p.push_back(p.back() * std::exp(z(rng)));
  return p;
}

// Moments written out longhand, without the library's helpers.
std::vector<double> naive_moments(const std::vector<double>& x, const std::vector<double>& ref_sorted) {
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double m2 = 0.0, m4 = 0.0;
  for (double v : x) {
    m2 += std::pow(v - mean, 2);
    m4 += std::pow(v - mean, 4);
  }
  double sd = std::sqrt(m2 / (n - 1));
  double kurt = (m4 / n) / std::pow(m2 / n, 2);

  std::vector<double> xs = x;
  std::sort(xs.begin(), xs.end());
  auto ecdf = [](const std::vector<double>& s, double v) {
    return static_cast<double>(std::upper_bound(s.begin(), s.end(), v) - s.begin()) /
           static_cast<double>(s.size());
  };
  double ks = 0.0;
  for (const std::vector<double>* s : std::initializer_list<const std::vector<double>*>{&xs, &ref_sorted})
    for (double v : *s) ks = std::max(ks, std::abs(ecdf(xs, v) - ecdf(ref_sorted, v)));

  std::vector<double> lt, lk;
  for (int tau = 1; tau <= 19; ++tau) {
    double k = 0.0;
    for (std::size_t t = 0; t + tau < x.size(); ++t) k += std::abs(x[t + tau] - x[t]);
    lt.push_back(std::log(tau));
    lk.push_back(std::log(k / static_cast<double>(x.size() - tau)));
  }
  double mt = 0, mk = 0;
  for (std::size_t i = 0; i < lt.size(); ++i) mt += lt[i], mk += lk[i];
  mt /= lt.size(), mk /= lk.size();
  double num = 0, den = 0;
  for (std::size_t i = 0; i < lt.size(); ++i) {
    num += (lt[i] - mt) * (lk[i] - mk);
    den += (lt[i] - mt) * (lt[i] - mt);
  }
  return {mean, sd, kurt, ks, num / den};
}

Matrix5 appendix_w() {
  Matrix5 w;
  w << 5.0346e4, -1.2885e4, -736.6343, 3.0220e3, 391.2534,
      -1.2885e4, 7.8957e5, 2.5435e3, -341.4378, -6.1999e3,
      -736.6343, 2.5435e3, 28.7473, -88.4746, 17.2640,
      3.0220e3, -341.4378, -88.4746, 723.4611, 56.7301,
      391.2534, -6.1999e3, 17.2640, 56.7301, 2.3549e3;
  return w;
}

WeightMatrix identity_weights() { return weight_matrix(Matrix5::Identity()); }

}  // namespace

TEST_CASE("block bootstrap") {
  auto x = log_prices(gbm_prices(1, 500));
  Rng rng(2);
  SECTION("a single full block reproduces the series") {
    for (const auto& s : block_bootstrap(x, x.size(), 20, rng)) REQUIRE(s == x);
  }
  SECTION("blocks longer than the series are rejected") {
    REQUIRE_THROWS_AS(block_bootstrap(x, x.size() + 1, 1, rng), ValidationError);
    REQUIRE_THROWS_AS(block_bootstrap(x, 10, 0, rng), ValidationError);
  }
  SECTION("block length one is the iid bootstrap") {
    auto samples = block_bootstrap(x, 1, 10000, rng);
    double mean_of_means = 0.0;
    for (const auto& s : samples) {
      REQUIRE(s.size() == x.size());
      mean_of_means += std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
    }
    mean_of_means /= static_cast<double>(samples.size());
    double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    REQUIRE(mean_of_means == Approx(mean).epsilon(0.01));
  }
  SECTION("every resampled value comes from the series, in blocks") {
    std::set<double> values(x.begin(), x.end());
    for (const auto& s : block_bootstrap(x, 37, 50, rng)) {
      REQUIRE(s.size() == x.size());
      for (double v : s) REQUIRE(values.contains(v));
      // Inside each block consecutive values are consecutive in the series.
      for (std::size_t start = 0; start < s.size(); start += 37) {
        auto it = std::find(x.begin(), x.end(), s[start]);
        for (std::size_t k = 1; k < 37 && start + k < s.size(); ++k)
          REQUIRE(s[start + k] == *(it + static_cast<std::ptrdiff_t>(k)));
      }
    }
  }
}

TEST_CASE("bootstrap covariance matches a longhand computation") {
  auto x = log_prices(gbm_prices(3, 2300));
  std::vector<double> ref_sorted = x;
  std::sort(ref_sorted.begin(), ref_sorted.end());

  Rng a(77);
  auto got = bootstrap_covariance(x, 100, 10000, a);
  REQUIRE(got.samples.size() == 10000);

  Rng b(77);
  std::vector<std::vector<double>> rows;
  for (int k = 0; k < 10000; ++k) {
    auto offsets = bootstrap_offsets(x.size(), 100, b);
    std::vector<double> s;
    for (auto off : offsets)
      for (std::size_t i = off; i < off + 100 && s.size() < x.size(); ++i) s.push_back(x[i]);
    rows.push_back(naive_moments(s, ref_sorted));
  }
  auto want = oracle::covariance(rows);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j)
      REQUIRE(got.cov(i, j) == Approx(want[i][j]).epsilon(1e-3).margin(1e-14));

  REQUIRE((got.cov - got.cov.transpose()).cwiseAbs().maxCoeff() == 0.0);
  Eigen::SelfAdjointEigenSolver<Matrix5> es(got.cov);
  REQUIRE(es.eigenvalues().minCoeff() >= -1e-9 * got.cov.cwiseAbs().maxCoeff());
  for (int i = 0; i < 5; ++i) REQUIRE(got.cov(i, i) >= 0.0);
}

TEST_CASE("bootstrap is reproducible and thread-count independent") {
  auto x = log_prices(gbm_prices(4, 800));
  Rng a(5), b(5);
  auto one = bootstrap_covariance(x, 100, 500, a, {}, 1);
  auto four = bootstrap_covariance(x, 100, 500, b, {}, 4);
  REQUIRE(one.cov == four.cov);
}

TEST_CASE("weight matrix") {
  SECTION("identity and diagonal inverses") {
    auto w = weight_matrix(Matrix5::Identity());
    REQUIRE(w.entries.isApprox(Matrix5::Identity(), 1e-15));
    REQUIRE(w.condition_number == Approx(1.0));
    Matrix5 d = Matrix5::Identity();
    d(0, 0) = 4.0;
    auto wd = weight_matrix(d);
    REQUIRE(wd.entries(0, 0) == Approx(0.25));
    REQUIRE(wd.entries(1, 1) == Approx(1.0));
    REQUIRE(wd.condition_number == Approx(4.0));
  }
  SECTION("printed weight matrix fixture") {
    Matrix5 w = appendix_w();
    Matrix5 cov = weight_matrix(w).entries;  // the covariance W came from
    REQUIRE((w * cov - Matrix5::Identity()).cwiseAbs().maxCoeff() < 1e-6);
    auto back = weight_matrix(cov);
    double rel = (back.entries - w).cwiseAbs().maxCoeff() / w.cwiseAbs().maxCoeff();
    REQUIRE(rel < 1e-4);
    REQUIRE(back.condition_number == Approx(1.2772e5).epsilon(0.05));
    REQUIRE_FALSE(back.ill_conditioned);
  }
  SECTION("conditioning thresholds") {
    Matrix5 d = Matrix5::Identity();
    d(4, 4) = 1e-9;
    auto w = weight_matrix(d);
    REQUIRE(w.ill_conditioned);
    d(4, 4) = 1e-13;
    REQUIRE_THROWS_AS(weight_matrix(d), ValidationError);
    d(4, 4) = 0.0;
    REQUIRE_THROWS_AS(weight_matrix(d), ValidationError);
    Matrix5 asym = Matrix5::Identity();
    asym(0, 1) = 0.5;
    REQUIRE_THROWS_AS(weight_matrix(asym), ValidationError);
  }
  SECTION("json layout") {
    auto w = weight_matrix(appendix_w());
    w.b = 100;
    w.n = 10000;
    w.seed = 7;
    nlohmann::json j = w;
    REQUIRE(j.at("entries").size() == 25);
    REQUIRE(j.at("entries")[1] == w.entries(0, 1));
    REQUIRE(j.at("b") == 100);
    REQUIRE(j.at("n") == 10000);
    REQUIRE(j.at("seed") == 7);
    auto back = j.get<WeightMatrix>();
    REQUIRE(back.entries == w.entries);
    REQUIRE(back.condition_number == w.condition_number);
  }
}

TEST_CASE("quadratic form") {
  Vector5 g = Vector5::Zero();
  REQUIRE(quadratic_form(Matrix5::Identity(), g) == 0.0);
  g(0) = 1.0;
  REQUIRE(quadratic_form(Matrix5::Identity(), g) == 1.0);

  Rng rng(8);
  std::normal_distribution<double> z;
  Matrix5 w = appendix_w();
  for (int rep = 0; rep < 100; ++rep) {
    for (int i = 0; i < 5; ++i) g(i) = z(rng) * 1e-2;
    double sum = 0.0;
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) sum += g(i) * w(i, j) * g(j);
    REQUIRE(quadratic_form(w, g) == Approx(sum).epsilon(1e-12));
    REQUIRE(quadratic_form(w, g) >= 0.0);
  }
}

TEST_CASE("objective with a stub simulator") {
  auto ref = gbm_prices(9, 400);
  ModelParams base;
  base.N_L = 100;
  auto spec = make_objective_spec(ref, identity_weights(), base, {default_free_parameter("delta")}, 5);
  REQUIRE(spec.fixed.T == 400);
  REQUIRE(spec.fixed.P0 == ref[0]);
  REQUIRE(spec.fixed.P1 == ref[1]);
  REQUIRE(spec.estimated.ks_stat == 0.0);

  SECTION("matching moments give a zero gap") {
    MsmObjective obj(spec, 1, 1, [&](const ModelParams&, std::uint64_t) { return ref; });
    std::vector<double> theta{0.01};
    REQUIRE(obj.g_hat(theta).isZero(0.0));
    REQUIRE(obj(theta) == 0.0);
  }
  SECTION("a single replication is one moment difference") {
    auto sim = [&](const ModelParams& p, std::uint64_t seed) {
      return gbm_prices(seed ^ static_cast<std::uint64_t>(p.delta * 1e9), 400);
    };
    MsmObjective obj(spec, 11, 1, sim);
    std::vector<double> theta{0.02};
    auto g = obj.g_hat(theta, 1);
    auto p = apply_theta(spec, theta);
    auto m = moment_vector(log_prices(sim(p, replication_seed(11, 0))), spec.reference_log_prices);
    auto me = spec.estimated.as_array();
    auto ms = m.as_array();
    for (int i = 0; i < 5; ++i) REQUIRE(g(i) == ms[static_cast<std::size_t>(i)] - me[static_cast<std::size_t>(i)]);
    REQUIRE(g(3) == m.ks_stat);

    REQUIRE(obj.g_hat(theta) == obj.g_hat(theta));
    MsmObjective threaded(spec, 11, 3, sim);
    REQUIRE(threaded.g_hat(theta) == obj.g_hat(theta));
  }
  SECTION("scaling the covariance rescales f but keeps the argmin") {
    auto sim = [&](const ModelParams& p, std::uint64_t seed) {
      return gbm_prices(seed + static_cast<std::uint64_t>(p.delta * 1e6), 400, 0.005 + p.delta);
    };
    Matrix5 cov = Matrix5::Identity();
    cov(1, 1) = 0.3;
    cov(0, 1) = cov(1, 0) = 0.1;
    auto s1 = spec;
    s1.weights = weight_matrix(cov);
    auto s2 = spec;
    s2.weights = weight_matrix(cov * 8.0);
    MsmObjective o1(s1, 3, 1, sim), o2(s2, 3, 1, sim);
    std::vector<std::vector<double>> cands{{0.001}, {0.004}, {0.01}, {0.02}, {0.05}};
    auto f1 = o1.evaluate_batch(cands);
    auto f2 = o2.evaluate_batch(cands);
    for (std::size_t i = 0; i < f1.size(); ++i) REQUIRE(f2[i] == Approx(f1[i] / 8.0).epsilon(1e-10));
    REQUIRE(std::min_element(f1.begin(), f1.end()) - f1.begin() ==
            std::min_element(f2.begin(), f2.end()) - f2.begin());
  }
}

TEST_CASE("free parameters and theta application") {
  auto ref = gbm_prices(10, 300);
  std::vector<FreeParameter> free{default_free_parameter("delta"), default_free_parameter("N_L")};
  REQUIRE(free[0].lower == 1e-6);
  REQUIRE(free[1].lower == 100.0);
  REQUIRE(free[1].upper == 10000.0);
  REQUIRE(free[1].integer());
  REQUIRE(default_free_parameter("sigma_z").lower == 0.0);
  auto spec = make_objective_spec(ref, identity_weights(), ModelParams{}, free);
  auto p = apply_theta(spec, std::vector<double>{0.5, 1234.6});
  REQUIRE(p.delta == 0.1);
  REQUIRE(p.N_L == 1235);
  p = apply_theta(spec, std::vector<double>{-1.0, 10.0});
  REQUIRE(p.delta == 1e-6);
  REQUIRE(p.N_L == 100);
  REQUIRE_THROWS_AS(apply_theta(spec, std::vector<double>{0.1}), ValidationError);

  REQUIRE_THROWS_AS(default_free_parameter("bogus"), ValidationError);
  std::vector<FreeParameter> dup{default_free_parameter("delta"), default_free_parameter("delta")};
  REQUIRE_THROWS_AS(make_objective_spec(ref, identity_weights(), ModelParams{}, dup), ValidationError);
  REQUIRE_THROWS_AS(make_objective_spec(ref, identity_weights(), ModelParams{}, free, 0), ValidationError);
}

TEST_CASE("objective on the model is deterministic and non-negative") {
  ModelParams truth;
  truth.T = 300;
  truth.N_L = 300;
  truth.N_H = 10;
  auto data = run_simulation(truth, 123);
  auto prices = std::vector<double>(data.session_prices().begin(), data.session_prices().end());
  auto lp = log_prices(prices);
  Rng rng(1);
  auto cov = bootstrap_covariance(lp, 100, 300, rng).cov;
  auto spec = make_objective_spec(prices, weight_matrix(cov), truth, {{"delta", 1e-5, 0.05}}, 3);
  MsmObjective serial(spec, 99, 1), threaded(spec, 99, 4);
  std::vector<std::vector<double>> thetas{{1e-4}, {0.01}, {0.04}};
  auto a = serial.evaluate_batch(thetas);
  auto b = threaded.evaluate_batch(thetas);
  REQUIRE(a == b);
  for (double f : a) REQUIRE(f >= 0.0);
  REQUIRE(objective(spec, thetas[0], 99) == a[0]);
}

TEST_CASE("diverging or flat simulations score as infinitely bad") {
  auto ref = gbm_prices(9, 400);
  auto spec = make_objective_spec(ref, identity_weights(), ModelParams{}, {{"delta", 1e-5, 0.1}}, 2);
  auto flat = [](const ModelParams& p, std::uint64_t) { return std::vector<double>(p.T, 100.0); };
  auto blowup = [](const ModelParams&, std::uint64_t) -> std::vector<double> {
    throw DivergenceError("overflow");
  };
  std::vector<double> theta{0.01};
  REQUIRE(std::isinf(MsmObjective(spec, 1, 1, flat)(theta)));
  REQUIRE(std::isinf(MsmObjective(spec, 1, 1, blowup)(theta)));

  // Extreme drift overflows resting volumes; the run must still terminate,
  // and the objective must score it rather than throw.
  ModelParams p;
  p.T = 2300;
  p.N_L = 1000;
  p.N_H = 100;
  p.delta = 0.09;
  try {
    auto r = run_simulation(p, 1);
    for (double v : r.market_prices) REQUIRE(v > 0.0);
  } catch (const DivergenceError&) {
  }
  auto real = make_objective_spec(ref, identity_weights(), p, {{"delta", 1e-5, 0.1}}, 1);
  REQUIRE(MsmObjective(real, 1)(std::vector<double>{0.09}) >= 0.0);
}
