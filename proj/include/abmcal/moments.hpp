#pragma once

// Calibration statistics (mean, standard deviation, kurtosis, two-sample KS,
// generalized Hurst exponent) and stylized-fact diagnostics.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "abmcal/common.hpp"
#include "abmcal/engine.hpp"

namespace abmcal {

inline constexpr std::size_t kMomentCount = 5;

struct MomentVector {
  double mean = 0.0;
  double std_dev = 0.0;
  double kurtosis = 0.0;
  double ks_stat = 0.0;
  double hurst = 0.0;

  std::array<double, kMomentCount> as_array() const {
    return {mean, std_dev, kurtosis, ks_stat, hurst};
  }
  static MomentVector from_array(const std::array<double, kMomentCount>& a) {
    return {a[0], a[1], a[2], a[3], a[4]};
  }
  friend bool operator==(const MomentVector&, const MomentVector&) = default;
};

inline const std::array<const char*, kMomentCount>& moment_names() {
  static const std::array<const char*, kMomentCount> names{"mean", "std_dev", "kurtosis",
                                                           "ks_stat", "hurst"};
  return names;
}

enum class KurtosisKind { Raw, Excess };

struct MomentOptions {
  int tau_max = 19;
  KurtosisKind kurtosis = KurtosisKind::Raw;
};

inline std::vector<double> log_prices(std::span<const double> prices) {
  std::vector<double> out(prices.size());
  for (std::size_t i = 0; i < prices.size(); ++i) {
    if (!(prices[i] > 0.0))
      throw ValidationError("non-positive price at index " + std::to_string(i));
    out[i] = std::log(prices[i]);
  }
  return out;
}

inline std::vector<double> log_returns(std::span<const double> prices) {
  auto lp = log_prices(prices);
  std::vector<double> out;
  if (lp.size() < 2) return out;
  out.resize(lp.size() - 1);
  for (std::size_t i = 1; i < lp.size(); ++i) out[i - 1] = lp[i] - lp[i - 1];
  return out;
}

struct BasicMoments {
  double mean;
  double std_dev;
  double kurtosis;
};

/// Sample mean, (n-1) standard deviation and Pearson kurtosis
/// n * sum d^4 / (sum d^2)^2 (minus 3 for the excess form).
inline BasicMoments basic_moments(std::span<const double> x,
                                  KurtosisKind kind = KurtosisKind::Raw) {
  if (x.size() < 4) throw ValidationError("basic_moments needs at least 4 observations");
  const double n = static_cast<double>(x.size());
  double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double s2 = 0.0, s4 = 0.0;
  for (double v : x) {
    double d = v - mean;
    double d2 = d * d;
    s2 += d2;
    s4 += d2 * d2;
  }
  if (!(s2 > 0.0)) throw ValidationError("kurtosis undefined for a constant series");
  double kurt = n * s4 / (s2 * s2);
  if (kind == KurtosisKind::Excess) kurt -= 3.0;
  return {mean, std::sqrt(s2 / (n - 1.0)), kurt};
}

/// Sup-distance between the empirical CDFs of two sorted samples, evaluated
/// at every point of the merged support.
inline double ks_statistic_sorted(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ValidationError("ks_statistic needs non-empty samples");
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  // Past the end of one sample the gap only shrinks.
  return d;
}

inline double ks_statistic(std::span<const double> a, std::span<const double> b) {
  std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  return ks_statistic_sorted(sa, sb);
}

/// Generalized Hurst exponent for q = 1: least-squares slope of
/// log mean|X(t+tau) - X(t)| on log tau over tau = 1..tau_max.
inline double hurst_ghe(std::span<const double> x, int tau_max = 19) {
  if (tau_max < 2) throw ValidationError("hurst_ghe needs tau_max >= 2");
  if (x.size() < static_cast<std::size_t>(5 * tau_max))
    throw ValidationError("hurst_ghe needs at least 5 * tau_max observations");
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (int tau = 1; tau <= tau_max; ++tau) {
    const std::size_t m = x.size() - static_cast<std::size_t>(tau);
    double k = 0.0;
    for (std::size_t t = 0; t < m; ++t) k += std::abs(x[t + tau] - x[t]);
    k /= static_cast<double>(m);
    if (!(k > 0.0)) throw ValidationError("hurst_ghe undefined for a degenerate series");
    double lx = std::log(static_cast<double>(tau));
    double ly = std::log(k);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double n = tau_max;
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// reference_sorted must be sorted ascending.
inline MomentVector moment_vector_sorted_ref(std::span<const double> series,
                                             std::span<const double> reference_sorted,
                                             const MomentOptions& opt = {}) {
  auto b = basic_moments(series, opt.kurtosis);
  std::vector<double> sorted(series.begin(), series.end());
  std::sort(sorted.begin(), sorted.end());
  return {b.mean, b.std_dev, b.kurtosis, ks_statistic_sorted(sorted, reference_sorted),
          hurst_ghe(series, opt.tau_max)};
}

inline MomentVector moment_vector(std::span<const double> series,
                                  std::span<const double> reference,
                                  const MomentOptions& opt = {}) {
  std::vector<double> ref(reference.begin(), reference.end());
  std::sort(ref.begin(), ref.end());
  return moment_vector_sorted_ref(series, ref, opt);
}

struct AcfResult {
  std::vector<double> values;  // lags 0..max_lag
  double band = 0.0;           // 95% white-noise band half-width
};

inline AcfResult acf(std::span<const double> x, int max_lag) {
  if (max_lag < 0 || x.size() <= static_cast<std::size_t>(max_lag))
    throw ValidationError("acf needs more observations than max_lag");
  const double n = static_cast<double>(x.size());
  double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double denom = 0.0;
  for (double v : x) denom += (v - mean) * (v - mean);
  AcfResult r;
  r.band = 1.96 / std::sqrt(n);
  r.values.resize(static_cast<std::size_t>(max_lag) + 1);
  for (int lag = 0; lag <= max_lag; ++lag) {
    double num = 0.0;
    for (std::size_t t = 0; t + lag < x.size(); ++t) num += (x[t] - mean) * (x[t + lag] - mean);
    r.values[lag] = denom > 0.0 ? num / denom : (lag == 0 ? 1.0 : 0.0);
  }
  r.values[0] = 1.0;
  return r;
}

/// Linear interpolation between order statistics (the "type 7" rule).
inline double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw ValidationError("quantile of an empty sample");
  double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  auto lo = static_cast<std::size_t>(std::floor(h));
  std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Average ranks, ties sharing the mean rank.
inline std::vector<double> ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ValidationError("pearson: size mismatch");
  double n = static_cast<double>(x.size());
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

inline double spearman(std::span<const double> x, std::span<const double> y) {
  auto rx = ranks(x);
  auto ry = ranks(y);
  return pearson(rx, ry);
}

// ---------------------------------------------------------------------------
// Stylized-fact report

struct HistogramBin {
  double left, right;
  std::size_t count;
  double normal_density;
};

struct QqPoint {
  double theoretical_q, sample_q;
};

struct StylizedReport {
  std::vector<double> pooled_returns;
  double fitted_mean = 0.0;
  double fitted_sd = 0.0;
  double kurtosis = 0.0;
  std::vector<HistogramBin> histogram;
  std::vector<QqPoint> qq;
  AcfResult acf_returns;
  AcfResult acf_abs_returns;
};

/// Log returns of each replication, concatenated (never differenced across
/// replication boundaries).
inline std::vector<double> pooled_log_returns(std::span<const SimulationResult> results) {
  std::vector<double> out;
  for (const auto& r : results) {
    auto lr = log_returns(r.session_prices());
    out.insert(out.end(), lr.begin(), lr.end());
  }
  return out;
}

/// Freedman-Diaconis bins, with a normal density fitted by mean and sd.
inline std::vector<HistogramBin> histogram(std::span<const double> x, double mean, double sd) {
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  double lo = s.front(), hi = s.back();
  double iqr = quantile_sorted(s, 0.75) - quantile_sorted(s, 0.25);
  double width = 2.0 * iqr / std::cbrt(static_cast<double>(s.size()));
  std::size_t bins = 1;
  if (width > 0.0 && hi > lo)
    bins = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil((hi - lo) / width)), 1, 10000);
  if (hi == lo) hi = lo + 1.0;
  width = (hi - lo) / static_cast<double>(bins);
  std::vector<HistogramBin> out(bins);
  boost::math::normal_distribution<double> fit(mean, sd > 0.0 ? sd : 1.0);
  for (std::size_t b = 0; b < bins; ++b) {
    out[b].left = lo + width * static_cast<double>(b);
    out[b].right = b + 1 == bins ? hi : lo + width * static_cast<double>(b + 1);
    out[b].count = 0;
    out[b].normal_density = boost::math::pdf(fit, 0.5 * (out[b].left + out[b].right));
  }
  for (double v : s) {
    auto b = static_cast<std::size_t>((v - lo) / width);
    out[std::min(b, bins - 1)].count++;
  }
  return out;
}

/// Sorted sample against quantiles of the fitted normal at (i - 0.5) / n.
inline std::vector<QqPoint> qq_points(std::span<const double> x, double mean, double sd) {
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  boost::math::normal_distribution<double> fit(mean, sd > 0.0 ? sd : 1.0);
  std::vector<QqPoint> out(s.size());
  const double n = static_cast<double>(s.size());
  for (std::size_t i = 0; i < s.size(); ++i)
    out[i] = {boost::math::quantile(fit, (static_cast<double>(i) + 0.5) / n), s[i]};
  return out;
}

inline StylizedReport stylized_report(std::span<const SimulationResult> results,
                                      int max_lag = 50) {
  if (results.empty()) throw ValidationError("stylized_report needs at least one result");
  StylizedReport rep;
  rep.pooled_returns = pooled_log_returns(results);
  auto b = basic_moments(rep.pooled_returns);
  rep.fitted_mean = b.mean;
  rep.fitted_sd = b.std_dev;
  rep.kurtosis = b.kurtosis;
  rep.histogram = histogram(rep.pooled_returns, b.mean, b.std_dev);
  rep.qq = qq_points(rep.pooled_returns, b.mean, b.std_dev);
  rep.acf_returns = acf(rep.pooled_returns, max_lag);
  std::vector<double> abs_r(rep.pooled_returns.size());
  std::transform(rep.pooled_returns.begin(), rep.pooled_returns.end(), abs_r.begin(),
                 [](double v) { return std::abs(v); });
  rep.acf_abs_returns = acf(abs_r, max_lag);
  return rep;
}

/// Writes hist.csv, qq.csv, acf_returns.csv and acf_abs_returns.csv.
inline void write_report(const StylizedReport& rep, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream os(dir / name);
    if (!os) throw DataError("cannot write " + (dir / name).string());
    return os;
  };
  {
    auto os = open("hist.csv");
    os << "bin_left,bin_right,count,normal_density\n";
    for (const auto& h : rep.histogram)
      os << format_double(h.left) << ',' << format_double(h.right) << ',' << h.count << ','
         << format_double(h.normal_density) << '\n';
  }
  {
    auto os = open("qq.csv");
    os << "theoretical_q,sample_q\n";
    for (const auto& q : rep.qq)
      os << format_double(q.theoretical_q) << ',' << format_double(q.sample_q) << '\n';
  }
  auto write_acf = [&](const char* name, const AcfResult& a) {
    auto os = open(name);
    os << "lag,acf,band\n";
    for (std::size_t k = 0; k < a.values.size(); ++k)
      os << k << ',' << format_double(a.values[k]) << ',' << format_double(a.band) << '\n';
  };
  write_acf("acf_returns.csv", rep.acf_returns);
  write_acf("acf_abs_returns.csv", rep.acf_abs_returns);
}

}  // namespace abmcal
