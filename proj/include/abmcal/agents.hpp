#pragma once

// Behavioural rules for low-frequency (chartist / fundamentalist) and
// high-frequency traders. Every stochastic rule has a deterministic overload
// taking the noise draw explicitly.

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>

#include "abmcal/common.hpp"
#include "abmcal/lob.hpp"

namespace abmcal {

enum class Strategy { Chartist, Fundamentalist };

struct LfOrderRecord {
  double price = 0.0;
  double signed_size = 0.0;
  Strategy strategy = Strategy::Chartist;
};

struct LFTrader {
  int id = 0;
  int frequency = 1;
  Strategy strategy = Strategy::Chartist;
  double prob_chartist = 0.5;
  int last_activation = 0;
  std::optional<LfOrderRecord> last_order;
};

struct HFTrader {
  int id = 0;
  double activation_threshold = 0.0;
};

/// Inverse-CDF draw from the exponential with mean `theta` restricted to
/// [theta_min, theta_max], rounded to the nearest whole session.
inline int sample_lf_frequency(Rng& rng, double theta, double theta_min, double theta_max) {
  if (theta_max < theta_min) throw ValidationError("theta_max < theta_min");
  if (theta_max == theta_min) return static_cast<int>(std::lround(theta_min));
  double u = uniform01(rng);
  double span = 1.0 - std::exp(-(theta_max - theta_min) / theta);
  double x = theta_min - theta * std::log1p(-u * span);
  x = std::clamp(x, theta_min, theta_max);
  auto lo = static_cast<long>(std::ceil(theta_min));
  auto hi = static_cast<long>(std::floor(theta_max));
  return static_cast<int>(std::clamp(std::lround(x), lo, hi));
}

inline double chartist_size(double alpha_c, double p_prev, double p_prev2, double eps) {
  return alpha_c * (p_prev - p_prev2) + eps;
}
inline double chartist_size(double alpha_c, double sigma_c, double p_prev, double p_prev2,
                            Rng& rng) {
  return chartist_size(alpha_c, p_prev, p_prev2, normal(rng, sigma_c));
}

inline double fundamentalist_size(double alpha_f, double f_now, double p_prev, double eps) {
  return alpha_f * (f_now - p_prev) + eps;
}
inline double fundamentalist_size(double alpha_f, double sigma_f, double f_now, double p_prev,
                                  Rng& rng) {
  return fundamentalist_size(alpha_f, f_now, p_prev, normal(rng, sigma_f));
}

inline double update_fundamental(double f_prev, double delta, double y) {
  return f_prev * (1.0 + delta) * (1.0 + y);
}
inline double update_fundamental_random(double f_prev, double delta, double sigma_y, Rng& rng) {
  return update_fundamental(f_prev, delta, normal(rng, sigma_y));
}

inline double lf_order_price(double p_prev, double delta, double z) {
  return p_prev * (1.0 + delta) * (1.0 + z);
}

/// Redraws z until the price is positive (only reachable when sigma_z is
/// large enough for z <= -1).
inline double lf_order_price(double p_prev, double delta, double sigma_z, Rng& rng) {
  for (;;) {
    double price = lf_order_price(p_prev, delta, normal(rng, sigma_z));
    if (price > 0.0) return price;
  }
}

/// Positive demand buys, negative sells, zero places nothing.
inline std::optional<LimitOrder> lf_to_order(double signed_size, double price, int gamma_L,
                                             int session, int trader_id,
                                             std::uint64_t order_id = 0) {
  if (signed_size == 0.0) return std::nullopt;
  LimitOrder o;
  o.order_id = order_id;
  o.trader_id = trader_id;
  o.side = signed_size > 0.0 ? Side::Buy : Side::Sell;
  o.price = price;
  o.size = std::abs(signed_size);
  o.placed_session = session;
  o.lifetime = gamma_L;
  return o;
}

inline double lf_profit(double market_price, double order_price, double signed_size) {
  return (market_price - order_price) * signed_size;
}

/// Logit switching probability, shifted by the larger exponent so that large
/// profits relative to zeta cannot overflow.
inline double chartist_probability(double pi_c, double pi_f, double zeta) {
  double a = pi_c / zeta;
  double b = pi_f / zeta;
  double m = std::max(a, b);
  double ea = std::exp(a - m);
  double eb = std::exp(b - m);
  return ea / (ea + eb);
}

inline bool hf_is_active(double p_prev, double p_prev2, double threshold) {
  return std::abs((p_prev - p_prev2) / p_prev2) > threshold;
}

inline double hf_order_size(double opposite_mean, double lambda, double u) {
  // u in [0,1): inverse CDF of the exponential.
  return -lambda * opposite_mean * std::log1p(-u);
}

/// Exponential size with mean lambda times the mean resting size on the
/// opposite side; empty when the opposite side has no orders.
inline std::optional<double> hf_order_size(const OrderBook& book, Side side, double lambda,
                                           Rng& rng) {
  auto mean = book.mean_size(side == Side::Buy ? Side::Sell : Side::Buy);
  if (!mean || !(*mean > 0.0)) return std::nullopt;
  for (;;) {
    double s = hf_order_size(*mean, lambda, uniform01(rng));
    if (s > 0.0) return s;
  }
}

inline std::optional<double> hf_order_price(std::optional<double> best_bid,
                                             std::optional<double> best_ask, Side side,
                                             double kappa) {
  if (side == Side::Sell) {
    if (!best_bid) return std::nullopt;
    return *best_bid * (1.0 - kappa);
  }
  if (!best_ask) return std::nullopt;
  return *best_ask * (1.0 + kappa);
}

inline std::optional<double> hf_order_price(std::optional<double> best_bid,
                                             std::optional<double> best_ask, Side side,
                                             double kappa_min, double kappa_max, Rng& rng) {
  double kappa = kappa_min == kappa_max
                     ? kappa_min
                     : std::uniform_real_distribution<double>(kappa_min, kappa_max)(rng);
  return hf_order_price(best_bid, best_ask, side, kappa);
}

inline double hf_profit(double market_price, double order_price, double size, Side side) {
  double signed_size = side == Side::Buy ? size : -size;
  return (market_price - order_price) * signed_size;
}

inline double sample_hf_threshold(Rng& rng, double eta_min, double eta_max) {
  if (eta_min == eta_max) return eta_min;
  return std::uniform_real_distribution<double>(eta_min, eta_max)(rng);
}

}  // namespace abmcal
