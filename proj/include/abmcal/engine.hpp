#pragma once

// Session loop: opening auction, then per-session expiry, LF and HF order
// placement, batch clearing, price bookkeeping and strategy updates.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "abmcal/agents.hpp"
#include "abmcal/common.hpp"
#include "abmcal/lob.hpp"
#include "abmcal/params.hpp"

namespace abmcal {

/// Index k of every series is session k. Index 0 holds the pre-sample state:
/// the second seed price P1 (the lag immediately before session 1), F0 and a
/// zero trade count.
struct SimulationResult {
  std::vector<double> market_prices;
  std::vector<double> fundamentals;
  std::vector<int> trades_per_session;
  std::uint64_t seed = 0;

  /// Market prices of sessions 1..T.
  std::span<const double> session_prices() const {
    return std::span<const double>(market_prices).subspan(1);
  }

  friend bool operator==(const SimulationResult&, const SimulationResult&) = default;
};

struct EngineEvent {
  enum class Kind { SessionStart, LfOrderAttempt, HfOrderAttempt, Clearing };
  Kind kind;
  int session;
  int trader;
  bool placed;
};

using EventLog = std::vector<EngineEvent>;

namespace detail {

class Simulation {
 public:
  Simulation(const ModelParams& p, std::uint64_t seed, EventLog* log)
      : p_(p),
        log_(log),
        fundamental_rng_(make_stream(seed, Stream::Fundamental)),
        lf_rng_(make_stream(seed, Stream::LfNoise)),
        coin_rng_(make_stream(seed, Stream::StrategyCoins)),
        hf_rng_(make_stream(seed, Stream::HfNoise)) {
    result_.seed = seed;
    Rng setup = make_stream(seed, Stream::Setup);
    lf_.resize(static_cast<std::size_t>(p.N_L));
    for (int i = 0; i < p.N_L; ++i) {
      lf_[i].id = i;
      lf_[i].frequency = sample_lf_frequency(setup, p.theta, p.theta_min, p.theta_max);
    }
    Rng hf_setup = make_stream(derive_seed(seed, 0x4846), Stream::Setup);
    hf_.resize(static_cast<std::size_t>(p.N_H));
    for (int j = 0; j < p.N_H; ++j) {
      hf_[j].id = j;
      hf_[j].activation_threshold = sample_hf_threshold(hf_setup, p.eta_min, p.eta_max);
    }
    std::size_t n = static_cast<std::size_t>(p.T) + 1;
    result_.market_prices.reserve(n);
    result_.fundamentals.reserve(n);
    result_.trades_per_session.reserve(n);
    result_.market_prices.push_back(p.P1);
    result_.fundamentals.push_back(p.F0);
    result_.trades_per_session.push_back(0);
  }

  SimulationResult run() {
    double prev2 = p_.P0;
    double prev1 = p_.P1;
    double fundamental = p_.F0;
    std::vector<int> active;
    active.reserve(lf_.size());
    for (int t = 1; t <= p_.T; ++t) {
      log(EngineEvent::Kind::SessionStart, t, -1, false);
      if (t > 1) book_.expire(t);
      fundamental = update_fundamental_random(fundamental, p_.delta, p_.sigma_y, fundamental_rng_);
      if (!std::isfinite(fundamental) || !(fundamental > 0.0))
        throw DivergenceError("fundamental value left the finite range at session " +
                              std::to_string(t));

      active.clear();
      for (auto& trader : lf_) {
        if (t == 1 || t - trader.last_activation >= trader.frequency) {
          active.push_back(trader.id);
          trader.last_activation = t;
        }
      }
      for (int id : active) place_lf_order(lf_[id], t, prev1, prev2, fundamental);

      if (t > 1) {
        for (const auto& hf : hf_)
          if (hf_is_active(prev1, prev2, hf.activation_threshold)) place_hf_order(hf, t);
      }

      ClearingResult cleared = book_.clear_session(t);
      log(EngineEvent::Kind::Clearing, t, -1, !cleared.trades.empty());
      double price = cleared.market_price.value_or(prev1);

      for (int id : active) update_strategy(lf_[id], price);

      result_.market_prices.push_back(price);
      result_.fundamentals.push_back(fundamental);
      result_.trades_per_session.push_back(static_cast<int>(cleared.trades.size()));
      prev2 = prev1;
      prev1 = price;
    }
    return std::move(result_);
  }

 private:
  void log(EngineEvent::Kind kind, int session, int trader, bool placed) {
    if (log_) log_->push_back(EngineEvent{kind, session, trader, placed});
  }

  void place_lf_order(LFTrader& trader, int t, double prev1, double prev2, double fundamental) {
    bool chartist = uniform01(coin_rng_) < trader.prob_chartist;
    trader.strategy = chartist ? Strategy::Chartist : Strategy::Fundamentalist;
    double size = chartist ? chartist_size(p_.alpha_c, p_.sigma_c, prev1, prev2, lf_rng_)
                           : fundamentalist_size(p_.alpha_f, p_.sigma_f, fundamental, prev1, lf_rng_);
    double price = lf_order_price(prev1, p_.delta, p_.sigma_z, lf_rng_);
    if (!std::isfinite(size) || !std::isfinite(price))
      throw DivergenceError("order quantities left the finite range at session " +
                            std::to_string(t));
    trader.last_order = LfOrderRecord{price, size, trader.strategy};
    auto order = lf_to_order(size, price, p_.gamma_L, t, trader.id, next_id_);
    log(EngineEvent::Kind::LfOrderAttempt, t, trader.id, order.has_value());
    if (order) {
      book_.insert(*order);
      ++next_id_;
    }
  }

  void place_hf_order(const HFTrader& trader, int t) {
    Side side = uniform01(hf_rng_) < 0.5 ? Side::Buy : Side::Sell;
    auto size = hf_order_size(book_, side, p_.lambda, hf_rng_);
    std::optional<double> price;
    if (size)
      price = hf_order_price(book_.best_bid(), book_.best_ask(), side, p_.kappa_min,
                             p_.kappa_max, hf_rng_);
    log(EngineEvent::Kind::HfOrderAttempt, t, trader.id, size && price);
    if (!size || !price) return;
    if (!std::isfinite(*size) || !std::isfinite(*price))
      throw DivergenceError("order quantities left the finite range at session " +
                            std::to_string(t));
    LimitOrder o;
    o.order_id = next_id_++;
    o.trader_id = p_.N_L + trader.id;
    o.side = side;
    o.price = *price;
    o.size = *size;
    o.placed_session = t;
    o.lifetime = p_.gamma_H;
    book_.insert(o);
  }

  // The strategy not played this session is credited zero profit.
  void update_strategy(LFTrader& trader, double market_price) {
    if (!trader.last_order) return;
    const auto& o = *trader.last_order;
    double pi = lf_profit(market_price, o.price, o.signed_size);
    double pi_c = o.strategy == Strategy::Chartist ? pi : 0.0;
    double pi_f = o.strategy == Strategy::Fundamentalist ? pi : 0.0;
    trader.prob_chartist = chartist_probability(pi_c, pi_f, p_.zeta);
  }

  const ModelParams& p_;
  EventLog* log_;
  Rng fundamental_rng_;
  Rng lf_rng_;
  Rng coin_rng_;
  Rng hf_rng_;
  std::vector<LFTrader> lf_;
  std::vector<HFTrader> hf_;
  OrderBook book_;
  std::uint64_t next_id_ = 1;
  SimulationResult result_;
};

}  // namespace detail

/// Runs one simulation. Deterministic in (params, seed). Throws
/// ValidationError before doing any work if params are invalid.
inline SimulationResult run_simulation(const ModelParams& params, std::uint64_t seed,
                                       EventLog* log = nullptr) {
  validate(params);
  return detail::Simulation(params, seed, log).run();
}

inline std::uint64_t replication_seed(std::uint64_t master_seed, std::size_t k) {
  return derive_seed(master_seed, 0x5245504C00000000ull + k);
}

/// Replication k runs with replication_seed(master_seed, k); results are in
/// replication order regardless of thread count.
inline std::vector<SimulationResult> run_replications(const ModelParams& params,
                                                      std::uint64_t master_seed, int count,
                                                      std::size_t threads = 1) {
  if (count < 1) throw ValidationError("replication count must be >= 1");
  validate(params);
  return parallel_map(static_cast<std::size_t>(count), threads, [&](std::size_t k) {
    return run_simulation(params, replication_seed(master_seed, k));
  });
}

inline std::string format_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline void write_csv(std::ostream& os, const SimulationResult& r) {
  os << "session,market_price,fundamental,trade_count\n";
  for (std::size_t k = 0; k < r.market_prices.size(); ++k)
    os << k << ',' << format_double(r.market_prices[k]) << ','
       << format_double(r.fundamentals[k]) << ',' << r.trades_per_session[k] << '\n';
}

inline void to_json(nlohmann::json& j, const SimulationResult& r) {
  j = nlohmann::json{{"seed", r.seed},
                     {"market_prices", r.market_prices},
                     {"fundamentals", r.fundamentals},
                     {"trades_per_session", r.trades_per_session}};
}

inline void from_json(const nlohmann::json& j, SimulationResult& r) {
  j.at("seed").get_to(r.seed);
  j.at("market_prices").get_to(r.market_prices);
  j.at("fundamentals").get_to(r.fundamentals);
  j.at("trades_per_session").get_to(r.trades_per_session);
}

}  // namespace abmcal
