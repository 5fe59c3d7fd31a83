#pragma once

// Limit order book with price-time priority and batch clearing at the end
// of each session.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "abmcal/common.hpp"

namespace abmcal {

enum class Side { Buy, Sell };

inline const char* to_string(Side s) { return s == Side::Buy ? "Buy" : "Sell"; }

struct LimitOrder {
  std::uint64_t order_id = 0;
  int trader_id = 0;
  Side side = Side::Buy;
  double price = 0.0;
  double size = 0.0;
  int placed_session = 0;
  int lifetime = 1;

  friend bool operator==(const LimitOrder&, const LimitOrder&) = default;
};

struct Trade {
  double price = 0.0;
  double size = 0.0;
  int session = 0;
  std::uint64_t buy_order_id = 0;
  std::uint64_t sell_order_id = 0;

  friend bool operator==(const Trade&, const Trade&) = default;
};

struct ClearingResult {
  std::vector<Trade> trades;
  std::optional<double> market_price;
};

namespace detail {

struct PriorityKey {
  double price;
  int placed_session;
  std::uint64_t order_id;
};

// Higher price first; earlier session, then lower id, break ties.
struct BidOrder {
  bool operator()(const PriorityKey& a, const PriorityKey& b) const {
    if (a.price != b.price) return a.price > b.price;
    if (a.placed_session != b.placed_session) return a.placed_session < b.placed_session;
    return a.order_id < b.order_id;
  }
};

struct AskOrder {
  bool operator()(const PriorityKey& a, const PriorityKey& b) const {
    if (a.price != b.price) return a.price < b.price;
    if (a.placed_session != b.placed_session) return a.placed_session < b.placed_session;
    return a.order_id < b.order_id;
  }
};

}  // namespace detail

inline void validate(const LimitOrder& o) {
  if (!(o.price > 0.0)) throw ValidationError("order price must be positive");
  if (!(o.size > 0.0)) throw ValidationError("order size must be positive");
  if (o.lifetime < 1) throw ValidationError("order lifetime must be at least 1");
}

/// Two-sided book. Each side is kept in priority order at all times; expiry
/// is indexed by the session in which an order stops being eligible.
class OrderBook {
 public:
  /// Throws ValidationError on an invalid order or a live duplicate id.
  void insert(const LimitOrder& order) {
    validate(order);
    if (index_.contains(order.order_id))
      throw ValidationError("duplicate order id " + std::to_string(order.order_id));
    detail::PriorityKey key{order.price, order.placed_session, order.order_id};
    if (order.side == Side::Buy) {
      bids_.emplace(key, order);
      bid_volume_ += order.size;
    } else {
      asks_.emplace(key, order);
      ask_volume_ += order.size;
    }
    index_.emplace(order.order_id, Locator{order.side, key});
    expiry_[order.placed_session + order.lifetime].push_back(order.order_id);
  }

  /// Removes every order with current_session - placed_session >= lifetime.
  /// Returns the number of orders removed.
  std::size_t expire(int current_session) {
    std::size_t removed = 0;
    while (!expiry_.empty() && expiry_.begin()->first <= current_session) {
      for (std::uint64_t id : expiry_.begin()->second) removed += erase(id) ? 1 : 0;
      expiry_.erase(expiry_.begin());
    }
    return removed;
  }

  /// Matches best bid against best ask while the spread is crossed. Trades
  /// execute at the mean of the two order prices for the smaller size.
  ClearingResult clear_session(int session) {
    ClearingResult result;
    while (!bids_.empty() && !asks_.empty()) {
      auto bid = bids_.begin();
      auto ask = asks_.begin();
      if (bid->second.price < ask->second.price) break;
      Trade t;
      t.price = 0.5 * (bid->second.price + ask->second.price);
      t.size = std::min(bid->second.size, ask->second.size);
      t.session = session;
      t.buy_order_id = bid->second.order_id;
      t.sell_order_id = ask->second.order_id;
      result.trades.push_back(t);
      fill(bid->second, t.size);
      fill(ask->second, t.size);
    }
    if (!result.trades.empty()) result.market_price = result.trades.back().price;
    return result;
  }

  std::optional<double> best_bid() const {
    if (bids_.empty()) return std::nullopt;
    return bids_.begin()->second.price;
  }
  std::optional<double> best_ask() const {
    if (asks_.empty()) return std::nullopt;
    return asks_.begin()->second.price;
  }

  std::size_t bid_count() const { return bids_.size(); }
  std::size_t ask_count() const { return asks_.size(); }
  std::size_t size() const { return bids_.size() + asks_.size(); }
  bool empty() const { return size() == 0; }
  bool contains(std::uint64_t id) const { return index_.contains(id); }

  /// Mean resting size on one side; empty when that side has no orders.
  std::optional<double> mean_size(Side side) const {
    std::size_t n = side == Side::Buy ? bids_.size() : asks_.size();
    if (n == 0) return std::nullopt;
    return (side == Side::Buy ? bid_volume_ : ask_volume_) / static_cast<double>(n);
  }

  std::vector<LimitOrder> bids() const { return collect(bids_); }
  std::vector<LimitOrder> asks() const { return collect(asks_); }

 private:
  struct Locator {
    Side side;
    detail::PriorityKey key;
  };

  template <typename Map>
  static std::vector<LimitOrder> collect(const Map& m) {
    std::vector<LimitOrder> out;
    out.reserve(m.size());
    for (const auto& [k, o] : m) out.push_back(o);
    return out;
  }

  bool erase(std::uint64_t id) {
    auto it = index_.find(id);
    if (it == index_.end()) return false;
    if (it->second.side == Side::Buy) {
      auto o = bids_.find(it->second.key);
      bid_volume_ -= o->second.size;
      bids_.erase(o);
      if (bids_.empty()) bid_volume_ = 0.0;
    } else {
      auto o = asks_.find(it->second.key);
      ask_volume_ -= o->second.size;
      asks_.erase(o);
      if (asks_.empty()) ask_volume_ = 0.0;
    }
    index_.erase(it);
    return true;
  }

  // Partial fills keep their place in the queue.
  void fill(LimitOrder& o, double qty) {
    double& volume = o.side == Side::Buy ? bid_volume_ : ask_volume_;
    if (qty >= o.size) {
      erase(o.order_id);
    } else {
      o.size -= qty;
      volume -= qty;
    }
  }

  std::map<detail::PriorityKey, LimitOrder, detail::BidOrder> bids_;
  std::map<detail::PriorityKey, LimitOrder, detail::AskOrder> asks_;
  std::unordered_map<std::uint64_t, Locator> index_;
  std::map<int, std::vector<std::uint64_t>> expiry_;
  double bid_volume_ = 0.0;
  double ask_volume_ = 0.0;
};

}  // namespace abmcal
