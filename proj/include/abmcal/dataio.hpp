#pragma once

// Tick CSV ingestion, one-minute mid-price bars, Tukey outlier screening and
// a synthetic quote generator standing in for vendor tick data.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "abmcal/common.hpp"
#include "abmcal/engine.hpp"
#include "abmcal/moments.hpp"

namespace abmcal {

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;
using Minute = std::chrono::sys_time<std::chrono::minutes>;

enum class TickKind { Trade, Quote, AuctionQuote };

struct TickRecord {
  Timestamp timestamp{};
  TickKind kind = TickKind::Quote;
  std::optional<double> price;
  std::optional<double> bid;
  std::optional<double> ask;
  std::optional<double> volume;

  double mid() const { return (*bid + *ask) / 2.0; }

  friend bool operator==(const TickRecord&, const TickRecord&) = default;
};

struct PriceBar {
  Minute minute{};
  double mid_price = 0.0;

  friend bool operator==(const PriceBar&, const PriceBar&) = default;
};

struct RowError {
  std::size_t line = 0;
  std::string message;
};

struct TickParseResult {
  std::vector<TickRecord> records;
  std::vector<RowError> errors;
  std::vector<std::string> warnings;
};

inline constexpr std::string_view kTickHeader = "timestamp,kind,price,bid,ask,volume";
inline constexpr std::string_view kBarHeader = "minute,mid_price";

namespace detail {

inline std::string_view trim_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) return out;
    start = pos + 1;
  }
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

inline bool parse_fixed_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  for (char c : s)
    if (c < '0' || c > '9') return false;
  return parse_number(s, out);
}

}  // namespace detail

/// Parses YYYY-MM-DDTHH:MM[:SS[.fff]], fractional seconds of 1-3 digits.
inline std::optional<Timestamp> parse_timestamp(std::string_view s) {
  using namespace std::chrono;
  if (s.size() < 16 || s[4] != '-' || s[7] != '-' || s[10] != 'T' || s[13] != ':') return std::nullopt;
  int y, mo, d, h, mi, sec = 0, ms = 0;
  if (!detail::parse_fixed_int(s.substr(0, 4), y) || !detail::parse_fixed_int(s.substr(5, 2), mo) ||
      !detail::parse_fixed_int(s.substr(8, 2), d) || !detail::parse_fixed_int(s.substr(11, 2), h) ||
      !detail::parse_fixed_int(s.substr(14, 2), mi))
    return std::nullopt;
  std::string_view rest = s.substr(16);
  if (!rest.empty()) {
    if (rest.size() < 3 || rest[0] != ':' || !detail::parse_fixed_int(rest.substr(1, 2), sec))
      return std::nullopt;
    rest.remove_prefix(3);
    if (!rest.empty()) {
      if (rest[0] != '.' || rest.size() < 2 || rest.size() > 4) return std::nullopt;
      std::string digits(rest.substr(1));
      digits.resize(3, '0');
      if (!detail::parse_fixed_int(digits, ms)) return std::nullopt;
    }
  }
  year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || sec > 59) return std::nullopt;
  return sys_days(ymd) + hours(h) + minutes(mi) + seconds(sec) + milliseconds(ms);
}

inline std::string format_timestamp(Timestamp t, bool with_millis = true) {
  using namespace std::chrono;
  auto day = floor<days>(t);
  year_month_day ymd(day);
  hh_mm_ss<milliseconds> tod(t - day);
  char buf[32];
  int n = std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d", static_cast<int>(ymd.year()),
                        static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                        static_cast<int>(tod.hours().count()), static_cast<int>(tod.minutes().count()));
  if (with_millis)
    std::snprintf(buf + n, sizeof buf - static_cast<std::size_t>(n), ":%02d.%03d",
                  static_cast<int>(tod.seconds().count()),
                  static_cast<int>(tod.subseconds().count()));
  return buf;
}

inline std::string_view to_string(TickKind k) {
  switch (k) {
    case TickKind::Trade: return "TRADE";
    case TickKind::Quote: return "QUOTE";
    case TickKind::AuctionQuote: return "AUCTION";
  }
  return "?";
}

/// Reads the tick CSV. A bad header throws DataError; bad rows are reported
/// in `errors` with their 1-based line numbers and skipped. Out-of-order
/// rows are stably sorted by timestamp with a warning.
inline TickParseResult parse_ticks(std::istream& in) {
  TickParseResult res;
  std::string line;
  if (!std::getline(in, line) || detail::trim_cr(line) != kTickHeader)
    throw DataError("tick CSV header must be '" + std::string(kTickHeader) + "'");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view row = detail::trim_cr(line);
    if (row.empty()) continue;
    auto fail = [&](std::string msg) { res.errors.push_back({lineno, std::move(msg)}); };
    auto f = detail::split(row, ',');
    if (f.size() != 6) {
      fail("expected 6 fields, got " + std::to_string(f.size()));
      continue;
    }
    TickRecord r;
    auto ts = parse_timestamp(f[0]);
    if (!ts) {
      fail("bad timestamp '" + std::string(f[0]) + "'");
      continue;
    }
    r.timestamp = *ts;
    if (f[1] == "TRADE") r.kind = TickKind::Trade;
    else if (f[1] == "QUOTE") r.kind = TickKind::Quote;
    else if (f[1] == "AUCTION") r.kind = TickKind::AuctionQuote;
    else {
      fail("unknown kind '" + std::string(f[1]) + "'");
      continue;
    }
    bool ok = true;
    auto opt = [&](std::string_view s, const char* name) -> std::optional<double> {
      if (s.empty()) return std::nullopt;
      double v;
      if (!detail::parse_number(s, v) || !std::isfinite(v)) {
        fail(std::string("bad ") + name + " '" + std::string(s) + "'");
        ok = false;
        return std::nullopt;
      }
      return v;
    };
    r.price = opt(f[2], "price");
    if (ok) r.bid = opt(f[3], "bid");
    if (ok) r.ask = opt(f[4], "ask");
    if (ok) r.volume = opt(f[5], "volume");
    if (!ok) continue;
    if (r.kind == TickKind::Quote && !(r.bid && r.ask && *r.bid > 0.0 && *r.ask > 0.0)) {
      fail("quote needs positive bid and ask");
      continue;
    }
    if (r.kind == TickKind::Trade && !(r.price && *r.price > 0.0)) {
      fail("trade needs a positive price");
      continue;
    }
    res.records.push_back(r);
  }
  auto by_time = [](const TickRecord& a, const TickRecord& b) { return a.timestamp < b.timestamp; };
  if (!std::is_sorted(res.records.begin(), res.records.end(), by_time)) {
    std::stable_sort(res.records.begin(), res.records.end(), by_time);
    res.warnings.push_back("tick timestamps out of order; records were stably sorted");
  }
  return res;
}

inline void write_ticks_csv(std::ostream& os, std::span<const TickRecord> ticks) {
  os << kTickHeader << '\n';
  auto opt = [&](const std::optional<double>& v) {
    if (v) os << format_double(*v);
  };
  for (const auto& t : ticks) {
    os << format_timestamp(t.timestamp) << ',' << to_string(t.kind) << ',';
    opt(t.price);
    os << ',';
    opt(t.bid);
    os << ',';
    opt(t.ask);
    os << ',';
    opt(t.volume);
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Bars

struct BarsResult {
  std::vector<PriceBar> bars;
  std::vector<std::string> warnings;
};

/// One bar per minute of [day_start, day_end) on every calendar day that
/// has ticks: the mid of the last quote in that minute. Empty minutes carry
/// the previous bar forward; leading empty minutes on the first day take the
/// day's first in-window quote. Days without in-window quotes are skipped.
/// Ticks must be in time order, as parse_ticks returns them.
inline BarsResult bars_from_quotes(std::span<const TickRecord> ticks,
                                   std::chrono::minutes day_start = std::chrono::hours(9) +
                                                                    std::chrono::minutes(10),
                                   std::chrono::minutes day_end = std::chrono::hours(16) +
                                                                  std::chrono::minutes(50)) {
  using namespace std::chrono;
  if (!(day_start < day_end)) throw ValidationError("day_start must precede day_end");
  BarsResult res;
  std::map<sys_days, std::map<Minute, double>> by_day;  // last quote mid per minute
  std::optional<double> carry;                          // first in-window quote overall
  for (const auto& t : ticks) {
    sys_days day = floor<days>(t.timestamp);
    by_day[day];
    if (t.kind != TickKind::Quote) continue;
    auto tod = t.timestamp - day;
    if (tod < day_start || tod >= day_end) continue;
    by_day[day][floor<minutes>(t.timestamp)] = t.mid();
    if (!carry) carry = t.mid();
  }
  for (const auto& [day, quotes] : by_day) {
    if (quotes.empty()) {
      res.warnings.push_back("no quotes between session open and close on " +
                             format_timestamp(day, false).substr(0, 10) + "; day skipped");
      continue;
    }
    for (Minute m = day + day_start; m < day + day_end; m += minutes(1)) {
      auto it = quotes.find(m);
      if (it != quotes.end()) carry = it->second;
      res.bars.push_back({m, *carry});
    }
  }
  return res;
}

inline void write_bars_csv(std::ostream& os, std::span<const PriceBar> bars) {
  os << kBarHeader << '\n';
  for (const auto& b : bars)
    os << format_timestamp(b.minute, false) << ',' << format_double(b.mid_price) << '\n';
}

inline std::vector<PriceBar> read_bars_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || detail::trim_cr(line) != kBarHeader)
    throw DataError("bar CSV header must be '" + std::string(kBarHeader) + "'");
  std::vector<PriceBar> bars;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view row = detail::trim_cr(line);
    if (row.empty()) continue;
    auto f = detail::split(row, ',');
    auto ts = f.size() == 2 ? parse_timestamp(f[0]) : std::nullopt;
    double mid;
    if (!ts || !detail::parse_number(f[1], mid) || !(mid > 0.0) || !std::isfinite(mid))
      throw DataError("bad bar on line " + std::to_string(lineno));
    bars.push_back({std::chrono::floor<std::chrono::minutes>(*ts), mid});
  }
  return bars;
}

inline std::vector<double> bar_prices(std::span<const PriceBar> bars) {
  std::vector<double> out;
  out.reserve(bars.size());
  for (const auto& b : bars) out.push_back(b.mid_price);
  return out;
}

// ---------------------------------------------------------------------------
// Outlier screen

struct TukeyInterval {
  double q1 = 0.0;
  double q3 = 0.0;
  double lower = 0.0;
  double upper = 0.0;

  bool is_outlier(double x) const { return x < lower || x > upper; }
};

/// [Q1 - 1.5 IQR, Q3 + 1.5 IQR] with linearly interpolated quartiles.
inline TukeyInterval tukey_interval(std::span<const double> prices) {
  if (prices.size() < 4) throw ValidationError("tukey_interval needs at least 4 prices");
  std::vector<double> s(prices.begin(), prices.end());
  std::sort(s.begin(), s.end());
  TukeyInterval t;
  t.q1 = quantile_sorted(s, 0.25);
  t.q3 = quantile_sorted(s, 0.75);
  double iqr = t.q3 - t.q1;
  t.lower = t.q1 - 1.5 * iqr;
  t.upper = t.q3 + 1.5 * iqr;
  return t;
}

// ---------------------------------------------------------------------------
// Synthetic ticks

struct SynthOptions {
  std::chrono::sys_days first_day =
      std::chrono::sys_days(std::chrono::year{2013} / std::chrono::November / 1);
  int days = 5;  // weekdays
  double initial_mid = 238.75;
  double volatility = 1e-4;  // per-second log-mid standard deviation
  double spread = 0.05;
  std::chrono::minutes open = std::chrono::hours(9);
  std::chrono::minutes close = std::chrono::hours(17);
};

/// One quote per second over [open, close) on each weekday starting at
/// first_day. Bid and ask are rounded to 6 decimals and always differ by at
/// least a micro-unit.
inline std::vector<TickRecord> synth_ticks(const SynthOptions& opt, std::uint64_t seed) {
  using namespace std::chrono;
  if (opt.days < 0) throw ValidationError("days must be >= 0");
  if (!(opt.initial_mid > 0.0) || !(opt.spread > 0.0) || !(opt.volatility >= 0.0))
    throw ValidationError("synthetic ticks need positive mid and spread and non-negative volatility");
  if (!(opt.open < opt.close)) throw ValidationError("open must precede close");
  Rng rng = make_stream(seed, Stream::Setup);
  auto round6 = [](double v) { return std::round(v * 1e6) / 1e6; };
  std::vector<TickRecord> out;
  double log_mid = std::log(opt.initial_mid);
  int produced = 0;
  for (sys_days day = opt.first_day; produced < opt.days; day += std::chrono::days(1)) {
    weekday wd(day);
    if (wd == Saturday || wd == Sunday) continue;
    ++produced;
    for (sys_seconds t = day + opt.open; t < day + opt.close; t += seconds(1)) {
      log_mid += normal(rng, opt.volatility);
      double mid = std::exp(log_mid);
      double bid = round6(mid - opt.spread / 2.0);
      double ask = std::max(round6(mid + opt.spread / 2.0), round6(bid + 1e-6));
      if (!(bid > 0.0)) throw DataError("synthetic mid price fell below half the spread");
      TickRecord r;
      r.timestamp = time_point_cast<milliseconds>(t);
      r.kind = TickKind::Quote;
      r.bid = bid;
      r.ask = ask;
      out.push_back(r);
    }
  }
  return out;
}

}  // namespace abmcal
