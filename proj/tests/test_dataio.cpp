#include <catch_amalgamated.hpp>

#include <set>
#include <sstream>

#include "abmcal/dataio.hpp"

using namespace abmcal;
using Catch::Approx;

namespace {

TickParseResult parse(const std::string& body) {
  std::istringstream in(std::string(kTickHeader) + "\n" + body);
  return parse_ticks(in);
}

Timestamp ts(const char* s) { return *parse_timestamp(s); }

TickRecord quote(const char* when, double bid, double ask) {
  TickRecord r;
  r.timestamp = ts(when);
  r.bid = bid;
  r.ask = ask;
  return r;
}

}  // namespace

TEST_CASE("timestamps") {
  REQUIRE(format_timestamp(ts("2013-11-01T09:10")) == "2013-11-01T09:10:00.000");
  REQUIRE(format_timestamp(ts("2013-11-01T09:10:07.5")) == "2013-11-01T09:10:07.500");
  REQUIRE(format_timestamp(ts("2013-11-01T16:49:59.123"), false) == "2013-11-01T16:49");
  for (const char* bad : {"2013-11-01 09:10", "2013-13-01T09:10", "2013-11-01T24:00",
                          "2013-11-01T09:10:07.12345", "2013-02-30T09:10", "garbage"})
    REQUIRE_FALSE(parse_timestamp(bad));
}

TEST_CASE("tick parsing") {
  REQUIRE(parse("").records.empty());

  auto r = parse("2013-11-01T09:10:00,QUOTE,,100,102,\n");
  REQUIRE(r.records.size() == 1);
  REQUIRE(r.records[0].mid() == 101.0);
  REQUIRE_FALSE(r.records[0].price);
  REQUIRE(r.errors.empty());

  auto sorted = parse(
      "2013-11-01T09:11:00,QUOTE,,1,3,\n"
      "2013-11-01T09:10:00,TRADE,2,,,10\n"
      "2013-11-01T09:11:00,AUCTION,,1,2,\n");
  REQUIRE(sorted.warnings.size() == 1);
  REQUIRE(sorted.records[0].kind == TickKind::Trade);
  REQUIRE(sorted.records[1].kind == TickKind::Quote);
  REQUIRE(sorted.records[2].kind == TickKind::AuctionQuote);

  auto bad = parse(
      "2013-11-01T09:10:00,QUOTE,,100,102,\n"
      "2013-11-01T09:10:01,QUOTE,,,102,\n"
      "2013-11-01T09:10:02,TRADE,-1,,,\n"
      "2013-11-01T09:10:03,BOGUS,1,,,\n"
      "not-a-time,QUOTE,,1,2,\n"
      "2013-11-01T09:10:04,QUOTE,,x,2,\n"
      "2013-11-01T09:10:05,QUOTE,,1,2\n"
      "2013-11-01T09:10:06,QUOTE,,1,2,\n");
  REQUIRE(bad.records.size() == 2);
  std::vector<std::size_t> lines;
  for (const auto& e : bad.errors) lines.push_back(e.line);
  REQUIRE(lines == std::vector<std::size_t>{3, 4, 5, 6, 7, 8});

  std::istringstream wrong("time,kind\n");
  REQUIRE_THROWS_AS(parse_ticks(wrong), DataError);
  std::istringstream crlf(std::string(kTickHeader) + "\r\n2013-11-01T09:10:00,QUOTE,,1,2,\r\n");
  REQUIRE(parse_ticks(crlf).records.size() == 1);
}

TEST_CASE("tick CSV round trip") {
  SynthOptions opt;
  opt.days = 1;
  opt.close = std::chrono::hours(9) + std::chrono::minutes(5);
  auto ticks = synth_ticks(opt, 3);
  std::ostringstream os;
  write_ticks_csv(os, ticks);
  std::istringstream in(os.str());
  auto back = parse_ticks(in);
  REQUIRE(back.errors.empty());
  REQUIRE(back.records == ticks);
}

TEST_CASE("minute bars") {
  std::vector<TickRecord> t{
      quote("2013-11-01T09:05:00", 1, 3),   // before the window
      quote("2013-11-01T09:12:10", 10, 12),
      quote("2013-11-01T09:12:50", 20, 22),  // last in the minute wins
      quote("2013-11-01T09:14:00", 30, 32),
      quote("2013-11-01T16:55:00", 99, 101),  // after the window
  };
  TickRecord trade;
  trade.timestamp = ts("2013-11-01T09:13:00");
  trade.kind = TickKind::Trade;
  trade.price = 500;
  t.push_back(trade);
  std::stable_sort(t.begin(), t.end(), [](auto& a, auto& b) { return a.timestamp < b.timestamp; });

  auto res = bars_from_quotes(t);
  REQUIRE(res.bars.size() == 460);
  REQUIRE(res.bars[0].minute == std::chrono::floor<std::chrono::minutes>(ts("2013-11-01T09:10")));
  REQUIRE(res.bars[0].mid_price == 11.0);  // backfilled from the first quote
  REQUIRE(res.bars[1].mid_price == 11.0);
  REQUIRE(res.bars[2].mid_price == 21.0);
  REQUIRE(res.bars[3].mid_price == 21.0);  // trades are ignored
  REQUIRE(res.bars[4].mid_price == 31.0);
  REQUIRE(res.bars.back().mid_price == 31.0);
  REQUIRE(res.bars.back().minute ==
          std::chrono::floor<std::chrono::minutes>(ts("2013-11-01T16:49")));

  std::vector<TickRecord> empty_day{quote("2013-11-04T08:00:00", 1, 2)};
  auto skipped = bars_from_quotes(empty_day);
  REQUIRE(skipped.bars.empty());
  REQUIRE(skipped.warnings.size() == 1);
}

TEST_CASE("five synthetic days give 2300 bars") {
  auto ticks = synth_ticks({}, 11);
  std::set<std::chrono::sys_days> days;
  for (const auto& t : ticks) {
    REQUIRE(*t.bid < *t.ask);
    days.insert(std::chrono::floor<std::chrono::days>(t.timestamp));
  }
  REQUIRE(days.size() == 5);
  for (auto d : days) {
    std::chrono::weekday wd(d);
    REQUIRE((wd != std::chrono::Saturday && wd != std::chrono::Sunday));
  }
  auto bars = bars_from_quotes(ticks);
  REQUIRE(bars.bars.size() == 2300);
  REQUIRE(bars.warnings.empty());

  std::ostringstream os;
  write_bars_csv(os, bars.bars);
  std::istringstream in(os.str());
  auto back = read_bars_csv(in);
  REQUIRE(back == bars.bars);
  REQUIRE(bar_prices(back).size() == 2300);

  std::istringstream broken(std::string(kBarHeader) + "\n2013-11-01T09:10,1\n2013-11-01T09:11,-1\n");
  REQUIRE_THROWS_WITH(read_bars_csv(broken), Catch::Matchers::ContainsSubstring("line 3"));
}

TEST_CASE("synthetic ticks") {
  SynthOptions flat;
  flat.volatility = 0.0;
  flat.days = 1;
  auto t = synth_ticks(flat, 1);
  REQUIRE(t.size() == 8u * 3600u);
  for (const auto& r : t) REQUIRE(r.mid() == Approx(238.75).epsilon(1e-12));
  REQUIRE(synth_ticks({}, 4) == synth_ticks({}, 4));
  REQUIRE(synth_ticks({}, 4) != synth_ticks({}, 5));
}

TEST_CASE("Tukey interval") {
  std::vector<double> x{7, 1, 100, 3, 2, 6, 4, 5};
  auto t = tukey_interval(x);
  REQUIRE(t.q1 == Approx(2.75));
  REQUIRE(t.q3 == Approx(6.25));
  REQUIRE(t.lower == Approx(-2.5));
  REQUIRE(t.upper == Approx(11.5));
  REQUIRE(t.is_outlier(100));
  REQUIRE_FALSE(t.is_outlier(11.5));
  REQUIRE(t.is_outlier(-2.6));

  std::vector<double> c(10, 238.75);
  auto k = tukey_interval(c);
  REQUIRE(k.lower == 238.75);
  REQUIRE(k.upper == 238.75);
  REQUIRE_FALSE(k.is_outlier(238.75));
  REQUIRE_THROWS_AS(tukey_interval(std::vector<double>{1, 2, 3}), ValidationError);

  // A synthetic week centred on the initial mid keeps it inside the interval.
  auto bars = bars_from_quotes(synth_ticks({}, 11)).bars;
  auto w = tukey_interval(bar_prices(bars));
  REQUIRE_FALSE(w.is_outlier(238.75));
}
