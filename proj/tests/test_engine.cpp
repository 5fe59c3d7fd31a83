#include <catch_amalgamated.hpp>

#include <set>
#include <sstream>

#include "abmcal/engine.hpp"
#include "abmcal/moments.hpp"

using namespace abmcal;

namespace {

ModelParams small() {
  ModelParams p;
  p.T = 300;
  p.N_L = 500;
  p.N_H = 20;
  return p;
}

}  // namespace

TEST_CASE("simulation is deterministic in params and seed") {
  auto p = small();
  auto a = run_simulation(p, 42);
  auto b = run_simulation(p, 42);
  REQUIRE(a == b);
  auto c = run_simulation(p, 43);
  REQUIRE(a.market_prices != c.market_prices);
}

TEST_CASE("series layout and positivity") {
  auto p = small();
  auto r = run_simulation(p, 1);
  REQUIRE(r.market_prices.size() == static_cast<std::size_t>(p.T) + 1);
  REQUIRE(r.fundamentals.size() == static_cast<std::size_t>(p.T) + 1);
  REQUIRE(r.trades_per_session.size() == static_cast<std::size_t>(p.T) + 1);
  REQUIRE(r.session_prices().size() == static_cast<std::size_t>(p.T));
  REQUIRE(r.market_prices[0] == p.P1);
  REQUIRE(r.fundamentals[0] == p.F0);
  for (double v : r.market_prices) REQUIRE(v > 0.0);
  REQUIRE(r.seed == 1);
}

TEST_CASE("no forcing keeps the price at its initial value") {
  ModelParams p;
  p.T = 100;
  p.N_L = 200;
  p.N_H = 0;
  p.sigma_c = p.sigma_f = p.sigma_y = p.sigma_z = 0.0;
  p.delta = 1e-12;  // must be positive; small enough that no sell orders appear
  auto r = run_simulation(p, 3);
  for (double v : r.session_prices()) REQUIRE(v == p.P0);
}

TEST_CASE("invalid parameters are rejected before simulating") {
  ModelParams p = small();
  p.alpha_c = 2.0;
  EventLog log;
  REQUIRE_THROWS_AS(run_simulation(p, 1, &log), ValidationError);
  REQUIRE(log.empty());
}

TEST_CASE("replication harness") {
  auto p = small();
  p.T = 150;
  auto one = run_replications(p, 9, 1);
  REQUIRE(one.size() == 1);
  REQUIRE(one[0] == run_simulation(p, replication_seed(9, 0)));

  auto serial = run_replications(p, 9, 5, 1);
  auto parallel = run_replications(p, 9, 5, 4);
  REQUIRE(serial == parallel);

  std::set<std::uint64_t> seeds;
  for (std::size_t k = 0; k < 10000; ++k) seeds.insert(replication_seed(9, k));
  REQUIRE(seeds.size() == 10000);
  REQUIRE_THROWS_AS(run_replications(p, 9, 0), ValidationError);
}

TEST_CASE("session event ordering") {
  auto p = small();
  p.T = 60;
  p.eta_max = 0.001;  // make HF traders active often
  EventLog log;
  run_simulation(p, 5, &log);

  int session1_lf = 0, session1_hf = 0, hf_total = 0;
  for (const auto& e : log) {
    if (e.session == 1 && e.kind == EngineEvent::Kind::LfOrderAttempt) ++session1_lf;
    if (e.session == 1 && e.kind == EngineEvent::Kind::HfOrderAttempt) ++session1_hf;
    if (e.kind == EngineEvent::Kind::HfOrderAttempt) ++hf_total;
  }
  REQUIRE(session1_lf == p.N_L);
  REQUIRE(session1_hf == 0);
  REQUIRE(hf_total > 0);

  // Within a session: start, LF attempts, HF attempts, clearing.
  int session = 0;
  int stage = 0;
  for (const auto& e : log) {
    int s = 0;
    switch (e.kind) {
      case EngineEvent::Kind::SessionStart: s = 0; break;
      case EngineEvent::Kind::LfOrderAttempt: s = 1; break;
      case EngineEvent::Kind::HfOrderAttempt: s = 2; break;
      case EngineEvent::Kind::Clearing: s = 3; break;
    }
    if (s == 0) {
      REQUIRE(e.session == session + 1);
      session = e.session;
      stage = 0;
      continue;
    }
    REQUIRE(e.session == session);
    REQUIRE(s >= stage);
    stage = s;
  }
  REQUIRE(session == p.T);
}

TEST_CASE("without HF traders the LF dynamics are unchanged") {
  auto p = small();
  p.N_H = 0;
  auto none = run_simulation(p, 17);
  auto q = p;
  q.N_H = 50;
  q.eta_min = q.eta_max = 1e9;  // thresholds that are never crossed
  auto dormant = run_simulation(q, 17);
  REQUIRE(none.market_prices == dormant.market_prices);
  REQUIRE(none.trades_per_session == dormant.trades_per_session);
}

TEST_CASE("LF-only runs still trade and stay positive") {
  auto p = small();
  p.N_H = 0;
  auto r = run_simulation(p, 2);
  int trades = 0;
  for (int c : r.trades_per_session) trades += c;
  REQUIRE(trades > 0);
}

TEST_CASE("Table 1 dynamics are fat-tailed with clustered volatility") {
  ModelParams p;
  p.N_L = 1000;
  auto results = run_replications(p, 2024, 5);
  auto rep = stylized_report(results, 20);
  REQUIRE(rep.kurtosis > 3.0);
  REQUIRE(rep.acf_abs_returns.values[1] > rep.acf_abs_returns.band);
}

TEST_CASE("CSV and JSON output") {
  auto p = small();
  p.T = 10;
  auto r = run_simulation(p, 8);
  std::ostringstream os;
  write_csv(os, r);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  REQUIRE(line == "session,market_price,fundamental,trade_count");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  REQUIRE(rows == p.T + 1);

  nlohmann::json j = r;
  REQUIRE(j.get<SimulationResult>() == r);
  REQUIRE(format_double(0.1) == "0.1");
}
