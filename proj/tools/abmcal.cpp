// abmcal: simulate, calibrate and inspect the limit order book model.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "abmcal/dataio.hpp"
#include "abmcal/engine.hpp"
#include "abmcal/moments.hpp"
#include "abmcal/objective.hpp"
#include "abmcal/optimize.hpp"
#include "abmcal/surface.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace abmcal;

namespace {

constexpr const char* kVersion = "0.1.0";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fnv1a_hex(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ull;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return in;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  return out;
}

json read_json(const std::string& path) {
  auto in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("invalid JSON in '" + path + "': " + e.what());
  }
}

// Writes <path>.meta.json next to an output file. Contents depend only on the
// command's configuration so that reruns reproduce them byte for byte.
void write_meta(const fs::path& output, const std::string& command, std::uint64_t seed,
                const json& config) {
  json meta{{"tool", "abmcal"},
            {"version", kVersion},
            {"command", command},
            {"seed", seed},
            {"config_hash", fnv1a_hex(config.dump())},
            {"config", config}};
  auto out = open_out(fs::path(output.string() + ".meta.json"));
  out << meta.dump(2) << '\n';
}

ModelParams load_params(const std::string& path) {
  ModelParams p;
  if (path.empty()) return p;
  json j = read_json(path);
  if (j.is_object() && j.contains("params")) j = j.at("params");
  else if (j.is_object()) j.erase("bounds");
  from_json(j, p);
  validate(p);
  return p;
}

std::vector<double> load_bar_prices(const std::string& path) {
  auto in = open_in(path);
  auto bars = read_bars_csv(in);
  if (bars.size() < 100) throw DataError("'" + path + "' has too few bars to calibrate against");
  return bar_prices(bars);
}

// "delta,N_L" or "delta:1e-5:0.05,N_L"; configured bounds fill in names
// given without bounds.
std::vector<FreeParameter> parse_free(const std::string& spec, const json& config_bounds) {
  std::vector<FreeParameter> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    auto colon = item.find(':');
    std::string name = item.substr(0, colon);
    FreeParameter p = default_free_parameter(name);
    if (config_bounds.contains(name)) {
      auto b = config_bounds.at(name).get<std::vector<double>>();
      if (b.size() != 2) throw ValidationError("bounds for '" + name + "' need two values");
      p.lower = b[0], p.upper = b[1];
    }
    if (colon != std::string::npos) {
      auto rest = item.substr(colon + 1);
      auto colon2 = rest.find(':');
      if (colon2 == std::string::npos) throw UsageError("free parameter bounds need name:lo:hi");
      try {
        p.lower = std::stod(rest.substr(0, colon2));
        p.upper = std::stod(rest.substr(colon2 + 1));
      } catch (const std::exception&) {
        throw UsageError("bad bounds in '" + item + "'");
      }
    }
    out.push_back(p);
  }
  validate_free(out);
  return out;
}

json free_to_json(std::span<const FreeParameter> free) {
  json j = json::array();
  for (const auto& p : free) j.push_back({{"name", p.name}, {"lower", p.lower}, {"upper", p.upper}});
  return j;
}

json theta_to_json(std::span<const FreeParameter> free, const Point& theta) {
  json j = json::object();
  for (std::size_t i = 0; i < free.size(); ++i) j[free[i].name] = theta[i];
  return j;
}

std::string format_ci(const ConfidenceInterval& ci) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.6g ± %.3g", ci.mean, ci.half_width);
  return buf;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::uint64_t seed = 1;
  int days = 5;
  double volatility = 1e-4;
  double initial = 238.75;
};

void run_synth(const SynthArgs& a) {
  SynthOptions opt;
  opt.days = a.days;
  opt.volatility = a.volatility;
  opt.initial_mid = a.initial;
  auto ticks = synth_ticks(opt, a.seed);
  auto out = open_out(a.out);
  write_ticks_csv(out, ticks);
  write_meta(a.out, "synth", a.seed,
             {{"days", a.days}, {"volatility", a.volatility}, {"initial_mid", a.initial}});
  std::cout << "wrote " << ticks.size() << " ticks to " << a.out << '\n';
}

struct IngestArgs {
  std::string ticks;
  std::string out;
};

void run_ingest(const IngestArgs& a) {
  auto in = open_in(a.ticks);
  auto parsed = parse_ticks(in);
  for (const auto& e : parsed.errors)
    std::cerr << a.ticks << ':' << e.line << ": " << e.message << '\n';
  for (const auto& w : parsed.warnings) std::cerr << "warning: " << w << '\n';
  auto bars = bars_from_quotes(parsed.records);
  for (const auto& w : bars.warnings) std::cerr << "warning: " << w << '\n';
  if (bars.bars.empty()) throw DataError("no quotes inside the trading window");
  auto out = open_out(a.out);
  write_bars_csv(out, bars.bars);
  auto prices = bar_prices(bars.bars);
  json config{{"ticks", a.ticks}, {"rejected_rows", parsed.errors.size()}};
  if (prices.size() >= 4) {
    auto t = tukey_interval(prices);
    std::size_t outliers = 0;
    for (double p : prices) outliers += t.is_outlier(p);
    std::cout << "tukey interval [" << t.lower << ", " << t.upper << "], " << outliers
              << " outlying bars\n";
    config["tukey"] = {t.lower, t.upper};
  }
  write_meta(a.out, "ingest", 0, config);
  std::cout << "wrote " << bars.bars.size() << " bars to " << a.out << '\n';
}

struct WeightsArgs {
  std::string bars;
  std::string out;
  std::uint64_t seed = 1;
  std::size_t block = 100;
  std::size_t samples = 10000;
};

WeightMatrix compute_weights(const std::vector<double>& prices, std::size_t b, std::size_t n,
                             std::uint64_t seed, std::size_t threads) {
  Rng rng = make_stream(seed, Stream::Setup);
  auto cov = bootstrap_covariance(log_prices(prices), b, n, rng, {}, threads);
  auto w = weight_matrix(cov.cov);
  w.b = b, w.n = n, w.seed = seed;
  if (w.ill_conditioned)
    std::cerr << "warning: bootstrap covariance is ill-conditioned (condition number "
              << w.condition_number << ")\n";
  return w;
}

void run_weights(const WeightsArgs& a, std::size_t threads) {
  auto prices = load_bar_prices(a.bars);
  auto w = compute_weights(prices, a.block, a.samples, a.seed, threads);
  auto out = open_out(a.out);
  out << json(w).dump(2) << '\n';
  write_meta(a.out, "weights", a.seed, {{"bars", a.bars}, {"b", a.block}, {"n", a.samples}});
  std::cout << "condition number " << w.condition_number << '\n';
}

struct SimulateArgs {
  std::string config;
  std::string out;
  std::uint64_t seed = 1;
  bool as_json = false;
};

void run_simulate(const SimulateArgs& a) {
  auto p = load_params(a.config);
  auto r = run_simulation(p, a.seed);
  auto out = open_out(a.out);
  if (a.as_json)
    out << json(r).dump() << '\n';
  else
    write_csv(out, r);
  write_meta(a.out, "simulate", a.seed, {{"params", p}});
}

struct StylizedArgs {
  std::string config;
  std::string out_dir;
  std::uint64_t seed = 1;
  std::size_t reps = 50;
  int max_lag = 50;
};

void run_stylized(const StylizedArgs& a, std::size_t threads) {
  auto p = load_params(a.config);
  auto results = run_replications(p, a.seed, a.reps, threads);
  auto rep = stylized_report(results, a.max_lag);
  write_report(rep, a.out_dir);
  json summary{{"replications", a.reps},
               {"returns", rep.pooled_returns.size()},
               {"kurtosis", rep.kurtosis},
               {"acf_band", rep.acf_returns.band},
               {"acf_returns", rep.acf_returns.values},
               {"acf_abs_returns", rep.acf_abs_returns.values}};
  fs::path summary_path = fs::path(a.out_dir) / "summary.json";
  open_out(summary_path) << summary.dump(2) << '\n';
  write_meta(summary_path, "stylized", a.seed,
             {{"params", p}, {"replications", a.reps}, {"max_lag", a.max_lag}});
  std::cout << "kurtosis " << rep.kurtosis << ", |r| acf(1) " << rep.acf_abs_returns.values[1]
            << " (band " << rep.acf_abs_returns.band << ")\n";
}

struct CalibrateArgs {
  std::string method = "nm-ta";
  std::string bars;
  std::string config;
  std::string weights;
  std::string free = "delta,sigma_z,N_L,N_H";
  std::string out;
  std::uint64_t seed = 1;
  int iterations = 250;
  int generations = 100;
  int population = 100;
  int reps = 5;
  int runs = 1;
};

struct RunOutcome {
  std::uint64_t seed = 0;
  Point best_theta;
  double best_f = 0.0;
  int iterations = 0;
  std::vector<double> trace;
};

RunOutcome calibrate_once(const ObjectiveSpec& spec, const CalibrateArgs& a, std::uint64_t seed,
                          std::size_t threads) {
  MsmObjective obj(spec, derive_seed(seed, 1), threads);
  auto f = Evaluator::from(obj);
  Rng rng = make_stream(seed, Stream::Setup);
  auto box = bounds_of(spec.free);
  RunOutcome r;
  r.seed = seed;
  if (a.method == "nm-ta") {
    NmTaOptions opt;
    opt.iterations = a.iterations;
    opt.replications = a.reps;
    auto res = nm_ta_run(f, random_simplex(spec.free, rng), box, rng, opt);
    r.best_theta = res.best_theta;
    r.best_f = res.best_f;
    r.iterations = res.iterations;
    r.trace = res.trace;
  } else {
    GaOptions opt;
    opt.population = a.population;
    opt.generations = a.generations;
    opt.replications = a.reps;
    auto res = ga_run(f, random_population(spec.free, a.population, rng), box, rng, opt);
    r.best_theta = res.best_theta;
    r.best_f = res.best_f;
    r.iterations = a.generations;
    for (const auto& g : res.trace) r.trace.push_back(g.best);
  }
  return r;
}

void run_calibrate(const CalibrateArgs& a, std::size_t threads) {
  if (a.method != "nm-ta" && a.method != "ga")
    throw UsageError("--method must be nm-ta or ga");
  if (a.runs < 1 || a.reps < 1) throw UsageError("--runs and --reps must be >= 1");
  auto start = std::chrono::steady_clock::now();

  json config_json = a.config.empty() ? json::object() : read_json(a.config);
  json bounds = config_json.value("bounds", json::object());
  auto base = load_params(a.config);
  auto free = parse_free(a.free, bounds);
  auto prices = load_bar_prices(a.bars);

  WeightMatrix w;
  if (a.weights.empty()) {
    w = compute_weights(prices, 100, 10000, derive_seed(a.seed, 2), threads);
  } else {
    try {
      w = read_json(a.weights).get<WeightMatrix>();
    } catch (const json::exception& e) {
      throw DataError("invalid weight matrix file: " + std::string(e.what()));
    }
  }
  auto spec = make_objective_spec(prices, w, base, free, a.reps);

  std::vector<RunOutcome> runs;
  for (int k = 0; k < a.runs; ++k) {
    std::uint64_t seed = a.runs == 1 ? a.seed : derive_seed(a.seed, 100 + static_cast<std::uint64_t>(k));
    runs.push_back(calibrate_once(spec, a, seed, threads));
    std::cerr << "run " << k + 1 << "/" << a.runs << ": f = " << runs.back().best_f << '\n';
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < runs.size(); ++k)
    if (runs[k].best_f < runs[best].best_f) best = k;

  json result{{"method", a.method},
              {"free_params", free_to_json(free)},
              {"best_theta", theta_to_json(free, runs[best].best_theta)},
              {"best_f", runs[best].best_f},
              {"iterations", runs[best].iterations},
              {"trace", runs[best].trace},
              {"seed", a.seed}};
  if (a.runs > 1) {
    json all = json::array();
    for (const auto& r : runs)
      all.push_back({{"seed", r.seed},
                     {"best_theta", theta_to_json(free, r.best_theta)},
                     {"best_f", r.best_f},
                     {"iterations", r.iterations},
                     {"trace", r.trace}});
    result["runs"] = all;
    json cis = json::object();
    for (std::size_t i = 0; i < free.size(); ++i) {
      std::vector<double> xs;
      for (const auto& r : runs) xs.push_back(r.best_theta[i]);
      auto ci = confidence_interval(xs);
      cis[free[i].name] = {{"mean", ci.mean},
                           {"half_width", ci.half_width},
                           {"n", ci.n},
                           {"text", format_ci(ci)}};
    }
    result["confidence_intervals"] = cis;
  }
  result["wall_time_s"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  auto out = open_out(a.out);
  out << result.dump(2) << '\n';
  write_meta(a.out, "calibrate", a.seed,
             {{"bars", a.bars},
              {"weights", a.weights},
              {"params", base},
              {"free_params", free_to_json(free)},
              {"method", a.method},
              {"iterations", a.iterations},
              {"generations", a.generations},
              {"population", a.population},
              {"replications", a.reps},
              {"runs", a.runs}});
  std::cout << "best f " << runs[best].best_f << " at " << result["best_theta"].dump() << '\n';
}

struct SurfaceArgs {
  std::string bars;
  std::string config;
  std::string weights;
  std::string out;
  std::string grid_out;
  std::string x = "N_L";
  std::string y = "N_H";
  std::vector<double> x_range{100, 2000};
  std::vector<double> y_range{100, 2000};
  std::size_t points = 1000;
  std::size_t grid = 50;
  int reps = 5;
  std::uint64_t seed = 1;
};

void run_surface(const SurfaceArgs& a, std::size_t threads) {
  auto base = load_params(a.config);
  auto prices = load_bar_prices(a.bars);
  WeightMatrix w = a.weights.empty()
                       ? compute_weights(prices, 100, 10000, derive_seed(a.seed, 2), threads)
                       : read_json(a.weights).get<WeightMatrix>();
  auto spec = make_objective_spec(prices, w, base, {{a.x, a.x_range[0], a.x_range[1]}}, a.reps);
  SurfaceSpec s{a.x, a.y, {a.x_range[0], a.x_range[1]}, {a.y_range[0], a.y_range[1]}, a.points,
                a.reps};
  auto pts = evaluate_surface(s, spec, a.seed, threads);
  json config{{"bars", a.bars},         {"weights", a.weights}, {"params", base},
              {"x", a.x},               {"y", a.y},             {"x_range", a.x_range},
              {"y_range", a.y_range},   {"points", a.points},   {"replications", a.reps}};
  {
    auto out = open_out(a.out);
    write_points_csv(out, pts);
  }
  write_meta(a.out, "surface", a.seed, config);
  if (!a.grid_out.empty()) {
    auto grid = interpolate_grid(pts, a.grid);
    auto out = open_out(a.grid_out);
    write_grid_csv(out, grid);
    config["grid"] = a.grid;
    write_meta(a.grid_out, "surface", a.seed, config);
  }
  double lo = pts[0].f, hi = pts[0].f;
  for (const auto& p : pts) lo = std::min(lo, p.f), hi = std::max(hi, p.f);
  std::cout << "objective range [" << lo << ", " << hi << "] over " << pts.size() << " points\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulation and calibration of a limit order book agent-based model"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  app.set_version_flag("--version", kVersion);
  std::size_t threads = default_thread_count();
  app.add_option("--threads", threads, "Worker threads for objective and surface evaluation")
      ->check(CLI::PositiveNumber);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Write a synthetic tick CSV");
  c_synth->add_option("--out", synth.out, "Output tick CSV")->required();
  c_synth->add_option("--seed", synth.seed, "Random seed");
  c_synth->add_option("--days", synth.days, "Number of weekdays")->check(CLI::NonNegativeNumber);
  c_synth->add_option("--volatility", synth.volatility, "Per-second log-mid standard deviation");
  c_synth->add_option("--initial-mid", synth.initial, "Mid price at the first quote");

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Aggregate tick quotes into one-minute mid-price bars");
  c_ingest->add_option("--ticks", ingest.ticks, "Input tick CSV")->required();
  c_ingest->add_option("--out", ingest.out, "Output bar CSV")->required();

  WeightsArgs weights;
  auto* c_weights = app.add_subcommand("weights", "Estimate the moment weight matrix by block bootstrap");
  c_weights->add_option("--bars", weights.bars, "Input bar CSV")->required();
  c_weights->add_option("--out", weights.out, "Output weight matrix JSON")->required();
  c_weights->add_option("--seed", weights.seed, "Random seed");
  c_weights->add_option("--block", weights.block, "Bootstrap block length")->check(CLI::PositiveNumber);
  c_weights->add_option("--samples", weights.samples, "Bootstrap sample count")
      ->check(CLI::Range(2, 100000000));

  SimulateArgs simulate;
  auto* c_sim = app.add_subcommand("simulate", "Run one simulation");
  c_sim->add_option("--config", simulate.config, "Model parameter JSON (defaults if omitted)");
  c_sim->add_option("--out", simulate.out, "Output CSV")->required();
  c_sim->add_option("--seed", simulate.seed, "Random seed");
  c_sim->add_flag("--json", simulate.as_json, "Write JSON instead of CSV");

  StylizedArgs stylized;
  auto* c_sty = app.add_subcommand("stylized", "Pooled return statistics over replications");
  c_sty->add_option("--config", stylized.config, "Model parameter JSON (defaults if omitted)");
  c_sty->add_option("--out-dir", stylized.out_dir, "Output directory")->required();
  c_sty->add_option("--seed", stylized.seed, "Master seed");
  c_sty->add_option("--reps", stylized.reps, "Replications")->check(CLI::PositiveNumber);
  c_sty->add_option("--max-lag", stylized.max_lag, "Largest ACF lag")->check(CLI::PositiveNumber);

  CalibrateArgs cal;
  auto* c_cal = app.add_subcommand("calibrate", "Estimate free parameters by simulated moments");
  c_cal->add_option("--method", cal.method, "nm-ta or ga")
      ->check(CLI::IsMember({"nm-ta", "ga"}));
  c_cal->add_option("--bars", cal.bars, "Observed bar CSV")->required();
  c_cal->add_option("--config", cal.config,
                    "Parameter JSON, either flat or {\"params\": {...}, \"bounds\": {name: [lo, hi]}}");
  c_cal->add_option("--weights", cal.weights, "Weight matrix JSON (bootstrapped from --bars if omitted)");
  c_cal->add_option("--free", cal.free, "Comma-separated free parameters, each optionally name:lo:hi");
  c_cal->add_option("--iters", cal.iterations, "Simplex iterations")->check(CLI::NonNegativeNumber);
  c_cal->add_option("--generations", cal.generations, "GA generations")->check(CLI::NonNegativeNumber);
  c_cal->add_option("--pop", cal.population, "GA population size")->check(CLI::PositiveNumber);
  c_cal->add_option("--reps", cal.reps, "Simulations per objective evaluation")
      ->check(CLI::PositiveNumber);
  c_cal->add_option("--runs", cal.runs, "Independent runs; more than one adds confidence intervals")
      ->check(CLI::PositiveNumber);
  c_cal->add_option("--seed", cal.seed, "Master seed");
  c_cal->add_option("--out", cal.out, "Output result JSON")->required();

  SurfaceArgs surf;
  auto* c_surf = app.add_subcommand("surface", "Objective surface over two parameters");
  c_surf->add_option("--bars", surf.bars, "Observed bar CSV")->required();
  c_surf->add_option("--config", surf.config, "Model parameter JSON (defaults if omitted)");
  c_surf->add_option("--weights", surf.weights, "Weight matrix JSON (bootstrapped if omitted)");
  c_surf->add_option("--x", surf.x, "First parameter");
  c_surf->add_option("--y", surf.y, "Second parameter");
  c_surf->add_option("--x-range", surf.x_range, "Range of the first parameter")->expected(2);
  c_surf->add_option("--y-range", surf.y_range, "Range of the second parameter")->expected(2);
  c_surf->add_option("--points", surf.points, "Sobol points")->check(CLI::PositiveNumber);
  c_surf->add_option("--reps", surf.reps, "Simulations per point")->check(CLI::PositiveNumber);
  c_surf->add_option("--grid", surf.grid, "Interpolation grid resolution")->check(CLI::Range(2, 10000));
  c_surf->add_option("--grid-out", surf.grid_out, "Interpolated grid CSV");
  c_surf->add_option("--seed", surf.seed, "Master seed");
  c_surf->add_option("--out", surf.out, "Output point CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*c_synth) run_synth(synth);
    else if (*c_ingest) run_ingest(ingest);
    else if (*c_weights) run_weights(weights, threads);
    else if (*c_sim) run_simulate(simulate);
    else if (*c_sty) run_stylized(stylized, threads);
    else if (*c_cal) run_calibrate(cal, threads);
    else if (*c_surf) run_surface(surf, threads);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n' << app.help();
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
