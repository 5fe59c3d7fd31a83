#pragma once

#include <array>
#include <cmath>
#include <string>
#include <string_view>

#include <json.hpp>

#include "abmcal/common.hpp"

namespace abmcal {

/// Full parameter set of the high/low-frequency trader model, including the
/// two seed prices and the initial fundamental value.
struct ModelParams {
  int T = 1200;
  int N_L = 10000;
  int N_H = 100;
  double theta = 20.0;
  double theta_min = 10.0;
  double theta_max = 40.0;
  double alpha_c = 0.04;
  double sigma_c = 0.05;
  double alpha_f = 0.04;
  double sigma_f = 0.01;
  double sigma_y = 0.01;
  double delta = 0.0001;
  double sigma_z = 0.01;
  double zeta = 1.0;
  int gamma_L = 20;
  int gamma_H = 1;
  double eta_min = 0.0;
  double eta_max = 0.2;
  double lambda = 0.625;
  double kappa_min = 0.0;
  double kappa_max = 0.01;
  double P0 = 100.0;
  double P1 = 100.0;
  double F0 = 100.0;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Values used for stylized-fact replication.
inline ModelParams stylized_defaults() { return ModelParams{}; }

inline const std::array<std::string_view, 24>& param_names() {
  static const std::array<std::string_view, 24> names{
      "T",       "N_L",     "N_H",       "theta",     "theta_min", "theta_max",
      "alpha_c", "sigma_c", "alpha_f",   "sigma_f",   "sigma_y",   "delta",
      "sigma_z", "zeta",    "gamma_L",   "gamma_H",   "eta_min",   "eta_max",
      "lambda",  "kappa_min", "kappa_max", "P0",      "P1",        "F0"};
  return names;
}

inline bool is_integer_param(std::string_view name) {
  return name == "T" || name == "N_L" || name == "N_H" || name == "gamma_L" ||
         name == "gamma_H";
}

namespace detail {

template <typename Fn>
decltype(auto) visit_param(ModelParams& p, std::string_view name, Fn&& fn) {
#define ABMCAL_FIELD(f) \
  if (name == #f) return fn(p.f);
  ABMCAL_FIELD(T) ABMCAL_FIELD(N_L) ABMCAL_FIELD(N_H)
  ABMCAL_FIELD(theta) ABMCAL_FIELD(theta_min) ABMCAL_FIELD(theta_max)
  ABMCAL_FIELD(alpha_c) ABMCAL_FIELD(sigma_c) ABMCAL_FIELD(alpha_f)
  ABMCAL_FIELD(sigma_f) ABMCAL_FIELD(sigma_y) ABMCAL_FIELD(delta)
  ABMCAL_FIELD(sigma_z) ABMCAL_FIELD(zeta) ABMCAL_FIELD(gamma_L)
  ABMCAL_FIELD(gamma_H) ABMCAL_FIELD(eta_min) ABMCAL_FIELD(eta_max)
  ABMCAL_FIELD(lambda) ABMCAL_FIELD(kappa_min) ABMCAL_FIELD(kappa_max)
  ABMCAL_FIELD(P0) ABMCAL_FIELD(P1) ABMCAL_FIELD(F0)
#undef ABMCAL_FIELD
  throw ValidationError("unknown parameter '" + std::string(name) + "'");
}

}  // namespace detail

inline bool is_param_name(std::string_view name) {
  for (auto n : param_names())
    if (n == name) return true;
  return false;
}

inline double get_param(const ModelParams& p, std::string_view name) {
  auto copy = p;
  return detail::visit_param(copy, name, [](auto& v) { return static_cast<double>(v); });
}

/// Integer-valued fields are rounded to the nearest integer.
inline void set_param(ModelParams& p, std::string_view name, double value) {
  detail::visit_param(p, name, [value](auto& v) {
    using V = std::remove_reference_t<decltype(v)>;
    if constexpr (std::is_integral_v<V>)
      v = static_cast<V>(std::lround(value));
    else
      v = value;
  });
}

/// Throws ValidationError naming the first violated constraint.
inline void validate(const ModelParams& p) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ValidationError(std::string("invalid parameters: ") + what);
  };
  require(p.T >= 1, "T >= 1");
  require(p.N_L >= 1, "N_L >= 1");
  require(p.N_H >= 0, "N_H >= 0");
  require(p.theta_min >= 1.0, "theta_min >= 1");
  require(p.theta_min <= p.theta && p.theta <= p.theta_max,
          "theta_min <= theta <= theta_max");
  require(p.alpha_c > 0.0 && p.alpha_c < 1.0, "0 < alpha_c < 1");
  require(p.alpha_f > 0.0 && p.alpha_f < 1.0, "0 < alpha_f < 1");
  require(p.sigma_c >= 0.0 && p.sigma_f >= 0.0 && p.sigma_y >= 0.0 && p.sigma_z >= 0.0,
          "sigma_* >= 0");
  require(p.delta > 0.0, "delta > 0");
  require(p.zeta > 0.0, "zeta > 0");
  require(p.gamma_H >= 1 && p.gamma_H < p.gamma_L, "1 <= gamma_H < gamma_L");
  require(p.eta_min >= 0.0 && p.eta_min <= p.eta_max, "0 <= eta_min <= eta_max");
  require(p.kappa_min >= 0.0 && p.kappa_min <= p.kappa_max && p.kappa_max < 1.0,
          "0 <= kappa_min <= kappa_max < 1");
  require(p.lambda > 0.0 && p.lambda < 1.0, "0 < lambda < 1");
  require(p.P0 > 0.0 && p.P1 > 0.0 && p.F0 > 0.0, "P0, P1, F0 > 0");
  for (auto n : param_names())
    require(std::isfinite(get_param(p, n)), "all parameters finite");
}

inline void to_json(nlohmann::json& j, const ModelParams& p) {
  j = nlohmann::json::object();
  auto copy = p;
  for (auto n : param_names())
    detail::visit_param(copy, n, [&](auto& v) { j[std::string(n)] = v; });
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, ModelParams& p) {
  if (!j.is_object()) throw ValidationError("parameter JSON must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!is_param_name(key)) throw ValidationError("unknown parameter '" + key + "'");
    if (!value.is_number()) throw ValidationError("parameter '" + key + "' must be numeric");
    detail::visit_param(p, key, [&](auto& v) {
      using V = std::remove_reference_t<decltype(v)>;
      if constexpr (std::is_integral_v<V>) {
        double d = value.get<double>();
        if (d != std::round(d))
          throw ValidationError("parameter '" + key + "' must be an integer");
        v = static_cast<V>(d);
      } else {
        v = value.get<double>();
      }
    });
  }
}

}  // namespace abmcal
