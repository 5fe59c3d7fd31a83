#pragma once

// Objective surfaces over parameter pairs: Sobol sampling of a rectangle,
// parallel objective evaluation, and piecewise-cubic interpolation of the
// scattered results onto a regular grid.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "abmcal/common.hpp"
#include "abmcal/engine.hpp"
#include "abmcal/objective.hpp"

namespace abmcal {

// ---------------------------------------------------------------------------
// Sobol sequence

/// First n points of the two-dimensional Sobol sequence in Gray-code order,
/// skipping the origin. The first coordinate uses the van der Corput
/// direction numbers and the second those of the primitive polynomial x + 1
/// with m_1 = 1.
inline std::vector<std::array<double, 2>> sobol_2d(std::size_t n) {
  if (n == 0) throw ValidationError("sobol_2d needs n >= 1");
  if (n >= (std::size_t{1} << 32)) throw ValidationError("sobol_2d supports n < 2^32");
  std::array<std::uint32_t, 32> v1{}, v2{};
  for (int k = 0; k < 32; ++k) v1[k] = std::uint32_t{1} << (31 - k);
  v2[0] = std::uint32_t{1} << 31;
  for (int k = 1; k < 32; ++k) v2[k] = v2[k - 1] ^ (v2[k - 1] >> 1);

  std::vector<std::array<double, 2>> out;
  out.reserve(n);
  std::uint32_t x = 0, y = 0;
  constexpr double scale = 1.0 / 4294967296.0;
  for (std::uint64_t i = 0; i < n; ++i) {
    int c = std::countr_one(static_cast<std::uint32_t>(i));
    x ^= v1[c];
    y ^= v2[c];
    out.push_back({x * scale, y * scale});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Surface evaluation

struct SurfaceSpec {
  std::string param_x;
  std::string param_y;
  std::array<double, 2> range_x{};
  std::array<double, 2> range_y{};
  std::size_t n_points = 1000;
  int replications = 5;

  void validate() const {
    if (!is_param_name(param_x) || !is_param_name(param_y))
      throw ValidationError("unknown surface parameter");
    if (param_x == param_y) throw ValidationError("surface parameters must differ");
    if (!(range_x[0] < range_x[1]) || !(range_y[0] < range_y[1]))
      throw ValidationError("surface ranges must be non-degenerate");
    if (n_points < 1) throw ValidationError("surface needs at least one point");
    if (replications < 1) throw ValidationError("replications must be >= 1");
  }
};

struct SurfacePoint {
  double x = 0.0;
  double y = 0.0;
  double f = 0.0;
};

inline double map_unit(double u, std::array<double, 2> range, bool integer) {
  double v = range[0] + u * (range[1] - range[0]);
  return integer ? std::clamp(std::round(v), std::ceil(range[0]), std::floor(range[1])) : v;
}

/// Evaluates the objective at the mapped Sobol points, holding every other
/// parameter at the objective's fixed values. Integer-valued parameters are
/// rounded before evaluation and reported rounded.
inline std::vector<SurfacePoint> evaluate_surface(const SurfaceSpec& surface,
                                                  const ObjectiveSpec& base,
                                                  std::uint64_t master_seed,
                                                  std::size_t threads = 1) {
  surface.validate();
  ObjectiveSpec spec = base;
  spec.free = {{surface.param_x, surface.range_x[0], surface.range_x[1]},
               {surface.param_y, surface.range_y[0], surface.range_y[1]}};
  spec.replications = surface.replications;
  MsmObjective obj(spec, master_seed, threads);
  bool ix = is_integer_param(surface.param_x);
  bool iy = is_integer_param(surface.param_y);
  std::vector<std::vector<double>> thetas;
  for (auto [u, v] : sobol_2d(surface.n_points))
    thetas.push_back({map_unit(u, surface.range_x, ix), map_unit(v, surface.range_y, iy)});
  auto f = obj.evaluate_batch(thetas);
  std::vector<SurfacePoint> out;
  for (std::size_t i = 0; i < thetas.size(); ++i) out.push_back({thetas[i][0], thetas[i][1], f[i]});
  return out;
}

/// One-parameter sweep at n evenly spaced points of [lo, hi].
inline std::vector<std::pair<double, double>> evaluate_line(const std::string& param, double lo,
                                                            double hi, std::size_t n,
                                                            const ObjectiveSpec& base,
                                                            std::uint64_t master_seed,
                                                            std::size_t threads = 1) {
  if (!is_param_name(param)) throw ValidationError("unknown parameter '" + param + "'");
  if (!(lo < hi) || n < 2) throw ValidationError("line sweep needs lo < hi and n >= 2");
  ObjectiveSpec spec = base;
  spec.free = {{param, lo, hi}};
  MsmObjective obj(spec, master_seed, threads);
  bool integer = is_integer_param(param);
  std::vector<std::vector<double>> thetas;
  for (std::size_t i = 0; i < n; ++i)
    thetas.push_back(
        {map_unit(static_cast<double>(i) / static_cast<double>(n - 1), {lo, hi}, integer)});
  auto f = obj.evaluate_batch(thetas);
  std::vector<std::pair<double, double>> out;
  for (std::size_t i = 0; i < n; ++i) out.emplace_back(thetas[i][0], f[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Delaunay triangulation

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

using Triangle = std::array<int, 3>;

namespace detail {

inline double orient(const Vec2& a, const Vec2& b, const Vec2& c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

// Positive when d lies strictly inside the circumcircle of counter-clockwise
// triangle abc.
inline long double incircle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  long double adx = a.x - d.x, ady = a.y - d.y;
  long double bdx = b.x - d.x, bdy = b.y - d.y;
  long double cdx = c.x - d.x, cdy = c.y - d.y;
  long double ad = adx * adx + ady * ady;
  long double bd = bdx * bdx + bdy * bdy;
  long double cd = cdx * cdx + cdy * cdy;
  return adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx);
}

}  // namespace detail

/// Bowyer-Watson triangulation of distinct points. Triangles are returned
/// counter-clockwise with indices into `pts`.
inline std::vector<Triangle> delaunay(std::span<const Vec2> pts) {
  if (pts.size() < 3) throw ValidationError("triangulation needs at least 3 points");
  double xmin = pts[0].x, xmax = pts[0].x, ymin = pts[0].y, ymax = pts[0].y;
  for (const auto& p : pts) {
    xmin = std::min(xmin, p.x), xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y), ymax = std::max(ymax, p.y);
  }
  double span = std::max({xmax - xmin, ymax - ymin, 1e-300});
  double cx = 0.5 * (xmin + xmax), cy = 0.5 * (ymin + ymax);
  std::vector<Vec2> v(pts.begin(), pts.end());
  const int n = static_cast<int>(pts.size());
  v.push_back({cx - 100.0 * span, cy - 100.0 * span});
  v.push_back({cx + 100.0 * span, cy - 100.0 * span});
  v.push_back({cx, cy + 100.0 * span});

  std::vector<Triangle> tris{{n, n + 1, n + 2}};
  for (int p = 0; p < n; ++p) {
    std::vector<Triangle> keep, bad;
    std::map<std::pair<int, int>, int> edges;
    for (const auto& t : tris) {
      if (detail::incircle(v[t[0]], v[t[1]], v[t[2]], v[p]) > 0) {
        bad.push_back(t);
        for (int e = 0; e < 3; ++e) {
          int a = t[e], b = t[(e + 1) % 3];
          ++edges[{std::min(a, b), std::max(a, b)}];
        }
      } else {
        keep.push_back(t);
      }
    }
    // Cavity boundary edges keep the orientation they had in the removed
    // triangles, so joining them to p gives counter-clockwise triangles.
    for (const auto& t : bad) {
      for (int e = 0; e < 3; ++e) {
        int a = t[e], b = t[(e + 1) % 3];
        if (edges[{std::min(a, b), std::max(a, b)}] == 1) keep.push_back({a, b, p});
      }
    }
    tris = std::move(keep);
  }
  std::vector<Triangle> out;
  for (const auto& t : tris)
    if (t[0] < n && t[1] < n && t[2] < n && detail::orient(v[t[0]], v[t[1]], v[t[2]]) > 0)
      out.push_back(t);
  return out;
}

// ---------------------------------------------------------------------------
// Cubic interpolation

struct GridCell {
  double x = 0.0;
  double y = 0.0;
  double f = std::numeric_limits<double>::quiet_NaN();
  bool in_hull = false;
};

/// Piecewise-cubic interpolant over a Delaunay triangulation. Each triangle
/// carries a cubic Bezier patch whose edge control points come from vertex
/// gradients (local quadratic least-squares fits) and whose centre control
/// point is chosen so that quadratics are reproduced exactly. The patches
/// join continuously and pass through every sample.
class ScatteredCubic {
 public:
  explicit ScatteredCubic(std::span<const SurfacePoint> points) {
    // Merge exact duplicates by averaging f.
    std::map<std::pair<double, double>, std::pair<double, int>> merged;
    for (const auto& p : points) {
      if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.f))
        throw ValidationError("interpolation points must be finite");
      auto& [sum, count] = merged[{p.x, p.y}];
      sum += p.f;
      ++count;
    }
    if (merged.size() < 4) throw ValidationError("interpolation needs at least 4 distinct points");
    xmin_ = ymin_ = std::numeric_limits<double>::infinity();
    xmax_ = ymax_ = -std::numeric_limits<double>::infinity();
    for (const auto& [xy, sc] : merged) {
      xmin_ = std::min(xmin_, xy.first), xmax_ = std::max(xmax_, xy.first);
      ymin_ = std::min(ymin_, xy.second), ymax_ = std::max(ymax_, xy.second);
    }
    if (!(xmax_ > xmin_) || !(ymax_ > ymin_)) throw ValidationError("interpolation points are collinear");
    for (const auto& [xy, sc] : merged) {
      pts_.push_back(normalize(xy.first, xy.second));
      f_.push_back(sc.first / sc.second);
    }
    check_not_collinear();
    tris_ = delaunay(pts_);
    if (tris_.empty()) throw ValidationError("interpolation points are collinear");
    fit_gradients();
  }

  double xmin() const { return xmin_; }
  double xmax() const { return xmax_; }
  double ymin() const { return ymin_; }
  double ymax() const { return ymax_; }
  const std::vector<Triangle>& triangles() const { return tris_; }

  /// NaN outside the triangulated hull.
  double operator()(double x, double y) const {
    Vec2 q = normalize(x, y);
    for (const auto& t : tris_) {
      auto bc = barycentric(t, q);
      if (bc) return patch(t, *bc);
    }
    return std::numeric_limits<double>::quiet_NaN();
  }

 private:
  Vec2 normalize(double x, double y) const {
    return {(x - xmin_) / (xmax_ - xmin_), (y - ymin_) / (ymax_ - ymin_)};
  }

  void check_not_collinear() const {
    // The normalized bounding box is the unit square, so a tiny maximum
    // triangle area against the first extreme pair means collinearity.
    std::size_t a = 0, b = 0;
    double far = -1.0;
    for (std::size_t i = 1; i < pts_.size(); ++i) {
      double d = std::hypot(pts_[i].x - pts_[0].x, pts_[i].y - pts_[0].y);
      if (d > far) far = d, b = i;
    }
    double area = 0.0;
    for (const auto& p : pts_) area = std::max(area, std::abs(detail::orient(pts_[a], pts_[b], p)));
    if (area < 1e-12) throw ValidationError("interpolation points are collinear");
  }

  void fit_gradients() {
    const std::size_t n = pts_.size();
    const std::size_t k = std::min<std::size_t>(n - 1, 12);
    grad_.assign(n, Vec2{});
    std::vector<std::pair<double, std::size_t>> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double dx = pts_[j].x - pts_[i].x, dy = pts_[j].y - pts_[i].y;
        dist[j] = {j == i ? std::numeric_limits<double>::infinity() : dx * dx + dy * dy, j};
      }
      std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
      double h = std::sqrt(dist[k - 1].first);
      grad_[i] = fit_one(i, std::span(dist).first(k), h);
    }
  }

  // Weighted least squares for f(p) - f(p_i) over the neighbours, quadratic
  // when the neighbourhood supports it and linear otherwise.
  Vec2 fit_one(std::size_t i, std::span<const std::pair<double, std::size_t>> nb, double h) const {
    for (int cols : {5, 2}) {
      if (nb.size() < static_cast<std::size_t>(cols)) continue;
      Eigen::MatrixXd A(nb.size(), cols);
      Eigen::VectorXd rhs(nb.size());
      for (std::size_t r = 0; r < nb.size(); ++r) {
        std::size_t j = nb[r].second;
        double dx = (pts_[j].x - pts_[i].x) / h, dy = (pts_[j].y - pts_[i].y) / h;
        double w = 1.0 / (1.0 + dx * dx + dy * dy);
        A(static_cast<Eigen::Index>(r), 0) = w * dx;
        A(static_cast<Eigen::Index>(r), 1) = w * dy;
        if (cols == 5) {
          A(static_cast<Eigen::Index>(r), 2) = w * dx * dx;
          A(static_cast<Eigen::Index>(r), 3) = w * dx * dy;
          A(static_cast<Eigen::Index>(r), 4) = w * dy * dy;
        }
        rhs(static_cast<Eigen::Index>(r)) = w * (f_[j] - f_[i]);
      }
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
      qr.setThreshold(1e-10);
      if (qr.rank() < cols) continue;
      Eigen::VectorXd c = qr.solve(rhs);
      return {c(0) / h, c(1) / h};
    }
    return {};
  }

  std::optional<std::array<double, 3>> barycentric(const Triangle& t, const Vec2& q) const {
    const Vec2 &a = pts_[t[0]], &b = pts_[t[1]], &c = pts_[t[2]];
    double area = detail::orient(a, b, c);
    double u = detail::orient(q, b, c) / area;
    double v = detail::orient(a, q, c) / area;
    double w = 1.0 - u - v;
    constexpr double eps = -1e-12;
    if (u < eps || v < eps || w < eps) return std::nullopt;
    return std::array<double, 3>{u, v, w};
  }

  double patch(const Triangle& t, const std::array<double, 3>& bc) const {
    // Control net: vertex values, two points per edge, one centre point.
    auto edge = [&](int i, int j) {
      const Vec2 &p = pts_[t[i]], &q = pts_[t[j]];
      const Vec2& g = grad_[t[i]];
      return f_[t[i]] + ((q.x - p.x) * g.x + (q.y - p.y) * g.y) / 3.0;
    };
    double b300 = f_[t[0]], b030 = f_[t[1]], b003 = f_[t[2]];
    double b210 = edge(0, 1), b120 = edge(1, 0);
    double b021 = edge(1, 2), b012 = edge(2, 1);
    double b102 = edge(2, 0), b201 = edge(0, 2);
    double e = (b210 + b120 + b021 + b012 + b102 + b201) / 6.0;
    double vbar = (b300 + b030 + b003) / 3.0;
    double b111 = e + (e - vbar) / 2.0;
    auto [u, v, w] = bc;
    return b300 * u * u * u + b030 * v * v * v + b003 * w * w * w +
           3.0 * (b210 * u * u * v + b120 * u * v * v + b021 * v * v * w + b012 * v * w * w +
                  b102 * w * w * u + b201 * u * u * w) +
           6.0 * b111 * u * v * w;
  }

  double xmin_, xmax_, ymin_, ymax_;
  std::vector<Vec2> pts_;
  std::vector<double> f_;
  std::vector<Vec2> grad_;
  std::vector<Triangle> tris_;
};

/// resolution x resolution nodes spanning the bounding box of the points,
/// row-major with x varying fastest.
inline std::vector<GridCell> interpolate_grid(std::span<const SurfacePoint> points,
                                              std::size_t resolution) {
  if (resolution < 2) throw ValidationError("grid resolution must be >= 2");
  ScatteredCubic interp(points);
  std::vector<GridCell> out;
  out.reserve(resolution * resolution);
  double dr = static_cast<double>(resolution - 1);
  for (std::size_t j = 0; j < resolution; ++j) {
    double y = interp.ymin() + (interp.ymax() - interp.ymin()) * static_cast<double>(j) / dr;
    for (std::size_t i = 0; i < resolution; ++i) {
      double x = interp.xmin() + (interp.xmax() - interp.xmin()) * static_cast<double>(i) / dr;
      GridCell c{x, y, interp(x, y), false};
      c.in_hull = !std::isnan(c.f);
      out.push_back(c);
    }
  }
  return out;
}

inline void write_points_csv(std::ostream& os, std::span<const SurfacePoint> pts) {
  os << "x,y,f\n";
  for (const auto& p : pts)
    os << format_double(p.x) << ',' << format_double(p.y) << ',' << format_double(p.f) << '\n';
}

inline void write_grid_csv(std::ostream& os, std::span<const GridCell> grid) {
  os << "x,y,f_interp,in_hull\n";
  for (const auto& c : grid) {
    os << format_double(c.x) << ',' << format_double(c.y) << ',';
    if (c.in_hull) os << format_double(c.f);
    os << ',' << (c.in_hull ? 1 : 0) << '\n';
  }
}

}  // namespace abmcal
