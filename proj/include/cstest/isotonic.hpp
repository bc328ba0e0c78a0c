#pragma once

// Greatest convex minorant (lower convex hull) of a cusum diagram and its
// left-continuous slope; pool-adjacent-violators as an independent route.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace cstest {

struct CusumPoint {
  double x = 0.0;
  double y = 0.0;
};

struct CusumDiagram {
  std::vector<CusumPoint> points;

  // (0,0) followed by the running sums of (dx, dy).
  static CusumDiagram from_increments(std::span<const double> dx, std::span<const double> dy) {
    if (dx.size() != dy.size()) throw std::invalid_argument("cusum increments differ in length");
    CusumDiagram d;
    d.points.reserve(dx.size() + 1);
    d.points.push_back({0.0, 0.0});
    double x = 0.0, y = 0.0;
    for (std::size_t i = 0; i < dx.size(); ++i) {
      x += dx[i];
      y += dy[i];
      d.points.push_back({x, y});
    }
    return d;
  }
};

struct ConvexMinorant {
  std::vector<CusumPoint> vertices;
  std::vector<double> slopes;  // slopes[j] belongs to (vertices[j].x, vertices[j+1].x]

  double value(double x) const {
    if (x <= vertices.front().x) return vertices.front().y;
    if (x >= vertices.back().x) return vertices.back().y;
    const auto it = std::lower_bound(vertices.begin(), vertices.end(), x,
                                     [](const CusumPoint& p, double v) { return p.x < v; });
    const auto j = static_cast<std::size_t>(it - vertices.begin());
    return vertices[j - 1].y + slopes[j - 1] * (x - vertices[j - 1].x);
  }
};

namespace detail {

// true when b lies on or above the chord from a to c (b is not a strict hull vertex)
inline bool drop_middle(double ax, double ay, double bx, double by, double cx, double cy) {
  return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax) <= 0.0;
}

}  // namespace detail

// Monotone-chain lower hull; writes vertex indices into `hull`. x must be strictly increasing.
inline void gcm_indices(std::span<const double> x, std::span<const double> y, std::vector<std::size_t>& hull) {
  hull.clear();
  for (std::size_t i = 0; i < x.size(); ++i) {
    while (hull.size() >= 2) {
      const auto a = hull[hull.size() - 2];
      const auto b = hull.back();
      if (!detail::drop_middle(x[a], y[a], x[b], y[b], x[i], y[i])) break;
      hull.pop_back();
    }
    hull.push_back(i);
  }
}

inline ConvexMinorant gcm(const CusumDiagram& diagram) {
  const auto& p = diagram.points;
  if (p.size() < 2) throw std::invalid_argument("gcm: need at least two points");
  std::vector<double> x(p.size()), y(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    x[i] = p[i].x;
    y[i] = p[i].y;
    if (i > 0 && !(x[i] > x[i - 1])) throw std::invalid_argument("gcm: x must be strictly increasing");
  }
  std::vector<std::size_t> idx;
  gcm_indices(x, y, idx);
  ConvexMinorant m;
  m.vertices.reserve(idx.size());
  for (auto i : idx) m.vertices.push_back(p[i]);
  m.slopes.resize(idx.size() - 1);
  for (std::size_t j = 0; j + 1 < idx.size(); ++j) {
    const auto& a = m.vertices[j];
    const auto& b = m.vertices[j + 1];
    m.slopes[j] = (b.y - a.y) / (b.x - a.x);
  }
  return m;
}

// Slope of the minorant segment whose interval (v_{k-1}, v_k] contains x.
inline double left_slope(const ConvexMinorant& m, double x) {
  if (m.vertices.size() < 2 || !(x > m.vertices.front().x) || x > m.vertices.back().x) {
    throw std::out_of_range("left_slope: x outside (x0, x_last]");
  }
  const auto it = std::lower_bound(m.vertices.begin() + 1, m.vertices.end(), x,
                                   [](const CusumPoint& p, double v) { return p.x < v; });
  return m.slopes[static_cast<std::size_t>(it - m.vertices.begin()) - 1];
}

// Left slopes at every diagram point after the first, in one pass.
inline std::vector<double> left_slopes_at_points(const CusumDiagram& diagram) {
  const auto m = gcm(diagram);
  std::vector<double> out;
  out.reserve(diagram.points.size() - 1);
  std::size_t seg = 0;
  for (std::size_t i = 1; i < diagram.points.size(); ++i) {
    while (diagram.points[i].x > m.vertices[seg + 1].x) ++seg;
    out.push_back(m.slopes[seg]);
  }
  return out;
}

// Weighted isotonic (nondecreasing) regression by pool-adjacent-violators.
inline std::vector<double> pava_oracle(std::span<const double> weights, std::span<const double> values) {
  if (weights.size() != values.size()) throw std::invalid_argument("pava: size mismatch");
  struct Block {
    double w, mean;
    std::size_t len;
  };
  std::vector<Block> blocks;
  blocks.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(weights[i] > 0.0)) throw std::invalid_argument("pava: weights must be positive");
    blocks.push_back({weights[i], values[i], 1});
    while (blocks.size() >= 2 && blocks[blocks.size() - 2].mean >= blocks.back().mean) {
      const Block top = blocks.back();
      blocks.pop_back();
      auto& prev = blocks.back();
      const double w = prev.w + top.w;
      prev.mean = (prev.w * prev.mean + top.w * top.mean) / w;
      prev.w = w;
      prev.len += top.len;
    }
  }
  std::vector<double> out;
  out.reserve(values.size());
  for (const auto& b : blocks) out.insert(out.end(), b.len, b.mean);
  return out;
}

}  // namespace cstest
