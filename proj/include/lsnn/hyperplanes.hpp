#pragma once

// Breaking hyperplanes: zero sets of first- and second-layer pre-activations
// restricted to the unit square (or to a z = const slice of the unit cube).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "lsnn/errors.hpp"
#include "lsnn/nn_core.hpp"

namespace lsnn {

using Vertex2 = std::array<double, 2>;

struct Polyline {
  std::vector<Vertex2> vertices;
  int layer = 1;
  int unit = 0;
};

struct FirstLayerLines {
  std::vector<Polyline> lines;
  /// Units with a zero weight row and zero bias: the whole plane is a kink.
  std::vector<int> degenerate_units;
};

namespace detail {

inline void require_plane(const Network& net, std::optional<double> slice_z) {
  const int d = net.input_dim();
  if (d == 3 && !slice_z) throw ValidationError("3-D network needs a slice plane z = const");
  if (d != 2 && d != 3) throw ValidationError("breaking hyperplanes are extracted for 2-D or sliced 3-D inputs");
}

}  // namespace detail

/// Segments {w.x - b = 0} clipped to [0,1]^2; exact, not traced.
inline FirstLayerLines first_layer_lines(const Network& net, std::optional<double> slice_z = std::nullopt) {
  detail::require_plane(net, slice_z);
  FirstLayerLines out;
  const auto W = net.weights(1);
  const auto b = net.biases(1);
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    const double a = W(i, 0), c = W(i, 1);
    double rhs = b(i);
    if (net.input_dim() == 3) rhs -= W(i, 2) * *slice_z;
    if (a == 0.0 && c == 0.0) {
      if (rhs == 0.0) out.degenerate_units.push_back(static_cast<int>(i));
      continue;
    }
    std::vector<Vertex2> pts;
    auto add = [&](double x, double y) {
      if (x < 0.0 || x > 1.0 || y < 0.0 || y > 1.0) return;
      for (const auto& p : pts)
        if (std::abs(p[0] - x) <= 1e-14 && std::abs(p[1] - y) <= 1e-14) return;
      pts.push_back({x, y});
    };
    if (c != 0.0) {
      add(0.0, rhs / c);
      add(1.0, (rhs - a) / c);
    }
    if (a != 0.0) {
      add(rhs / a, 0.0);
      add((rhs - c) / a, 1.0);
    }
    if (pts.size() < 2) continue;
    // Farthest pair (a line meets the square's boundary in at most two
    // distinct points, up to corner duplicates).
    std::size_t bi = 0, bj = 1;
    double best = -1.0;
    for (std::size_t p = 0; p < pts.size(); ++p)
      for (std::size_t q = p + 1; q < pts.size(); ++q) {
        const double dd = std::hypot(pts[p][0] - pts[q][0], pts[p][1] - pts[q][1]);
        if (dd > best) best = dd, bi = p, bj = q;
      }
    Vertex2 p0 = pts[bi], p1 = pts[bj];
    if (p1 < p0) std::swap(p0, p1);
    out.lines.push_back({{p0, p1}, 1, static_cast<int>(i)});
  }
  return out;
}

/// Pre-activations of layer `layer` sampled on the (grid_n+1)^2 nodes of the
/// unit square; result(u) is a (grid_n+1) x (grid_n+1) matrix indexed (i, j)
/// for the node (i/grid_n, j/grid_n).
inline std::vector<Eigen::MatrixXd> sample_pre_activations(const Network& net, int layer, int grid_n,
                                                           std::optional<double> slice_z) {
  const int m = grid_n + 1;
  Eigen::MatrixXd X(net.input_dim(), Eigen::Index{m} * m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      const Eigen::Index c = Eigen::Index{i} * m + j;
      X(0, c) = static_cast<double>(i) / grid_n;
      X(1, c) = static_cast<double>(j) / grid_n;
      if (net.input_dim() == 3) X(2, c) = *slice_z;
    }
  BatchEvaluator ev;
  ev.forward(net, X);
  const auto& Z = ev.pre_activation(layer);
  std::vector<Eigen::MatrixXd> out(static_cast<std::size_t>(Z.rows()), Eigen::MatrixXd(m, m));
  for (Eigen::Index u = 0; u < Z.rows(); ++u)
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) out[static_cast<std::size_t>(u)](i, j) = Z(u, Eigen::Index{i} * m + j);
  return out;
}

/// Zero set of a sampled field on the unit square by marching squares with
/// linear interpolation along cell edges, stitched into chains.
inline std::vector<std::vector<Vertex2>> trace_zero_set(const Eigen::MatrixXd& v) {
  const int m = static_cast<int>(v.rows());
  const int n = m - 1;  // cells per side
  const double hcell = 1.0 / n;
  // Edge ids: horizontal edge (i,j)-(i+1,j) -> j*n + i; vertical edge
  // (i,j)-(i,j+1) -> n*m + i*n + j.
  auto hid = [&](int i, int j) { return static_cast<long>(j) * n + i; };
  auto vid = [&](int i, int j) { return static_cast<long>(n) * m + static_cast<long>(i) * n + j; };
  auto inside = [&](int i, int j) { return v(i, j) >= 0.0; };
  std::map<long, Vertex2> crossing;
  auto hcross = [&](int i, int j) -> std::optional<long> {
    if (inside(i, j) == inside(i + 1, j)) return std::nullopt;
    const long id = hid(i, j);
    if (!crossing.count(id)) {
      const double t = v(i, j) / (v(i, j) - v(i + 1, j));
      crossing[id] = {(i + t) * hcell, j * hcell};
    }
    return id;
  };
  auto vcross = [&](int i, int j) -> std::optional<long> {
    if (inside(i, j) == inside(i, j + 1)) return std::nullopt;
    const long id = vid(i, j);
    if (!crossing.count(id)) {
      const double t = v(i, j) / (v(i, j) - v(i, j + 1));
      crossing[id] = {i * hcell, (j + t) * hcell};
    }
    return id;
  };
  std::map<long, std::vector<long>> adj;
  auto link = [&](long a, long b) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  };
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const auto bottom = hcross(i, j), top = hcross(i, j + 1);
      const auto left = vcross(i, j), right = vcross(i + 1, j);
      std::vector<long> hit;
      for (const auto& e : {bottom, right, top, left})
        if (e) hit.push_back(*e);
      if (hit.size() == 2) {
        link(hit[0], hit[1]);
      } else if (hit.size() == 4) {
        // Saddle: disambiguate with the cell-centre average.
        const double centre = 0.25 * (v(i, j) + v(i + 1, j) + v(i, j + 1) + v(i + 1, j + 1));
        if ((centre >= 0.0) == inside(i, j)) {
          link(*bottom, *right);
          link(*top, *left);
        } else {
          link(*bottom, *left);
          link(*right, *top);
        }
      }
    }
  std::vector<std::vector<Vertex2>> chains;
  std::map<long, bool> used;
  auto walk = [&](long start) {
    std::vector<Vertex2> chain{crossing.at(start)};
    used[start] = true;
    long prev = -1, cur = start;
    while (true) {
      long next = -1;
      for (long nb : adj[cur])
        if (nb != prev && !used[nb]) {
          next = nb;
          break;
        }
      if (next < 0) {
        // Close a loop back to the start.
        for (long nb : adj[cur])
          if (nb == start && prev != start && chain.size() > 2) chain.push_back(crossing.at(start));
        break;
      }
      used[next] = true;
      chain.push_back(crossing.at(next));
      prev = cur;
      cur = next;
    }
    // Drop repeated consecutive vertices (crossings at grid nodes).
    std::vector<Vertex2> clean;
    for (const auto& p : chain)
      if (clean.empty() || clean.back() != p) clean.push_back(p);
    if (clean.size() >= 2) chains.push_back(std::move(clean));
  };
  for (const auto& [id, nbs] : adj)
    if (nbs.size() == 1 && !used[id]) walk(id);
  for (const auto& [id, nbs] : adj)
    if (!used[id]) walk(id);
  return chains;
}

/// Second-layer breaking polylines traced on a grid_n x grid_n sampling.
inline std::vector<Polyline> second_layer_polylines(const Network& net, int grid_n,
                                                    std::optional<double> slice_z = std::nullopt) {
  detail::require_plane(net, slice_z);
  if (net.arch.hidden_layers() < 2) throw ValidationError("second-layer polylines need two hidden layers");
  if (grid_n < 16) throw ValidationError("grid_n must be at least 16");
  const auto fields = sample_pre_activations(net, 2, grid_n, slice_z);
  std::vector<Polyline> out;
  for (std::size_t u = 0; u < fields.size(); ++u)
    for (auto& chain : trace_zero_set(fields[u])) out.push_back({std::move(chain), 2, static_cast<int>(u)});
  return out;
}

}  // namespace lsnn
