#include "bodytrack/convex_hull.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace bodytrack {

double ConvexHull::signed_distance(const Eigen::Vector3d& p) const {
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& f : facets) {
    worst = std::max(worst, f.normal.dot(p) - f.offset);
  }
  return worst;
}

namespace {

struct Facet {
  std::array<int, 3> v;
  std::array<int, 3> neighbor;  // across edge (v[i], v[(i+1)%3])
  Eigen::Vector3d n;            // outward unit normal
  double d = 0.0;               // n . x = d
  std::vector<int> conflicts;
  int far_point = -1;
  double far_dist = 0.0;
  bool alive = true;
};

struct EdgeKey {
  int a, b;  // a < b
  bool operator==(const EdgeKey& o) const { return a == o.a && b == o.b; }
};
struct EdgeKeyHash {
  std::size_t operator()(const EdgeKey& k) const {
    return std::hash<std::uint64_t>()(
        (static_cast<std::uint64_t>(k.a) << 32) ^
        static_cast<std::uint64_t>(k.b));
  }
};

class QuickHull {
 public:
  QuickHull(const std::vector<Eigen::Vector3d>& points) : pts_(points) {}

  ConvexHull run() {
    if (pts_.size() < 4) {
      throw DegenerateInput("quickhull3: need at least 4 points");
    }
    compute_scale();
    build_initial_simplex();
    assign_initial_conflicts();

    while (true) {
      const int fi = next_facet_with_conflicts();
      if (fi < 0) break;
      expand(fi);
    }
    return finish();
  }

 private:
  void compute_scale() {
    Eigen::Vector3d lo = pts_.front(), hi = pts_.front();
    for (const auto& p : pts_) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    diameter_ = (hi - lo).norm();
    if (diameter_ <= 0.0) {
      throw DegenerateInput("quickhull3: all points coincide");
    }
    degenerate_eps_ = 1e-12 * diameter_;
    // Well below the 1e-9-scale jitter used by callers on degenerate input,
    // yet far above double roundoff at this scale.
    visible_eps_ = 1e-13 * diameter_;
  }

  void build_initial_simplex() {
    const int n = static_cast<int>(pts_.size());
    // Most separated pair among axis extremes.
    std::array<int, 6> ext{0, 0, 0, 0, 0, 0};
    for (int i = 1; i < n; ++i) {
      for (int a = 0; a < 3; ++a) {
        if (pts_[i](a) < pts_[ext[a]](a)) ext[a] = i;
        if (pts_[i](a) > pts_[ext[3 + a]](a)) ext[3 + a] = i;
      }
    }
    int i0 = ext[0], i1 = ext[3];
    double best = -1.0;
    for (int a : ext) {
      for (int b : ext) {
        const double d = (pts_[a] - pts_[b]).squaredNorm();
        if (d > best) {
          best = d;
          i0 = a;
          i1 = b;
        }
      }
    }
    if (std::sqrt(best) < degenerate_eps_) {
      throw DegenerateInput("quickhull3: points coincide");
    }

    // Farthest from the line i0-i1.
    const Eigen::Vector3d dir = (pts_[i1] - pts_[i0]).normalized();
    int i2 = -1;
    best = -1.0;
    for (int i = 0; i < n; ++i) {
      const Eigen::Vector3d r = pts_[i] - pts_[i0];
      const double d = (r - dir * dir.dot(r)).squaredNorm();
      if (d > best) {
        best = d;
        i2 = i;
      }
    }
    if (std::sqrt(best) < degenerate_eps_) {
      throw DegenerateInput("quickhull3: points are collinear");
    }

    // Farthest from the plane i0-i1-i2.
    const Eigen::Vector3d pn =
        (pts_[i1] - pts_[i0]).cross(pts_[i2] - pts_[i0]).normalized();
    int i3 = -1;
    best = -1.0;
    for (int i = 0; i < n; ++i) {
      const double d = std::abs(pn.dot(pts_[i] - pts_[i0]));
      if (d > best) {
        best = d;
        i3 = i;
      }
    }
    if (best < degenerate_eps_) {
      throw DegenerateInput("quickhull3: points are coplanar");
    }

    interior_ = (pts_[i0] + pts_[i1] + pts_[i2] + pts_[i3]) / 4.0;
    const std::array<std::array<int, 3>, 4> tris{{{i0, i1, i2},
                                                  {i0, i1, i3},
                                                  {i0, i2, i3},
                                                  {i1, i2, i3}}};
    for (const auto& t : tris) make_facet(t[0], t[1], t[2]);
    link_all_neighbors();
  }

  int make_facet(int a, int b, int c) {
    Facet f;
    f.v = {a, b, c};
    Eigen::Vector3d n = (pts_[b] - pts_[a]).cross(pts_[c] - pts_[a]);
    const double len = n.norm();
    if (len < 1e-300) {
      n = Eigen::Vector3d::UnitZ();  // degenerate sliver; orientation fixed below
    } else {
      n /= len;
    }
    double d = n.dot(pts_[a]);
    if (n.dot(interior_) > d) {
      std::swap(f.v[1], f.v[2]);
      n = -n;
      d = -d;
    }
    f.n = n;
    f.d = d;
    f.neighbor = {-1, -1, -1};
    facets_.push_back(std::move(f));
    return static_cast<int>(facets_.size() - 1);
  }

  // Rebuilds neighbor links for every alive facet (used once on the simplex).
  void link_all_neighbors() {
    std::unordered_map<EdgeKey, std::pair<int, int>, EdgeKeyHash> edges;
    for (int fi = 0; fi < static_cast<int>(facets_.size()); ++fi) {
      if (!facets_[fi].alive) continue;
      link_facet_edges(fi, edges);
    }
  }

  void link_facet_edges(
      int fi, std::unordered_map<EdgeKey, std::pair<int, int>, EdgeKeyHash>&
                  edges) {
    Facet& f = facets_[fi];
    for (int e = 0; e < 3; ++e) {
      const EdgeKey key{std::min(f.v[e], f.v[(e + 1) % 3]),
                        std::max(f.v[e], f.v[(e + 1) % 3])};
      auto it = edges.find(key);
      if (it == edges.end()) {
        edges[key] = {fi, e};
      } else {
        const auto [oid, oe] = it->second;
        f.neighbor[e] = oid;
        facets_[oid].neighbor[oe] = fi;
      }
    }
  }

  void add_conflict(int fi, int pi, double dist) {
    Facet& f = facets_[fi];
    f.conflicts.push_back(pi);
    if (dist > f.far_dist) {
      f.far_dist = dist;
      f.far_point = pi;
    }
  }

  void assign_initial_conflicts() {
    for (int pi = 0; pi < static_cast<int>(pts_.size()); ++pi) {
      int best_f = -1;
      double best_d = visible_eps_;
      for (int fi = 0; fi < static_cast<int>(facets_.size()); ++fi) {
        const double d = facets_[fi].n.dot(pts_[pi]) - facets_[fi].d;
        if (d > best_d) {
          best_d = d;
          best_f = fi;
        }
      }
      if (best_f >= 0) add_conflict(best_f, pi, best_d);
    }
    for (int fi = 0; fi < static_cast<int>(facets_.size()); ++fi) {
      if (!facets_[fi].conflicts.empty()) pending_.push_back(fi);
    }
  }

  int next_facet_with_conflicts() {
    while (!pending_.empty()) {
      const int fi = pending_.back();
      pending_.pop_back();
      if (facets_[fi].alive && !facets_[fi].conflicts.empty()) return fi;
    }
    return -1;
  }

  void expand(int seed) {
    const int apex = facets_[seed].far_point;
    const Eigen::Vector3d& p = pts_[apex];

    // Visible facets by flood fill from the seed.
    std::vector<int> visible;
    std::vector<int> stack{seed};
    std::vector<char> mark(facets_.size(), 0);
    mark[seed] = 1;
    while (!stack.empty()) {
      const int fi = stack.back();
      stack.pop_back();
      visible.push_back(fi);
      for (int e = 0; e < 3; ++e) {
        const int nb = facets_[fi].neighbor[e];
        if (nb < 0 || mark[nb]) continue;
        if (facets_[nb].n.dot(p) - facets_[nb].d > visible_eps_) {
          mark[nb] = 1;
          stack.push_back(nb);
        }
      }
    }

    // Horizon edges: edges of visible facets whose neighbor is hidden.
    struct Horizon {
      int v0, v1, neighbor;
    };
    std::vector<Horizon> horizon;
    for (int fi : visible) {
      const Facet& f = facets_[fi];
      for (int e = 0; e < 3; ++e) {
        const int nb = f.neighbor[e];
        if (nb >= 0 && !mark[nb]) {
          horizon.push_back({f.v[e], f.v[(e + 1) % 3], nb});
        }
      }
    }

    // Collect orphaned conflict points, retire the visible set.
    std::vector<int> orphans;
    for (int fi : visible) {
      Facet& f = facets_[fi];
      for (int pi : f.conflicts) {
        if (pi != apex) orphans.push_back(pi);
      }
      f.conflicts.clear();
      f.alive = false;
    }

    // New fan from the horizon to the apex.
    std::vector<int> fresh;
    fresh.reserve(horizon.size());
    std::unordered_map<EdgeKey, std::pair<int, int>, EdgeKeyHash> edges;
    for (const auto& h : horizon) {
      const int fi = make_facet(h.v0, h.v1, apex);
      fresh.push_back(fi);
      // Stitch the surviving neighbor to the new facet across the horizon
      // edge, then register the new facet's edges for fan linking.
      Facet& nb = facets_[h.neighbor];
      for (int e = 0; e < 3; ++e) {
        const EdgeKey nk{std::min(nb.v[e], nb.v[(e + 1) % 3]),
                         std::max(nb.v[e], nb.v[(e + 1) % 3])};
        if (nk.a == std::min(h.v0, h.v1) && nk.b == std::max(h.v0, h.v1)) {
          nb.neighbor[e] = fi;
          Facet& f = facets_[fi];
          for (int e2 = 0; e2 < 3; ++e2) {
            const EdgeKey fk{std::min(f.v[e2], f.v[(e2 + 1) % 3]),
                             std::max(f.v[e2], f.v[(e2 + 1) % 3])};
            if (fk == nk) f.neighbor[e2] = h.neighbor;
          }
        }
      }
      link_facet_edges(fi, edges);
    }

    // Re-home orphans onto the facet they are farthest above.
    for (int pi : orphans) {
      int best_f = -1;
      double best_d = visible_eps_;
      for (int fi : fresh) {
        const double d = facets_[fi].n.dot(pts_[pi]) - facets_[fi].d;
        if (d > best_d) {
          best_d = d;
          best_f = fi;
        }
      }
      if (best_f >= 0) add_conflict(best_f, pi, best_d);
    }
    for (int fi : fresh) {
      if (!facets_[fi].conflicts.empty()) pending_.push_back(fi);
    }
  }

  ConvexHull finish() {
    ConvexHull out;
    for (const auto& f : facets_) {
      if (!f.alive) continue;
      out.facets.push_back({{f.v[0], f.v[1], f.v[2]}, f.n, f.d});
      out.hull_points.insert(out.hull_points.end(), f.v.begin(), f.v.end());
    }
    std::sort(out.hull_points.begin(), out.hull_points.end());
    out.hull_points.erase(
        std::unique(out.hull_points.begin(), out.hull_points.end()),
        out.hull_points.end());
    return out;
  }

  const std::vector<Eigen::Vector3d>& pts_;
  std::vector<Facet> facets_;
  std::vector<int> pending_;
  Eigen::Vector3d interior_ = Eigen::Vector3d::Zero();
  double diameter_ = 0.0;
  double degenerate_eps_ = 0.0;
  double visible_eps_ = 0.0;
};

}  // namespace

ConvexHull quickhull3(const std::vector<Eigen::Vector3d>& points) {
  return QuickHull(points).run();
}

}  // namespace bodytrack
