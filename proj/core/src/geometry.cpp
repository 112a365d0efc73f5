#include "covarlab/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "covarlab/util.hpp"

namespace covarlab {

namespace {

constexpr double kSnapTol = 1e-7;
constexpr double kTimeTol = 1e-9;

double wrap_into(double x, double L) {
  double y = std::fmod(x, L);
  if (y < 0) y += L;
  return y;
}

// cone half-width of a closed rect [t1,t2] at time t
double cone_width(const Rect& r, double t) {
  return std::max(t - r.t1, r.t2 - t);
}

// Merge closed intervals on a segment or circle. Inputs use the Rect wrap
// convention; output is disjoint and sorted.
std::vector<Interval> merge_intervals(const Component& comp,
                                      std::vector<Interval> in) {
  std::vector<Interval> out;
  if (in.empty()) return out;
  if (comp.topology == Topology::LineSegment) {
    std::sort(in.begin(), in.end(),
              [](const Interval& p, const Interval& q) { return p.a < q.a; });
    for (const auto& iv : in) {
      if (!out.empty() && iv.a <= out.back().b + kSnapTol) {
        out.back().b = std::max(out.back().b, iv.b);
      } else {
        out.push_back(iv);
      }
    }
    return out;
  }
  const double L = comp.extent;
  double covered = 0.0;
  for (auto& iv : in) {
    if (iv.full || iv.b - iv.a >= L - kSnapTol) {
      return {Interval{0.0, L, true}};
    }
    covered += iv.b - iv.a;
    iv.a = wrap_into(iv.a, L);
    iv.b = iv.a + (iv.b - iv.a);
  }
  // unroll wrap-crossing intervals onto [0, 2L), merge linearly, fold back
  std::vector<Interval> lin;
  for (const auto& iv : in) {
    lin.push_back(iv);
    lin.push_back(Interval{iv.a + L, iv.b + L});
  }
  std::sort(lin.begin(), lin.end(),
            [](const Interval& p, const Interval& q) { return p.a < q.a; });
  std::vector<Interval> merged;
  for (const auto& iv : lin) {
    if (!merged.empty() && iv.a <= merged.back().b + kSnapTol) {
      merged.back().b = std::max(merged.back().b, iv.b);
    } else {
      merged.push_back(iv);
    }
  }
  for (const auto& iv : merged) {
    if (iv.b - iv.a >= L - kSnapTol) return {Interval{0.0, L, true}};
  }
  // keep representatives whose start lies in [0, L)
  for (const auto& iv : merged) {
    if (iv.a >= -kSnapTol && iv.a < L - kSnapTol) {
      out.push_back(Interval{iv.a, std::min(iv.b, iv.a + L)});
    }
  }
  // a piece that was merged across the seam may now be duplicated; the
  // unroll guarantees the [0,L) representatives are exactly the answer
  std::sort(out.begin(), out.end(),
            [](const Interval& p, const Interval& q) { return p.a < q.a; });
  std::vector<Interval> dedup;
  for (const auto& iv : out) {
    bool inside_prev = false;
    for (const auto& pv : dedup) {
      if (iv.a >= pv.a - kSnapTol && iv.b <= pv.b + kSnapTol) inside_prev = true;
      if (iv.a + L >= pv.a - kSnapTol && iv.b + L <= pv.b + kSnapTol)
        inside_prev = true;
    }
    if (!inside_prev) dedup.push_back(iv);
  }
  return dedup;
}

bool interval_contains(const Component& comp, const Interval& iv, double x,
                       double tol) {
  if (iv.full) return true;
  if (comp.topology == Topology::LineSegment) {
    return x >= iv.a - tol && x <= iv.b + tol;
  }
  const double L = comp.extent;
  double y = wrap_into(x, L);
  if (y >= iv.a - tol && y <= iv.b + tol) return true;
  y += L;
  return y >= iv.a - tol && y <= iv.b + tol;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

// ---------------------------------------------------------------------------
// Spacetime
// ---------------------------------------------------------------------------

int Spacetime::phase_dim() const {
  int d = 0;
  for (const auto& c : components) d += 2 * c.n_x;
  return d;
}

int Spacetime::block_offset(int c) const {
  int off = 0;
  for (int k = 0; k < c; ++k) off += 2 * components[k].n_x;
  return off;
}

std::string Spacetime::canonical_json() const {
  nlohmann::json j;
  j["time_extent"] = format_double(time_extent);
  j["t_ref"] = format_double(t_ref);
  auto comps = nlohmann::json::array();
  for (const auto& c : components) {
    nlohmann::json cj;
    cj["topology"] = c.topology == Topology::LineSegment ? "segment" : "circle";
    cj["extent"] = format_double(c.extent);
    cj["n_x"] = c.n_x;
    cj["guard"] = format_double(c.guard);
    comps.push_back(cj);
  }
  j["components"] = comps;
  return j.dump();
}

std::uint64_t Spacetime::hash() const { return fnv1a64(canonical_json()); }

namespace {

void finalize_spacetime(Spacetime& M) {
  if (M.time_extent <= 0.0) throw Error("spacetime: time extent must be positive");
  for (const auto& c : M.components) {
    if (c.extent <= 0.0) throw Error("spacetime: non-positive dimension");
    if (c.n_x < 8) throw Error("spacetime: n_x below minimum of 8");
    if (c.topology == Topology::LineSegment &&
        c.admissible_min() >= c.admissible_max() - c.dx) {
      throw Error("spacetime: guard margin infeasible");
    }
  }
  // reference slice: T/2 snapped onto every component's background step grid
  double t = M.time_extent / 2.0;
  const double h0 = M.components.front().time_step();
  t = std::round(t / h0) * h0;
  for (const auto& c : M.components) {
    const double h = c.time_step();
    if (std::abs(t / h - std::round(t / h)) > 1e-6) {
      throw Error(
          "spacetime: reference slice does not lie on the background step "
          "grid of every component; choose compatible resolutions");
    }
  }
  if (t <= 0.0 || t >= M.time_extent) {
    throw Error("spacetime: reference slice outside (0,T)");
  }
  M.t_ref = t;
}

}  // namespace

Spacetime Spacetime::strip(double half_width, double T, int n_x, double guard,
                           const std::string& name) {
  if (n_x < 2) throw Error("strip: n_x too small");
  Component c;
  c.topology = Topology::LineSegment;
  c.extent = half_width;
  c.n_x = n_x;
  c.dx = 2.0 * half_width / (n_x - 1);
  c.guard = std::max(guard, 2.0 * c.dx);
  Spacetime M;
  M.components = {c};
  M.time_extent = T;
  M.name = name;
  finalize_spacetime(M);
  return M;
}

Spacetime Spacetime::cylinder(double circumference, double T, int n_x,
                              const std::string& name) {
  if (n_x < 2) throw Error("cylinder: n_x too small");
  Component c;
  c.topology = Topology::Circle;
  c.extent = circumference;
  c.n_x = n_x;
  c.dx = circumference / n_x;
  c.guard = 0.0;
  Spacetime M;
  M.components = {c};
  M.time_extent = T;
  M.name = name;
  finalize_spacetime(M);
  return M;
}

Spacetime Spacetime::disjoint_union(const Spacetime& a, const Spacetime& b,
                                    const std::string& name) {
  if (std::abs(a.time_extent - b.time_extent) > kTimeTol) {
    throw Error("disjoint_union: time extents must agree");
  }
  Spacetime M;
  M.components = a.components;
  M.components.insert(M.components.end(), b.components.begin(),
                      b.components.end());
  M.time_extent = a.time_extent;
  M.name = name;
  finalize_spacetime(M);
  return M;
}

std::vector<CauchyTopology> cauchy_classification(const Spacetime& M) {
  std::vector<CauchyTopology> out;
  for (const auto& c : M.components) {
    out.push_back(c.topology == Topology::Circle ? CauchyTopology::Compact
                                                 : CauchyTopology::Noncompact);
  }
  return out;
}

// ---------------------------------------------------------------------------
// lattice helpers
// ---------------------------------------------------------------------------

int lattice_ceil(const Component& c, double x) {
  return static_cast<int>(std::ceil((x - c.x0()) / c.dx - kSnapTol));
}

int lattice_floor(const Component& c, double x) {
  return static_cast<int>(std::floor((x - c.x0()) / c.dx + kSnapTol));
}

std::vector<int> interior_indices(const Component& c, double a, double b) {
  std::vector<int> idx;
  const double eps = 1e-6 * c.dx;
  if (c.topology == Topology::LineSegment) {
    int lo = static_cast<int>(std::ceil((a + eps - c.x0()) / c.dx - kSnapTol));
    int hi = static_cast<int>(std::floor((b - eps - c.x0()) / c.dx + kSnapTol));
    for (int i = std::max(lo, 0); i <= std::min(hi, c.n_x - 1); ++i) {
      double x = c.position(i);
      if (x > a + eps && x < b - eps) idx.push_back(i);
    }
    return idx;
  }
  const double L = c.extent;
  if (b - a >= L - kSnapTol) {
    idx.resize(c.n_x);
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
  }
  double a0 = wrap_into(a, L);
  double b0 = a0 + (b - a);
  for (int i = 0; i < c.n_x; ++i) {
    double x = c.position(i);
    for (int k = 0; k < 2; ++k) {
      double y = x + k * L;
      if (y > a0 + eps && y < b0 - eps) {
        idx.push_back(i);
        break;
      }
    }
  }
  return idx;
}

bool on_time_grid(const Component& c, double t, double tol) {
  const double h = c.time_step();
  return std::abs(t - std::round(t / h) * h) < tol * std::max(1.0, std::abs(t));
}

double snap_to_time_grid(const Component& c, double t) {
  const double h = c.time_step();
  return std::round(t / h) * h;
}

// ---------------------------------------------------------------------------
// CausalHull
// ---------------------------------------------------------------------------

CausalHull::CausalHull(const Spacetime& M, CompactSet sources)
    : spacetime_(&M), sources_(std::move(sources)) {
  for (const auto& r : sources_.rects) {
    if (r.component < 0 || r.component >= M.n_components()) {
      throw Error("compact set: bad component index");
    }
    if (r.t1 > r.t2 + kTimeTol || r.t1 < -kTimeTol ||
        r.t2 > M.time_extent + kTimeTol) {
      throw Error("compact set: rectangle outside [0,T]");
    }
    const auto& c = M.comp(r.component);
    if (c.topology == Topology::LineSegment) {
      if (r.a < c.admissible_min() - kSnapTol ||
          r.b > c.admissible_max() + kSnapTol) {
        throw Error("compact set: rectangle violates guard margin");
      }
    } else if (r.b - r.a > c.extent + kSnapTol) {
      throw Error("compact set: circle interval longer than circumference");
    }
  }
}

std::vector<Interval> CausalHull::intervals_at(int c, double t) const {
  const auto& comp = spacetime_->comp(c);
  std::vector<Interval> raw;
  for (const auto& r : sources_.rects) {
    if (r.component != c) continue;
    const double w = cone_width(r, t);
    if (w < 0) continue;  // degenerate; cannot happen for t in [0,T]
    Interval iv{r.a - w, r.b + w};
    if (comp.topology == Topology::LineSegment) {
      iv.a = std::max(iv.a, comp.domain_min());
      iv.b = std::min(iv.b, comp.domain_max());
      if (iv.b < iv.a) continue;
    }
    raw.push_back(iv);
  }
  return merge_intervals(comp, std::move(raw));
}

bool CausalHull::contains(int c, double t, double x, double tol) const {
  for (const auto& iv : intervals_at(c, t)) {
    if (interval_contains(spacetime_->comp(c), iv, x, tol)) return true;
  }
  return false;
}

std::vector<int> CausalHull::slice_indices(int c, double t) const {
  const auto& comp = spacetime_->comp(c);
  std::vector<int> out;
  auto ivs = intervals_at(c, t);
  for (int i = 0; i < comp.n_x; ++i) {
    double x = comp.position(i);
    for (const auto& iv : ivs) {
      if (interval_contains(comp, iv, x, 1e-6 * comp.dx)) {
        out.push_back(i);
        break;
      }
    }
  }
  return out;
}

CompactSet CausalHull::to_compact_set() const {
  CompactSet out;
  const double T = spacetime_->time_extent;
  for (int c = 0; c < spacetime_->n_components(); ++c) {
    const auto& comp = spacetime_->comp(c);
    bool touches = false;
    for (const auto& r : sources_.rects) touches |= (r.component == c);
    if (!touches) continue;
    const double dt = comp.dx;
    const int rows = static_cast<int>(std::ceil(T / dt - kSnapTol));
    for (int k = 0; k < rows; ++k) {
      const double lo = k * dt;
      const double hi = std::min(T, (k + 1) * dt);
      auto at_lo = intervals_at(c, lo);
      auto at_hi = intervals_at(c, hi);
      std::vector<Interval> both = at_lo;
      both.insert(both.end(), at_hi.begin(), at_hi.end());
      for (const auto& iv : merge_intervals(comp, std::move(both))) {
        Rect r;
        r.component = c;
        r.t1 = lo;
        r.t2 = hi;
        if (iv.full) {
          r.a = 0.0;
          r.b = comp.extent;
        } else if (comp.topology == Topology::LineSegment) {
          r.a = comp.position(std::max(0, lattice_floor(comp, iv.a)));
          r.b = comp.position(std::min(comp.n_x - 1, lattice_ceil(comp, iv.b)));
        } else {
          double a = std::floor(iv.a / comp.dx + kSnapTol) * comp.dx;
          double b = std::ceil(iv.b / comp.dx - kSnapTol) * comp.dx;
          if (b - a >= comp.extent) {
            a = 0.0;
            b = comp.extent;
          }
          r.a = wrap_into(a, comp.extent);
          r.b = r.a + (b - a);
        }
        out.rects.push_back(r);
      }
    }
  }
  return out;
}

void CausalHull::check_guard() const {
  for (const auto& r : sources_.rects) {
    const auto& comp = spacetime_->comp(r.component);
    if (comp.topology != Topology::LineSegment) continue;
    const double w =
        std::max(cone_width(r, 0.0), cone_width(r, spacetime_->time_extent));
    if (r.a - w < comp.admissible_min() - kSnapTol ||
        r.b + w > comp.admissible_max() + kSnapTol) {
      throw Error("causal hull reaches the guard margin (noncompact-surface "
                  "emulation violated)");
    }
  }
}

CausalHull causal_hull(const Spacetime& M, const CompactSet& K) {
  CausalHull h(M, K);
  h.check_guard();
  return h;
}

CausalHull causal_hull(const Spacetime& M, const CausalHull& H) {
  // J is idempotent on time-clipped hulls: each source already carries its
  // own cone, and cone profiles have |slope| <= 1.
  return CausalHull(M, H.sources());
}

bool compact_set_contains(const Spacetime& M, const CompactSet& K, int c,
                          double t, double x, double tol) {
  for (const auto& r : K.rects) {
    if (r.component != c) continue;
    if (t < r.t1 - tol || t > r.t2 + tol) continue;
    if (interval_contains(M.comp(c), Interval{r.a, r.b}, x, tol)) return true;
  }
  return false;
}

CompactSet compact_union(const CompactSet& K1, const CompactSet& K2) {
  CompactSet out = K1;
  out.rects.insert(out.rects.end(), K2.rects.begin(), K2.rects.end());
  return out;
}

CompactSet compact_intersection(const Spacetime& M, const CompactSet& K1,
                                const CompactSet& K2) {
  CompactSet out;
  for (const auto& r1 : K1.rects) {
    for (const auto& r2 : K2.rects) {
      if (r1.component != r2.component) continue;
      const auto& comp = M.comp(r1.component);
      double t1 = std::max(r1.t1, r2.t1);
      double t2 = std::min(r1.t2, r2.t2);
      if (t2 < t1 - kTimeTol) continue;
      if (comp.topology == Topology::LineSegment) {
        double a = std::max(r1.a, r2.a);
        double b = std::min(r1.b, r2.b);
        if (b >= a - kSnapTol) {
          out.rects.push_back(Rect{r1.component, t1, t2, a, std::max(a, b)});
        }
      } else {
        // intersect on the doubled cover to honour wrapping
        const double L = comp.extent;
        for (int k = -1; k <= 1; ++k) {
          double a = std::max(r1.a, r2.a + k * L);
          double b = std::min(r1.b, r2.b + k * L);
          if (b >= a - kSnapTol) {
            double aa = wrap_into(a, L);
            out.rects.push_back(Rect{r1.component, t1, t2, aa, aa + (b - a)});
          }
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Causal complement
// ---------------------------------------------------------------------------

namespace {

// open complement intervals of the closed hull at time t
std::vector<Interval> complement_intervals(const Spacetime& M,
                                           const CausalHull& H, int c,
                                           double t) {
  const auto& comp = M.comp(c);
  auto hull = H.intervals_at(c, t);
  std::vector<Interval> out;
  if (comp.topology == Topology::LineSegment) {
    double cursor = comp.domain_min();
    for (const auto& iv : hull) {
      if (iv.a > cursor + kSnapTol) out.push_back(Interval{cursor, iv.a});
      cursor = std::max(cursor, iv.b);
    }
    if (comp.domain_max() > cursor + kSnapTol) {
      out.push_back(Interval{cursor, comp.domain_max()});
    }
    return out;
  }
  const double L = comp.extent;
  if (hull.empty()) return {Interval{0.0, L, true}};
  if (hull.size() == 1 && hull[0].full) return {};
  // gaps between consecutive hull intervals, cyclically
  for (std::size_t i = 0; i < hull.size(); ++i) {
    double end = hull[i].b;
    double next = (i + 1 < hull.size()) ? hull[i + 1].a : hull[0].a + L;
    if (next > end + kSnapTol) {
      double a = wrap_into(end, L);
      out.push_back(Interval{a, a + (next - end)});
    }
  }
  return out;
}

bool intervals_overlap(const Component& comp, const Interval& p,
                       const Interval& q) {
  if (p.full || q.full) return true;
  if (comp.topology == Topology::LineSegment) {
    return p.a <= q.b + kSnapTol && q.a <= p.b + kSnapTol;
  }
  const double L = comp.extent;
  for (int k = -1; k <= 1; ++k) {
    if (p.a <= q.b + k * L + kSnapTol && q.a + k * L <= p.b + kSnapTol)
      return true;
  }
  return false;
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int i) { return parent[i] == i ? i : parent[i] = find(parent[i]); }
  void unite(int i, int j) { parent[find(i)] = find(j); }
};

}  // namespace

ComplementRegion causal_complement(const Spacetime& M, const CausalHull& H) {
  ComplementRegion region;
  for (int c = 0; c < M.n_components(); ++c) {
    const auto& comp = M.comp(c);
    // sample rows; half-cell spacing resolves every cone feature
    std::set<double> ts{0.0, M.time_extent, M.t_ref};
    for (const auto& r : H.sources().rects) {
      if (r.component != c) continue;
      ts.insert(std::clamp(r.t1, 0.0, M.time_extent));
      ts.insert(std::clamp(r.t2, 0.0, M.time_extent));
    }
    const double dt = comp.dx / 2.0;
    for (double t = 0.0; t < M.time_extent; t += dt) ts.insert(t);
    std::vector<double> rows(ts.begin(), ts.end());

    struct Node {
      int row;
      Interval iv;
    };
    std::vector<Node> nodes;
    std::vector<std::vector<int>> row_nodes(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      for (const auto& iv : complement_intervals(M, H, c, rows[k])) {
        row_nodes[k].push_back(static_cast<int>(nodes.size()));
        nodes.push_back(Node{static_cast<int>(k), iv});
      }
    }
    if (nodes.empty()) continue;
    UnionFind uf(static_cast<int>(nodes.size()));
    for (std::size_t k = 0; k + 1 < rows.size(); ++k) {
      for (int i : row_nodes[k]) {
        for (int j : row_nodes[k + 1]) {
          if (intervals_overlap(comp, nodes[i].iv, nodes[j].iv)) uf.unite(i, j);
        }
      }
    }
    // assemble pieces
    std::map<int, ComplementPiece> pieces;
    int ref_row = -1;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      if (std::abs(rows[k] - M.t_ref) < kTimeTol) ref_row = static_cast<int>(k);
    }
    for (std::size_t n = 0; n < nodes.size(); ++n) {
      int root = uf.find(static_cast<int>(n));
      auto& piece = pieces[root];
      piece.component = c;
      const auto& iv = nodes[n].iv;
      if (comp.topology == Topology::LineSegment) {
        if (iv.a < comp.admissible_min() + kSnapTol ||
            iv.b > comp.admissible_max() - kSnapTol) {
          piece.bounded = false;  // touches the guard zone: stands for infinity
        }
      }
      if (nodes[n].row == ref_row) piece.trace_at_t_ref.push_back(iv);
    }
    for (auto& [root, piece] : pieces) {
      piece.trace_at_t_ref =
          merge_intervals(comp, std::move(piece.trace_at_t_ref));
      region.pieces.push_back(std::move(piece));
    }
  }
  return region;
}

ComplementRegion causal_complement(const Spacetime& M, const CompactSet& K) {
  return causal_complement(M, causal_hull(M, K));
}

// ---------------------------------------------------------------------------
// Regions
// ---------------------------------------------------------------------------

std::optional<Interval> RegionPiece::interval_at(const Component& comp,
                                                 double t) const {
  if (kind == RegionKind::Slab) {
    if (t <= t_lo + kTimeTol || t >= t_hi - kTimeTol) return std::nullopt;
    if (comp.topology == Topology::Circle) return Interval{0.0, comp.extent, true};
    return Interval{comp.domain_min(), comp.domain_max()};
  }
  if (t <= t_lo + kTimeTol || t >= t_hi - kTimeTol) return std::nullopt;
  const double s = std::abs(t - t0);
  const double aa = a + s;
  const double bb = b - s;
  if (bb <= aa + kSnapTol) return std::nullopt;
  return Interval{aa, bb};
}

bool Region::is_multi_diamond() const {
  if (pieces.empty()) return false;
  for (const auto& p : pieces) {
    if (p.kind == RegionKind::Slab) return false;
  }
  return true;
}

Region make_diamond(const Spacetime& M, int component, double a, double b,
                    double t0) {
  if (component < 0 || component >= M.n_components()) {
    throw Error("make_diamond: bad component");
  }
  const auto& comp = M.comp(component);
  if (b <= a) throw Error("make_diamond: empty base");
  if (t0 <= 0.0 || t0 >= M.time_extent) throw Error("make_diamond: slice outside (0,T)");
  if (comp.topology == Topology::Circle) {
    if (b - a >= comp.extent - kSnapTol) {
      throw Error("make_diamond: base wraps the full circle");
    }
  } else {
    if (a < comp.admissible_min() - kSnapTol ||
        b > comp.admissible_max() + kSnapTol) {
      throw Error("make_diamond: base violates guard margin");
    }
  }
  RegionPiece p;
  p.component = component;
  p.kind = RegionKind::Diamond;
  p.a = a;
  p.b = b;
  p.t0 = t0;
  const double half = (b - a) / 2.0;
  p.t_lo = std::max(0.0, t0 - half);
  p.t_hi = std::min(M.time_extent, t0 + half);
  Region r;
  r.pieces = {p};
  return r;
}

Region make_slab(const Spacetime& M, double t_lo, double t_hi) {
  Region r;
  for (int c = 0; c < M.n_components(); ++c) {
    RegionPiece p;
    p.component = c;
    p.kind = RegionKind::Slab;
    p.t_lo = t_lo;
    p.t_hi = t_hi;
    r.pieces.push_back(p);
  }
  if (t_lo < -kTimeTol || t_hi > M.time_extent + kTimeTol || t_hi <= t_lo) {
    throw Error("make_slab: bad time bounds");
  }
  return r;
}

Region make_slab(const Spacetime& M, int component, double t_lo, double t_hi) {
  if (t_lo < -kTimeTol || t_hi > M.time_extent + kTimeTol || t_hi <= t_lo) {
    throw Error("make_slab: bad time bounds");
  }
  RegionPiece p;
  p.component = component;
  p.kind = RegionKind::Slab;
  p.t_lo = t_lo;
  p.t_hi = t_hi;
  Region r;
  r.pieces = {p};
  return r;
}

namespace {

bool pieces_causally_disjoint(const Spacetime& M, const RegionPiece& p,
                              const RegionPiece& q) {
  if (p.component != q.component) return true;
  const auto& comp = M.comp(p.component);
  // J(closure of p) must not meet q; both are diamonds here
  Rect rp{p.component, p.t0, p.t0, p.a, p.b};
  const int steps = 64;
  for (int k = 0; k <= steps; ++k) {
    double t = q.t_lo + (q.t_hi - q.t_lo) * k / steps;
    auto qi = q.interval_at(comp, t);
    if (!qi) continue;
    const double w = cone_width(rp, t);
    Interval cone{p.a - w, p.b + w};
    if (intervals_overlap(comp, cone, *qi)) return false;
  }
  return true;
}

}  // namespace

Region make_multi_diamond(const Spacetime& M,
                          const std::vector<RegionPiece>& diamonds) {
  Region r;
  for (const auto& d : diamonds) {
    Region single = make_diamond(M, d.component, d.a, d.b, d.t0);
    r.pieces.push_back(single.pieces[0]);
  }
  for (std::size_t i = 0; i < r.pieces.size(); ++i) {
    for (std::size_t j = i + 1; j < r.pieces.size(); ++j) {
      if (!pieces_causally_disjoint(M, r.pieces[i], r.pieces[j])) {
        throw Error("make_multi_diamond: pieces not causally disjoint");
      }
    }
  }
  return r;
}

Region truncate_region(const Spacetime& M, const Region& r, double t_lo,
                       double t_hi) {
  if (t_lo < -kTimeTol || t_hi > M.time_extent + kTimeTol || t_hi <= t_lo) {
    throw Error("truncate_region: bad time bounds");
  }
  Region out = r;
  for (auto& p : out.pieces) {
    p.t_lo = std::max(p.t_lo, t_lo);
    p.t_hi = std::min(p.t_hi, t_hi);
    if (p.kind == RegionKind::Diamond) p.kind = RegionKind::TruncatedDiamond;
  }
  return out;
}

namespace {

bool region_contains_point(const Spacetime& M, const Region& r, int c,
                           double t, double x) {
  const auto& comp = M.comp(c);
  for (const auto& p : r.pieces) {
    if (p.component != c) continue;
    auto iv = p.interval_at(comp, t);
    if (!iv) continue;
    if (iv->full) return true;
    if (comp.topology == Topology::LineSegment) {
      if (x > iv->a + kSnapTol && x < iv->b - kSnapTol) return true;
    } else {
      double y = wrap_into(x, comp.extent);
      if ((y > iv->a + kSnapTol && y < iv->b - kSnapTol) ||
          (y + comp.extent > iv->a + kSnapTol &&
           y + comp.extent < iv->b - kSnapTol)) {
        return true;
      }
    }
  }
  return false;
}

}  // namespace

bool causally_convex(const Spacetime& M, const Region& r, double sampling) {
  for (int c = 0; c < M.n_components(); ++c) {
    const auto& comp = M.comp(c);
    const double ds = sampling > 0 ? sampling : 2.0 * comp.dx;
    // sample points of the region on this component
    std::vector<std::pair<double, double>> pts;
    for (double t = 0.0; t <= M.time_extent + kTimeTol; t += ds) {
      for (const auto& p : r.pieces) {
        if (p.component != c) continue;
        auto iv = p.interval_at(comp, t);
        if (!iv) continue;
        double lo = iv->full ? 0.0 : iv->a;
        double hi = iv->full ? comp.extent : iv->b;
        for (double x = lo + 1e-3 * comp.dx; x < hi; x += ds) pts.emplace_back(t, x);
        if (!iv->full) pts.emplace_back(t, hi - 1e-3 * comp.dx);
      }
    }
    if (pts.size() > 400) {
      // decimate deterministically to keep the pair loop tractable
      std::vector<std::pair<double, double>> dec;
      const std::size_t stride = pts.size() / 400 + 1;
      for (std::size_t i = 0; i < pts.size(); i += stride) dec.push_back(pts[i]);
      pts = std::move(dec);
    }
    for (std::size_t i = 0; i < pts.size(); ++i) {
      for (std::size_t j = 0; j < pts.size(); ++j) {
        auto [t1, x1] = pts[i];
        auto [t2, x2] = pts[j];
        if (t2 <= t1 + kTimeTol) continue;
        // every unwrapped representative of x2 causally after (t1,x1)
        const double L = comp.extent;
        int kmax = comp.topology == Topology::Circle ? 1 : 0;
        for (int k = -kmax; k <= kmax; ++k) {
          double xq = x2 + k * L;
          if (std::abs(xq - x1) > t2 - t1 + kSnapTol) continue;
          // sample the causal diamond between the points
          for (double t = t1; t <= t2 + kTimeTol; t += ds / 2.0) {
            double lo = std::max(x1 - (t - t1), xq - (t2 - t));
            double hi = std::min(x1 + (t - t1), xq + (t2 - t));
            for (double x = lo; x <= hi + kSnapTol; x += ds / 2.0) {
              if (!region_contains_point(M, r, c, std::min(t, t2),
                                         comp.topology == Topology::Circle
                                             ? wrap_into(x, L)
                                             : x)) {
                return false;
              }
            }
          }
        }
      }
    }
  }
  return true;
}

bool causally_disjoint(const Spacetime& M, const Region& r1, const Region& r2) {
  for (const auto& p : r1.pieces) {
    for (const auto& q : r2.pieces) {
      if (p.component != q.component) continue;
      if (p.kind == RegionKind::Slab || q.kind == RegionKind::Slab) return false;
      if (!pieces_causally_disjoint(M, p, q)) return false;
    }
  }
  return true;
}

CompactSet region_closure(const Spacetime& M, const Region& r) {
  CompactSet out;
  for (const auto& p : r.pieces) {
    const auto& comp = M.comp(p.component);
    const double dt = comp.dx;
    for (double lo = p.t_lo; lo < p.t_hi - kTimeTol; lo += dt) {
      const double hi = std::min(p.t_hi, lo + dt);
      // widest closed interval over the row
      double t_star = (std::abs(lo - p.t0) < std::abs(hi - p.t0)) ? lo : hi;
      if (p.kind == RegionKind::Slab || (lo <= p.t0 && p.t0 <= hi)) {
        t_star = std::clamp(p.t0, lo, hi);
      }
      auto iv = p.interval_at(comp, t_star);
      if (!iv) {
        // row may sit wholly outside the clipped diamond
        continue;
      }
      Rect rect;
      rect.component = p.component;
      rect.t1 = lo;
      rect.t2 = hi;
      if (iv->full) {
        rect.a = 0.0;
        rect.b = comp.extent;
      } else {
        rect.a = iv->a;
        rect.b = iv->b;
      }
      out.rects.push_back(rect);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// admissible compacts
// ---------------------------------------------------------------------------

bool has_multidiamond_neighbourhood(const Spacetime& M, const CompactSet& K,
                                    const Region& O) {
  if (K.empty()) return true;
  for (const auto& r : K.rects) {
    const auto& comp = M.comp(r.component);
    bool covered = false;
    for (const auto& p : O.pieces) {
      if (p.component != r.component || p.kind == RegionKind::Slab) continue;
      // neighbourhood diamond base strictly inside (p.a, p.b)
      const double da = r.a - p.a;
      const double db = p.b - r.b;
      if (da <= kSnapTol || db <= kSnapTol) continue;
      const double delta = 0.5 * std::min({da, db, comp.dx});
      const double Ba = r.a - delta;
      const double Bb = r.b + delta;
      // rect inside the closed diamond D(Ba,Bb) at slice p.t0
      bool inside = true;
      for (double t : {r.t1, r.t2}) {
        const double s = std::abs(t - p.t0);
        if (r.a < Ba + s - kSnapTol || r.b > Bb - s + kSnapTol) inside = false;
      }
      if (inside) {
        covered = true;
        break;
      }
    }
    if (!covered) return false;
  }
  return true;
}

std::vector<CompactSet> admissible_compacts(const Spacetime& M,
                                            const Region& O, int n_samples) {
  if (!O.is_multi_diamond()) {
    throw Error("admissible_compacts: region must be a diamond or multi-diamond");
  }
  if (n_samples < 1 || n_samples > 4) {
    throw Error("admissible_compacts: n_samples must be in 1..4");
  }
  static const double kSchedule[3] = {0.5, 0.75, 0.9};
  std::vector<CompactSet> out;
  for (int k = 0; k < n_samples; ++k) {
    CompactSet K;
    const bool lattice_max = (k == 3);
    for (const auto& p : O.pieces) {
      const auto& comp = M.comp(p.component);
      double a, b;
      if (lattice_max) {
        auto interior = interior_indices(comp, p.a, p.b);
        if (interior.empty()) {
          throw Error("admissible_compacts: region too small for the lattice");
        }
        a = comp.position(interior.front());
        b = comp.position(interior.back());
        if (comp.topology == Topology::Circle) {
          // interior_indices returns ascending indices; rebuild the wrapped
          // span from the first/last interior points relative to the base
          double base_a = wrap_into(p.a, comp.extent);
          double first = base_a + comp.extent, last = base_a;
          for (int i : interior) {
            double y = wrap_into(comp.position(i) - base_a, comp.extent) + base_a;
            first = std::min(first, y);
            last = std::max(last, y);
          }
          a = first;
          b = last;
        }
      } else {
        const double mid = (p.a + p.b) / 2.0;
        const double half = (p.b - p.a) / 2.0 * kSchedule[k];
        // snap inward so the compact is lattice-exact
        a = comp.x0() + std::ceil((mid - half - comp.x0()) / comp.dx - kSnapTol) *
                            comp.dx;
        b = comp.x0() +
            std::floor((mid + half - comp.x0()) / comp.dx + kSnapTol) * comp.dx;
        if (b < a + kSnapTol) {
          throw Error("admissible_compacts: region too small for the lattice");
        }
      }
      K.rects.push_back(Rect{p.component, p.t0, p.t0, a, b});
    }
    if (!has_multidiamond_neighbourhood(M, K, O)) {
      throw Error("admissible_compacts: sample lost its multi-diamond "
                  "neighbourhood");
    }
    out.push_back(std::move(K));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

const ComponentMap& Embedding::map_for(int dom_c) const {
  for (const auto& m : maps) {
    if (m.dom_component == dom_c) return m;
  }
  throw Error("embedding: no map for domain component");
}

double Embedding::image_slice_time(int dom_c) const {
  return domain.t_ref + map_for(dom_c).time_shift;
}

Embedding validate_embedding(Embedding e) {
  const auto& M = e.domain;
  const auto& N = e.codomain;
  if (e.maps.empty()) throw Error("embedding: no component maps");

  std::vector<int> seen(M.n_components(), 0);
  for (const auto& m : e.maps) {
    if (m.dom_component < 0 || m.dom_component >= M.n_components() ||
        m.cod_component < 0 || m.cod_component >= N.n_components()) {
      throw Error("embedding: bad component index");
    }
    seen[m.dom_component] += 1;
  }
  for (int c = 0; c < M.n_components(); ++c) {
    if (seen[c] != 1) throw Error("embedding: every domain component must map exactly once");
  }

  Region image;
  std::vector<int> full_cover(N.n_components(), 0);
  std::vector<int> met(N.n_components(), 0);
  for (const auto& m : e.maps) {
    const auto& dc = M.comp(m.dom_component);
    const auto& cc = N.comp(m.cod_component);
    if (std::abs(dc.dx - cc.dx) > kSnapTol * dc.dx) {
      throw Error("embedding: non-isometric grid spacing");
    }
    const double h = dc.time_step();
    if (std::abs(m.time_shift / h - std::round(m.time_shift / h)) > 1e-6) {
      throw Error("embedding: time shift off the background step grid");
    }
    const double shift_cells = m.spatial_shift / dc.dx;
    if (std::abs(shift_cells - std::round(shift_cells)) > 1e-6) {
      throw Error("embedding: spatial shift off the lattice");
    }
    met[m.cod_component] += 1;

    if (m.kind == MapKind::FullComponent) {
      if (dc.topology != cc.topology) {
        throw Error("embedding: topology obstruction for full-component map");
      }
      if (std::abs(dc.extent - cc.extent) > kSnapTol) {
        throw Error("embedding: full-component map requires equal extent "
                    "(partial slabs are not causally convex)");
      }
      if (dc.topology == Topology::LineSegment &&
          std::abs(m.spatial_shift) > kSnapTol) {
        throw Error("embedding: segment full-component map cannot translate");
      }
      if (m.time_shift < -kTimeTol ||
          m.time_shift + M.time_extent > N.time_extent + kTimeTol) {
        throw Error("embedding: time window outside codomain");
      }
      RegionPiece p;
      p.component = m.cod_component;
      p.kind = RegionKind::Slab;
      p.t_lo = m.time_shift;
      p.t_hi = m.time_shift + M.time_extent;
      image.pieces.push_back(p);
      full_cover[m.cod_component] += 1;
    } else {
      if (dc.topology != Topology::LineSegment) {
        throw Error("embedding: diamond inclusion requires a segment domain");
      }
      const double s = M.t_ref + m.time_shift;
      if (s <= kTimeTol || s >= N.time_extent - kTimeTol) {
        throw Error("embedding: diamond slice outside the codomain interior");
      }
      // image base: domain slice points padded by half a cell
      const double delta = dc.dx / 2.0;
      double base_a, base_b;
      if (cc.topology == Topology::Circle) {
        if (2.0 * dc.extent + 2.0 * delta >= cc.extent - kSnapTol) {
          throw Error("embedding: diamond base wraps the codomain circle");
        }
        base_a = wrap_into(m.spatial_shift - dc.extent - delta, cc.extent);
        base_b = base_a + 2.0 * (dc.extent + delta);
      } else {
        base_a = m.spatial_shift - dc.extent - delta;
        base_b = m.spatial_shift + dc.extent + delta;
        if (base_a < cc.admissible_min() - kSnapTol ||
            base_b > cc.admissible_max() + kSnapTol) {
          throw Error("embedding: diamond base violates the guard margin");
        }
      }
      RegionPiece p;
      p.component = m.cod_component;
      p.kind = RegionKind::Diamond;
      p.a = base_a;
      p.b = base_b;
      p.t0 = s;
      const double half = (base_b - base_a) / 2.0;
      p.t_lo = std::max(0.0, s - half);
      p.t_hi = std::min(N.time_extent, s + half);
      image.pieces.push_back(p);
    }
  }

  // injectivity: full maps own their component; diamonds must be disjoint
  for (int c = 0; c < N.n_components(); ++c) {
    if (full_cover[c] > 1 || (full_cover[c] == 1 && met[c] > 1)) {
      throw Error("embedding: overlapping images in a codomain component");
    }
  }
  for (std::size_t i = 0; i < image.pieces.size(); ++i) {
    for (std::size_t j = i + 1; j < image.pieces.size(); ++j) {
      const auto& p = image.pieces[i];
      const auto& q = image.pieces[j];
      if (p.component != q.component) continue;
      if (p.kind == RegionKind::Diamond && q.kind == RegionKind::Diamond) {
        if (!pieces_causally_disjoint(N, p, q)) {
          throw Error("embedding: diamond images must be causally disjoint");
        }
      }
    }
  }

  e.image = image;
  e.is_cauchy = true;
  for (int c = 0; c < N.n_components(); ++c) {
    if (full_cover[c] != 1) e.is_cauchy = false;
  }
  return e;
}

Embedding identity_embedding(const Spacetime& M, const std::string& name) {
  Embedding e;
  e.domain = M;
  e.codomain = M;
  e.name = name;
  for (int c = 0; c < M.n_components(); ++c) {
    ComponentMap m;
    m.dom_component = c;
    m.cod_component = c;
    m.kind = MapKind::FullComponent;
    e.maps.push_back(m);
  }
  return validate_embedding(std::move(e));
}

Embedding compose(const Embedding& outer, const Embedding& inner) {
  if (inner.codomain.hash() != outer.domain.hash()) {
    throw Error("compose: embeddings are not composable");
  }
  Embedding e;
  e.domain = inner.domain;
  e.codomain = outer.codomain;
  e.name = outer.name + "*" + inner.name;
  for (const auto& m1 : inner.maps) {
    const auto& m2 = outer.map_for(m1.cod_component);
    ComponentMap m;
    m.dom_component = m1.dom_component;
    m.cod_component = m2.cod_component;
    m.time_shift = m1.time_shift + m2.time_shift;
    m.spatial_shift = m1.spatial_shift + m2.spatial_shift;
    const auto& cc = outer.codomain.comp(m2.cod_component);
    if (cc.topology == Topology::Circle) {
      m.spatial_shift = wrap_into(m.spatial_shift, cc.extent);
    }
    m.kind = (m1.kind == MapKind::FullComponent &&
              m2.kind == MapKind::FullComponent)
                 ? MapKind::FullComponent
                 : MapKind::DiamondBase;
    e.maps.push_back(m);
  }
  return validate_embedding(std::move(e));
}

Region map_region(const Embedding& e, const Region& r) {
  Region out;
  for (const auto& p : r.pieces) {
    const auto& m = e.map_for(p.component);
    const auto& cc = e.codomain.comp(m.cod_component);
    RegionPiece q = p;
    q.component = m.cod_component;
    q.t0 = p.t0 + m.time_shift;
    q.t_lo = p.t_lo + m.time_shift;
    q.t_hi = p.t_hi + m.time_shift;
    if (p.kind != RegionKind::Slab) {
      q.a = p.a + m.spatial_shift;
      q.b = p.b + m.spatial_shift;
      if (cc.topology == Topology::Circle) {
        double w = q.b - q.a;
        q.a = wrap_into(q.a, cc.extent);
        q.b = q.a + w;
      }
    }
    out.pieces.push_back(q);
  }
  return out;
}

CompactSet map_compact(const Embedding& e, const CompactSet& K) {
  CompactSet out;
  for (const auto& r : K.rects) {
    const auto& m = e.map_for(r.component);
    const auto& cc = e.codomain.comp(m.cod_component);
    Rect q = r;
    q.component = m.cod_component;
    q.t1 = r.t1 + m.time_shift;
    q.t2 = r.t2 + m.time_shift;
    q.a = r.a + m.spatial_shift;
    q.b = r.b + m.spatial_shift;
    if (cc.topology == Topology::Circle) {
      double w = q.b - q.a;
      q.a = wrap_into(q.a, cc.extent);
      q.b = q.a + w;
    }
    out.rects.push_back(q);
  }
  return out;
}

}  // namespace covarlab
