#ifndef COVARLAB_GEOMETRY_HPP
#define COVARLAB_GEOMETRY_HPP

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace covarlab {

// Thrown by every validation failure in the library. The CLI maps it to
// exit code 2 when it originates from configuration.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

enum class Topology { LineSegment, Circle };

// One connected piece of a spacetime: an ultrastatic 1+1D slab with flat
// metric diag(1,-1). LineSegment components model a noncompact Cauchy
// surface via a guard margin; Circle components are periodic.
struct Component {
  Topology topology = Topology::LineSegment;
  double extent = 0.0;  // half-width X for segments, circumference L for circles
  int n_x = 0;
  double dx = 0.0;
  double guard = 0.0;  // segments only; >= 2*dx

  int n_points() const { return n_x; }
  // leftmost grid coordinate; segment grid is -X..X inclusive, circle 0..L-dx
  double x0() const { return topology == Topology::LineSegment ? -extent : 0.0; }
  double position(int i) const { return x0() + i * dx; }
  // background time step; all slice-aligned bookkeeping lives on this grid
  double time_step() const { return 0.4 * dx; }
  double domain_min() const { return topology == Topology::LineSegment ? -extent : 0.0; }
  double domain_max() const { return topology == Topology::LineSegment ? extent : extent; }
  // admissible spatial band for compactly supported data / causal sets
  double admissible_min() const {
    return topology == Topology::LineSegment ? -extent + guard : 0.0;
  }
  double admissible_max() const {
    return topology == Topology::LineSegment ? extent - guard : extent;
  }
};

struct Spacetime {
  std::vector<Component> components;
  double time_extent = 0.0;
  double t_ref = 0.0;
  std::string name;

  int n_components() const { return static_cast<int>(components.size()); }
  const Component& comp(int c) const { return components.at(c); }
  int phase_dim() const;
  // offset of component c's (phi,pi) block in the flattened phase vector
  int block_offset(int c) const;

  std::string canonical_json() const;
  std::uint64_t hash() const;

  static Spacetime strip(double half_width, double T, int n_x,
                         double guard = 0.0, const std::string& name = "strip");
  static Spacetime cylinder(double circumference, double T, int n_x,
                            const std::string& name = "cylinder");
  static Spacetime disjoint_union(const Spacetime& a, const Spacetime& b,
                                  const std::string& name = "union");
};

// Per-component classification of the Cauchy surface topology.
enum class CauchyTopology { Compact, Noncompact };
std::vector<CauchyTopology> cauchy_classification(const Spacetime& M);

// ---------------------------------------------------------------------------
// Compact sets and causal hulls
// ---------------------------------------------------------------------------

// Closed axis-aligned rectangle [t1,t2] x [a,b] on one component. On circles
// the spatial interval may wrap: it is stored with a in [0,L) and b in
// (a, a+L]; b > L means the interval passes through x = 0.
struct Rect {
  int component = 0;
  double t1 = 0.0, t2 = 0.0;
  double a = 0.0, b = 0.0;
};

struct CompactSet {
  std::vector<Rect> rects;
  bool empty() const { return rects.empty(); }
};

// Spatial interval at a fixed time, same wrap convention as Rect.
struct Interval {
  double a = 0.0, b = 0.0;
  bool full = false;  // entire circle slice
  double length() const { return b - a; }
};

// J_M(K) = J^+(K) u J^-(K), time-clipped to [0,T]. Each source rectangle
// contributes the exact cone interval [a - w(t), b + w(t)] with
// w(t) = max(t - t1, t2 - t); the union is evaluated analytically, so
// re-hulling is idempotent. Rasterisation to lattice cells rounds outward.
class CausalHull {
 public:
  CausalHull(const Spacetime& M, CompactSet sources);

  const Spacetime& spacetime() const { return *spacetime_; }
  const CompactSet& sources() const { return sources_; }
  bool empty() const { return sources_.empty(); }

  // union of cone intervals of component c at time t (disjoint, sorted)
  std::vector<Interval> intervals_at(int c, double t) const;
  bool contains(int c, double t, double x, double tol = 1e-9) const;
  // lattice indices of component c covered by the closed hull at time t
  std::vector<int> slice_indices(int c, double t) const;

  // conservative outward rasterisation; rows of thickness dx per component
  CompactSet to_compact_set() const;

  // throws if the hull reaches a segment's guard margin
  void check_guard() const;

 private:
  const Spacetime* spacetime_;
  CompactSet sources_;
};

CausalHull causal_hull(const Spacetime& M, const CompactSet& K);
// Hulls are fixed points: J(J(K)) = J(K) up to the [0,T] clip.
CausalHull causal_hull(const Spacetime& M, const CausalHull& H);

bool compact_set_contains(const Spacetime& M, const CompactSet& K,
                          int c, double t, double x, double tol = 1e-9);
CompactSet compact_union(const CompactSet& K1, const CompactSet& K2);
CompactSet compact_intersection(const Spacetime& M, const CompactSet& K1,
                                const CompactSet& K2);

// ---------------------------------------------------------------------------
// Causal complement
// ---------------------------------------------------------------------------

// One connected component of M \ J(K), labeled and classified. "bounded"
// is false when the piece touches a segment's guard zone, which stands in
// for spatial infinity.
struct ComplementPiece {
  int component = 0;
  bool bounded = true;
  std::vector<Interval> trace_at_t_ref;  // open intervals; may be empty
};

struct ComplementRegion {
  std::vector<ComplementPiece> pieces;
  bool empty() const { return pieces.empty(); }
};

ComplementRegion causal_complement(const Spacetime& M, const CompactSet& K);
ComplementRegion causal_complement(const Spacetime& M, const CausalHull& H);

// ---------------------------------------------------------------------------
// Regions (open causally convex sets)
// ---------------------------------------------------------------------------

enum class RegionKind { Diamond, Slab, TruncatedDiamond };

struct RegionPiece {
  int component = 0;
  RegionKind kind = RegionKind::Diamond;
  // Diamond / TruncatedDiamond: open base (a,b) on slice t0.
  // Slab: full spatial extent of the component between (t_lo, t_hi).
  double a = 0.0, b = 0.0;
  double t0 = 0.0;
  double t_lo = 0.0, t_hi = 0.0;  // time clip (slab bounds or diamond clip)

  std::optional<Interval> interval_at(const Component& comp, double t) const;
};

struct Region {
  std::vector<RegionPiece> pieces;
  bool is_multi_diamond() const;
};

Region make_diamond(const Spacetime& M, int component, double a, double b,
                    double t0);
Region make_slab(const Spacetime& M, double t_lo, double t_hi);
Region make_slab(const Spacetime& M, int component, double t_lo, double t_hi);
Region make_multi_diamond(const Spacetime& M,
                          const std::vector<RegionPiece>& diamonds);
Region truncate_region(const Spacetime& M, const Region& r, double t_lo,
                       double t_hi);

// Lattice causal-convexity check: every speed-<=1 path between sampled
// region points stays inside. Constructive regions pass by construction;
// this is the validator used on embedding images and in tests.
bool causally_convex(const Spacetime& M, const Region& r,
                     double sampling = 0.0);

bool causally_disjoint(const Spacetime& M, const Region& r1, const Region& r2);

// closure of the region as a compact set (base rectangles per dx-row)
CompactSet region_closure(const Spacetime& M, const Region& r);

// Nested compacts K_1 c K_2 c ... exhausting a diamond or multi-diamond
// region: closures of concentrically shrunken diamonds, shrink factors
// {0.5, 0.75, 0.9} plus the lattice-maximal compact, each with a
// multi-diamond neighbourhood based in O.
std::vector<CompactSet> admissible_compacts(const Spacetime& M,
                                            const Region& O, int n_samples);

// membership in K(M;O): K has a multi-diamond neighbourhood based in O
bool has_multidiamond_neighbourhood(const Spacetime& M, const CompactSet& K,
                                    const Region& O);

// ---------------------------------------------------------------------------
// Hyperbolic embeddings (catalog morphisms)
// ---------------------------------------------------------------------------

enum class MapKind {
  FullComponent,  // whole component, equal extent; slab image
  DiamondBase     // full domain slice injected as a diamond base
};

struct ComponentMap {
  int dom_component = 0;
  int cod_component = 0;
  double spatial_shift = 0.0;  // multiple of dx; rotation offset on circles
  double time_shift = 0.0;     // on the component's background step grid
  MapKind kind = MapKind::FullComponent;
};

struct Embedding {
  Spacetime domain;
  Spacetime codomain;
  std::vector<ComponentMap> maps;
  bool is_cauchy = false;  // set by validate_embedding
  Region image;            // set by validate_embedding
  std::string name;

  const ComponentMap& map_for(int dom_c) const;
  // slice time in the codomain that the domain's t_ref maps to
  double image_slice_time(int dom_c) const;
};

// Checks lattice-aligned isometry, orientation, causal convexity of the
// image and injectivity; fills is_cauchy and image. Throws on violation.
Embedding validate_embedding(Embedding raw);

Embedding identity_embedding(const Spacetime& M, const std::string& name = "id");
Embedding compose(const Embedding& outer, const Embedding& inner);

// image of a region under the embedding (used by covariance checks)
Region map_region(const Embedding& e, const Region& r);
CompactSet map_compact(const Embedding& e, const CompactSet& K);

// helpers -------------------------------------------------------------------

// nearest lattice index with position >= x - tol (segment convention)
int lattice_ceil(const Component& c, double x);
int lattice_floor(const Component& c, double x);
// strict-interior lattice indices of the open interval (a,b); wrap-aware
std::vector<int> interior_indices(const Component& c, double a, double b);
bool on_time_grid(const Component& c, double t, double tol = 1e-9);
double snap_to_time_grid(const Component& c, double t);

}  // namespace covarlab

#endif
