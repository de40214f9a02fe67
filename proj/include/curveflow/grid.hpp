#pragma once

// Periodic chart grids, tensor-field storage, finite differences and
// metric-weighted quadrature.
//
// Layout: node-major, row-major over axes (axis 0 slowest); within a node the
// index tuple is flattened row-major (first index slowest). For a rank-(p,q)
// field the first p slots are contravariant, the remaining q covariant.
// Differentiation appends the new covariant slot last, so (∇T)[..., m] is ∇_m T.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "curveflow/errors.hpp"

namespace curveflow {

constexpr int kMaxDim = 4;

using SmallMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

// ---------------------------------------------------------------------------
// Threading. Node loops may be split into contiguous chunks; every node writes
// only its own outputs, so results do not depend on the thread count.
// Reductions (integrate, l2_inner) are always sequential in node order.

inline int thread_count() {
  static const int count = [] {
    const char* env = std::getenv("CURVEFLOW_THREADS");
    int n = 1;
    if (env != nullptr) n = std::atoi(env);
    const int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    return std::clamp(n, 1, hw);
  }();
  return count;
}

// Calls f(std::integral_constant<int, D>) for the grid dimension, so node
// kernels can unroll their index loops.
template <class F>
decltype(auto) with_dim(int d, F&& f) {
  switch (d) {
    case 2: return f(std::integral_constant<int, 2>{});
    case 3: return f(std::integral_constant<int, 3>{});
    case 4: return f(std::integral_constant<int, 4>{});
  }
  throw DomainError("grid dimension must be 2, 3 or 4");
}

template <class Fn>
void parallel_nodes(std::size_t nodes, Fn&& fn) {
  const int threads = thread_count();
  if (threads <= 1 || nodes < 256) {
    for (std::size_t n = 0; n < nodes; ++n) fn(n);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (nodes + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(nodes, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] {
      for (std::size_t n = begin; n < end; ++n) fn(n);
    });
  }
  for (auto& th : pool) th.join();
}

// ---------------------------------------------------------------------------

struct ChartGrid {
  int dim = 2;
  std::array<int, kMaxDim> extents{};
  std::array<double, kMaxDim> lengths{};
  int fd_order = 4;

  static ChartGrid cube(int dim, int n, double length, int fd_order = 4) {
    ChartGrid g;
    g.dim = dim;
    for (int i = 0; i < dim; ++i) {
      g.extents[i] = n;
      g.lengths[i] = length;
    }
    g.fd_order = fd_order;
    g.validate();
    return g;
  }

  void validate() const {
    if (dim < 2 || dim > kMaxDim) throw DomainError("grid dimension must be 2, 3 or 4");
    if (fd_order != 2 && fd_order != 4) throw DomainError("fd_order must be 2 or 4");
    for (int i = 0; i < dim; ++i) {
      if (extents[i] < 8) throw DomainError("grid extents must be >= 8 on every axis");
      if (!(lengths[i] > 0.0) || !std::isfinite(lengths[i])) throw DomainError("grid lengths must be positive");
    }
  }

  double spacing(int axis) const { return lengths[axis] / extents[axis]; }

  double min_spacing() const {
    double h = spacing(0);
    for (int i = 1; i < dim; ++i) h = std::min(h, spacing(i));
    return h;
  }

  std::size_t nodes() const {
    std::size_t n = 1;
    for (int i = 0; i < dim; ++i) n *= static_cast<std::size_t>(extents[i]);
    return n;
  }

  // Product of spacings: the node-sum quadrature weight.
  double cell_volume() const {
    double v = 1.0;
    for (int i = 0; i < dim; ++i) v *= spacing(i);
    return v;
  }

  std::size_t stride(int axis) const {
    std::size_t s = 1;
    for (int i = dim - 1; i > axis; --i) s *= static_cast<std::size_t>(extents[i]);
    return s;
  }

  std::array<int, kMaxDim> coords(std::size_t node) const {
    std::array<int, kMaxDim> c{};
    for (int i = dim - 1; i >= 0; --i) {
      c[i] = static_cast<int>(node % extents[i]);
      node /= extents[i];
    }
    return c;
  }

  std::array<double, kMaxDim> position(std::size_t node) const {
    const auto c = coords(node);
    std::array<double, kMaxDim> x{};
    for (int i = 0; i < dim; ++i) x[i] = c[i] * spacing(i);
    return x;
  }

  // Node index shifted by `offset` along `axis` with periodic wrap.
  std::size_t shifted(std::size_t node, int axis, int offset) const {
    const std::size_t s = stride(axis);
    const int n = extents[axis];
    const int c = static_cast<int>((node / s) % n);
    const int wrapped = ((c + offset) % n + n) % n;
    return node + (static_cast<std::ptrdiff_t>(wrapped) - c) * static_cast<std::ptrdiff_t>(s);
  }

  friend bool operator==(const ChartGrid& a, const ChartGrid& b) {
    if (a.dim != b.dim || a.fd_order != b.fd_order) return false;
    for (int i = 0; i < a.dim; ++i)
      if (a.extents[i] != b.extents[i] || a.lengths[i] != b.lengths[i]) return false;
    return true;
  }
};

struct Rank {
  int up = 0;
  int down = 0;
  int order() const { return up + down; }
  friend bool operator==(const Rank&, const Rank&) = default;
};

inline std::size_t ipow(int base, int exp) {
  std::size_t r = 1;
  for (int i = 0; i < exp; ++i) r *= static_cast<std::size_t>(base);
  return r;
}

// Index pair (slot_a, slot_b) that is declared symmetric or antisymmetric.
struct SlotPair {
  int a = 0;
  int b = 1;
  bool antisymmetric = false;
  friend bool operator==(const SlotPair&, const SlotPair&) = default;
};

class TensorField {
 public:
  TensorField() = default;
  TensorField(const ChartGrid& grid, Rank rank)
      : grid_(grid), rank_(rank), comps_(ipow(grid.dim, rank.order())), data_(grid.nodes() * comps_, 0.0) {}

  const ChartGrid& grid() const { return grid_; }
  Rank rank() const { return rank_; }
  int order() const { return rank_.order(); }
  int dim() const { return grid_.dim; }
  std::size_t comps() const { return comps_; }
  std::size_t nodes() const { return grid_.nodes(); }

  double& at(std::size_t node, std::size_t comp) { return data_[node * comps_ + comp]; }
  double at(std::size_t node, std::size_t comp) const { return data_[node * comps_ + comp]; }

  std::span<double> node(std::size_t n) { return {data_.data() + n * comps_, comps_}; }
  std::span<const double> node(std::size_t n) const { return {data_.data() + n * comps_, comps_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  const std::vector<SlotPair>& symmetries() const { return symmetries_; }
  void declare(SlotPair pair) { symmetries_.push_back(pair); }
  void set_symmetries(std::vector<SlotPair> s) { symmetries_ = std::move(s); }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  TensorField& operator+=(const TensorField& o) {
    check_compatible(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  TensorField& operator-=(const TensorField& o) {
    check_compatible(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  TensorField& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }
  // this += s * o
  TensorField& axpy(double s, const TensorField& o) {
    check_compatible(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * o.data_[i];
    return *this;
  }

  friend TensorField operator+(TensorField a, const TensorField& b) { return a += b; }
  friend TensorField operator-(TensorField a, const TensorField& b) { return a -= b; }
  friend TensorField operator*(double s, TensorField a) { return a *= s; }

  void check_compatible(const TensorField& o) const {
    if (!(grid_ == o.grid_)) throw GridMismatch();
    if (!(rank_ == o.rank_)) throw DomainError("tensor rank mismatch");
  }

 private:
  ChartGrid grid_{};
  Rank rank_{};
  std::size_t comps_ = 1;
  std::vector<double> data_;
  std::vector<SlotPair> symmetries_;
};

// ---------------------------------------------------------------------------
// Index arithmetic on a single node's component block.

struct IndexSpace {
  int dim;
  int order;

  std::size_t size() const { return ipow(dim, order); }
  std::size_t stride(int slot) const { return ipow(dim, order - 1 - slot); }
  int index(std::size_t comp, int slot) const { return static_cast<int>((comp / stride(slot)) % dim); }
  std::size_t with(std::size_t comp, int slot, int value) const {
    const std::size_t s = stride(slot);
    return comp + (static_cast<std::ptrdiff_t>(value) - index(comp, slot)) * static_cast<std::ptrdiff_t>(s);
  }
  std::size_t swap_slots(std::size_t comp, int a, int b) const {
    const int ia = index(comp, a);
    const int ib = index(comp, b);
    return with(with(comp, a, ib), b, ia);
  }
};

// out[..a..] = sum_b M(a,b) in[..b..] on slot `slot`; in and out must differ.
inline void transform_slot(std::span<const double> in, std::span<double> out, IndexSpace space, int slot,
                           const SmallMatrix& m) {
  const std::size_t s = space.stride(slot);
  const int d = space.dim;
  const std::size_t block = d * s;
  for (std::size_t outer = 0; outer < in.size(); outer += block)
    for (int a = 0; a < d; ++a)
      for (std::size_t inner = 0; inner < s; ++inner) {
        double acc = 0.0;
        for (int b = 0; b < d; ++b) acc += m(a, b) * in[outer + b * s + inner];
        out[outer + a * s + inner] = acc;
      }
}

inline double symmetry_defect(const TensorField& t, SlotPair pair) {
  const IndexSpace space{t.dim(), t.order()};
  double worst = 0.0;
  const double sign = pair.antisymmetric ? -1.0 : 1.0;
  for (std::size_t n = 0; n < t.nodes(); ++n) {
    const auto blk = t.node(n);
    for (std::size_t c = 0; c < blk.size(); ++c)
      worst = std::max(worst, std::abs(blk[c] - sign * blk[space.swap_slots(c, pair.a, pair.b)]));
  }
  return worst;
}

// Projects onto the declared (anti)symmetry of a slot pair and records it.
inline TensorField symmetrized(TensorField t, SlotPair pair = {}) {
  const IndexSpace space{t.dim(), t.order()};
  const double sign = pair.antisymmetric ? -1.0 : 1.0;
  for (std::size_t n = 0; n < t.nodes(); ++n) {
    auto blk = t.node(n);
    for (std::size_t c = 0; c < blk.size(); ++c) {
      const std::size_t o = space.swap_slots(c, pair.a, pair.b);
      if (o <= c) continue;
      const double avg = 0.5 * (blk[c] + sign * blk[o]);
      blk[c] = avg;
      blk[o] = sign * avg;
    }
    if (pair.antisymmetric)
      for (std::size_t c = 0; c < blk.size(); ++c)
        if (space.index(c, pair.a) == space.index(c, pair.b)) blk[c] = 0.0;
  }
  t.declare(pair);
  return t;
}

// ---------------------------------------------------------------------------
// Finite differences.

namespace detail {

struct Neighbors {
  std::vector<std::size_t> p1, m1, p2, m2;
};

inline Neighbors build_neighbors(const ChartGrid& g, int axis) {
  Neighbors nb;
  const std::size_t n = g.nodes();
  nb.p1.resize(n);
  nb.m1.resize(n);
  nb.p2.resize(n);
  nb.m2.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    nb.p1[i] = g.shifted(i, axis, 1);
    nb.m1[i] = g.shifted(i, axis, -1);
    nb.p2[i] = g.shifted(i, axis, 2);
    nb.m2[i] = g.shifted(i, axis, -2);
  }
  return nb;
}

// Tables depend only on the extents and the axis; cached for the process.
inline const Neighbors& neighbors(const ChartGrid& g, int axis) {
  using Key = std::pair<std::array<int, kMaxDim>, int>;
  static std::map<Key, Neighbors> cache;
  static std::mutex mutex;
  std::array<int, kMaxDim> ext{};
  for (int i = 0; i < g.dim; ++i) ext[i] = g.extents[i];
  const Key key{ext, g.dim * kMaxDim + axis};
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, build_neighbors(g, axis)).first;
  return it->second;
}

}  // namespace detail

// Component-wise central difference along one axis with periodic wrap.
inline TensorField partial_derivative(const TensorField& f, int axis, int order) {
  const ChartGrid& g = f.grid();
  if (axis < 0 || axis >= g.dim) throw OutOfRange("axis out of range");
  if (order != 2 && order != 4) throw DomainError("stencil order must be 2 or 4");
  TensorField out(g, f.rank());
  const detail::Neighbors& nb = detail::neighbors(g, axis);
  const std::size_t c = f.comps();
  const double h = g.spacing(axis);
  const auto& d = f.data();
  auto& o = out.data();
  parallel_nodes(g.nodes(), [&](std::size_t n) {
    for (std::size_t k = 0; k < c; ++k) {
      const double dp1 = d[nb.p1[n] * c + k] - d[nb.m1[n] * c + k];
      if (order == 2) {
        o[n * c + k] = dp1 / (2.0 * h);
      } else {
        const double dp2 = d[nb.p2[n] * c + k] - d[nb.m2[n] * c + k];
        o[n * c + k] = (8.0 * dp1 - dp2) / (12.0 * h);
      }
    }
  });
  return out;
}

inline TensorField partial_derivative(const TensorField& f, int axis) {
  return partial_derivative(f, axis, f.grid().fd_order);
}

// Pure second derivative along one axis (compact stencil).
inline TensorField second_partial(const TensorField& f, int axis, int order) {
  const ChartGrid& g = f.grid();
  if (axis < 0 || axis >= g.dim) throw OutOfRange("axis out of range");
  TensorField out(g, f.rank());
  const detail::Neighbors& nb = detail::neighbors(g, axis);
  const std::size_t c = f.comps();
  const double h2 = g.spacing(axis) * g.spacing(axis);
  const auto& d = f.data();
  auto& o = out.data();
  parallel_nodes(g.nodes(), [&](std::size_t n) {
    for (std::size_t k = 0; k < c; ++k) {
      const double f0 = d[n * c + k];
      const double s1 = d[nb.p1[n] * c + k] + d[nb.m1[n] * c + k];
      if (order == 2) {
        o[n * c + k] = (s1 - 2.0 * f0) / h2;
      } else {
        const double s2 = d[nb.p2[n] * c + k] + d[nb.m2[n] * c + k];
        o[n * c + k] = (16.0 * s1 - s2 - 30.0 * f0) / (12.0 * h2);
      }
    }
  });
  return out;
}

// All coordinate partials; the derivative slot is appended last.
inline TensorField gradient(const TensorField& f) {
  const ChartGrid& g = f.grid();
  const int d = g.dim;
  if (g.fd_order != 2 && g.fd_order != 4) throw DomainError("stencil order must be 2 or 4");
  TensorField out(g, {f.rank().up, f.rank().down + 1});
  const std::size_t c = f.comps();
  const auto& src = f.data();
  auto& o = out.data();
  for (int a = 0; a < d; ++a) {
    const detail::Neighbors& nb = detail::neighbors(g, a);
    const double h = g.spacing(a);
    parallel_nodes(g.nodes(), [&](std::size_t n) {
      for (std::size_t k = 0; k < c; ++k) {
        const double dp1 = src[nb.p1[n] * c + k] - src[nb.m1[n] * c + k];
        double v;
        if (g.fd_order == 2) {
          v = dp1 / (2.0 * h);
        } else {
          const double dp2 = src[nb.p2[n] * c + k] - src[nb.m2[n] * c + k];
          v = (8.0 * dp1 - dp2) / (12.0 * h);
        }
        o[(n * c + k) * d + a] = v;
      }
    });
  }
  return out;
}

// Second partials ∂_a∂_b f with two appended slots, exactly symmetric in (a,b).
inline TensorField hessian_partials(const TensorField& f) {
  const ChartGrid& g = f.grid();
  const int d = g.dim;
  TensorField out(g, {f.rank().up, f.rank().down + 2});
  const std::size_t c = f.comps();
  std::vector<TensorField> first;
  for (int a = 0; a < d; ++a) first.push_back(partial_derivative(f, a));
  for (int a = 0; a < d; ++a) {
    const TensorField daa = second_partial(f, a, g.fd_order);
    for (std::size_t n = 0; n < g.nodes(); ++n)
      for (std::size_t k = 0; k < c; ++k) out.at(n, (k * d + a) * d + a) = daa.at(n, k);
    for (int b = a + 1; b < d; ++b) {
      const TensorField dab = partial_derivative(first[a], b);
      for (std::size_t n = 0; n < g.nodes(); ++n)
        for (std::size_t k = 0; k < c; ++k) {
          out.at(n, (k * d + a) * d + b) = dab.at(n, k);
          out.at(n, (k * d + b) * d + a) = dab.at(n, k);
        }
    }
  }
  out.declare({f.order(), f.order() + 1, false});
  return out;
}

// ---------------------------------------------------------------------------

class MetricField {
 public:
  MetricField() = default;

  explicit MetricField(TensorField g) : g_(std::move(g)) {
    if (!(g_.rank() == Rank{0, 2})) throw DomainError("metric must be a rank-(0,2) field");
    if (!g_.all_finite()) throw NonFinite("metric has non-finite components");
    const ChartGrid& grid = g_.grid();
    const int d = grid.dim;
    inv_ = TensorField(grid, {2, 0});
    vol_ = TensorField(grid, {0, 0});
    // Exact symmetry of the stored metric.
    g_ = symmetrized(std::move(g_));
    for (std::size_t n = 0; n < grid.nodes(); ++n) {
      SmallMatrix m = matrix_at(n);
      Eigen::LLT<SmallMatrix> llt(m);
      if (llt.info() != Eigen::Success) {
        Eigen::SelfAdjointEigenSolver<SmallMatrix> es(m);
        throw SingularMetric(n, es.eigenvalues()(0));
      }
      SmallMatrix inv = llt.solve(SmallMatrix::Identity(d, d));
      double det = 1.0;
      const SmallMatrix l = llt.matrixL();
      for (int i = 0; i < d; ++i) det *= l(i, i) * l(i, i);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) inv_.at(n, i * d + j) = 0.5 * (inv(i, j) + inv(j, i));
      vol_.at(n, 0) = std::sqrt(det);
    }
    inv_.declare({0, 1, false});
  }

  const TensorField& g() const { return g_; }
  const TensorField& inverse() const { return inv_; }
  const TensorField& volume() const { return vol_; }
  const ChartGrid& grid() const { return g_.grid(); }
  int dim() const { return g_.dim(); }

  SmallMatrix matrix_at(std::size_t n) const { return block_matrix(g_, n); }
  SmallMatrix inverse_at(std::size_t n) const { return block_matrix(inv_, n); }

  static SmallMatrix block_matrix(const TensorField& t, std::size_t n) {
    const int d = t.dim();
    SmallMatrix m(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) m(i, j) = t.at(n, i * d + j);
    return m;
  }

  double min_eigenvalue() const {
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < g_.nodes(); ++n) {
      Eigen::SelfAdjointEigenSolver<SmallMatrix> es(matrix_at(n), Eigen::EigenvaluesOnly);
      lo = std::min(lo, es.eigenvalues()(0));
    }
    return lo;
  }

  static MetricField flat(const ChartGrid& grid, double scale = 1.0) {
    TensorField g(grid, {0, 2});
    const int d = grid.dim;
    for (std::size_t n = 0; n < grid.nodes(); ++n)
      for (int i = 0; i < d; ++i) g.at(n, i * d + i) = scale;
    return MetricField(std::move(g));
  }

 private:
  TensorField g_;
  TensorField inv_;
  TensorField vol_;
};

inline void require_same_grid(const ChartGrid& a, const ChartGrid& b) {
  if (!(a == b)) throw GridMismatch();
}

// Raises every covariant slot with g^{-1} and lowers every contravariant slot
// with g; the result has the mirrored rank layout in the same slots.
inline void flip_all_slots(std::span<const double> in, std::span<double> out, std::span<double> scratch,
                           IndexSpace space, int up, const SmallMatrix& g, const SmallMatrix& ginv) {
  std::span<const double> src = in;
  std::span<double> bufs[2] = {out, scratch};
  int which = 0;
  if (space.order == 0) {
    out[0] = in[0];
    return;
  }
  // Ensure the final write lands in `out`.
  if (space.order % 2 == 0) which = 1;
  for (int s = 0; s < space.order; ++s) {
    transform_slot(src, bufs[which], space, s, s < up ? g : ginv);
    src = bufs[which];
    which ^= 1;
  }
}

// Pointwise ⟨U,V⟩_g at node n.
inline double pointwise_inner(const TensorField& u, const TensorField& v, const MetricField& g, std::size_t n,
                              std::vector<double>& buf) {
  const std::size_t c = u.comps();
  buf.resize(2 * c);
  const IndexSpace space{u.dim(), u.order()};
  flip_all_slots(v.node(n), std::span<double>(buf.data(), c), std::span<double>(buf.data() + c, c), space,
                 u.rank().up, g.matrix_at(n), g.inverse_at(n));
  const auto un = u.node(n);
  double acc = 0.0;
  for (std::size_t k = 0; k < c; ++k) acc += un[k] * buf[k];
  return acc;
}

inline TensorField pointwise_norm_squared(const TensorField& u, const MetricField& g) {
  require_same_grid(u.grid(), g.grid());
  TensorField out(u.grid(), {0, 0});
  const std::size_t comps = u.comps();
  if (comps > 256 || u.order() == 0) {
    std::vector<double> buf;
    for (std::size_t n = 0; n < u.nodes(); ++n) out.at(n, 0) = pointwise_inner(u, u, g, n, buf);
    return out;
  }
  // same slot-by-slot arithmetic as flip_all_slots, on fixed-size buffers
  const int r = u.order(), up = u.rank().up;
  with_dim(u.dim(), [&](auto dc) {
    constexpr int d = decltype(dc)::value;
    std::size_t stride[8];
    for (int s = 0; s < r; ++s) stride[s] = IndexSpace{d, r}.stride(s);
    parallel_nodes(u.nodes(), [&](std::size_t n) {
      const double* un = u.node(n).data();
      const double* gm = g.g().node(n).data();
      const double* gi = g.inverse().node(n).data();
      double a[256], b[256];
      const double* src = un;
      double* dst = a;
      for (int s = 0; s < r; ++s) {
        const double* m = s < up ? gm : gi;
        const std::size_t st = stride[s], block = d * st;
        for (std::size_t outer = 0; outer < comps; outer += block)
          for (int i = 0; i < d; ++i)
            for (std::size_t inner = 0; inner < st; ++inner) {
              double acc = 0.0;
              for (int j = 0; j < d; ++j) acc += m[i * d + j] * src[outer + j * st + inner];
              dst[outer + i * st + inner] = acc;
            }
        src = dst;
        dst = dst == a ? b : a;
      }
      double acc = 0.0;
      for (std::size_t k = 0; k < comps; ++k) acc += un[k] * src[k];
      out.at(n, 0) = acc;
    });
  });
  return out;
}

// ∫ f dμ_g as the plain periodic node sum Σ f √det g ΠΔx_i (sequential order).
inline double integrate(const TensorField& f, const MetricField& g) {
  require_same_grid(f.grid(), g.grid());
  if (f.order() != 0) throw DomainError("integrate expects a scalar field");
  double acc = 0.0;
  for (std::size_t n = 0; n < f.nodes(); ++n) acc += f.at(n, 0) * g.volume().at(n, 0);
  return acc * f.grid().cell_volume();
}

// (U, V) = ∫ ⟨U, V⟩_g dμ_g. The pointwise pairing is evaluated in both
// orders and averaged so that the result is bitwise symmetric in (U, V).
inline double l2_inner(const TensorField& u, const TensorField& v, const MetricField& g) {
  require_same_grid(u.grid(), v.grid());
  require_same_grid(u.grid(), g.grid());
  if (!(u.rank() == v.rank())) throw DomainError("l2_inner rank mismatch");
  const bool same = &u == &v || u.data() == v.data();
  std::vector<double> buf;
  double acc = 0.0;
  for (std::size_t n = 0; n < u.nodes(); ++n) {
    double p = pointwise_inner(u, v, g, n, buf);
    if (!same) p = 0.5 * (p + pointwise_inner(v, u, g, n, buf));
    acc += p * g.volume().at(n, 0);
  }
  return acc * u.grid().cell_volume();
}

inline double l2_norm_squared(const TensorField& u, const MetricField& g) { return l2_inner(u, u, g); }

// Builds a field by evaluating fn(position, component-span) at every node.
template <class Fn>
TensorField make_field(const ChartGrid& grid, Rank rank, Fn&& fn) {
  TensorField t(grid, rank);
  for (std::size_t n = 0; n < grid.nodes(); ++n) fn(grid.position(n), t.node(n));
  return t;
}

}  // namespace curveflow
