#pragma once

// Riemannian tensor calculus on grid metrics.
//
// Sign convention (pinned by tests, see docs/conventions.md):
//   R(∂_i,∂_j)∂_k = ∇_i∇_j∂_k − ∇_j∇_i∂_k,   R_{ijkl} = g(R(∂_i,∂_j)∂_k, ∂_l),
//   Rc_{jk} = g^{il} R_{ijkl},   S = g^{jk} Rc_{jk}.
// With these choices the unit round 3-sphere has R_{ijji} = 1, Rc = 2g, S = 6.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "curveflow/grid.hpp"

namespace curveflow {

constexpr int kMaxOrder = 10;
using IndexTuple = std::array<int, kMaxOrder>;

inline IndexTuple decode(std::size_t comp, int dim, int order) {
  IndexTuple idx{};
  for (int s = order - 1; s >= 0; --s) {
    idx[s] = static_cast<int>(comp % dim);
    comp /= dim;
  }
  return idx;
}

inline std::size_t encode(const IndexTuple& idx, int dim, int order) {
  std::size_t c = 0;
  for (int s = 0; s < order; ++s) c = c * dim + idx[s];
  return c;
}

// ---------------------------------------------------------------------------
// Connection

struct Connection {
  TensorField gamma;    // Γ^k_{ij}, slots [k][i][j]
  TensorField lowered;  // Γ_{m,ij} = g_{mk} Γ^k_{ij}, slots [m][i][j]
};

inline Connection christoffel(const MetricField& g) {
  const ChartGrid& grid = g.grid();
  const int d = grid.dim;
  const TensorField dg = gradient(g.g());  // [i][j][m] = ∂_m g_ij
  Connection c{TensorField(grid, {1, 2}), TensorField(grid, {0, 3})};
  parallel_nodes(grid.nodes(), [&](std::size_t n) {
    const auto gd = dg.node(n);
    auto lo = c.lowered.node(n);
    auto up = c.gamma.node(n);
    auto dgat = [&](int i, int j, int m) { return gd[(i * d + j) * d + m]; };
    for (int m = 0; m < d; ++m)
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
          lo[(m * d + i) * d + j] = 0.5 * (dgat(j, m, i) + dgat(i, m, j) - dgat(i, j, m));
    const auto ginv = g.inverse().node(n);
    for (int k = 0; k < d; ++k)
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
          double acc = 0.0;
          for (int m = 0; m < d; ++m) acc += ginv[k * d + m] * lo[(m * d + i) * d + j];
          up[(k * d + i) * d + j] = acc;
        }
  });
  c.gamma.declare({1, 2, false});
  c.lowered.declare({1, 2, false});
  return c;
}

// ∇T with the derivative slot appended last:
//   (∇T)[I, m] = ∂_m T[I] + Σ_up Γ^{i_s}_{m p} T[I_s→p] − Σ_down Γ^p_{m i_s} T[I_s→p].
inline TensorField covariant_derivative(const TensorField& t, const Connection& conn) {
  require_same_grid(t.grid(), conn.gamma.grid());
  const ChartGrid& grid = t.grid();
  const int r = t.order();
  const int up = t.rank().up;
  TensorField out = gradient(t);
  // per component and slot: the slot's index and the component with it zeroed
  const IndexSpace space{grid.dim, r};
  const std::size_t comps = space.size();
  std::vector<int> slot_index(comps * r);
  std::vector<std::size_t> slot_base(comps * r), stride(r);
  for (int s = 0; s < r; ++s) stride[s] = space.stride(s);
  for (std::size_t c = 0; c < comps; ++c)
    for (int s = 0; s < r; ++s) {
      slot_index[c * r + s] = space.index(c, s);
      slot_base[c * r + s] = c - slot_index[c * r + s] * space.stride(s);
    }
  with_dim(grid.dim, [&](auto dc) {
    constexpr int d = decltype(dc)::value;
    parallel_nodes(grid.nodes(), [&](std::size_t n) {
      const double* tn = t.node(n).data();
      const double* gam = conn.gamma.node(n).data();
      double* on = out.node(n).data();
      for (std::size_t c = 0; c < comps; ++c) {
        double acc[d] = {};
        for (int s = 0; s < r; ++s) {
          const int is = slot_index[c * r + s];
          const std::size_t base = slot_base[c * r + s];
          const std::size_t st = stride[s];
          if (s < up) {
            for (int m = 0; m < d; ++m)
              for (int p = 0; p < d; ++p) acc[m] += gam[(is * d + m) * d + p] * tn[base + p * st];
          } else {
            for (int m = 0; m < d; ++m)
              for (int p = 0; p < d; ++p) acc[m] -= gam[(p * d + m) * d + is] * tn[base + p * st];
          }
        }
        for (int m = 0; m < d; ++m) on[c * d + m] += acc[m];
      }
    });
  });
  return out;
}

// Iterated covariant derivative ∇^{(m)}T.
inline TensorField covariant_derivative(const TensorField& t, const Connection& conn, int times) {
  TensorField out = t;
  for (int i = 0; i < times; ++i) out = covariant_derivative(out, conn);
  return out;
}

// Contracts slots a < b. Two covariant slots are contracted with g^{-1}, two
// contravariant slots with g, and a mixed pair by plain trace.
inline TensorField contract(const TensorField& t, int a, int b, const MetricField& g) {
  if (a > b) std::swap(a, b);
  const int r = t.order();
  if (a == b || a < 0 || b >= r) throw DomainError("invalid contraction slots");
  const int d = t.dim();
  const int up = t.rank().up;
  const int ups_removed = (a < up ? 1 : 0) + (b < up ? 1 : 0);
  TensorField out(t.grid(), {up - ups_removed, t.rank().down - (2 - ups_removed)});
  const IndexSpace in_space{d, r};
  const int ro = r - 2;
  std::vector<std::size_t> bases(out.comps());  // input component with slots a,b at zero
  for (std::size_t oc = 0; oc < bases.size(); ++oc) {
    const IndexTuple oi = decode(oc, d, ro);
    IndexTuple full{};
    for (int s = 0, k = 0; s < r; ++s) {
      if (s == a || s == b) continue;
      full[s] = oi[k++];
    }
    bases[oc] = encode(full, d, r);
  }
  const std::size_t sa = in_space.stride(a), sb = in_space.stride(b);
  const TensorField& w = ups_removed == 0 ? g.inverse() : g.g();
  parallel_nodes(t.nodes(), [&](std::size_t n) {
    const auto tn = t.node(n);
    const auto wn = w.node(n);
    auto on = out.node(n);
    for (std::size_t oc = 0; oc < on.size(); ++oc) {
      const std::size_t base = bases[oc];
      double acc = 0.0;
      for (int i = 0; i < d; ++i) {
        if (ups_removed == 1) {
          acc += tn[base + i * sa + i * sb];
        } else {
          for (int j = 0; j < d; ++j) acc += wn[i * d + j] * tn[base + i * sa + j * sb];
        }
      }
      on[oc] = acc;
    }
  });
  return out;
}

// f·g for a scalar field f.
inline TensorField scalar_times_metric(const TensorField& f, const MetricField& g) {
  TensorField out(g.grid(), {0, 2});
  const std::size_t c = out.comps();
  for (std::size_t n = 0; n < f.nodes(); ++n)
    for (std::size_t k = 0; k < c; ++k) out.at(n, k) = f.at(n, 0) * g.g().at(n, k);
  out.declare({0, 1, false});
  return out;
}

// Rough Laplacian Δ T = g^{ab} ∇_a ∇_b T.
inline TensorField laplacian(const TensorField& t, const MetricField& g, const Connection& conn) {
  const TensorField hess = covariant_derivative(covariant_derivative(t, conn), conn);
  const int r = t.order();
  return contract(hess, r, r + 1, g);
}

inline TensorField laplacian_iter(const TensorField& t, const MetricField& g, const Connection& conn, int k) {
  if (k < 0) throw DomainError("laplacian iteration count must be >= 0");
  TensorField out = t;
  for (int i = 0; i < k; ++i) out = laplacian(out, g, conn);
  return out;
}

inline TensorField laplacian_iter(const TensorField& t, const MetricField& g, int k) {
  return laplacian_iter(t, g, christoffel(g), k);
}

// ---------------------------------------------------------------------------
// Curvature

// `corrupted` transposes the last two slots of the second-derivative part of
// Rm only. It exists as a negative control for the identity suite.
enum class CurvatureConvention { standard, corrupted };

struct CurvatureBundle {
  Connection conn;
  TensorField rm;        // R_{ijkl}
  TensorField rc;        // Rc_{jk}
  TensorField s;         // scalar curvature
  TensorField e;         // Einstein tensor Rc − (S/2) g
  TensorField schouten;  // dim >= 3 only
  TensorField weyl;      // dim >= 3 only
};

inline TensorField kulkarni_nomizu(const TensorField& b, const TensorField& h);

// R_{ijkl} = ½(∂_i∂_k g_jl + ∂_j∂_l g_ik − ∂_i∂_l g_jk − ∂_j∂_k g_il)
//          + g^{pq}(Γ_{p,ik} Γ_{q,jl} − Γ_{p,il} Γ_{q,jk}).
// Mixed partials are stored symmetrically, so the algebraic Riemann
// symmetries and the first Bianchi identity hold to roundoff.
inline TensorField riemann_from(const MetricField& g, const Connection& conn,
                                CurvatureConvention conv = CurvatureConvention::standard) {
  const ChartGrid& grid = g.grid();
  const TensorField ddg = hessian_partials(g.g());  // [i][j][a][b] = ∂_a∂_b g_ij
  TensorField rm(grid, {0, 4});
  const bool corrupt = conv == CurvatureConvention::corrupted;
  with_dim(grid.dim, [&](auto dc) {
    constexpr int d = decltype(dc)::value;
    parallel_nodes(grid.nodes(), [&](std::size_t n) {
      const double* h = ddg.node(n).data();
      const double* lo = conn.lowered.node(n).data();
      const double* gam = conn.gamma.node(n).data();
      double* out = rm.node(n).data();
      auto dd = [&](int i, int j, int a, int b) { return h[((i * d + j) * d + a) * d + b]; };
      auto at = [&](int i, int j, int k, int l) -> double& { return out[((i * d + j) * d + k) * d + l]; };
      // g^{pq}Γ_{p,ik}Γ_{q,jl} = Γ_{p,ik}Γ^p_{jl}; only i<j, k<l are computed
      for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j)
          for (int k = 0; k < d; ++k)
            for (int l = k + 1; l < d; ++l) {
              double second = 0.5 * (dd(j, l, i, k) + dd(i, k, j, l) - dd(j, k, i, l) - dd(i, l, j, k));
              if (corrupt) second = -second;
              double quad = 0.0;
              for (int p = 0; p < d; ++p)
                quad += lo[(p * d + i) * d + k] * gam[(p * d + j) * d + l] -
                        lo[(p * d + i) * d + l] * gam[(p * d + j) * d + k];
              const double v = second + quad;
              at(i, j, k, l) = v;
              at(j, i, k, l) = -v;
              at(i, j, l, k) = -v;
              at(j, i, l, k) = v;
            }
    });
  });
  rm.set_symmetries({{0, 1, true}, {2, 3, true}});
  return rm;
}

inline TensorField ricci_from(const TensorField& rm, const MetricField& g) {
  TensorField rc = contract(rm, 0, 3, g);
  rc.declare({0, 1, false});
  return rc;
}

inline TensorField scalar_from(const TensorField& rc, const MetricField& g) { return contract(rc, 0, 1, g); }

inline TensorField einstein_from(const TensorField& rc, const TensorField& s, const MetricField& g) {
  TensorField e = rc;
  e.axpy(-0.5, scalar_times_metric(s, g));
  return e;
}

inline TensorField schouten_from(const TensorField& rc, const TensorField& s, const MetricField& g) {
  const int d = g.dim();
  if (d < 3) throw DomainError("Schouten tensor requires dim >= 3");
  TensorField p = rc;
  p.axpy(-1.0 / (2.0 * (d - 1)), scalar_times_metric(s, g));
  p *= 1.0 / (d - 2);
  return p;
}

// `with_weyl = false` leaves schouten and weyl empty; the time steppers use it.
inline CurvatureBundle curvature(const MetricField& g, CurvatureConvention conv = CurvatureConvention::standard,
                                 bool with_weyl = true) {
  CurvatureBundle b;
  b.conn = christoffel(g);
  b.rm = riemann_from(g, b.conn, conv);
  b.rc = ricci_from(b.rm, g);
  b.s = scalar_from(b.rc, g);
  b.e = einstein_from(b.rc, b.s, g);
  if (with_weyl && g.dim() >= 3) {
    b.schouten = schouten_from(b.rc, b.s, g);
    b.weyl = b.rm;
    b.weyl -= kulkarni_nomizu(b.schouten, g.g());
  }
  return b;
}

inline TensorField riemann(const MetricField& g) { return curvature(g).rm; }
inline TensorField ricci(const MetricField& g) { return curvature(g).rc; }
inline TensorField scalar_curv(const MetricField& g) { return curvature(g).s; }
inline TensorField einstein(const MetricField& g) { return curvature(g).e; }
inline TensorField schouten(const MetricField& g) {
  if (g.dim() < 3) throw DomainError("Schouten tensor requires dim >= 3");
  return curvature(g).schouten;
}
inline TensorField weyl(const MetricField& g) {
  if (g.dim() < 3) throw DomainError("Weyl tensor requires dim >= 3");
  return curvature(g).weyl;
}

// ---------------------------------------------------------------------------

inline void require_symmetric(const TensorField& b, const char* what) {
  if (!(b.rank() == Rank{0, 2})) throw DomainError(std::string(what) + " must be a rank-(0,2) field");
  const double scale = std::max(1.0, b.max_abs());
  if (symmetry_defect(b, {0, 1, false}) > 1e-12 * scale) throw DomainError(std::string(what) + " must be symmetric");
}

// (b⊙h)_{abcd} = b_ad h_bc + b_bc h_ad − b_ac h_bd − b_bd h_ac.
inline TensorField kulkarni_nomizu(const TensorField& b, const TensorField& h) {
  require_symmetric(b, "Kulkarni-Nomizu factor");
  require_symmetric(h, "Kulkarni-Nomizu factor");
  require_same_grid(b.grid(), h.grid());
  const int d = b.dim();
  TensorField out(b.grid(), {0, 4});
  parallel_nodes(b.nodes(), [&](std::size_t n) {
    const auto bn = b.node(n);
    const auto hn = h.node(n);
    auto on = out.node(n);
    for (int a = 0; a < d; ++a)
      for (int bb = 0; bb < d; ++bb)
        for (int c = 0; c < d; ++c)
          for (int e = 0; e < d; ++e)
            on[((a * d + bb) * d + c) * d + e] = bn[a * d + e] * hn[bb * d + c] + bn[bb * d + c] * hn[a * d + e] -
                                                 bn[a * d + c] * hn[bb * d + e] - bn[bb * d + e] * hn[a * d + c];
  });
  out.set_symmetries({{0, 1, true}, {2, 3, true}});
  return out;
}

inline TensorField kulkarni_nomizu(const TensorField& b, const MetricField& g) { return kulkarni_nomizu(b, g.g()); }

// Symmetric part of the covariant Hessian ∇∇f of a scalar.
inline TensorField hessian(const TensorField& f, const Connection& conn) {
  return symmetrized(covariant_derivative(covariant_derivative(f, conn), conn));
}

// B_ij = ΔP_ij − ∇_i∇_j J − 2 P^{kl} W_{kijl} + |P|² g_ij − 4 P_i^k P_kj, J = tr P.
inline TensorField bach(const MetricField& g) {
  if (g.dim() != 4) throw DomainError("Bach tensor requires dim = 4");
  const CurvatureBundle cb = curvature(g);
  const int d = 4;
  const TensorField& p = cb.schouten;
  const TensorField lap_p = laplacian(p, g, cb.conn);
  const TensorField j = contract(p, 0, 1, g);
  const TensorField hess_j = hessian(j, cb.conn);
  TensorField out(g.grid(), {0, 2});
  for (std::size_t n = 0; n < g.grid().nodes(); ++n) {
    const auto gi = g.inverse().node(n);
    const auto gn = g.g().node(n);
    const auto pn = p.node(n);
    const auto wn = cb.weyl.node(n);
    // P^{kl} and P_i^k
    double pup[16], pmix[16];
    for (int k = 0; k < d; ++k)
      for (int l = 0; l < d; ++l) {
        double acc = 0.0, mix = 0.0;
        for (int a = 0; a < d; ++a) {
          mix += gi[k * d + a] * pn[a * d + l];
          for (int b = 0; b < d; ++b) acc += gi[k * d + a] * gi[l * d + b] * pn[a * d + b];
        }
        pup[k * d + l] = acc;
        pmix[k * d + l] = mix;  // P^k_l
      }
    double pnorm = 0.0;
    for (int k = 0; k < 16; ++k) pnorm += pup[k] * pn[k];
    for (int i = 0; i < d; ++i)
      for (int jj = 0; jj < d; ++jj) {
        double wterm = 0.0, p2 = 0.0;
        for (int k = 0; k < d; ++k) {
          p2 += pn[i * d + k] * pmix[k * d + jj];
          for (int l = 0; l < d; ++l) wterm += pup[k * d + l] * wn[((k * d + i) * d + jj) * d + l];
        }
        out.at(n, i * d + jj) = lap_p.at(n, i * d + jj) - hess_j.at(n, i * d + jj) - 2.0 * wterm +
                                pnorm * gn[i * d + jj] - 4.0 * p2;
      }
  }
  return symmetrized(std::move(out));
}

// Θ_{2k} = (−1)^{k+1} 2 (Δ^k Rc + α Δ^k S g + β Δ^{k−1} ∇∇S).
inline TensorField obstruction_leading(const MetricField& g, const CurvatureBundle& cb, int k, double alpha,
                                       double beta) {
  if (k < 0) throw DomainError("k must be >= 0");
  if (k == 0 && beta != 0.0) throw DomainError("k = 0 requires beta = 0");
  TensorField acc = laplacian_iter(cb.rc, g, cb.conn, k);
  if (alpha != 0.0) acc.axpy(alpha, scalar_times_metric(laplacian_iter(cb.s, g, cb.conn, k), g));
  if (k >= 1 && beta != 0.0) acc.axpy(beta, laplacian_iter(hessian(cb.s, cb.conn), g, cb.conn, k - 1));
  acc *= ((k % 2 == 0) ? -2.0 : 2.0);
  return symmetrized(std::move(acc));
}

inline TensorField obstruction_leading(const MetricField& g, int k, double alpha, double beta) {
  return obstruction_leading(g, curvature(g), k, alpha, beta);
}

// 𝓛_X T = X^m ∇_m T + Σ_down T[..m..] ∇_{i_s} X^m − Σ_up T[..m..] ∇_m X^{i_s}.
inline TensorField lie_derivative(const TensorField& t, const TensorField& x, const Connection& conn) {
  if (!(x.rank() == Rank{1, 0})) throw DomainError("Lie derivative needs a vector field");
  require_same_grid(t.grid(), x.grid());
  const int d = t.dim();
  const int r = t.order();
  const int up = t.rank().up;
  const TensorField dt = covariant_derivative(t, conn);
  const TensorField dx = covariant_derivative(x, conn);  // [a][m] = ∇_m X^a
  TensorField out(t.grid(), t.rank());
  const IndexSpace space{d, r};
  parallel_nodes(t.nodes(), [&](std::size_t n) {
    const auto tn = t.node(n);
    const auto dtn = dt.node(n);
    const auto xn = x.node(n);
    const auto dxn = dx.node(n);
    auto on = out.node(n);
    for (std::size_t c = 0; c < tn.size(); ++c) {
      double acc = 0.0;
      for (int m = 0; m < d; ++m) acc += xn[m] * dtn[c * d + m];
      for (int s = 0; s < r; ++s) {
        const int is = space.index(c, s);
        const std::size_t st = space.stride(s);
        const std::size_t base = c - is * st;
        for (int m = 0; m < d; ++m) {
          if (s < up)
            acc -= tn[base + m * st] * dxn[is * d + m];
          else
            acc += tn[base + m * st] * dxn[m * d + is];
        }
      }
      on[c] = acc;
    }
  });
  return out;
}

inline TensorField lie_derivative(const TensorField& t, const TensorField& x, const MetricField& g) {
  return lie_derivative(t, x, christoffel(g));
}

// Linearization of R_{ijkl} at g in direction h:
//   −½(∇_i∇_l h_jk + ∇_j∇_k h_il − ∇_i∇_k h_jl − ∇_j∇_l h_ik) + ½ g^{mp}(R_{ijkp} h_ml − R_{ijlp} h_km).
inline TensorField linearized_riemann(const MetricField& g, const CurvatureBundle& cb, const TensorField& h) {
  require_symmetric(h, "linearization direction");
  require_same_grid(g.grid(), h.grid());
  const int d = g.dim();
  const TensorField hh = covariant_derivative(h, cb.conn, 2);  // [a][b][x][y] = ∇_y∇_x h_ab
  TensorField out(g.grid(), {0, 4});
  parallel_nodes(g.grid().nodes(), [&](std::size_t n) {
    const auto hn = hh.node(n);
    const auto h0 = h.node(n);
    const auto rn = cb.rm.node(n);
    const auto gi = g.inverse().node(n);
    auto on = out.node(n);
    // ∇_y∇_x h_ab
    auto nn = [&](int y, int x, int a, int b) { return hn[((a * d + b) * d + x) * d + y]; };
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        for (int k = 0; k < d; ++k)
          for (int l = 0; l < d; ++l) {
            const double second = -0.5 * (nn(i, l, j, k) + nn(j, k, i, l) - nn(i, k, j, l) - nn(j, l, i, k));
            double lower = 0.0;
            for (int m = 0; m < d; ++m)
              for (int p = 0; p < d; ++p)
                lower += gi[m * d + p] * (rn[((i * d + j) * d + k) * d + p] * h0[m * d + l] -
                                          rn[((i * d + j) * d + l) * d + p] * h0[k * d + m]);
            on[((i * d + j) * d + k) * d + l] = second + 0.5 * lower;
          }
  });
  return out;
}

inline TensorField linearized_riemann(const MetricField& g, const TensorField& h) {
  return linearized_riemann(g, curvature(g), h);
}

// g-trace of ∇T between `slot` and the derivative slot.
inline TensorField divergence(const TensorField& t, const MetricField& g, const Connection& conn, int slot = 0) {
  if (t.order() == 0) throw DomainError("divergence of a scalar is undefined");
  if (slot < 0 || slot >= t.order()) throw OutOfRange("divergence slot out of range");
  return contract(covariant_derivative(t, conn), slot, t.order(), g);
}

inline TensorField divergence(const TensorField& t, const MetricField& g, int slot = 0) {
  return divergence(t, g, christoffel(g), slot);
}

// ([∇_a,∇_b] W) − (curvature action on W), slots [I][a][b]; W of any rank.
//   contravariant slot: +R_{abm}^{c} W^m;  covariant slot: −R_{abc}^{m} W_m.
inline TensorField commutator_residual(const TensorField& w, const MetricField& g, const CurvatureBundle& cb) {
  const int d = w.dim();
  const int r = w.order();
  const int up = w.rank().up;
  const TensorField ww = covariant_derivative(w, cb.conn, 2);  // [I][x][y] = ∇_y∇_x W
  TensorField out(w.grid(), {w.rank().up, w.rank().down + 2});
  const IndexSpace space{d, r};
  parallel_nodes(w.nodes(), [&](std::size_t n) {
    const auto wn = w.node(n);
    const auto wwn = ww.node(n);
    const auto rn = cb.rm.node(n);
    const auto gi = g.inverse().node(n);
    auto on = out.node(n);
    // R_{abm}^{c} = g^{cp} R_{abmp}
    auto rup = [&](int a, int b, int m, int c) {
      double acc = 0.0;
      for (int p = 0; p < d; ++p) acc += gi[c * d + p] * rn[((a * d + b) * d + m) * d + p];
      return acc;
    };
    for (std::size_t c = 0; c < wn.size(); ++c)
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
          const double comm = wwn[(c * d + b) * d + a] - wwn[(c * d + a) * d + b];
          double action = 0.0;
          for (int s = 0; s < r; ++s) {
            const int is = space.index(c, s);
            const std::size_t st = space.stride(s);
            const std::size_t base = c - is * st;
            for (int m = 0; m < d; ++m) {
              if (s < up)
                action += rup(a, b, m, is) * wn[base + m * st];
              else
                action -= rup(a, b, is, m) * wn[base + m * st];
            }
          }
          on[(c * d + a) * d + b] = comm - action;
        }
  });
  return out;
}

inline double commutator_defect(const TensorField& w, const MetricField& g) {
  return commutator_residual(w, g, curvature(g)).max_abs();
}

}  // namespace curveflow
