#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "curveflow/fields.hpp"
#include "curveflow/tensor_calc.hpp"
#include "test_support.hpp"

using namespace curveflow;
using curveflow::testing::conformal_gamma;
using curveflow::testing::converges_at;
using curveflow::testing::kTwoPi;
using curveflow::testing::standard_phi;

namespace {

double max_diff(const TensorField& a, const TensorField& b) { return (a - b).max_abs(); }

// Max over nodes of |R_{abcd} + R_{bacd}| etc., relative to max|R|.
struct RmDefects {
  double antisym_ab = 0, antisym_cd = 0, pair = 0, bianchi = 0;
};

RmDefects rm_defects(const TensorField& rm) {
  const int d = rm.dim();
  RmDefects r;
  auto at = [&](std::size_t n, int a, int b, int c, int e) { return rm.at(n, ((a * d + b) * d + c) * d + e); };
  for (std::size_t n = 0; n < rm.nodes(); ++n)
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b)
        for (int c = 0; c < d; ++c)
          for (int e = 0; e < d; ++e) {
            r.antisym_ab = std::max(r.antisym_ab, std::abs(at(n, a, b, c, e) + at(n, b, a, c, e)));
            r.antisym_cd = std::max(r.antisym_cd, std::abs(at(n, a, b, c, e) + at(n, a, b, e, c)));
            r.pair = std::max(r.pair, std::abs(at(n, a, b, c, e) - at(n, c, e, a, b)));
            r.bianchi =
                std::max(r.bianchi, std::abs(at(n, a, b, c, e) + at(n, b, c, a, e) + at(n, c, a, b, e)));
          }
  const double s = std::max(rm.max_abs(), 1e-300);
  r.antisym_ab /= s;
  r.antisym_cd /= s;
  r.pair /= s;
  r.bianchi /= s;
  return r;
}

double christoffel_error(int n) {
  const ChartGrid grid = ChartGrid::cube(2, n, kTwoPi);
  const FourierScalar phi = standard_phi(2);
  const Connection c = christoffel(conformal_metric(grid, phi));
  double err = 0.0;
  for (std::size_t node = 0; node < grid.nodes(); ++node) {
    const auto x = grid.position(node);
    for (int k = 0; k < 2; ++k)
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
          err = std::max(err, std::abs(c.gamma.at(node, (k * 2 + i) * 2 + j) - conformal_gamma(phi, grid, x, k, i, j)));
  }
  return err;
}

// 2D: S = 2K with K = −e^{−2φ} Δ₀φ, and R_{0110} = K e^{4φ}.
std::pair<double, double> gauss_error(int n) {
  const ChartGrid grid = ChartGrid::cube(2, n, kTwoPi);
  const FourierScalar phi = standard_phi(2, 0.2);
  const CurvatureBundle cb = curvature(conformal_metric(grid, phi));
  double es = 0.0, er = 0.0;
  for (std::size_t node = 0; node < grid.nodes(); ++node) {
    const auto x = grid.position(node);
    const double p = phi(grid, x);
    const double k = -std::exp(-2.0 * p) * phi.flat_laplacian(grid, x);
    es = std::max(es, std::abs(cb.s.at(node, 0) - 2.0 * k));
    er = std::max(er, std::abs(cb.rm.at(node, 0b0110) - k * std::exp(4.0 * p)));
  }
  return {es, er};
}

}  // namespace

TEST(Christoffel, ConformalOracleFourthOrder) {
  const double e16 = christoffel_error(16), e32 = christoffel_error(32);
  EXPECT_LT(e32, 1e-4);
  EXPECT_TRUE(converges_at(e16, e32, 4)) << e16 / e32;
}

TEST(Christoffel, FlatMetricHasZeroConnection) {
  const Connection c = christoffel(MetricField::flat(ChartGrid::cube(3, 8, 1.0), 2.5));
  EXPECT_EQ(c.gamma.max_abs(), 0.0);
}

TEST(CovariantDerivative, MetricCompatibleToRoundoff) {
  std::mt19937_64 rng(11);
  const MetricField g = perturbed_flat(ChartGrid::cube(3, 12, kTwoPi), rng, 0.1);
  const TensorField dg = covariant_derivative(g.g(), christoffel(g));
  EXPECT_LT(dg.max_abs(), 1e-12);
}

TEST(CovariantDerivative, VectorMatchesAnalyticConnection) {
  auto error = [](int n) {
    const ChartGrid grid = ChartGrid::cube(2, n, kTwoPi);
    const FourierScalar phi = standard_phi(2);
    const FourierScalar v0 = FourierScalar::modes(2, {1}, 0.3), v1 = FourierScalar::modes(2, {1, 2}, 0.2);
    const TensorField v = make_field(grid, {1, 0}, [&](const auto& x, std::span<double> o) {
      o[0] = v0(grid, x);
      o[1] = v1(grid, x);
    });
    const TensorField dv = covariant_derivative(v, christoffel(conformal_metric(grid, phi)));
    double err = 0.0;
    for (std::size_t node = 0; node < grid.nodes(); ++node) {
      const auto x = grid.position(node);
      const double vv[2] = {v0(grid, x), v1(grid, x)};
      for (int a = 0; a < 2; ++a)
        for (int m = 0; m < 2; ++m) {
          double want = (a == 0 ? v0 : v1).derivative(grid, x, m);
          for (int p = 0; p < 2; ++p) want += conformal_gamma(phi, grid, x, a, m, p) * vv[p];
          err = std::max(err, std::abs(dv.at(node, a * 2 + m) - want));
        }
    }
    return err;
  };
  const double e16 = error(16), e32 = error(32);
  EXPECT_LT(e32, 1e-3);
  EXPECT_TRUE(converges_at(e16, e32, 4)) << e16 / e32;
}

TEST(Curvature, FlatAndConstantMetricsAreFlat) {
  const ChartGrid grid = ChartGrid::cube(3, 8, 1.5);
  for (double c : {1.0, 2.5}) {
    const CurvatureBundle cb = curvature(MetricField::flat(grid, c));
    EXPECT_LE(cb.conn.gamma.max_abs(), 1e-10);
    EXPECT_LE(cb.rm.max_abs(), 1e-10);
    EXPECT_LE(cb.rc.max_abs(), 1e-10);
    EXPECT_LE(cb.s.max_abs(), 1e-10);
    EXPECT_LE(cb.weyl.max_abs(), 1e-10);
  }
}

TEST(Curvature, GaussCurvatureOfConformalMetric) {
  const auto [s16, r16] = gauss_error(16);
  const auto [s32, r32] = gauss_error(32);
  EXPECT_LT(s32, 1e-3);
  EXPECT_TRUE(converges_at(s16, s32, 4)) << s16 / s32;
  EXPECT_TRUE(converges_at(r16, r32, 4)) << r16 / r32;
}

TEST(Curvature, TwoDimensionalRicciIsHalfScalarTimesMetric) {
  const ChartGrid grid = ChartGrid::cube(2, 16, kTwoPi);
  std::mt19937_64 rng(3);
  const MetricField g = perturbed_flat(grid, rng, 0.15);
  const CurvatureBundle cb = curvature(g);
  TensorField want = scalar_times_metric(cb.s, g);
  want *= 0.5;
  EXPECT_LT(max_diff(cb.rc, want), 1e-12 * std::max(1.0, cb.rc.max_abs()));
  EXPECT_LT(cb.e.max_abs(), 1e-12 * std::max(1.0, cb.rc.max_abs()));
}

TEST(Curvature, AlgebraicSymmetriesAndFirstBianchi) {
  for (int dim : {2, 3, 4}) {
    std::mt19937_64 rng(100 + dim);
    const MetricField g = perturbed_flat(ChartGrid::cube(dim, dim == 4 ? 8 : 10, kTwoPi), rng, 0.1);
    const RmDefects r = rm_defects(riemann(g));
    EXPECT_LT(r.antisym_ab, 1e-12) << dim;
    EXPECT_LT(r.antisym_cd, 1e-12) << dim;
    EXPECT_LT(r.pair, 1e-12) << dim;
    EXPECT_LT(r.bianchi, 1e-12) << dim;
  }
}

TEST(Curvature, CorruptedConventionFailsGaussOracle) {
  // Flipping the second-derivative part still yields an algebraic curvature
  // tensor, so only the analytic and differential checks can catch it.
  const ChartGrid grid = ChartGrid::cube(2, 32, kTwoPi);
  const FourierScalar phi = standard_phi(2, 0.2);
  const TensorField s = curvature(conformal_metric(grid, phi), CurvatureConvention::corrupted).s;
  const double good = gauss_error(32).first;
  double err = 0.0;
  for (std::size_t n = 0; n < grid.nodes(); ++n) {
    const auto x = grid.position(n);
    err = std::max(err, std::abs(s.at(n, 0) + 2.0 * std::exp(-2.0 * phi(grid, x)) * phi.flat_laplacian(grid, x)));
  }
  EXPECT_GT(err, 1e4 * good);
}

TEST(Curvature, ScalingLaws) {
  std::mt19937_64 rng(9);
  const ChartGrid grid = ChartGrid::cube(3, 10, kTwoPi);
  const MetricField g = perturbed_flat(grid, rng, 0.1);
  const double c = 3.7;
  const MetricField gc(c * g.g());
  const CurvatureBundle a = curvature(g), b = curvature(gc);
  const double tol = 1e-12;
  EXPECT_LT(max_diff(b.rm, c * a.rm), tol * c * a.rm.max_abs());
  EXPECT_LT(max_diff(b.rc, a.rc), tol * a.rc.max_abs());
  EXPECT_LT(max_diff(b.s, (1.0 / c) * a.s), tol * a.s.max_abs());
  EXPECT_LT(max_diff(b.weyl, c * a.weyl), tol * c * a.rm.max_abs());
}

TEST(Curvature, ContractedSecondBianchiConverges) {
  auto defect = [](int n) {
    std::mt19937_64 rng(21);
    const MetricField g = perturbed_flat(ChartGrid::cube(3, n, kTwoPi), rng, 0.1);
    const CurvatureBundle cb = curvature(g);
    return divergence(cb.e, g, cb.conn).max_abs();
  };
  const double d12 = defect(12), d24 = defect(24);
  EXPECT_LT(d24, 1e-3);
  EXPECT_TRUE(converges_at(d12, d24, 4, 0.25)) << d12 / d24;
}

TEST(Curvature, WeylVanishesInThreeDimensions) {
  std::mt19937_64 rng(4);
  const MetricField g = perturbed_flat(ChartGrid::cube(3, 10, kTwoPi), rng, 0.1);
  const CurvatureBundle cb = curvature(g);
  EXPECT_LT(cb.weyl.max_abs(), 1e-12 * cb.rm.max_abs());
  EXPECT_THROW(weyl(MetricField::flat(ChartGrid::cube(2, 8, 1.0))), DomainError);
}

namespace {

// 4D conformally flat metric whose factor depends on x0, x1 only, so that
// refining those two axes is a genuine refinement.
MetricField conformally_flat_4d(int n) {
  ChartGrid grid = ChartGrid::cube(4, n, kTwoPi);
  grid.extents[2] = grid.extents[3] = 8;
  FourierScalar phi = standard_phi(2, 0.15);
  return conformal_metric(grid, phi);
}

}  // namespace

TEST(Curvature, WeylOfConformallyFlatVanishes) {
  // For g = fδ both parts of Rm are Kulkarni-Nomizu products with δ, so the
  // discrete Weyl tensor vanishes to roundoff rather than in the limit.
  const CurvatureBundle cb = curvature(conformally_flat_4d(12));
  EXPECT_LT(cb.weyl.max_abs(), 1e-12 * cb.rm.max_abs());
}

TEST(Bach, FlatIsZeroAndConformallyFlatConverges) {
  EXPECT_EQ(bach(MetricField::flat(ChartGrid::cube(4, 8, 1.0))).max_abs(), 0.0);
  const double b12 = bach(conformally_flat_4d(12)).max_abs(), b24 = bach(conformally_flat_4d(24)).max_abs();
  EXPECT_TRUE(converges_at(b12, b24, 4)) << b12 / b24;
  EXPECT_THROW(bach(MetricField::flat(ChartGrid::cube(3, 8, 1.0))), DomainError);
}

TEST(Bach, TraceConverges) {
  // tr ΔP = ΔJ only holds up to the discrete product rule.
  auto defect = [](int n) {
    ChartGrid grid = ChartGrid::cube(4, n, kTwoPi);
    grid.extents[2] = grid.extents[3] = 8;
    std::mt19937_64 rng(8);
    TensorField h(grid, {0, 2});
    for (int i = 0; i < 4; ++i)
      for (int j = i; j < 4; ++j) {
        const FourierScalar f = FourierScalar::random(2, 2, 1, 0.1, rng);
        for (std::size_t k = 0; k < grid.nodes(); ++k)
          h.at(k, i * 4 + j) = h.at(k, j * 4 + i) = (i == j) + f(grid, grid.position(k));
      }
    const MetricField g(std::move(h));
    const TensorField b = bach(g);
    return contract(b, 0, 1, g).max_abs() / b.max_abs();
  };
  const double d16 = defect(16), d32 = defect(32);
  EXPECT_LT(d32, 5e-3);
  EXPECT_TRUE(converges_at(d16, d32, 4, 0.3)) << d16 / d32;
}

TEST(KulkarniNomizu, MetricWithItself) {
  const ChartGrid grid = ChartGrid::cube(3, 8, 1.0);
  const MetricField g = MetricField::flat(grid);
  const TensorField k = kulkarni_nomizu(g.g(), g.g());
  // (δ⊙δ)_{abcd} = 2(δ_ad δ_bc − δ_ac δ_bd)
  for (std::size_t c = 0; c < k.comps(); ++c) {
    const IndexTuple t = decode(c, 3, 4);
    const double want = 2.0 * ((t[0] == t[3] && t[1] == t[2]) - (t[0] == t[2] && t[1] == t[3]));
    EXPECT_EQ(k.at(0, c), want);
  }
}

TEST(KulkarniNomizu, AlgebraicCurvatureTensorAndSymmetricInFactors) {
  std::mt19937_64 rng(17);
  const ChartGrid grid = ChartGrid::cube(4, 8, 1.0);
  const TensorField b = smooth_symmetric(grid, rng, 1.0), h = smooth_symmetric(grid, rng, 1.0);
  const TensorField bh = kulkarni_nomizu(b, h);
  const RmDefects r = rm_defects(bh);
  EXPECT_LT(std::max({r.antisym_ab, r.antisym_cd, r.pair, r.bianchi}), 1e-14);
  EXPECT_LT(max_diff(bh, kulkarni_nomizu(h, b)), 1e-14);
  TensorField skew(grid, {0, 2});
  skew.at(0, 1) = 1.0;
  EXPECT_THROW(kulkarni_nomizu(skew, h), DomainError);
}

TEST(Laplacian, SineHasDiscreteSymbol) {
  const int n = 32;
  const double l = 3.0;
  const ChartGrid grid = ChartGrid::cube(2, n, l);
  const TensorField f = make_field(grid, {0, 0}, [&](const auto& x, std::span<double> o) {
    o[0] = std::sin(kTwoPi * x[0] / l);
  });
  const MetricField g = MetricField::flat(grid);
  const TensorField lap = laplacian_iter(f, g, 1);
  // Symbol of the five-point first derivative applied twice.
  const double h = l / n, th = kTwoPi * h / l;
  const double sym = (8.0 * std::sin(th) - std::sin(2.0 * th)) / (6.0 * h);
  EXPECT_LT(max_diff(lap, -(sym * sym) * f), 1e-11);
  EXPECT_NEAR(sym * sym, std::pow(kTwoPi / l, 2), 1e-4 * std::pow(kTwoPi / l, 2));
  const TensorField lap2 = laplacian_iter(f, g, 2);
  EXPECT_LT(max_diff(lap2, std::pow(sym, 4) * f), 1e-10);
  EXPECT_EQ(max_diff(laplacian_iter(f, g, 0), f), 0.0);
}

TEST(Laplacian, IterationMatchesRepeatedApplication) {
  std::mt19937_64 rng(2);
  const MetricField g = perturbed_flat(ChartGrid::cube(2, 16, kTwoPi), rng, 0.1);
  const TensorField w = smooth_symmetric(g.grid(), rng, 1.0);
  const Connection c = christoffel(g);
  EXPECT_EQ(max_diff(laplacian_iter(w, g, c, 2), laplacian(laplacian(w, g, c), g, c)), 0.0);
}

TEST(Laplacian, IntegrationByPartsConverges) {
  auto defect = [](int n) {
    std::mt19937_64 rng(31);
    const MetricField g = perturbed_flat(ChartGrid::cube(2, n, kTwoPi), rng, 0.1);
    const TensorField w = smooth_symmetric(g.grid(), rng, 1.0);
    const Connection c = christoffel(g);
    const double lhs = l2_inner(laplacian(w, g, c), w, g);
    const double grad = l2_norm_squared(covariant_derivative(w, c), g);
    return std::abs(lhs + grad) / grad;
  };
  const double d16 = defect(16), d32 = defect(32);
  EXPECT_LT(d32, 1e-3);
  EXPECT_TRUE(converges_at(d16, d32, 4, 0.3)) << d16 / d32;
}

TEST(Laplacian, FlatIntegrationByPartsIsExact) {
  std::mt19937_64 rng(32);
  const MetricField g = MetricField::flat(ChartGrid::cube(3, 10, 2.0));
  const TensorField w = smooth_tensor(g.grid(), {1, 1}, rng, 1.0);
  const Connection c = christoffel(g);
  const double grad = l2_norm_squared(covariant_derivative(w, c), g);
  EXPECT_NEAR(l2_inner(laplacian(w, g, c), w, g), -grad, 1e-12 * grad);
}

TEST(Laplacian, InterpolationInequalityCorpus) {
  std::mt19937_64 rng(2024);
  int checked = 0;
  const Rank ranks[] = {{0, 0}, {1, 0}, {0, 2}, {1, 1}, {0, 3}};
  for (int trial = 0; trial < 60; ++trial) {
    const int dim = 2 + trial % 2;
    const MetricField g = MetricField::flat(ChartGrid::cube(dim, dim == 2 ? 16 : 8, 1.0 + 0.5 * (trial % 3)));
    const TensorField w = smooth_tensor(g.grid(), ranks[trial % 5], rng, 1.0, 3, 3);
    const Connection c = christoffel(g);
    const double grad = l2_norm_squared(covariant_derivative(w, c), g);
    const double rhs = std::sqrt(l2_norm_squared(w, g) * l2_norm_squared(laplacian(w, g, c), g));
    EXPECT_LE(grad, rhs + 1e-12 * std::max(1.0, rhs)) << trial;
    ++checked;
  }
  EXPECT_GE(checked, 50);
}

TEST(Commutator, FlatVanishesForAnyRank) {
  std::mt19937_64 rng(6);
  const MetricField g = MetricField::flat(ChartGrid::cube(3, 8, kTwoPi));
  for (Rank r : {Rank{0, 0}, Rank{1, 0}, Rank{0, 2}, Rank{2, 1}})
    EXPECT_LT(commutator_defect(smooth_tensor(g.grid(), r, rng, 1.0), g), 1e-10);
}

TEST(Commutator, ScalarToRoundoff) {
  std::mt19937_64 rng(7);
  const MetricField g = perturbed_flat(ChartGrid::cube(3, 10, kTwoPi), rng, 0.1);
  EXPECT_LT(commutator_defect(smooth_tensor(g.grid(), {0, 0}, rng, 1.0), g), 1e-12);
}

TEST(Commutator, CurvedConvergesForVectorsAndForms) {
  for (Rank r : {Rank{1, 0}, Rank{0, 1}, Rank{1, 1}}) {
    auto defect = [&](int n) {
      const ChartGrid grid = ChartGrid::cube(2, n, kTwoPi);
      const MetricField g = conformal_metric(grid, standard_phi(2, 0.2));
      std::mt19937_64 rng(40);
      return commutator_defect(smooth_tensor(grid, r, rng, 1.0, 1), g);
    };
    const double d16 = defect(16), d32 = defect(32);
    EXPECT_TRUE(converges_at(d16, d32, 4, 0.3)) << r.up << r.down << " " << d16 / d32;
  }
}

TEST(Commutator, CorruptedConventionDoesNotConverge) {
  auto defect = [](int n) {
    const ChartGrid grid = ChartGrid::cube(2, n, kTwoPi);
    const MetricField g = conformal_metric(grid, standard_phi(2, 0.2));
    std::mt19937_64 rng(41);
    const TensorField v = smooth_tensor(grid, {1, 0}, rng, 1.0, 1);
    return commutator_residual(v, g, curvature(g, CurvatureConvention::corrupted)).max_abs();
  };
  EXPECT_GT(defect(32), 0.5 * defect(16));
}

TEST(Linearization, MatchesCentralDifference) {
  for (int dim : {2, 3}) {
    auto defect = [&](int n) {
      std::mt19937_64 rng(50 + dim);
      const ChartGrid grid = ChartGrid::cube(dim, n, kTwoPi);
      const MetricField g = perturbed_flat(grid, rng, 0.1);
      const TensorField h = smooth_symmetric(grid, rng, 1.0, 1);
      const double s = 1e-4;
      TensorField fd = riemann(MetricField(g.g() + s * h)) - riemann(MetricField(g.g() - s * h));
      fd *= 1.0 / (2.0 * s);
      return max_diff(linearized_riemann(g, h), fd) / fd.max_abs();
    };
    const double d1 = defect(dim == 2 ? 16 : 10), d2 = defect(dim == 2 ? 32 : 20);
    EXPECT_LT(d2, 1e-3) << dim;
    EXPECT_TRUE(converges_at(d1, d2, 4, 0.3)) << dim << " " << d1 / d2;
  }
}

TEST(Linearization, DiffeomorphismCovariance) {
  // DR_g(𝓛_X g) = 𝓛_X Rm.
  auto defect = [](int n) {
    std::mt19937_64 rng(60);
    const ChartGrid grid = ChartGrid::cube(2, n, kTwoPi);
    const MetricField g = perturbed_flat(grid, rng, 0.1);
    const TensorField x = smooth_tensor(grid, {1, 0}, rng, 1.0, 1);
    const CurvatureBundle cb = curvature(g);
    const TensorField lg = symmetrized(lie_derivative(g.g(), x, cb.conn));
    const TensorField lr = lie_derivative(cb.rm, x, cb.conn);
    return max_diff(linearized_riemann(g, cb, lg), lr) / lr.max_abs();
  };
  const double d16 = defect(16), d32 = defect(32);
  EXPECT_LT(d32, 5e-3);
  EXPECT_TRUE(converges_at(d16, d32, 4, 0.3)) << d16 / d32;
}

TEST(Linearization, RejectsNonSymmetricDirection) {
  const MetricField g = MetricField::flat(ChartGrid::cube(2, 8, 1.0));
  TensorField h(g.grid(), {0, 2});
  h.at(0, 1) = 1.0;
  EXPECT_THROW(linearized_riemann(g, h), DomainError);
}

namespace {

// Central difference of the pullback of an analytic (0,2) field T along the
// first-order flow x ↦ x + sX(x):
//   (φ_s*T)_ij(x) = T_ab(x + sX) (δ^a_i + s∂_iX^a)(δ^b_j + s∂_jX^b).
double pullback_defect(int n, bool curved) {
  const int d = 2;
  const ChartGrid grid = ChartGrid::cube(d, n, kTwoPi);
  std::mt19937_64 rng(70);
  FourierScalar tc[4], xc[2];
  for (auto& f : tc) f = FourierScalar::random(d, 2, 1, 1.0, rng);
  for (auto& f : xc) f = FourierScalar::random(d, 2, 1, 0.5, rng);
  const TensorField t = make_field(grid, {0, 2}, [&](const auto& x, std::span<double> o) {
    for (int c = 0; c < 4; ++c) o[c] = tc[c](grid, x);
  });
  const TensorField xf = make_field(grid, {1, 0}, [&](const auto& x, std::span<double> o) {
    for (int a = 0; a < d; ++a) o[a] = xc[a](grid, x);
  });
  const MetricField g = curved ? conformal_metric(grid, standard_phi(2, 0.2)) : MetricField::flat(grid);
  const TensorField lie = lie_derivative(t, xf, g);
  const double s = 1e-5;
  double err = 0.0;
  for (std::size_t node = 0; node < grid.nodes(); ++node) {
    const auto x = grid.position(node);
    double pb[2][4];
    for (int sign = 0; sign < 2; ++sign) {
      const double ss = sign == 0 ? s : -s;
      auto y = x;
      for (int a = 0; a < d; ++a) y[a] += ss * xc[a](grid, x);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
          double acc = 0.0;
          for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b) {
              const double ja = (a == i) + ss * xc[a].derivative(grid, x, i);
              const double jb = (b == j) + ss * xc[b].derivative(grid, x, j);
              acc += tc[a * d + b](grid, y) * ja * jb;
            }
          pb[sign][i * d + j] = acc;
        }
    }
    for (int c = 0; c < 4; ++c) err = std::max(err, std::abs((pb[0][c] - pb[1][c]) / (2 * s) - lie.at(node, c)));
  }
  return err;
}

}  // namespace

TEST(LieDerivative, MatchesPullbackOracle) {
  for (bool curved : {false, true}) {
    const double d16 = pullback_defect(16, curved), d32 = pullback_defect(32, curved);
    EXPECT_LT(d32, 1e-3) << curved;
    EXPECT_TRUE(converges_at(d16, d32, 4, 0.3)) << curved << " " << d16 / d32;
  }
}

TEST(LieDerivative, MetricIsSymmetrizedGradient) {
  auto defect = [](int n) {
    std::mt19937_64 rng(72);
    const MetricField g = perturbed_flat(ChartGrid::cube(3, n, kTwoPi), rng, 0.1);
    const TensorField x = smooth_tensor(g.grid(), {1, 0}, rng, 1.0, 1);
    TensorField xl(g.grid(), {0, 1});
    for (std::size_t k = 0; k < g.grid().nodes(); ++k)
      for (int i = 0; i < 3; ++i)
        for (int m = 0; m < 3; ++m) xl.at(k, i) += g.g().at(k, i * 3 + m) * x.at(k, m);
    const Connection c = christoffel(g);
    const TensorField dx = covariant_derivative(xl, c);  // [j][i] = ∇_i X_j
    TensorField want(g.grid(), {0, 2});
    for (std::size_t k = 0; k < g.grid().nodes(); ++k)
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) want.at(k, i * 3 + j) = dx.at(k, j * 3 + i) + dx.at(k, i * 3 + j);
    return max_diff(lie_derivative(g.g(), x, c), want) / want.max_abs();
  };
  const double d10 = defect(10), d20 = defect(20);
  EXPECT_LT(d20, 5e-3);
  EXPECT_TRUE(converges_at(d10, d20, 4, 0.3)) << d10 / d20;
}

TEST(LieDerivative, ZeroFieldAndBadRank) {
  std::mt19937_64 rng(71);
  const MetricField g = perturbed_flat(ChartGrid::cube(2, 8, kTwoPi), rng, 0.1);
  EXPECT_EQ(lie_derivative(g.g(), TensorField(g.grid(), {1, 0}), g).max_abs(), 0.0);
  EXPECT_THROW(lie_derivative(g.g(), g.g(), g), DomainError);
}

TEST(Obstruction, LowOrderCollapses) {
  std::mt19937_64 rng(80);
  const MetricField g = perturbed_flat(ChartGrid::cube(3, 10, kTwoPi), rng, 0.1);
  const CurvatureBundle cb = curvature(g);
  const double alpha = 0.3, beta = -0.25;
  // k = 0: −2(Rc + αSg)
  TensorField want0 = cb.rc;
  want0.axpy(alpha, scalar_times_metric(cb.s, g));
  want0 *= -2.0;
  EXPECT_LT(max_diff(obstruction_leading(g, cb, 0, alpha, 0.0), want0), 1e-13 * want0.max_abs());
  // k = 1: 2(ΔRc + αΔS g + β∇∇S)
  TensorField want1 = laplacian(cb.rc, g, cb.conn);
  want1.axpy(alpha, scalar_times_metric(laplacian(cb.s, g, cb.conn), g));
  want1.axpy(beta, symmetrized(covariant_derivative(cb.s, cb.conn, 2)));
  want1 *= 2.0;
  EXPECT_LT(max_diff(obstruction_leading(g, cb, 1, alpha, beta), want1), 1e-12 * want1.max_abs());
  EXPECT_THROW(obstruction_leading(g, cb, 0, alpha, 0.1), DomainError);
  EXPECT_THROW(obstruction_leading(g, cb, -1, alpha, 0.0), DomainError);
}

TEST(Obstruction, SignAlternatesWithK) {
  std::mt19937_64 rng(81);
  const MetricField g = perturbed_flat(ChartGrid::cube(2, 12, kTwoPi), rng, 0.1);
  const CurvatureBundle cb = curvature(g);
  TensorField want2 = laplacian_iter(cb.rc, g, cb.conn, 2);
  want2 *= -2.0;
  EXPECT_LT(max_diff(obstruction_leading(g, cb, 2, 0.0, 0.0), want2), 1e-12 * want2.max_abs());
}

TEST(Contract, MixedSlotIsPlainTrace) {
  std::mt19937_64 rng(90);
  const MetricField g = perturbed_flat(ChartGrid::cube(2, 8, 1.0), rng, 0.2);
  const TensorField t = smooth_tensor(g.grid(), {1, 1}, rng, 1.0);
  const TensorField tr = contract(t, 0, 1, g);
  for (std::size_t n = 0; n < t.nodes(); ++n) EXPECT_DOUBLE_EQ(tr.at(n, 0), t.at(n, 0) + t.at(n, 3));
  EXPECT_THROW(contract(t, 0, 0, g), DomainError);
}
