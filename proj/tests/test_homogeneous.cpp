#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "curveflow/homogeneous.hpp"

using namespace curveflow;

namespace {

std::vector<FrameMetric> corpus() {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.6, 1.6);
  std::vector<FrameMetric> out;
  for (int i = 0; i < 8; ++i) out.push_back(FrameMetric::su2(u(rng), u(rng), u(rng)));
  out.push_back(FrameMetric::nil(1.0, 1.3, 0.7));
  out.push_back(FrameMetric::sol(1.0, 1.3, 0.7));
  out.push_back({{1.0, 1.0, 0.0}, {0.9, 1.2, 1.1}, 1.0});  // E(2)
  out.push_back({{1.0, 1.0, -1.0}, {0.9, 1.2, 1.1}, 1.0});  // SL(2,R)
  return out;
}

}  // namespace

TEST(FrameCurvature, RoundSphere) {
  const FrameCurvature fc = frame_curvature(FrameMetric::su2(1, 1, 1));
  for (int i = 0; i < 3; ++i) {
    EXPECT_DOUBLE_EQ(fc.sectional[i], 1.0);
    EXPECT_DOUBLE_EQ(fc.rc[i], 2.0);
    EXPECT_DOUBLE_EQ(fc.e[i], -1.0);
  }
  EXPECT_DOUBLE_EQ(fc.s, 6.0);
}

TEST(FrameCurvature, ScalarCurvatureScaling) {
  for (double t : {0.5, 2.0, 3.7}) EXPECT_NEAR(frame_curvature(FrameMetric::su2(t, t, t)).s, 6.0 / t, 1e-14);
}

TEST(FrameCurvature, DegenerateCoefficientRejected) {
  EXPECT_THROW(frame_curvature(FrameMetric::su2(0.0, 1, 1)), SingularMetric);
  EXPECT_THROW(frame_curvature(FrameMetric::su2(1, -1e-3, 1)), SingularMetric);
}

TEST(FrameCurvature, MilnorMatchesGeneralFrameCalculus) {
  for (const FrameMetric& f : corpus()) {
    const FrameCurvature fc = frame_curvature(f);
    const frame::Geometry geo = frame::geometry(f);
    const double scale = std::max(1.0, geo.rm.max_abs());
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        EXPECT_NEAR(geo.rc.c[i * 3 + j], i == j ? fc.rc[i] : 0.0, 1e-12 * scale);
        EXPECT_NEAR(geo.e.c[i * 3 + j], i == j ? fc.e[i] : 0.0, 1e-12 * scale);
      }
    EXPECT_NEAR(geo.s, fc.s, 1e-12 * scale);
    // sectional curvature of the plane ⊥ e_i from R_{jkkj}
    for (int i = 0; i < 3; ++i) {
      const int j = (i + 1) % 3, k = (i + 2) % 3;
      const double kk = geo.rm.c[((j * 3 + k) * 3 + k) * 3 + j] / (f.coeffs[j] * f.coeffs[k]);
      EXPECT_NEAR(kk, fc.sectional[i], 1e-12 * scale);
    }
  }
}

TEST(FrameCurvature, RiemannSymmetriesAndMetricCompatibility) {
  for (const FrameMetric& f : corpus()) {
    const frame::Geometry geo = frame::geometry(f);
    const auto& r = geo.rm.c;
    auto R = [&](int a, int b, int c, int d) { return r[((a * 3 + b) * 3 + c) * 3 + d]; };
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        for (int c = 0; c < 3; ++c)
          for (int d = 0; d < 3; ++d) {
            EXPECT_NEAR(R(a, b, c, d), -R(b, a, c, d), 1e-13);
            EXPECT_NEAR(R(a, b, c, d), -R(a, b, d, c), 1e-13);
            EXPECT_NEAR(R(a, b, c, d), R(c, d, a, b), 1e-13);
            EXPECT_NEAR(R(a, b, c, d) + R(b, c, a, d) + R(c, a, b, d), 0.0, 1e-13);
          }
    EXPECT_LT(frame::covariant_derivative(frame::metric_tensor(geo), geo).max_abs(), 1e-14);
  }
}

TEST(FrameFlow, RoundSphereRicciAndXcf) {
  const FrameMetric f = FrameMetric::su2(1, 1, 1);
  const auto r = frame_flow_rhs(f, FlowSpec::ricci());
  const auto x = frame_flow_rhs(f, FlowSpec::xcf(1));
  for (int i = 0; i < 3; ++i) {
    EXPECT_DOUBLE_EQ(r[i], -4.0);
    EXPECT_DOUBLE_EQ(x[i], -2.0);
  }
  EXPECT_THROW(frame_flow_rhs(f, FlowSpec::xcf(-1)), DefinitenessViolated);
}

TEST(FrameFlow, ScaledRoundSphereIsIsotropic) {
  for (double t : {0.5, 1.9}) {
    const FrameMetric f = FrameMetric::su2(t, t, t);
    const auto r = frame_flow_rhs(f, FlowSpec::ricci());
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(r[i], -4.0, 1e-14);  // Rc is scale invariant
    const auto x = frame_flow_rhs(f, FlowSpec::xcf(1));
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(x[i], -2.0 / t, 1e-14);
  }
}

TEST(FrameFlow, DegenerateStructureRejectedForXcf) {
  const FrameMetric f{{0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}, 1.0};
  EXPECT_THROW(frame_flow_rhs(f, FlowSpec::xcf(1)), NonInvertibleEinstein);
  const auto r = frame_flow_rhs(f, FlowSpec::ricci());
  for (double v : r) EXPECT_EQ(v, 0.0);
}

TEST(FrameFlow, ClosedFormXcfMatchesFrameAlgebra) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.9, 1.1);
  for (int t = 0; t < 10; ++t) {
    const FrameMetric f = FrameMetric::su2(u(rng), u(rng), u(rng));
    const frame::Geometry geo = frame::geometry(f);
    const XcfPoint pt = frame::xcf(geo);
    const auto rhs = frame_flow_rhs(f, FlowSpec::xcf(1));
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        EXPECT_NEAR(pt.x(i, j), i == j ? -0.5 * rhs[i] : 0.0, 1e-12);
        EXPECT_NEAR(pt.x_alt(i, j), pt.x(i, j), 1e-12);
      }
    EXPECT_LT(pt.eig_max, 0.0);
  }
}

TEST(FrameFlow, TensorRhsMatchesClosedFormRicci) {
  for (const FrameMetric& f : corpus()) {
    const frame::Tensor t = frame::tensor_rhs(frame::geometry(f), FlowSpec::ricci());
    const auto r = frame_flow_rhs(f, FlowSpec::ricci());
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(t.c[i * 4], r[i], 1e-12 * std::max(1.0, std::abs(r[i])));
  }
}

TEST(FrameFlow, L2OnRoundSphereMatchesSpaceFormOracle) {
  // Rc = 2g is parallel, so only the quadratic part survives: κ² g.
  for (double t : {1.0, 2.0}) {
    const auto r = frame_flow_rhs(FrameMetric::su2(t, t, t), FlowSpec::l2());
    // κ = 1/t and g = t δ, so κ²g = (1/t) δ
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(r[i], 1.0 / t, 1e-8);
  }
}

TEST(FrameFlow, L2StaysDiagonalOnBerger) {
  const auto r = frame_flow_rhs(FrameMetric::su2(1.0, 1.05, 0.93), FlowSpec::l2());
  for (double v : r) EXPECT_TRUE(std::isfinite(v));
}

TEST(FrameFlow, BergerSectionalCurvaturesPositiveNearRound) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.9, 1.1);
  for (int t = 0; t < 50; ++t) {
    const FrameCurvature fc = frame_curvature(FrameMetric::su2(u(rng), u(rng), u(rng)));
    for (double k : fc.sectional) EXPECT_GT(k, 0.0);
  }
}

namespace {

// ∫|Rm|²dμ for a general left-invariant metric on SU(2), unit volume form
double frame_functional(const std::array<double, 9>& g) {
  const frame::Geometry geo = frame::geometry({2.0, 2.0, 2.0}, g);
  double n2 = 0.0;
  for (std::size_t c = 0; c < 81; ++c) {
    const IndexTuple t = decode(c, 3, 4);
    for (std::size_t d = 0; d < 81; ++d) {
      const IndexTuple u = decode(d, 3, 4);
      double w = 1.0;
      for (int s = 0; s < 4; ++s) w *= geo.gi[t[s] * 3 + u[s]];
      n2 += w * geo.rm.c[c] * geo.rm.c[d];
    }
  }
  SmallMatrix m(3, 3);
  for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = g[i];
  return n2 * std::sqrt(m.determinant());
}

}  // namespace

TEST(FrameFlow, L2IsExactGradientInEveryDirection) {
  const std::array<double, 9> g{1.0, 0.1, -0.05, 0.1, 1.3, 0.08, -0.05, 0.08, 0.8};
  const frame::Geometry geo = frame::geometry({2.0, 2.0, 2.0}, g);
  const frame::Tensor rhs = frame::tensor_rhs(geo, FlowSpec::l2());
  SmallMatrix m(3, 3);
  for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = g[i];
  const double vol = std::sqrt(m.determinant());
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j) {
      auto a = g, b = g;
      const double s = 1e-5;
      a[i * 3 + j] += s, b[i * 3 + j] -= s;
      if (i != j) a[j * 3 + i] += s, b[j * 3 + i] -= s;
      const double deriv = (frame_functional(a) - frame_functional(b)) / (2 * s);
      double inner = 0.0;
      for (int x = 0; x < 3; ++x)
        for (int y = 0; y < 3; ++y) {
          const double up = geo.gi[x * 3 + i] * geo.gi[y * 3 + j] + (i != j ? geo.gi[x * 3 + j] * geo.gi[y * 3 + i] : 0.0);
          inner += rhs.c[x * 3 + y] * up;
        }
      EXPECT_NEAR(-deriv / (inner * vol), 2.0, 1e-7) << i << j;
    }
}
