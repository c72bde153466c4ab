#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace edmgps;
using edmgps::fixtures::max_abs;

namespace {

Matrix simplex() {
  Matrix p(4, 3);
  p << 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1;
  return p;
}

// Reference classifier: classical MDS. Reconstruct points from the positive
// part of the centered Gram matrix and check they reproduce D.
struct MdsOracle {
  bool is_edm = false;
  Index dim = 0;
  bool borderline = false;  // smallest eigenvalue too close to zero to call
};

MdsOracle mds_oracle(const Matrix& D) {
  const Index n = D.rows();
  Matrix J = Matrix::Identity(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) J(i, j) -= 1.0 / static_cast<double>(n);
  const Matrix B = -0.5 * J * D * J;
  Eigen::SelfAdjointEigenSolver<Matrix> es(B);
  const double top = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  std::vector<Index> keep;
  for (Index i = 0; i < n; ++i)
    if (es.eigenvalues()(i) > 1e-9 * top) keep.push_back(i);
  Matrix pts(n, static_cast<Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k)
    pts.col(static_cast<Index>(k)) = es.eigenvectors().col(keep[k]) * std::sqrt(es.eigenvalues()(keep[k]));
  Matrix Dr(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) Dr(i, j) = (pts.row(i) - pts.row(j)).squaredNorm();
  MdsOracle o;
  o.is_edm = max_abs(Dr - D) <= 1e-7 * std::max(1.0, max_abs(D));
  o.dim = static_cast<Index>(keep.size());
  const double lo = es.eigenvalues().minCoeff();
  o.borderline = lo < -1e-12 * top && lo > -1e-7 * top;
  return o;
}

}  // namespace

TEST(VBasis, TwoPoints) {
  const Matrix V = build_v_basis(2);
  ASSERT_EQ(V.rows(), 2);
  ASSERT_EQ(V.cols(), 1);
  EXPECT_NEAR(std::abs(V(0, 0)), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(V(0, 0), -V(1, 0), 1e-15);
}

TEST(VBasis, OrthonormalComplementOfOnes) {
  for (Index n = 2; n <= 16; ++n) {
    const Matrix V = build_v_basis(n);
    EXPECT_LE(max_abs(V.transpose() * V - Matrix::Identity(n - 1, n - 1)), 1e-14) << n;
    EXPECT_LE(max_abs(V.transpose() * Vector::Ones(n)), 1e-14) << n;
    const Matrix J = Matrix::Identity(n, n) - Matrix::Constant(n, n, 1.0 / static_cast<double>(n));
    EXPECT_LE(max_abs(V * V.transpose() - J), 1e-14) << n;
  }
}

TEST(VBasis, RejectsTiny) { EXPECT_THROW(build_v_basis(1), Error); }

TEST(BuildEdm, Simplex) {
  Matrix expected(4, 4);
  expected << 0, 1, 1, 1, 1, 0, 2, 2, 1, 2, 0, 2, 1, 2, 2, 0;
  EXPECT_EQ(build_edm(simplex()), expected);
}

TEST(BuildEdm, TranslationInvariant) {
  Rng gen(11);
  const Matrix p = fixtures::sphere_points(7, 3, 2.0, gen);
  Matrix shifted = p;
  shifted.rowwise() += Eigen::RowVector3d(0.3, -1.2, 4.0);
  EXPECT_LE(max_abs(build_edm(p) - build_edm(shifted)), 1e-13);
}

TEST(CenterConfiguration, SimplexCentroid) {
  const SatelliteConfig cfg = center_configuration(simplex(), 1.0);
  EXPECT_NEAR(cfg.centroid(0), 0.25, 1e-15);
  EXPECT_NEAR(cfg.centroid(1), 0.25, 1e-15);
  EXPECT_NEAR(cfg.centroid(2), 0.25, 1e-15);
  EXPECT_LE(max_abs(cfg.P.colwise().sum()), 1e-15);
}

TEST(CenterConfiguration, ScalesToOrderOne) {
  Rng gen(3);
  const Matrix raw = fixtures::sphere_points(6, 3, 2.66e7, gen);
  const SatelliteConfig cfg = center_configuration(raw);
  EXPECT_LE(max_abs(cfg.P.colwise().sum()), 1e-12);
  EXPECT_LT(max_abs(cfg.P), 10.0);
  EXPECT_GT(max_abs(cfg.P), 0.1);
  const Vector q = Vector::Constant(3, 1234.5);
  EXPECT_LE((cfg.to_world(cfg.to_centered(q)) - q).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(CenterConfiguration, Errors) {
  Matrix collinear(4, 3);
  collinear << 0, 0, 0, 1, 1, 1, 2, 2, 2, 5, 5, 5;
  try {
    center_configuration(collinear, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SingularGeometry);
  }
  try {
    center_configuration(Matrix::Random(3, 3), 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BadShape);
  }
}

TEST(FactorEdm, Simplex) {
  const EdmBundle bundle = make_bundle(center_configuration(simplex(), 1.0));
  EXPECT_EQ(bundle.r, 3);
  EXPECT_EQ(bundle.Z.cols(), 0);
  EXPECT_FALSE(bundle.has_gale_space());
}

TEST(FactorEdm, CoplanarFiveInThree) {
  Matrix pts(5, 3);
  pts << 0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 1, 0, 0.3, 0.7, 0;
  const Matrix D = build_edm(pts);
  const EdmBundle bundle = factor_edm(D, build_v_basis(5));
  EXPECT_EQ(bundle.r, 2);
  ASSERT_EQ(bundle.Z.rows(), 5);
  ASSERT_EQ(bundle.Z.cols(), 2);
  Matrix centered = pts.leftCols(2);
  centered.rowwise() -= centered.colwise().mean();
  EXPECT_LE(max_abs(bundle.Z.transpose() * centered), 1e-13);
  EXPECT_LE(max_abs(bundle.Z.transpose() * Vector::Ones(5)), 1e-13);
  EXPECT_LE(max_abs(bundle.Z.transpose() * bundle.Z - Matrix::Identity(2, 2)), 1e-13);
}

TEST(FactorEdm, MoorePenroseAxioms) {
  Rng gen(5);
  for (Index n : {4, 5, 7, 10}) {
    const EdmBundle bd = make_bundle(fixtures::random_config(n, 3, gen));
    const Matrix& B = bd.B;
    const Matrix& P = bd.Bdag;
    EXPECT_LE(max_abs(B * P * B - B), 1e-12);
    EXPECT_LE(max_abs(P * B * P - P), 1e-12);
    EXPECT_LE(max_abs((B * P).transpose() - B * P), 1e-12);
    EXPECT_LE(max_abs((P * B).transpose() - P * B), 1e-12);
    EXPECT_LE(max_abs(P * Vector::Ones(n)), 1e-12);
  }
}

TEST(FactorEdm, GramMatchesCenteredPoints) {
  Rng gen(6);
  for (Index n : {4, 6, 9}) {
    const SatelliteConfig cfg = fixtures::random_config(n, 3, gen);
    const EdmBundle bd = make_bundle(cfg);
    const Matrix G = cfg.P * cfg.P.transpose();
    EXPECT_LE(max_abs(bd.B - G), 1e-12);
    EXPECT_LE(max_abs(bd.b - G.diagonal()), 1e-12);
    // B^+ = P (P^T P)^{-2} P^T for full-column-rank centered P
    const Matrix PtP = cfg.P.transpose() * cfg.P;
    const Matrix inv = PtP.inverse();
    EXPECT_LE(max_abs(bd.Bdag - cfg.P * inv * inv * cfg.P.transpose()), 1e-11);
    EXPECT_LE(max_abs(bd.X - bd.V.transpose() * G * bd.V), 1e-12);
  }
}

TEST(FactorEdm, GramRoundTrip) {
  Rng gen(7);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 4 + trial % 8;
    const Matrix D = build_edm(fixtures::sphere_points(n, 3, 2.66, gen));
    EXPECT_LE(max_abs(edm_from_gram(gram_from_edm(D)) - D), 1e-12);
    const Matrix B = gram_from_edm(D);
    EXPECT_LE(max_abs(gram_from_edm(edm_from_gram(B)) - B), 1e-12);
  }
}

TEST(FactorEdm, RejectsNonEdm) {
  Matrix D(3, 3);
  D << 0, 1, 9, 1, 0, 1, 9, 1, 0;  // 3 > 1 + 1 in distances
  try {
    factor_edm(D, build_v_basis(3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotAnEdm);
  }
  Matrix hollow_fail = Matrix::Zero(3, 3);
  hollow_fail(0, 0) = 1.0;
  try {
    factor_edm(hollow_fail, build_v_basis(3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BadInput);
  }
  try {
    factor_edm(Matrix::Zero(4, 4), build_v_basis(4));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SingularGeometry);
  }
}

TEST(ClassifyEdm, KnownCases) {
  EXPECT_TRUE(classify_edm(build_edm(simplex())).is_edm_of_dim(3));
  Matrix tri(3, 3);
  tri << 0, 1, 9, 1, 0, 1, 9, 1, 0;
  const EdmClass c = classify_edm(tri);
  EXPECT_FALSE(c.is_edm());
  EXPECT_LT(c.witness, 0.0);
  Matrix line(3, 3);
  line << 0, 1, 4, 1, 0, 1, 4, 1, 0;  // equality in the triangle inequality
  EXPECT_TRUE(classify_edm(line).is_edm_of_dim(1));
  Matrix asym = build_edm(simplex());
  asym(0, 1) += 0.5;
  EXPECT_FALSE(classify_edm(asym).is_edm());
}

TEST(ClassifyEdm, AgreesWithMdsReconstruction) {
  Rng gen(0xC1A55);
  int edm_count = 0;
  int borderline = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Index n = 3 + static_cast<Index>(gen.uniform() * 8);
    Matrix D;
    switch (trial % 3) {
      case 0: {
        const Index r = 1 + trial % std::min<Index>(3, n - 1);
        D = build_edm(fixtures::sphere_points(n, r, 1.0 + gen.uniform(), gen));
        break;
      }
      case 1: {
        D = Matrix::Zero(n, n);
        for (Index i = 0; i < n; ++i)
          for (Index j = i + 1; j < n; ++j) D(i, j) = D(j, i) = gen.uniform();
        break;
      }
      default: {
        D = build_edm(fixtures::sphere_points(n, 2, 1.0, gen));
        for (Index i = 0; i < n; ++i)
          for (Index j = i + 1; j < n; ++j) {
            const double d = D(i, j) + 1e-3 * gen.normal();
            D(i, j) = D(j, i) = std::max(0.0, d);
          }
        break;
      }
    }
    const EdmClass c = classify_edm(D);
    const MdsOracle o = mds_oracle(D);
    if (o.borderline) {
      ++borderline;
      continue;
    }
    ASSERT_EQ(c.is_edm(), o.is_edm) << "trial " << trial << "\n" << D;
    if (o.is_edm) {
      ++edm_count;
      EXPECT_EQ(c.dim, o.dim) << "trial " << trial;
    }
  }
  EXPECT_GT(edm_count, 300);
  EXPECT_LT(edm_count, 1000);
  EXPECT_LE(borderline, 10);
}

TEST(ClassifyEdm, ScaleEquivariant) {
  Rng gen(8);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix D = build_edm(fixtures::sphere_points(6, 3, 1.0, gen));
    for (double c : {1e-6, 1e-3, 10.0, 1e4}) {
      EXPECT_TRUE(classify_edm(c * D).is_edm_of_dim(3));
    }
  }
}

TEST(AugmentedCheck, ShiftsOfB) {
  const EdmBundle bd = make_bundle(center_configuration(simplex(), 1.0));
  const Vector e = Vector::Ones(4);
  EXPECT_TRUE(augmented_edm_check(bd, bd.b).is_edm_of_dim(3));
  EXPECT_TRUE(augmented_edm_check(bd, bd.b + e).is_edm_of_dim(4));
  EXPECT_FALSE(augmented_edm_check(bd, bd.b - e).is_edm());
}

TEST(AugmentedCheck, TrueRangesAreEmbeddable) {
  Rng gen(9);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 4 + trial % 7;
    const SatelliteConfig cfg = fixtures::random_config(n, 3, gen);
    const EdmBundle bd = make_bundle(cfg);
    const Vector y = fixtures::exact_squares(cfg.P, fixtures::random_receiver(cfg, gen));
    EXPECT_TRUE(augmented_edm_check(bd, y).is_edm_of_dim(3)) << trial;
    // augmented matrix itself is an EDM of the same dimension
    Matrix aug = Matrix::Zero(n + 1, n + 1);
    aug.block(1, 1, n, n) = bd.D;
    aug.block(0, 1, 1, n) = y.transpose();
    aug.block(1, 0, n, 1) = y;
    EXPECT_TRUE(classify_edm(aug).is_edm_of_dim(3)) << trial;
  }
}
