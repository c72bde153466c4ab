#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace edmgps;
using fixtures::max_abs;

namespace {

struct Case {
  SatelliteConfig cfg;
  EdmBundle bundle;
  Vector q;
  Vector y;
  Measurement dm;
};

// Exact squares plus independent Gaussian perturbations of size `noise`,
// rejected until |kappa| clears ten bands.
Case faulty_case(Rng& gen, double noise = 1e-2) {
  for (;;) {
    Case c;
    c.cfg = fixtures::random_config(4, 3, gen);
    c.bundle = make_bundle(c.cfg);
    c.q = fixtures::random_receiver(c.cfg, gen);
    c.y = fixtures::exact_squares(c.cfg.P, c.q);
    Vector d = c.y;
    for (Index i = 0; i < 4; ++i) d(i) += noise * gen.normal();
    c.dm = measurement_from_squares(d);
    if (std::abs(kappa(d, c.bundle)) > 10.0 * kappa_band(d, 1e-8)) return c;
  }
}

double rel(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST(SecularN4, StructureOfS) {
  Rng gen(41);
  for (int trial = 0; trial < 100; ++trial) {
    const Case c = faulty_case(gen);
    const SecularProblemN4 sp = build_secular_n4(c.dm, c.bundle);
    EXPECT_LE(max_abs(sp.S.transpose() * sp.S - Matrix::Identity(4, 4)), 1e-12);
    EXPECT_LE(max_abs(sp.S.col(3) - Vector::Constant(4, 0.5)), 0.0);
    EXPECT_EQ(sp.c(3), 1.0);
    EXPECT_EQ(sp.mu(3), 0.0);
    EXPECT_GE(sp.mu(0), sp.mu(1));
    EXPECT_GE(sp.mu(1), sp.mu(2));
    EXPECT_GT(sp.mu(2), 0.0);
    // S diagonalizes B^+ with eigenvalues mu
    EXPECT_LE(max_abs(c.bundle.Bdag * sp.S - sp.S * sp.mu.asDiagonal()), 1e-11);
    // sign convention: largest-magnitude entry of each of the first three columns is positive
    for (Index j = 0; j < 3; ++j) {
      Index k = 0;
      sp.S.col(j).cwiseAbs().maxCoeff(&k);
      EXPECT_GT(sp.S(k, j), 0.0);
    }
  }
}

TEST(SecularN4, TrivialMeasurements) {
  Rng gen(42);
  const Case c = faulty_case(gen);
  const SecularProblemN4 at_b = build_secular_n4(measurement_from_squares(c.bundle.b), c.bundle);
  EXPECT_LE(at_b.c.head(3).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(at_b.kappa_dm, 0.0);
  EXPECT_TRUE(at_b.degenerate);
  for (double l : {-0.3, 0.0, 0.05}) EXPECT_NEAR(eval_g(at_b, l), 2.0 * l, 1e-15);

  const double delta = 0.37;
  const SecularProblemN4 shifted =
      build_secular_n4(measurement_from_squares(c.bundle.b + Vector::Constant(4, delta)), c.bundle);
  EXPECT_LE(shifted.c.head(3).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_NEAR(shifted.kappa_dm, 4.0 * delta, 1e-14);
}

TEST(SecularN4, GAtZeroIsMinusKappa) {
  Rng gen(43);
  for (int trial = 0; trial < 500; ++trial) {
    const Case c = faulty_case(gen);
    const SecularProblemN4 sp = build_secular_n4(c.dm, c.bundle);
    EXPECT_LE(rel(eval_g(sp, 0.0), -kappa(c.dm.dm, c.bundle)), 1e-10) << trial;
  }
}

TEST(SecularN4, DualFormsAgree) {
  Rng gen(44);
  for (int trial = 0; trial < 50; ++trial) {
    const Case c = faulty_case(gen);
    const SecularProblemN4 sp = build_secular_n4(c.dm, c.bundle);
    const double lo = std::min(0.0, 0.5 * sp.kappa_dm);
    const double hi = sp.pole();
    for (int k = 0; k < 100; ++k) {
      const double l = lo + (hi - lo) * (0.001 + 0.998 * gen.uniform());
      const double g = eval_g(sp, l);
      EXPECT_LE(std::abs(g - eval_g_raw(sp, l)) / std::max(1.0, std::abs(g)), 1e-10) << trial << " " << l;
    }
  }
}

TEST(SecularN4, GMatchesConstraintAtXOfLambda) {
  // g(lambda) is -kappa evaluated at y = S x(lambda) + dm.
  Rng gen(45);
  for (int trial = 0; trial < 50; ++trial) {
    const Case c = faulty_case(gen);
    const SecularProblemN4 sp = build_secular_n4(c.dm, c.bundle);
    const double lo = std::min(0.0, 0.5 * sp.kappa_dm);
    const double hi = sp.pole();
    for (int k = 0; k < 20; ++k) {
      const double l = lo + (hi - lo) * (0.01 + 0.98 * gen.uniform());
      const Vector y = sp.S * x_of_lambda(sp, l) + c.dm.dm;
      const double g = eval_g(sp, l);
      EXPECT_LE(std::abs(g + kappa(y, c.bundle)) / std::max(1.0, std::abs(g)), 1e-9) << trial;
    }
  }
}

TEST(SecularN4, DerivativeMatchesFiniteDifference) {
  Rng gen(46);
  for (int trial = 0; trial < 50; ++trial) {
    const Case c = faulty_case(gen);
    const SecularProblemN4 sp = build_secular_n4(c.dm, c.bundle);
    const double l = 0.3 * sp.pole() * (gen.uniform() - 0.5);
    const double h = 1e-6 * sp.pole();
    const double fd = (eval_g(sp, l + h) - eval_g(sp, l - h)) / (2.0 * h);
    EXPECT_NEAR(eval_g_derivative(sp, l), fd, 1e-6 * std::abs(fd));
  }
}

TEST(SecularN4, MonotoneOnBracket) {
  Rng gen(47);
  for (int trial = 0; trial < 30; ++trial) {
    const Case c = faulty_case(gen);
    const SecularProblemN4 sp = build_secular_n4(c.dm, c.bundle);
    const double lo = std::min(0.0, 0.5 * sp.kappa_dm);
    const double hi = sp.pole() * (1.0 - 1e-6);
    double prev = eval_g(sp, lo);
    for (int k = 1; k < 1000; ++k) {
      const double g = eval_g(sp, lo + (hi - lo) * k / 999.0);
      ASSERT_GT(g, prev) << trial << " " << k;
      prev = g;
    }
  }
}

TEST(SecularN4, PoleEvaluation) {
  Rng gen(48);
  const Case c = faulty_case(gen);
  const SecularProblemN4 sp = build_secular_n4(c.dm, c.bundle);
  try {
    eval_g(sp, sp.pole());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::PoleEvaluation);
  }
}

TEST(SolveN4, ConsistentInputIsReturned) {
  Rng gen(49);
  for (int trial = 0; trial < 50; ++trial) {
    const SatelliteConfig cfg = fixtures::random_config(4, 3, gen);
    const EdmBundle bd = make_bundle(cfg);
    const Vector q = fixtures::random_receiver(cfg, gen);
    const Vector y = fixtures::exact_squares(cfg.P, q);
    const SolveReport rep = solve_n4(measurement_from_squares(y), bd);
    EXPECT_EQ(rep.method, "consistent");
    EXPECT_EQ(rep.lambda_star, 0.0);
    EXPECT_EQ(rep.y_star, y);
    EXPECT_LE((rep.fix.q_centered - q).norm(), 1e-10);
  }
}

TEST(SolveN4, ResidualsOnFaultyInstances) {
  Rng gen(50);
  for (int trial = 0; trial < 1000; ++trial) {
    const Case c = faulty_case(gen);
    const SolveReport rep = solve_n4(c.dm, c.bundle);
    const SecularProblemN4 sp = build_secular_n4(c.dm, c.bundle);
    ASSERT_TRUE(rep.converged);
    EXPECT_EQ(rep.method, "secular_n4");
    EXPECT_LE(std::abs(eval_g(sp, rep.lambda_star)), 1e-12 * std::max(1.0, std::abs(sp.h))) << trial;
    EXPECT_GT(rep.lambda_star, rep.bracket.first);
    EXPECT_LT(rep.lambda_star, rep.bracket.second);
    EXPECT_LT(rep.lambda_star, sp.pole());
    if (sp.kappa_dm > 0) {
      EXPECT_EQ(rep.bracket.first, 0.0);
      EXPECT_EQ(rep.bracket.second, sp.pole());
    } else {
      EXPECT_EQ(rep.bracket.first, 0.5 * sp.kappa_dm);
      EXPECT_EQ(rep.bracket.second, 0.0);
    }
    EXPECT_LE(std::abs(rep.kappa_residual), 1e-10 * std::max(1.0, rep.y_star.mean())) << trial;
    EXPECT_TRUE(augmented_edm_check(c.bundle, rep.y_star).is_edm_of_dim(3)) << trial;
    // stationarity: (I - lambda Lambda) x + lambda c = 0 with x recovered from y*
    const Vector x = sp.S.transpose() * (rep.y_star - c.dm.dm);
    const Vector kkt = x - rep.lambda_star * (sp.mu.asDiagonal() * x) + rep.lambda_star * sp.c;
    EXPECT_LE(max_abs(kkt), 1e-10) << trial;
  }
}

TEST(SolveN4, NoFeasibleNeighbourIsCloser) {
  // Feasible points of kappa_4 = 0 are exactly the squared-distance vectors
  // y(q); sample q around the returned fix.
  Rng gen(51);
  for (int trial = 0; trial < 50; ++trial) {
    const Case c = faulty_case(gen);
    const SolveReport rep = solve_n4(c.dm, c.bundle);
    const double best = rep.objective;
    for (int k = 0; k < 500; ++k) {
      Vector q = rep.fix.q_centered;
      const double radius = k < 250 ? 1e-3 : 1e-1;
      for (Index j = 0; j < 3; ++j) q(j) += radius * gen.normal();
      const Vector y = fixtures::exact_squares(c.cfg.P, q);
      EXPECT_GE((y - c.dm.dm).squaredNorm(), best * (1.0 - 1e-9) - 1e-15) << trial;
    }
  }
}

TEST(SolveN4, ConstantShiftOfB) {
  Rng gen(52);
  const Case c = faulty_case(gen);
  const double delta = 0.2;
  const Measurement dm = measurement_from_squares(c.bundle.b + Vector::Constant(4, delta));
  const SolveReport rep = solve_n4(dm, c.bundle);
  EXPECT_NEAR(rep.lambda_star, 2.0 * delta, 1e-12);
  EXPECT_LE(max_abs(rep.y_star - c.bundle.b), 1e-12);
  EXPECT_LE(rep.fix.q_centered.norm(), 1e-12);
  EXPECT_LE(std::abs(rep.kappa_residual), 1e-10);

  // below b the secular function never changes sign on its bracket
  const Measurement below = measurement_from_squares(c.bundle.b - Vector::Constant(4, delta));
  try {
    solve_n4(below, c.bundle);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateCoefficient);
  }
}

TEST(SolveN4, AgreesWithGeneralPathAndOracle) {
  Rng gen(53);
  for (int trial = 0; trial < 200; ++trial) {
    const Case c = faulty_case(gen, 1e-2 * gen.uniform());
    const SolveReport a = solve_n4(c.dm, c.bundle);
    const SolveReport b = solve_qcqp(c.dm, c.bundle);
    const SolveReport o = nlp_oracle(c.dm, c.bundle);
    const double ynorm = c.dm.dm.norm();
    EXPECT_LE((a.y_star - b.y_star).norm() / ynorm, 1e-9) << trial;
    EXPECT_LE((a.y_star - o.y_star).norm() / ynorm, 1e-6) << trial;
    EXPECT_LE((a.fix.q_centered - o.fix.q_centered).norm(), 1e-6) << trial;
  }
}

TEST(SolveN4, ScaleEquivariant) {
  Rng gen(54);
  for (int trial = 0; trial < 50; ++trial) {
    const Case c = faulty_case(gen);
    const double alpha = trial % 2 ? 3.0 : 0.25;
    SatelliteConfig scaled = c.cfg;
    scaled.P *= alpha;
    const EdmBundle bd = make_bundle(scaled);
    const SolveReport base = solve_n4(c.dm, c.bundle);
    const SolveReport rep = solve_n4(measurement_from_squares(alpha * alpha * c.dm.dm), bd);
    EXPECT_LE((rep.y_star - alpha * alpha * base.y_star).norm() / rep.y_star.norm(), 1e-9) << trial;
    EXPECT_LE((rep.fix.q_centered - alpha * base.fix.q_centered).norm(), 1e-9 * alpha) << trial;
  }
}

TEST(SolveN4, RequiresFourInThree) {
  Rng gen(55);
  const SatelliteConfig cfg = fixtures::random_config(5, 3, gen);
  const EdmBundle bd = make_bundle(cfg);
  try {
    solve_n4(measurement_from_squares(bd.b), bd);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BadShape);
  }
}
