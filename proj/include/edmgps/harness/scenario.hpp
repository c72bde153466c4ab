#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <type_traits>
#include <variant>

#include "edmgps/edm_core.hpp"
#include "edmgps/rng.hpp"

namespace edmgps::harness {

/// One positioning problem in world units (meters).
struct Scenario {
  Index dim = 3;
  Matrix satellites;    // n x dim
  Vector pseudoranges;  // rho^m, meters
  std::optional<Vector> true_receiver;
  std::optional<double> true_bias;    // added to rho^2, m^2
  std::optional<double> noise_sigma;  // range sigma, m
  std::optional<std::uint64_t> seed;
  std::string label;

  Index n() const { return satellites.rows(); }
};

inline void validate(const Scenario& sc) {
  if (sc.dim < 1 || sc.satellites.cols() != sc.dim) {
    throw Error(ErrorKind::BadShape, "satellite rows must have dim=" + std::to_string(sc.dim) + " coordinates");
  }
  if (sc.pseudoranges.size() != sc.n()) {
    throw Error(ErrorKind::BadShape, "pseudorange count " + std::to_string(sc.pseudoranges.size()) +
                                         " does not match satellite count " + std::to_string(sc.n()));
  }
  if (sc.n() < sc.dim + 1) throw Error(ErrorKind::BadShape, "need at least dim+1 satellites");
  if (sc.true_receiver && sc.true_receiver->size() != sc.dim) {
    throw Error(ErrorKind::BadShape, "true_receiver must have dim coordinates");
  }
}

struct Geometry {
  double shell_radius = 2.66e7;     // satellite orbit radius, m
  double receiver_radius = 6.4e6;   // receiver sampled uniformly in this ball, m
  double max_condition = 1e6;       // on P^T P after centering
  bool coplanar = false;            // force satellites onto a great circle (no rejection)
};

namespace detail {

inline Vector random_direction(Rng& rng, Index dim) {
  Vector v(dim);
  do {
    for (Index j = 0; j < dim; ++j) v(j) = rng.normal();
  } while (v.norm() == 0.0);
  return v.normalized();
}

}  // namespace detail

/// Satellites uniform on a sphere, receiver uniform in a ball, exact ranges.
/// Rejection-samples until the centered configuration is well conditioned.
inline Scenario generate_scenario(Index n, Index dim, const Geometry& geometry, std::uint64_t seed) {
  if (dim < 1 || n < dim + 1) throw Error(ErrorKind::BadShape, "generate_scenario needs n >= dim+1");
  Rng rng(seed);

  for (int attempt = 0; attempt < 1000; ++attempt) {
    Matrix sats(n, dim);
    for (Index i = 0; i < n; ++i) {
      Vector d = detail::random_direction(rng, dim);
      if (geometry.coplanar && dim > 1) {
        d(dim - 1) = 0.0;
        if (d.norm() == 0.0) d(0) = 1.0;
        d.normalize();
      }
      sats.row(i) = geometry.shell_radius * d.transpose();
    }

    if (!geometry.coplanar) {
      const Matrix P = sats.rowwise() - sats.colwise().mean();
      const Vector nu = edmgps::detail::sorted_eigen(P.transpose() * P).values;
      if (!(nu(dim - 1) > 0.0) || nu(0) / nu(dim - 1) >= geometry.max_condition) continue;
    }

    const double radius = geometry.receiver_radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(dim));
    const Vector receiver = radius * detail::random_direction(rng, dim);

    Scenario sc;
    sc.dim = dim;
    sc.satellites = sats;
    sc.pseudoranges = (sats.rowwise() - receiver.transpose()).rowwise().norm();
    sc.true_receiver = receiver;
    sc.seed = seed;
    sc.label = "sim-n" + std::to_string(n) + "-s" + std::to_string(seed);
    return sc;
  }
  throw Error(ErrorKind::GeometryRejection, "no acceptable geometry after 1000 attempts");
}

struct CleanNoise {};
struct GaussianSq {
  double sigma_m = 5.0;  // range sigma; the square gets N(0, (2 rho sigma)^2)
};
struct ConstantBias {
  double delta_m2 = 0.0;
};
struct SingleFault {
  Index index = 0;  // zero-based satellite index
  double delta_m2 = 0.0;
};

using NoiseModel = std::variant<CleanNoise, GaussianSq, ConstantBias, SingleFault>;

inline std::string describe(const NoiseModel& model) {
  return std::visit(
      [](const auto& m) -> std::string {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, CleanNoise>) {
          return "clean";
        } else if constexpr (std::is_same_v<T, GaussianSq>) {
          return "gauss" + std::to_string(m.sigma_m);
        } else if constexpr (std::is_same_v<T, ConstantBias>) {
          return "bias" + std::to_string(m.delta_m2);
        } else {
          return "fault" + std::to_string(m.index) + ":" + std::to_string(m.delta_m2);
        }
      },
      model);
}

/// Perturbs the squared pseudoranges. A perturbation driving a square negative
/// is redrawn (Gaussian only) unless `clamp`, which sets it to zero instead.
inline Scenario apply_noise(Scenario sc, const NoiseModel& model, std::uint64_t seed, bool clamp = false) {
  validate(sc);
  Rng rng(seed);
  const Index n = sc.n();
  const Vector rho = sc.pseudoranges;
  Vector sq = rho.array().square();

  const auto settle = [&](Index i, double value) {
    if (value >= 0.0) return value;
    if (clamp) return 0.0;
    throw Error(ErrorKind::NegativeSquare, "perturbed square of satellite " + std::to_string(i) + " is negative");
  };

  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, GaussianSq>) {
          sc.noise_sigma = m.sigma_m;
          for (Index i = 0; i < n; ++i) {
            double v = sq(i) + 2.0 * rho(i) * m.sigma_m * rng.normal();
            for (int tries = 0; v < 0.0 && !clamp && tries < 100; ++tries) {
              v = sq(i) + 2.0 * rho(i) * m.sigma_m * rng.normal();
            }
            sq(i) = settle(i, v);
          }
        } else if constexpr (std::is_same_v<T, ConstantBias>) {
          sc.true_bias = m.delta_m2;
          for (Index i = 0; i < n; ++i) sq(i) = settle(i, sq(i) + m.delta_m2);
        } else if constexpr (std::is_same_v<T, SingleFault>) {
          if (m.index < 0 || m.index >= n) throw Error(ErrorKind::BadInput, "fault index out of range");
          sq(m.index) = settle(m.index, sq(m.index) + m.delta_m2);
        }
      },
      model);

  sc.pseudoranges = sq.cwiseSqrt();
  return sc;
}

}  // namespace edmgps::harness
