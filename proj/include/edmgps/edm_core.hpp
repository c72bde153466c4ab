#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "edmgps/error.hpp"

namespace edmgps {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kDefaultRankTol = 1e-9;
inline constexpr double kDefaultScale = 1e-7;

/// Satellite positions in the working frame: translated so the centroid sits
/// at the origin and multiplied by `scale`. Rows of `P` are satellites.
struct SatelliteConfig {
  Matrix P;
  Vector centroid;  // meters, unscaled
  double scale = 1.0;

  Index n() const { return P.rows(); }
  Index r() const { return P.cols(); }

  Vector to_world(const Vector& q_centered) const { return q_centered / scale + centroid; }
  Vector to_centered(const Vector& q_world) const { return scale * (q_world - centroid); }
};

namespace detail {

// The centred P has column sums that are only zero up to round-off, so any
// e-component in v leaks into P^T v and gets amplified by 1/nu_min. Strip it
// before projecting onto the range of P.
inline Vector demean(const Vector& v) { return (v.array() - v.mean()).matrix(); }

/// Eigen-decomposition of a symmetric matrix with eigenvalues in descending
/// order.
struct SortedEigen {
  Vector values;
  Matrix vectors;
};

inline SortedEigen sorted_eigen(const Matrix& symmetric) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetric);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorKind::BadInput, "symmetric eigensolver failed");
  }
  const Index m = symmetric.rows();
  SortedEigen out{Vector(m), Matrix(m, m)};
  for (Index i = 0; i < m; ++i) {
    out.values(i) = solver.eigenvalues()(m - 1 - i);
    out.vectors.col(i) = solver.eigenvectors().col(m - 1 - i);
  }
  return out;
}

/// Eigenvalues within this magnitude of zero count as zero.
inline double zero_threshold(const Vector& eigenvalues, double rank_tol) {
  const double largest = eigenvalues.size() ? eigenvalues.cwiseAbs().maxCoeff() : 0.0;
  return rank_tol * std::max(largest, 1.0);
}

inline double relative_asymmetry(const Matrix& A) {
  const double norm = std::max(A.cwiseAbs().maxCoeff(), 1.0);
  return (A - A.transpose()).cwiseAbs().maxCoeff() / norm;
}

}  // namespace detail

/// Subtracts the centroid from `raw_points` (one point per row) and scales.
/// Throws BadShape when n < r + 1 and SingularGeometry when the centered
/// points do not span R^r.
inline SatelliteConfig center_configuration(const Matrix& raw_points, double scale = kDefaultScale,
                                            double rank_tol = kDefaultRankTol) {
  const Index n = raw_points.rows();
  const Index r = raw_points.cols();
  if (r < 1 || n < r + 1) {
    throw Error(ErrorKind::BadShape, "need at least r+1 points, got n=" + std::to_string(n) +
                                         " r=" + std::to_string(r));
  }
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw Error(ErrorKind::BadInput, "scale must be positive and finite");
  }
  if (!raw_points.allFinite()) {
    throw Error(ErrorKind::BadInput, "non-finite satellite coordinate");
  }

  SatelliteConfig cfg;
  cfg.scale = scale;
  cfg.centroid = raw_points.colwise().mean().transpose();
  cfg.P = scale * (raw_points.rowwise() - cfg.centroid.transpose());

  const Vector nu = detail::sorted_eigen(cfg.P.transpose() * cfg.P).values;
  if (!(nu(r - 1) > rank_tol * nu(0))) {
    throw Error(ErrorKind::SingularGeometry, "satellites do not affinely span R^" + std::to_string(r));
  }
  return cfg;
}

/// Squared pairwise distances between the rows of `points`.
inline Matrix build_edm(const Matrix& points) {
  const Index n = points.rows();
  Matrix D = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double d = (points.row(i) - points.row(j)).squaredNorm();
      D(i, j) = d;
      D(j, i) = d;
    }
  }
  return D;
}

inline Matrix build_edm(const SatelliteConfig& config) { return build_edm(config.P); }

/// Orthonormal basis of the complement of the all-ones vector. The Householder
/// reflection H sending e/sqrt(n) to the first unit vector is symmetric, so its
/// first column is e/sqrt(n) and the remaining n-1 columns form V.
inline Matrix build_v_basis(Index n) {
  if (n < 2) throw Error(ErrorKind::BadShape, "V basis needs n >= 2");
  Vector u = Vector::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
  u(0) -= 1.0;
  const Matrix H = Matrix::Identity(n, n) - (2.0 / u.squaredNorm()) * u * u.transpose();
  return H.rightCols(n - 1);
}

/// Centered Gram matrix B = -1/2 J D J with J = I - ee^T/n.
inline Matrix gram_from_edm(const Matrix& D) {
  const Index n = D.rows();
  const Matrix J = Matrix::Identity(n, n) - Matrix::Constant(n, n, 1.0 / static_cast<double>(n));
  return -0.5 * J * D * J;
}

/// D = diag(B) e^T + e diag(B)^T - 2B.
inline Matrix edm_from_gram(const Matrix& B) {
  const Vector b = B.diagonal();
  const Index n = B.rows();
  return b * Vector::Ones(n).transpose() + Vector::Ones(n) * b.transpose() - 2.0 * B;
}

struct EdmClass {
  enum class Tag { EdmOfDim, NotEdm };

  Tag tag = Tag::NotEdm;
  Index dim = 0;
  double witness = 0.0;  // most negative eigenvalue when NotEdm
  bool borderline = false;  // some eigenvalue within a factor 10 of the zero threshold

  bool is_edm() const { return tag == Tag::EdmOfDim; }
  bool is_edm_of_dim(Index k) const { return is_edm() && dim == k; }

  static EdmClass edm_of_dim(Index k) { return {Tag::EdmOfDim, k, 0.0}; }
  static EdmClass not_edm(double witness) { return {Tag::NotEdm, 0, witness}; }
};

inline std::string to_string(const EdmClass& c) {
  return c.is_edm() ? "EdmOfDim(" + std::to_string(c.dim) + ")" : "NotEdm";
}

namespace detail {

/// PSD + rank classification of a symmetric matrix.
inline EdmClass classify_psd(const Matrix& symmetric, double rank_tol) {
  const Vector eig = sorted_eigen(symmetric).values;
  const double zero = zero_threshold(eig, rank_tol);
  const double smallest = eig(eig.size() - 1);
  EdmClass c = smallest < -zero ? EdmClass::not_edm(smallest) : EdmClass::edm_of_dim((eig.array() > zero).count());
  c.borderline = ((eig.array().abs() > 0.1 * zero) && (eig.array().abs() < 10.0 * zero)).any();
  return c;
}

}  // namespace detail

/// An EDM together with everything derived from it: V basis, projected Gram X,
/// Gram B, b = diag(B), the pseudoinverse of B and a Gale matrix Z.
///
/// `config` holds a configuration matrix generating D. When the bundle is made
/// from a SatelliteConfig it is that configuration; when it is factored from a
/// bare matrix it is the classical MDS configuration V W sqrt(Delta).
struct EdmBundle {
  Matrix D;
  Matrix V;
  Matrix X;
  Matrix B;
  Vector b;
  Matrix Bdag;
  Matrix Bdag_half;  // n x r with B^+ = Bdag_half Bdag_half^T
  Matrix Z;
  Index r = 0;

  Vector x_eigenvalues;  // positive eigenvalues of X, descending (Delta)
  Matrix W;              // their eigenvectors, (n-1) x r
  Matrix U;              // null-space eigenvectors of X, (n-1) x (n-1-r)

  SatelliteConfig config;

  Index n() const { return D.rows(); }
  bool has_gale_space() const { return Z.cols() > 0; }
};

/// Factors D through its projected Gram matrix. Eigenvalues of X within the
/// rank tolerance are clamped to zero; clearly negative ones raise NotAnEdm.
inline EdmBundle factor_edm(const Matrix& D, const Matrix& V, double rank_tol = kDefaultRankTol) {
  const Index n = D.rows();
  if (D.cols() != n || V.rows() != n || V.cols() != n - 1) {
    throw Error(ErrorKind::BadShape, "factor_edm: inconsistent D/V shapes");
  }
  if (detail::relative_asymmetry(D) > rank_tol || D.diagonal().cwiseAbs().maxCoeff() > 0.0) {
    throw Error(ErrorKind::BadInput, "factor_edm: D must be symmetric with zero diagonal");
  }

  EdmBundle out;
  out.D = D;
  out.V = V;
  out.X = -0.5 * V.transpose() * D * V;
  out.X = 0.5 * (out.X + out.X.transpose());

  const auto eig = detail::sorted_eigen(out.X);
  const double zero = detail::zero_threshold(eig.values, rank_tol);
  const double smallest = eig.values(n - 2);
  if (smallest < -zero) {
    throw Error(ErrorKind::NotAnEdm, "projected Gram matrix has eigenvalue " + std::to_string(smallest));
  }
  const Index r = (eig.values.array() > zero).count();
  if (r == 0) throw Error(ErrorKind::SingularGeometry, "EDM has embedding dimension 0");

  out.r = r;
  out.x_eigenvalues = eig.values.head(r);
  out.W = eig.vectors.leftCols(r);
  out.U = eig.vectors.rightCols(n - 1 - r);

  const Matrix VW = V * out.W;
  out.B = VW * out.x_eigenvalues.asDiagonal() * VW.transpose();
  out.b = out.B.diagonal();
  out.Bdag_half = VW * out.x_eigenvalues.cwiseInverse().cwiseSqrt().asDiagonal();
  out.Bdag = out.Bdag_half * out.Bdag_half.transpose();
  out.Z = V * out.U;

  out.config.P = VW * out.x_eigenvalues.cwiseSqrt().asDiagonal();
  out.config.centroid = Vector::Zero(r);
  out.config.scale = 1.0;
  return out;
}

namespace detail {

/// Recomputes the spectral factors from the coordinates. Going through D and
/// X squares the conditioning of P (small eigenvalues of X carry absolute
/// error ~eps * largest); a thin SVD of P keeps it at ~eps * cond(P).
inline void refine_from_points(EdmBundle& out, const Matrix& P) {
  const Index n = P.rows();
  const Index r = P.cols();
  const Eigen::JacobiSVD<Matrix> svd(P, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Matrix& Up = svd.matrixU();
  const Vector& sigma = svd.singularValues();

  out.x_eigenvalues = sigma.array().square();
  out.W = out.V.transpose() * Up;
  out.X = out.W * out.x_eigenvalues.asDiagonal() * out.W.transpose();
  out.B = P * P.transpose();
  out.b = P.rowwise().squaredNorm();
  out.Bdag_half = Up * sigma.cwiseInverse().asDiagonal();
  out.Bdag = out.Bdag_half * out.Bdag_half.transpose();

  // Gale basis: trailing columns of a full QR of [P e].
  Matrix Pe(n, r + 1);
  Pe << P, Vector::Ones(n);
  const Eigen::HouseholderQR<Matrix> qr(Pe);
  const Matrix Q = qr.householderQ();
  out.Z = Q.rightCols(n - r - 1);
  out.U = out.V.transpose() * out.Z;
}

}  // namespace detail

/// Bundle for a satellite configuration; the stored configuration is `config`
/// itself so positions come back in its frame. D fixes the embedding
/// dimension; the factors are then taken from the coordinates directly.
inline EdmBundle make_bundle(const SatelliteConfig& config, double rank_tol = kDefaultRankTol) {
  EdmBundle out = factor_edm(build_edm(config), build_v_basis(config.n()), rank_tol);
  if (out.r != config.r()) {
    throw Error(ErrorKind::SingularGeometry, "embedding dimension " + std::to_string(out.r) +
                                                 " differs from ambient dimension " +
                                                 std::to_string(config.r()));
  }
  detail::refine_from_points(out, config.P);
  out.config = config;
  return out;
}

/// Membership test via the eigenvalues of -V^T D V.
inline EdmClass classify_edm(const Matrix& D, double rank_tol = kDefaultRankTol) {
  const Index n = D.rows();
  if (D.cols() != n || n < 2) throw Error(ErrorKind::BadShape, "classify_edm: D must be square, n >= 2");
  if (detail::relative_asymmetry(D) > rank_tol || D.diagonal().cwiseAbs().maxCoeff() > 0.0) {
    return EdmClass::not_edm(std::numeric_limits<double>::quiet_NaN());
  }
  const Matrix V = build_v_basis(n);
  const Matrix M = -V.transpose() * D * V;
  return detail::classify_psd(0.5 * (M + M.transpose()), rank_tol);
}

/// Classifies [[0, y^T], [y, D]] through the eigenvalues of y e^T + e y^T - D.
inline EdmClass augmented_edm_check(const EdmBundle& bundle, const Vector& y,
                                    double rank_tol = kDefaultRankTol) {
  const Index n = bundle.n();
  if (y.size() != n) throw Error(ErrorKind::BadShape, "augmented_edm_check: y has wrong length");
  if (!y.allFinite()) return EdmClass::not_edm(std::numeric_limits<double>::quiet_NaN());
  const Vector e = Vector::Ones(n);
  const Matrix M = y * e.transpose() + e * y.transpose() - bundle.D;
  return detail::classify_psd(M, rank_tol);
}

}  // namespace edmgps
