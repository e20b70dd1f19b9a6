#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "orthoconv/errors.hpp"
#include "orthoconv/random.hpp"
#include "orthoconv/tensor.hpp"

namespace orthoconv {

enum class Scheme { bjorck, qr_mgs, cayley, exponential, cholesky };

inline std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::bjorck: return "bjorck";
    case Scheme::qr_mgs: return "qr_mgs";
    case Scheme::cayley: return "cayley";
    case Scheme::exponential: return "exponential";
    case Scheme::cholesky: return "cholesky";
  }
  return "unknown";
}

inline Scheme scheme_from_string(const std::string& s) {
  if (s == "bjorck") return Scheme::bjorck;
  if (s == "qr_mgs" || s == "qr") return Scheme::qr_mgs;
  if (s == "cayley") return Scheme::cayley;
  if (s == "exponential" || s == "exp") return Scheme::exponential;
  if (s == "cholesky") return Scheme::cholesky;
  throw ShapeError("unknown orthogonalization scheme \"" + s + "\"");
}

/// Scheme selection and its knobs. `iters` is the iteration count for
/// bjorck and the number of series terms for exponential.
struct OrthoOptions {
  Scheme scheme = Scheme::bjorck;
  int iters = 12;
  double beta = 0.5;
  double cholesky_eps = 1e-7;

  void validate() const {
    detail::require(iters >= 1, "iters must be >= 1");
    detail::require(beta > 0.0 && beta <= 0.5, "beta must lie in (0, 0.5]");
    detail::require(cholesky_eps > 0.0, "cholesky eps must be positive");
  }
};

/// Unconstrained weights plus the recipe that turns them orthogonal.
struct OrthoParams {
  DenseMatrix W;
  std::uint64_t seed = 0;
  OrthoOptions options;
};

/// Row-major Gaussian fill drawn from GaussianStream(seed).
inline DenseMatrix sample_params(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  DenseMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  GaussianStream g(seed);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g.next();
  return m;
}

inline OrthoParams make_params(std::size_t rows, std::size_t cols, std::uint64_t seed, OrthoOptions options = {}) {
  return {sample_params(rows, cols, seed), seed, options};
}

/// Largest singular value of the operator `forward` (adjoint `adjoint`) by
/// power iteration on adjoint∘forward. `v` is the start vector; it is
/// overwritten with the final iterate so callers can warm start.
inline double power_iteration(const std::function<Vector(const Vector&)>& forward,
                              const std::function<Vector(const Vector&)>& adjoint, Vector& v, int iters = 50,
                              double tol = 1e-6) {
  double norm = v.norm();
  detail::require(norm > 0.0, "power iteration needs a non-zero start vector");
  v /= norm;
  double sigma = 0.0;
  for (int it = 0; it < iters; ++it) {
    const Vector u = forward(v);
    const double next = u.norm();
    if (next == 0.0) return 0.0;
    Vector w = adjoint(u);
    const double wn = w.norm();
    if (wn == 0.0) return next;
    v = w / wn;
    const bool done = std::abs(next - sigma) <= tol * next;
    sigma = next;
    if (done) break;
  }
  return forward(v).norm();
}

/// Deterministic start vector shared by every power iteration in the library.
inline Vector power_start(std::size_t n) {
  Vector v(static_cast<Eigen::Index>(n));
  GaussianStream g(0x5eed);
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = g.next();
  return v;
}

/// ‖W‖₂ by power iteration (50 iterations, relative tolerance 1e-6).
inline double spectral_norm(const DenseMatrix& W, Vector* warm = nullptr, int iters = 50, double tol = 1e-6) {
  Vector v = (warm && warm->size() == W.cols()) ? *warm : power_start(static_cast<std::size_t>(W.cols()));
  const double s = power_iteration([&](const Vector& x) -> Vector { return W * x; },
                                   [&](const Vector& y) -> Vector { return W.transpose() * y; }, v, iters, tol);
  if (warm) *warm = v;
  return s;
}

/// ‖OOᵀ − I‖∞ (max abs entry) when rows ≤ cols, else ‖OᵀO − I‖∞.
inline double orthogonality_residual(const DenseMatrix& O) {
  const DenseMatrix G = O.rows() <= O.cols() ? DenseMatrix(O * O.transpose()) : DenseMatrix(O.transpose() * O);
  return (G - DenseMatrix::Identity(G.rows(), G.cols())).cwiseAbs().maxCoeff();
}

/// Iterates W ← (1+β)W − βWWᵀW after dividing by the power-iteration
/// estimate of ‖W‖₂. Wide inputs converge to WWᵀ = I, tall ones to WᵀW = I.
inline DenseMatrix bjorck_orthogonalize(const DenseMatrix& W, double beta = 0.5, int iters = 12) {
  detail::require(beta > 0.0 && beta <= 0.5, "bjorck: beta must lie in (0, 0.5]");
  detail::require(iters >= 1, "bjorck: iters must be >= 1");
  const double norm = spectral_norm(W);
  if (!(norm > 0.0)) throw NumericalError("bjorck: spectral norm is zero");
  DenseMatrix X = W / norm;
  const bool wide = X.rows() <= X.cols();
  for (int t = 0; t < iters; ++t) {
    if (wide)
      X = (1.0 + beta) * X - beta * (X * X.transpose()) * X;
    else
      X = (1.0 + beta) * X - beta * X * (X.transpose() * X);
  }
  return X;
}

struct QrFactors {
  DenseMatrix Q;
  DenseMatrix R;
};

/// Modified Gram-Schmidt on the columns of a square or tall W.
inline QrFactors qr_mgs_factor(const DenseMatrix& W) {
  detail::require(W.rows() >= W.cols(), "qr_mgs: W must be square or tall");
  const Eigen::Index n = W.cols();
  DenseMatrix Q = W;
  DenseMatrix R = DenseMatrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    R(j, j) = Q.col(j).norm();
    if (R(j, j) < 1e-12) throw NumericalError("qr_mgs: matrix is rank deficient");
    Q.col(j) /= R(j, j);
    for (Eigen::Index k = j + 1; k < n; ++k) {
      R(j, k) = Q.col(j).dot(Q.col(k));
      Q.col(k) -= R(j, k) * Q.col(j);
    }
  }
  return {std::move(Q), std::move(R)};
}

inline DenseMatrix qr_mgs(const DenseMatrix& W) { return qr_mgs_factor(W).Q; }

/// Rectangular Cayley transform of a square or tall W (M rows, C cols):
/// U = W[:C], V = W[C:], A = U − Uᵀ + VᵀV, B = (I+A)⁻¹, Ŵ = [B(I−A); −2VB].
inline DenseMatrix cayley_rect(const DenseMatrix& W) {
  detail::require(W.rows() >= W.cols(), "cayley: W must be square or tall");
  const Eigen::Index c = W.cols(), m = W.rows();
  const DenseMatrix U = W.topRows(c);
  const DenseMatrix V = W.bottomRows(m - c);
  const DenseMatrix A = U - U.transpose() + V.transpose() * V;
  const DenseMatrix I = DenseMatrix::Identity(c, c);
  Eigen::FullPivLU<DenseMatrix> lu(I + A);
  if (!lu.isInvertible()) throw NumericalError("cayley: I + A is singular");
  const DenseMatrix B = lu.inverse();
  DenseMatrix out(m, c);
  out.topRows(c) = B * (I - A);
  out.bottomRows(m - c) = -2.0 * V * B;
  return out;
}

/// Truncated exponential Σ_{k=0}^{p} Âᵏ/k! of the normalized skew part
/// Â = (W − Wᵀ)/‖W − Wᵀ‖₂.
inline DenseMatrix exp_map(const DenseMatrix& W, int p = 12) {
  detail::require(W.rows() == W.cols(), "exp_map: W must be square");
  detail::require(p >= 1, "exp_map: p must be >= 1");
  const Eigen::Index n = W.rows();
  DenseMatrix A = W - W.transpose();
  const DenseMatrix I = DenseMatrix::Identity(n, n);
  if (A.cwiseAbs().maxCoeff() == 0.0) return I;
  A /= spectral_norm(A);
  DenseMatrix out = I;
  DenseMatrix term = I;
  for (int k = 1; k <= p; ++k) {
    term = term * A / static_cast<double>(k);
    out += term;
  }
  return out;
}

/// C = MMᵀ + eps·I = LLᵀ, returns L⁻¹M (row orthogonal up to eps).
inline DenseMatrix cholesky_orth(const DenseMatrix& M, double eps = 1e-7) {
  detail::require(M.rows() <= M.cols(), "cholesky: M must be square or wide");
  detail::require(eps > 0.0, "cholesky: eps must be positive");
  const DenseMatrix C = M * M.transpose() + eps * DenseMatrix::Identity(M.rows(), M.rows());
  Eigen::LLT<DenseMatrix> llt(C);
  if (llt.info() != Eigen::Success) throw NumericalError("cholesky: factorization failed");
  return llt.matrixL().solve(M);
}

/// Dispatch to `options.scheme`. The output is row orthogonal when
/// rows ≤ cols and column orthogonal otherwise; schemes defined for one
/// orientation run on the transpose for the other.
inline DenseMatrix orthogonalize(const DenseMatrix& W, const OrthoOptions& options = {}) {
  options.validate();
  const bool wide = W.rows() < W.cols();
  const bool tall = W.rows() > W.cols();
  switch (options.scheme) {
    case Scheme::bjorck: return bjorck_orthogonalize(W, options.beta, options.iters);
    case Scheme::qr_mgs: return wide ? DenseMatrix(qr_mgs(W.transpose()).transpose()) : qr_mgs(W);
    case Scheme::cayley: return wide ? DenseMatrix(cayley_rect(W.transpose()).transpose()) : cayley_rect(W);
    case Scheme::exponential:
      detail::require(!wide && !tall, "exponential scheme needs a square matrix");
      return exp_map(W, options.iters);
    case Scheme::cholesky:
      return tall ? DenseMatrix(cholesky_orth(W.transpose(), options.cholesky_eps).transpose())
                  : cholesky_orth(W, options.cholesky_eps);
  }
  throw ShapeError("unknown scheme");
}

inline DenseMatrix orthogonalize(const OrthoParams& params) { return orthogonalize(params.W, params.options); }

/// Haar-distributed orthogonal matrix (QR of a Gaussian, signs fixed by
/// diag(R)); the usual orthogonal layer initialization.
inline DenseMatrix orthogonal_init(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  const std::size_t big = std::max(rows, cols), small = std::min(rows, cols);
  const DenseMatrix G = sample_params(big, small, seed);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(G.rows(), G.cols());
  const Eigen::MatrixXd R = qr.matrixQR().topRows(G.cols()).template triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < Q.cols(); ++j)
    if (R(j, j) < 0.0) Q.col(j) *= -1.0;
  return rows >= cols ? DenseMatrix(Q) : DenseMatrix(Q.transpose());
}

/// Complementary symmetric projectors N = M0·M0ᵀ and I − N.
struct ProjectorPair {
  DenseMatrix N;
  DenseMatrix complement;
};

inline ProjectorPair projector_pair(const DenseMatrix& M0) {
  const Eigen::Index c = M0.rows();
  detail::require(c >= 2, "projector_pair: needs c >= 2");
  detail::require(M0.cols() == c / 2, "projector_pair: M0 must be c x floor(c/2)");
  const DenseMatrix G = M0.transpose() * M0;
  if ((G - DenseMatrix::Identity(G.rows(), G.cols())).cwiseAbs().maxCoeff() > 1e-6)
    throw NumericalError("projector_pair: M0 is not column orthogonal");
  ProjectorPair p;
  p.N = M0 * M0.transpose();
  p.complement = DenseMatrix::Identity(c, c) - p.N;
  return p;
}

}  // namespace orthoconv
