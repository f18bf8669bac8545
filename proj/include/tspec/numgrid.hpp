#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <functional>
#include <span>
#include <vector>

#include "tspec/error.hpp"

namespace tspec {

using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// Uniform truncation of the real line to [-half_width, half_width].
struct Grid {
    double half_width = 0.0;
    int n = 0;
    double spacing = 0.0;
    std::vector<double> nodes;

    /// Midpoints x_{i-1/2}, i = 0..n, including the two ghost midpoints just
    /// outside the domain where staggered differences live.
    std::vector<double> midpoints() const;
};

Grid build_grid(double half_width, int n);

/// Dense matrix whose entries are symmetric bit-for-bit.
class SymMatrix {
public:
    SymMatrix() = default;

    /// Throws InvalidArgument unless `m` is square and exactly symmetric.
    explicit SymMatrix(Eigen::MatrixXd m);

    /// Averages `m` with its transpose. fl(a+b) == fl(b+a), so the result is
    /// exactly symmetric whatever rounding skew `m` carried.
    static SymMatrix symmetrized(Eigen::MatrixXd m);

    static SymMatrix diagonal(const Eigen::VectorXd& d);

    /// this + diag(d); adding to the diagonal cannot break symmetry.
    SymMatrix plus_diagonal(const Eigen::VectorXd& d) const;

    const Eigen::MatrixXd& mat() const noexcept { return m_; }
    Eigen::Index order() const noexcept { return m_.rows(); }
    double max_abs() const { return m_.size() ? m_.cwiseAbs().maxCoeff() : 0.0; }

private:
    Eigen::MatrixXd m_;
};

/// Dense square matrix, no symmetry requirement.
class GenMatrix {
public:
    GenMatrix() = default;
    explicit GenMatrix(Eigen::MatrixXd m);

    const Eigen::MatrixXd& mat() const noexcept { return m_; }
    Eigen::Index order() const noexcept { return m_.rows(); }

private:
    Eigen::MatrixXd m_;
};

/// Eigenpairs sorted ascending; columns of `vectors` are orthonormal.
struct EigPairs {
    std::vector<double> values;
    Eigen::MatrixXd vectors;
};

enum class DiffOrder { Second = 2, Fourth = 4 };

/// Central first derivative, homogeneous Dirichlet closure; exactly antisymmetric.
GenMatrix diff1(const Grid& grid, DiffOrder order = DiffOrder::Second);

/// Three-point second derivative with Dirichlet closure.
SymMatrix diff2(const Grid& grid);

/// Staggered first difference from `n_values` unknowns with spacing `h`
/// (Dirichlet zeros outside) onto the n_values+1 midpoints between them,
/// including the two outer ghost midpoints. Shape (n_values+1) x n_values.
SparseMatrix staggered_diff(int n_values, double h, DiffOrder order);

/// -d/dx (w d/dx) as S^T diag(w) S with S = staggered_diff(grid), `w` sampled
/// at grid.midpoints(). Symmetric positive semidefinite for w >= 0.
SparseMatrix divergence_form(const Grid& grid, std::span<const double> w_mid, DiffOrder order);

/// Exactly symmetric dense copy of a structurally symmetric sparse matrix.
SymMatrix to_sym(const SparseMatrix& m);

/// The `count` algebraically smallest eigenpairs.
///
/// Residuals satisfy ||M v - lambda v|| <= 1e-9 * max|M_ij| * order. Narrow
/// banded input (possibly after a two-block interleave) goes through LAPACK's
/// band reduction with eigenvectors from inverse iteration; anything else uses
/// the dense MRRR driver.
EigPairs sym_eigs(const SymMatrix& m, int count);

/// Values only, same ordering and routing as sym_eigs but much cheaper.
std::vector<double> sym_eigvals(const SymMatrix& m, int count);

/// Whether a Cholesky factorization succeeds, i.e. the smallest eigenvalue is
/// positive up to rounding of order n * eps * max|M_ij|. Far cheaper than
/// sym_eigvals on banded input.
bool positive_definite(const SymMatrix& m);

/// Residual bound promised by sym_eigs for this matrix.
double eig_tolerance(const SymMatrix& m);

/// Bisection root of a sign-changing `f` on [lo, hi]; never evaluates outside.
double bisect(const std::function<double(double)>& f, double lo, double hi, double tol);

struct BorderedSolution {
    Vector w;
    double mu = 0.0;
    double residual = 0.0;     // ||K [w; mu] - [r; s]||
    double condition = 0.0;    // 1-norm condition estimate of K
};

/// Solves [[M, b], [c^T, 0]] [w; mu] = [r; s].
///
/// Throws SingularBorder when the augmented matrix is numerically rank
/// deficient or the back-substituted residual misses 1e-10 of its scale.
BorderedSolution bordered_solve(const GenMatrix& m, const Vector& b, const Vector& c,
                                const Vector& r, double s);

/// Same, for callers that already hold the sparse operator.
BorderedSolution bordered_solve(const SparseMatrix& m, const Vector& b, const Vector& c,
                                const Vector& r, double s);

}  // namespace tspec
