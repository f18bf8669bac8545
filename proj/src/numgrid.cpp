#include "tspec/numgrid.hpp"

#include <Eigen/SparseLU>

#include <cmath>
#include <limits>
#include <string>

namespace tspec {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

// Beyond this 1-norm condition estimate the bordered matrix is treated as
// rank deficient. Fourth-order operators alone reach ~1e8 at n = 2048 because
// their norm grows like h^-4, so the threshold sits near 1/(64 eps).
constexpr double kMaxBorderCondition = 1.0 / (64.0 * kEps);

}  // namespace

std::vector<double> Grid::midpoints() const {
    std::vector<double> mid(static_cast<std::size_t>(n) + 1);
    for (int e = 0; e <= n; ++e) {
        mid[static_cast<std::size_t>(e)] = -half_width + (e - 0.5) * spacing;
    }
    return mid;
}

Grid build_grid(double half_width, int n) {
    if (n < 3) {
        throw Error(ErrorKind::InvalidGrid, "need at least 3 nodes, got " + std::to_string(n));
    }
    if (!(half_width > 0.0) || !std::isfinite(half_width)) {
        throw Error(ErrorKind::InvalidGrid, "half_width must be positive and finite");
    }
    Grid g;
    g.half_width = half_width;
    g.n = n;
    g.spacing = 2.0 * half_width / (n - 1);
    g.nodes.resize(static_cast<std::size_t>(n));
    // Fill from both ends so that x_i == -x_{n-1-i} holds bit-for-bit.
    for (int i = 0; i < n; ++i) {
        const int j = n - 1 - i;
        if (i > j) break;
        const double x = -half_width + i * g.spacing;
        g.nodes[static_cast<std::size_t>(i)] = (i == j) ? 0.0 : x;
        g.nodes[static_cast<std::size_t>(j)] = (i == j) ? 0.0 : -x;
    }
    return g;
}

SymMatrix::SymMatrix(Eigen::MatrixXd m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols()) {
        throw Error(ErrorKind::InvalidArgument, "SymMatrix must be square");
    }
    for (Eigen::Index j = 0; j < m_.cols(); ++j) {
        for (Eigen::Index i = j + 1; i < m_.rows(); ++i) {
            if (m_(i, j) != m_(j, i)) {
                throw Error(ErrorKind::InvalidArgument, "SymMatrix input is not exactly symmetric");
            }
        }
    }
}

SymMatrix SymMatrix::symmetrized(Eigen::MatrixXd m) {
    if (m.rows() != m.cols()) {
        throw Error(ErrorKind::InvalidArgument, "SymMatrix must be square");
    }
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        for (Eigen::Index i = j + 1; i < m.rows(); ++i) {
            const double avg = 0.5 * (m(i, j) + m(j, i));
            m(i, j) = avg;
            m(j, i) = avg;
        }
    }
    SymMatrix out;
    out.m_ = std::move(m);
    return out;
}

SymMatrix SymMatrix::diagonal(const Eigen::VectorXd& d) {
    SymMatrix out;
    out.m_ = d.asDiagonal();
    return out;
}

SymMatrix SymMatrix::plus_diagonal(const Eigen::VectorXd& d) const {
    if (d.size() != m_.rows()) throw Error(ErrorKind::InvalidArgument, "diagonal length does not match order");
    SymMatrix out;
    out.m_ = m_;
    out.m_.diagonal() += d;
    return out;
}

GenMatrix::GenMatrix(Eigen::MatrixXd m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols()) {
        throw Error(ErrorKind::InvalidArgument, "GenMatrix must be square");
    }
}

GenMatrix diff1(const Grid& grid, DiffOrder order) {
    const int n = grid.n;
    const double h = grid.spacing;
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
    if (order == DiffOrder::Second) {
        const double c = 1.0 / (2.0 * h);
        for (int i = 0; i + 1 < n; ++i) {
            d(i, i + 1) = c;
            d(i + 1, i) = -c;
        }
    } else {
        const double c1 = 8.0 / (12.0 * h);
        const double c2 = 1.0 / (12.0 * h);
        for (int i = 0; i < n; ++i) {
            if (i + 1 < n) {
                d(i, i + 1) = c1;
                d(i + 1, i) = -c1;
            }
            if (i + 2 < n) {
                d(i, i + 2) = -c2;
                d(i + 2, i) = c2;
            }
        }
    }
    return GenMatrix(std::move(d));
}

SymMatrix diff2(const Grid& grid) {
    const int n = grid.n;
    const double inv_h2 = 1.0 / (grid.spacing * grid.spacing);
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        d(i, i) = -2.0 * inv_h2;
        if (i + 1 < n) {
            d(i, i + 1) = inv_h2;
            d(i + 1, i) = inv_h2;
        }
    }
    return SymMatrix(std::move(d));
}

SparseMatrix staggered_diff(int n_values, double h, DiffOrder order) {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(n_values + 1) * 4);
    auto put = [&](int row, int col, double v) {
        if (col >= 0 && col < n_values) trips.emplace_back(row, col, v);
    };
    // Row e is the derivative at the midpoint between values e-1 and e.
    for (int e = 0; e <= n_values; ++e) {
        if (order == DiffOrder::Second) {
            put(e, e, 1.0 / h);
            put(e, e - 1, -1.0 / h);
        } else {
            put(e, e - 2, 1.0 / (24.0 * h));
            put(e, e - 1, -27.0 / (24.0 * h));
            put(e, e, 27.0 / (24.0 * h));
            put(e, e + 1, -1.0 / (24.0 * h));
        }
    }
    SparseMatrix s(n_values + 1, n_values);
    s.setFromTriplets(trips.begin(), trips.end());
    return s;
}

SparseMatrix divergence_form(const Grid& grid, std::span<const double> w_mid, DiffOrder order) {
    if (w_mid.size() != static_cast<std::size_t>(grid.n) + 1) {
        throw Error(ErrorKind::InvalidArgument, "divergence_form weights must live on n+1 midpoints");
    }
    const SparseMatrix s = staggered_diff(grid.n, grid.spacing, order);
    Eigen::VectorXd w(grid.n + 1);
    for (int e = 0; e <= grid.n; ++e) w(e) = w_mid[static_cast<std::size_t>(e)];
    SparseMatrix ws = w.asDiagonal() * s;
    SparseMatrix out = SparseMatrix(s.transpose()) * ws;
    return out;
}

SymMatrix to_sym(const SparseMatrix& m) { return SymMatrix::symmetrized(Eigen::MatrixXd(m)); }

double bisect(const std::function<double(double)>& f, double lo, double hi, double tol) {
    if (!(tol > 0.0)) throw Error(ErrorKind::InvalidArgument, "bisect tolerance must be positive");
    if (!(lo < hi)) throw Error(ErrorKind::InvalidArgument, "bisect needs lo < hi");
    double flo = f(lo);
    const double fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if (!(flo * fhi < 0.0)) {
        throw Error(ErrorKind::NoBracket, "f(lo) and f(hi) have the same sign");
    }
    for (int it = 0; it < 400 && hi - lo > tol; ++it) {
        const double mid = lo + 0.5 * (hi - lo);
        if (mid <= lo || mid >= hi) break;
        const double fm = f(mid);
        if (fm == 0.0) return mid;
        if ((fm < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return lo + 0.5 * (hi - lo);
}

namespace {

SparseMatrix dense_to_sparse(const Eigen::MatrixXd& m) {
    std::vector<Eigen::Triplet<double>> trips;
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            if (m(i, j) != 0.0) trips.emplace_back(static_cast<int>(i), static_cast<int>(j), m(i, j));
        }
    }
    SparseMatrix s(m.rows(), m.cols());
    s.setFromTriplets(trips.begin(), trips.end());
    return s;
}

double one_norm(const SparseMatrix& k) {
    double best = 0.0;
    for (int j = 0; j < k.outerSize(); ++j) {
        double col = 0.0;
        for (SparseMatrix::InnerIterator it(k, j); it; ++it) col += std::abs(it.value());
        best = std::max(best, col);
    }
    return best;
}

// Hager/Higham estimate of ||K^{-1}||_1 from a handful of solves.
double inverse_one_norm(Eigen::SparseLU<SparseMatrix>& lu, Eigen::Index n) {
    Vector x = Vector::Constant(n, 1.0 / static_cast<double>(n));
    double est = 0.0;
    Eigen::Index last_j = -1;
    for (int it = 0; it < 5; ++it) {
        const Vector y = lu.solve(x);
        est = std::max(est, y.lpNorm<1>());
        Vector xi = y.unaryExpr([](double v) { return v >= 0.0 ? 1.0 : -1.0; });
        const Vector z = lu.transpose().solve(xi);
        Eigen::Index j = 0;
        const double zmax = z.cwiseAbs().maxCoeff(&j);
        if (zmax <= z.dot(x) || j == last_j) break;
        last_j = j;
        x.setZero();
        x(j) = 1.0;
    }
    // Alternating-sign probe catches cases the gradient walk misses.
    Vector alt(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double sign = (i % 2 == 0) ? 1.0 : -1.0;
        alt(i) = sign * (1.0 + static_cast<double>(i) / static_cast<double>(std::max<Eigen::Index>(n - 1, 1)));
    }
    const Vector ya = lu.solve(alt);
    est = std::max(est, 2.0 * ya.lpNorm<1>() / (3.0 * static_cast<double>(n)));
    return est;
}

}  // namespace

BorderedSolution bordered_solve(const GenMatrix& m, const Vector& b, const Vector& c,
                                const Vector& r, double s) {
    return bordered_solve(dense_to_sparse(m.mat()), b, c, r, s);
}

BorderedSolution bordered_solve(const SparseMatrix& m, const Vector& b, const Vector& c,
                                const Vector& r, double s) {
    const Eigen::Index n = m.rows();
    if (m.cols() != n || b.size() != n || c.size() != n || r.size() != n) {
        throw Error(ErrorKind::InvalidArgument, "bordered_solve dimension mismatch");
    }
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(m.nonZeros() + 2 * n));
    for (int j = 0; j < m.outerSize(); ++j) {
        for (SparseMatrix::InnerIterator it(m, j); it; ++it) {
            if (it.value() != 0.0) trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
        }
    }
    const int border = static_cast<int>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (b(i) != 0.0) trips.emplace_back(static_cast<int>(i), border, b(i));
        if (c(i) != 0.0) trips.emplace_back(border, static_cast<int>(i), c(i));
    }
    SparseMatrix k(n + 1, n + 1);
    k.setFromTriplets(trips.begin(), trips.end());
    k.makeCompressed();

    Eigen::SparseLU<SparseMatrix> lu;
    lu.analyzePattern(k);
    lu.factorize(k);
    if (lu.info() != Eigen::Success) {
        throw Error(ErrorKind::SingularBorder, "augmented matrix is singular: " + lu.lastErrorMessage());
    }

    Vector rhs(n + 1);
    rhs.head(n) = r;
    rhs(n) = s;
    Vector sol = lu.solve(rhs);
    // One step of iterative refinement.
    Vector defect = rhs - k * sol;
    sol += lu.solve(defect);

    BorderedSolution out;
    out.condition = one_norm(k) * inverse_one_norm(lu, n + 1);
    if (!std::isfinite(out.condition) || out.condition > kMaxBorderCondition) {
        throw Error(ErrorKind::SingularBorder,
                    "augmented matrix is numerically rank deficient (cond1 ~ " + std::to_string(out.condition) + ")");
    }
    out.residual = (k * sol - rhs).norm();
    const double scale = one_norm(k) * sol.norm() + rhs.norm();
    if (!(out.residual <= 1e-10 * scale)) {
        throw Error(ErrorKind::SingularBorder, "augmented solve residual " + std::to_string(out.residual) +
                                                   " exceeds 1e-10 of scale " + std::to_string(scale));
    }
    out.w = sol.head(n);
    out.mu = sol(n);
    return out;
}

}  // namespace tspec
