#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <string>

#include "tspec/numgrid.hpp"

namespace tspec {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

// Lower band of a symmetric matrix, possibly after a symmetric permutation.
// perm[i] is the band index of original row i.
struct SymBand {
    int n = 0;
    int kd = 0;
    std::vector<int> perm;
    std::vector<double> lower;  // (kd+1) x n, LAPACK 'L' layout

    double at(int i, int j) const {  // band indices, i >= j
        return lower[static_cast<std::size_t>(i - j) + static_cast<std::size_t>(j) * (kd + 1)];
    }
};

struct Entry {
    int i, j;
    double v;
};

int bandwidth_under(const std::vector<Entry>& lower, const std::vector<int>& perm) {
    int kd = 0;
    for (const Entry& e : lower) kd = std::max(kd, std::abs(perm[e.i] - perm[e.j]));
    return kd;
}

// Picks identity or the [a; b] -> [a0 b0 a1 b1 ...] interleave, whichever is
// narrower. Returns nullopt when neither is worth the band path.
std::optional<SymBand> detect_band(const Eigen::MatrixXd& m) {
    const auto n = static_cast<int>(m.rows());
    if (n < 32) return std::nullopt;
    // one pass over the lower triangle; bail out once it is clearly dense
    std::vector<Entry> lower;
    const std::size_t budget = static_cast<std::size_t>(n) * (n / 8 + 1);
    for (int j = 0; j < n; ++j) {
        const double* col = m.col(j).data();
        for (int i = j; i < n; ++i) {
            if (col[i] != 0.0) lower.push_back({i, j, col[i]});
        }
        if (lower.size() > budget) return std::nullopt;
    }
    std::vector<int> ident(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) ident[i] = i;
    int best_kd = bandwidth_under(lower, ident);
    std::vector<int> best = ident;
    if (best_kd > n / 8 && n % 2 == 0) {
        std::vector<int> inter(static_cast<std::size_t>(n));
        const int half = n / 2;
        for (int i = 0; i < n; ++i) inter[i] = i < half ? 2 * i : 2 * (i - half) + 1;
        const int kd = bandwidth_under(lower, inter);
        if (kd < best_kd) {
            best_kd = kd;
            best = std::move(inter);
        }
    }
    if (best_kd > n / 8) return std::nullopt;

    SymBand band;
    band.n = n;
    band.kd = best_kd;
    band.perm = std::move(best);
    band.lower.assign(static_cast<std::size_t>(best_kd + 1) * n, 0.0);
    for (const Entry& e : lower) {
        int pi = band.perm[e.i];
        int pj = band.perm[e.j];
        if (pi < pj) std::swap(pi, pj);
        band.lower[static_cast<std::size_t>(pi - pj) + static_cast<std::size_t>(pj) * (best_kd + 1)] = e.v;
    }
    return band;
}

std::vector<double> band_values(SymBand band, int count) {
    std::vector<double> w(static_cast<std::size_t>(band.n));
    double q_dummy = 0.0;
    double z_dummy = 0.0;
    lapack_int ifail_dummy = 0;
    lapack_int found = 0;
    const lapack_int info = LAPACKE_dsbevx(LAPACK_COL_MAJOR, 'N', 'I', 'L', band.n, band.kd, band.lower.data(),
                                           band.kd + 1, &q_dummy, 1, 0.0, 0.0, 1, count,
                                           2.0 * LAPACKE_dlamch('S'), &found, w.data(), &z_dummy, 1, &ifail_dummy);
    if (info != 0 || found != count) {
        throw Error(ErrorKind::EigFailure, "dsbevx failed (info " + std::to_string(info) + ")");
    }
    w.resize(static_cast<std::size_t>(count));
    return w;
}

Vector band_matvec(const SymBand& band, const Vector& x) {
    Vector y = Vector::Zero(band.n);
    for (int j = 0; j < band.n; ++j) {
        y(j) += band.at(j, j) * x(j);
        const int last = std::min(band.n - 1, j + band.kd);
        for (int i = j + 1; i <= last; ++i) {
            const double v = band.at(i, j);
            y(i) += v * x(j);
            y(j) += v * x(i);
        }
    }
    return y;
}

// Inverse iteration on the band for each computed eigenvalue, with
// reorthogonalization against the vectors already accepted.
Eigen::MatrixXd band_vectors(const SymBand& band, const std::vector<double>& values, double max_abs, double tol) {
    const int n = band.n;
    const int kd = band.kd;
    const int ldab = 3 * kd + 1;
    const auto count = static_cast<int>(values.size());
    Eigen::MatrixXd vecs(n, count);
    std::vector<double> ab(static_cast<std::size_t>(ldab) * n);
    std::vector<lapack_int> ipiv(static_cast<std::size_t>(n));
    const double floor_res = 1e3 * kEps * std::max(max_abs, 1e-300) * std::sqrt(static_cast<double>(n));

    for (int col = 0; col < count; ++col) {
        const double lambda = values[static_cast<std::size_t>(col)];
        double shift = lambda;
        lapack_int info = 1;
        for (int attempt = 0; attempt < 6 && info != 0; ++attempt) {
            std::fill(ab.begin(), ab.end(), 0.0);
            for (int j = 0; j < n; ++j) {
                const int last = std::min(n - 1, j + kd);
                for (int i = j; i <= last; ++i) {
                    double v = band.at(i, j);
                    if (i == j) v -= shift;
                    ab[static_cast<std::size_t>(2 * kd + i - j) + static_cast<std::size_t>(j) * ldab] = v;
                    if (i != j) ab[static_cast<std::size_t>(2 * kd + j - i) + static_cast<std::size_t>(i) * ldab] = v;
                }
            }
            info = LAPACKE_dgbtrf(LAPACK_COL_MAJOR, n, n, kd, kd, ab.data(), ldab, ipiv.data());
            if (info > 0) shift += (attempt + 1) * 16.0 * kEps * std::max(max_abs, std::abs(lambda));
        }
        if (info != 0) throw Error(ErrorKind::EigFailure, "band inverse iteration could not factor shift");

        std::mt19937_64 rng(0x5eedULL + static_cast<std::uint64_t>(col));
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        Vector x(n);
        for (int i = 0; i < n; ++i) x(i) = dist(rng);
        x.normalize();

        double res = std::numeric_limits<double>::infinity();
        Vector best = x;
        for (int it = 0; it < 8; ++it) {
            Vector y = x;
            LAPACKE_dgbtrs(LAPACK_COL_MAJOR, 'N', n, kd, kd, 1, ab.data(), ldab, ipiv.data(), y.data(), n);
            for (int pass = 0; pass < 2; ++pass) {
                for (int prev = 0; prev < col; ++prev) y -= vecs.col(prev).dot(y) * vecs.col(prev);
            }
            const double nrm = y.norm();
            if (!(nrm > 0.0) || !std::isfinite(nrm)) {
                throw Error(ErrorKind::EigFailure, "inverse iteration breakdown");
            }
            x = y / nrm;
            const double new_res = (band_matvec(band, x) - lambda * x).norm();
            const bool stalled = it >= 1 && new_res > 0.5 * res;
            if (new_res < res) {
                res = new_res;
                best = x;
            }
            if (it >= 1 && (new_res <= floor_res || stalled)) break;
        }
        if (!(res <= tol)) {
            throw Error(ErrorKind::EigFailure, "eigenvector residual " + std::to_string(res) + " above tolerance");
        }
        vecs.col(col) = best;
    }
    return vecs;
}

void fix_signs(Eigen::MatrixXd& vecs) {
    for (Eigen::Index c = 0; c < vecs.cols(); ++c) {
        Eigen::Index idx = 0;
        vecs.col(c).cwiseAbs().maxCoeff(&idx);
        if (vecs(idx, c) < 0.0) vecs.col(c) *= -1.0;
    }
}

void check_count(const SymMatrix& m, int count) {
    if (count < 0 || count > m.order()) {
        throw Error(ErrorKind::InvalidArgument,
                    "requested " + std::to_string(count) + " eigenpairs of an order-" + std::to_string(m.order()) +
                        " matrix");
    }
}

}  // namespace

bool positive_definite(const SymMatrix& m) {
    if (m.order() == 0) return true;
    if (auto band = detect_band(m.mat())) {
        return LAPACKE_dpbtrf(LAPACK_COL_MAJOR, 'L', band->n, band->kd, band->lower.data(), band->kd + 1) == 0;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(m.mat());
    return llt.info() == Eigen::Success;
}

double eig_tolerance(const SymMatrix& m) {
    return 1e-9 * std::max(m.max_abs(), std::numeric_limits<double>::min()) * static_cast<double>(m.order());
}

std::vector<double> sym_eigvals(const SymMatrix& m, int count) {
    check_count(m, count);
    if (count == 0) return {};
    if (auto band = detect_band(m.mat())) return band_values(std::move(*band), count);

    const auto n = static_cast<lapack_int>(m.order());
    Eigen::MatrixXd a = m.mat();
    std::vector<double> w(static_cast<std::size_t>(n));
    std::vector<lapack_int> isuppz(2 * static_cast<std::size_t>(count));
    lapack_int found = 0;
    double z_dummy = 0.0;
    const lapack_int info = LAPACKE_dsyevr(LAPACK_COL_MAJOR, 'N', 'I', 'L', n, a.data(), n, 0.0, 0.0, 1, count,
                                           0.0, &found, w.data(), &z_dummy, 1, isuppz.data());
    if (info != 0 || found != count) throw Error(ErrorKind::EigFailure, "dsyevr failed (info " + std::to_string(info) + ")");
    w.resize(static_cast<std::size_t>(count));
    return w;
}

EigPairs sym_eigs(const SymMatrix& m, int count) {
    check_count(m, count);
    EigPairs out;
    if (count == 0) {
        out.vectors.resize(m.order(), 0);
        return out;
    }
    const double tol = eig_tolerance(m);

    if (auto band = detect_band(m.mat())) {
        out.values = band_values(*band, count);
        const Eigen::MatrixXd pv = band_vectors(*band, out.values, m.max_abs(), tol);
        out.vectors.resize(m.order(), count);
        for (Eigen::Index i = 0; i < m.order(); ++i) out.vectors.row(i) = pv.row(band->perm[i]);
    } else {
        const auto n = static_cast<lapack_int>(m.order());
        Eigen::MatrixXd a = m.mat();
        std::vector<double> w(static_cast<std::size_t>(n));
        Eigen::MatrixXd z(n, count);
        std::vector<lapack_int> isuppz(2 * static_cast<std::size_t>(count));
        lapack_int found = 0;
        const lapack_int info = LAPACKE_dsyevr(LAPACK_COL_MAJOR, 'V', 'I', 'L', n, a.data(), n, 0.0, 0.0, 1, count,
                                               0.0, &found, w.data(), z.data(), n, isuppz.data());
        if (info != 0 || found != count) {
            throw Error(ErrorKind::EigFailure, "dsyevr failed (info " + std::to_string(info) + ")");
        }
        out.values.assign(w.begin(), w.begin() + count);
        out.vectors = std::move(z);
    }
    fix_signs(out.vectors);
    return out;
}

}  // namespace tspec
