#include "tspec/models.hpp"

#include <cmath>
#include <memory>
#include <string>

namespace tspec {

namespace {

constexpr DiffOrder kOrder = DiffOrder::Fourth;
constexpr double kTruncationTol = 1e-8;

double sech2(double x) {
    const double s = 1.0 / std::cosh(x);
    return s * s;
}

// L(k) = L0 + k^2 diag(w), L'(k) = 2k diag(w), A constant.
OperatorFamily quadratic_family(std::string name, int dim_factor, const Grid& grid, SymMatrix L0, Vector w,
                                GenMatrix A) {
    auto l0 = std::make_shared<const SymMatrix>(std::move(L0));
    auto weight = std::make_shared<const Vector>(std::move(w));
    auto a = std::make_shared<const GenMatrix>(std::move(A));

    OperatorFamily fam;
    fam.name = std::move(name);
    fam.dim_factor = dim_factor;
    fam.grid = grid;
    fam.assemble_L = [l0, weight](double k) { return l0->plus_diagonal(k * k * *weight); };
    fam.assemble_Lprime = [weight](double k) { return SymMatrix::diagonal(2.0 * k * *weight); };
    fam.assemble_A = [a](double) { return *a; };
    return fam;
}

SparseMatrix block2(const SparseMatrix& a11, const SparseMatrix& a12, const SparseMatrix& a21,
                    const SparseMatrix& a22) {
    const Eigen::Index n = a11.rows();
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(a11.nonZeros() + a12.nonZeros() + a21.nonZeros() + a22.nonZeros()));
    auto add = [&](const SparseMatrix& m, Eigen::Index r0, Eigen::Index c0) {
        for (int col = 0; col < m.outerSize(); ++col) {
            for (SparseMatrix::InnerIterator it(m, col); it; ++it) trips.emplace_back(r0 + it.row(), c0 + it.col(), it.value());
        }
    };
    add(a11, 0, 0);
    add(a12, 0, n);
    add(a21, n, 0);
    add(a22, n, n);
    SparseMatrix out(2 * n, 2 * n);
    out.setFromTriplets(trips.begin(), trips.end());
    return out;
}

SparseMatrix sparse_diag(const Vector& d) {
    SparseMatrix m(d.size(), d.size());
    m.reserve(Eigen::VectorXi::Constant(d.size(), 1));
    for (Eigen::Index i = 0; i < d.size(); ++i) m.insert(i, i) = d(i);
    m.makeCompressed();
    return m;
}

SparseMatrix dense_to_sparse(const Eigen::MatrixXd& m) { return m.sparseView(); }

// J^{-1} = -J = [[0, -I], [I, 0]] for J = [[0, 1], [-1, 0]].
GenMatrix inverse_symplectic(int n) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    a.topRightCorner(n, n) = -Eigen::MatrixXd::Identity(n, n);
    a.bottomLeftCorner(n, n) = Eigen::MatrixXd::Identity(n, n);
    return GenMatrix(std::move(a));
}

void check_ek_profile(const EKParams& params, const Grid& grid) {
    const Profile& pr = params.profile;
    if (!pr.rho || !pr.drho || !pr.d2rho || !pr.u || !params.K || !params.dK || !params.d2K || !params.dg0) {
        throw Error(ErrorKind::InvalidArgument, "EK parameters are incomplete");
    }
    const double L = grid.half_width;
    const double slack = 1e-9 * L;
    if (pr.x_min > -L + slack || pr.x_max < L - slack) {
        throw Error(ErrorKind::BadProfileFile, "profile covers [" + std::to_string(pr.x_min) + ", " +
                                                   std::to_string(pr.x_max) + "] but the grid needs [" +
                                                   std::to_string(-L) + ", " + std::to_string(L) + "]");
    }
    if (!(params.rho_inf > 0.0)) throw Error(ErrorKind::ProfileNotPositive, "rho_inf must be positive");
    auto check_at = [&](double x) {
        const double r = pr.rho(x);
        if (!(r > 0.0)) throw Error(ErrorKind::ProfileNotPositive, "rho <= 0 at x = " + std::to_string(x));
        if (!(params.K(r) > 0.0)) throw Error(ErrorKind::ProfileNotPositive, "K(rho) <= 0 at x = " + std::to_string(x));
    };
    for (double x : grid.nodes) check_at(x);
    for (double x : grid.midpoints()) check_at(x);
    for (double x : {-L, L}) {
        if (std::abs(pr.rho(x) - params.rho_inf) > kTruncationTol || std::abs(pr.u(x) - params.u_inf) > kTruncationTol) {
            throw Error(ErrorKind::ProfileTruncation,
                        "profile has not reached its limit state at x = " + std::to_string(x) + "; enlarge L");
        }
    }
}

// Reads the scalar coefficient fields once per grid node / midpoint.
struct EKCoefficients {
    Vector rho, u, m, K;
    std::vector<double> rho_mid, K_mid;
};

EKCoefficients ek_coefficients(const EKParams& params, const Grid& grid) {
    check_ek_profile(params, grid);
    EKCoefficients co;
    const int n = grid.n;
    co.rho.resize(n);
    co.u.resize(n);
    co.m.resize(n);
    co.K.resize(n);
    for (int i = 0; i < n; ++i) {
        const double x = grid.nodes[i];
        co.rho(i) = params.profile.rho(x);
        co.u(i) = params.profile.u(x);
        co.m(i) = ek_m(params, x);
        co.K(i) = params.K(co.rho(i));
    }
    for (double x : grid.midpoints()) {
        const double r = params.profile.rho(x);
        co.rho_mid.push_back(r);
        co.K_mid.push_back(params.K(r));
    }
    return co;
}

}  // namespace

double kpi_profile(int p, double x) {
    if (p < 2 || p > 4) throw Error(ErrorKind::InvalidArgument, "KP-I exponent must be 2, 3 or 4");
    return std::pow((p + 1) / 2.0 * sech2((p - 1) * x / 2.0), 1.0 / (p - 1));
}

OperatorFamily kpi_family(const KPIParams& params, const Grid& grid) {
    const int p = params.p;
    if (p < 2 || p > 4) throw Error(ErrorKind::InvalidArgument, "KP-I exponent must be 2, 3 or 4");
    const int n = grid.n;
    const double h = grid.spacing;
    if (std::abs(kpi_profile(p, grid.half_width)) > kTruncationTol) {
        throw Error(ErrorKind::ProfileTruncation, "KP-I profile not decayed at the boundary; enlarge L");
    }

    // -d/dx (-d2/dx2 + 1 - p Q^{p-1}) d/dx as G^T C G, C living on midpoints.
    const SparseMatrix G = staggered_diff(n, h, kOrder);
    const SparseMatrix Gs = staggered_diff(n + 1, h, kOrder);
    const auto mid = grid.midpoints();
    Vector pot(n + 1);
    for (int e = 0; e <= n; ++e) pot(e) = 1.0 - p * std::pow(kpi_profile(p, mid[e]), p - 1);
    const SparseMatrix C = SparseMatrix(Gs.transpose()) * Gs + sparse_diag(pot);
    const SparseMatrix L0 = SparseMatrix(G.transpose()) * (C * G);

    Eigen::MatrixXd A = -diff1(grid, kOrder).mat();
    OperatorFamily fam = quadratic_family("kpi-p" + std::to_string(p), 1, grid, to_sym(L0), Vector::Ones(n),
                                          GenMatrix(std::move(A)));
    fam.essential_floor = [](double k) -> std::optional<double> { return k * k; };
    fam.k_scan_max = params.k_scan_max;
    calibrate_scale(fam);
    return fam;
}

std::pair<double, double> gp_dark_profile(double c, double z) {
    const Profile pr = gp_dark_profile(c);
    return {pr.rho(z), pr.u(z)};
}

Profile gp_dark_profile(double c) {
    if (!(std::abs(c) < 1.0) || c == 0.0) {
        throw Error(ErrorKind::InvalidSpeed, "dark soliton needs 0 < |c| < 1, got c = " + std::to_string(c));
    }
    const double a = 1.0 - c * c;
    const double s = std::sqrt(a);
    Profile pr;
    pr.rho = [=](double z) {
        const double t = std::tanh(s * z);
        return c * c + a * t * t;
    };
    pr.drho = [=](double z) { return 2.0 * a * s * std::tanh(s * z) * sech2(s * z); };
    pr.d2rho = [=](double z) {
        const double t = std::tanh(s * z);
        const double q = sech2(s * z);
        return 2.0 * a * s * s * (q * q - 2.0 * t * t * q);
    };
    pr.u = [=](double z) {
        const double t = std::tanh(s * z);
        return -c * a / (c * c + a * t * t) * sech2(s * z);
    };
    pr.rho_inf = 1.0;
    pr.u_inf = 0.0;
    pr.source = "closed-form";
    return pr;
}

Profile constant_profile(double rho, double u) {
    Profile pr;
    pr.rho = [rho](double) { return rho; };
    pr.drho = [](double) { return 0.0; };
    pr.d2rho = [](double) { return 0.0; };
    pr.u = [u](double) { return u; };
    pr.rho_inf = rho;
    pr.u_inf = u;
    pr.source = "constant";
    return pr;
}

EKParams power_law_params(double K0, double beta, double a, double gamma, double c, Profile profile) {
    EKParams ek;
    ek.K = [=](double r) { return K0 * std::pow(r, beta); };
    ek.dK = [=](double r) { return K0 * beta * std::pow(r, beta - 1.0); };
    ek.d2K = [=](double r) { return K0 * beta * (beta - 1.0) * std::pow(r, beta - 2.0); };
    ek.dg0 = [=](double r) { return a * std::pow(r, gamma); };
    ek.c = c;
    ek.rho_inf = profile.rho_inf;
    ek.u_inf = profile.u_inf;
    ek.profile = std::move(profile);
    return ek;
}

EKParams gp_madelung_params(double c) {
    if (!std::isfinite(c) || c == 0.0) {
        throw Error(ErrorKind::InvalidSpeed, "Madelung route needs c != 0 (c = 0 is the black soliton)");
    }
    Profile pr = std::abs(c) < 1.0 ? gp_dark_profile(c) : constant_profile(1.0, 0.0);
    return power_law_params(0.25, -1.0, 1.0, 0.0, c, std::move(pr));
}

bool hypeuler_check(const EKParams& params) {
    const double v = params.u_inf - params.c;
    return params.rho_inf * params.dg0(params.rho_inf) > v * v;
}

double ek_essential_floor(const EKParams& params, double k) {
    if (!hypeuler_check(params)) {
        throw Error(ErrorKind::HypEulerViolated, "rho_inf g0'(rho_inf) <= (u_inf - c)^2");
    }
    const double rho = params.rho_inf;
    const double K = params.K(rho);
    const double g = params.dg0(rho);
    const double v = (params.u_inf - params.c) * (params.u_inf - params.c);
    auto smaller_root = [&](double xi) {
        const double q = k * k + xi * xi;
        const double s = (K + rho) * q + g;
        const double p = rho * K * q * q + rho * g * k * k + (rho * g - v) * xi * xi;
        const double disc = std::sqrt(std::max(s * s - 4.0 * p, 0.0));
        return s > 0.0 ? 2.0 * p / (s + disc) : 0.5 * (s - disc);
    };
    // mu_- >= p/s >= rho K q^2 / ((K + rho) q + g): past xi_max nothing beats mu_-(0).
    const double at0 = smaller_root(0.0);
    double xi_max = 1.0;
    for (int it = 0; it < 60; ++it) {
        const double q = k * k + xi_max * xi_max;
        if (rho * K * q * q / ((K + rho) * q + g) > at0) break;
        xi_max *= 2.0;
    }
    constexpr int kScan = 2000;
    int best = 0;
    double best_val = at0;
    for (int i = 1; i <= kScan; ++i) {
        const double val = smaller_root(xi_max * i / kScan);
        if (val < best_val) {
            best_val = val;
            best = i;
        }
    }
    double a = xi_max * std::max(best - 1, 0) / kScan;
    double b = xi_max * std::min(best + 1, kScan) / kScan;
    const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = b - ratio * (b - a);
    double x2 = a + ratio * (b - a);
    double f1 = smaller_root(x1);
    double f2 = smaller_root(x2);
    for (int it = 0; it < 100 && b - a > 1e-12 * (1.0 + b); ++it) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = smaller_root(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = smaller_root(x2);
        }
    }
    return std::min({best_val, f1, f2});
}

double ek_m(const EKParams& params, double x) {
    const double r = params.profile.rho(x);
    const double dr = params.profile.drho(x);
    return params.dK(r) * params.profile.d2rho(x) + 0.5 * params.d2K(r) * dr * dr - params.dg0(r);
}

OperatorFamily ek_family(const EKParams& params, const Grid& grid) {
    const EKCoefficients co = ek_coefficients(params, grid);
    const int n = grid.n;

    const SparseMatrix L11 = divergence_form(grid, co.K_mid, kOrder) - sparse_diag(co.m);
    const SparseMatrix L22 = divergence_form(grid, co.rho_mid, kOrder);
    const SparseMatrix B = sparse_diag(co.u.array() - params.c) * dense_to_sparse(diff1(grid, kOrder).mat());
    const SparseMatrix full = block2(L11, B, SparseMatrix(B.transpose()), L22);

    Vector w(2 * n);
    w << co.K, co.rho;
    OperatorFamily fam = quadratic_family("ek", 2, grid, to_sym(full), std::move(w), inverse_symplectic(n));
    const bool ok = hypeuler_check(params);
    fam.essential_floor = [params, ok](double k) -> std::optional<double> {
        if (!ok) return std::nullopt;
        return ek_essential_floor(params, k);
    };
    fam.k_scan_max = params.k_scan_max;
    calibrate_scale(fam);
    return fam;
}

SymMatrix ek_schur_M(const EKParams& params, const Grid& grid) {
    const EKCoefficients co = ek_coefficients(params, grid);
    const Vector v = co.u.array() - params.c;
    const Vector pot = co.m.array() + v.array().square() / co.rho.array();
    return to_sym(divergence_form(grid, co.K_mid, kOrder) - sparse_diag(pot));
}

OperatorFamily gp_black_family(const GPBlackParams& params, const Grid& grid) {
    const int n = grid.n;
    const std::vector<double> ones(static_cast<std::size_t>(n) + 1, 0.5);
    const SparseMatrix half_lap = divergence_form(grid, ones, kOrder);
    Vector v1(n), v2(n);
    for (int i = 0; i < n; ++i) {
        const double t = std::tanh(grid.nodes[i]);
        v1(i) = 3.0 * t * t - 1.0 + params.shift;
        v2(i) = t * t - 1.0 + params.shift;
    }
    const SparseMatrix zero(n, n);
    const SparseMatrix full = block2(half_lap + sparse_diag(v1), zero, zero, half_lap + sparse_diag(v2));

    OperatorFamily fam =
        quadratic_family("gp-black", 2, grid, to_sym(full), Vector::Constant(2 * n, 0.5), inverse_symplectic(n));
    const double shift = params.shift;
    fam.essential_floor = [shift](double k) -> std::optional<double> { return 0.5 * k * k + shift; };
    fam.k_scan_max = params.k_scan_max;
    calibrate_scale(fam);
    return fam;
}

}  // namespace tspec
