#include "tspec/bifurcation.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace tspec {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

struct Assembled {
    SymMatrix L;
    GenMatrix A;
};

Assembled assemble(const OperatorFamily& fam, double k) { return {fam.assemble_L(k), fam.assemble_A(k)}; }

Vector g_from(const Assembled& m, const Vector& u, double sigma) {
    return m.L.mat() * u - sigma * (m.A.mat() * u);
}

// One point solved by bordered Newton at fixed sigma, warm-started at (V, k).
BranchPoint newton_at(const OperatorFamily& fam, const Vector& phi, Vector V, double k, double sigma, double tol,
                      int max_newton) {
    const double floor_res = 1e3 * kEps * fam.scale * std::sqrt(static_cast<double>(fam.order()));
    double prev_res = std::numeric_limits<double>::infinity();
    double last_step = std::numeric_limits<double>::infinity();
    for (int it = 0; it <= max_newton; ++it) {
        const Assembled m = assemble(fam, k);
        const Vector u = phi + V;
        const Vector G = g_from(m, u, sigma);
        const double res = G.norm();
        if (!std::isfinite(res) || !std::isfinite(k)) break;
        const bool settled = last_step <= 1e-10 * (1.0 + u.norm() + std::abs(k)) || res <= floor_res ||
                             res >= 0.5 * prev_res;
        if (res <= tol && (it > 0 && settled)) {
            BranchPoint pt;
            pt.sigma = sigma;
            pt.k = k;
            pt.V = V;
            pt.U = u;
            pt.newton_iterations = it;
            pt.residual = g_from(assemble(fam, k), u, sigma).norm();
            return pt;
        }
        if (it == max_newton) break;
        prev_res = res;

        const Eigen::MatrixXd M = m.L.mat() - sigma * m.A.mat();
        const Vector b = fam.assemble_Lprime(k).mat() * u;
        BorderedSolution sol;
        try {
            sol = bordered_solve(SparseMatrix(M.sparseView()), b, phi, -G, -phi.dot(V));
        } catch (const Error& e) {
            throw NewtonDivergedError(sigma, std::string("bordered system failed: ") + e.what());
        }
        V += sol.w;
        k += sol.mu;
        V -= phi.dot(V) * phi;
        last_step = std::hypot(sol.w.norm(), sol.mu);
    }
    throw NewtonDivergedError(sigma, "Newton did not reach the branch tolerance at sigma = " + std::to_string(sigma));
}

struct PencilState {
    Vector x;
    double sigma = 0.0;
    double res = std::numeric_limits<double>::infinity();
};

PencilState rayleigh_ls(const SparseMatrix& L, const SparseMatrix& A, Vector x) {
    PencilState st;
    x.normalize();
    const Vector lx = L * x;
    const Vector ax = A * x;
    const double aa = ax.squaredNorm();
    st.sigma = aa > 0.0 ? ax.dot(lx) / aa : 0.0;
    st.res = (lx - st.sigma * ax).norm();
    st.x = std::move(x);
    return st;
}

}  // namespace

double default_tol_branch(const OperatorFamily& fam) { return 1e-8 * fam.scale; }

Vector residual_G(const OperatorFamily& fam, const Vector& phi, const Vector& V, double k, double sigma) {
    const Assembled m = assemble(fam, k);
    return m.L.mat() * phi + m.L.mat() * V - sigma * (m.A.mat() * phi) - sigma * (m.A.mat() * V);
}

BranchJacobian branch_jacobian(const OperatorFamily& fam, const Vector& phi, const Vector& V, double k,
                               double sigma) {
    const Assembled m = assemble(fam, k);
    return {GenMatrix(m.L.mat() - sigma * m.A.mat()), fam.assemble_Lprime(k).mat() * (phi + V)};
}

std::vector<double> uniform_schedule(double sigma_max, int steps) {
    if (steps < 1) throw Error(ErrorKind::InvalidArgument, "schedule needs at least one step");
    if (sigma_max == 0.0) return {0.0};
    std::vector<double> s(static_cast<std::size_t>(steps) + 1);
    for (int i = 0; i <= steps; ++i) s[i] = sigma_max * i / steps;
    return s;
}

std::vector<BranchPoint> continue_branch(const OperatorFamily& fam, const Vector& phi, const BranchPoint& start,
                                         const std::vector<double>& sigma_schedule, const BranchOptions& opts) {
    const double tol = opts.tol_branch.value_or(default_tol_branch(fam));
    std::vector<BranchPoint> pts;
    pts.reserve(sigma_schedule.size());
    const BranchPoint* prev = &start;
    const BranchPoint* prev2 = nullptr;
    for (double sigma : sigma_schedule) {
        Vector V = prev->V;
        double k = prev->k;
        if (prev2 && prev->sigma != prev2->sigma) {
            // secant predictor
            const double t = (sigma - prev->sigma) / (prev->sigma - prev2->sigma);
            V += t * (prev->V - prev2->V);
            k += t * (prev->k - prev2->k);
            V -= phi.dot(V) * phi;
        }
        pts.push_back(newton_at(fam, phi, std::move(V), k, sigma, tol, opts.max_newton));
        if (opts.on_point) opts.on_point(pts.back());
        prev2 = pts.size() >= 2 ? &pts[pts.size() - 2] : (sigma == start.sigma ? nullptr : &start);
        prev = &pts.back();
    }
    return pts;
}

Branch trace_branch(const OperatorFamily& fam, double k0, const Vector& phi, const std::vector<double>& sigma_schedule,
                    const BranchOptions& opts) {
    if (sigma_schedule.empty() || sigma_schedule.front() != 0.0) {
        throw Error(ErrorKind::InvalidArgument, "sigma schedule must start at 0");
    }
    if (!std::is_sorted(sigma_schedule.begin(), sigma_schedule.end())) {
        throw Error(ErrorKind::InvalidArgument, "sigma schedule must be ascending");
    }
    if (std::abs(phi.norm() - 1.0) > 1e-10) throw Error(ErrorKind::InvalidArgument, "phi must have unit norm");
    Branch br;
    br.k0 = k0;
    br.phi = phi;
    BranchPoint base;
    base.k = k0;
    base.V = Vector::Zero(phi.size());
    base.U = phi;
    br.points = continue_branch(fam, phi, base, sigma_schedule, opts);
    return br;
}

PencilResult pencil_eigen_near(const OperatorFamily& fam, double k, double sigma_guess, const Vector& x0,
                               const PencilOptions& opts) {
    const double tol = opts.tol.value_or(1e-7 * fam.scale);
    const Assembled m = assemble(fam, k);
    const SparseMatrix L = m.L.mat().sparseView();
    const SparseMatrix A = m.A.mat().sparseView();
    if (x0.size() != L.rows() || !(x0.norm() > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "start vector has the wrong size or is zero");
    }

    PencilState best = rayleigh_ls(L, A, x0);
    PencilState cur = best;
    double shift = sigma_guess;
    int stalls = 0;
    double last_dsigma = std::numeric_limits<double>::infinity();
    Eigen::SparseLU<SparseMatrix> lu;
    for (int it = 1; it <= opts.max_iterations; ++it) {
        if (best.res <= tol && (stalls >= 2 || last_dsigma <= 1e-13 * (1.0 + std::abs(best.sigma)))) {
            return {best.sigma, best.x, best.res, it - 1};
        }
        // Hold the guess for two steps so the iteration locks onto the nearest eigenvalue first.
        if (it > 2) shift = cur.sigma;
        bool factored = false;
        for (int attempt = 0; attempt < 6 && !factored; ++attempt) {
            lu.compute(SparseMatrix(L - shift * A));
            factored = lu.info() == Eigen::Success;
            if (!factored) shift = shift * (1.0 + 1e-3) + 1e-8 * fam.spectral_unit;
        }
        if (!factored) throw Error(ErrorKind::ShiftSingular, "L - sigma A stays singular near " + std::to_string(shift));

        Vector rhs = A * cur.x;
        if (!(rhs.norm() > 0.0)) rhs = cur.x;
        Vector y = lu.solve(rhs);
        if (!(y.norm() > 0.0) || !y.allFinite()) throw Error(ErrorKind::NoConvergence, "pencil iteration broke down");
        const PencilState next = rayleigh_ls(L, A, std::move(y));
        if (next.res < best.res) {
            last_dsigma = std::abs(next.sigma - best.sigma);
            best = next;
            stalls = 0;
        } else {
            ++stalls;
        }
        cur = next;
    }
    if (best.res <= tol) return {best.sigma, best.x, best.res, opts.max_iterations};
    throw Error(ErrorKind::NoConvergence, "pencil iteration did not converge at k = " + std::to_string(k));
}

std::vector<GrowthEntry> growth_curve(const OperatorFamily& fam, double k0, const Vector& phi,
                                      const std::vector<double>& k_samples, const GrowthOptions& opts) {
    std::vector<GrowthEntry> out(k_samples.size());
    for (std::size_t i = 0; i < k_samples.size(); ++i) out[i].k = k_samples[i];
    if (k_samples.empty()) return out;

    struct State {
        double k, sigma;
        Vector U;
    };
    std::optional<State> seed;
    try {
        const Branch br = trace_branch(fam, k0, phi, uniform_schedule(opts.seed_sigma * fam.spectral_unit,
                                                                      std::max(opts.seed_steps, 1)));
        const BranchPoint& last = br.points.back();
        seed = State{last.k, last.sigma, last.U};
    } catch (const Error&) {
        return out;
    }

    std::vector<std::size_t> order(k_samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return k_samples[a] > k_samples[b]; });

    auto solve = [&](double k, const State& from) -> std::optional<std::pair<State, double>> {
        try {
            const PencilResult r = pencil_eigen_near(fam, k, from.sigma, from.U, opts.pencil);
            return std::make_pair(State{k, r.sigma, r.U}, r.residual);
        } catch (const Error&) {
            return std::nullopt;
        }
    };

    State cur = *seed;
    for (std::size_t idx : order) {
        const double target = k_samples[idx];
        std::optional<std::pair<State, double>> got;
        if (target >= cur.k) {
            got = solve(target, *seed);
        } else {
            const int sub = std::max(1, static_cast<int>(std::ceil((cur.k - target) / opts.max_dk - 1e-12)));
            State walk = cur;
            for (int j = 1; j <= sub; ++j) {
                const double kj = j == sub ? target : cur.k + (target - cur.k) * j / sub;
                got = solve(kj, walk);
                if (!got) break;
                walk = got->first;
            }
        }
        if (!got) continue;
        // Residual recomputed from a fresh assembly.
        const Assembled m = assemble(fam, target);
        const Vector& U = got->first.U;
        const double res = (m.L.mat() * U - got->first.sigma * (m.A.mat() * U)).norm() / U.norm();
        out[idx].sigma = got->first.sigma;
        out[idx].residual = res;
        if (target < cur.k) cur = got->first;
    }
    return out;
}

std::vector<std::complex<double>> pencil_spectrum(const OperatorFamily& fam, double k) {
    if (fam.order() > 400) throw Error(ErrorKind::InvalidArgument, "full pencil spectra are for orders <= 400");
    const Assembled m = assemble(fam, k);
    Eigen::GeneralizedEigenSolver<Eigen::MatrixXd> ges(m.L.mat(), m.A.mat(), false);
    if (ges.info() != Eigen::Success) throw Error(ErrorKind::EigFailure, "QZ iteration failed");
    std::vector<std::complex<double>> out;
    const auto alphas = ges.alphas();
    const auto betas = ges.betas();
    for (Eigen::Index i = 0; i < alphas.size(); ++i) {
        if (std::abs(betas(i)) > 1e-10 * std::abs(alphas(i))) out.push_back(alphas(i) / betas(i));
    }
    return out;
}

}  // namespace tspec
