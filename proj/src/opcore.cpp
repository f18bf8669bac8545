#include "tspec/opcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tspec/parallel.hpp"

namespace tspec {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

std::vector<double> sample_points(double k_max, int count) {
    std::vector<double> ks(static_cast<std::size_t>(std::max(count, 0)));
    for (int j = 0; j < count; ++j) ks[j] = k_max * (j + 1) / count;
    return ks;
}

}  // namespace

void calibrate_scale(OperatorFamily& fam) {
    const double s = fam.assemble_L(0.0).max_abs();
    fam.scale = s > 0.0 ? s : 1.0;
}

double default_tau_neg(const OperatorFamily& fam) { return 1e-4 * fam.spectral_unit; }
double default_tau_ker(const OperatorFamily& fam) { return 1e-6 * fam.spectral_unit; }

double lambda_min(const OperatorFamily& fam, double k) { return sym_eigvals(fam.assemble_L(k), 1)[0]; }

SpectralReport spectral_report(const OperatorFamily& fam, double k, double tau, int count) {
    if (!(tau > 0.0)) throw Error(ErrorKind::InvalidArgument, "tau must be positive");
    const SymMatrix L = fam.assemble_L(k);
    count = std::clamp(count, 1, static_cast<int>(L.order()));
    SpectralReport rep;
    rep.k = k;
    rep.tau = tau;
    rep.low_eigs = sym_eigvals(L, count);
    rep.n_negative = static_cast<int>(std::count_if(rep.low_eigs.begin(), rep.low_eigs.end(),
                                                    [tau](double v) { return v < -tau; }));
    rep.saturated = rep.n_negative == count && count < L.order();

    std::size_t near = 0;
    for (std::size_t i = 1; i < rep.low_eigs.size(); ++i) {
        if (std::abs(rep.low_eigs[i]) < std::abs(rep.low_eigs[near])) near = i;
    }
    rep.gap = std::numeric_limits<double>::infinity();
    if (near > 0) rep.gap = std::min(rep.gap, rep.low_eigs[near] - rep.low_eigs[near - 1]);
    if (near + 1 < rep.low_eigs.size()) rep.gap = std::min(rep.gap, rep.low_eigs[near + 1] - rep.low_eigs[near]);
    return rep;
}

int count_negative(const OperatorFamily& fam, double k, double tau, int request) {
    const SpectralReport rep = spectral_report(fam, k, tau, request);
    if (rep.saturated) {
        throw Error(ErrorKind::SaturatedCount,
                    "all " + std::to_string(rep.low_eigs.size()) + " requested eigenvalues lie below -tau");
    }
    return rep.n_negative;
}

K0Result find_k0(const OperatorFamily& fam, const K0Options& opts) {
    const double tau_neg = opts.tau_neg.value_or(default_tau_neg(fam));
    const double tau_ker = opts.tau_ker.value_or(default_tau_ker(fam));
    auto f = [&fam](double k) { return lambda_min(fam, k); };

    const double f0 = f(0.0);
    if (!(f0 < -tau_neg)) {
        throw Error(ErrorKind::NoNegativeDirection,
                    fam.name + ": lambda_min(0) = " + std::to_string(f0) + " is not below -tau_neg");
    }

    // lambda_min(k) >= 0 exactly when L(k) admits a Cholesky factorization, so
    // the scan and the bisection only need that sign.
    auto sign = [&fam](double k) { return positive_definite(fam.assemble_L(k)) ? 1.0 : -1.0; };
    const std::vector<double> ks = sample_points(fam.k_scan_max, opts.scan_points);
    const auto batch = static_cast<std::size_t>(std::max(thread_count(), 1));
    double lo = 0.0;
    std::optional<double> hi;
    for (std::size_t start = 0; start < ks.size() && !hi; start += batch) {
        const std::size_t len = std::min(batch, ks.size() - start);
        std::vector<double> vals(len);
        parallel_for(len, [&](std::size_t i) { vals[i] = sign(ks[start + i]); });
        for (std::size_t i = 0; i < len; ++i) {
            if (vals[i] > 0.0) {
                hi = ks[start + i];
                break;
            }
            lo = ks[start + i];
        }
    }
    if (!hi) {
        throw Error(ErrorKind::NoSignChange, fam.name + ": lambda_min stays negative up to k_scan_max");
    }

    K0Result out;
    out.k0 = bisect(sign, lo, *hi, opts.tol);
    out.tau_ker = tau_ker;

    const SymMatrix L = fam.assemble_L(out.k0);
    const int count = std::clamp(opts.report_eigs, 1, static_cast<int>(L.order()));
    const EigPairs pairs = sym_eigs(L, count);

    int kernel_idx = -1;
    for (int i = 0; i < count; ++i) {
        if (std::abs(pairs.values[i]) <= tau_ker) {
            ++out.in_window;
            if (kernel_idx < 0) kernel_idx = i;
        }
    }
    out.report.k = out.k0;
    out.report.low_eigs = pairs.values;
    out.report.tau = tau_neg;
    out.report.n_negative = static_cast<int>(
        std::count_if(pairs.values.begin(), pairs.values.end(), [tau_neg](double v) { return v < -tau_neg; }));
    out.report.saturated = out.report.n_negative == count && count < L.order();
    if (out.in_window != 1) {
        throw Error(ErrorKind::KernelNotSimple, fam.name + ": " + std::to_string(out.in_window) +
                                                    " eigenvalues in the kernel window at k0 = " +
                                                    std::to_string(out.k0));
    }
    double gap = std::numeric_limits<double>::infinity();
    for (int i = 0; i < count; ++i) {
        if (i != kernel_idx) gap = std::min(gap, std::abs(pairs.values[i] - pairs.values[kernel_idx]));
    }
    out.report.gap = gap;
    if (!(gap >= opts.gap_factor * tau_ker)) {
        throw Error(ErrorKind::KernelNotSimple,
                    fam.name + ": kernel eigenvalue not separated (gap " + std::to_string(gap) + ")");
    }
    out.kernel = pairs.vectors.col(kernel_idx).normalized();
    out.kernel_eig = pairs.values[kernel_idx];
    return out;
}

HypothesisReport check_hypotheses(const OperatorFamily& fam, const HypothesisOptions& opts) {
    HypothesisReport rep;
    rep.family = fam.name;
    const double tau_neg = opts.tau_neg.value_or(default_tau_neg(fam));
    const double tau_gap = opts.tau_gap.value_or(10.0 * tau_neg);

    // h1 and h4 are the two expensive eigensolves; run them side by side.
    SpectralReport at0;
    parallel_for(2, [&](std::size_t task) {
        if (task == 0) {
            rep.h1.k_probe = fam.k_scan_max;
            rep.h1.alpha_required = opts.alpha_required.value_or(0.05 * fam.spectral_unit);
            rep.h1.lambda_min_at_probe = lambda_min(fam, fam.k_scan_max);
        } else {
            at0 = spectral_report(fam, 0.0, tau_neg, 8);
        }
    });
    rep.h1.pass = rep.h1.lambda_min_at_probe >= rep.h1.alpha_required;

    rep.h2.k_samples = sample_points(fam.k_scan_max, opts.floor_samples);
    rep.h2.floors.resize(rep.h2.k_samples.size());
    rep.h2.pass = static_cast<bool>(fam.essential_floor) && !rep.h2.k_samples.empty();
    for (std::size_t i = 0; i < rep.h2.k_samples.size(); ++i) {
        if (fam.essential_floor) rep.h2.floors[i] = fam.essential_floor(rep.h2.k_samples[i]);
        if (!rep.h2.floors[i] || !(*rep.h2.floors[i] > 0.0)) rep.h2.pass = false;
    }

    rep.h3.k_samples = sample_points(fam.k_scan_max, opts.lprime_samples);
    rep.h3.min_eig_Lprime.resize(rep.h3.k_samples.size());
    parallel_for(rep.h3.k_samples.size(), [&](std::size_t i) {
        rep.h3.min_eig_Lprime[i] = sym_eigvals(fam.assemble_Lprime(rep.h3.k_samples[i]), 1)[0];
    });
    rep.h3.pass = std::all_of(rep.h3.min_eig_Lprime.begin(), rep.h3.min_eig_Lprime.end(),
                              [](double v) { return v >= 0.0; });
    if (opts.kernel) {
        const auto& [k0, phi] = *opts.kernel;
        const double q = phi.dot(fam.assemble_Lprime(k0).mat() * phi);
        rep.h3.kernel_quadratic = q;
        rep.h3.pass = rep.h3.pass && q > 0.0;
    }

    rep.h4.tau_neg = tau_neg;
    rep.h4.tau_gap = tau_gap;
    rep.h4.n_negative_at_0 = at0.n_negative;
    rep.h4.saturated = at0.saturated;
    rep.h4.lambda_neg = at0.low_eigs.front();
    rep.h4.gap = at0.low_eigs.size() > 1 ? at0.low_eigs[1] - at0.low_eigs[0] : 0.0;
    rep.h4.pass = !at0.saturated && at0.n_negative == 1 && rep.h4.gap > tau_gap;

    rep.overall = rep.h1.pass && rep.h2.pass && rep.h3.pass && rep.h4.pass;
    return rep;
}

SymMatrix BlockOperator::assemble() const {
    const Eigen::Index n1 = L1.order();
    const Eigen::Index n2 = L2.order();
    if (A12.mat().rows() != n1 || A12.mat().cols() != n2) {
        throw Error(ErrorKind::InvalidArgument, "off-diagonal block shape does not match the diagonal blocks");
    }
    Eigen::MatrixXd full(n1 + n2, n1 + n2);
    full.topLeftCorner(n1, n1) = L1.mat();
    full.topRightCorner(n1, n2) = A12.mat();
    full.bottomLeftCorner(n2, n1) = A12.mat().transpose();
    full.bottomRightCorner(n2, n2) = L2.mat();
    return SymMatrix(std::move(full));
}

namespace {

Eigen::LDLT<Eigen::MatrixXd> factor_block(const SymMatrix& L2) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(L2.mat());
    if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 16.0 * kEps)) {
        throw Error(ErrorKind::SingularBlock, "L2 block is numerically singular");
    }
    return ldlt;
}

}  // namespace

SchurQuadratic schur_quadratic(const BlockOperator& blocks, const Vector& u) {
    const Eigen::Index n1 = blocks.L1.order();
    const Eigen::Index n2 = blocks.L2.order();
    if (u.size() != n1 + n2) throw Error(ErrorKind::InvalidArgument, "vector length does not match blocks");
    const auto& A = blocks.A12.mat();
    const Vector u1 = u.head(n1);
    const Vector u2 = u.tail(n2);

    SchurQuadratic out;
    out.direct = u1.dot(blocks.L1.mat() * u1) + 2.0 * u1.dot(A * u2) + u2.dot(blocks.L2.mat() * u2);

    const auto ldlt = factor_block(blocks.L2);
    const Vector at_u1 = A.transpose() * u1;
    const Vector y = ldlt.solve(at_u1);
    const Vector shifted = u2 + y;
    out.factored = u1.dot(blocks.L1.mat() * u1) - at_u1.dot(y) + shifted.dot(blocks.L2.mat() * shifted);
    return out;
}

SymMatrix schur_complement(const BlockOperator& blocks) {
    const auto ldlt = factor_block(blocks.L2);
    const Eigen::MatrixXd y = ldlt.solve(Eigen::MatrixXd(blocks.A12.mat().transpose()));
    return SymMatrix::symmetrized(blocks.L1.mat() - blocks.A12.mat() * y);
}

}  // namespace tspec
