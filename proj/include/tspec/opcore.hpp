#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tspec/numgrid.hpp"

namespace tspec {

/// A k-dependent pencil (L(k), A(k)) discretized on a fixed grid.
///
/// `scale` is the largest |entry| of L(0); it sizes residual and rounding
/// tolerances, which grow with the operator norm. `spectral_unit` is the
/// characteristic eigenvalue / growth-rate magnitude (1 for nondimensional
/// models) and sizes thresholds on eigenvalues and sigma, which must not
/// drift with grid refinement.
struct OperatorFamily {
    std::string name;
    int dim_factor = 1;
    Grid grid;
    std::function<SymMatrix(double)> assemble_L;
    std::function<SymMatrix(double)> assemble_Lprime;
    std::function<GenMatrix(double)> assemble_A;
    std::function<std::optional<double>(double)> essential_floor;
    double k_scan_max = 4.0;
    double scale = 1.0;
    double spectral_unit = 1.0;

    int order() const noexcept { return dim_factor * grid.n; }
};

/// Fills `scale` from L(0). Model constructors call this last.
void calibrate_scale(OperatorFamily& fam);

struct SpectralReport {
    double k = 0.0;
    std::vector<double> low_eigs;
    int n_negative = 0;
    double tau = 0.0;
    double gap = 0.0;        // distance from the eigenvalue nearest 0 to its closest neighbour
    bool saturated = false;  // every computed eigenvalue sat below -tau
};

struct H1Evidence {
    double k_probe = 0.0;
    double lambda_min_at_probe = 0.0;
    double alpha_required = 0.0;
    bool pass = false;
};

struct H2Evidence {
    std::vector<double> k_samples;
    std::vector<std::optional<double>> floors;
    bool pass = false;
};

struct H3Evidence {
    std::vector<double> k_samples;
    std::vector<double> min_eig_Lprime;
    std::optional<double> kernel_quadratic;  // (L'(k0) phi, phi) when a kernel was supplied
    bool pass = false;
};

struct H4Evidence {
    int n_negative_at_0 = 0;
    double lambda_neg = 0.0;
    double gap = 0.0;
    double tau_neg = 0.0;
    double tau_gap = 0.0;
    bool saturated = false;
    bool pass = false;
};

struct HypothesisReport {
    std::string family;
    H1Evidence h1;
    H2Evidence h2;
    H3Evidence h3;
    H4Evidence h4;
    bool overall = false;
};

struct HypothesisOptions {
    std::optional<double> alpha_required;  // default 0.05 * spectral_unit
    std::optional<double> tau_neg;         // default 1e-4 * spectral_unit
    std::optional<double> tau_gap;         // default 10 * tau_neg
    int floor_samples = 16;
    int lprime_samples = 16;
    /// Kernel vector and its wavenumber, if already computed.
    std::optional<std::pair<double, Vector>> kernel;
};

struct K0Options {
    double tol = 1e-8;
    int scan_points = 64;
    std::optional<double> tau_neg;  // default 1e-4 * spectral_unit
    std::optional<double> tau_ker;  // default 1e-6 * spectral_unit
    double gap_factor = 10.0;
    int report_eigs = 8;
};

struct K0Result {
    double k0 = 0.0;
    Vector kernel;           // unit Euclidean norm
    double kernel_eig = 0.0; // eigenvalue of L(k0) carried by `kernel`
    double tau_ker = 0.0;
    int in_window = 0;
    SpectralReport report;
};

/// The two-by-two block operator [[L1, A12], [A12^T, L2]].
struct BlockOperator {
    SymMatrix L1;
    SymMatrix L2;
    GenMatrix A12;

    SymMatrix assemble() const;
};

struct SchurQuadratic {
    double direct = 0.0;
    double factored = 0.0;
};

double default_tau_neg(const OperatorFamily& fam);
double default_tau_ker(const OperatorFamily& fam);

/// Smallest eigenvalue of L(k), i.e. inf over unit U of (L(k)U, U).
double lambda_min(const OperatorFamily& fam, double k);

/// Eigenvalues of L(k) strictly below -tau among the `request` smallest.
/// Throws SaturatedCount when all of them are below -tau.
int count_negative(const OperatorFamily& fam, double k, double tau, int request = 8);

SpectralReport spectral_report(const OperatorFamily& fam, double k, double tau, int count = 8);

/// Minimal k0 > 0 with lambda_min(k0) = 0, plus the (simple) kernel there.
K0Result find_k0(const OperatorFamily& fam, const K0Options& opts = {});

HypothesisReport check_hypotheses(const OperatorFamily& fam, const HypothesisOptions& opts = {});

/// (LU, U) evaluated directly and through the block factorization
/// ((L1 - A L2^{-1} A^T) U1, U1) + (L2 (U2 + L2^{-1} A^T U1), U2 + L2^{-1} A^T U1).
SchurQuadratic schur_quadratic(const BlockOperator& blocks, const Vector& u);

/// L1 - A12 L2^{-1} A12^T, symmetrized.
SymMatrix schur_complement(const BlockOperator& blocks);

}  // namespace tspec
