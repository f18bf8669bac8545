#pragma once

#include <complex>
#include <functional>
#include <optional>
#include <vector>

#include "tspec/opcore.hpp"

namespace tspec {

/// A solution of L(k)(phi + V) = sigma A(k)(phi + V) with V orthogonal to phi.
struct BranchPoint {
    double sigma = 0.0;
    double k = 0.0;
    Vector V;
    Vector U;
    double residual = 0.0;  // ||G||, recomputed from freshly assembled matrices
    int newton_iterations = 0;
};

struct Branch {
    double k0 = 0.0;
    Vector phi;
    std::vector<BranchPoint> points;
};

struct BranchOptions {
    std::optional<double> tol_branch;  // default 1e-8 * scale
    int max_newton = 25;
    std::function<void(const BranchPoint&)> on_point;  // called as each point converges
};

struct BranchJacobian {
    GenMatrix M;  // L(k) - sigma A(k)
    Vector b;     // L'(k)(phi + V); A does not depend on k for the shipped models
};

struct PencilOptions {
    std::optional<double> tol;  // default 1e-7 * scale
    int max_iterations = 200;
};

struct PencilResult {
    double sigma = 0.0;
    Vector U;  // unit norm
    double residual = 0.0;  // ||L U - sigma A U|| / ||U||
    int iterations = 0;
};

struct GrowthEntry {
    double k = 0.0;
    std::optional<double> sigma;  // absent when the pencil solve did not converge
    std::optional<double> residual;
};

struct GrowthOptions {
    double max_dk = 0.05;          // continuation sub-step in k between samples
    double seed_sigma = 0.01;      // branch point used to enter the unstable band, times spectral_unit
    int seed_steps = 4;
    PencilOptions pencil;
};

double default_tol_branch(const OperatorFamily& fam);

/// G(V, k, sigma) = L(k) phi + L(k) V - sigma A(k) phi - sigma A(k) V.
Vector residual_G(const OperatorFamily& fam, const Vector& phi, const Vector& V, double k, double sigma);

BranchJacobian branch_jacobian(const OperatorFamily& fam, const Vector& phi, const Vector& V, double k,
                               double sigma);

/// Newton continuation in sigma from the base solution (0, k0, 0).
/// `sigma_schedule` must start at 0 and be ascending.
Branch trace_branch(const OperatorFamily& fam, double k0, const Vector& phi,
                    const std::vector<double>& sigma_schedule, const BranchOptions& opts = {});

/// Newton continuation from an arbitrary converged point along any schedule.
std::vector<BranchPoint> continue_branch(const OperatorFamily& fam, const Vector& phi, const BranchPoint& start,
                                         const std::vector<double>& sigma_schedule, const BranchOptions& opts = {});

/// `steps`+1 uniform values from 0 to sigma_max.
std::vector<double> uniform_schedule(double sigma_max, int steps);

/// Shift-invert iteration on sigma A(k) U = L(k) U near `sigma_guess`.
PencilResult pencil_eigen_near(const OperatorFamily& fam, double k, double sigma_guess, const Vector& x0,
                               const PencilOptions& opts = {});

/// Real growth rates across k_samples, entering the band from the branch at k0.
std::vector<GrowthEntry> growth_curve(const OperatorFamily& fam, double k0, const Vector& phi,
                                      const std::vector<double>& k_samples, const GrowthOptions& opts = {});

/// Every finite eigenvalue of the pencil (dense QZ; small orders only).
std::vector<std::complex<double>> pencil_spectrum(const OperatorFamily& fam, double k);

}  // namespace tspec
