#pragma once

#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <utility>

#include "tspec/opcore.hpp"

namespace tspec {

using ScalarFn = std::function<double(double)>;

/// Travelling-wave profile (rho, u) with analytic density derivatives.
struct Profile {
    ScalarFn rho;
    ScalarFn drho;
    ScalarFn d2rho;
    ScalarFn u;
    double rho_inf = 1.0;
    double u_inf = 0.0;
    std::string source;  // "closed-form", "tabulated" or "constant"
    double x_min = -std::numeric_limits<double>::infinity();
    double x_max = std::numeric_limits<double>::infinity();
};

struct KPIParams {
    int p = 2;
    double k_scan_max = 4.0;
};

/// Capillarity K, pressure law derivative g0' and a profile travelling at speed c.
struct EKParams {
    ScalarFn K;
    ScalarFn dK;
    ScalarFn d2K;
    ScalarFn dg0;
    double c = 0.5;
    Profile profile;
    double rho_inf = 1.0;
    double u_inf = 0.0;
    double k_scan_max = 4.0;
};

struct GPBlackParams {
    double k_scan_max = 3.0;
    double shift = 0.0;  // adds shift * I to every L(k); 0 is the physical model
};

inline constexpr double kKpiDefaultL = 40.0;
inline constexpr double kGpDefaultL = 30.0;
inline constexpr int kDefaultN = 1024;

/// Speed-one solitary wave of the generalized KP-I equation.
double kpi_profile(int p, double x);

OperatorFamily kpi_family(const KPIParams& params, const Grid& grid);

/// Dark soliton of Gross-Pitaevskii in Madelung variables, 0 < |c| < 1.
std::pair<double, double> gp_dark_profile(double c, double z);

/// Closed-form dark soliton as a Profile (derivatives included).
Profile gp_dark_profile(double c);

/// Uniform state (rho, u); the background when no soliton exists.
Profile constant_profile(double rho, double u);

/// Madelung parameters: K = 1/(4 rho), g0' = 1. For |c| >= 1 there is no
/// soliton and the uniform background (1, 0) is used instead.
EKParams gp_madelung_params(double c);

/// Power-law capillarity K0 rho^beta and pressure derivative a rho^gamma.
EKParams power_law_params(double K0, double beta, double a, double gamma, double c, Profile profile);

bool hypeuler_check(const EKParams& params);

/// min over xi of the smaller root of mu^2 - s(xi,k) mu + p(xi,k) = 0.
double ek_essential_floor(const EKParams& params, double k);

OperatorFamily ek_family(const EKParams& params, const Grid& grid);

/// Reduced operator M = -(K(rho) U')' - m U - (u - c)^2 / rho U from the
/// closed-form factorization of (L(0)U, U).
SymMatrix ek_schur_M(const EKParams& params, const Grid& grid);

/// The coefficient m = K'(rho) rho'' + K''(rho) rho'^2 / 2 - g0'(rho) at x.
double ek_m(const EKParams& params, double x);

OperatorFamily gp_black_family(const GPBlackParams& params, const Grid& grid);

/// Reads a `x,rho,u` table and interpolates it with natural cubic splines.
Profile load_profile_csv(const std::filesystem::path& path);

}  // namespace tspec
