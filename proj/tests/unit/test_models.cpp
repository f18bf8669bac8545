#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "oracles.hpp"
#include "test_util.hpp"
#include "tspec/models.hpp"

using namespace tspec;
using testutil::kind_of;
using testutil::sample;

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

bool exactly_symmetric(const SymMatrix& m) { return m.mat() == m.mat().transpose(); }

// diff = L(k) - L(0) must be k^2 diag(w): off-diagonal exactly zero, diagonal
// off by at most the rounding of the L(0) diagonal entry.
void expect_quadratic_growth(const OperatorFamily& fam, double k, const Vector& w) {
    const Eigen::MatrixXd L0 = fam.assemble_L(0.0).mat();
    const Eigen::MatrixXd diff = fam.assemble_L(k).mat() - L0;
    Eigen::MatrixXd off = diff;
    off.diagonal().setZero();
    EXPECT_EQ(off.cwiseAbs().maxCoeff(), 0.0) << fam.name;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        const double tol = 2 * kEps * (std::abs(L0(i, i)) + k * k * w(i));
        ASSERT_NEAR(diff(i, i), k * k * w(i), tol) << fam.name << " i=" << i;
    }
}

std::filesystem::path write_file(const std::string& name, const std::string& text) {
    const auto path = std::filesystem::path(::testing::TempDir()) / name;
    std::ofstream(path) << text;
    return path;
}

std::filesystem::path dark_csv(const std::string& name, double c, double half_width, int points) {
    std::string text = "x,rho,u\n";
    char buf[128];
    for (int i = 0; i < points; ++i) {
        const double x = -half_width + 2 * half_width * i / (points - 1);
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", x, oracle::dark_rho(c, x), oracle::dark_u(c, x));
        text += buf;
    }
    return write_file(name, text);
}

Vector windowed(const Grid& g, Vector v, double width) {
    for (int i = 0; i < g.n; ++i) {
        if (std::abs(g.nodes[i]) > g.half_width - width) v(i) = 0.0;
    }
    return v;
}

}  // namespace

TEST(KpiProfile, PeakValues) {
    EXPECT_DOUBLE_EQ(kpi_profile(2, 0.0), 1.5);
    EXPECT_NEAR(kpi_profile(3, 0.0), std::sqrt(2.0), 1e-14);
}

TEST(KpiProfile, DecaysAtBoundary) {
    EXPECT_LE(kpi_profile(2, 40.0), 1e-8);
    EXPECT_LE(kpi_profile(2, -40.0), 1e-8);
}

TEST(KpiProfileProperty, SolvesProfileEquation) {
    for (int p : {2, 3, 4}) {
        for (int i = -200; i <= 200; ++i) {
            const double x = i * 0.05;
            const double q = kpi_profile(p, x);
            EXPECT_NEAR(q, oracle::kpi_profile(p, x), 1e-14);
            EXPECT_LE(std::abs(-oracle::kpi_profile_d2(p, x) + q - std::pow(q, p)), 1e-8) << "p=" << p << " x=" << x;
        }
    }
}

TEST(KpiFamily, ExactlySymmetric) {
    const OperatorFamily fam = kpi_family({2}, build_grid(40, 256));
    for (double k : {0.0, 0.3, 1.7}) EXPECT_TRUE(exactly_symmetric(fam.assemble_L(k)));
}

TEST(KpiFamily, UnitGrowthInK) {
    const OperatorFamily fam = kpi_family({2}, build_grid(40, 256));
    expect_quadratic_growth(fam, 1.0, Vector::Ones(256));
}

TEST(KpiFamily, OneNegativeDirectionForEachExponent) {
    for (int p : {3, 4}) {
        const OperatorFamily fam = kpi_family({p}, build_grid(40, 1024));
        EXPECT_EQ(count_negative(fam, 0.0, default_tau_neg(fam)), 1) << "p=" << p;
        ASSERT_TRUE(fam.essential_floor(0.5));
        EXPECT_DOUBLE_EQ(*fam.essential_floor(0.5), 0.25);
    }
}

TEST(KpiFamily, TruncatedProfileRejected) {
    EXPECT_EQ(kind_of([] { kpi_family({2}, build_grid(10, 128)); }), ErrorKind::ProfileTruncation);
}

TEST(KpiFamily, AntisymmetricA) {
    const OperatorFamily fam = kpi_family({2}, build_grid(40, 128));
    const Eigen::MatrixXd A = fam.assemble_A(0.4).mat();
    EXPECT_EQ(A, -A.transpose());
}

TEST(DarkProfile, FarField) {
    const auto [rho, u] = gp_dark_profile(0.5, 30.0);
    EXPECT_NEAR(rho, 1.0, 1e-12);
    EXPECT_NEAR(u, 0.0, 1e-12);
}

TEST(DarkProfile, Center) {
    const auto [rho, u] = gp_dark_profile(0.5, 0.0);
    EXPECT_NEAR(rho, oracle::dark_rho(0.5, 0.0), 1e-15);
    EXPECT_NEAR(rho, 0.25, 1e-15);
    EXPECT_NEAR(u, -1.5, 1e-14);
}

TEST(DarkProfile, InvalidSpeeds) {
    for (double c : {0.0, 1.0, -1.0, 1.2}) {
        EXPECT_EQ(kind_of([c] { gp_dark_profile(c, 0.3); }), ErrorKind::InvalidSpeed) << c;
    }
    EXPECT_EQ(kind_of([] { gp_madelung_params(0.0); }), ErrorKind::InvalidSpeed);
}

TEST(DarkProfileProperty, MassFluxConstant) {
    for (double c : {0.1, 0.3, 0.5, 0.8, -0.6}) {
        for (int i = -300; i <= 300; ++i) {
            const double z = i * 0.05;
            const auto [rho, u] = gp_dark_profile(c, z);
            EXPECT_NEAR(rho * (u - c), -c, 1e-10);
            EXPECT_NEAR(u, oracle::dark_u(c, z), 1e-13);
        }
    }
}

TEST(DarkProfileProperty, DerivativesMatchFiniteDifferences) {
    const Profile pr = gp_dark_profile(0.4);
    const double d = 1e-4;
    for (double z : {-2.0, -0.3, 0.0, 0.7, 3.0}) {
        EXPECT_NEAR(pr.drho(z), (pr.rho(z + d) - pr.rho(z - d)) / (2 * d), 1e-7);
        EXPECT_NEAR(pr.d2rho(z), (pr.drho(z + d) - pr.drho(z - d)) / (2 * d), 1e-7);
    }
}

TEST(EkFamily, ExactlySymmetric) {
    const OperatorFamily fam = ek_family(gp_madelung_params(0.5), build_grid(30, 256));
    EXPECT_EQ(fam.order(), 512);
    for (double k : {0.0, 0.9, 2.5}) EXPECT_TRUE(exactly_symmetric(fam.assemble_L(k)));
}

TEST(EkFamily, LprimeFloor) {
    const EKParams params = gp_madelung_params(0.5);
    const Grid grid = build_grid(30, 1024);
    const OperatorFamily fam = ek_family(params, grid);
    double want = INFINITY;
    for (double x : grid.nodes) {
        const double rho = params.profile.rho(x);
        want = std::min({want, params.K(rho), rho});
    }
    EXPECT_NEAR(sym_eigvals(fam.assemble_Lprime(1.0), 1)[0], 2 * want, 1e-14);
    EXPECT_GT(want, 0.0);
}

TEST(EkFamily, OneNegativeDirection) {
    const OperatorFamily fam = ek_family(gp_madelung_params(0.5), build_grid(30, 1024));
    EXPECT_EQ(count_negative(fam, 0.0, default_tau_neg(fam)), 1);
}

TEST(EkFamily, GrowthWeights) {
    const EKParams params = gp_madelung_params(0.5);
    const Grid grid = build_grid(30, 128);
    Vector w(256);
    for (int i = 0; i < 128; ++i) {
        const double rho = params.profile.rho(grid.nodes[i]);
        w(i) = params.K(rho);
        w(128 + i) = rho;
    }
    expect_quadratic_growth(ek_family(params, grid), 1.3, w);
}

TEST(EkFamily, RejectsNonPositiveDensity) {
    Profile pr = constant_profile(1.0, 0.0);
    pr.rho = [](double x) { return x * x - 1.0; };
    pr.rho_inf = 1.0;
    const EKParams params = power_law_params(0.25, -1.0, 1.0, 0.0, 0.5, pr);
    EXPECT_EQ(kind_of([&] { ek_family(params, build_grid(30, 64)); }), ErrorKind::ProfileNotPositive);
}

TEST(EssentialFloor, ZeroAtZeroWavenumber) {
    EXPECT_NEAR(ek_essential_floor(gp_madelung_params(0.5), 0.0), 0.0, 1e-14);
}

TEST(EssentialFloor, PositiveAwayFromZero) {
    const EKParams params = gp_madelung_params(0.5);
    for (double k : {0.05, 0.3, 1.0, 4.0}) EXPECT_GT(ek_essential_floor(params, k), 0.0) << k;
}

TEST(EssentialFloor, MatchesDenseScan) {
    for (double c : {0.5, 0.9}) {
        for (double k : {0.2, 1.0}) {
            const double got = ek_essential_floor(gp_madelung_params(c), k);
            EXPECT_NEAR(got, oracle::gp_floor_bruteforce(c, k, 10.0, 100000), 1e-6) << c << " " << k;
        }
    }
}

TEST(EssentialFloor, RequiresHypEuler) {
    EXPECT_EQ(kind_of([] { ek_essential_floor(gp_madelung_params(1.2), 1.0); }), ErrorKind::HypEulerViolated);
}

TEST(HypEuler, Examples) {
    EXPECT_TRUE(hypeuler_check(gp_madelung_params(0.5)));
    EXPECT_FALSE(hypeuler_check(gp_madelung_params(1.2)));
    EXPECT_TRUE(hypeuler_check(gp_madelung_params(0.999)));
}

TEST(HypEulerProperty, EquivalentToSubsonicSpeed) {
    for (int i = -300; i <= 300; ++i) {
        const double c = i * 0.01 + 0.005;
        EXPECT_EQ(hypeuler_check(gp_madelung_params(c)), c * c < 1.0) << c;
    }
}

TEST(SchurM, ProfileSlopeInKernel) {
    const double c = 0.5;
    const EKParams params = gp_madelung_params(c);
    const Grid grid = build_grid(30, 1024);
    const double scale = ek_family(params, grid).scale;
    const SymMatrix M = ek_schur_M(params, grid);
    const Vector slope = sample(grid, params.profile.drho);
    EXPECT_LE((M.mat() * slope).norm(), 1e-4 * scale);
}

TEST(SchurM, OneNegativeEigenvalue) {
    const SymMatrix M = ek_schur_M(gp_madelung_params(0.5), build_grid(30, 1024));
    const std::vector<double> ev = sym_eigvals(M, 4);
    EXPECT_LT(ev[0], -1e-4);
    EXPECT_GE(ev[1], -1e-4);
}

TEST(SchurM, PositiveOnBoundarySupportedVectors) {
    const Grid grid = build_grid(30, 512);
    const SymMatrix M = ek_schur_M(gp_madelung_params(0.5), grid);
    std::vector<int> far;
    for (int i = 0; i < grid.n; ++i) {
        if (std::abs(grid.nodes[i]) >= 15.0) far.push_back(i);
    }
    Eigen::MatrixXd sub(far.size(), far.size());
    for (std::size_t a = 0; a < far.size(); ++a) {
        for (std::size_t b = 0; b < far.size(); ++b) sub(a, b) = M.mat()(far[a], far[b]);
    }
    // far field: -K d2 + (1 - c^2), floor 0.75
    EXPECT_GT(sym_eigvals(SymMatrix(sub), 1)[0], 0.7);
}

TEST(BlackFamily, KernelIdentities) {
    const OperatorFamily fam = gp_black_family({}, build_grid(30, 1024));
    const int n = fam.grid.n;
    const Eigen::MatrixXd L = fam.assemble_L(0.0).mat();
    const Vector dpsi = sample(fam.grid, [](double x) { return oracle::sech(x) * oracle::sech(x); });
    const Vector psi = sample(fam.grid, [](double x) { return std::tanh(x); });
    EXPECT_LE((L.topLeftCorner(n, n) * dpsi).norm(), 1e-3 * fam.scale);
    EXPECT_LE(windowed(fam.grid, L.bottomRightCorner(n, n) * psi, 5.0).norm(), 1e-3 * fam.scale);
}

TEST(BlackFamily, BlockGroundStates) {
    const OperatorFamily fam = gp_black_family({}, build_grid(30, 1024));
    const int n = fam.grid.n;
    const Eigen::MatrixXd L = fam.assemble_L(0.0).mat();
    const EigPairs l1 = sym_eigs(SymMatrix(L.topLeftCorner(n, n)), 1);
    const EigPairs l2 = sym_eigs(SymMatrix(L.bottomRightCorner(n, n)), 1);
    // L1 = (-d2 - 6 sech^2)/2 + 2 and L2 = (-d2 - 2 sech^2)/2
    EXPECT_NEAR(l1.values[0], 0.5 * oracle::poschl_teller_bound_states(2)[0] + 2.0, 1e-3);
    EXPECT_NEAR(l2.values[0], 0.5 * oracle::poschl_teller_bound_states(1)[0], 1e-3);
    EXPECT_GE(oracle::cosine(Vector(l1.vectors.col(0)),
                             sample(fam.grid, [](double x) { return oracle::sech(x) * oracle::sech(x); })),
              0.999);
    EXPECT_GE(oracle::cosine(Vector(l2.vectors.col(0)), sample(fam.grid, oracle::sech)), 0.999);
}

TEST(BlackFamily, HalfUnitGrowth) {
    const OperatorFamily fam = gp_black_family({}, build_grid(30, 128));
    expect_quadratic_growth(fam, 0.8, Vector::Constant(256, 0.5));
    EXPECT_DOUBLE_EQ(*fam.essential_floor(2.0), 2.0);
}

TEST(LprimeProperty, MatchesCentralDifference) {
    // L is quadratic in k, so the central difference has no truncation error;
    // what remains must be rounding, of order eps * scale / delta.
    const std::vector<OperatorFamily> fams = {kpi_family({2}, build_grid(40, 128)),
                                              ek_family(gp_madelung_params(0.5), build_grid(30, 128)),
                                              gp_black_family({}, build_grid(30, 128))};
    for (const OperatorFamily& fam : fams) {
        for (double k : {0.4, 1.1}) {
            const Eigen::MatrixXd exact = fam.assemble_Lprime(k).mat();
            for (double d : {1e-3, 5e-4}) {
                const Eigen::MatrixXd fd = (fam.assemble_L(k + d).mat() - fam.assemble_L(k - d).mat()) / (2 * d);
                EXPECT_LE((fd - exact).cwiseAbs().maxCoeff(), 16 * kEps * fam.scale / d) << fam.name;
            }
        }
    }
}

TEST(ProfileCsv, TabulatedDarkSolitonMatchesClosedForm) {
    const auto path = dark_csv("dark_tab.csv", 0.5, 30.0, 4001);
    const Profile tab = load_profile_csv(path);
    EXPECT_EQ(tab.source, "tabulated");
    EXPECT_NEAR(tab.rho_inf, 1.0, 1e-9);
    const Profile exact = gp_dark_profile(0.5);
    for (double x : {-3.0, -0.41, 0.0, 1.234, 7.5}) {
        EXPECT_NEAR(tab.rho(x), exact.rho(x), 1e-6);
        EXPECT_NEAR(tab.u(x), exact.u(x), 1e-6);
        EXPECT_NEAR(tab.drho(x), exact.drho(x), 1e-4);
    }
    const Grid grid = build_grid(30, 512);
    const double k_tab = find_k0(ek_family(power_law_params(0.25, -1, 1, 0, 0.5, tab), grid)).k0;
    const double k_exact = find_k0(ek_family(gp_madelung_params(0.5), grid)).k0;
    EXPECT_LE(std::abs(k_tab - k_exact), 0.005 * k_exact);
}

TEST(ProfileCsv, NegativeDensity) {
    const auto path = write_file("neg.csv", "x,rho,u\n-1,1,0\n0,-0.5,0\n1,1,0\n2,1,0\n");
    EXPECT_EQ(kind_of([&] { load_profile_csv(path); }), ErrorKind::BadProfileFile);
}

TEST(ProfileCsv, DoesNotCoverGrid) {
    const Profile tab = load_profile_csv(dark_csv("short.csv", 0.5, 10.0, 201));
    const EKParams params = power_law_params(0.25, -1, 1, 0, 0.5, tab);
    EXPECT_EQ(kind_of([&] { ek_family(params, build_grid(30, 64)); }), ErrorKind::BadProfileFile);
}

TEST(ProfileCsv, MalformedFiles) {
    const std::pair<const char*, const char*> cases[] = {
        {"hdr.csv", "x,rho,v\n0,1,0\n1,1,0\n2,1,0\n3,1,0\n"},
        {"order.csv", "x,rho,u\n0,1,0\n2,1,0\n1,1,0\n3,1,0\n"},
        {"few.csv", "x,rho,u\n0,1,0\n1,1,0\n"},
        {"fields.csv", "x,rho,u\n0,1,0\n1,1\n2,1,0\n3,1,0\n"},
        {"text.csv", "x,rho,u\n0,1,0\n1,abc,0\n2,1,0\n3,1,0\n"},
    };
    for (const auto& [name, text] : cases) {
        const auto path = write_file(name, text);
        EXPECT_EQ(kind_of([&] { load_profile_csv(path); }), ErrorKind::BadProfileFile) << name;
    }
    EXPECT_EQ(kind_of([] { load_profile_csv("/nonexistent/profile.csv"); }), ErrorKind::BadProfileFile);
}
