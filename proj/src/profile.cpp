#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "tspec/models.hpp"

namespace tspec {

namespace {

// Natural cubic spline; evaluation clamps x to the tabulated range.
class CubicSpline {
public:
    CubicSpline(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
        const std::size_t n = x_.size();
        m_.assign(n, 0.0);
        if (n < 3) return;
        // Thomas algorithm on the interior second-derivative equations.
        std::vector<double> diag(n, 0.0), rhs(n, 0.0), upper(n, 0.0);
        for (std::size_t i = 1; i + 1 < n; ++i) {
            const double h0 = x_[i] - x_[i - 1];
            const double h1 = x_[i + 1] - x_[i];
            const double lower = h0 / 6.0;
            diag[i] = (h0 + h1) / 3.0;
            upper[i] = h1 / 6.0;
            rhs[i] = (y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0;
            if (i > 1) {
                const double w = lower / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
        }
        for (std::size_t i = n - 2; i >= 1; --i) {
            m_[i] = (rhs[i] - upper[i] * m_[i + 1]) / diag[i];
            if (i == 1) break;
        }
    }

    double front() const { return x_.front(); }
    double back() const { return x_.back(); }

    double value(double x) const { return eval(x, 0); }
    double d1(double x) const { return eval(x, 1); }
    double d2(double x) const { return eval(x, 2); }

private:
    double eval(double x, int deriv) const {
        x = std::clamp(x, x_.front(), x_.back());
        auto it = std::upper_bound(x_.begin(), x_.end(), x);
        std::size_t i = it == x_.begin() ? 0 : static_cast<std::size_t>(it - x_.begin()) - 1;
        i = std::min(i, x_.size() - 2);
        const double h = x_[i + 1] - x_[i];
        const double a = (x_[i + 1] - x) / h;
        const double b = (x - x_[i]) / h;
        switch (deriv) {
            case 0:
                return a * y_[i] + b * y_[i + 1] + ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6.0;
            case 1:
                return (y_[i + 1] - y_[i]) / h - (3.0 * a * a - 1.0) * h / 6.0 * m_[i] +
                       (3.0 * b * b - 1.0) * h / 6.0 * m_[i + 1];
            default:
                return a * m_[i] + b * m_[i + 1];
        }
    }

    std::vector<double> x_, y_, m_;
};

std::string trim(std::string s) {
    const auto not_space = [](unsigned char ch) { return !std::isspace(ch); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

[[noreturn]] void bad(const std::filesystem::path& path, std::size_t line, const std::string& what) {
    throw Error(ErrorKind::BadProfileFile, path.string() + ":" + std::to_string(line) + ": " + what);
}

double parse_field(const std::string& field, const std::filesystem::path& path, std::size_t line) {
    const std::string f = trim(field);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (f.empty() || ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(v)) {
        bad(path, line, "cannot parse number '" + f + "'");
    }
    return v;
}

}  // namespace

Profile load_profile_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::BadProfileFile, "cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) bad(path, 1, "empty file");
    std::string header = trim(line);
    header.erase(std::remove(header.begin(), header.end(), ' '), header.end());
    if (header.rfind("\xEF\xBB\xBF", 0) == 0) header.erase(0, 3);
    if (header != "x,rho,u") bad(path, 1, "header must be x,rho,u");

    std::vector<double> xs, rhos, us;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        for (std::size_t pos; (pos = line.find(',', start)) != std::string::npos; start = pos + 1) {
            fields.push_back(line.substr(start, pos - start));
        }
        fields.push_back(line.substr(start));
        if (fields.size() != 3) bad(path, lineno, "expected 3 fields");
        const double x = parse_field(fields[0], path, lineno);
        const double r = parse_field(fields[1], path, lineno);
        const double u = parse_field(fields[2], path, lineno);
        if (!xs.empty() && !(x > xs.back())) bad(path, lineno, "x must be strictly increasing");
        if (!(r > 0.0)) bad(path, lineno, "rho must be positive");
        xs.push_back(x);
        rhos.push_back(r);
        us.push_back(u);
    }
    if (xs.size() < 4) bad(path, lineno, "need at least 4 rows");

    auto rho = std::make_shared<const CubicSpline>(xs, rhos);
    auto vel = std::make_shared<const CubicSpline>(xs, us);
    Profile pr;
    pr.rho = [rho](double x) { return rho->value(x); };
    pr.drho = [rho](double x) { return rho->d1(x); };
    pr.d2rho = [rho](double x) { return rho->d2(x); };
    pr.u = [vel](double x) { return vel->value(x); };
    pr.rho_inf = 0.5 * (rhos.front() + rhos.back());
    pr.u_inf = 0.5 * (us.front() + us.back());
    pr.source = "tabulated";
    pr.x_min = xs.front();
    pr.x_max = xs.back();
    return pr;
}

}  // namespace tspec
