#pragma once

#include <charconv>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <system_error>

namespace imbal {

/// Shortest decimal text that parses back to the same double.
inline std::string format_number(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return ec == std::errc{} ? std::string(buf, ptr) : std::to_string(v);
}

inline double normal_two_sided_pvalue(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

inline double chi_square_1df_pvalue(double chi2) { return chi2 <= 0.0 ? 1.0 : std::erfc(std::sqrt(chi2 / 2.0)); }

inline double mean(std::span<const double> v)
{
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
inline double sample_std(std::span<const double> v)
{
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

struct LineFit {
    double intercept = 0.0;
    double slope = 0.0;
    double r2 = 1.0;
};

/// Ordinary least-squares line y = a + b x. R^2 is 1 when y is constant.
inline LineFit fit_line(std::span<const double> x, std::span<const double> y)
{
    LineFit f;
    const double mx = mean(x), my = mean(y);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    f.slope = sxx > 0.0 ? sxy / sxx : 0.0;
    f.intercept = my - f.slope * mx;
    if (syy == 0.0) {
        f.r2 = 1.0;
    } else if (sxx == 0.0) {
        f.r2 = 0.0;
    } else {
        f.r2 = (sxy * sxy) / (sxx * syy);
    }
    return f;
}

} // namespace imbal
