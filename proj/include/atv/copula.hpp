#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "atv/errors.hpp"
#include "atv/rng.hpp"
#include "atv/sample.hpp"

namespace atv {

enum class Family { independence, frank, clayton, gumbel };

inline const char* family_name(Family f) {
    switch (f) {
        case Family::independence: return "independence";
        case Family::frank: return "frank";
        case Family::clayton: return "clayton";
        case Family::gumbel: return "gumbel";
    }
    return "?";
}

inline Family parse_family(std::string_view s) {
    if (s == "independence") return Family::independence;
    if (s == "frank") return Family::frank;
    if (s == "clayton") return Family::clayton;
    if (s == "gumbel") return Family::gumbel;
    throw ConfigError("unknown copula family: " + std::string(s));
}

enum class EstimatorKind { tau_inversion, pseudo_ml };

inline const char* estimator_name(EstimatorKind k) {
    return k == EstimatorKind::tau_inversion ? "tau" : "pml";
}

inline EstimatorKind parse_estimator(std::string_view s) {
    if (s == "tau") return EstimatorKind::tau_inversion;
    if (s == "pml") return EstimatorKind::pseudo_ml;
    throw ConfigError("unknown estimator: " + std::string(s) + " (expected tau|pml)");
}

// One-parameter bivariate copula, or the parameter-free independence copula.
// Frank with theta == 0 is accepted and collapses to independence (removable
// singularity); Clayton requires theta > 0 and Gumbel theta >= 1.
class CopulaModel {
public:
    CopulaModel(Family family, double theta) : family_(family), theta_(theta) {
        switch (family_) {
            case Family::independence:
                theta_ = 0.0;
                break;
            case Family::frank:
                if (!std::isfinite(theta_)) throw std::invalid_argument("Frank: theta must be finite");
                if (theta_ == 0.0) family_ = Family::independence;
                break;
            case Family::clayton:
                if (!(theta_ > 0.0) || !std::isfinite(theta_))
                    throw std::invalid_argument("Clayton: theta must be > 0");
                break;
            case Family::gumbel:
                if (!(theta_ >= 1.0) || !std::isfinite(theta_))
                    throw std::invalid_argument("Gumbel: theta must be >= 1");
                break;
        }
    }

    static CopulaModel independence() { return CopulaModel(Family::independence, 0.0); }

    Family family() const { return family_; }
    bool has_parameter() const { return family_ != Family::independence; }
    double theta() const { return theta_; }

private:
    Family family_;
    double theta_;
};

// --- Debye function -------------------------------------------------------

namespace detail {

inline double debye_integrand(double t) {
    // t / (e^t - 1), continuous at 0 with value 1.
    if (std::abs(t) < 1e-8) return 1.0 - t / 2.0 + t * t / 12.0;
    return t / std::expm1(t);
}

inline double adaptive_simpson(double a, double b, double fa, double fm, double fb,
                               double whole, double rel_tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = debye_integrand(lm);
    const double frm = debye_integrand(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * rel_tol * std::abs(left + right)) {
        return left + right + delta / 15.0;
    }
    return adaptive_simpson(a, m, fa, flm, fm, left, rel_tol, depth - 1) +
           adaptive_simpson(m, b, fm, frm, fb, right, rel_tol, depth - 1);
}

}  // namespace detail

// First Debye function D1(x) = (1/x) * Integral_0^x t/(e^t - 1) dt, evaluated
// by adaptive Simpson quadrature to relative tolerance 1e-10. Defined for
// x != 0; works for negative arguments as well.
inline double debye1(double x) {
    if (x == 0.0) return 1.0;
    const double fa = detail::debye_integrand(0.0);
    const double fb = detail::debye_integrand(x);
    const double fm = detail::debye_integrand(0.5 * x);
    const double whole = x / 6.0 * (fa + 4.0 * fm + fb);
    const double integral = detail::adaptive_simpson(0.0, x, fa, fm, fb, whole, 1e-10, 48);
    return integral / x;
}

// --- cdf / pdf ------------------------------------------------------------

namespace detail {

inline void check_unit_cube(std::span<const double> u) {
    if (u.size() < 2) throw std::invalid_argument("copula point: need dimension >= 2");
    for (double x : u) {
        if (!(x >= 0.0 && x <= 1.0)) throw std::invalid_argument("copula point: outside [0,1]^d");
    }
}

inline void check_bivariate(const CopulaModel& m, std::span<const double> u) {
    if (m.has_parameter() && u.size() != 2)
        throw std::invalid_argument("parametric families are bivariate only");
}

}  // namespace detail

inline double copula_cdf(const CopulaModel& m, std::span<const double> u) {
    detail::check_unit_cube(u);
    detail::check_bivariate(m, u);
    for (double x : u) {
        if (x == 0.0) return 0.0;
    }
    switch (m.family()) {
        case Family::independence: {
            double prod = 1.0;
            for (double x : u) prod *= x;
            return prod;
        }
        case Family::frank: {
            const double th = m.theta();
            const double num = std::expm1(-th * u[0]) * std::expm1(-th * u[1]);
            return -std::log1p(num / std::expm1(-th)) / th;
        }
        case Family::clayton: {
            const double th = m.theta();
            const double s = std::pow(u[0], -th) + std::pow(u[1], -th) - 1.0;
            return std::pow(s, -1.0 / th);
        }
        case Family::gumbel: {
            const double th = m.theta();
            const double x = std::pow(-std::log(u[0]), th);
            const double y = std::pow(-std::log(u[1]), th);
            return std::exp(-std::pow(x + y, 1.0 / th));
        }
    }
    return 0.0;
}

inline double copula_cdf(const CopulaModel& m, double u, double v) {
    const double pt[2] = {u, v};
    return copula_cdf(m, pt);
}

namespace detail {

// log density for interior points; theta must be valid for the family,
// except that |theta| below 1e-8 is treated as the independence limit for
// Frank. Used by both copula_pdf and the pseudo-likelihood objective.
inline double log_density(Family family, double theta, double u, double v) {
    switch (family) {
        case Family::independence:
            return 0.0;
        case Family::frank: {
            if (std::abs(theta) < 1e-8) return 0.0;
            // theta (1-e^{-theta}) is positive for either sign of theta
            const double e = -std::expm1(-theta);  // 1 - e^{-theta}
            const double a = -std::expm1(-theta * u);
            const double b = -std::expm1(-theta * v);
            const double den = e - a * b;
            return std::log(std::abs(theta)) + std::log(std::abs(e)) - theta * (u + v) -
                   2.0 * std::log(std::abs(den));
        }
        case Family::clayton: {
            const double lu = std::log(u);
            const double lv = std::log(v);
            const double s = std::pow(u, -theta) + std::pow(v, -theta) - 1.0;
            return std::log1p(theta) - (1.0 + theta) * (lu + lv) -
                   (2.0 + 1.0 / theta) * std::log(s);
        }
        case Family::gumbel: {
            const double x = -std::log(u);
            const double y = -std::log(v);
            const double xt = std::pow(x, theta);
            const double yt = std::pow(y, theta);
            const double s = xt + yt;
            const double s1t = std::pow(s, 1.0 / theta);
            return -s1t + (theta - 1.0) * (std::log(x) + std::log(y)) +
                   (1.0 / theta - 2.0) * std::log(s) + std::log(s1t + theta - 1.0) -
                   std::log(u) - std::log(v);
        }
    }
    return 0.0;
}

}  // namespace detail

inline double copula_pdf(const CopulaModel& m, std::span<const double> u) {
    detail::check_unit_cube(u);
    detail::check_bivariate(m, u);
    if (m.family() == Family::independence) {
        for (double x : u) {
            if (x == 0.0 || x == 1.0) throw std::domain_error("copula_pdf: point on boundary");
        }
        return 1.0;
    }
    if (u[0] == 0.0 || u[0] == 1.0 || u[1] == 0.0 || u[1] == 1.0)
        throw std::domain_error("copula_pdf: point on boundary");
    return std::exp(detail::log_density(m.family(), m.theta(), u[0], u[1]));
}

inline double copula_pdf(const CopulaModel& m, double u, double v) {
    const double pt[2] = {u, v};
    return copula_pdf(m, pt);
}

// --- Kendall tau maps -----------------------------------------------------

// Population Kendall tau of a model.
inline double population_tau(const CopulaModel& m) {
    switch (m.family()) {
        case Family::independence: return 0.0;
        case Family::clayton: return m.theta() / (m.theta() + 2.0);
        case Family::gumbel: return 1.0 - 1.0 / m.theta();
        case Family::frank: {
            const double th = m.theta();
            return 1.0 - 4.0 / th * (1.0 - debye1(th));
        }
    }
    return 0.0;
}

// Inverts the tau <-> theta map of a family. Frank solves
// tau = 1 - (4/theta) (1 - D1(theta)) by bracketed bisection.
inline double tau_to_theta(Family family, double tau) {
    if (!(tau > -1.0 && tau < 1.0)) throw std::domain_error("tau_to_theta: tau outside (-1,1)");
    switch (family) {
        case Family::independence:
            if (tau != 0.0) throw std::domain_error("tau_to_theta: independence requires tau = 0");
            return 0.0;
        case Family::clayton:
            if (!(tau > 0.0))
                throw std::domain_error("tau_to_theta: Clayton requires tau > 0");
            return 2.0 * tau / (1.0 - tau);
        case Family::gumbel:
            if (tau < 0.0) throw std::domain_error("tau_to_theta: Gumbel requires tau >= 0");
            return 1.0 / (1.0 - tau);
        case Family::frank: {
            if (tau == 0.0) return 0.0;
            const double target = std::abs(tau);
            // frank tau is odd in theta and strictly increasing; solve for the
            // magnitude on [lo, hi], then restore the sign.
            double lo = 1e-9, hi = 1.0;
            auto tau_of = [](double th) { return 1.0 - 4.0 / th * (1.0 - debye1(th)); };
            while (tau_of(hi) < target) {
                hi *= 2.0;
                if (hi > 1e4) throw std::domain_error("tau_to_theta: Frank tau too close to 1");
            }
            for (int it = 0; it < 200 && hi - lo > 1e-12 * (1.0 + hi); ++it) {
                const double mid = 0.5 * (lo + hi);
                (tau_of(mid) < target ? lo : hi) = mid;
            }
            const double theta = 0.5 * (lo + hi);
            return tau < 0.0 ? -theta : theta;
        }
    }
    return 0.0;
}

// --- empirical Kendall tau --------------------------------------------------

namespace detail {

// Counts inversions (strict descents) in y, assuming the array is sorted by a
// primary key already; classic merge-sort count.
inline std::uint64_t merge_count(std::vector<double>& y, std::vector<double>& buf,
                                 std::size_t lo, std::size_t hi) {
    if (hi - lo < 2) return 0;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::uint64_t cnt = merge_count(y, buf, lo, mid) + merge_count(y, buf, mid, hi);
    std::size_t i = lo, j = mid, k = lo;
    while (i < mid && j < hi) {
        if (y[i] <= y[j]) {
            buf[k++] = y[i++];
        } else {
            cnt += mid - i;
            buf[k++] = y[j++];
        }
    }
    while (i < mid) buf[k++] = y[i++];
    while (j < hi) buf[k++] = y[j++];
    std::copy(buf.begin() + static_cast<long>(lo), buf.begin() + static_cast<long>(hi),
              y.begin() + static_cast<long>(lo));
    return cnt;
}

}  // namespace detail

// Exact empirical Kendall tau 4 C / (n (n-1)) - 1 with C the number of
// strictly concordant pairs. O(n log n) via merge-sort inversion counting;
// pairs tied in either coordinate count as neither concordant nor discordant.
inline double empirical_tau(const Sample& s) {
    const std::size_t n = s.rows();
    if (n < 2) throw std::invalid_argument("empirical_tau: need n >= 2");
    if (s.cols() != 2) throw std::invalid_argument("empirical_tau: bivariate only");

    std::vector<std::pair<double, double>> pts(n);
    for (std::size_t i = 0; i < n; ++i) pts[i] = {s(i, 0), s(i, 1)};
    std::sort(pts.begin(), pts.end());

    const std::uint64_t total = static_cast<std::uint64_t>(n) * (n - 1) / 2;

    // Pairs tied in x (sorted by x, ties grouped), and tied in both.
    std::uint64_t ties_x = 0, ties_xy = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && pts[j].first == pts[i].first) ++j;
        const std::uint64_t g = j - i;
        ties_x += g * (g - 1) / 2;
        for (std::size_t a = i; a < j;) {
            std::size_t b = a;
            while (b < j && pts[b].second == pts[a].second) ++b;
            const std::uint64_t h = b - a;
            ties_xy += h * (h - 1) / 2;
            a = b;
        }
        i = j;
    }

    // Pairs tied in y.
    std::vector<double> ys(n);
    for (std::size_t i = 0; i < n; ++i) ys[i] = pts[i].second;
    std::uint64_t ties_y = 0;
    {
        std::vector<double> sorted = ys;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < n;) {
            std::size_t j = i;
            while (j < n && sorted[j] == sorted[i]) ++j;
            const std::uint64_t g = j - i;
            ties_y += g * (g - 1) / 2;
            i = j;
        }
    }

    // Discordant pairs are strict y-descents in x-order; x-tie groups were
    // sorted by y ascending above, so group-internal pairs never count.
    std::vector<double> buf(n);
    const std::uint64_t discordant = detail::merge_count(ys, buf, 0, n);
    const std::uint64_t concordant = total - discordant - ties_x - ties_y + ties_xy;
    return 4.0 * static_cast<double>(concordant) / static_cast<double>(n) /
               static_cast<double>(n - 1) -
           1.0;
}

// --- samplers ---------------------------------------------------------------

namespace detail {

// Conditional quantile v = C_{2|1}^{-1}(w | u) for each family.
inline double conditional_inverse(const CopulaModel& m, double u, double w) {
    switch (m.family()) {
        case Family::independence:
            return w;
        case Family::clayton: {
            const double th = m.theta();
            const double t = std::pow(w, -th / (1.0 + th)) - 1.0;
            return std::pow(t * std::pow(u, -th) + 1.0, -1.0 / th);
        }
        case Family::frank: {
            const double th = m.theta();
            const double a = std::exp(-th * u);
            const double num = w * std::expm1(-th);
            const double den = a * (1.0 - w) + w;
            return -std::log1p(num / den) / th;
        }
        case Family::gumbel: {
            // No closed form; bisect the conditional cdf
            //   C_{2|1}(v|u) = C(u,v) (-log u)^{theta-1} S^{1/theta - 1} / u
            // which is increasing in v from 0 to 1.
            const double th = m.theta();
            const double x = -std::log(u);
            const double xt = std::pow(x, th);
            const double xpow = std::pow(x, th - 1.0);
            auto cond = [&](double v) {
                const double y = -std::log(v);
                const double s = xt + std::pow(y, th);
                const double s1t = std::pow(s, 1.0 / th);
                return std::exp(-s1t) * xpow * std::pow(s, 1.0 / th - 1.0) / u;
            };
            double lo = 1e-300, hi = 1.0 - 1e-16;
            for (int it = 0; it < 200 && hi - lo > 1e-10; ++it) {
                const double mid = 0.5 * (lo + hi);
                (cond(mid) < w ? lo : hi) = mid;
            }
            return 0.5 * (lo + hi);
        }
    }
    return w;
}

}  // namespace detail

// Bivariate sampler via the conditional-distribution (inverse Rosenblatt)
// method. Deterministic given the stream.
inline Sample sample_copula(const CopulaModel& m, std::size_t n, Rng& rng) {
    if (n < 1) throw std::invalid_argument("sample_copula: need n >= 1");
    std::vector<double> data(n * 2);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = rng.uniform_open01();
        const double w = rng.uniform_open01();
        data[2 * i] = u;
        data[2 * i + 1] = detail::conditional_inverse(m, u, w);
    }
    return Sample(n, 2, std::move(data));
}

// --- fitting ----------------------------------------------------------------

namespace detail {

struct ParamRange {
    double lo, hi;
};

inline ParamRange family_range(Family f) {
    switch (f) {
        case Family::clayton: return {1e-3, 98.0};
        case Family::gumbel: return {1.0 + 1e-9, 50.0};
        case Family::frank: return {-80.0, 80.0};
        default: return {0.0, 0.0};
    }
}

// Golden-section maximization of f on [a, b] to absolute tolerance tol.
template <typename F>
double golden_section_max(F&& f, double a, double b, double tol) {
    constexpr double invphi = 0.6180339887498949;
    double x1 = b - invphi * (b - a);
    double x2 = a + invphi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    while (b - a > tol) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + invphi * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - invphi * (b - a);
            f1 = f(x1);
        }
    }
    return 0.5 * (a + b);
}

}  // namespace detail

// Maximum pseudo-likelihood fit of a one-parameter family on pseudo-
// observations. The mean log density is maximized by a coarse scan that
// brackets the maximum followed by golden-section refinement to 1e-6. The
// density is evaluated at the pseudo-observations shrunk by n/(n+1) so that
// boundary ranks (k = n) stay interior. An optional warm start narrows the
// initial scan; the scan falls back to the full admissible range whenever the
// local one brackets nothing.
inline double fit_pseudo_ml(Family family, const Sample& pseudo_obs,
                            std::optional<double> warm_start = std::nullopt) {
    const std::size_t n = pseudo_obs.rows();
    const double shrink = static_cast<double>(n) / static_cast<double>(n + 1);
    const auto range = detail::family_range(family);

    auto loglik = [&](double theta) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            acc += detail::log_density(family, theta, pseudo_obs(i, 0) * shrink,
                                       pseudo_obs(i, 1) * shrink);
        }
        return acc / static_cast<double>(n);
    };

    // Initial scan window: warm start (bootstrap refits), else tau inversion
    // with a wide margin, else the full range.
    double lo = range.lo, hi = range.hi;
    std::optional<double> center = warm_start;
    if (!center) {
        try {
            const double tau = empirical_tau(pseudo_obs);
            center = tau_to_theta(family, std::clamp(tau, -0.97, 0.97));
        } catch (const std::domain_error&) {
            center.reset();
        }
    }
    if (center) {
        const double margin = std::max(2.0, std::abs(*center));
        lo = std::max(range.lo, *center - 2.0 * margin);
        hi = std::min(range.hi, *center + 2.0 * margin);
        if (!(lo < hi)) {
            lo = range.lo;
            hi = range.hi;
        }
    }

    for (int attempt = 0; attempt < 2; ++attempt) {
        constexpr int kGridPoints = 33;
        double best_theta = lo;
        double best_ll = -std::numeric_limits<double>::infinity();
        int best_idx = 0;
        std::vector<std::pair<double, double>> trace;
        for (int k = 0; k < kGridPoints; ++k) {
            const double theta = lo + (hi - lo) * k / (kGridPoints - 1);
            const double ll = loglik(theta);
            trace.emplace_back(theta, ll);
            if (ll > best_ll) {
                best_ll = ll;
                best_theta = theta;
                best_idx = k;
            }
        }
        const bool at_lower = best_idx == 0;
        const bool at_upper = best_idx == kGridPoints - 1;
        if ((at_lower || at_upper) && (lo > range.lo + 1e-12 || hi < range.hi - 1e-12)) {
            lo = range.lo;  // local window missed the maximum; rescan full range
            hi = range.hi;
            continue;
        }
        if (at_upper) {
            std::ostringstream msg;
            msg << "fit_pseudo_ml(" << family_name(family)
                << "): no interior maximum; log-likelihood trace:";
            for (const auto& [th, ll] : trace) msg << " (" << th << "," << ll << ")";
            throw EstimationError(msg.str());
        }
        if (at_lower) {
            // Dependence weaker than the family can express; the boundary is
            // the constrained maximizer (e.g. Gumbel theta = 1).
            return lo;
        }
        const double step = (hi - lo) / (kGridPoints - 1);
        return detail::golden_section_max(loglik, best_theta - step, best_theta + step, 1e-6);
    }
    throw EstimationError("fit_pseudo_ml: bracketing failed");
}

// Fits a copula model on pseudo-observations with the chosen estimator.
// Independence has no parameter and is returned as-is. Tau-inversion failures
// (tau outside the attainable range) surface as EstimationError.
inline CopulaModel fit_copula(Family family, EstimatorKind estimator, const Sample& pseudo_obs,
                              std::optional<double> warm_start = std::nullopt) {
    if (family == Family::independence) return CopulaModel::independence();
    switch (estimator) {
        case EstimatorKind::tau_inversion: {
            try {
                const double tau = empirical_tau(pseudo_obs);
                return CopulaModel(family, tau_to_theta(family, tau));
            } catch (const std::domain_error& e) {
                throw EstimationError(std::string("tau inversion failed: ") + e.what());
            }
        }
        case EstimatorKind::pseudo_ml:
            return CopulaModel(family, fit_pseudo_ml(family, pseudo_obs, warm_start));
    }
    throw ConfigError("fit_copula: unknown estimator");
}

}  // namespace atv
