#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "atv/copula.hpp"
#include "atv/errors.hpp"
#include "atv/rng.hpp"
#include "atv/sample.hpp"

namespace atv {

// --- pseudo-observations ----------------------------------------------------

// Column-wise ranks divided by n, entries in {1/n, ..., 1}. Ties (repeated
// rows after resampling) are broken by original row index, which keeps the
// transform deterministic and each column a permutation of {1,...,n}.
class PseudoObservations {
public:
    PseudoObservations(std::size_t n, std::size_t d, std::vector<std::uint32_t> ranks)
        : n_(n), d_(d), ranks_(std::move(ranks)) {}

    std::size_t n() const { return n_; }
    std::size_t dim() const { return d_; }
    std::uint32_t rank(std::size_t i, std::size_t j) const { return ranks_[i * d_ + j]; }
    double value(std::size_t i, std::size_t j) const {
        return static_cast<double>(rank(i, j)) / static_cast<double>(n_);
    }

    Sample as_sample() const {
        std::vector<double> data(n_ * d_);
        for (std::size_t k = 0; k < data.size(); ++k)
            data[k] = static_cast<double>(ranks_[k]) / static_cast<double>(n_);
        return Sample(n_, d_, std::move(data));
    }

private:
    std::size_t n_;
    std::size_t d_;
    std::vector<std::uint32_t> ranks_;
};

inline PseudoObservations pseudo_observations(const Sample& s) {
    const std::size_t n = s.rows(), d = s.cols();
    std::vector<std::uint32_t> ranks(n * d);
    std::vector<std::uint32_t> order(n);
    for (std::size_t j = 0; j < d; ++j) {
        std::iota(order.begin(), order.end(), 0u);
        std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
            if (s(a, j) != s(b, j)) return s(a, j) < s(b, j);
            return a < b;
        });
        for (std::size_t k = 0; k < n; ++k)
            ranks[order[k] * d + j] = static_cast<std::uint32_t>(k + 1);
    }
    return PseudoObservations(n, d, std::move(ranks));
}

// --- grid field ---------------------------------------------------------------

enum class FieldKind {
    empirical_copula,
    simple_process,
    composite_process,
    bootstrap_simple,
    bootstrap_composite
};

// Values of a copula-type process at all lattice points (i1/p, ..., id/p),
// i = 0..p per axis, stored row-major with the last axis fastest.
struct GridField {
    std::size_t p = 0;
    std::size_t dim = 0;
    FieldKind kind = FieldKind::empirical_copula;
    std::vector<double> values;

    std::size_t extent() const { return p + 1; }

    std::size_t stride(std::size_t axis) const {
        std::size_t s = 1;
        for (std::size_t j = dim; j-- > axis + 1;) s *= extent();
        return s;
    }

    std::size_t offset(std::span<const int> idx) const {
        std::size_t off = 0;
        for (std::size_t j = 0; j < dim; ++j) off = off * extent() + static_cast<std::size_t>(idx[j]);
        return off;
    }

    double at(std::span<const int> idx) const { return values[offset(idx)]; }
    double at2(int i, int j) const {
        return values[static_cast<std::size_t>(i) * extent() + static_cast<std::size_t>(j)];
    }
};

// Half-open grid box Prod_j (lo_j/p, hi_j/p] with integer corners.
struct Box {
    std::vector<int> lo, hi;
};

inline bool boxes_disjoint(const Box& a, const Box& b) {
    for (std::size_t j = 0; j < a.lo.size(); ++j) {
        if (a.hi[j] <= b.lo[j] || b.hi[j] <= a.lo[j]) return true;
    }
    return false;
}

// Largest p with p^d <= n, clamped below to 2 so a grid always exists.
inline std::size_t default_grid_resolution(std::size_t n, std::size_t d) {
    auto fits = [&](std::size_t base) {
        std::size_t acc = 1;
        for (std::size_t k = 0; k < d; ++k) {
            if (acc > n / base) return false;
            acc *= base;
        }
        return acc <= n;
    };
    std::size_t p = 1;
    while (fits(p + 1)) ++p;
    return std::max<std::size_t>(2, p);
}

namespace detail {

inline std::size_t lattice_size(std::size_t p, std::size_t d) {
    std::size_t total = 1;
    for (std::size_t j = 0; j < d; ++j) {
        if (total > (std::size_t{1} << 48) / (p + 1))
            throw std::invalid_argument("grid too large");
        total *= p + 1;
    }
    return total;
}

}  // namespace detail

// Empirical copula of the (pseudo-observed) sample at every lattice point:
// one binning pass over the rows followed by a d-dimensional prefix sum.
// C_n(i/p) counts rows whose ranks are all <= ceil(n i_j / p).
inline GridField empirical_copula_grid(const PseudoObservations& po, std::size_t p) {
    if (p < 2) throw std::invalid_argument("grid resolution must be >= 2");
    const std::size_t n = po.n(), d = po.dim();
    const std::size_t ext = p + 1;
    const std::size_t total = detail::lattice_size(p, d);
    GridField f{p, d, FieldKind::empirical_copula, std::vector<double>(total, 0.0)};

    // cell[r]: smallest lattice index i with ceil(n i / p) >= r.
    std::vector<std::uint32_t> cell(n + 1, 0);
    {
        std::size_t i = 0;
        for (std::size_t r = 1; r <= n; ++r) {
            while (i <= p && (n * i + p - 1) / p < r) ++i;
            cell[r] = static_cast<std::uint32_t>(i);
        }
    }

    std::vector<std::size_t> stride(d);
    stride[d - 1] = 1;
    for (std::size_t j = d - 1; j-- > 0;) stride[j] = stride[j + 1] * ext;

    for (std::size_t k = 0; k < n; ++k) {
        std::size_t off = 0;
        for (std::size_t j = 0; j < d; ++j) off += stride[j] * cell[po.rank(k, j)];
        f.values[off] += 1.0;
    }

    for (std::size_t axis = 0; axis < d; ++axis) {
        const std::size_t inner = stride[axis];
        const std::size_t outer = total / (inner * ext);
        for (std::size_t o = 0; o < outer; ++o) {
            const std::size_t base = o * ext * inner;
            for (std::size_t i = 1; i < ext; ++i) {
                double* cur = f.values.data() + base + i * inner;
                const double* prev = cur - inner;
                for (std::size_t s = 0; s < inner; ++s) cur[s] += prev[s];
            }
        }
    }

    const double inv_n = 1.0 / static_cast<double>(n);
    for (double& v : f.values) v *= inv_n;
    return f;
}

// Empirical copula at an arbitrary point, C_n(u) = H_n(F-_{n,1}(u_1), ...).
// A small epsilon guards the integer ceiling against representation noise in
// grid coordinates like 1/3.
inline double empirical_copula(const Sample& s, std::span<const double> u) {
    const std::size_t n = s.rows(), d = s.cols();
    if (u.size() != d) throw std::invalid_argument("empirical_copula: dimension mismatch");
    std::vector<std::uint32_t> thresh(d);
    for (std::size_t j = 0; j < d; ++j) {
        if (!(u[j] >= 0.0 && u[j] <= 1.0))
            throw std::invalid_argument("empirical_copula: point outside [0,1]^d");
        if (u[j] == 0.0) return 0.0;
        const double t = std::ceil(static_cast<double>(n) * u[j] - 1e-9);
        thresh[j] = static_cast<std::uint32_t>(std::clamp(t, 0.0, static_cast<double>(n)));
    }
    const auto po = pseudo_observations(s);
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        bool in = true;
        for (std::size_t j = 0; j < d && in; ++j) in = po.rank(i, j) <= thresh[j];
        count += in;
    }
    return static_cast<double>(count) / static_cast<double>(n);
}

// --- process fields -----------------------------------------------------------

using CdfFn = std::function<double(std::span<const double>)>;

inline CdfFn model_cdf(const CopulaModel& m) {
    return [m](std::span<const double> u) { return copula_cdf(m, u); };
}

// Evaluates a cdf at every lattice point of the (p, d) grid.
inline std::vector<double> lattice_eval(const CdfFn& cdf, std::size_t p, std::size_t d) {
    const std::size_t total = detail::lattice_size(p, d);
    std::vector<double> out(total);
    std::vector<int> idx(d, 0);
    std::vector<double> pt(d, 0.0);
    for (std::size_t flat = 0; flat < total; ++flat) {
        for (std::size_t j = 0; j < d; ++j) pt[j] = static_cast<double>(idx[j]) / static_cast<double>(p);
        out[flat] = cdf(pt);
        for (std::size_t j = d; j-- > 0;) {
            if (++idx[j] <= static_cast<int>(p)) break;
            idx[j] = 0;
        }
    }
    return out;
}

// Z_n on the lattice: sqrt(n) (C_n - C0) at every grid point.
inline GridField grid_simple(const Sample& sample, const CdfFn& null_cdf, std::size_t p) {
    const auto po = pseudo_observations(sample);
    GridField f = empirical_copula_grid(po, p);
    f.kind = FieldKind::simple_process;
    const auto ref = lattice_eval(null_cdf, p, sample.cols());
    const double rn = std::sqrt(static_cast<double>(sample.rows()));
    for (std::size_t i = 0; i < f.values.size(); ++i) f.values[i] = rn * (f.values[i] - ref[i]);
    return f;
}

inline GridField grid_simple(const Sample& sample, const CopulaModel& null, std::size_t p) {
    return grid_simple(sample, model_cdf(null), p);
}

// Y_n on the lattice: fits theta on the pseudo-observations, then
// sqrt(n) (C_n - C_thetahat).
inline std::pair<GridField, CopulaModel> grid_composite(const Sample& sample, Family family,
                                                        EstimatorKind estimator, std::size_t p) {
    const auto po = pseudo_observations(sample);
    CopulaModel fitted = fit_copula(family, estimator, po.as_sample());
    GridField f = grid_simple(sample, fitted, p);
    f.kind = FieldKind::composite_process;
    return {std::move(f), fitted};
}

// n rows drawn i.i.d. uniformly with replacement from the input rows.
inline Sample bootstrap_resample(const Sample& s, Rng& rng) {
    const std::size_t n = s.rows(), d = s.cols();
    std::vector<double> data(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = rng.uniform_below(n);
        for (std::size_t j = 0; j < d; ++j) data[i * d + j] = s(k, j);
    }
    return Sample(n, d, std::move(data));
}

// Z*_n on the lattice: sqrt(n) (C*_n - C_n), the resample re-ranked within
// itself under the tie policy.
inline GridField grid_bootstrap_simple(const Sample& sample, const Sample& resample,
                                       std::size_t p) {
    if (sample.rows() != resample.rows() || sample.cols() != resample.cols())
        throw std::invalid_argument("grid_bootstrap_simple: shape mismatch");
    const GridField base = empirical_copula_grid(pseudo_observations(sample), p);
    GridField f = empirical_copula_grid(pseudo_observations(resample), p);
    f.kind = FieldKind::bootstrap_simple;
    const double rn = std::sqrt(static_cast<double>(sample.rows()));
    for (std::size_t i = 0; i < f.values.size(); ++i)
        f.values[i] = rn * (f.values[i] - base.values[i]);
    return f;
}

// Y*_n on the lattice: Z*_n - sqrt(n) (C_thetahat* - C_thetahat), with
// thetahat* refit on the resample pseudo-observations (nonparametric
// bootstrap; the parametric bootstrap is never used).
inline GridField grid_bootstrap_composite(const Sample& sample, const Sample& resample,
                                          Family family, EstimatorKind estimator,
                                          const CopulaModel& fitted, std::size_t p) {
    GridField f = grid_bootstrap_simple(sample, resample, p);
    f.kind = FieldKind::bootstrap_composite;
    if (family == Family::independence) return f;
    const auto rpo = pseudo_observations(resample);
    const CopulaModel refit =
        fit_copula(family, estimator, rpo.as_sample(),
                   fitted.has_parameter() ? std::optional<double>(fitted.theta()) : std::nullopt);
    const auto star = lattice_eval(model_cdf(refit), p, sample.cols());
    const auto hat = lattice_eval(model_cdf(fitted), p, sample.cols());
    const double rn = std::sqrt(static_cast<double>(sample.rows()));
    for (std::size_t i = 0; i < f.values.size(); ++i) f.values[i] -= rn * (star[i] - hat[i]);
    return f;
}

// Signed mass the field assigns to a half-open box: 2^d-corner
// inclusion-exclusion, sign given by the parity of lower-corner picks.
inline double box_measure(const GridField& f, const Box& box) {
    const std::size_t d = f.dim;
    if (box.lo.size() != d || box.hi.size() != d)
        throw std::invalid_argument("box_measure: dimension mismatch");
    std::vector<std::size_t> stride(d);
    stride[d - 1] = 1;
    for (std::size_t j = d - 1; j-- > 0;) stride[j] = stride[j + 1] * f.extent();
    for (std::size_t j = 0; j < d; ++j) {
        if (box.lo[j] < 0 || box.hi[j] > static_cast<int>(f.p) || box.lo[j] > box.hi[j])
            throw std::invalid_argument("box_measure: corners outside grid");
        if (box.lo[j] == box.hi[j]) throw std::invalid_argument("box_measure: degenerate box");
    }
    double acc = 0.0;
    for (std::uint32_t mask = 0; mask < (1u << d); ++mask) {
        std::size_t off = 0;
        for (std::size_t j = 0; j < d; ++j) {
            const bool take_lo = (mask >> j) & 1u;
            off += stride[j] * static_cast<std::size_t>(take_lo ? box.lo[j] : box.hi[j]);
        }
        const int sign = (std::popcount(mask) % 2 == 0) ? 1 : -1;
        acc += sign * f.values[off];
    }
    return acc;
}

// --- dominance counts (CvM support) -----------------------------------------

namespace detail {

class Fenwick {
public:
    explicit Fenwick(std::size_t n) : tree_(n + 1, 0) {}
    void add(std::size_t i) {
        for (; i < tree_.size(); i += i & (~i + 1)) ++tree_[i];
    }
    std::uint32_t prefix(std::size_t i) const {
        std::uint32_t s = 0;
        for (; i > 0; i -= i & (~i + 1)) s += tree_[i];
        return s;
    }

private:
    std::vector<std::uint32_t> tree_;
};

}  // namespace detail

// counts[q] = #{rows k of `ranks` : ranks(k, j) <= queries(q, j) for all j}.
// Bivariate path uses a sweep with a Fenwick tree; higher dimensions fall
// back to the quadratic scan.
inline std::vector<std::uint32_t> dominance_counts(const PseudoObservations& ranks,
                                                   const PseudoObservations& queries) {
    if (ranks.dim() != queries.dim())
        throw std::invalid_argument("dominance_counts: dimension mismatch");
    const std::size_t n = ranks.n(), q = queries.n(), d = ranks.dim();
    std::vector<std::uint32_t> out(q, 0);
    if (d == 2) {
        std::vector<std::pair<std::uint32_t, std::uint32_t>> rows(n);
        for (std::size_t i = 0; i < n; ++i) rows[i] = {ranks.rank(i, 0), ranks.rank(i, 1)};
        std::sort(rows.begin(), rows.end());
        std::vector<std::size_t> order(q);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return queries.rank(a, 0) < queries.rank(b, 0);
        });
        detail::Fenwick bit(n);
        std::size_t next = 0;
        for (std::size_t idx : order) {
            const std::uint32_t q0 = queries.rank(idx, 0);
            while (next < n && rows[next].first <= q0) bit.add(rows[next++].second);
            out[idx] = bit.prefix(std::min<std::size_t>(queries.rank(idx, 1), n));
        }
        return out;
    }
    for (std::size_t a = 0; a < q; ++a) {
        std::uint32_t c = 0;
        for (std::size_t i = 0; i < n; ++i) {
            bool in = true;
            for (std::size_t j = 0; j < d && in; ++j) in = ranks.rank(i, j) <= queries.rank(a, j);
            c += in;
        }
        out[a] = c;
    }
    return out;
}

}  // namespace atv
