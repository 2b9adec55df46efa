#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <variant>
#include <vector>

#include "json.hpp"

#include "atv/copula.hpp"
#include "atv/empirical.hpp"
#include "atv/errors.hpp"
#include "atv/rng.hpp"
#include "atv/statistics.hpp"

namespace atv {

enum class StatKind { atv, ks, cvm, chi2, kuiper };

inline const char* stat_name(StatKind k) {
    switch (k) {
        case StatKind::atv: return "atv";
        case StatKind::ks: return "ks";
        case StatKind::cvm: return "cvm";
        case StatKind::chi2: return "chi2";
        case StatKind::kuiper: return "kuiper";
    }
    return "?";
}

inline StatKind parse_stat(std::string_view s) {
    if (s == "atv") return StatKind::atv;
    if (s == "ks") return StatKind::ks;
    if (s == "cvm") return StatKind::cvm;
    if (s == "chi2") return StatKind::chi2;
    if (s == "kuiper") return StatKind::kuiper;
    throw ConfigError("unknown statistic: " + std::string(s));
}

// Comma-separated list, e.g. "atv,ks,cvm"; duplicates collapse.
inline std::vector<StatKind> parse_stat_list(std::string_view s) {
    std::vector<StatKind> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        const std::size_t comma = std::min(s.find(',', pos), s.size());
        const StatKind k = parse_stat(s.substr(pos, comma - pos));
        if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
        pos = comma + 1;
    }
    return out;
}

struct TestConfig {
    StatKind statistic = StatKind::atv;
    int B = 1000;            // bootstrap replicates
    double alpha = 0.05;     // level
    double epsilon = 0.0;    // critical-value margin
    AtvConfig atv{};         // L = 0 and m = 0 resolve per sample size
    std::uint64_t seed = 0;  // master seed; all randomness derives from it
    int workers = 1;
    std::size_t grid_p = 0;  // 0 resolves to floor(n^{1/d})

    void validate() const {
        if (B < 1) throw ConfigError("TestConfig: B must be >= 1");
        if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("TestConfig: alpha must be in (0,1)");
        if (!(epsilon >= 0.0)) throw ConfigError("TestConfig: epsilon must be >= 0");
        if (workers < 1) throw ConfigError("TestConfig: workers must be >= 1");
        if (atv.K < 1) throw ConfigError("TestConfig: K must be >= 1");
        if (atv.L < 0) throw ConfigError("TestConfig: L must be >= 1 (or 0 for auto)");
    }
};

struct ThetaStarSummary {
    std::size_t count = 0;
    double mean = 0.0, sd = 0.0, min = 0.0, max = 0.0;
};

struct TestResult {
    StatKind statistic_kind = StatKind::atv;
    double statistic = 0.0;
    std::vector<double> replicates;  // successful bootstrap statistic values, replicate order
    double p_value = 1.0;
    double critical_value = 0.0;
    bool reject = false;
    std::optional<double> theta_hat;
    std::optional<ThetaStarSummary> theta_star_summary;
    std::size_t failed_replicates = 0;
    // provenance
    std::uint64_t seed = 0;
    double alpha = 0.05, epsilon = 0.0;
    int B = 0, L = 0;
    std::size_t grid_p = 0, n = 0, d = 0;
};

// t* + epsilon, with t* the ceil((1-alpha) B)-th order statistic of the
// replicate values. The tiny slack guards the ceiling against floating noise
// in (1-alpha)*B.
inline double critical_value(std::span<const double> replicates, double alpha, double epsilon) {
    if (replicates.empty()) throw std::invalid_argument("critical_value: no replicates");
    std::vector<double> sorted(replicates.begin(), replicates.end());
    std::sort(sorted.begin(), sorted.end());
    const auto B = static_cast<double>(sorted.size());
    auto k = static_cast<std::size_t>(std::ceil((1.0 - alpha) * B - 1e-9));
    k = std::clamp<std::size_t>(k, 1, sorted.size());
    return sorted[k - 1] + epsilon;
}

// Add-one bootstrap p-value (1 + #{T*_b >= T}) / (B + 1); never zero.
inline double bootstrap_p_value(std::span<const double> replicates, double observed) {
    std::size_t count = 0;
    for (double r : replicates) count += r >= observed;
    return (1.0 + static_cast<double>(count)) / (static_cast<double>(replicates.size()) + 1.0);
}

// Null hypothesis for the engine: a fixed copula (model or raw cdf) or a
// parametric family with the estimator used to fit it.
struct SimpleModelNull {
    CopulaModel model = CopulaModel::independence();
};
struct SimpleCdfNull {
    CdfFn cdf;
};
struct CompositeNull {
    Family family;
    EstimatorKind estimator;
};
using NullSpec = std::variant<SimpleModelNull, SimpleCdfNull, CompositeNull>;

// --- the test engine ---------------------------------------------------------

// Runs the bootstrap goodness-of-fit test for every requested statistic on
// shared resamples: one TestResult per entry of `kinds`, all computed from
// the same datasets, resample streams and search seeds, so comparisons across
// statistics are fair. Replicates are independent tasks with seeds derived
// from (master seed, replicate index); the output does not depend on the
// worker count.
inline std::vector<TestResult> run_gof(const Sample& sample, const NullSpec& null,
                                       const TestConfig& cfg, std::span<const StatKind> kinds) {
    cfg.validate();
    if (kinds.empty()) throw ConfigError("run_gof: no statistics requested");
    const std::size_t n = sample.rows(), d = sample.cols();
    const std::size_t p = cfg.grid_p ? cfg.grid_p : default_grid_resolution(n, d);
    if (p < 2) throw ConfigError("run_gof: grid resolution must be >= 2");
    const int L = cfg.atv.L > 0 ? cfg.atv.L : box_count_rule(n);
    const std::size_t m = cfg.atv.m > 0 ? cfg.atv.m : n;

    auto wants = [&](StatKind k) { return std::find(kinds.begin(), kinds.end(), k) != kinds.end(); };
    const bool need_cvm = wants(StatKind::cvm);
    const bool need_chi2 = wants(StatKind::chi2);

    const bool composite = std::holds_alternative<CompositeNull>(null);
    const auto pobs = pseudo_observations(sample);

    std::optional<CopulaModel> fitted;
    CdfFn null_cdf;
    if (composite) {
        const auto& cn = std::get<CompositeNull>(null);
        fitted = fit_copula(cn.family, cn.estimator, pobs.as_sample());
        null_cdf = model_cdf(*fitted);
    } else if (std::holds_alternative<SimpleModelNull>(null)) {
        null_cdf = model_cdf(std::get<SimpleModelNull>(null).model);
    } else {
        null_cdf = std::get<SimpleCdfNull>(null).cdf;
    }
    const bool has_param = composite && fitted->has_parameter();
    CompositeNull comp{Family::independence, EstimatorKind::tau_inversion};
    if (composite) comp = std::get<CompositeNull>(null);

    const double rn = std::sqrt(static_cast<double>(n));
    const FieldKind obs_kind = composite ? FieldKind::composite_process : FieldKind::simple_process;
    const FieldKind boot_kind = composite ? FieldKind::bootstrap_composite : FieldKind::bootstrap_simple;

    // Lattices reused by every replicate.
    const GridField cn_p = empirical_copula_grid(pobs, p);
    const std::vector<double> c0_p = lattice_eval(null_cdf, p, d);
    const int q = need_chi2 ? chi2_partition_resolution(L, d) : 0;
    GridField cn_q;
    std::vector<double> c0_q;
    if (need_chi2) {
        cn_q = empirical_copula_grid(pobs, static_cast<std::size_t>(q));
        c0_q = lattice_eval(null_cdf, static_cast<std::size_t>(q), d);
    }

    // Statistic evaluation shared by the observed pass and every replicate.
    auto eval_kind = [&](StatKind k, const GridField& fld_p, const GridField& fld_q,
                         std::span<const double> z_atoms, std::uint64_t prs_seed) -> double {
        switch (k) {
            case StatKind::atv: {
                AtvConfig acfg;
                acfg.L = L;
                acfg.m = m;
                acfg.K = cfg.atv.K;
                acfg.seed = prs_seed;
                return atv_prs(fld_p, acfg).score;
            }
            case StatKind::ks:
                return ks_statistic(fld_p);
            case StatKind::kuiper:
                return kuiper_statistic(fld_p, L);
            case StatKind::chi2:
                return chi2_statistic(fld_q, L);
            case StatKind::cvm: {
                double acc = 0.0;
                for (double z : z_atoms) acc += z * z;
                return acc / static_cast<double>(z_atoms.size());
            }
        }
        return 0.0;
    };

    // Observed pass.
    GridField obs_p{p, d, obs_kind, std::vector<double>(cn_p.values.size())};
    for (std::size_t i = 0; i < obs_p.values.size(); ++i)
        obs_p.values[i] = rn * (cn_p.values[i] - c0_p[i]);
    GridField obs_q;
    if (need_chi2) {
        obs_q = GridField{static_cast<std::size_t>(q), d, obs_kind,
                          std::vector<double>(cn_q.values.size())};
        for (std::size_t i = 0; i < obs_q.values.size(); ++i)
            obs_q.values[i] = rn * (cn_q.values[i] - c0_q[i]);
    }
    std::vector<double> obs_atoms;
    if (need_cvm) {
        const auto counts = dominance_counts(pobs, pobs);
        obs_atoms.resize(n);
        std::vector<double> pt(d);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j) pt[j] = pobs.value(i, j);
            obs_atoms[i] =
                rn * (static_cast<double>(counts[i]) / static_cast<double>(n) - null_cdf(pt));
        }
    }
    std::vector<double> observed(kinds.size());
    for (std::size_t ki = 0; ki < kinds.size(); ++ki)
        observed[ki] =
            eval_kind(kinds[ki], obs_p, obs_q, obs_atoms, derive_seed(cfg.seed, 0, kPrsStream));

    // Bootstrap replicates.
    const int B = cfg.B;
    std::vector<std::vector<double>> repl(kinds.size(), std::vector<double>(B, 0.0));
    std::vector<char> failed(B, 0);
    std::vector<double> theta_stars(has_param ? B : 0, 0.0);

    auto run_replicate = [&](int b) {
        Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(b)));
        const Sample res = bootstrap_resample(sample, rng);
        const auto rpo = pseudo_observations(res);

        std::optional<CopulaModel> refit;
        if (composite) {
            try {
                refit = fit_copula(comp.family, comp.estimator, rpo.as_sample(),
                                   has_param ? std::optional<double>(fitted->theta())
                                             : std::nullopt);
            } catch (const EstimationError&) {
                failed[b - 1] = 1;
                return;
            }
            if (has_param) theta_stars[b - 1] = refit->theta();
        }

        std::vector<double> star_p, star_q;
        if (has_param) {
            star_p = lattice_eval(model_cdf(*refit), p, d);
            if (need_chi2) star_q = lattice_eval(model_cdf(*refit), static_cast<std::size_t>(q), d);
        }

        GridField f = empirical_copula_grid(rpo, p);
        f.kind = boot_kind;
        for (std::size_t i = 0; i < f.values.size(); ++i) {
            f.values[i] = rn * (f.values[i] - cn_p.values[i]);
            if (has_param) f.values[i] -= rn * (star_p[i] - c0_p[i]);
        }
        GridField fq;
        if (need_chi2) {
            fq = empirical_copula_grid(rpo, static_cast<std::size_t>(q));
            fq.kind = boot_kind;
            for (std::size_t i = 0; i < fq.values.size(); ++i) {
                fq.values[i] = rn * (fq.values[i] - cn_q.values[i]);
                if (has_param) fq.values[i] -= rn * (star_q[i] - c0_q[i]);
            }
        }
        std::vector<double> z_atoms;
        if (need_cvm) {
            const auto cstar_at = dominance_counts(rpo, rpo);
            const auto cn_at = dominance_counts(pobs, rpo);
            z_atoms.resize(n);
            std::vector<double> pt(d);
            for (std::size_t i = 0; i < n; ++i) {
                z_atoms[i] = rn * (static_cast<double>(cstar_at[i]) - static_cast<double>(cn_at[i])) /
                             static_cast<double>(n);
                if (has_param) {
                    for (std::size_t j = 0; j < d; ++j) pt[j] = rpo.value(i, j);
                    z_atoms[i] -= rn * (copula_cdf(*refit, pt) - copula_cdf(*fitted, pt));
                }
            }
        }
        const std::uint64_t prs_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(b), kPrsStream);
        for (std::size_t ki = 0; ki < kinds.size(); ++ki)
            repl[ki][b - 1] = eval_kind(kinds[ki], f, fq, z_atoms, prs_seed);
    };

    if (cfg.workers <= 1 || B == 1) {
        for (int b = 1; b <= B; ++b) run_replicate(b);
    } else {
        std::atomic<int> next{1};
        std::exception_ptr error;
        std::mutex error_mutex;
        auto worker = [&]() {
            for (;;) {
                const int b = next.fetch_add(1);
                if (b > B) return;
                try {
                    run_replicate(b);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        };
        std::vector<std::thread> threads;
        const int count = std::min(cfg.workers, B);
        threads.reserve(count);
        for (int t = 0; t < count; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
        if (error) std::rethrow_exception(error);
    }

    std::size_t nfail = 0;
    for (char c : failed) nfail += c;
    if (nfail * 100 > static_cast<std::size_t>(B))
        throw EstimationError("bootstrap refit instability: " + std::to_string(nfail) + " of " +
                              std::to_string(B) + " replicates failed");

    std::optional<ThetaStarSummary> star_summary;
    if (has_param) {
        ThetaStarSummary s;
        s.min = std::numeric_limits<double>::infinity();
        s.max = -s.min;
        double acc = 0.0;
        for (int b = 1; b <= B; ++b) {
            if (failed[b - 1]) continue;
            const double th = theta_stars[b - 1];
            ++s.count;
            acc += th;
            s.min = std::min(s.min, th);
            s.max = std::max(s.max, th);
        }
        s.mean = acc / static_cast<double>(s.count);
        double ss = 0.0;
        for (int b = 1; b <= B; ++b) {
            if (failed[b - 1]) continue;
            ss += (theta_stars[b - 1] - s.mean) * (theta_stars[b - 1] - s.mean);
        }
        s.sd = s.count > 1 ? std::sqrt(ss / static_cast<double>(s.count - 1)) : 0.0;
        star_summary = s;
    }

    std::vector<TestResult> results;
    results.reserve(kinds.size());
    for (std::size_t ki = 0; ki < kinds.size(); ++ki) {
        TestResult r;
        r.statistic_kind = kinds[ki];
        r.statistic = observed[ki];
        r.replicates.reserve(B - nfail);
        for (int b = 1; b <= B; ++b)
            if (!failed[b - 1]) r.replicates.push_back(repl[ki][b - 1]);
        r.p_value = bootstrap_p_value(r.replicates, r.statistic);
        r.critical_value = critical_value(r.replicates, cfg.alpha, cfg.epsilon);
        r.reject = r.statistic > r.critical_value;
        if (has_param) r.theta_hat = fitted->theta();
        r.theta_star_summary = star_summary;
        r.failed_replicates = nfail;
        r.seed = cfg.seed;
        r.alpha = cfg.alpha;
        r.epsilon = cfg.epsilon;
        r.B = B;
        r.L = L;
        r.grid_p = p;
        r.n = n;
        r.d = d;
        results.push_back(std::move(r));
    }
    return results;
}

// Simple null H0: C = C0.
inline TestResult gof_test_simple(const Sample& sample, const CopulaModel& null,
                                  const TestConfig& cfg) {
    const StatKind kind[1] = {cfg.statistic};
    return std::move(run_gof(sample, NullSpec(SimpleModelNull{null}), cfg, kind).front());
}

inline TestResult gof_test_simple(const Sample& sample, const CdfFn& null, const TestConfig& cfg) {
    const StatKind kind[1] = {cfg.statistic};
    return std::move(run_gof(sample, NullSpec(SimpleCdfNull{null}), cfg, kind).front());
}

// Composite null H0: C in {C_theta}. theta_hat is fitted once on the sample;
// each replicate refits theta_hat* on the resample pseudo-observations (the
// parametric bootstrap is never used).
inline TestResult gof_test_composite(const Sample& sample, Family family, EstimatorKind estimator,
                                     const TestConfig& cfg) {
    const StatKind kind[1] = {cfg.statistic};
    return std::move(run_gof(sample, NullSpec(CompositeNull{family, estimator}), cfg, kind).front());
}

// --- serialization -------------------------------------------------------------

inline nlohmann::json test_result_to_json(const TestResult& r, bool full = false) {
    nlohmann::json j{
        {"statistic_kind", stat_name(r.statistic_kind)},
        {"statistic", r.statistic},
        {"p_value", r.p_value},
        {"critical_value", r.critical_value},
        {"reject", r.reject},
        {"alpha", r.alpha},
        {"epsilon", r.epsilon},
        {"B", r.B},
        {"L", r.L},
        {"seed", r.seed},
        {"n", r.n},
        {"d", r.d},
    };
    if (r.theta_hat) j["theta_hat"] = *r.theta_hat;
    if (r.failed_replicates > 0) j["failed_replicates"] = r.failed_replicates;
    if (full) {
        j["replicates"] = r.replicates;
        if (r.theta_star_summary) {
            j["theta_star_summary"] = {{"count", r.theta_star_summary->count},
                                       {"mean", r.theta_star_summary->mean},
                                       {"sd", r.theta_star_summary->sd},
                                       {"min", r.theta_star_summary->min},
                                       {"max", r.theta_star_summary->max}};
        }
    }
    return j;
}

}  // namespace atv
