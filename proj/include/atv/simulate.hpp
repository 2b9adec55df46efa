#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "atv/bootstrap.hpp"
#include "atv/copula.hpp"
#include "atv/rng.hpp"

namespace atv {

// --- data generators -----------------------------------------------------------

// W_0 = 0, W_i = Z_i (1 + 0.6 W_{i-1}^2)^{1/2} with Z_i iid standard normal;
// returns W_0..W_{steps-1}.
inline std::vector<double> gen_arch_path(std::size_t steps, Rng& rng) {
    std::vector<double> w(steps, 0.0);
    for (std::size_t i = 1; i < steps; ++i)
        w[i] = rng.normal() * std::sqrt(1.0 + 0.6 * w[i - 1] * w[i - 1]);
    return w;
}

// Bivariate ARCH-like pairs (X_i, Y_i) = (W_{100 i}, W_{100 i + 1}), i = 1..n:
// adjacent steps are strongly dependent, pairs 100 steps apart are nearly
// independent.
inline Sample gen_arch(std::size_t n, Rng& rng) {
    if (n < 1) throw std::invalid_argument("gen_arch: need n >= 1");
    const std::vector<double> w = gen_arch_path(100 * n + 2, rng);
    std::vector<double> data(n * 2);
    for (std::size_t i = 1; i <= n; ++i) {
        data[2 * (i - 1)] = w[100 * i];
        data[2 * (i - 1) + 1] = w[100 * i + 1];
    }
    return Sample(n, 2, std::move(data));
}

// Mixture copula rows: flip a coin with P(keep) = keep_prob, draw (U,V) from
// Frank with Kendall tau 0.4, emit (U,V) or the reflection (1-U,V). The fair
// coin gives the asymmetric half-and-half mixture; keep_prob 1 or 0 selects a
// pure component.
inline Sample gen_mixture(std::size_t n, Rng& rng, double keep_prob = 0.5) {
    if (n < 1) throw std::invalid_argument("gen_mixture: need n >= 1");
    const CopulaModel frank(Family::frank, tau_to_theta(Family::frank, 0.4));
    std::vector<double> data(n * 2);
    for (std::size_t i = 0; i < n; ++i) {
        const bool keep = rng.uniform01() < keep_prob;
        const double u = rng.uniform_open01();
        const double w = rng.uniform_open01();
        const double v = detail::conditional_inverse(frank, u, w);
        data[2 * i] = keep ? u : 1.0 - u;
        data[2 * i + 1] = v;
    }
    return Sample(n, 2, std::move(data));
}

// Parametric copula data at a requested Kendall tau.
inline Sample gen_copula(Family family, double tau, std::size_t n, Rng& rng) {
    if (family == Family::independence || tau == 0.0)
        return sample_copula(CopulaModel::independence(), n, rng);
    return sample_copula(CopulaModel(family, tau_to_theta(family, tau)), n, rng);
}

struct ArchGenerator {};
struct MixtureGenerator {};
struct CopulaGenerator {
    Family family;
    double tau;
};
using GeneratorSpec = std::variant<ArchGenerator, MixtureGenerator, CopulaGenerator>;

inline Sample generate(const GeneratorSpec& gen, std::size_t n, Rng& rng) {
    if (std::holds_alternative<ArchGenerator>(gen)) return gen_arch(n, rng);
    if (std::holds_alternative<MixtureGenerator>(gen)) return gen_mixture(n, rng);
    const auto& c = std::get<CopulaGenerator>(gen);
    return gen_copula(c.family, c.tau, n, rng);
}

// --- study harness ---------------------------------------------------------------

// One table cell family: a generator, a null specification, the sample size,
// the number of Monte Carlo repetitions, and the per-test configuration.
struct Scenario {
    std::string name;  // echoed in reports
    GeneratorSpec generator;
    NullSpec null_spec;
    std::size_t n = 400;
    int reps = 100;
    TestConfig config;                // config.workers drives the rep pool
    std::vector<StatKind> statistics = {StatKind::atv};
};

struct StudyStatLine {
    StatKind kind = StatKind::atv;
    int rejections = 0;
    int completed = 0;
    double frequency = 0.0;  // rejections / completed at the configured alpha
};

struct StudyReport {
    std::string scenario;
    std::size_t n = 0;
    int reps = 0;
    int aborted = 0;
    int B = 0;
    double alpha = 0.05;
    double epsilon = 0.0;
    std::uint64_t seed = 0;
    std::vector<StudyStatLine> per_statistic;
    std::vector<std::vector<double>> p_values;  // per statistic, per completed rep
    double elapsed_seconds = 0.0;
};

// Runs `reps` independent datasets through the requested statistics. Within a
// repetition every statistic shares the dataset, the resample index stream
// and the search seeds. Each repetition draws its streams from (master seed,
// rep index), so the report does not depend on the worker count. Repetitions
// whose test aborts (composite refit instability) are counted; more than 5%
// of them aborts the study.
inline StudyReport run_study(const Scenario& scenario) {
    if (scenario.reps < 1) throw ConfigError("run_study: reps must be >= 1");
    if (scenario.statistics.empty()) throw ConfigError("run_study: no statistics requested");
    scenario.config.validate();
    const auto t0 = std::chrono::steady_clock::now();

    const int reps = scenario.reps;
    const std::size_t nstats = scenario.statistics.size();
    std::vector<std::vector<double>> pvals(nstats, std::vector<double>(reps, -1.0));
    std::vector<char> aborted(reps, 0);

    auto run_rep = [&](int r) {
        Rng data_rng(derive_seed(scenario.config.seed, kDataStream, static_cast<std::uint64_t>(r)));
        const Sample data = generate(scenario.generator, scenario.n, data_rng);
        TestConfig cfg = scenario.config;
        cfg.seed = derive_seed(scenario.config.seed, kTestStream, static_cast<std::uint64_t>(r));
        cfg.workers = 1;  // parallelism lives at the rep level
        try {
            const auto results = run_gof(data, scenario.null_spec, cfg, scenario.statistics);
            for (std::size_t ki = 0; ki < nstats; ++ki) pvals[ki][r] = results[ki].p_value;
        } catch (const EstimationError&) {
            aborted[r] = 1;
        }
    };

    const int workers = std::min(scenario.config.workers, reps);
    if (workers <= 1) {
        for (int r = 0; r < reps; ++r) run_rep(r);
    } else {
        std::atomic<int> next{0};
        std::exception_ptr error;
        std::mutex error_mutex;
        auto worker = [&]() {
            for (;;) {
                const int r = next.fetch_add(1);
                if (r >= reps) return;
                try {
                    run_rep(r);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        };
        std::vector<std::thread> threads;
        threads.reserve(workers);
        for (int t = 0; t < workers; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
        if (error) std::rethrow_exception(error);
    }

    int nabort = 0;
    for (char c : aborted) nabort += c;
    if (nabort * 20 > reps)
        throw EstimationError("run_study: " + std::to_string(nabort) + " of " +
                              std::to_string(reps) + " repetitions aborted");

    StudyReport report;
    report.scenario = scenario.name;
    report.n = scenario.n;
    report.reps = reps;
    report.aborted = nabort;
    report.B = scenario.config.B;
    report.alpha = scenario.config.alpha;
    report.epsilon = scenario.config.epsilon;
    report.seed = scenario.config.seed;
    for (std::size_t ki = 0; ki < nstats; ++ki) {
        StudyStatLine line;
        line.kind = scenario.statistics[ki];
        std::vector<double> kept;
        kept.reserve(reps);
        for (int r = 0; r < reps; ++r) {
            if (aborted[r]) continue;
            kept.push_back(pvals[ki][r]);
            line.rejections += pvals[ki][r] < scenario.config.alpha;
        }
        line.completed = static_cast<int>(kept.size());
        line.frequency =
            line.completed > 0 ? static_cast<double>(line.rejections) / line.completed : 0.0;
        report.per_statistic.push_back(line);
        report.p_values.push_back(std::move(kept));
    }
    report.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

// --- report serialization ---------------------------------------------------------

// Machine format. Elapsed time is deliberately omitted so identical seeds
// produce identical bytes; callers report timing separately.
inline nlohmann::json study_report_to_json(const StudyReport& r) {
    nlohmann::json stats = nlohmann::json::array();
    for (const auto& line : r.per_statistic) {
        stats.push_back({{"kind", stat_name(line.kind)},
                         {"rejections", line.rejections},
                         {"completed", line.completed},
                         {"frequency", line.frequency}});
    }
    return nlohmann::json{{"scenario", r.scenario}, {"n", r.n},
                          {"reps", r.reps},         {"aborted_reps", r.aborted},
                          {"B", r.B},               {"alpha", r.alpha},
                          {"epsilon", r.epsilon},   {"seed", r.seed},
                          {"statistics", stats}};
}

// Aligned plain-text table, one row per statistic.
inline std::string study_report_table(const StudyReport& r) {
    std::ostringstream os;
    os << "scenario " << r.scenario << "  n=" << r.n << "  reps=" << r.reps << "  B=" << r.B
       << "  alpha=" << r.alpha << "\n";
    os << std::left << std::setw(10) << "type" << std::right << std::setw(12) << "rejected"
       << "\n";
    for (const auto& line : r.per_statistic) {
        std::ostringstream cell;
        cell << std::fixed << std::setprecision(0) << 100.0 * line.frequency << "%";
        os << std::left << std::setw(10) << stat_name(line.kind) << std::right << std::setw(12)
           << cell.str() << "\n";
    }
    if (r.aborted > 0) os << "aborted reps: " << r.aborted << "\n";
    return os.str();
}

}  // namespace atv
