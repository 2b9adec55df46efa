// Acceptance suite: every project-level requirement is exercised at its
// stated tolerance and reported on one pass/fail line. Exit code 0 iff all
// criteria pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "atv/bootstrap.hpp"
#include "atv/simulate.hpp"
#include "atv/statistics.hpp"

using namespace atv;

namespace {

int g_failures = 0;

void report(int idx, bool pass, const std::string& name, const std::string& detail) {
    std::printf("[%s] criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", idx, name.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int study_workers() {
    const unsigned hw = std::thread::hardware_concurrency();
    return static_cast<int>(std::min(4u, hw == 0 ? 1u : hw));
}

GridField random_process_field(std::size_t p, std::uint64_t seed) {
    GridField f{p, 2, FieldKind::simple_process, std::vector<double>((p + 1) * (p + 1), 0.0)};
    Rng rng(seed);
    for (std::size_t i = 1; i <= p; ++i)
        for (std::size_t j = 1; j <= p; ++j) f.values[i * (p + 1) + j] = 2.0 * rng.uniform01() - 1.0;
    f.values[p * (p + 1) + p] = 0.0;
    return f;
}

Sample uniform_sample(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    return sample_copula(CopulaModel::independence(), n, rng);
}

// --- criterion 1: PRS vs exhaustive oracle ------------------------------------

void criterion_1() {
    const auto t0 = std::chrono::steady_clock::now();
    int equal = 0, total = 0, l1_equal = 0, l1_total = 0;
    bool bounded = true;
    for (int t = 0; t < 200; ++t) {
        const std::size_t p = 2 + t % 3;
        const int L = 1 + (t / 3) % 2;
        const auto field = random_process_field(p, 1000 + t);
        const std::size_t s = p * (p + 1) / 2;
        const std::size_t boxes = s * s;
        AtvConfig cfg;
        cfg.L = L;
        cfg.m = boxes;
        cfg.K = static_cast<long>(10.0 * boxes * (boxes - 1) / 2.0);
        cfg.seed = 77 + t;
        const double prs = atv_prs(field, cfg).score;
        const double exact = atv_exact(field, L).score;
        bounded = bounded && prs <= exact + 1e-12;
        ++total;
        equal += std::abs(prs - exact) <= 1e-9;
        if (L == 1) {
            ++l1_total;
            l1_equal += std::abs(prs - exact) <= 1e-12;
        }
    }
    const double elapsed = seconds_since(t0);
    const bool pass =
        bounded && equal >= total * 99 / 100 && l1_equal == l1_total && elapsed < 10.0;
    char detail[160];
    std::snprintf(detail, sizeof(detail),
                  "prs<=exact %s, equal %d/%d, L=1 equal %d/%d, %.1f s", bounded ? "yes" : "NO",
                  equal, total, l1_equal, l1_total, elapsed);
    report(1, pass, "ATV search vs exhaustive oracle", detail);
}

// --- criterion 2: level of the composite test ----------------------------------

void criterion_2() {
    Scenario sc;
    sc.name = "frank-frank";
    sc.generator = CopulaGenerator{Family::frank, 0.4};
    sc.null_spec = CompositeNull{Family::frank, EstimatorKind::pseudo_ml};
    sc.n = 400;
    sc.reps = 100;
    sc.config.B = 200;
    sc.config.seed = 20260401;
    sc.config.workers = study_workers();
    sc.statistics = {StatKind::atv};
    const auto rep = run_study(sc);
    const double freq = rep.per_statistic[0].frequency;
    const bool pass = freq <= 0.10 && rep.elapsed_seconds < 900.0;
    char detail[120];
    std::snprintf(detail, sizeof(detail), "ATV rejection %.3f (need <= 0.10), %.0f s", freq,
                  rep.elapsed_seconds);
    report(2, pass, "Frank-Frank composite level at n=400", detail);
}

// --- criterion 3: power ordering on complex pairings ----------------------------

void criterion_3() {
    Scenario arch;
    arch.name = "arch-s";
    arch.generator = ArchGenerator{};
    arch.null_spec = SimpleModelNull{CopulaModel::independence()};
    arch.n = 800;
    arch.reps = 50;
    arch.config.B = 200;
    arch.config.seed = 20260402;
    arch.config.workers = study_workers();
    arch.statistics = {StatKind::atv, StatKind::ks, StatKind::cvm};
    const auto arch_rep = run_study(arch);
    const double atv_f = arch_rep.per_statistic[0].frequency;
    const double ks_f = arch_rep.per_statistic[1].frequency;
    const double cvm_f = arch_rep.per_statistic[2].frequency;

    Scenario mix = arch;
    mix.name = "mixture-s";
    mix.generator = MixtureGenerator{};
    mix.config.seed = 20260403;
    mix.statistics = {StatKind::atv};
    const auto mix_rep = run_study(mix);
    const double mix_f = mix_rep.per_statistic[0].frequency;

    const bool pass = atv_f >= 0.80 && atv_f > ks_f && atv_f > cvm_f && mix_f >= 0.70;
    char detail[200];
    std::snprintf(detail, sizeof(detail),
                  "ARCH-S: atv %.2f ks %.2f cvm %.2f; Mixture-S: atv %.2f; %.0f s", atv_f, ks_f,
                  cvm_f, mix_f, arch_rep.elapsed_seconds + mix_rep.elapsed_seconds);
    report(3, pass, "power ordering at n=800", detail);
}

// --- criterion 4: trivial pairing sanity ----------------------------------------

void criterion_4() {
    Scenario sc;
    sc.name = "clayton-gumbel";
    sc.generator = CopulaGenerator{Family::clayton, 0.4};
    sc.null_spec = CompositeNull{Family::gumbel, EstimatorKind::pseudo_ml};
    sc.n = 400;
    sc.reps = 50;
    sc.config.B = 200;
    sc.config.seed = 20260404;
    sc.config.workers = study_workers();
    sc.statistics = {StatKind::atv, StatKind::ks, StatKind::cvm};
    const auto rep = run_study(sc);
    const double atv_f = rep.per_statistic[0].frequency;
    const double ks_f = rep.per_statistic[1].frequency;
    const double cvm_f = rep.per_statistic[2].frequency;
    const bool pass = atv_f >= 0.70 && ks_f >= 0.70 && cvm_f >= 0.70;
    char detail[160];
    std::snprintf(detail, sizeof(detail), "atv %.2f ks %.2f cvm %.2f (all need >= 0.70), %.0f s",
                  atv_f, ks_f, cvm_f, rep.elapsed_seconds);
    report(4, pass, "Clayton data vs Gumbel null at n=400", detail);
}

// --- criterion 5: rank invariance ------------------------------------------------

void criterion_5() {
    const auto t0 = std::chrono::steady_clock::now();
    using Fn = double (*)(double);
    const Fn transforms[5][2] = {
        {[](double x) { return std::exp(x); }, [](double x) { return 2.0 * x + 1.0; }},
        {[](double x) { return x * x * x; }, [](double x) { return std::tan(x); }},
        {[](double x) { return -1.0 / x; }, [](double x) { return std::log(x + 1.0); }},
        {[](double x) { return std::atan(x); }, [](double x) { return std::exp(3.0 * x); }},
        {[](double x) { return x / (2.0 - x); }, [](double x) { return std::sqrt(x); }},
    };

    auto all_statistics = [](const Sample& s) {
        const std::size_t p = default_grid_resolution(s.rows(), 2);
        const int L = box_count_rule(s.rows());
        const auto field = grid_simple(s, CopulaModel::independence(), p);
        AtvConfig cfg;
        cfg.L = L;
        cfg.m = s.rows();
        cfg.K = 2000;
        cfg.seed = 5;
        const int q = chi2_partition_resolution(L, 2);
        const auto field_q = grid_simple(s, CopulaModel::independence(), q);
        return std::vector<double>{atv_prs(field, cfg).score, ks_statistic(field),
                                   cvm_statistic(s, CopulaModel::independence()),
                                   chi2_statistic(field_q, L), kuiper_statistic(field, L)};
    };

    bool identical = true;
    for (int t = 0; t < 50 && identical; ++t) {
        const auto s = uniform_sample(60, 3000 + t);
        const auto base = all_statistics(s);
        for (const auto& tr : transforms) {
            std::vector<double> data(s.rows() * 2);
            for (std::size_t i = 0; i < s.rows(); ++i) {
                data[2 * i] = tr[0](s(i, 0));
                data[2 * i + 1] = tr[1](s(i, 1));
            }
            const auto mapped = all_statistics(Sample(s.rows(), 2, std::move(data)));
            identical = identical && mapped == base;
        }
    }
    const double elapsed = seconds_since(t0);
    const bool pass = identical && elapsed < 1.0;
    char detail[120];
    std::snprintf(detail, sizeof(detail), "bit-identical %s over 50x5 transforms, %.2f s",
                  identical ? "yes" : "NO", elapsed);
    report(5, pass, "rank invariance of all statistics", detail);
}

// --- criterion 6: process invariant suite ----------------------------------------

void criterion_6() {
    bool grounding = true, partition = true, split = true, disjoint = true;

    for (int t = 0; t < 10; ++t) {
        const auto s = uniform_sample(100, 4000 + t);
        const std::size_t p = 10;
        const auto field = grid_simple(s, CopulaModel::independence(), p);
        for (std::size_t i = 0; i <= p; ++i) {
            grounding = grounding && field.at2(0, i) == 0.0 && field.at2(i, 0) == 0.0;
        }
        grounding = grounding && field.at2(p, p) == 0.0;

        const auto cop = empirical_copula_grid(pseudo_observations(s), p);
        double sum_proc = 0.0, sum_cop = 0.0;
        for (int i = 0; i < static_cast<int>(p); ++i) {
            for (int j = 0; j < static_cast<int>(p); ++j) {
                sum_proc += box_measure(field, Box{{i, j}, {i + 1, j + 1}});
                sum_cop += box_measure(cop, Box{{i, j}, {i + 1, j + 1}});
            }
        }
        partition = partition && std::abs(sum_proc) <= 1e-10 && std::abs(sum_cop - 1.0) <= 1e-10;
    }

    {
        const auto s = uniform_sample(144, 4100);
        const std::size_t p = 12;
        const auto field = grid_simple(s, CopulaModel::independence(), p);
        Rng rng(4200);
        for (int t = 0; t < 1000 && split; ++t) {
            const int a0 = static_cast<int>(rng.uniform_below(p - 1));
            const int b0 = a0 + 2 + static_cast<int>(rng.uniform_below(p - a0 - 1));
            const int a1 = static_cast<int>(rng.uniform_below(p));
            const int b1 = a1 + 1 + static_cast<int>(rng.uniform_below(p - a1));
            const int cut = a0 + 1 + static_cast<int>(rng.uniform_below(b0 - a0 - 1));
            const double whole = box_measure(field, Box{{a0, a1}, {b0, b1}});
            const double parts = box_measure(field, Box{{a0, a1}, {cut, b1}}) +
                                 box_measure(field, Box{{cut, a1}, {b0, b1}});
            split = split && std::abs(whole - parts) <= 1e-10;
        }
    }

    for (int t = 0; t < 20; ++t) {
        const auto field = random_process_field(6, 4300 + t);
        AtvConfig cfg;
        cfg.L = 3;
        cfg.m = 100;
        cfg.K = 200;
        cfg.seed = t;
        const auto fam = atv_prs(field, cfg);
        for (std::size_t a = 0; a < fam.boxes.size(); ++a)
            for (std::size_t b = a + 1; b < fam.boxes.size(); ++b)
                disjoint = disjoint && boxes_disjoint(fam.boxes[a], fam.boxes[b]);
    }

    const bool pass = grounding && partition && split && disjoint;
    char detail[160];
    std::snprintf(detail, sizeof(detail), "grounding %s, partition %s, split %s, disjoint %s",
                  grounding ? "ok" : "NO", partition ? "ok" : "NO", split ? "ok" : "NO",
                  disjoint ? "ok" : "NO");
    report(6, pass, "process invariant suite", detail);
}

// --- criterion 7: estimator consistency -------------------------------------------

void criterion_7() {
    struct Case {
        Family family;
        double theta0;
        const char* label;
    };
    const Case cases[3] = {{Family::clayton, 2.0, "clayton2"},
                           {Family::gumbel, 2.0, "gumbel2"},
                           {Family::frank, tau_to_theta(Family::frank, 0.4), "frank.4"}};
    const int runs = 16;
    const std::size_t n = 10000;

    bool pass = true;
    std::string detail;
    for (const auto& c : cases) {
        std::vector<Sample> datasets;
        datasets.reserve(runs);
        for (int r = 0; r < runs; ++r) {
            Rng rng(derive_seed(20260407, std::hash<std::string>{}(c.label) + r));
            datasets.push_back(sample_copula(CopulaModel(c.family, c.theta0), n, rng));
        }
        for (EstimatorKind est : {EstimatorKind::tau_inversion, EstimatorKind::pseudo_ml}) {
            std::vector<double> est_values;
            for (const auto& d : datasets) {
                est_values.push_back(
                    fit_copula(c.family, est, pseudo_observations(d).as_sample()).theta());
            }
            double mean = 0.0;
            for (double e : est_values) mean += e;
            mean /= runs;
            double var = 0.0;
            for (double e : est_values) var += (e - mean) * (e - mean);
            const double se = std::sqrt(var / (runs - 1)) / std::sqrt(static_cast<double>(runs));
            const bool ok = std::abs(mean - c.theta0) <= 3.0 * se;
            pass = pass && ok;
            char buf[80];
            std::snprintf(buf, sizeof(buf), "%s/%s |bias|=%.4f 3se=%.4f%s ", c.label,
                          estimator_name(est), std::abs(mean - c.theta0), 3.0 * se,
                          ok ? "" : " NO");
            detail += buf;
        }
    }
    report(7, pass, "estimator consistency at n=1e4", detail);
}

// --- criterion 8: bootstrap level under a true simple null -------------------------

void criterion_8() {
    Scenario sc;
    sc.name = "true-null";
    sc.generator = CopulaGenerator{Family::independence, 0.0};
    sc.null_spec = SimpleModelNull{CopulaModel::independence()};
    sc.n = 200;
    sc.reps = 500;
    sc.config.B = 200;
    sc.config.seed = 20260408;
    sc.config.workers = study_workers();
    sc.statistics = {StatKind::atv};
    const auto rep = run_study(sc);
    const double freq = rep.per_statistic[0].frequency;
    const bool pass = freq >= 0.01 && freq <= 0.09;
    char detail[120];
    std::snprintf(detail, sizeof(detail), "rejection rate %.3f over 500 runs (need [0.01,0.09]), %.0f s",
                  freq, rep.elapsed_seconds);
    report(8, pass, "ATV level under a true simple null", detail);
}

// --- criterion 9: performance budget ------------------------------------------------

void criterion_9() {
    Rng rng(20260409);
    const Sample data = gen_arch(800, rng);

    const auto t0 = std::chrono::steady_clock::now();
    const auto field = grid_simple(data, CopulaModel::independence(), 28);
    AtvConfig acfg;
    acfg.L = box_count_rule(800);
    acfg.m = 800;
    acfg.K = 10000;
    acfg.seed = 1;
    const double stat = atv_prs(field, acfg).score;
    const double stat_time = seconds_since(t0);

    TestConfig cfg;
    cfg.B = 1000;
    cfg.seed = 2;
    cfg.workers = 1;
    cfg.statistic = StatKind::atv;
    const auto t1 = std::chrono::steady_clock::now();
    const auto r = gof_test_simple(data, CopulaModel::independence(), cfg);
    const double test_time = seconds_since(t1);

    const bool pass = stat_time < 0.1 && test_time < 60.0 && stat > 0.0 && r.B == 1000;
    char detail[160];
    std::snprintf(detail, sizeof(detail),
                  "statistic-only %.3f s (need < 0.1), full test B=1000 %.1f s (need < 60)",
                  stat_time, test_time);
    report(9, pass, "performance budget at n=800", detail);
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
    auto wanted = [&](int k) { return selected.empty() || selected.count(k) > 0; };

    if (wanted(1)) criterion_1();
    if (wanted(2)) criterion_2();
    if (wanted(3)) criterion_3();
    if (wanted(4)) criterion_4();
    if (wanted(5)) criterion_5();
    if (wanted(6)) criterion_6();
    if (wanted(7)) criterion_7();
    if (wanted(8)) criterion_8();
    if (wanted(9)) criterion_9();

    if (g_failures == 0) {
        std::printf("acceptance: all criteria passed\n");
        return 0;
    }
    std::printf("acceptance: %d criterion(s) failed\n", g_failures);
    return 1;
}
