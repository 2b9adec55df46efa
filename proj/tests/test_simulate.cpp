#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "atv/simulate.hpp"

using namespace atv;
using Catch::Approx;

TEST_CASE("arch recursion") {
    SECTION("base step: W1 equals the first normal draw") {
        Rng a(5), b(5);
        const auto path = gen_arch_path(10, a);
        REQUIRE(path[0] == 0.0);
        REQUIRE(path[1] == b.normal());  // W1 = Z1 since W0 = 0
    }

    SECTION("lag-100 extraction") {
        Rng a(6), b(6);
        const auto sample = gen_arch(5, a);
        const auto path = gen_arch_path(502, b);
        for (std::size_t i = 1; i <= 5; ++i) {
            REQUIRE(sample(i - 1, 0) == path[100 * i]);
            REQUIRE(sample(i - 1, 1) == path[100 * i + 1]);
        }
    }

    SECTION("sample mean vanishes by symmetry") {
        Rng rng(7);
        const auto s = gen_arch(100000, rng);
        double mean = 0.0;
        for (std::size_t i = 0; i < s.rows(); ++i) mean += s(i, 0);
        mean /= static_cast<double>(s.rows());
        REQUIRE(std::abs(mean) < 0.02);
    }
}

TEST_CASE("mixture generator") {
    const std::size_t n = 100000;

    SECTION("both margins are uniform") {
        Rng rng(8);
        const auto s = gen_mixture(n, rng);
        for (std::size_t j = 0; j < 2; ++j) {
            std::vector<double> col(n);
            for (std::size_t i = 0; i < n; ++i) col[i] = s(i, j);
            std::sort(col.begin(), col.end());
            double sup = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                sup = std::max(sup, std::abs(col[i] - (i + 1.0) / n));
            }
            REQUIRE(sup <= 1.5 / std::sqrt(static_cast<double>(n)));
        }
    }

    SECTION("reflection cancels the concordance") {
        Rng rng(9);
        const auto s = gen_mixture(n, rng);
        REQUIRE(std::abs(empirical_tau(s)) < 0.02);
    }

    SECTION("degenerate coin selects a pure component") {
        Rng heads(10), tails(10);
        const auto pure = gen_mixture(20000, heads, 1.0);
        const auto reflected = gen_mixture(20000, tails, 0.0);
        REQUIRE(empirical_tau(pure) == Approx(0.4).margin(0.03));
        REQUIRE(empirical_tau(reflected) == Approx(-0.4).margin(0.03));
    }
}

TEST_CASE("copula generator hits the requested tau") {
    Rng rng(11);
    const auto s = gen_copula(Family::gumbel, 0.4, 100000, rng);
    REQUIRE(empirical_tau(s) == Approx(0.4).margin(0.02));

    Rng rng2(12);
    const auto ind = gen_copula(Family::independence, 0.0, 10000, rng2);
    REQUIRE(std::abs(empirical_tau(ind)) < 0.05);
}

namespace {

Scenario small_scenario(std::vector<StatKind> stats, int reps, int workers) {
    Scenario sc;
    sc.name = "clayton-frank";
    sc.generator = CopulaGenerator{Family::clayton, 0.4};
    sc.null_spec = CompositeNull{Family::frank, EstimatorKind::tau_inversion};
    sc.n = 64;
    sc.reps = reps;
    sc.config.B = 25;
    sc.config.seed = 99;
    sc.config.workers = workers;
    sc.statistics = std::move(stats);
    return sc;
}

}  // namespace

TEST_CASE("study harness") {
    SECTION("single repetition gives a zero-one frequency") {
        const auto rep = run_study(small_scenario({StatKind::ks}, 1, 1));
        REQUIRE(rep.reps == 1);
        REQUIRE((rep.per_statistic[0].frequency == 0.0 || rep.per_statistic[0].frequency == 1.0));
    }

    SECTION("statistics share datasets and resample streams") {
        const auto alone = run_study(small_scenario({StatKind::ks}, 6, 1));
        const auto together = run_study(small_scenario({StatKind::atv, StatKind::ks}, 6, 1));
        REQUIRE(together.per_statistic[1].kind == StatKind::ks);
        REQUIRE(alone.p_values[0] == together.p_values[1]);
        REQUIRE(alone.per_statistic[0].frequency == together.per_statistic[1].frequency);
    }

    SECTION("worker count does not change the report") {
        const auto serial = run_study(small_scenario({StatKind::atv, StatKind::cvm}, 6, 1));
        const auto parallel = run_study(small_scenario({StatKind::atv, StatKind::cvm}, 6, 3));
        REQUIRE(serial.p_values == parallel.p_values);
        for (std::size_t i = 0; i < serial.per_statistic.size(); ++i) {
            REQUIRE(serial.per_statistic[i].rejections == parallel.per_statistic[i].rejections);
        }
    }

    SECTION("report serialization carries the table fields") {
        const auto rep = run_study(small_scenario({StatKind::ks, StatKind::cvm}, 3, 1));
        const auto j = study_report_to_json(rep);
        REQUIRE(j["scenario"] == "clayton-frank");
        REQUIRE(j["reps"] == 3);
        REQUIRE(j["statistics"].size() == 2);
        REQUIRE_FALSE(j.contains("elapsed_seconds"));
        const auto table = study_report_table(rep);
        REQUIRE(table.find("ks") != std::string::npos);
        REQUIRE(table.find("cvm") != std::string::npos);
    }
}
