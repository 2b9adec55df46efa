// Command-line front end: copula goodness-of-fit tests (simple and composite
// nulls), Monte Carlo power/level studies, and data generation.
//
// Exit codes: 0 = ran (regardless of the test decision), 2 = usage error,
// 3 = data error, 4 = estimation error.

#include <cstdint>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "atv/bootstrap.hpp"
#include "atv/csv.hpp"
#include "atv/simulate.hpp"

namespace {

struct CommonFlags {
    int boot = 1000;
    double alpha = 0.05;
    double epsilon = 0.0;
    int L = 0;            // 0 = auto (box-count rule)
    std::size_t m = 0;    // 0 = auto (n)
    long K = 10000;
    std::size_t grid = 0;  // 0 = auto (floor(n^{1/d}))
    int workers = 1;
    std::uint64_t seed = 0;
    bool seed_given = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--boot", f.boot, "bootstrap replicates B")->check(CLI::PositiveNumber);
    cmd->add_option("--alpha", f.alpha, "test level");
    cmd->add_option("--epsilon", f.epsilon, "critical-value margin added to t*");
    cmd->add_option("--L", f.L, "number of boxes (0 = box-count rule)");
    cmd->add_option("--m", f.m, "search shortlist size (0 = n)");
    cmd->add_option("--K", f.K, "random-search draws");
    cmd->add_option("--grid", f.grid, "grid resolution p (0 = floor(n^(1/d)))");
    cmd->add_option("--workers", f.workers, "worker threads for replicates");
    cmd->add_option("--seed", f.seed, "master seed (omit to draw one from entropy)")
        ->each([&f](const std::string&) { f.seed_given = true; });
}

std::uint64_t resolve_seed(CommonFlags& f) {
    if (!f.seed_given) {
        std::random_device rd;
        f.seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
        std::cerr << "seed drawn from entropy: " << f.seed << "\n";
    }
    return f.seed;
}

atv::TestConfig make_config(const CommonFlags& f) {
    atv::TestConfig cfg;
    cfg.B = f.boot;
    cfg.alpha = f.alpha;
    cfg.epsilon = f.epsilon;
    cfg.atv.L = f.L;
    cfg.atv.m = f.m;
    cfg.atv.K = f.K;
    cfg.grid_p = f.grid;
    cfg.workers = f.workers;
    cfg.seed = f.seed;
    return cfg;
}

// "independence" or "<family>:<theta>", e.g. "frank:4.16".
atv::CopulaModel parse_null_model(const std::string& spec) {
    const std::size_t colon = spec.find(':');
    const std::string fam = spec.substr(0, colon);
    const atv::Family family = atv::parse_family(fam);
    if (family == atv::Family::independence) {
        if (colon != std::string::npos)
            throw atv::ConfigError("--null independence takes no parameter");
        return atv::CopulaModel::independence();
    }
    if (colon == std::string::npos)
        throw atv::ConfigError("--null " + fam + " needs a parameter, e.g. " + fam + ":2.0");
    try {
        return atv::CopulaModel(family, std::stod(spec.substr(colon + 1)));
    } catch (const std::invalid_argument& e) {
        throw atv::ConfigError(std::string("--null: ") + e.what());
    }
}

atv::Scenario make_scenario(const std::string& name, std::size_t n, int reps, double tau,
                            atv::EstimatorKind estimator, const std::vector<atv::StatKind>& stats,
                            const atv::TestConfig& cfg) {
    atv::Scenario sc;
    sc.name = name;
    sc.n = n;
    sc.reps = reps;
    sc.config = cfg;
    sc.statistics = stats;
    if (name == "arch-s") {
        sc.generator = atv::ArchGenerator{};
        sc.null_spec = atv::SimpleModelNull{atv::CopulaModel::independence()};
    } else if (name == "arch-c") {
        sc.generator = atv::ArchGenerator{};
        sc.null_spec = atv::CompositeNull{atv::Family::frank, estimator};
    } else if (name == "mixture-s") {
        sc.generator = atv::MixtureGenerator{};
        sc.null_spec = atv::SimpleModelNull{atv::CopulaModel::independence()};
    } else if (name == "mixture-c") {
        sc.generator = atv::MixtureGenerator{};
        sc.null_spec = atv::CompositeNull{atv::Family::frank, estimator};
    } else {
        const std::size_t dash = name.find('-');
        if (dash == std::string::npos)
            throw atv::ConfigError("unknown scenario: " + name);
        const atv::Family gen_family = atv::parse_family(name.substr(0, dash));
        const atv::Family null_family = atv::parse_family(name.substr(dash + 1));
        sc.generator = atv::CopulaGenerator{gen_family, tau};
        sc.null_spec = atv::CompositeNull{null_family, estimator};
    }
    return sc;
}

int run(int argc, char** argv) {
    CLI::App app{"Copula goodness-of-fit tests with bootstrap calibration"};
    app.require_subcommand(1);

    // --- test ---
    auto* test = app.add_subcommand("test", "run one goodness-of-fit test on a CSV sample");
    std::string csv_path, null_spec, family_name, estimator_name = "pml", stat_name = "atv";
    bool full = false;
    CommonFlags tf;
    test->add_option("csv", csv_path, "input CSV (one observation per row)")->required();
    test->add_option("--null", null_spec,
                     "simple null: independence | frank:th | clayton:th | gumbel:th");
    test->add_option("--family", family_name, "composite null family (fitted from the data)");
    test->add_option("--estimator", estimator_name, "composite estimator: tau | pml");
    test->add_option("--stat", stat_name, "statistic: atv | ks | cvm | chi2 | kuiper");
    test->add_flag("--full", full, "include replicate values in the JSON output");
    add_common(test, tf);

    // --- study ---
    auto* study = app.add_subcommand("study", "run a Monte Carlo rejection-frequency study");
    std::string scenario_name, study_stats = "atv", study_estimator = "pml";
    std::size_t study_n = 400;
    int reps = 100;
    double study_tau = 0.4;
    CommonFlags sf;
    sf.boot = 1000;
    study->add_option("--scenario", scenario_name,
                      "arch-s | arch-c | mixture-s | mixture-c | <family>-<family>")
        ->required();
    study->add_option("--n", study_n, "sample size per repetition");
    study->add_option("--reps", reps, "Monte Carlo repetitions")->check(CLI::PositiveNumber);
    study->add_option("--stat", study_stats, "statistic or comma list, e.g. atv,ks,cvm");
    study->add_option("--estimator", study_estimator, "composite estimator: tau | pml");
    study->add_option("--tau", study_tau, "Kendall tau of <family>-<family> generators");
    add_common(study, sf);

    // --- generate ---
    auto* gen = app.add_subcommand("generate", "write synthetic data as CSV");
    std::string kind, gen_family = "frank", out_path = "-";
    std::size_t gen_n = 0;
    double gen_tau = 0.4;
    CommonFlags gf;
    gen->add_option("--kind", kind, "arch | mixture | copula")->required();
    gen->add_option("--family", gen_family, "copula family for --kind copula");
    gen->add_option("--tau", gen_tau, "Kendall tau for --kind copula");
    gen->add_option("--n", gen_n, "rows to generate")->required()->check(CLI::PositiveNumber);
    gen->add_option("--out", out_path, "output path ('-' = stdout)");
    gen->add_option("--seed", gf.seed, "generator seed (omit to draw one from entropy)")
        ->each([&gf](const std::string&) { gf.seed_given = true; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (test->parsed()) {
        const auto kinds = atv::parse_stat_list(stat_name);
        if (kinds.size() != 1)
            throw atv::ConfigError("test takes a single --stat; comma lists belong to study");
        if (null_spec.empty() == family_name.empty())
            throw atv::ConfigError("test needs exactly one of --null or --family");
        resolve_seed(tf);
        atv::TestConfig cfg = make_config(tf);
        cfg.statistic = kinds.front();
        const atv::Sample data = atv::read_csv(csv_path);
        atv::TestResult result =
            family_name.empty()
                ? atv::gof_test_simple(data, parse_null_model(null_spec), cfg)
                : atv::gof_test_composite(data, atv::parse_family(family_name),
                                          atv::parse_estimator(estimator_name), cfg);
        std::cout << atv::test_result_to_json(result, full).dump(2) << "\n";
        return 0;
    }

    if (study->parsed()) {
        resolve_seed(sf);
        const atv::TestConfig cfg = make_config(sf);
        const atv::Scenario sc =
            make_scenario(scenario_name, study_n, reps, study_tau,
                          atv::parse_estimator(study_estimator),
                          atv::parse_stat_list(study_stats), cfg);
        const atv::StudyReport report = atv::run_study(sc);
        std::cout << atv::study_report_to_json(report).dump(2) << "\n\n";
        std::cout << atv::study_report_table(report);
        std::cerr << "elapsed: " << report.elapsed_seconds << " s\n";
        return 0;
    }

    // generate
    resolve_seed(gf);
    atv::Rng rng(gf.seed);
    std::optional<atv::Sample> data;
    if (kind == "arch") {
        data = atv::gen_arch(gen_n, rng);
    } else if (kind == "mixture") {
        data = atv::gen_mixture(gen_n, rng);
    } else if (kind == "copula") {
        data = atv::gen_copula(atv::parse_family(gen_family), gen_tau, gen_n, rng);
    } else {
        throw atv::ConfigError("unknown --kind: " + kind + " (expected arch|mixture|copula)");
    }
    if (out_path == "-") {
        atv::write_csv(*data, std::cout);
    } else {
        atv::write_csv(*data, out_path);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const atv::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const atv::EstimationError& e) {
        std::cerr << "estimation error: " << e.what() << "\n";
        return 4;
    } catch (const atv::ConfigError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::domain_error& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
