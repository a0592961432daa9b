#pragma once

#include <CLI11.hpp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "config.hpp"
#include "fss.hpp"
#include "harness.hpp"
#include "models.hpp"
#include "multistage.hpp"
#include "ratefn.hpp"
#include "random.hpp"

namespace mstest {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitInfeasible = 3, kExitNumeric = 4 };

inline AnyDesign make_design(const std::string& test, FssSolver& solver, double alpha, double beta) {
    check_levels(alpha, beta);
    if (test == "fss") return solver.design(alpha, beta);
    if (test == "three") return design_three_stage(solver, alpha, beta);
    if (test == "four-hat") return design_four_stage_hat(solver, alpha, beta);
    if (test == "four-check") return design_four_stage_check(solver, alpha, beta);
    if (test == "sprt") return design_sprt(alpha, beta);
    throw ConfigError("unknown test '" + test + "' (fss, three, four-hat, four-check, sprt)");
}

namespace detail {

inline std::string g17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

inline void put_fss(std::ostream& os, const std::string& tag, const FssDesign& d) {
    os << tag << " = n " << d.n_star << ", kappa " << g17(d.kappa_star) << ", levels (" << g17(d.alpha) << ", "
       << g17(d.beta) << "), " << to_string(d.method) << '\n';
}

inline void put_bounds(std::ostream& os, EssBounds null, EssBounds alt) {
    os << "ess_bounds_null = " << g17(null.lower) << " " << g17(null.upper) << '\n';
    os << "ess_bounds_alternative = " << g17(alt.lower) << " " << g17(alt.upper) << '\n';
}

inline void put_three(std::ostream& os, const ThreeStageDesign& d) {
    os << "n0 = " << d.n0 << "\nn1 = " << d.n1 << "\nN = " << d.N << '\n';
    os << "kappa0 = " << g17(d.kappa0) << "\nkappa1 = " << g17(d.kappa1) << "\nK = " << g17(d.K) << '\n';
    os << "gamma = " << g17(d.gamma) << "\ndelta = " << g17(d.delta) << '\n';
}

}  // namespace detail

/// Design as "key = value" lines.
inline std::string format_design(const AnyDesign& design, const ModelSpec& m) {
    using namespace detail;
    std::ostringstream os;
    os << "test = " << test_id(design) << "\nmodel = " << m.describe() << "\nstatistic = " << to_string(m.statistic())
       << "\nalpha = " << g17(design_alpha(design)) << "\nbeta = " << g17(design_beta(design)) << '\n';
    std::visit(
        [&](const auto& d) {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, FssDesign>) {
                os << "n_star = " << d.n_star << "\nkappa_star = " << g17(d.kappa_star)
                   << "\nmethod = " << to_string(d.method) << '\n';
            } else if constexpr (std::is_same_v<T, SprtDesign>) {
                os << "A = " << g17(d.A) << "\nB = " << g17(d.B) << '\n';
            } else {
                put_three(os, d);
                if constexpr (std::is_same_v<T, FourStageHatDesign>)
                    os << "N0 = " << d.N0 << "\nK0 = " << g17(d.K0) << "\ngamma_prime = " << g17(d.gamma_prime) << '\n';
                if constexpr (std::is_same_v<T, FourStageCheckDesign>)
                    os << "N1 = " << d.N1 << "\nK1 = " << g17(d.K1) << "\ndelta_prime = " << g17(d.delta_prime) << '\n';
                os << "collision_repaired = " << (d.collision_repaired ? "true" : "false") << '\n';
                put_bounds(os, ess_bounds(d, Which::Null), ess_bounds(d, Which::Alternative));
                put_fss(os, "fss_n0", d.fss_n0);
                put_fss(os, "fss_n1", d.fss_n1);
                put_fss(os, "fss_N", d.fss_N);
                if constexpr (std::is_same_v<T, FourStageHatDesign>) put_fss(os, "fss_N0", d.fss_N0);
                if constexpr (std::is_same_v<T, FourStageCheckDesign>) put_fss(os, "fss_N1", d.fss_N1);
            }
        },
        design);
    return os.str();
}

/// Rate-function table: kappa over (J0, J1) with psi0, psi1; zeta0, zeta1 are the LLR rates over (-I0, I1).
inline void write_rates_csv(std::ostream& os, const ModelSpec& m, int points = 201) {
    RateFunctions rf(m);
    RateFunctions llr(m.with_statistic(Statistic::AvgLlr));
    os << "kappa,psi0,psi1,zeta0,zeta1\n";
    for (int k = 0; k < points; ++k) {
        const double u = double(k + 1) / double(points + 1);
        const double kappa = rf.j0() + u * (rf.j1() - rf.j0());
        const double z = -llr.i0() + u * (llr.i1() + llr.i0());
        os << detail::g17(kappa) << ',' << detail::g17(rf.psi(0, kappa)) << ',' << detail::g17(rf.psi(1, kappa)) << ','
           << detail::g17(llr.psi(0, z)) << ',' << detail::g17(llr.psi(1, z)) << '\n';
    }
}

/// Asymptotic relative efficiency of the non-likelihood statistics across model parameters.
inline void write_are_csv(std::ostream& os) {
    os << "model,statistic,param,are0,are1\n";
    auto row = [&](const ModelSpec& m, double param) {
        auto e = are(RateFunctions(m));
        os << to_string(m.kind()) << ',' << to_string(m.statistic()) << ',' << detail::g17(param) << ','
           << detail::g17(e.are0) << ',' << detail::g17(e.are1) << '\n';
    };
    for (int k = 1; k <= 40; ++k) row(ModelSpec::gaussian(0.05 * k, Statistic::Binarized), 0.05 * k);
    for (int k = 1; k <= 18; ++k) row(ModelSpec::ar1(-0.05 * k, 0.05 * k, Statistic::YuleWalker), 0.05 * k);
    for (int k = 1; k <= 18; ++k) {
        const double d = 0.025 * k;
        row(ModelSpec::markov(0.5, 0.5 - d, 0.5 + d, Statistic::SampleMean), d);
    }
}

namespace detail {

struct CliState {
    RunConfig flags;
    std::string config_path;
    std::string test;
    std::vector<std::string> tests;
    std::vector<double> true_params;
    std::vector<double> betas;
    int points = 201;
};

inline void add_common(CLI::App* sub, CliState& s) {
    auto& f = s.flags;
    sub->add_option("--config", s.config_path, "INI config file");
    sub->add_option("--model", f.kind, "gaussian | ar1 | markov");
    sub->add_option("--statistic", f.statistic, "llr | mean | binarized | yule-walker");
    sub->add_option("--eta", f.eta, "gaussian: mean shift (mu0 = -eta, mu1 = eta)");
    sub->add_option("--x-star", f.x_star, "gaussian binarization cut");
    sub->add_option("--mu0", f.mu0, "null parameter");
    sub->add_option("--mu1", f.mu1, "alternative parameter");
    sub->add_option("--p", f.p, "markov: P(0 -> 0)");
    sub->add_option("--alpha", f.alpha, "type-I error level");
    sub->add_option("--beta", f.beta, "type-II error level");
    sub->add_option("--regime", f.regime, "equal | power4 | logpower | logoverbeta | all");
    sub->add_option("--reps", f.reps, "evaluation replications");
    sub->add_option("--sim-reps", f.sim_reps, "replications per simulated fss probe");
    sub->add_option("--max-n", f.max_n, "largest sample size the fss search may use");
    sub->add_option("--seed", f.seed, "master seed");
    sub->add_option("--threads", f.threads, "worker thread cap");
    sub->add_option("--out", f.dir, "output directory");
    sub->add_option("--prefix", f.prefix, "output file prefix");
}

inline std::filesystem::path output_path(const RunConfig& c, const std::string& name) {
    std::filesystem::path dir = c.dir.value_or(".");
    std::filesystem::create_directories(dir);
    return dir / (c.prefix.value_or("") + name);
}

inline void write_file(const RunConfig& c, const std::string& name, const std::function<void(std::ostream&)>& body,
                       std::ostream& out) {
    const auto path = output_path(c, name);
    std::ofstream f(path);
    if (!f) throw ConfigError("output.dir: cannot write " + path.string());
    body(f);
    out << "wrote " << path.string() << '\n';
}

inline std::vector<Regime> regimes_of(const std::string& s) {
    if (s == "all") return {Regime::Equal, Regime::Power4, Regime::LogPower, Regime::LogOverBeta};
    try {
        return {parse_regime(s)};
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("levels.regime: ") + e.what());
    }
}

inline std::size_t eval_reps(const RunConfig& c) {
    const long r = c.reps.value_or(10000);
    if (r < 100) throw ConfigError("budget.reps must be >= 100");
    return std::size_t(r);
}

inline void check_true_params(const ModelSpec& m, const std::vector<double>& ps) {
    for (double x : ps)
        if (!m.in_param_space(x))
            throw ConfigError("--true-param " + g17(x) + " outside the parameter space of " + m.describe());
}

inline ModelSpec model_or_default(const RunConfig& c) {
    return c.kind ? model_from_config(c) : ModelSpec::gaussian(0.5);
}

}  // namespace detail

/// Entry point behind the mstest-cli binary. Returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    using namespace detail;
    CLI::App app{"Multistage sequential tests: design, simulation and evaluation"};
    app.require_subcommand(1);
    CliState s;

    auto* design = app.add_subcommand("design", "Design a test and print it");
    design->add_option("test", s.test, "fss | three | four-hat | four-check | sprt")->required();
    auto* run = app.add_subcommand("run", "Run a design on one simulated path");
    run->add_option("test", s.test, "fss | three | four-hat | four-check | sprt")->required();
    run->add_option("--true-param", s.true_params, "parameter of the simulated path (default mu0)");
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Monte Carlo evaluation to evaluation.csv");
    evaluate_cmd->add_option("tests", s.tests, "tests to evaluate (default all)");
    evaluate_cmd->add_option("--true-param", s.true_params, "true parameters (default mu0 and mu1)");
    auto* sweep_cmd = app.add_subcommand("sweep", "Null ESS ratios against the SPRT across a regime");
    sweep_cmd->add_option("--betas", s.betas, "beta grid (default 1e-1 .. 1e-6)");
    auto* rates = app.add_subcommand("rates", "Rate functions to rates.csv");
    rates->add_option("--points", s.points, "grid points")->check(CLI::Range(3, 100000));
    auto* figures = app.add_subcommand("figures", "Re-emit every figure data file");
    figures->add_option("--points", s.points, "rate grid points")->check(CLI::Range(3, 100000));
    figures->add_option("--betas", s.betas, "beta grid for the sweeps (default 1e-1 .. 1e-6)");
    for (auto* sub : {design, run, evaluate_cmd, sweep_cmd, rates, figures}) add_common(sub, s);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return kExitOk;
        }
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    }

    try {
        RunConfig cfg = s.config_path.empty() ? RunConfig{} : load_config(s.config_path);
        cfg = merge(cfg, s.flags);
        if (cfg.threads) {
            if (*cfg.threads < 1) throw ConfigError("budget.threads must be >= 1");
            set_threads(unsigned(*cfg.threads));
        }
        const auto seed = cfg.seed.value_or(1);

        if (design->parsed()) {
            const auto m = model_from_config(cfg);
            FssSolver solver(m, budget_from_config(cfg));
            auto d = make_design(s.test, solver, require(cfg.alpha, "levels.alpha"), require(cfg.beta, "levels.beta"));
            const std::string text = format_design(d, m);
            out << text;
            if (cfg.dir) write_file(cfg, "design.txt", [&](std::ostream& os) { os << text; }, out);
        } else if (run->parsed()) {
            const auto m = model_from_config(cfg);
            FssSolver solver(m, budget_from_config(cfg));
            auto d = make_design(s.test, solver, require(cfg.alpha, "levels.alpha"), require(cfg.beta, "levels.beta"));
            check_true_params(m, s.true_params);
            const double param = s.true_params.empty() ? m.mu0() : s.true_params.front();
            SimulatedFeed feed(m, param, derive_seed(seed, Stream::SingleRun));
            auto o = run_design(d, feed);
            out << "test = " << test_id(d) << "\ntrue_param = " << g17(param) << "\ndecision = " << to_string(o.decision)
                << "\nsample_size = " << o.sample_size << "\nstage = " << o.stage_reached
                << (o.capped ? "\ncapped = true\n" : "\n");
        } else if (evaluate_cmd->parsed()) {
            const auto m = model_from_config(cfg);
            FssSolver solver(m, budget_from_config(cfg));
            const double a = require(cfg.alpha, "levels.alpha"), b = require(cfg.beta, "levels.beta");
            auto tests = s.tests.empty() ? std::vector<std::string>{"fss", "three", "four-hat", "four-check", "sprt"}
                                         : s.tests;
            check_true_params(m, s.true_params);
            auto params = s.true_params.empty() ? std::vector<double>{m.mu0(), m.mu1()} : s.true_params;
            std::vector<EvalReport> reports;
            for (std::size_t i = 0; i < tests.size(); ++i) {
                auto d = make_design(tests[i], solver, a, b);
                for (std::size_t j = 0; j < params.size(); ++j)
                    reports.push_back(
                        evaluate(d, m, params[j], eval_reps(cfg), derive_seed(seed, Stream::Evaluate, {i, j})));
            }
            write_file(cfg, "evaluation.csv", [&](std::ostream& os) { write_reports_csv(os, reports); }, out);
        } else if (sweep_cmd->parsed()) {
            const auto m = model_from_config(cfg);
            for (auto r : regimes_of(require(cfg.regime, "levels.regime"))) {
                RegimeSpec spec{r, s.betas.empty() ? RegimeSpec{}.betas : s.betas};
                auto rows = sweep(spec, m, eval_reps(cfg), seed, budget_from_config(cfg));
                write_file(cfg, "sweep_" + to_string(r) + ".csv", [&](std::ostream& os) { write_sweep_csv(os, rows); },
                           out);
            }
        } else if (rates->parsed()) {
            const auto m = model_from_config(cfg);
            write_file(cfg, "rates.csv", [&](std::ostream& os) { write_rates_csv(os, m, s.points); }, out);
        } else if (figures->parsed()) {
            for (const auto& m : {ModelSpec::gaussian(0.5), ModelSpec::ar1(-0.5, 0.5), ModelSpec::markov(0.5, 0.25, 0.75)})
                write_file(cfg, "rates_" + to_string(m.kind()) + ".csv",
                           [&](std::ostream& os) { write_rates_csv(os, m, s.points); }, out);
            write_file(cfg, "are.csv", [&](std::ostream& os) { write_are_csv(os); }, out);
            const auto m = model_or_default(cfg);
            const auto budget = budget_from_config(cfg);
            for (auto r : regimes_of(cfg.regime.value_or("all"))) {
                RegimeSpec spec{r, s.betas.empty() ? RegimeSpec{}.betas : s.betas};
                auto rows = sweep(spec, m, eval_reps(cfg), seed, budget);
                write_file(cfg, "sweep_" + to_string(r) + ".csv", [&](std::ostream& os) { write_sweep_csv(os, rows); },
                           out);
            }
            auto rs = robustness(m, cfg.alpha.value_or(1e-4), cfg.beta.value_or(1e-4), robustness_grid(m),
                                 eval_reps(cfg), seed, budget);
            write_file(cfg, "robustness.csv", [&](std::ostream& os) { write_reports_csv(os, rs); }, out);
        }
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const InfeasibleBudget& e) {
        err << "infeasible: " << e.what() << '\n';
        return kExitInfeasible;
    } catch (const std::invalid_argument& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "numeric failure: " << e.what() << '\n';
        return kExitNumeric;
    }
    return kExitOk;
}

}  // namespace mstest
