// mlsis: run, analyze, sweep and validate SIS scenarios on multi-layer mobility networks.

#include "mlsis/mlsis.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace
{

struct Options {
    std::string scenario;
    std::optional<std::string> out;
    std::vector<std::uint64_t> seeds;
    std::optional<double> dt;
    std::optional<double> t_end;
};

void add_common(CLI::App* cmd, Options& opts, bool outputs)
{
    cmd->add_option("--scenario", opts.scenario, "Scenario JSON document")->required();
    if (outputs) {
        cmd->add_option("--out", opts.out, "Output directory (default: the scenario's output_dir)");
        cmd->add_option("--dt", opts.dt, "Override the integration step");
        cmd->add_option("--t-end", opts.t_end, "Override the time horizon");
    }
}

mlsis::Scenario load(const Options& opts, bool with_seeds)
{
    auto s = mlsis::load_scenario(opts.scenario);
    if (opts.dt) {
        s.dt = *opts.dt;
    }
    if (opts.t_end) {
        s.t_end = *opts.t_end;
    }
    if (with_seeds && !opts.seeds.empty()) {
        s.stochastic.enabled = true;
        s.stochastic.seeds   = opts.seeds;
    }
    return s;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"SIS epidemics under multi-layer Markovian mobility"};
    app.require_subcommand(1);

    Options opts;
    auto* run = app.add_subcommand("run", "Integrate, simulate and analyze a scenario");
    add_common(run, opts, true);
    run->add_option("--seed", opts.seeds, "Stochastic seeds (enables the stochastic runs)");

    auto* analyze = app.add_subcommand("analyze", "Equilibrium and stability analysis only");
    add_common(analyze, opts, true);

    auto* sweep = app.add_subcommand("sweep", "Classification table over the scenario's sweep grid");
    add_common(sweep, opts, true);

    auto* validate = app.add_subcommand("validate", "Check a scenario without running it");
    add_common(validate, opts, false);

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate->parsed()) {
            const auto s        = load(opts, false);
            const auto problems = mlsis::validate(s);
            for (const auto& p : problems) {
                std::cerr << "error: " << p << '\n';
            }
            if (!problems.empty()) {
                return 2;
            }
            std::cout << s.name << ": ok\n";
            return 0;
        }

        const auto s   = load(opts, run->parsed());
        const auto out = opts.out.value_or(s.output_dir);
        std::vector<std::string> outputs;
        if (run->parsed()) {
            outputs = mlsis::run(s, out);
        }
        else if (analyze->parsed()) {
            outputs = mlsis::analyze(s, out);
        }
        else {
            outputs = mlsis::sweep(s, out);
        }
        for (const auto& f : outputs) {
            std::cout << out << '/' << f << '\n';
        }
    }
    catch (const mlsis::ValidationError& e) {
        std::cerr << "invalid scenario: " << e.what() << '\n';
        return 2;
    }
    catch (const mlsis::AssumptionViolation& e) {
        std::cerr << "connectivity assumption violated: " << e.what() << '\n';
        return 3;
    }
    catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
