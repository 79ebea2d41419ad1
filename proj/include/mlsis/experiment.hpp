#pragma once

#include "mlsis/dynamics.hpp"
#include "mlsis/equilibria.hpp"
#include "mlsis/scenario.hpp"
#include "mlsis/stochastic.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace mlsis
{

inline constexpr const char* tool_version = "1.0.0";

/// Runs `body(k)` for k in [0, count) on up to hardware_concurrency threads.
/// The first exception thrown by any task is rethrown after all threads join.
inline void parallel_for(size_t count, const std::function<void(size_t)>& body)
{
    const size_t workers = std::max<size_t>(1, std::min<size_t>(count, std::thread::hardware_concurrency()));
    std::atomic<size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
        for (size_t k = next++; k < count; k = next++) {
            try {
                body(k);
            }
            catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
            }
        }
    };
    if (workers == 1) {
        work();
    }
    else {
        std::vector<std::jthread> pool;
        for (size_t w = 0; w < workers; ++w) {
            pool.emplace_back(work);
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

namespace detail
{
inline void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out << text;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j)
{
    write_text(path, j.dump(2) + "\n");
}

inline nlohmann::json matrix_json(const Matrix& m)
{
    nlohmann::json rows = nlohmann::json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        rows.push_back(vector_json(m.row(i).transpose()));
    }
    return rows;
}
} // namespace detail

/// EquilibriumReport and ConditionReport of the scenario, plus the designed
/// recovery rates when the scenario asked for them.
inline nlohmann::json analysis_json(const Scenario& scenario, const ResolvedScenario& resolved)
{
    nlohmann::json j = to_json(classify(resolved.spec));
    j["scenario"]    = scenario.name;
    j["beta"]        = vector_json(resolved.spec.beta());
    j["delta"]       = vector_json(resolved.spec.delta());
    if (resolved.design) {
        j["delta_design"] = {{"lambda2", resolved.design->lambda2},
                             {"s_lower", resolved.design->s_lower},
                             {"s", resolved.design->s},
                             {"surplus", resolved.design->surplus}};
    }
    return j;
}

inline nlohmann::json manifest_json(const std::string& command, const Scenario& scenario,
                                    const ResolvedScenario* resolved, const std::vector<std::string>& outputs)
{
    nlohmann::json j;
    j["tool"]             = "mlsis";
    j["version"]          = tool_version;
    j["command"]          = command;
    j["scenario"]         = to_json(scenario);
    j["defaults_applied"] = scenario.defaults_applied;
    if (resolved) {
        nlohmann::json gens = nlohmann::json::array();
        for (const auto& l : resolved->spec.network().layers()) {
            gens.push_back(detail::matrix_json(l.generator()));
        }
        j["resolved"] = {{"generators", gens},
                         {"beta", vector_json(resolved->spec.beta())},
                         {"delta", vector_json(resolved->spec.delta())},
                         {"N", vector_json(resolved->spec.network().class_populations())},
                         {"x0", vector_json(resolved->x0)}};
    }
    j["outputs"] = outputs;
    return j;
}

/// Writes the analysis JSON and a manifest under `out`.
inline std::vector<std::string> analyze(const Scenario& scenario, const std::filesystem::path& out)
{
    const auto resolved = resolve(scenario);
    std::filesystem::create_directories(out);
    detail::write_json(out / "analysis.json", analysis_json(scenario, resolved));
    const std::vector<std::string> outputs{"analysis.json", "manifest.json"};
    detail::write_json(out / "manifest.json", manifest_json("analyze", scenario, &resolved, outputs));
    return outputs;
}

/// Deterministic trajectory, stochastic runs (when enabled), analysis, manifest.
inline std::vector<std::string> run(const Scenario& scenario, const std::filesystem::path& out)
{
    const auto resolved = resolve(scenario);
    const auto& spec    = resolved.spec;
    std::filesystem::create_directories(out);
    std::vector<std::string> outputs;

    IntegrationOptions opts;
    opts.dt           = scenario.dt;
    opts.sample_every = scenario.sample_every;
    const auto traj   = integrate(spec, {0.0, scenario.p0, resolved.x0}, scenario.t_end, opts);
    {
        std::ofstream csv(out / "deterministic.csv", std::ios::binary);
        write_trajectory_csv(csv, traj, spec.num_nodes(), spec.num_layers());
        outputs.emplace_back("deterministic.csv");
    }

    if (scenario.stochastic.enabled) {
        const auto initial = initial_counts(spec, resolved.x0, scenario.p0);
        const auto& seeds  = scenario.stochastic.seeds;
        std::vector<std::string> csv(seeds.size());
        std::vector<nlohmann::json> meta(seeds.size());
        parallel_for(seeds.size(), [&](size_t k) {
            const auto r = simulate(spec, initial, scenario.t_end, scenario.stochastic.h, seeds[k],
                                    scenario.stochastic.sample_every);
            std::ostringstream os;
            write_stochastic_csv(os, r);
            csv[k]  = os.str();
            meta[k] = run_metadata(r);
        });
        for (size_t k = 0; k < seeds.size(); ++k) {
            const std::string stem = "stochastic_seed" + std::to_string(seeds[k]);
            detail::write_text(out / (stem + ".csv"), csv[k]);
            detail::write_json(out / (stem + ".json"), meta[k]);
            outputs.push_back(stem + ".csv");
            outputs.push_back(stem + ".json");
        }
    }

    detail::write_json(out / "analysis.json", analysis_json(scenario, resolved));
    outputs.emplace_back("analysis.json");
    outputs.emplace_back("manifest.json");
    detail::write_json(out / "manifest.json", manifest_json("run", scenario, &resolved, outputs));
    return outputs;
}

struct SweepRow {
    size_t index = 0;
    double value = 0.0;
    std::optional<double> mu;
    std::optional<double> R0;
    std::string classification;
    std::string error;
};

/// One row per grid value; a failing point records its error and the sweep continues.
inline std::vector<SweepRow> sweep_rows(const Scenario& scenario)
{
    if (!scenario.sweep) {
        throw ValidationError("sweep", "scenario has no sweep block");
    }
    const auto base   = resolve(scenario);
    const auto& grid  = scenario.sweep->values;
    const auto& param = scenario.sweep->parameter;
    std::vector<SweepRow> rows(grid.size());
    parallel_for(grid.size(), [&](size_t k) {
        auto& row = rows[k];
        row.index = k;
        row.value = grid[k];
        try {
            const Index n = base.spec.num_nodes();
            ModelSpec spec = base.spec;
            if (param == "beta") {
                spec = spec.with_beta(Vector::Constant(n, grid[k]));
            }
            else if (param == "delta") {
                spec = spec.with_delta(Vector::Constant(n, grid[k]));
            }
            else {
                spec = spec.with_network(spec.network().with_scaled_mobility(grid[k]));
            }
            const auto derived = derive(spec);
            row.mu             = spectral_abscissa(derived.jacobian).mu;
            if (derived.A) {
                row.R0 = spectral_radius(*derived.A * derived.F).rho;
            }
            row.classification = to_string(std::abs(*row.mu) <= critical_mu_tolerance ? Classification::Critical
                                           : *row.mu < 0.0                             ? Classification::DfeStable
                                                                                       : Classification::DfeUnstableEeExists);
        }
        catch (const std::exception& e) {
            row.error = e.what();
        }
    });
    return rows;
}

inline std::string sweep_csv(const Scenario& scenario, const std::vector<SweepRow>& rows)
{
    std::ostringstream os;
    os << "index," << scenario.sweep->parameter << ",mu,R0,classification,error\n";
    for (const auto& r : rows) {
        std::string err = r.error;
        std::replace(err.begin(), err.end(), ',', ';');
        std::replace(err.begin(), err.end(), '\n', ' ');
        os << r.index << ',' << io::format_double(r.value) << ',' << (r.mu ? io::format_double(*r.mu) : "") << ','
           << (r.R0 ? io::format_double(*r.R0) : "") << ',' << r.classification << ',' << err << '\n';
    }
    return os.str();
}

inline std::vector<std::string> sweep(const Scenario& scenario, const std::filesystem::path& out)
{
    const auto rows = sweep_rows(scenario);
    std::filesystem::create_directories(out);
    detail::write_text(out / "sweep.csv", sweep_csv(scenario, rows));
    const std::vector<std::string> outputs{"sweep.csv", "manifest.json"};
    const auto resolved = resolve(scenario);
    detail::write_json(out / "manifest.json", manifest_json("sweep", scenario, &resolved, outputs));
    return outputs;
}

/// Human-readable diagnostics; empty means the scenario is valid for every subcommand.
inline std::vector<std::string> validate(const Scenario& scenario)
{
    std::vector<std::string> problems;
    for (size_t k = 0; k < scenario.layers.size(); ++k) {
        const std::string field = "layers[" + std::to_string(k) + "]";
        try {
            const auto layer  = build_layer(scenario.layers[k], scenario.n, field);
            const auto report = validate_layer(layer);
            for (const auto& issue : report.issues) {
                problems.push_back(field + ": " + issue + (report.is_generator() ? " (connectivity assumption violated)" : ""));
            }
        }
        catch (const std::exception& e) {
            problems.push_back(field + ": " + e.what());
        }
    }
    if (problems.empty()) {
        try {
            const auto resolved = resolve(scenario);
            if (scenario.stochastic.enabled) {
                check_step_size(resolved.spec, scenario.stochastic.h);
            }
        }
        catch (const std::exception& e) {
            problems.emplace_back(e.what());
        }
    }
    return problems;
}

} // namespace mlsis
