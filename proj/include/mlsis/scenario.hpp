#pragma once

#include "mlsis/dynamics.hpp"
#include "mlsis/equilibria.hpp"
#include "mlsis/network.hpp"
#include "mlsis/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace mlsis
{

/// How one mobility layer is specified in a scenario document.
struct LayerSpec {
    enum class Kind { Preset, Edges, MetropolisHastings };

    Kind kind = Kind::Preset;
    std::string graph;              ///< preset name (Preset, MetropolisHastings)
    double rate_scale = 1.0;        ///< nu
    std::string rates = "symmetric"; ///< Preset only: "symmetric" or "out_degree"
    std::vector<Edge> edges;        ///< Edges only
    std::optional<Vector> target;   ///< MetropolisHastings only; empty means uniform
};

/// Recovery rates derived from the lambda_2 sufficient condition.
struct RecoveryDesignSpec {
    double s_factor = 0.8;
    std::vector<Index> deficit_nodes;
    int round_up_decimals = -1;
};

struct StochasticOptions {
    bool enabled = false;
    double h     = 0.01;
    std::vector<std::uint64_t> seeds{1};
    Index sample_every = 1;
};

struct SweepSpec {
    std::string parameter; ///< "beta", "delta" or "mobility_scale"
    std::vector<double> values;
};

/// A parsed scenario with every default filled in. `defaults_applied` lists
/// the fields that were absent from the document.
struct Scenario {
    std::string name = "scenario";
    Index n          = 0;
    Index m          = 0;
    std::vector<LayerSpec> layers;
    Vector beta;
    std::optional<Vector> delta;
    std::optional<RecoveryDesignSpec> delta_design;
    Vector N;
    Vector p0;                ///< nm-vector
    std::optional<Vector> x0; ///< empty means the stationary population v
    double t_end       = 100.0;
    double dt          = 0.01;
    Index sample_every = 1;
    StochasticOptions stochastic;
    std::optional<SweepSpec> sweep;
    std::string output_dir = "out";
    std::vector<std::string> defaults_applied;
};

namespace detail
{
using nlohmann::json;

inline double number(const json& j, const std::string& field)
{
    if (!j.is_number()) {
        throw ValidationError(field, "expected a number");
    }
    return j.get<double>();
}

inline Index integer(const json& j, const std::string& field)
{
    if (!j.is_number_integer()) {
        throw ValidationError(field, "expected an integer");
    }
    return j.get<Index>();
}

/// A scalar (broadcast) or a list of exactly `len` numbers.
inline Vector vector_or_scalar(const json& j, Index len, const std::string& field)
{
    if (j.is_number()) {
        return Vector::Constant(len, j.get<double>());
    }
    if (!j.is_array()) {
        throw ValidationError(field, "expected a number or a list of numbers");
    }
    if (static_cast<Index>(j.size()) != len) {
        throw ValidationError(field, "expected " + std::to_string(len) + " entries, got " + std::to_string(j.size()));
    }
    Vector v(len);
    for (Index k = 0; k < len; ++k) {
        v(k) = number(j[static_cast<size_t>(k)], field + "[" + std::to_string(k) + "]");
    }
    return v;
}

inline LayerSpec parse_layer(const json& j, const std::string& field)
{
    if (!j.is_object()) {
        throw ValidationError(field, "expected an object");
    }
    LayerSpec l;
    if (j.contains("preset")) {
        l.kind  = LayerSpec::Kind::Preset;
        l.graph = j.at("preset").get<std::string>();
        if (!j.contains("nu")) {
            throw ValidationError(field + ".nu", "preset layers need a rate scale nu");
        }
        l.rate_scale = number(j.at("nu"), field + ".nu");
        if (j.contains("rates")) {
            l.rates = j.at("rates").get<std::string>();
            if (l.rates != "symmetric" && l.rates != "out_degree") {
                throw ValidationError(field + ".rates", "expected \"symmetric\" or \"out_degree\"");
            }
        }
    }
    else if (j.contains("edges")) {
        l.kind = LayerSpec::Kind::Edges;
        for (size_t k = 0; k < j.at("edges").size(); ++k) {
            const auto& e          = j.at("edges")[k];
            const std::string name = field + ".edges[" + std::to_string(k) + "]";
            if (!e.is_array() || e.size() != 3) {
                throw ValidationError(name, "expected an (i, j, rate) triple");
            }
            l.edges.push_back({integer(e[0], name), integer(e[1], name), number(e[2], name)});
        }
    }
    else if (j.contains("mh")) {
        l.kind        = LayerSpec::Kind::MetropolisHastings;
        const auto& mh = j.at("mh");
        l.graph       = mh.at("graph").get<std::string>();
        l.rate_scale  = mh.contains("rate_scale") ? number(mh.at("rate_scale"), field + ".mh.rate_scale") : 1.0;
        if (mh.contains("target") && !(mh.at("target").is_string() && mh.at("target") == "uniform")) {
            const auto& t = mh.at("target");
            Vector v(static_cast<Index>(t.size()));
            for (size_t k = 0; k < t.size(); ++k) {
                v(static_cast<Index>(k)) = number(t[k], field + ".mh.target");
            }
            l.target = v;
        }
    }
    else {
        throw ValidationError(field, "layer needs one of \"preset\", \"edges\" or \"mh\"");
    }
    return l;
}

inline json layer_json(const LayerSpec& l)
{
    switch (l.kind) {
    case LayerSpec::Kind::Preset:
        return {{"preset", l.graph}, {"nu", l.rate_scale}, {"rates", l.rates}};
    case LayerSpec::Kind::Edges: {
        json edges = json::array();
        for (const auto& e : l.edges) {
            edges.push_back({e.from, e.to, e.rate});
        }
        return {{"edges", edges}};
    }
    case LayerSpec::Kind::MetropolisHastings: {
        json mh = {{"graph", l.graph}, {"rate_scale", l.rate_scale}};
        mh["target"] = l.target ? vector_json(*l.target) : json("uniform");
        return {{"mh", mh}};
    }
    }
    return {};
}
} // namespace detail

inline Scenario parse_scenario(const nlohmann::json& doc)
{
    using detail::integer;
    using detail::number;
    using detail::vector_or_scalar;

    if (!doc.is_object()) {
        throw ValidationError("scenario", "expected a JSON object");
    }
    Scenario s;
    auto missing = [&](const char* key) {
        if (!doc.contains(key)) {
            s.defaults_applied.emplace_back(key);
            return true;
        }
        return false;
    };
    auto required = [&](const char* key) -> const nlohmann::json& {
        if (!doc.contains(key)) {
            throw ValidationError(key, "required field is missing");
        }
        return doc.at(key);
    };

    if (!missing("name")) {
        s.name = doc.at("name").get<std::string>();
    }
    s.n = integer(required("n"), "n");
    if (s.n <= 0) {
        throw ValidationError("n", "node count must be positive");
    }

    const auto& layers = required("layers");
    if (!layers.is_array() || layers.empty()) {
        throw ValidationError("layers", "expected a non-empty list");
    }
    for (size_t k = 0; k < layers.size(); ++k) {
        s.layers.push_back(detail::parse_layer(layers[k], "layers[" + std::to_string(k) + "]"));
    }
    if (missing("m")) {
        s.m = static_cast<Index>(s.layers.size());
    }
    else {
        s.m = integer(doc.at("m"), "m");
        if (s.m != static_cast<Index>(s.layers.size())) {
            throw ValidationError("m", "declares " + std::to_string(s.m) + " classes but " +
                                           std::to_string(s.layers.size()) + " layers are given");
        }
    }
    const Index nm = s.n * s.m;

    s.beta = vector_or_scalar(required("beta"), s.n, "beta");
    const auto& delta = required("delta");
    if (delta.is_object()) {
        if (delta.value("design", std::string{}) != "lambda2") {
            throw ValidationError("delta.design", "only the \"lambda2\" design is supported");
        }
        RecoveryDesignSpec d;
        if (delta.contains("s_factor")) {
            d.s_factor = number(delta.at("s_factor"), "delta.s_factor");
        }
        else {
            s.defaults_applied.emplace_back("delta.s_factor");
        }
        if (!delta.contains("deficit_nodes")) {
            throw ValidationError("delta.deficit_nodes", "required for the lambda2 design");
        }
        for (const auto& i : delta.at("deficit_nodes")) {
            const Index node = integer(i, "delta.deficit_nodes");
            if (node < 0 || node >= s.n) {
                throw ValidationError("delta.deficit_nodes", "node " + std::to_string(node) + " out of range");
            }
            d.deficit_nodes.push_back(node);
        }
        if (delta.contains("round_up_decimals")) {
            d.round_up_decimals = static_cast<int>(integer(delta.at("round_up_decimals"), "delta.round_up_decimals"));
        }
        else {
            s.defaults_applied.emplace_back("delta.round_up_decimals");
        }
        s.delta_design = d;
    }
    else {
        s.delta = vector_or_scalar(delta, s.n, "delta");
    }

    const bool has_x0 = doc.contains("x0") && !(doc.at("x0").is_string() && doc.at("x0") == "stationary");
    if (!doc.contains("x0")) {
        s.defaults_applied.emplace_back("x0");
    }
    if (has_x0) {
        s.x0 = vector_or_scalar(doc.at("x0"), nm, "x0");
        if ((s.x0->array() <= 0.0).any()) {
            throw ValidationError("x0", "explicit populations must be strictly positive");
        }
    }
    if (doc.contains("N")) {
        s.N = vector_or_scalar(doc.at("N"), s.m, "N");
    }
    else if (s.x0) {
        s.defaults_applied.emplace_back("N");
        s.N = Vector(s.m);
        for (Index a = 0; a < s.m; ++a) {
            s.N(a) = s.x0->segment(a * s.n, s.n).sum();
        }
    }
    else {
        throw ValidationError("N", "required unless x0 is given explicitly");
    }
    if ((s.N.array() <= 0.0).any()) {
        throw ValidationError("N", "class populations must be positive");
    }
    if (s.x0) {
        for (Index a = 0; a < s.m; ++a) {
            const double total = s.x0->segment(a * s.n, s.n).sum();
            if (std::abs(total - s.N(a)) > 1e-9 * s.N(a)) {
                throw ValidationError("x0", "class " + std::to_string(a) + " sums to " + std::to_string(total) +
                                                " but N is " + std::to_string(s.N(a)));
            }
        }
    }

    s.p0 = vector_or_scalar(required("p0"), nm, "p0");
    if ((s.p0.array() < 0.0).any() || (s.p0.array() > 1.0).any()) {
        throw ValidationError("p0", "infected fractions must lie in [0, 1]");
    }

    if (!missing("t_end")) {
        s.t_end = number(doc.at("t_end"), "t_end");
    }
    if (!missing("dt")) {
        s.dt = number(doc.at("dt"), "dt");
    }
    if (!missing("sample_every")) {
        s.sample_every = integer(doc.at("sample_every"), "sample_every");
    }
    if (!(s.t_end >= 0.0)) {
        throw ValidationError("t_end", "must be non-negative");
    }
    if (!(s.dt > 0.0)) {
        throw ValidationError("dt", "must be positive");
    }
    if (s.sample_every < 1) {
        throw ValidationError("sample_every", "must be at least 1");
    }

    if (!missing("stochastic")) {
        const auto& st = doc.at("stochastic");
        auto sub       = [&](const char* key) {
            if (!st.contains(key)) {
                s.defaults_applied.push_back(std::string("stochastic.") + key);
                return false;
            }
            return true;
        };
        if (sub("enabled")) {
            s.stochastic.enabled = st.at("enabled").get<bool>();
        }
        if (sub("h")) {
            s.stochastic.h = number(st.at("h"), "stochastic.h");
        }
        if (sub("seeds")) {
            s.stochastic.seeds = st.at("seeds").get<std::vector<std::uint64_t>>();
        }
        if (sub("sample_every")) {
            s.stochastic.sample_every = integer(st.at("sample_every"), "stochastic.sample_every");
        }
        if (!(s.stochastic.h > 0.0)) {
            throw ValidationError("stochastic.h", "must be positive");
        }
        if (s.stochastic.sample_every < 1) {
            throw ValidationError("stochastic.sample_every", "must be at least 1");
        }
    }

    if (doc.contains("sweep")) {
        const auto& sw = doc.at("sweep");
        SweepSpec spec;
        spec.parameter = sw.at("parameter").get<std::string>();
        if (spec.parameter != "beta" && spec.parameter != "delta" && spec.parameter != "mobility_scale") {
            throw ValidationError("sweep.parameter", "expected \"beta\", \"delta\" or \"mobility_scale\"");
        }
        spec.values = sw.at("values").get<std::vector<double>>();
        s.sweep     = spec;
    }

    if (!missing("output_dir")) {
        s.output_dir = doc.at("output_dir").get<std::string>();
    }
    return s;
}

inline Scenario load_scenario(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ValidationError("scenario", "cannot open " + path.string());
    }
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    }
    catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("scenario", std::string("parse error: ") + e.what());
    }
    try {
        return parse_scenario(doc);
    }
    catch (const nlohmann::json::exception& e) {
        throw ValidationError("scenario", e.what());
    }
}

inline MobilityLayer build_layer(const LayerSpec& l, Index n, const std::string& field)
{
    try {
        switch (l.kind) {
        case LayerSpec::Kind::Preset: {
            const auto g = graph_preset(l.graph, n);
            return l.rates == "out_degree" ? uniform_out_rates(g, l.rate_scale) : symmetric_rates(g, l.rate_scale);
        }
        case LayerSpec::Kind::Edges:
            return MobilityLayer::from_edges(n, l.edges);
        case LayerSpec::Kind::MetropolisHastings: {
            const auto g = graph_preset(l.graph, n);
            return metropolis_hastings_rates(g, l.target.value_or(Vector::Constant(n, 1.0 / n)), l.rate_scale);
        }
        }
    }
    catch (const AssumptionViolation&) {
        throw;
    }
    catch (const Error& e) {
        throw ValidationError(field, e.what());
    }
    throw ValidationError(field, "unknown layer kind");
}

/// The model instance a scenario describes, with any designed recovery rates.
struct ResolvedScenario {
    ModelSpec spec;
    std::optional<RecoveryDesign> design;
    Vector x0;
};

/// Builds the model. With `require_connected`, a reducible layer raises an
/// AssumptionViolation naming the layer.
inline ResolvedScenario resolve(const Scenario& s, bool require_connected = true)
{
    std::vector<MobilityLayer> layers;
    for (size_t k = 0; k < s.layers.size(); ++k) {
        const std::string field = "layers[" + std::to_string(k) + "]";
        try {
            layers.push_back(build_layer(s.layers[k], s.n, field));
        }
        catch (const AssumptionViolation& e) {
            throw AssumptionViolation(field + ": " + e.what());
        }
        const auto report = validate_layer(layers.back());
        if (!report.is_generator()) {
            throw ValidationError(field, report.issues.front());
        }
        if (require_connected && !report.strongly_connected) {
            throw AssumptionViolation(field + ": mobility graph is not strongly connected");
        }
    }
    MultiLayerNetwork net(std::move(layers), s.N);

    ResolvedScenario out;
    Vector delta;
    if (s.delta_design) {
        if (!net.strongly_connected()) {
            throw AssumptionViolation("delta.design: requires strongly connected layers");
        }
        try {
            out.design = design_lambda2_recovery(net, s.beta, s.delta_design->s_factor, s.delta_design->deficit_nodes,
                                                 s.delta_design->round_up_decimals);
        }
        catch (const DomainError& e) {
            throw ValidationError("delta", e.what());
        }
        delta = out.design->delta;
    }
    else {
        delta = *s.delta;
    }
    try {
        out.spec = ModelSpec(net, s.beta, delta);
    }
    catch (const DomainError& e) {
        const std::string msg = e.what();
        throw ValidationError(msg.find("delta") != std::string::npos || msg.find("recovery") != std::string::npos
                                  ? "delta"
                                  : "beta",
                              msg);
    }
    if (s.x0) {
        out.x0 = *s.x0;
    }
    else if (net.strongly_connected()) {
        out.x0 = stationary_populations(net).v;
    }
    else {
        // no stationary law to start from; spread each class evenly
        out.x0 = Vector(s.n * s.m);
        for (Index a = 0; a < s.m; ++a) {
            out.x0.segment(a * s.n, s.n).setConstant(s.N(a) / static_cast<double>(s.n));
        }
    }
    return out;
}

/// Every resolved parameter, defaults included.
inline nlohmann::json to_json(const Scenario& s)
{
    using nlohmann::json;
    json j;
    j["name"] = s.name;
    j["n"]    = s.n;
    j["m"]    = s.m;
    j["layers"] = json::array();
    for (const auto& l : s.layers) {
        j["layers"].push_back(detail::layer_json(l));
    }
    j["beta"] = vector_json(s.beta);
    if (s.delta_design) {
        j["delta"] = {{"design", "lambda2"},
                      {"s_factor", s.delta_design->s_factor},
                      {"deficit_nodes", s.delta_design->deficit_nodes},
                      {"round_up_decimals", s.delta_design->round_up_decimals}};
    }
    else {
        j["delta"] = vector_json(*s.delta);
    }
    j["N"]            = vector_json(s.N);
    j["p0"]           = vector_json(s.p0);
    j["x0"]           = s.x0 ? vector_json(*s.x0) : json("stationary");
    j["t_end"]        = s.t_end;
    j["dt"]           = s.dt;
    j["sample_every"] = s.sample_every;
    j["stochastic"]   = {{"enabled", s.stochastic.enabled},
                         {"h", s.stochastic.h},
                         {"seeds", s.stochastic.seeds},
                         {"sample_every", s.stochastic.sample_every}};
    if (s.sweep) {
        j["sweep"] = {{"parameter", s.sweep->parameter}, {"values", s.sweep->values}};
    }
    j["output_dir"] = s.output_dir;
    return j;
}

} // namespace mlsis
