#include "esopt/config.hpp"

#include "json.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace esopt {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::string& section, const std::set<std::string>& known) {
    if (!obj.is_object()) throw ConfigError(section, "must be an object");
    for (const auto& [key, _] : obj.items())
        if (!known.count(key)) throw ConfigError(section.empty() ? key : section + "." + key, "unknown field");
}

template <class T>
void read(const json& obj, const std::string& section, const char* key, T& out) {
    if (!obj.contains(key)) return;
    const std::string field = section + "." + key;
    try {
        const json& v = obj.at(key);
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(field, "expected a boolean");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw ConfigError(field, "expected an integer");
            if constexpr (std::is_unsigned_v<T>)
                if (v.get<long long>() < 0) throw ConfigError(field, "must be >= 0");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError(field, "expected a number");
        } else {
            if (!v.is_string()) throw ConfigError(field, "expected a string");
        }
        out = v.get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(field, e.what());
    }
}

Eigen::VectorXd read_vector(const json& v, const std::string& field) {
    if (!v.is_array() || v.empty()) throw ConfigError(field, "expected a non-empty array of numbers");
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number()) throw ConfigError(field, "expected numbers");
        out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
    }
    return out;
}

Eigen::MatrixXd read_matrix(const json& v, const std::string& field) {
    if (!v.is_array() || v.empty()) throw ConfigError(field, "expected an array of rows");
    const std::size_t n = v.size();
    Eigen::MatrixXd out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(v[0].size()));
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::VectorXd row = read_vector(v[i], field);
        if (row.size() != out.cols()) throw ConfigError(field, "rows must have equal length");
        out.row(static_cast<Eigen::Index>(i)) = row.transpose();
    }
    return out;
}

void read_model(const json& m, ModelParams& p) {
    reject_unknown(m, "model",
                   {"kappa", "mu", "sigma", "Lambda", "rho", "T", "nu0", "d_plus", "d_minus", "c0", "cS", "q_lo",
                    "q_hi", "M_u", "ramp_width", "seasonality"});
    read(m, "model", "kappa", p.kappa);
    read(m, "model", "sigma", p.sigma);
    read(m, "model", "rho", p.rho);
    read(m, "model", "T", p.T);
    read(m, "model", "d_plus", p.d_plus);
    read(m, "model", "d_minus", p.d_minus);
    read(m, "model", "c0", p.c0);
    read(m, "model", "cS", p.cS);
    read(m, "model", "q_lo", p.q_lo);
    read(m, "model", "q_hi", p.q_hi);
    read(m, "model", "M_u", p.M_u);
    read(m, "model", "ramp_width", p.ramp_width);
    if (m.contains("mu")) p.mu = read_vector(m["mu"], "model.mu");
    if (m.contains("nu0")) p.nu0 = read_vector(m["nu0"], "model.nu0");
    if (m.contains("Lambda")) p.Lambda = read_matrix(m["Lambda"], "model.Lambda");
    if (m.contains("seasonality")) {
        const json& s = m["seasonality"];
        if (s.is_null()) {
            p.seasonality.reset();
        } else {
            reject_unknown(s, "model.seasonality", {"K_S", "t_S", "Delta"});
            Seasonality k = p.seasonality.value_or(Seasonality{});
            read(s, "model.seasonality", "K_S", k.amplitude);
            read(s, "model.seasonality", "t_S", k.peak_time);
            read(s, "model.seasonality", "Delta", k.season_length);
            p.seasonality = k;
        }
    }
}

Scheme parse_scheme(const std::string& s) {
    if (s == "plain") return Scheme::Plain;
    if (s == "transformed") return Scheme::Transformed;
    throw ConfigError("simulation.scheme", "expected 'plain' or 'transformed'");
}

}  // namespace

RunConfig default_config(const std::string& preset_name) {
    RunConfig c;
    c.preset = preset_name;
    c.model = preset(preset_name);
    c.grid = default_grid(c.model);
    return c;
}

RunConfig parse_config(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError("<document>", e.what());
    }
    reject_unknown(doc, "", {"$schema", "preset", "model", "grid", "solver", "simulation", "output"});

    RunConfig c;
    if (doc.contains("preset")) {
        if (!doc["preset"].is_string()) throw ConfigError("preset", "expected a string");
        c = default_config(doc["preset"].get<std::string>());
    } else {
        if (!doc.contains("model")) throw ConfigError("model", "required when no preset is given");
        c.preset.clear();
    }
    if (doc.contains("model")) read_model(doc["model"], c.model);

    // The grid defaults follow the (possibly overridden) capacity and horizon.
    Grid4D g = default_grid(c.model);
    g.s = c.grid.s;
    if (doc.contains("grid")) {
        const json& j = doc["grid"];
        reject_unknown(j, "grid", {"s_min", "s_max", "n_s", "n_q", "n_nu", "n_t"});
        read(j, "grid", "s_min", g.s.lo);
        read(j, "grid", "s_max", g.s.hi);
        read(j, "grid", "n_s", g.s.n);
        read(j, "grid", "n_q", g.q.n);
        read(j, "grid", "n_nu", g.nu.n);
        read(j, "grid", "n_t", g.t.n);
    }
    c.grid = g;

    if (doc.contains("solver")) {
        const json& j = doc["solver"];
        reject_unknown(j, "solver", {"policy_iterations", "tolerance"});
        read(j, "solver", "policy_iterations", c.solver.policy_iterations);
        read(j, "solver", "tolerance", c.solver.tolerance);
    }
    if (doc.contains("simulation")) {
        const json& j = doc["simulation"];
        auto& s = c.simulation;
        reject_unknown(j, "simulation",
                       {"dt", "n_paths", "scheme", "antithetic", "starts", "dump_paths", "filter_horizon",
                        "filter_dt", "filter_paths", "csv_time_stride"});
        read(j, "simulation", "dt", s.dt);
        read(j, "simulation", "n_paths", s.n_paths);
        read(j, "simulation", "antithetic", s.antithetic);
        read(j, "simulation", "dump_paths", s.dump_paths);
        read(j, "simulation", "filter_horizon", s.filter_horizon);
        read(j, "simulation", "filter_dt", s.filter_dt);
        read(j, "simulation", "filter_paths", s.filter_paths);
        read(j, "simulation", "csv_time_stride", s.csv_time_stride);
        std::string scheme;
        read(j, "simulation", "scheme", scheme);
        if (!scheme.empty()) s.scheme = parse_scheme(scheme);
        if (j.contains("starts")) {
            if (!j["starts"].is_array()) throw ConfigError("simulation.starts", "expected an array");
            s.starts.clear();
            for (const json& e : j["starts"]) {
                reject_unknown(e, "simulation.starts[]", {"s", "q", "nu1", "t"});
                SystemState x;
                read(e, "simulation.starts[]", "s", x.s);
                read(e, "simulation.starts[]", "q", x.q);
                read(e, "simulation.starts[]", "nu1", x.pi1);
                read(e, "simulation.starts[]", "t", x.t);
                s.starts.push_back(x);
            }
        }
    }
    if (doc.contains("output")) {
        reject_unknown(doc["output"], "output", {"dir"});
        read(doc["output"], "output", "dir", c.out_dir);
    }
    validate(c);
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("--config", "cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

void validate(const RunConfig& c) {
    c.model.validate();
    c.grid.validate(c.model);
    if (c.solver.policy_iterations < 1) throw ConfigError("solver.policy_iterations", "must be >= 1");
    if (!(c.solver.tolerance > 0)) throw ConfigError("solver.tolerance", "must be > 0");
    const auto& s = c.simulation;
    if (!(s.dt > 0)) throw ConfigError("simulation.dt", "must be > 0");
    if (s.n_paths < 2) throw ConfigError("simulation.n_paths", "must be >= 2");
    if (!(s.filter_horizon > 0)) throw ConfigError("simulation.filter_horizon", "must be > 0");
    if (!(s.filter_dt > 0)) throw ConfigError("simulation.filter_dt", "must be > 0");
    if (s.csv_time_stride < 1) throw ConfigError("simulation.csv_time_stride", "must be >= 1");
    for (const auto& x : s.starts) {
        if (x.q < c.model.q_lo || x.q > c.model.q_hi) throw ConfigError("simulation.starts[].q", "outside capacity");
        if (x.pi1 < 0 || x.pi1 > 1) throw ConfigError("simulation.starts[].nu1", "must lie in [0,1]");
        if (x.t < 0 || x.t > c.model.T) throw ConfigError("simulation.starts[].t", "must lie in [0,T]");
    }
    if (c.out_dir.empty()) throw ConfigError("output.dir", "must not be empty");
}

std::string to_json(const RunConfig& c) {
    const auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    json m;
    const ModelParams& p = c.model;
    m["kappa"] = p.kappa;
    m["mu"] = vec(p.mu);
    m["sigma"] = p.sigma;
    json L = json::array();
    for (Eigen::Index i = 0; i < p.Lambda.rows(); ++i) L.push_back(vec(p.Lambda.row(i).transpose()));
    m["Lambda"] = L;
    m["rho"] = p.rho;
    m["T"] = p.T;
    m["nu0"] = vec(p.nu0);
    m["d_plus"] = p.d_plus;
    m["d_minus"] = p.d_minus;
    m["c0"] = p.c0;
    m["cS"] = p.cS;
    m["q_lo"] = p.q_lo;
    m["q_hi"] = p.q_hi;
    m["M_u"] = p.M_u;
    m["ramp_width"] = p.ramp_width;
    if (p.seasonality)
        m["seasonality"] = {{"K_S", p.seasonality->amplitude},
                            {"t_S", p.seasonality->peak_time},
                            {"Delta", p.seasonality->season_length}};
    else
        m["seasonality"] = nullptr;

    json doc;
    if (!c.preset.empty()) doc["preset"] = c.preset;
    doc["model"] = m;
    doc["grid"] = {{"s_min", c.grid.s.lo}, {"s_max", c.grid.s.hi}, {"n_s", c.grid.s.n},
                   {"n_q", c.grid.q.n},    {"n_nu", c.grid.nu.n},  {"n_t", c.grid.t.n}};
    doc["solver"] = {{"policy_iterations", c.solver.policy_iterations}, {"tolerance", c.solver.tolerance}};
    const auto& s = c.simulation;
    json starts = json::array();
    for (const auto& x : s.starts) starts.push_back({{"s", x.s}, {"q", x.q}, {"nu1", x.pi1}, {"t", x.t}});
    doc["simulation"] = {{"dt", s.dt},
                         {"n_paths", s.n_paths},
                         {"scheme", to_string(s.scheme)},
                         {"antithetic", s.antithetic},
                         {"starts", starts},
                         {"dump_paths", s.dump_paths},
                         {"filter_horizon", s.filter_horizon},
                         {"filter_dt", s.filter_dt},
                         {"filter_paths", s.filter_paths},
                         {"csv_time_stride", s.csv_time_stride}};
    doc["output"] = {{"dir", c.out_dir}};
    return doc.dump(2);
}

}  // namespace esopt
