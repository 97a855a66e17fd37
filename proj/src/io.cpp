#include "tether/io.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#ifndef TETHER_VERSION
#define TETHER_VERSION "0.0.0"
#endif

namespace tether {

using nlohmann::json;

namespace {

/// Strict reader for one JSON object: every key must be consumed.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + " must be a JSON object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        if (!has(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(path_ + "." + key + " has the wrong type");
        }
    }

    template <int N>
    void vec(const char* key, Eigen::Matrix<double, N, 1>& out) {
        if (!has(key)) return;
        const json& v = j_.at(key);
        if (!v.is_array() || v.size() != static_cast<std::size_t>(N)) {
            throw ConfigError(path_ + "." + key + " must be an array of " + std::to_string(N) + " numbers");
        }
        for (int i = 0; i < N; ++i) {
            if (!v[static_cast<std::size_t>(i)].is_number()) {
                throw ConfigError(path_ + "." + key + " must contain numbers");
            }
            out[i] = v[static_cast<std::size_t>(i)].get<double>();
        }
    }

    std::optional<Section> section(const char* key) {
        if (!has(key)) return std::nullopt;
        return Section(j_.at(key), path_ + "." + key);
    }

    bool has(const char* key) {
        if (!j_.contains(key)) return false;
        seen_.insert(key);
        return true;
    }

    const json& raw(const char* key) {
        seen_.insert(key);
        return j_.at(key);
    }

    void finish() const {
        for (const auto& [key, _] : j_.items()) {
            if (!seen_.count(key)) throw ConfigError("unknown configuration key " + path_ + "." + key);
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

Obstacle read_obstacle(Section s) {
    Obstacle o;
    s.get("x", o.x);
    s.get("d", o.d);
    s.get("a", o.a);
    s.finish();
    return o;
}

json obstacle_json(const Obstacle& o) { return {{"x", o.x}, {"d", o.d}, {"a", o.a}}; }

template <typename Derived>
json array_json(const Eigen::MatrixBase<Derived>& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

std::string hold_name(HoldMode h) { return h == HoldMode::kLinear ? "linear" : "zero_order"; }

HoldMode parse_hold(const std::string& s) {
    if (s == "zero_order") return HoldMode::kZeroOrder;
    if (s == "linear") return HoldMode::kLinear;
    throw ConfigError("hold must be \"zero_order\" or \"linear\"");
}

const std::vector<std::string>& metric_names() {
    static const std::vector<std::string> names{"final_error", "collision", "energy"};
    return names;
}

}  // namespace

// =============================================================================
// Configuration
// =============================================================================

void RunConfig::validate() const {
    try {
        setup.validate();
        benchmark.validate();
        if (scenario) {
            OCPSpec probe = scenario_spec(setup, *scenario, setup.ocp.uncertainty.epsilon,
                                          Method::kRaSaaFb, benchmark.seed);
            probe.validate();
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

Scenario RunConfig::single_scenario() const {
    if (scenario) return *scenario;
    const auto all = generate_scenarios(static_cast<int>(scenario_index) + 1, benchmark.seed, setup.scenarios);
    return all.back();
}

RunConfig parse_config(const json& j) {
    RunConfig cfg;
    Section root(j, "config");
    ExperimentSetup& s = cfg.setup;
    OCPSpec& ocp = s.ocp;

    if (auto m = root.section("model")) {
        ModelParams& p = ocp.params;
        m->get("m", p.m);
        m->get("m_bar", p.m_bar);
        m->get("M", p.M);
        m->get("M_l", p.M_l);
        m->get("g", p.g);
        m->get("c_theta", p.c_theta);
        m->get("c_r", p.c_r);
        m->get("c_l", p.c_l);
        m->get("c_X", p.c_X);
        m->get("T_theta", p.T_theta);
        m->get("T_r", p.T_r);
        m->get("T_l", p.T_l);
        m->get("T_X", p.T_X);
        m->get("u_max", p.u_max);
        m->get("u_max_l", p.u_max_l);
        m->get("u_max_X", p.u_max_X);
        m->finish();
    }
    ocp.uncertainty.expected = PlantParams::from(ocp.params);

    if (auto u = root.section("uncertainty")) {
        UncertaintySpec& us = ocp.uncertainty;
        u->get("epsilon", us.epsilon);
        u->get("obstacle_pos_rel_err", us.obstacle_pos_rel_err);
        u->get("obstacle_size_rel_err", us.obstacle_size_rel_err);
        u->get("shared_drag", us.shared_drag);
        std::string dist = "uniform";
        u->get("distribution", dist);
        if (dist == "uniform") {
            us.kind = Distribution::kUniform;
        } else if (dist == "gaussian") {
            us.kind = Distribution::kGaussian;
        } else {
            throw ConfigError("uncertainty.distribution must be \"uniform\" or \"gaussian\"");
        }
        u->finish();
    }

    if (auto d = root.section("diffusion")) {
        const bool has_scalar = d->has("velocity_noise");
        const bool has_diag = d->has("diag");
        if (has_scalar && has_diag) throw ConfigError("diffusion takes velocity_noise or diag, not both");
        if (has_scalar) {
            double v = 0.0;
            d->get("velocity_noise", v);
            ocp.diffusion = DiffusionSpec::velocity_noise(v);
        }
        if (has_diag) {
            Eigen::Matrix<double, 12, 1> diag;
            d->vec<12>("diag", diag);
            ocp.diffusion.D = diag.asDiagonal();
        }
        d->finish();
    }

    if (auto o = root.section("ocp")) {
        Eigen::Vector4d r_diag = ocp.R.diagonal();
        o->vec<4>("R_diag", r_diag);
        ocp.R = r_diag.asDiagonal();
        o->get("alpha", ocp.alpha);
        o->get("delta_M", ocp.delta_M);
        o->get("dt", ocp.dt);
        o->get("knot_dt", ocp.knot_dt);
        std::string hold = hold_name(ocp.hold);
        o->get("hold", hold);
        ocp.hold = parse_hold(hold);
        o->get("N", ocp.N);
        Eigen::Vector4d kp = ocp.K.K_P.diagonal();
        Eigen::Vector4d kd = ocp.K.K_D.diagonal();
        o->vec<4>("K_P", kp);
        o->vec<4>("K_D", kd);
        ocp.K.K_P = kp.asDiagonal();
        ocp.K.K_D = kd.asDiagonal();
        bool feedback = true;
        o->get("feedback", feedback);
        if (!feedback) ocp.K = FeedbackGain::zero();
        if (auto sv = o->section("solver")) {
            SolverSettings& ss = ocp.solver;
            sv->get("max_outer", ss.max_outer);
            sv->get("max_inner", ss.max_inner);
            sv->get("penalty_init", ss.penalty_init);
            sv->get("penalty_growth", ss.penalty_growth);
            sv->get("tol_c", ss.tol_c);
            sv->get("tau_smooth", ss.tau_smooth);
            sv->get("tau_init", ss.tau_init);
            sv->get("r_guard", ss.r_guard);
            sv->get("guard_weight", ss.guard_weight);
            sv->finish();
        }
        o->finish();
    }

    if (auto b = root.section("baselines")) {
        if (auto g = b->section("grid")) {
            g->get("cell", s.grid.cell);
            g->get("x_min", s.grid.x_min);
            g->get("x_max", s.grid.x_max);
            g->get("d_min", s.grid.d_min);
            g->get("d_max", s.grid.d_max);
            g->get("connectivity", s.grid.connectivity);
            g->get("inflation", s.grid.inflation);
            g->finish();
        }
        if (auto p = b->section("pid")) {
            p->vec<3>("K_P", s.pid.K_P);
            p->vec<3>("K_I", s.pid.K_I);
            p->vec<3>("K_D", s.pid.K_D);
            p->finish();
        }
        if (auto c = b->section("cbf")) {
            c->get("k0", s.cbf.k0);
            c->get("k1", s.cbf.k1);
            c->finish();
        }
        if (auto m = b->section("mppi")) {
            m->get("samples", s.mppi.samples);
            m->get("horizon", s.mppi.horizon);
            m->get("lambda", s.mppi.lambda);
            m->vec<4>("noise_std", s.mppi.noise_std);
            m->get("replan_period", s.mppi.replan_period);
            m->get("terminal_weight", s.mppi.terminal_weight);
            m->get("penetration_weight", s.mppi.penetration_weight);
            Eigen::Vector4d r_diag = s.mppi.R.diagonal();
            m->vec<4>("R_diag", r_diag);
            s.mppi.R = r_diag.asDiagonal();
            m->finish();
        }
        b->finish();
    }

    if (auto sc = root.section("scenarios")) {
        ScenarioConfig& c = s.scenarios;
        sc->get("arena", c.arena);
        sc->get("obstacle_edge", c.obstacle_edge);
        sc->get("radius_min", c.radius_min);
        sc->get("radius_max", c.radius_max);
        sc->get("clearance", c.clearance);
        sc->get("min_depth", c.min_depth);
        sc->get("t_f", c.t_f);
        sc->get("observation_pos_rel_err", c.observation_pos_rel_err);
        sc->get("observation_size_rel_err", c.observation_size_rel_err);
        sc->get("max_rejections", c.max_rejections);
        sc->finish();
    }

    if (auto b = root.section("benchmark")) {
        BenchmarkConfig& bc = cfg.benchmark;
        if (b->has("methods")) {
            std::vector<std::string> names;
            b->get("methods", names);
            bc.methods.clear();
            for (const auto& n : names) {
                try {
                    bc.methods.push_back(parse_method(n));
                } catch (const EvaluationError& e) {
                    throw ConfigError(e.what());
                }
            }
        }
        b->get("N_location", bc.n_location);
        b->get("N_model", bc.n_model);
        b->get("epsilons", bc.epsilons);
        b->get("seed", bc.seed);
        b->get("jobs", bc.jobs);
        b->finish();
    }

    if (auto sc = root.section("scenario")) {
        sc->get("index", cfg.scenario_index);
        if (sc->has("y0") || sc->has("y_d") || sc->has("obstacle")) {
            if (!sc->has("y0") || !sc->has("y_d") || !sc->has("obstacle")) {
                throw ConfigError("explicit scenario needs y0, y_d and obstacle");
            }
            Scenario explicit_sc;
            explicit_sc.index = cfg.scenario_index;
            explicit_sc.t_f = s.scenarios.t_f;
            Eigen::Vector2d y0;
            Eigen::Vector2d yd;
            sc->vec<2>("y0", y0);
            sc->vec<2>("y_d", yd);
            explicit_sc.y0 = {y0.x(), y0.y(), y0.x()};
            explicit_sc.y_d = {yd.x(), yd.y(), yd.x()};
            explicit_sc.truth = read_obstacle(*sc->section("obstacle"));
            explicit_sc.observed = explicit_sc.truth;
            if (auto ob = sc->section("observed")) explicit_sc.observed = read_obstacle(*ob);
            sc->get("t_f", explicit_sc.t_f);
            cfg.scenario = explicit_sc;
        }
        sc->finish();
    }

    root.get("output_dir", cfg.output_dir);
    root.finish();
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    const std::string text = read_text(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    return parse_config(j);
}

json config_to_json(const RunConfig& cfg) {
    const ExperimentSetup& s = cfg.setup;
    const OCPSpec& ocp = s.ocp;
    const ModelParams& p = ocp.params;
    json j;
    j["model"] = {{"m", p.m},           {"m_bar", p.m_bar},     {"M", p.M},         {"M_l", p.M_l},
                  {"g", p.g},           {"c_theta", p.c_theta}, {"c_r", p.c_r},     {"c_l", p.c_l},
                  {"c_X", p.c_X},       {"T_theta", p.T_theta}, {"T_r", p.T_r},     {"T_l", p.T_l},
                  {"T_X", p.T_X},       {"u_max", p.u_max},     {"u_max_l", p.u_max_l},
                  {"u_max_X", p.u_max_X}};
    const UncertaintySpec& u = ocp.uncertainty;
    j["uncertainty"] = {{"epsilon", u.epsilon},
                        {"obstacle_pos_rel_err", u.obstacle_pos_rel_err},
                        {"obstacle_size_rel_err", u.obstacle_size_rel_err},
                        {"shared_drag", u.shared_drag},
                        {"distribution", u.kind == Distribution::kUniform ? "uniform" : "gaussian"}};
    j["diffusion"] = {{"diag", array_json(ocp.diffusion.D.diagonal())}};
    j["ocp"] = {{"R_diag", array_json(ocp.R.diagonal())},
                {"alpha", ocp.alpha},
                {"delta_M", ocp.delta_M},
                {"dt", ocp.dt},
                {"knot_dt", ocp.knot_dt},
                {"hold", hold_name(ocp.hold)},
                {"N", ocp.N},
                {"K_P", array_json(ocp.K.K_P.diagonal())},
                {"K_D", array_json(ocp.K.K_D.diagonal())},
                {"solver",
                 {{"max_outer", ocp.solver.max_outer},
                  {"max_inner", ocp.solver.max_inner},
                  {"penalty_init", ocp.solver.penalty_init},
                  {"penalty_growth", ocp.solver.penalty_growth},
                  {"tol_c", ocp.solver.tol_c},
                  {"tau_smooth", ocp.solver.tau_smooth},
                  {"tau_init", ocp.solver.tau_init},
                  {"r_guard", ocp.solver.r_guard},
                  {"guard_weight", ocp.solver.guard_weight}}}};
    j["baselines"] = {
        {"grid",
         {{"cell", s.grid.cell},
          {"x_min", s.grid.x_min},
          {"x_max", s.grid.x_max},
          {"d_min", s.grid.d_min},
          {"d_max", s.grid.d_max},
          {"connectivity", s.grid.connectivity},
          {"inflation", s.grid.inflation}}},
        {"pid", {{"K_P", array_json(s.pid.K_P)}, {"K_I", array_json(s.pid.K_I)}, {"K_D", array_json(s.pid.K_D)}}},
        {"cbf", {{"k0", s.cbf.k0}, {"k1", s.cbf.k1}}},
        {"mppi",
         {{"samples", s.mppi.samples},
          {"horizon", s.mppi.horizon},
          {"lambda", s.mppi.lambda},
          {"noise_std", array_json(s.mppi.noise_std)},
          {"replan_period", s.mppi.replan_period},
          {"terminal_weight", s.mppi.terminal_weight},
          {"penetration_weight", s.mppi.penetration_weight},
          {"R_diag", array_json(s.mppi.R.diagonal())}}}};
    const ScenarioConfig& c = s.scenarios;
    j["scenarios"] = {{"arena", c.arena},
                      {"obstacle_edge", c.obstacle_edge},
                      {"radius_min", c.radius_min},
                      {"radius_max", c.radius_max},
                      {"clearance", c.clearance},
                      {"min_depth", c.min_depth},
                      {"t_f", c.t_f},
                      {"observation_pos_rel_err", c.observation_pos_rel_err},
                      {"observation_size_rel_err", c.observation_size_rel_err},
                      {"max_rejections", c.max_rejections}};
    json methods = json::array();
    for (Method m : cfg.benchmark.methods) methods.push_back(method_name(m));
    j["benchmark"] = {{"methods", methods},
                      {"N_location", cfg.benchmark.n_location},
                      {"N_model", cfg.benchmark.n_model},
                      {"epsilons", cfg.benchmark.epsilons},
                      {"seed", cfg.benchmark.seed},
                      {"jobs", cfg.benchmark.jobs}};
    json sc = {{"index", cfg.scenario_index}};
    if (cfg.scenario) {
        const Scenario& e = *cfg.scenario;
        sc["y0"] = {e.y0.x(), e.y0.y()};
        sc["y_d"] = {e.y_d.x(), e.y_d.y()};
        sc["obstacle"] = obstacle_json(e.truth);
        sc["observed"] = obstacle_json(e.observed);
        sc["t_f"] = e.t_f;
    }
    j["scenario"] = sc;
    j["output_dir"] = cfg.output_dir;
    return j;
}

std::string fnv1a_hex(const std::string& data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << h;
    return out.str();
}

json manifest_json(const RunConfig& cfg, const std::string& command, std::uint64_t seed) {
    // jobs only affects scheduling, never results.
    json canonical = config_to_json(cfg);
    canonical["benchmark"].erase("jobs");
    canonical.erase("output_dir");
    return {{"command", command},
            {"version", TETHER_VERSION},
            {"config_hash", fnv1a_hex(canonical.dump())},
            {"seed", seed},
            {"config", config_to_json(cfg)}};
}

// =============================================================================
// Plans and reports
// =============================================================================

std::filesystem::path plan_sidecar(const std::filesystem::path& csv) {
    std::filesystem::path p = csv;
    return p.replace_extension(".json");
}

json plan_json(const ControlPlan& plan) {
    json knots = json::array();
    for (const auto& k : plan.knots) knots.push_back(array_json(k));
    return {{"knot_dt", plan.knot_dt}, {"t_f", plan.t_f}, {"hold", hold_name(plan.hold)}, {"knots", knots}};
}

void write_plan(const std::filesystem::path& csv, const ControlPlan& plan) {
    std::ostringstream out;
    out << "t,u_theta,u_r,u_l,u_X\n" << std::setprecision(17);
    for (std::size_t k = 0; k < plan.knots.size(); ++k) {
        out << plan.knot_time(k);
        for (int c = 0; c < kInputDim; ++c) out << ',' << plan.knots[k][c];
        out << '\n';
    }
    write_text(csv, out.str());
    const json side = {{"knot_dt", plan.knot_dt}, {"t_f", plan.t_f}, {"hold", hold_name(plan.hold)}};
    write_text(plan_sidecar(csv), side.dump(2) + "\n");
}

ControlPlan read_plan(const std::filesystem::path& csv) {
    std::istringstream in(read_text(csv));
    std::string line;
    if (!std::getline(in, line) || line != "t,u_theta,u_r,u_l,u_X") {
        throw ConfigError("plan CSV header mismatch in " + csv.string());
    }
    ControlPlan plan;
    std::vector<double> times;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> v;
        try {
            while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
        } catch (const std::logic_error&) {
            throw ConfigError("malformed plan CSV row: " + line);
        }
        if (v.size() != 5) throw ConfigError("plan CSV rows need 5 columns");
        times.push_back(v[0]);
        plan.knots.emplace_back(v[1], v[2], v[3], v[4]);
    }
    if (plan.knots.empty()) throw ConfigError("plan CSV has no rows");
    const auto side_path = plan_sidecar(csv);
    if (std::filesystem::exists(side_path)) {
        json side;
        try {
            side = json::parse(read_text(side_path));
        } catch (const json::parse_error& e) {
            throw ConfigError("plan sidecar is not valid JSON: " + std::string(e.what()));
        }
        Section s(side, "plan");
        s.get("knot_dt", plan.knot_dt);
        s.get("t_f", plan.t_f);
        std::string hold = "zero_order";
        s.get("hold", hold);
        plan.hold = parse_hold(hold);
        s.finish();
    } else {
        if (times.size() < 2) throw ConfigError("single-row plan needs a sidecar with the horizon");
        plan.knot_dt = times[1] - times[0];
        plan.t_f = times.back() + plan.knot_dt;
        plan.hold = HoldMode::kZeroOrder;
    }
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (std::abs(times[k] - plan.knot_time(k)) > 1e-9) {
            throw ConfigError("plan CSV times are not uniformly spaced by knot_dt");
        }
    }
    try {
        plan.validate();
    } catch (const ControlError& e) {
        throw ConfigError(e.what());
    }
    return plan;
}

json report_json(const SolveReport& report) {
    return {{"method", report.method},
            {"objective", report.objective},
            {"cvar_value", report.cvar_value},
            {"terminal_value", report.terminal_value},
            {"iterations", report.iterations},
            {"outer_iterations", report.outer_iterations},
            {"converged", report.converged},
            {"wall_time", report.wall_time},
            {"plan", plan_json(report.plan)}};
}

// =============================================================================
// Summaries
// =============================================================================

namespace {

json welch_json(const WelchResult& w) {
    return {{"t", w.t},
            {"df", w.df},
            {"p", w.p},
            {"significant", w.significant},
            {"degenerate", w.degenerate},
            {"marker", w.significant ? "*" : ""}};
}

std::optional<WelchResult> try_welch(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2) return std::nullopt;
    return welch_t_test(a, b, Alternative::kLess);
}

}  // namespace

json summary_json(std::span<const MetricsRecord> records, const std::string& reference) {
    const auto groups = aggregate(records);
    std::vector<double> eps;
    for (const auto& g : groups) {
        if (eps.empty() || eps.back() != g.epsilon) eps.push_back(g.epsilon);
    }
    json blocks = json::array();
    for (double e : eps) {
        json methods = json::object();
        const GroupSummary* ref = nullptr;
        for (const auto& g : groups) {
            if (g.epsilon != e) continue;
            json m = {{"locations", g.locations}, {"models", g.models}};
            for (const auto& name : metric_names()) {
                m[name] = {{"mean", g.metric(name).mean}, {"std", g.metric(name).std}};
            }
            methods[g.method] = m;
            if (g.method == reference) ref = &g;
        }
        json tests = json::array();
        if (ref != nullptr) {
            for (const auto& g : groups) {
                if (g.epsilon != e || &g == ref) continue;
                for (const auto& name : metric_names()) {
                    json t = {{"metric", name}, {"reference", reference}, {"other", g.method},
                              {"alternative", "less"}};
                    if (auto w = try_welch(ref->metric(name).per_location, g.metric(name).per_location)) {
                        t.update(welch_json(*w));
                    } else {
                        t["p"] = nullptr;
                    }
                    tests.push_back(t);
                }
            }
        }
        blocks.push_back({{"epsilon", e}, {"methods", methods}, {"tests", tests}});
    }
    return {{"reference", reference}, {"blocks", blocks}};
}

void write_plot_data(const std::filesystem::path& dir, std::span<const MetricsRecord> records,
                     const std::string& reference) {
    const auto groups = aggregate(records);
    for (const auto& name : metric_names()) {
        std::ostringstream out;
        out << "epsilon,method,mean,std,marker\n" << std::setprecision(17);
        for (const auto& g : groups) {
            std::string marker;
            if (g.method != reference) {
                for (const auto& r : groups) {
                    if (r.method == reference && r.epsilon == g.epsilon) {
                        const auto w = try_welch(r.metric(name).per_location, g.metric(name).per_location);
                        if (w && w->significant) marker = "*";
                    }
                }
            }
            out << g.epsilon << ',' << g.method << ',' << g.metric(name).mean << ','
                << g.metric(name).std << ',' << marker << '\n';
        }
        write_text(dir / ("plot_" + name + ".csv"), out.str());
    }
}

json compare_json(std::span<const MetricsRecord> a, std::span<const MetricsRecord> b) {
    const auto ga = aggregate(a);
    const auto gb = aggregate(b);
    json out = json::array();
    for (const auto& x : ga) {
        for (const auto& y : gb) {
            if (x.method != y.method || x.epsilon != y.epsilon) continue;
            for (const auto& name : metric_names()) {
                json t = {{"method", x.method}, {"epsilon", x.epsilon}, {"metric", name},
                          {"mean_a", x.metric(name).mean}, {"mean_b", y.metric(name).mean},
                          {"alternative", "a less than b"}};
                if (auto w = try_welch(x.metric(name).per_location, y.metric(name).per_location)) {
                    t.update(welch_json(*w));
                } else {
                    t["p"] = nullptr;
                }
                out.push_back(t);
            }
        }
    }
    return {{"comparisons", out}};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace tether
