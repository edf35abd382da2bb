#include "cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <set>
#include <sstream>

#include "hypo/augment.hpp"
#include "hypo/estimate.hpp"
#include "hypo/expansion.hpp"
#include "hypo/models/builtin.hpp"
#include "hypo/scheme.hpp"
#include "hypo/variates.hpp"

namespace hypo::cli {

namespace {

constexpr const char* kVersion = "0.1.0";

using ojson = nlohmann::ordered_json;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// JSON form
// ---------------------------------------------------------------------------

/// Reads keys of one JSON object, recording unknown keys and type errors.
class Reader {
public:
    Reader(const json& j, std::string path, std::vector<std::string>& errors)
        : j_(j), path_(std::move(path)), errors_(errors) {
        if (!j_.is_object()) errors_.push_back("'" + where() + "' must be an object");
    }

    template <class T>
    void get(const char* key, T& dst) {
        if (!j_.is_object() || !j_.contains(key)) return;
        seen_.insert(key);
        try {
            const json& v = j_.at(key);
            if constexpr (std::is_same_v<T, double>) {
                if (!v.is_number()) throw std::invalid_argument("expected a number");
            } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
                if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0))
                    throw std::invalid_argument("expected a non-negative integer");
            }
            dst = v.get<T>();
        } catch (const std::exception& e) {
            errors_.push_back("'" + path_ + key + "': " + e.what());
        }
    }

    Reader sub(const char* key) {
        seen_.insert(key);
        static const json empty = json::object();
        if (!j_.is_object() || !j_.contains(key)) return Reader(empty, path_ + key + ".", errors_);
        return Reader(j_.at(key), path_ + key + ".", errors_);
    }

    void finish() const {
        if (!j_.is_object()) return;
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) errors_.push_back("unknown key '" + path_ + k + "'");
    }

private:
    std::string where() const { return path_.empty() ? "<root>" : path_.substr(0, path_.size() - 1); }

    const json& j_;
    std::string path_;
    std::vector<std::string>& errors_;
    std::set<std::string> seen_;
};

std::string sibling(const std::string& csv, const std::string& tag, const std::string& ext) {
    const std::string stem = csv.size() > 4 && csv.substr(csv.size() - 4) == ".csv" ? csv.substr(0, csv.size() - 4) : csv;
    return stem + "." + tag + ext;
}

std::string iso_time_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void error_report(std::ostream& err, const std::vector<std::string>& errors) {
    ojson j;
    j["status"] = "error";
    j["errors"] = errors;
    err << j.dump(2) << '\n';
}

bool divides_day(double dt) {
    if (!(dt > 0.0)) return false;
    const double m = std::round(1.0 / dt);
    return m >= 1.0 && std::abs(m * dt - 1.0) <= 1e-9;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct Outcome {
    ojson info = ojson::object();
    std::vector<std::string> files;
};

Outcome cmd_simulate(const RunConfig& c, std::ostream& os) {
    const auto model = builtin_model(c.model, c.fixed);
    const Theta theta = model->default_theta();
    const auto& s = c.simulate;
    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model->dim()));
    for (std::size_t i = 0; i < s.x0.size(); ++i) x0[static_cast<Eigen::Index>(i)] = s.x0[i];
    SeededRng rng(c.seed, 0);
    const Path p = simulate_path(*model, parse_scheme(s.scheme), x0, theta, s.dt / static_cast<double>(s.substeps),
                                 s.n * s.substeps, rng);
    const ObservationSet obs = subsample(p, s.substeps);
    os << "t";
    for (std::size_t i = 0; i < model->dim(); ++i) os << ",x" << i;
    os << '\n' << std::setprecision(17);
    for (std::size_t m = 0; m <= obs.n(); ++m) {
        os << static_cast<double>(m) * s.dt;
        for (Eigen::Index i = 0; i < obs.states.cols(); ++i) os << ',' << obs.states(static_cast<Eigen::Index>(m), i);
        os << '\n';
    }
    Outcome o;
    o.info["rows"] = obs.n() + 1;
    return o;
}

Outcome cmd_estimate(const RunConfig& c, std::ostream& os, std::ostream& err) {
    const auto model = builtin_model(c.model, c.fixed);
    const Theta truth = model->default_theta();
    const auto& e = c.estimate;
    StudyConfig sc;
    sc.design = e.design.empty() ? StudyDesign{"custom", e.n, e.dt, e.fine_dt} : named_design(e.design);
    sc.n_replicates = e.replicates;
    sc.methods.clear();
    for (const auto& m : e.methods) sc.methods.push_back(parse_contrast_method(m));
    sc.seed = c.seed;
    sc.adam.step_size = e.adam.step_size;
    sc.adam.beta1 = e.adam.beta1;
    sc.adam.beta2 = e.adam.beta2;
    sc.adam.epsilon = e.adam.epsilon;
    sc.adam.n_iters = e.adam.iters;
    sc.start_jitter = e.start_jitter;
    sc.workers = c.workers;
    sc.qv_coords = e.qv_coords;
    const StudyTable t = replicate_study(*model, truth, sc, [&](const std::string& line) { err << line << '\n'; });
    write_study_csv(os, t);
    Outcome o;
    o.info["design"] = {{"name", sc.design.name}, {"n", sc.design.n}, {"delta", sc.design.delta}};
    o.info["failures"] = t.failures;
    for (const auto& f : t.failures) err << "failure: " << f << '\n';
    ojson summary = ojson::array();
    std::ostringstream ss;
    ss << "method,param,truth,count,mean,sd,se,rmse\n" << std::setprecision(17);
    for (const auto& r : t.summary()) {
        ss << r.method << ',' << r.param << ',' << r.truth << ',' << r.count << ',' << r.mean << ',' << r.sd << ','
           << r.se << ',' << r.rmse << '\n';
        summary.push_back({{"method", r.method}, {"param", r.param}, {"mean", r.mean}, {"sd", r.sd}});
    }
    o.info["summary"] = summary;
    if (!c.csv.empty()) {
        const std::string path = sibling(c.csv, "summary", ".csv");
        std::ofstream f(path);
        if (!f) throw InvalidArgument("cannot write '" + path + "'");
        f << ss.str();
        o.files.push_back(path);
    } else {
        err << ss.str();
    }
    return o;
}

Outcome cmd_density_bias(const RunConfig& c, std::ostream& os) {
    const auto model = builtin_model(c.model, c.fixed);
    const auto& d = c.density_bias;
    std::vector<double> ys(d.y_count);
    for (std::size_t j = 0; j < d.y_count; ++j)
        ys[j] = d.y_count == 1 ? d.y_min
                               : d.y_min + (d.y_max - d.y_min) * static_cast<double>(j) / static_cast<double>(d.y_count - 1);
    QuadratureOptions q;
    q.grid_points = d.grid_points;
    const DensityBiasTable t = ou_density_bias(*model, model->default_theta(), d.x, d.Delta, d.M, ys, q);
    // Reference curves C / M^2 with C the geometric mean of err * M^2.
    auto order2 = [&](auto member) {
        double acc = 0.0;
        for (const auto& r : t.rows) acc += std::log(r.*member * static_cast<double>(r.M * r.M));
        return std::exp(acc / static_cast<double>(t.rows.size()));
    };
    const double cI = order2(&DensityBiasRow::sup_I), cII = order2(&DensityBiasRow::sup_II);
    os << "M,sup_error_I,sup_error_II,sup_error_EM,order2_fit_I,order2_fit_II,order_I,order_II,order_EM\n"
       << std::setprecision(17);
    for (const auto& r : t.rows) {
        const double m2 = static_cast<double>(r.M * r.M);
        os << r.M << ',' << r.sup_I << ',' << r.sup_II << ',' << r.sup_EM << ',' << cI / m2 << ',' << cII / m2 << ','
           << t.order_I << ',' << t.order_II << ',' << t.order_EM << '\n';
    }
    Outcome o;
    o.info["order_I"] = t.order_I;
    o.info["order_II"] = t.order_II;
    o.info["order_EM"] = t.order_EM;
    return o;
}

Outcome cmd_moments_check(const RunConfig& c, std::ostream& os, std::ostream& err) {
    const auto& m = c.moments_check;
    std::vector<MomentQuery> queries;
    for (const auto& q : moment_catalogue(m.d_R))
        if (m.hypo || !moment_is_hypo(q.kind)) queries.push_back(q);
    os << "delta,moment,k1,k2,k3,k4,exact,mean,std_error,z,pass\n" << std::setprecision(17);
    std::size_t total = 0, passed = 0;
    for (std::size_t i = 0; i < m.deltas.size(); ++i) {
        const auto est = estimate_moments(queries, m.deltas[i], m.d_R, m.hypo, m.samples, SeededRng(c.seed, i));
        for (const auto& e : est) {
            const double z = e.z_score();
            const bool ok = std::abs(z) <= m.max_z;
            ++total;
            passed += ok ? 1 : 0;
            os << m.deltas[i] << ',' << to_string(e.query.kind);
            for (std::size_t s = 0; s < 4; ++s) os << ',' << (s < moment_arity(e.query.kind) ? e.query.k[s] : 0);
            os << ',' << e.exact << ',' << e.mean << ',' << e.std_error << ',' << z << ',' << (ok ? 1 : 0) << '\n';
        }
    }
    err << "moments-check: " << passed << " of " << total << " within " << m.max_z << " standard errors\n";
    Outcome o;
    o.info["checks"] = total;
    o.info["passed"] = passed;
    return o;
}

Outcome cmd_mcmc(const RunConfig& c, std::ostream& os, std::ostream& err) {
    const auto& m = c.mcmc;
    SirDemoConfig sd;
    sd.scheme = parse_scheme(m.scheme);
    sd.dt = m.dt;
    sd.iters = m.iters;
    sd.warmup = m.warmup;
    sd.step_size = m.step_size;
    sd.n_leapfrog = m.n_leapfrog;
    sd.map_iters = m.map_iters;
    sd.seed = c.seed;
    const SirDemoResult r = run_sir_demo(sd);
    write_chain_csv(os, r.summaries, r.names);
    std::ostringstream ss;
    write_posterior_summary_csv(ss, r.stats);
    Outcome o;
    o.info["acceptance_rate"] = r.chain.acceptance_rate();
    o.info["divergences"] = r.chain.divergences;
    o.info["map_logpost"] = r.map_logpost;
    err << "mcmc: acceptance " << r.chain.acceptance_rate() << ", divergences " << r.chain.divergences << '\n';
    if (!c.csv.empty()) {
        const std::string path = sibling(c.csv, "summary", ".csv");
        std::ofstream f(path);
        if (!f) throw InvalidArgument("cannot write '" + path + "'");
        f << ss.str();
        o.files.push_back(path);
    } else {
        err << ss.str();
    }
    return o;
}

// ---------------------------------------------------------------------------
// Flags
// ---------------------------------------------------------------------------

template <class T>
struct IsVector : std::false_type {};
template <class T>
struct IsVector<std::vector<T>> : std::true_type {};

using Overrides = std::vector<std::function<void(RunConfig&)>>;

template <class T>
void add_override(CLI::App* app, Overrides& ov, const std::string& name, const std::string& desc, T& (*field)(RunConfig&)) {
    auto holder = std::make_shared<T>();
    CLI::Option* opt = app->add_option(name, *holder, desc);
    if constexpr (IsVector<T>::value) opt->delimiter(',');
    ov.push_back([holder, opt, field](RunConfig& c) {
        if (opt->count() > 0) field(c) = *holder;
    });
}

}  // namespace

// ---------------------------------------------------------------------------
// Public interface
// ---------------------------------------------------------------------------

nlohmann::ordered_json to_json(const RunConfig& c) {
    ojson j;
    j["command"] = c.command;
    j["model"] = c.model;
    j["fixed"] = ojson::object();
    for (const auto& [k, v] : c.fixed) j["fixed"][k] = v;
    j["seed"] = c.seed;
    j["workers"] = c.workers;
    j["output"] = {{"csv", c.csv}, {"manifest", c.manifest}};
    const auto& s = c.simulate;
    j["simulate"] = {{"n", s.n}, {"dt", s.dt}, {"scheme", s.scheme}, {"substeps", s.substeps}, {"x0", s.x0}};
    const auto& e = c.estimate;
    j["estimate"] = {{"design", e.design},
                     {"n", e.n},
                     {"dt", e.dt},
                     {"fine_dt", e.fine_dt},
                     {"replicates", e.replicates},
                     {"methods", e.methods},
                     {"adam",
                      {{"step_size", e.adam.step_size},
                       {"beta1", e.adam.beta1},
                       {"beta2", e.adam.beta2},
                       {"epsilon", e.adam.epsilon},
                       {"iters", e.adam.iters}}},
                     {"start_jitter", e.start_jitter},
                     {"qv_coords", e.qv_coords}};
    const auto& d = c.density_bias;
    j["density_bias"] = {{"Delta", d.Delta}, {"M", d.M},         {"x", d.x},
                         {"y_min", d.y_min}, {"y_max", d.y_max}, {"y_count", d.y_count},
                         {"grid_points", d.grid_points}};
    const auto& m = c.moments_check;
    j["moments_check"] = {
        {"samples", m.samples}, {"deltas", m.deltas}, {"d_R", m.d_R}, {"hypo", m.hypo}, {"max_z", m.max_z}};
    const auto& h = c.mcmc;
    j["mcmc"] = {{"scheme", h.scheme},       {"dt", h.dt},
                 {"iters", h.iters},         {"warmup", h.warmup},
                 {"step_size", h.step_size}, {"n_leapfrog", h.n_leapfrog},
                 {"map_iters", h.map_iters}};
    return j;
}

RunConfig from_json(const nlohmann::json& j, std::vector<std::string>& errors) {
    RunConfig c;
    Reader r(j, "", errors);
    r.get("command", c.command);
    r.get("model", c.model);
    r.get("fixed", c.fixed);
    r.get("seed", c.seed);
    r.get("workers", c.workers);
    {
        Reader o = r.sub("output");
        o.get("csv", c.csv);
        o.get("manifest", c.manifest);
        o.finish();
    }
    {
        Reader s = r.sub("simulate");
        s.get("n", c.simulate.n);
        s.get("dt", c.simulate.dt);
        s.get("scheme", c.simulate.scheme);
        s.get("substeps", c.simulate.substeps);
        s.get("x0", c.simulate.x0);
        s.finish();
    }
    {
        Reader e = r.sub("estimate");
        auto& t = c.estimate;
        e.get("design", t.design);
        e.get("n", t.n);
        e.get("dt", t.dt);
        e.get("fine_dt", t.fine_dt);
        e.get("replicates", t.replicates);
        e.get("methods", t.methods);
        Reader a = e.sub("adam");
        a.get("step_size", t.adam.step_size);
        a.get("beta1", t.adam.beta1);
        a.get("beta2", t.adam.beta2);
        a.get("epsilon", t.adam.epsilon);
        a.get("iters", t.adam.iters);
        a.finish();
        e.get("start_jitter", t.start_jitter);
        e.get("qv_coords", t.qv_coords);
        e.finish();
    }
    {
        Reader d = r.sub("density_bias");
        auto& t = c.density_bias;
        d.get("Delta", t.Delta);
        d.get("M", t.M);
        d.get("x", t.x);
        d.get("y_min", t.y_min);
        d.get("y_max", t.y_max);
        d.get("y_count", t.y_count);
        d.get("grid_points", t.grid_points);
        d.finish();
    }
    {
        Reader m = r.sub("moments_check");
        auto& t = c.moments_check;
        m.get("samples", t.samples);
        m.get("deltas", t.deltas);
        m.get("d_R", t.d_R);
        m.get("hypo", t.hypo);
        m.get("max_z", t.max_z);
        m.finish();
    }
    {
        Reader h = r.sub("mcmc");
        auto& t = c.mcmc;
        h.get("scheme", t.scheme);
        h.get("dt", t.dt);
        h.get("iters", t.iters);
        h.get("warmup", t.warmup);
        h.get("step_size", t.step_size);
        h.get("n_leapfrog", t.n_leapfrog);
        h.get("map_iters", t.map_iters);
        h.finish();
    }
    r.finish();
    return c;
}

std::vector<std::string> validate(const RunConfig& c) {
    std::vector<std::string> errs;
    auto need = [&](bool ok, const std::string& msg) {
        if (!ok) errs.push_back(msg);
    };
    need(std::find(commands().begin(), commands().end(), c.command) != commands().end(),
         "unknown command '" + c.command + "'");
    std::size_t dim = 0;
    std::string model_name;
    try {
        const auto m = builtin_model(c.model, c.fixed);
        dim = m->dim();
        model_name = m->name();
    } catch (const std::exception& e) {
        errs.push_back(std::string("model: ") + e.what());
    }
    need(c.workers >= 1, "workers must be at least 1");

    if (c.command == "simulate") {
        const auto& s = c.simulate;
        need(s.n >= 1, "simulate.n must be at least 1");
        need(s.dt > 0.0 && std::isfinite(s.dt), "simulate.dt must be positive");
        need(s.substeps >= 1, "simulate.substeps must be at least 1");
        try {
            parse_scheme(s.scheme);
        } catch (const std::exception& e) {
            errs.push_back(std::string("simulate.scheme: ") + e.what());
        }
        need(s.x0.empty() || dim == 0 || s.x0.size() == dim,
             "simulate.x0 needs " + std::to_string(dim) + " entries");
    } else if (c.command == "estimate") {
        const auto& e = c.estimate;
        if (!e.design.empty()) {
            try {
                named_design(e.design);
            } catch (const std::exception& ex) {
                errs.push_back(std::string("estimate.design: ") + ex.what());
            }
        } else {
            need(e.n >= 1, "estimate.n must be at least 1");
            need(e.dt > 0.0 && e.fine_dt > 0.0, "estimate.dt and estimate.fine_dt must be positive");
            if (e.dt > 0.0 && e.fine_dt > 0.0) {
                const double k = std::round(e.dt / e.fine_dt);
                need(k >= 1.0 && std::abs(k * e.fine_dt - e.dt) <= 1e-9 * e.dt,
                     "estimate.dt must be a multiple of estimate.fine_dt");
            }
        }
        need(e.replicates >= 1, "estimate.replicates must be at least 1");
        need(!e.methods.empty(), "estimate.methods must not be empty");
        for (const auto& m : e.methods) {
            try {
                parse_contrast_method(m);
            } catch (const std::exception& ex) {
                errs.push_back(std::string("estimate.methods: ") + ex.what());
            }
        }
        need(e.adam.iters >= 1, "estimate.adam.iters must be at least 1");
        need(e.adam.step_size > 0.0, "estimate.adam.step_size must be positive");
        need(e.adam.beta1 >= 0.0 && e.adam.beta1 < 1.0 && e.adam.beta2 >= 0.0 && e.adam.beta2 < 1.0,
             "estimate.adam betas must lie in [0, 1)");
        need(e.start_jitter >= 0.0 && e.start_jitter < 1.0, "estimate.start_jitter must lie in [0, 1)");
        for (std::size_t q : e.qv_coords) need(dim == 0 || q < dim, "estimate.qv_coords entry out of range");
    } else if (c.command == "density-bias") {
        const auto& d = c.density_bias;
        need(model_name.empty() || model_name == "ou", "density-bias needs model 'ou'");
        need(d.Delta > 0.0, "density_bias.Delta must be positive");
        need(!d.M.empty(), "density_bias.M must not be empty");
        for (std::size_t m : d.M) need(m >= 1, "density_bias.M entries must be at least 1");
        need(d.y_count >= 1, "density_bias.y_count must be at least 1");
        need(d.y_max >= d.y_min, "density_bias.y_max must not be below y_min");
        need(d.grid_points >= 3, "density_bias.grid_points must be at least 3");
    } else if (c.command == "moments-check") {
        const auto& m = c.moments_check;
        need(m.samples >= 2, "moments_check.samples must be at least 2");
        need(!m.deltas.empty(), "moments_check.deltas must not be empty");
        for (double d : m.deltas) need(d > 0.0 && std::isfinite(d), "moments_check.deltas must be positive");
        need(m.d_R >= 1 && m.d_R <= kMaxRough, "moments_check.d_R must lie in 1.." + std::to_string(kMaxRough));
        need(m.max_z > 0.0, "moments_check.max_z must be positive");
    } else if (c.command == "mcmc") {
        const auto& h = c.mcmc;
        need(model_name.empty() || model_name == "sir_log", "mcmc needs model 'sir_log'");
        need(h.scheme == "em" || h.scheme == "euler" || h.scheme == "weak2", "mcmc.scheme must be em or weak2");
        need(divides_day(h.dt), "mcmc.dt must divide one day");
        need(h.iters >= 1, "mcmc.iters must be at least 1");
        need(h.step_size > 0.0, "mcmc.step_size must be positive");
        need(h.n_leapfrog >= 1, "mcmc.n_leapfrog must be at least 1");
    }
    return errs;
}

std::string config_hash(const RunConfig& c) {
    const std::string s = to_json(c).dump();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

RunConfig default_config(const std::string& command) {
    RunConfig c;
    c.command = command;
    if (command == "mcmc") c.model = "sir_log";
    return c;
}

int run(const RunConfig& c, std::ostream& out, std::ostream& err) {
    const auto errs = validate(c);
    if (!errs.empty()) {
        error_report(err, errs);
        return 2;
    }
    const auto t0 = std::chrono::steady_clock::now();
    const std::string started = iso_time_now();
    try {
        std::ofstream file;
        if (!c.csv.empty()) {
            file.open(c.csv);
            if (!file) throw InvalidArgument("cannot write '" + c.csv + "'");
        }
        std::ostream& os = c.csv.empty() ? out : file;
        Outcome o;
        if (c.command == "simulate") o = cmd_simulate(c, os);
        else if (c.command == "estimate") o = cmd_estimate(c, os, err);
        else if (c.command == "density-bias") o = cmd_density_bias(c, os);
        else if (c.command == "moments-check") o = cmd_moments_check(c, os, err);
        else o = cmd_mcmc(c, os, err);
        if (file.is_open()) file.close();
        if (!c.csv.empty()) o.files.insert(o.files.begin(), c.csv);

        const std::string manifest = !c.manifest.empty() ? c.manifest
                                     : !c.csv.empty()    ? sibling(c.csv, "manifest", ".json")
                                                         : std::string();
        if (!manifest.empty()) {
            ojson m;
            m["status"] = "ok";
            m["tool"] = "hypo";
            m["version"] = kVersion;
            m["compiler"] = __VERSION__;
            m["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                         std::to_string(EIGEN_MINOR_VERSION);
            m["command"] = c.command;
            m["config_hash"] = config_hash(c);
            m["config"] = to_json(c);
            m["started_at"] = started;
            m["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            m["outputs"] = o.files;
            m["results"] = o.info;
            std::ofstream f(manifest);
            if (!f) throw InvalidArgument("cannot write '" + manifest + "'");
            f << m.dump(2) << '\n';
        }
        return 0;
    } catch (const std::exception& e) {
        error_report(err, {e.what()});
        return 1;
    }
}

int main_with_args(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Simulation, estimation and density-bias experiments for (hypo-)elliptic diffusions", "hypo"};
    app.fallthrough();
    app.require_subcommand(1);
    std::string config_path;
    bool dump = false;
    std::vector<std::string> params;
    Overrides ov;
    app.add_option("--config", config_path, "JSON configuration file (flags override it)");
    app.add_flag("--dump-config", dump, "Print the effective configuration as JSON and exit");
    app.add_option("--param", params, "Freeze a model parameter, name=value (repeatable)");
    add_override<std::string>(&app, ov, "--model", "Built-in model name", [](RunConfig& c) -> std::string& { return c.model; });
    auto seed_holder = std::make_shared<std::uint64_t>();
    CLI::Option* seed_opt = app.add_option("--seed", *seed_holder, "Master seed (default: HYPO_SEED or 0)");
    add_override<std::size_t>(&app, ov, "--workers", "Worker threads", [](RunConfig& c) -> std::size_t& { return c.workers; });
    add_override<std::string>(&app, ov, "--out", "CSV output path (default stdout)", [](RunConfig& c) -> std::string& { return c.csv; });
    add_override<std::string>(&app, ov, "--manifest", "JSON manifest path", [](RunConfig& c) -> std::string& { return c.manifest; });

    auto* sim = app.add_subcommand("simulate", "Simulate a path and write it as CSV");
    add_override<std::size_t>(sim, ov, "--n", "Output steps", [](RunConfig& c) -> std::size_t& { return c.simulate.n; });
    add_override<double>(sim, ov, "--dt", "Output step", [](RunConfig& c) -> double& { return c.simulate.dt; });
    add_override<std::string>(sim, ov, "--scheme", "em, weak2 or lg", [](RunConfig& c) -> std::string& { return c.simulate.scheme; });
    add_override<std::size_t>(sim, ov, "--substeps", "Fine steps per output step", [](RunConfig& c) -> std::size_t& { return c.simulate.substeps; });
    add_override<std::vector<double>>(sim, ov, "--x0", "Initial state, comma separated", [](RunConfig& c) -> std::vector<double>& { return c.simulate.x0; });

    auto* est = app.add_subcommand("estimate", "Replicate contrast estimation study");
    add_override<std::string>(est, ov, "--design", "fn1..fn3, jr1..jr3", [](RunConfig& c) -> std::string& { return c.estimate.design; });
    add_override<std::size_t>(est, ov, "--n", "Transitions (custom design)", [](RunConfig& c) -> std::size_t& { return c.estimate.n; });
    add_override<double>(est, ov, "--dt", "Observation step (custom design)", [](RunConfig& c) -> double& { return c.estimate.dt; });
    add_override<double>(est, ov, "--fine-dt", "Simulation step (custom design)", [](RunConfig& c) -> double& { return c.estimate.fine_dt; });
    add_override<std::size_t>(est, ov, "--replicates", "Replicates", [](RunConfig& c) -> std::size_t& { return c.estimate.replicates; });
    add_override<std::vector<std::string>>(est, ov, "--methods", "new,lg", [](RunConfig& c) -> std::vector<std::string>& { return c.estimate.methods; });
    add_override<std::size_t>(est, ov, "--adam-iters", "Adam iterations", [](RunConfig& c) -> std::size_t& { return c.estimate.adam.iters; });
    add_override<double>(est, ov, "--adam-step", "Adam step size", [](RunConfig& c) -> double& { return c.estimate.adam.step_size; });
    add_override<double>(est, ov, "--jitter", "Start jitter", [](RunConfig& c) -> double& { return c.estimate.start_jitter; });
    add_override<std::vector<std::size_t>>(est, ov, "--qv-coords", "Coordinates for the QV baseline", [](RunConfig& c) -> std::vector<std::size_t>& { return c.estimate.qv_coords; });

    auto* db = app.add_subcommand("density-bias", "Iterated-density error against the exact OU transition");
    add_override<double>(db, ov, "--Delta", "Observation gap", [](RunConfig& c) -> double& { return c.density_bias.Delta; });
    add_override<std::vector<std::size_t>>(db, ov, "--M", "Imputation counts, comma separated", [](RunConfig& c) -> std::vector<std::size_t>& { return c.density_bias.M; });
    add_override<double>(db, ov, "--x", "Start point", [](RunConfig& c) -> double& { return c.density_bias.x; });
    add_override<double>(db, ov, "--y-min", "Lowest target", [](RunConfig& c) -> double& { return c.density_bias.y_min; });
    add_override<double>(db, ov, "--y-max", "Highest target", [](RunConfig& c) -> double& { return c.density_bias.y_max; });
    add_override<std::size_t>(db, ov, "--y-count", "Targets", [](RunConfig& c) -> std::size_t& { return c.density_bias.y_count; });
    add_override<std::size_t>(db, ov, "--grid-points", "Quadrature points per stage", [](RunConfig& c) -> std::size_t& { return c.density_bias.grid_points; });

    auto* mc = app.add_subcommand("moments-check", "Monte-Carlo check of the variate moment catalogue");
    add_override<std::size_t>(mc, ov, "--samples", "Draws per step size", [](RunConfig& c) -> std::size_t& { return c.moments_check.samples; });
    add_override<std::vector<double>>(mc, ov, "--deltas", "Step sizes", [](RunConfig& c) -> std::vector<double>& { return c.moments_check.deltas; });
    add_override<std::size_t>(mc, ov, "--dR", "Noise channels", [](RunConfig& c) -> std::size_t& { return c.moments_check.d_R; });
    add_override<bool>(mc, ov, "--hypo", "Include hypo-elliptic variates (true/false)", [](RunConfig& c) -> bool& { return c.moments_check.hypo; });
    add_override<double>(mc, ov, "--max-z", "Pass threshold in standard errors", [](RunConfig& c) -> double& { return c.moments_check.max_z; });

    auto* mm = app.add_subcommand("mcmc", "SIR data augmentation with fixed-step HMC");
    add_override<std::string>(mm, ov, "--scheme", "em or weak2", [](RunConfig& c) -> std::string& { return c.mcmc.scheme; });
    add_override<double>(mm, ov, "--dt", "Imputation step (divides one day)", [](RunConfig& c) -> double& { return c.mcmc.dt; });
    add_override<std::size_t>(mm, ov, "--iters", "Kept iterations", [](RunConfig& c) -> std::size_t& { return c.mcmc.iters; });
    add_override<std::size_t>(mm, ov, "--warmup", "Discarded iterations", [](RunConfig& c) -> std::size_t& { return c.mcmc.warmup; });
    add_override<double>(mm, ov, "--step-size", "Leapfrog step", [](RunConfig& c) -> double& { return c.mcmc.step_size; });
    add_override<std::size_t>(mm, ov, "--leapfrog", "Leapfrog steps per iteration", [](RunConfig& c) -> std::size_t& { return c.mcmc.n_leapfrog; });
    add_override<std::size_t>(mm, ov, "--map-iters", "Adam steps before sampling", [](RunConfig& c) -> std::size_t& { return c.mcmc.map_iters; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        error_report(err, {e.what()});
        return 2;
    }
    const std::string command = app.get_subcommands().front()->get_name();

    std::vector<std::string> errs;
    RunConfig c = default_config(command);
    bool seed_in_file = false;
    if (!config_path.empty()) {
        std::ifstream f(config_path);
        if (!f) {
            error_report(err, {"cannot read config '" + config_path + "'"});
            return 2;
        }
        json j;
        try {
            j = json::parse(f);
        } catch (const std::exception& e) {
            error_report(err, {std::string("config: ") + e.what()});
            return 2;
        }
        if (j.is_object() && !j.contains("model") && command == "mcmc") j["model"] = c.model;
        c = from_json(j, errs);
        seed_in_file = j.is_object() && j.contains("seed");
        if (!c.command.empty() && c.command != command)
            errs.push_back("config command '" + c.command + "' does not match subcommand '" + command + "'");
        c.command = command;
    }
    for (const auto& f : ov) f(c);
    for (const auto& p : params) {
        const auto eq = p.find('=');
        if (eq == std::string::npos || eq == 0) {
            errs.push_back("--param expects name=value, got '" + p + "'");
            continue;
        }
        try {
            std::size_t used = 0;
            const double v = std::stod(p.substr(eq + 1), &used);
            if (used != p.size() - eq - 1) throw std::invalid_argument("trailing characters");
            c.fixed[p.substr(0, eq)] = v;
        } catch (const std::exception&) {
            errs.push_back("--param value for '" + p.substr(0, eq) + "' is not a number");
        }
    }
    if (seed_opt->count() > 0) {
        c.seed = *seed_holder;
    } else if (!seed_in_file) {
        if (const char* env = std::getenv("HYPO_SEED")) {
            try {
                std::size_t used = 0;
                c.seed = std::stoull(env, &used);
                if (env[used] != '\0') throw std::invalid_argument("trailing characters");
            } catch (const std::exception&) {
                errs.push_back(std::string("HYPO_SEED is not an unsigned integer: '") + env + "'");
            }
        }
    }
    if (dump) {
        out << to_json(c).dump(2) << '\n';
        if (!errs.empty()) error_report(err, errs);
        return errs.empty() ? 0 : 2;
    }
    const auto more = validate(c);
    errs.insert(errs.end(), more.begin(), more.end());
    if (!errs.empty()) {
        error_report(err, errs);
        return 2;
    }
    return run(c, out, err);
}

}  // namespace hypo::cli
