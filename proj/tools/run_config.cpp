#include "run_config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <variant>

namespace trbsde::cli {

namespace pt = boost::property_tree;

const std::vector<ExperimentInfo>& experiments() {
    static const std::vector<ExperimentInfo> list{
        {"lq-sweep", "TR-BSDE vs PNAA gradient MSE on the linear-quadratic system over a noise sweep"},
        {"pendulum", "initial-distribution support optimisation on the inverted pendulum"},
        {"finetune", "TR-BSDE and adjoint-matching fine-tuning of a 1-D diffusion toward tilted targets"},
    };
    return list;
}

namespace {

using Ref = std::variant<int*, double*, std::uint64_t*, bool*, std::string*, std::vector<double>*,
                         std::vector<GradientMethod>*>;

struct Field {
    std::string section;
    std::string key;
    Ref ref;
};

std::vector<Field> fields(RunConfig& c) {
    std::vector<Field> f{
        {"run", "experiment", &c.experiment},
        {"run", "output", &c.output},
        {"run", "seed", &c.seed},
    };
    auto add = [&f](const char* section, std::initializer_list<std::pair<const char*, Ref>> items) {
        for (const auto& [k, r] : items) f.push_back({section, k, r});
    };

    auto& lq = c.lq;
    add("lq", {{"epsilons", &lq.epsilons},
               {"seeds", &lq.n_seeds},
               {"n_paths", &lq.phi.n_paths},
               {"n_steps", &lq.phi.n_steps},
               {"outer_iterations", &lq.phi.outer_iterations},
               {"regression_steps", &lq.phi.regression.steps},
               {"regression_batch", &lq.phi.regression.batch_size},
               {"score_steps", &lq.phi.score_train.steps},
               {"score_batch", &lq.phi.score_train.batch_size},
               {"learning_rate", &lq.phi.regression_lr},
               {"score_learning_rate", &lq.phi.score_lr},
               {"hidden", &lq.phi.shape.hidden},
               {"depth", &lq.phi.shape.depth},
               {"pnaa_steps", &lq.pnaa_steps},
               {"eval_samples", &lq.eval_samples}});

    auto& p = c.pendulum;
    add("pendulum", {{"seeds", &c.pendulum_seeds},
                     {"n_points", &p.n_points},
                     {"methods", &p.methods},
                     {"iterations", &p.opt.iterations},
                     {"step", &p.opt.step},
                     {"refresh_every", &p.opt.refresh_every},
                     {"log_every", &p.opt.log_every},
                     {"log_rollouts", &p.opt.log_rollouts},
                     {"pathwise_rollouts", &p.opt.pathwise_rollouts},
                     {"freeze_radius", &p.opt.freeze_radius},
                     {"snapshot_every", &p.opt.snapshot_every},
                     {"horizon", &p.opt.phi.horizon},
                     {"n_steps", &p.opt.phi.n_steps},
                     {"n_paths", &p.opt.phi.n_paths},
                     {"outer_iterations", &p.opt.phi.outer_iterations},
                     {"regression_steps", &p.opt.phi.regression.steps},
                     {"regression_batch", &p.opt.phi.regression.batch_size},
                     {"score_steps", &p.opt.phi.score_train.steps},
                     {"score_batch", &p.opt.phi.score_train.batch_size},
                     {"learning_rate", &p.opt.phi.regression_lr},
                     {"score_learning_rate", &p.opt.phi.score_lr},
                     {"damping", &p.damping},
                     {"noise", &p.noise},
                     {"map_resolution", &p.map.resolution},
                     {"map_rollouts", &p.map.rollouts},
                     {"theta_min", &p.map.theta_min},
                     {"theta_max", &p.map.theta_max},
                     {"omega_min", &p.map.omega_min},
                     {"omega_max", &p.map.omega_max}});

    auto& ft = c.finetune;
    add("finetune", {{"betas", &ft.betas},
                     {"seeds", &ft.n_seeds},
                     {"target_weights", &ft.target.weights},
                     {"target_means", &ft.target.means},
                     {"target_variances", &ft.target.variances},
                     {"rate", &ft.rate},
                     {"horizon", &ft.horizon},
                     {"center", &ft.center},
                     {"outer_iterations", &ft.ft.outer_iterations},
                     {"inner_iterations", &ft.ft.inner_iterations},
                     {"q0_steps", &ft.ft.q0_steps},
                     {"q0_update_every", &ft.ft.q0_update_every},
                     {"q0_samples", &ft.ft.q0_samples},
                     {"q0_learning_rate", &ft.ft.q0_lr},
                     {"n_paths", &ft.ft.n_paths},
                     {"n_steps", &ft.ft.n_steps},
                     {"regression_steps", &ft.ft.regression.steps},
                     {"regression_batch", &ft.ft.regression.batch_size},
                     {"score_steps", &ft.ft.score_train.steps},
                     {"score_batch", &ft.ft.score_train.batch_size},
                     {"learning_rate", &ft.ft.net_lr},
                     {"score_learning_rate", &ft.ft.score_lr},
                     {"hidden", &ft.ft.shape.hidden},
                     {"depth", &ft.ft.shape.depth},
                     {"eval_paths", &ft.ft.eval_paths},
                     {"n_samples", &ft.n_samples},
                     {"run_trbsde", &ft.run_trbsde},
                     {"run_adjoint_matching", &ft.run_adjoint_matching}});
    return f;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

// Accepts plain numbers and ratios such as 1/8.
double parse_double(const std::string& raw) {
    const std::string s = trim(raw);
    const auto slash = s.find('/');
    if (slash != std::string::npos) {
        const double den = parse_double(s.substr(slash + 1));
        if (den == 0.0) throw ConfigError("division by zero in '" + s + "'");
        return parse_double(s.substr(0, slash)) / den;
    }
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) throw ConfigError("not a number: '" + s + "'");
    return v;
}

template <typename Int>
Int parse_int(const std::string& raw) {
    const std::string s = trim(raw);
    Int v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) throw ConfigError("not an integer: '" + s + "'");
    return v;
}

std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

struct Reader {
    const std::string& text;
    void operator()(int* r) const { *r = parse_int<int>(text); }
    void operator()(std::uint64_t* r) const { *r = parse_int<std::uint64_t>(text); }
    void operator()(double* r) const { *r = parse_double(text); }
    void operator()(std::string* r) const { *r = trim(text); }
    void operator()(bool* r) const {
        const std::string s = trim(text);
        if (s == "true" || s == "1" || s == "yes") *r = true;
        else if (s == "false" || s == "0" || s == "no") *r = false;
        else throw ConfigError("not a boolean: '" + s + "'");
    }
    void operator()(std::vector<double>* r) const {
        r->clear();
        for (const auto& s : split(text)) r->push_back(parse_double(s));
    }
    void operator()(std::vector<GradientMethod>* r) const {
        r->clear();
        try {
            for (const auto& s : split(text)) r->push_back(parse_method(s));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
};

struct Writer {
    std::string operator()(const int* r) const { return std::to_string(*r); }
    std::string operator()(const std::uint64_t* r) const { return std::to_string(*r); }
    std::string operator()(const double* r) const { return format_double(*r); }
    std::string operator()(const std::string* r) const { return *r; }
    std::string operator()(const bool* r) const { return *r ? "true" : "false"; }
    std::string operator()(const std::vector<double>* r) const {
        std::string s;
        for (std::size_t i = 0; i < r->size(); ++i) s += (i ? ", " : "") + format_double((*r)[i]);
        return s;
    }
    std::string operator()(const std::vector<GradientMethod>* r) const {
        std::string s;
        for (std::size_t i = 0; i < r->size(); ++i) s += (i ? ", " : "") + std::string(method_name((*r)[i]));
        return s;
    }
};

std::string section_for(const std::string& experiment) {
    if (experiment == "lq-sweep") return "lq";
    if (experiment == "pendulum") return "pendulum";
    if (experiment == "finetune") return "finetune";
    throw ConfigError("unknown experiment id: '" + experiment + "'");
}

// Derived settings that must track other fields.
void sync(RunConfig& c) {
    c.pendulum.map.horizon = c.pendulum.opt.phi.horizon;
    c.pendulum.map.n_steps = c.pendulum.opt.phi.n_steps;
    c.pendulum.map.seed = c.seed;
    c.pendulum.seed = c.seed;
    c.pendulum.opt.seed = c.seed;
    c.lq.seed = c.seed;
    c.finetune.ft.seed = c.seed;
}

RunConfig from_tree(const pt::ptree& tree) {
    std::string experiment = "lq-sweep";
    if (auto run = tree.get_child_optional("run"))
        if (auto e = run->get_optional<std::string>("experiment")) experiment = trim(*e);
    section_for(experiment);
    RunConfig c = default_config(experiment);

    std::vector<Field> fs = fields(c);
    std::set<std::pair<std::string, std::string>> known;
    for (const auto& f : fs) known.insert({f.section, f.key});
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty())
            throw ConfigError("key '" + section + "' must be inside a section");
        for (const auto& [key, value] : body) {
            if (!known.count({section, key})) throw ConfigError("unknown key [" + section + "] " + key);
        }
    }
    for (const auto& f : fs) {
        if (auto v = tree.get_optional<std::string>(pt::ptree::path_type(f.section + "." + f.key, '.'))) {
            try {
                std::visit(Reader{*v}, f.ref);
            } catch (const ConfigError& e) {
                throw ConfigError("[" + f.section + "] " + f.key + ": " + e.what());
            }
        }
    }
    sync(c);
    return c;
}

}  // namespace

RunConfig default_config(const std::string& experiment) {
    section_for(experiment);
    RunConfig c;
    c.experiment = experiment;
    c.output = "results/" + experiment;
    sync(c);
    return c;
}

RunConfig parse_config(const std::string& text) {
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    return from_tree(tree);
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

void validate(const RunConfig& c) {
    auto require = [](bool ok, const std::string& what) {
        if (!ok) throw ConfigError("invalid parameter: " + what);
    };
    auto positive_budget = [&](const std::string& s, const SolvePhiConfig& p) {
        require(p.n_paths >= 1, s + ".n_paths must be >= 1");
        require(p.n_steps >= 1, s + ".n_steps must be >= 1");
        require(p.horizon > 0.0, s + ".horizon must be > 0");
        require(p.outer_iterations >= 1, s + ".outer_iterations must be >= 1");
        require(p.regression.steps >= 1 && p.regression.batch_size >= 1, s + " regression budget must be >= 1");
        require(p.score_train.steps >= 0 && p.score_train.batch_size >= 1, s + " score budget invalid");
        require(p.regression_lr > 0.0 && p.score_lr > 0.0, s + " learning rates must be > 0");
        require(p.shape.hidden >= 1 && p.shape.depth >= 1, s + " network shape must be >= 1");
    };
    const std::string sec = section_for(c.experiment);
    require(!c.output.empty(), "run.output must not be empty");

    if (sec == "lq") {
        require(!c.lq.epsilons.empty(), "lq.epsilons must not be empty");
        for (double e : c.lq.epsilons) require(e > 0.0 && std::isfinite(e), "lq.epsilons must be > 0");
        require(c.lq.n_seeds >= 1, "lq.seeds must be >= 1");
        require(c.lq.pnaa_steps >= 0, "lq.pnaa_steps must be >= 0");
        require(c.lq.eval_samples >= 1, "lq.eval_samples must be >= 1");
        positive_budget("lq", c.lq.phi);
    } else if (sec == "pendulum") {
        const auto& p = c.pendulum;
        require(c.pendulum_seeds >= 1, "pendulum.seeds must be >= 1");
        require(p.n_points >= 1, "pendulum.n_points must be >= 1");
        require(!p.methods.empty(), "pendulum.methods must not be empty");
        require(p.opt.iterations >= 1, "pendulum.iterations must be >= 1");
        require(p.opt.step > 0.0, "pendulum.step must be > 0");
        require(p.opt.refresh_every >= 1, "pendulum.refresh_every must be >= 1");
        require(p.opt.log_every >= 1 && p.opt.log_rollouts >= 1, "pendulum logging cadence must be >= 1");
        require(p.opt.pathwise_rollouts >= 1, "pendulum.pathwise_rollouts must be >= 1");
        require(p.opt.freeze_radius > 0.0, "pendulum.freeze_radius must be > 0");
        require(p.opt.snapshot_every >= 0, "pendulum.snapshot_every must be >= 0");
        require(p.damping >= 0.0 && p.noise >= 0.0, "pendulum damping and noise must be >= 0");
        require(p.map.resolution >= 2 && p.map.rollouts >= 1, "pendulum map resolution >= 2 and rollouts >= 1");
        require(p.map.theta_min < p.map.theta_max && p.map.omega_min < p.map.omega_max, "pendulum map box is empty");
        positive_budget("pendulum", p.opt.phi);
    } else {
        const auto& f = c.finetune;
        require(!f.betas.empty(), "finetune.betas must not be empty");
        for (double b : f.betas) require(b >= 0.0 && std::isfinite(b), "finetune.betas must be >= 0");
        require(f.n_seeds >= 1, "finetune.seeds must be >= 1");
        try {
            f.target.validate();
        } catch (const std::exception& e) {
            throw ConfigError(std::string("finetune target: ") + e.what());
        }
        require(f.rate > 0.0 && f.horizon > 0.0, "finetune.rate and horizon must be > 0");
        require(std::exp(-f.rate * f.horizon / 2.0) <= 0.05, "finetune.rate * horizon too small (need e^{-rate T/2} <= 0.05)");
        const auto& ft = f.ft;
        require(ft.outer_iterations >= 1 && ft.inner_iterations >= 1, "finetune iteration counts must be >= 1");
        require(ft.q0_steps >= 0 && ft.q0_update_every >= 0 && ft.q0_samples >= 1, "finetune q0 settings invalid");
        require(ft.q0_lr > 0.0 && ft.net_lr > 0.0 && ft.score_lr > 0.0, "finetune learning rates must be > 0");
        require(ft.n_paths >= 1 && ft.n_steps >= 1 && ft.eval_paths >= 1, "finetune path counts must be >= 1");
        require(ft.regression.steps >= 1 && ft.regression.batch_size >= 1, "finetune regression budget must be >= 1");
        require(ft.score_train.steps >= 0 && ft.score_train.batch_size >= 1, "finetune score budget invalid");
        require(ft.shape.hidden >= 1 && ft.shape.depth >= 1, "finetune network shape must be >= 1");
        require(f.n_samples >= 1, "finetune.n_samples must be >= 1");
        require(f.run_trbsde || f.run_adjoint_matching, "finetune: at least one method must run");
    }
}

std::vector<ConfigEntry> entries(const RunConfig& cfg) {
    RunConfig c = cfg;
    const std::string sec = section_for(c.experiment);
    std::vector<ConfigEntry> out;
    for (const auto& f : fields(c))
        if (f.section == "run" || f.section == sec) out.push_back({f.section, f.key, std::visit(Writer{}, f.ref)});
    return out;
}

std::string to_ini(const RunConfig& cfg) {
    std::ostringstream out;
    std::string current;
    for (const auto& e : entries(cfg)) {
        if (e.section != current) {
            if (!current.empty()) out << "\n";
            out << "[" << e.section << "]\n";
            current = e.section;
        }
        out << e.key << " = " << e.value << "\n";
    }
    return out.str();
}

}  // namespace trbsde::cli
