#include "artifacts.hpp"
#include "run_config.hpp"

#include "trbsde/parallel.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <set>
#include <sstream>

using namespace trbsde;
using namespace trbsde::cli;
using json = nlohmann::json;

namespace {

struct RunSummary {
    std::vector<std::uint64_t> seeds;
};

std::string beta_tag(double beta) {
    std::ostringstream s;
    s << beta;
    return s.str();
}

void progress_line(const std::string& msg) { std::cerr << msg << std::endl; }

RunSummary run_lq(const RunConfig& cfg, ArtifactDir& out) {
    const auto recs = run_lq_sweep(cfg.lq, progress_line);
    auto csv = out.open("lq_mse.csv");
    csv << "method,epsilon,seed,mse\n";
    for (const auto& r : recs) csv << r.method << ',' << r.epsilon << ',' << r.seed << ',' << r.mse << '\n';
    RunSummary s;
    for (int i = 0; i < cfg.lq.n_seeds; ++i) s.seeds.push_back(derive_seed(cfg.seed, static_cast<std::uint64_t>(i)));
    return s;
}

RunSummary run_pendulum_experiment(const RunConfig& cfg, ArtifactDir& out) {
    const PendulumConfig& pc = cfg.pendulum;
    progress_line("pendulum: cost map");
    const CostMap map = mc_cost_map(pendulum_model(pc.damping, pc.noise), TerminalCost::pendulum(), pc.map);
    {
        auto csv = out.open("pendulum_map.csv");
        csv << "theta,omega,cost\n";
        for (Eigen::Index i = 0; i < map.theta.size(); ++i)
            for (Eigen::Index j = 0; j < map.omega.size(); ++j)
                csv << map.theta(i) << ',' << map.omega(j) << ',' << map.cost(i, j) << '\n';
    }
    auto points = out.open("pendulum_points.csv");
    points << "method,iter,i,theta,omega\n";
    auto costs = out.open("pendulum_cost.csv");
    costs << "method,seed,iter,mean_cost,frozen\n";
    RunSummary s;
    for (int seed = 0; seed < cfg.pendulum_seeds; ++seed) {
        s.seeds.push_back(derive_seed(cfg.seed, static_cast<std::uint64_t>(seed)));
        const PendulumResult res = run_pendulum(pc, seed, progress_line);
        for (const auto& run : res.runs) {
            const std::string name(method_name(run.method));
            for (const auto& [iter, c] : run.result.mean_cost)
                costs << name << ',' << seed << ',' << iter << ',' << c << ','
                      << (iter == run.result.mean_cost.back().first ? run.result.points.frozen_count() : 0) << '\n';
            if (seed != 0) continue;  // the point-cloud file holds the first seed
            for (const auto& snap : run.result.snapshots)
                for (Eigen::Index i = 0; i < snap.points.cols(); ++i)
                    points << name << ',' << snap.iteration << ',' << i << ',' << snap.points(0, i) << ','
                           << snap.points(1, i) << '\n';
        }
    }
    return s;
}

RunSummary run_finetune_experiment(const RunConfig& cfg, ArtifactDir& out) {
    const FinetuneExperimentConfig& fc = cfg.finetune;
    {
        auto t = out.open("tilted_targets.csv");
        t << "beta,component,weight,mean,variance\n";
        for (double beta : fc.betas) {
            const GaussianMixture1D m = tilted_mixture(fc.target, beta, fc.center);
            for (std::size_t k = 0; k < m.size(); ++k)
                t << beta << ',' << k << ',' << m.weights[k] << ',' << m.means[k] << ',' << m.variances[k] << '\n';
        }
    }
    auto hist = out.open("finetune_hist.csv");
    hist << "method,beta,iter,total,terminal,running,kl,mu,Q,w1\n";
    auto table = out.open("finetune_w1.csv");
    table << "method,beta,seed,w1,mu,Q\n";
    RunSummary s;
    for (int seed = 0; seed < fc.n_seeds; ++seed) {
        s.seeds.push_back(derive_seed(cfg.seed, static_cast<std::uint64_t>(seed)));
        for (double beta : fc.betas) {
            const auto runs = run_finetune_beta(fc, beta, seed, progress_line);
            for (const auto& r : runs) {
                table << r.method << ',' << beta << ',' << seed << ',' << r.w1 << ',' << r.result.init.mu << ','
                      << r.result.init.Q() << '\n';
                if (seed != 0) continue;  // history and samples are written for the first seed
                for (const auto& h : r.result.history)
                    hist << r.method << ',' << beta << ',' << h.iteration << ',' << h.objective.total << ','
                         << h.objective.terminal << ',' << h.objective.running << ',' << h.objective.kl << ','
                         << h.mu << ',' << h.Q << ',' << h.w1 << '\n';
                auto samples = out.open("samples_" + r.method + "_" + beta_tag(beta) + ".csv");
                samples << "x\n";
                for (double x : r.samples) samples << x << '\n';
            }
        }
    }
    return s;
}

int command_run(const std::string& config_path, const std::string& output_override, int threads,
                bool deterministic) {
    RunConfig cfg = load_config(config_path);
    if (!output_override.empty()) cfg.output = output_override;
    validate(cfg);
    if (deterministic) set_max_threads(1);
    else if (threads > 0) set_max_threads(threads);

    const auto t0 = std::chrono::steady_clock::now();
    ArtifactDir out(cfg.output);
    try {
        out.write_text("config.ini", to_ini(cfg));
        RunSummary summary;
        if (cfg.experiment == "lq-sweep") summary = run_lq(cfg, out);
        else if (cfg.experiment == "pendulum") summary = run_pendulum_experiment(cfg, out);
        else summary = run_finetune_experiment(cfg, out);
        const double runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        json manifest;
        manifest["experiment"] = cfg.experiment;
        json config = json::object();
        for (const auto& e : entries(cfg)) config[e.section][e.key] = e.value;
        manifest["config"] = config;
        manifest["seeds"] = summary.seeds;
        manifest["threads"] = max_threads();
        manifest["versions"] = {{"trbsde", "1.0.0"},
                                {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                              "." + std::to_string(EIGEN_MINOR_VERSION)},
                                {"compiler", __VERSION__}};
        json outputs = json::array();
        std::set<std::string> seen;
        for (const auto& f : out.files()) {
            if (!seen.insert(f).second) continue;
            outputs.push_back({{"path", f}, {"sha256", sha256_file(out.dir() / f)}});
        }
        manifest["outputs"] = outputs;
        manifest["runtime_s"] = runtime;
        out.write_text("manifest.json", manifest.dump(2) + "\n");
        std::cerr << "wrote " << outputs.size() << " artifacts to " << out.dir().string() << " in " << runtime
                  << " s\n";
    } catch (...) {
        out.discard();
        throw;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"TR-BSDE gradient estimation experiments"};
    app.require_subcommand(1);

    int threads = 0;
    bool deterministic = false;
    app.add_option("--threads", threads, "cap on worker threads (0 = hardware concurrency)")->check(CLI::NonNegativeNumber);
    app.add_flag("--deterministic", deterministic, "run sequentially");

    std::string config_path, output;
    auto* run = app.add_subcommand("run", "run the experiment described by a config file");
    run->add_option("config", config_path, "INI config file")->required();
    run->add_option("-o,--output", output, "output directory (overrides [run] output)");

    app.add_subcommand("list-experiments", "list experiment ids");

    std::string validate_path;
    auto* val = app.add_subcommand("validate-config", "parse and check a config file");
    val->add_option("config", validate_path, "INI config file")->required();

    std::string defaults_for = "lq-sweep";
    auto* defs = app.add_subcommand("print-defaults", "print a complete config with default values");
    defs->add_option("experiment", defaults_for, "experiment id");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return command_run(config_path, output, threads, deterministic);
        if (app.got_subcommand("list-experiments")) {
            for (const auto& e : experiments()) std::cout << e.id << "\t" << e.summary << "\n";
            return 0;
        }
        if (*val) {
            const RunConfig cfg = load_config(validate_path);
            validate(cfg);
            std::cout << "ok: " << cfg.experiment << "\n";
            return 0;
        }
        if (*defs) {
            std::cout << to_ini(default_config(defaults_for));
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
