// diagmeta: fits diagnostic-accuracy meta-analysis models (hierarchical MTM,
// approximate bivariate, fixed-effects MTM), runs Monte-Carlo scenario
// comparisons, and renders SROC figures.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "diagmeta/diagmeta.hpp"

namespace {

constexpr int exit_ok = 0;
constexpr int exit_usage = 1;
constexpr int exit_fit_failure = 2;

int cmd_fit(const std::string& data_path, const std::string& model_name,
            const std::string& link_name_arg, int gh_nodes, const std::string& correction,
            std::uint64_t seed, double level, const std::string& out_path) {
    using namespace diagmeta;
    MetaDataset ds;
    FitConfig cfg;
    try {
        cfg.data_path = data_path;
        cfg.model = model_from_name(model_name);
        cfg.link = link_from_name(link_name_arg);
        cfg.gh_nodes = gh_nodes;
        cfg.correction = correction_from_name(correction);
        cfg.seed = seed;
        cfg.level = level;
        ds = parse_dataset(read_file(data_path));
    } catch (const std::exception& e) {
        std::cerr << "diagmeta fit: " << e.what() << "\n";
        return exit_usage;
    }

    FitResult fit;
    try {
        FitOptions opt;
        opt.link = cfg.link;
        opt.gh_nodes = cfg.gh_nodes;
        opt.correction = cfg.correction;
        opt.seed = cfg.seed;
        opt.level = cfg.level;
        fit = fit_model(ds, cfg.model, opt);
    } catch (const std::exception& e) {
        std::cerr << "diagmeta fit: " << e.what() << "\n";
        return exit_usage;
    }

    try {
        write_file(out_path, fit_report_json(fit, ds, cfg).dump(2) + "\n");
    } catch (const std::exception& e) {
        std::cerr << "diagmeta fit: " << e.what() << "\n";
        return exit_usage;
    }
    if (!fit.converged()) {
        std::cerr << "diagmeta fit: fit failed (" << failure_name(fit.failure)
                  << "); report written to " << out_path << "\n";
        return exit_fit_failure;
    }
    return exit_ok;
}

int cmd_sroc(const std::vector<std::string>& fit_paths, const std::string& out_path) {
    using namespace diagmeta;
    std::vector<SrocSeries> series;
    try {
        for (const auto& path : fit_paths) {
            const auto doc = OrderedJson::parse(read_file(path));
            const auto fit = load_fit_report(doc);
            if (!fit.converged) {
                std::cerr << "diagmeta sroc: fit report " << path
                          << " has failure status; refusing to plot\n";
                return exit_fit_failure;
            }
            series.push_back(sroc_series_from_fit(fit));
        }
        write_file(out_path, sroc_svg(series));
    } catch (const std::exception& e) {
        std::cerr << "diagmeta sroc: " << e.what() << "\n";
        return exit_usage;
    }
    return exit_ok;
}

int cmd_simulate(const std::string& config_path, bool grid_paper, int replicates,
                 std::uint64_t seed, int gh_nodes, const std::string& correction,
                 const std::string& methods_arg, const std::string& out_path) {
    using namespace diagmeta;
    std::vector<Scenario> scenarios;
    std::vector<ModelKind> methods;
    SimOptions opt;
    try {
        if (grid_paper) {
            scenarios = paper_grid();
        } else if (!config_path.empty()) {
            scenarios = scenarios_from_config(OrderedJson::parse(read_file(config_path)));
        } else {
            std::cerr << "diagmeta simulate: provide --config or --grid paper\n";
            return exit_usage;
        }
        std::string token;
        std::stringstream ss(methods_arg);
        while (std::getline(ss, token, ',')) {
            if (!token.empty()) methods.push_back(model_from_name(token));
        }
        if (methods.empty()) throw std::invalid_argument("no methods given");
        opt.gh_nodes = gh_nodes;
        opt.correction = correction_from_name(correction);
    } catch (const std::exception& e) {
        std::cerr << "diagmeta simulate: " << e.what() << "\n";
        return exit_usage;
    }

    std::vector<SimulationSummary> summaries;
    summaries.reserve(scenarios.size());
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
        summaries.push_back(run_scenario(scenarios[i], replicates, methods,
                                         substream_seed(seed, i), opt));
    }
    try {
        write_file(out_path, simulation_csv(summaries));
    } catch (const std::exception& e) {
        std::cerr << "diagmeta simulate: " << e.what() << "\n";
        return exit_usage;
    }
    return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"diagnostic test accuracy meta-analysis"};
    app.require_subcommand(1);

    // fit
    auto* fit = app.add_subcommand("fit", "fit a model to a 2x2 dataset");
    std::string data_path, model = "mtm", link = "logit", correction = "half-cell", out_path;
    int gh_nodes = 21;
    std::uint64_t seed = 0;
    double level = 0.95;
    fit->add_option("--data", data_path, "CSV with header study,tp,fp,fn,tn")->required();
    fit->add_option("--model", model, "mtm | approx | mtm-fixed")
        ->check(CLI::IsMember({"mtm", "approx", "mtm-fixed"}));
    fit->add_option("--link", link, "logit | probit | cloglog")
        ->check(CLI::IsMember({"logit", "probit", "cloglog"}));
    fit->add_option("--gh-nodes", gh_nodes, "Gauss-Hermite nodes per dimension")
        ->check(CLI::Range(1, 100));
    fit->add_option("--correction", correction, "none | half-cell")
        ->check(CLI::IsMember({"none", "half-cell"}));
    fit->add_option("--seed", seed, "seed for restart jitter");
    fit->add_option("--level", level, "confidence level");
    fit->add_option("--out", out_path, "output JSON report")->required();

    // sroc
    auto* sroc = app.add_subcommand("sroc", "render SROC curves from fit reports");
    std::vector<std::string> fit_paths;
    std::string svg_path;
    sroc->add_option("--fit", fit_paths, "fit report JSON (repeat for two fits)")
        ->required()
        ->expected(1, 2);
    sroc->add_option("--out", svg_path, "output SVG")->required();

    // simulate
    auto* sim = app.add_subcommand("simulate", "Monte-Carlo method comparison");
    std::string config_path, grid, methods = "approx,mtm", sim_out;
    int replicates = 0, sim_nodes = 21;
    std::string sim_correction = "half-cell";
    std::uint64_t sim_seed = 0;
    sim->add_option("--config", config_path, "JSON scenario config");
    sim->add_option("--grid", grid, "named scenario grid")->check(CLI::IsMember({"paper"}));
    sim->add_option("--replicates", replicates, "replicates per scenario")
        ->required()
        ->check(CLI::PositiveNumber);
    sim->add_option("--seed", sim_seed, "master seed");
    sim->add_option("--gh-nodes", sim_nodes, "Gauss-Hermite nodes")->check(CLI::Range(1, 100));
    sim->add_option("--correction", sim_correction, "none | half-cell")
        ->check(CLI::IsMember({"none", "half-cell"}));
    sim->add_option("--methods", methods, "comma-separated: approx,mtm");
    sim->add_option("--out", sim_out, "output CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_usage;
    }

    if (fit->parsed()) {
        return cmd_fit(data_path, model, link, gh_nodes, correction, seed, level, out_path);
    }
    if (sroc->parsed()) {
        return cmd_sroc(fit_paths, svg_path);
    }
    if (sim->parsed()) {
        return cmd_simulate(config_path, grid == "paper", replicates, sim_seed, sim_nodes,
                            sim_correction, methods, sim_out);
    }
    return exit_usage;
}
