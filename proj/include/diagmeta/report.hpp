#pragma once

// Report schemas: JSON fit reports (machine-consumable, schema-validated),
// CSV tables for simulation summaries, and reading fit reports back for
// plotting. Reports carry no timestamps, so identical runs produce identical
// bytes.

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "core_data.hpp"
#include "inference.hpp"
#include "simulate.hpp"

namespace diagmeta {

inline constexpr const char* tool_version = "0.1.0";
inline constexpr const char* report_schema_version = "1";

using OrderedJson = nlohmann::ordered_json;

// Echo of the exact configuration a fit was produced from; re-running with
// these values reproduces the report.
struct FitConfig {
    std::string data_path;
    ModelKind model = ModelKind::mtm;
    Link link = Link::logit;
    int gh_nodes = 21;
    Correction correction = Correction::half_cell;
    std::uint64_t seed = 0;
    double level = 0.95;
};

namespace detail {

inline OrderedJson matrix_json(const Matrix& m) {
    OrderedJson rows = OrderedJson::array();
    for (std::size_t i = 0; i < m.rows; ++i) {
        OrderedJson row = OrderedJson::array();
        for (std::size_t j = 0; j < m.cols; ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

inline OrderedJson estimate_json(double est, double se_headline, double se_model,
                                 double se_sandwich, double level, bool with_ci) {
    OrderedJson e;
    e["estimate"] = est;
    e["se"] = se_headline;
    e["se_model"] = se_model;
    e["se_sandwich"] = se_sandwich;
    if (with_ci && se_headline > 0.0) {
        const auto ci = wald_ci(est, se_headline, level);
        e["ci_low"] = ci.low;
        e["ci_high"] = ci.high;
    } else {
        e["ci_low"] = nullptr;
        e["ci_high"] = nullptr;
    }
    return e;
}

}  // namespace detail

inline OrderedJson fit_report_json(const FitResult& fit, const MetaDataset& ds,
                                   const FitConfig& cfg) {
    static const char* param_names[5] = {"eta_bar", "xi_bar", "var_eta", "var_xi", "rho"};
    const double theta[5] = {fit.theta.eta_bar, fit.theta.xi_bar, fit.theta.var_eta,
                             fit.theta.var_xi, fit.theta.rho};

    OrderedJson doc;
    doc["schema_version"] = report_schema_version;
    doc["tool"] = {{"name", "diagmeta"}, {"version", tool_version}};
    doc["config"] = OrderedJson{{"data", cfg.data_path},
                                {"model", model_name(cfg.model)},
                                {"link", link_name(cfg.link)},
                                {"gh_nodes", cfg.gh_nodes},
                                {"correction", correction_name(cfg.correction)},
                                {"seed", cfg.seed},
                                {"level", cfg.level}};
    doc["n_studies"] = fit.n_studies;
    doc["converged"] = fit.converged();
    doc["failure"] = fit.converged() ? OrderedJson(nullptr)
                                     : OrderedJson(failure_name(fit.failure));
    doc["loglik"] = fit.loglik;
    doc["aic"] = fit.aic;
    doc["n_params"] = fit.n_params_aic;

    const std::size_t k = fit.u_opt.size();
    OrderedJson params;
    for (std::size_t p = 0; p < 5; ++p) {
        const bool active = p < k || k == 5;
        params[param_names[p]] = detail::estimate_json(
            theta[p], fit.se_headline(p), fit.se_model(p), fit.se_sandwich(p), fit.level,
            fit.converged() && active && fit.se_headline(p) > 0.0);
    }
    doc["params"] = params;

    const auto acc = pooled_accuracy(fit);
    OrderedJson accuracy;
    {
        OrderedJson sens;
        sens["estimate"] = acc.se;
        sens["se"] = acc.se_se;
        if (fit.converged() && acc.se_se > 0.0) {
            const auto ci = wald_ci(acc.se, acc.se_se, fit.level);
            sens["ci_low"] = std::max(0.0, ci.low);
            sens["ci_high"] = std::min(1.0, ci.high);
        } else {
            sens["ci_low"] = nullptr;
            sens["ci_high"] = nullptr;
        }
        accuracy["sensitivity"] = sens;
        OrderedJson spec;
        spec["estimate"] = acc.sp;
        spec["se"] = acc.se_sp;
        if (fit.converged() && acc.se_sp > 0.0) {
            const auto ci = wald_ci(acc.sp, acc.se_sp, fit.level);
            spec["ci_low"] = std::max(0.0, ci.low);
            spec["ci_high"] = std::min(1.0, ci.high);
        } else {
            spec["ci_low"] = nullptr;
            spec["ci_high"] = nullptr;
        }
        accuracy["specificity"] = spec;
    }
    doc["accuracy"] = accuracy;

    if (!fit.prevalences.empty()) {
        OrderedJson prev = OrderedJson::array();
        for (std::size_t i = 0; i < fit.prevalences.size(); ++i) {
            prev.push_back(OrderedJson{{"study", ds.studies[i].id},
                                       {"estimate", fit.prevalences[i].pi_hat},
                                       {"se", fit.prevalences[i].se}});
        }
        doc["prevalences"] = prev;
    } else {
        doc["prevalences"] = nullptr;
    }

    doc["cov_model"] = detail::matrix_json(fit.cov_model);
    doc["cov_sandwich"] = detail::matrix_json(fit.cov_sandwich);
    doc["headline_se"] = fit.headline_sandwich ? "sandwich" : "model";
    doc["optimizer"] = OrderedJson{{"status", opt_status_name(fit.opt.status)},
                                   {"evals", fit.opt.evals},
                                   {"restarts_used", fit.opt.restarts_used}};
    return doc;
}

// The slice of a fit report the sroc command needs.
struct LoadedFit {
    std::string model;
    Link link = Link::logit;
    bool converged = false;
    AccuracyParams theta;
    double cov2x2[2][2] = {{0.0, 0.0}, {0.0, 0.0}};  // headline covariance of (eta_bar, xi_bar)
    double sens = 0.0, spec = 0.0;
    double level = 0.95;
};

inline LoadedFit load_fit_report(const OrderedJson& doc) {
    LoadedFit out;
    out.model = doc.at("config").at("model").get<std::string>();
    out.link = link_from_name(doc.at("config").at("link").get<std::string>());
    out.level = doc.at("config").at("level").get<double>();
    out.converged = doc.at("converged").get<bool>();
    const auto& p = doc.at("params");
    out.theta.eta_bar = p.at("eta_bar").at("estimate").get<double>();
    out.theta.xi_bar = p.at("xi_bar").at("estimate").get<double>();
    out.theta.var_eta = p.at("var_eta").at("estimate").get<double>();
    out.theta.var_xi = p.at("var_xi").at("estimate").get<double>();
    out.theta.rho = p.at("rho").at("estimate").get<double>();
    const std::string headline = doc.at("headline_se").get<std::string>();
    const auto& cov = headline == "sandwich" ? doc.at("cov_sandwich") : doc.at("cov_model");
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) out.cov2x2[i][j] = cov.at(i).at(j).get<double>();
    }
    out.sens = doc.at("accuracy").at("sensitivity").at("estimate").get<double>();
    out.spec = doc.at("accuracy").at("specificity").at("estimate").get<double>();
    return out;
}

// ---------------------------------------------------------------------------
// Simulation CSV
// ---------------------------------------------------------------------------

inline const char* simulation_csv_header() {
    return "n,prevalence,se_true,sp_true,rho_true,var_eta_true,var_xi_true,link,"
           "size_min,size_max,method,replicates,used,gen_failures,fit_failures,"
           "failure_rate,bias_eta_bar,sd_eta_bar,avgse_eta_bar,bias_xi_bar,sd_xi_bar,"
           "avgse_xi_bar,bias_var_eta,sd_var_eta,avgse_var_eta,bias_var_xi,sd_var_xi,"
           "avgse_var_xi,bias_rho,sd_rho,avgse_rho,coverage_eta_bar,coverage_eta_bar_mc_se,"
           "coverage_xi_bar,coverage_xi_bar_mc_se";
}

inline std::string simulation_csv(const std::vector<SimulationSummary>& summaries) {
    std::ostringstream os;
    os.setf(std::ios::fmtflags(0), std::ios::floatfield);
    os.precision(10);
    os << simulation_csv_header() << '\n';
    for (const auto& sum : summaries) {
        const auto& sc = sum.scenario;
        for (const auto& ms : sum.methods) {
            os << sc.n_studies << ',' << sc.prevalence << ',' << sc.se_true << ','
               << sc.sp_true << ',' << sc.rho << ',' << sc.var_eta_true << ','
               << sc.var_xi_true << ',' << link_name(sc.link) << ',' << sc.size_min << ','
               << sc.size_max << ',' << model_name(ms.method) << ',' << ms.requested << ','
               << ms.used << ',' << ms.gen_failures << ',' << ms.fit_failures << ','
               << ms.failure_rate;
            for (const auto& ps : ms.params) {
                os << ',' << ps.bias << ',' << ps.sd << ',' << ps.avg_se;
            }
            os << ',' << ms.coverage_eta << ',' << ms.coverage_eta_mc_se << ','
               << ms.coverage_xi << ',' << ms.coverage_xi_mc_se << '\n';
        }
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Simulation config (JSON)
// ---------------------------------------------------------------------------

inline Scenario scenario_from_json(const OrderedJson& j) {
    Scenario sc;
    sc.n_studies = j.at("n").get<int>();
    sc.prevalence = j.at("prevalence").get<double>();
    sc.se_true = j.at("se").get<double>();
    sc.sp_true = j.at("sp").get<double>();
    sc.rho = j.at("rho").get<double>();
    if (j.contains("var_eta")) sc.var_eta_true = j.at("var_eta").get<double>();
    if (j.contains("var_xi")) sc.var_xi_true = j.at("var_xi").get<double>();
    if (j.contains("link")) sc.link = link_from_name(j.at("link").get<std::string>());
    if (j.contains("size_min")) sc.size_min = j.at("size_min").get<int>();
    if (j.contains("size_max")) sc.size_max = j.at("size_max").get<int>();
    sc.validate();
    return sc;
}

inline std::vector<Scenario> scenarios_from_config(const OrderedJson& doc) {
    if (!doc.contains("scenarios") || !doc.at("scenarios").is_array() ||
        doc.at("scenarios").empty()) {
        throw std::invalid_argument("simulation config: expected a nonempty 'scenarios' array");
    }
    std::vector<Scenario> out;
    for (const auto& j : doc.at("scenarios")) out.push_back(scenario_from_json(j));
    return out;
}

// ---------------------------------------------------------------------------
// small file helpers
// ---------------------------------------------------------------------------

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << content;
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace diagmeta
