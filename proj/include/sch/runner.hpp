#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sch/config.hpp"
#include "sch/experiments.hpp"
#include "sch/invariants.hpp"
#include "sch/version.hpp"

// Orchestration: execute a configured study and produce the four artifacts
// (report.json, report.csv, plot.gp, manifest.json).  Artifact content is a
// pure function of (config, seed); wall-clock information lives only in the
// manifest, so report files are byte-reproducible.

namespace sch {

struct RunArtifacts {
    json report;
    json manifest;
    std::string csv;
    std::string plot_script;
    std::optional<NoiseTable> noise_table;  // only when the config asks for a dump
};

namespace detail {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline json fit_block(const ErrorReport& rep) {
    json out;
    if (rep.grid.size() < 2) {
        out["slope"] = nullptr;
        out["ci95"] = nullptr;
        out["intercept"] = nullptr;
        out["excluded_points"] = json::array();
        out["no_signal"] = "fewer than 2 grid points";
        return out;
    }
    try {
        const RateFit fit = rep.fit();
        out["slope"] = fit.slope;
        out["ci95"] = std::isfinite(fit.ci95_halfwidth) ? json(fit.ci95_halfwidth) : json();
        out["intercept"] = fit.intercept;
        out["residual_rms"] = fit.residual_rms;
        out["excluded_points"] = fit.excluded_points;
        out["points_used"] = fit.points_used;
    } catch (const NoSignalError& e) {
        out["slope"] = nullptr;
        out["ci95"] = nullptr;
        out["intercept"] = nullptr;
        out["excluded_points"] = json::array();
        for (std::size_t i = 0; i < rep.grid.size(); ++i) out["excluded_points"].push_back(i);
        out["no_signal"] = e.what();
    }
    return out;
}

inline void fill_report_body(json& report, const ErrorReport& rep) {
    report["grid"] = rep.grid;
    report["estimates"] = rep.estimates;
    report["std_errors"] = rep.std_errors;
    report["K"] = rep.sample_count;
    report["coupling"] = rep.coupling;
    const json fit = fit_block(rep);
    for (auto it = fit.begin(); it != fit.end(); ++it) report[it.key()] = it.value();
}

inline std::string make_csv(const ErrorReport& rep) {
    std::ostringstream os;
    os << "level,estimate,std_error,K\n";
    for (std::size_t i = 0; i < rep.grid.size(); ++i)
        os << format_double(rep.grid[i]) << ',' << format_double(rep.estimates[i]) << ','
           << format_double(rep.std_errors[i]) << ',' << rep.sample_count << '\n';
    return os.str();
}

inline std::string make_plot_script(const ExperimentConfig& cfg, const json& report) {
    std::ostringstream os;
    os << "# gnuplot script; run next to report.csv\n";
    os << "set datafile separator ','\n";
    os << "set logscale xy\n";
    os << "set grid\n";
    os << "set key left top\n";
    const bool temporal = cfg.is_temporal();
    if (temporal) {
        os << "set xlabel 'tau'\n";
        os << "x_of_level(l) = " << format_double(cfg.model.horizon) << "/l\n";
    } else {
        os << "set xlabel 'N'\n";
        os << "x_of_level(l) = l\n";
    }
    os << "set ylabel '" << to_string(cfg.study) << " estimate'\n";
    std::string fitline;
    if (report.contains("slope") && report["slope"].is_number()) {
        const double slope = report["slope"].get<double>();
        const double intercept = report["intercept"].get<double>();
        // the fit lives in h = tau (temporal) or h = 1/N (spatial)
        const double sign = temporal ? 1.0 : -1.0;
        os << "fit_line(x) = exp(" << format_double(intercept) << ") * x**("
           << format_double(sign * slope) << ")\n";
        fitline = ", fit_line(x) with lines title sprintf('slope %.3f', " +
                  format_double(slope) + ")";
    }
    os << "plot 'report.csv' skip 1 using (x_of_level($1)):(abs($2)):3 with yerrorlines pt 7 "
          "title 'estimate'"
       << fitline << "\n";
    return os.str();
}

inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
#ifdef _WIN32
    gmtime_s(&tm, &now);
#else
    gmtime_r(&now, &tm);
#endif
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace detail

inline RunArtifacts execute_study(const ExperimentConfig& cfg) {
    const std::vector<std::string> warnings = cfg.validate();

    RunArtifacts art;
    art.report["schema_version"] = 1;
    art.report["study"] = to_string(cfg.study);
    art.report["config"] = cfg.to_json();

    const std::string self_convergence_note =
        "estimates are coupled self-convergence differences against the stated reference "
        "resolution, not differences against the exact solution";

    switch (cfg.study) {
        case StudyKind::temporal_weak: {
            const TestFunctional phi = cfg.phi.make();
            const ErrorReport rep = estimate_weak_error_temporal(
                cfg.model, cfg.m_list, cfg.m_ref, cfg.model.n_modes, cfg.k_paths, phi, cfg.seed);
            detail::fill_report_body(art.report, rep);
            art.report["note"] = self_convergence_note;
            art.report["phi_first_derivative_bound"] = phi.first_derivative_bound();
            art.report["phi_second_derivative_bound"] = phi.second_derivative_bound();
            art.csv = detail::make_csv(rep);
            break;
        }
        case StudyKind::temporal_strong: {
            const ErrorReport rep = estimate_strong_error_temporal(
                cfg.model, cfg.m_list, cfg.m_ref, cfg.model.n_modes, cfg.k_paths, cfg.seed);
            detail::fill_report_body(art.report, rep);
            art.report["note"] = self_convergence_note;
            art.csv = detail::make_csv(rep);
            break;
        }
        case StudyKind::spatial_strong: {
            const ErrorReport rep = estimate_strong_error_spatial(
                cfg.model, cfg.n_list, cfg.n_ref, cfg.model.m_steps, cfg.k_paths, cfg.seed);
            detail::fill_report_body(art.report, rep);
            art.report["note"] = self_convergence_note;
            art.csv = detail::make_csv(rep);
            break;
        }
        case StudyKind::spatial_weak: {
            const TestFunctional phi = cfg.phi.make();
            const StudyOutcome outcome = estimate_weak_error_spatial(
                cfg.model, cfg.n_list, cfg.n_ref, cfg.model.m_steps, cfg.k_paths, phi, cfg.seed);
            detail::fill_report_body(art.report, *outcome.weak);
            art.report["note"] = self_convergence_note;
            art.report["phi_first_derivative_bound"] = phi.first_derivative_bound();
            art.report["phi_second_derivative_bound"] = phi.second_derivative_bound();
            json strong;
            strong["estimates"] = outcome.strong.estimates;
            strong["std_errors"] = outcome.strong.std_errors;
            art.report["strong_counterpart"] = strong;
            art.csv = detail::make_csv(*outcome.weak);
            break;
        }
        case StudyKind::linear_oracle: {
            const LinearOracleOutcome outcome = run_linear_oracle(
                cfg.model, cfg.m_list, cfg.m_ref, cfg.model.n_modes, cfg.k_paths, cfg.seed);
            detail::fill_report_body(art.report, outcome.report);
            art.report["mean_sq"] = outcome.mean_sq;
            art.report["se_mean_sq"] = outcome.se_mean_sq;
            art.report["oracle_sq"] = outcome.oracle_sq;
            json oracle = json::array();
            for (double v : outcome.oracle_sq) oracle.push_back(std::sqrt(std::max(v, 0.0)));
            art.report["oracle"] = oracle;
            art.report["note"] =
                "reference is the distributionally exact linear solution coupled to the same "
                "noise; oracle is the closed-form expected squared gap";
            art.csv = detail::make_csv(outcome.report);
            break;
        }
        case StudyKind::invariants: {
            const auto results = invariants::run_all();
            json suites = json::array();
            int pass = 0, fail = 0;
            std::ostringstream csv;
            csv << "level,estimate,std_error,K\n";
            for (std::size_t i = 0; i < results.size(); ++i) {
                const auto& r = results[i];
                json s;
                s["name"] = r.name;
                s["passed"] = r.passed;
                s["detail"] = r.detail;
                suites.push_back(s);
                (r.passed ? pass : fail) += 1;
                csv << (i + 1) << ',' << (r.passed ? 1 : 0) << ",0,1\n";
            }
            art.report["suites"] = suites;
            art.report["pass_count"] = pass;
            art.report["fail_count"] = fail;
            art.csv = csv.str();
            break;
        }
    }

    if (cfg.dump_noise_table && cfg.study != StudyKind::invariants) {
        const std::uint64_t path0_seed = rng::derive_seed(cfg.seed, to_string(cfg.study), 0);
        if (cfg.is_temporal()) {
            art.noise_table = build_noise_table(path0_seed, cfg.model.horizon, cfg.m_ref,
                                                cfg.model.n_modes,
                                                cfg.model.q_spectrum(cfg.model.n_modes));
        } else {
            art.noise_table =
                build_noise_table(path0_seed, cfg.model.horizon, cfg.model.m_steps, cfg.n_ref,
                                  cfg.model.q_spectrum(cfg.n_ref));
        }
    }

    art.plot_script = detail::make_plot_script(cfg, art.report);

    art.manifest["tool"] = "sch";
    art.manifest["version"] = version_string;
    art.manifest["created_utc"] = detail::utc_timestamp();
    art.manifest["config"] = cfg.to_json();
    art.manifest["seed"] = cfg.seed;
    art.manifest["workers"] = worker_count();
    art.manifest["warnings"] = warnings;
    return art;
}

inline void write_artifacts(const RunArtifacts& art, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    auto write_file = [&](const std::string& name, const std::string& content) {
        std::ofstream f(fs::path(out_dir) / name, std::ios::binary);
        if (!f) throw std::runtime_error("cannot open " + name + " for writing in " + out_dir);
        f << content;
    };
    write_file("report.json", art.report.dump(2) + "\n");
    write_file("report.csv", art.csv);
    write_file("plot.gp", art.plot_script);
    write_file("manifest.json", art.manifest.dump(2) + "\n");
    if (art.noise_table) {
        std::ofstream f(fs::path(out_dir) / "noise_table.bin", std::ios::binary);
        art.noise_table->dump(f);
    }
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot read config file '" + path + "'");
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

// -----------------------------------------------------------------------
// Command implementations shared by the CLI and the tests

inline int cmd_validate(const std::string& config_path, std::ostream& out,
                        std::ostream& err = std::cerr) {
    try {
        const ExperimentConfig cfg = ExperimentConfig::parse(read_text_file(config_path));
        const std::vector<std::string> warnings = cfg.validate();

        out << "study: " << to_string(cfg.study) << "\n";
        out << "noise admissibility: OK (" << to_string(cfg.model.q_family) << " "
            << (cfg.model.q_family == QFamily::power_law ? "r=" : "s=") << cfg.model.q_param
            << (cfg.model.q_family == QFamily::power_law ? " > 3/2" : " > 3") << ")\n";
        out << "initial datum: OK (|X_0|_4 finite, " << cfg.model.initial_modes.size()
            << " declared modes)\n";
        if (cfg.is_temporal())
            out << "grid constraints: OK (all " << cfg.m_list.size()
                << " levels divide M_ref=" << cfg.m_ref << ")\n";
        if (cfg.is_spatial())
            out << "grid constraints: OK (all " << cfg.n_list.size() << " levels <= N_ref="
                << cfg.n_ref << ")\n";
        for (const auto& w : warnings) out << "warning: " << w << "\n";
        out << "cost estimate: K * sum(M*N) = " << cfg.cost_estimate() << " mode-steps\n";
        return 0;
    } catch (const std::exception& e) {
        err << "validate failed: " << e.what() << "\n";
        return 1;
    }
}

inline int cmd_run(const std::string& config_path, const std::string& out_override,
                   std::ostream& out, std::ostream& err = std::cerr) {
    try {
        ExperimentConfig cfg = ExperimentConfig::parse(read_text_file(config_path));
        if (!out_override.empty()) cfg.out_dir = out_override;
        const RunArtifacts art = execute_study(cfg);
        write_artifacts(art, cfg.out_dir);
        out << "study " << to_string(cfg.study) << " complete; artifacts in " << cfg.out_dir
            << "\n";
        if (cfg.study == StudyKind::invariants) {
            const int fails = art.report["fail_count"].get<int>();
            out << art.report["pass_count"].get<int>() << " checks passed, " << fails
                << " failed\n";
            return fails == 0 ? 0 : 1;
        }
        return 0;
    } catch (const std::exception& e) {
        err << "run failed: " << e.what() << "\n";
        return 1;
    }
}

inline int cmd_invariants(std::ostream& out) {
    const auto results = invariants::run_all();
    int fails = 0;
    for (const auto& r : results) {
        out << (r.passed ? "[PASS] " : "[FAIL] ") << r.name << ": " << r.detail << "\n";
        if (!r.passed) ++fails;
    }
    out << results.size() - fails << " of " << results.size() << " checks passed\n";
    return fails == 0 ? 0 : 1;
}

}  // namespace sch
