#pragma once

#include <cstdint>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sch/experiments.hpp"
#include "sch/model.hpp"

// Experiment configuration: a single versioned JSON document.  Parsing is
// strict about types and names the offending field; validation separates
// hard errors (thrown) from advisory warnings (returned), and computes the
// dry-run cost estimate used by `sch validate`.

namespace sch {

using json = nlohmann::json;

class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

enum class StudyKind {
    temporal_weak,
    temporal_strong,
    spatial_weak,
    spatial_strong,
    invariants,
    linear_oracle
};

inline const char* to_string(StudyKind s) {
    switch (s) {
        case StudyKind::temporal_weak: return "temporal_weak";
        case StudyKind::temporal_strong: return "temporal_strong";
        case StudyKind::spatial_weak: return "spatial_weak";
        case StudyKind::spatial_strong: return "spatial_strong";
        case StudyKind::invariants: return "invariants";
        case StudyKind::linear_oracle: return "linear_oracle";
    }
    return "?";
}

inline StudyKind study_from_string(const std::string& s) {
    if (s == "temporal_weak") return StudyKind::temporal_weak;
    if (s == "temporal_strong") return StudyKind::temporal_strong;
    if (s == "spatial_weak") return StudyKind::spatial_weak;
    if (s == "spatial_strong") return StudyKind::spatial_strong;
    if (s == "invariants") return StudyKind::invariants;
    if (s == "linear_oracle") return StudyKind::linear_oracle;
    throw ConfigError("config: unknown study '" + s + "'");
}

namespace detail {

template <typename T>
T get_field(const json& j, const std::string& key, const std::string& context) {
    if (!j.contains(key)) throw ConfigError("config: missing field '" + context + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config: field '" + context + key + "' has the wrong type (" +
                          e.what() + ")");
    }
}

template <typename T>
T get_field_or(const json& j, const std::string& key, const std::string& context, T fallback) {
    if (!j.contains(key)) return fallback;
    return get_field<T>(j, key, context);
}

inline std::map<int, double> get_mode_map(const json& j, const std::string& key,
                                          const std::string& context) {
    std::map<int, double> out;
    if (!j.contains(key)) return out;
    const json& m = j.at(key);
    if (!m.is_object())
        throw ConfigError("config: field '" + context + key +
                          "' must be an object of mode -> coefficient");
    for (auto it = m.begin(); it != m.end(); ++it) {
        int mode = 0;
        try {
            mode = std::stoi(it.key());
        } catch (...) {
            throw ConfigError("config: '" + context + key + "' has non-integer mode key '" +
                              it.key() + "'");
        }
        if (!it.value().is_number())
            throw ConfigError("config: '" + context + key + "' coefficient for mode " +
                              it.key() + " must be a number");
        out[mode] = it.value().get<double>();
    }
    return out;
}

}  // namespace detail

// Declarative functional description (the psi field is a mode map like x0).
struct FunctionalSpec {
    std::string kind = "gauss_exp";
    double sigma = 1.0;
    std::map<int, double> psi;

    TestFunctional make() const {
        if (kind == "gauss_exp") return TestFunctional::gauss(sigma);
        int n_max = 0;
        for (const auto& [mode, c] : psi) n_max = std::max(n_max, mode);
        if (n_max == 0)
            throw ConfigError("config: functional '" + kind + "' needs a non-empty psi");
        SpectralField dir(static_cast<std::size_t>(n_max));
        for (const auto& [mode, c] : psi) {
            if (mode < 1) throw ConfigError("config: psi mode indices start at 1");
            dir.coeffs[mode - 1] = c;
        }
        if (kind == "cosine_pairing") return TestFunctional::cosine(std::move(dir));
        if (kind == "linear_pairing") return TestFunctional::linear(std::move(dir));
        throw ConfigError("config: unknown functional kind '" + kind + "'");
    }

    json to_json() const {
        json j;
        j["kind"] = kind;
        if (kind == "gauss_exp") {
            j["sigma"] = sigma;
        } else {
            json p = json::object();
            for (const auto& [mode, c] : psi) p[std::to_string(mode)] = c;
            j["psi"] = p;
        }
        return j;
    }

    static FunctionalSpec from_json(const json& j) {
        FunctionalSpec spec;
        spec.kind = detail::get_field<std::string>(j, "kind", "phi.");
        if (spec.kind == "gauss_exp")
            spec.sigma = detail::get_field_or<double>(j, "sigma", "phi.", 1.0);
        else
            spec.psi = detail::get_mode_map(j, "psi", "phi.");
        return spec;
    }
};

struct ExperimentConfig {
    int schema_version = 1;
    StudyKind study = StudyKind::temporal_weak;
    ModelConfig model;
    std::vector<int> m_list;
    std::vector<int> n_list;
    int m_ref = 0;
    int n_ref = 0;
    long k_paths = 1;
    std::uint64_t seed = 0;
    FunctionalSpec phi;
    std::string out_dir = "out";
    bool dump_noise_table = false;

    bool is_weak() const {
        return study == StudyKind::temporal_weak || study == StudyKind::spatial_weak;
    }
    bool is_temporal() const {
        return study == StudyKind::temporal_weak || study == StudyKind::temporal_strong ||
               study == StudyKind::linear_oracle;
    }
    bool is_spatial() const {
        return study == StudyKind::spatial_weak || study == StudyKind::spatial_strong;
    }

    // paths x steps x modes over every run the study performs
    long cost_estimate() const {
        long per_path = 0;
        if (is_temporal()) {
            per_path += static_cast<long>(m_ref) * model.n_modes;
            for (int m : m_list) per_path += static_cast<long>(m) * model.n_modes;
        } else if (is_spatial()) {
            per_path += static_cast<long>(model.m_steps) * n_ref;
            for (int n : n_list) per_path += static_cast<long>(model.m_steps) * n;
        }
        return k_paths * per_path;
    }

    // Hard constraint violations throw ConfigError; advisory findings are
    // returned as warnings.
    std::vector<std::string> validate() const {
        std::vector<std::string> warnings;
        if (schema_version != 1)
            throw ConfigError("config: unsupported schema_version " +
                              std::to_string(schema_version));
        try {
            auto model_warnings = model.validate();
            warnings.insert(warnings.end(), model_warnings.begin(), model_warnings.end());
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
        if (k_paths < 1) throw ConfigError("config: K must be >= 1");

        if (is_temporal()) {
            if (m_list.empty()) throw ConfigError("config: temporal study needs M_list");
            if (m_ref < 1) throw ConfigError("config: temporal study needs M_ref >= 1");
            if (m_ref > noise_table_max_steps)
                throw ConfigError("config: M_ref exceeds the table ceiling " +
                                  std::to_string(noise_table_max_steps));
            if (model.n_modes > noise_table_max_modes)
                throw ConfigError("config: model N exceeds the table ceiling " +
                                  std::to_string(noise_table_max_modes));
            int m_max = 1;
            for (int m : m_list) {
                if (m < 1) throw ConfigError("config: M_list entries must be >= 1");
                if (m_ref % m != 0)
                    throw ConfigError("config: M_ref must be divisible by every level (" +
                                      std::to_string(m_ref) + " mod " + std::to_string(m) +
                                      " != 0)");
                m_max = std::max(m_max, m);
            }
            if (m_max != m_ref && m_ref < 16 * m_max)
                warnings.push_back("config: reference M_ref=" + std::to_string(m_ref) +
                                   " is less than 16x the finest level " +
                                   std::to_string(m_max) +
                                   "; self-convergence slack may bias the fitted rate");
        }
        if (is_spatial()) {
            if (n_list.empty()) throw ConfigError("config: spatial study needs N_list");
            if (n_ref < 1) throw ConfigError("config: spatial study needs N_ref >= 1");
            if (n_ref > noise_table_max_modes)
                throw ConfigError("config: N_ref exceeds the table ceiling " +
                                  std::to_string(noise_table_max_modes));
            if (model.m_steps > noise_table_max_steps)
                throw ConfigError("config: model M exceeds the table ceiling " +
                                  std::to_string(noise_table_max_steps));
            int n_max = 1;
            for (int n : n_list) {
                if (n < 1) throw ConfigError("config: N_list entries must be >= 1");
                if (n > n_ref)
                    throw ConfigError("config: N_list entries must not exceed N_ref (" +
                                      std::to_string(n) + " > " + std::to_string(n_ref) + ")");
                n_max = std::max(n_max, n);
            }
            if (n_max != n_ref && n_ref < 4 * n_max)
                warnings.push_back("config: reference N_ref=" + std::to_string(n_ref) +
                                   " is less than 4x the finest level " + std::to_string(n_max) +
                                   "; self-convergence slack may bias the fitted rate");
            // Triangle-inequality slack of the absolute-error reading.  The
            // coupled difference shares its time grid between reference and
            // levels, so this does not invalidate the self-convergence
            // measurement; it is reported, not enforced.
            const double gap = spatial_reference_dominance_gap(model.horizon, model.m_steps, n_list);
            if (gap > 1.0) {
                std::ostringstream os;
                os << "config: temporal term tau^(3/4) exceeds lambda_max^(-3/2)/4 by factor "
                   << gap
                   << "; estimates are coupled self-convergence differences, not absolute errors";
                warnings.push_back(os.str());
            }
        }
        if (is_weak()) phi.make();  // throws on malformed functional specs
        return warnings;
    }

    json to_json() const {
        json j;
        j["schema_version"] = schema_version;
        j["study"] = to_string(study);
        j["seed"] = seed;
        j["K"] = k_paths;
        if (is_temporal()) {
            j["M_list"] = m_list;
            j["M_ref"] = m_ref;
        }
        if (is_spatial()) {
            j["N_list"] = n_list;
            j["N_ref"] = n_ref;
        }
        if (is_weak()) j["phi"] = phi.to_json();
        j["out"] = out_dir;
        j["dump_noise_table"] = dump_noise_table;

        json m;
        m["T"] = model.horizon;
        m["N"] = model.n_modes;
        m["M"] = model.m_steps;
        m["q_family"] = to_string(model.q_family);
        m["q_param"] = model.q_param;
        json x0 = json::object();
        for (const auto& [mode, c] : model.initial_modes) x0[std::to_string(mode)] = c;
        m["x0"] = x0;
        m["linear_mode"] = model.linear_mode;
        m["dealias_factor"] = model.dealias_factor;
        json s;
        s["tol"] = model.solver.tol;
        s["max_fixed_point_iters"] = model.solver.max_fixed_point_iters;
        s["max_newton_iters"] = model.solver.max_newton_iters;
        s["damping"] = model.solver.damping;
        m["solver"] = s;
        j["model"] = m;
        return j;
    }

    static ExperimentConfig from_json(const json& j) {
        ExperimentConfig cfg;
        cfg.schema_version = detail::get_field<int>(j, "schema_version", "");
        cfg.study = study_from_string(detail::get_field<std::string>(j, "study", ""));
        cfg.seed = detail::get_field_or<std::uint64_t>(j, "seed", "", 0);
        cfg.k_paths = detail::get_field_or<long>(j, "K", "", 1);
        cfg.m_list = detail::get_field_or<std::vector<int>>(j, "M_list", "", {});
        cfg.n_list = detail::get_field_or<std::vector<int>>(j, "N_list", "", {});
        cfg.m_ref = detail::get_field_or<int>(j, "M_ref", "", 0);
        cfg.n_ref = detail::get_field_or<int>(j, "N_ref", "", 0);
        cfg.out_dir = detail::get_field_or<std::string>(j, "out", "", "out");
        cfg.dump_noise_table = detail::get_field_or<bool>(j, "dump_noise_table", "", false);
        if (j.contains("phi")) cfg.phi = FunctionalSpec::from_json(j.at("phi"));

        if (j.contains("model")) {
            const json& m = j.at("model");
            cfg.model.horizon = detail::get_field_or<double>(m, "T", "model.", 1.0);
            cfg.model.n_modes = detail::get_field_or<int>(m, "N", "model.", 32);
            cfg.model.m_steps = detail::get_field_or<int>(m, "M", "model.", 256);
            const std::string family =
                detail::get_field_or<std::string>(m, "q_family", "model.", "power_law");
            if (family == "power_law")
                cfg.model.q_family = QFamily::power_law;
            else if (family == "trace_class")
                cfg.model.q_family = QFamily::trace_class;
            else
                throw ConfigError("config: unknown q_family '" + family + "'");
            cfg.model.q_param = detail::get_field_or<double>(m, "q_param", "model.", 2.0);
            if (m.contains("x0")) cfg.model.initial_modes = detail::get_mode_map(m, "x0", "model.");
            cfg.model.linear_mode = detail::get_field_or<bool>(m, "linear_mode", "model.", false);
            cfg.model.dealias_factor =
                detail::get_field_or<double>(m, "dealias_factor", "model.", 2.0);
            if (m.contains("solver")) {
                const json& s = m.at("solver");
                cfg.model.solver.tol =
                    detail::get_field_or<double>(s, "tol", "model.solver.", 1e-12);
                cfg.model.solver.max_fixed_point_iters = detail::get_field_or<int>(
                    s, "max_fixed_point_iters", "model.solver.", 50);
                cfg.model.solver.max_newton_iters =
                    detail::get_field_or<int>(s, "max_newton_iters", "model.solver.", 20);
                cfg.model.solver.damping =
                    detail::get_field_or<double>(s, "damping", "model.solver.", 1.0);
            }
        }
        return cfg;
    }

    // Accepts either a bare config document or a report.json that embeds
    // the resolved config under "config".
    static ExperimentConfig parse(const std::string& text) {
        json j;
        try {
            j = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ConfigError(std::string("config parse error: ") + e.what());
        }
        if (j.contains("config") && j.at("config").is_object()) return from_json(j.at("config"));
        return from_json(j);
    }
};

}  // namespace sch
