#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <nlohmann/json.hpp>

#include "pm/dynamics.hpp"
#include "pm/model.hpp"

namespace pm {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Number formatting
// ---------------------------------------------------------------------------

/// Decimal representation with the requested number of significant digits
/// (17 round-trips a double exactly).
inline std::string format_real(double v, int significant_digits = 17) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", significant_digits, v);
    return buf;
}

// ---------------------------------------------------------------------------
// Spec files
// ---------------------------------------------------------------------------

namespace detail {

inline void require_keys(const json& obj, const std::vector<std::string>& allowed,
                         const std::string& context) {
    if (!obj.is_object())
        throw std::invalid_argument("spec parse: " + context + " must be a JSON object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const auto& k : allowed)
            if (it.key() == k) ok = true;
        if (!ok)
            throw std::invalid_argument("spec parse: unknown key \"" + it.key() + "\" in " +
                                        context);
    }
}

inline double require_number(const json& obj, const std::string& key,
                             const std::string& context) {
    if (!obj.contains(key))
        throw std::invalid_argument("spec parse: missing key \"" + key + "\" in " + context);
    const json& v = obj.at(key);
    if (!v.is_number())
        throw std::invalid_argument("spec parse: key \"" + key + "\" in " + context +
                                    " must be a number");
    return v.get<double>();
}

inline TransitionRule parse_transition(const json& j, const std::string& context) {
    require_keys(j, {"const", "beverton_holt"}, context);
    if (j.contains("const") == j.contains("beverton_holt"))
        throw std::invalid_argument("spec parse: " + context +
                                    " needs exactly one of \"const\" or \"beverton_holt\"");
    if (j.contains("const")) {
        if (!j.at("const").is_number())
            throw std::invalid_argument("spec parse: \"const\" in " + context +
                                        " must be a number");
        return TransitionRule::constant(j.at("const").get<double>());
    }
    const json& bh = j.at("beverton_holt");
    require_keys(bh, {"b", "c"}, context + ".beverton_holt");
    return TransitionRule::beverton_holt(require_number(bh, "b", context),
                                         require_number(bh, "c", context));
}

inline IsolatedSpec parse_population(const json& j, const std::string& context) {
    require_keys(j, {"transitions", "fecundities"}, context);
    if (!j.contains("transitions") || !j.at("transitions").is_array())
        throw std::invalid_argument("spec parse: " + context +
                                    " needs a \"transitions\" array");
    if (!j.contains("fecundities") || !j.at("fecundities").is_array())
        throw std::invalid_argument("spec parse: " + context +
                                    " needs a \"fecundities\" array");
    IsolatedSpec s;
    std::size_t idx = 1;
    for (const json& t : j.at("transitions"))
        s.transitions.push_back(
            parse_transition(t, context + ".transitions[" + std::to_string(idx++) + "]"));
    for (const json& f : j.at("fecundities")) {
        if (!f.is_number())
            throw std::invalid_argument("spec parse: fecundities in " + context +
                                        " must be numbers");
        s.fecundities.push_back(f.get<double>());
    }
    return s;
}

inline json transition_to_json(const TransitionRule& r) {
    if (r.is_constant())
        return json{{"const", std::get<ConstantRule>(r.raw()).t}};
    const auto& bh = std::get<BevertonHoltRule>(r.raw());
    return json{{"beverton_holt", {{"b", bh.b}, {"c", bh.c}}}};
}

inline json population_to_json(const IsolatedSpec& s) {
    json transitions = json::array();
    for (const auto& t : s.transitions) transitions.push_back(transition_to_json(t));
    return json{{"transitions", transitions}, {"fecundities", s.fecundities}};
}

}  // namespace detail

/// Parses a model spec document. Parsing is strict: unknown keys, missing
/// keys, and wrong value types are errors. Parsing does not validate the
/// demographic invariants; call validate() on the result.
inline ModelSpec parse_spec(const json& j) {
    if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string())
        throw std::invalid_argument("spec parse: document needs a string \"kind\" field");
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "isolated") {
        detail::require_keys(j, {"kind", "transitions", "fecundities"}, "isolated spec");
        json body = j;
        body.erase("kind");
        return detail::parse_population(body, "isolated spec");
    }
    if (kind == "single_egg") {
        detail::require_keys(j, {"kind", "migrant", "resident", "phi"}, "single_egg spec");
        SingleEggSpec s;
        if (!j.contains("migrant") || !j.contains("resident"))
            throw std::invalid_argument(
                "spec parse: single_egg spec needs \"migrant\" and \"resident\" blocks");
        s.migrant = detail::parse_population(j.at("migrant"), "migrant");
        s.resident = detail::parse_population(j.at("resident"), "resident");
        s.phi = detail::require_number(j, "phi", "single_egg spec");
        return s;
    }
    if (kind == "two_egg") {
        detail::require_keys(j, {"kind", "migrant", "resident", "phi_s", "phi_r"},
                             "two_egg spec");
        TwoEggSpec s;
        if (!j.contains("migrant") || !j.contains("resident"))
            throw std::invalid_argument(
                "spec parse: two_egg spec needs \"migrant\" and \"resident\" blocks");
        s.migrant = detail::parse_population(j.at("migrant"), "migrant");
        s.resident = detail::parse_population(j.at("resident"), "resident");
        s.phi_s = detail::require_number(j, "phi_s", "two_egg spec");
        s.phi_r = detail::require_number(j, "phi_r", "two_egg spec");
        return s;
    }
    throw std::invalid_argument("spec parse: unknown kind \"" + kind + "\"");
}

inline ModelSpec parse_spec_string(const std::string& text) {
    return parse_spec(json::parse(text));
}

inline ModelSpec load_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot read spec file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error("malformed JSON in " + path.string() + ": " + e.what());
    }
    return parse_spec(j);
}

inline json spec_to_json(const ModelSpec& spec) {
    return std::visit([](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, IsolatedSpec>) {
            json j = detail::population_to_json(s);
            j["kind"] = "isolated";
            return j;
        } else if constexpr (std::is_same_v<T, SingleEggSpec>) {
            return json{{"kind", "single_egg"},
                        {"migrant", detail::population_to_json(s.migrant)},
                        {"resident", detail::population_to_json(s.resident)},
                        {"phi", s.phi}};
        } else {
            return json{{"kind", "two_egg"},
                        {"migrant", detail::population_to_json(s.migrant)},
                        {"resident", detail::population_to_json(s.resident)},
                        {"phi_s", s.phi_s},
                        {"phi_r", s.phi_r}};
        }
    }, spec);
}

// ---------------------------------------------------------------------------
// Provenance hashing
// ---------------------------------------------------------------------------

inline std::string sha256_hex(const std::string& data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256: digest computation failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

/// Hash of the canonical (sorted-key, compact) serialization of a spec,
/// recorded in output metadata to link artifacts to their inputs.
inline std::string spec_hash(const ModelSpec& spec) {
    return sha256_hex(spec_to_json(spec).dump());  // nlohmann keeps keys sorted
}

// ---------------------------------------------------------------------------
// File output
// ---------------------------------------------------------------------------

/// Writes content to path via a temp file + rename so that interrupted runs
/// never leave a partially written file at the declared location.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    fs::path dir = path.parent_path();
    if (!dir.empty()) fs::create_directories(dir);
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw std::runtime_error("cannot open for writing: " + tmp.string());
        out << content;
        out.flush();
        if (!out)
            throw std::runtime_error("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

/// RFC-4180-style field quoting: quote when the field contains a comma,
/// quote, or newline; double embedded quotes.
inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

inline std::string trajectory_csv(const Trajectory& traj) {
    std::ostringstream out;
    if (traj.states.empty()) return "";
    out << "step";
    for (std::size_t i = 1; i <= traj.states.front().size(); ++i) out << ",x" << i;
    out << "\n";
    for (std::size_t t = 0; t < traj.states.size(); ++t) {
        out << t;
        for (double v : traj.states[t]) out << "," << format_real(v);
        out << "\n";
    }
    return out.str();
}

inline json trichotomy_report_json(const TrichotomyReport& rep) {
    json j;
    j["outcome"] = to_string(rep.outcome);
    j["r0_at_origin"] = rep.r0_at_origin;
    j["residual"] = rep.residual;
    if (rep.fixed_point) j["q"] = *rep.fixed_point;
    json limits = json::array();
    for (const auto& lim : rep.per_start_limits) limits.push_back(lim);
    j["per_start_limits"] = limits;
    j["flags"] = rep.flags;
    return j;
}

inline json property_report_json(const PropertyReport& rep) {
    json j;
    j["property"] = rep.property;
    j["samples_tested"] = rep.samples_tested;
    j["verdict"] = rep.passed() ? "pass" : "fail";
    json viols = json::array();
    for (const auto& v : rep.violations)
        viols.push_back({{"sample", v.sample}, {"note", v.note}, {"margin", v.margin}});
    j["violations"] = viols;
    return j;
}

}  // namespace pm
