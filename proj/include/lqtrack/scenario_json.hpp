#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "lqtrack/model.hpp"

namespace lqtrack {

using nlohmann::json;

// ============================================================================
// JSON scenario schema: matrices as row-major nested arrays, times in seconds
// ============================================================================

inline json matrix_to_json(const Matrix& M) {
    json rows = json::array();
    for (int i = 0; i < M.rows(); ++i) {
        json row = json::array();
        for (int j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline json vector_to_json(const Vector& v) {
    json out = json::array();
    for (int i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

inline Matrix json_to_matrix(const json& j, const std::string& what) {
    detail::require(j.is_array() && !j.empty(), what + ": expected a nonempty nested array");
    const auto rows = j.size();
    detail::require(j[0].is_array() && !j[0].empty(), what + ": expected nested arrays of numbers");
    const auto cols = j[0].size();
    Matrix M(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        detail::require(j[i].is_array() && j[i].size() == cols, what + ": ragged rows");
        for (std::size_t c = 0; c < cols; ++c) {
            detail::require(j[i][c].is_number(), what + ": entries must be numbers");
            M(static_cast<int>(i), static_cast<int>(c)) = j[i][c].get<double>();
        }
    }
    return M;
}

inline Vector json_to_vector(const json& j, const std::string& what) {
    detail::require(j.is_array() && !j.empty(), what + ": expected a nonempty array");
    Vector v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) {
        detail::require(j[i].is_number(), what + ": entries must be numbers");
        v(static_cast<int>(i)) = j[i].get<double>();
    }
    return v;
}

inline json excitation_to_json(const ExcitationSpec& spec) {
    json chans = json::array();
    for (const auto& ch : spec.channels) {
        json terms = json::array();
        for (const auto& term : ch.terms) terms.push_back({term.amplitude, term.omega, term.phase});
        chans.push_back({{"offset", ch.offset}, {"terms", std::move(terms)}});
    }
    return chans;
}

inline ExcitationSpec json_to_excitation(const json& j, const std::string& what) {
    detail::require(j.is_array(), what + ": expected an array of channels");
    ExcitationSpec spec;
    for (const auto& jc : j) {
        ExcitationChannel ch;
        ch.offset = jc.value("offset", 0.0);
        if (jc.contains("terms")) {
            for (const auto& jt : jc.at("terms")) {
                detail::require(jt.is_array() && jt.size() == 3,
                                what + ": each term is [amplitude, omega, phase]");
                ch.terms.push_back({jt[0].get<double>(), jt[1].get<double>(), jt[2].get<double>()});
            }
        }
        spec.channels.push_back(std::move(ch));
    }
    return spec;
}

inline ScenarioConfig scenario_from_json(const json& j) {
    ScenarioConfig cfg;
    cfg.name = j.value("name", std::string("scenario"));

    const auto& jp = j.at("plant");
    cfg.plant.A = json_to_matrix(jp.at("A"), "plant.A");
    cfg.plant.B = json_to_matrix(jp.at("B"), "plant.B");
    cfg.plant.C = jp.contains("C") ? json_to_matrix(jp.at("C"), "plant.C")
                                   : Matrix(Matrix::Zero(cfg.plant.A.rows(), cfg.plant.A.cols()));

    if (j.contains("exosystem")) {
        Exosystem exo;
        exo.D = json_to_matrix(j.at("exosystem").at("D"), "exosystem.D");
        exo.autonomous = j.at("exosystem").value("autonomous", true);
        cfg.exo = exo;
    }

    cfg.x0 = json_to_vector(j.at("x0"), "x0");
    cfg.v0 = j.contains("v0") ? json_to_vector(j.at("v0"), "v0")
                              : Vector(Vector::Zero(cfg.plant.A.rows()));

    const auto& je = j.at("excitation");
    cfg.u_excitation = json_to_excitation(je.at("u"), "excitation.u");
    if (je.contains("w")) cfg.w_excitation = json_to_excitation(je.at("w"), "excitation.w");

    const auto& jf = j.at("filters");
    cfg.filters.lambda0 = jf.at("lambda").get<double>();
    if (jf.contains("bank")) cfg.filters.bank = jf.at("bank").get<std::vector<double>>();
    if (jf.contains("bank_d")) cfg.filters.bank_d = jf.at("bank_d").get<std::vector<double>>();

    cfg.estimate_coupling = j.value("estimate_coupling", false);
    cfg.alpha = j.at("alpha").get<double>();
    if (j.contains("sigma") && !j.at("sigma").is_null()) cfg.sigma = j.at("sigma").get<double>();
    cfg.t_c = j.at("t_c").get<double>();
    cfg.gamma = j.at("gamma").get<double>();
    cfg.Q = json_to_matrix(j.at("Q"), "Q");
    cfg.R = json_to_matrix(j.at("R"), "R");
    if (j.contains("Pi")) cfg.Pi = json_to_matrix(j.at("Pi"), "Pi");
    cfg.step = j.value("step", 1e-3);
    cfg.t_end = j.at("t_end").get<double>();
    cfg.tol_grad = j.value("tol_grad", 1e-8);
    cfg.max_flow_time = j.value("max_flow_time", 1e4);
    cfg.log_every = j.value("log_every", 1);

    cfg.validate();
    return cfg;
}

inline json scenario_to_json(const ScenarioConfig& cfg) {
    json j;
    j["name"] = cfg.name;
    j["plant"] = {{"A", matrix_to_json(cfg.plant.A)},
                  {"B", matrix_to_json(cfg.plant.B)},
                  {"C", matrix_to_json(cfg.plant.C)}};
    if (cfg.exo)
        j["exosystem"] = {{"D", matrix_to_json(cfg.exo->D)}, {"autonomous", cfg.exo->autonomous}};
    j["x0"] = vector_to_json(cfg.x0);
    j["v0"] = vector_to_json(cfg.v0);
    j["excitation"] = {{"u", excitation_to_json(cfg.u_excitation)}};
    if (cfg.w_excitation) j["excitation"]["w"] = excitation_to_json(*cfg.w_excitation);
    j["filters"] = {{"lambda", cfg.filters.lambda0}};
    if (!cfg.filters.bank.empty()) j["filters"]["bank"] = cfg.filters.bank;
    if (!cfg.filters.bank_d.empty()) j["filters"]["bank_d"] = cfg.filters.bank_d;
    j["estimate_coupling"] = cfg.estimate_coupling;
    j["alpha"] = cfg.alpha;
    if (cfg.sigma) j["sigma"] = *cfg.sigma;
    j["t_c"] = cfg.t_c;
    j["gamma"] = cfg.gamma;
    j["Q"] = matrix_to_json(cfg.Q);
    j["R"] = matrix_to_json(cfg.R);
    if (cfg.Pi) j["Pi"] = matrix_to_json(*cfg.Pi);
    j["step"] = cfg.step;
    j["t_end"] = cfg.t_end;
    j["tol_grad"] = cfg.tol_grad;
    j["max_flow_time"] = cfg.max_flow_time;
    j["log_every"] = cfg.log_every;
    return j;
}

inline ScenarioConfig load_scenario(const std::string& path) {
    std::ifstream in(path);
    detail::require(in.good(), "cannot open scenario file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ScenarioError("scenario JSON parse error in " + path + ": " + e.what());
    }
    return scenario_from_json(j);
}

} // namespace lqtrack
