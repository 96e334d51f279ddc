#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "sfr/grid_model.hpp"

namespace fixtures {

inline std::string case_path(const std::string& name) { return std::string(SFR_CASES_DIR) + "/" + name + ".json"; }

inline sfr::GridCase bundled(const std::string& name) { return sfr::load_case(case_path(name)); }

/// Machine record on a 100 MVA base with the given bus, dispatch and inertia.
inline nlohmann::json machine(int bus, double p_mw, double h) {
    return {{"bus", bus},   {"mva_base", 100.0}, {"p_mw", p_mw}, {"p_max_mw", 100.0}, {"h", h},
            {"xd", 1.8},    {"xq", 1.7},         {"xd1", 0.3},   {"xq1", 0.55},       {"td01", 8.0},
            {"tq01", 0.4}};
}

inline nlohmann::json tgov1(int m, double r = 0.05) {
    return {{"machine", m}, {"model", "TGOV1"}, {"r", r}, {"t1", 0.5}, {"t2", 1.0}, {"t3", 5.0}};
}

/// Two buses joined by a reactance, one machine at the slack bus.
inline nlohmann::json two_bus(double load_mw, double r = 0.0) {
    return {{"base_mva", 100.0},
            {"f0_hz", 60.0},
            {"buses",
             {{{"id", 1}, {"type", "slack"}, {"v_set", 1.0}},
              {{"id", 2}, {"type", "PQ"}, {"p_load_mw", load_mw}}}},
            {"branches", {{{"from", 1}, {"to", 2}, {"r", r}, {"x", 0.1}}}},
            {"machines", {machine(1, load_mw, 5.0)}},
            {"exciters", nlohmann::json::array()},
            {"governors", {tgov1(0)}},
            {"u_on", {1}}};
}

/// Two machines on one 100 MVA base each, R = 0.05, sharing a load bus.
inline nlohmann::json two_unit(double load_mw = 100.0) {
    return {{"base_mva", 100.0},
            {"f0_hz", 60.0},
            {"buses",
             {{{"id", 1}, {"type", "slack"}, {"v_set", 1.0}},
              {{"id", 2}, {"type", "PV"}, {"v_set", 1.0}},
              {{"id", 3}, {"type", "PQ"}, {"p_load_mw", load_mw}, {"q_load_mvar", 10.0}}}},
            {"branches",
             {{{"from", 1}, {"to", 3}, {"r", 0.002}, {"x", 0.05}},
              {{"from", 2}, {"to", 3}, {"r", 0.002}, {"x", 0.05}}}},
            {"machines", {machine(1, load_mw / 2, 3.0), machine(2, load_mw / 2, 6.0)}},
            {"exciters", nlohmann::json::array()},
            {"governors", {tgov1(0), tgov1(1)}},
            {"u_on", {1, 1}}};
}

}  // namespace fixtures
