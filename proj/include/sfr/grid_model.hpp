#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sfr/common.hpp"

namespace sfr {

enum class BusType { Slack, PV, PQ };

struct Bus {
    int id = 0;
    BusType type = BusType::PQ;
    double v_set = 1.0;       // pu, used by slack and PV buses
    double p_load_mw = 0.0;
    double q_load_mvar = 0.0;
    double g_shunt_mw = 0.0;  // shunt at 1.0 pu voltage
    double b_shunt_mvar = 0.0;
};

struct Branch {
    int from = 0;
    int to = 0;
    double r = 0.0;  // pu on system base
    double x = 0.0;
    double b = 0.0;  // total line charging
    double tap = 1.0;
    bool in_service = true;
};

/// Two-axis synchronous machine. Electrical parameters are on the machine's
/// own MVA base; conversion to system base happens when the DAE is built.
struct Machine {
    std::string name;
    int bus = 0;
    double mva_base = 100.0;
    double p_mw = 0.0;      // dispatch
    double p_max_mw = 0.0;  // capacity, used for disturbance scaling
    double h = 0.0;         // inertia constant, s
    double d = 0.0;         // damping, pu
    double ra = 0.0;
    double xd = 0.0, xq = 0.0;
    double xd1 = 0.0, xq1 = 0.0;    // transient reactances X'd, X'q
    double td01 = 0.0, tq01 = 0.0;  // T'd0, T'q0
};

/// IEEE Type-1 excitation system (no saturation).
struct Exciter {
    int machine = 0;
    double ka = 0.0, ta = 0.0;
    double ke = 0.0, te = 0.0;
    double kf = 0.0, tf = 0.0;
    double vr_min = -1e9, vr_max = 1e9;
};

enum class GovernorModel { TGOV1, IEESGO, GAST };

/// Turbine-governor. Droop and limits are on the machine base.
///
///   TGOV1:  t1 valve lag, t2/t3 lead-lag, dt turbine damping, limits on valve
///   IEESGO: t1 droop lag, t2 washout, t3 lag, t4 turbine lag, k2 washout gain,
///           limits on the power demand
///   GAST:   t1 valve lag, t2 fuel lag, t3 exhaust-temperature lag, dt damping,
///           optional load-limit path (at, kt) disabled unless `temp_limit`
struct Governor {
    int machine = 0;
    GovernorModel model = GovernorModel::TGOV1;
    double r = 0.05;
    double t1 = 0.0, t2 = 0.0, t3 = 0.0, t4 = 0.0;
    double k2 = 0.0;
    double dt = 0.0;
    double p_min = -1e9, p_max = 1e9;
    double at = 1.0, kt = 2.0;
    bool temp_limit = false;
};

struct GridCase {
    std::string name;
    double base_mva = 100.0;
    double f0_hz = 60.0;
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Machine> machines;
    std::vector<Exciter> exciters;
    std::vector<Governor> governors;
    Commitment u_on;

    std::size_t n_machines() const { return machines.size(); }
    std::size_t n_buses() const { return buses.size(); }
    int bus_index(int bus_id) const;       // -1 if absent
    int slack_bus() const;                 // bus position
    const Exciter* exciter_of(int machine) const;
    const Governor* governor_of(int machine) const;
    bool committed(int machine) const { return u_on.at(machine) != 0; }
    double committed_capacity_mw() const;
};

const char* to_string(GovernorModel m);
const char* to_string(BusType t);

// ---------------------------------------------------------------------------
// Case I/O

GridCase load_case(const std::filesystem::path& path);
GridCase parse_case(const nlohmann::json& doc);
nlohmann::json case_to_json(const GridCase& grid);
void save_case(const GridCase& grid, const std::filesystem::path& path);

/// Throws ValidationError naming the violated invariant.
void validate_case(const GridCase& grid);

bool operator==(const GridCase& a, const GridCase& b);

// ---------------------------------------------------------------------------
// Unit commitment

/// Replaces the commitment vector. Decommitted machines then contribute no
/// states, injections or droop.
GridCase apply_unit_commitment(const GridCase& grid, const Commitment& u_on);

/// Same as apply_unit_commitment but accepts a decommitted slack machine by
/// moving the slack to the committed machine with the largest capacity. Used
/// for post-trip structures.
GridCase apply_commitment_with_slack_transfer(const GridCase& grid, const Commitment& u_on);

/// Spreads the dispatch of decommitted units over the committed ones in
/// proportion to their headroom, so total scheduled generation is preserved.
GridCase nominal_dispatch(const GridCase& grid);

/// Sets machine `machine` to `p_target_mw` and rebalances the other committed
/// units, the slack included (increases by headroom, decreases by
/// capacity). Works for the slack machine too.
GridCase redispatch(const GridCase& grid, int machine, double p_target_mw);

// ---------------------------------------------------------------------------
// State layout

enum class StateKind { Angle, Speed, Eq1, Ed1, ExciterVr, ExciterEfd, ExciterRf, Governor };

struct StateEntry {
    int machine = 0;
    std::string name;
    StateKind kind = StateKind::Angle;
};

/// Offsets of one committed machine's states inside x.
struct MachineBlock {
    int machine = 0;
    int bus = 0;  // bus position
    int delta = -1, omega = -1, eq1 = -1, ed1 = -1;
    int exciter = -1;   // first of (vr, efd, rf), -1 without exciter
    int governor = -1;  // first governor state, -1 without governor
    int n_governor = 0;
};

struct StateLayout {
    std::vector<StateEntry> states;
    std::vector<MachineBlock> blocks;  // committed machines in case order
    std::vector<int> speed;            // Z
    int n_buses = 0;

    int n() const { return static_cast<int>(states.size()); }
    int l() const { return 2 * n_buses; }
    /// Block position for a machine, -1 when not committed.
    int block_of(int machine) const;
};

/// Governor state names per model, in the fixed layout order.
std::vector<std::string> governor_state_names(GovernorModel m);

StateLayout build_layout(const GridCase& grid);

// ---------------------------------------------------------------------------
// Power flow and equilibrium

struct Setpoints {
    std::vector<double> p_c;        // governor setpoint or fixed Tm, system base
    std::vector<double> v_ref;      // exciter reference
    std::vector<double> efd_fixed;  // field voltage for machines without exciter
};

struct OperatingPoint {
    std::vector<double> v;      // per bus, pu
    std::vector<double> theta;  // per bus, rad
    std::vector<double> p_gen;  // per machine, pu on system base (0 if off)
    std::vector<double> q_gen;
    double max_mismatch = 0.0;
    int iterations = 0;

    // Filled by init_dynamic_equilibrium.
    StateLayout layout;
    Vector x_e;
    Vector y_e;
    Setpoints set;
    bool initialized = false;
};

struct PowerFlowOptions {
    double tolerance = 1e-10;
    int max_iterations = 20;
};

OperatingPoint solve_power_flow(const GridCase& grid, const PowerFlowOptions& opts = {});

/// Complex bus admittance matrix of the network (branches and bus shunts).
CMatrix build_ybus(const GridCase& grid);

OperatingPoint init_dynamic_equilibrium(const GridCase& grid, const OperatingPoint& pf);

/// Convenience: solve_power_flow + init_dynamic_equilibrium.
OperatingPoint solve_equilibrium(const GridCase& grid);

nlohmann::json operating_point_to_json(const GridCase& grid, const OperatingPoint& op);

}  // namespace sfr
