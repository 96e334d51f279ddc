#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sfr/grid_model.hpp"

namespace sfr {

/// Machine parameters on system base, ready for the residual.
struct MachineParams {
    double h = 0.0, d = 0.0, ra = 0.0;
    double xd = 0.0, xq = 0.0, xd1 = 0.0, xq1 = 0.0;
    double td01 = 0.0, tq01 = 0.0;
};

struct GovernorParams {
    GovernorModel model = GovernorModel::TGOV1;
    double r = 0.05;  // system base
    double t1 = 0.0, t2 = 0.0, t3 = 0.0, t4 = 0.0;
    double k2 = 0.0, dt = 0.0;
    double p_min = -1e9, p_max = 1e9;  // system base
    double at = 1.0, kt = 2.0;
    bool temp_limit = false;
};

/// The nonlinear DAE  x' = f(x, y),  0 = g(x, y)  of a committed case.
///
/// x holds machine, exciter and governor states in StateLayout order.
/// y holds the real and imaginary parts of every bus voltage, interleaved.
/// Loads are constant admittances fixed at the power-flow voltage.
class DaeSystem {
public:
    DaeSystem(const GridCase& grid, const OperatingPoint& op);

    const StateLayout& layout() const { return layout_; }
    int n() const { return layout_.n(); }
    int l() const { return layout_.l(); }
    double omega_s() const { return omega_s_; }
    double f0() const { return f0_; }

    /// Limits (exciter and governor clamps) are applied only when enabled;
    /// linearization runs with them off. With `holds`, limited integrators
    /// use the given hold flags instead of testing the bound themselves.
    void residual(const Vector& x, const Vector& y, Vector& f, Vector& g, bool limits,
                  const std::vector<signed char>* holds = nullptr) const;

    /// Per-state flags: +1 held at the upper bound, -1 at the lower, 0 free.
    std::vector<signed char> limit_holds(const Vector& x, const Vector& y) const;

    /// Rotor-speed deviations averaged with weights H_z over machines in
    /// service.
    double coi_speed_deviation(const Vector& x) const;

    /// Removes the machine's injection and freezes its states.
    void trip_machine(int machine);
    /// Adds a constant-admittance load drawing `delta_p_pu` at `v_ref_mag`.
    void add_load(int bus_position, double delta_p_pu, double v_ref_mag);

    bool in_service(int block) const { return !tripped_[block]; }
    const MachineParams& machine(int block) const { return machines_[block]; }
    const std::vector<double>& inertia() const { return inertia_; }

    /// Clamps limited states into their bounds (after an accepted step).
    void clamp_states(Vector& x) const;

private:
    StateLayout layout_;
    std::vector<MachineParams> machines_;
    std::vector<int> exciter_of_;  // index into exciters_ or -1
    std::vector<Exciter> exciters_;
    std::vector<int> governor_of_;
    std::vector<GovernorParams> governors_;
    std::vector<double> inertia_;
    std::vector<bool> tripped_;
    Setpoints set_;
    Matrix y_real_;  // [Ir; Ii] = y_real_ * [Vr; Vi], interleaved per bus
    double omega_s_ = 0.0;
    double f0_ = 60.0;
};

std::pair<Vector, Vector> dae_residual(const DaeSystem& dae, const Vector& x, const Vector& y,
                                       bool limits = false);

// ---------------------------------------------------------------------------
// Disturbances and trajectories

enum class DisturbanceKind { GeneratorTrip = 0, LoadStep = 1 };

struct DisturbanceEvent {
    double time = 1.0;  // s
    DisturbanceKind kind = DisturbanceKind::GeneratorTrip;
    int target = 0;            // machine index for trips, bus position for load steps
    double delta_p_mw = 0.0;   // positive = lost generation or added load
};

void validate_event(const GridCase& grid, const DisturbanceEvent& ev);

struct Trajectory {
    std::vector<double> t;
    std::vector<Vector> x;
    std::vector<Vector> y;
    std::vector<double> f_coi;  // Hz
    double event_time = 0.0;
    std::vector<std::string> state_names;
};

struct SimulationOptions {
    double horizon = 30.0;  // s simulated after the event
    double dt = 0.01;
    double newton_tol = 1e-10;
    int max_newton = 25;
    bool limits = true;
    int record_every = 1;  // keep every k-th step
};

/// Implicit-trapezoidal integration of the DAE starting from the equilibrium
/// in `op`. The event fires exactly at its timestamp (snapped to the grid).
Trajectory simulate(const GridCase& grid, const OperatingPoint& op, const std::optional<DisturbanceEvent>& event,
                    const SimulationOptions& opts = {});

/// COI frequency in Hz for every sample of a trajectory, honouring trips.
std::vector<double> coi_frequency(const GridCase& grid, const Trajectory& traj,
                                  const std::optional<DisturbanceEvent>& event = std::nullopt);

/// f_coi = f0 (1 + sum_z C_z dw_z) for explicit speed deviations and inertias.
double coi_frequency(double f0, const std::vector<double>& inertia, const std::vector<double>& speed_dev);

struct NadirMeasurement {
    double f_nadir = 0.0;
    double t_nadir = 0.0;
    bool boundary_minimum = false;
};

/// Global minimum of a sampled series, with parabolic refinement through the
/// discrete minimum and its neighbours. Earliest sample wins ties.
NadirMeasurement measure_nadir(const std::vector<double>& t, const std::vector<double>& series);

/// Nadir of the post-event part of a trajectory, time relative to the event.
NadirMeasurement measure_trajectory_nadir(const Trajectory& traj);

void write_trajectory_csv(const Trajectory& traj, const std::filesystem::path& path);

}  // namespace sfr
