#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sfr/dynamics.hpp"
#include "sfr/grid_model.hpp"

namespace sfr {

struct StateSpace {
    Matrix a;  // reduced Jacobian J1 - J2 J4^-1 J3
    Matrix j1, j2, j3, j4;
    double j4_condition = 0.0;
    StateLayout layout;
};

using ResidualFn = std::function<void(const Vector& x, const Vector& y, Vector& f, Vector& g)>;

/// Central-difference Jacobians of an arbitrary DAE at (x, y) and the Schur
/// complement reduction. Throws NumericalError when J4 is singular or its
/// condition number exceeds 1e12.
StateSpace linearize_residual(const ResidualFn& fn, const Vector& x, const Vector& y);

StateSpace linearize(const GridCase& grid, const OperatingPoint& op);

struct EigenStructure {
    CVector lambda;
    CMatrix v;  // right eigenvectors, columns
    CMatrix w;  // left eigenvectors, columns, w_i^T v_k = delta_ik
    Matrix participation;  // p(k, i) = |w_{k,i} v_{k,i}|
    double biorthonormality_residual = 0.0;
    double reconstruction_residual = 0.0;  // relative to ||A||
    /// Index of the conjugate partner of each mode (itself for real modes).
    std::vector<int> partner;
};

/// Dense nonsymmetric eigendecomposition with left vectors from V^-1.
/// Conjugate pairs are adjacent, positive imaginary part first; groups are
/// ordered by decreasing real part.
EigenStructure eigendecompose(const Matrix& a, double tolerance = 1e-8);
EigenStructure eigendecompose(const StateSpace& ss, double tolerance = 1e-8);

enum class ModeRanking {
    SpeedParticipation,  // s_i = sum over speed states of p(k, i)
    CoiResponse,         // |gamma_i| / |Re lambda_i| for a reference deviation
};

const char* to_string(ModeRanking r);
ModeRanking mode_ranking_from_string(const std::string& s);

struct ModeSelection {
    ModeRanking ranking = ModeRanking::CoiResponse;
    int mu_target = 12;
    /// When set, selection stops once this fraction of the total score is
    /// covered (instead of mu_target).
    std::optional<double> participation_fraction;
    double drift_threshold = 1e-6;  // |lambda| below this is the angle-drift mode
    /// Initial deviation used by CoiResponse ranking, see unit_deviation().
    Vector reference;
};

struct ModalStructure {
    Commitment u_on;
    std::vector<Complex> lambda;  // Lambda_M
    CMatrix w;                    // n x mu, left vectors of selected modes
    CMatrix v_speed;              // |Z| x mu, right-vector speed rows
    std::vector<int> speed_index;
    std::vector<int> speed_machine;  // machine index of each speed state
    std::vector<double> inertia;     // H_z on system base, aligned with speed_index
    std::vector<double> weights;     // C_z
    std::vector<StateEntry> states;  // layout, for reconstruction of dx0
    std::vector<double> score;       // ranking score of each selected mode
    std::vector<int> mode_index;     // position in the full eigenstructure

    int mu() const { return static_cast<int>(lambda.size()); }
    int n() const { return static_cast<int>(w.rows()); }
};

/// Ranks modes (see ModeRanking), keeps whole conjugate pairs, returns them
/// in eigenstructure order.
ModalStructure select_frequency_modes(const EigenStructure& eig, const StateLayout& layout,
                                      const std::vector<double>& inertia, const Commitment& u_on,
                                      const ModeSelection& sel);

/// Every mode except the angle-drift one, in eigenstructure order.
ModalStructure all_modes(const EigenStructure& eig, const StateLayout& layout, const std::vector<double>& inertia,
                         const Commitment& u_on, double drift_threshold = 1e-6);

/// Throws ValidationError when conjugate closure or weight normalisation fails.
void validate_modal_structure(const ModalStructure& ms);

nlohmann::json modal_structure_to_json(const ModalStructure& ms);
ModalStructure modal_structure_from_json(const nlohmann::json& doc);

// ---------------------------------------------------------------------------
// Post-disturbance equilibrium and modal coefficients

/// How a trip is represented in the linear model.
enum class TripModel {
    PreTrip,   // reuse the pre-disturbance structure, drop the unit from droop and COI weights
    PostTrip,  // linearize the commitment that remains after the trip
};

const char* to_string(TripModel m);
TripModel trip_model_from_string(const std::string& s);

struct DeltaX0 {
    Vector dx0;
    double delta_omega = 0.0;  // pu
    double f_e = 0.0;          // Hz
    double delta_p_pu = 0.0;
    std::optional<int> excluded_machine;  // tripped unit still present in the layout
};

/// Steady-state deviation from the droop sum and the initial deviation
/// vector in the layout of `structure_case` (the case whose linearization is
/// used). `grid` carries the pre-disturbance commitment.
DeltaX0 post_disturbance_equilibrium(const GridCase& grid, const DisturbanceEvent& dist,
                                     TripModel trip_model = TripModel::PostTrip);

/// Initial deviation for a -1 pu steady speed deviation with every committed
/// governor responding: speeds +1, governor states -1/R. Reference direction
/// for CoiResponse ranking.
Vector unit_deviation(const GridCase& grid, const StateLayout& layout);

/// Effective regulation 1/R (+ turbine damping) of each responsive unit,
/// system base.
double total_regulation(const GridCase& grid, std::optional<int> excluded = std::nullopt);

struct GammaSet {
    std::vector<Complex> gamma;
    std::vector<double> x;  // disturbance descriptor [dP MW, type, index]
    enum class Source { Analytic, Estimated } source = Source::Analytic;
};

/// gamma_i = sum_z C_z <w_i, dx0> v_{i,z}
GammaSet modal_coefficients(const ModalStructure& ms, const DeltaX0& dx0);

/// Full-length dx0 vs. any state layout; speed weights renormalised without
/// the excluded machine.
std::vector<double> coi_weights(const ModalStructure& ms, std::optional<int> excluded_machine);

// ---------------------------------------------------------------------------
// SFR reconstruction and nadir

struct SfrSeries {
    std::vector<double> value;  // pu
    double max_imag = 0.0;
};

SfrSeries reconstruct_sfr(const std::vector<Complex>& lambda, const std::vector<Complex>& gamma,
                          const std::vector<double>& t);

/// Single-time evaluation of the modal sum, its first and second derivative.
double sfr_value(const std::vector<Complex>& lambda, const std::vector<Complex>& gamma, double t);
double sfr_derivative(const std::vector<Complex>& lambda, const std::vector<Complex>& gamma, double t);
double sfr_second_derivative(const std::vector<Complex>& lambda, const std::vector<Complex>& gamma, double t);

struct NadirResult {
    double f_nadir = 0.0;
    double t_nadir = 0.0;
    bool polynomial_fallback = false;
    bool no_interior_nadir = false;
    double expansion_point = 0.0;
    std::vector<double> poly;  // b0, b1, b2
    int newton_iterations = 0;
};

struct NadirOptions {
    double horizon = 30.0;
    double scan_dt = 0.01;
    double check_dt = 0.05;  // coarse grid used to reject non-global minima
    int newton_max = 5;
};

/// Second-order Taylor polynomial of the derivative, smallest positive root,
/// Newton refinement on the exact derivative.
NadirResult nadir_polynomial(const std::vector<Complex>& lambda, const std::vector<Complex>& gamma, double f0,
                             double f_e, const NadirOptions& opts = {});

/// Dense evaluation plus parabolic refinement.
NadirResult nadir_scan(const std::vector<Complex>& lambda, const std::vector<Complex>& gamma, double f0,
                       double f_e, double horizon, double dt);

}  // namespace sfr
