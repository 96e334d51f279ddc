#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sfr/deepsets.hpp"
#include "sfr/dynamics.hpp"
#include "sfr/grid_model.hpp"
#include "sfr/modal.hpp"

namespace sfr {

/// Hash of the case with dispatch and commitment cleared, so every operating
/// state of one network maps to the same value.
std::string case_hash(const GridCase& grid);

/// H_z on system base for each committed machine, in layout order.
std::vector<double> layout_inertia(const GridCase& grid, const StateLayout& layout);

struct BuiltStructure {
    ModalStructure structure;
    double max_real = 0.0;  // largest Re(lambda) outside the angle-drift mode
};

/// Applies grid.u_on (moving the slack if needed), re-dispatches at the
/// nominal schedule, linearizes and selects modes. `mu_target` 0, or a target
/// at least the number of modes, keeps every mode.
BuiltStructure build_modal_structure(const GridCase& grid, const ModeSelection& sel);

// ---------------------------------------------------------------------------
// Eigenvalue bank

struct BankEntry {
    ModalStructure structure;
    double max_real = 0.0;
    bool stable() const { return max_real < 0.0; }
};

struct BankFailure {
    std::string key;
    std::string message;
};

struct LambdaBank {
    std::map<std::string, BankEntry> entries;
    std::string case_name;
    std::string case_hash;
    std::string created;  // UTC, ISO 8601
    ModeRanking ranking = ModeRanking::CoiResponse;
    int mu_target = 12;
    std::vector<BankFailure> failures;
};

/// One structure per distinct commitment. Failures are listed, not thrown.
LambdaBank build_lambda_bank(const GridCase& grid, const std::vector<Commitment>& commitments,
                             const ModeSelection& sel, bool parallel = true);

/// The input list plus every single-unit trip u \ i with at least one unit
/// left, deduplicated, in first-seen order.
std::vector<Commitment> with_post_trip_commitments(const std::vector<Commitment>& commitments);

/// Exact-key lookup; a miss throws LookupError.
const BankEntry& lookup_bank(const LambdaBank& bank, const Commitment& u_on);

/// Directory with index.json and one <key>.json per entry.
void save_bank(const LambdaBank& bank, const std::filesystem::path& dir);
LambdaBank load_bank(const std::filesystem::path& dir);

/// Seeded random commitments with at least `min_on` units on, deduplicated.
std::vector<Commitment> random_commitments(int n_g, int count, int min_on, std::uint64_t seed);

/// Reads commitments from a text list ("1101" per line, '#' comments).
std::vector<Commitment> read_commitment_list(const std::filesystem::path& path, int n_g);

// ---------------------------------------------------------------------------
// Disturbances

/// x = [dP MW, type (0 trip, 1 load step), index]; index is the machine
/// position for trips and the bus id for load steps.
struct Disturbance {
    double delta_p_mw = 0.0;
    int type = 0;
    int index = 0;
};

struct LoadStepSpec {
    int bus_id = 0;
    double delta_p_mw = 0.0;
};

/// One trip per committed unit with positive output (its solved output in
/// MW), machines ascending, then the configured load steps in bus-id order.
std::vector<Disturbance> generate_disturbances(const GridCase& grid, const OperatingPoint& pf,
                                               const std::vector<LoadStepSpec>& load_steps = {});

DisturbanceEvent to_event(const GridCase& grid, const Disturbance& x, double time = 1.0);
DisturbanceFeature to_feature(const Disturbance& x);

/// Commitment whose structure describes the system after `x`.
Commitment structure_commitment(const Commitment& u_on, const Disturbance& x, TripModel trip_model);

/// Analytic modal coefficients for `x` from the bank (the structure for
/// structure_commitment), plus the steady-state frequency.
struct AnalyticGamma {
    const BankEntry* entry = nullptr;
    std::vector<Complex> gamma;
    double f_e = 0.0;
};
AnalyticGamma analytic_gamma(const GridCase& grid, const LambdaBank& bank, const Disturbance& x,
                             TripModel trip_model);

// ---------------------------------------------------------------------------
// Dataset collection

/// "start:step:stop" (inclusive) or a comma-separated list, values in (0, 1].
std::vector<double> parse_alpha_grid(const std::string& text);

struct DatasetRecord {
    Commitment u_on;
    Disturbance x;
    double alpha = 0.0;
    std::string structure_key;
    std::vector<Complex> lambda;
    std::vector<Complex> gamma;
    double f_e = 0.0;
    bool stable = false;
    std::string note;
    /// Pre-disturbance grid measurements: V (per bus), theta (per bus), machine
    /// output on system base.
    std::vector<double> v, theta, p_gen;
};

struct CollectOptions {
    TripModel trip_model = TripModel::PostTrip;
    bool parallel = true;
};

/// For every commitment and every committed unit i with positive nominal
/// output: dP = alpha * P_i for each alpha, Gamma from the bank. Records that
/// fail are kept with stable = false and a note.
std::vector<DatasetRecord> collect_dataset(const GridCase& grid, const std::vector<Commitment>& commitments,
                                           const std::vector<double>& alpha_grid, const LambdaBank& bank,
                                           const CollectOptions& opts = {});

/// Pre-disturbance state of a record: nominal dispatch of its commitment with
/// the disturbed unit moved to dP.
GridCase record_state(const GridCase& grid, const DatasetRecord& rec);

nlohmann::json record_to_json(const DatasetRecord& rec);
DatasetRecord record_from_json(const nlohmann::json& doc);
void write_dataset(const std::vector<DatasetRecord>& records, const std::filesystem::path& path);
std::vector<DatasetRecord> read_dataset(const std::filesystem::path& path);

/// Largest |Gamma_stored - Gamma_regenerated| over stable records; lambda
/// must equal the bank entry exactly.
double verify_dataset(const GridCase& grid, const std::vector<DatasetRecord>& records, const LambdaBank& bank,
                      TripModel trip_model = TripModel::PostTrip);

/// Seeded shuffle then split; the first part has round(fraction_train * n).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double fraction_train,
                                                                            std::uint64_t seed);

/// Encoded samples (inputs and targets) for stable records.
std::vector<EncodedSample> encode_records(const std::vector<DatasetRecord>& records,
                                          const std::vector<std::size_t>& rows, const Normalization& stats, int m,
                                          int n_g, bool padded);

Normalization fit_record_normalization(const std::vector<DatasetRecord>& records,
                                       const std::vector<std::size_t>& rows);

// ---------------------------------------------------------------------------
// Time-domain oracle

struct OracleResult {
    double f_nadir = 0.0;
    double t_nadir = 0.0;  // relative to the event
    double f_final = 0.0;
    bool boundary_minimum = false;
};

struct OracleOptions {
    SimulationOptions sim;  // dt 10 ms, 30 s after the event by default
    double event_time = 1.0;
    bool parallel = true;
};

/// Simulates `x` from the solved equilibrium of `grid`.
OracleResult oracle_nadir(const GridCase& grid, const OperatingPoint& op, const Disturbance& x,
                          const OracleOptions& opts = {});
std::vector<OracleResult> oracle_batch(const GridCase& grid, const std::vector<Disturbance>& xs,
                                       const OracleOptions& opts = {});
std::vector<OracleResult> oracle_for_records(const GridCase& grid, const std::vector<DatasetRecord>& records,
                                             const std::vector<std::size_t>& rows, const OracleOptions& opts = {});

nlohmann::json oracle_to_json(const std::vector<OracleResult>& rows);
std::vector<OracleResult> oracle_from_json(const nlohmann::json& doc);

// ---------------------------------------------------------------------------
// Assessment

struct AssessOptions {
    bool analytic = false;
    TripModel trip_model = TripModel::PostTrip;
    NadirOptions nadir;
    bool parallel = true;
    std::vector<LoadStepSpec> load_steps;
};

struct AssessmentRow {
    Disturbance x;
    std::string structure_key;
    double f_nadir = 0.0;
    double t_nadir = 0.0;
    double f_e = 0.0;
    bool polynomial_fallback = false;
    bool no_interior_nadir = false;
    bool magnitude_clamped = false;
};

struct AssessmentReport {
    std::string case_name;
    std::string case_hash;
    std::string commitment;
    std::string mode;  // "analytic" or "estimated"
    std::string model_id;
    std::string bank_created;
    std::vector<AssessmentRow> rows;
    double batch_seconds = 0.0;
};

/// Nadir estimate for every disturbance of the current state (or for
/// `disturbances` when given). Estimated mode needs `model`.
AssessmentReport assess(const GridCase& grid, const LambdaBank& bank, const EquivariantModel* model,
                        const AssessOptions& opts, const std::optional<std::vector<Disturbance>>& disturbances = {});

/// Gamma estimates for arbitrary (structure, disturbance) pairs, one
/// batched forward pass.
std::vector<DecodedGamma> estimate_gamma(const EquivariantModel& model, const std::vector<const ModalStructure*>& structures,
                                         const std::vector<Commitment>& u_on, const std::vector<Disturbance>& xs);

nlohmann::json report_to_json(const AssessmentReport& report);
AssessmentReport report_from_json(const nlohmann::json& doc);
std::string report_table(const AssessmentReport& report);

// ---------------------------------------------------------------------------
// Metrics

struct NadirPair {
    double f_pred = 0.0, t_pred = 0.0;
    double f_true = 0.0, t_true = 0.0;
};

struct Metrics {
    double nadir_mae = 0.0;   // Hz
    double nadir_mape = 0.0;  // percent of the true nadir frequency
    double time_mae = 0.0;    // s
    double time_mape = 0.0;   // percent
    std::size_t count = 0;
    std::vector<NadirPair> residuals;
};

Metrics evaluate_metrics(const std::vector<NadirPair>& pairs);
Metrics evaluate_metrics(const AssessmentReport& report, const std::vector<OracleResult>& oracle);
nlohmann::json metrics_to_json(const Metrics& m);
std::string metrics_table(const Metrics& m);

// ---------------------------------------------------------------------------
// Feed-forward baseline on direct grid measurements

/// [V (per bus), theta (per bus), P_gen (system base), dP (system base),
/// u_on, trip index (machine position + 1, 0 for load steps)].
std::vector<double> baseline_features(const std::vector<double>& v, const std::vector<double>& theta,
                                      const std::vector<double>& p_gen, const Commitment& u_on, const Disturbance& x,
                                      double base_mva);
std::vector<double> baseline_features(const DatasetRecord& rec, double base_mva);

struct BaselineConfig {
    std::vector<int> hidden = {64, 64};
    Activation activation = Activation::Softplus;
    double learning_rate = 1e-3;
    int epochs = 500;
    int batch_size = 0;  // 0 = full batch
    std::uint64_t seed = 1;
};

struct BaselineModel {
    std::vector<Dense> layers;
    Activation activation = Activation::Softplus;
    std::vector<double> x_mean, x_std;
    double f_mean = 0.0, f_std = 1.0, t_mean = 0.0, t_std = 1.0;
    int n_features() const { return static_cast<int>(x_mean.size()); }
};

struct BaselineTrainResult {
    BaselineModel model;
    std::vector<double> loss;  // per epoch, standardized squared error
};

/// Squared-error regression of (f_nadir, t_nadir). Rows are put into a
/// canonical order first, so the result does not depend on the input order.
BaselineTrainResult baseline_train(const std::vector<std::vector<double>>& x,
                                   const std::vector<std::pair<double, double>>& y, const BaselineConfig& cfg);
std::vector<std::pair<double, double>> baseline_predict(const BaselineModel& model,
                                                        const std::vector<std::vector<double>>& x);

nlohmann::json baseline_to_json(const BaselineModel& model);
BaselineModel baseline_from_json(const nlohmann::json& doc);
void save_baseline(const BaselineModel& model, const std::filesystem::path& path);
BaselineModel load_baseline(const std::filesystem::path& path);

/// Nadir of the analytic coefficients of a record (targets for the baseline).
NadirResult record_nadir(const DatasetRecord& rec, double f0, const NadirOptions& opts = {});

}  // namespace sfr
