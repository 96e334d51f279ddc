#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sfr/common.hpp"

namespace sfr {

/// Row-major storage keeps every per-element kernel independent of the row
/// position, which is what makes the forward pass exactly equivariant.
using RMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Activation { Softplus, Silu, Tanh, Relu };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct Dense {
    RMatrix w;  // in x out
    RMatrix b;  // 1 x out
    int in() const { return static_cast<int>(w.rows()); }
    int out() const { return static_cast<int>(w.cols()); }
};

/// Standardisation statistics, fitted on the training split.
struct Normalization {
    double mag_mean = 0.0, mag_std = 1.0;  // |gamma|
    double dp_mean = 0.0, dp_std = 1.0;    // delta P in MW
};

/// Mean and population standard deviation (1 when degenerate).
Normalization fit_normalization(const std::vector<std::vector<Complex>>& gammas,
                                const std::vector<double>& delta_p_mw);

struct ModelShape {
    int d = 32;
    int encoder_layers = 2;
    int decoder_layers = 2;
    Activation activation = Activation::Softplus;
    double dropout = 0.0;
};

struct EquivariantModel {
    int d = 0;
    int m = 0;    // set size (maximum size when padded)
    int n_g = 0;  // machines, sizes the commitment block and the index one-hot
    bool padded = false;
    Activation activation = Activation::Softplus;
    double dropout = 0.0;
    std::vector<Dense> encoder;  // Phi, shared over set elements
    Dense h;                     // flat features -> d
    Dense rho;                   // [pooled, h] -> context
    std::vector<Dense> decoder;  // Psi, [phi_i, c] -> 3, shared
    Normalization stats;

    int flat_dim() const { return 2 * n_g + 2; }
    std::size_t parameter_count() const;
};

EquivariantModel init_model(int m, int n_g, const ModelShape& shape, std::uint64_t seed, bool padded = false);

/// Every weight and bias matrix in a fixed order (optimizer and gradient
/// checks walk this list).
std::vector<RMatrix*> parameters(EquivariantModel& model);
std::vector<const RMatrix*> parameters(const EquivariantModel& model);

/// Disturbance descriptor x_j = [dP MW, type (0 trip, 1 load step), index].
struct DisturbanceFeature {
    double delta_p_mw = 0.0;
    int type = 0;
    int index = 0;
};

struct EncodedSample {
    RMatrix set;     // m x 2: |lambda|, arg lambda
    RMatrix flat;    // 1 x flat_dim
    RMatrix target;  // m x 3: standardized |gamma|, sin, cos (empty without targets)
    std::vector<std::uint8_t> mask;  // 1 for real elements, 0 for padding
    std::vector<int> partner;        // conjugate partner position, -1 for real modes and padding
};

/// Eigenvalues to polar form, flat block [u_on, standardized dP, type,
/// one-hot index over machines]. Load steps leave the one-hot block empty.
EncodedSample encode_inputs(const std::vector<Complex>& lambda, const Commitment& u_on, const DisturbanceFeature& x,
                            const Normalization& stats, int m, int n_g, bool padded);

/// Adds target rows to an encoded sample.
void encode_targets(EncodedSample& sample, const std::vector<Complex>& gamma, const Normalization& stats);

struct Batch {
    int n = 0, m = 0;
    RMatrix set;     // (n m) x 2
    RMatrix flat;    // n x flat_dim
    RMatrix target;  // (n m) x 3
    RMatrix mask;    // (n m) x 1
};

Batch make_batch(const std::vector<EncodedSample>& samples, const std::vector<std::size_t>& rows);
Batch make_batch(const std::vector<EncodedSample>& samples);

/// Intermediate values kept for the reverse pass.
struct ForwardCache {
    std::vector<RMatrix> enc_z, enc_a, enc_drop;
    RMatrix pooled, h_z, h_a, rho_in, rho_z, context;
    std::vector<RMatrix> dec_in, dec_z, dec_drop;
};

/// (n m) x 3 outputs. Dropout is applied only when `training` is set, drawing
/// from `rng`.
RMatrix forward(const EquivariantModel& model, const Batch& batch, bool training = false,
                std::mt19937_64* rng = nullptr, ForwardCache* cache = nullptr);

/// Context vector c per sample (n x d), the permutation-invariant branch.
RMatrix context_vector(const EquivariantModel& model, const Batch& batch);

struct PolarLoss {
    double total = 0.0;
    double magnitude = 0.0;  // L_r
    double angle = 0.0;      // L_theta
    bool degenerate_direction = false;
};

inline constexpr double kAngleClamp = 1e-7;

/// alpha L_r + beta L_theta averaged over unmasked elements. The cosine is
/// clamped to [-1 + eps, 1 - eps] for the derivative only, so the value of
/// an antipodal pair is exactly pi^2. `grad`, when given, receives dL/dpred.
PolarLoss polar_loss(const RMatrix& pred, const RMatrix& target, const RMatrix& mask, double alpha, double beta,
                     RMatrix* grad = nullptr);

/// Reverse pass; returns gradients aligned with parameters(model).
std::vector<RMatrix> backward(const EquivariantModel& model, const Batch& batch, const ForwardCache& cache,
                              const RMatrix& d_out);

/// Loss and parameter gradients for one batch (dropout off unless `rng`).
PolarLoss loss_and_gradient(const EquivariantModel& model, const Batch& batch, double alpha, double beta,
                            std::vector<RMatrix>* grads, std::mt19937_64* rng = nullptr);

struct DecodedGamma {
    std::vector<Complex> gamma;
    bool magnitude_clamped = false;
};

/// Outputs of one sample (m x 3) back to complex coefficients. Padding rows
/// are dropped; conjugate partners are symmetrised when requested.
DecodedGamma decode_gamma(const RMatrix& outputs, const Normalization& stats, const std::vector<std::uint8_t>& mask,
                          const std::vector<int>& partner, bool symmetrize = true);

/// Conjugate partner positions inside an ordered eigenvalue list.
std::vector<int> conjugate_partners(const std::vector<Complex>& lambda);

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
    double alpha = 1.0, beta = 1.0;
    double learning_rate = 3e-3;
    int epochs = 1500;
    int batch_size = 32;
    double dropout = 0.0;
    std::uint64_t seed = 1;
    double validation_fraction = 0.30;
};

void validate_train_config(const TrainConfig& cfg);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double validation_loss = 0.0;
};

struct TrainResult {
    EquivariantModel model;  // best-validation parameters
    std::vector<EpochRecord> history;
    int best_epoch = -1;
    double best_validation = 0.0;
};

/// Adam on the polar loss. Samples are already split; statistics must have
/// been fitted on the training part.
TrainResult train(EquivariantModel model, const std::vector<EncodedSample>& train_set,
                  const std::vector<EncodedSample>& validation_set, const TrainConfig& cfg);

/// Adam state for any parameter list.
class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) :
        lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}
    void step(const std::vector<RMatrix*>& params, const std::vector<RMatrix>& grads);

private:
    double lr_, b1_, b2_, eps_;
    long t_ = 0;
    std::vector<RMatrix> m_, v_;
};

struct GradientCheck {
    double max_relative_error = 0.0;
    int checked = 0;
};

/// Central differences (step 1e-5) on `count` randomly chosen parameters,
/// dropout off. Relative error |a - n| / max(|a|, |n|, 1e-8).
GradientCheck gradient_check(const EquivariantModel& model, const Batch& batch, double alpha, double beta,
                             int count = 200, std::uint64_t seed = 7);

// ---------------------------------------------------------------------------
// Persistence

inline constexpr int kModelFormatVersion = 1;

nlohmann::json model_to_json(const EquivariantModel& model);
EquivariantModel model_from_json(const nlohmann::json& doc);
void save_model(const EquivariantModel& model, const std::filesystem::path& path);
EquivariantModel load_model(const std::filesystem::path& path);

/// Serialisation helpers shared with the baseline regressor.
nlohmann::json dense_to_json(const Dense& layer);
Dense dense_from_json(const nlohmann::json& doc);
Dense init_dense(int in, int out, std::mt19937_64& rng);
void apply_dense(const Dense& layer, const RMatrix& in, RMatrix& out);
void activate(Activation a, const RMatrix& z, RMatrix& out);
void activation_derivative(Activation a, const RMatrix& z, RMatrix& out);

/// 64-bit FNV-1a, hex encoded.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace sfr
