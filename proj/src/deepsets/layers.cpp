#include <cmath>

#include "sfr/deepsets.hpp"

namespace sfr {

const char* to_string(Activation a) {
    switch (a) {
        case Activation::Softplus: return "softplus";
        case Activation::Silu: return "silu";
        case Activation::Tanh: return "tanh";
        case Activation::Relu: return "relu";
    }
    return "?";
}

Activation activation_from_string(const std::string& s) {
    if (s == "softplus") return Activation::Softplus;
    if (s == "silu") return Activation::Silu;
    if (s == "tanh") return Activation::Tanh;
    if (s == "relu") return Activation::Relu;
    throw ValidationError("unknown activation '" + s + "' (expected softplus, silu, tanh or relu)");
}

namespace {

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

}  // namespace

void activate(Activation a, const RMatrix& z, RMatrix& out) {
    out.resize(z.rows(), z.cols());
    const double* zp = z.data();
    double* op = out.data();
    const Eigen::Index n = z.size();
    switch (a) {
        case Activation::Softplus:
            for (Eigen::Index i = 0; i < n; ++i)
                op[i] = zp[i] > 0.0 ? zp[i] + std::log1p(std::exp(-zp[i])) : std::log1p(std::exp(zp[i]));
            break;
        case Activation::Silu:
            for (Eigen::Index i = 0; i < n; ++i) op[i] = zp[i] * sigmoid(zp[i]);
            break;
        case Activation::Tanh:
            for (Eigen::Index i = 0; i < n; ++i) op[i] = std::tanh(zp[i]);
            break;
        case Activation::Relu:
            for (Eigen::Index i = 0; i < n; ++i) op[i] = zp[i] > 0.0 ? zp[i] : 0.0;
            break;
    }
}

void activation_derivative(Activation a, const RMatrix& z, RMatrix& out) {
    out.resize(z.rows(), z.cols());
    const double* zp = z.data();
    double* op = out.data();
    const Eigen::Index n = z.size();
    switch (a) {
        case Activation::Softplus:
            for (Eigen::Index i = 0; i < n; ++i) op[i] = sigmoid(zp[i]);
            break;
        case Activation::Silu:
            for (Eigen::Index i = 0; i < n; ++i) {
                const double s = sigmoid(zp[i]);
                op[i] = s * (1.0 + zp[i] * (1.0 - s));
            }
            break;
        case Activation::Tanh:
            for (Eigen::Index i = 0; i < n; ++i) {
                const double t = std::tanh(zp[i]);
                op[i] = 1.0 - t * t;
            }
            break;
        case Activation::Relu:
            for (Eigen::Index i = 0; i < n; ++i) op[i] = zp[i] > 0.0 ? 1.0 : 0.0;
            break;
    }
}

// out(r, :) = b + in(r, :) W, accumulated over k in a fixed order for every
// row so a row's result never depends on where it sits in the batch.
void apply_dense(const Dense& layer, const RMatrix& in, RMatrix& out) {
    if (in.cols() != layer.w.rows())
        throw DimensionError("dense layer expects " + std::to_string(layer.w.rows()) + " inputs, got " +
                             std::to_string(in.cols()));
    const Eigen::Index rows = in.rows(), k_in = layer.w.rows(), k_out = layer.w.cols();
    out.resize(rows, k_out);
    for (Eigen::Index r = 0; r < rows; ++r) {
        double* acc = out.data() + r * k_out;
        const double* x = in.data() + r * k_in;
        for (Eigen::Index j = 0; j < k_out; ++j) acc[j] = layer.b(0, j);
        for (Eigen::Index k = 0; k < k_in; ++k) {
            const double a = x[k];
            const double* w = layer.w.data() + k * k_out;
            for (Eigen::Index j = 0; j < k_out; ++j) acc[j] += a * w[j];
        }
    }
}

Dense init_dense(int in, int out, std::mt19937_64& rng) {
    Dense layer;
    layer.w.resize(in, out);
    layer.b = RMatrix::Zero(1, out);
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index i = 0; i < layer.w.size(); ++i) layer.w.data()[i] = dist(rng);
    return layer;
}

EquivariantModel init_model(int m, int n_g, const ModelShape& shape, std::uint64_t seed, bool padded) {
    if (m < 1) throw ValidationError("model set size must be positive");
    if (n_g < 1) throw ValidationError("model needs at least one machine");
    if (shape.d < 1 || shape.encoder_layers < 1 || shape.decoder_layers < 1)
        throw ValidationError("latent width and layer counts must be positive");
    if (!(shape.dropout >= 0.0 && shape.dropout < 1.0)) throw ValidationError("dropout must lie in [0, 1)");

    std::mt19937_64 rng(seed);
    EquivariantModel model;
    model.d = shape.d;
    model.m = m;
    model.n_g = n_g;
    model.padded = padded;
    model.activation = shape.activation;
    model.dropout = shape.dropout;
    const int d = shape.d;
    for (int l = 0; l < shape.encoder_layers; ++l) model.encoder.push_back(init_dense(l == 0 ? 2 : d, d, rng));
    model.h = init_dense(model.flat_dim(), d, rng);
    model.rho = init_dense(2 * d, d, rng);
    for (int l = 0; l < shape.decoder_layers; ++l) {
        const int in = l == 0 ? 2 * d : d;
        const int out = l + 1 == shape.decoder_layers ? 3 : d;
        model.decoder.push_back(init_dense(in, out, rng));
    }
    return model;
}

std::vector<RMatrix*> parameters(EquivariantModel& model) {
    std::vector<RMatrix*> out;
    auto add = [&](Dense& l) {
        out.push_back(&l.w);
        out.push_back(&l.b);
    };
    for (auto& l : model.encoder) add(l);
    add(model.h);
    add(model.rho);
    for (auto& l : model.decoder) add(l);
    return out;
}

std::vector<const RMatrix*> parameters(const EquivariantModel& model) {
    std::vector<const RMatrix*> out;
    for (RMatrix* p : parameters(const_cast<EquivariantModel&>(model))) out.push_back(p);
    return out;
}

std::size_t EquivariantModel::parameter_count() const {
    std::size_t n = 0;
    for (const RMatrix* p : parameters(*this)) n += static_cast<std::size_t>(p->size());
    return n;
}

void Adam::step(const std::vector<RMatrix*>& params, const std::vector<RMatrix>& grads) {
    if (params.size() != grads.size()) throw DimensionError("optimizer: parameter and gradient lists differ");
    if (m_.empty()) {
        for (const RMatrix* p : params) {
            m_.push_back(RMatrix::Zero(p->rows(), p->cols()));
            v_.push_back(RMatrix::Zero(p->rows(), p->cols()));
        }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = b1_ * m_[i] + (1.0 - b1_) * grads[i];
        v_[i] = b2_ * v_[i] + (1.0 - b2_) * grads[i].cwiseProduct(grads[i]);
        RMatrix& p = *params[i];
        for (Eigen::Index k = 0; k < p.size(); ++k) {
            const double mh = m_[i].data()[k] / c1;
            const double vh = v_[i].data()[k] / c2;
            p.data()[k] -= lr_ * mh / (std::sqrt(vh) + eps_);
        }
    }
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

}  // namespace sfr
