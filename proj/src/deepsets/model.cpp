#include <algorithm>
#include <cmath>
#include <numbers>

#include "sfr/deepsets.hpp"

namespace sfr {

Normalization fit_normalization(const std::vector<std::vector<Complex>>& gammas,
                                const std::vector<double>& delta_p_mw) {
    Normalization s;
    auto moments = [](const std::vector<double>& v, double& mean, double& sd) {
        mean = 0.0;
        sd = 1.0;
        if (v.empty()) return;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        var /= static_cast<double>(v.size());
        sd = var > 1e-24 ? std::sqrt(var) : 1.0;
    };
    std::vector<double> mags;
    for (const auto& g : gammas)
        for (const auto& c : g) mags.push_back(std::abs(c));
    moments(mags, s.mag_mean, s.mag_std);
    moments(delta_p_mw, s.dp_mean, s.dp_std);
    return s;
}

std::vector<int> conjugate_partners(const std::vector<Complex>& lambda) {
    std::vector<int> partner(lambda.size(), -1);
    for (std::size_t i = 0; i < lambda.size(); ++i) {
        if (lambda[i].imag() == 0.0 || partner[i] >= 0) continue;
        for (std::size_t j = i + 1; j < lambda.size(); ++j) {
            if (partner[j] < 0 && lambda[j] == std::conj(lambda[i])) {
                partner[i] = static_cast<int>(j);
                partner[j] = static_cast<int>(i);
                break;
            }
        }
    }
    return partner;
}

EncodedSample encode_inputs(const std::vector<Complex>& lambda, const Commitment& u_on, const DisturbanceFeature& x,
                            const Normalization& stats, int m, int n_g, bool padded) {
    const int count = static_cast<int>(lambda.size());
    if (count == 0) throw ValidationError("empty mode set");
    if (padded ? count > m : count != m)
        throw DimensionError("mode set has " + std::to_string(count) + " elements, model expects " +
                             (padded ? "at most " : "") + std::to_string(m));
    if (static_cast<int>(u_on.size()) != n_g)
        throw DimensionError("commitment has " + std::to_string(u_on.size()) + " entries, model expects " +
                             std::to_string(n_g));
    if (x.type != 0 && x.type != 1) throw ValidationError("disturbance type must be 0 (trip) or 1 (load step)");
    if (x.type == 0 && (x.index < 0 || x.index >= n_g))
        throw ValidationError("generator index " + std::to_string(x.index) + " out of range");

    EncodedSample s;
    s.set = RMatrix::Zero(m, 2);
    s.mask.assign(m, 0);
    s.partner.assign(m, -1);
    const auto partner = conjugate_partners(lambda);
    for (int i = 0; i < count; ++i) {
        double arg = std::arg(lambda[i]);
        if (arg <= -std::numbers::pi) arg = std::numbers::pi;
        s.set(i, 0) = std::abs(lambda[i]);
        s.set(i, 1) = arg;
        s.mask[i] = 1;
        s.partner[i] = partner[i];
    }
    s.flat = RMatrix::Zero(1, 2 * n_g + 2);
    for (int k = 0; k < n_g; ++k) s.flat(0, k) = u_on[k] ? 1.0 : 0.0;
    s.flat(0, n_g) = (x.delta_p_mw - stats.dp_mean) / stats.dp_std;
    s.flat(0, n_g + 1) = x.type;
    if (x.type == 0) s.flat(0, n_g + 2 + x.index) = 1.0;
    return s;
}

void encode_targets(EncodedSample& sample, const std::vector<Complex>& gamma, const Normalization& stats) {
    const auto m = sample.set.rows();
    int count = 0;
    for (auto v : sample.mask) count += v;
    if (static_cast<int>(gamma.size()) != count)
        throw DimensionError("coefficient set has " + std::to_string(gamma.size()) + " entries, mode set " +
                             std::to_string(count));
    sample.target = RMatrix::Zero(m, 3);
    for (int i = 0; i < count; ++i) {
        const double r = std::abs(gamma[i]);
        const double a = r > 0.0 ? std::arg(gamma[i]) : 0.0;
        sample.target(i, 0) = (r - stats.mag_mean) / stats.mag_std;
        sample.target(i, 1) = std::sin(a);
        sample.target(i, 2) = std::cos(a);
    }
    for (Eigen::Index i = count; i < m; ++i) sample.target(i, 2) = 1.0;
}

Batch make_batch(const std::vector<EncodedSample>& samples, const std::vector<std::size_t>& rows) {
    Batch b;
    b.n = static_cast<int>(rows.size());
    if (b.n == 0) throw ValidationError("empty batch");
    b.m = static_cast<int>(samples[rows[0]].set.rows());
    const auto flat_dim = samples[rows[0]].flat.cols();
    const bool targets = samples[rows[0]].target.size() > 0;
    b.set.resize(static_cast<Eigen::Index>(b.n) * b.m, 2);
    b.flat.resize(b.n, flat_dim);
    b.mask.resize(static_cast<Eigen::Index>(b.n) * b.m, 1);
    if (targets) b.target.resize(static_cast<Eigen::Index>(b.n) * b.m, 3);
    for (int k = 0; k < b.n; ++k) {
        const auto& s = samples[rows[k]];
        if (s.set.rows() != b.m || s.flat.cols() != flat_dim)
            throw DimensionError("batch mixes samples of different shapes");
        const Eigen::Index r0 = static_cast<Eigen::Index>(k) * b.m;
        b.set.middleRows(r0, b.m) = s.set;
        b.flat.row(k) = s.flat;
        for (int i = 0; i < b.m; ++i) b.mask(r0 + i, 0) = s.mask[i];
        if (targets) {
            if (s.target.rows() != b.m) throw DimensionError("batch mixes samples with and without targets");
            b.target.middleRows(r0, b.m) = s.target;
        }
    }
    return b;
}

Batch make_batch(const std::vector<EncodedSample>& samples) {
    std::vector<std::size_t> rows(samples.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    return make_batch(samples, rows);
}

namespace {

void dropout_mask(double rate, Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, RMatrix& mask) {
    mask.resize(rows, cols);
    std::bernoulli_distribution keep(1.0 - rate);
    const double scale = 1.0 / (1.0 - rate);
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? scale : 0.0;
}

// Masked mean over the set positions of each sample. Values are summed in
// sorted order so the result does not depend on the element order.
void pool(const RMatrix& phi, const RMatrix& mask, int n, int m, RMatrix& pooled) {
    const Eigen::Index d = phi.cols();
    pooled.resize(n, d);
    std::vector<double> buf;
    buf.reserve(m);
    for (int k = 0; k < n; ++k) {
        const Eigen::Index r0 = static_cast<Eigen::Index>(k) * m;
        int count = 0;
        for (int i = 0; i < m; ++i) count += mask(r0 + i, 0) != 0.0;
        if (count == 0) throw ValidationError("sample without set elements");
        for (Eigen::Index j = 0; j < d; ++j) {
            buf.clear();
            for (int i = 0; i < m; ++i)
                if (mask(r0 + i, 0) != 0.0) buf.push_back(phi(r0 + i, j));
            std::sort(buf.begin(), buf.end());
            double s = 0.0;
            for (double v : buf) s += v;
            pooled(k, j) = s / count;
        }
    }
}

}  // namespace

RMatrix forward(const EquivariantModel& model, const Batch& batch, bool training, std::mt19937_64* rng,
                ForwardCache* cache) {
    if (batch.m != model.m) throw DimensionError("batch set size " + std::to_string(batch.m) +
                                                 " does not match the model (" + std::to_string(model.m) + ")");
    if (batch.flat.cols() != model.flat_dim())
        throw DimensionError("flat feature width " + std::to_string(batch.flat.cols()) + " does not match the model (" +
                             std::to_string(model.flat_dim()) + ")");
    const bool drop = training && model.dropout > 0.0;
    if (drop && !rng) throw ValidationError("training forward pass needs a random generator");

    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;
    c = ForwardCache{};

    RMatrix a = batch.set, z;
    for (const auto& layer : model.encoder) {
        apply_dense(layer, a, z);
        activate(model.activation, z, a);
        if (drop) {
            RMatrix mask;
            dropout_mask(model.dropout, a.rows(), a.cols(), *rng, mask);
            a = a.cwiseProduct(mask);
            c.enc_drop.push_back(std::move(mask));
        }
        c.enc_z.push_back(z);
        c.enc_a.push_back(a);
    }
    const RMatrix& phi = c.enc_a.back();

    pool(phi, batch.mask, batch.n, batch.m, c.pooled);
    apply_dense(model.h, batch.flat, c.h_z);
    activate(model.activation, c.h_z, c.h_a);
    c.rho_in.resize(batch.n, 2 * model.d);
    c.rho_in << c.pooled, c.h_a;
    apply_dense(model.rho, c.rho_in, c.rho_z);
    activate(model.activation, c.rho_z, c.context);

    // Each element sees [phi_i, c].
    RMatrix in(phi.rows(), 2 * model.d);
    for (int k = 0; k < batch.n; ++k)
        for (int i = 0; i < batch.m; ++i) {
            const Eigen::Index r = static_cast<Eigen::Index>(k) * batch.m + i;
            in.row(r) << phi.row(r), c.context.row(k);
        }
    for (std::size_t l = 0; l < model.decoder.size(); ++l) {
        c.dec_in.push_back(in);
        apply_dense(model.decoder[l], in, z);
        c.dec_z.push_back(z);
        if (l + 1 == model.decoder.size()) {
            in = z;
            break;
        }
        activate(model.activation, z, in);
        if (drop) {
            RMatrix mask;
            dropout_mask(model.dropout, in.rows(), in.cols(), *rng, mask);
            in = in.cwiseProduct(mask);
            c.dec_drop.push_back(std::move(mask));
        }
    }
    return in;
}

RMatrix context_vector(const EquivariantModel& model, const Batch& batch) {
    ForwardCache cache;
    forward(model, batch, false, nullptr, &cache);
    return cache.context;
}

std::vector<RMatrix> backward(const EquivariantModel& model, const Batch& batch, const ForwardCache& c,
                              const RMatrix& d_out) {
    const int d = model.d;
    const std::size_t n_enc = model.encoder.size(), n_dec = model.decoder.size();
    std::vector<RMatrix> g_enc_w(n_enc), g_enc_b(n_enc), g_dec_w(n_dec), g_dec_b(n_dec);
    RMatrix deriv;

    // Decoder.
    RMatrix dz = d_out;
    RMatrix d_in;
    for (std::size_t l = n_dec; l-- > 0;) {
        g_dec_w[l] = c.dec_in[l].transpose() * dz;
        g_dec_b[l] = dz.colwise().sum();
        d_in = dz * model.decoder[l].w.transpose();
        if (l == 0) break;
        // Through dropout and activation of the previous hidden layer.
        if (!c.dec_drop.empty()) d_in = d_in.cwiseProduct(c.dec_drop[l - 1]);
        activation_derivative(model.activation, c.dec_z[l - 1], deriv);
        dz = d_in.cwiseProduct(deriv);
    }

    // Split [phi_i, c].
    RMatrix d_phi = d_in.leftCols(d);
    RMatrix d_context = RMatrix::Zero(batch.n, d);
    for (int k = 0; k < batch.n; ++k)
        for (int i = 0; i < batch.m; ++i)
            d_context.row(k) += d_in.row(static_cast<Eigen::Index>(k) * batch.m + i).rightCols(d);

    // Context combiner.
    activation_derivative(model.activation, c.rho_z, deriv);
    const RMatrix dz_rho = d_context.cwiseProduct(deriv);
    RMatrix g_rho_w = c.rho_in.transpose() * dz_rho;
    RMatrix g_rho_b = dz_rho.colwise().sum();
    const RMatrix d_rho_in = dz_rho * model.rho.w.transpose();

    // Flat projector.
    activation_derivative(model.activation, c.h_z, deriv);
    const RMatrix dz_h = d_rho_in.rightCols(d).cwiseProduct(deriv);
    RMatrix g_h_w = batch.flat.transpose() * dz_h;
    RMatrix g_h_b = dz_h.colwise().sum();

    // Mean pooling.
    const RMatrix d_pooled = d_rho_in.leftCols(d);
    for (int k = 0; k < batch.n; ++k) {
        const Eigen::Index r0 = static_cast<Eigen::Index>(k) * batch.m;
        double count = 0.0;
        for (int i = 0; i < batch.m; ++i) count += batch.mask(r0 + i, 0) != 0.0;
        for (int i = 0; i < batch.m; ++i)
            if (batch.mask(r0 + i, 0) != 0.0) d_phi.row(r0 + i) += d_pooled.row(k) / count;
    }

    // Encoder.
    RMatrix da = d_phi;
    for (std::size_t l = n_enc; l-- > 0;) {
        if (!c.enc_drop.empty()) da = da.cwiseProduct(c.enc_drop[l]);
        activation_derivative(model.activation, c.enc_z[l], deriv);
        dz = da.cwiseProduct(deriv);
        const RMatrix& input = l == 0 ? batch.set : c.enc_a[l - 1];
        g_enc_w[l] = input.transpose() * dz;
        g_enc_b[l] = dz.colwise().sum();
        if (l > 0) da = dz * model.encoder[l].w.transpose();
    }

    std::vector<RMatrix> grads;
    for (std::size_t l = 0; l < n_enc; ++l) {
        grads.push_back(std::move(g_enc_w[l]));
        grads.push_back(std::move(g_enc_b[l]));
    }
    grads.push_back(std::move(g_h_w));
    grads.push_back(std::move(g_h_b));
    grads.push_back(std::move(g_rho_w));
    grads.push_back(std::move(g_rho_b));
    for (std::size_t l = 0; l < n_dec; ++l) {
        grads.push_back(std::move(g_dec_w[l]));
        grads.push_back(std::move(g_dec_b[l]));
    }
    return grads;
}

PolarLoss polar_loss(const RMatrix& pred, const RMatrix& target, const RMatrix& mask, double alpha, double beta,
                     RMatrix* grad) {
    if (pred.rows() != target.rows() || pred.cols() != 3 || target.cols() != 3 || mask.rows() != pred.rows())
        throw DimensionError("loss inputs must be matching (n, 3) arrays with one mask entry per row");
    double count = 0.0;
    for (Eigen::Index r = 0; r < mask.rows(); ++r) count += mask(r, 0) != 0.0;
    if (count == 0.0) throw ValidationError("loss over an empty set");

    PolarLoss out;
    if (grad) *grad = RMatrix::Zero(pred.rows(), 3);
    for (Eigen::Index r = 0; r < pred.rows(); ++r) {
        if (mask(r, 0) == 0.0) continue;
        const double dr = pred(r, 0) - target(r, 0);
        out.magnitude += dr * dr;

        const double ps = pred(r, 1), pc = pred(r, 2);
        const double ts = target(r, 1), tc = target(r, 2);
        double pn = std::hypot(ps, pc);
        const double tn = std::hypot(ts, tc);
        if (pn < 1e-12) {
            pn = 1e-12;
            out.degenerate_direction = true;
        }
        // Angle between the two direction vectors; atan2 of cross and dot is
        // arccos of the normalised dot product without its rounding at +-1.
        const double cross = ps * tc - pc * ts;
        const double dot = ps * ts + pc * tc;
        const double theta = std::atan2(std::abs(cross), dot);
        out.angle += theta * theta;

        if (grad) {
            (*grad)(r, 0) = alpha * 2.0 * dr / count;
            const double x = std::clamp(dot / (pn * tn), -1.0 + kAngleClamp, 1.0 - kAngleClamp);
            const double dl_dx = -2.0 * std::acos(x) / std::sqrt(1.0 - x * x);
            const double xs = dot / (pn * tn);
            // d(cos)/dp = t_hat / |p| - cos p / |p|^2
            const double gs = ts / (tn * pn) - xs * ps / (pn * pn);
            const double gc = tc / (tn * pn) - xs * pc / (pn * pn);
            (*grad)(r, 1) = beta * dl_dx * gs / count;
            (*grad)(r, 2) = beta * dl_dx * gc / count;
        }
    }
    out.magnitude /= count;
    out.angle /= count;
    out.total = alpha * out.magnitude + beta * out.angle;
    return out;
}

PolarLoss loss_and_gradient(const EquivariantModel& model, const Batch& batch, double alpha, double beta,
                            std::vector<RMatrix>* grads, std::mt19937_64* rng) {
    if (batch.target.rows() != batch.set.rows()) throw ValidationError("batch has no targets");
    ForwardCache cache;
    const RMatrix out = forward(model, batch, rng != nullptr, rng, &cache);
    RMatrix d_out;
    const PolarLoss loss = polar_loss(out, batch.target, batch.mask, alpha, beta, grads ? &d_out : nullptr);
    if (grads) *grads = backward(model, batch, cache, d_out);
    return loss;
}

DecodedGamma decode_gamma(const RMatrix& outputs, const Normalization& stats, const std::vector<std::uint8_t>& mask,
                          const std::vector<int>& partner, bool symmetrize) {
    if (outputs.cols() != 3 || static_cast<std::size_t>(outputs.rows()) != mask.size() ||
        partner.size() != mask.size())
        throw DimensionError("decoder output must be (m, 3) with one mask and partner entry per row");
    if (!outputs.allFinite()) throw NumericalError("non-finite decoder output");
    DecodedGamma out;
    std::vector<Complex> full(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        double r = outputs(i, 0) * stats.mag_std + stats.mag_mean;
        if (r < 0.0) {
            r = 0.0;
            out.magnitude_clamped = true;
        }
        full[i] = std::polar(r, std::atan2(outputs(i, 1), outputs(i, 2)));
    }
    if (symmetrize) {
        for (std::size_t i = 0; i < mask.size(); ++i) {
            const int j = partner[i];
            if (!mask[i] || j <= static_cast<int>(i)) continue;
            const Complex g = 0.5 * (full[i] + std::conj(full[j]));
            full[i] = g;
            full[j] = std::conj(g);
        }
    }
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) out.gamma.push_back(full[i]);
    return out;
}

}  // namespace sfr
