#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "sfr/pipeline.hpp"

namespace sfr {

std::vector<double> baseline_features(const std::vector<double>& v, const std::vector<double>& theta,
                                      const std::vector<double>& p_gen, const Commitment& u_on, const Disturbance& x,
                                      double base_mva) {
    if (v.size() != theta.size() || p_gen.size() != u_on.size())
        throw DimensionError("measurement vectors differ in length");
    std::vector<double> f;
    f.reserve(2 * v.size() + 2 * u_on.size() + 2);
    f.insert(f.end(), v.begin(), v.end());
    f.insert(f.end(), theta.begin(), theta.end());
    f.insert(f.end(), p_gen.begin(), p_gen.end());
    f.push_back(x.delta_p_mw / base_mva);
    for (auto b : u_on) f.push_back(b ? 1.0 : 0.0);
    f.push_back(x.type == 0 ? x.index + 1.0 : 0.0);
    return f;
}

std::vector<double> baseline_features(const DatasetRecord& rec, double base_mva) {
    return baseline_features(rec.v, rec.theta, rec.p_gen, rec.u_on, rec.x, base_mva);
}

namespace {

struct Pass {
    std::vector<RMatrix> z, a;  // a[0] = input
};

RMatrix run(const BaselineModel& model, const RMatrix& input, Pass* pass) {
    RMatrix a = input, z;
    if (pass) pass->a.push_back(a);
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        apply_dense(model.layers[l], a, z);
        if (l + 1 == model.layers.size()) return z;
        if (pass) pass->z.push_back(z);
        activate(model.activation, z, a);
        if (pass) pass->a.push_back(a);
    }
    return z;
}

RMatrix standardized_input(const BaselineModel& model, const std::vector<std::vector<double>>& x,
                           const std::vector<std::size_t>& rows) {
    const int nf = model.n_features();
    RMatrix in(static_cast<Eigen::Index>(rows.size()), nf);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& row = x[rows[r]];
        if (static_cast<int>(row.size()) != nf)
            throw DimensionError("feature vector has " + std::to_string(row.size()) + " entries, model expects " +
                                 std::to_string(nf));
        for (int j = 0; j < nf; ++j) in(static_cast<Eigen::Index>(r), j) = (row[j] - model.x_mean[j]) / model.x_std[j];
    }
    return in;
}

void moments(const std::vector<double>& v, double& mean, double& sd) {
    mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double var = 0.0;
    for (double e : v) var += (e - mean) * (e - mean);
    var /= static_cast<double>(v.size());
    sd = var > 1e-24 ? std::sqrt(var) : 1.0;
}

}  // namespace

BaselineTrainResult baseline_train(const std::vector<std::vector<double>>& x,
                                   const std::vector<std::pair<double, double>>& y, const BaselineConfig& cfg) {
    if (x.empty() || x.size() != y.size()) throw DimensionError("feature and target counts differ or are zero");
    if (cfg.epochs < 1 || cfg.batch_size < 0 || !(cfg.learning_rate > 0.0))
        throw ValidationError("baseline needs epochs >= 1, batch size >= 0 and a positive learning rate");
    const std::size_t nf = x.front().size();
    for (const auto& row : x)
        if (row.size() != nf) throw DimensionError("feature vectors differ in length");

    // Canonical row order.
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (x[a] != x[b]) return x[a] < x[b];
        return y[a] < y[b];
    });

    BaselineTrainResult result;
    BaselineModel& model = result.model;
    model.activation = cfg.activation;
    model.x_mean.resize(nf);
    model.x_std.resize(nf);
    for (std::size_t j = 0; j < nf; ++j) {
        std::vector<double> col;
        for (auto r : order) col.push_back(x[r][j]);
        moments(col, model.x_mean[j], model.x_std[j]);
    }
    std::vector<double> f, t;
    for (auto r : order) {
        f.push_back(y[r].first);
        t.push_back(y[r].second);
    }
    moments(f, model.f_mean, model.f_std);
    moments(t, model.t_mean, model.t_std);

    std::mt19937_64 rng(cfg.seed);
    int width = static_cast<int>(nf);
    for (int hdim : cfg.hidden) {
        if (hdim < 1) throw ValidationError("hidden layer widths must be positive");
        model.layers.push_back(init_dense(width, hdim, rng));
        width = hdim;
    }
    model.layers.push_back(init_dense(width, 2, rng));

    const RMatrix input = standardized_input(model, x, order);
    RMatrix target(static_cast<Eigen::Index>(order.size()), 2);
    for (std::size_t r = 0; r < order.size(); ++r) {
        target(static_cast<Eigen::Index>(r), 0) = (f[r] - model.f_mean) / model.f_std;
        target(static_cast<Eigen::Index>(r), 1) = (t[r] - model.t_mean) / model.t_std;
    }

    std::vector<RMatrix*> params;
    for (auto& l : model.layers) {
        params.push_back(&l.w);
        params.push_back(&l.b);
    }
    Adam opt(cfg.learning_rate);
    const std::size_t n = order.size();
    const std::size_t bs = cfg.batch_size == 0 ? n : static_cast<std::size_t>(cfg.batch_size);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (bs < n) std::shuffle(perm.begin(), perm.end(), rng);
        double sum = 0.0;
        for (std::size_t s = 0; s < n; s += bs) {
            const std::size_t e = std::min(n, s + bs);
            const auto rows = static_cast<Eigen::Index>(e - s);
            RMatrix in(rows, input.cols()), tg(rows, 2);
            for (std::size_t k = s; k < e; ++k) {
                in.row(static_cast<Eigen::Index>(k - s)) = input.row(static_cast<Eigen::Index>(perm[k]));
                tg.row(static_cast<Eigen::Index>(k - s)) = target.row(static_cast<Eigen::Index>(perm[k]));
            }
            Pass pass;
            const RMatrix out = run(model, in, &pass);
            RMatrix d = (out - tg) / static_cast<double>(rows);  // d(0.5 mean sum sq)
            sum += 0.5 * (out - tg).squaredNorm();
            std::vector<RMatrix> grads(params.size());
            for (int l = static_cast<int>(model.layers.size()) - 1; l >= 0; --l) {
                const RMatrix& a_in = pass.a[l];
                grads[2 * l] = a_in.transpose() * d;
                grads[2 * l + 1] = d.colwise().sum();
                if (l == 0) break;
                RMatrix da = d * model.layers[l].w.transpose();
                RMatrix deriv;
                activation_derivative(model.activation, pass.z[l - 1], deriv);
                d = da.cwiseProduct(deriv);
            }
            opt.step(params, grads);
        }
        const double loss = sum / static_cast<double>(n);
        if (!std::isfinite(loss)) throw NumericalError("baseline training produced a NaN loss in epoch " + std::to_string(epoch));
        result.loss.push_back(loss);
    }
    return result;
}

std::vector<std::pair<double, double>> baseline_predict(const BaselineModel& model,
                                                        const std::vector<std::vector<double>>& x) {
    std::vector<std::size_t> rows(x.size());
    std::iota(rows.begin(), rows.end(), 0);
    if (x.empty()) return {};
    const RMatrix out = run(model, standardized_input(model, x, rows), nullptr);
    std::vector<std::pair<double, double>> pred;
    for (Eigen::Index r = 0; r < out.rows(); ++r)
        pred.emplace_back(model.f_mean + model.f_std * out(r, 0), model.t_mean + model.t_std * out(r, 1));
    return pred;
}

nlohmann::json baseline_to_json(const BaselineModel& model) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : model.layers) layers.push_back(dense_to_json(l));
    nlohmann::json body = {{"layers", layers},
                           {"activation", to_string(model.activation)},
                           {"x_mean", model.x_mean},
                           {"x_std", model.x_std},
                           {"target", {model.f_mean, model.f_std, model.t_mean, model.t_std}}};
    return {{"version", 1}, {"kind", "ffnn-baseline"}, {"body", body}, {"checksum", fnv1a_hex(body.dump())}};
}

BaselineModel baseline_from_json(const nlohmann::json& doc) {
    try {
        if (doc.at("kind").get<std::string>() != "ffnn-baseline" || doc.at("version").get<int>() != 1)
            throw FormatError("not a version-1 baseline model");
        const auto& body = doc.at("body");
        if (doc.at("checksum").get<std::string>() != fnv1a_hex(body.dump())) throw FormatError("baseline checksum mismatch");
        BaselineModel m;
        for (const auto& l : body.at("layers")) m.layers.push_back(dense_from_json(l));
        m.activation = activation_from_string(body.at("activation").get<std::string>());
        m.x_mean = body.at("x_mean").get<std::vector<double>>();
        m.x_std = body.at("x_std").get<std::vector<double>>();
        const auto tgt = body.at("target").get<std::vector<double>>();
        if (tgt.size() != 4 || m.x_mean.size() != m.x_std.size() || m.layers.empty() ||
            m.layers.front().in() != m.n_features() || m.layers.back().out() != 2)
            throw FormatError("baseline shapes are inconsistent");
        m.f_mean = tgt[0];
        m.f_std = tgt[1];
        m.t_mean = tgt[2];
        m.t_std = tgt[3];
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("baseline model: ") + e.what());
    }
}

void save_baseline(const BaselineModel& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << baseline_to_json(model).dump(1) << '\n';
    if (!out) throw Error("write failed for " + path.string());
}

BaselineModel load_baseline(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return baseline_from_json(nlohmann::json::parse(ss.str()));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace sfr
