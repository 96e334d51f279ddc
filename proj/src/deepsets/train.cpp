#include <algorithm>
#include <cmath>
#include <numeric>

#include "sfr/deepsets.hpp"

namespace sfr {

void validate_train_config(const TrainConfig& cfg) {
    if (cfg.alpha < 0.0 || cfg.beta < 0.0 || (cfg.alpha == 0.0 && cfg.beta == 0.0))
        throw ValidationError("loss weights must be non-negative and not both zero");
    if (!(cfg.validation_fraction > 0.0 && cfg.validation_fraction < 1.0))
        throw ValidationError("validation fraction must lie in (0, 1)");
    if (!(cfg.learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
    if (cfg.epochs < 1 || cfg.batch_size < 1) throw ValidationError("epochs and batch size must be positive");
    if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) throw ValidationError("dropout must lie in [0, 1)");
}

TrainResult train(EquivariantModel model, const std::vector<EncodedSample>& train_set,
                  const std::vector<EncodedSample>& validation_set, const TrainConfig& cfg) {
    validate_train_config(cfg);
    if (train_set.empty()) throw ValidationError("empty training set");
    model.dropout = cfg.dropout;

    std::mt19937_64 rng(cfg.seed);
    Adam opt(cfg.learning_rate);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    const Batch validation = validation_set.empty() ? Batch{} : make_batch(validation_set);

    TrainResult result;
    result.model = model;
    result.best_validation = std::numeric_limits<double>::infinity();
    std::vector<RMatrix> grads;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double sum = 0.0;
        std::size_t seen = 0;
        int batch_no = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_no) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const std::vector<std::size_t> rows(order.begin() + start, order.begin() + end);
            const Batch batch = make_batch(train_set, rows);
            const PolarLoss loss = loss_and_gradient(model, batch, cfg.alpha, cfg.beta, &grads, &rng);
            if (!std::isfinite(loss.total))
                throw NumericalError("NaN loss in epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(batch_no));
            if (loss.total > 1e6)
                throw NumericalError("training diverged (loss " + std::to_string(loss.total) + ") in epoch " +
                                     std::to_string(epoch) + ", batch " + std::to_string(batch_no));
            opt.step(parameters(model), grads);
            sum += loss.total * static_cast<double>(rows.size());
            seen += rows.size();
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = sum / static_cast<double>(seen);
        rec.validation_loss = validation_set.empty()
                                  ? rec.train_loss
                                  : loss_and_gradient(model, validation, cfg.alpha, cfg.beta, nullptr).total;
        result.history.push_back(rec);
        if (rec.validation_loss < result.best_validation) {
            result.best_validation = rec.validation_loss;
            result.best_epoch = epoch;
            result.model = model;
        }
    }
    return result;
}

GradientCheck gradient_check(const EquivariantModel& model, const Batch& batch, double alpha, double beta, int count,
                             std::uint64_t seed) {
    std::vector<RMatrix> grads;
    loss_and_gradient(model, batch, alpha, beta, &grads);

    EquivariantModel probe = model;
    auto params = parameters(probe);
    std::vector<std::pair<std::size_t, Eigen::Index>> all;
    for (std::size_t p = 0; p < params.size(); ++p)
        for (Eigen::Index k = 0; k < params[p]->size(); ++k) all.emplace_back(p, k);
    std::mt19937_64 rng(seed);
    std::shuffle(all.begin(), all.end(), rng);
    if (count < static_cast<int>(all.size())) all.resize(count);

    GradientCheck out;
    const double h = 1e-5;
    for (const auto& [p, k] : all) {
        double& v = params[p]->data()[k];
        const double saved = v;
        v = saved + h;
        const double up = loss_and_gradient(probe, batch, alpha, beta, nullptr).total;
        v = saved - h;
        const double down = loss_and_gradient(probe, batch, alpha, beta, nullptr).total;
        v = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double analytic = grads[p].data()[k];
        const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
        out.max_relative_error = std::max(out.max_relative_error, std::abs(analytic - numeric) / denom);
        ++out.checked;
    }
    return out;
}

}  // namespace sfr
