#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "doctest.h"
#include "sfr/deepsets.hpp"

using namespace sfr;
using namespace std::complex_literals;

namespace {

struct Synthetic {
    std::vector<std::vector<Complex>> lambda, gamma;
    std::vector<Commitment> u_on;
    std::vector<DisturbanceFeature> x;
};

// Three-element sets: one damped pair plus one real mode, coefficients a
// smooth function of the eigenvalues and the disturbance size.
Synthetic synthetic(int count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Synthetic s;
    for (int k = 0; k < count; ++k) {
        const Complex lp(-0.1 - 0.4 * u(rng), 0.5 + 2.0 * u(rng));
        const double lr = -0.2 - 0.5 * u(rng);
        const double dp = 40.0 + 60.0 * u(rng);
        const Complex gp = std::polar(1e-3 * (1.0 + 0.5 * std::sin(lp.imag())) * dp / 50.0, -1.0 + 0.4 * lr);
        s.lambda.push_back({lp, std::conj(lp), lr});
        s.gamma.push_back({gp, std::conj(gp), 4e-4 * dp / 50.0 * (1.5 + lr)});
        s.u_on.push_back({1, 1, static_cast<std::uint8_t>(k % 2)});
        s.x.push_back({dp, 0, k % 2});
    }
    return s;
}

std::vector<EncodedSample> encode(const Synthetic& s, const Normalization& stats, bool targets = true) {
    std::vector<EncodedSample> out;
    for (std::size_t k = 0; k < s.lambda.size(); ++k) {
        auto e = encode_inputs(s.lambda[k], s.u_on[k], s.x[k], stats, 3, 3, false);
        if (targets) encode_targets(e, s.gamma[k], stats);
        out.push_back(std::move(e));
    }
    return out;
}

Normalization fitted(const Synthetic& s) {
    std::vector<double> dp;
    for (const auto& x : s.x) dp.push_back(x.delta_p_mw);
    return fit_normalization(s.gamma, dp);
}

RMatrix rows(std::initializer_list<std::initializer_list<double>> v) {
    RMatrix m(static_cast<Eigen::Index>(v.size()), 3);
    Eigen::Index r = 0;
    for (const auto& row : v) {
        Eigen::Index c = 0;
        for (double x : row) m(r, c++) = x;
        ++r;
    }
    return m;
}

ModelShape small_shape(int d = 8) {
    ModelShape shape;
    shape.d = d;
    return shape;
}

bool same_parameters(const EquivariantModel& a, const EquivariantModel& b) {
    const auto pa = parameters(a), pb = parameters(b);
    if (pa.size() != pb.size()) return false;
    for (std::size_t i = 0; i < pa.size(); ++i)
        if (*pa[i] != *pb[i]) return false;
    return true;
}

}  // namespace

TEST_CASE("encode_inputs") {
    const Normalization stats{0.0, 1.0, 50.0, 10.0};
    SUBCASE("eigenvalues in polar form") {
        const auto s = encode_inputs({-1.0, 2.0i}, {1, 1}, {10.0, 0, 1}, stats, 2, 2, false);
        CHECK(s.set(0, 0) == 1.0);
        CHECK(s.set(0, 1) == doctest::Approx(std::numbers::pi));
        CHECK(s.set(1, 0) == 2.0);
        CHECK(s.set(1, 1) == doctest::Approx(std::numbers::pi / 2.0));
    }
    SUBCASE("trip descriptor with one-hot machine index") {
        const Commitment u(10, 1);
        const auto s = encode_inputs({-1.0}, u, {55.0, 0, 4}, stats, 1, 10, false);
        REQUIRE(s.flat.cols() == 22);
        CHECK(s.flat.leftCols(10).sum() == 10.0);
        CHECK(s.flat(0, 10) == doctest::Approx(0.5));
        CHECK(s.flat(0, 11) == 0.0);
        for (int k = 0; k < 10; ++k) CHECK(s.flat(0, 12 + k) == (k == 4 ? 1.0 : 0.0));
    }
    SUBCASE("load steps leave the one-hot block empty") {
        const auto s = encode_inputs({-1.0}, {1, 0, 1}, {55.0, 1, 7}, stats, 1, 3, false);
        CHECK(s.flat(0, 4) == 1.0);
        CHECK(s.flat.rightCols(3).sum() == 0.0);
    }
    SUBCASE("padding masks the missing elements") {
        const auto s = encode_inputs({-1.0 + 1.0i, -1.0 - 1.0i}, {1, 1}, {5.0, 0, 0}, stats, 4, 2, true);
        CHECK(s.mask == std::vector<std::uint8_t>{1, 1, 0, 0});
        CHECK(s.partner == std::vector<int>{1, 0, -1, -1});
    }
    CHECK_THROWS_AS(encode_inputs({-1.0, -2.0}, {1, 1}, {5.0, 0, 0}, stats, 3, 2, false), DimensionError);
    CHECK_THROWS_AS(encode_inputs({-1.0}, {1, 1, 1}, {5.0, 0, 0}, stats, 1, 2, false), DimensionError);
    CHECK_THROWS_AS(encode_inputs({-1.0}, {1, 1}, {5.0, 0, 2}, stats, 1, 2, false), ValidationError);
}

TEST_CASE("forward pass structure") {
    const auto data = synthetic(4, 3);
    const auto stats = fitted(data);
    const auto model = init_model(3, 3, small_shape(), 11);
    const auto samples = encode(data, stats);

    SUBCASE("identical set elements give identical rows") {
        auto s = encode_inputs({-0.5, -0.5, -1.0}, {1, 1, 1}, {30.0, 0, 1}, stats, 3, 3, false);
        const auto out = forward(model, make_batch({s}));
        CHECK(out.row(0) == out.row(1));
        CHECK(out.row(0) != out.row(2));
    }
    SUBCASE("duplicated samples give identical outputs") {
        const auto out = forward(model, make_batch({samples[0], samples[0]}));
        CHECK(out.topRows(3) == out.bottomRows(3));
    }
    SUBCASE("each sample is independent of its batch neighbours") {
        const auto alone = forward(model, make_batch({samples[1]}));
        const auto together = forward(model, make_batch(samples));
        CHECK(together.middleRows(3, 3) == alone);
    }
    SUBCASE("permutation moves rows and leaves the context alone") {
        auto s = samples[2];
        auto p = s;
        const int perm[3] = {2, 0, 1};
        for (int i = 0; i < 3; ++i) p.set.row(i) = s.set.row(perm[i]);
        const auto out = forward(model, make_batch({s}));
        const auto outp = forward(model, make_batch({p}));
        for (int i = 0; i < 3; ++i) CHECK(outp.row(i) == out.row(perm[i]));
        CHECK(context_vector(model, make_batch({s})) == context_vector(model, make_batch({p})));
    }
    SUBCASE("inference without dropout is deterministic") {
        auto noisy = init_model(3, 3, [] {
            auto sh = small_shape();
            sh.dropout = 0.3;
            return sh;
        }(), 11);
        const auto b = make_batch(samples);
        CHECK(forward(noisy, b) == forward(noisy, b));
        std::mt19937_64 rng(1);
        CHECK(forward(noisy, b, true, &rng) != forward(noisy, b));
    }
    SUBCASE("set size mismatch") {
        const auto other = init_model(5, 3, small_shape(), 11);
        CHECK_THROWS_AS(forward(other, make_batch(samples)), DimensionError);
    }
}

TEST_CASE("decode_gamma") {
    const Normalization unit{0.0, 1.0, 0.0, 1.0};
    const std::vector<std::uint8_t> mask1{1};
    const std::vector<int> none{-1};
    CHECK(std::abs(decode_gamma(rows({{1.0, 0.0, 1.0}}), unit, mask1, none).gamma[0] - 1.0) < 1e-15);
    CHECK(std::abs(decode_gamma(rows({{2.0, 1.0, 0.0}}), unit, mask1, none).gamma[0] - 2.0i) < 1e-15);
    const auto a = decode_gamma(rows({{1.0, 0.6 * 0.8, 0.6 * 0.6}}), unit, mask1, none).gamma[0];
    CHECK(std::arg(a) == doctest::Approx(std::atan2(0.8, 0.6)).epsilon(1e-14));

    const Normalization scaled{2e-3, 1e-3, 0.0, 1.0};
    CHECK(std::abs(decode_gamma(rows({{1.0, 0.0, 1.0}}), scaled, mask1, none).gamma[0] - 3e-3) < 1e-15);
    const auto neg = decode_gamma(rows({{-5.0, 0.0, 1.0}}), scaled, mask1, none);
    CHECK(neg.magnitude_clamped);
    CHECK(neg.gamma[0] == 0.0);

    const auto pair = decode_gamma(rows({{1.0, 1.0, 1.0}, {1.0, -0.9, 1.0}, {0.0, 0.0, 1.0}}), unit,
                                   {1, 1, 0}, {1, 0, -1});
    REQUIRE(pair.gamma.size() == 2);
    CHECK(pair.gamma[0] == std::conj(pair.gamma[1]));
}

TEST_CASE("polar loss values") {
    const RMatrix one = RMatrix::Ones(1, 1);
    const auto t = rows({{1.0, 0.6, 0.8}});
    CHECK(polar_loss(t, t, one, 1.0, 1.0).total == 0.0);
    CHECK(polar_loss(rows({{2.0, 0.6, 0.8}}), t, one, 1.0, 1.0).total == doctest::Approx(1.0).epsilon(1e-15));
    const auto anti = polar_loss(rows({{1.0, -0.6, -0.8}}), t, one, 1.0, 1.0);
    CHECK(anti.total == doctest::Approx(std::numbers::pi * std::numbers::pi).epsilon(1e-15));
    CHECK(anti.angle <= std::numbers::pi * std::numbers::pi);
    CHECK(polar_loss(rows({{1.0, 0.0, 0.0}}), t, one, 1.0, 1.0).degenerate_direction);
    CHECK_THROWS_AS(polar_loss(t, RMatrix::Ones(2, 3), one, 1.0, 1.0), DimensionError);
}

TEST_CASE("gradients") {
    const auto data = synthetic(6, 5);
    const auto stats = fitted(data);
    const auto model = init_model(3, 3, small_shape(8), 21);
    const auto batch = make_batch(encode(data, stats));

    SUBCASE("analytic gradient matches central differences") {
        const auto check = gradient_check(model, batch, 1.0, 1.0, 200, 3);
        CHECK(check.checked == 200);
        CHECK(check.max_relative_error < 1e-4);
    }
    SUBCASE("without the angle term the direction targets do not matter") {
        auto turned = batch;
        turned.target.col(1) = -batch.target.col(2);
        turned.target.col(2) = batch.target.col(1);
        std::vector<RMatrix> ga, gb;
        loss_and_gradient(model, batch, 1.0, 0.0, &ga);
        loss_and_gradient(model, turned, 1.0, 0.0, &gb);
        for (std::size_t i = 0; i < ga.size(); ++i) CHECK(ga[i] == gb[i]);
    }
    SUBCASE("duplicating a sample leaves the mean loss gradient unchanged") {
        const auto samples = encode(data, stats);
        std::vector<RMatrix> single, twice;
        const auto l1 = loss_and_gradient(model, make_batch({samples[0]}), 1.0, 1.0, &single);
        const auto l2 = loss_and_gradient(model, make_batch({samples[0], samples[0]}), 1.0, 1.0, &twice);
        CHECK(l1.total == doctest::Approx(l2.total).epsilon(1e-14));
        for (std::size_t i = 0; i < single.size(); ++i)
            CHECK((single[i] - twice[i]).cwiseAbs().maxCoeff() <= 1e-14 * (1.0 + single[i].cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("training overfits a small set") {
    const auto data = synthetic(20, 9);
    const auto stats = fitted(data);
    const auto samples = encode(data, stats);
    TrainConfig cfg;
    cfg.epochs = 8000;
    cfg.batch_size = 20;
    cfg.learning_rate = 1e-2;
    const auto result = train(init_model(3, 3, ModelShape{}, 4), samples, samples, cfg);
    const auto batch = make_batch(samples);
    const auto loss = loss_and_gradient(result.model, batch, 1.0, 1.0, nullptr);
    CHECK(loss.total < 1e-3);
    CHECK(result.history.size() == 8000);

    const auto out = forward(result.model, batch);
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
        const auto g = decode_gamma(out.middleRows(3 * k, 3), stats, samples[k].mask, samples[k].partner).gamma;
        for (int i = 0; i < 3; ++i)
            worst = std::max(worst, std::abs(std::abs(g[i]) - std::abs(data.gamma[k][i])) / std::abs(data.gamma[k][i]));
    }
    CHECK(worst <= 0.01);
}

TEST_CASE("training is deterministic for a fixed seed") {
    const auto data = synthetic(12, 2);
    const auto stats = fitted(data);
    const auto samples = encode(data, stats);
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.batch_size = 4;
    cfg.dropout = 0.1;
    const std::vector<EncodedSample> tr(samples.begin(), samples.begin() + 8), va(samples.begin() + 8, samples.end());
    const auto a = train(init_model(3, 3, small_shape(16), 3), tr, va, cfg);
    const auto b = train(init_model(3, 3, small_shape(16), 3), tr, va, cfg);
    CHECK(same_parameters(a.model, b.model));
    CHECK(a.best_epoch == b.best_epoch);
    cfg.seed = 2;
    const auto c = train(init_model(3, 3, small_shape(16), 3), tr, va, cfg);
    CHECK_FALSE(same_parameters(a.model, c.model));
}

TEST_CASE("train configuration validation") {
    TrainConfig cfg;
    CHECK_NOTHROW(validate_train_config(cfg));
    cfg.alpha = cfg.beta = 0.0;
    CHECK_THROWS_AS(validate_train_config(cfg), ValidationError);
    cfg = TrainConfig{};
    cfg.alpha = -1.0;
    CHECK_THROWS_AS(validate_train_config(cfg), ValidationError);
    cfg = TrainConfig{};
    cfg.validation_fraction = 1.0;
    CHECK_THROWS_AS(validate_train_config(cfg), ValidationError);
    cfg = TrainConfig{};
    cfg.dropout = 1.0;
    CHECK_THROWS_AS(validate_train_config(cfg), ValidationError);
}

TEST_CASE("model persistence") {
    const auto data = synthetic(3, 8);
    auto model = init_model(3, 3, small_shape(), 5);
    model.stats = fitted(data);
    const auto batch = make_batch(encode(data, model.stats, false));
    const auto path = std::filesystem::temp_directory_path() / "sfr_unit_model.json";
    save_model(model, path);
    const auto back = load_model(path);
    CHECK(forward(back, batch) == forward(model, batch));
    CHECK(back.stats.mag_mean == model.stats.mag_mean);
    CHECK(back.stats.dp_std == model.stats.dp_std);

    SUBCASE("truncated file") {
        const auto size = std::filesystem::file_size(path);
        std::filesystem::resize_file(path, size / 2);
        CHECK_THROWS_AS(load_model(path), FormatError);
    }
    SUBCASE("edited weight fails the checksum") {
        auto doc = nlohmann::json::parse(std::ifstream(path));
        doc["body"]["h"]["w"][0][0] = 0.125;
        std::ofstream(path) << doc.dump();
        CHECK_THROWS_AS(load_model(path), FormatError);
    }
    SUBCASE("unknown format version") {
        auto doc = model_to_json(model);
        doc["header"]["version"] = kModelFormatVersion + 1;
        CHECK_THROWS_AS(model_from_json(doc), FormatError);
    }
    SUBCASE("a model for three elements rejects five") {
        const std::vector<Complex> five{-1.0, -2.0, -3.0, -4.0, -5.0};
        CHECK_THROWS_AS(encode_inputs(five, {1, 1, 1}, {10.0, 0, 0}, back.stats, back.m, back.n_g, back.padded),
                        DimensionError);
    }
    std::filesystem::remove(path);
}
