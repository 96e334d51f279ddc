#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include <omp.h>

#include "doctest.h"
#include "fixtures.hpp"
#include "sfr/pipeline.hpp"

using namespace sfr;
using fixtures::bundled;

namespace {

struct Study {
    GridCase grid;
    LambdaBank bank;
    std::vector<DatasetRecord> records;
};

// Three-machine case, banked for all-on and one unit off plus their post-trip
// structures, with a full alpha sweep over both commitments.
const Study& three() {
    static const Study s = [] {
        omp_set_num_threads(4);
        Study st;
        st.grid = bundled("three_machine");
        const std::vector<Commitment> u{{1, 1, 1}, {1, 0, 1}};
        st.bank = build_lambda_bank(st.grid, with_post_trip_commitments(u), ModeSelection{});
        st.records = collect_dataset(st.grid, u, parse_alpha_grid("0.35:0.05:0.95"), st.bank);
        return st;
    }();
    return s;
}

std::filesystem::path scratch(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("sfr_unit_" + name);
    std::filesystem::remove_all(p);
    return p;
}

bool same_structure(const ModalStructure& a, const ModalStructure& b) {
    return a.u_on == b.u_on && a.lambda == b.lambda && a.w == b.w && a.v_speed == b.v_speed &&
           a.weights == b.weights && a.speed_index == b.speed_index && a.mode_index == b.mode_index;
}

}  // namespace

TEST_CASE("bank construction and lookup") {
    const auto g = bundled("three_machine");
    SUBCASE("one commitment") {
        const auto bank = build_lambda_bank(g, {{1, 1, 1}}, ModeSelection{});
        CHECK(bank.entries.size() == 1);
        CHECK(bank.failures.empty());
        const auto& e = lookup_bank(bank, {1, 1, 1});
        CHECK(e.structure.u_on == Commitment{1, 1, 1});
        CHECK(e.stable());
        CHECK(bank.case_hash == case_hash(g));
        CHECK_THROWS_AS(lookup_bank(bank, {1, 1, 0}), LookupError);
    }
    SUBCASE("duplicates collapse to one entry") {
        const auto bank = build_lambda_bank(g, {{1, 1, 1}, {1, 1, 1}, {0, 1, 1}, {0, 1, 1}}, ModeSelection{});
        CHECK(bank.entries.size() == 2);
    }
    SUBCASE("post-trip structures") {
        const auto u = with_post_trip_commitments({{1, 1, 1}, {1, 0, 1}});
        const std::vector<Commitment> expected{{1, 1, 1}, {1, 0, 1}, {0, 1, 1}, {1, 1, 0}, {0, 0, 1}, {1, 0, 0}};
        CHECK(u == expected);
        CHECK(with_post_trip_commitments({{0, 1, 0}}) == std::vector<Commitment>{{0, 1, 0}});
    }
    SUBCASE("hash ignores dispatch and commitment only") {
        auto other = g;
        other.machines[1].p_mw += 5.0;
        other.u_on = {1, 0, 1};
        other.name = "renamed";
        CHECK(case_hash(other) == case_hash(g));
        other.branches[0].x *= 1.1;
        CHECK(case_hash(other) != case_hash(g));
    }
}

TEST_CASE("bank persistence") {
    const auto& s = three();
    const auto dir = scratch("bank");
    save_bank(s.bank, dir);
    CHECK(std::filesystem::exists(dir / "index.json"));
    const auto back = load_bank(dir);
    CHECK(back.entries.size() == s.bank.entries.size());
    CHECK(back.case_hash == s.bank.case_hash);
    CHECK(back.mu_target == s.bank.mu_target);
    for (const auto& [key, entry] : s.bank.entries) {
        const auto& e = lookup_bank(back, commitment_from_key(key));
        CHECK(same_structure(e.structure, entry.structure));
        CHECK(e.max_real == entry.max_real);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("commitment lists") {
    const auto r = random_commitments(6, 10, 4, 3);
    CHECK(r.size() == 10);
    std::set<std::string> keys;
    for (const auto& u : r) {
        CHECK(std::count(u.begin(), u.end(), 1) >= 4);
        keys.insert(commitment_key(u));
    }
    CHECK(keys.size() == r.size());
    CHECK(random_commitments(6, 10, 4, 3) == r);
    CHECK_THROWS_AS(random_commitments(3, 2, 4, 1), ValidationError);

    const auto path = scratch("commitments.txt");
    std::ofstream(path) << "# study\n111\n\n101  # one off\n";
    CHECK(read_commitment_list(path, 3) == std::vector<Commitment>{{1, 1, 1}, {1, 0, 1}});
    std::ofstream(path) << "1101\n";
    CHECK_THROWS_AS(read_commitment_list(path, 3), ValidationError);
    std::filesystem::remove(path);
}

TEST_CASE("disturbance generation") {
    const auto g = bundled("three_machine");
    const auto pf = solve_power_flow(g);
    const auto xs = generate_disturbances(g, pf, {{7, 40.0}});
    REQUIRE(xs.size() == 4);
    for (int i = 0; i < 3; ++i) {
        CHECK(xs[i].type == 0);
        CHECK(xs[i].index == i);
        CHECK(xs[i].delta_p_mw == doctest::Approx(pf.p_gen[i] * g.base_mva));
    }
    CHECK(xs[3].type == 1);
    CHECK(xs[3].index == 7);
    CHECK(xs[3].delta_p_mw == 40.0);

    const auto ev = to_event(g, xs[3]);
    CHECK(ev.kind == DisturbanceKind::LoadStep);
    CHECK(ev.target == g.bus_index(7));
    const auto f = to_feature(Disturbance{55.0, 0, 2});
    CHECK(f.delta_p_mw == 55.0);
    CHECK(f.type == 0);
    CHECK(f.index == 2);
    CHECK(to_event(g, Disturbance{55.0, 0, 2}).target == 2);
    CHECK_THROWS_AS(to_event(g, Disturbance{40.0, 1, 42}), ValidationError);
    CHECK_THROWS_AS(generate_disturbances(g, pf, {{42, 10.0}}), ValidationError);

    CHECK(structure_commitment({1, 1, 1}, xs[1], TripModel::PostTrip) == Commitment{1, 0, 1});
    CHECK(structure_commitment({1, 1, 1}, xs[1], TripModel::PreTrip) == Commitment{1, 1, 1});
    CHECK(structure_commitment({1, 1, 1}, xs[3], TripModel::PostTrip) == Commitment{1, 1, 1});
}

TEST_CASE("units at zero output are not tripped") {
    auto g = bundled("six_machine");
    const int slack = [&] {
        for (std::size_t i = 0; i < g.n_machines(); ++i)
            if (g.bus_index(g.machines[i].bus) == g.slack_bus()) return static_cast<int>(i);
        return -1;
    }();
    std::vector<int> idle;
    for (int i = 0; i < static_cast<int>(g.n_machines()) && idle.size() < 2; ++i)
        if (i != slack) idle.push_back(i);
    for (int i : idle) {
        for (auto& m : g.machines)
            if (&m != &g.machines[i] && m.p_mw + g.machines[i].p_mw / 4.0 <= m.p_max_mw) {
                m.p_mw += g.machines[i].p_mw / 4.0;
                break;
            }
        g.machines[i].p_mw = 0.0;
    }
    const auto xs = generate_disturbances(g, solve_power_flow(g));
    CHECK(xs.size() == g.n_machines() - 2);
    for (const auto& x : xs) CHECK(std::find(idle.begin(), idle.end(), x.index) == idle.end());
}

TEST_CASE("alpha grid parsing") {
    const auto a = parse_alpha_grid("0.35:0.05:0.95");
    REQUIRE(a.size() == 13);
    CHECK(a.front() == doctest::Approx(0.35));
    CHECK(a.back() == doctest::Approx(0.95));
    CHECK(parse_alpha_grid("0.5,0.7") == std::vector<double>{0.5, 0.7});
    CHECK_THROWS_AS(parse_alpha_grid("0:0.1:0.5"), ValidationError);
    CHECK_THROWS_AS(parse_alpha_grid("0.5:0.1"), Error);
    CHECK_THROWS_AS(parse_alpha_grid("half"), ParseError);
}

TEST_CASE("dataset collection") {
    const auto& s = three();
    // Two commitments with 3 and 2 units on, 13 factors each.
    CHECK(s.records.size() == (3 + 2) * 13);
    int stable_all_on = 0;
    for (const auto& r : s.records) {
        if (!r.stable) {
            // G3 alone cannot carry the load, and low-alpha dispatches overload it.
            CHECK(r.u_on == Commitment{1, 0, 1});
            CHECK_FALSE(r.note.empty());
            continue;
        }
        stable_all_on += r.u_on == Commitment{1, 1, 1};
        const auto& e = lookup_bank(s.bank, commitment_from_key(r.structure_key));
        CHECK(r.lambda == e.structure.lambda);
        CHECK(r.gamma.size() == r.lambda.size());
        CHECK(r.f_e < s.grid.f0_hz);
        CHECK(r.x.delta_p_mw > 0.0);
    }
    CHECK(stable_all_on == 3 * 13);
    CHECK(verify_dataset(s.grid, s.records, s.bank) <= 1e-12);

    SUBCASE("JSONL round trip") {
        const auto path = scratch("dataset.jsonl");
        write_dataset(s.records, path);
        const auto back = read_dataset(path);
        REQUIRE(back.size() == s.records.size());
        for (std::size_t k = 0; k < back.size(); ++k) {
            CHECK(back[k].gamma == s.records[k].gamma);
            CHECK(back[k].lambda == s.records[k].lambda);
            CHECK(back[k].u_on == s.records[k].u_on);
            CHECK(back[k].alpha == s.records[k].alpha);
            CHECK(back[k].p_gen == s.records[k].p_gen);
        }
        std::filesystem::remove(path);
    }
    SUBCASE("tampered coefficients fail verification") {
        auto bad = s.records;
        bad[5].gamma[0] *= 1.01;
        CHECK(verify_dataset(s.grid, bad, s.bank) > 1e-8);
    }
}

TEST_CASE("split_indices") {
    const auto [a, b] = split_indices(10, 0.7, 4);
    CHECK(a.size() == 7);
    CHECK(b.size() == 3);
    std::vector<std::size_t> all(a);
    all.insert(all.end(), b.begin(), b.end());
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> iota(10);
    std::iota(iota.begin(), iota.end(), 0);
    CHECK(all == iota);
    CHECK(split_indices(10, 0.7, 4).first == a);
    CHECK(split_indices(10, 0.7, 5).first != a);
}

TEST_CASE("metrics") {
    const std::vector<NadirPair> same{{59.8, 3.0, 59.8, 3.0}, {59.7, 2.0, 59.7, 2.0}};
    const auto m0 = evaluate_metrics(same);
    CHECK(m0.nadir_mae == 0.0);
    CHECK(m0.nadir_mape == 0.0);
    CHECK(m0.time_mae == 0.0);
    const auto m1 = evaluate_metrics(std::vector<NadirPair>{{59.78, 3.0, 59.80, 3.5}});
    CHECK(m1.nadir_mae == doctest::Approx(0.02).epsilon(1e-9));
    CHECK(m1.nadir_mape == doctest::Approx(100.0 * 0.02 / 59.8).epsilon(1e-9));
    CHECK(m1.time_mape == doctest::Approx(100.0 / 7.0).epsilon(1e-12));
    AssessmentReport r;
    r.rows.resize(2);
    CHECK_THROWS_AS(evaluate_metrics(r, std::vector<OracleResult>(3)), DimensionError);
}

TEST_CASE("feed-forward baseline") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<std::vector<double>> x;
    std::vector<std::pair<double, double>> y;
    for (int k = 0; k < 10; ++k) {
        x.push_back({u(rng), u(rng), u(rng), u(rng)});
        y.emplace_back(59.8 + 0.1 * x.back()[0] - 0.05 * x.back()[1] * x.back()[2], 2.5 + x.back()[3]);
    }
    BaselineConfig cfg;
    cfg.hidden = {32, 32};
    cfg.epochs = 4000;
    cfg.learning_rate = 3e-3;
    const auto fit = baseline_train(x, y, cfg);
    CHECK(fit.loss.back() < 1e-4);
    const auto pred = baseline_predict(fit.model, x);
    for (int k = 0; k < 10; ++k) CHECK(std::abs(pred[k].first - y[k].first) < 0.01);

    SUBCASE("row order does not matter") {
        auto xp = x;
        auto yp = y;
        std::reverse(xp.begin(), xp.end());
        std::reverse(yp.begin(), yp.end());
        const auto other = baseline_train(xp, yp, cfg);
        CHECK(baseline_to_json(other.model) == baseline_to_json(fit.model));
    }
    SUBCASE("persistence") {
        const auto path = scratch("baseline.json");
        save_baseline(fit.model, path);
        const auto back = baseline_predict(load_baseline(path), x);
        for (int k = 0; k < 10; ++k) CHECK(back[k] == pred[k]);
        std::filesystem::remove(path);
    }
    CHECK_THROWS_AS(baseline_predict(fit.model, {{1.0, 2.0}}), DimensionError);
}

TEST_CASE("baseline features from a record") {
    const auto& s = three();
    const auto& r = s.records.front();
    const auto f = baseline_features(r, s.grid.base_mva);
    CHECK(f.size() == 2 * s.grid.n_buses() + 2 * s.grid.n_machines() + 2);
    CHECK(f.back() == r.x.index + 1);
}

TEST_CASE("assessment") {
    const auto& s = three();
    AssessOptions analytic;
    analytic.analytic = true;

    SUBCASE("one row per committed unit") {
        const auto rep = assess(s.grid, s.bank, nullptr, analytic);
        CHECK(rep.rows.size() == 3);
        CHECK(rep.mode == "analytic");
        CHECK(rep.commitment == "111");
        for (const auto& row : rep.rows) {
            CHECK(row.f_nadir < row.f_e);
            CHECK(row.t_nadir > 0.0);
        }
        const auto back = report_from_json(report_to_json(rep));
        CHECK(back.rows.size() == 3);
        CHECK(back.rows[1].f_nadir == rep.rows[1].f_nadir);
        CHECK(back.rows[2].structure_key == rep.rows[2].structure_key);
    }
    SUBCASE("zero disturbance stays at nominal frequency") {
        const auto rep = assess(s.grid, s.bank, nullptr, analytic, std::vector<Disturbance>{{0.0, 1, 5}});
        REQUIRE(rep.rows.size() == 1);
        CHECK(rep.rows[0].f_e == s.grid.f0_hz);
        CHECK(rep.rows[0].f_nadir == s.grid.f0_hz);
    }
    SUBCASE("estimated mode") {
        int m = 0;
        for (const auto& [k, e] : s.bank.entries) m = std::max(m, e.structure.mu());
        const auto model = init_model(m, 3, ModelShape{}, 1, true);
        const auto rep = assess(s.grid, s.bank, &model, AssessOptions{});
        CHECK(rep.rows.size() == 3);
        CHECK(rep.mode == "estimated");
        CHECK_FALSE(rep.model_id.empty());
        CHECK_THROWS_AS(assess(s.grid, s.bank, &model, AssessOptions{}, std::vector<Disturbance>{{0.0, 1, 5}}),
                        ValidationError);
        CHECK_THROWS_AS(assess(s.grid, s.bank, nullptr, AssessOptions{}), ValidationError);
    }
    SUBCASE("bank from another network is rejected") {
        const auto two = bundled("two_machine");
        const auto other = build_lambda_bank(two, {{1, 1}}, ModeSelection{});
        CHECK_THROWS_AS(assess(s.grid, other, nullptr, analytic), ValidationError);
    }
    SUBCASE("missing structure") {
        const auto partial = build_lambda_bank(s.grid, {{1, 1, 1}}, ModeSelection{});
        CHECK_THROWS_AS(assess(s.grid, partial, nullptr, analytic), LookupError);
    }
}

TEST_CASE("oracle results") {
    const auto& s = three();
    const auto xs = generate_disturbances(s.grid, solve_power_flow(s.grid));
    OracleOptions opts;
    opts.sim.horizon = 10.0;
    const auto res = oracle_batch(s.grid, xs, opts);
    REQUIRE(res.size() == xs.size());
    for (const auto& r : res) {
        CHECK(r.f_nadir < s.grid.f0_hz);
        CHECK(r.f_nadir <= r.f_final);
        CHECK_FALSE(r.boundary_minimum);
    }
    const auto back = oracle_from_json(oracle_to_json(res));
    for (std::size_t k = 0; k < res.size(); ++k) {
        CHECK(back[k].f_nadir == res[k].f_nadir);
        CHECK(back[k].t_nadir == res[k].t_nadir);
    }
}

TEST_CASE("parallel kernels match their serial references") {
    const auto& s = three();
    const auto u = with_post_trip_commitments({{1, 1, 1}, {1, 0, 1}});
    const auto serial = build_lambda_bank(s.grid, u, ModeSelection{}, false);
    REQUIRE(serial.entries.size() == s.bank.entries.size());
    for (const auto& [key, entry] : serial.entries) CHECK(same_structure(entry.structure, s.bank.entries.at(key).structure));

    CollectOptions copts;
    copts.parallel = false;
    const auto records = collect_dataset(s.grid, {{1, 1, 1}, {1, 0, 1}}, parse_alpha_grid("0.35:0.05:0.95"), s.bank,
                                         copts);
    REQUIRE(records.size() == s.records.size());
    for (std::size_t k = 0; k < records.size(); ++k) {
        CHECK(records[k].gamma == s.records[k].gamma);
        CHECK(records[k].f_e == s.records[k].f_e);
    }

    const auto xs = generate_disturbances(s.grid, solve_power_flow(s.grid));
    OracleOptions par, ser;
    par.sim.horizon = ser.sim.horizon = 5.0;
    ser.parallel = false;
    const auto op = oracle_batch(s.grid, xs, par), os = oracle_batch(s.grid, xs, ser);
    for (std::size_t k = 0; k < xs.size(); ++k) CHECK(op[k].f_nadir == os[k].f_nadir);

    AssessOptions ap;
    ap.analytic = true;
    AssessOptions as = ap;
    as.parallel = false;
    const auto rp = assess(s.grid, s.bank, nullptr, ap), rs = assess(s.grid, s.bank, nullptr, as);
    for (std::size_t k = 0; k < rp.rows.size(); ++k) {
        CHECK(rp.rows[k].f_nadir == rs.rows[k].f_nadir);
        CHECK(rp.rows[k].t_nadir == rs.rows[k].t_nadir);
    }
}
