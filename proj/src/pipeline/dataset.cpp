#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "sfr/pipeline.hpp"

namespace sfr {

std::vector<Disturbance> generate_disturbances(const GridCase& grid, const OperatingPoint& pf,
                                               const std::vector<LoadStepSpec>& load_steps) {
    std::vector<Disturbance> out;
    for (std::size_t i = 0; i < grid.machines.size(); ++i) {
        if (!grid.u_on[i]) continue;
        const double p_mw = pf.p_gen.at(i) * grid.base_mva;
        if (p_mw > 0.0) out.push_back({p_mw, 0, static_cast<int>(i)});
    }
    auto steps = load_steps;
    std::stable_sort(steps.begin(), steps.end(), [](const auto& a, const auto& b) { return a.bus_id < b.bus_id; });
    for (const auto& s : steps) {
        if (grid.bus_index(s.bus_id) < 0) throw ValidationError("load step at unknown bus " + std::to_string(s.bus_id));
        if (!(s.delta_p_mw > 0.0)) throw ValidationError("load step magnitude must be positive");
        out.push_back({s.delta_p_mw, 1, s.bus_id});
    }
    if (out.empty()) throw ValidationError("no disturbances: nothing committed and dispatched");
    return out;
}

DisturbanceEvent to_event(const GridCase& grid, const Disturbance& x, double time) {
    DisturbanceEvent ev;
    ev.time = time;
    ev.delta_p_mw = x.delta_p_mw;
    if (x.type == 0) {
        ev.kind = DisturbanceKind::GeneratorTrip;
        ev.target = x.index;
    } else if (x.type == 1) {
        ev.kind = DisturbanceKind::LoadStep;
        ev.target = grid.bus_index(x.index);
        if (ev.target < 0) throw ValidationError("load step at unknown bus " + std::to_string(x.index));
    } else {
        throw ValidationError("disturbance type must be 0 (trip) or 1 (load step)");
    }
    validate_event(grid, ev);
    return ev;
}

DisturbanceFeature to_feature(const Disturbance& x) { return {x.delta_p_mw, x.type, x.type == 0 ? x.index : 0}; }

Commitment structure_commitment(const Commitment& u_on, const Disturbance& x, TripModel trip_model) {
    Commitment u = u_on;
    if (x.type == 0 && trip_model == TripModel::PostTrip) u.at(x.index) = 0;
    return u;
}

AnalyticGamma analytic_gamma(const GridCase& grid, const LambdaBank& bank, const Disturbance& x,
                             TripModel trip_model) {
    AnalyticGamma out;
    out.entry = &lookup_bank(bank, structure_commitment(grid.u_on, x, trip_model));
    const DeltaX0 dx = post_disturbance_equilibrium(grid, to_event(grid, x), trip_model);
    out.gamma = modal_coefficients(out.entry->structure, dx).gamma;
    out.f_e = dx.f_e;
    return out;
}

// ---------------------------------------------------------------------------

std::vector<double> parse_alpha_grid(const std::string& text) {
    auto number = [&](const std::string& s) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != s.size()) throw ParseError("bad number '" + s + "' in alpha grid '" + text + "'");
        return v;
    };
    std::vector<double> out;
    if (std::count(text.begin(), text.end(), ':') == 2) {
        const auto c1 = text.find(':'), c2 = text.rfind(':');
        const double start = number(text.substr(0, c1));
        const double step = number(text.substr(c1 + 1, c2 - c1 - 1));
        const double stop = number(text.substr(c2 + 1));
        if (!(step > 0.0) || stop < start) throw ValidationError("alpha grid needs step > 0 and stop >= start");
        const long n = std::lround(std::floor((stop - start) / step + 1e-9));
        for (long k = 0; k <= n; ++k) out.push_back(std::round((start + k * step) * 1e12) / 1e12);
    } else {
        std::stringstream ss(text);
        std::string item;
        while (std::getline(ss, item, ',')) out.push_back(number(item));
    }
    if (out.empty()) throw ValidationError("empty alpha grid");
    for (double a : out)
        if (!(a > 0.0 && a <= 1.0)) throw ValidationError("alpha values must lie in (0, 1]");
    return out;
}

GridCase record_state(const GridCase& grid, const DatasetRecord& rec) {
    GridCase g = nominal_dispatch(apply_commitment_with_slack_transfer(grid, rec.u_on));
    if (rec.x.type == 0) g = redispatch(g, rec.x.index, rec.x.delta_p_mw);
    return g;
}

std::vector<DatasetRecord> collect_dataset(const GridCase& grid, const std::vector<Commitment>& commitments,
                                           const std::vector<double>& alpha_grid, const LambdaBank& bank,
                                           const CollectOptions& opts) {
    if (alpha_grid.empty()) throw ValidationError("empty alpha grid");
    for (double a : alpha_grid)
        if (!(a > 0.0 && a <= 1.0)) throw ValidationError("alpha values must lie in (0, 1]");

    // Task list in deterministic order: commitment, machine, alpha.
    struct Task {
        std::size_t u;
        int machine;
        double alpha;
        double p_nominal_mw;
    };
    std::vector<Task> tasks;
    std::vector<GridCase> nominal(commitments.size());
    std::vector<std::string> setup_error(commitments.size());
    for (std::size_t k = 0; k < commitments.size(); ++k) {
        try {
            nominal[k] = nominal_dispatch(apply_commitment_with_slack_transfer(grid, commitments[k]));
            const OperatingPoint pf = solve_power_flow(nominal[k]);
            for (std::size_t i = 0; i < grid.machines.size(); ++i) {
                const double p = pf.p_gen[i] * grid.base_mva;
                if (!commitments[k][i] || !(p > 0.0)) continue;
                for (double a : alpha_grid) tasks.push_back({k, static_cast<int>(i), a, p});
            }
        } catch (const std::exception& e) {
            setup_error[k] = e.what();
        }
    }

    std::vector<DatasetRecord> out(tasks.size());
    auto run = [&](std::size_t t) {
        const Task& task = tasks[t];
        DatasetRecord& rec = out[t];
        rec.u_on = commitments[task.u];
        rec.alpha = task.alpha;
        rec.x = {task.alpha * task.p_nominal_mw, 0, task.machine};
        try {
            const GridCase state = record_state(grid, rec);
            const OperatingPoint pf = solve_power_flow(state);
            for (std::size_t i = 0; i < state.machines.size(); ++i) {
                const double p = pf.p_gen[i] * state.base_mva;
                if (state.u_on[i] && (p < 0.0 || p > state.machines[i].p_max_mw))
                    throw ValidationError("redispatch puts " + state.machines[i].name + " at " + std::to_string(p) +
                                          " MW, outside [0, " + std::to_string(state.machines[i].p_max_mw) + "]");
            }
            rec.v = pf.v;
            rec.theta = pf.theta;
            rec.p_gen = pf.p_gen;
            const AnalyticGamma ag = analytic_gamma(state, bank, rec.x, opts.trip_model);
            rec.structure_key = commitment_key(ag.entry->structure.u_on);
            rec.lambda = ag.entry->structure.lambda;
            rec.gamma = ag.gamma;
            rec.f_e = ag.f_e;
            rec.stable = ag.entry->stable();
            if (!rec.stable) rec.note = "unstable structure";
        } catch (const std::exception& e) {
            rec.stable = false;
            rec.note = e.what();
        }
    };
    if (opts.parallel) {
#pragma omp parallel for schedule(dynamic)
        for (long t = 0; t < static_cast<long>(tasks.size()); ++t) run(static_cast<std::size_t>(t));
    } else {
        for (std::size_t t = 0; t < tasks.size(); ++t) run(t);
    }
    for (std::size_t k = 0; k < commitments.size(); ++k) {
        if (setup_error[k].empty()) continue;
        DatasetRecord rec;
        rec.u_on = commitments[k];
        rec.x.index = -1;
        rec.note = setup_error[k];
        out.push_back(rec);
    }
    return out;
}

namespace {

nlohmann::json complex_list(const std::vector<Complex>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& c : v) a.push_back({c.real(), c.imag()});
    return a;
}

std::vector<Complex> complex_list_from(const nlohmann::json& a) {
    std::vector<Complex> v;
    for (const auto& c : a) v.emplace_back(c.at(0).get<double>(), c.at(1).get<double>());
    return v;
}

}  // namespace

nlohmann::json record_to_json(const DatasetRecord& rec) {
    return {{"u_on", commitment_key(rec.u_on)},
            {"x", {rec.x.delta_p_mw, rec.x.type, rec.x.index}},
            {"alpha", rec.alpha},
            {"structure", rec.structure_key},
            {"lambda", complex_list(rec.lambda)},
            {"gamma", complex_list(rec.gamma)},
            {"f_e", rec.f_e},
            {"stable", rec.stable},
            {"note", rec.note},
            {"v", rec.v},
            {"theta", rec.theta},
            {"p_gen", rec.p_gen}};
}

DatasetRecord record_from_json(const nlohmann::json& doc) {
    try {
        DatasetRecord rec;
        rec.u_on = commitment_from_key(doc.at("u_on").get<std::string>());
        const auto& x = doc.at("x");
        rec.x = {x.at(0).get<double>(), x.at(1).get<int>(), x.at(2).get<int>()};
        rec.alpha = doc.at("alpha").get<double>();
        rec.structure_key = doc.at("structure").get<std::string>();
        rec.lambda = complex_list_from(doc.at("lambda"));
        rec.gamma = complex_list_from(doc.at("gamma"));
        rec.f_e = doc.at("f_e").get<double>();
        rec.stable = doc.at("stable").get<bool>();
        rec.note = doc.value("note", "");
        rec.v = doc.at("v").get<std::vector<double>>();
        rec.theta = doc.at("theta").get<std::vector<double>>();
        rec.p_gen = doc.at("p_gen").get<std::vector<double>>();
        if (rec.stable && rec.gamma.size() != rec.lambda.size())
            throw FormatError("record has " + std::to_string(rec.gamma.size()) + " coefficients for " +
                              std::to_string(rec.lambda.size()) + " modes");
        return rec;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("dataset record: ") + e.what());
    }
}

void write_dataset(const std::vector<DatasetRecord>& records, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& r : records) out << record_to_json(r).dump() << '\n';
    if (!out) throw Error("write failed for " + path.string());
}

std::vector<DatasetRecord> read_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::vector<DatasetRecord> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(record_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const FormatError& e) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

double verify_dataset(const GridCase& grid, const std::vector<DatasetRecord>& records, const LambdaBank& bank,
                      TripModel trip_model) {
    double worst = 0.0;
    for (const auto& rec : records) {
        if (!rec.stable) continue;
        const GridCase g = apply_commitment_with_slack_transfer(grid, rec.u_on);
        const AnalyticGamma ag = analytic_gamma(g, bank, rec.x, trip_model);
        if (ag.entry->structure.lambda != rec.lambda)
            throw ValidationError("record for " + commitment_key(rec.u_on) + " does not match the bank eigenvalues");
        for (std::size_t i = 0; i < rec.gamma.size(); ++i) worst = std::max(worst, std::abs(rec.gamma[i] - ag.gamma[i]));
    }
    return worst;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double fraction_train,
                                                                            std::uint64_t seed) {
    if (!(fraction_train > 0.0 && fraction_train < 1.0)) throw ValidationError("split fraction must lie in (0, 1)");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto cut = static_cast<std::size_t>(std::lround(fraction_train * static_cast<double>(n)));
    return {std::vector<std::size_t>(idx.begin(), idx.begin() + cut), std::vector<std::size_t>(idx.begin() + cut, idx.end())};
}

Normalization fit_record_normalization(const std::vector<DatasetRecord>& records,
                                       const std::vector<std::size_t>& rows) {
    std::vector<std::vector<Complex>> gammas;
    std::vector<double> dp;
    for (auto r : rows) {
        if (!records[r].stable) continue;
        gammas.push_back(records[r].gamma);
        dp.push_back(records[r].x.delta_p_mw);
    }
    return fit_normalization(gammas, dp);
}

std::vector<EncodedSample> encode_records(const std::vector<DatasetRecord>& records,
                                          const std::vector<std::size_t>& rows, const Normalization& stats, int m,
                                          int n_g, bool padded) {
    std::vector<EncodedSample> out;
    for (auto r : rows) {
        const auto& rec = records[r];
        if (!rec.stable) continue;
        auto s = encode_inputs(rec.lambda, rec.u_on, to_feature(rec.x), stats, m, n_g, padded);
        encode_targets(s, rec.gamma, stats);
        out.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------

OracleResult oracle_nadir(const GridCase& grid, const OperatingPoint& op, const Disturbance& x,
                          const OracleOptions& opts) {
    const DisturbanceEvent ev = to_event(grid, x, opts.event_time);
    const Trajectory traj = simulate(grid, op, ev, opts.sim);
    const NadirMeasurement m = measure_trajectory_nadir(traj);
    return {m.f_nadir, m.t_nadir, traj.f_coi.back(), m.boundary_minimum};
}

std::vector<OracleResult> oracle_batch(const GridCase& grid, const std::vector<Disturbance>& xs,
                                       const OracleOptions& opts) {
    const OperatingPoint op = solve_equilibrium(grid);
    std::vector<OracleResult> out(xs.size());
    std::vector<std::string> errors(xs.size());
    auto run = [&](std::size_t k) {
        try {
            out[k] = oracle_nadir(grid, op, xs[k], opts);
        } catch (const std::exception& e) {
            errors[k] = e.what();
        }
    };
    if (opts.parallel) {
#pragma omp parallel for schedule(dynamic)
        for (long k = 0; k < static_cast<long>(xs.size()); ++k) run(static_cast<std::size_t>(k));
    } else {
        for (std::size_t k = 0; k < xs.size(); ++k) run(k);
    }
    for (std::size_t k = 0; k < xs.size(); ++k)
        if (!errors[k].empty()) throw ConvergenceError("oracle for disturbance " + std::to_string(k) + ": " + errors[k]);
    return out;
}

std::vector<OracleResult> oracle_for_records(const GridCase& grid, const std::vector<DatasetRecord>& records,
                                             const std::vector<std::size_t>& rows, const OracleOptions& opts) {
    std::vector<OracleResult> out(rows.size());
    std::vector<std::string> errors(rows.size());
    auto run = [&](std::size_t k) {
        try {
            const auto& rec = records[rows[k]];
            const GridCase state = record_state(grid, rec);
            out[k] = oracle_nadir(state, solve_equilibrium(state), rec.x, opts);
        } catch (const std::exception& e) {
            errors[k] = e.what();
        }
    };
    if (opts.parallel) {
#pragma omp parallel for schedule(dynamic)
        for (long k = 0; k < static_cast<long>(rows.size()); ++k) run(static_cast<std::size_t>(k));
    } else {
        for (std::size_t k = 0; k < rows.size(); ++k) run(k);
    }
    for (std::size_t k = 0; k < rows.size(); ++k)
        if (!errors[k].empty()) throw ConvergenceError("oracle for record " + std::to_string(rows[k]) + ": " + errors[k]);
    return out;
}

nlohmann::json oracle_to_json(const std::vector<OracleResult>& rows) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& r : rows)
        a.push_back({{"f_nadir", r.f_nadir}, {"t_nadir", r.t_nadir}, {"f_final", r.f_final},
                     {"boundary_minimum", r.boundary_minimum}});
    return {{"oracle", a}};
}

std::vector<OracleResult> oracle_from_json(const nlohmann::json& doc) {
    try {
        std::vector<OracleResult> out;
        for (const auto& r : doc.at("oracle"))
            out.push_back({r.at("f_nadir").get<double>(), r.at("t_nadir").get<double>(), r.value("f_final", 0.0),
                           r.value("boundary_minimum", false)});
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("oracle file: ") + e.what());
    }
}

}  // namespace sfr
