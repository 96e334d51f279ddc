// sfr: command-line front end for the frequency-response toolkit.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <omp.h>

#include <CLI11.hpp>

#include "sfr/pipeline.hpp"

namespace fs = std::filesystem;
using namespace sfr;

namespace {

constexpr const char* kVersion = "1.0.0";

// Outputs are written to temporary siblings and renamed once the command
// succeeds; anything left over is removed on failure.
class Outputs {
public:
    fs::path add(const fs::path& final_path) {
        const fs::path tmp = final_path.string() + ".partial";
        items_.push_back({final_path, tmp});
        return tmp;
    }
    void commit() {
        for (const auto& [dst, tmp] : items_) {
            if (!fs::exists(tmp)) continue;
            if (fs::is_directory(dst)) fs::remove_all(dst);
            fs::rename(tmp, dst);
        }
        items_.clear();
    }
    ~Outputs() {
        std::error_code ec;
        for (const auto& item : items_) fs::remove_all(item.second, ec);
    }
    const std::vector<std::pair<fs::path, fs::path>>& items() const { return items_; }

private:
    std::vector<std::pair<fs::path, fs::path>> items_;
};

std::string file_hash(const fs::path& p) {
    if (fs::is_directory(p)) {
        const fs::path index = p / "index.json";
        return fs::exists(index) ? file_hash(index) : "";
    }
    std::ifstream in(p, std::ios::binary);
    if (!in) return "";
    std::stringstream ss;
    ss << in.rdbuf();
    return fnv1a_hex(ss.str());
}

struct Manifest {
    std::vector<std::string> argv;
    std::vector<fs::path> inputs;
    std::optional<std::uint64_t> seed;
    nlohmann::json extra = nlohmann::json::object();

    // The manifest sits next to the first output (inside it for directories).
    void write(Outputs& outs) const {
        if (outs.items().empty()) return;
        const auto [dst, tmp] = outs.items().front();
        nlohmann::json doc;
        doc["tool"] = "sfr";
        doc["version"] = kVersion;
        doc["argv"] = argv;
        nlohmann::json in = nlohmann::json::array();
        for (const auto& p : inputs) in.push_back({{"path", p.string()}, {"fnv1a", file_hash(p)}});
        doc["inputs"] = in;
        // Null when the command draws no random numbers.
        doc["seed"] = seed ? nlohmann::json(*seed) : nlohmann::json(nullptr);
        doc["threads"] = omp_get_max_threads();
        doc["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                       std::to_string(EIGEN_MINOR_VERSION);
        doc["details"] = extra;
        const fs::path path = fs::is_directory(tmp) ? tmp / "manifest.json"
                                                    : outs.add(fs::path(dst.string() + ".manifest.json"));
        std::ofstream out(path);
        out << doc.dump(1) << '\n';
        if (!out) throw Error("write failed for " + path.string());
    }
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
    if (!out) throw Error("write failed for " + path.string());
}

nlohmann::json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return nlohmann::json::parse(ss.str());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

// Loads the case and, when a commitment is given, applies it at the nominal
// dispatch.
GridCase load_state(const fs::path& case_path, const std::string& commitment) {
    GridCase g = load_case(case_path);
    if (!commitment.empty()) g = nominal_dispatch(apply_commitment_with_slack_transfer(g, commitment_from_key(commitment)));
    return g;
}

LoadStepSpec parse_load_step(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) throw ParseError("load step must read BUS:MW, got '" + text + "'");
    try {
        return {std::stoi(text.substr(0, colon)), std::stod(text.substr(colon + 1))};
    } catch (const std::exception&) {
        throw ParseError("load step must read BUS:MW, got '" + text + "'");
    }
}

ModeSelection make_selection(const std::string& ranking, int mu, double fraction) {
    ModeSelection sel;
    sel.ranking = mode_ranking_from_string(ranking);
    sel.mu_target = mu;
    if (fraction > 0.0) sel.participation_fraction = fraction;
    return sel;
}

nlohmann::json complex_json(const std::vector<Complex>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& c : v) a.push_back({c.real(), c.imag()});
    return a;
}

std::string svg_bars(const std::vector<NadirPair>& pairs) {
    const double w = 60.0 + 40.0 * static_cast<double>(pairs.size()), h = 320.0;
    double lo = 1e300, hi = -1e300;
    for (const auto& p : pairs) {
        lo = std::min({lo, p.f_pred, p.f_true});
        hi = std::max({hi, p.f_pred, p.f_true});
    }
    if (!(hi > lo)) hi = lo + 1.0;
    const double pad = 0.1 * (hi - lo);
    lo -= pad;
    auto y = [&](double f) { return 20.0 + (h - 60.0) * (1.0 - (f - lo) / (hi - lo)); };
    std::ostringstream s;
    s << std::fixed << std::setprecision(2);
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
    s << "<text x=\"10\" y=\"14\" font-size=\"12\">nadir (Hz): predicted (blue) vs actual (grey)</text>\n";
    for (std::size_t j = 0; j < pairs.size(); ++j) {
        const double x0 = 50.0 + 40.0 * static_cast<double>(j);
        s << "<rect x=\"" << x0 << "\" y=\"" << y(pairs[j].f_true) << "\" width=\"15\" height=\""
          << y(lo) - y(pairs[j].f_true) << "\" fill=\"#999\"/>\n";
        s << "<rect x=\"" << x0 + 16 << "\" y=\"" << y(pairs[j].f_pred) << "\" width=\"15\" height=\""
          << y(lo) - y(pairs[j].f_pred) << "\" fill=\"#36c\"/>\n";
        s << "<text x=\"" << x0 + 8 << "\" y=\"" << h - 20 << "\" font-size=\"10\">" << j + 1 << "</text>\n";
    }
    s << std::setprecision(3) << "<text x=\"2\" y=\"" << y(hi) << "\" font-size=\"10\">" << hi << "</text>\n";
    s << "<text x=\"2\" y=\"" << y(lo) << "\" font-size=\"10\">" << lo << "</text>\n</svg>\n";
    return s.str();
}

std::vector<std::pair<double, double>> record_targets(const std::vector<DatasetRecord>& recs,
                                                      const std::vector<std::size_t>& rows, double f0) {
    std::vector<std::pair<double, double>> y;
    for (auto r : rows) {
        const auto n = record_nadir(recs[r], f0);
        y.emplace_back(n.f_nadir, n.t_nadir);
    }
    return y;
}

std::vector<std::size_t> stable_rows(const std::vector<DatasetRecord>& recs) {
    std::vector<std::size_t> rows;
    for (std::size_t k = 0; k < recs.size(); ++k)
        if (recs[k].stable) rows.push_back(k);
    if (rows.empty()) throw ValidationError("dataset has no stable records");
    return rows;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Frequency-response assessment toolkit: simulation, modal analysis and set-based estimation"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);
    const char* env_config = std::getenv("SFR_CONFIG");
    app.set_config("--config", env_config ? env_config : "", "INI/TOML file with default option values (env SFR_CONFIG)");
    int jobs = 0;
    app.add_option("--jobs,-j", jobs, "Worker threads (default: all cores)")->check(CLI::NonNegativeNumber);

    Manifest manifest;
    manifest.argv.assign(argv, argv + argc);
    Outputs outs;
    std::function<void()> action;

    // Common option holders.
    std::string case_path, commitment, out_path, bank_path, model_path, data_path, report_path, oracle_path;
    std::string trip_model_s = "post-trip", ranking_s = "coi-response";
    int mu = 12;
    double fraction = 0.0;
    std::uint64_t seed = 1;

    auto add_case = [&](CLI::App* c, bool commit = true) {
        c->add_option("--case", case_path, "Case file (JSON)")->required()->check(CLI::ExistingFile);
        if (commit) c->add_option("--commitment", commitment, "Commitment bit string, applied at nominal dispatch");
    };
    auto add_selection = [&](CLI::App* c) {
        c->add_option("--mu", mu, "Target number of modes (0 keeps all)")->check(CLI::NonNegativeNumber);
        c->add_option("--ranking", ranking_s, "Mode ranking: coi-response or participation");
        c->add_option("--fraction", fraction, "Stop at this fraction of the total ranking score instead of --mu");
    };

    // case validate
    auto* case_cmd = app.add_subcommand("case", "Case file utilities");
    case_cmd->require_subcommand(1);
    auto* validate_cmd = case_cmd->add_subcommand("validate", "Parse and validate a case file");
    add_case(validate_cmd, false);
    validate_cmd->callback([&] {
        action = [&] {
            const GridCase g = load_case(case_path);
            validate_case(g);
            std::cout << g.name << ": " << g.n_buses() << " buses, " << g.branches.size() << " branches, "
                      << g.n_machines() << " machines, committed capacity " << g.committed_capacity_mw()
                      << " MW, hash " << case_hash(g) << "\nok\n";
        };
    });

    // powerflow
    auto* pf_cmd = app.add_subcommand("powerflow", "Solve the power flow and initialise the dynamic equilibrium");
    add_case(pf_cmd);
    pf_cmd->add_option("--out,-o", out_path, "Write the operating point as JSON");
    pf_cmd->callback([&] {
        action = [&] {
            manifest.inputs = {case_path};
            const GridCase g = load_state(case_path, commitment);
            const OperatingPoint op = solve_equilibrium(g);
            std::cout << "converged in " << op.iterations << " iterations, mismatch " << op.max_mismatch << " pu\n";
            std::cout << "  bus      V pu   theta deg\n" << std::fixed;
            for (std::size_t b = 0; b < g.buses.size(); ++b)
                std::cout << std::setw(5) << g.buses[b].id << std::setprecision(5) << std::setw(10) << op.v[b]
                          << std::setprecision(3) << std::setw(12) << op.theta[b] * 180.0 / 3.14159265358979323846
                          << '\n';
            std::cout << "  machine        P MW     Q Mvar\n";
            for (std::size_t i = 0; i < g.machines.size(); ++i)
                std::cout << "  " << std::setw(8) << std::left << g.machines[i].name << std::right << std::setw(11)
                          << op.p_gen[i] * g.base_mva << std::setw(11) << op.q_gen[i] * g.base_mva << '\n';
            if (!out_path.empty()) write_text(outs.add(out_path), operating_point_to_json(g, op).dump(1) + "\n");
        };
    });

    // simulate
    auto* sim_cmd = app.add_subcommand("simulate", "Time-domain simulation of a disturbance");
    add_case(sim_cmd);
    int trip = -1;
    std::string load_step_s;
    bool all_trips = false;
    SimulationOptions sim_opts;
    double event_time = 1.0;
    std::string csv_path;
    sim_cmd->add_option("--trip", trip, "Machine position to trip");
    sim_cmd->add_option("--load-step", load_step_s, "Load step BUS:MW");
    sim_cmd->add_flag("--all-trips", all_trips, "Simulate every committed-unit trip and write an oracle file");
    sim_cmd->add_option("--dt", sim_opts.dt, "Step size, s")->check(CLI::PositiveNumber);
    sim_cmd->add_option("--horizon", sim_opts.horizon, "Simulated time after the event, s")->check(CLI::PositiveNumber);
    sim_cmd->add_option("--event-time", event_time, "Event time, s")->check(CLI::NonNegativeNumber);
    sim_cmd->add_option("--csv", csv_path, "Write the trajectory as CSV (single disturbance)");
    sim_cmd->add_option("--out,-o", out_path, "Write the nadir summary (oracle file with --all-trips)");
    sim_cmd->callback([&] {
        action = [&] {
            manifest.inputs = {case_path};
            const GridCase g = load_state(case_path, commitment);
            OracleOptions oo;
            oo.sim = sim_opts;
            oo.event_time = event_time;
            if (all_trips) {
                const auto xs = generate_disturbances(g, solve_power_flow(g));
                const auto res = oracle_batch(g, xs, oo);
                std::cout << "  j   machine      dP MW   f_nadir Hz  t_nadir s\n" << std::fixed;
                for (std::size_t j = 0; j < xs.size(); ++j)
                    std::cout << std::setw(3) << j + 1 << std::setw(10) << g.machines[xs[j].index].name
                              << std::setprecision(2) << std::setw(11) << xs[j].delta_p_mw << std::setprecision(4)
                              << std::setw(13) << res[j].f_nadir << std::setprecision(3) << std::setw(11)
                              << res[j].t_nadir << '\n';
                if (!out_path.empty()) write_text(outs.add(out_path), oracle_to_json(res).dump(1) + "\n");
                return;
            }
            std::optional<DisturbanceEvent> ev;
            if (trip >= 0 && !load_step_s.empty()) throw ValidationError("give either --trip or --load-step");
            const OperatingPoint op = solve_equilibrium(g);
            if (trip >= 0) ev = to_event(g, {op.p_gen.at(trip) * g.base_mva, 0, trip}, event_time);
            if (!load_step_s.empty()) {
                const auto ls = parse_load_step(load_step_s);
                ev = to_event(g, {ls.delta_p_mw, 1, ls.bus_id}, event_time);
            }
            const Trajectory traj = simulate(g, op, ev, sim_opts);
            const NadirMeasurement m = measure_trajectory_nadir(traj);
            std::cout << std::fixed << std::setprecision(4) << "f_nadir " << m.f_nadir << " Hz at t = " << m.t_nadir
                      << " s after the event, final " << traj.f_coi.back() << " Hz\n";
            if (!csv_path.empty()) write_trajectory_csv(traj, outs.add(csv_path));
            if (!out_path.empty())
                write_text(outs.add(out_path),
                           oracle_to_json({{m.f_nadir, m.t_nadir, traj.f_coi.back(), m.boundary_minimum}}).dump(1) +
                               "\n");
        };
    });

    // linearize
    auto* lin_cmd = app.add_subcommand("linearize", "Reduced state matrix at the equilibrium");
    add_case(lin_cmd);
    lin_cmd->add_option("--out,-o", out_path, "Write A and the state names as JSON")->required();
    lin_cmd->callback([&] {
        action = [&] {
            manifest.inputs = {case_path};
            const GridCase g = load_state(case_path, commitment);
            const OperatingPoint op = solve_equilibrium(g);
            const StateSpace ss = linearize(g, op);
            nlohmann::json a = nlohmann::json::array();
            for (Eigen::Index r = 0; r < ss.a.rows(); ++r) {
                std::vector<double> row(ss.a.cols());
                for (Eigen::Index c = 0; c < ss.a.cols(); ++c) row[c] = ss.a(r, c);
                a.push_back(row);
            }
            nlohmann::json names = nlohmann::json::array();
            for (const auto& s : ss.layout.states) names.push_back(g.machines[s.machine].name + "." + s.name);
            write_text(outs.add(out_path),
                       nlohmann::json{{"states", names}, {"a", a}, {"j4_condition", ss.j4_condition}}.dump() + "\n");
            std::cout << ss.a.rows() << " states, cond(J4) = " << ss.j4_condition << '\n';
        };
    });

    // modes
    auto* modes_cmd = app.add_subcommand("modes", "Eigenvalues and the selected frequency modes");
    add_case(modes_cmd);
    add_selection(modes_cmd);
    modes_cmd->add_option("--out,-o", out_path, "Write the modal structure as JSON");
    modes_cmd->callback([&] {
        action = [&] {
            manifest.inputs = {case_path};
            const GridCase g = load_state(case_path, commitment);
            const BuiltStructure b = build_modal_structure(g, make_selection(ranking_s, mu, fraction));
            std::cout << "mu = " << b.structure.mu() << ", max Re(lambda) = " << b.max_real << '\n'
                      << "     Re lambda     Im lambda     f Hz   damping    score\n";
            for (int i = 0; i < b.structure.mu(); ++i) {
                const Complex l = b.structure.lambda[i];
                std::cout << std::scientific << std::setprecision(4) << std::setw(14) << l.real() << std::setw(14)
                          << l.imag() << std::fixed << std::setw(9) << std::abs(l.imag()) / (2 * 3.14159265358979323846)
                          << std::setw(10) << -l.real() / std::abs(l) << std::scientific << std::setw(11)
                          << b.structure.score[i] << '\n';
            }
            if (!out_path.empty()) write_text(outs.add(out_path), modal_structure_to_json(b.structure).dump() + "\n");
        };
    });

    // gamma
    auto* gamma_cmd = app.add_subcommand("gamma", "Analytic modal coefficients and nadir for one disturbance");
    add_case(gamma_cmd);
    add_selection(gamma_cmd);
    double dp = 0.0;
    gamma_cmd->add_option("--trip", trip, "Machine position to trip");
    gamma_cmd->add_option("--load-step", load_step_s, "Load step BUS:MW");
    gamma_cmd->add_option("--dp", dp, "Trip magnitude in MW (default: the unit's output)");
    gamma_cmd->add_option("--trip-model", trip_model_s, "post-trip or pre-trip");
    gamma_cmd->add_option("--out,-o", out_path, "Write lambda, gamma and the nadir as JSON");
    gamma_cmd->callback([&] {
        action = [&] {
            manifest.inputs = {case_path};
            const GridCase g = load_state(case_path, commitment);
            const TripModel tm = trip_model_from_string(trip_model_s);
            Disturbance x;
            if (trip >= 0) {
                const OperatingPoint pf = solve_power_flow(g);
                x = {dp > 0.0 ? dp : pf.p_gen.at(trip) * g.base_mva, 0, trip};
            } else if (!load_step_s.empty()) {
                const auto ls = parse_load_step(load_step_s);
                x = {ls.delta_p_mw, 1, ls.bus_id};
            } else {
                throw ValidationError("give --trip or --load-step");
            }
            GridCase sg = g;
            sg.u_on = structure_commitment(g.u_on, x, tm);
            const BuiltStructure b = build_modal_structure(sg, make_selection(ranking_s, mu, fraction));
            const DeltaX0 dx = post_disturbance_equilibrium(g, to_event(g, x), tm);
            const auto gamma = modal_coefficients(b.structure, dx).gamma;
            const NadirResult nr = nadir_polynomial(b.structure.lambda, gamma, g.f0_hz, dx.f_e);
            std::cout << std::fixed << std::setprecision(4) << "dP = " << x.delta_p_mw << " MW, f_e = " << dx.f_e
                      << " Hz, nadir " << nr.f_nadir << " Hz at " << nr.t_nadir << " s"
                      << (nr.polynomial_fallback ? " (scan)" : "") << "\n            lambda                   gamma\n";
            for (int i = 0; i < b.structure.mu(); ++i)
                std::cout << std::scientific << std::setprecision(4) << std::setw(12) << b.structure.lambda[i].real()
                          << std::setw(12) << b.structure.lambda[i].imag() << std::setw(13) << gamma[i].real()
                          << std::setw(12) << gamma[i].imag() << '\n';
            if (!out_path.empty())
                write_text(outs.add(out_path), nlohmann::json{{"lambda", complex_json(b.structure.lambda)},
                                                              {"gamma", complex_json(gamma)},
                                                              {"f_e", dx.f_e},
                                                              {"f_nadir", nr.f_nadir},
                                                              {"t_nadir", nr.t_nadir}}
                                                       .dump(1) + "\n");
        };
    });

    // bank build
    auto* bank_cmd = app.add_subcommand("bank", "Eigenvalue bank");
    bank_cmd->require_subcommand(1);
    auto* bank_build = bank_cmd->add_subcommand("build", "Build a bank for a list of commitments");
    add_case(bank_build, false);
    add_selection(bank_build);
    std::string commitments_path;
    int random_count = 0, min_on = 1;
    bool post_trip = true, serial = false;
    bank_build->add_option("--commitments", commitments_path, "File with one commitment bit string per line")
        ->check(CLI::ExistingFile);
    bank_build->add_option("--random", random_count, "Draw this many random commitments instead");
    bank_build->add_option("--min-on", min_on, "Minimum committed units for random commitments");
    bank_build->add_option("--seed", seed, "Seed for random commitments");
    bank_build->add_flag("--post-trip,!--no-post-trip", post_trip,
                           "Also store every single-unit-trip commitment (default on)");
    bank_build->add_flag("--serial", serial, "Use the serial reference loop");
    bank_build->add_option("--out,-o", out_path, "Bank directory")->required();
    bank_build->callback([&] {
        action = [&] {
            const GridCase g = load_case(case_path);
            manifest.inputs = {case_path};
            std::vector<Commitment> list;
            if (!commitments_path.empty()) {
                list = read_commitment_list(commitments_path, static_cast<int>(g.n_machines()));
                manifest.inputs.push_back(commitments_path);
            } else if (random_count > 0) {
                list = random_commitments(static_cast<int>(g.n_machines()), random_count, min_on, seed);
                manifest.seed = seed;
            } else {
                list = {g.u_on};
            }
            if (post_trip) list = with_post_trip_commitments(list);
            const LambdaBank bank = build_lambda_bank(g, list, make_selection(ranking_s, mu, fraction), !serial);
            save_bank(bank, outs.add(out_path));
            std::cout << bank.entries.size() << " structures, " << bank.failures.size() << " failures\n";
            for (const auto& f : bank.failures) std::cout << "  failed " << f.key << ": " << f.message << '\n';
        };
    });

    // gen-data
    auto* gen_cmd = app.add_subcommand("gen-data", "Collect (lambda, disturbance, gamma) records");
    add_case(gen_cmd, false);
    std::string alpha_s = "0.35:0.05:0.95";
    gen_cmd->add_option("--bank", bank_path, "Bank directory")->required()->check(CLI::ExistingDirectory);
    gen_cmd->add_option("--commitments", commitments_path, "Commitment list (default: the case commitment)")
        ->check(CLI::ExistingFile);
    gen_cmd->add_option("--alpha", alpha_s, "Scaling factors, start:step:stop or a comma list");
    gen_cmd->add_option("--trip-model", trip_model_s, "post-trip or pre-trip");
    gen_cmd->add_flag("--serial", serial, "Use the serial reference loop");
    gen_cmd->add_option("--out,-o", out_path, "Dataset file (JSON lines)")->required();
    gen_cmd->callback([&] {
        action = [&] {
            const GridCase g = load_case(case_path);
            manifest.inputs = {case_path, bank_path};
            std::vector<Commitment> list{g.u_on};
            if (!commitments_path.empty()) {
                list = read_commitment_list(commitments_path, static_cast<int>(g.n_machines()));
                manifest.inputs.push_back(commitments_path);
            }
            const LambdaBank bank = load_bank(bank_path);
            if (bank.case_hash != case_hash(g)) throw ValidationError("bank was built for a different case");
            const auto alpha = parse_alpha_grid(alpha_s);
            std::cout << alpha.size() << " scaling factors:";
            for (double a : alpha) std::cout << ' ' << a;
            std::cout << '\n';
            CollectOptions co;
            co.trip_model = trip_model_from_string(trip_model_s);
            co.parallel = !serial;
            const auto recs = collect_dataset(g, list, alpha, bank, co);
            std::size_t stable = 0;
            for (const auto& r : recs) stable += r.stable;
            write_dataset(recs, outs.add(out_path));
            std::cout << recs.size() << " records, " << stable << " stable\n";
            manifest.extra["alpha"] = alpha;
        };
    });

    // train
    auto* train_cmd = app.add_subcommand("train", "Train the set-based coefficient estimator");
    ModelShape shape;
    TrainConfig tcfg;
    std::string activation_s = "softplus", history_path;
    bool padded = false;
    train_cmd->add_option("--data", data_path, "Dataset file")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--d", shape.d, "Hidden width")->check(CLI::PositiveNumber);
    train_cmd->add_option("--encoder-layers", shape.encoder_layers, "Encoder depth")->check(CLI::PositiveNumber);
    train_cmd->add_option("--decoder-layers", shape.decoder_layers, "Decoder depth")->check(CLI::PositiveNumber);
    train_cmd->add_option("--activation", activation_s, "softplus, silu, tanh or relu");
    train_cmd->add_option("--dropout", tcfg.dropout, "Dropout rate");
    train_cmd->add_option("--loss-alpha", tcfg.alpha, "Magnitude loss weight");
    train_cmd->add_option("--loss-beta", tcfg.beta, "Angle loss weight");
    train_cmd->add_option("--lr", tcfg.learning_rate, "Learning rate");
    train_cmd->add_option("--epochs", tcfg.epochs, "Epochs");
    train_cmd->add_option("--batch", tcfg.batch_size, "Batch size");
    train_cmd->add_option("--seed", tcfg.seed, "Seed for initialisation, split and shuffling");
    train_cmd->add_option("--validation", tcfg.validation_fraction, "Validation fraction");
    train_cmd->add_flag("--padded", padded, "Zero-pad mode sets to the largest size (automatic when sizes differ)");
    train_cmd->add_option("--history", history_path, "Write per-epoch losses as CSV");
    train_cmd->add_option("--out,-o", out_path, "Model file")->required();
    train_cmd->callback([&] {
        action = [&] {
            manifest.inputs = {data_path};
            manifest.seed = tcfg.seed;
            validate_train_config(tcfg);
            shape.activation = activation_from_string(activation_s);
            shape.dropout = tcfg.dropout;
            const auto recs = read_dataset(data_path);
            const auto rows = stable_rows(recs);
            int m_max = 0, m_min = 1 << 30;
            for (auto r : rows) {
                m_max = std::max(m_max, static_cast<int>(recs[r].lambda.size()));
                m_min = std::min(m_min, static_cast<int>(recs[r].lambda.size()));
            }
            const bool pad = padded || m_min != m_max;
            const int n_g = static_cast<int>(recs[rows[0]].u_on.size());
            auto [tr, va] = split_indices(rows.size(), 1.0 - tcfg.validation_fraction, tcfg.seed);
            for (auto& k : tr) k = rows[k];
            for (auto& k : va) k = rows[k];
            const Normalization stats = fit_record_normalization(recs, tr);
            const auto s_tr = encode_records(recs, tr, stats, m_max, n_g, pad);
            const auto s_va = encode_records(recs, va, stats, m_max, n_g, pad);
            EquivariantModel model = init_model(m_max, n_g, shape, tcfg.seed, pad);
            model.stats = stats;
            const TrainResult res = train(model, s_tr, s_va, tcfg);
            save_model(res.model, outs.add(out_path));
            if (!history_path.empty()) {
                std::ostringstream csv;
                csv << "epoch,train_loss,validation_loss\n" << std::setprecision(10);
                for (const auto& h : res.history)
                    csv << h.epoch << ',' << h.train_loss << ',' << h.validation_loss << '\n';
                write_text(outs.add(history_path), csv.str());
            }
            std::cout << s_tr.size() << " training / " << s_va.size() << " validation samples, M = " << m_max
                      << (pad ? " (padded)" : "") << ", " << res.model.parameter_count() << " parameters\n"
                      << "best validation loss " << res.best_validation << " at epoch " << res.best_epoch + 1 << '\n';
            manifest.extra["split_train"] = tr.size();
            manifest.extra["split_validation"] = va.size();
        };
    });

    // assess
    auto* assess_cmd = app.add_subcommand("assess", "Nadir estimates for every disturbance of the current state");
    add_case(assess_cmd);
    bool analytic = false;
    std::vector<std::string> load_steps_s;
    std::string table_csv;
    assess_cmd->add_option("--bank", bank_path, "Bank directory")->required()->check(CLI::ExistingDirectory);
    assess_cmd->add_option("--model", model_path, "Model file (estimated mode)")->check(CLI::ExistingFile);
    assess_cmd->add_flag("--analytic", analytic, "Use analytic coefficients instead of the model");
    assess_cmd->add_option("--trip-model", trip_model_s, "post-trip or pre-trip");
    assess_cmd->add_option("--load-step", load_steps_s, "Extra load step BUS:MW (repeatable)");
    assess_cmd->add_flag("--serial", serial, "Use the serial reference loop");
    assess_cmd->add_option("--csv", table_csv, "Write the rows as CSV");
    assess_cmd->add_option("--out,-o", out_path, "Report file (JSON)");
    assess_cmd->callback([&] {
        action = [&] {
            manifest.inputs = {case_path, bank_path};
            const GridCase g = load_state(case_path, commitment);
            const LambdaBank bank = load_bank(bank_path);
            std::optional<EquivariantModel> model;
            if (!analytic) {
                if (model_path.empty()) throw ValidationError("estimated mode needs --model (or use --analytic)");
                model = load_model(model_path);
                manifest.inputs.push_back(model_path);
            }
            AssessOptions ao;
            ao.analytic = analytic;
            ao.trip_model = trip_model_from_string(trip_model_s);
            ao.parallel = !serial;
            for (const auto& s : load_steps_s) ao.load_steps.push_back(parse_load_step(s));
            const AssessmentReport report = assess(g, bank, model ? &*model : nullptr, ao);
            std::cout << report_table(report);
            if (!out_path.empty()) write_text(outs.add(out_path), report_to_json(report).dump(1) + "\n");
            if (!table_csv.empty()) {
                std::ostringstream csv;
                csv << "dp_mw,type,index,f_nadir,t_nadir,f_e\n" << std::setprecision(12);
                for (const auto& r : report.rows)
                    csv << r.x.delta_p_mw << ',' << r.x.type << ',' << r.x.index << ',' << r.f_nadir << ','
                        << r.t_nadir << ',' << r.f_e << '\n';
                write_text(outs.add(table_csv), csv.str());
            }
        };
    });

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Compare a report against a time-domain oracle");
    std::string plot_path;
    eval_cmd->add_option("--report", report_path, "Report file")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--oracle", oracle_path, "Oracle file (simulate --all-trips)")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--plot", plot_path, "Predicted vs actual nadir bars (.svg or .csv)");
    eval_cmd->add_option("--out,-o", out_path, "Metrics file (JSON)");
    eval_cmd->callback([&] {
        action = [&] {
            manifest.inputs = {report_path, oracle_path};
            const Metrics m =
                evaluate_metrics(report_from_json(read_json(report_path)), oracle_from_json(read_json(oracle_path)));
            std::cout << metrics_table(m);
            if (!out_path.empty()) write_text(outs.add(out_path), metrics_to_json(m).dump(1) + "\n");
            if (!plot_path.empty()) {
                if (fs::path(plot_path).extension() == ".svg") {
                    write_text(outs.add(plot_path), svg_bars(m.residuals));
                } else {
                    std::ostringstream csv;
                    csv << "j,f_pred,f_true,t_pred,t_true\n" << std::setprecision(12);
                    for (std::size_t j = 0; j < m.residuals.size(); ++j)
                        csv << j + 1 << ',' << m.residuals[j].f_pred << ',' << m.residuals[j].f_true << ','
                            << m.residuals[j].t_pred << ',' << m.residuals[j].t_true << '\n';
                    write_text(outs.add(plot_path), csv.str());
                }
            }
        };
    });

    // baseline
    auto* base_cmd = app.add_subcommand("baseline", "Feed-forward regressor on direct grid measurements");
    base_cmd->require_subcommand(1);
    auto* base_train = base_cmd->add_subcommand("train", "Fit (f_nadir, t_nadir) from measurement features");
    BaselineConfig bcfg;
    std::string hidden_s = "64,64";
    base_train->add_option("--data", data_path, "Dataset file")->required()->check(CLI::ExistingFile);
    base_train->add_option("--case", case_path, "Case file (system base and nominal frequency)")
        ->required()
        ->check(CLI::ExistingFile);
    base_train->add_option("--hidden", hidden_s, "Hidden widths, comma separated");
    base_train->add_option("--activation", activation_s, "softplus, silu, tanh or relu");
    base_train->add_option("--lr", bcfg.learning_rate, "Learning rate");
    base_train->add_option("--epochs", bcfg.epochs, "Epochs");
    base_train->add_option("--batch", bcfg.batch_size, "Batch size (0 = full batch)");
    base_train->add_option("--seed", bcfg.seed, "Seed");
    base_train->add_option("--out,-o", out_path, "Baseline model file")->required();
    base_train->callback([&] {
        action = [&] {
            manifest.inputs = {data_path, case_path};
            manifest.seed = bcfg.seed;
            const GridCase g = load_case(case_path);
            bcfg.activation = activation_from_string(activation_s);
            bcfg.hidden.clear();
            std::stringstream ss(hidden_s);
            for (std::string item; std::getline(ss, item, ',');) bcfg.hidden.push_back(std::stoi(item));
            const auto recs = read_dataset(data_path);
            const auto rows = stable_rows(recs);
            std::vector<std::vector<double>> x;
            for (auto r : rows) x.push_back(baseline_features(recs[r], g.base_mva));
            const auto res = baseline_train(x, record_targets(recs, rows, g.f0_hz), bcfg);
            save_baseline(res.model, outs.add(out_path));
            std::cout << rows.size() << " samples, " << x.front().size() << " features, final loss "
                      << res.loss.back() << '\n';
        };
    });
    auto* base_eval = base_cmd->add_subcommand("eval", "Baseline predictions against the time-domain oracle");
    base_eval->add_option("--model", model_path, "Baseline model file")->required()->check(CLI::ExistingFile);
    base_eval->add_option("--data", data_path, "Dataset file")->required()->check(CLI::ExistingFile);
    base_eval->add_option("--case", case_path, "Case file")->required()->check(CLI::ExistingFile);
    base_eval->add_option("--out,-o", out_path, "Metrics file (JSON)");
    base_eval->callback([&] {
        action = [&] {
            manifest.inputs = {model_path, data_path, case_path};
            const GridCase g = load_case(case_path);
            const BaselineModel bm = load_baseline(model_path);
            const auto recs = read_dataset(data_path);
            const auto rows = stable_rows(recs);
            std::vector<std::vector<double>> x;
            for (auto r : rows) x.push_back(baseline_features(recs[r], g.base_mva));
            const auto pred = baseline_predict(bm, x);
            const auto oracle = oracle_for_records(g, recs, rows);
            std::vector<NadirPair> pairs;
            for (std::size_t k = 0; k < rows.size(); ++k)
                pairs.push_back({pred[k].first, pred[k].second, oracle[k].f_nadir, oracle[k].t_nadir});
            const Metrics m = evaluate_metrics(pairs);
            std::cout << metrics_table(m);
            if (!out_path.empty()) write_text(outs.add(out_path), metrics_to_json(m).dump(1) + "\n");
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }
    if (jobs > 0) omp_set_num_threads(jobs);
    try {
        action();
        manifest.write(outs);
        outs.commit();
        return 0;
    } catch (const sfr::Error& e) {
        std::cerr << "error: " << e.kind() << ": " << e.what() << '\n';
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: io: " << e.what() << '\n';
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << '\n';
    }
    return 1;
}
