#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "sfr/pipeline.hpp"

namespace sfr {

std::string case_hash(const GridCase& grid) {
    GridCase g = grid;
    for (auto& m : g.machines) m.p_mw = 0.0;
    std::fill(g.u_on.begin(), g.u_on.end(), 1);
    auto doc = case_to_json(g);
    doc.erase("name");
    return fnv1a_hex(doc.dump());
}

std::vector<double> layout_inertia(const GridCase& grid, const StateLayout& layout) {
    std::vector<double> h;
    for (const auto& blk : layout.blocks) {
        const auto& m = grid.machines[blk.machine];
        h.push_back(m.h * m.mva_base / grid.base_mva);
    }
    return h;
}

BuiltStructure build_modal_structure(const GridCase& grid, const ModeSelection& sel) {
    const GridCase g = nominal_dispatch(apply_commitment_with_slack_transfer(grid, grid.u_on));
    const OperatingPoint op = solve_equilibrium(g);
    const EigenStructure eig = eigendecompose(linearize(g, op));
    const auto inertia = layout_inertia(g, op.layout);

    BuiltStructure out;
    // Small structures with fewer modes than the target keep all of them.
    if (sel.mu_target == 0 || (!sel.participation_fraction && sel.mu_target >= eig.lambda.size())) {
        out.structure = all_modes(eig, op.layout, inertia, g.u_on, sel.drift_threshold);
    } else {
        ModeSelection s = sel;
        if (s.ranking == ModeRanking::CoiResponse && s.reference.size() == 0) s.reference = unit_deviation(g, op.layout);
        out.structure = select_frequency_modes(eig, op.layout, inertia, g.u_on, s);
    }
    out.max_real = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < eig.lambda.size(); ++i)
        if (std::abs(eig.lambda[i]) >= sel.drift_threshold) out.max_real = std::max(out.max_real, eig.lambda[i].real());
    return out;
}

namespace {

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

LambdaBank build_lambda_bank(const GridCase& grid, const std::vector<Commitment>& commitments,
                             const ModeSelection& sel, bool parallel) {
    std::vector<Commitment> unique;
    std::set<std::string> seen;
    for (const auto& u : commitments)
        if (seen.insert(commitment_key(u)).second) unique.push_back(u);

    const int n = static_cast<int>(unique.size());
    std::vector<std::optional<BuiltStructure>> built(n);
    std::vector<std::string> errors(n);
    auto task = [&](int k) {
        try {
            GridCase g = grid;
            g.u_on = unique[k];
            built[k] = build_modal_structure(g, sel);
        } catch (const std::exception& e) {
            errors[k] = e.what();
        }
    };
    if (parallel) {
#pragma omp parallel for schedule(dynamic)
        for (int k = 0; k < n; ++k) task(k);
    } else {
        for (int k = 0; k < n; ++k) task(k);
    }

    LambdaBank bank;
    bank.case_name = grid.name;
    bank.case_hash = case_hash(grid);
    bank.created = utc_now();
    bank.ranking = sel.ranking;
    bank.mu_target = sel.mu_target;
    for (int k = 0; k < n; ++k) {
        const std::string key = commitment_key(unique[k]);
        if (built[k])
            bank.entries[key] = {std::move(built[k]->structure), built[k]->max_real};
        else
            bank.failures.push_back({key, errors[k]});
    }
    return bank;
}

std::vector<Commitment> with_post_trip_commitments(const std::vector<Commitment>& commitments) {
    std::vector<Commitment> out;
    std::set<std::string> seen;
    auto add = [&](const Commitment& u) {
        if (seen.insert(commitment_key(u)).second) out.push_back(u);
    };
    for (const auto& u : commitments) add(u);
    for (const auto& u : commitments) {
        if (std::count(u.begin(), u.end(), 1) < 2) continue;
        for (std::size_t i = 0; i < u.size(); ++i) {
            if (!u[i]) continue;
            Commitment v = u;
            v[i] = 0;
            add(v);
        }
    }
    return out;
}

const BankEntry& lookup_bank(const LambdaBank& bank, const Commitment& u_on) {
    if (bank.entries.empty()) throw LookupError("empty eigenvalue bank");
    const std::string key = commitment_key(u_on);
    const auto it = bank.entries.find(key);
    if (it == bank.entries.end()) throw LookupError("no bank entry for commitment " + key);
    return it->second;
}

void save_bank(const LambdaBank& bank, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json index = {{"case", bank.case_name},     {"case_hash", bank.case_hash},
                            {"created", bank.created},    {"ranking", to_string(bank.ranking)},
                            {"mu_target", bank.mu_target}};
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [key, e] : bank.entries) {
        auto doc = modal_structure_to_json(e.structure);
        doc["max_real"] = e.max_real;
        const auto file = dir / (key + ".json");
        std::ofstream out(file);
        out << doc.dump() << '\n';
        if (!out) throw Error("write failed for " + file.string());
        entries.push_back({{"key", key}, {"file", key + ".json"}, {"mu", e.structure.mu()}, {"max_real", e.max_real}});
    }
    index["entries"] = entries;
    nlohmann::json failures = nlohmann::json::array();
    for (const auto& f : bank.failures) failures.push_back({{"key", f.key}, {"message", f.message}});
    index["failures"] = failures;
    std::ofstream out(dir / "index.json");
    out << index.dump(1) << '\n';
    if (!out) throw Error("write failed for " + (dir / "index.json").string());
}

namespace {

nlohmann::json read_json_file(const std::filesystem::path& path) {
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

}  // namespace

LambdaBank load_bank(const std::filesystem::path& dir) {
    const auto index = read_json_file(dir / "index.json");
    LambdaBank bank;
    try {
        bank.case_name = index.at("case").get<std::string>();
        bank.case_hash = index.at("case_hash").get<std::string>();
        bank.created = index.at("created").get<std::string>();
        bank.ranking = mode_ranking_from_string(index.at("ranking").get<std::string>());
        bank.mu_target = index.at("mu_target").get<int>();
        for (const auto& e : index.at("entries")) {
            const std::string key = e.at("key").get<std::string>();
            const auto doc = read_json_file(dir / e.at("file").get<std::string>());
            BankEntry entry{modal_structure_from_json(doc), doc.at("max_real").get<double>()};
            if (commitment_key(entry.structure.u_on) != key)
                throw FormatError("bank entry " + key + " holds commitment " + commitment_key(entry.structure.u_on));
            bank.entries[key] = std::move(entry);
        }
        for (const auto& f : index.at("failures"))
            bank.failures.push_back({f.at("key").get<std::string>(), f.at("message").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bank index: " + std::string(e.what()));
    }
    return bank;
}

std::vector<Commitment> random_commitments(int n_g, int count, int min_on, std::uint64_t seed) {
    if (n_g < 1 || min_on < 1 || min_on > n_g) throw ValidationError("min_on must lie in [1, n_g]");
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution on(0.7);
    std::vector<Commitment> out;
    std::set<std::string> seen;
    const long possible = 1L << std::min(n_g, 30);
    for (long attempt = 0; static_cast<int>(out.size()) < count && attempt < 100L * count + possible; ++attempt) {
        Commitment u(n_g);
        for (auto& b : u) b = on(rng) ? 1 : 0;
        if (std::count(u.begin(), u.end(), 1) < min_on) continue;
        if (seen.insert(commitment_key(u)).second) out.push_back(u);
    }
    return out;
}

std::vector<Commitment> read_commitment_list(const std::filesystem::path& path, int n_g) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::vector<Commitment> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line.erase(std::remove_if(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); }),
                   line.end());
        if (line.empty()) continue;
        Commitment u;
        try {
            u = commitment_from_key(line);
        } catch (const Error& e) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (static_cast<int>(u.size()) != n_g)
            throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": commitment has " +
                                  std::to_string(u.size()) + " entries, case has " + std::to_string(n_g) + " machines");
        out.push_back(u);
    }
    return out;
}

}  // namespace sfr
