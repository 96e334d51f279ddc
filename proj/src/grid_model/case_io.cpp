#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "sfr/grid_model.hpp"

namespace sfr {

using nlohmann::json;

std::string commitment_key(const Commitment& u_on) {
    std::string key;
    key.reserve(u_on.size());
    for (auto bit : u_on) key.push_back(bit ? '1' : '0');
    return key;
}

Commitment commitment_from_key(const std::string& key) {
    Commitment u;
    u.reserve(key.size());
    for (char c : key) {
        if (c != '0' && c != '1') throw ParseError("commitment key '" + key + "' is not a bit string");
        u.push_back(c == '1' ? 1 : 0);
    }
    return u;
}

const char* to_string(GovernorModel m) {
    switch (m) {
        case GovernorModel::TGOV1: return "TGOV1";
        case GovernorModel::IEESGO: return "IEESGO";
        case GovernorModel::GAST: return "GAST";
    }
    return "?";
}

const char* to_string(BusType t) {
    switch (t) {
        case BusType::Slack: return "slack";
        case BusType::PV: return "PV";
        case BusType::PQ: return "PQ";
    }
    return "?";
}

int GridCase::bus_index(int bus_id) const {
    for (std::size_t i = 0; i < buses.size(); ++i)
        if (buses[i].id == bus_id) return static_cast<int>(i);
    return -1;
}

int GridCase::slack_bus() const {
    for (std::size_t i = 0; i < buses.size(); ++i)
        if (buses[i].type == BusType::Slack) return static_cast<int>(i);
    return -1;
}

const Exciter* GridCase::exciter_of(int machine) const {
    for (const auto& e : exciters)
        if (e.machine == machine) return &e;
    return nullptr;
}

const Governor* GridCase::governor_of(int machine) const {
    for (const auto& g : governors)
        if (g.machine == machine) return &g;
    return nullptr;
}

double GridCase::committed_capacity_mw() const {
    double total = 0.0;
    for (std::size_t i = 0; i < machines.size(); ++i)
        if (committed(static_cast<int>(i))) total += machines[i].p_max_mw;
    return total;
}

namespace {

// Field access with a path for error messages; unknown keys are rejected.
class Reader {
public:
    Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) throw ParseError(path_ + ": expected an object");
    }

    void allow(std::initializer_list<const char*> keys) const {
        std::set<std::string> allowed(keys.begin(), keys.end());
        for (auto it = obj_.begin(); it != obj_.end(); ++it)
            if (!allowed.count(it.key())) throw ParseError(path_ + ": unknown key '" + it.key() + "'");
    }

    double num(const char* key) const {
        auto it = obj_.find(key);
        if (it == obj_.end()) throw ParseError(path_ + ": missing field '" + key + "'");
        if (!it->is_number()) throw ParseError(path_ + "." + key + ": expected a number");
        return it->get<double>();
    }

    double num(const char* key, double fallback) const { return obj_.contains(key) ? num(key) : fallback; }

    int integer(const char* key) const {
        auto it = obj_.find(key);
        if (it == obj_.end()) throw ParseError(path_ + ": missing field '" + key + "'");
        if (!it->is_number_integer()) throw ParseError(path_ + "." + key + ": expected an integer");
        return it->get<int>();
    }

    std::string str(const char* key) const {
        auto it = obj_.find(key);
        if (it == obj_.end()) throw ParseError(path_ + ": missing field '" + key + "'");
        if (!it->is_string()) throw ParseError(path_ + "." + key + ": expected a string");
        return it->get<std::string>();
    }

    std::string str(const char* key, const std::string& fallback) const {
        return obj_.contains(key) ? str(key) : fallback;
    }

    bool boolean(const char* key, bool fallback) const {
        auto it = obj_.find(key);
        if (it == obj_.end()) return fallback;
        if (!it->is_boolean()) throw ParseError(path_ + "." + key + ": expected a boolean");
        return it->get<bool>();
    }

private:
    const json& obj_;
    std::string path_;
};

const json& array_field(const json& doc, const char* key) {
    auto it = doc.find(key);
    if (it == doc.end()) throw ParseError(std::string("case: missing field '") + key + "'");
    if (!it->is_array()) throw ParseError(std::string("case.") + key + ": expected an array");
    return *it;
}

std::string at(const char* group, std::size_t i) { return std::string(group) + "[" + std::to_string(i) + "]"; }

BusType bus_type_from(const std::string& s, const std::string& path) {
    if (s == "slack") return BusType::Slack;
    if (s == "PV") return BusType::PV;
    if (s == "PQ") return BusType::PQ;
    throw ParseError(path + ".type: expected slack, PV or PQ, got '" + s + "'");
}

GovernorModel governor_model_from(const std::string& s, const std::string& path) {
    if (s == "TGOV1") return GovernorModel::TGOV1;
    if (s == "IEESGO") return GovernorModel::IEESGO;
    if (s == "GAST") return GovernorModel::GAST;
    throw ParseError(path + ".model: expected TGOV1, IEESGO or GAST, got '" + s + "'");
}

}  // namespace

GridCase parse_case(const json& doc) {
    Reader top(doc, "case");
    top.allow({"name", "base_mva", "f0_hz", "buses", "branches", "machines", "exciters", "governors", "u_on"});

    GridCase grid;
    grid.name = top.str("name", "");
    grid.base_mva = top.num("base_mva");
    grid.f0_hz = top.num("f0_hz");

    const auto& buses = array_field(doc, "buses");
    for (std::size_t i = 0; i < buses.size(); ++i) {
        Reader r(buses[i], at("buses", i));
        r.allow({"id", "type", "v_set", "p_load_mw", "q_load_mvar", "g_shunt_mw", "b_shunt_mvar"});
        Bus b;
        b.id = r.integer("id");
        b.type = bus_type_from(r.str("type"), at("buses", i));
        b.v_set = r.num("v_set", 1.0);
        b.p_load_mw = r.num("p_load_mw", 0.0);
        b.q_load_mvar = r.num("q_load_mvar", 0.0);
        b.g_shunt_mw = r.num("g_shunt_mw", 0.0);
        b.b_shunt_mvar = r.num("b_shunt_mvar", 0.0);
        grid.buses.push_back(b);
    }

    const auto& branches = array_field(doc, "branches");
    for (std::size_t i = 0; i < branches.size(); ++i) {
        Reader r(branches[i], at("branches", i));
        r.allow({"from", "to", "r", "x", "b", "tap", "in_service"});
        Branch br;
        br.from = r.integer("from");
        br.to = r.integer("to");
        br.r = r.num("r", 0.0);
        br.x = r.num("x");
        br.b = r.num("b", 0.0);
        br.tap = r.num("tap", 1.0);
        br.in_service = r.boolean("in_service", true);
        grid.branches.push_back(br);
    }

    const auto& machines = array_field(doc, "machines");
    for (std::size_t i = 0; i < machines.size(); ++i) {
        Reader r(machines[i], at("machines", i));
        r.allow({"name", "bus", "mva_base", "p_mw", "p_max_mw", "h", "d", "ra", "xd", "xq", "xd1", "xq1", "td01",
                 "tq01"});
        Machine m;
        m.name = r.str("name", "G" + std::to_string(i + 1));
        m.bus = r.integer("bus");
        m.mva_base = r.num("mva_base");
        m.p_mw = r.num("p_mw");
        m.p_max_mw = r.num("p_max_mw");
        m.h = r.num("h");
        m.d = r.num("d", 0.0);
        m.ra = r.num("ra", 0.0);
        m.xd = r.num("xd");
        m.xq = r.num("xq");
        m.xd1 = r.num("xd1");
        m.xq1 = r.num("xq1");
        m.td01 = r.num("td01");
        m.tq01 = r.num("tq01");
        grid.machines.push_back(m);
    }

    const auto& exciters = array_field(doc, "exciters");
    for (std::size_t i = 0; i < exciters.size(); ++i) {
        Reader r(exciters[i], at("exciters", i));
        r.allow({"machine", "ka", "ta", "ke", "te", "kf", "tf", "vr_min", "vr_max"});
        Exciter e;
        e.machine = r.integer("machine");
        e.ka = r.num("ka");
        e.ta = r.num("ta");
        e.ke = r.num("ke");
        e.te = r.num("te");
        e.kf = r.num("kf");
        e.tf = r.num("tf");
        e.vr_min = r.num("vr_min", -1e9);
        e.vr_max = r.num("vr_max", 1e9);
        grid.exciters.push_back(e);
    }

    const auto& governors = array_field(doc, "governors");
    for (std::size_t i = 0; i < governors.size(); ++i) {
        const auto path = at("governors", i);
        Reader r(governors[i], path);
        Governor g;
        g.machine = r.integer("machine");
        g.model = governor_model_from(r.str("model"), path);
        g.r = r.num("r");
        switch (g.model) {
            case GovernorModel::TGOV1:
                r.allow({"machine", "model", "r", "t1", "t2", "t3", "dt", "v_min", "v_max"});
                g.t1 = r.num("t1");
                g.t2 = r.num("t2");
                g.t3 = r.num("t3");
                g.dt = r.num("dt", 0.0);
                g.p_min = r.num("v_min", -1e9);
                g.p_max = r.num("v_max", 1e9);
                break;
            case GovernorModel::IEESGO:
                r.allow({"machine", "model", "r", "t1", "t2", "t3", "t4", "k2", "p_min", "p_max"});
                g.t1 = r.num("t1");
                g.t2 = r.num("t2");
                g.t3 = r.num("t3");
                g.t4 = r.num("t4");
                g.k2 = r.num("k2", 0.0);
                g.p_min = r.num("p_min", -1e9);
                g.p_max = r.num("p_max", 1e9);
                break;
            case GovernorModel::GAST:
                r.allow({"machine", "model", "r", "t1", "t2", "t3", "dt", "v_min", "v_max", "at", "kt",
                         "temp_limit"});
                g.t1 = r.num("t1");
                g.t2 = r.num("t2");
                g.t3 = r.num("t3");
                g.dt = r.num("dt", 0.0);
                g.p_min = r.num("v_min", -1e9);
                g.p_max = r.num("v_max", 1e9);
                g.at = r.num("at", 1.0);
                g.kt = r.num("kt", 2.0);
                g.temp_limit = r.boolean("temp_limit", false);
                break;
        }
        grid.governors.push_back(g);
    }

    const auto& u = array_field(doc, "u_on");
    for (std::size_t i = 0; i < u.size(); ++i) {
        if (!u[i].is_number_integer() || (u[i].get<int>() != 0 && u[i].get<int>() != 1))
            throw ParseError(at("u_on", i) + ": expected 0 or 1");
        grid.u_on.push_back(static_cast<std::uint8_t>(u[i].get<int>()));
    }

    validate_case(grid);
    return grid;
}

GridCase load_case(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open case file " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    auto grid = parse_case(doc);
    if (grid.name.empty()) grid.name = path.stem().string();
    return grid;
}

void validate_case(const GridCase& grid) {
    auto fail = [](const std::string& msg) { throw ValidationError(msg); };

    if (grid.base_mva <= 0) fail("base_mva must be positive");
    if (grid.f0_hz <= 0) fail("f0_hz must be positive");
    if (grid.buses.empty()) fail("case has no buses");

    std::set<int> ids;
    int slack = 0;
    for (const auto& b : grid.buses) {
        if (!ids.insert(b.id).second) fail("duplicate bus " + std::to_string(b.id));
        if (b.type == BusType::Slack) ++slack;
    }
    if (slack != 1) fail("exactly one slack bus required, found " + std::to_string(slack));

    for (std::size_t i = 0; i < grid.branches.size(); ++i) {
        const auto& br = grid.branches[i];
        if (!ids.count(br.from) || !ids.count(br.to))
            fail("branch " + std::to_string(i) + " references a missing bus");
        if (br.from == br.to) fail("branch " + std::to_string(i) + " is a self loop");
        if (br.r == 0.0 && br.x == 0.0) fail("branch " + std::to_string(i) + " has zero impedance");
        if (br.tap <= 0.0) fail("branch " + std::to_string(i) + " has non-positive tap");
    }

    const int ng = static_cast<int>(grid.machines.size());
    if (grid.u_on.size() != grid.machines.size())
        fail("u_on length " + std::to_string(grid.u_on.size()) + " does not match machine count " +
             std::to_string(ng));

    std::set<int> committed_buses;
    for (int i = 0; i < ng; ++i) {
        const auto& m = grid.machines[i];
        const auto tag = "machine " + std::to_string(i);
        if (!ids.count(m.bus)) fail(tag + " references missing bus " + std::to_string(m.bus));
        if (m.mva_base <= 0) fail(tag + ": mva_base must be positive");
        if (m.xd1 <= 0 || m.xq1 <= 0 || m.xd < m.xd1 || m.xq < m.xq1)
            fail(tag + ": reactances must satisfy 0 < X' <= X");
        if (m.td01 <= 0 || m.tq01 <= 0) fail(tag + ": open-circuit time constants must be positive");
        if (m.p_max_mw < 0) fail(tag + ": p_max_mw must be non-negative");
        if (grid.u_on[i]) {
            if (m.h <= 0) fail(tag + ": H must be positive for a committed machine");
            if (!committed_buses.insert(m.bus).second)
                fail(tag + ": at most one committed machine per bus is supported");
        }
    }

    std::set<int> seen;
    for (const auto& e : grid.exciters) {
        if (e.machine < 0 || e.machine >= ng) fail("exciter references missing machine " + std::to_string(e.machine));
        if (!seen.insert(e.machine).second) fail("machine " + std::to_string(e.machine) + " has two exciters");
        if (e.ta <= 0 || e.te <= 0 || e.tf <= 0 || e.ka <= 0) fail("exciter time constants and gain must be positive");
    }
    seen.clear();
    for (const auto& g : grid.governors) {
        if (g.machine < 0 || g.machine >= ng) fail("governor references missing machine " + std::to_string(g.machine));
        if (!seen.insert(g.machine).second) fail("machine " + std::to_string(g.machine) + " has two governors");
        if (grid.u_on[g.machine] && g.r <= 0)
            fail("governor of machine " + std::to_string(g.machine) + ": R must be positive");
        bool ok = g.t1 > 0 && g.t3 > 0;
        if (g.model == GovernorModel::IEESGO) ok = ok && g.t2 > 0 && g.t4 > 0;
        if (g.model == GovernorModel::GAST) ok = ok && g.t2 > 0;
        if (!ok) fail("governor of machine " + std::to_string(g.machine) + ": time constants must be positive");
    }
}

json case_to_json(const GridCase& grid) {
    json doc;
    doc["name"] = grid.name;
    doc["base_mva"] = grid.base_mva;
    doc["f0_hz"] = grid.f0_hz;
    doc["buses"] = json::array();
    for (const auto& b : grid.buses) {
        doc["buses"].push_back({{"id", b.id},
                                {"type", to_string(b.type)},
                                {"v_set", b.v_set},
                                {"p_load_mw", b.p_load_mw},
                                {"q_load_mvar", b.q_load_mvar},
                                {"g_shunt_mw", b.g_shunt_mw},
                                {"b_shunt_mvar", b.b_shunt_mvar}});
    }
    doc["branches"] = json::array();
    for (const auto& br : grid.branches) {
        doc["branches"].push_back({{"from", br.from},
                                   {"to", br.to},
                                   {"r", br.r},
                                   {"x", br.x},
                                   {"b", br.b},
                                   {"tap", br.tap},
                                   {"in_service", br.in_service}});
    }
    doc["machines"] = json::array();
    for (const auto& m : grid.machines) {
        doc["machines"].push_back({{"name", m.name},     {"bus", m.bus},   {"mva_base", m.mva_base},
                                   {"p_mw", m.p_mw},     {"p_max_mw", m.p_max_mw}, {"h", m.h},
                                   {"d", m.d},           {"ra", m.ra},     {"xd", m.xd},
                                   {"xq", m.xq},         {"xd1", m.xd1},   {"xq1", m.xq1},
                                   {"td01", m.td01},     {"tq01", m.tq01}});
    }
    doc["exciters"] = json::array();
    for (const auto& e : grid.exciters) {
        doc["exciters"].push_back({{"machine", e.machine},
                                   {"ka", e.ka},
                                   {"ta", e.ta},
                                   {"ke", e.ke},
                                   {"te", e.te},
                                   {"kf", e.kf},
                                   {"tf", e.tf},
                                   {"vr_min", e.vr_min},
                                   {"vr_max", e.vr_max}});
    }
    doc["governors"] = json::array();
    for (const auto& g : grid.governors) {
        json j = {{"machine", g.machine}, {"model", to_string(g.model)}, {"r", g.r}, {"t1", g.t1}, {"t2", g.t2},
                  {"t3", g.t3}};
        switch (g.model) {
            case GovernorModel::TGOV1:
                j["dt"] = g.dt;
                j["v_min"] = g.p_min;
                j["v_max"] = g.p_max;
                break;
            case GovernorModel::IEESGO:
                j["t4"] = g.t4;
                j["k2"] = g.k2;
                j["p_min"] = g.p_min;
                j["p_max"] = g.p_max;
                break;
            case GovernorModel::GAST:
                j["dt"] = g.dt;
                j["v_min"] = g.p_min;
                j["v_max"] = g.p_max;
                j["at"] = g.at;
                j["kt"] = g.kt;
                j["temp_limit"] = g.temp_limit;
                break;
        }
        doc["governors"].push_back(j);
    }
    doc["u_on"] = json::array();
    for (auto bit : grid.u_on) doc["u_on"].push_back(static_cast<int>(bit));
    return doc;
}

void save_case(const GridCase& grid, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << case_to_json(grid).dump(2) << '\n';
}

bool operator==(const GridCase& a, const GridCase& b) { return case_to_json(a) == case_to_json(b); }

}  // namespace sfr
