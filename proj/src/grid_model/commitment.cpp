#include <algorithm>
#include <cmath>

#include "sfr/grid_model.hpp"

namespace sfr {

namespace {

void check_commitment_shape(const GridCase& grid, const Commitment& u_on) {
    if (u_on.size() != grid.machines.size())
        throw ValidationError("commitment length " + std::to_string(u_on.size()) + " does not match machine count " +
                              std::to_string(grid.machines.size()));
    if (std::none_of(u_on.begin(), u_on.end(), [](auto b) { return b != 0; }))
        throw ValidationError("all-zero commitment");
}

// Bus of each committed machine decides PV/PQ; the slack stays as given.
void refresh_bus_types(GridCase& grid) {
    const int slack = grid.slack_bus();
    for (std::size_t b = 0; b < grid.buses.size(); ++b) {
        if (static_cast<int>(b) == slack) continue;
        grid.buses[b].type = BusType::PQ;
    }
    for (std::size_t i = 0; i < grid.machines.size(); ++i) {
        if (!grid.u_on[i]) continue;
        const int b = grid.bus_index(grid.machines[i].bus);
        if (b != slack) grid.buses[b].type = BusType::PV;
    }
}

bool slack_committed(const GridCase& grid) {
    const int slack_id = grid.buses[grid.slack_bus()].id;
    for (std::size_t i = 0; i < grid.machines.size(); ++i)
        if (grid.u_on[i] && grid.machines[i].bus == slack_id) return true;
    return false;
}

}  // namespace

GridCase apply_unit_commitment(const GridCase& grid, const Commitment& u_on) {
    check_commitment_shape(grid, u_on);
    GridCase out = grid;
    out.u_on = u_on;
    if (!slack_committed(out)) throw ValidationError("decommitted slack machine");
    refresh_bus_types(out);
    validate_case(out);
    return out;
}

GridCase apply_commitment_with_slack_transfer(const GridCase& grid, const Commitment& u_on) {
    check_commitment_shape(grid, u_on);
    GridCase out = grid;
    out.u_on = u_on;
    if (!slack_committed(out)) {
        int best = -1;
        for (std::size_t i = 0; i < out.machines.size(); ++i) {
            if (!out.u_on[i]) continue;
            if (best < 0 || out.machines[i].p_max_mw > out.machines[best].p_max_mw) best = static_cast<int>(i);
        }
        const int old_slack = out.slack_bus();
        const int new_slack = out.bus_index(out.machines[best].bus);
        out.buses[old_slack].type = BusType::PQ;
        out.buses[new_slack].type = BusType::Slack;
    }
    refresh_bus_types(out);
    validate_case(out);
    return out;
}

GridCase nominal_dispatch(const GridCase& grid) {
    GridCase out = grid;
    double lost = 0.0;
    double headroom = 0.0;
    double capacity = 0.0;
    for (std::size_t i = 0; i < out.machines.size(); ++i) {
        const auto& m = out.machines[i];
        if (out.u_on[i]) {
            headroom += std::max(0.0, m.p_max_mw - m.p_mw);
            capacity += m.p_max_mw;
        } else {
            lost += m.p_mw;
        }
    }
    if (capacity <= 0.0) return out;
    // Share by headroom so no unit is pushed past its capacity; fall back to
    // capacity shares when the lost output exceeds the total headroom.
    const bool by_headroom = headroom >= lost && headroom > 0.0;
    for (std::size_t i = 0; i < out.machines.size(); ++i) {
        auto& m = out.machines[i];
        if (!out.u_on[i]) {
            m.p_mw = 0.0;
            continue;
        }
        const double share = by_headroom ? std::max(0.0, m.p_max_mw - m.p_mw) / headroom : m.p_max_mw / capacity;
        m.p_mw += lost * share;
    }
    return out;
}

GridCase redispatch(const GridCase& grid, int machine, double p_target_mw) {
    if (machine < 0 || machine >= static_cast<int>(grid.machines.size()))
        throw ValidationError("redispatch: machine index out of range");
    if (!grid.u_on[machine]) throw ValidationError("redispatch: machine " + std::to_string(machine) + " is off");

    GridCase out = grid;
    const int slack_id = out.buses[out.slack_bus()].id;
    const bool is_slack = out.machines[machine].bus == slack_id;

    // Increases are shared by headroom, decreases by capacity.
    auto absorbs = [&](std::size_t i) { return out.u_on[i] && static_cast<int>(i) != machine; };
    auto spread = [&](double delta) {
        double capacity = 0.0, headroom = 0.0;
        for (std::size_t i = 0; i < out.machines.size(); ++i) {
            if (!absorbs(i)) continue;
            capacity += out.machines[i].p_max_mw;
            headroom += std::max(0.0, out.machines[i].p_max_mw - out.machines[i].p_mw);
        }
        if (capacity <= 0.0) return;
        const bool by_headroom = delta > 0.0 && headroom >= delta;
        for (std::size_t i = 0; i < out.machines.size(); ++i) {
            if (!absorbs(i)) continue;
            auto& m = out.machines[i];
            m.p_mw += delta * (by_headroom ? std::max(0.0, m.p_max_mw - m.p_mw) / headroom : m.p_max_mw / capacity);
        }
    };

    if (!is_slack) {
        const double delta = p_target_mw - out.machines[machine].p_mw;
        out.machines[machine].p_mw = p_target_mw;
        spread(-delta);
        return out;
    }

    // The slack output comes from the power flow, so iterate on it.
    for (int it = 0; it < 8; ++it) {
        const auto pf = solve_power_flow(out);
        const double p_slack = pf.p_gen[machine] * out.base_mva;
        const double err = p_slack - p_target_mw;
        out.machines[machine].p_mw = p_slack;
        if (std::abs(err) < 1e-6) break;
        spread(err);
    }
    out.machines[machine].p_mw = p_target_mw;
    return out;
}

// ---------------------------------------------------------------------------

std::vector<std::string> governor_state_names(GovernorModel m) {
    switch (m) {
        case GovernorModel::TGOV1: return {"gov_valve", "gov_leadlag"};
        case GovernorModel::IEESGO: return {"gov_y1", "gov_y2", "gov_y3", "gov_tm"};
        case GovernorModel::GAST: return {"gov_valve", "gov_fuel", "gov_exhaust"};
    }
    return {};
}

int StateLayout::block_of(int machine) const {
    for (std::size_t b = 0; b < blocks.size(); ++b)
        if (blocks[b].machine == machine) return static_cast<int>(b);
    return -1;
}

StateLayout build_layout(const GridCase& grid) {
    StateLayout layout;
    layout.n_buses = static_cast<int>(grid.buses.size());
    auto push = [&](int machine, const std::string& name, StateKind kind) {
        layout.states.push_back({machine, name, kind});
        return static_cast<int>(layout.states.size()) - 1;
    };
    for (std::size_t i = 0; i < grid.machines.size(); ++i) {
        if (!grid.u_on[i]) continue;
        const int m = static_cast<int>(i);
        MachineBlock blk;
        blk.machine = m;
        blk.bus = grid.bus_index(grid.machines[i].bus);
        blk.delta = push(m, "delta", StateKind::Angle);
        blk.omega = push(m, "omega", StateKind::Speed);
        blk.eq1 = push(m, "eq1", StateKind::Eq1);
        blk.ed1 = push(m, "ed1", StateKind::Ed1);
        if (grid.exciter_of(m)) {
            blk.exciter = push(m, "exc_vr", StateKind::ExciterVr);
            push(m, "exc_efd", StateKind::ExciterEfd);
            push(m, "exc_rf", StateKind::ExciterRf);
        }
        if (const auto* gov = grid.governor_of(m)) {
            const auto names = governor_state_names(gov->model);
            blk.n_governor = static_cast<int>(names.size());
            for (std::size_t k = 0; k < names.size(); ++k) {
                const int idx = push(m, names[k], StateKind::Governor);
                if (k == 0) blk.governor = idx;
            }
        }
        layout.speed.push_back(blk.omega);
        layout.blocks.push_back(blk);
    }
    return layout;
}

}  // namespace sfr
