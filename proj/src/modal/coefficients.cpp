#include <cmath>

#include "sfr/modal.hpp"

namespace sfr {

const char* to_string(TripModel m) { return m == TripModel::PreTrip ? "pre-trip" : "post-trip"; }

TripModel trip_model_from_string(const std::string& s) {
    if (s == "pre-trip") return TripModel::PreTrip;
    if (s == "post-trip") return TripModel::PostTrip;
    throw ValidationError("unknown trip model '" + s + "' (expected pre-trip or post-trip)");
}

double total_regulation(const GridCase& grid, std::optional<int> excluded) {
    double total = 0.0;
    for (std::size_t i = 0; i < grid.machines.size(); ++i) {
        if (!grid.u_on[i] || (excluded && *excluded == static_cast<int>(i))) continue;
        const auto& m = grid.machines[i];
        const double k = grid.base_mva / m.mva_base;
        total += m.d / k;
        if (const auto* g = grid.governor_of(static_cast<int>(i))) total += 1.0 / (g->r * k) + g->dt / k;
    }
    return total;
}

namespace {

// x0 - x_e for a steady speed deviation dw: speeds -dw, governor states whose
// steady value moves by -dw / R get +dw / R.
void fill_deviation(const GridCase& grid, const StateLayout& layout, double dw, std::optional<int> lost,
                    Vector& dx) {
    dx = Vector::Zero(layout.n());
    for (const auto& blk : layout.blocks) {
        dx[blk.omega] = -dw;
        if (lost && blk.machine == *lost) continue;
        const auto* g = grid.governor_of(blk.machine);
        if (!g) continue;
        const double shift = dw / (g->r * grid.base_mva / grid.machines[blk.machine].mva_base);
        const int s = blk.governor;
        switch (g->model) {
            case GovernorModel::TGOV1:
                dx[s] = shift;
                dx[s + 1] = shift;
                break;
            case GovernorModel::IEESGO:
                dx[s] = shift;
                dx[s + 2] = shift;
                dx[s + 3] = shift;
                break;
            case GovernorModel::GAST:
                dx[s] = shift;
                dx[s + 1] = shift;
                dx[s + 2] = shift;
                break;
        }
    }
}

}  // namespace

Vector unit_deviation(const GridCase& grid, const StateLayout& layout) {
    Vector dx;
    fill_deviation(grid, layout, -1.0, std::nullopt, dx);
    return dx;
}

DeltaX0 post_disturbance_equilibrium(const GridCase& grid, const DisturbanceEvent& dist, TripModel trip_model) {
    validate_event(grid, dist);
    const bool trip = dist.kind == DisturbanceKind::GeneratorTrip;
    std::optional<int> lost;
    if (trip) lost = dist.target;

    const double regulation = total_regulation(grid, lost);
    if (!(regulation > 0.0)) throw ValidationError("zero total droop: no responsive governor after the disturbance");

    DeltaX0 out;
    out.delta_p_pu = dist.delta_p_mw / grid.base_mva;
    out.delta_omega = -out.delta_p_pu / regulation;
    out.f_e = grid.f0_hz * (1.0 + out.delta_omega);

    GridCase structure = grid;
    if (trip && trip_model == TripModel::PostTrip) {
        Commitment u = grid.u_on;
        u[dist.target] = 0;
        structure = apply_commitment_with_slack_transfer(grid, u);
    } else if (trip) {
        out.excluded_machine = dist.target;
    }
    fill_deviation(structure, build_layout(structure), out.delta_omega, lost, out.dx0);
    return out;
}

std::vector<double> coi_weights(const ModalStructure& ms, std::optional<int> excluded_machine) {
    std::vector<double> c(ms.inertia.size(), 0.0);
    double total = 0.0;
    for (std::size_t z = 0; z < ms.inertia.size(); ++z) {
        if (excluded_machine && ms.speed_machine[z] == *excluded_machine) continue;
        c[z] = ms.inertia[z];
        total += c[z];
    }
    if (!(total > 0.0)) throw ValidationError("no inertia left after excluding the tripped machine");
    for (double& v : c) v /= total;
    return c;
}

GammaSet modal_coefficients(const ModalStructure& ms, const DeltaX0& dx0) {
    if (dx0.dx0.size() != ms.n())
        throw DimensionError("initial deviation has " + std::to_string(dx0.dx0.size()) + " entries, structure has " +
                             std::to_string(ms.n()) + " states");
    const auto c = coi_weights(ms, dx0.excluded_machine);
    GammaSet out;
    out.source = GammaSet::Source::Analytic;
    const CVector dx = dx0.dx0.cast<Complex>();
    for (int i = 0; i < ms.mu(); ++i) {
        const Complex proj = ms.w.col(i).transpose() * dx;
        Complex speed = 0.0;
        for (std::size_t z = 0; z < c.size(); ++z) speed += c[z] * ms.v_speed(static_cast<Eigen::Index>(z), i);
        out.gamma.push_back(proj * speed);
    }
    return out;
}

}  // namespace sfr
