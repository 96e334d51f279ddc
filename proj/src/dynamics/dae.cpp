#include <algorithm>
#include <cmath>
#include <numbers>

#include "sfr/dynamics.hpp"

namespace sfr {

namespace {

// Windup-free integrator limit: hold the state at the bound while the
// derivative points outward.
inline double limited(double value, double deriv, double lo, double hi) {
    if (value >= hi && deriv > 0.0) return 0.0;
    if (value <= lo && deriv < 0.0) return 0.0;
    return deriv;
}

}  // namespace

DaeSystem::DaeSystem(const GridCase& grid, const OperatingPoint& op)
    : layout_(op.initialized ? op.layout : build_layout(grid)), set_(op.set), f0_(grid.f0_hz) {
    omega_s_ = 2.0 * std::numbers::pi * grid.f0_hz;
    const double sb = grid.base_mva;

    for (const auto& blk : layout_.blocks) {
        const auto& m = grid.machines[blk.machine];
        const double k = sb / m.mva_base;  // impedance scale, machine -> system base
        MachineParams p;
        p.h = m.h / k;
        p.d = m.d / k;
        p.ra = m.ra * k;
        p.xd = m.xd * k;
        p.xq = m.xq * k;
        p.xd1 = m.xd1 * k;
        p.xq1 = m.xq1 * k;
        p.td01 = m.td01;
        p.tq01 = m.tq01;
        machines_.push_back(p);
        inertia_.push_back(p.h);

        if (const auto* e = grid.exciter_of(blk.machine)) {
            exciter_of_.push_back(static_cast<int>(exciters_.size()));
            exciters_.push_back(*e);
        } else {
            exciter_of_.push_back(-1);
        }

        if (const auto* g = grid.governor_of(blk.machine)) {
            GovernorParams gp;
            gp.model = g->model;
            gp.r = g->r * k;
            gp.t1 = g->t1;
            gp.t2 = g->t2;
            gp.t3 = g->t3;
            gp.t4 = g->t4;
            gp.k2 = g->k2;
            gp.dt = g->dt / k;
            gp.p_min = g->p_min / k;
            gp.p_max = g->p_max / k;
            gp.at = g->at / k;
            gp.kt = g->kt;
            gp.temp_limit = g->temp_limit;
            governor_of_.push_back(static_cast<int>(governors_.size()));
            governors_.push_back(gp);
        } else {
            governor_of_.push_back(-1);
        }
    }
    tripped_.assign(layout_.blocks.size(), false);

    CMatrix ybus = build_ybus(grid);
    if (op.v.size() != grid.buses.size()) throw DimensionError("operating point does not match the case buses");
    for (std::size_t b = 0; b < grid.buses.size(); ++b) {
        const double v2 = op.v[b] * op.v[b];
        const Complex s(grid.buses[b].p_load_mw, grid.buses[b].q_load_mvar);
        ybus(b, b) += std::conj(s) / sb / v2;
    }
    const int nb = static_cast<int>(grid.buses.size());
    y_real_.setZero(2 * nb, 2 * nb);
    for (int i = 0; i < nb; ++i) {
        for (int k = 0; k < nb; ++k) {
            const double g = ybus(i, k).real();
            const double b = ybus(i, k).imag();
            y_real_(2 * i, 2 * k) = g;
            y_real_(2 * i, 2 * k + 1) = -b;
            y_real_(2 * i + 1, 2 * k) = b;
            y_real_(2 * i + 1, 2 * k + 1) = g;
        }
    }
}

void DaeSystem::residual(const Vector& x, const Vector& y, Vector& f, Vector& g, bool limits,
                         const std::vector<signed char>* holds) const {
    auto apply_limit = [&](int k, double deriv, double lo, double hi) {
        if (!limits) return deriv;
        if (holds) return (*holds)[k] != 0 ? 0.0 : deriv;
        return limited(x[k], deriv, lo, hi);
    };
    if (x.size() != n() || y.size() != l())
        throw DimensionError("dae_residual: expected x of size " + std::to_string(n()) + " and y of size " +
                             std::to_string(l()));
    f.setZero(n());
    g.noalias() = -(y_real_ * y);

    for (std::size_t b = 0; b < layout_.blocks.size(); ++b) {
        if (tripped_[b]) continue;
        const auto& blk = layout_.blocks[b];
        const auto& p = machines_[b];
        const int m = blk.machine;

        const double delta = x[blk.delta];
        const double omega = x[blk.omega];
        const double eq1 = x[blk.eq1];
        const double ed1 = x[blk.ed1];
        const double vr = y[2 * blk.bus];
        const double vi = y[2 * blk.bus + 1];
        const double s = std::sin(delta), c = std::cos(delta);
        const double vd = vr * s - vi * c;
        const double vq = vr * c + vi * s;

        const double det = p.ra * p.ra + p.xd1 * p.xq1;
        const double id = (p.ra * (ed1 - vd) + p.xq1 * (eq1 - vq)) / det;
        const double iq = (p.ra * (eq1 - vq) - p.xd1 * (ed1 - vd)) / det;
        const double te = ed1 * id + eq1 * iq + (p.xq1 - p.xd1) * id * iq;

        g[2 * blk.bus] += id * s + iq * c;
        g[2 * blk.bus + 1] += -id * c + iq * s;

        const double dw = omega - 1.0;

        // Excitation.
        double efd = 0.0;
        if (exciter_of_[b] >= 0) {
            const auto& e = exciters_[exciter_of_[b]];
            const int k = blk.exciter;
            const double vr_state = x[k];
            efd = x[k + 1];
            const double rf = x[k + 2];
            const double vt = std::sqrt(vr * vr + vi * vi);
            double dvr = (-vr_state + e.ka * rf - e.ka * e.kf / e.tf * efd + e.ka * (set_.v_ref[m] - vt)) / e.ta;
            dvr = apply_limit(k, dvr, e.vr_min, e.vr_max);
            f[k] = dvr;
            f[k + 1] = (-e.ke * efd + vr_state) / e.te;
            f[k + 2] = (-rf + e.kf / e.tf * efd) / e.tf;
        } else {
            efd = set_.efd_fixed[m];
        }

        // Turbine-governor.
        double tm = set_.p_c[m];
        if (governor_of_[b] >= 0) {
            const auto& gp = governors_[governor_of_[b]];
            const int k = blk.governor;
            const double demand = set_.p_c[m] - dw / gp.r;
            switch (gp.model) {
                case GovernorModel::TGOV1: {
                    const double valve = x[k], lag = x[k + 1];
                    double dvalve = (demand - valve) / gp.t1;
                    dvalve = apply_limit(k, dvalve, gp.p_min, gp.p_max);
                    f[k] = dvalve;
                    f[k + 1] = (valve - lag) / gp.t3;
                    tm = lag + gp.t2 / gp.t3 * (valve - lag) - gp.dt * dw;
                    break;
                }
                case GovernorModel::IEESGO: {
                    const double y1 = x[k], y2 = x[k + 1], y3 = x[k + 2], tmech = x[k + 3];
                    const double dy1 = (-dw / gp.r - y1) / gp.t1;
                    f[k] = dy1;
                    f[k + 1] = dy1 - y2 / gp.t2;
                    f[k + 2] = (y1 + gp.k2 * y2 - y3) / gp.t3;
                    double power = set_.p_c[m] + y3;
                    if (limits) power = std::clamp(power, gp.p_min, gp.p_max);
                    f[k + 3] = (power - tmech) / gp.t4;
                    tm = tmech;
                    break;
                }
                case GovernorModel::GAST: {
                    const double valve = x[k], fuel = x[k + 1], exhaust = x[k + 2];
                    double input = demand;
                    if (limits && gp.temp_limit) input = std::min(input, gp.at + gp.kt * (gp.at - exhaust));
                    double dvalve = (input - valve) / gp.t1;
                    dvalve = apply_limit(k, dvalve, gp.p_min, gp.p_max);
                    f[k] = dvalve;
                    f[k + 1] = (valve - fuel) / gp.t2;
                    f[k + 2] = (fuel - exhaust) / gp.t3;
                    tm = fuel - gp.dt * dw;
                    break;
                }
            }
        }

        f[blk.delta] = omega_s_ * dw;
        f[blk.omega] = (tm - te - p.d * dw) / (2.0 * p.h);
        f[blk.eq1] = (-eq1 - (p.xd - p.xd1) * id + efd) / p.td01;
        f[blk.ed1] = (-ed1 + (p.xq - p.xq1) * iq) / p.tq01;
    }
}

double DaeSystem::coi_speed_deviation(const Vector& x) const {
    double num = 0.0, den = 0.0;
    for (std::size_t b = 0; b < layout_.blocks.size(); ++b) {
        if (tripped_[b]) continue;
        num += inertia_[b] * (x[layout_.blocks[b].omega] - 1.0);
        den += inertia_[b];
    }
    return den > 0.0 ? num / den : 0.0;
}

void DaeSystem::trip_machine(int machine) {
    const int b = layout_.block_of(machine);
    if (b < 0) throw ValidationError("trip target machine " + std::to_string(machine) + " is not committed");
    tripped_[b] = true;
}

void DaeSystem::add_load(int bus_position, double delta_p_pu, double v_ref_mag) {
    if (bus_position < 0 || 2 * bus_position >= y_real_.rows()) throw ValidationError("load step bus out of range");
    const double g = delta_p_pu / (v_ref_mag * v_ref_mag);
    y_real_(2 * bus_position, 2 * bus_position) += g;
    y_real_(2 * bus_position + 1, 2 * bus_position + 1) += g;
}

std::vector<signed char> DaeSystem::limit_holds(const Vector& x, const Vector& y) const {
    const std::vector<signed char> free(n(), 0);
    Vector f, g;
    residual(x, y, f, g, true, &free);
    std::vector<signed char> holds(n(), 0);
    auto check = [&](int k, double lo, double hi) {
        if (x[k] >= hi && f[k] > 0.0) holds[k] = 1;
        if (x[k] <= lo && f[k] < 0.0) holds[k] = -1;
    };
    for (std::size_t b = 0; b < layout_.blocks.size(); ++b) {
        if (tripped_[b]) continue;
        const auto& blk = layout_.blocks[b];
        if (exciter_of_[b] >= 0) {
            const auto& e = exciters_[exciter_of_[b]];
            check(blk.exciter, e.vr_min, e.vr_max);
        }
        if (governor_of_[b] >= 0) {
            const auto& gp = governors_[governor_of_[b]];
            if (gp.model != GovernorModel::IEESGO) check(blk.governor, gp.p_min, gp.p_max);
        }
    }
    return holds;
}

void DaeSystem::clamp_states(Vector& x) const {
    for (std::size_t b = 0; b < layout_.blocks.size(); ++b) {
        const auto& blk = layout_.blocks[b];
        if (exciter_of_[b] >= 0) {
            const auto& e = exciters_[exciter_of_[b]];
            x[blk.exciter] = std::clamp(x[blk.exciter], e.vr_min, e.vr_max);
        }
        if (governor_of_[b] >= 0) {
            const auto& gp = governors_[governor_of_[b]];
            if (gp.model != GovernorModel::IEESGO) x[blk.governor] = std::clamp(x[blk.governor], gp.p_min, gp.p_max);
        }
    }
}

std::pair<Vector, Vector> dae_residual(const DaeSystem& dae, const Vector& x, const Vector& y, bool limits) {
    Vector f, g;
    dae.residual(x, y, f, g, limits);
    return {f, g};
}

}  // namespace sfr
