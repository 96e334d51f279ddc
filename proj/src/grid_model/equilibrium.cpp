#include <cmath>
#include <numbers>
#include <sstream>

#include "sfr/dynamics.hpp"
#include "sfr/grid_model.hpp"

namespace sfr {

OperatingPoint init_dynamic_equilibrium(const GridCase& grid, const OperatingPoint& pf) {
    OperatingPoint op = pf;
    op.layout = build_layout(grid);
    const auto& layout = op.layout;
    const int ng = static_cast<int>(grid.machines.size());
    const int nb = static_cast<int>(grid.buses.size());

    op.x_e = Vector::Zero(layout.n());
    op.y_e = Vector::Zero(layout.l());
    op.set.p_c.assign(ng, 0.0);
    op.set.v_ref.assign(ng, 0.0);
    op.set.efd_fixed.assign(ng, 0.0);

    for (int b = 0; b < nb; ++b) {
        op.y_e[2 * b] = pf.v[b] * std::cos(pf.theta[b]);
        op.y_e[2 * b + 1] = pf.v[b] * std::sin(pf.theta[b]);
    }

    const double sb = grid.base_mva;
    for (const auto& blk : layout.blocks) {
        const int m = blk.machine;
        const auto& mach = grid.machines[m];
        const double k = sb / mach.mva_base;
        const double ra = mach.ra * k, xd = mach.xd * k, xq = mach.xq * k;
        const double xd1 = mach.xd1 * k, xq1 = mach.xq1 * k;

        const Complex vbus = std::polar(pf.v[blk.bus], pf.theta[blk.bus]);
        const Complex current = std::conj(Complex(pf.p_gen[m], pf.q_gen[m]) / vbus);
        const double delta = std::arg(vbus + Complex(ra, xq) * current);
        const Complex rot = std::polar(1.0, -(delta - std::numbers::pi / 2.0));
        const Complex idq = current * rot;
        const Complex vdq = vbus * rot;
        const double id = idq.real(), iq = idq.imag();
        const double vq = vdq.imag();

        const double ed1 = (xq - xq1) * iq;
        const double eq1 = vq + ra * iq + xd1 * id;
        const double efd = eq1 + (xd - xd1) * id;
        const double te = ed1 * id + eq1 * iq + (xq1 - xd1) * id * iq;

        op.x_e[blk.delta] = delta;
        op.x_e[blk.omega] = 1.0;
        op.x_e[blk.eq1] = eq1;
        op.x_e[blk.ed1] = ed1;

        if (const auto* e = grid.exciter_of(m)) {
            const double vr = e->ke * efd;
            if (vr < e->vr_min || vr > e->vr_max) {
                std::ostringstream msg;
                msg << "exciter of machine " << m << " starts outside its limits (VR = " << vr << ")";
                throw ValidationError(msg.str());
            }
            op.x_e[blk.exciter] = vr;
            op.x_e[blk.exciter + 1] = efd;
            op.x_e[blk.exciter + 2] = e->kf / e->tf * efd;
            op.set.v_ref[m] = pf.v[blk.bus] + vr / e->ka;
        } else {
            op.set.efd_fixed[m] = efd;
        }

        op.set.p_c[m] = te;
        if (const auto* g = grid.governor_of(m)) {
            const double lo = g->p_min / k, hi = g->p_max / k;
            if (te < lo || te > hi) {
                std::ostringstream msg;
                msg << "governor of machine " << m << " output " << te * sb << " MW is outside its limits";
                throw ValidationError(msg.str());
            }
            const int s = blk.governor;
            switch (g->model) {
                case GovernorModel::TGOV1:
                    op.x_e[s] = te;
                    op.x_e[s + 1] = te;
                    break;
                case GovernorModel::IEESGO:
                    op.x_e[s] = 0.0;
                    op.x_e[s + 1] = 0.0;
                    op.x_e[s + 2] = 0.0;
                    op.x_e[s + 3] = te;
                    break;
                case GovernorModel::GAST:
                    op.x_e[s] = te;
                    op.x_e[s + 1] = te;
                    op.x_e[s + 2] = te;
                    break;
            }
        }
    }
    op.initialized = true;

    DaeSystem dae(grid, op);
    Vector f, g;
    dae.residual(op.x_e, op.y_e, f, g, false);
    Eigen::Index worst_f = 0, worst_g = 0;
    const double rf = f.size() ? f.cwiseAbs().maxCoeff(&worst_f) : 0.0;
    const double rg = g.size() ? g.cwiseAbs().maxCoeff(&worst_g) : 0.0;
    if (rf > 1e-8) {
        const auto& st = layout.states[worst_f];
        std::ostringstream msg;
        msg << "equilibrium residual " << rf << " at machine " << st.machine << " state " << st.name;
        throw NumericalError(msg.str());
    }
    if (rg > 1e-8) {
        std::ostringstream msg;
        msg << "network residual " << rg << " at bus position " << worst_g / 2;
        throw NumericalError(msg.str());
    }
    return op;
}

OperatingPoint solve_equilibrium(const GridCase& grid) { return init_dynamic_equilibrium(grid, solve_power_flow(grid)); }

nlohmann::json operating_point_to_json(const GridCase& grid, const OperatingPoint& op) {
    nlohmann::json doc;
    doc["V"] = op.v;
    doc["theta"] = op.theta;
    std::vector<double> p, q;
    for (std::size_t i = 0; i < op.p_gen.size(); ++i) {
        p.push_back(op.p_gen[i] * grid.base_mva);
        q.push_back(op.q_gen[i] * grid.base_mva);
    }
    doc["P"] = p;
    doc["Q"] = q;
    doc["max_mismatch"] = op.max_mismatch;
    if (op.initialized) {
        nlohmann::json xe = nlohmann::json::array();
        for (int k = 0; k < op.layout.n(); ++k) {
            const auto& st = op.layout.states[k];
            xe.push_back({{"machine", st.machine}, {"state", st.name}, {"value", op.x_e[k]}});
        }
        doc["x_e"] = xe;
        doc["P_C"] = op.set.p_c;
    }
    return doc;
}

}  // namespace sfr
