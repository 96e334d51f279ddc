#include <cmath>
#include <sstream>

#include "sfr/grid_model.hpp"

namespace sfr {

CMatrix build_ybus(const GridCase& grid) {
    const int nb = static_cast<int>(grid.buses.size());
    CMatrix y = CMatrix::Zero(nb, nb);
    for (const auto& br : grid.branches) {
        if (!br.in_service) continue;
        const int f = grid.bus_index(br.from);
        const int t = grid.bus_index(br.to);
        const Complex ys = 1.0 / Complex(br.r, br.x);
        const Complex bc(0.0, br.b / 2.0);
        y(f, f) += (ys + bc) / (br.tap * br.tap);
        y(t, t) += ys + bc;
        y(f, t) -= ys / br.tap;
        y(t, f) -= ys / br.tap;
    }
    for (int b = 0; b < nb; ++b) {
        const auto& bus = grid.buses[b];
        y(b, b) += Complex(bus.g_shunt_mw, bus.b_shunt_mvar) / grid.base_mva;
    }
    return y;
}

OperatingPoint solve_power_flow(const GridCase& grid, const PowerFlowOptions& opts) {
    const int nb = static_cast<int>(grid.buses.size());
    const CMatrix y = build_ybus(grid);
    const int slack = grid.slack_bus();

    // Scheduled injections and which machine sits on each bus.
    Vector p_sched = Vector::Zero(nb);
    Vector q_sched = Vector::Zero(nb);
    std::vector<int> gen_at(nb, -1);
    for (int b = 0; b < nb; ++b) {
        p_sched[b] = -grid.buses[b].p_load_mw / grid.base_mva;
        q_sched[b] = -grid.buses[b].q_load_mvar / grid.base_mva;
    }
    for (std::size_t i = 0; i < grid.machines.size(); ++i) {
        if (!grid.u_on[i]) continue;
        const int b = grid.bus_index(grid.machines[i].bus);
        gen_at[b] = static_cast<int>(i);
        p_sched[b] += grid.machines[i].p_mw / grid.base_mva;
    }

    std::vector<int> pv_or_pq;  // buses with an angle unknown
    std::vector<int> pq;        // buses with a magnitude unknown
    for (int b = 0; b < nb; ++b) {
        if (b == slack) continue;
        pv_or_pq.push_back(b);
        if (grid.buses[b].type == BusType::PQ) pq.push_back(b);
    }

    Vector vm = Vector::Ones(nb);
    Vector va = Vector::Zero(nb);
    for (int b = 0; b < nb; ++b)
        if (grid.buses[b].type != BusType::PQ) vm[b] = grid.buses[b].v_set;

    auto injections = [&](Vector& p, Vector& q) {
        CVector v(nb);
        for (int b = 0; b < nb; ++b) v[b] = std::polar(vm[b], va[b]);
        const CVector s = v.cwiseProduct((y * v).conjugate());
        p = s.real();
        q = s.imag();
    };

    const int na = static_cast<int>(pv_or_pq.size());
    const int nm = static_cast<int>(pq.size());
    Vector p(nb), q(nb);
    OperatingPoint op;
    double mismatch = 0.0;
    int it = 0;
    for (;; ++it) {
        injections(p, q);
        Vector f(na + nm);
        for (int k = 0; k < na; ++k) f[k] = p[pv_or_pq[k]] - p_sched[pv_or_pq[k]];
        for (int k = 0; k < nm; ++k) f[na + k] = q[pq[k]] - q_sched[pq[k]];
        mismatch = f.size() ? f.cwiseAbs().maxCoeff() : 0.0;
        if (mismatch <= opts.tolerance) break;
        if (it >= opts.max_iterations) {
            std::ostringstream msg;
            msg << "power flow did not converge after " << it << " iterations, mismatch " << mismatch << " pu";
            throw ConvergenceError(msg.str());
        }

        // Polar Jacobian from dS/dVa and dS/dVm.
        CVector v(nb);
        for (int b = 0; b < nb; ++b) v[b] = std::polar(vm[b], va[b]);
        const CVector ibus = y * v;
        CMatrix ds_dva(nb, nb), ds_dvm(nb, nb);
        for (int i = 0; i < nb; ++i) {
            for (int k = 0; k < nb; ++k) {
                const Complex vi = v[i];
                const Complex term = std::conj(y(i, k) * v[k]);
                ds_dva(i, k) = Complex(0, -1) * vi * term;
                ds_dvm(i, k) = vi * std::conj(y(i, k) * v[k] / vm[k]);
            }
            ds_dva(i, i) += Complex(0, 1) * v[i] * std::conj(ibus[i]);
            ds_dvm(i, i) += v[i] / vm[i] * std::conj(ibus[i]);
        }
        Matrix jac(na + nm, na + nm);
        for (int r = 0; r < na; ++r) {
            const int i = pv_or_pq[r];
            for (int c = 0; c < na; ++c) jac(r, c) = ds_dva(i, pv_or_pq[c]).real();
            for (int c = 0; c < nm; ++c) jac(r, na + c) = ds_dvm(i, pq[c]).real();
        }
        for (int r = 0; r < nm; ++r) {
            const int i = pq[r];
            for (int c = 0; c < na; ++c) jac(na + r, c) = ds_dva(i, pv_or_pq[c]).imag();
            for (int c = 0; c < nm; ++c) jac(na + r, na + c) = ds_dvm(i, pq[c]).imag();
        }
        const Vector dx = jac.fullPivLu().solve(-f);
        if (!dx.allFinite()) throw ConvergenceError("power flow Jacobian is singular");
        for (int k = 0; k < na; ++k) va[pv_or_pq[k]] += dx[k];
        for (int k = 0; k < nm; ++k) vm[pq[k]] += dx[na + k];
    }

    op.iterations = it;
    op.max_mismatch = mismatch;
    op.v.assign(vm.data(), vm.data() + nb);
    op.theta.assign(va.data(), va.data() + nb);
    op.p_gen.assign(grid.machines.size(), 0.0);
    op.q_gen.assign(grid.machines.size(), 0.0);
    for (int b = 0; b < nb; ++b) {
        if (gen_at[b] < 0) continue;
        op.p_gen[gen_at[b]] = p[b] + grid.buses[b].p_load_mw / grid.base_mva;
        op.q_gen[gen_at[b]] = q[b] + grid.buses[b].q_load_mvar / grid.base_mva;
    }
    return op;
}

}  // namespace sfr
