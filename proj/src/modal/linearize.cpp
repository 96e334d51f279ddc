#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/SVD>

#include "sfr/modal.hpp"

namespace sfr {

StateSpace linearize_residual(const ResidualFn& fn, const Vector& x, const Vector& y) {
    const Eigen::Index n = x.size(), l = y.size();
    StateSpace ss;
    ss.j1.resize(n, n);
    ss.j2.resize(n, l);
    ss.j3.resize(l, n);
    ss.j4.resize(l, l);

    Vector fp, gp, fm, gm;
    auto step = [](double v) { return std::max(1e-6, 1e-6 * std::abs(v)); };
    for (Eigen::Index j = 0; j < n; ++j) {
        const double h = step(x[j]);
        Vector xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        fn(xp, y, fp, gp);
        fn(xm, y, fm, gm);
        ss.j1.col(j) = (fp - fm) / (2.0 * h);
        ss.j3.col(j) = (gp - gm) / (2.0 * h);
    }
    for (Eigen::Index j = 0; j < l; ++j) {
        const double h = step(y[j]);
        Vector yp = y, ym = y;
        yp[j] += h;
        ym[j] -= h;
        fn(x, yp, fp, gp);
        fn(x, ym, fm, gm);
        ss.j2.col(j) = (fp - fm) / (2.0 * h);
        ss.j4.col(j) = (gp - gm) / (2.0 * h);
    }

    if (l == 0) {
        ss.a = ss.j1;
        ss.j4_condition = 1.0;
        return ss;
    }
    Eigen::JacobiSVD<Matrix> svd(ss.j4);
    const auto& sv = svd.singularValues();
    const double smin = sv[sv.size() - 1];
    ss.j4_condition = smin > 0.0 ? sv[0] / smin : std::numeric_limits<double>::infinity();
    if (!(ss.j4_condition <= 1e12)) {
        std::ostringstream msg;
        msg << "algebraic Jacobian J4 is ill-conditioned (condition " << ss.j4_condition << ")";
        throw NumericalError(msg.str());
    }
    ss.a = ss.j1 - ss.j2 * ss.j4.fullPivLu().solve(ss.j3);
    return ss;
}

StateSpace linearize(const GridCase& grid, const OperatingPoint& op) {
    if (!op.initialized) throw ValidationError("linearize requires an initialized equilibrium");
    const DaeSystem dae(grid, op);
    auto fn = [&dae](const Vector& x, const Vector& y, Vector& f, Vector& g) { dae.residual(x, y, f, g, false); };
    StateSpace ss = linearize_residual(fn, op.x_e, op.y_e);
    ss.layout = op.layout;
    return ss;
}

}  // namespace sfr
