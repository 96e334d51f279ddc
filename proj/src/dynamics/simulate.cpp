#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <Eigen/LU>

#include "sfr/dynamics.hpp"

namespace sfr {

void validate_event(const GridCase& grid, const DisturbanceEvent& ev) {
    if (!(ev.time >= 0.0)) throw ValidationError("event time must be non-negative");
    if (ev.kind == DisturbanceKind::GeneratorTrip) {
        if (ev.target < 0 || ev.target >= static_cast<int>(grid.machines.size()))
            throw ValidationError("trip target machine " + std::to_string(ev.target) + " does not exist");
        if (!grid.u_on[ev.target])
            throw ValidationError("trip target machine " + std::to_string(ev.target) + " is not committed");
    } else {
        if (ev.target < 0 || ev.target >= static_cast<int>(grid.buses.size()))
            throw ValidationError("load step bus position " + std::to_string(ev.target) + " does not exist");
    }
}

namespace {

// One trapezoidal step  F(z) = [x - x_n - h/2 (f(z) + f_n); g(z)] = 0,
// solved by Newton with a finite-difference Jacobian that is reused across
// steps until convergence slows down.
class Stepper {
public:
    Stepper(const DaeSystem& dae, const SimulationOptions& opts) : dae_(dae), opts_(opts), holds_(dae.n(), 0) {}

    void invalidate() { have_lu_ = false; }

    // Freezes the limit status for the coming step and returns f at its start.
    Vector begin(const Vector& x, const Vector& y) {
        if (opts_.limits) {
            auto holds = dae_.limit_holds(x, y);
            if (holds != holds_) have_lu_ = false;
            holds_ = std::move(holds);
        }
        Vector f, g;
        eval(x, y, f, g);
        return f;
    }

    // Solves g(x, y) = 0 for y with x held fixed.
    void settle_algebraic(const Vector& x, Vector& y, double t) {
        const int l = dae_.l();
        Vector f, g;
        for (int it = 0; it < opts_.max_newton; ++it) {
            eval(x, y, f, g);
            if (g.cwiseAbs().maxCoeff() <= opts_.newton_tol) return;
            Matrix jac(l, l);
            Vector f2, g2;
            for (int j = 0; j < l; ++j) {
                const double h = 1e-7 * std::max(1.0, std::abs(y[j]));
                Vector yp = y;
                yp[j] += h;
                eval(x, yp, f2, g2);
                jac.col(j) = (g2 - g) / h;
            }
            y -= jac.partialPivLu().solve(g);
        }
        eval(x, y, f, g);
        if (g.cwiseAbs().maxCoeff() > 1e-8) fail(t, g.cwiseAbs().maxCoeff());
    }

    void step(Vector& x, Vector& y, const Vector& f_n, double h, double t_next) {
        const Vector x_n = x;
        for (int attempt = 0; attempt < 2; ++attempt) {
            if (!have_lu_ || h != h_lu_) refresh(x, y, h);
            Vector z(x.size() + y.size());
            z << x, y;
            double worst = 0.0;
            bool ok = false;
            for (int it = 0; it < opts_.max_newton; ++it) {
                const Vector r = trap_residual(z, x_n, f_n, h);
                worst = r.cwiseAbs().maxCoeff();
                if (!std::isfinite(worst)) break;
                if (worst <= opts_.newton_tol) {
                    ok = true;
                    break;
                }
                if (it >= 6 && attempt == 0) break;  // slow: refresh the Jacobian
                z -= lu_.solve(r);
            }
            if (ok) {
                x = z.head(x.size());
                y = z.tail(y.size());
                return;
            }
            if (attempt == 1) fail(t_next, worst);
            x = x_n;
            have_lu_ = false;
        }
    }

private:
    void eval(const Vector& x, const Vector& y, Vector& f, Vector& g) const {
        dae_.residual(x, y, f, g, opts_.limits, opts_.limits ? &holds_ : nullptr);
    }

    Vector trap_residual(const Vector& z, const Vector& x_n, const Vector& f_n, double h) const {
        const int n = dae_.n(), l = dae_.l();
        Vector f, g;
        eval(z.head(n), z.tail(l), f, g);
        Vector r(n + l);
        r.head(n) = z.head(n) - x_n - 0.5 * h * (f + f_n);
        r.tail(l) = g;
        return r;
    }

    void refresh(const Vector& x, const Vector& y, double h) {
        const int n = dae_.n(), l = dae_.l();
        Vector z(n + l);
        z << x, y;
        Vector f0, g0;
        eval(x, y, f0, g0);
        Matrix jac(n + l, n + l);
        Vector f, g;
        for (int j = 0; j < n + l; ++j) {
            const double step = 1e-7 * std::max(1.0, std::abs(z[j]));
            Vector zp = z;
            zp[j] += step;
            eval(zp.head(n), zp.tail(l), f, g);
            jac.col(j).head(n) = -0.5 * h * (f - f0) / step;
            jac.col(j).tail(l) = (g - g0) / step;
            if (j < n) jac(j, j) += 1.0;
        }
        lu_.compute(jac);
        have_lu_ = true;
        h_lu_ = h;
    }

    [[noreturn]] void fail(double t, double worst) const {
        std::ostringstream msg;
        msg << "Newton iteration diverged at t = " << std::setprecision(6) << t << " s, worst residual " << worst;
        throw ConvergenceError(msg.str());
    }

    const DaeSystem& dae_;
    const SimulationOptions& opts_;
    std::vector<signed char> holds_;
    Eigen::PartialPivLU<Matrix> lu_;
    bool have_lu_ = false;
    double h_lu_ = 0.0;
};

}  // namespace

Trajectory simulate(const GridCase& grid, const OperatingPoint& op, const std::optional<DisturbanceEvent>& event,
                    const SimulationOptions& opts) {
    if (!op.initialized) throw ValidationError("simulate requires an initialized equilibrium");
    if (!(opts.dt > 0.0 && opts.dt <= 0.05)) throw ValidationError("dt must lie in (0, 0.05] s");
    if (!(opts.horizon > 0.0)) throw ValidationError("horizon must be positive");
    if (event) validate_event(grid, *event);

    DaeSystem dae(grid, op);
    const double dt = opts.dt;
    const long event_step = event ? std::lround(event->time / dt) : -1;
    const double t_event = event ? event_step * dt : 0.0;
    const long n_steps = (event ? event_step : 0) + std::lround(opts.horizon / dt);
    const int every = std::max(1, opts.record_every);

    Trajectory traj;
    traj.event_time = t_event;
    for (const auto& s : dae.layout().states) traj.state_names.push_back(s.name + "_" + std::to_string(s.machine));

    Vector x = op.x_e, y = op.y_e;
    Stepper stepper(dae, opts);
    auto record = [&](long k) {
        traj.t.push_back(k * dt);
        traj.x.push_back(x);
        traj.y.push_back(y);
        traj.f_coi.push_back(dae.f0() * (1.0 + dae.coi_speed_deviation(x)));
    };

    for (long k = 0;; ++k) {
        if (k == event_step) {
            if (event->kind == DisturbanceKind::GeneratorTrip) {
                dae.trip_machine(event->target);
            } else {
                const double vr = y[2 * event->target], vi = y[2 * event->target + 1];
                dae.add_load(event->target, event->delta_p_mw / grid.base_mva, std::hypot(vr, vi));
            }
            stepper.invalidate();
            stepper.settle_algebraic(x, y, k * dt);
        }
        if (k % every == 0 || k == event_step || k == n_steps) record(k);
        if (k == n_steps) break;
        const Vector f_n = stepper.begin(x, y);
        stepper.step(x, y, f_n, dt, (k + 1) * dt);
        if (opts.limits) dae.clamp_states(x);
    }
    return traj;
}

double coi_frequency(double f0, const std::vector<double>& inertia, const std::vector<double>& speed_dev) {
    if (inertia.size() != speed_dev.size()) throw DimensionError("inertia and speed vectors differ in length");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < inertia.size(); ++i) {
        num += inertia[i] * speed_dev[i];
        den += inertia[i];
    }
    if (den <= 0.0) throw ValidationError("total inertia must be positive");
    return f0 * (1.0 + num / den);
}

std::vector<double> coi_frequency(const GridCase& grid, const Trajectory& traj,
                                  const std::optional<DisturbanceEvent>& event) {
    const StateLayout layout = build_layout(grid);
    std::vector<double> h;
    for (const auto& blk : layout.blocks) {
        const auto& m = grid.machines[blk.machine];
        h.push_back(m.h * m.mva_base / grid.base_mva);
    }
    int tripped = -1;
    if (event && event->kind == DisturbanceKind::GeneratorTrip) tripped = layout.block_of(event->target);

    std::vector<double> out;
    out.reserve(traj.t.size());
    for (std::size_t k = 0; k < traj.t.size(); ++k) {
        if (traj.x[k].size() != layout.n()) throw DimensionError("trajectory does not match the case layout");
        const bool after = event && traj.t[k] >= traj.event_time - 1e-12;
        std::vector<double> hk, dw;
        for (std::size_t b = 0; b < layout.blocks.size(); ++b) {
            if (after && static_cast<int>(b) == tripped) continue;
            hk.push_back(h[b]);
            dw.push_back(traj.x[k][layout.blocks[b].omega] - 1.0);
        }
        out.push_back(coi_frequency(grid.f0_hz, hk, dw));
    }
    return out;
}

NadirMeasurement measure_nadir(const std::vector<double>& t, const std::vector<double>& series) {
    if (series.empty() || t.size() != series.size()) throw DimensionError("measure_nadir needs equal, non-empty series");
    std::size_t i = 0;
    for (std::size_t k = 1; k < series.size(); ++k)
        if (series[k] < series[i]) i = k;

    NadirMeasurement out{series[i], t[i], false};
    if (i == 0 || i + 1 == series.size()) {
        out.boundary_minimum = true;
        return out;
    }
    // Vertex of the parabola through the three samples around the minimum.
    const double t0 = t[i - 1], t1 = t[i], t2 = t[i + 1];
    const double f0 = series[i - 1], f1 = series[i], f2 = series[i + 1];
    const double d01 = (f1 - f0) / (t1 - t0);
    const double d12 = (f2 - f1) / (t2 - t1);
    const double a = (d12 - d01) / (t2 - t0);
    if (a <= 0.0) return out;
    const double b = d01 - a * (t0 + t1);
    const double tv = -b / (2.0 * a);
    if (tv < t0 || tv > t2) return out;
    out.t_nadir = tv;
    out.f_nadir = f1 + (tv - t1) * (d01 + a * (tv - t0));
    return out;
}

NadirMeasurement measure_trajectory_nadir(const Trajectory& traj) {
    std::vector<double> t, f;
    for (std::size_t k = 0; k < traj.t.size(); ++k) {
        if (traj.t[k] < traj.event_time - 1e-12) continue;
        t.push_back(traj.t[k] - traj.event_time);
        f.push_back(traj.f_coi[k]);
    }
    return measure_nadir(t, f);
}

void write_trajectory_csv(const Trajectory& traj, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "t,f_coi";
    for (const auto& name : traj.state_names) out << ',' << name;
    out << '\n' << std::setprecision(17);
    for (std::size_t k = 0; k < traj.t.size(); ++k) {
        out << traj.t[k] - traj.event_time << ',' << traj.f_coi[k];
        for (Eigen::Index j = 0; j < traj.x[k].size(); ++j) out << ',' << traj.x[k][j];
        out << '\n';
    }
}

}  // namespace sfr
