#include <algorithm>
#include <cmath>
#include <numbers>

#include "sfr/modal.hpp"

namespace sfr {

namespace {

void check_aligned(const std::vector<Complex>& lambda, const std::vector<Complex>& gamma) {
    if (lambda.size() != gamma.size())
        throw DimensionError("mode set has " + std::to_string(lambda.size()) + " entries, coefficient set " +
                             std::to_string(gamma.size()));
}

double modal_sum(const std::vector<Complex>& lambda, const std::vector<Complex>& gamma, double t, int order) {
    Complex s = 0.0;
    for (std::size_t i = 0; i < lambda.size(); ++i) {
        Complex term = gamma[i] * std::exp(lambda[i] * t);
        for (int k = 0; k < order; ++k) term *= lambda[i];
        s += term;
    }
    return s.real();
}

}  // namespace

double sfr_value(const std::vector<Complex>& lambda, const std::vector<Complex>& gamma, double t) {
    check_aligned(lambda, gamma);
    return modal_sum(lambda, gamma, t, 0);
}

double sfr_derivative(const std::vector<Complex>& lambda, const std::vector<Complex>& gamma, double t) {
    check_aligned(lambda, gamma);
    return modal_sum(lambda, gamma, t, 1);
}

double sfr_second_derivative(const std::vector<Complex>& lambda, const std::vector<Complex>& gamma, double t) {
    check_aligned(lambda, gamma);
    return modal_sum(lambda, gamma, t, 2);
}

SfrSeries reconstruct_sfr(const std::vector<Complex>& lambda, const std::vector<Complex>& gamma,
                          const std::vector<double>& t) {
    check_aligned(lambda, gamma);
    SfrSeries out;
    out.value.reserve(t.size());
    for (double tk : t) {
        if (tk < 0.0) throw ValidationError("reconstruction times must be non-negative");
        Complex s = 0.0;
        for (std::size_t i = 0; i < lambda.size(); ++i) s += gamma[i] * std::exp(lambda[i] * tk);
        out.value.push_back(s.real());
        out.max_imag = std::max(out.max_imag, std::abs(s.imag()));
    }
    return out;
}

NadirResult nadir_scan(const std::vector<Complex>& lambda, const std::vector<Complex>& gamma, double f0,
                       double f_e, double horizon, double dt) {
    check_aligned(lambda, gamma);
    if (!(horizon > 0.0) || !(dt > 0.0)) throw ValidationError("scan horizon and step must be positive");
    const long steps = std::lround(horizon / dt);
    long best = 0;
    double best_v = modal_sum(lambda, gamma, 0.0, 0);
    double prev = best_v, next = 0.0;
    for (long k = 1; k <= steps; ++k) {
        const double v = modal_sum(lambda, gamma, k * dt, 0);
        if (v < best_v) {
            best_v = v;
            best = k;
        }
    }
    NadirResult out;
    out.t_nadir = best * dt;
    out.f_nadir = f_e + f0 * best_v;
    if (best == 0 || best == steps) {
        out.no_interior_nadir = true;
        return out;
    }
    prev = modal_sum(lambda, gamma, (best - 1) * dt, 0);
    next = modal_sum(lambda, gamma, (best + 1) * dt, 0);
    const double curv = prev - 2.0 * best_v + next;
    if (curv > 0.0) {
        const double shift = 0.5 * (prev - next) / curv;  // in steps, |shift| <= 0.5
        out.t_nadir = (best + shift) * dt;
        out.f_nadir = f_e + f0 * (best_v - 0.25 * (prev - next) * shift);
    }
    return out;
}

NadirResult nadir_polynomial(const std::vector<Complex>& lambda, const std::vector<Complex>& gamma, double f0,
                             double f_e, const NadirOptions& opts) {
    check_aligned(lambda, gamma);
    NadirResult out;

    // Expansion point: quarter period of the oscillatory mode contributing
    // most to the initial slope.
    double t_hat = 0.0, best = -1.0;
    for (std::size_t i = 0; i < lambda.size(); ++i) {
        if (lambda[i].imag() <= 0.0) continue;
        if (std::abs(lambda[i] * gamma[i]) > best) {
            best = std::abs(lambda[i] * gamma[i]);
            t_hat = std::numbers::pi / (2.0 * lambda[i].imag());
        }
    }
    out.expansion_point = t_hat;

    double b0 = 0.0, b1 = 0.0, b2 = 0.0;
    for (std::size_t i = 0; i < lambda.size(); ++i) {
        const Complex l = lambda[i];
        const Complex c = l * gamma[i] * std::exp(l * t_hat);
        b0 += (c * (1.0 - l * t_hat + 0.5 * l * l * t_hat * t_hat)).real();
        b1 += (c * (l - l * l * t_hat)).real();
        b2 += (c * 0.5 * l * l).real();
    }
    out.poly = {b0, b1, b2};

    // Smallest positive real root of b2 t^2 + b1 t + b0.
    std::vector<double> roots;
    const double scale = std::max({std::abs(b0), std::abs(b1), std::abs(b2)});
    if (scale > 0.0) {
        if (std::abs(b2) <= 1e-14 * scale) {
            if (b1 != 0.0) roots.push_back(-b0 / b1);
        } else {
            const double disc = b1 * b1 - 4.0 * b2 * b0;
            if (disc >= 0.0) {
                const double sq = std::sqrt(disc);
                const double q = -0.5 * (b1 + std::copysign(sq, b1));
                roots.push_back(q / b2);
                if (q != 0.0) roots.push_back(b0 / q);
            }
        }
    }
    double t = -1.0;
    for (double r : roots)
        if (r > 0.0 && (t < 0.0 || r < t)) t = r;

    bool ok = t > 0.0;
    if (ok) {
        for (int it = 0; it < opts.newton_max; ++it) {
            const double d1 = modal_sum(lambda, gamma, t, 1);
            const double d2 = modal_sum(lambda, gamma, t, 2);
            if (d2 == 0.0) break;
            const double step = d1 / d2;
            t -= step;
            ++out.newton_iterations;
            if (std::abs(step) <= 1e-12 * std::max(1.0, std::abs(t))) break;
        }
        ok = std::isfinite(t) && t > 0.0 && t <= opts.horizon && modal_sum(lambda, gamma, t, 2) > 0.0;
    }
    if (ok) {
        // A local minimum is only accepted if a coarse scan finds nothing lower.
        const double v = modal_sum(lambda, gamma, t, 0);
        const long coarse = std::max(1L, std::lround(opts.horizon / opts.check_dt));
        const double h = opts.horizon / static_cast<double>(coarse);
        const double slack = 1e-9 + 1e-6 * std::abs(v);
        for (long k = 0; k <= coarse && ok; ++k)
            if (modal_sum(lambda, gamma, k * h, 0) < v - slack) ok = false;
        if (ok) {
            out.t_nadir = t;
            out.f_nadir = f_e + f0 * v;
            return out;
        }
    }

    NadirResult scan = nadir_scan(lambda, gamma, f0, f_e, opts.horizon, opts.scan_dt);
    scan.polynomial_fallback = true;
    scan.expansion_point = out.expansion_point;
    scan.poly = out.poly;
    scan.newton_iterations = out.newton_iterations;
    if (scan.no_interior_nadir) {
        scan.f_nadir = f_e;
        scan.t_nadir = opts.horizon;
    }
    return scan;
}

}  // namespace sfr
