#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "sfr/pipeline.hpp"

namespace sfr {

std::vector<DecodedGamma> estimate_gamma(const EquivariantModel& model,
                                         const std::vector<const ModalStructure*>& structures,
                                         const std::vector<Commitment>& u_on, const std::vector<Disturbance>& xs) {
    if (structures.size() != xs.size() || u_on.size() != xs.size())
        throw DimensionError("structures, commitments and disturbances differ in count");
    if (xs.empty()) return {};
    std::vector<EncodedSample> samples;
    samples.reserve(xs.size());
    for (std::size_t k = 0; k < xs.size(); ++k)
        samples.push_back(encode_inputs(structures[k]->lambda, u_on[k], to_feature(xs[k]), model.stats, model.m,
                                        model.n_g, model.padded));
    const RMatrix out = forward(model, make_batch(samples));
    std::vector<DecodedGamma> gammas;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const RMatrix rows = out.middleRows(static_cast<Eigen::Index>(k) * model.m, model.m);
        gammas.push_back(decode_gamma(rows, model.stats, samples[k].mask, samples[k].partner));
    }
    return gammas;
}

AssessmentReport assess(const GridCase& grid, const LambdaBank& bank, const EquivariantModel* model,
                        const AssessOptions& opts, const std::optional<std::vector<Disturbance>>& disturbances) {
    if (!opts.analytic && !model) throw ValidationError("estimated mode needs a model");
    if (bank.case_hash != case_hash(grid))
        throw ValidationError("bank was built for a different case (" + bank.case_name + ")");
    const GridCase state = apply_commitment_with_slack_transfer(grid, grid.u_on);

    AssessmentReport report;
    report.case_name = grid.name;
    report.case_hash = bank.case_hash;
    report.commitment = commitment_key(state.u_on);
    report.mode = opts.analytic ? "analytic" : "estimated";
    report.model_id = model && !opts.analytic ? fnv1a_hex(model_to_json(*model).at("body").dump()) : "";
    report.bank_created = bank.created;

    const auto start = std::chrono::steady_clock::now();
    const std::vector<Disturbance> xs =
        disturbances ? *disturbances : generate_disturbances(state, solve_power_flow(state), opts.load_steps);
    const std::size_t n = xs.size();

    std::vector<const BankEntry*> entries(n);
    std::vector<DeltaX0> dx(n);
    for (std::size_t k = 0; k < n; ++k) {
        if (!(xs[k].delta_p_mw >= 0.0)) throw ValidationError("disturbance magnitude must be non-negative");
        if (xs[k].delta_p_mw == 0.0 && !opts.analytic)
            throw ValidationError("zero-magnitude disturbances are only accepted in analytic mode");
        entries[k] = &lookup_bank(bank, structure_commitment(state.u_on, xs[k], opts.trip_model));
        if (!entries[k]->stable())
            throw ValidationError("bank structure " + commitment_key(entries[k]->structure.u_on) + " is unstable");
        dx[k] = post_disturbance_equilibrium(state, to_event(state, xs[k]), opts.trip_model);
    }

    std::vector<std::vector<Complex>> gamma(n);
    std::vector<bool> clamped(n, false);
    if (opts.analytic) {
        for (std::size_t k = 0; k < n; ++k) gamma[k] = modal_coefficients(entries[k]->structure, dx[k]).gamma;
    } else {
        std::vector<const ModalStructure*> structures(n);
        for (std::size_t k = 0; k < n; ++k) structures[k] = &entries[k]->structure;
        auto est = estimate_gamma(*model, structures, std::vector<Commitment>(n, state.u_on), xs);
        for (std::size_t k = 0; k < n; ++k) {
            gamma[k] = std::move(est[k].gamma);
            clamped[k] = est[k].magnitude_clamped;
        }
    }

    report.rows.resize(n);
    auto solve = [&](std::size_t k) {
        const NadirResult nr = nadir_polynomial(entries[k]->structure.lambda, gamma[k], state.f0_hz, dx[k].f_e, opts.nadir);
        AssessmentRow& row = report.rows[k];
        row.x = xs[k];
        row.structure_key = commitment_key(entries[k]->structure.u_on);
        row.f_nadir = nr.f_nadir;
        row.t_nadir = nr.t_nadir;
        row.f_e = dx[k].f_e;
        row.polynomial_fallback = nr.polynomial_fallback;
        row.no_interior_nadir = nr.no_interior_nadir;
        row.magnitude_clamped = clamped[k];
    };
    if (opts.parallel) {
#pragma omp parallel for schedule(static)
        for (long k = 0; k < static_cast<long>(n); ++k) solve(static_cast<std::size_t>(k));
    } else {
        for (std::size_t k = 0; k < n; ++k) solve(k);
    }
    report.batch_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

nlohmann::json report_to_json(const AssessmentReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows)
        rows.push_back({{"x", {r.x.delta_p_mw, r.x.type, r.x.index}},
                        {"structure", r.structure_key},
                        {"f_nadir", r.f_nadir},
                        {"t_nadir", r.t_nadir},
                        {"f_e", r.f_e},
                        {"polynomial_fallback", r.polynomial_fallback},
                        {"no_interior_nadir", r.no_interior_nadir},
                        {"magnitude_clamped", r.magnitude_clamped}});
    return {{"case", report.case_name},       {"case_hash", report.case_hash}, {"commitment", report.commitment},
            {"mode", report.mode},            {"model_id", report.model_id},   {"bank_created", report.bank_created},
            {"batch_seconds", report.batch_seconds}, {"rows", rows}};
}

AssessmentReport report_from_json(const nlohmann::json& doc) {
    try {
        AssessmentReport r;
        r.case_name = doc.at("case").get<std::string>();
        r.case_hash = doc.at("case_hash").get<std::string>();
        r.commitment = doc.at("commitment").get<std::string>();
        r.mode = doc.at("mode").get<std::string>();
        r.model_id = doc.at("model_id").get<std::string>();
        r.bank_created = doc.at("bank_created").get<std::string>();
        r.batch_seconds = doc.at("batch_seconds").get<double>();
        for (const auto& row : doc.at("rows")) {
            AssessmentRow a;
            const auto& x = row.at("x");
            a.x = {x.at(0).get<double>(), x.at(1).get<int>(), x.at(2).get<int>()};
            a.structure_key = row.at("structure").get<std::string>();
            a.f_nadir = row.at("f_nadir").get<double>();
            a.t_nadir = row.at("t_nadir").get<double>();
            a.f_e = row.at("f_e").get<double>();
            a.polynomial_fallback = row.at("polynomial_fallback").get<bool>();
            a.no_interior_nadir = row.at("no_interior_nadir").get<bool>();
            a.magnitude_clamped = row.at("magnitude_clamped").get<bool>();
            r.rows.push_back(a);
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("report: ") + e.what());
    }
}

std::string report_table(const AssessmentReport& report) {
    std::ostringstream out;
    out << report.case_name << "  commitment " << report.commitment << "  mode " << report.mode << "  batch "
        << std::fixed << std::setprecision(4) << report.batch_seconds << " s\n";
    out << "  j      dP MW  type  index   f_nadir Hz  t_nadir s      f_e Hz  flags\n";
    for (std::size_t j = 0; j < report.rows.size(); ++j) {
        const auto& r = report.rows[j];
        out << std::setw(3) << j + 1 << std::setw(11) << std::setprecision(2) << r.x.delta_p_mw << std::setw(6)
            << r.x.type << std::setw(7) << r.x.index << std::setw(13) << std::setprecision(4) << r.f_nadir
            << std::setw(11) << std::setprecision(3) << r.t_nadir << std::setw(12) << std::setprecision(4) << r.f_e
            << "  ";
        std::string flags;
        if (r.polynomial_fallback) flags += "scan ";
        if (r.no_interior_nadir) flags += "boundary ";
        if (r.magnitude_clamped) flags += "clamped ";
        out << (flags.empty() ? "-" : flags) << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------

Metrics evaluate_metrics(const std::vector<NadirPair>& pairs) {
    Metrics m;
    m.count = pairs.size();
    m.residuals = pairs;
    if (pairs.empty()) return m;
    for (const auto& p : pairs) {
        m.nadir_mae += std::abs(p.f_pred - p.f_true);
        m.time_mae += std::abs(p.t_pred - p.t_true);
        m.nadir_mape += std::abs(p.f_pred - p.f_true) / std::abs(p.f_true);
        if (p.t_true != 0.0) m.time_mape += std::abs(p.t_pred - p.t_true) / std::abs(p.t_true);
    }
    const double n = static_cast<double>(pairs.size());
    m.nadir_mae /= n;
    m.time_mae /= n;
    m.nadir_mape *= 100.0 / n;
    m.time_mape *= 100.0 / n;
    return m;
}

Metrics evaluate_metrics(const AssessmentReport& report, const std::vector<OracleResult>& oracle) {
    if (report.rows.size() != oracle.size())
        throw DimensionError("report has " + std::to_string(report.rows.size()) + " rows, oracle " +
                             std::to_string(oracle.size()));
    std::vector<NadirPair> pairs;
    for (std::size_t k = 0; k < oracle.size(); ++k)
        pairs.push_back({report.rows[k].f_nadir, report.rows[k].t_nadir, oracle[k].f_nadir, oracle[k].t_nadir});
    return evaluate_metrics(pairs);
}

nlohmann::json metrics_to_json(const Metrics& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& p : m.residuals)
        rows.push_back({{"f_pred", p.f_pred}, {"f_true", p.f_true}, {"t_pred", p.t_pred}, {"t_true", p.t_true}});
    return {{"count", m.count},         {"nadir_mae_hz", m.nadir_mae}, {"nadir_mape_pct", m.nadir_mape},
            {"time_mae_s", m.time_mae}, {"time_mape_pct", m.time_mape}, {"residuals", rows}};
}

std::string metrics_table(const Metrics& m) {
    std::ostringstream out;
    out << std::fixed;
    out << "  j   f_pred Hz   f_true Hz   err Hz   t_pred s  t_true s   err s\n";
    for (std::size_t j = 0; j < m.residuals.size(); ++j) {
        const auto& p = m.residuals[j];
        out << std::setw(3) << j + 1 << std::setprecision(4) << std::setw(12) << p.f_pred << std::setw(12) << p.f_true
            << std::setw(9) << p.f_pred - p.f_true << std::setprecision(3) << std::setw(11) << p.t_pred
            << std::setw(10) << p.t_true << std::setw(8) << p.t_pred - p.t_true << '\n';
    }
    out << std::setprecision(4) << "nadir MAE " << m.nadir_mae << " Hz, MAPE " << m.nadir_mape << " %\n"
        << "time  MAE " << m.time_mae << " s, MAPE " << m.time_mape << " %\n";
    return out.str();
}

NadirResult record_nadir(const DatasetRecord& rec, double f0, const NadirOptions& opts) {
    return nadir_polynomial(rec.lambda, rec.gamma, f0, rec.f_e, opts);
}

}  // namespace sfr
