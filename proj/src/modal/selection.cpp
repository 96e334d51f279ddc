#include <algorithm>
#include <cmath>
#include <numeric>

#include "sfr/modal.hpp"

namespace sfr {

namespace {

ModalStructure assemble(const EigenStructure& eig, const StateLayout& layout, const std::vector<double>& inertia,
                        const Commitment& u_on, std::vector<int> chosen, const std::vector<double>& score) {
    if (inertia.size() != layout.speed.size()) throw DimensionError("one inertia value per speed state expected");
    std::sort(chosen.begin(), chosen.end());
    const int n = static_cast<int>(eig.lambda.size());
    const int mu = static_cast<int>(chosen.size());

    ModalStructure ms;
    ms.u_on = u_on;
    ms.w.resize(n, mu);
    ms.v_speed.resize(static_cast<Eigen::Index>(layout.speed.size()), mu);
    ms.speed_index = layout.speed;
    for (const auto& blk : layout.blocks) ms.speed_machine.push_back(blk.machine);
    ms.inertia = inertia;
    const double total = std::accumulate(inertia.begin(), inertia.end(), 0.0);
    for (double h : inertia) ms.weights.push_back(h / total);
    ms.states = layout.states;
    for (int c = 0; c < mu; ++c) {
        const int i = chosen[c];
        ms.lambda.push_back(eig.lambda[i]);
        ms.w.col(c) = eig.w.col(i);
        for (std::size_t z = 0; z < layout.speed.size(); ++z) ms.v_speed(z, c) = eig.v(layout.speed[z], i);
        ms.score.push_back(score[i]);
        ms.mode_index.push_back(i);
    }
    return ms;
}

std::vector<double> speed_scores(const EigenStructure& eig, const StateLayout& layout) {
    std::vector<double> s(eig.lambda.size(), 0.0);
    for (std::size_t i = 0; i < s.size(); ++i)
        for (int k : layout.speed) s[i] += eig.participation(k, static_cast<Eigen::Index>(i));
    return s;
}

// Time integral of |gamma_i e^{lambda_i t}| for the reference deviation,
// with COI weights over every speed state.
std::vector<double> response_scores(const EigenStructure& eig, const StateLayout& layout,
                                    const std::vector<double>& inertia, const Vector& reference,
                                    double drift_threshold) {
    if (reference.size() != eig.v.rows())
        throw DimensionError("reference deviation has " + std::to_string(reference.size()) + " entries, system has " +
                             std::to_string(eig.v.rows()) + " states");
    const double total = std::accumulate(inertia.begin(), inertia.end(), 0.0);
    const CVector dx = reference.cast<Complex>();
    std::vector<double> s(eig.lambda.size(), 0.0);
    for (std::size_t i = 0; i < s.size(); ++i) {
        const auto col = static_cast<Eigen::Index>(i);
        Complex speed = 0.0;
        for (std::size_t z = 0; z < layout.speed.size(); ++z) speed += inertia[z] / total * eig.v(layout.speed[z], col);
        const Complex proj = eig.w.col(col).transpose() * dx;
        s[i] = std::abs(proj * speed) / std::max(std::abs(eig.lambda[col].real()), drift_threshold);
    }
    return s;
}

}  // namespace

const char* to_string(ModeRanking r) {
    return r == ModeRanking::SpeedParticipation ? "participation" : "coi-response";
}

ModeRanking mode_ranking_from_string(const std::string& s) {
    if (s == "participation") return ModeRanking::SpeedParticipation;
    if (s == "coi-response") return ModeRanking::CoiResponse;
    throw ValidationError("unknown mode ranking '" + s + "' (expected participation or coi-response)");
}

ModalStructure select_frequency_modes(const EigenStructure& eig, const StateLayout& layout,
                                      const std::vector<double>& inertia, const Commitment& u_on,
                                      const ModeSelection& sel) {
    const int n = static_cast<int>(eig.lambda.size());
    if (layout.speed.empty()) throw ValidationError("no speed states to rank modes against");
    if (sel.mu_target < 1 || sel.mu_target > n)
        throw ValidationError("mu_target " + std::to_string(sel.mu_target) + " must lie in [1, " + std::to_string(n) +
                              "]");
    if (sel.participation_fraction && !(*sel.participation_fraction > 0.0 && *sel.participation_fraction <= 1.0))
        throw ValidationError("participation fraction must lie in (0, 1]");

    if (inertia.size() != layout.speed.size()) throw DimensionError("one inertia value per speed state expected");
    const auto score = sel.ranking == ModeRanking::SpeedParticipation
                           ? speed_scores(eig, layout)
                           : response_scores(eig, layout, inertia, sel.reference, sel.drift_threshold);
    std::vector<int> ranked;
    for (int i = 0; i < n; ++i)
        if (std::abs(eig.lambda[i]) >= sel.drift_threshold) ranked.push_back(i);
    std::sort(ranked.begin(), ranked.end(), [&](int a, int b) {
        if (score[a] != score[b]) return score[a] > score[b];
        const double ia = std::abs(eig.lambda[a].imag()), ib = std::abs(eig.lambda[b].imag());
        if (ia != ib) return ia < ib;
        return a < b;
    });
    double total = 0.0;
    for (int i : ranked) total += score[i];

    std::vector<int> chosen;
    std::vector<bool> taken(n, false);
    double covered = 0.0;
    for (int i : ranked) {
        if (sel.participation_fraction ? covered >= *sel.participation_fraction * total
                                       : static_cast<int>(chosen.size()) >= sel.mu_target)
            break;
        if (taken[i]) continue;
        for (int k : {i, eig.partner[i]}) {
            if (taken[k]) continue;
            taken[k] = true;
            chosen.push_back(k);
            covered += score[k];
        }
    }
    return assemble(eig, layout, inertia, u_on, chosen, score);
}

ModalStructure all_modes(const EigenStructure& eig, const StateLayout& layout, const std::vector<double>& inertia,
                         const Commitment& u_on, double drift_threshold) {
    std::vector<int> chosen;
    for (int i = 0; i < static_cast<int>(eig.lambda.size()); ++i)
        if (std::abs(eig.lambda[i]) >= drift_threshold) chosen.push_back(i);
    return assemble(eig, layout, inertia, u_on, chosen, speed_scores(eig, layout));
}

void validate_modal_structure(const ModalStructure& ms) {
    const auto mu = static_cast<Eigen::Index>(ms.lambda.size());
    if (ms.w.cols() != mu || ms.v_speed.cols() != mu)
        throw ValidationError("modal structure: eigenvector columns do not match the mode count");
    if (ms.v_speed.rows() != static_cast<Eigen::Index>(ms.speed_index.size()) ||
        ms.weights.size() != ms.speed_index.size() || ms.inertia.size() != ms.speed_index.size())
        throw ValidationError("modal structure: speed rows, weights and inertia differ in length");
    if (ms.w.rows() != static_cast<Eigen::Index>(ms.states.size()))
        throw ValidationError("modal structure: left vectors do not match the state layout");
    const double sum = std::accumulate(ms.weights.begin(), ms.weights.end(), 0.0);
    if (std::abs(sum - 1.0) > 1e-12) throw ValidationError("modal structure: inertia weights do not sum to 1");
    for (const auto& lam : ms.lambda) {
        if (lam.imag() == 0.0) continue;
        if (std::find(ms.lambda.begin(), ms.lambda.end(), std::conj(lam)) == ms.lambda.end())
            throw ValidationError("modal structure: mode set is not closed under conjugation");
    }
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::json complex_matrix_to_json(const CMatrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back({m(r, c).real(), m(r, c).imag()});
        rows.push_back(row);
    }
    return rows;
}

CMatrix complex_matrix_from_json(const nlohmann::json& doc, Eigen::Index cols, const char* what) {
    if (!doc.is_array()) throw FormatError(std::string("modal structure: ") + what + " must be an array");
    CMatrix m(static_cast<Eigen::Index>(doc.size()), cols);
    for (std::size_t r = 0; r < doc.size(); ++r) {
        if (!doc[r].is_array() || static_cast<Eigen::Index>(doc[r].size()) != cols)
            throw FormatError(std::string("modal structure: ragged ") + what);
        for (Eigen::Index c = 0; c < cols; ++c)
            m(static_cast<Eigen::Index>(r), c) = Complex(doc[r][c].at(0).get<double>(), doc[r][c].at(1).get<double>());
    }
    return m;
}

}  // namespace

nlohmann::json modal_structure_to_json(const ModalStructure& ms) {
    nlohmann::json doc;
    doc["u_on"] = commitment_key(ms.u_on);
    nlohmann::json lam = nlohmann::json::array();
    for (const auto& l : ms.lambda) lam.push_back({l.real(), l.imag()});
    doc["lambda"] = lam;
    doc["w"] = complex_matrix_to_json(ms.w);
    doc["v_speed"] = complex_matrix_to_json(ms.v_speed);
    doc["speed_index"] = ms.speed_index;
    doc["speed_machine"] = ms.speed_machine;
    doc["inertia"] = ms.inertia;
    doc["C"] = ms.weights;
    nlohmann::json states = nlohmann::json::array();
    for (const auto& s : ms.states)
        states.push_back({{"machine", s.machine}, {"name", s.name}, {"kind", static_cast<int>(s.kind)}});
    doc["states"] = states;
    doc["score"] = ms.score;
    doc["mode_index"] = ms.mode_index;
    return doc;
}

ModalStructure modal_structure_from_json(const nlohmann::json& doc) {
    try {
        ModalStructure ms;
        ms.u_on = commitment_from_key(doc.at("u_on").get<std::string>());
        for (const auto& l : doc.at("lambda")) ms.lambda.emplace_back(l.at(0).get<double>(), l.at(1).get<double>());
        const auto mu = static_cast<Eigen::Index>(ms.lambda.size());
        ms.w = complex_matrix_from_json(doc.at("w"), mu, "w");
        ms.v_speed = complex_matrix_from_json(doc.at("v_speed"), mu, "v_speed");
        ms.speed_index = doc.at("speed_index").get<std::vector<int>>();
        ms.speed_machine = doc.at("speed_machine").get<std::vector<int>>();
        ms.inertia = doc.at("inertia").get<std::vector<double>>();
        ms.weights = doc.at("C").get<std::vector<double>>();
        for (const auto& s : doc.at("states"))
            ms.states.push_back({s.at("machine").get<int>(), s.at("name").get<std::string>(),
                                 static_cast<StateKind>(s.at("kind").get<int>())});
        ms.score = doc.at("score").get<std::vector<double>>();
        ms.mode_index = doc.at("mode_index").get<std::vector<int>>();
        validate_modal_structure(ms);
        return ms;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("modal structure: ") + e.what());
    }
}

}  // namespace sfr
