#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "sfr/modal.hpp"

namespace sfr {

namespace {

// Scales v so its largest-magnitude entry is real and positive.
void canonicalize(Eigen::Ref<CVector> v) {
    Eigen::Index k = 0;
    v.cwiseAbs().maxCoeff(&k);
    const double mag = std::abs(v[k]);
    if (mag == 0.0) return;
    v *= std::conj(v[k]) / mag;
}

}  // namespace

EigenStructure eigendecompose(const Matrix& a, double tolerance) {
    if (a.rows() != a.cols()) throw DimensionError("eigendecompose needs a square matrix");
    if (!a.allFinite()) throw NumericalError("state matrix has non-finite entries");
    const Eigen::Index n = a.rows();

    Eigen::EigenSolver<Matrix> es(a, true);
    if (es.info() != Eigen::Success) throw NumericalError("eigenvalue iteration did not converge");
    const CVector lam = es.eigenvalues();
    const CMatrix vec = es.eigenvectors();

    // Groups: a real mode alone, or a conjugate pair led by its positive-imaginary member.
    std::vector<std::vector<Eigen::Index>> groups;
    std::vector<bool> used(n, false);
    for (Eigen::Index k = 0; k < n; ++k) {
        if (used[k]) continue;
        used[k] = true;
        if (lam[k].imag() == 0.0) {
            groups.push_back({k});
            continue;
        }
        Eigen::Index best = -1;
        double dist = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (used[j]) continue;
            const double d = std::abs(lam[j] - std::conj(lam[k]));
            if (best < 0 || d < dist) {
                best = j;
                dist = d;
            }
        }
        if (best < 0) throw NumericalError("complex eigenvalue without conjugate partner");
        used[best] = true;
        groups.push_back(lam[k].imag() > 0.0 ? std::vector<Eigen::Index>{k, best}
                                             : std::vector<Eigen::Index>{best, k});
    }
    std::stable_sort(groups.begin(), groups.end(), [&](const auto& g1, const auto& g2) {
        const Complex l1 = lam[g1[0]], l2 = lam[g2[0]];
        if (l1.real() != l2.real()) return l1.real() > l2.real();
        return std::abs(l1.imag()) < std::abs(l2.imag());
    });

    EigenStructure out;
    out.lambda.resize(n);
    out.v.resize(n, n);
    out.partner.assign(n, 0);
    Eigen::Index col = 0;
    for (const auto& g : groups) {
        out.lambda[col] = lam[g[0]];
        out.v.col(col) = vec.col(g[0]);
        canonicalize(out.v.col(col));
        if (g.size() == 1) {
            out.lambda[col] = Complex(lam[g[0]].real(), 0.0);
            out.v.col(col) = out.v.col(col).real().cast<Complex>();
            out.partner[col] = static_cast<int>(col);
            ++col;
        } else {
            out.lambda[col + 1] = std::conj(out.lambda[col]);
            out.v.col(col + 1) = out.v.col(col).conjugate();
            out.partner[col] = static_cast<int>(col + 1);
            out.partner[col + 1] = static_cast<int>(col);
            col += 2;
        }
    }

    Eigen::PartialPivLU<CMatrix> lu(out.v);
    out.w = lu.inverse().transpose();
    if (!out.w.allFinite()) throw NumericalError("eigenvector matrix is singular (defective state matrix)");
    for (Eigen::Index i = 0; i < n; ++i) {
        if (out.partner[i] == i)
            out.w.col(i) = out.w.col(i).real().cast<Complex>();
        else if (out.partner[i] > i)
            out.w.col(out.partner[i]) = out.w.col(i).conjugate();
    }

    out.biorthonormality_residual = (out.w.transpose() * out.v - CMatrix::Identity(n, n)).cwiseAbs().maxCoeff();
    const CMatrix recon = out.v * out.lambda.asDiagonal() * out.w.transpose();
    const double scale = std::max(a.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
    out.reconstruction_residual = (recon - a.cast<Complex>()).cwiseAbs().maxCoeff() / scale;
    if (out.biorthonormality_residual > tolerance) {
        std::ostringstream msg;
        msg << "biorthonormality residual " << out.biorthonormality_residual
            << " exceeds tolerance (defective or near-defective state matrix)";
        throw NumericalError(msg.str());
    }

    out.participation.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index k = 0; k < n; ++k) out.participation(k, i) = std::abs(out.w(k, i) * out.v(k, i));
    return out;
}

EigenStructure eigendecompose(const StateSpace& ss, double tolerance) { return eigendecompose(ss.a, tolerance); }

}  // namespace sfr
