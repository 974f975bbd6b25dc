#pragma once

// One implicit step of the constrained 1D problem as a dense QP:
//   min 1/2 u'(I/tau + K)u - (u_prev/tau + f)'u
// over the stacked components, with linear inequality rows for each family.

#include <vector>

#include "oracles/dense_qp.hpp"

namespace oracle {

enum class StepFamily { Lower, Upper, L1, Gradient };

struct StepProblem {
    double length = 1.0;
    double tau = 0.1;
    std::vector<std::vector<double>> diffusion; ///< per component, nodal
    std::vector<std::vector<double>> u_prev;    ///< per component
    std::vector<std::vector<double>> f;         ///< per component
    std::vector<double> reaction;               ///< nodal, empty for none
    StepFamily family = StepFamily::Lower;
    std::vector<double> bound; ///< rho or psi at nodes; psi at cells for Gradient
};

inline std::vector<std::vector<double>> solve_step(const StepProblem& p) {
    const int nc = static_cast<int>(p.u_prev.size());
    const int n = static_cast<int>(p.u_prev[0].size());
    const int N = nc * n;
    const double h = p.length / (n + 1);
    Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(N, N);
    Eigen::VectorXd c(N);
    for (int k = 0; k < nc; ++k) {
        Q.block(k * n, k * n, n, n) =
            stiffness_1d(p.diffusion[k], p.length) + Eigen::MatrixXd::Identity(n, n) / p.tau;
        for (int i = 0; i < n; ++i) {
            c(k * n + i) = p.u_prev[k][i] / p.tau + p.f[k][i];
            if (!p.reaction.empty()) Q(k * n + i, k * n + i) += p.reaction[i];
        }
    }
    std::vector<Eigen::RowVectorXd> rows;
    std::vector<double> rhs;
    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(N);
    switch (p.family) {
    case StepFamily::Lower:
    case StepFamily::Upper: {
        const double s = p.family == StepFamily::Lower ? -1.0 : 1.0;
        for (int k = 0; k < nc; ++k)
            for (int i = 0; i < n; ++i) {
                Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(N);
                r(k * n + i) = s;
                rows.push_back(r);
                rhs.push_back(s * p.bound[i]);
                x0(k * n + i) = p.bound[i] - s;
            }
        break;
    }
    case StepFamily::L1:
        for (int i = 0; i < n; ++i)
            for (double s1 : {1.0, -1.0})
                for (double s2 : {1.0, -1.0}) {
                    Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(N);
                    r(i) = s1;
                    r(n + i) = s2;
                    rows.push_back(r);
                    rhs.push_back(p.bound[i]);
                }
        break;
    case StepFamily::Gradient:
        // cell c spans nodes c-1 and c, with zero values outside
        for (int cell = 0; cell <= n; ++cell)
            for (double s : {1.0, -1.0}) {
                Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(N);
                if (cell < n) r(cell) += s / h;
                if (cell > 0) r(cell - 1) -= s / h;
                rows.push_back(r);
                rhs.push_back(p.bound[cell]);
            }
        break;
    }
    Eigen::MatrixXd G(rows.size(), N);
    for (std::size_t r = 0; r < rows.size(); ++r) G.row(static_cast<Eigen::Index>(r)) = rows[r];
    const Eigen::VectorXd hv = Eigen::Map<const Eigen::VectorXd>(rhs.data(), static_cast<Eigen::Index>(rhs.size()));
    const QpResult res = active_set_qp(Q, c, G, hv, x0);
    std::vector<std::vector<double>> out(nc, std::vector<double>(n));
    for (int k = 0; k < nc; ++k)
        for (int i = 0; i < n; ++i) out[k][i] = res.x(k * n + i);
    return out;
}

} // namespace oracle
