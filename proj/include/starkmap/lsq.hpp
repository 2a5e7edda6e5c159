#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

namespace starkmap {

struct LmOptions {
    int max_iter = 200;
    double xtol = 1e-8;   // relative step size
    double gtol = 1e-10;  // max-norm of the gradient J^T r
    double tau = 1e-3;    // initial damping relative to max diag(J^T J)
};

struct LmResult {
    Eigen::VectorXd x;
    Eigen::VectorXd residual;
    Eigen::MatrixXd jacobian;
    double cost = 0.0;  // 0.5 * |r|^2
    int iterations = 0;
    bool converged = false;
};

/// Levenberg-Marquardt with gain-ratio damping updates (Nielsen's rule) and
/// Marquardt diagonal scaling. `model(x, r, J)` fills residuals r (size m)
/// and the Jacobian J (m x n) at x. Deterministic for a deterministic model.
template <class Model>
LmResult levenberg_marquardt(Model&& model, Eigen::VectorXd x, int m, const LmOptions& opt = {}) {
    const auto n = x.size();
    LmResult out;
    Eigen::VectorXd r(m);
    Eigen::MatrixXd J(m, n);
    model(x, r, J);
    double cost = 0.5 * r.squaredNorm();
    Eigen::MatrixXd A = J.transpose() * J;
    Eigen::VectorXd g = J.transpose() * r;
    double mu = opt.tau * std::max(A.diagonal().maxCoeff(), 1e-300);
    double nu = 2.0;
    Eigen::VectorXd rn(m);
    Eigen::MatrixXd Jn(m, n);
    int it = 0;
    bool converged = g.lpNorm<Eigen::Infinity>() < opt.gtol;
    while (!converged && it < opt.max_iter) {
        ++it;
        Eigen::VectorXd scale = A.diagonal().cwiseMax(1e-12 * std::max(A.diagonal().maxCoeff(), 1e-300));
        Eigen::MatrixXd M = A;
        M.diagonal() += mu * scale;
        const Eigen::VectorXd h = M.ldlt().solve(-g);
        if (!h.allFinite()) break;
        if (h.norm() <= opt.xtol * (x.norm() + opt.xtol)) {
            converged = true;
            break;
        }
        const Eigen::VectorXd xn = x + h;
        model(xn, rn, Jn);
        const double cost_n = 0.5 * rn.squaredNorm();
        const double predicted = 0.5 * h.dot(mu * scale.cwiseProduct(h) - g);
        const double rho = predicted > 0.0 ? (cost - cost_n) / predicted : -1.0;
        if (rho > 0.0 && std::isfinite(cost_n)) {
            x = xn;
            r.swap(rn);
            J.swap(Jn);
            cost = cost_n;
            A = J.transpose() * J;
            g = J.transpose() * r;
            const double t = 2.0 * rho - 1.0;
            mu *= std::max(1.0 / 3.0, 1.0 - t * t * t);
            nu = 2.0;
            if (g.lpNorm<Eigen::Infinity>() < opt.gtol) converged = true;
        } else {
            mu *= nu;
            nu *= 2.0;
            if (!std::isfinite(mu) || mu > 1e300) break;
        }
    }
    out.x = std::move(x);
    out.residual = std::move(r);
    out.jacobian = std::move(J);
    out.cost = cost;
    out.iterations = it;
    out.converged = converged;
    return out;
}

/// Standard errors sqrt(diag(s^2 (J^T J)^-1)) with s^2 = |r|^2 / (m - n).
/// NaN entries when the normal matrix is singular or m <= n.
inline Eigen::VectorXd standard_errors(const Eigen::MatrixXd& J, const Eigen::VectorXd& r) {
    const auto m = J.rows(), n = J.cols();
    Eigen::VectorXd se = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
    if (m <= n) return se;
    const double s2 = r.squaredNorm() / static_cast<double>(m - n);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (sv(n - 1) <= 1e-14 * sv(0)) return se;
    const Eigen::MatrixXd V = svd.matrixV();
    for (Eigen::Index j = 0; j < n; ++j) {
        double v = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) v += V(j, k) * V(j, k) / (sv(k) * sv(k));
        se(j) = std::sqrt(s2 * v);
    }
    return se;
}

}  // namespace starkmap
