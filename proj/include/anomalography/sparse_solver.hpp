#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "anomalography/core.hpp"

namespace anomalography::lasso {

/// sign(x) * max(|x| - lambda, 0).
inline double soft_threshold(double x, double lambda) {
    const double mag = std::abs(x) - lambda;
    return mag > 0.0 ? std::copysign(mag, x) : 0.0;
}

/// Design given as a dense matrix; column f is c_f.
class DenseDesign {
public:
    explicit DenseDesign(const Matrix& m) : m_(&m), sq_norms_(m.colwise().squaredNorm().transpose()) {}

    Eigen::Index cols() const { return m_->cols(); }
    Eigen::Index rows() const { return m_->rows(); }
    double sq_norm(Eigen::Index f) const { return sq_norms_[f]; }
    double dot(Eigen::Index f, const Vector& r) const { return m_->col(f).dot(r); }
    void axpy(Eigen::Index f, double alpha, Vector& r) const { r.noalias() += alpha * m_->col(f); }

private:
    const Matrix* m_;
    Vector sq_norms_;
};

/// Columns Omega_t r_f of a routing matrix restricted to the observed links.
class MaskedRoutingDesign {
public:
    MaskedRoutingDesign(const RoutingMatrix& routing, const ObservationMask& mask) : routing_(&routing), mask_(&mask) {
        sq_norms_.resize(static_cast<Eigen::Index>(routing.flows()));
        for (std::size_t f = 0; f < routing.flows(); ++f) {
            double count = 0.0;
            for (std::size_t l : routing.flow_links(f)) count += mask.observed(l) ? 1.0 : 0.0;
            sq_norms_[static_cast<Eigen::Index>(f)] = count;
        }
    }

    Eigen::Index cols() const { return static_cast<Eigen::Index>(routing_->flows()); }
    Eigen::Index rows() const { return static_cast<Eigen::Index>(routing_->links()); }
    double sq_norm(Eigen::Index f) const { return sq_norms_[f]; }
    double dot(Eigen::Index f, const Vector& r) const {
        double s = 0.0;
        for (std::size_t l : routing_->flow_links(static_cast<std::size_t>(f)))
            if (mask_->observed(l)) s += r[static_cast<Eigen::Index>(l)];
        return s;
    }
    void axpy(Eigen::Index f, double alpha, Vector& r) const {
        for (std::size_t l : routing_->flow_links(static_cast<std::size_t>(f)))
            if (mask_->observed(l)) r[static_cast<Eigen::Index>(l)] += alpha;
    }

private:
    const RoutingMatrix* routing_;
    const ObservationMask* mask_;
    Vector sq_norms_;
};

/// Largest subgradient-condition violation at `a` given residual r = y - C a.
template <typename Design>
double kkt_violation(const Design& design, const Vector& a, const Vector& residual, double lambda) {
    double worst = 0.0;
    for (Eigen::Index f = 0; f < design.cols(); ++f) {
        if (design.sq_norm(f) == 0.0) continue;
        const double g = design.dot(f, residual);
        const double v = a[f] == 0.0 ? std::max(0.0, std::abs(g) - lambda) : std::abs(g - std::copysign(lambda, a[f]));
        worst = std::max(worst, v);
    }
    return worst;
}

/// One cyclic sweep over `coords`; returns the largest coordinate change.
/// Keeps `residual` equal to y - C a. Zero-norm columns are pinned at 0.
template <typename Design>
double cd_sweep(const Design& design, Vector& a, Vector& residual, double lambda,
                const std::vector<Eigen::Index>* coords = nullptr) {
    double max_change = 0.0;
    auto update = [&](Eigen::Index f) {
        const double norm2 = design.sq_norm(f);
        if (norm2 == 0.0) {
            a[f] = 0.0;
            return;
        }
        const double old = a[f];
        const double z = design.dot(f, residual) + norm2 * old;
        const double updated = soft_threshold(z, lambda) / norm2;
        const double delta = updated - old;
        if (delta != 0.0) {
            design.axpy(f, -delta, residual);
            a[f] = updated;
            max_change = std::max(max_change, std::abs(delta));
        }
    };
    if (coords) {
        for (Eigen::Index f : *coords) update(f);
    } else {
        for (Eigen::Index f = 0; f < design.cols(); ++f) update(f);
    }
    return max_change;
}

struct LassoResult {
    Vector a;
    std::size_t passes = 0;
    bool converged = false;
};

/// Cyclic coordinate descent for min_a 1/2 ||y - C a||^2 + lambda ||a||_1.
/// Full sweeps alternate with sweeps restricted to the current support; exits
/// once a full sweep moves no coordinate by more than tol * (1 + ||a||_inf) and
/// the subgradient conditions hold to within tol.
template <typename Design>
LassoResult lasso_cd_on(const Design& design, const Vector& response, double lambda, const Vector& start, double tol,
                        std::size_t max_passes) {
    LassoResult out;
    out.a = start;
    for (Eigen::Index f = 0; f < design.cols(); ++f)
        if (design.sq_norm(f) == 0.0) out.a[f] = 0.0;
    Vector residual = response;
    for (Eigen::Index f = 0; f < design.cols(); ++f)
        if (out.a[f] != 0.0) design.axpy(f, -out.a[f], residual);

    std::vector<Eigen::Index> support;
    while (out.passes < max_passes) {
        const double change = cd_sweep(design, out.a, residual, lambda);
        ++out.passes;
        const double scale = 1.0 + (out.a.size() ? out.a.cwiseAbs().maxCoeff() : 0.0);
        if (change <= tol * scale && kkt_violation(design, out.a, residual, lambda) <= tol) {
            out.converged = true;
            break;
        }
        support.clear();
        for (Eigen::Index f = 0; f < out.a.size(); ++f)
            if (out.a[f] != 0.0) support.push_back(f);
        while (!support.empty() && out.passes < max_passes) {
            const double inner = cd_sweep(design, out.a, residual, lambda, &support);
            ++out.passes;
            if (inner <= tol * scale) break;
        }
    }
    return out;
}

struct LassoProblem {
    Matrix design;
    Vector response;
    double lambda_one = 0.0;
    std::optional<Vector> warm_start;
};

/// 1/2 ||y - C a||^2 + lambda ||a||_1.
double lasso_objective(const LassoProblem& prob, const Vector& a);

LassoResult lasso_cd(const LassoProblem& prob, double tol, std::size_t max_passes);

/// KKT violation of `a` for the problem (recomputes the residual).
double kkt_violation(const LassoProblem& prob, const Vector& a);

}  // namespace anomalography::lasso
