#include "anomalography/sparse_solver.hpp"

namespace anomalography::lasso {

namespace {

void check(const LassoProblem& prob) {
    if (prob.design.rows() != prob.response.size()) throw DimensionError("lasso: design rows != response length");
    if (prob.warm_start && prob.warm_start->size() != prob.design.cols())
        throw DimensionError("lasso: warm start length != design columns");
    if (!all_finite(prob.design) || !all_finite(prob.response)) throw NumericalError("lasso: non-finite input");
    if (!(prob.lambda_one >= 0.0)) throw DimensionError("lasso: lambda must be nonnegative");
}

}  // namespace

double lasso_objective(const LassoProblem& prob, const Vector& a) {
    return 0.5 * (prob.response - prob.design * a).squaredNorm() + prob.lambda_one * a.lpNorm<1>();
}

LassoResult lasso_cd(const LassoProblem& prob, double tol, std::size_t max_passes) {
    check(prob);
    const DenseDesign design(prob.design);
    const Vector start = prob.warm_start ? *prob.warm_start : Vector::Zero(prob.design.cols());
    return lasso_cd_on(design, prob.response, prob.lambda_one, start, tol, max_passes);
}

double kkt_violation(const LassoProblem& prob, const Vector& a) {
    const DenseDesign design(prob.design);
    const Vector residual = prob.response - prob.design * a;
    return kkt_violation(design, a, residual, prob.lambda_one);
}

}  // namespace anomalography::lasso
