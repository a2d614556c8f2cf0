#include <doctest.h>

#include <algorithm>
#include <random>

#include <Eigen/SVD>

#include "anomalography/eval.hpp"
#include "oracles.hpp"
#include "planted.hpp"

using namespace anomalography;
using namespace anomalography::eval;

namespace {

std::vector<Observation> planted_stream(std::size_t horizon, double observe, std::uint64_t seed) {
    const auto sc = netsim::make_scenario(planted::config(6, 0.5, horizon, observe, seed));
    std::vector<Observation> out;
    for (const auto& s : sc.slots) out.push_back(s.obs);
    return out;
}

}  // namespace

TEST_CASE("perfect estimate") {
    std::mt19937_64 rng(1);
    Matrix a = oracle::gaussian(5, 8, rng);
    a = (a.array().abs() > 1.0).select(a, 0.0);
    const DetectionReport r = detection_rates(a, a, 0.1);
    CHECK(*r.p_d == 1.0);
    CHECK(*r.p_fa == 0.0);
}

TEST_CASE("two anomalies among ten entries") {
    Matrix truth = Matrix::Zero(2, 5);
    truth(0, 1) = 1.0;
    truth(1, 3) = -1.0;
    Matrix est = Matrix::Zero(2, 5);
    est(0, 1) = 0.8;
    est(1, 4) = 0.3;
    const DetectionReport r = detection_rates(est, truth, 0.1);
    CHECK(r.positives == 2);
    CHECK(r.negatives == 8);
    CHECK(*r.p_d == 0.5);
    CHECK(*r.p_fa == doctest::Approx(1.0 / 8.0));
    CHECK(r.true_detections == 1);
    CHECK(r.false_alarms == 1);

    const DetectionReport sparse =
        detection_rates(AnomalyMap::from_dense(est), AnomalyMap::from_dense(truth), 0.1);
    CHECK(*sparse.p_d == 0.5);
    CHECK(*sparse.p_fa == doctest::Approx(1.0 / 8.0));
}

TEST_CASE("undefined rates") {
    const Matrix zero = Matrix::Zero(3, 3);
    const DetectionReport r = detection_rates(zero, zero, 0.1);
    CHECK_FALSE(r.p_d.has_value());
    CHECK(*r.p_fa == 0.0);
    const DetectionReport all = detection_rates(zero, Matrix::Ones(3, 3), 0.1);
    CHECK_FALSE(all.p_fa.has_value());
    CHECK(*all.p_d == 0.0);
    CHECK_THROWS_AS(detection_rates(zero, Matrix::Zero(3, 4), 0.1), DimensionError);
}

TEST_CASE("roc degenerate thresholds and monotonicity") {
    std::mt19937_64 rng(2);
    const Matrix scores = oracle::gaussian(10, 30, rng);
    Matrix truth = Matrix::Zero(10, 30);
    std::uniform_int_distribution<int> row(0, 9);
    std::uniform_int_distribution<int> col(0, 29);
    for (int k = 0; k < 25; ++k) truth(row(rng), col(rng)) = 1.0;

    const DetectionReport low = detection_rates(scores, truth, 0.0, 0.5);
    CHECK(*low.p_d == 1.0);
    CHECK(*low.p_fa == 1.0);
    const double top = scores.cwiseAbs().maxCoeff();
    const DetectionReport high = detection_rates(scores, truth, std::nextafter(top, 10.0), 0.5);
    CHECK(*high.p_d == 0.0);
    CHECK(*high.p_fa == 0.0);

    const auto grid = threshold_grid(scores, 40);
    CHECK(grid.size() == 40);
    CHECK(grid.front() == 0.0);
    CHECK(grid.back() == top);
    const auto roc = roc_sweep(scores, truth, grid, 0.5);
    for (std::size_t i = 1; i < roc.size(); ++i) {
        CHECK(*roc[i].p_fa <= *roc[i - 1].p_fa);
        CHECK(*roc[i].p_d <= *roc[i - 1].p_d);
    }
    for (const auto& r : roc) {
        const double dp = *r.p_d * static_cast<double>(r.positives);
        const double fp = *r.p_fa * static_cast<double>(r.negatives);
        CHECK(std::abs(dp - std::round(dp)) < 1e-9);
        CHECK(std::abs(fp - std::round(fp)) < 1e-9);
    }
    const double auc = roc_auc(roc);
    CHECK(auc >= 0.0);
    CHECK(auc <= 1.0);
}

TEST_CASE("auc of ideal and chance curves") {
    std::vector<DetectionReport> ideal(1);
    ideal[0].p_d = 1.0;
    ideal[0].p_fa = 0.0;
    CHECK(roc_auc(ideal) == doctest::Approx(1.0));
    std::vector<DetectionReport> chance(1);
    chance[0].p_d = 0.3;
    chance[0].p_fa = 0.3;
    CHECK(roc_auc(chance) == doctest::Approx(0.5));
    std::vector<DetectionReport> none;
    CHECK(roc_auc(none) == doctest::Approx(0.5));
}

TEST_CASE("error trace matches recomputation") {
    std::mt19937_64 rng(3);
    ErrorTrace trace;
    std::vector<Vector> da;
    std::vector<Vector> dx;
    for (int t = 0; t < 100; ++t) {
        const Vector ah = oracle::gaussian(6, 1, rng);
        const Vector at = oracle::gaussian(6, 1, rng);
        const Vector xh = oracle::gaussian(4, 1, rng);
        const Vector xt = oracle::gaussian(4, 1, rng);
        trace.push(ah, at, xh, xt);
        da.push_back(ah - at);
        dx.push_back(xh - xt);
    }
    for (std::size_t t = 1; t <= 100; ++t) {
        double sa = 0.0;
        double sx = 0.0;
        for (std::size_t k = 0; k < t; ++k) {
            sa += da[k].squaredNorm();
            sx += dx[k].squaredNorm();
        }
        CHECK(std::abs(trace.anomaly_error(t) - sa / static_cast<double>(t)) <= 1e-10);
        CHECK(std::abs(trace.traffic_error(t) - sx / static_cast<double>(t)) <= 1e-10);
    }
}

TEST_CASE("target cost with only empty masks") {
    auto stream = planted_stream(5, 1.0, 4);
    for (auto& obs : stream) {
        obs.mask = ObservationMask::empty(obs.routing->links());
        obs.y.setZero();
    }
    std::mt19937_64 rng(4);
    const HyperParams hp;
    const Matrix l = oracle::gaussian(static_cast<Eigen::Index>(stream[0].routing->links()), 5, rng);
    const double expect = hp.lambda_star * l.squaredNorm() / 10.0;
    CHECK(target_cost(l, stream, hp) == doctest::Approx(expect).epsilon(1e-14));
    std::vector<SlotRecord> recs(5, SlotRecord{Vector::Zero(5), Vector::Zero(static_cast<Eigen::Index>(stream[0].routing->flows()))});
    CHECK(approx_cost(l, stream, recs, hp) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("single slot target cost against the alternating oracle") {
    const auto stream = planted_stream(1, 0.8, 5);
    HyperParams hp;
    hp.lasso_tol = 1e-12;
    std::mt19937_64 rng(5);
    const auto n_links = static_cast<Eigen::Index>(stream[0].routing->links());
    const auto n_flows = static_cast<Eigen::Index>(stream[0].routing->flows());
    const Matrix l = oracle::gaussian(n_links, 5, rng);
    const Matrix r = stream[0].routing->dense();
    const Vector w = stream[0].mask.weights();
    double best = std::numeric_limits<double>::infinity();
    for (int s = 0; s < 10; ++s)
        best = std::min(best, oracle::alternating_joint_solve(l, stream[0].y, w, r, hp.lambda_star, hp.lambda_one,
                                                              oracle::gaussian(5, 1, rng), oracle::gaussian(n_flows, 1, rng)));
    CHECK(std::abs(target_cost(l, stream, hp) - (best + 0.5 * hp.lambda_star * l.squaredNorm())) <= 1e-6);
}

TEST_CASE("approx cost duplicate formula") {
    const auto stream = planted_stream(1, 1.0, 6);
    const HyperParams hp;
    std::mt19937_64 rng(6);
    const auto n_links = static_cast<Eigen::Index>(stream[0].routing->links());
    const auto n_flows = static_cast<Eigen::Index>(stream[0].routing->flows());
    const Matrix l = oracle::gaussian(n_links, 5, rng);
    const SlotRecord rec{oracle::gaussian(5, 1, rng), oracle::gaussian(n_flows, 1, rng)};
    const Vector res = stream[0].y - l * rec.q - stream[0].routing->dense() * rec.a;
    const double expect = 0.5 * res.squaredNorm() + 0.5 * hp.lambda_star * rec.q.squaredNorm() +
                          hp.lambda_one * rec.a.lpNorm<1>() + 0.5 * hp.lambda_star * l.squaredNorm();
    const std::vector<SlotRecord> recs{rec};
    CHECK(std::abs(approx_cost(l, stream, recs, hp) - expect) <= 1e-12 * std::max(1.0, expect));
}

TEST_CASE("approximate cost dominates the target cost along a tracker run") {
    const auto stream = planted_stream(200, 0.8, 7);
    const HyperParams hp;
    online::OnlineState st =
        online::OnlineState::init(stream[0].routing->links(), stream[0].routing->flows(), hp);
    std::vector<SlotRecord> recs;
    for (std::size_t t = 0; t < stream.size(); ++t) {
        const auto e = online::online_step(st, stream[t]);
        recs.push_back({e.q_hat, e.a_hat});
        if (t % 10 != 9) continue;
        const std::span<const Observation> hist(stream.data(), t + 1);
        const double c = target_cost(st.subspace, hist, hp);
        const double ch = approx_cost(st.subspace, hist, recs, hp);
        CHECK(ch >= c - 1e-9 * std::max(1.0, c));
    }
}

TEST_CASE("target cost gradient matches finite differences") {
    const auto stream = planted_stream(4, 1.0, 8);
    HyperParams hp;
    hp.rank = 2;
    hp.lasso_tol = 1e-13;
    hp.lasso_max_passes = 1000000;
    std::mt19937_64 rng(8);
    const Matrix l = oracle::gaussian(static_cast<Eigen::Index>(stream[0].routing->links()), 2, rng);
    const Matrix g = target_cost_gradient(l, stream, hp);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < 3; ++i)
        for (Eigen::Index j = 0; j < 2; ++j) {
            Matrix up = l;
            Matrix dn = l;
            up(i, j) += h;
            dn(i, j) -= h;
            const double fd = (target_cost(up, stream, hp) - target_cost(dn, stream, hp)) / (2 * h);
            CHECK(g(i, j) == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
        }
}

TEST_CASE("pca detector on rank-one data") {
    std::mt19937_64 rng(9);
    const Matrix y = oracle::gaussian(6, 1, rng) * oracle::gaussian(1, 40, rng);
    const Vector energy = pca_residual_energy(y, 1);
    CHECK(energy.maxCoeff() <= 1e-20 * y.squaredNorm());
    const auto flags = pca_residual_detector(y, 1, 1e-12);
    CHECK(std::none_of(flags.begin(), flags.end(), [](bool b) { return b; }));
    const Matrix mask = Matrix::Ones(6, 40);
    CHECK_NOTHROW(pca_residual_detector(y, 1, 1e-12, &mask));
    Matrix gaps = mask;
    gaps(2, 3) = 0.0;
    CHECK_THROWS_AS(pca_residual_detector(y, 1, 1e-12, &gaps), DimensionError);
}

TEST_CASE("pca detector flags a spiked slot") {
    Vector u(4);
    u << 1.0, 1.0, 0.0, 0.0;
    Vector spike(4);
    spike << 0.0, 0.0, 3.0, 0.0;
    Matrix y(4, 30);
    for (Eigen::Index t = 0; t < 30; ++t) y.col(t) = (1.0 + 0.1 * static_cast<double>(t)) * u;
    y.col(12) = spike;
    const Vector energy = pca_residual_energy(y, 1);
    CHECK(energy[12] == doctest::Approx(9.0).epsilon(1e-10));
    for (double thr : {0.5, 4.0, 8.9}) {
        const auto flags = pca_residual_detector(y, 1, thr);
        for (std::size_t t = 0; t < 30; ++t) CHECK(flags[t] == (t == 12));
    }
    const auto none = pca_residual_detector(y, 1, 9.1);
    CHECK_FALSE(none[12]);
}

TEST_CASE("pca flags are invariant to slot permutation") {
    std::mt19937_64 rng(10);
    const Matrix y = oracle::gaussian(8, 3, rng) * oracle::gaussian(3, 50, rng) + 0.1 * oracle::gaussian(8, 50, rng);
    std::vector<Eigen::Index> perm(50);
    for (Eigen::Index i = 0; i < 50; ++i) perm[static_cast<std::size_t>(i)] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix yp(8, 50);
    for (Eigen::Index i = 0; i < 50; ++i) yp.col(i) = y.col(perm[static_cast<std::size_t>(i)]);
    const Vector e = pca_residual_energy(y, 2);
    const Vector ep = pca_residual_energy(yp, 2);
    const double thr = 0.5 * (e.minCoeff() + e.maxCoeff());
    const auto f = pca_residual_detector(y, 2, thr);
    const auto fp = pca_residual_detector(yp, 2, thr);
    for (Eigen::Index i = 0; i < 50; ++i) {
        CHECK(ep[i] == doctest::Approx(e[perm[static_cast<std::size_t>(i)]]).epsilon(1e-9));
        CHECK(fp[static_cast<std::size_t>(i)] == f[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
    }
}

TEST_CASE("anomography recovers a single flow anomaly") {
    Matrix dense(4, 3);
    dense << 1, 0, 1,
             0, 1, 1,
             1, 1, 0,
             0, 0, 1;
    const RoutingMatrix r = RoutingMatrix::from_dense(dense);
    CHECK(anomography_l1(Matrix::Zero(4, 5), 1, r).isZero(0.0));

    Vector u(4);
    u << 0.0, 0.0, 0.0, 1.0;
    Matrix y(4, 10);
    for (Eigen::Index t = 0; t < 10; ++t) y.col(t) = (5.0 + static_cast<double>(t)) * u;
    y.col(6) = 2.0 * dense.col(0);
    const Matrix a = anomography_l1(y, 1, r);
    const oracle::LassoOracle o = oracle::brute_force_lasso(dense, 2.0 * dense.col(0), 1e-4 * 4.0);
    for (Eigen::Index f = 0; f < 3; ++f) CHECK((a(f, 6) != 0.0) == (o.a[f] != 0.0));
    CHECK(a(0, 6) == doctest::Approx(2.0).epsilon(1e-3));
    for (Eigen::Index t = 0; t < 10; ++t)
        if (t != 6) CHECK(a.col(t).norm() <= 1e-9);
}

TEST_CASE("benchmark extraction") {
    HyperParams hp;
    hp.rank = 3;
    const Matrix ones = Matrix::Ones(30, 60);
    const BenchmarkExtract empty = benchmark_anomaly_extract(Matrix::Zero(30, 60), ones, hp);
    CHECK(empty.benchmark.nonzeros() == 0);

    std::mt19937_64 rng(11);
    Matrix y = 0.1 * oracle::gaussian(30, 1, rng) * oracle::gaussian(1, 60, rng);
    const std::vector<std::pair<int, int>> spikes{{3, 10}, {17, 25}, {29, 50}};
    // Amplitude chosen so that each spike is at least 10x the extraction threshold.
    const double amp = 5.0;
    for (const auto& [f, t] : spikes) y(f, t) += (t % 2 ? -amp : amp);
    const double threshold = 50.0 * y.norm() / (30.0 * 60.0);
    REQUIRE(amp >= 10.0 * threshold);
    const BenchmarkExtract ex = benchmark_anomaly_extract(y, ones, hp);
    CHECK(ex.threshold == doctest::Approx(threshold));
    for (const auto& [f, t] : spikes) CHECK(std::abs(ex.solution.a_dense(f, t)) > ex.threshold);
    CHECK(ex.benchmark.nonzeros() >= spikes.size());
    const Eigen::JacobiSVD<Matrix> svd(ex.x_hat);
    const Vector sv = svd.singularValues();
    for (Eigen::Index i = 3; i < sv.size(); ++i) CHECK(sv[i] <= 1e-10 * sv[0]);
    CHECK_THROWS_AS(benchmark_anomaly_extract(y, Matrix::Ones(30, 59), hp), DimensionError);
}
