#include <doctest.h>

#include <random>

#include <Eigen/SVD>

#include "anomalography/online.hpp"
#include "oracles.hpp"
#include "planted.hpp"

using namespace anomalography;
using namespace anomalography::online;

namespace {

struct SmallSlot {
    Matrix l;
    Matrix r;
    Observation obs;
};

SmallSlot random_slot(Eigen::Index n_links, Eigen::Index n_flows, Eigen::Index rho, double observe,
                      std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SmallSlot s;
    s.l = oracle::gaussian(n_links, rho, rng);
    s.r.resize(n_links, n_flows);
    for (Eigen::Index i = 0; i < n_links; ++i)
        for (Eigen::Index j = 0; j < n_flows; ++j) s.r(i, j) = u(rng) < 0.4 ? 1.0 : 0.0;
    std::vector<std::uint8_t> ind(static_cast<std::size_t>(n_links));
    for (auto& b : ind) b = u(rng) < observe ? 1 : 0;
    s.obs.mask = ObservationMask::from_indicator(ind);
    Vector a = Vector::Zero(n_flows);
    a[0] = 2.0;
    s.obs.y = (s.l * oracle::gaussian(rho, 1, rng) + s.r * a + 0.3 * oracle::gaussian(n_links, 1, rng))
                  .cwiseProduct(s.obs.mask.weights());
    s.obs.routing = std::make_shared<const RoutingMatrix>(RoutingMatrix::from_dense(s.r));
    s.obs.t = 1;
    return s;
}

std::vector<Observation> planted_stream(std::size_t horizon, double observe, std::uint64_t seed) {
    netsim::SynthConfig cfg = planted::config(6, 0.5, horizon, observe, seed);
    const auto sc = netsim::make_scenario(cfg);
    std::vector<Observation> out;
    for (const auto& s : sc.slots) out.push_back(s.obs);
    return out;
}

}  // namespace

TEST_CASE("empty mask gives zero estimates") {
    std::mt19937_64 rng(1);
    SmallSlot s = random_slot(6, 8, 3, 1.0, rng);
    s.obs.mask = ObservationMask::empty(6);
    s.obs.y.setZero();
    const SlotEstimate e = estimate_slot(s.l, s.obs, HyperParams{});
    CHECK(e.a_hat.isZero(0.0));
    CHECK(e.q_hat.isZero(0.0));
    CHECK(e.x_hat.isZero(0.0));
}

TEST_CASE("slot estimate attains the joint minimum (multi-start alternating oracle)") {
    std::mt19937_64 rng(2);
    HyperParams hp;
    hp.lambda_one = 0.2;
    hp.lambda_star = 0.5;
    hp.lasso_tol = 1e-12;
    hp.lasso_max_passes = 100000;
    for (int trial = 0; trial < 30; ++trial) {
        const SmallSlot s = random_slot(7, 6, 3, trial % 3 ? 0.8 : 1.0, rng);
        const SlotEstimate e = estimate_slot(s.l, s.obs, hp);
        const Vector w = s.obs.mask.weights();
        const double value =
            oracle::joint_objective(s.l, s.obs.y, w, s.r, e.q_hat, e.a_hat, hp.lambda_star, hp.lambda_one);
        CHECK(value == doctest::Approx(slot_cost(s.l, s.obs, e.q_hat, e.a_hat, hp)).epsilon(1e-12));
        double best = std::numeric_limits<double>::infinity();
        for (int start = 0; start < 10; ++start) {
            const Vector q0 = oracle::gaussian(3, 1, rng);
            const Vector a0 = oracle::gaussian(6, 1, rng);
            best = std::min(best, oracle::alternating_joint_solve(s.l, s.obs.y, w, s.r, hp.lambda_star, hp.lambda_one,
                                                                  q0, a0));
        }
        CHECK(std::abs(value - best) <= 1e-6);
        CHECK((e.x_hat - s.l * e.q_hat).norm() == 0.0);
    }
}

TEST_CASE("noiseless slot with the true subspace is recovered") {
    netsim::SynthConfig cfg = planted::config(6, 0.5, 5, 1.0, 3);
    cfg.noise_std = 0.0;
    cfg.anomaly_prob = 0.0;
    const auto sc = netsim::make_scenario(cfg);
    Matrix x(static_cast<Eigen::Index>(sc.topology.links.size()), 5);
    for (Eigen::Index t = 0; t < 5; ++t) x.col(t) = sc.slots[static_cast<std::size_t>(t)].x_true;
    // Large-norm basis of the true link-traffic subspace keeps the ridge bias below 1e-6.
    const Eigen::JacobiSVD<Matrix> svd(x, Eigen::ComputeThinU);
    const Matrix basis = 1e4 * svd.matrixU().leftCols(2);
    HyperParams hp;
    hp.rank = 2;
    for (const auto& slot : sc.slots) {
        const SlotEstimate e = estimate_slot(basis, slot.obs, hp);
        CHECK((e.x_hat - slot.x_true).norm() <= 1e-6 * slot.x_true.norm());
        CHECK(e.a_hat.isZero(0.0));
    }
}

TEST_CASE("online step with an empty mask only rescales the accumulators") {
    const auto stream = planted_stream(3, 1.0, 4);
    HyperParams hp;
    hp.beta = 0.9;
    const std::size_t n_links = stream.front().routing->links();
    OnlineState st = OnlineState::init(n_links, stream.front().routing->flows(), hp);
    online_step(st, stream[0]);
    const auto gram = st.gram;
    const auto cross = st.cross;
    Observation blank = stream[1];
    blank.mask = ObservationMask::empty(n_links);
    blank.y.setZero();
    const SlotEstimate e = online_step(st, blank);
    CHECK(e.a_hat.isZero(0.0));
    for (std::size_t l = 0; l < n_links; ++l) {
        CHECK((st.gram[l] - 0.9 * gram[l]).norm() <= 1e-15);
        CHECK((st.cross[l] - 0.9 * cross[l]).norm() <= 1e-15);
        const Vector row = (0.9 * gram[l] + hp.lambda_star * Matrix::Identity(5, 5)).llt().solve(Vector(0.9 * cross[l]));
        CHECK((st.subspace.row(static_cast<Eigen::Index>(l)).transpose() - row).norm() <= 1e-12);
    }
}

TEST_CASE("first online step follows the tabulated recursion") {
    const auto stream = planted_stream(1, 0.8, 5);
    HyperParams hp;
    const std::size_t n_links = stream.front().routing->links();
    OnlineState st = OnlineState::init(n_links, stream.front().routing->flows(), hp);
    const Matrix l0 = st.subspace;
    const SlotEstimate ref = estimate_slot(l0, stream[0], hp);
    const SlotEstimate e = online_step(st, stream[0]);
    CHECK((e.a_hat - ref.a_hat).norm() == 0.0);
    const Matrix dense = stream[0].routing->dense();
    for (std::size_t l = 0; l < n_links; ++l) {
        const auto li = static_cast<Eigen::Index>(l);
        const double w = stream[0].mask.observed(l) ? 1.0 : 0.0;
        const Matrix g = w * ref.q_hat * ref.q_hat.transpose();
        const Vector s = w * (stream[0].y[li] - dense.row(li).dot(ref.a_hat)) * ref.q_hat;
        const Vector row = (g + hp.lambda_star * Matrix::Identity(5, 5)).fullPivLu().solve(s);
        CHECK((st.subspace.row(li).transpose() - row).norm() <= 1e-12);
    }
    CHECK((e.x_hat - st.subspace * e.q_hat).norm() == 0.0);
    CHECK(st.t == 1);
}

TEST_CASE("slot order is enforced") {
    const auto stream = planted_stream(3, 1.0, 6);
    OnlineState st = OnlineState::init(stream.front().routing->links(), stream.front().routing->flows(), HyperParams{});
    CHECK_THROWS_AS(online_step(st, stream[1]), DimensionError);
}

TEST_CASE("fast RLS recursion matches direct inversion on a common estimate sequence") {
    const auto stream = planted_stream(500, 0.8, 7);
    HyperParams hp;
    hp.beta = 1.0;
    const std::size_t n_links = stream.front().routing->links();
    const std::size_t n_flows = stream.front().routing->flows();
    OnlineState direct = OnlineState::init(n_links, n_flows, hp);
    OnlineState fast = direct;
    double worst = 0.0;
    for (const auto& obs : stream) {
        SlotEstimate e = estimate_slot(direct.subspace, obs, hp, &direct.last_anomaly);
        SlotEstimate f = e;
        direct_update(direct, obs, e);
        rls_fast_update(fast, obs, f);
        worst = std::max(worst, (direct.subspace - fast.subspace).cwiseAbs().maxCoeff());
    }
    MESSAGE("max deviation " << worst);
    CHECK(worst <= 1e-8);

    hp.beta = 0.99;
    OnlineState bad = OnlineState::init(n_links, n_flows, hp);
    CHECK_THROWS_AS(rls_fast_step(bad, stream[0]), ConfigError);
}

TEST_CASE("fast and direct trackers agree over the first slots") {
    const auto stream = planted_stream(20, 1.0, 7);
    HyperParams hp;
    hp.beta = 1.0;
    OnlineState direct = OnlineState::init(stream.front().routing->links(), stream.front().routing->flows(), hp);
    OnlineState fast = direct;
    for (const auto& obs : stream) {
        online_step(direct, obs);
        rls_fast_step(fast, obs);
    }
    CHECK((direct.subspace - fast.subspace).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("fast RLS initial inverse and unobserved links") {
    const auto stream = planted_stream(2, 1.0, 8);
    HyperParams hp;
    hp.beta = 1.0;
    const std::size_t n_links = stream.front().routing->links();
    OnlineState st = OnlineState::init(n_links, stream.front().routing->flows(), hp);
    Observation first = stream[0];
    std::vector<std::uint8_t> ind(n_links, 1);
    ind[0] = 0;
    first.mask = ObservationMask::from_indicator(ind);
    first.y[0] = 0.0;
    rls_fast_step(st, first);
    CHECK((st.inverse[0] - Matrix::Identity(5, 5) / hp.lambda_star).norm() <= 1e-15);
    CHECK(st.subspace.row(0).isZero(0.0));
    OnlineState direct = OnlineState::init(n_links, stream.front().routing->flows(), hp);
    online_step(direct, first);
    CHECK((direct.subspace - st.subspace).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("gram accumulators stay symmetric") {
    const auto stream = planted_stream(10000, 0.9, 9);
    HyperParams hp;
    OnlineState st = OnlineState::init(stream.front().routing->links(), stream.front().routing->flows(), hp);
    for (const auto& obs : stream) online_step(st, obs);
    for (const Matrix& g : st.gram) {
        CHECK((g - g.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(g).eigenvalues().minCoeff() >= -1e-10);
    }
}

TEST_CASE("nesterov momentum sequence") {
    const auto stream = planted_stream(200, 1.0, 10);
    NesterovState st = NesterovState::init(stream.front().routing->links(), stream.front().routing->flows(), HyperParams{});
    CHECK(st.momentum == 1.0);
    double prev = st.momentum;
    double prev_mu = st.step_scale;
    for (std::size_t t = 0; t < stream.size(); ++t) {
        sgd_step(st, stream[t]);
        if (t == 0) CHECK(st.momentum == doctest::Approx(1.6180339887).epsilon(1e-10));
        CHECK(st.momentum > prev);
        CHECK(st.momentum >= static_cast<double>(t + 2) / 2.0 - 1.0);
        CHECK(st.step_scale >= prev_mu);
        prev = st.momentum;
        prev_mu = st.step_scale;
    }
}

TEST_CASE("accepted nesterov steps satisfy the quadratic bound") {
    const auto stream = planted_stream(150, 0.8, 11);
    HyperParams hp;
    NesterovState st = NesterovState::init(stream.front().routing->links(), stream.front().routing->flows(), hp, 0.05);
    for (std::size_t t = 0; t < stream.size(); ++t) {
        const Matrix base = st.extrapolated;
        const SlotEstimate ref = estimate_slot(st.current, stream[t], hp, &st.last_anomaly);
        sgd_step(st, stream[t]);
        const Matrix g = instantaneous_gradient(base, stream[t], ref.q_hat, ref.a_hat, t + 1, hp);
        const double f_base = instantaneous_cost(base, stream[t], ref.q_hat, ref.a_hat, t + 1, hp);
        const double f_new = instantaneous_cost(st.current, stream[t], ref.q_hat, ref.a_hat, t + 1, hp);
        const double model = f_base - g.squaredNorm() / (2.0 * st.step_scale);
        CHECK(f_new <= model + 1e-12 * std::max(1.0, std::abs(f_base)));
        CHECK((st.current - (base - g / st.step_scale)).norm() <= 1e-12 * std::max(1.0, base.norm()));
    }
}

TEST_CASE("zero gradient keeps the extrapolated point") {
    const auto stream = planted_stream(1, 1.0, 12);
    NesterovState st = NesterovState::init(stream.front().routing->links(), stream.front().routing->flows(), HyperParams{});
    st.current.setZero();
    st.previous.setZero();
    st.extrapolated.setZero();
    Observation obs = stream[0];
    obs.y.setZero();
    const SlotEstimate e = sgd_step(st, obs);
    CHECK(e.q_hat.isZero(0.0));
    CHECK(st.current.isZero(0.0));
    CHECK(st.momentum == doctest::Approx((1.0 + std::sqrt(5.0)) / 2.0));
    CHECK(st.last_backtracks == 0);
}

TEST_CASE("instantaneous gradient matches finite differences") {
    std::mt19937_64 rng(13);
    const SmallSlot s = random_slot(5, 4, 2, 0.8, rng);
    HyperParams hp;
    const Vector q = oracle::gaussian(2, 1, rng);
    const Vector a = oracle::gaussian(4, 1, rng);
    const Matrix g = instantaneous_gradient(s.l, s.obs, q, a, 7, hp);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < s.l.rows(); ++i)
        for (Eigen::Index j = 0; j < s.l.cols(); ++j) {
            Matrix up = s.l;
            Matrix dn = s.l;
            up(i, j) += h;
            dn(i, j) -= h;
            const double fd =
                (instantaneous_cost(up, s.obs, q, a, 7, hp) - instantaneous_cost(dn, s.obs, q, a, 7, hp)) / (2 * h);
            CHECK(g(i, j) == doctest::Approx(fd).epsilon(1e-6));
        }
}
