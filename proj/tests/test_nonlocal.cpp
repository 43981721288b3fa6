#include <Eigen/Dense>
#include <cmath>

#include "doctest.h"
#include "nfield/nonlocal.hpp"
#include "test_util.hpp"

using namespace nf;

namespace {

struct Fixture {
    GridPtr grid;
    Weight weight;
    SymDecomposition dec;
    NonlocalMetric metric;

    explicit Fixture(const KernelSpec& spec, double lo = -6.0, double hi = 6.0,
                     int n = 129)
        : grid(make_grid_1d(lo, hi, n)), weight(Weight::constant(grid, 1.0)) {
        dec = decompose(assemble(spec, grid), weight);
        metric = build_metric(dec, weight);
    }
};

}  // namespace

TEST_CASE("rank-one metric from a constant kernel") {
    const double c = 2.0;
    GridPtr g = make_grid_1d(0.0, 1.0, 101);
    Weight w = Weight::constant(g, 1.0);
    SymDecomposition dec = decompose(assemble(KernelSpec::constant(c), g), w);
    NonlocalMetric m = build_metric(dec, w);

    // the integral operator u -> c <u,1> 1 has the single eigenvalue c
    // with constant eigenfunction
    CHECK(m.rank == 1);
    CHECK(m.eigenvalues[0] == doctest::Approx(c).epsilon(1e-6));
    for (Eigen::Index i = 0; i < g->size(); ++i)
        CHECK(m.eigenfields(i, 0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(m.sqrt_norm == doctest::Approx(std::sqrt(c)));
    CHECK(m.sqrt_pinv_norm == doctest::Approx(1.0 / std::sqrt(c)));
}

TEST_CASE("zero kernel has trivial subspace") {
    GridPtr g = make_grid_1d(0.0, 1.0, 33);
    Weight w = Weight::constant(g, 1.0);
    SymDecomposition dec = decompose(assemble(KernelSpec::constant(0.0), g), w);
    CHECK_THROWS_AS(build_metric(dec, w), TrivialSubspaceError);
}

TEST_CASE("indefinite kernel is rejected") {
    GridPtr g = make_grid_1d(-6.0, 6.0, 65);
    Weight w = Weight::constant(g, 1.0);
    Eigen::MatrixXd Wi(g->size(), g->size());
    for (Eigen::Index i = 0; i < g->size(); ++i)
        for (Eigen::Index j = 0; j < g->size(); ++j) {
            const double d = g->node(i)[0] - g->node(j)[0];
            Wi(i, j) = std::exp(-0.5 * d * d) - 0.8 * std::exp(-d * d / 8.0);
        }
    SymDecomposition dec = decompose(assemble(KernelSpec::table(Wi), g), w);
    CHECK_THROWS_AS(build_metric(dec, w), DefinitenessError);
}

TEST_CASE("gaussian metric spectral data") {
    Fixture fx(KernelSpec::gaussian());
    const NonlocalMetric& m = fx.metric;
    CHECK(m.rank > 1);
    for (int k = 1; k < m.rank; ++k) {
        CHECK(m.eigenvalues[k] > 0.0);
        CHECK(m.eigenvalues[k] <= m.eigenvalues[k - 1]);
    }

    // rho-orthonormality of the eigenfields
    for (int a = 0; a < std::min(m.rank, 6); ++a)
        for (int b = 0; b <= a; ++b) {
            const double ip =
                inner_product(m.eigenfields.col(a), m.eigenfields.col(b), fx.weight);
            CHECK(std::abs(ip - (a == b ? 1.0 : 0.0)) <= 1e-8);
        }

    // Hilbert-Schmidt consistency: sum lambda_i^2 <= ||w^||^2_{L2(rho x rho)}
    const Eigen::VectorXd d = fx.dec.dweights;
    double hs = 0.0;
    for (Eigen::Index i = 0; i < d.size(); ++i)
        for (Eigen::Index j = 0; j < d.size(); ++j)
            hs += fx.dec.sym(i, j) * fx.dec.sym(i, j) * d[i] * d[j];
    CHECK(m.eigenvalues.squaredNorm() <= hs + 1e-6);

    // spectral reconstruction of the weighted operator on random fields
    PathRng rng(5, 0);
    for (int t = 0; t < 5; ++t) {
        Eigen::VectorXd u = nftest::random_field(fx.grid, rng);
        const Eigen::VectorXd proj = m.project(u);
        const Eigen::VectorXd via_spectrum =
            m.eigenfields *
            m.eigenvalues.cwiseProduct(m.coefficients(u)).eval();
        const Eigen::VectorXd direct = fx.dec.sym * d.cwiseProduct(proj);
        CHECK((via_spectrum - direct).norm() <= 1e-6 * direct.norm());
    }
}

TEST_CASE("h1 norm formulas") {
    Fixture fx(KernelSpec::gaussian());
    const NonlocalMetric& m = fx.metric;
    const double l1 = m.eigenvalues[0], l2 = m.eigenvalues[1];

    Field e1(fx.grid, m.eigenfields.col(0));
    CHECK(h1_norm(m, e1) == doctest::Approx(1.0 / std::sqrt(l1)).epsilon(1e-9));

    Field scaled(fx.grid, std::sqrt(l1) * m.eigenfields.col(0));
    CHECK(h1_norm(m, scaled) == doctest::Approx(1.0).epsilon(1e-9));

    Field two(fx.grid, m.eigenfields.col(0) + m.eigenfields.col(1));
    const double expect = std::sqrt(1.0 / l1 + 1.0 / l2);
    CHECK(h1_norm(m, two) == doctest::Approx(expect).epsilon(1e-9));

    // cross-check: apply the pseudo-inverse square root matrix directly
    Eigen::MatrixXd pinv_sqrt =
        m.eigenfields *
        m.eigenvalues.cwiseSqrt().cwiseInverse().asDiagonal() *
        m.eigenfields.transpose() * m.dweights.asDiagonal();
    const double direct = weighted_norm(Eigen::VectorXd(pinv_sqrt * two.values),
                                        fx.weight);
    CHECK(h1_norm(m, two) == doctest::Approx(direct).epsilon(1e-8));
}

TEST_CASE("membership is enforced") {
    // rank-one metric: any non-constant field leaves H1
    GridPtr g = make_grid_1d(0.0, 1.0, 65);
    Weight w = Weight::constant(g, 1.0);
    SymDecomposition dec = decompose(assemble(KernelSpec::constant(1.0), g), w);
    NonlocalMetric m = build_metric(dec, w);
    Field ramp(g, nftest::eval_field(g, [](double x) { return x; }));
    CHECK_THROWS_AS(h1_norm(m, ramp), SubspaceMembershipError);
    CHECK_THROWS_AS(sqrt_apply(m, ramp, -1), SubspaceMembershipError);
}

TEST_CASE("sqrt_apply spectral action") {
    Fixture fx(KernelSpec::gaussian(), -6.0, 6.0, 65);
    const NonlocalMetric& m = fx.metric;

    Field e2(fx.grid, m.eigenfields.col(2));
    Field up = sqrt_apply(m, e2, +1);
    CHECK((up.values - std::sqrt(m.eigenvalues[2]) * e2.values).norm() <=
          1e-8 * up.values.norm());

    // round trip on random u in H1
    PathRng rng(13, 0);
    Eigen::VectorXd c(m.rank);
    rng.fill_normal(c);
    Field u(fx.grid, m.eigenfields * c);
    Field back = sqrt_apply(m, sqrt_apply(m, u, +1), -1);
    CHECK((back.values - u.values).norm() <= 1e-8 * u.values.norm());

    // ||(+-K^)^{1/2} v|| <= sqrt(lambda_1) ||v||, against the dense
    // operator square root as an independent route
    const Eigen::VectorXd sqd = m.dweights.cwiseSqrt();
    Eigen::MatrixXd G = sqd.asDiagonal() * fx.dec.sym * sqd.asDiagonal();
    G = 0.5 * (G + G.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
    // same kernel convention as the metric: modes below rank_tol vanish
    const double cut = m.rank_tol * es.eigenvalues().maxCoeff();
    Eigen::VectorXd clipped = es.eigenvalues();
    for (Eigen::Index i = 0; i < clipped.size(); ++i)
        if (clipped[i] <= cut) clipped[i] = 0.0;
    const Eigen::MatrixXd Gs = es.eigenvectors() *
                               clipped.cwiseSqrt().asDiagonal() *
                               es.eigenvectors().transpose();
    for (int t = 0; t < 10; ++t) {
        Eigen::VectorXd v = nftest::random_field(fx.grid, rng);
        Field anyv(fx.grid, v);
        Field sv = sqrt_apply(m, anyv, +1);
        const double nv = weighted_norm(v, fx.weight);
        CHECK(weighted_norm(sv.values, fx.weight) <= m.sqrt_norm * nv + 1e-8);
        // dense route in l2 coordinates
        const Eigen::VectorXd dense = sqd.cwiseInverse().cwiseProduct(
            Gs * sqd.cwiseProduct(v));
        CHECK((sv.values - dense).norm() <= 1e-6 * (dense.norm() + 1.0));
    }
}

TEST_CASE("embedding bound on random H1 fields") {
    Fixture fx(KernelSpec::gaussian(), -6.0, 6.0, 65);
    const NonlocalMetric& m = fx.metric;
    PathRng rng(17, 0);
    for (int t = 0; t < 100; ++t) {
        Eigen::VectorXd c(m.rank);
        rng.fill_normal(c);
        Field u(fx.grid, m.eigenfields * c);
        const double nrm = weighted_norm(u.values, fx.weight);
        CHECK(nrm <= m.sqrt_norm * h1_norm(m, u) + 1e-8);
    }
}

TEST_CASE("compact ball cover") {
    // rank-one metric: tail vanishes after one mode
    GridPtr g = make_grid_1d(0.0, 1.0, 33);
    Weight w = Weight::constant(g, 1.0);
    NonlocalMetric m1 =
        build_metric(decompose(assemble(KernelSpec::constant(1.0), g), w), w);
    CHECK(compact_ball_cover(m1, 5.0, 1e-6) == 1);
    // whole ball within eps of the origin
    CHECK(compact_ball_cover(m1, 1.0, std::sqrt(m1.eigenvalues[0]) * 1.001) == 0);

    Fixture fx(KernelSpec::gaussian());
    const int r = compact_ball_cover(fx.metric, 1.0, 1e-3);
    CHECK(r >= 1);
    CHECK(r <= fx.metric.rank);
    // verify the tail bound directly from the eigenvalue list
    double tail = 0.0;
    for (int i = r; i < fx.metric.rank; ++i) tail += fx.metric.eigenvalues[i];
    CHECK(std::sqrt(tail) * 1.0 <= 1e-3);
    if (r > 0) {
        double tail_prev = tail + fx.metric.eigenvalues[r - 1];
        CHECK(std::sqrt(tail_prev) * 1.0 > 1e-3);  // r is minimal
    }
    // monotone non-increasing in eps
    CHECK(compact_ball_cover(fx.metric, 1.0, 1e-4) >= r);
    CHECK_THROWS_AS(compact_ball_cover(fx.metric, -1.0, 1e-3), ConstraintError);
}

TEST_CASE("antisymmetric domination constant") {
    GridPtr g = make_grid_1d(0.0, 1.0, 33);
    Weight w = Weight::constant(g, 1.0);

    // symmetric kernel: C_K~ = 0
    Fixture fx(KernelSpec::gaussian(), -6.0, 6.0, 65);
    CHECK(antisym_domination(fx.metric, fx.dec) == 0.0);

    // discrete-delta symmetric part (identity operator) plus a small
    // antisymmetric table: C_K~ = ||A~|| in l2 coordinates
    const Eigen::VectorXd q = g->quad();
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(g->size(), g->size());
    for (Eigen::Index i = 0; i < g->size(); ++i) W(i, i) = 1.0 / q[i];
    PathRng rng(23, 0);
    Eigen::MatrixXd S(g->size(), g->size());
    for (Eigen::Index i = 0; i < g->size(); ++i)
        for (Eigen::Index j = 0; j < g->size(); ++j) S(i, j) = 0.02 * rng.normal();
    W += S - S.transpose();
    SymDecomposition dec = decompose(assemble(KernelSpec::table(W), g), w);
    REQUIRE(dec.definiteness == Definiteness::non_negative);
    NonlocalMetric m = build_metric(dec, w);
    REQUIRE(m.rank == g->size());

    const Eigen::VectorXd sqd = dec.dweights.cwiseSqrt();
    const Eigen::MatrixXd At = sqd.asDiagonal() * dec.antisym * sqd.asDiagonal();
    Eigen::BDCSVD<Eigen::MatrixXd> svd(At);
    const double expected = svd.singularValues()[0];
    CHECK(antisym_domination(m, dec) == doctest::Approx(expected).epsilon(1e-8));

    // rank-one symmetric part cannot dominate a generic antisymmetric part
    Eigen::MatrixXd W2(g->size(), g->size());
    for (Eigen::Index i = 0; i < g->size(); ++i)
        for (Eigen::Index j = 0; j < g->size(); ++j)
            W2(i, j) = 1.0 + 0.1 * (g->node(i)[0] - g->node(j)[0]);
    SymDecomposition dec2 = decompose(assemble(KernelSpec::table(W2), g), w);
    NonlocalMetric m2 = build_metric(dec2, w);
    CHECK(std::isinf(antisym_domination(m2, dec2)));
}
