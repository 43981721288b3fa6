#include <cmath>

#include "doctest.h"
#include "nfield/kernel.hpp"
#include "test_util.hpp"

using namespace nf;

TEST_CASE("catalogue point values") {
    // wizard hat at 0: (1/4)(1-0)e^0
    KernelSpec wh = KernelSpec::wizard_hat();
    CHECK(wh.eval_offset({0.0, 0.0}, 1) == doctest::Approx(0.25));
    // mexican hat at 0 and |x| = 1
    KernelSpec mh = KernelSpec::mexican_hat();
    CHECK(mh.eval_offset({0.0, 0.0}, 1) == doctest::Approx(1.0));
    CHECK(mh.eval_offset({1.0, 0.0}, 1) == doctest::Approx(0.0));
    // sinc at 0 is 1 by definition
    CHECK(KernelSpec::sinc_product().eval_offset({0.0, 0.0}, 1) == 1.0);
}

TEST_CASE("catalogue constraints name the inequality") {
    CHECK_THROWS_WITH_AS(KernelSpec::mexican_hat2(0.5, 1.0),
                         doctest::Contains("sqrt(2) <= s <= sqrt(2)/A"),
                         ConstraintError);
    CHECK_THROWS_WITH_AS(KernelSpec::mexican_hat2(0.9, 2.0),
                         doctest::Contains("sqrt(2) <= s <= sqrt(2)/A"),
                         ConstraintError);
    CHECK_THROWS_WITH_AS(KernelSpec::mexican_hat3(0.8, 2.0, 1.0),
                         doctest::Contains("Gamma <= gamma2/gamma1"),
                         ConstraintError);
    CHECK_THROWS_AS(KernelSpec::mexican_hat3(0.4, 1.0, 2.0), ConstraintError);
    CHECK_THROWS_AS(KernelSpec::cosine_sum({0.5, 0.2}, {{1.0, 0.0}, {2.0, 0.0}}),
                    ConstraintError);
    CHECK_THROWS_AS(KernelSpec::cosine_sum({0.5, 0.5}, {{1.0, 0.0}, {-1.0, 0.0}}),
                    ConstraintError);
    CHECK_THROWS_AS(KernelSpec::damped_trig(0.0), ConstraintError);
}

TEST_CASE("assemble") {
    GridPtr g = make_grid_1d(0.0, 1.0, 21);
    KernelOperator K = assemble(KernelSpec::constant(0.3), g);
    CHECK(K.convolutional);
    CHECK((K.matrix.array() == 0.3).all());

    // matrix entries equal the closed-form kernel at node pairs
    KernelOperator G = assemble(KernelSpec::gaussian(2.0), g);
    const double x3 = g->coord(0, 3), x17 = g->coord(0, 17);
    CHECK(G.matrix(3, 17) ==
          doctest::Approx(std::exp(-0.5 * 2.0 * (x3 - x17) * (x3 - x17))));
}

TEST_CASE("apply against quadrature oracle") {
    GridPtr g = make_grid_1d(0.0, 1.0, 101);
    const double c = 1.3;
    KernelOperator K = assemble(KernelSpec::constant(c), g);
    Field one = Field::constant(g, 1.0);
    Field out = apply(K, one);
    for (Eigen::Index i = 0; i < g->size(); ++i)
        CHECK(out.values[i] == doctest::Approx(c).epsilon(2 * g->spacing(0)));

    // linearity: zero in, zero out
    Field z = apply(K, Field::zero(g));
    CHECK(z.values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fast convolution path equals dense apply") {
    GridPtr g = make_grid_1d(-8.0, 8.0, 257);
    KernelOperator K = assemble(KernelSpec::gaussian(), g);
    // indicator of [-1, 1]
    Eigen::VectorXd u = nftest::eval_field(
        g, [](double x) { return std::abs(x) <= 1.0 ? 1.0 : 0.0; });
    const Eigen::VectorXd a = apply_dense(K, u);
    const Eigen::VectorXd b = apply_fast(K, u);
    CHECK((a - b).norm() / a.norm() <= 1e-10);

    PathRng rng(7, 0);
    for (int t = 0; t < 10; ++t) {
        Eigen::VectorXd r = nftest::random_field(g, rng);
        const Eigen::VectorXd da = apply_dense(K, r);
        const Eigen::VectorXd fa = apply_fast(K, r);
        CHECK((da - fa).norm() <= 1e-10 * da.norm());
    }
}

TEST_CASE("fast convolution in 2d") {
    GridPtr g = make_grid_2d(-3.0, 3.0, 17, -3.0, 3.0, 19);
    KernelOperator K = assemble(KernelSpec::gaussian(), g);
    PathRng rng(9, 1);
    Eigen::VectorXd r = nftest::random_field(g, rng);
    const Eigen::VectorXd da = apply_dense(K, r);
    const Eigen::VectorXd fa = apply_fast(K, r);
    CHECK((da - fa).norm() <= 1e-10 * da.norm());
}

namespace {

// independent oracle: power iteration on M^T M for the top singular value
double power_iteration_norm(const Eigen::MatrixXd& M, int iters = 2000) {
    Eigen::VectorXd v = Eigen::VectorXd::Ones(M.cols()).normalized();
    double s = 0.0;
    for (int k = 0; k < iters; ++k) {
        v = M.transpose() * (M * v);
        s = std::sqrt(v.norm());
        v.normalize();
    }
    return s;
}

}  // namespace

TEST_CASE("operator norm") {
    GridPtr g = make_grid_1d(0.0, 1.0, 101);
    Weight w = Weight::constant(g, 1.0);

    // rank-one u -> c <u,1> 1 with ||1|| = 1
    const double c = -0.8;
    KernelOperator K = assemble(KernelSpec::constant(c), g);
    CHECK(operator_norm(K, w) == doctest::Approx(std::abs(c)).epsilon(1e-6));

    KernelOperator Z = assemble(KernelSpec::constant(0.0), g);
    CHECK(operator_norm(Z, w) == doctest::Approx(0.0));

    // gaussian on [-8,8]: SVD vs power iteration, two independent routes
    GridPtr gb = make_grid_1d(-8.0, 8.0, 513);
    Weight wb = Weight::constant(gb, 1.0);
    KernelOperator G = assemble(KernelSpec::gaussian(), gb);
    const Eigen::VectorXd sq =
        wb.rho.cwiseProduct(gb->quad()).cwiseSqrt();
    const Eigen::MatrixXd M = sq.asDiagonal() * G.matrix *
                              gb->quad().cwiseQuotient(sq).asDiagonal();
    const double svd_norm = operator_norm(G, wb);
    CHECK(std::abs(svd_norm - power_iteration_norm(M)) <= 1e-8 * svd_norm);

    // analytic bounds hold on this data
    NormReport rep = operator_norm_report(G, wb);
    CHECK(rep.within_bounds);
    REQUIRE(rep.sqrt_kappa.has_value());
    CHECK(svd_norm <= *rep.sqrt_kappa + 1e-8);

    CHECK_THROWS_AS(operator_norm(K, Weight::constant(g, 0.0)),
                    WeightDegenerateError);
}

TEST_CASE("operator norm homogeneity") {
    GridPtr g = make_grid_1d(-4.0, 4.0, 65);
    Weight w = Weight::constant(g, 1.0);
    const double base = operator_norm(assemble(KernelSpec::gaussian(), g), w);
    const double scaled =
        operator_norm(assemble(KernelSpec::gaussian(1.0, -2.5), g), w);
    CHECK(scaled == doctest::Approx(2.5 * base).epsilon(1e-8));
}

TEST_CASE("decomposition") {
    GridPtr g = make_grid_1d(-6.0, 6.0, 129);
    Weight w = Weight::constant(g, 1.0);

    // symmetric catalogue entry: antisymmetric part vanishes exactly
    KernelOperator G = assemble(KernelSpec::gaussian(), g);
    SymDecomposition dec = decompose(G, w);
    CHECK(dec.antisym.cwiseAbs().maxCoeff() == 0.0);
    CHECK((dec.sym + dec.antisym - G.matrix).cwiseAbs().maxCoeff() == 0.0);
    CHECK(dec.definiteness == Definiteness::non_negative);
    CHECK(dec.lambda_min >= -1e-8 * dec.lambda_max);

    // pure antisymmetric table w(x,y) = x - y: zero form, reported
    // non-negative with rank 0
    Eigen::MatrixXd W(g->size(), g->size());
    for (Eigen::Index i = 0; i < g->size(); ++i)
        for (Eigen::Index j = 0; j < g->size(); ++j)
            W(i, j) = g->node(i)[0] - g->node(j)[0];
    SymDecomposition da = decompose(assemble(KernelSpec::table(W), g), w);
    CHECK(da.sym.cwiseAbs().maxCoeff() <= 1e-14);
    CHECK(da.definiteness == Definiteness::non_negative);

    // indefinite example: a difference of gaussians whose transform
    // changes sign (negative at 0, positive in the tails)
    Eigen::MatrixXd Wi(g->size(), g->size());
    for (Eigen::Index i = 0; i < g->size(); ++i)
        for (Eigen::Index j = 0; j < g->size(); ++j) {
            const double d = g->node(i)[0] - g->node(j)[0];
            Wi(i, j) = std::exp(-0.5 * d * d) - 0.8 * std::exp(-d * d / 8.0);
        }
    SymDecomposition di = decompose(assemble(KernelSpec::table(Wi), g), w);
    CHECK(di.definiteness == Definiteness::indefinite);
}

TEST_CASE("antisymmetric form vanishes on random fields") {
    GridPtr g = make_grid_1d(0.0, 1.0, 33);
    Weight w = Weight::abs_pow(g, 1.0);
    Eigen::MatrixXd W(g->size(), g->size());
    PathRng rng(11, 0);
    for (Eigen::Index i = 0; i < g->size(); ++i)
        for (Eigen::Index j = 0; j < g->size(); ++j) W(i, j) = rng.normal();
    SymDecomposition dec = decompose(assemble(KernelSpec::table(W), g), w);
    const Eigen::VectorXd d = dec.dweights;
    for (int t = 0; t < 50; ++t) {
        Eigen::VectorXd u = nftest::random_field(g, rng);
        const double form = d.cwiseProduct(u).dot(dec.antisym * d.cwiseProduct(u));
        CHECK(std::abs(form) <= 1e-10 * u.squaredNorm());
    }
}

TEST_CASE("every catalogue kernel is non-negative definite on a symmetric box") {
    GridPtr g = make_grid_1d(-6.0, 6.0, 65);
    Weight w = Weight::constant(g, 1.0);
    std::vector<KernelSpec> specs = {
        KernelSpec::gaussian(1.0),
        KernelSpec::exp_sqrt(1.0),
        KernelSpec::rational(1.0),
        KernelSpec::sinc_product(),
        KernelSpec::cosine_sum({0.6, 0.4}, {{1.0, 0.0}, {2.5, 0.0}}),
        KernelSpec::mexican_hat(),
        KernelSpec::mexican_hat2(0.5, 2.0),
        KernelSpec::mexican_hat3(0.5, 2.0, 1.0),
        KernelSpec::damped_trig(1.0),
        KernelSpec::wizard_hat(),
    };
    for (const auto& spec : specs) {
        SymDecomposition dec = decompose(assemble(spec, g), w);
        INFO(spec.name());
        CHECK(dec.definiteness == Definiteness::non_negative);
    }
}

TEST_CASE("convolutional matrices depend on the offset only") {
    GridPtr g = make_grid_1d(-2.0, 3.0, 41);
    KernelOperator K = assemble(KernelSpec::wizard_hat(), g);
    REQUIRE(K.convolutional);
    PathRng rng(3, 0);
    for (int t = 0; t < 50; ++t) {
        const int i = static_cast<int>(rng.uniform_co() * 40);
        const int j = static_cast<int>(rng.uniform_co() * 40);
        CHECK(K.matrix(i, j) == doctest::Approx(K.matrix(i + 1, j + 1)).epsilon(1e-12));
    }
    GridPtr g2 = make_grid_2d(0.0, 1.0, 9, 0.0, 2.0, 11);
    KernelOperator K2 = assemble(KernelSpec::gaussian(), g2);
    REQUIRE(K2.convolutional);
    const int n1 = g2->npts(1);
    for (int t = 0; t < 50; ++t) {
        const int i = static_cast<int>(rng.uniform_co() * (g2->size() - n1 - 1));
        const int j = static_cast<int>(rng.uniform_co() * (g2->size() - n1 - 1));
        CHECK(K2.matrix(i, j) ==
              doctest::Approx(K2.matrix(i + n1 + 1, j + n1 + 1)).epsilon(1e-12));
    }
}

TEST_CASE("table kernel size mismatch") {
    GridPtr g = make_grid_1d(0.0, 1.0, 5);
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(4, 4);
    CHECK_THROWS_AS(assemble(KernelSpec::table(W), g), GridMismatchError);
}
