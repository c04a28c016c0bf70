#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "pdf/pk.hpp"
#include "pdf/tox.hpp"

using namespace pdf;

TEST_SUITE("pk") {
    TEST_CASE("concentration follows the exponential decay") {
        PkParams p(4.0, 0.5);
        CHECK(concentration(60, p, 0.0) == doctest::Approx(15.0));
        CHECK(concentration(60, p, 2.0) == doctest::Approx(15.0 * std::exp(-1.0)));
        CHECK(log_concentration(60, p, 2.0) ==
              doctest::Approx(std::log(15.0) - 1.0).epsilon(1e-14));
    }

    TEST_CASE("auc is dose over clearance") {
        PkParams p(4.0, 3.0);
        CHECK(auc(30, p) == doctest::Approx(2.5));
        CHECK(p.clearance() == doctest::Approx(12.0));
    }

    TEST_CASE("invalid inputs are rejected") {
        CHECK_THROWS_AS(PkParams(0.0, 1.0), std::invalid_argument);
        CHECK_THROWS_AS(PkParams(1.0, -1.0), std::invalid_argument);
        CHECK_THROWS_AS(PkParams(NAN, 1.0), std::invalid_argument);
        CHECK_THROWS_AS(concentration(-1, PkParams(1, 1), 1), std::invalid_argument);
        CHECK_THROWS_AS(concentration(1, PkParams(1, 1), -1), std::invalid_argument);
        CHECK_THROWS_AS(ConcentrationObs(1.0, 0.0), std::invalid_argument);
        CHECK_THROWS_AS(ObsNoise(0.0), std::invalid_argument);
        CHECK_THROWS_AS(DoseGrid({10, 10}), std::invalid_argument);
        CHECK_THROWS_AS(DoseGrid({10}), std::invalid_argument);
    }

    TEST_CASE("log-likelihood matches the normal density on the log scale") {
        PkParams p(4.0, 0.3);
        ObsNoise noise(0.5);
        std::vector<ConcentrationObs> obs{{1.0, 12.0}, {5.0, 3.0}, {12.0, 0.4}};
        double expect = 0;
        for (const auto& o : obs) {
            double mu = std::log(60.0 / 4.0) - 0.3 * o.time;
            double z = (std::log(o.value) - mu) / 0.5;
            expect += -0.5 * z * z - std::log(0.5) - 0.5 * std::log(2 * M_PI);
        }
        CHECK(log_concentration_loglik(obs, 60, p, noise) ==
              doctest::Approx(expect).epsilon(1e-13));
    }

    TEST_CASE("empty observation list raises NoDataError") {
        std::vector<ConcentrationObs> none;
        CHECK_THROWS_AS(log_concentration_loglik(none, 60, PkParams(1, 1), ObsNoise(1)),
                        NoDataError);
    }

    TEST_CASE("tiny noise reproduces the curve") {
        Philox4x32 rng(3, 3);
        PkParams p(4.0, 0.3);
        auto sched = standard_schedule();
        auto obs = simulate_concentrations(60, p, ObsNoise(1e-12), sched, rng);
        REQUIRE(obs.size() == 6);
        for (const auto& o : obs)
            CHECK(o.value == doctest::Approx(concentration(60, p, o.time)).epsilon(1e-10));
    }

    TEST_CASE("simulation is reproducible") {
        Philox4x32 a(9, 1), b(9, 1);
        auto sched = standard_schedule();
        auto x = simulate_concentrations(30, PkParams(3, 2), ObsNoise(0.5), sched, a);
        auto y = simulate_concentrations(30, PkParams(3, 2), ObsNoise(0.5), sched, b);
        CHECK(x == y);
    }
}

TEST_SUITE("tox") {
    TEST_CASE("reference toxicity value") {
        // logistic(-3 + 1.5 log 2.5) evaluated independently
        double expect = oracle::logistic(-3.0 + 1.5 * std::log(2.5));
        CHECK(tox_prob(30, PkParams(4, 3), {-3, 1.5}) == doctest::Approx(expect).epsilon(1e-14));
        CHECK(expect == doctest::Approx(0.164439).epsilon(1e-5));
    }

    TEST_CASE("logit zero point gives one half") {
        CHECK(tox_prob_log_auc(2.0, {-3.0, 1.5}) == doctest::Approx(0.5));
    }

    TEST_CASE("inv_logit is stable in the tails") {
        CHECK(inv_logit(800) == 1.0);
        CHECK(inv_logit(-800) >= 0.0);
        CHECK(std::isfinite(log_inv_logit(-800)));
        CHECK(log_inv_logit(-800) == doctest::Approx(-800));
        CHECK(log1m_inv_logit(800) == doctest::Approx(-800));
        for (double x : {-5.0, -0.3, 0.0, 2.0, 7.0}) {
            CHECK(inv_logit(x) + inv_logit(-x) == doctest::Approx(1.0));
            CHECK(logit(inv_logit(x)) == doctest::Approx(x));
        }
    }

    TEST_CASE("bernoulli log mass") {
        double p = tox_prob_log_auc(0.7, {-1, 1});
        CHECK(dlt_loglik_log_auc(1, 0.7, {-1, 1}) == doctest::Approx(std::log(p)));
        CHECK(dlt_loglik_log_auc(0, 0.7, {-1, 1}) == doctest::Approx(std::log1p(-p)));
        CHECK(dlt_loglik(DltOutcome(1), 30, PkParams(4, 3), {-3, 1.5}) ==
              doctest::Approx(std::log(tox_prob(30, PkParams(4, 3), {-3, 1.5}))));
        CHECK_THROWS_AS(DltOutcome(2), std::invalid_argument);
    }

    TEST_CASE("zero slope gives a flat curve") {
        for (double d : {15.0, 60.0, 120.0})
            CHECK(tox_prob(d, PkParams(4, 3), {-2, 0}) == doctest::Approx(inv_logit(-2)));
    }
}
