#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "tag/rng.hpp"
#include "tag/schedule.hpp"
#include "tag/scoremodel.hpp"

using tag::Vec;

namespace {

tag::GaussianMixture two_comp_1d(double w1, double m1, double s1, double m2,
                                 double s2) {
    std::vector<tag::GmmComponent> comps(2);
    comps[0] = {w1, {m1}, s1};
    comps[1] = {1.0 - w1, {m2}, s2};
    return tag::GaussianMixture(std::move(comps));
}

}  // namespace

TEST_CASE("mixture construction is validated") {
    std::vector<tag::GmmComponent> bad_weights(2);
    bad_weights[0] = {0.6, {0.0}, 1.0};
    bad_weights[1] = {0.6, {1.0}, 1.0};
    CHECK_THROWS_AS(tag::GaussianMixture(std::move(bad_weights)),
                    tag::ConfigError);

    std::vector<tag::GmmComponent> mixed_dims(2);
    mixed_dims[0] = {0.5, {0.0}, 1.0};
    mixed_dims[1] = {0.5, {1.0, 2.0}, 1.0};
    CHECK_THROWS_AS(tag::GaussianMixture(std::move(mixed_dims)),
                    tag::DimensionError);

    std::vector<tag::GmmComponent> bad_stdev(1);
    bad_stdev[0] = {1.0, {0.0}, 0.0};
    CHECK_THROWS_AS(tag::GaussianMixture(std::move(bad_stdev)),
                    tag::ConfigError);

    CHECK_THROWS_AS(tag::GaussianMixture({}), tag::ConfigError);
}

TEST_CASE("log density matches a directly summed small case") {
    tag::GaussianMixture mix = two_comp_1d(0.3, -1.0, 0.5, 2.0, 1.5);
    for (double x : {-2.0, 0.0, 1.0, 3.0}) {
        double n1 = 0.3 * std::exp(-0.5 * (x + 1.0) * (x + 1.0) / 0.25) /
                    (0.5 * std::sqrt(2.0 * M_PI));
        double n2 = 0.7 * std::exp(-0.5 * (x - 2.0) * (x - 2.0) / 2.25) /
                    (1.5 * std::sqrt(2.0 * M_PI));
        CHECK(mix.log_density({x}) ==
              doctest::Approx(std::log(n1 + n2)).epsilon(1e-12));
    }
}

TEST_CASE("log density survives widely separated components") {
    // Naive density summation would underflow the far component and, in the
    // far tail, the total itself.
    tag::GaussianMixture mix = two_comp_1d(0.5, 0.0, 0.1, 100.0, 0.1);
    double near_a = mix.log_density({0.05});
    double expect = std::log(0.5) - std::log(0.1 * std::sqrt(2.0 * M_PI)) -
                    0.5 * 0.25;  // (0.05 / 0.1)^2 / 2
    CHECK(near_a == doctest::Approx(expect).epsilon(1e-10));

    double far = mix.log_density({50.0});
    CHECK(std::isfinite(far));
    CHECK(far < -1e5);

    Vec s = mix.score({50.001});
    CHECK(std::isfinite(s[0]));
    // Past the midpoint the nearer component dominates and pulls right.
    CHECK(s[0] > 0.0);
}

TEST_CASE("score of a single component is the closed form") {
    std::vector<tag::GmmComponent> comps(1);
    comps[0] = {1.0, {1.0, -2.0}, 0.7};
    tag::GaussianMixture mix(std::move(comps));
    Vec x = {0.3, 0.4};
    Vec s = mix.score(x);
    CHECK(s[0] == doctest::Approx((1.0 - 0.3) / 0.49).epsilon(1e-12));
    CHECK(s[1] == doctest::Approx((-2.0 - 0.4) / 0.49).epsilon(1e-12));
}

TEST_CASE("branching tree has the expected component layout") {
    tag::BranchSpec spec;
    spec.depth = 3;
    spec.branching_factor = 2;
    spec.segment_length = 0.7;
    spec.spread_angle = 0.55;
    spec.points_per_segment = 8;
    spec.component_stdev = 0.02;
    tag::ConditionalMixture cm = tag::build_branching_gmm(spec);

    // Levels hold 2, 4, 8 segments; 14 segments of 8 points each.
    CHECK(cm.class_count() == 2);
    CHECK(cm.marginal().components().size() == 112);
    CHECK(cm.class_at(0).components().size() == 56);
    CHECK(cm.prior_at(0) == doctest::Approx(0.5).epsilon(1e-15));

    // All marginal weights are uniform.
    for (const tag::GmmComponent& c : cm.marginal().components()) {
        CHECK(c.weight == doctest::Approx(1.0 / 112.0).epsilon(1e-12));
        CHECK(c.stdev == 0.02);
    }

    // First component of class 0 sits one eighth along the level-1 segment
    // tilted by -spread_angle from the +y axis.
    const tag::GmmComponent& first = cm.class_at(0).components().front();
    double step = 0.7 / 8.0;
    CHECK(first.mean[0] ==
          doctest::Approx(step * std::sin(-0.55)).epsilon(1e-12));
    CHECK(first.mean[1] == doctest::Approx(step * std::cos(-0.55)).epsilon(1e-12));

    // The two classes are mirror images in x. The recursion visits children
    // in a fixed order, so the pairing is by geometry, not by position.
    for (const tag::GmmComponent& a : cm.class_at(0).components()) {
        bool matched = false;
        for (const tag::GmmComponent& b : cm.class_at(1).components()) {
            if (std::abs(a.mean[0] + b.mean[0]) < 1e-12 &&
                std::abs(a.mean[1] - b.mean[1]) < 1e-12) {
                matched = true;
                break;
            }
        }
        CHECK(matched);
    }
}

TEST_CASE("single-branch tree is a straight chain with length decay") {
    tag::BranchSpec spec;
    spec.depth = 2;
    spec.branching_factor = 1;
    spec.segment_length = 0.8;
    spec.points_per_segment = 4;
    spec.component_stdev = 0.05;
    tag::ConditionalMixture cm = tag::build_branching_gmm(spec);

    CHECK(cm.class_count() == 1);
    const auto& comps = cm.marginal().components();
    REQUIRE(comps.size() == 8);
    for (const tag::GmmComponent& c : comps) {
        CHECK(c.mean[0] == doctest::Approx(0.0).epsilon(1e-15));
    }
    // Level 1 ends at 0.8; level 2 adds 0.6 more.
    CHECK(comps[3].mean[1] == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(comps[7].mean[1] == doctest::Approx(1.4).epsilon(1e-12));
}

TEST_CASE("branch spec validation") {
    tag::BranchSpec spec;
    spec.depth = 0;
    CHECK_THROWS_AS(spec.validate(), tag::ConfigError);
    spec = {};
    spec.branching_factor = 0;
    CHECK_THROWS_AS(spec.validate(), tag::ConfigError);
    spec = {};
    spec.component_stdev = 0.0;
    CHECK_THROWS_AS(spec.validate(), tag::ConfigError);
    spec = {};
    spec.spread_angle = 2.0;
    CHECK_THROWS_AS(spec.validate(), tag::ConfigError);
    spec = {};
    spec.depth = 17;
    spec.points_per_segment = 1;
    CHECK_THROWS_AS(spec.validate(), tag::ConfigError);
}

TEST_CASE("conditional mixture marginal equals prior-weighted classes") {
    tag::BranchSpec spec;
    spec.depth = 3;
    tag::ConditionalMixture cm = tag::build_branching_gmm(spec);
    tag::CounterRng rng(5, 0);
    for (int it = 0; it < 20; ++it) {
        Vec x = {2.0 * rng.normal(), 2.0 * rng.normal()};
        // Combine in log space; the tight components underflow otherwise.
        std::vector<double> terms;
        for (int c = 0; c < cm.class_count(); ++c) {
            terms.push_back(std::log(cm.prior_at(c)) +
                            cm.class_at(c).log_density(x));
        }
        double mx = *std::max_element(terms.begin(), terms.end());
        double sum = 0.0;
        for (double t : terms) sum += std::exp(t - mx);
        double direct = mx + std::log(sum);
        CHECK(cm.marginal().log_density(x) ==
              doctest::Approx(direct).epsilon(1e-12));
    }
    CHECK_THROWS_AS(cm.class_at(2), tag::ConfigError);
    CHECK_THROWS_AS(cm.class_at(-1), tag::ConfigError);
}

TEST_CASE("noisy marginal transforms each component") {
    std::vector<tag::GmmComponent> comps(1);
    comps[0] = {1.0, {1.0, 2.0}, 0.5};
    tag::GaussianMixture mix(std::move(comps));
    // Custom two-level schedule with alpha_bar exactly 0.64 at index 1.
    tag::NoiseSchedule sched({0.9, 0.64}, {1, 0});
    tag::GaussianMixture noisy = tag::marginal_at_noise(mix, sched, 1);
    const tag::GmmComponent& c = noisy.components().front();
    CHECK(c.mean[0] == doctest::Approx(0.8).epsilon(1e-14));
    CHECK(c.mean[1] == doctest::Approx(1.6).epsilon(1e-14));
    CHECK(c.stdev ==
          doctest::Approx(std::sqrt(0.64 * 0.25 + 0.36)).epsilon(1e-14));
}

TEST_CASE("noisy marginal approaches the prior at the noisy end") {
    tag::BranchSpec spec;
    tag::ConditionalMixture cm = tag::build_branching_gmm(spec);
    tag::NoiseSchedule sched = tag::make_schedule(1000, 50);
    tag::GaussianMixture noisy = tag::marginal_at_noise(cm.marginal(), sched, 999);
    for (const tag::GmmComponent& c : noisy.components()) {
        CHECK(std::abs(c.mean[0]) < 0.02);
        CHECK(std::abs(c.mean[1]) < 0.02);
        CHECK(c.stdev > 0.99);
        CHECK(c.stdev < 1.01);
    }
}

TEST_CASE("noisy marginal matches forward-noised draws") {
    tag::BranchSpec spec;
    spec.depth = 2;
    spec.points_per_segment = 4;
    tag::ConditionalMixture cm = tag::build_branching_gmm(spec);
    tag::NoiseSchedule sched = tag::make_schedule(1000, 50);
    int t = 500;
    double ab = sched.alpha_bar_at(t);
    tag::GaussianMixture noisy = tag::marginal_at_noise(cm.marginal(), sched, t);

    // Empirical moments of sqrt(ab) x0 + sigma eps over 100000 draws.
    tag::CounterRng rng(99, 0);
    const int n = 100000;
    double mean[2] = {0.0, 0.0};
    double sq[2] = {0.0, 0.0};
    for (int i = 0; i < n; ++i) {
        Vec x0 = tag::sample_from(cm.marginal(), rng);
        for (int k = 0; k < 2; ++k) {
            double v = std::sqrt(ab) * x0[static_cast<std::size_t>(k)] +
                       std::sqrt(1.0 - ab) * rng.normal();
            mean[k] += v;
            sq[k] += v * v;
        }
    }
    for (int k = 0; k < 2; ++k) {
        mean[k] /= n;
        sq[k] = sq[k] / n - mean[k] * mean[k];
    }

    // Analytic moments from the noisy mixture.
    double amean[2] = {0.0, 0.0};
    double avar[2] = {0.0, 0.0};
    for (const tag::GmmComponent& c : noisy.components()) {
        for (int k = 0; k < 2; ++k) {
            amean[k] += c.weight * c.mean[static_cast<std::size_t>(k)];
        }
    }
    for (const tag::GmmComponent& c : noisy.components()) {
        for (int k = 0; k < 2; ++k) {
            double centered = c.mean[static_cast<std::size_t>(k)] - amean[k];
            avar[k] += c.weight * (c.stdev * c.stdev + centered * centered);
        }
    }
    for (int k = 0; k < 2; ++k) {
        CHECK(std::abs(mean[k] - amean[k]) < 1e-2);
        CHECK(std::abs(sq[k] - avar[k]) < 1e-2);
    }
}

TEST_CASE("noise prediction is minus sigma times the score") {
    tag::BranchSpec spec;
    spec.depth = 2;
    tag::ConditionalMixture cm = tag::build_branching_gmm(spec);
    tag::NoiseSchedule sched = tag::make_schedule(1000, 50);
    Vec x = {0.3, -0.2};
    int t = 600;
    Vec e = tag::eps_pred(cm.marginal(), sched, t, x);
    Vec s = tag::score(cm.marginal(), sched, t, x);
    double sigma = sched.sigma_at(t);
    CHECK(e[0] == doctest::Approx(-sigma * s[0]).epsilon(1e-14));
    CHECK(e[1] == doctest::Approx(-sigma * s[1]).epsilon(1e-14));
}

TEST_CASE("degenerate noise levels are rejected or exact") {
    std::vector<tag::GmmComponent> comps(1);
    comps[0] = {1.0, {0.5}, 0.3};
    tag::GaussianMixture mix(std::move(comps));
    tag::NoiseSchedule sched({1.0, 0.5}, {1, 0});
    Vec x = {0.2};
    CHECK_THROWS_AS(tag::eps_pred(mix, sched, 0, x), tag::DegenerateNoiseLevel);
    // With no noise the posterior mean is the point itself.
    Vec m = tag::tweedie_mean(mix, sched, 0, x);
    CHECK(m[0] == doctest::Approx(0.2).epsilon(1e-14));
}

TEST_CASE("posterior mean of a single component follows the conjugate form") {
    std::vector<tag::GmmComponent> comps(1);
    comps[0] = {1.0, {1.5}, 0.4};
    tag::GaussianMixture mix(std::move(comps));
    tag::NoiseSchedule sched({0.9, 0.36}, {1, 0});
    double ab = 0.36, s2 = 0.16, sigma2 = 0.64;
    Vec x = {0.7};
    Vec got = tag::tweedie_mean(mix, sched, 1, x);
    double expect = (sigma2 * 1.5 + std::sqrt(ab) * s2 * 0.7) / (ab * s2 + sigma2);
    CHECK(got[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("mixture draws follow the component weights") {
    tag::GaussianMixture mix = two_comp_1d(0.3, 0.0, 0.1, 10.0, 0.1);
    tag::CounterRng rng(7, 0);
    int right = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        Vec v = tag::sample_from(mix, rng);
        if (v[0] > 5.0) ++right;
    }
    double frac = static_cast<double>(right) / n;
    CHECK(frac > 0.685);
    CHECK(frac < 0.715);
}

TEST_CASE("component dump and load round-trip") {
    tag::BranchSpec spec;
    spec.depth = 2;
    spec.points_per_segment = 3;
    tag::ConditionalMixture cm = tag::build_branching_gmm(spec);
    std::ostringstream os;
    tag::dump_components(cm.marginal(), os);
    std::istringstream is(os.str());
    tag::GaussianMixture back = tag::load_components(is);
    REQUIRE(back.components().size() == cm.marginal().components().size());
    for (std::size_t i = 0; i < back.components().size(); ++i) {
        CHECK(back.components()[i].weight ==
              cm.marginal().components()[i].weight);
        CHECK(back.components()[i].mean[0] ==
              cm.marginal().components()[i].mean[0]);
        CHECK(back.components()[i].mean[1] ==
              cm.marginal().components()[i].mean[1]);
        CHECK(back.components()[i].stdev ==
              cm.marginal().components()[i].stdev);
    }
}
