#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "tag/sampler.hpp"
#include "tag/schedule.hpp"
#include "tag/scoremodel.hpp"

using tag::Vec;

namespace {

tag::RunManifest small_manifest() {
    tag::RunManifest mf;
    mf.seed = 42;
    mf.batch_size = 4;
    mf.record_trajectories = true;
    mf.schedule.num_inference_steps = 5;
    mf.distribution.branch.depth = 2;
    mf.distribution.branch.points_per_segment = 3;
    return mf;
}

// Two-sample Kolmogorov-Smirnov statistic on scalars.
double ks_statistic(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double d = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] <= b[j]) {
            ++i;
        } else {
            ++j;
        }
        double fa = static_cast<double>(i) / static_cast<double>(a.size());
        double fb = static_cast<double>(j) / static_cast<double>(b.size());
        d = std::max(d, std::abs(fa - fb));
    }
    return d;
}

}  // namespace

TEST_CASE("truncated draws respect the radius bound") {
    tag::CounterRng rng(1, 0);
    double radius = 0.8;
    std::size_t d = 4;
    for (int i = 0; i < 1000; ++i) {
        Vec v = tag::truncated_init_draw(rng, d, radius);
        CHECK(tag::norm(v) <= radius * std::sqrt(static_cast<double>(d)) + 1e-12);
    }
}

TEST_CASE("truncated draws are deterministic in the seed") {
    Vec a = tag::truncated_init(7, 3, 1.0);
    Vec b = tag::truncated_init(7, 3, 1.0);
    Vec c = tag::truncated_init(8, 3, 1.0);
    CHECK(a == b);
    CHECK(a != c);
}

TEST_CASE("impractically tight truncation is rejected up front") {
    // At d = 64 and radius 0.1 the acceptance probability is far below the
    // floor; the loop must never start.
    CHECK_THROWS_AS(tag::truncated_init(1, 64, 0.1), tag::ConfigError);
    CHECK_THROWS_AS(tag::truncated_init(1, 2, -1.0), tag::ConfigError);
    CHECK_THROWS_AS(tag::truncated_init(1, 0, 1.0), tag::ConfigError);
}

TEST_CASE("loose truncation leaves the distribution unchanged") {
    // radius 10 cuts essentially nothing, so truncated draws and plain
    // normal draws must agree in distribution. Compare the norms with a
    // two-sample KS test at a fixed seed.
    tag::CounterRng rng_a(3, 0);
    tag::CounterRng rng_b(4, 1);
    const int n = 2000;
    std::vector<double> a, b;
    for (int i = 0; i < n; ++i) {
        a.push_back(tag::norm(tag::truncated_init_draw(rng_a, 3, 10.0)));
        b.push_back(tag::norm(rng_b.normal_vec(3)));
    }
    double d = ks_statistic(a, b);
    // 0.001-level critical value for n = m = 2000.
    double crit = 1.95 * std::sqrt(2.0 / n);
    CHECK(d < crit);
}

TEST_CASE("batch shape and exact step bookkeeping") {
    tag::RunManifest mf = small_manifest();
    tag::ConditionalMixture mix = mf.distribution.build();
    tag::NoiseSchedule sched = mf.schedule.make();
    std::vector<tag::Trajectory> trajs = tag::sample_batch(mf, mix, sched);

    REQUIRE(trajs.size() == 4);
    for (const tag::Trajectory& t : trajs) {
        REQUIRE(t.states.size() == 6);
        REQUIRE(t.state_indices.size() == 6);
        REQUIRE(t.guided_increments.size() == 5);
        REQUIRE(t.base_increments.size() == 5);
        CHECK(t.state_indices.front() == sched.index_at(0));
        CHECK(t.state_indices.back() == 0);
        for (std::size_t j = 0; j + 1 < t.states.size(); ++j) {
            CHECK(t.state_indices[j] > t.state_indices[j + 1]);
            for (std::size_t i = 0; i < 2; ++i) {
                // Recorded states are exactly the accumulated increments.
                CHECK(t.states[j + 1][i] ==
                      t.states[j][i] + t.guided_increments[j][i]);
                // Unguided runs record the same increment twice.
                CHECK(t.base_increments[j][i] == t.guided_increments[j][i]);
            }
        }
    }
}

TEST_CASE("first transition matches the public single-step route") {
    tag::RunManifest mf = small_manifest();
    mf.batch_size = 1;
    tag::ConditionalMixture mix = mf.distribution.build();
    tag::NoiseSchedule sched = mf.schedule.make();
    tag::Trajectory t = tag::sample_batch(mf, mix, sched)[0];

    int t_src = t.state_indices[0];
    Vec eps = tag::eps_pred(mix.marginal(), sched, t_src, t.states[0]);
    tag::StepCoeffs c = sched.ddim_coeffs(sched.num_steps() - 1);
    Vec delta = tag::base_increment(t.states[0], eps, c);
    Vec next = tag::add(t.states[0], delta);
    CHECK(next[0] == t.states[1][0]);
    CHECK(next[1] == t.states[1][1]);
}

TEST_CASE("minimal recording keeps first and last states") {
    tag::RunManifest mf = small_manifest();
    mf.record_trajectories = false;
    tag::ConditionalMixture mix = mf.distribution.build();
    tag::NoiseSchedule sched = mf.schedule.make();
    std::vector<tag::Trajectory> trajs = tag::sample_batch(mf, mix, sched);

    tag::RunManifest full = small_manifest();
    std::vector<tag::Trajectory> full_trajs = tag::sample_batch(full, mix, sched);

    for (std::size_t s = 0; s < trajs.size(); ++s) {
        REQUIRE(trajs[s].states.size() == 2);
        CHECK(trajs[s].guided_increments.empty());
        CHECK(trajs[s].state_indices.front() == sched.index_at(0));
        CHECK(trajs[s].state_indices.back() == 0);
        // Identical endpoints either way.
        CHECK(trajs[s].states.front() == full_trajs[s].states.front());
        CHECK(trajs[s].final_state() == full_trajs[s].final_state());
    }
}

TEST_CASE("results do not depend on the thread count") {
    tag::RunManifest mf = small_manifest();
    mf.batch_size = 16;
    mf.record_trajectories = false;
    tag::ConditionalMixture mix = mf.distribution.build();
    tag::NoiseSchedule sched = mf.schedule.make();
    std::vector<tag::Trajectory> one = tag::sample_batch(mf, mix, sched, 1);
    std::vector<tag::Trajectory> three = tag::sample_batch(mf, mix, sched, 3);
    std::vector<tag::Trajectory> all = tag::sample_batch(mf, mix, sched, 0);
    REQUIRE(one.size() == 16);
    for (std::size_t s = 0; s < one.size(); ++s) {
        CHECK(one[s].final_state() == three[s].final_state());
        CHECK(one[s].final_state() == all[s].final_state());
    }
}

TEST_CASE("seed changes the batch, reruns do not") {
    tag::RunManifest mf = small_manifest();
    tag::ConditionalMixture mix = mf.distribution.build();
    tag::NoiseSchedule sched = mf.schedule.make();
    std::vector<tag::Trajectory> a = tag::sample_batch(mf, mix, sched);
    std::vector<tag::Trajectory> b = tag::sample_batch(mf, mix, sched);
    CHECK(a[0].final_state() == b[0].final_state());
    mf.seed = 43;
    std::vector<tag::Trajectory> c = tag::sample_batch(mf, mix, sched);
    CHECK(a[0].final_state() != c[0].final_state());
}

TEST_CASE("amplified runs keep the radial component of each step") {
    tag::RunManifest mf = small_manifest();
    mf.guidance.mode = tag::GuidanceMode::tag;
    mf.guidance.eta = 1.5;
    tag::ConditionalMixture mix = mf.distribution.build();
    tag::NoiseSchedule sched = mf.schedule.make();
    std::vector<tag::Trajectory> trajs = tag::sample_batch(mf, mix, sched);
    for (const tag::Trajectory& t : trajs) {
        for (std::size_t j = 0; j < t.guided_increments.size(); ++j) {
            Vec xhat = tag::unit(t.states[j]);
            double base = tag::dot(xhat, t.base_increments[j]);
            double guided = tag::dot(xhat, t.guided_increments[j]);
            CHECK(std::abs(guided - base) < 1e-12);
        }
    }
}

TEST_CASE("conditional modes sample and validate the label") {
    tag::RunManifest mf = small_manifest();
    mf.guidance.mode = tag::GuidanceMode::cfg;
    mf.guidance.omega = 1.0;
    mf.guidance.condition_label = 5;
    tag::ConditionalMixture mix = mf.distribution.build();
    tag::NoiseSchedule sched = mf.schedule.make();
    CHECK_THROWS_AS(tag::sample_batch(mf, mix, sched), tag::ConfigError);

    mf.guidance.condition_label = 1;
    std::vector<tag::Trajectory> trajs = tag::sample_batch(mf, mix, sched);
    CHECK(trajs.size() == 4);
    for (const tag::Trajectory& t : trajs) {
        CHECK(tag::all_finite(t.final_state()));
    }
}

TEST_CASE("truncation mode bounds the initial state") {
    tag::RunManifest mf = small_manifest();
    mf.batch_size = 64;
    mf.guidance.mode = tag::GuidanceMode::truncation;
    mf.guidance.truncation_radius = 0.7;
    tag::ConditionalMixture mix = mf.distribution.build();
    tag::NoiseSchedule sched = mf.schedule.make();
    std::vector<tag::Trajectory> trajs = tag::sample_batch(mf, mix, sched);
    for (const tag::Trajectory& t : trajs) {
        CHECK(tag::norm(t.states.front()) <= 0.7 * std::sqrt(2.0) + 1e-12);
    }
}

TEST_CASE("manifest validation") {
    tag::RunManifest mf = small_manifest();
    mf.batch_size = 0;
    CHECK_THROWS_AS(mf.validate(), tag::ConfigError);
    mf = small_manifest();
    mf.schedule.num_inference_steps = 2000;
    CHECK_THROWS_AS(mf.validate(), tag::ConfigError);
    mf = small_manifest();
    mf.schedule.beta_start = 0.0;
    CHECK_THROWS_AS(mf.validate(), tag::ConfigError);
    mf = small_manifest();
    mf.guidance.mode = tag::GuidanceMode::tag;
    mf.guidance.eta = 0.5;
    CHECK_THROWS_AS(mf.validate(), tag::ConfigError);
}

TEST_CASE("mid-run failures carry the sample context") {
    tag::RunManifest mf = small_manifest();
    mf.guidance.mode = tag::GuidanceMode::truncation;
    // Positive radius passes config validation, but the acceptance bound
    // trips inside the first sample's initialization.
    mf.guidance.truncation_radius = 5e-4;
    tag::ConditionalMixture mix = mf.distribution.build();
    tag::NoiseSchedule sched = mf.schedule.make();
    try {
        tag::sample_batch(mf, mix, sched);
        FAIL("expected a sampling error");
    } catch (const tag::SamplingError& e) {
        CHECK(std::string(e.what()).find("sample 0") != std::string::npos);
    }
}
