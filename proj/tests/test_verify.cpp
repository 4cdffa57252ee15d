#include "doctest.h"

#include <string>
#include <vector>

#include "tag/verify.hpp"

TEST_CASE("the full verification battery passes") {
    tag::VerifyOptions opts;
    opts.tuple_count = 200;
    opts.point_count = 30;
    std::vector<tag::CheckResult> results = tag::run_verification(opts);
    REQUIRE(results.size() == 9);
    for (const tag::CheckResult& r : results) {
        INFO(r.name, ": ", r.detail);
        CHECK(r.pass);
        CHECK(r.cases > 0);
        CHECK(r.detail.empty());
    }
}

TEST_CASE("verification is deterministic for a fixed seed") {
    tag::VerifyOptions opts;
    opts.tuple_count = 50;
    opts.point_count = 10;
    std::vector<tag::CheckResult> a = tag::run_verification(opts);
    std::vector<tag::CheckResult> b = tag::run_verification(opts);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].name == b[i].name);
        CHECK(a[i].cases == b[i].cases);
        CHECK(a[i].pass == b[i].pass);
    }
}

TEST_CASE("fault injection flips the gain identity check") {
    // Sanity check that the battery can actually fail: a sign flip on the
    // noise multiplier must be caught, and caught by the right check.
    tag::VerifyOptions opts;
    opts.tuple_count = 50;
    opts.point_count = 10;
    opts.negate_alpha_tilde = true;
    std::vector<tag::CheckResult> results = tag::run_verification(opts);
    bool found = false;
    for (const tag::CheckResult& r : results) {
        if (r.name == "gain-identity") {
            found = true;
            CHECK(!r.pass);
            CHECK(!r.detail.empty());
        }
    }
    CHECK(found);
}
