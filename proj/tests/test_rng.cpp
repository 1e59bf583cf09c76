#include <doctest.h>

#include <cmath>

#include "ego/rng.hpp"

using ego::CounterRng;

TEST_CASE("counter rng replays bit-identically") {
    const CounterRng a(42), b(42), c(43);
    const auto s = CounterRng::stream("accel-noise");
    for (int i = 0; i < 100; ++i) {
        CHECK(a.bits(s, i) == b.bits(s, i));
    }
    bool any_diff = false;
    for (int i = 0; i < 100; ++i) any_diff = any_diff || (a.bits(s, i) != c.bits(s, i));
    CHECK(any_diff);
}

TEST_CASE("streams are independent") {
    const CounterRng rng(7);
    const auto s1 = CounterRng::stream("gyro-noise");
    const auto s2 = CounterRng::stream("gyro-bias");
    CHECK(s1 != s2);
    CHECK(rng.bits(s1, 0) != rng.bits(s2, 0));
}

TEST_CASE("normal draws have unit variance and zero mean") {
    const CounterRng rng(1234);
    const auto s = CounterRng::stream("test");
    const int n = 200000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal(s, i);
        sum += x;
        sum2 += x * x;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    CHECK(std::abs(mean) < 0.01);
    CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("inverse normal cdf hits known quantiles") {
    CHECK(CounterRng::inverse_normal_cdf(0.5) == doctest::Approx(0.0).epsilon(1e-8));
    CHECK(CounterRng::inverse_normal_cdf(0.975) == doctest::Approx(1.959964).epsilon(1e-5));
    CHECK(CounterRng::inverse_normal_cdf(0.025) == doctest::Approx(-1.959964).epsilon(1e-5));
}
