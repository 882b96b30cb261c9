#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

#include "sparsemp/parallel.hpp"
#include "sparsemp/rng.hpp"

using namespace sparsemp;

TEST(CounterRng, SameKeyReproducesSequence) {
    CounterRng a = CounterRng::stream(7, 3, 1), b = CounterRng::stream(7, 3, 1);
    for (int i = 0; i < 1000; ++i) ASSERT_EQ(a(), b());
}

TEST(CounterRng, DistinctStreamsDiffer) {
    std::set<std::uint64_t> firsts;
    for (std::uint64_t seed : {0ULL, 1ULL})
        for (std::uint64_t rep = 0; rep < 50; ++rep)
            for (std::uint64_t s = 0; s < 4; ++s) firsts.insert(CounterRng::stream(seed, rep, s)());
    EXPECT_EQ(firsts.size(), 2u * 50u * 4u);
}

TEST(CounterRng, UniformMomentsWithinFourStandardErrors) {
    CounterRng r = CounterRng::stream(11, 0);
    const int N = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < N; ++i) {
        const double u = r.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        s += u;
        s2 += u * u;
    }
    EXPECT_NEAR(s / N, 0.5, 4.0 * std::sqrt(1.0 / 12.0 / N));
    EXPECT_NEAR(s2 / N, 1.0 / 3.0, 4.0 * std::sqrt((1.0 / 5.0 - 1.0 / 9.0) / N));
}

TEST(CounterRng, OpenLowUniformNeverZero) {
    CounterRng r(0);
    for (int i = 0; i < 100000; ++i) {
        const double u = r.uniform_open_low();
        ASSERT_GT(u, 0.0);
        ASSERT_LE(u, 1.0);
    }
}

TEST(CounterRng, NormalFirstFourMoments) {
    CounterRng r = CounterRng::stream(5, 0);
    const int N = 400000;
    double m1 = 0, m2 = 0, m4 = 0;
    for (int i = 0; i < N; ++i) {
        const double x = r.normal();
        m1 += x;
        m2 += x * x;
        m4 += x * x * x * x;
    }
    EXPECT_NEAR(m1 / N, 0.0, 4.0 / std::sqrt(N));
    EXPECT_NEAR(m2 / N, 1.0, 4.0 * std::sqrt(2.0 / N));
    EXPECT_NEAR(m4 / N, 3.0, 4.0 * std::sqrt(96.0 / N));
}

TEST(CounterRng, RademacherBalanced) {
    CounterRng r = CounterRng::stream(9, 2);
    const int N = 100000;
    double s = 0;
    for (int i = 0; i < N; ++i) {
        const double x = r.rademacher();
        ASSERT_TRUE(x == 1.0 || x == -1.0);
        s += x;
    }
    EXPECT_NEAR(s / N, 0.0, 4.0 / std::sqrt(N));
}

TEST(ParallelFor, ResultsIndependentOfThreadCount) {
    auto run = [](std::size_t threads) {
        std::vector<double> out(257);
        parallel_for(out.size(), threads, [&](std::size_t i) {
            CounterRng r = CounterRng::stream(1, i);
            out[i] = r.normal() + r.uniform();
        });
        return out;
    };
    const auto one = run(1);
    EXPECT_EQ(one, run(3));
    EXPECT_EQ(one, run(8));
}

TEST(ParallelFor, RethrowsLowestIndexFailure) {
    try {
        parallel_for(100, 4, [](std::size_t i) {
            if (i == 17 || i == 63) throw std::runtime_error(std::to_string(i));
        });
        FAIL() << "expected an exception";
    } catch (const std::runtime_error& e) {
        EXPECT_STREQ(e.what(), "17");
    }
}
