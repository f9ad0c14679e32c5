#include "gtmsm/rng.hpp"
#include "gtmsm/tensor.hpp"

#include <doctest.h>

#include <cmath>
#include <stdexcept>

using namespace gtmsm;

TEST_CASE("tensor shape and element count stay consistent") {
    Tensor t({2, 3});
    CHECK(t.size() == 6);
    CHECK(t.shape_str() == "[2,3]");
    CHECK_THROWS_AS(Tensor({2}, {1.0, 2.0, 3.0}), std::invalid_argument);
}

TEST_CASE("f32 precision tag rounds elements") {
    Tensor t({1}, {0.1}, Precision::f32);
    CHECK(t[0] == doctest::Approx(0.1).epsilon(1e-6));
    CHECK(t[0] == static_cast<double>(static_cast<float>(0.1)));
    Tensor d({1}, {0.1}, Precision::f64);
    CHECK(d[0] == 0.1);
}

TEST_CASE("finiteness validation reports location") {
    Tensor t({2}, {1.0, std::nan("")});
    CHECK(!t.all_finite());
    CHECK_THROWS_AS(validate_finite(t, "here"), std::runtime_error);
}

TEST_CASE("rng streams are reproducible and split-independent") {
    RngStream a = RngStream::root(7);
    RngStream b = RngStream::root(7);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    RngStream c = RngStream::root(7).split(1);
    RngStream d = RngStream::root(7).split(2);
    int same = 0;
    for (int i = 0; i < 64; ++i) same += c.next_u64() == d.next_u64();
    CHECK(same == 0);

    CHECK(RngStream::root(3).split("x").next_u64() == RngStream::root(3).split("x").next_u64());
}

TEST_CASE("uniform stays in [0,1) and has roughly the right mean") {
    RngStream r = RngStream::root(11);
    double acc = 0.0;
    for (int i = 0; i < 20000; ++i) {
        double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        acc += u;
    }
    CHECK(acc / 20000 == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("normal moments") {
    RngStream r = RngStream::root(13);
    double s1 = 0.0, s2 = 0.0;
    const int n = 50000;
    for (int i = 0; i < n; ++i) {
        double x = r.normal();
        s1 += x;
        s2 += x * x;
    }
    CHECK(s1 / n == doctest::Approx(0.0).epsilon(0.02));
    CHECK(s2 / n == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("poisson mean matches the rate") {
    RngStream r = RngStream::root(17);
    double acc = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) acc += r.poisson(2.0);
    CHECK(acc / n == doctest::Approx(2.0).epsilon(0.02));
    CHECK(r.poisson(0.0) == 0);
}

TEST_CASE("uniform_int covers the range evenly") {
    RngStream r = RngStream::root(23);
    int counts[5] = {0, 0, 0, 0, 0};
    const int n = 100000;
    for (int i = 0; i < n; ++i) counts[r.uniform_int(5)]++;
    for (int c : counts) CHECK(static_cast<double>(c) / n == doctest::Approx(0.2).epsilon(0.05));
    CHECK_THROWS_AS(r.uniform_int(0), std::invalid_argument);
}
