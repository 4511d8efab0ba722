#include "doctest.h"

#include "nslam/gradcheck.hpp"
#include "nslam/rng.hpp"
#include "nslam/tape.hpp"

#include <cmath>
#include <vector>

using namespace nslam;

TEST_CASE("backward: product rule at (3,4)") {
    Tape tape;
    TapeScope scope(tape);
    Value x = tape.parameter(3.0), y = tape.parameter(4.0);
    Value f = x * y;
    auto g = backward(tape, f);
    CHECK(g.at(x) == doctest::Approx(4.0).epsilon(1e-15));
    CHECK(g.at(y) == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("backward: exp at 0") {
    Tape tape;
    TapeScope scope(tape);
    Value x = tape.parameter(0.0);
    Value f = exp(x);
    auto g = backward(tape, f);
    CHECK(g.at(x) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("backward errors") {
    Tape tape;
    TapeScope scope(tape);
    Value x = tape.parameter(1.0);
    (void)x;
    CHECK_THROWS_AS(backward(tape, Value()), InvalidOutput);
    CHECK_THROWS_AS(backward(tape, Value(uint32_t(999))), UnknownNode);
}

TEST_CASE("backward: unreachable parameter has gradient exactly 0") {
    Tape tape;
    TapeScope scope(tape);
    Value x = tape.parameter(2.0);
    Value y = tape.parameter(5.0);
    Value f = x * x;
    auto g = backward(tape, f);
    CHECK(g.at(y) == 0.0);
}

TEST_CASE("backward determinism: identical maps across runs") {
    Tape tape;
    TapeScope scope(tape);
    Rng rng(7);
    std::vector<Value> ps;
    for (int i = 0; i < 10; ++i) ps.push_back(tape.parameter(rng.uniform(-2, 2)));
    Value f = ps[0];
    for (int i = 1; i < 10; ++i) f = f * ps[i] + sin(f) * 0.25 + exp(ps[i] * 0.1);
    auto g1 = backward(tape, f);
    auto g2 = backward(tape, f);
    for (size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("replay reproduces cached values bit-for-bit") {
    Tape tape;
    TapeScope scope(tape);
    Rng rng(13);
    std::vector<Value> ps;
    for (int i = 0; i < 6; ++i) ps.push_back(tape.parameter(rng.uniform(0.1, 2)));
    Value f = softplus_k(ps[0] * ps[1] - nslam::log(ps[2]) + nslam::sqrt(ps[3]) / ps[4], 100.0) *
              nslam::cos(ps[5]);
    std::vector<double> before;
    for (uint32_t i = 0; i < tape.size(); ++i) before.push_back(tape.node(i).val);
    tape.replay();
    for (uint32_t i = 0; i < tape.size(); ++i) CHECK(tape.node(i).val == before[i]);
    (void)f;
}

TEST_CASE("linearity of backward") {
    // backward(a*f + b*g) == a*backward(f) + b*backward(g), to 1e-12 relative
    Rng rng(21);
    for (int trial = 0; trial < 5; ++trial) {
        double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
        double x0 = rng.uniform(0.2, 1.5), y0 = rng.uniform(0.2, 1.5);

        Tape t1;
        double fx, fy, gx, gy;
        {
            TapeScope s(t1);
            Value x = t1.parameter(x0), y = t1.parameter(y0);
            Value f = sin(x) * y + exp(x * 0.3);
            auto gf = backward(t1, f);
            fx = gf.at(x);
            fy = gf.at(y);
        }
        Tape t2;
        {
            TapeScope s(t2);
            Value x = t2.parameter(x0), y = t2.parameter(y0);
            Value g = x / y + cos(y);
            auto gg = backward(t2, g);
            gx = gg.at(x);
            gy = gg.at(y);
        }
        Tape t3;
        {
            TapeScope s(t3);
            Value x = t3.parameter(x0), y = t3.parameter(y0);
            Value h = (sin(x) * y + exp(x * 0.3)) * a + (x / y + cos(y)) * b;
            auto gh = backward(t3, h);
            CHECK(gh.at(x) == doctest::Approx(a * fx + b * gx).epsilon(1e-12));
            CHECK(gh.at(y) == doctest::Approx(a * fy + b * gy).epsilon(1e-12));
        }
    }
}

TEST_CASE("check_gradients: linear program is exact") {
    auto prog = [](const auto& x) { return x[0] * 3.0 + x[1] * (-2.0) + 1.5; };
    double err = check_gradients(prog, {0.7, -0.3}, 1e-6);
    CHECK(err < 1e-10);
}

TEST_CASE("check_gradients: cubic at x=2") {
    auto prog = [](const auto& x) { return x[0] * x[0] * x[0]; };
    double err = check_gradients(prog, {2.0}, 1e-5);
    CHECK(err < 1e-8);
}

TEST_CASE("check_gradients: non-finite program reports") {
    auto prog = [](const auto& x) { return nslam::log(x[0]); };
    CHECK_THROWS_AS(check_gradients(prog, {-1.0}, 1e-6), NonFiniteValue);
}

TEST_CASE("every primitive passes check_gradients at random points") {
    Rng rng(99);
    auto away_from = [&](double lo, double hi, double avoid, double margin) {
        double v = rng.uniform(lo, hi);
        while (std::abs(v - avoid) < margin) v = rng.uniform(lo, hi);
        return v;
    };
    for (int i = 0; i < 100; ++i) {
        double a = away_from(-2, 2, 0, 1e-3);
        double b = away_from(-2, 2, a, 1e-3);  // keep min/max ties away
        double pos = rng.uniform(0.1, 2.0);

        auto all = [&](const auto& x) {
            namespace n = nslam;
            auto u = x[0], v = x[1], w = x[2];
            auto r = u + v - u * v + u / v;
            r = r + n::exp(u * 0.3) + n::log(w) + n::sqrt(w) + n::sin(u) + n::cos(v);
            r = r + n::min(u, v) + n::max(u, v) + n::abs(u) + n::pow(w, 1.7) + n::reciprocal(w);
            r = r + n::clamp(u, -1.5, 1.5) + n::softplus_k(u, 10.0) + n::sigmoid_k(v, 3.0);
            return r;
        };
        double err = check_gradients(all, {a, b, pos}, 1e-6);
        CHECK(err < 1e-6);
    }
}
