#include "doctest.h"

#include "nslam/fields.hpp"
#include "nslam/gradsuite.hpp"
#include "test_util.hpp"

#include <cmath>

using namespace nslam;

TEST_CASE("grid_resolutions: paper fine ladder") {
    auto r = grid_resolutions(32, 128, 8);
    std::vector<int> expect{32, 39, 47, 57, 70, 86, 105, 128};
    CHECK(r == expect);
}

TEST_CASE("grid_resolutions: degenerate and large ladders") {
    CHECK(grid_resolutions(16, 16, 2) == std::vector<int>{16, 16});
    auto r = grid_resolutions(16, 2048, 16);
    CHECK(r.front() == 16);
    CHECK(r.back() == 2048);
    for (size_t i = 1; i < r.size(); ++i) CHECK(r[i] > r[i - 1]);
    CHECK_THROWS_AS(grid_resolutions(16, 2048, 1), InvalidLevelCount);
    CHECK_THROWS_AS(grid_resolutions(64, 32, 4), InvalidRange);
}

TEST_CASE("trilinear_interp: corner query returns that corner's feature") {
    DenseGrid g(4, 2);
    Rng rng(3);
    for (auto& v : g.values) v = rng.uniform(-1, 1);
    int vx = 2, vy = 1, vz = 3;
    Vec3 x{-1 + 2.0 * vx / 3, -1 + 2.0 * vy / 3, -1 + 2.0 * vz / 3};
    std::vector<double> out(2);
    trilinear_interp(g, x, out);
    size_t idx = g.corner_index(vx, vy, vz) * 2;
    CHECK(out[0] == doctest::Approx(g.values[idx]).epsilon(1e-12));
    CHECK(out[1] == doctest::Approx(g.values[idx + 1]).epsilon(1e-12));
}

TEST_CASE("trilinear_interp: constant grid everywhere, including out of domain") {
    DenseGrid g(5, 1);
    for (auto& v : g.values) v = 0.73;
    Rng rng(4);
    for (int i = 0; i < 20; ++i) {
        Vec3 x{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};
        std::vector<double> out(1);
        trilinear_interp(g, x, out);
        CHECK(out[0] == doctest::Approx(0.73).epsilon(1e-14));
    }
}

TEST_CASE("trilinear_interp: reproduces a trilinear polynomial exactly") {
    DenseGrid g(6, 1);
    auto f = [](const Vec3& p) { return 2 * p.x - p.y + 3 * p.z; };
    for (int z = 0; z < 6; ++z)
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 6; ++x) {
                Vec3 p{-1 + 2.0 * x / 5, -1 + 2.0 * y / 5, -1 + 2.0 * z / 5};
                g.values[g.corner_index(x, y, z)] = f(p);
            }
    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
        Vec3 p{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        std::vector<double> out(1);
        trilinear_interp(g, p, out);
        CHECK(out[0] == doctest::Approx(f(p)).epsilon(1e-12));
    }
}

TEST_CASE("positional_encoding: zeros, pi, and dimensions") {
    auto e = positional_encoding({0, 0, 0}, 6);
    REQUIRE(e.size() == 39);
    for (int k = 0; k < 6; ++k)
        for (int a = 0; a < 3; ++a) {
            CHECK(e[3 + 6 * k + a] == 0.0);
            CHECK(e[3 + 6 * k + 3 + a] == 1.0);
        }
    auto e2 = positional_encoding({kPi, 0, 0}, 1);
    CHECK(e2[3] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(e2[6] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(e2[7] == 1.0);
    CHECK(e2[8] == 1.0);
    CHECK(positional_encoding({1, 2, 3}, 4).size() == 27);
}

TEST_CASE("init_model: seeded determinism, sphere fit, neutral fine branch") {
    SceneModel a = init_model(micro_config(), 43);
    SceneModel b = init_model(micro_config(), 43);
    for (int g = 0; g < kParamGroupCount; ++g) {
        auto sa = a.group(ParamGroup(g)), sb = b.group(ParamGroup(g));
        REQUIRE(sa.size() == sb.size());
        for (size_t i = 0; i < sa.size(); ++i) REQUIRE(sa[i] == sb[i]);
    }

    // residual on fresh points
    Rng rng(7);
    double err = 0;
    for (int i = 0; i < 100; ++i) {
        Vec3 x{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        double target = 0.5 - norm(x);
        err += std::abs(eval_sdf(a, x, Stage::CoarseOnly).s - target);
    }
    CHECK(err / 100 < 0.05);

    // fine branch starts exactly neutral
    for (int i = 0; i < 20; ++i) {
        Vec3 x{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        CHECK(eval_sdf(a, x, Stage::Full).s == eval_sdf(a, x, Stage::CoarseOnly).s);
    }
}

TEST_CASE("eval_sdf: full minus coarse equals the fine residual exactly") {
    SceneModel m = micro_model(11);
    auto ref = make_ref(m);
    Rng rng(8);
    for (int i = 0; i < 20; ++i) {
        Vec3 x{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        double s_full = eval_sdf(m, x, Stage::Full).s;
        double s_coarse = eval_sdf(m, x, Stage::CoarseOnly).s;

        // residual via the fine decoder alone
        Jet3<double> xj[3] = {Jet3<double>::seeded(x.x, 0), Jet3<double>::seeded(x.y, 1),
                              Jet3<double>::seeded(x.z, 2)};
        const ModelConfig& c = m.cfg;
        std::vector<Jet3<double>> enc(c.enc_pos_dim()), in(c.fine_in()),
            out(1 + c.geo_feat_dim), ba, bb;
        encode_position_jets(xj, c.pe_levels_pos, enc.data());
        for (int k = 0; k < c.enc_pos_dim(); ++k) in[k] = enc[k];
        for (int l = 0; l < c.fine_levels; ++l)
            trilinear_interp_jets(ref.fine[l], xj, in.data() + c.enc_pos_dim() + l * c.fine_dim);
        mlp_eval(ref.mlp_fine, in.data(), out.data(), ba, bb);
        CHECK(s_full == s_coarse + out[0].v);
    }
}

TEST_CASE("interpolation locality: perturbing one voxel only affects its neighborhood") {
    SceneModel m = micro_model(12);
    // voxel (1,1,1) of the 4^3 coarse grid covers cells with x in [-1/3 .. 1/3]
    Vec3 inside{0.1, 0.05, -0.2};
    Vec3 outside{0.8, 0.8, 0.8};
    double s_in = eval_sdf(m, inside, Stage::Full).s;
    double s_out = eval_sdf(m, outside, Stage::Full).s;
    size_t idx = m.coarse_grid.corner_index(1, 1, 1) * m.coarse_grid.feature_dim + 3;
    m.coarse_grid.values[idx] += 0.5;
    CHECK(eval_sdf(m, inside, Stage::Full).s != s_in);
    CHECK(eval_sdf(m, outside, Stage::Full).s == s_out);
}

TEST_CASE("decoder input widths at the paper preset") {
    ModelConfig c = ModelConfig::paper();
    CHECK(c.coarse_in() == 71);
    CHECK(c.fine_in() == 71);
    CHECK(c.color_in() == 129);
}

TEST_CASE("eval_normal: sphere model points outward, constant field throws") {
    SceneModel m = micro_model(21, false);
    Vec3 n = eval_normal(m, {0.6, 0, 0}, Stage::CoarseOnly);
    double angle = std::acos(std::min(1.0, dot(n, Vec3{1, 0, 0})));
    CHECK(angle < 5.0 * kPi / 180.0);

    SceneModel flat{micro_config()};  // all parameters zero -> constant SDF
    CHECK_THROWS_AS(eval_normal(flat, {0.1, 0.2, 0.3}, Stage::Full), DegenerateNormal);
}

TEST_CASE("eval_normal: analytic spatial gradient matches finite differences") {
    SceneModel m = micro_model(31);
    Rng rng(9);
    double h = 1e-6;
    for (int i = 0; i < 50; ++i) {
        Vec3 x{rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9)};
        Jet3<double> xj[3] = {Jet3<double>::seeded(x.x, 0), Jet3<double>::seeded(x.y, 1),
                              Jet3<double>::seeded(x.z, 2)};
        auto ref = make_ref(m);
        auto ev = eval_sdf_g(ref, xj, Stage::Full);
        Vec3 g{ev.s.dx, ev.s.dy, ev.s.dz};
        for (int a = 0; a < 3; ++a) {
            Vec3 xp = x, xm = x;
            xp[a] += h;
            xm[a] -= h;
            double fd =
                (eval_sdf(m, xp, Stage::Full).s - eval_sdf(m, xm, Stage::Full).s) / (2 * h);
            CHECK(g[a] == doctest::Approx(fd).epsilon(1e-5));
        }
    }
}

TEST_CASE("eval_color: zeroed output layer gives mid-gray; zeroed view weights kill view dependence") {
    SceneModel m = micro_model(41);
    m.decoder_color.zero_layer(m.decoder_color.layer_count() - 1);
    Vec3 c = eval_color(m, {0.2, 0.1, -0.3}, normalized({1, 2, 3}), Stage::Full);
    CHECK(c.x == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(c.y == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(c.z == doctest::Approx(0.5).epsilon(1e-15));

    SceneModel m2 = micro_model(42);
    // zero the first-layer weights fed by the view encoding slots
    auto& d = m2.decoder_color;
    int out = d.widths[1];
    for (int i = 6; i < 6 + m2.cfg.enc_view_dim(); ++i)
        for (int o = 0; o < out; ++o) d.params[d.weight_offset[0] + size_t(i) * out + o] = 0.0;
    Vec3 a = eval_color(m2, {0.2, 0.1, -0.3}, normalized({1, 2, 3}), Stage::Full);
    Vec3 b = eval_color(m2, {0.2, 0.1, -0.3}, normalized({-1, 0.5, 2}), Stage::Full);
    CHECK(a.x == b.x);
    CHECK(a.y == b.y);
    CHECK(a.z == b.z);
}

TEST_CASE("gradients of the SDF against central differences") {
    SceneModel m = micro_model(55);
    Vec3 x{0.31, -0.12, 0.44};
    auto fn_tape = [&](Tape&, TapeModel& tm, std::span<Value>) {
        auto ref = tm.ref();
        Jet3<Value> xj[3] = {Jet3<Value>::seeded(Value(x.x), 0), Jet3<Value>::seeded(Value(x.y), 1),
                             Jet3<Value>::seeded(Value(x.z), 2)};
        return eval_sdf_g(ref, xj, Stage::Full).s.v;
    };
    auto fn_plain = [&](SceneModel& mm, const std::vector<double>&) {
        return eval_sdf(mm, x, Stage::Full).s;
    };
    auto rep = fd_sweep_model(m, {}, fn_tape, fn_plain, 1e-6, 300, Rng(77));
    CHECK(rep.max_rel_error < 1e-5);
}

TEST_CASE("gradients of the color against central differences") {
    SceneModel m = micro_model(56);
    Vec3 x{-0.21, 0.33, 0.12};
    Vec3 v = normalized({0.3, -0.5, 1});
    Vec3 probe{0.3, 1.1, -0.7};  // fixed projection to get a scalar
    auto fn_tape = [&](Tape&, TapeModel& tm, std::span<Value>) {
        auto ref = tm.ref();
        Jet3<Value> xj[3] = {Jet3<Value>::seeded(Value(x.x), 0), Jet3<Value>::seeded(Value(x.y), 1),
                             Jet3<Value>::seeded(Value(x.z), 2)};
        auto ev = eval_sdf_g(ref, xj, Stage::Full);
        auto n = normal_from_gradient(ev.s, ref.cfg->inside_positive);
        Value xv[3] = {xj[0].v, xj[1].v, xj[2].v};
        Value vv[3] = {Value(v.x), Value(v.y), Value(v.z)};
        auto c = eval_color_g(ref, xv, n, vv, ev.z_coarse, ev.z_fine, Stage::Full);
        return c[0] * probe.x + c[1] * probe.y + c[2] * probe.z;
    };
    auto fn_plain = [&](SceneModel& mm, const std::vector<double>&) {
        Vec3 c = eval_color(mm, x, v, Stage::Full);
        return dot(c, probe);
    };
    auto rep = fd_sweep_model(m, {}, fn_tape, fn_plain, 1e-6, 150, Rng(78));
    CHECK(rep.max_rel_error < 1e-5);
}
