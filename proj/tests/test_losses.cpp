#include "doctest.h"

#include "nslam/gradsuite.hpp"
#include "nslam/losses.hpp"
#include "nslam/synthworld.hpp"
#include "test_util.hpp"

#include <cmath>

using namespace nslam;

namespace {

PixelSample<double> make_px(int frame, int u, int v, Vec3 color, Vec3 chat, double dhat,
                            Vec3 nhat) {
    PixelSample<double> px;
    px.frame = frame;
    px.u = u;
    px.v = v;
    px.color = color;
    px.render.chat = {chat.x, chat.y, chat.z};
    px.render.dhat = dhat;
    px.render.nhat = {nhat.x, nhat.y, nhat.z};
    return px;
}

}  // namespace

TEST_CASE("loss_rgb: exact zero, L1 definition, brute-force oracle") {
    PixelBatch b;
    b.push_back(make_px(0, 0, 0, {0.3, 0.4, 0.5}, {0.3, 0.4, 0.5}, 1, {0, 0, 1}));
    CHECK(loss_rgb(b) == 0.0);

    PixelBatch one;
    one.push_back(make_px(0, 0, 0, {0, 0, 0}, {1, 1, 1}, 1, {0, 0, 1}));
    CHECK(loss_rgb(one) == doctest::Approx(3.0).epsilon(1e-15));

    Rng rng(5);
    PixelBatch rb;
    double oracle = 0;
    for (int i = 0; i < 50; ++i) {
        Vec3 c{rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)};
        Vec3 ch{rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)};
        rb.push_back(make_px(0, 0, 0, c, ch, 1, {0, 0, 1}));
        oracle += std::abs(ch.x - c.x) + std::abs(ch.y - c.y) + std::abs(ch.z - c.z);
    }
    oracle /= 50;
    CHECK(loss_rgb(rb) == doctest::Approx(oracle).epsilon(1e-14));
    CHECK_THROWS_AS(loss_rgb(PixelBatch{}), EmptyBatch);

    // duplicating the batch leaves the mean unchanged
    PixelBatch dup = rb;
    dup.insert(dup.end(), rb.begin(), rb.end());
    CHECK(loss_rgb(dup) == doctest::Approx(loss_rgb(rb)).epsilon(1e-14));
}

TEST_CASE("warp_pixel: identity warp, behind-camera, homogeneous-matrix oracle") {
    Camera cam{60, 60, 32, 24, 64, 48};
    Pose p{Quat::from_axis_angle({0.2, -0.1, 0.3}), {0.2, 0.1, -0.4}};
    auto [uv, ok] = warp_pixel(17, 29, 1.3, p, p, cam);
    CHECK(ok);
    CHECK(uv.x == doctest::Approx(17.0).epsilon(1e-12));
    CHECK(uv.y == doctest::Approx(29.0).epsilon(1e-12));

    // a point behind the second camera is invalid
    Pose m = Pose::identity();
    Pose n{Quat::from_axis_angle({0, kPi, 0}), {0, 0, 0}};  // looks backwards
    auto [uv2, ok2] = warp_pixel(32, 24, 1.0, m, n, cam);
    CHECK(!ok2);
    (void)uv2;

    // independent 4x4 homogeneous-matrix arithmetic
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        Pose pm{Quat::from_axis_angle({rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3),
                                       rng.uniform(-0.3, 0.3)}),
                {rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3)}};
        Pose pn{Quat::from_axis_angle({rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3),
                                       rng.uniform(-0.3, 0.3)}),
                {rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3)}};
        int u = int(rng.uniform_int(64)), v = int(rng.uniform_int(48));
        double depth = rng.uniform(0.5, 2.0);

        auto [got, okv] = warp_pixel(u, v, depth, pm, pn, cam);

        // oracle: full 4x4 chain
        double h[4] = {(u + 0.5 - cam.cx) / cam.fx, (v + 0.5 - cam.cy) / cam.fy, 1.0, 0};
        double nn = std::sqrt(h[0] * h[0] + h[1] * h[1] + 1.0);
        Vec3 xc{h[0] / nn * depth, h[1] / nn * depth, 1.0 / nn * depth};
        Mat3 Rm = pm.rotation.to_matrix();
        Vec3 xw = Rm * xc + pm.translation;
        Mat3 Rn = pn.rotation.to_matrix().transposed();
        Vec3 xn = Rn * (xw - pn.translation);
        if (xn.z > 1e-6) {
            double eu = cam.fx * xn.x / xn.z + cam.cx - 0.5;
            double ev = cam.fy * xn.y / xn.z + cam.cy - 0.5;
            CHECK(got.x == doctest::Approx(eu).epsilon(1e-9));
            CHECK(got.y == doctest::Approx(ev).epsilon(1e-9));
        } else {
            CHECK(!okv);
        }
    }
}

TEST_CASE("loss_warp and loss_flow on oracle inputs") {
    Camera cam = default_desk_camera();
    TrajectorySpec traj;
    traj.frames = 20;
    CueNoiseConfig zero;
    zero.zero = true;
    AnalyticScene scene = default_desk_scene();
    SyntheticDataset ds = generate_dataset(scene, traj, cam, zero, Rng(21));

    // adjacent keyframes; the warp loss has no occlusion handling beyond
    // bounds masking, so the oracle batch keeps points visible in all views
    std::vector<int> frames{0, 1, 19};
    std::map<int, Pose> poses;
    std::map<int, const Image*> images;
    for (int f : frames) {
        poses[f] = ds.poses_gt[f];
        images[f] = &ds.rgb[f];
    }

    PixelBatch batch;
    Rng rng(3);
    for (int f : frames)
        for (int k = 0; k < 120; ++k) {
            int u = int(rng.uniform_int(cam.width)), v = int(rng.uniform_int(cam.height));
            if (!ds.valid[f][size_t(v) * cam.width + u]) continue;
            Ray r = cast_ray(cam, ds.poses_gt[f], u, v);
            Vec3 x = r.origin + r.dir * ds.depth_gt[f].at(u, v, 0);
            bool visible = true;
            for (int n : frames) {
                if (n == f) continue;
                Vec3 d = x - ds.poses_gt[n].translation;
                double dist = norm(d);
                TraceResult tr = sphere_trace(scene, {ds.poses_gt[n].translation, d / dist}, 4.0);
                if (!tr.hit || std::abs(tr.t - dist) > 0.01) visible = false;
            }
            if (!visible) continue;
            PixelSample<double> px;
            px.frame = f;
            px.u = u;
            px.v = v;
            for (int c = 0; c < 3; ++c) px.color[c] = ds.rgb[f].at(u, v, c);
            px.render.dhat = ds.depth_gt[f].at(u, v, 0);
            batch.push_back(px);
        }
    REQUIRE(batch.size() > 50);

    // identical poses: warp is the identity, bilinear lands on the source pixel
    std::map<int, Pose> same{{0, ds.poses_gt[0]}, {1, ds.poses_gt[0]}, {19, ds.poses_gt[0]}};
    std::map<int, const Image*> same_img{{0, &ds.rgb[0]}, {1, &ds.rgb[0]}, {19, &ds.rgb[0]}};
    PixelBatch batch0;
    for (auto px : batch)
        if (px.frame == 0) {
            px.render.dhat = ds.depth_gt[0].at(px.u, px.v, 0);
            batch0.push_back(px);
        }
    CHECK(loss_warp(batch0, frames, same_img, same, cam) == doctest::Approx(0.0).epsilon(1e-12));

    // perfect depth + GT poses: below the bilinear resampling floor
    double lw = loss_warp(batch, frames, images, poses, cam);
    CHECK(lw < 0.02);

    // doubling the depth makes it strictly worse
    PixelBatch wrong = batch;
    for (auto& px : wrong) px.render.dhat *= 2.0;
    CHECK(loss_warp(wrong, frames, images, poses, cam) > lw);

    // oracle flow + oracle depth + GT poses -> zero
    CHECK(loss_flow(batch, frames, poses, cam, ds.cues) < 1e-6);
    // pose perturbation -> positive
    std::map<int, Pose> bad = poses;
    bad[1] = apply_increment(bad[1], {0.03, 0, 0}, {0.01, 0, 0});
    CHECK(loss_flow(batch, frames, bad, cam, ds.cues) > 1e-4);
}

TEST_CASE("solve_scale_shift: exact lines and a grid-refinement oracle") {
    auto [w, q] = solve_scale_shift({1, 2, 3}, {3, 5, 7});
    CHECK(w == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(q == doctest::Approx(1.0).epsilon(1e-12));

    auto [w2, q2] = solve_scale_shift({0.3, 0.9, 1.7}, {0.3, 0.9, 1.7});
    CHECK(w2 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(q2 == doctest::Approx(0.0).epsilon(1e-12));

    CHECK_THROWS_AS(solve_scale_shift({1.0, 1.0, 1.0}, {2.0, 2.0, 2.0}), DegenerateDepth);
    CHECK_THROWS_AS(solve_scale_shift({1.0}, {2.0}), DegenerateDepth);

    // coarse-to-fine grid search oracle on a random instance
    Rng rng(31);
    std::vector<double> dh, db;
    for (int i = 0; i < 100; ++i) {
        double d = rng.uniform(0.5, 3.0);
        dh.push_back(d);
        db.push_back(1.7 * d - 0.3 + rng.normal() * 0.05);
    }
    auto [w3, q3] = solve_scale_shift(dh, db);
    auto sse = [&](double a, double b) {
        double s = 0;
        for (size_t i = 0; i < dh.size(); ++i) {
            double r = a * dh[i] + b - db[i];
            s += r * r;
        }
        return s;
    };
    double bw = 0, bq = 0, range_w = 4.0, range_q = 4.0;
    for (int pass = 0; pass < 12; ++pass) {
        double best = 1e30;
        double nw = bw, nq = bq;
        for (int i = -20; i <= 20; ++i)
            for (int j = -20; j <= 20; ++j) {
                double a = bw + range_w * i / 20.0, b = bq + range_q * j / 20.0;
                double s = sse(a, b);
                if (s < best) {
                    best = s;
                    nw = a;
                    nq = b;
                }
            }
        bw = nw;
        bq = nq;
        range_w /= 10;
        range_q /= 10;
    }
    CHECK(w3 == doctest::Approx(bw).epsilon(1e-6));
    CHECK(q3 == doctest::Approx(bq).epsilon(1e-6));
}

TEST_CASE("loss_depth: affine invariance and the corrupted-pixel closed form") {
    Camera cam{15, 15, 8, 6, 16, 12};
    TrajectorySpec traj;
    traj.frames = 2;
    CueNoiseConfig zero;
    zero.zero = true;
    SyntheticDataset ds = generate_dataset(default_desk_scene(), traj, cam, zero, Rng(41));

    PixelBatch batch;
    Rng rng(7);
    for (int k = 0; k < 100; ++k) {
        int u = int(rng.uniform_int(cam.width)), v = int(rng.uniform_int(cam.height));
        if (!ds.valid[0][size_t(v) * cam.width + u]) continue;
        PixelSample<double> px;
        px.frame = 0;
        px.u = u;
        px.v = v;
        px.render.dhat = ds.depth_gt[0].at(u, v, 0);
        batch.push_back(px);
    }
    REQUIRE(batch.size() > 50);

    // exact cue: the solve absorbs it completely
    CHECK(loss_depth(batch, ds.cues) < 1e-20);

    // any per-frame affine corruption of the cue leaves the loss at zero
    CueBundle corrupted = ds.cues;
    for (auto& [fid, cf] : corrupted.frames)
        for (auto& d : cf.depth.data) d = 1.9 * d + 0.07;
    CHECK(loss_depth(batch, corrupted) < 1e-10);

    // one corrupted pixel: compare against the re-fit closed form
    CueBundle one = ds.cues;
    auto& cf0 = one.frames.at(batch[3].frame);
    cf0.depth.at(batch[3].u, batch[3].v, 0) += 10.0;
    std::vector<double> dh, db;
    for (const auto& px : batch) {
        dh.push_back(px.render.dhat);
        db.push_back(one.frames.at(0).depth.at(px.u, px.v, 0));
    }
    auto [w, q] = solve_scale_shift(dh, db);
    double expect = 0;
    for (size_t i = 0; i < dh.size(); ++i) {
        double r = w * dh[i] + q - db[i];
        expect += r * r;
    }
    expect /= double(dh.size());
    CHECK(loss_depth(batch, one) == doctest::Approx(expect).epsilon(1e-12));

    CHECK_THROWS_AS(loss_depth(PixelBatch{}, ds.cues), EmptyBatch);
}

TEST_CASE("loss_normal: exact zero, antipodal, orthogonal") {
    // build a dataset-free cue bundle with unit normals
    CueBundle cues;
    CueFrame cf;
    cf.normal = Image(4, 4, 3);
    cf.normal_valid.assign(16, 1);
    cf.depth = Image(4, 4, 1);
    cf.depth_valid.assign(16, 1);
    std::map<int, Pose> poses{{0, Pose::identity()}};

    auto run = [&](Vec3 nhat, Vec3 nbar) {
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x)
                for (int c = 0; c < 3; ++c) cf.normal.at(x, y, c) = nbar[c];
        CueBundle local;
        local.frames.emplace(0, cf);
        PixelBatch b;
        b.push_back(make_px(0, 1, 1, {0, 0, 0}, {0, 0, 0}, 1.0, nhat));
        return loss_normal(b, local, poses);
    };
    CHECK(run({0, 0, 1}, {0, 0, 1}) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(run({0, 0, -1}, {0, 0, 1}) == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(run({1, 0, 0}, {0, 0, 1}) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("loss_eikonal: analytic adapter, constant field, FD oracle") {
    // analytic scene gradients are exactly unit away from medial axes
    AnalyticScene scene = default_desk_scene();
    Rng rng(3);
    double acc = 0;
    int n = 0;
    for (int i = 0; i < 200; ++i) {
        Vec3 x{rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9)};
        Vec3 g = scene_sdf_gradient(scene, x);
        double r = norm(g) - 1.0;
        acc += r * r;
        ++n;
    }
    CHECK(acc / n < 1e-10);

    // constant model field: gradient zero -> loss 1 per point
    SceneModel flat{ModelConfig::micro()};
    std::vector<Vec3> pts{{0.1, 0.2, 0.3}, {-0.4, 0.0, 0.2}};
    CHECK(loss_eikonal(flat, pts, Stage::Full) == doctest::Approx(1.0).epsilon(1e-12));

    // finite-difference gradient oracle on a live model
    SceneModel m = micro_model(77);
    Rng prng(9);
    std::vector<Vec3> rp;
    for (int i = 0; i < 20; ++i)
        rp.push_back({prng.uniform(-0.8, 0.8), prng.uniform(-0.8, 0.8), prng.uniform(-0.8, 0.8)});
    double lib = loss_eikonal(m, rp, Stage::Full);
    double h = 1e-6, oracle = 0;
    for (const auto& p : rp) {
        Vec3 g;
        for (int a = 0; a < 3; ++a) {
            Vec3 xp = p, xm = p;
            xp[a] += h;
            xm[a] -= h;
            g[a] = (eval_sdf(m, xp, Stage::Full).s - eval_sdf(m, xm, Stage::Full).s) / (2 * h);
        }
        double r = norm(g) - 1.0;
        oracle += r * r;
    }
    oracle /= rp.size();
    CHECK(lib == doctest::Approx(oracle).epsilon(1e-5));
}

TEST_CASE("mapping_loss: weighted combination") {
    LossBreakdown t;
    t.rgb = t.warp = t.flow = t.depth = t.normal = t.eikonal = 1.0;
    LossWeights w;
    LossBreakdown out = mapping_loss(t, w);
    CHECK(out.total == doctest::Approx(1.751).epsilon(1e-12));

    LossWeights zero_warp = w;
    zero_warp.warp = 0;
    CHECK(mapping_loss(t, zero_warp).total == doctest::Approx(1.251).epsilon(1e-12));

    Rng rng(3);
    LossBreakdown r;
    r.rgb = rng.uniform(0, 1);
    r.warp = rng.uniform(0, 1);
    r.flow = rng.uniform(0, 1);
    r.depth = rng.uniform(0, 1);
    r.normal = rng.uniform(0, 1);
    r.eikonal = rng.uniform(0, 1);
    double dotp = w.rgb * r.rgb + w.warp * r.warp + w.flow * r.flow + w.depth * r.depth +
                  w.normal * r.normal + w.eikonal * r.eikonal;
    CHECK(mapping_loss(r, w).total == doctest::Approx(dotp).epsilon(1e-12));

    LossBreakdown bad = t;
    bad.flow = std::nan("");
    CHECK_THROWS_AS(mapping_loss(bad, w), NonFiniteLoss);
}

TEST_CASE("every loss term passes the finite-difference sweep") {
    MicroCase mc = make_micro_case(2024);
    for (LossTerm term : {LossTerm::Rgb, LossTerm::Warp, LossTerm::Flow, LossTerm::Depth,
                          LossTerm::Normal, LossTerm::Eikonal, LossTerm::Total}) {
        auto rep = gradcheck_term(mc, term, 1e-6, 40, Rng(100 + int(term)));
        INFO("term ", loss_term_name(term), " worst at ", rep.worst_location);
        CHECK(rep.max_rel_error < 1e-4);
    }
}
