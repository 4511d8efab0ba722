// Finite-difference sweeps over model parameters (and any extra scalar
// parameters such as pose increments) against the taped analytic gradient.
// Drives the gradcheck command and the gradient acceptance criterion.
#pragma once

#include "nslam/fields.hpp"
#include "nslam/gradcheck.hpp"
#include "nslam/losses.hpp"
#include "nslam/rng.hpp"
#include "nslam/synthworld.hpp"

#include <string>
#include <vector>

namespace nslam {

struct SweepReport {
    double max_rel_error = 0;
    std::string worst_location;
    int checked = 0;

    void fold(double err, const std::string& where) {
        ++checked;
        if (err > max_rel_error) {
            max_rel_error = err;
            worst_location = where;
        }
    }
};

// fn_tape(tape, tape_model, extra_values) -> Value     (records the program)
// fn_plain(model, extra_doubles) -> double             (re-evaluates it)
//
// Sweeps up to `per_group_cap` seeded parameter indices per model group
// (all of them when the group is smaller) plus every extra parameter.
template <class FT, class FP>
SweepReport fd_sweep_model(SceneModel& m, const std::vector<double>& extras, FT&& fn_tape,
                           FP&& fn_plain, double step, int per_group_cap, Rng rng) {
    std::array<std::vector<double>, kParamGroupCount> analytic;
    std::vector<double> analytic_extras;
    {
        Tape tape;
        TapeScope scope(tape);
        TapeModel tm(tape, m);
        std::vector<Value> ex;
        ex.reserve(extras.size());
        for (double v : extras) ex.push_back(tape.parameter(v));
        Value out = fn_tape(tape, tm, ex);
        if (!std::isfinite(out.val()))
            throw NonFiniteValue("fd_sweep_model: program value is not finite");
        GradientMap gm = backward(tape, out);
        // registration order: the six groups in lift order, then extras
        size_t k = 0;
        for (int g = 0; g < kParamGroupCount; ++g) {
            size_t n = m.group(ParamGroup(g)).size();
            analytic[g].assign(gm.raw().begin() + k, gm.raw().begin() + k + n);
            k += n;
        }
        analytic_extras.assign(gm.raw().begin() + k, gm.raw().end());
    }

    SweepReport rep;
    auto fd_at = [&](double* slot, double analytic_g, const std::string& where) {
        double saved = *slot;
        *slot = saved + step;
        double fp = fn_plain(m, extras);
        *slot = saved - step;
        double fm = fn_plain(m, extras);
        *slot = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NonFiniteValue("fd_sweep_model: non-finite value at " + where);
        double fd = (fp - fm) / (2.0 * step);
        rep.fold(std::abs(analytic_g - fd) / std::max(1.0, std::abs(fd)), where);
    };

    for (int g = 0; g < kParamGroupCount; ++g) {
        auto span = m.group(ParamGroup(g));
        size_t n = span.size();
        if (n == 0) continue;
        std::vector<size_t> idx;
        if (int(n) <= per_group_cap) {
            idx.resize(n);
            for (size_t i = 0; i < n; ++i) idx[i] = i;
        } else {
            for (int i = 0; i < per_group_cap; ++i) idx.push_back(rng.uniform_int(n));
        }
        for (size_t i : idx)
            fd_at(&span[i], analytic[g][i],
                  std::string(kParamGroupNames[g]) + "[" + std::to_string(i) + "]");
    }
    std::vector<double> ex = extras;
    for (size_t i = 0; i < ex.size(); ++i) {
        double saved = ex[i];
        ex[i] = saved + step;
        double fp = fn_plain(m, ex);
        ex[i] = saved - step;
        double fm = fn_plain(m, ex);
        ex[i] = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NonFiniteValue("fd_sweep_model: non-finite value at extra parameter");
        double fd = (fp - fm) / (2.0 * step);
        rep.fold(std::abs(analytic_extras[i] - fd) / std::max(1.0, std::abs(fd)),
                 "extra[" + std::to_string(i) + "]");
    }
    return rep;
}

// ---- seeded micro scenes driving the loss-term gradient suite -------------------

enum class LossTerm { Rgb, Warp, Flow, Depth, Normal, Eikonal, Total };
inline const char* loss_term_name(LossTerm t) {
    switch (t) {
        case LossTerm::Rgb: return "rgb";
        case LossTerm::Warp: return "warp";
        case LossTerm::Flow: return "flow";
        case LossTerm::Depth: return "depth";
        case LossTerm::Normal: return "normal";
        case LossTerm::Eikonal: return "eikonal";
        case LossTerm::Total: return "total";
    }
    return "?";
}

struct MicroCase {
    SceneModel model;
    SyntheticDataset ds;
    std::vector<int> frames;                       // frames in the batch / keyframe set
    std::vector<std::pair<int, std::pair<int, int>>> pixels;  // (frame, (u,v))
    std::vector<SampleSet> samples;                // one per pixel, fixed
    std::vector<Vec3> eik_pts;
    VoxelCounter counter;
    BetaParams bp;
    LossWeights weights;
    Stage stage = Stage::Full;

    MicroCase(SceneModel m, SyntheticDataset d) : model(std::move(m)), ds(std::move(d)) {}
};

MicroCase make_micro_case(uint64_t seed, int pixels_per_frame = 3, int n_samples = 4);

// Evaluate one loss term generically; pose_deltas (6 per frame, in order of
// mc.frames) may be null for zero increments.
template <class S>
S micro_loss(const MicroCase& mc, const ModelRef<S>& ref, const S* pose_deltas, LossTerm term) {
    const Camera& cam = mc.ds.camera;
    std::map<int, PoseRefG<S>> poses;
    std::map<int, const Image*> images;
    S zeros[6] = {S(0.0), S(0.0), S(0.0), S(0.0), S(0.0), S(0.0)};
    for (size_t i = 0; i < mc.frames.size(); ++i) {
        int f = mc.frames[i];
        const S* d = pose_deltas ? pose_deltas + 6 * i : zeros;
        poses.emplace(f, pose_ref_with_increment(mc.ds.poses_gt[f], d));
        images.emplace(f, &mc.ds.rgb[f]);
    }

    PixelBatchG<S> batch;
    for (size_t i = 0; i < mc.pixels.size(); ++i) {
        auto [f, uv] = mc.pixels[i];
        size_t fi = 0;
        while (mc.frames[fi] != f) ++fi;
        const S* d = pose_deltas ? pose_deltas + 6 * fi : zeros;
        PixelSample<S> px;
        px.frame = f;
        px.u = uv.first;
        px.v = uv.second;
        for (int c = 0; c < 3; ++c) px.color[c] = mc.ds.rgb[f].at(px.u, px.v, c);
        ray_from_pose_increment(cam, mc.ds.poses_gt[f], d, px.u, px.v, px.origin.data(),
                                px.dir.data());
        px.render = render_ray_g(ref, px.origin.data(), px.dir.data(), mc.samples[i], mc.counter,
                                 mc.bp, mc.stage);
        batch.push_back(std::move(px));
    }

    switch (term) {
        case LossTerm::Rgb: return loss_rgb_g(batch);
        case LossTerm::Warp: return loss_warp_g(batch, mc.frames, images, poses, cam);
        case LossTerm::Flow: return loss_flow_g(batch, mc.frames, poses, cam, mc.ds.cues);
        case LossTerm::Depth: return loss_depth_g(batch, mc.ds.cues);
        case LossTerm::Normal: return loss_normal_g(batch, mc.ds.cues, poses);
        case LossTerm::Eikonal: return loss_eikonal_g(ref, mc.eik_pts, mc.stage);
        case LossTerm::Total: {
            S t = mul_ws(loss_rgb_g(batch), S(mc.weights.rgb));
            t += mul_ws(loss_warp_g(batch, mc.frames, images, poses, cam), S(mc.weights.warp));
            t += mul_ws(loss_flow_g(batch, mc.frames, poses, cam, mc.ds.cues), S(mc.weights.flow));
            t += mul_ws(loss_depth_g(batch, mc.ds.cues), S(mc.weights.depth));
            t += mul_ws(loss_normal_g(batch, mc.ds.cues, poses), S(mc.weights.normal));
            t += mul_ws(loss_eikonal_g(ref, mc.eik_pts, mc.stage), S(mc.weights.eikonal));
            return t;
        }
    }
    return S(0.0);
}

// One finite-difference sweep of a loss term over model parameters and the
// pose increments of every batch frame.
SweepReport gradcheck_term(MicroCase& mc, LossTerm term, double step, int per_group_cap, Rng rng);

}  // namespace nslam
