// The six loss terms and their weighted combination, generic over the scalar
// type (the taped instantiation is the gradient reference for the kernel
// lane's batch optimizer).
#pragma once

#include "nslam/image.hpp"
#include "nslam/render.hpp"

#include <map>
#include <optional>
#include <vector>

namespace nslam {

struct EmptyBatch : Error { using Error::Error; };
struct MissingCue : Error { using Error::Error; };
struct DegenerateDepth : Error { using Error::Error; };
struct NonFiniteLoss : Error { using Error::Error; };

// ---- batch / cue containers ----------------------------------------------------

template <class S>
struct PixelSample {
    int frame = 0;
    int u = 0, v = 0;
    Vec3 color;  // input pixel color C
    std::array<S, 3> origin{}, dir{};
    RenderEvalG<S> render;
};
template <class S>
using PixelBatchG = std::vector<PixelSample<S>>;
using PixelBatch = PixelBatchG<double>;

struct CueFrame {
    Image depth;                      // monocular depth, arbitrary scale/shift
    std::vector<uint8_t> depth_valid; // per pixel
    Image normal;                     // camera-frame unit normals
    std::vector<uint8_t> normal_valid;
};

struct FlowField {
    Image flow;  // 2 channels: pixel displacement m -> n
    std::vector<uint8_t> valid;
};

struct CueBundle {
    std::map<int, CueFrame> frames;
    std::map<std::pair<int, int>, FlowField> flows;

    const CueFrame& frame(int id) const {
        auto it = frames.find(id);
        if (it == frames.end()) throw MissingCue("no cue frame " + std::to_string(id));
        return it->second;
    }
    const FlowField& flow(int m, int n) const {
        auto it = flows.find({m, n});
        if (it == flows.end())
            throw MissingCue("no flow field " + std::to_string(m) + "->" + std::to_string(n));
        return it->second;
    }
};

struct LossWeights {
    double rgb = 1.0, warp = 0.5, flow = 0.001, depth = 0.1, normal = 0.05, eikonal = 0.1;
};

struct LossBreakdown {
    double rgb = 0, warp = 0, flow = 0, depth = 0, normal = 0, eikonal = 0;
    double total = 0;
};

// ---- generic pose handles -------------------------------------------------------

template <class S>
struct PoseRefG {
    S R[9];  // row-major rotation
    S t[3];
};

inline PoseRefG<double> make_pose_ref(const Pose& p) {
    PoseRefG<double> r;
    Mat3 R = p.rotation.to_matrix();
    for (int i = 0; i < 9; ++i) r.R[i] = R.m[i];
    r.t[0] = p.translation.x;
    r.t[1] = p.translation.y;
    r.t[2] = p.translation.z;
    return r;
}

// pose' = exp(delta) ∘ base with a generic 6-dim increment
template <class S>
PoseRefG<S> pose_ref_with_increment(const Pose& base, const S delta[6]) {
    PoseRefG<S> out;
    Mat3 R0 = base.rotation.to_matrix();
    S w[3] = {delta[0], delta[1], delta[2]};
    for (int col = 0; col < 3; ++col) {
        S y[3] = {S(R0(0, col)), S(R0(1, col)), S(R0(2, col))};
        S rot[3];
        rotate_by_axis_angle(w, y, rot);
        out.R[0 + col] = rot[0];
        out.R[3 + col] = rot[1];
        out.R[6 + col] = rot[2];
    }
    S t0[3] = {S(base.translation.x), S(base.translation.y), S(base.translation.z)};
    S rt[3];
    rotate_by_axis_angle(w, t0, rt);
    for (int k = 0; k < 3; ++k) out.t[k] = rt[k] + delta[3 + k];
    return out;
}

// ---- warping ---------------------------------------------------------------------

template <class S>
struct WarpResult {
    S u{}, v{};
    bool valid = false;
};

// Unproject the source pixel at the rendered depth in frame m, transform into
// frame n, project. Invalid when behind the camera or outside the image.
template <class S>
WarpResult<S> warp_pixel_g(double u, double v, const S& depth, const PoseRefG<S>& pose_m,
                           const PoseRefG<S>& pose_n, const Camera& cam) {
    Vec3 d_cam = normalized({(u + 0.5 - cam.cx) / cam.fx, (v + 0.5 - cam.cy) / cam.fy, 1.0});
    S xc[3] = {mul_ws(depth, S(d_cam.x)), mul_ws(depth, S(d_cam.y)), mul_ws(depth, S(d_cam.z))};
    S xw[3];
    for (int r = 0; r < 3; ++r)
        xw[r] = pose_m.R[3 * r] * xc[0] + pose_m.R[3 * r + 1] * xc[1] +
                pose_m.R[3 * r + 2] * xc[2] + pose_m.t[r];
    S rel[3] = {xw[0] - pose_n.t[0], xw[1] - pose_n.t[1], xw[2] - pose_n.t[2]};
    S xn[3];
    for (int r = 0; r < 3; ++r)  // R^T rel
        xn[r] = pose_n.R[r] * rel[0] + pose_n.R[3 + r] * rel[1] + pose_n.R[6 + r] * rel[2];

    WarpResult<S> out;
    if (value_of(xn[2]) <= 1e-6) return out;
    out.u = xn[0] / xn[2] * cam.fx + (cam.cx - 0.5);
    out.v = xn[1] / xn[2] * cam.fy + (cam.cy - 0.5);
    double uu = value_of(out.u), vv = value_of(out.v);
    out.valid = uu >= 0.0 && uu <= cam.width - 1.0 && vv >= 0.0 && vv <= cam.height - 1.0;
    return out;
}

std::pair<Vec3, bool> warp_pixel(double u, double v, double rendered_depth, const Pose& pose_m,
                                 const Pose& pose_n, const Camera& cam);  // Vec3{u', v', 0}

// Differentiable bilinear image sample at a real-valued pixel position.
template <class S>
void bilinear_sample(const Image& img, const S& u, const S& v, S* out) {
    double uu = value_of(u), vv = value_of(v);
    int x0 = int(std::floor(uu)), y0 = int(std::floor(vv));
    x0 = std::max(0, std::min(img.width - 2, x0));
    y0 = std::max(0, std::min(img.height - 2, y0));
    S fu = u - double(x0), fv = v - double(y0);
    S w00 = (1.0 - fu) * (1.0 - fv), w10 = fu * (1.0 - fv), w01 = (1.0 - fu) * fv, w11 = fu * fv;
    for (int c = 0; c < img.channels; ++c) {
        out[c] = mul_ws(w00, S(img.at(x0, y0, c))) + mul_ws(w10, S(img.at(x0 + 1, y0, c))) +
                 mul_ws(w01, S(img.at(x0, y0 + 1, c))) + mul_ws(w11, S(img.at(x0 + 1, y0 + 1, c)));
    }
}

// ---- loss terms -------------------------------------------------------------------

template <class S>
S loss_rgb_g(const PixelBatchG<S>& batch) {
    if (batch.empty()) throw EmptyBatch("loss_rgb: empty batch");
    S acc(0.0);
    for (const auto& px : batch)
        for (int c = 0; c < 3; ++c) acc += abs(px.render.chat[c] - px.color[c]);
    return acc * (1.0 / double(batch.size()));
}

struct WarpDiagnostics {
    int pairs = 0, valid = 0;
};

// mean over valid (pixel, n) pairs of |C(r_m) - C(r_m->n)|_1
template <class S>
S loss_warp_g(const PixelBatchG<S>& batch, const std::vector<int>& keyframes,
              const std::map<int, const Image*>& images, const std::map<int, PoseRefG<S>>& poses,
              const Camera& cam, WarpDiagnostics* diag = nullptr) {
    S acc(0.0);
    int valid = 0, pairs = 0;
    for (const auto& px : batch) {
        const PoseRefG<S>& pm = poses.at(px.frame);
        for (int n : keyframes) {
            if (n == px.frame) continue;
            ++pairs;
            auto w = warp_pixel_g(px.u, px.v, px.render.dhat, pm, poses.at(n), cam);
            if (!w.valid) continue;
            ++valid;
            S sample[3];
            bilinear_sample(*images.at(n), w.u, w.v, sample);
            for (int c = 0; c < 3; ++c) acc += abs(S(px.color[c]) - sample[c]);
        }
    }
    if (diag) *diag = {pairs, valid};
    if (valid == 0) return S(0.0);
    return acc * (1.0 / double(valid));
}

// mean over valid pairs of |(r_n - r_m) - GM_{m->n}(r_m)|_1 ; the oracle flow
// stores the forward displacement so the residual vanishes at the truth
template <class S>
S loss_flow_g(const PixelBatchG<S>& batch, const std::vector<int>& keyframes,
              const std::map<int, PoseRefG<S>>& poses, const Camera& cam, const CueBundle& cues,
              WarpDiagnostics* diag = nullptr) {
    S acc(0.0);
    int valid = 0, pairs = 0;
    for (const auto& px : batch) {
        const PoseRefG<S>& pm = poses.at(px.frame);
        for (int n : keyframes) {
            if (n == px.frame) continue;
            ++pairs;
            const FlowField& gm = cues.flow(px.frame, n);
            if (!gm.valid[size_t(px.v) * gm.flow.width + px.u]) continue;
            auto w = warp_pixel_g(px.u, px.v, px.render.dhat, pm, poses.at(n), cam);
            if (!w.valid) continue;
            ++valid;
            S du = w.u - double(px.u), dv = w.v - double(px.v);
            acc += abs(du - gm.flow.at(px.u, px.v, 0)) + abs(dv - gm.flow.at(px.u, px.v, 1));
        }
    }
    if (diag) *diag = {pairs, valid};
    if (valid == 0) return S(0.0);
    return acc * (1.0 / double(valid));
}

// closed-form least squares of w*dhat + q = dbar
template <class S>
std::pair<S, S> solve_scale_shift_g(const std::vector<S>& dhat, const std::vector<double>& dbar) {
    size_t n = dhat.size();
    if (n < 2 || dbar.size() != n)
        throw DegenerateDepth("solve_scale_shift: need two matched samples");
    S sd(0.0), sdd(0.0), sdb(0.0);
    double sb = 0;
    for (size_t i = 0; i < n; ++i) {
        sd += dhat[i];
        sdd += dhat[i] * dhat[i];
        sdb += mul_ws(dhat[i], S(dbar[i]));
        sb += dbar[i];
    }
    S var = sdd * (1.0 / double(n)) - (sd * (1.0 / double(n))) * (sd * (1.0 / double(n)));
    if (value_of(var) < 1e-12) throw DegenerateDepth("solve_scale_shift: rendered depth variance ~ 0");
    S det = mul_ws(sdd, S(double(n))) - sd * sd;
    S w = (mul_ws(sdb, S(double(n))) - mul_ws(sd, S(sb))) / det;
    S q = (mul_ws(sdd, S(sb)) - sd * sdb) / det;
    return {w, q};
}

std::pair<double, double> solve_scale_shift(const std::vector<double>& dhat,
                                            const std::vector<double>& dbar);

struct DepthLossOptions {
    // fixed scale/shift for the first mapping step instead of the solve
    std::optional<std::pair<double, double>> fixed;
};

// per frame: align rendered depth to the cue, then mean squared residual over
// all usable pixels; frames with degenerate depth are skipped
template <class S>
S loss_depth_g(const PixelBatchG<S>& batch, const CueBundle& cues,
               const DepthLossOptions& opt = {}, int* skipped_frames = nullptr) {
    if (batch.empty()) throw EmptyBatch("loss_depth: empty batch");
    std::map<int, std::vector<size_t>> by_frame;
    for (size_t i = 0; i < batch.size(); ++i) by_frame[batch[i].frame].push_back(i);

    S acc(0.0);
    int used = 0, skipped = 0;
    for (auto& [fid, idxs] : by_frame) {
        const CueFrame& cf = cues.frame(fid);
        std::vector<S> dh;
        std::vector<double> db;
        for (size_t i : idxs) {
            const auto& px = batch[i];
            if (!cf.depth_valid[size_t(px.v) * cf.depth.width + px.u]) continue;
            dh.push_back(batch[i].render.dhat);
            db.push_back(cf.depth.at(px.u, px.v, 0));
        }
        if (dh.size() < 2) {
            ++skipped;
            continue;
        }
        S w(0.0), q(0.0);
        if (opt.fixed) {
            w = S(opt.fixed->first);
            q = S(opt.fixed->second);
        } else {
            try {
                auto wq = solve_scale_shift_g(dh, db);
                w = wq.first;
                q = wq.second;
            } catch (const DegenerateDepth&) {
                ++skipped;
                continue;
            }
        }
        for (size_t i = 0; i < dh.size(); ++i) {
            S r = w * dh[i] + q - db[i];
            acc += r * r;
            ++used;
        }
    }
    if (skipped_frames) *skipped_frames = skipped;
    if (used == 0) throw EmptyBatch("loss_depth: no usable frame in batch");
    return acc * (1.0 / double(used));
}

// mean of |N^ - Nbar|_1 + |1 - N^.Nbar|_1 with the rendered normal
// renormalized and the cue rotated into world frame by the frame's pose
template <class S>
S loss_normal_g(const PixelBatchG<S>& batch, const CueBundle& cues,
                const std::map<int, PoseRefG<S>>& poses, int* skipped_pixels = nullptr) {
    if (batch.empty()) throw EmptyBatch("loss_normal: empty batch");
    S acc(0.0);
    int used = 0, skipped = 0;
    for (const auto& px : batch) {
        const CueFrame& cf = cues.frame(px.frame);
        if (!cf.normal_valid[size_t(px.v) * cf.normal.width + px.u]) {
            ++skipped;
            continue;
        }
        S n2 = px.render.nhat[0] * px.render.nhat[0] + px.render.nhat[1] * px.render.nhat[1] +
               px.render.nhat[2] * px.render.nhat[2];
        if (value_of(n2) < 1e-18) {
            ++skipped;
            continue;
        }
        S inv = reciprocal(sqrt(n2));
        const PoseRefG<S>& pm = poses.at(px.frame);
        double nc[3] = {cf.normal.at(px.u, px.v, 0), cf.normal.at(px.u, px.v, 1),
                        cf.normal.at(px.u, px.v, 2)};
        S dotp(0.0);
        for (int r = 0; r < 3; ++r) {
            S nw = mul_ws(pm.R[3 * r], S(nc[0])) + mul_ws(pm.R[3 * r + 1], S(nc[1])) +
                   mul_ws(pm.R[3 * r + 2], S(nc[2]));
            S nh = px.render.nhat[r] * inv;
            acc += abs(nh - nw);
            dotp += nh * nw;
        }
        acc += abs(1.0 - dotp);
        ++used;
    }
    if (skipped_pixels) *skipped_pixels = skipped;
    if (used == 0) throw EmptyBatch("loss_normal: no usable pixel");
    return acc * (1.0 / double(used));
}

// mean of (|grad s| - 1)^2 over the sample points
template <class S>
S loss_eikonal_g(const ModelRef<S>& m, const std::vector<Vec3>& pts, Stage stage) {
    if (pts.empty()) return S(0.0);
    S acc(0.0);
    for (const auto& p : pts) {
        Jet3<S> xj[3] = {Jet3<S>::seeded(S(p.x), 0), Jet3<S>::seeded(S(p.y), 1),
                         Jet3<S>::seeded(S(p.z), 2)};
        auto ev = eval_sdf_g(m, xj, stage);
        S gn = sqrt(ev.s.dx * ev.s.dx + ev.s.dy * ev.s.dy + ev.s.dz * ev.s.dz);
        S r = gn - 1.0;
        acc += r * r;
    }
    return acc * (1.0 / double(pts.size()));
}

double loss_eikonal(const SceneModel& m, const std::vector<Vec3>& pts, Stage stage);

// Eq-16-style weighted combination.
LossBreakdown mapping_loss(const LossBreakdown& terms, const LossWeights& w);

// plain double entry points for the per-term operations
double loss_rgb(const PixelBatch& batch);
double loss_warp(const PixelBatch& batch, const std::vector<int>& keyframes,
                 const std::map<int, const Image*>& images, const std::map<int, Pose>& poses,
                 const Camera& cam, WarpDiagnostics* diag = nullptr);
double loss_flow(const PixelBatch& batch, const std::vector<int>& keyframes,
                 const std::map<int, Pose>& poses, const Camera& cam, const CueBundle& cues,
                 WarpDiagnostics* diag = nullptr);
double loss_depth(const PixelBatch& batch, const CueBundle& cues, const DepthLossOptions& opt = {},
                  int* skipped = nullptr);
double loss_normal(const PixelBatch& batch, const CueBundle& cues,
                   const std::map<int, Pose>& poses, int* skipped = nullptr);

}  // namespace nslam
