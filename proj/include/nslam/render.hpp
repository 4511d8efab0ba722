// Differentiable volume rendering: the generic (serial reference) renderer and
// the pose-increment ray generation shared with the tape lane.
#pragma once

#include "nslam/fields.hpp"
#include "nslam/render_types.hpp"

namespace nslam {

// Laplace-style SDF-to-density transform (dense where s > 0).
template <class S>
S sdf_to_density_g(const S& s, double beta) {
    if (value_of(s) <= 0) return exp(s * (1.0 / beta)) * (1.0 / (2.0 * beta));
    return (1.0 - 0.5 * exp(s * (-1.0 / beta))) * (1.0 / beta);
}

double sdf_to_density(double s, double beta);  // checks beta > 0

// Rotate y by exp([w]x) via Rodrigues, with the series form of sin(t)/t and
// (1-cos t)/t^2 near zero so the map stays differentiable at w = 0.
template <class S>
void rotate_by_axis_angle(const S w[3], const S y[3], S out[3]) {
    S t2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
    S A(0.0), B(0.0);
    if (value_of(t2) < 1e-8) {
        A = 1.0 - t2 * (1.0 / 6.0) + t2 * t2 * (1.0 / 120.0);
        B = 0.5 - t2 * (1.0 / 24.0) + t2 * t2 * (1.0 / 720.0);
    } else {
        S t = sqrt(t2);
        A = sin(t) / t;
        B = (1.0 - cos(t)) / t2;
    }
    S c1[3] = {w[1] * y[2] - w[2] * y[1], w[2] * y[0] - w[0] * y[2], w[0] * y[1] - w[1] * y[0]};
    S c2[3] = {w[1] * c1[2] - w[2] * c1[1], w[2] * c1[0] - w[0] * c1[2], w[0] * c1[1] - w[1] * c1[0]};
    for (int k = 0; k < 3; ++k) out[k] = y[k] + mul_ws(c1[k], A) + mul_ws(c2[k], B);
}

// Camera ray for pixel (u,v) under pose' = exp(delta) ∘ base, with delta the
// (axis-angle, translation) increment. Generic so the tape lane can
// differentiate through the pose.
template <class S>
void ray_from_pose_increment(const Camera& cam, const Pose& base, const S delta[6], int u, int v,
                             S origin[3], S dir[3]) {
    Vec3 d_cam = normalized({(u + 0.5 - cam.cx) / cam.fx, (v + 0.5 - cam.cy) / cam.fy, 1.0});
    Vec3 v0 = base.rotate(d_cam);
    const Vec3& t0 = base.translation;
    S w[3] = {delta[0], delta[1], delta[2]};
    S y[3] = {S(v0.x), S(v0.y), S(v0.z)};
    rotate_by_axis_angle(w, y, dir);
    S t[3] = {S(t0.x), S(t0.y), S(t0.z)};
    rotate_by_axis_angle(w, t, origin);
    for (int k = 0; k < 3; ++k) origin[k] = origin[k] + delta[3 + k];
}

// Fold an (axis-angle, translation) increment into a pose: exp(delta) ∘ pose.
inline Pose apply_increment(const Pose& p, const Vec3& w, const Vec3& t) {
    Quat dq = Quat::from_axis_angle(w);
    Pose inc{dq, t};
    return inc.compose(p);
}

template <class S>
struct RenderEvalG {
    std::array<S, 3> chat{};
    S dhat{};
    std::array<S, 3> nhat{};
    std::vector<S> weights;
    S opacity{};
};

// Reference renderer (Eq. 7/8 quadrature over the SampleSet). Per-sample
// normals fall back to zero on a vanishing gradient so color and depth still
// render; beta comes from the counter and is not differentiated.
template <class S>
RenderEvalG<S> render_ray_g(const ModelRef<S>& m, const S origin[3], const S dir[3],
                            const SampleSet& samples, const VoxelCounter& counter,
                            const BetaParams& bp, Stage stage) {
    int n = int(samples.t.size());
    RenderEvalG<S> r;
    r.weights.resize(n);
    for (auto& c : r.chat) c = S(0.0);
    for (auto& c : r.nhat) c = S(0.0);
    r.dhat = S(0.0);
    r.opacity = S(0.0);
    S T(1.0);
    for (int i = 0; i < n; ++i) {
        double ti = samples.t[i];
        Jet3<S> xj[3];
        for (int k = 0; k < 3; ++k) {
            S xv = origin[k] + mul_ws(S(ti), dir[k]);
            xj[k] = Jet3<S>(xv);
        }
        xj[0].dx = S(1.0);
        xj[1].dy = S(1.0);
        xj[2].dz = S(1.0);
        auto sdf = eval_sdf_g(m, xj, stage);

        Vec3 xval{value_of(xj[0].v), value_of(xj[1].v), value_of(xj[2].v)};
        double beta = local_beta(counter, xval, bp);
        S sigma = sdf_to_density_g(sdf.s.v, beta);
        S alpha = 1.0 - exp(S(0.0) - sigma * samples.delta[i]);
        S wgt = T * alpha;
        r.weights[i] = wgt;

        std::array<S, 3> nhat;
        bool degen = false;
        try {
            nhat = normal_from_gradient(sdf.s, m.cfg->inside_positive);
        } catch (const DegenerateNormal&) {
            degen = true;
            nhat = {S(0.0), S(0.0), S(0.0)};
        }
        S xv[3] = {xj[0].v, xj[1].v, xj[2].v};
        auto chat = eval_color_g(m, xv, nhat, dir, sdf.z_coarse, sdf.z_fine, stage);

        for (int k = 0; k < 3; ++k) r.chat[k] += wgt * chat[k];
        r.dhat += mul_ws(wgt, S(ti));
        if (!degen)
            for (int k = 0; k < 3; ++k) r.nhat[k] += wgt * nhat[k];
        r.opacity += wgt;
        T = T * (1.0 - alpha);
    }
    return r;
}

// Double-facing reference operation.
RenderResult render_ray(const SceneModel& m, const Ray& ray, const SampleSet& samples,
                        const VoxelCounter& counter, const BetaParams& bp, Stage stage);

}  // namespace nslam
