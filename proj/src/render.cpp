#include "nslam/render.hpp"

namespace nslam {

double sdf_to_density(double s, double beta) {
    if (beta <= 0) throw InvalidBeta("sdf_to_density: beta must be positive");
    return sdf_to_density_g(s, beta);
}

Ray cast_ray(const Camera& cam, const Pose& pose, int u, int v) {
    if (u < 0 || u >= cam.width || v < 0 || v >= cam.height)
        throw PixelOutOfRange("cast_ray: pixel outside image bounds");
    Vec3 d_cam = normalized({(u + 0.5 - cam.cx) / cam.fx, (v + 0.5 - cam.cy) / cam.fy, 1.0});
    return {pose.translation, pose.rotate(d_cam)};
}

SampleSet sample_along_ray(const Ray& ray, double near, double far, int n, Rng& rng) {
    (void)ray;
    if (!(near >= 0) || !(near < far) || n < 1)
        throw InvalidBounds("sample_along_ray: need 0 <= near < far and n >= 1");
    SampleSet s;
    s.near = near;
    s.far = far;
    s.t.resize(n);
    s.delta.resize(n);
    double w = (far - near) / n;
    for (int i = 0; i < n; ++i) s.t[i] = near + (i + rng.uniform()) * w;
    for (int i = 0; i < n; ++i) s.delta[i] = (i + 1 < n ? s.t[i + 1] : far) - s.t[i];
    return s;
}

void record_samples(VoxelCounter& counter, const std::vector<Vec3>& points) {
    for (const auto& p : points) counter.record(p);
}

RenderResult render_ray(const SceneModel& m, const Ray& ray, const SampleSet& samples,
                        const VoxelCounter& counter, const BetaParams& bp, Stage stage) {
    auto r = make_ref(m);
    double o[3] = {ray.origin.x, ray.origin.y, ray.origin.z};
    double d[3] = {ray.dir.x, ray.dir.y, ray.dir.z};
    auto e = render_ray_g(r, o, d, samples, counter, bp, stage);
    RenderResult out;
    out.chat = {e.chat[0], e.chat[1], e.chat[2]};
    out.dhat = e.dhat;
    out.nhat = {e.nhat[0], e.nhat[1], e.nhat[2]};
    out.weights = std::move(e.weights);
    out.opacity = e.opacity;
    return out;
}

}  // namespace nslam
