#include "nslam/losses.hpp"

#include <cmath>

namespace nslam {

std::pair<Vec3, bool> warp_pixel(double u, double v, double rendered_depth, const Pose& pose_m,
                                 const Pose& pose_n, const Camera& cam) {
    auto pm = make_pose_ref(pose_m);
    auto pn = make_pose_ref(pose_n);
    auto w = warp_pixel_g(u, v, rendered_depth, pm, pn, cam);
    return {Vec3{w.u, w.v, 0}, w.valid};
}

std::pair<double, double> solve_scale_shift(const std::vector<double>& dhat,
                                            const std::vector<double>& dbar) {
    return solve_scale_shift_g(dhat, dbar);
}

double loss_eikonal(const SceneModel& m, const std::vector<Vec3>& pts, Stage stage) {
    auto ref = make_ref(m);
    return loss_eikonal_g(ref, pts, stage);
}

LossBreakdown mapping_loss(const LossBreakdown& terms, const LossWeights& w) {
    auto check = [](double v, const char* name) {
        if (!std::isfinite(v)) throw NonFiniteLoss(std::string("mapping_loss: ") + name);
        return v;
    };
    LossBreakdown out = terms;
    out.total = w.rgb * check(terms.rgb, "rgb") + w.warp * check(terms.warp, "warp") +
                w.flow * check(terms.flow, "flow") + w.depth * check(terms.depth, "depth") +
                w.normal * check(terms.normal, "normal") +
                w.eikonal * check(terms.eikonal, "eikonal");
    return out;
}

double loss_rgb(const PixelBatch& batch) { return loss_rgb_g(batch); }

static std::map<int, PoseRefG<double>> lift_poses(const std::map<int, Pose>& poses) {
    std::map<int, PoseRefG<double>> out;
    for (const auto& [id, p] : poses) out.emplace(id, make_pose_ref(p));
    return out;
}

double loss_warp(const PixelBatch& batch, const std::vector<int>& keyframes,
                 const std::map<int, const Image*>& images, const std::map<int, Pose>& poses,
                 const Camera& cam, WarpDiagnostics* diag) {
    return loss_warp_g(batch, keyframes, images, lift_poses(poses), cam, diag);
}

double loss_flow(const PixelBatch& batch, const std::vector<int>& keyframes,
                 const std::map<int, Pose>& poses, const Camera& cam, const CueBundle& cues,
                 WarpDiagnostics* diag) {
    return loss_flow_g(batch, keyframes, lift_poses(poses), cam, cues, diag);
}

double loss_depth(const PixelBatch& batch, const CueBundle& cues, const DepthLossOptions& opt,
                  int* skipped) {
    return loss_depth_g(batch, cues, opt, skipped);
}

double loss_normal(const PixelBatch& batch, const CueBundle& cues,
                   const std::map<int, Pose>& poses, int* skipped) {
    return loss_normal_g(batch, cues, lift_poses(poses), skipped);
}

}  // namespace nslam
