// Analytic ground-truth worlds: exact SDF scenes, procedural surface color,
// camera trajectories, and rendered datasets with oracle monocular/flow cues
// under controlled corruption.
#pragma once

#include "nslam/image.hpp"
#include "nslam/losses.hpp"
#include "nslam/render_types.hpp"

#include <optional>
#include <vector>

namespace nslam {

// Signed distances follow the model convention: positive inside matter.
struct AnalyticScene {
    struct Sphere {
        Vec3 center;
        double radius;
    };
    struct BoxPrim {
        Vec3 center;
        Vec3 half;
    };
    std::vector<Sphere> spheres;
    std::vector<BoxPrim> boxes;
    std::optional<BoxPrim> room;  // box interior: free space inside, matter outside
    uint64_t texture_seed = 1;
    double texture_base_freq = 3.0;
};

double scene_sdf(const AnalyticScene& scene, const Vec3& x);
Vec3 scene_sdf_gradient(const AnalyticScene& scene, const Vec3& x);  // d(scene_sdf)/dx
Vec3 scene_color(const AnalyticScene& scene, const Vec3& x);         // procedural texture

struct TraceResult {
    bool hit = false;
    double t = 0;
};
TraceResult sphere_trace(const AnalyticScene& scene, const Ray& ray, double t_max);

struct TrajectorySpec {
    enum class Path { Circle, Lemniscate };
    Path kind = Path::Circle;
    double radius = 0.45;
    double height = -0.05;
    int frames = 20;
    Vec3 look_at{0, -0.05, 0};
};
std::vector<Pose> make_trajectory(const TrajectorySpec& spec);

struct CueNoiseConfig {
    double depth_scale_min = 0.5, depth_scale_max = 2.0;
    double depth_shift_min = -0.1, depth_shift_max = 0.1;
    double normal_sigma_deg = 3.0;
    bool zero = false;  // emit exact cues
};

struct SyntheticDataset {
    Camera camera;
    std::vector<Pose> poses_gt;
    std::vector<Image> rgb;
    std::vector<Image> depth_gt;
    std::vector<Image> normal_gt;  // camera frame
    std::vector<std::vector<uint8_t>> valid;
    CueBundle cues;
    std::vector<std::pair<double, double>> cue_depth_affine;  // per-frame (a, b)
    double t_max = 0;
};

SyntheticDataset generate_dataset(const AnalyticScene& scene, const TrajectorySpec& traj,
                                  const Camera& camera, const CueNoiseConfig& noise, Rng rng);

// the default desk-scale world: a room with one sphere and one box inside
AnalyticScene default_desk_scene(uint64_t texture_seed = 1);
Camera default_desk_camera();

// dataset directory writer/reader (camera.txt, poses_gt.txt, rgb/, depth_gt/,
// normal_gt/, cues/)
void write_dataset(const SyntheticDataset& ds, const std::string& dir);
SyntheticDataset read_dataset(const std::string& dir);

}  // namespace nslam
