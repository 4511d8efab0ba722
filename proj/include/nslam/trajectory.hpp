// Trajectory text interchange, similarity alignment, and ATE.
#pragma once

#include "nslam/core.hpp"
#include "nslam/image_io.hpp"  // ParseError

#include <string>
#include <vector>

namespace nslam {

struct InsufficientMatches : Error { using Error::Error; };
struct DegenerateGeometry : Error { using Error::Error; };

struct TrajectoryEntry {
    int id = 0;
    Pose pose;
};
using Trajectory = std::vector<TrajectoryEntry>;

// text lines: frame_id tx ty tz qx qy qz qw ('#' comments ignored)
void write_trajectory(const Trajectory& traj, const std::string& path);
Trajectory read_trajectory(const std::string& path);

struct Sim3Transform {
    double scale = 1.0;
    Quat rotation;
    Vec3 translation;

    Vec3 apply(const Vec3& p) const { return rotation.to_matrix() * p * scale + translation; }
    Sim3Transform inverse() const {
        Quat qi = rotation.conjugate();
        double si = 1.0 / scale;
        return {si, qi, qi.to_matrix() * translation * -si};
    }
};

// Closed-form least-squares similarity (rigid when with_scale is false)
// mapping est translations onto gt translations.
Sim3Transform align_umeyama(const Trajectory& est, const Trajectory& gt, bool with_scale);

// RMSE of translation residuals after alignment.
double ate_rmse(const Trajectory& est, const Trajectory& gt, bool with_scale);

}  // namespace nslam
