#include "nslam/trajectory.hpp"

#include <Eigen/Dense>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace nslam {

void write_trajectory(const Trajectory& traj, const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw Error("cannot open " + path);
    for (const auto& e : traj) {
        const Pose& p = e.pose;
        std::fprintf(f, "%d %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n", e.id, p.translation.x,
                     p.translation.y, p.translation.z, p.rotation.x, p.rotation.y, p.rotation.z,
                     p.rotation.w);
    }
    std::fclose(f);
}

Trajectory read_trajectory(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    Trajectory traj;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        size_t first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ss(line);
        TrajectoryEntry e;
        double extra;
        if (!(ss >> e.id >> e.pose.translation.x >> e.pose.translation.y >> e.pose.translation.z >>
              e.pose.rotation.x >> e.pose.rotation.y >> e.pose.rotation.z >> e.pose.rotation.w) ||
            (ss >> extra))
            throw ParseError("trajectory line " + std::to_string(lineno) + " malformed");
        traj.push_back(e);
    }
    return traj;
}

Sim3Transform align_umeyama(const Trajectory& est, const Trajectory& gt, bool with_scale) {
    // match on shared frame ids
    std::vector<Vec3> pe, pg;
    for (const auto& a : est)
        for (const auto& b : gt)
            if (a.id == b.id) {
                pe.push_back(a.pose.translation);
                pg.push_back(b.pose.translation);
            }
    size_t n = pe.size();
    if (n < 3) throw InsufficientMatches("align_umeyama: need at least 3 shared frames");

    Eigen::Vector3d mu_e = Eigen::Vector3d::Zero(), mu_g = Eigen::Vector3d::Zero();
    for (size_t i = 0; i < n; ++i) {
        mu_e += Eigen::Vector3d(pe[i].x, pe[i].y, pe[i].z);
        mu_g += Eigen::Vector3d(pg[i].x, pg[i].y, pg[i].z);
    }
    mu_e /= double(n);
    mu_g /= double(n);

    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    double var_e = 0;
    for (size_t i = 0; i < n; ++i) {
        Eigen::Vector3d de = Eigen::Vector3d(pe[i].x, pe[i].y, pe[i].z) - mu_e;
        Eigen::Vector3d dg = Eigen::Vector3d(pg[i].x, pg[i].y, pg[i].z) - mu_g;
        cov += dg * de.transpose();
        var_e += de.squaredNorm();
    }
    cov /= double(n);
    var_e /= double(n);
    if (var_e < 1e-18 || cov.norm() < 1e-18)
        throw DegenerateGeometry("align_umeyama: degenerate translation covariance");

    Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d U = svd.matrixU(), V = svd.matrixV();
    Eigen::Vector3d d = svd.singularValues();
    Eigen::Matrix3d S = Eigen::Matrix3d::Identity();
    if (U.determinant() * V.determinant() < 0) S(2, 2) = -1;
    Eigen::Matrix3d R = U * S * V.transpose();
    double scale = 1.0;
    if (with_scale) scale = (d(0) + d(1) * S(1, 1) + d(2) * S(2, 2)) / var_e;
    Eigen::Vector3d t = mu_g - scale * R * mu_e;

    Mat3 Rm;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) Rm(r, c) = R(r, c);
    return {scale, Quat::from_matrix(Rm), {t.x(), t.y(), t.z()}};
}

double ate_rmse(const Trajectory& est, const Trajectory& gt, bool with_scale) {
    Sim3Transform T = align_umeyama(est, gt, with_scale);
    double acc = 0;
    size_t n = 0;
    for (const auto& a : est)
        for (const auto& b : gt)
            if (a.id == b.id) {
                Vec3 r = T.apply(a.pose.translation) - b.pose.translation;
                acc += dot(r, r);
                ++n;
            }
    return std::sqrt(acc / double(n));
}

}  // namespace nslam
