// Camera/ray plumbing and the SDF-to-density machinery shared by the generic
// renderer and the kernel lane.
#pragma once

#include "nslam/core.hpp"
#include "nslam/rng.hpp"

#include <cstdint>
#include <vector>

namespace nslam {

struct PixelOutOfRange : Error { using Error::Error; };
struct InvalidBounds : Error { using Error::Error; };
struct InvalidBeta : Error { using Error::Error; };

struct Camera {
    double fx = 0, fy = 0, cx = 0, cy = 0;
    int width = 0, height = 0;
};

struct Ray {
    Vec3 origin;
    Vec3 dir;  // unit
};

// Ascending stratified depths plus inter-sample spacings; the last spacing
// closes the interval to `far` so the accumulated weight reads as opacity
// over [near, far].
struct SampleSet {
    std::vector<double> t;
    std::vector<double> delta;
    double near = 0, far = 0;
};

// Cumulative per-voxel sample counts over the whole run, 64^3 over [-1,1]^3.
class VoxelCounter {
  public:
    static constexpr int kRes = 64;
    VoxelCounter() : counts_(size_t(kRes) * kRes * kRes, 0) {}

    // boundary points go to floor of the scaled coordinate
    static size_t voxel_index(const Vec3& x) {
        auto idx = [](double c) {
            int i = int(std::floor((c + 1.0) * 0.5 * kRes));
            if (i < 0) i = 0;
            if (i >= kRes) i = kRes - 1;
            return i;
        };
        return (size_t(idx(x.z)) * kRes + idx(x.y)) * kRes + idx(x.x);
    }
    uint64_t count_at(const Vec3& x) const { return counts_[voxel_index(x)]; }
    void record(const Vec3& x) { ++counts_[voxel_index(x)]; }
    const std::vector<uint64_t>& counts() const { return counts_; }
    std::vector<uint64_t>& counts() { return counts_; }

  private:
    std::vector<uint64_t> counts_;
};

struct BetaParams {
    double c0 = 1.208e-2;
    double c1 = 6.26471e-6;
    double c2 = 2.3e-3;
};

// beta = c0 * exp(-c1 * T_p) + c2 with T_p the count of the voxel containing x.
inline double local_beta(const VoxelCounter& counter, const Vec3& x, const BetaParams& p) {
    return p.c0 * std::exp(-p.c1 * double(counter.count_at(x))) + p.c2;
}

struct RenderResult {
    Vec3 chat;
    double dhat = 0;
    Vec3 nhat;        // pre-normalization accumulation
    std::vector<double> weights;
    double opacity = 0;
};

Ray cast_ray(const Camera& cam, const Pose& pose, int u, int v);
SampleSet sample_along_ray(const Ray& ray, double near, double far, int n, Rng& rng);
void record_samples(VoxelCounter& counter, const std::vector<Vec3>& points);

}  // namespace nslam
