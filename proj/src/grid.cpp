#include "nslam/grid.hpp"

#include <cmath>

namespace nslam {

std::vector<int> grid_resolutions(int rmin, int rmax, int levels) {
    if (levels < 2) throw InvalidLevelCount("grid_resolutions: need at least 2 levels");
    if (rmin < 2 || rmin > rmax) throw InvalidRange("grid_resolutions: need 2 <= rmin <= rmax");
    std::vector<int> out(levels);
    double step = (std::log(double(rmax)) - std::log(double(rmin))) / (levels - 1);
    for (int l = 0; l < levels; ++l) {
        // 1e-9 absolute guard against floating error in exp; the ladder values
        // never sit that close to an integer from below.
        out[l] = int(std::floor(rmin * std::exp(step * l) + 1e-9));
    }
    out.front() = rmin;
    out.back() = rmax;
    return out;
}

void trilinear_interp(const DenseGrid& grid, const Vec3& x, std::span<double> out) {
    GridView<double> v{grid.resolution, grid.feature_dim, grid.values.data()};
    double p[3] = {x.x, x.y, x.z};
    trilinear_interp_plain(v, p, out.data());
}

}  // namespace nslam
