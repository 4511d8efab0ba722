// Dense voxel feature grids over the normalized scene cube [-1,1]^3.
#pragma once

#include "nslam/core.hpp"
#include "nslam/jet.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace nslam {

struct InvalidLevelCount : Error { using Error::Error; };
struct InvalidRange : Error { using Error::Error; };

// Geometric resolution ladder: floor(rmin * b^l), b = exp((ln rmax - ln rmin)/(L-1)).
// First entry is rmin, last is rmax.
std::vector<int> grid_resolutions(int rmin, int rmax, int levels);

struct DenseGrid {
    int resolution = 0;   // voxels per axis, cube
    int feature_dim = 0;
    std::vector<double> values;  // [(z*res + y)*res + x]*dim + d

    DenseGrid() = default;
    DenseGrid(int res, int dim) : resolution(res), feature_dim(dim) {
        if (res < 2) throw InvalidRange("DenseGrid: resolution must be >= 2");
        values.assign(size_t(res) * res * res * dim, 0.0);
    }
    size_t corner_index(int vx, int vy, int vz) const {
        return (size_t(vz) * resolution + vy) * resolution + vx;
    }
};

// One vector of storage for all levels, exposed per level as views, so the
// whole pyramid is a single optimizer parameter block.
struct MultiResGrid {
    std::vector<int> resolutions;
    int feature_dim = 0;
    std::vector<size_t> level_offset;  // into values, units of doubles
    std::vector<double> values;

    MultiResGrid() = default;
    MultiResGrid(int rmin, int rmax, int levels, int dim) : feature_dim(dim) {
        resolutions = grid_resolutions(rmin, rmax, levels);
        size_t total = 0;
        for (int r : resolutions) {
            level_offset.push_back(total);
            total += size_t(r) * r * r * dim;
        }
        values.assign(total, 0.0);
    }
    int level_count() const { return int(resolutions.size()); }
};

// Untyped view of one grid level for generic evaluation.
template <class S>
struct GridView {
    int res = 0;
    int dim = 0;
    const S* vals = nullptr;
};

namespace gridmath {
// Map x in [-1,1] to cell index + fractional coordinate, clamping out-of-domain
// queries to the boundary (which zeroes the spatial derivative there).
struct AxisCell {
    int i = 0;          // lower voxel index, in [0, res-2]
    double f = 0;       // fraction in [0,1]
    double dfdx = 0;    // (res-1)/2 inside the domain, 0 when clamped
};
inline AxisCell locate(double x, int res) {
    double scale = 0.5 * (res - 1);
    double g = (x + 1.0) * scale;
    AxisCell c;
    if (g <= 0.0) {
        c.i = 0; c.f = 0.0; c.dfdx = 0.0;
    } else if (g >= res - 1) {
        c.i = res - 2; c.f = 1.0; c.dfdx = 0.0;
    } else {
        c.i = int(g);
        if (c.i > res - 2) c.i = res - 2;
        c.f = g - c.i;
        c.dfdx = scale;
    }
    return c;
}
}  // namespace gridmath

// Plain trilinear blend of the 8 surrounding voxel features.
void trilinear_interp(const DenseGrid& grid, const Vec3& x, std::span<double> out);

// Generic scalar-type interpolation; the query point carries spatial tangents
// and the output features do too. Cell selection branches on the value part.
template <class S>
void trilinear_interp_jets(const GridView<S>& g, const Jet3<S> x[3], Jet3<S>* out) {
    gridmath::AxisCell cell[3];
    for (int a = 0; a < 3; ++a) cell[a] = gridmath::locate(value_of(x[a].v), g.res);

    // fractional coordinates as jets of the query point
    Jet3<S> f[3], omf[3];
    for (int a = 0; a < 3; ++a) {
        double scale = 0.5 * (g.res - 1);
        if (cell[a].dfdx == 0.0) {
            f[a] = Jet3<S>(S(cell[a].f));
        } else {
            S fv = (x[a].v + 1.0) * scale - double(cell[a].i);
            f[a] = Jet3<S>(fv, x[a].dx * scale, x[a].dy * scale, x[a].dz * scale);
        }
        omf[a] = Jet3<S>(S(1.0)) - f[a];
    }

    for (int d = 0; d < g.dim; ++d) out[d] = Jet3<S>(S(0.0));
    for (int cz = 0; cz < 2; ++cz)
        for (int cy = 0; cy < 2; ++cy)
            for (int cx = 0; cx < 2; ++cx) {
                Jet3<S> w = (cx ? f[0] : omf[0]) * (cy ? f[1] : omf[1]) * (cz ? f[2] : omf[2]);
                size_t base =
                    ((size_t(cell[2].i + cz) * g.res + (cell[1].i + cy)) * g.res + (cell[0].i + cx)) * g.dim;
                for (int d = 0; d < g.dim; ++d) out[d] += mul_ws(w, g.vals[base + d]);
            }
}

// Value-only generic interpolation (used for color features, whose spatial
// gradient is never needed explicitly).
template <class S>
void trilinear_interp_plain(const GridView<S>& g, const S x[3], S* out) {
    gridmath::AxisCell cell[3];
    for (int a = 0; a < 3; ++a) cell[a] = gridmath::locate(value_of(x[a]), g.res);
    S f[3], omf[3];
    for (int a = 0; a < 3; ++a) {
        double scale = 0.5 * (g.res - 1);
        if (cell[a].dfdx == 0.0) f[a] = S(cell[a].f);
        else f[a] = (x[a] + 1.0) * scale - double(cell[a].i);
        omf[a] = 1.0 - f[a];
    }
    for (int d = 0; d < g.dim; ++d) out[d] = S(0.0);
    for (int cz = 0; cz < 2; ++cz)
        for (int cy = 0; cy < 2; ++cy)
            for (int cx = 0; cx < 2; ++cx) {
                S w = (cx ? f[0] : omf[0]) * (cy ? f[1] : omf[1]) * (cz ? f[2] : omf[2]);
                size_t base =
                    ((size_t(cell[2].i + cz) * g.res + (cell[1].i + cy)) * g.res + (cell[0].i + cx)) * g.dim;
                for (int d = 0; d < g.dim; ++d) out[d] = out[d] + w * g.vals[base + d];
            }
}

}  // namespace nslam
