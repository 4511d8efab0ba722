#include "nslam/fields.hpp"

namespace nslam {

std::vector<double> positional_encoding(const std::vector<double>& p, int levels) {
    size_t d = p.size();
    std::vector<double> out(d * (1 + 2 * levels));
    for (size_t a = 0; a < d; ++a) {
        out[a] = p[a];
        double s = std::sin(p[a]), c = std::cos(p[a]);
        for (int k = 0; k < levels; ++k) {
            out[d + 2 * d * k + a] = s;
            out[d + 2 * d * k + d + a] = c;
            double s2 = 2.0 * s * c, c2 = c * c - s * s;
            s = s2;
            c = c2;
        }
    }
    return out;
}

SdfResult eval_sdf(const SceneModel& m, const Vec3& x, Stage stage) {
    auto r = make_ref(m);
    Jet3<double> xj[3] = {Jet3<double>::seeded(x.x, 0), Jet3<double>::seeded(x.y, 1),
                          Jet3<double>::seeded(x.z, 2)};
    auto e = eval_sdf_g(r, xj, stage);
    return {e.s.v, e.z_coarse, e.z_fine};
}

Vec3 eval_normal(const SceneModel& m, const Vec3& x, Stage stage) {
    auto r = make_ref(m);
    Jet3<double> xj[3] = {Jet3<double>::seeded(x.x, 0), Jet3<double>::seeded(x.y, 1),
                          Jet3<double>::seeded(x.z, 2)};
    auto e = eval_sdf_g(r, xj, stage);
    auto n = normal_from_gradient(e.s, m.cfg.inside_positive);
    return {n[0], n[1], n[2]};
}

Vec3 eval_color(const SceneModel& m, const Vec3& x, const Vec3& view_dir, Stage stage) {
    auto r = make_ref(m);
    Jet3<double> xj[3] = {Jet3<double>::seeded(x.x, 0), Jet3<double>::seeded(x.y, 1),
                          Jet3<double>::seeded(x.z, 2)};
    auto e = eval_sdf_g(r, xj, stage);
    auto n = normal_from_gradient(e.s, m.cfg.inside_positive);
    double xp[3] = {x.x, x.y, x.z};
    double vp[3] = {view_dir.x, view_dir.y, view_dir.z};
    auto c = eval_color_g(r, xp, n, vp, e.z_coarse, e.z_fine, stage);
    return {c[0], c[1], c[2]};
}

}  // namespace nslam
