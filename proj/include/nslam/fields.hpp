// Generic evaluation of the hierarchical scene representation, templated over
// the scalar type: S = double gives the plain serial implementation of the
// field operations, S = Value records the same computation on a tape. This is
// the reference lane the OpenMP kernels are tested against.
#pragma once

#include "nslam/grid.hpp"
#include "nslam/model.hpp"
#include "nslam/tape.hpp"

#include <vector>

namespace nslam {

struct DegenerateNormal : Error { using Error::Error; };

template <class S>
struct MlpView {
    const MlpDecoder* shape = nullptr;
    const S* params = nullptr;
};

template <class S>
struct ModelRef {
    const ModelConfig* cfg = nullptr;
    GridView<S> coarse;
    std::vector<GridView<S>> fine, color;
    MlpView<S> mlp_coarse, mlp_fine, mlp_color;
};

inline ModelRef<double> make_ref(const SceneModel& m) {
    ModelRef<double> r;
    r.cfg = &m.cfg;
    r.coarse = {m.coarse_grid.resolution, m.coarse_grid.feature_dim, m.coarse_grid.values.data()};
    for (int l = 0; l < m.fine_grids.level_count(); ++l)
        r.fine.push_back({m.fine_grids.resolutions[l], m.fine_grids.feature_dim,
                          m.fine_grids.values.data() + m.fine_grids.level_offset[l]});
    for (int l = 0; l < m.color_grids.level_count(); ++l)
        r.color.push_back({m.color_grids.resolutions[l], m.color_grids.feature_dim,
                           m.color_grids.values.data() + m.color_grids.level_offset[l]});
    r.mlp_coarse = {&m.decoder_coarse, m.decoder_coarse.params.data()};
    r.mlp_fine = {&m.decoder_fine, m.decoder_fine.params.data()};
    r.mlp_color = {&m.decoder_color, m.decoder_color.params.data()};
    return r;
}

// Model parameters lifted onto a tape as registered leaves (micro models only;
// every parameter becomes a node).
struct TapeModel {
    std::array<std::vector<Value>, kParamGroupCount> groups;
    const SceneModel* source = nullptr;

    TapeModel(Tape& tape, const SceneModel& m) : source(&m) {
        for (int g = 0; g < kParamGroupCount; ++g) {
            auto src = m.group(ParamGroup(g));
            auto& dst = groups[g];
            dst.reserve(src.size());
            for (double v : src) dst.push_back(tape.parameter(v));
        }
    }
    ModelRef<Value> ref() const {
        const SceneModel& m = *source;
        ModelRef<Value> r;
        r.cfg = &m.cfg;
        r.coarse = {m.coarse_grid.resolution, m.coarse_grid.feature_dim,
                    groups[int(ParamGroup::CoarseGrid)].data()};
        for (int l = 0; l < m.fine_grids.level_count(); ++l)
            r.fine.push_back({m.fine_grids.resolutions[l], m.fine_grids.feature_dim,
                              groups[int(ParamGroup::FineGrids)].data() + m.fine_grids.level_offset[l]});
        for (int l = 0; l < m.color_grids.level_count(); ++l)
            r.color.push_back({m.color_grids.resolutions[l], m.color_grids.feature_dim,
                               groups[int(ParamGroup::ColorGrids)].data() + m.color_grids.level_offset[l]});
        r.mlp_coarse = {&m.decoder_coarse, groups[int(ParamGroup::MlpCoarse)].data()};
        r.mlp_fine = {&m.decoder_fine, groups[int(ParamGroup::MlpFine)].data()};
        r.mlp_color = {&m.decoder_color, groups[int(ParamGroup::MlpColor)].data()};
        return r;
    }
};

// ---- generic building blocks -------------------------------------------------

// [p, sin(2^0 p), cos(2^0 p), ..., sin(2^(L-1) p), cos(2^(L-1) p)] as jets,
// frequencies doubled with the exact double-angle recurrence.
template <class S>
void encode_position_jets(const Jet3<S> x[3], int levels, Jet3<S>* out) {
    for (int a = 0; a < 3; ++a) out[a] = x[a];
    for (int a = 0; a < 3; ++a) {
        S sv = sin(x[a].v), cv = cos(x[a].v);
        Jet3<S> s(sv, cv * x[a].dx, cv * x[a].dy, cv * x[a].dz);
        Jet3<S> c(cv, S(0.0) - sv * x[a].dx, S(0.0) - sv * x[a].dy, S(0.0) - sv * x[a].dz);
        for (int k = 0; k < levels; ++k) {
            out[3 + 6 * k + a] = s;
            out[3 + 6 * k + 3 + a] = c;
            Jet3<S> s2 = 2.0 * (s * c);
            Jet3<S> c2 = c * c - s * s;
            s = s2;
            c = c2;
        }
    }
}

template <class E, class S>
void mlp_eval(const MlpView<S>& m, const E* in, E* out, std::vector<E>& buf_a,
              std::vector<E>& buf_b) {
    const MlpDecoder& d = *m.shape;
    int layers = d.layer_count();
    buf_a.resize(d.widths[1]);
    const E* cur = in;
    for (int l = 0; l < layers; ++l) {
        int wi = d.widths[l], wo = d.widths[l + 1];
        E* dst = l == layers - 1 ? out : (l % 2 == 0 ? (buf_a.resize(wo), buf_a.data())
                                                     : (buf_b.resize(wo), buf_b.data()));
        const S* W = m.params + d.weight_offset[l];
        const S* b = m.params + d.bias_offset[l];
        for (int o = 0; o < wo; ++o) {
            E acc = E(b[o]);
            for (int i = 0; i < wi; ++i) acc += mul_ws(cur[i], W[size_t(i) * wo + o]);
            if (l != layers - 1) {
                if (d.hidden_activation == Activation::SoftplusSharp)
                    acc = softplus_k(acc, d.sharpness);
                else
                    acc = relu(acc);
            }
            dst[o] = acc;
        }
        cur = dst;
    }
}

template <class S>
struct SdfEvalG {
    Jet3<S> s;
    std::vector<S> z_coarse, z_fine;
};

template <class S>
SdfEvalG<S> eval_sdf_g(const ModelRef<S>& m, const Jet3<S> x[3], Stage stage) {
    const ModelConfig& c = *m.cfg;
    int Dp = c.enc_pos_dim(), Z = c.geo_feat_dim;
    using E = Jet3<S>;
    std::vector<E> enc(Dp), in(c.coarse_in()), out(1 + Z), ba, bb;
    encode_position_jets(x, c.pe_levels_pos, enc.data());
    for (int i = 0; i < Dp; ++i) in[i] = enc[i];
    trilinear_interp_jets(m.coarse, x, in.data() + Dp);
    mlp_eval(m.mlp_coarse, in.data(), out.data(), ba, bb);

    SdfEvalG<S> r;
    r.s = out[0];
    r.z_coarse.resize(Z);
    r.z_fine.assign(Z, S(0.0));
    for (int k = 0; k < Z; ++k) r.z_coarse[k] = out[1 + k].v;

    if (stage == Stage::Full) {
        std::vector<E> inf(c.fine_in());
        for (int i = 0; i < Dp; ++i) inf[i] = enc[i];
        for (int l = 0; l < c.fine_levels; ++l)
            trilinear_interp_jets(m.fine[l], x, inf.data() + Dp + l * c.fine_dim);
        std::vector<E> outf(1 + Z);
        mlp_eval(m.mlp_fine, inf.data(), outf.data(), ba, bb);
        r.s = r.s + outf[0];
        for (int k = 0; k < Z; ++k) r.z_fine[k] = outf[1 + k].v;
    }
    return r;
}

// Unit normal pointing into free space; throws on a vanishing gradient.
template <class S>
std::array<S, 3> normal_from_gradient(const Jet3<S>& s, bool inside_positive) {
    S g[3] = {s.dx, s.dy, s.dz};
    S n2 = g[0] * g[0] + g[1] * g[1] + g[2] * g[2];
    if (value_of(n2) <= 1e-18)
        throw DegenerateNormal("normal_from_gradient: vanishing SDF gradient");
    S inv = reciprocal(sqrt(n2));
    if (inside_positive) inv = S(0.0) - inv;
    return {g[0] * inv, g[1] * inv, g[2] * inv};
}

template <class S>
std::array<S, 3> eval_color_g(const ModelRef<S>& m, const S x[3], const std::array<S, 3>& nhat,
                              const S view[3], const std::vector<S>& z_coarse,
                              const std::vector<S>& z_fine, Stage stage) {
    (void)stage;  // z_fine already carries the stage rule (zeros when coarse-only)
    const ModelConfig& c = *m.cfg;
    int Dv = c.enc_view_dim(), Z = c.geo_feat_dim;
    std::vector<S> in(c.color_in());
    int o = 0;
    for (int k = 0; k < 3; ++k) in[o++] = x[k];
    for (int k = 0; k < 3; ++k) in[o++] = nhat[k];
    {
        // plain (value-only) view encoding via the same recurrence
        Jet3<S> vj[3] = {Jet3<S>(view[0]), Jet3<S>(view[1]), Jet3<S>(view[2])};
        std::vector<Jet3<S>> enc(Dv);
        encode_position_jets(vj, c.pe_levels_view, enc.data());
        for (int k = 0; k < Dv; ++k) in[o++] = enc[k].v;
    }
    for (int k = 0; k < Z; ++k) in[o++] = z_coarse[k];
    for (int k = 0; k < Z; ++k) in[o++] = z_fine[k];
    for (int l = 0; l < c.color_levels; ++l) {
        trilinear_interp_plain(m.color[l], x, in.data() + o);
        o += c.color_dim;
    }
    std::vector<S> out(3), ba, bb;
    mlp_eval(m.mlp_color, in.data(), out.data(), ba, bb);
    return {sigmoid_k(out[0], 1.0), sigmoid_k(out[1], 1.0), sigmoid_k(out[2], 1.0)};
}

// ---- double-facing operations --------------------------------------------------

struct SdfResult {
    double s = 0;
    std::vector<double> z_coarse, z_fine;
};

std::vector<double> positional_encoding(const std::vector<double>& p, int levels);
SdfResult eval_sdf(const SceneModel& m, const Vec3& x, Stage stage);
Vec3 eval_normal(const SceneModel& m, const Vec3& x, Stage stage);
Vec3 eval_color(const SceneModel& m, const Vec3& x, const Vec3& view_dir, Stage stage);

}  // namespace nslam
