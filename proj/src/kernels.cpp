#include "nslam/kernels.hpp"

#include "nslam/tape.hpp"  // softplus_k_val / sigmoid_k_val

#include <cmath>
#include <cstring>

namespace nslam::kern {

namespace {

// ---- dense layer primitives (column-major weights: W[i*out + o]) ----------

void matvec_fwd(const double* W, const double* b, const double* x, double* y, int in, int out) {
    if (b) std::memcpy(y, b, sizeof(double) * out);
    else std::memset(y, 0, sizeof(double) * out);
    for (int i = 0; i < in; ++i) {
        double xi = x[i];
        if (xi == 0.0) continue;
        const double* w = W + size_t(i) * out;
        for (int o = 0; o < out; ++o) y[o] += xi * w[o];
    }
}

// xbar += W^T ybar
void matvec_bwd_in(const double* W, const double* ybar, double* xbar, int in, int out) {
    for (int i = 0; i < in; ++i) {
        const double* w = W + size_t(i) * out;
        double acc = 0;
        for (int o = 0; o < out; ++o) acc += w[o] * ybar[o];
        xbar[i] += acc;
    }
}

// Wg[i*out+o] += x[i] * ybar[o]
void matvec_bwd_w(const double* x, const double* ybar, double* Wg, int in, int out) {
    for (int i = 0; i < in; ++i) {
        double xi = x[i];
        if (xi == 0.0) continue;
        double* wg = Wg + size_t(i) * out;
        for (int o = 0; o < out; ++o) wg[o] += xi * ybar[o];
    }
}

// single output row `o` of a matvec (used for the SDF tangent rows)
double matvec_row(const double* W, const double* x, int in, int out, int o) {
    double acc = 0;
    for (int i = 0; i < in; ++i) acc += W[size_t(i) * out + o] * x[i];
    return acc;
}

struct AxisLoc {
    int i;
    double f, dfdx;
};

AxisLoc locate(double x, int res) {
    double scale = 0.5 * (res - 1);
    double g = (x + 1.0) * scale;
    if (g <= 0.0) return {0, 0.0, 0.0};
    if (g >= res - 1) return {res - 2, 1.0, 0.0};
    int i = int(g);
    if (i > res - 2) i = res - 2;
    return {i, g - i, scale};
}

// Positional encoding values + (optionally) per-coordinate tangents.
// Layout: [p(3) | sin0(3) cos0(3) | sin1(3) cos1(3) | ...], channel-major in
// `enc` with stride `dim` per channel. Tangent channel k is nonzero only at
// slots belonging to coordinate k.
void encode_pos(const Vec3& x, int levels, bool jets, double* enc, int dim) {
    double* v = enc;
    std::memset(enc, 0, sizeof(double) * dim * (jets ? 4 : 1));
    v[0] = x.x; v[1] = x.y; v[2] = x.z;
    if (jets) {
        enc[dim + 0] = 1.0;          // d x / dx
        enc[2 * dim + 1] = 1.0;      // d y / dy
        enc[3 * dim + 2] = 1.0;      // d z / dz
    }
    for (int a = 0; a < 3; ++a) {
        double s = std::sin(x[a]), c = std::cos(x[a]);
        double w = 1.0;
        for (int k = 0; k < levels; ++k) {
            int si = 3 + 6 * k + a, ci = 3 + 6 * k + 3 + a;
            v[si] = s;
            v[ci] = c;
            if (jets) {
                enc[(a + 1) * dim + si] = w * c;
                enc[(a + 1) * dim + ci] = -w * s;
            }
            double s2 = 2.0 * s * c, c2 = c * c - s * s;
            s = s2; c = c2; w *= 2.0;
        }
    }
}

// adjoint of encode_pos: value-slot and tangent-slot adjoints -> xbar
void encode_pos_bwd(const double* enc, int levels, int dim, bool jets,
                    const double* encbar /*4 channels*/, Vec3& xbar) {
    for (int a = 0; a < 3; ++a) {
        double acc = encbar[a] * 1.0;  // identity slot, value channel
        double w = 1.0;
        for (int k = 0; k < levels; ++k) {
            int si = 3 + 6 * k + a, ci = 3 + 6 * k + 3 + a;
            double s = enc[si], c = enc[ci];
            acc += encbar[si] * (w * c) - encbar[ci] * (w * s);
            if (jets) {
                const double* tb = encbar + (a + 1) * dim;
                acc += tb[si] * (-w * w * s) + tb[ci] * (-w * w * c);
            }
            w *= 2.0;
        }
        xbar[a] += acc;
    }
}

struct GridLevel {
    int res, dim;
    const double* vals;
    size_t param_offset;  // into the group's flat parameter block
};

// forward interpolation, optionally with tangent channels; writes cached cell
// metadata. out has channel stride `stride`.
void interp_fwd(const GridLevel& g, const Vec3& x, bool jets, int* cell, double* frac,
                double* out, int stride) {
    AxisLoc L[3];
    for (int a = 0; a < 3; ++a) {
        L[a] = locate(x[a], g.res);
        cell[a] = L[a].i;
        frac[2 * a] = L[a].f;
        frac[2 * a + 1] = L[a].dfdx;
    }
    for (int ch = 0; ch < (jets ? 4 : 1); ++ch)
        std::memset(out + ch * stride, 0, sizeof(double) * g.dim);

    for (int c = 0; c < 8; ++c) {
        int bx = c & 1, by = (c >> 1) & 1, bz = (c >> 2) & 1;
        double ux = bx ? L[0].f : 1.0 - L[0].f;
        double uy = by ? L[1].f : 1.0 - L[1].f;
        double uz = bz ? L[2].f : 1.0 - L[2].f;
        double w = ux * uy * uz;
        size_t base = ((size_t(L[2].i + bz) * g.res + (L[1].i + by)) * g.res + (L[0].i + bx)) * g.dim;
        const double* f = g.vals + base;
        for (int d = 0; d < g.dim; ++d) out[d] += w * f[d];
        if (jets) {
            double dux = (bx ? 1.0 : -1.0) * L[0].dfdx;
            double duy = (by ? 1.0 : -1.0) * L[1].dfdx;
            double duz = (bz ? 1.0 : -1.0) * L[2].dfdx;
            double wx = dux * uy * uz, wy = ux * duy * uz, wz = ux * uy * duz;
            for (int d = 0; d < g.dim; ++d) {
                double fd = f[d];
                out[stride + d] += wx * fd;
                out[2 * stride + d] += wy * fd;
                out[3 * stride + d] += wz * fd;
            }
        }
    }
}

// backward of interp_fwd. outbar has the same channel layout as out.
// Accumulates parameter gradients (dense or sparse) and, when xbar is given,
// the chain into the query point including the tangent channels' second
// weight derivatives. `fwd_tan` points at the cached forward tangents (may be
// null when jets was false).
void interp_bwd(const GridLevel& g, const int* cell, const double* frac, bool jets,
                const double* outbar, int stride, const double* fwd_tan, int fwd_stride,
                double* dense_grad, std::vector<uint32_t>* sp_idx, std::vector<double>* sp_val,
                Vec3* xbar) {
    AxisLoc L[3];
    for (int a = 0; a < 3; ++a) L[a] = {cell[a], frac[2 * a], frac[2 * a + 1]};

    if (xbar && fwd_tan) {
        // value-channel chain: d out_v / dx_k equals the cached tangent
        for (int d = 0; d < g.dim; ++d) {
            double ob = outbar[d];
            (*xbar)[0] += ob * fwd_tan[fwd_stride + d];
            (*xbar)[1] += ob * fwd_tan[2 * fwd_stride + d];
            (*xbar)[2] += ob * fwd_tan[3 * fwd_stride + d];
        }
    }

    bool need_param = dense_grad || sp_idx;
    for (int c = 0; c < 8; ++c) {
        int bx = c & 1, by = (c >> 1) & 1, bz = (c >> 2) & 1;
        double ux = bx ? L[0].f : 1.0 - L[0].f;
        double uy = by ? L[1].f : 1.0 - L[1].f;
        double uz = bz ? L[2].f : 1.0 - L[2].f;
        double dux = (bx ? 1.0 : -1.0) * L[0].dfdx;
        double duy = (by ? 1.0 : -1.0) * L[1].dfdx;
        double duz = (bz ? 1.0 : -1.0) * L[2].dfdx;
        double w = ux * uy * uz;
        double wx = dux * uy * uz, wy = ux * duy * uz, wz = ux * uy * duz;
        size_t base = ((size_t(L[2].i + bz) * g.res + (L[1].i + by)) * g.res + (L[0].i + bx)) * g.dim;

        if (need_param) {
            for (int d = 0; d < g.dim; ++d) {
                double gsum = w * outbar[d];
                if (jets) {
                    gsum += wx * outbar[stride + d] + wy * outbar[2 * stride + d] +
                            wz * outbar[3 * stride + d];
                }
                if (gsum != 0.0) {
                    if (dense_grad) dense_grad[base + d] += gsum;
                    else {
                        sp_idx->push_back(uint32_t(g.param_offset + base + d));
                        sp_val->push_back(gsum);
                    }
                }
            }
        }
        if (xbar && jets) {
            // tangent-channel chains: d(tangent_j)/dx_k = sum_c d2w/dxj dxk * f
            // nonzero mixed second derivatives of the trilinear weights only
            double wxy = dux * duy * uz, wxz = dux * uy * duz, wyz = ux * duy * duz;
            const double* f = g.vals + base;
            double a0 = 0, a1 = 0, a2 = 0;
            for (int d = 0; d < g.dim; ++d) {
                double b1 = outbar[stride + d], b2 = outbar[2 * stride + d], b3 = outbar[3 * stride + d];
                double fd = f[d];
                a0 += fd * (b2 * wxy + b3 * wxz);  // x chain from y,z tangents
                a1 += fd * (b1 * wxy + b3 * wyz);
                a2 += fd * (b1 * wxz + b2 * wyz);
            }
            (*xbar)[0] += a0;
            (*xbar)[1] += a1;
            (*xbar)[2] += a2;
        }
        if (xbar && !jets) {
            // plain value interpolation queried with point gradients (the
            // color features): d out/dx via the weight derivatives
            const double* f = g.vals + base;
            double acc = 0;
            for (int d = 0; d < g.dim; ++d) acc += outbar[d] * f[d];
            (*xbar)[0] += acc * wx;
            (*xbar)[1] += acc * wy;
            (*xbar)[2] += acc * wz;
        }
    }
}

// softplus with sharpness k over one channel-major block: value channel gets
// softplus, tangent channels scale by the sigmoid; sig is cached per unit.
static void act_softplus(const double* pre, double* post, double* sig, int n, int stride,
                         bool jets, double k) {
    for (int u = 0; u < n; ++u) {
        double s = sigmoid_k_val(pre[u], k);
        sig[u] = s;
        post[u] = softplus_k_val(pre[u], k);
    }
    if (jets)
        for (int ch = 1; ch < 4; ++ch)
            for (int u = 0; u < n; ++u) post[ch * stride + u] = sig[u] * pre[ch * stride + u];
}

// adjoint of act_softplus; prebar accumulates
static void act_softplus_bwd(const double* pre, const double* sig, const double* postbar,
                             double* prebar, int n, int stride, bool jets, double k) {
    for (int u = 0; u < n; ++u) {
        double acc = postbar[u] * sig[u];
        if (jets) {
            double dsig = k * sig[u] * (1.0 - sig[u]);
            double tsum = 0;
            for (int ch = 1; ch < 4; ++ch) {
                tsum += postbar[ch * stride + u] * pre[ch * stride + u];
                prebar[ch * stride + u] += postbar[ch * stride + u] * sig[u];
            }
            acc += tsum * dsig;
        }
        prebar[u] += acc;
    }
}

}  // namespace

// ---- sinks -----------------------------------------------------------------

void GradSink::configure(const SceneModel& m, uint32_t enabled_groups) {
    enabled = enabled_groups;
    for (int g = 0; g < kParamGroupCount; ++g) {
        auto pg = ParamGroup(g);
        if (pg == ParamGroup::ColorGrids) continue;
        if (group_on(pg)) dense[g].assign(m.group(pg).size(), 0.0);
        else dense[g].clear();
    }
    color_idx.clear();
    color_val.clear();
}

void GradSink::reset() {
    for (auto& d : dense) std::fill(d.begin(), d.end(), 0.0);
    color_idx.clear();
    color_val.clear();
}

void GradBuffers::configure(const SceneModel& m) {
    for (int i = 0; i < kParamGroupCount; ++i) g[i].assign(m.group(ParamGroup(i)).size(), 0.0);
}

void GradBuffers::zero() {
    for (auto& v : g) std::fill(v.begin(), v.end(), 0.0);
}

void GradBuffers::add(const GradSink& sink) {
    for (int i = 0; i < kParamGroupCount; ++i) {
        if (ParamGroup(i) == ParamGroup::ColorGrids) continue;
        const auto& s = sink.dense[i];
        auto& dst = g[i];
        for (size_t j = 0; j < s.size(); ++j) dst[j] += s[j];
    }
    auto& cg = g[int(ParamGroup::ColorGrids)];
    for (size_t j = 0; j < sink.color_idx.size(); ++j) cg[sink.color_idx[j]] += sink.color_val[j];
}

bool GradBuffers::all_finite() const {
    for (const auto& v : g)
        for (double x : v)
            if (!std::isfinite(x)) return false;
    return true;
}

// ---- workspace ---------------------------------------------------------------

void Workspace::configure(const ModelConfig& c, int max_samples) {
    cfg = &c;
    max_n = max_samples;
    int N = max_samples;
    int Dp = c.enc_pos_dim(), H = c.hidden_width, Z = c.geo_feat_dim;
    int Ic = c.coarse_in(), If = c.fine_in(), Icol = c.color_in();
    int Lf = c.fine_levels, Lc = c.color_levels;

    ts.resize(N); delta.resize(N); beta.resize(N); sigma.resize(N); alpha.resize(N);
    trans.resize(N); weight.resize(N); svals.resize(N);
    xs.resize(N); grad_s.resize(N); nhat.resize(N); chat.resize(N); degen.resize(N);

    enc.resize(size_t(N) * 4 * Dp);
    in_c.resize(size_t(N) * 4 * Ic);
    pre_c.resize(size_t(N) * 4 * H);
    post_c.resize(size_t(N) * 4 * H);
    sig_c.resize(size_t(N) * H);
    zc.resize(size_t(N) * Z);
    s_c_jet.resize(size_t(N) * 4);
    in_f.resize(size_t(N) * 4 * If);
    pre_f.resize(size_t(N) * 3 * 4 * H);
    post_f.resize(size_t(N) * 3 * 4 * H);
    sig_f.resize(size_t(N) * 3 * H);
    zf.resize(size_t(N) * Z);
    s_f_jet.resize(size_t(N) * 4);
    cell_c.resize(size_t(N) * 3);
    frac_c.resize(size_t(N) * 6);
    cell_f.resize(size_t(N) * 3 * Lf);
    frac_f.resize(size_t(N) * 6 * Lf);
    cell_col.resize(size_t(N) * 3 * Lc);
    frac_col.resize(size_t(N) * 6 * Lc);
    enc_v.resize(c.enc_view_dim());
    in_col.resize(size_t(N) * Icol);
    pre_col1.resize(size_t(N) * H);
    pre_col2.resize(size_t(N) * H);
    out_col.resize(size_t(N) * 3);

    size_t maxin = size_t(std::max({Ic, If, Icol, H}));
    adj_a.resize(4 * maxin + 64);
    adj_b.resize(size_t(4) * Dp + 4 * H + 64);       // [encoding adjoint | layer scratch]
    adj_mlp_in.resize(size_t(2) * Z + 4 * maxin + 64);  // [zc_bar zf_bar | input adjoint]
    quad_a.resize(N);
    quad_w.resize(N);
}

// ---- per-sample forward ------------------------------------------------------

namespace {

struct Dims {
    int Dp, H, Z, Ic, If, Icol, Lf, Lc, Dv, F, Ccol;
};
Dims dims_of(const ModelConfig& c) {
    return {c.enc_pos_dim(), c.hidden_width, c.geo_feat_dim, c.coarse_in(), c.fine_in(),
            c.color_in(), c.fine_levels, c.color_levels, c.enc_view_dim(),
            c.fine_feat_dim(), c.color_feat_dim()};
}

GridLevel coarse_level(const SceneModel& m) {
    return {m.coarse_grid.resolution, m.coarse_grid.feature_dim, m.coarse_grid.values.data(), 0};
}
GridLevel mres_level(const MultiResGrid& g, int l) {
    return {g.resolutions[l], g.feature_dim, g.values.data() + g.level_offset[l], g.level_offset[l]};
}

// geometry forward for sample i; fills caches, returns s value
double geom_forward(const KernelContext& ctx, const EvalFlags& flags, Workspace& ws, int i,
                    const Vec3& x) {
    const SceneModel& m = *ctx.model;
    const ModelConfig& c = m.cfg;
    Dims d = dims_of(c);
    bool jets = flags.jets;
    int nch = jets ? 4 : 1;

    ws.xs[i] = x;
    double* enc = ws.enc.data() + size_t(i) * 4 * d.Dp;
    encode_pos(x, c.pe_levels_pos, jets, enc, d.Dp);

    // coarse input = [enc | coarse features]
    double* in_c = ws.in_c.data() + size_t(i) * 4 * d.Ic;
    if (jets) std::memset(in_c, 0, sizeof(double) * 4 * d.Ic);
    for (int ch = 0; ch < nch; ++ch)
        std::memcpy(in_c + ch * d.Ic, enc + ch * d.Dp, sizeof(double) * d.Dp);
    interp_fwd(coarse_level(m), x, jets, ws.cell_c.data() + i * 3, ws.frac_c.data() + i * 6,
               in_c + d.Dp, d.Ic);

    // f^coarse: one hidden layer
    const auto& mc = m.decoder_coarse;
    const double* W1 = mc.params.data() + mc.weight_offset[0];
    const double* b1 = mc.params.data() + mc.bias_offset[0];
    const double* W2 = mc.params.data() + mc.weight_offset[1];
    const double* b2 = mc.params.data() + mc.bias_offset[1];
    double* pre = ws.pre_c.data() + size_t(i) * 4 * d.H;
    double* post = ws.post_c.data() + size_t(i) * 4 * d.H;
    double* sig = ws.sig_c.data() + size_t(i) * d.H;
    matvec_fwd(W1, b1, in_c, pre, d.Ic, d.H);
    if (jets)
        for (int ch = 1; ch < 4; ++ch)
            matvec_fwd(W1, nullptr, in_c + ch * d.Ic, pre + ch * d.H, d.Ic, d.H);
    act_softplus(pre, post, sig, d.H, d.H, jets, c.softplus_sharpness);

    int out_w = 1 + d.Z;
    double* sjet = ws.s_c_jet.data() + size_t(i) * 4;
    {
        // value channel: full output row set; tangents: SDF row only
        double tmp[1 + 256];
        matvec_fwd(W2, b2, post, tmp, d.H, out_w);
        sjet[0] = tmp[0];
        std::memcpy(ws.zc.data() + size_t(i) * d.Z, tmp + 1, sizeof(double) * d.Z);
        if (jets)
            for (int ch = 1; ch < 4; ++ch)
                sjet[ch] = matvec_row(W2, post + ch * d.H, d.H, out_w, 0);
        else
            sjet[1] = sjet[2] = sjet[3] = 0;
    }

    double* fjet = ws.s_f_jet.data() + size_t(i) * 4;
    double* zfp = ws.zf.data() + size_t(i) * d.Z;
    if (ctx.stage == Stage::Full) {
        double* in_f = ws.in_f.data() + size_t(i) * 4 * d.If;
        if (jets) std::memset(in_f, 0, sizeof(double) * 4 * d.If);
        for (int ch = 0; ch < nch; ++ch)
            std::memcpy(in_f + ch * d.If, enc + ch * d.Dp, sizeof(double) * d.Dp);
        for (int l = 0; l < d.Lf; ++l)
            interp_fwd(mres_level(m.fine_grids, l), x, jets,
                       ws.cell_f.data() + (size_t(i) * d.Lf + l) * 3,
                       ws.frac_f.data() + (size_t(i) * d.Lf + l) * 6,
                       in_f + d.Dp + l * c.fine_dim, d.If);

        const auto& mf = m.decoder_fine;
        const double* in_cur = in_f;
        int in_w = d.If;
        for (int l = 0; l < 3; ++l) {
            const double* Wl = mf.params.data() + mf.weight_offset[l];
            const double* bl = mf.params.data() + mf.bias_offset[l];
            double* pl = ws.pre_f.data() + (size_t(i) * 3 + l) * 4 * d.H;
            double* ql = ws.post_f.data() + (size_t(i) * 3 + l) * 4 * d.H;
            double* sl = ws.sig_f.data() + (size_t(i) * 3 + l) * d.H;
            matvec_fwd(Wl, bl, in_cur, pl, in_w, d.H);
            if (jets)
                for (int ch = 1; ch < 4; ++ch)
                    matvec_fwd(Wl, nullptr, in_cur + ch * (l == 0 ? d.If : d.H), pl + ch * d.H,
                               in_w, d.H);
            act_softplus(pl, ql, sl, d.H, d.H, jets, c.softplus_sharpness);
            in_cur = ql;
            in_w = d.H;
        }
        const double* W4 = mf.params.data() + mf.weight_offset[3];
        const double* b4 = mf.params.data() + mf.bias_offset[3];
        double tmp[1 + 256];
        matvec_fwd(W4, b4, in_cur, tmp, d.H, out_w);
        fjet[0] = tmp[0];
        std::memcpy(zfp, tmp + 1, sizeof(double) * d.Z);
        if (jets)
            for (int ch = 1; ch < 4; ++ch)
                fjet[ch] = matvec_row(W4, in_cur + ch * d.H, d.H, out_w, 0);
        else
            fjet[1] = fjet[2] = fjet[3] = 0;
    } else {
        fjet[0] = fjet[1] = fjet[2] = fjet[3] = 0;
        std::memset(zfp, 0, sizeof(double) * d.Z);
    }

    double s = sjet[0] + fjet[0];
    ws.svals[i] = s;
    ws.grad_s[i] = {sjet[1] + fjet[1], sjet[2] + fjet[2], sjet[3] + fjet[3]};
    return s;
}

// normal + color forward for sample i (requires geom_forward with jets)
void color_forward(const KernelContext& ctx, Workspace& ws, int i) {
    const SceneModel& m = *ctx.model;
    const ModelConfig& c = m.cfg;
    Dims d = dims_of(c);

    Vec3 g = ws.grad_s[i];
    double gn = norm(g);
    double flip = c.inside_positive ? -1.0 : 1.0;
    if (gn <= 1e-9) {
        ws.degen[i] = 1;
        ws.nhat[i] = {0, 0, 0};
    } else {
        ws.degen[i] = 0;
        ws.nhat[i] = g * (flip / gn);
    }

    double* in = ws.in_col.data() + size_t(i) * d.Icol;
    const Vec3& x = ws.xs[i];
    in[0] = x.x; in[1] = x.y; in[2] = x.z;
    in[3] = ws.nhat[i].x; in[4] = ws.nhat[i].y; in[5] = ws.nhat[i].z;
    std::memcpy(in + 6, ws.enc_v.data(), sizeof(double) * d.Dv);
    std::memcpy(in + 6 + d.Dv, ws.zc.data() + size_t(i) * d.Z, sizeof(double) * d.Z);
    std::memcpy(in + 6 + d.Dv + d.Z, ws.zf.data() + size_t(i) * d.Z, sizeof(double) * d.Z);
    double* feats = in + 6 + d.Dv + 2 * d.Z;
    for (int l = 0; l < d.Lc; ++l)
        interp_fwd(mres_level(m.color_grids, l), x, false,
                   ws.cell_col.data() + (size_t(i) * d.Lc + l) * 3,
                   ws.frac_col.data() + (size_t(i) * d.Lc + l) * 6,
                   feats + l * c.color_dim, 0);

    const auto& mcol = m.decoder_color;
    double* p1 = ws.pre_col1.data() + size_t(i) * d.H;
    double* p2 = ws.pre_col2.data() + size_t(i) * d.H;
    double* oc = ws.out_col.data() + size_t(i) * 3;
    double h1[256], h2[256];
    matvec_fwd(mcol.params.data() + mcol.weight_offset[0], mcol.params.data() + mcol.bias_offset[0],
               in, p1, d.Icol, d.H);
    for (int u = 0; u < d.H; ++u) h1[u] = p1[u] > 0 ? p1[u] : 0.0;
    matvec_fwd(mcol.params.data() + mcol.weight_offset[1], mcol.params.data() + mcol.bias_offset[1],
               h1, p2, d.H, d.H);
    for (int u = 0; u < d.H; ++u) h2[u] = p2[u] > 0 ? p2[u] : 0.0;
    matvec_fwd(mcol.params.data() + mcol.weight_offset[2], mcol.params.data() + mcol.bias_offset[2],
               h2, oc, d.H, 3);
    ws.chat[i] = {sigmoid_k_val(oc[0], 1.0), sigmoid_k_val(oc[1], 1.0), sigmoid_k_val(oc[2], 1.0)};
}

// backward through normal+color+geometry for sample i.
// sbar: adjoint of the SDF value; gbar: adjoint of the spatial gradient;
// cbar: adjoint of the per-sample color; nbar_extra: adjoint of the unit
// normal coming from the quadrature's normal accumulation.
void sample_backward(const KernelContext& ctx, const EvalFlags& flags, Workspace& ws, int i,
                     double sbar, Vec3 gbar, const Vec3& cbar, const Vec3& nbar_extra,
                     GradSink& sink, Vec3* xbar_out, double* encv_bar) {
    const SceneModel& m = *ctx.model;
    const ModelConfig& c = m.cfg;
    Dims d = dims_of(c);
    bool jets = flags.jets;
    Vec3 xbar{0, 0, 0};
    Vec3 nbar = nbar_extra;
    double* zc_bar = ws.adj_mlp_in.data();  // reuse scratch: [Z] + [Z]
    double* zf_bar = zc_bar + d.Z;
    std::memset(zc_bar, 0, sizeof(double) * 2 * d.Z);

    // ---- color head ----
    if (flags.color) {
        const auto& mcol = m.decoder_color;
        const double* in = ws.in_col.data() + size_t(i) * d.Icol;
        const double* p1 = ws.pre_col1.data() + size_t(i) * d.H;
        const double* p2 = ws.pre_col2.data() + size_t(i) * d.H;
        double h1[256], h2[256];
        for (int u = 0; u < d.H; ++u) h1[u] = p1[u] > 0 ? p1[u] : 0.0;
        for (int u = 0; u < d.H; ++u) h2[u] = p2[u] > 0 ? p2[u] : 0.0;

        double ob[3];
        for (int k = 0; k < 3; ++k) {
            double s = ws.chat[i][k];
            ob[k] = cbar[k] * s * (1.0 - s);
        }
        double h2b[256], h1b[256];
        std::memset(h2b, 0, sizeof(double) * d.H);
        matvec_bwd_in(mcol.params.data() + mcol.weight_offset[2], ob, h2b, d.H, 3);
        if (sink.group_on(ParamGroup::MlpColor)) {
            double* gcol = sink.dense[int(ParamGroup::MlpColor)].data();
            matvec_bwd_w(h2, ob, gcol + mcol.weight_offset[2], d.H, 3);
            for (int k = 0; k < 3; ++k) gcol[mcol.bias_offset[2] + k] += ob[k];
        }
        for (int u = 0; u < d.H; ++u) h2b[u] = p2[u] > 0 ? h2b[u] : 0.0;
        std::memset(h1b, 0, sizeof(double) * d.H);
        matvec_bwd_in(mcol.params.data() + mcol.weight_offset[1], h2b, h1b, d.H, d.H);
        if (sink.group_on(ParamGroup::MlpColor)) {
            double* gcol = sink.dense[int(ParamGroup::MlpColor)].data();
            matvec_bwd_w(h1, h2b, gcol + mcol.weight_offset[1], d.H, d.H);
            for (int u = 0; u < d.H; ++u) gcol[mcol.bias_offset[1] + u] += h2b[u];
        }
        for (int u = 0; u < d.H; ++u) h1b[u] = p1[u] > 0 ? h1b[u] : 0.0;
        double* inb = ws.adj_a.data();
        std::memset(inb, 0, sizeof(double) * d.Icol);
        matvec_bwd_in(mcol.params.data() + mcol.weight_offset[0], h1b, inb, d.Icol, d.H);
        if (sink.group_on(ParamGroup::MlpColor)) {
            double* gcol = sink.dense[int(ParamGroup::MlpColor)].data();
            matvec_bwd_w(in, h1b, gcol + mcol.weight_offset[0], d.Icol, d.H);
            for (int u = 0; u < d.H; ++u) gcol[mcol.bias_offset[0] + u] += h1b[u];
        }

        // split the color-input adjoint
        if (flags.point_grads) { xbar.x += inb[0]; xbar.y += inb[1]; xbar.z += inb[2]; }
        nbar.x += inb[3]; nbar.y += inb[4]; nbar.z += inb[5];
        if (encv_bar)
            for (int k = 0; k < d.Dv; ++k) encv_bar[k] += inb[6 + k];
        for (int k = 0; k < d.Z; ++k) zc_bar[k] += inb[6 + d.Dv + k];
        for (int k = 0; k < d.Z; ++k) zf_bar[k] += inb[6 + d.Dv + d.Z + k];

        const double* featsb = inb + 6 + d.Dv + 2 * d.Z;
        bool want_color_grad = sink.group_on(ParamGroup::ColorGrids);
        if (want_color_grad || flags.point_grads) {
            for (int l = 0; l < d.Lc; ++l)
                interp_bwd(mres_level(m.color_grids, l),
                           ws.cell_col.data() + (size_t(i) * d.Lc + l) * 3,
                           ws.frac_col.data() + (size_t(i) * d.Lc + l) * 6, false,
                           featsb + l * c.color_dim, 0, nullptr, 0, nullptr,
                           want_color_grad ? &sink.color_idx : nullptr,
                           want_color_grad ? &sink.color_val : nullptr,
                           flags.point_grads ? &xbar : nullptr);
        }
    }

    // ---- unit normal -> SDF spatial gradient ----
    if (jets && !ws.degen[i]) {
        Vec3 g = ws.grad_s[i];
        double gn = norm(g);
        double flip = c.inside_positive ? -1.0 : 1.0;
        Vec3 u = g / gn;
        double du = dot(nbar, u);
        gbar += (nbar - u * du) * (flip / gn);
    }

    // ---- geometry: s jet adjoint = (sbar, gbar) through fine + coarse ----
    double sj_bar[4] = {sbar, gbar.x, gbar.y, gbar.z};

    double* encb = ws.adj_b.data();  // encoding adjoint, 4 channels
    std::memset(encb, 0, sizeof(double) * 4 * d.Dp);

    if (ctx.stage == Stage::Full) {
        const auto& mf = m.decoder_fine;
        int out_w = 1 + d.Z;
        // output layer adjoint: row 0 from the jet, z rows value-only
        double ob[4][257];
        std::memset(ob, 0, sizeof(ob));
        ob[0][0] = sj_bar[0];
        for (int k = 0; k < d.Z; ++k) ob[0][1 + k] = zf_bar[k];
        for (int ch = 1; ch < 4; ++ch) ob[ch][0] = sj_bar[ch];

        const double* W4 = mf.params.data() + mf.weight_offset[3];
        const double* h3 = ws.post_f.data() + (size_t(i) * 3 + 2) * 4 * d.H;
        double* h3b = ws.adj_a.data();
        std::memset(h3b, 0, sizeof(double) * 4 * d.H);
        matvec_bwd_in(W4, ob[0], h3b, d.H, out_w);
        if (jets)
            for (int ch = 1; ch < 4; ++ch)
                for (int u = 0; u < d.H; ++u) h3b[ch * d.H + u] += W4[size_t(u) * out_w] * ob[ch][0];
        if (sink.group_on(ParamGroup::MlpFine)) {
            double* gf = sink.dense[int(ParamGroup::MlpFine)].data();
            matvec_bwd_w(h3, ob[0], gf + mf.weight_offset[3], d.H, out_w);
            if (jets)
                for (int ch = 1; ch < 4; ++ch)
                    for (int u = 0; u < d.H; ++u)
                        gf[mf.weight_offset[3] + size_t(u) * out_w] += h3[ch * d.H + u] * ob[ch][0];
            for (int k = 0; k < out_w; ++k) gf[mf.bias_offset[3] + k] += ob[0][k];
        }

        // three hidden layers in reverse
        double* curb = h3b;
        for (int l = 2; l >= 0; --l) {
            const double* pl = ws.pre_f.data() + (size_t(i) * 3 + l) * 4 * d.H;
            const double* sl = ws.sig_f.data() + (size_t(i) * 3 + l) * d.H;
            double* preb = ws.adj_b.data() + 4 * d.Dp;  // borrow tail scratch
            std::memset(preb, 0, sizeof(double) * 4 * d.H);
            act_softplus_bwd(pl, sl, curb, preb, d.H, d.H, jets, c.softplus_sharpness);

            const double* Wl = mf.params.data() + mf.weight_offset[l];
            int in_w = l == 0 ? d.If : d.H;
            const double* in_cur = l == 0 ? ws.in_f.data() + size_t(i) * 4 * d.If
                                          : ws.post_f.data() + (size_t(i) * 3 + (l - 1)) * 4 * d.H;
            int in_stride = l == 0 ? d.If : d.H;
            double* inb = ws.adj_mlp_in.data() + 2 * d.Z;  // scratch beyond z adjoints
            std::memset(inb, 0, sizeof(double) * 4 * in_w);
            for (int ch = 0; ch < (jets ? 4 : 1); ++ch)
                matvec_bwd_in(Wl, preb + ch * d.H, inb + ch * in_w, in_w, d.H);
            if (sink.group_on(ParamGroup::MlpFine)) {
                double* gf = sink.dense[int(ParamGroup::MlpFine)].data();
                for (int ch = 0; ch < (jets ? 4 : 1); ++ch)
                    matvec_bwd_w(in_cur + ch * in_stride, preb + ch * d.H,
                                 gf + mf.weight_offset[l], in_w, d.H);
                for (int u = 0; u < d.H; ++u) gf[mf.bias_offset[l] + u] += preb[u];
            }
            if (l == 0) {
                // split fine input adjoint: encoding + fine features
                for (int ch = 0; ch < (jets ? 4 : 1); ++ch)
                    for (int k = 0; k < d.Dp; ++k) encb[ch * d.Dp + k] += inb[ch * d.If + k];
                bool want = sink.group_on(ParamGroup::FineGrids);
                if (want || flags.point_grads) {
                    double* gfine = want ? sink.dense[int(ParamGroup::FineGrids)].data() : nullptr;
                    for (int lev = 0; lev < d.Lf; ++lev) {
                        // gather the per-level adjoint block (channel stride If)
                        interp_bwd(mres_level(m.fine_grids, lev),
                                   ws.cell_f.data() + (size_t(i) * d.Lf + lev) * 3,
                                   ws.frac_f.data() + (size_t(i) * d.Lf + lev) * 6, jets,
                                   inb + d.Dp + lev * c.fine_dim, d.If,
                                   ws.in_f.data() + size_t(i) * 4 * d.If + d.Dp + lev * c.fine_dim,
                                   d.If,
                                   gfine ? gfine + m.fine_grids.level_offset[lev] : nullptr,
                                   nullptr, nullptr, flags.point_grads ? &xbar : nullptr);
                    }
                }
            } else {
                std::memcpy(ws.adj_a.data(), inb, sizeof(double) * 4 * in_w);
                curb = ws.adj_a.data();
            }
        }
    }

    // ---- coarse branch ----
    {
        const auto& mc = m.decoder_coarse;
        int out_w = 1 + d.Z;
        double ob[4][257];
        std::memset(ob, 0, sizeof(ob));
        ob[0][0] = sj_bar[0];
        for (int k = 0; k < d.Z; ++k) ob[0][1 + k] = zc_bar[k];
        for (int ch = 1; ch < 4; ++ch) ob[ch][0] = sj_bar[ch];

        const double* W2 = mc.params.data() + mc.weight_offset[1];
        const double* h = ws.post_c.data() + size_t(i) * 4 * d.H;
        double* hb = ws.adj_a.data();
        std::memset(hb, 0, sizeof(double) * 4 * d.H);
        matvec_bwd_in(W2, ob[0], hb, d.H, out_w);
        if (jets)
            for (int ch = 1; ch < 4; ++ch)
                for (int u = 0; u < d.H; ++u) hb[ch * d.H + u] += W2[size_t(u) * out_w] * ob[ch][0];
        if (sink.group_on(ParamGroup::MlpCoarse)) {
            double* gc = sink.dense[int(ParamGroup::MlpCoarse)].data();
            matvec_bwd_w(h, ob[0], gc + mc.weight_offset[1], d.H, out_w);
            if (jets)
                for (int ch = 1; ch < 4; ++ch)
                    for (int u = 0; u < d.H; ++u)
                        gc[mc.weight_offset[1] + size_t(u) * out_w] += h[ch * d.H + u] * ob[ch][0];
            for (int k = 0; k < out_w; ++k) gc[mc.bias_offset[1] + k] += ob[0][k];
        }

        const double* pre = ws.pre_c.data() + size_t(i) * 4 * d.H;
        const double* sig = ws.sig_c.data() + size_t(i) * d.H;
        double* preb = ws.adj_b.data() + 4 * d.Dp;
        std::memset(preb, 0, sizeof(double) * 4 * d.H);
        act_softplus_bwd(pre, sig, hb, preb, d.H, d.H, jets, c.softplus_sharpness);

        const double* W1 = mc.params.data() + mc.weight_offset[0];
        const double* in_c = ws.in_c.data() + size_t(i) * 4 * d.Ic;
        double* inb = ws.adj_mlp_in.data() + 2 * d.Z;
        std::memset(inb, 0, sizeof(double) * 4 * d.Ic);
        for (int ch = 0; ch < (jets ? 4 : 1); ++ch)
            matvec_bwd_in(W1, preb + ch * d.H, inb + ch * d.Ic, d.Ic, d.H);
        if (sink.group_on(ParamGroup::MlpCoarse)) {
            double* gc = sink.dense[int(ParamGroup::MlpCoarse)].data();
            for (int ch = 0; ch < (jets ? 4 : 1); ++ch)
                matvec_bwd_w(in_c + ch * d.Ic, preb + ch * d.H, gc + mc.weight_offset[0], d.Ic, d.H);
            for (int u = 0; u < d.H; ++u) gc[mc.bias_offset[0] + u] += preb[u];
        }
        for (int ch = 0; ch < (jets ? 4 : 1); ++ch)
            for (int k = 0; k < d.Dp; ++k) encb[ch * d.Dp + k] += inb[ch * d.Ic + k];
        bool want = sink.group_on(ParamGroup::CoarseGrid);
        if (want || flags.point_grads) {
            interp_bwd(coarse_level(m), ws.cell_c.data() + i * 3, ws.frac_c.data() + i * 6, jets,
                       inb + d.Dp, d.Ic, ws.in_c.data() + size_t(i) * 4 * d.Ic + d.Dp, d.Ic,
                       want ? sink.dense[int(ParamGroup::CoarseGrid)].data() : nullptr, nullptr,
                       nullptr, flags.point_grads ? &xbar : nullptr);
        }
    }

    if (flags.point_grads) {
        const double* enc = ws.enc.data() + size_t(i) * 4 * d.Dp;
        encode_pos_bwd(enc, c.pe_levels_pos, d.Dp, jets, encb, xbar);
        *xbar_out = xbar;
    }
}

}  // namespace

// ---- value-only entry points -------------------------------------------------

size_t eval_scratch_size(const ModelConfig& cfg) {
    return size_t(cfg.enc_pos_dim() + std::max(cfg.coarse_in(), cfg.fine_in()) +
                  4 * cfg.hidden_width + 2 * (1 + cfg.geo_feat_dim)) + 64;
}

double eval_sdf_value(const SceneModel& m, Stage stage, const Vec3& x, double* scratch) {
    const ModelConfig& c = m.cfg;
    int Dp = c.enc_pos_dim(), H = c.hidden_width, Z = c.geo_feat_dim;
    double* enc = scratch;
    double* in = enc + Dp;
    double* hid = in + std::max(c.coarse_in(), c.fine_in());
    double* hid2 = hid + H;

    encode_pos(x, c.pe_levels_pos, false, enc, Dp);

    int cell[3];
    double frac[6];
    std::memcpy(in, enc, sizeof(double) * Dp);
    interp_fwd(coarse_level(m), x, false, cell, frac, in + Dp, 0);
    const auto& mc = m.decoder_coarse;
    matvec_fwd(mc.params.data() + mc.weight_offset[0], mc.params.data() + mc.bias_offset[0], in,
               hid, c.coarse_in(), H);
    for (int u = 0; u < H; ++u) hid[u] = softplus_k_val(hid[u], c.softplus_sharpness);
    double s;
    {
        // SDF row only
        const double* W2 = mc.params.data() + mc.weight_offset[1];
        s = mc.params[mc.bias_offset[1]] + matvec_row(W2, hid, H, 1 + Z, 0);
    }
    if (stage == Stage::Full) {
        std::memcpy(in, enc, sizeof(double) * Dp);
        for (int l = 0; l < c.fine_levels; ++l)
            interp_fwd(mres_level(m.fine_grids, l), x, false, cell, frac,
                       in + Dp + l * c.fine_dim, 0);
        const auto& mf = m.decoder_fine;
        const double* cur = in;
        int in_w = c.fine_in();
        double* a = hid;
        double* b = hid2;
        for (int l = 0; l < 3; ++l) {
            matvec_fwd(mf.params.data() + mf.weight_offset[l],
                       mf.params.data() + mf.bias_offset[l], cur, a, in_w, H);
            for (int u = 0; u < H; ++u) a[u] = softplus_k_val(a[u], c.softplus_sharpness);
            cur = a;
            std::swap(a, b);
            in_w = H;
        }
        const double* W4 = mf.params.data() + mf.weight_offset[3];
        s += mf.params[mf.bias_offset[3]] + matvec_row(W4, cur, H, 1 + Z, 0);
    }
    return s;
}

// ---- ray-level entry points ---------------------------------------------------

RayQuad ray_forward(const KernelContext& ctx, const Vec3& origin, const Vec3& dir,
                    const double* ts, int n, double far, const EvalFlags& flags, Workspace& ws) {
    const ModelConfig& c = ctx.model->cfg;
    ws.n = n;
    if (flags.color)
        encode_pos(dir, c.pe_levels_view, false, ws.enc_v.data(), c.enc_view_dim());

    RayQuad q;
    double T = 1.0;
    for (int i = 0; i < n; ++i) {
        ws.ts[i] = ts[i];
        ws.delta[i] = (i + 1 < n ? ts[i + 1] : far) - ts[i];
        Vec3 x = origin + dir * ts[i];
        geom_forward(ctx, flags, ws, i, x);
        if (flags.color) color_forward(ctx, ws, i);
        else {
            ws.degen[i] = 1;
            ws.nhat[i] = {0, 0, 0};
            ws.chat[i] = {0, 0, 0};
        }
        double beta = local_beta(*ctx.counter, x, ctx.beta_params);
        ws.beta[i] = beta;
        double s = ws.svals[i];
        ws.sigma[i] = s <= 0 ? std::exp(s / beta) / (2.0 * beta)
                             : (1.0 - 0.5 * std::exp(-s / beta)) / beta;
    }
    for (int i = 0; i < n; ++i) {
        double a = 1.0 - std::exp(-ws.sigma[i] * ws.delta[i]);
        ws.alpha[i] = a;
        ws.trans[i] = T;
        double w = T * a;
        ws.weight[i] = w;
        q.chat += ws.chat[i] * w;
        q.dhat += ws.ts[i] * w;
        q.nhat += ws.nhat[i] * w;
        q.opacity += w;
        T *= 1.0 - a;
    }
    return q;
}

void ray_backward(const KernelContext& ctx, const EvalFlags& flags, Workspace& ws,
                  const RaySeeds& seeds, GradSink& sink, PointGrads* pg) {
    int n = ws.n;
    const ModelConfig& c = ctx.model->cfg;
    int Dv = c.enc_view_dim();
    double encv_bar[4 * 128];
    if (flags.point_grads) std::memset(encv_bar, 0, sizeof(double) * Dv);

    // quadrature backward: per-sample weight/alpha/T chain, no divisions
    double Tbar_next = 0.0;
    double* abar = ws.quad_a.data();
    double* wbar = ws.quad_w.data();
    for (int i = 0; i < n; ++i) {
        wbar[i] = dot(seeds.chat_bar, ws.chat[i]) + seeds.dhat_bar * ws.ts[i] +
                  dot(seeds.nhat_bar, ws.nhat[i]);
    }
    for (int i = n - 1; i >= 0; --i) {
        double tb = wbar[i] * ws.alpha[i] + Tbar_next * (1.0 - ws.alpha[i]);
        abar[i] = wbar[i] * ws.trans[i] - Tbar_next * ws.trans[i];
        Tbar_next = tb;
    }

    for (int i = n - 1; i >= 0; --i) {
        double sigbar = abar[i] * ws.delta[i] * (1.0 - ws.alpha[i]);
        double s = ws.svals[i], beta = ws.beta[i];
        double dsig_ds = s <= 0 ? ws.sigma[i] / beta
                                : std::exp(-s / beta) / (2.0 * beta * beta);
        double sbar = sigbar * dsig_ds;
        Vec3 cbar = seeds.chat_bar * ws.weight[i];
        Vec3 nbar = seeds.nhat_bar * ws.weight[i];
        Vec3 xbar{0, 0, 0};
        sample_backward(ctx, flags, ws, i, sbar, Vec3{0, 0, 0}, cbar, nbar, sink, &xbar,
                        flags.point_grads && flags.color ? encv_bar : nullptr);
        if (flags.point_grads && pg) {
            pg->origin_bar += xbar;
            pg->dir_bar += xbar * ws.ts[i];
        }
    }

    if (flags.point_grads && pg && flags.color) {
        // view encoding chain into the ray direction
        Vec3 vbar{0, 0, 0};
        // reconstruct tangents analytically from cached values
        const double* ev = ws.enc_v.data();
        for (int a = 0; a < 3; ++a) {
            double acc = encv_bar[a];
            double w = 1.0;
            for (int k = 0; k < c.pe_levels_view; ++k) {
                int si = 3 + 6 * k + a, ci = 3 + 6 * k + 3 + a;
                acc += encv_bar[si] * (w * ev[ci]) - encv_bar[ci] * (w * ev[si]);
                w *= 2.0;
            }
            vbar[a] += acc;
        }
        pg->dir_bar += vbar;
    }
}

double ray_depth_prepass(const KernelContext& ctx, const Vec3& origin, const Vec3& dir,
                         const double* ts, int n, double far, Workspace& ws) {
    EvalFlags f;
    f.jets = false;
    f.color = false;
    f.param_grads = false;
    ws.n = n;
    double dhat = 0, T = 1.0;
    for (int i = 0; i < n; ++i) {
        double delta = (i + 1 < n ? ts[i + 1] : far) - ts[i];
        Vec3 x = origin + dir * ts[i];
        double s = geom_forward(ctx, f, ws, 0, x);
        double beta = local_beta(*ctx.counter, x, ctx.beta_params);
        double sigma = s <= 0 ? std::exp(s / beta) / (2.0 * beta)
                              : (1.0 - 0.5 * std::exp(-s / beta)) / beta;
        double a = 1.0 - std::exp(-sigma * delta);
        dhat += T * a * ts[i];
        T *= 1.0 - a;
    }
    return dhat;
}

double eikonal_points(const KernelContext& ctx, const Vec3* pts, int n, double scale,
                      GradSink* sink, Workspace& ws) {
    EvalFlags f;
    f.jets = true;
    f.color = false;
    f.param_grads = sink != nullptr;
    double total = 0;
    for (int p = 0; p < n; ++p) {
        geom_forward(ctx, f, ws, 0, pts[p]);
        Vec3 g = ws.grad_s[0];
        double gn = norm(g);
        double r = gn - 1.0;
        total += r * r;
        if (sink) {
            // d/dg of (||g||-1)^2 = 2 (||g||-1) g/||g||
            Vec3 gbar = gn > 1e-300 ? g * (2.0 * r / gn * scale) : Vec3{0, 0, 0};
            sample_backward(ctx, f, ws, 0, 0.0, gbar, Vec3{0, 0, 0}, Vec3{0, 0, 0}, *sink,
                            nullptr, nullptr);
        }
    }
    return total;
}

double sdf_value_fwd(const KernelContext& ctx, const Vec3& x, const EvalFlags& flags, Workspace& ws) {
    return geom_forward(ctx, flags, ws, 0, x);
}

void sdf_value_bwd(const KernelContext& ctx, const EvalFlags& flags, Workspace& ws, double sbar,
                   const Vec3& gbar, GradSink& sink) {
    sample_backward(ctx, flags, ws, 0, sbar, gbar, Vec3{0, 0, 0}, Vec3{0, 0, 0}, sink,
                    nullptr, nullptr);
}

}  // namespace nslam::kern
