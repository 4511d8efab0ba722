// Fused forward/backward kernels for the hot path (mapping, tracking, mesh
// queries). These mirror the generic taped evaluation in fields.hpp/render.hpp
// and are pinned to it by tests; the SLAM loop runs on this lane.
//
// Gradients are accumulated into per-chunk GradSinks by worker threads and
// reduced in chunk order, so results do not depend on the thread count.
#pragma once

#include "nslam/model.hpp"
#include "nslam/render_types.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace nslam::kern {

struct EvalFlags {
    bool jets = true;        // propagate spatial tangents (needed for normals)
    bool color = true;       // run the color head
    bool param_grads = true; // accumulate model-parameter gradients in backward
    bool point_grads = false;// accumulate d/dx and d/dview (pose chains)
};

// Gradient accumulation target for one chunk of work. MLP groups and the
// coarse/fine grids are dense; color grids are (index, value) appends since a
// dense buffer per chunk would be enormous at the top resolutions.
struct GradSink {
    uint32_t enabled = 0;  // bit per ParamGroup
    std::array<std::vector<double>, kParamGroupCount> dense;  // unused for ColorGrids
    std::vector<uint32_t> color_idx;
    std::vector<double> color_val;

    void configure(const SceneModel& m, uint32_t enabled_groups);
    void reset();
    bool group_on(ParamGroup g) const { return enabled & (1u << int(g)); }
};

// Reduce a chunk sink into full-size per-group gradient arrays (call in
// chunk-index order).
struct GradBuffers {
    std::array<std::vector<double>, kParamGroupCount> g;
    void configure(const SceneModel& m);
    void zero();
    void add(const GradSink& sink);
    bool all_finite() const;
};

// Scratch for one ray (or one point set) on one thread; buffers are sized on
// first use and reused.
class Workspace {
  public:
    void configure(const ModelConfig& cfg, int max_samples);

    // ---- per-sample cached state, filled by forward ----
    int n = 0;                       // samples in the current ray
    std::vector<double> ts, delta;   // sample depths / spacings
    std::vector<double> beta, sigma, alpha, trans, weight, svals;
    std::vector<Vec3> xs;            // sample positions
    std::vector<Vec3> grad_s;        // spatial gradient of s per sample
    std::vector<Vec3> nhat;          // per-sample unit normal (0 when degenerate)
    std::vector<Vec3> chat;          // per-sample color
    std::vector<uint8_t> degen;

    // channel-major caches [4][width] per sample, flattened [sample][4][w]
    std::vector<double> enc;                   // positional encoding of x
    std::vector<double> in_c, pre_c, post_c, sig_c, zc;
    std::vector<double> in_f, pre_f, post_f, sig_f, zf;  // pre/post/sig hold 3 layers
    std::vector<double> s_c_jet, s_f_jet;                // [sample][4]
    std::vector<int> cell_c, cell_f, cell_col;           // per-axis cell index
    std::vector<double> frac_c, frac_f, frac_col;        // per-axis fraction+scale
    std::vector<double> enc_v;                           // view encoding (per ray)
    std::vector<double> in_col, pre_col1, pre_col2, out_col;  // color head caches

    // backward scratch
    std::vector<double> adj_a, adj_b, adj_mlp_in, quad_a, quad_w;

    const ModelConfig* cfg = nullptr;
    int max_n = 0;
};

struct RayQuad {
    Vec3 chat{};       // accumulated color
    double dhat = 0;   // accumulated depth
    Vec3 nhat{};       // accumulated (pre-normalization) normal
    double opacity = 0;
};

struct RaySeeds {
    Vec3 chat_bar{};
    double dhat_bar = 0;
    Vec3 nhat_bar{};
};

struct PointGrads {
    Vec3 origin_bar{};   // sum over samples of d/dx
    Vec3 dir_bar{};      // includes t_i-weighted x chains and the view encoding chain
};

// Chain ray-level adjoints into the 6-dim pose increment at delta = 0:
// pose' = exp(delta) ∘ base, origin = exp(w) t0 + u, dir = exp(w) v0.
struct PoseGrad {
    Vec3 w{}, t{};
};
inline PoseGrad pose_grad_from_point_grads(const Pose& base, const Vec3& dir_world,
                                           const PointGrads& pg) {
    PoseGrad g;
    g.w = cross(base.translation, pg.origin_bar) + cross(dir_world, pg.dir_bar);
    g.t = pg.origin_bar;
    return g;
}

struct KernelContext {
    const SceneModel* model = nullptr;
    const VoxelCounter* counter = nullptr;
    BetaParams beta_params{};
    Stage stage = Stage::Full;
};

// Value-only SDF evaluation (no caches), shared by mesh extraction and the
// depth prepass. scratch must hold at least eval_scratch_size(cfg) doubles.
size_t eval_scratch_size(const ModelConfig& cfg);
double eval_sdf_value(const SceneModel& m, Stage stage, const Vec3& x, double* scratch);

// Forward a full ray with caches; dir must be unit length. Spacings are
// delta_i = t_{i+1} - t_i with the last one closing the interval to `far`.
RayQuad ray_forward(const KernelContext& ctx, const Vec3& origin, const Vec3& dir,
                    const double* ts, int n, double far, const EvalFlags& flags, Workspace& ws);

// Backward with per-ray seeds plus optional extra per-sample SDF-value
// adjoints (e.g. none today; eikonal uses its own entry point below).
void ray_backward(const KernelContext& ctx, const EvalFlags& flags, Workspace& ws,
                  const RaySeeds& seeds, GradSink& sink, PointGrads* pg);

// Depth-only forward: returns expected depth along the ray (used by the
// two-pass mapping iteration to solve the per-frame depth alignment first).
double ray_depth_prepass(const KernelContext& ctx, const Vec3& origin, const Vec3& dir,
                         const double* ts, int n, double far, Workspace& ws);

// Eikonal term: mean over points of (||grad s|| - 1)^2, with parameter
// gradients scaled by `scale` accumulated into sink. Returns the SUM of
// (||g||-1)^2 over the points (caller divides for the mean).
double eikonal_points(const KernelContext& ctx, const Vec3* pts, int n, double scale,
                      GradSink* sink, Workspace& ws);

// Single-point SDF forward+backward (used by the sphere pre-fit in
// init_model). gbar is the adjoint of the spatial gradient and needs
// flags.jets on the forward.
double sdf_value_fwd(const KernelContext& ctx, const Vec3& x, const EvalFlags& flags, Workspace& ws);
void sdf_value_bwd(const KernelContext& ctx, const EvalFlags& flags, Workspace& ws,
                   double sbar, const Vec3& gbar, GradSink& sink);

}  // namespace nslam::kern
