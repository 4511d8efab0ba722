// Scene model: coarse dense grid + multi-resolution fine/color grids and the
// three MLP decoders. All optimizable state lives in six contiguous parameter
// blocks so gradients, the optimizer, and the checkpoint see flat arrays.
#pragma once

#include "nslam/grid.hpp"
#include "nslam/rng.hpp"

#include <array>
#include <span>
#include <string>
#include <vector>

namespace nslam {

struct InitializationFailed : Error { using Error::Error; };

enum class Stage { CoarseOnly, Full };

enum class Activation { SoftplusSharp, Relu };

// Fully-connected decoder; weights column-major per layer (W[i*out + o]) with
// biases appended, all in one parameter vector.
struct MlpDecoder {
    std::vector<int> widths;          // [in, hidden..., out]
    Activation hidden_activation = Activation::SoftplusSharp;
    double sharpness = 100.0;
    std::vector<double> params;
    std::vector<size_t> weight_offset, bias_offset;  // per layer

    MlpDecoder() = default;
    MlpDecoder(std::vector<int> w, Activation act, double sharp = 100.0)
        : widths(std::move(w)), hidden_activation(act), sharpness(sharp) {
        size_t total = 0;
        for (size_t l = 0; l + 1 < widths.size(); ++l) {
            weight_offset.push_back(total);
            total += size_t(widths[l]) * widths[l + 1];
            bias_offset.push_back(total);
            total += widths[l + 1];
        }
        params.assign(total, 0.0);
    }
    int layer_count() const { return int(widths.size()) - 1; }

    void init_uniform_fan_in(Rng& rng) {
        for (int l = 0; l < layer_count(); ++l) {
            double a = 1.0 / std::sqrt(double(widths[l]));
            size_t n = size_t(widths[l]) * widths[l + 1];
            for (size_t i = 0; i < n; ++i) params[weight_offset[l] + i] = rng.uniform(-a, a);
            for (int o = 0; o < widths[l + 1]; ++o) params[bias_offset[l] + o] = 0.0;
        }
    }
    void zero_layer(int l) {
        size_t n = size_t(widths[l]) * widths[l + 1];
        for (size_t i = 0; i < n; ++i) params[weight_offset[l] + i] = 0.0;
        for (int o = 0; o < widths[l + 1]; ++o) params[bias_offset[l] + o] = 0.0;
    }
};

struct ModelConfig {
    int coarse_res = 16;
    int coarse_dim = 32;
    int fine_rmin = 16, fine_rmax = 64, fine_levels = 6, fine_dim = 4;
    int color_rmin = 16, color_rmax = 256, color_levels = 10, color_dim = 2;
    int pe_levels_pos = 6, pe_levels_view = 4;
    int geo_feat_dim = 32;            // width of z^coarse and z^fine
    int hidden_width = 64;
    double softplus_sharpness = 100.0;
    double init_sphere_radius = 0.5;
    bool inside_positive = true;

    int enc_pos_dim() const { return 3 * (1 + 2 * pe_levels_pos); }
    int enc_view_dim() const { return 3 * (1 + 2 * pe_levels_view); }
    int fine_feat_dim() const { return fine_levels * fine_dim; }
    int color_feat_dim() const { return color_levels * color_dim; }
    int coarse_in() const { return enc_pos_dim() + coarse_dim; }
    int fine_in() const { return enc_pos_dim() + fine_feat_dim(); }
    int color_in() const { return 3 + 3 + enc_view_dim() + 2 * geo_feat_dim + color_feat_dim(); }

    static ModelConfig desk() { return ModelConfig{}; }
    static ModelConfig paper() {
        ModelConfig c;
        c.coarse_res = 32;
        c.fine_rmin = 32; c.fine_rmax = 128; c.fine_levels = 8;
        c.color_rmin = 16; c.color_rmax = 2048; c.color_levels = 16;
        return c;
    }
    // small enough to lift every parameter onto a tape
    static ModelConfig micro() {
        ModelConfig c;
        c.coarse_res = 4;
        c.fine_rmin = 4; c.fine_rmax = 8; c.fine_levels = 2;
        c.color_rmin = 4; c.color_rmax = 8; c.color_levels = 2;
        c.hidden_width = 32;
        return c;
    }
};

enum class ParamGroup : int {
    CoarseGrid = 0, FineGrids, ColorGrids, MlpCoarse, MlpFine, MlpColor, Count
};
inline constexpr int kParamGroupCount = int(ParamGroup::Count);
extern const char* const kParamGroupNames[kParamGroupCount];

struct SceneModel {
    ModelConfig cfg;
    DenseGrid coarse_grid;
    MultiResGrid fine_grids;
    MultiResGrid color_grids;
    MlpDecoder decoder_coarse, decoder_fine, decoder_color;

    explicit SceneModel(const ModelConfig& c);

    std::span<double> group(ParamGroup g);
    std::span<const double> group(ParamGroup g) const;
    size_t total_params() const;
};

// Seeded model construction: fan-in MLP init, neutral fine/color branches,
// then a supervised pre-fit of the coarse branch to a centered sphere SDF.
SceneModel init_model(const ModelConfig& cfg, uint64_t seed);

}  // namespace nslam
