#include "nslam/gradsuite.hpp"

namespace nslam {

MicroCase make_micro_case(uint64_t seed, int pixels_per_frame, int n_samples) {
    Rng rng(seed);

    SceneModel model = init_model(ModelConfig::micro(), seed);
    {
        // activate every branch so no gradient path is trivially zero
        Rng r = rng.fork(1);
        for (auto& v : model.fine_grids.values) v = r.uniform(-0.1, 0.1);
        for (auto& v : model.color_grids.values) v = r.uniform(-0.1, 0.1);
        Rng r2 = rng.fork(2);
        model.decoder_fine.init_uniform_fan_in(r2);
        for (auto& v : model.decoder_fine.params) v *= 0.1;
    }

    Camera cam{15.0, 15.0, 8.0, 6.0, 16, 12};
    TrajectorySpec traj;
    traj.frames = 3;
    Rng noise_rng = rng.fork(3);
    SyntheticDataset ds = generate_dataset(default_desk_scene(seed), traj, cam, {}, noise_rng);

    MicroCase mc(std::move(model), std::move(ds));
    mc.frames = {0, 1, 2};

    Rng prng = rng.fork(4);
    for (int f : mc.frames)
        for (int k = 0; k < pixels_per_frame; ++k) {
            int u = int(prng.uniform_int(cam.width));
            int v = int(prng.uniform_int(cam.height));
            mc.pixels.push_back({f, {u, v}});
        }
    Rng srng = rng.fork(5);
    Ray dummy{{0, 0, 0}, {0, 0, 1}};
    for (size_t i = 0; i < mc.pixels.size(); ++i) {
        Rng r = srng.fork(i);
        mc.samples.push_back(sample_along_ray(dummy, 0.05, 2.0 * std::sqrt(3.0), n_samples, r));
    }
    Rng erng = rng.fork(6);
    for (int k = 0; k < 4; ++k)
        mc.eik_pts.push_back(
            {erng.uniform(-0.8, 0.8), erng.uniform(-0.8, 0.8), erng.uniform(-0.8, 0.8)});

    Rng crng = rng.fork(7);
    for (auto& c : mc.counter.counts()) c = crng.uniform_int(200000);
    return mc;
}

SweepReport gradcheck_term(MicroCase& mc, LossTerm term, double step, int per_group_cap, Rng rng) {
    std::vector<double> extras(6 * mc.frames.size(), 0.0);
    auto fn_tape = [&](Tape&, TapeModel& tm, std::span<Value> ex) {
        auto ref = tm.ref();
        return micro_loss<Value>(mc, ref, ex.data(), term);
    };
    auto fn_plain = [&](SceneModel& m, const std::vector<double>& ex) {
        auto ref = make_ref(m);
        return micro_loss<double>(mc, ref, ex.data(), term);
    };
    return fd_sweep_model(mc.model, extras, fn_tape, fn_plain, step, per_group_cap, rng);
}

}  // namespace nslam
