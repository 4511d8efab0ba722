#include "nslam/synthworld.hpp"

#include "nslam/image_io.hpp"
#include "nslam/trajectory.hpp"

#include <cmath>
#include <filesystem>

namespace nslam {

namespace {

// free-space-positive distance of a solid axis-aligned box
double box_dist(const AnalyticScene::BoxPrim& b, const Vec3& x) {
    Vec3 q{std::abs(x.x - b.center.x) - b.half.x, std::abs(x.y - b.center.y) - b.half.y,
           std::abs(x.z - b.center.z) - b.half.z};
    Vec3 qp{std::max(q.x, 0.0), std::max(q.y, 0.0), std::max(q.z, 0.0)};
    double outside = norm(qp);
    double inside = std::min(std::max(q.x, std::max(q.y, q.z)), 0.0);
    return outside + inside;
}

Vec3 box_grad(const AnalyticScene::BoxPrim& b, const Vec3& x) {
    Vec3 d{x.x - b.center.x, x.y - b.center.y, x.z - b.center.z};
    Vec3 q{std::abs(d.x) - b.half.x, std::abs(d.y) - b.half.y, std::abs(d.z) - b.half.z};
    Vec3 qp{std::max(q.x, 0.0), std::max(q.y, 0.0), std::max(q.z, 0.0)};
    double n = norm(qp);
    Vec3 g;
    if (n > 0) {
        g = {qp.x / n, qp.y / n, qp.z / n};
    } else {
        // inside: gradient along the axis closest to a face
        int a = 0;
        if (q.y > q.x && q.y >= q.z) a = 1;
        else if (q.z > q.x && q.z > q.y) a = 2;
        g = {0, 0, 0};
        g[a] = 1.0;
    }
    g.x *= d.x < 0 ? -1.0 : 1.0;
    g.y *= d.y < 0 ? -1.0 : 1.0;
    g.z *= d.z < 0 ? -1.0 : 1.0;
    return g;
}

// free-space-positive distance of the whole scene plus the argmin gradient
double scene_fs(const AnalyticScene& s, const Vec3& x, Vec3* grad) {
    double best = 1e30;
    Vec3 bg{1, 0, 0};
    if (s.room) {
        double d = -box_dist(*s.room, x);
        if (d < best) {
            best = d;
            bg = box_grad(*s.room, x) * -1.0;
        }
    }
    for (const auto& sp : s.spheres) {
        Vec3 r = x - sp.center;
        double n = norm(r);
        double d = n - sp.radius;
        if (d < best) {
            best = d;
            bg = n > 1e-12 ? r / n : Vec3{1, 0, 0};
        }
    }
    for (const auto& bx : s.boxes) {
        double d = box_dist(bx, x);
        if (d < best) {
            best = d;
            bg = box_grad(bx, x);
        }
    }
    if (grad) *grad = bg;
    return best;
}

// hashed value noise on an integer lattice
double lattice_value(uint64_t seed, int ix, int iy, int iz, int salt) {
    uint64_t h = seed;
    h = splitmix64(h) ^ (uint64_t(uint32_t(ix)) * 0x9e3779b97f4a7c15ull);
    h = splitmix64(h) ^ (uint64_t(uint32_t(iy)) * 0xc2b2ae3d27d4eb4full);
    h = splitmix64(h) ^ (uint64_t(uint32_t(iz)) * 0x165667b19e3779f9ull);
    h = splitmix64(h) ^ uint64_t(salt) * 0xd6e8feb86659fd93ull;
    return double(splitmix64(h) >> 11) * 0x1.0p-53;
}

double value_noise(uint64_t seed, const Vec3& p, double freq, int salt) {
    Vec3 q = p * freq;
    int ix = int(std::floor(q.x)), iy = int(std::floor(q.y)), iz = int(std::floor(q.z));
    double fx = q.x - ix, fy = q.y - iy, fz = q.z - iz;
    auto sm = [](double t) { return t * t * (3 - 2 * t); };
    fx = sm(fx); fy = sm(fy); fz = sm(fz);
    double acc = 0;
    for (int c = 0; c < 8; ++c) {
        int bx = c & 1, by = (c >> 1) & 1, bz = (c >> 2) & 1;
        double w = (bx ? fx : 1 - fx) * (by ? fy : 1 - fy) * (bz ? fz : 1 - fz);
        acc += w * lattice_value(seed, ix + bx, iy + by, iz + bz, salt);
    }
    return acc;
}

}  // namespace

double scene_sdf(const AnalyticScene& scene, const Vec3& x) { return -scene_fs(scene, x, nullptr); }

Vec3 scene_sdf_gradient(const AnalyticScene& scene, const Vec3& x) {
    Vec3 g;
    scene_fs(scene, x, &g);
    return g * -1.0;
}

Vec3 scene_color(const AnalyticScene& scene, const Vec3& x) {
    Vec3 c;
    for (int ch = 0; ch < 3; ++ch) {
        double v = 0, amp = 1, freq = scene.texture_base_freq, total = 0;
        for (int oct = 0; oct < 3; ++oct) {
            v += amp * value_noise(scene.texture_seed, x, freq, ch * 16 + oct);
            total += amp;
            amp *= 0.5;
            freq *= 2.0;
        }
        c[ch] = 0.12 + 0.76 * (v / total);
    }
    return c;
}

TraceResult sphere_trace(const AnalyticScene& scene, const Ray& ray, double t_max) {
    double t = 0;
    for (int it = 0; it < 4096; ++it) {
        Vec3 x = ray.origin + ray.dir * t;
        double d = scene_fs(scene, x, nullptr);
        if (d < 1e-5) return {true, t};
        t += d;
        if (t > t_max) return {false, 0};
    }
    return {false, 0};
}

std::vector<Pose> make_trajectory(const TrajectorySpec& spec) {
    std::vector<Pose> out;
    for (int i = 0; i < spec.frames; ++i) {
        double u = double(i) / spec.frames;
        Vec3 eye;
        if (spec.kind == TrajectorySpec::Path::Circle) {
            // parameterized so frame 0 sits at (0, h, -r) looking along +z;
            // with look_at at the same height the first pose carries no rotation
            double th = 2 * kPi * u;
            eye = {spec.radius * std::sin(th), spec.height, -spec.radius * std::cos(th)};
        } else {
            double th = 2 * kPi * u;
            eye = {spec.radius * std::sin(th), spec.height,
                   -spec.radius * std::cos(th) * std::abs(std::cos(th))};
        }
        Vec3 f = normalized(spec.look_at - eye);
        Vec3 up{0, -1, 0};  // world y points down, matching the camera convention
        Vec3 right = cross(f, up);
        if (norm(right) < 1e-6) right = cross(f, Vec3{1, 0, 0});
        right = normalized(right);
        Vec3 down = normalized(cross(f, right));
        Mat3 R;
        R.m = {right.x, down.x, f.x, right.y, down.y, f.y, right.z, down.z, f.z};
        out.push_back({Quat::from_matrix(R), eye});
    }
    return out;
}

AnalyticScene default_desk_scene(uint64_t texture_seed) {
    AnalyticScene s;
    s.room = AnalyticScene::BoxPrim{{0, 0, 0}, {0.8, 0.8, 0.8}};
    s.spheres.push_back({{-0.45, 0.25, 0.3}, 0.22});
    s.boxes.push_back({{0.45, 0.3, -0.35}, {0.18, 0.22, 0.18}});
    s.texture_seed = texture_seed;
    return s;
}

Camera default_desk_camera() { return {60.0, 60.0, 32.0, 24.0, 64, 48}; }

namespace {

// independent projection helpers (deliberately not the losses module's warp)
Vec3 unproject(const Camera& cam, const Pose& pose, double u, double v, double depth) {
    Vec3 d_cam = normalized({(u + 0.5 - cam.cx) / cam.fx, (v + 0.5 - cam.cy) / cam.fy, 1.0});
    return pose.apply(d_cam * depth);
}

bool project(const Camera& cam, const Pose& pose, const Vec3& xw, double* u, double* v) {
    Vec3 xc = pose.inverse().apply(xw);
    if (xc.z <= 1e-6) return false;
    *u = cam.fx * xc.x / xc.z + cam.cx - 0.5;
    *v = cam.fy * xc.y / xc.z + cam.cy - 0.5;
    return *u >= 0 && *u <= cam.width - 1 && *v >= 0 && *v <= cam.height - 1;
}

}  // namespace

SyntheticDataset generate_dataset(const AnalyticScene& scene, const TrajectorySpec& traj,
                                  const Camera& camera, const CueNoiseConfig& noise, Rng rng) {
    SyntheticDataset ds;
    ds.camera = camera;
    ds.poses_gt = make_trajectory(traj);
    ds.t_max = 2.0 * std::sqrt(3.0);
    int W = camera.width, H = camera.height, T = int(ds.poses_gt.size());

    for (int f = 0; f < T; ++f) {
        const Pose& pose = ds.poses_gt[f];
        Image rgb(W, H, 3), depth(W, H, 1), normal(W, H, 3);
        std::vector<uint8_t> valid(size_t(W) * H, 0);
        Mat3 Rt = pose.rotation.to_matrix().transposed();

        Rng frame_rng = rng.fork(0xda7a, f);
        double a = noise.zero ? 1.0 : frame_rng.uniform(noise.depth_scale_min, noise.depth_scale_max);
        double b = noise.zero ? 0.0 : frame_rng.uniform(noise.depth_shift_min, noise.depth_shift_max);
        ds.cue_depth_affine.push_back({a, b});

        Image cue_depth(W, H, 1), cue_normal(W, H, 3);
        std::vector<uint8_t> cue_depth_valid(size_t(W) * H, 0), cue_normal_valid(size_t(W) * H, 0);

        for (int v = 0; v < H; ++v)
            for (int u = 0; u < W; ++u) {
                Ray ray = cast_ray(camera, pose, u, v);
                TraceResult tr = sphere_trace(scene, ray, ds.t_max);
                if (!tr.hit) continue;
                valid[size_t(v) * W + u] = 1;
                Vec3 xw = ray.origin + ray.dir * tr.t;
                Vec3 n_free = normalized(scene_sdf_gradient(scene, xw) * -1.0);
                Vec3 tex = scene_color(scene, xw);
                // fixed scene light + ambient: view-independent shading keeps
                // multi-view photometry consistent (the warping loss needs it)
                static const Vec3 kLight = normalized({0.25, 0.85, 0.45});
                double shade = 0.35 + 0.65 * std::max(0.0, dot(n_free, kLight));
                for (int c = 0; c < 3; ++c) rgb.at(u, v, c) = std::min(1.0, tex[c] * shade);
                depth.at(u, v, 0) = tr.t;
                Vec3 n_cam = Rt * n_free;
                for (int c = 0; c < 3; ++c) normal.at(u, v, c) = n_cam[c];

                double db = a * tr.t + b;
                if (db > 0) {
                    cue_depth.at(u, v, 0) = db;
                    cue_depth_valid[size_t(v) * W + u] = 1;
                }
                Vec3 nn = n_cam;
                if (!noise.zero && noise.normal_sigma_deg > 0) {
                    double sig = noise.normal_sigma_deg * kPi / 180.0;
                    Vec3 w{frame_rng.normal() * sig, frame_rng.normal() * sig,
                           frame_rng.normal() * sig};
                    nn = Quat::from_axis_angle(w).to_matrix() * nn;
                }
                for (int c = 0; c < 3; ++c) cue_normal.at(u, v, c) = nn[c];
                cue_normal_valid[size_t(v) * W + u] = 1;
            }

        ds.rgb.push_back(std::move(rgb));
        ds.depth_gt.push_back(std::move(depth));
        ds.normal_gt.push_back(std::move(normal));
        ds.valid.push_back(valid);
        CueFrame cf;
        cf.depth = std::move(cue_depth);
        cf.depth_valid = std::move(cue_depth_valid);
        cf.normal = std::move(cue_normal);
        cf.normal_valid = std::move(cue_normal_valid);
        ds.cues.frames.emplace(f, std::move(cf));
    }

    // exact flow for every ordered frame pair from GT depth and poses
    for (int m = 0; m < T; ++m)
        for (int n = 0; n < T; ++n) {
            if (m == n) continue;
            FlowField ff;
            ff.flow = Image(W, H, 2);
            ff.valid.assign(size_t(W) * H, 0);
            for (int v = 0; v < H; ++v)
                for (int u = 0; u < W; ++u) {
                    if (!ds.valid[m][size_t(v) * W + u]) continue;
                    Vec3 xw = unproject(camera, ds.poses_gt[m], u, v, ds.depth_gt[m].at(u, v, 0));
                    double pu, pv;
                    if (!project(camera, ds.poses_gt[n], xw, &pu, &pv)) continue;
                    ff.flow.at(u, v, 0) = pu - u;
                    ff.flow.at(u, v, 1) = pv - v;
                    ff.valid[size_t(v) * W + u] = 1;
                }
            ds.cues.flows.emplace(std::make_pair(m, n), std::move(ff));
        }
    return ds;
}

// ---- dataset directory IO ---------------------------------------------------------

namespace fs = std::filesystem;

static std::string frame_name(int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d", i);
    return buf;
}

void write_dataset(const SyntheticDataset& ds, const std::string& dir) {
    fs::create_directories(dir);
    fs::create_directories(dir + "/rgb");
    fs::create_directories(dir + "/depth_gt");
    fs::create_directories(dir + "/normal_gt");
    fs::create_directories(dir + "/cues/depth");
    fs::create_directories(dir + "/cues/normal");
    fs::create_directories(dir + "/cues/flow");

    {
        FILE* f = std::fopen((dir + "/camera.txt").c_str(), "w");
        if (!f) throw Error("write_dataset: cannot write camera.txt");
        std::fprintf(f, "%.17g %.17g %.17g %.17g %d %d\n", ds.camera.fx, ds.camera.fy,
                     ds.camera.cx, ds.camera.cy, ds.camera.width, ds.camera.height);
        std::fclose(f);
    }
    Trajectory traj;
    for (size_t i = 0; i < ds.poses_gt.size(); ++i) traj.push_back({int(i), ds.poses_gt[i]});
    write_trajectory(traj, dir + "/poses_gt.txt");

    int T = int(ds.rgb.size());
    for (int i = 0; i < T; ++i) {
        write_ppm(ds.rgb[i], dir + "/rgb/" + frame_name(i) + ".ppm");
        write_pfm(ds.depth_gt[i], dir + "/depth_gt/" + frame_name(i) + ".pfm");
        write_pfm(ds.normal_gt[i], dir + "/normal_gt/" + frame_name(i) + ".pfm");
        const CueFrame& cf = ds.cues.frames.at(i);
        // invalid depth cues are stored as 0 (valid requires > 0)
        write_pfm(cf.depth, dir + "/cues/depth/" + frame_name(i) + ".pfm");
        write_pfm(cf.normal, dir + "/cues/normal/" + frame_name(i) + ".pfm");
    }
    for (const auto& [key, ff] : ds.cues.flows) {
        Image f3(ff.flow.width, ff.flow.height, 3);
        for (int y = 0; y < f3.height; ++y)
            for (int x = 0; x < f3.width; ++x) {
                f3.at(x, y, 0) = ff.flow.at(x, y, 0);
                f3.at(x, y, 1) = ff.flow.at(x, y, 1);
                f3.at(x, y, 2) = ff.valid[size_t(y) * f3.width + x];
            }
        write_pfm(f3, dir + "/cues/flow/" + frame_name(key.first) + "_" + frame_name(key.second) +
                          ".pfm");
    }
}

SyntheticDataset read_dataset(const std::string& dir) {
    SyntheticDataset ds;
    {
        FILE* f = std::fopen((dir + "/camera.txt").c_str(), "r");
        if (!f) throw Error("read_dataset: cannot open camera.txt");
        if (std::fscanf(f, "%lg %lg %lg %lg %d %d", &ds.camera.fx, &ds.camera.fy, &ds.camera.cx,
                        &ds.camera.cy, &ds.camera.width, &ds.camera.height) != 6) {
            std::fclose(f);
            throw Error("read_dataset: malformed camera.txt");
        }
        std::fclose(f);
    }
    Trajectory traj = read_trajectory(dir + "/poses_gt.txt");
    for (const auto& [id, pose] : traj) ds.poses_gt.push_back(pose);
    ds.t_max = 2.0 * std::sqrt(3.0);

    int T = int(ds.poses_gt.size());
    int W = ds.camera.width, H = ds.camera.height;
    for (int i = 0; i < T; ++i) {
        ds.rgb.push_back(read_ppm(dir + "/rgb/" + frame_name(i) + ".ppm"));
        ds.depth_gt.push_back(read_pfm(dir + "/depth_gt/" + frame_name(i) + ".pfm"));
        ds.normal_gt.push_back(read_pfm(dir + "/normal_gt/" + frame_name(i) + ".pfm"));
        std::vector<uint8_t> valid(size_t(W) * H, 0);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                valid[size_t(y) * W + x] = ds.depth_gt[i].at(x, y, 0) > 0 ? 1 : 0;
        ds.valid.push_back(valid);

        CueFrame cf;
        cf.depth = read_pfm(dir + "/cues/depth/" + frame_name(i) + ".pfm");
        cf.depth_valid.assign(size_t(W) * H, 0);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                cf.depth_valid[size_t(y) * W + x] = cf.depth.at(x, y, 0) > 0 ? 1 : 0;
        cf.normal = read_pfm(dir + "/cues/normal/" + frame_name(i) + ".pfm");
        cf.normal_valid.assign(size_t(W) * H, 0);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                double nx = cf.normal.at(x, y, 0), ny = cf.normal.at(x, y, 1),
                       nz = cf.normal.at(x, y, 2);
                cf.normal_valid[size_t(y) * W + x] =
                    std::abs(nx * nx + ny * ny + nz * nz - 1.0) < 1e-3 ? 1 : 0;
            }
        ds.cues.frames.emplace(i, std::move(cf));
    }
    for (int m = 0; m < T; ++m)
        for (int n = 0; n < T; ++n) {
            if (m == n) continue;
            std::string p = dir + "/cues/flow/" + frame_name(m) + "_" + frame_name(n) + ".pfm";
            if (!fs::exists(p)) continue;
            Image f3 = read_pfm(p);
            FlowField ff;
            ff.flow = Image(W, H, 2);
            ff.valid.assign(size_t(W) * H, 0);
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    ff.flow.at(x, y, 0) = f3.at(x, y, 0);
                    ff.flow.at(x, y, 1) = f3.at(x, y, 1);
                    ff.valid[size_t(y) * W + x] = f3.at(x, y, 2) > 0.5 ? 1 : 0;
                }
            ds.cues.flows.emplace(std::make_pair(m, n), std::move(ff));
        }
    return ds;
}

}  // namespace nslam
