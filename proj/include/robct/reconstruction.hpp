#pragma once

#include "robct/detector_sim.hpp"
#include "robct/error.hpp"
#include "robct/geometry.hpp"

#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace robct {

struct Volume {
    int n = 0;
    double spacing = 1.0;
    Vec3 origin = Vec3::Zero();  // corner of voxel (0,0,0)
    std::vector<double> values;  // x fastest, then y, then z

    Volume() = default;
    Volume(int n, double spacing, const Vec3& origin);

    /// Cube of n^3 voxels centered on the frame origin.
    static Volume centered(int n, double spacing);

    std::size_t size() const { return values.size(); }
    std::size_t index(int x, int y, int z) const {
        return (static_cast<std::size_t>(z) * n + static_cast<std::size_t>(y)) * n + static_cast<std::size_t>(x);
    }
    double at(int x, int y, int z) const { return values[index(x, y, z)]; }
    Vec3 voxel_center(int x, int y, int z) const {
        return origin + spacing * Vec3(x + 0.5, y + 0.5, z + 0.5);
    }
    bool same_grid(const Volume& other) const {
        return n == other.n && spacing == other.spacing && origin == other.origin;
    }
};

/// Joseph footprint of the ray from the source to pixel center (u, v):
/// calls visit(voxel_index, weight) with weight = step length (mm) times the
/// bilinear coefficient. Forward and back projection share this walk.
template <class Visit>
void joseph_ray(const Volume& vol, const ProjectionGeometry& g, int u, int v, Visit&& visit);

DetectorImage forward_project(const Volume& vol, const ProjectionGeometry& g);

/// Adds A^T img into `accum`.
void back_project(const DetectorImage& img, const ProjectionGeometry& g, Volume& accum);

/// Projection data with per-view geometry; optional per-pixel weights.
struct ReconStack {
    std::vector<ProjectionGeometry> geometries;
    std::vector<DetectorImage> images;
    std::vector<DetectorImage> weights;  // empty means uniform

    void validate() const;
    static ReconStack from_projection_stack(const ProjectionStack& s);
};

std::vector<DetectorImage> forward_project_stack(const Volume& vol, const ReconStack& stack);

/// Sum over views of A_v^T (w_v * img_v), reduced in a fixed chunk order so the
/// result does not depend on thread count.
Volume back_project_stack(const std::vector<DetectorImage>& images, const ReconStack& stack, const Volume& grid);

/// Mean of diag(A^T W A), from the summed squared footprint weights.
double mean_normal_diagonal(const ReconStack& stack, const Volume& grid);

struct SolverSettings {
    int iterations = 30;
    std::optional<double> lambda;  // defaults to 1e-2 * mean_normal_diagonal
};

struct ReconResult {
    Volume volume;
    std::vector<double> cost_history;  // after each iteration
    double lambda = 0.0;
    bool breakdown = false;  // curvature <= 0 stopped the iteration early
    int iterations_run = 0;
};

/// NumericalBreakdown carrying the iterate reached before the failure.
class ReconBreakdown : public Error {
public:
    explicit ReconBreakdown(ReconResult partial);
    const ReconResult& partial() const noexcept { return partial_; }

private:
    ReconResult partial_;
};

/// CG on (A^T W A + lambda I) x = A^T W b from x = 0. Cost is
/// ||W^1/2 (Ax - b)||^2 + lambda ||x||^2. Throws ReconBreakdown when the
/// curvature p^T (A^T W A + lambda I) p is not positive.
ReconResult reconstruct_cg(const ReconStack& stack, const Volume& grid, const SolverSettings& s = {});

enum class SliceAxis { X, Y, Z };  // axis held fixed

SliceAxis slice_axis_from_string(const std::string& s);

struct LineProfile {
    std::vector<double> values;
    double step_mm = 1.0;
};

/// Bilinear samples along a segment inside a slice. For a slice normal to Z
/// the in-plane coordinates are (x, y); Y -> (x, z); X -> (y, z). Points are
/// continuous voxel-center coordinates. Throws OutOfBounds.
LineProfile line_profile(const Volume& vol, SliceAxis axis, int index, const std::pair<double, double>& p0,
                         const std::pair<double, double>& p1, int samples);

/// Largest central difference along the profile, per unit of `step`.
double gradient_magnitude(const std::vector<double>& values, double step = 1.0);

struct ProfileLine {
    std::string name;
    SliceAxis axis = SliceAxis::Z;
    int index = 0;
    std::pair<double, double> p0, p1;
    int samples = 64;
};

/// Three profile lines through the default phantom on an n^3 grid of the
/// given spacing, all in the central YX slice and crossing the absorber plate.
std::vector<ProfileLine> default_profile_lines(int n, double spacing);

void write_volume(const std::filesystem::path& path, const Volume& vol);
Volume read_volume(const std::filesystem::path& path);

/// Central slice as 8-bit PGM, scaled between the slice minimum and maximum.
std::string slice_pgm(const Volume& vol, SliceAxis axis, int index);

/// Voxelizes a phantom by sampling `oversample`^3 points per voxel.
Volume voxelize(const Phantom& phantom, const Volume& grid, int oversample = 2);

// Implementation of the template.
template <class Visit>
void joseph_ray(const Volume& vol, const ProjectionGeometry& g, int u, int v, Visit&& visit) {
    const Vec3 target = g.detector_point(u + 0.5, v + 0.5);
    const Vec3 d = target - g.source;
    const double inv = 1.0 / vol.spacing;
    const Vec3 cs = (g.source - vol.origin) * inv - Vec3::Constant(0.5);
    const Vec3 cd = d * inv;
    int a = 0;
    if (std::abs(cd[1]) > std::abs(cd[a])) a = 1;
    if (std::abs(cd[2]) > std::abs(cd[a])) a = 2;
    if (cd[a] == 0.0) return;
    const int b = (a + 1) % 3;
    const int c = (a + 2) % 3;
    const double step_len = d.norm() / std::abs(cd[a]);
    const int n = vol.n;
    const std::size_t stride[3] = {1, static_cast<std::size_t>(n), static_cast<std::size_t>(n) * n};
    for (int k = 0; k < n; ++k) {
        const double t = (k - cs[a]) / cd[a];
        if (t <= 0.0 || t > 1.0) continue;
        const double pb = cs[b] + t * cd[b];
        const double pc = cs[c] + t * cd[c];
        if (pb <= -1.0 || pc <= -1.0 || pb >= n || pc >= n) continue;
        const double fb = std::floor(pb);
        const double fc = std::floor(pc);
        const int ib = static_cast<int>(fb);
        const int ic = static_cast<int>(fc);
        const double wb = pb - fb;
        const double wc = pc - fc;
        const std::size_t base = static_cast<std::size_t>(k) * stride[a];
        const double w00 = (1.0 - wb) * (1.0 - wc), w10 = wb * (1.0 - wc), w01 = (1.0 - wb) * wc, w11 = wb * wc;
        const bool b0 = ib >= 0, b1 = ib + 1 < n, c0 = ic >= 0, c1 = ic + 1 < n;
        const std::size_t ob = static_cast<std::size_t>(ib), oc = static_cast<std::size_t>(ic);
        if (b0 && c0 && w00 != 0.0) visit(base + ob * stride[b] + oc * stride[c], step_len * w00);
        if (b1 && c0 && w10 != 0.0) visit(base + (ob + 1) * stride[b] + oc * stride[c], step_len * w10);
        if (b0 && c1 && w01 != 0.0) visit(base + ob * stride[b] + (oc + 1) * stride[c], step_len * w01);
        if (b1 && c1 && w11 != 0.0) visit(base + (ob + 1) * stride[b] + (oc + 1) * stride[c], step_len * w11);
    }
}

}  // namespace robct
