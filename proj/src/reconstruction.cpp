#include "robct/reconstruction.hpp"

#include "robct/error.hpp"
#include "robct/parallel.hpp"
#include "robct/serialize.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>

namespace robct {

namespace {

constexpr std::size_t kViewChunk = 8;

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void check_view(const DetectorImage& img, const ProjectionGeometry& g) {
    if (img.width != g.width || img.height != g.height ||
        img.values.size() != static_cast<std::size_t>(g.width) * g.height) {
        throw Error(ErrorCode::InvalidArgument, "image does not match its geometry");
    }
}

DetectorImage blank_image(const ProjectionGeometry& g) {
    DetectorImage img;
    img.width = g.width;
    img.height = g.height;
    img.pitch_mm = g.pitch_u;
    img.values.assign(static_cast<std::size_t>(g.width) * g.height, 0.0);
    return img;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Slice-plane (i, j) and fixed coordinate to (x, y, z) voxel coordinates.
std::array<double, 3> slice_to_xyz(SliceAxis axis, double fixed, double i, double j) {
    switch (axis) {
        case SliceAxis::Z: return {i, j, fixed};
        case SliceAxis::Y: return {i, fixed, j};
        case SliceAxis::X: return {fixed, i, j};
    }
    return {0, 0, 0};
}

double trilinear(const Volume& vol, const std::array<double, 3>& c) {
    const int n = vol.n;
    int i0[3];
    double f[3];
    for (int k = 0; k < 3; ++k) {
        const double fl = std::min(std::floor(c[k]), static_cast<double>(n - 2));
        i0[k] = std::max(0, static_cast<int>(fl));
        f[k] = c[k] - i0[k];
    }
    if (n == 1) return vol.values[0];
    double s = 0.0;
    for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
                const double w = (dx ? f[0] : 1 - f[0]) * (dy ? f[1] : 1 - f[1]) * (dz ? f[2] : 1 - f[2]);
                if (w != 0.0) s += w * vol.at(i0[0] + dx, i0[1] + dy, i0[2] + dz);
            }
    return s;
}

}  // namespace

Volume::Volume(int n_, double spacing_, const Vec3& origin_) : n(n_), spacing(spacing_), origin(origin_) {
    if (n < 1 || !(spacing > 0.0)) throw Error(ErrorCode::InvalidArgument, "volume needs n >= 1 and positive spacing");
    values.assign(static_cast<std::size_t>(n) * n * n, 0.0);
}

Volume Volume::centered(int n, double spacing) {
    return Volume(n, spacing, Vec3::Constant(-0.5 * n * spacing));
}

DetectorImage forward_project(const Volume& vol, const ProjectionGeometry& g) {
    DetectorImage img = blank_image(g);
    const double* x = vol.values.data();
    for (int v = 0; v < g.height; ++v) {
        for (int u = 0; u < g.width; ++u) {
            double s = 0.0;
            joseph_ray(vol, g, u, v, [&](std::size_t j, double w) { s += w * x[j]; });
            img.values[static_cast<std::size_t>(v) * g.width + u] = s;
        }
    }
    return img;
}

void back_project(const DetectorImage& img, const ProjectionGeometry& g, Volume& accum) {
    check_view(img, g);
    double* x = accum.values.data();
    for (int v = 0; v < g.height; ++v) {
        for (int u = 0; u < g.width; ++u) {
            const double y = img.values[static_cast<std::size_t>(v) * g.width + u];
            if (y == 0.0) continue;
            joseph_ray(accum, g, u, v, [&](std::size_t j, double w) { x[j] += w * y; });
        }
    }
}

void ReconStack::validate() const {
    if (geometries.empty()) throw Error(ErrorCode::InvalidArgument, "no views to reconstruct");
    if (images.size() != geometries.size()) throw Error(ErrorCode::InvalidArgument, "one image per geometry required");
    if (!weights.empty() && weights.size() != geometries.size()) {
        throw Error(ErrorCode::InvalidArgument, "one weight image per view required");
    }
    for (std::size_t i = 0; i < geometries.size(); ++i) {
        check_view(images[i], geometries[i]);
        if (!weights.empty()) {
            check_view(weights[i], geometries[i]);
            for (double w : weights[i].values) {
                if (!(w >= 0.0) || !std::isfinite(w)) throw Error(ErrorCode::InvalidArgument, "weights must be finite and >= 0");
            }
        }
    }
}

ReconStack ReconStack::from_projection_stack(const ProjectionStack& s) {
    if (s.data.size() != s.view_count() * s.pixels_per_view()) {
        throw Error(ErrorCode::InvalidArgument, "projection stack has no pixel data");
    }
    ReconStack r;
    r.geometries = s.geometries;
    for (std::size_t i = 0; i < s.view_count(); ++i) {
        DetectorImage img = blank_image(s.geometries[i]);
        const float* src = s.data.data() + i * s.pixels_per_view();
        for (std::size_t k = 0; k < img.values.size(); ++k) img.values[k] = src[k];
        r.images.push_back(std::move(img));
    }
    return r;
}

std::vector<DetectorImage> forward_project_stack(const Volume& vol, const ReconStack& stack) {
    std::vector<DetectorImage> out(stack.geometries.size());
    parallel_for(out.size(), [&](std::size_t i) { out[i] = forward_project(vol, stack.geometries[i]); });
    return out;
}

Volume back_project_stack(const std::vector<DetectorImage>& images, const ReconStack& stack, const Volume& grid) {
    if (images.size() != stack.geometries.size()) throw Error(ErrorCode::InvalidArgument, "one image per view required");
    const std::size_t views = images.size();
    const std::size_t chunks = (views + kViewChunk - 1) / kViewChunk;
    std::vector<Volume> partial(chunks, Volume(grid.n, grid.spacing, grid.origin));
    parallel_for(chunks, [&](std::size_t c) {
        const std::size_t end = std::min(views, (c + 1) * kViewChunk);
        for (std::size_t i = c * kViewChunk; i < end; ++i) {
            if (stack.weights.empty()) {
                back_project(images[i], stack.geometries[i], partial[c]);
            } else {
                DetectorImage wy = images[i];
                for (std::size_t k = 0; k < wy.values.size(); ++k) wy.values[k] *= stack.weights[i].values[k];
                back_project(wy, stack.geometries[i], partial[c]);
            }
        }
    });
    Volume out(grid.n, grid.spacing, grid.origin);
    for (const auto& p : partial) {
        for (std::size_t k = 0; k < out.values.size(); ++k) out.values[k] += p.values[k];
    }
    return out;
}

double mean_normal_diagonal(const ReconStack& stack, const Volume& grid) {
    std::vector<double> per_view(stack.geometries.size(), 0.0);
    parallel_for(per_view.size(), [&](std::size_t i) {
        const auto& g = stack.geometries[i];
        double s = 0.0;
        for (int v = 0; v < g.height; ++v) {
            for (int u = 0; u < g.width; ++u) {
                const double wpx = stack.weights.empty() ? 1.0 : stack.weights[i].at(u, v);
                if (wpx == 0.0) continue;
                double ray = 0.0;
                joseph_ray(grid, g, u, v, [&](std::size_t, double w) { ray += w * w; });
                s += wpx * ray;
            }
        }
        per_view[i] = s;
    });
    double total = 0.0;
    for (double s : per_view) total += s;
    return total / static_cast<double>(grid.size());
}

ReconResult reconstruct_cg(const ReconStack& stack, const Volume& grid, const SolverSettings& s) {
    stack.validate();
    if (s.iterations < 1) throw Error(ErrorCode::InvalidArgument, "iterations must be >= 1");
    ReconResult res;
    res.lambda = s.lambda ? *s.lambda : 1e-2 * mean_normal_diagonal(stack, grid);
    if (!(res.lambda >= 0.0) || !std::isfinite(res.lambda)) throw Error(ErrorCode::InvalidArgument, "lambda must be >= 0");
    const double lambda = res.lambda;
    const std::size_t views = stack.geometries.size();

    // Weighted data misfit from the current projections Ax.
    auto data_cost = [&](const std::vector<DetectorImage>& ax) {
        double c = 0.0;
        for (std::size_t i = 0; i < views; ++i) {
            const auto& b = stack.images[i].values;
            for (std::size_t k = 0; k < b.size(); ++k) {
                const double r = ax[i].values[k] - b[k];
                c += (stack.weights.empty() ? 1.0 : stack.weights[i].values[k]) * r * r;
            }
        }
        return c;
    };

    Volume x(grid.n, grid.spacing, grid.origin);
    std::vector<DetectorImage> ax(views);
    for (std::size_t i = 0; i < views; ++i) ax[i] = blank_image(stack.geometries[i]);
    std::vector<double> r = back_project_stack(stack.images, stack, grid).values;
    std::vector<double> p = r;
    double rr = dot(r, r);

    for (int it = 0; it < s.iterations; ++it) {
        Volume pv(grid.n, grid.spacing, grid.origin);
        pv.values = p;
        const auto ap = forward_project_stack(pv, stack);
        std::vector<double> q = back_project_stack(ap, stack, grid).values;
        for (std::size_t k = 0; k < q.size(); ++k) q[k] += lambda * p[k];
        const double curvature = dot(p, q);
        if (rr == 0.0) {
            // Already at the minimum; the remaining iterations leave x unchanged.
            res.cost_history.push_back(data_cost(ax) + lambda * dot(x.values, x.values));
            ++res.iterations_run;
            continue;
        }
        if (!(curvature > 0.0) || !std::isfinite(curvature)) {
            res.breakdown = true;
            break;
        }
        const double alpha = rr / curvature;
        for (std::size_t k = 0; k < p.size(); ++k) {
            x.values[k] += alpha * p[k];
            r[k] -= alpha * q[k];
        }
        for (std::size_t i = 0; i < views; ++i) {
            for (std::size_t k = 0; k < ax[i].values.size(); ++k) ax[i].values[k] += alpha * ap[i].values[k];
        }
        const double rr_new = dot(r, r);
        const double beta = rr_new / rr;
        for (std::size_t k = 0; k < p.size(); ++k) p[k] = r[k] + beta * p[k];
        rr = rr_new;
        res.cost_history.push_back(data_cost(ax) + lambda * dot(x.values, x.values));
        ++res.iterations_run;
    }
    res.volume = std::move(x);
    if (res.breakdown) {
        throw ReconBreakdown(std::move(res));
    }
    return res;
}

ReconBreakdown::ReconBreakdown(ReconResult partial)
    : Error(ErrorCode::NumericalBreakdown, "CG curvature p^T A p <= 0 at iteration " +
                                                std::to_string(partial.iterations_run + 1)),
      partial_(std::move(partial)) {}

SliceAxis slice_axis_from_string(const std::string& s) {
    if (s == "x" || s == "X" || s == "yz" || s == "YZ") return SliceAxis::X;
    if (s == "y" || s == "Y" || s == "zx" || s == "ZX") return SliceAxis::Y;
    if (s == "z" || s == "Z" || s == "yx" || s == "YX") return SliceAxis::Z;
    throw Error(ErrorCode::InvalidArgument, "unknown slice axis '" + s + "'");
}

LineProfile line_profile(const Volume& vol, SliceAxis axis, int index, const std::pair<double, double>& p0,
                         const std::pair<double, double>& p1, int samples) {
    if (samples < 2) throw Error(ErrorCode::OutOfBounds, "a profile needs at least 2 samples");
    if (index < 0 || index >= vol.n) throw Error(ErrorCode::OutOfBounds, "slice index outside the volume");
    const double hi = vol.n - 1;
    for (double c : {p0.first, p0.second, p1.first, p1.second}) {
        if (!(c >= 0.0 && c <= hi)) throw Error(ErrorCode::OutOfBounds, "profile endpoint outside the slice");
    }
    LineProfile lp;
    const double di = p1.first - p0.first, dj = p1.second - p0.second;
    lp.step_mm = std::hypot(di, dj) * vol.spacing / (samples - 1);
    lp.values.reserve(static_cast<std::size_t>(samples));
    for (int k = 0; k < samples; ++k) {
        const double t = static_cast<double>(k) / (samples - 1);
        lp.values.push_back(trilinear(vol, slice_to_xyz(axis, index, p0.first + t * di, p0.second + t * dj)));
    }
    return lp;
}

double gradient_magnitude(const std::vector<double>& values, double step) {
    if (values.size() < 3) throw Error(ErrorCode::OutOfBounds, "gradient needs at least 3 samples");
    if (!(step > 0.0)) throw Error(ErrorCode::InvalidArgument, "step must be positive");
    double g = 0.0;
    for (std::size_t k = 1; k + 1 < values.size(); ++k) {
        g = std::max(g, std::abs(values[k + 1] - values[k - 1]) / (2.0 * step));
    }
    return g;
}

std::vector<ProfileLine> default_profile_lines(int n, double spacing) {
    // Sample-frame mm to continuous voxel-center coordinates on a centered grid.
    const auto c = [&](double mm) { return std::clamp(mm / spacing + 0.5 * n - 0.5, 0.0, static_cast<double>(n - 1)); };
    const int mid = n / 2;
    // Central YX slice; each line runs along y across both side walls and the
    // tilted plate, whose dip makes the crossing oblique.
    std::vector<ProfileLine> lines;
    for (const auto& [name, x] : {std::pair{"yx-left", -3.0}, std::pair{"yx-center", 0.0}, std::pair{"yx-right", 3.0}}) {
        lines.push_back({name, SliceAxis::Z, mid, {c(x), c(-12.0)}, {c(x), c(12.0)}, n});
    }
    return lines;
}

void write_volume(const std::filesystem::path& path, const Volume& vol) {
    std::string text = "robct-volume 1\n";
    text += "n " + std::to_string(vol.n) + "\n";
    text += "spacing " + fmt(vol.spacing) + "\n";
    text += "origin " + fmt(vol.origin.x()) + " " + fmt(vol.origin.y()) + " " + fmt(vol.origin.z()) + "\n";
    text += "data float32le\nend_header\n";
    const std::size_t head = text.size();
    text.resize(head + vol.size() * sizeof(float));
    for (std::size_t k = 0; k < vol.size(); ++k) {
        std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(vol.values[k]));
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
        std::memcpy(text.data() + head + k * sizeof(float), &bits, sizeof(bits));
    }
    write_text_file(path, text);
}

Volume read_volume(const std::filesystem::path& path) {
    const std::string raw = read_text_file(path);
    const std::string marker = "end_header\n";
    const auto end = raw.find(marker);
    if (raw.rfind("robct-volume 1\n", 0) != 0 || end == std::string::npos) {
        throw Error(ErrorCode::CorruptFile, path.string() + " is not a volume file");
    }
    std::istringstream in(raw.substr(0, end));
    std::string key, kind;
    int n = 0;
    double spacing = 0.0;
    Vec3 origin = Vec3::Zero();
    std::getline(in, key);
    while (in >> key) {
        if (key == "n") in >> n;
        else if (key == "spacing") in >> spacing;
        else if (key == "origin") in >> origin.x() >> origin.y() >> origin.z();
        else if (key == "data") in >> kind;
        else throw Error(ErrorCode::CorruptFile, "unknown volume header key '" + key + "'");
        if (!in) throw Error(ErrorCode::CorruptFile, "truncated volume header");
    }
    if (kind != "float32le" || n < 1 || !(spacing > 0.0)) throw Error(ErrorCode::CorruptFile, "volume header is inconsistent");
    Volume vol(n, spacing, origin);
    const std::size_t head = end + marker.size();
    if (raw.size() - head != vol.size() * sizeof(float)) throw Error(ErrorCode::CorruptFile, "volume payload has the wrong size");
    for (std::size_t k = 0; k < vol.size(); ++k) {
        std::uint32_t bits = 0;
        std::memcpy(&bits, raw.data() + head + k * sizeof(float), sizeof(bits));
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
        vol.values[k] = std::bit_cast<float>(bits);
    }
    return vol;
}

std::string slice_pgm(const Volume& vol, SliceAxis axis, int index) {
    if (index < 0 || index >= vol.n) throw Error(ErrorCode::OutOfBounds, "slice index outside the volume");
    const int n = vol.n;
    std::vector<double> px(static_cast<std::size_t>(n) * n);
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const auto c = slice_to_xyz(axis, index, i, j);
            px[static_cast<std::size_t>(j) * n + i] =
                vol.at(static_cast<int>(c[0]), static_cast<int>(c[1]), static_cast<int>(c[2]));
        }
    }
    const auto [lo, hi] = std::minmax_element(px.begin(), px.end());
    const double a = *lo, range = *hi - *lo;
    std::string out = "P5\n" + std::to_string(n) + " " + std::to_string(n) + "\n255\n";
    // Rows from the top of the image, so the second in-plane axis points up.
    for (int j = n - 1; j >= 0; --j) {
        for (int i = 0; i < n; ++i) {
            const double t = range > 0.0 ? (px[static_cast<std::size_t>(j) * n + i] - a) / range : 0.0;
            out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * t))));
        }
    }
    return out;
}

Volume voxelize(const Phantom& phantom, const Volume& grid, int oversample) {
    if (oversample < 1) throw Error(ErrorCode::InvalidArgument, "oversample must be >= 1");
    Volume out(grid.n, grid.spacing, grid.origin);
    std::vector<RigidPose> to_local;
    for (const auto& prim : phantom.primitives) to_local.push_back(prim.pose.inverse());
    const int n = grid.n;
    const double sub = grid.spacing / oversample;
    const double norm = 1.0 / (oversample * oversample * oversample);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t zi) {
        const int z = static_cast<int>(zi);
        for (int y = 0; y < n; ++y) {
            for (int x = 0; x < n; ++x) {
                double sum = 0.0;
                for (int a = 0; a < oversample; ++a)
                    for (int b = 0; b < oversample; ++b)
                        for (int c = 0; c < oversample; ++c) {
                            const Vec3 p = grid.origin + Vec3(x * grid.spacing + (a + 0.5) * sub,
                                                              y * grid.spacing + (b + 0.5) * sub,
                                                              z * grid.spacing + (c + 0.5) * sub);
                            for (std::size_t k = 0; k < phantom.primitives.size(); ++k) {
                                const auto& prim = phantom.primitives[k];
                                const Vec3 l = to_local[k].apply(p);
                                bool inside = false;
                                switch (prim.kind) {
                                    case PrimitiveKind::Box:
                                        inside = (l.cwiseAbs() - prim.half_extents).maxCoeff() <= 0.0;
                                        break;
                                    case PrimitiveKind::Sphere: inside = l.norm() <= prim.radius; break;
                                    case PrimitiveKind::Cylinder:
                                        inside = std::hypot(l.x(), l.y()) <= prim.radius && std::abs(l.z()) <= prim.half_height;
                                        break;
                                }
                                if (inside) sum += prim.mu;
                            }
                        }
                out.values[out.index(x, y, z)] = sum * norm;
            }
        }
    });
    return out;
}

}  // namespace robct
