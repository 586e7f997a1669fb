#include "robct/calibration.hpp"

#include "robct/error.hpp"
#include "robct/parallel.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <tuple>

namespace robct {

namespace {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

RigidPose apply_params(const RigidPose& guess, const Vec6& x) {
    return {guess.rotation() * quat_from_rotation_vector(x.tail<3>()), guess.translation() + x.head<3>()};
}

struct Problem {
    const std::vector<CircleObservation>& observed;
    const ProjectionGeometry& g;
    const HelixModel& helix;
    const RigidPose& guess;

    // Residuals (projected - observed) for a fixed correspondence; markers that
    // cannot be projected contribute a large constant so the step is rejected.
    Eigen::VectorXd residuals(const Vec6& x, const std::vector<std::pair<int, int>>& pairs) const {
        const RigidPose pose = apply_params(guess, x);
        Eigen::VectorXd r(2 * static_cast<Eigen::Index>(pairs.size()));
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            const auto& obs = observed[static_cast<std::size_t>(pairs[i].first)];
            const Vec3 p = pose.apply(helix.markers[static_cast<std::size_t>(pairs[i].second)]);
            try {
                const PixelCoord px = project_point(g, p);
                r[2 * static_cast<Eigen::Index>(i)] = px.u - obs.u;
                r[2 * static_cast<Eigen::Index>(i) + 1] = px.v - obs.v;
            } catch (const Error&) {
                r[2 * static_cast<Eigen::Index>(i)] = 1e6;
                r[2 * static_cast<Eigen::Index>(i) + 1] = 1e6;
            }
        }
        return r;
    }

    // (observation, marker) pairs under the current estimate.
    std::vector<std::pair<int, int>> correspond(const Vec6& x, const CalibrationOptions& opts, int& rejected) const {
        const auto expected = expected_projection(g, apply_params(guess, x), helix);
        const MatchResult m =
            match_circles(observed, expected, opts.threshold_px, opts.min_matches, opts.reject_false_positives);
        std::vector<std::pair<int, int>> pairs;
        for (const auto& c : m.matches) pairs.emplace_back(c.observation, expected[static_cast<std::size_t>(c.expected)].marker);
        std::sort(pairs.begin(), pairs.end());
        rejected = static_cast<int>(m.rejected.size());
        return pairs;
    }
};

}  // namespace

std::vector<ExpectedPoint> expected_projection(const ProjectionGeometry& g, const RigidPose& holder_pose,
                                               const HelixModel& helix) {
    std::vector<ExpectedPoint> out;
    out.reserve(helix.markers.size());
    for (std::size_t k = 0; k < helix.markers.size(); ++k) {
        try {
            const PixelCoord px = project_point(g, holder_pose.apply(helix.markers[k]));
            out.push_back({static_cast<int>(k), px.u, px.v});
        } catch (const Error&) {
        }
    }
    return out;
}

MatchResult match_circles(const std::vector<CircleObservation>& observed, const std::vector<ExpectedPoint>& expected,
                          double threshold_px, int min_matches, bool reject) {
    if (!(threshold_px > 0.0)) throw Error(ErrorCode::InvalidArgument, "match threshold must be positive");
    const double limit = reject ? threshold_px : std::numeric_limits<double>::infinity();
    std::vector<std::tuple<double, int, int>> candidates;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        for (std::size_t j = 0; j < expected.size(); ++j) {
            const double d = std::hypot(observed[i].u - expected[j].u, observed[i].v - expected[j].v);
            if (d < limit) candidates.emplace_back(d, static_cast<int>(i), static_cast<int>(j));
        }
    }
    std::sort(candidates.begin(), candidates.end());
    std::vector<char> obs_used(observed.size(), 0), exp_used(expected.size(), 0);
    MatchResult r;
    for (const auto& [d, i, j] : candidates) {
        if (obs_used[static_cast<std::size_t>(i)] || exp_used[static_cast<std::size_t>(j)]) continue;
        obs_used[static_cast<std::size_t>(i)] = exp_used[static_cast<std::size_t>(j)] = 1;
        r.matches.push_back({i, j, d});
    }
    for (std::size_t i = 0; i < observed.size(); ++i) {
        if (!obs_used[i]) r.rejected.push_back(static_cast<int>(i));
    }
    if (static_cast<int>(r.matches.size()) < min_matches) {
        throw Error(ErrorCode::TooFewMatches, "matched " + std::to_string(r.matches.size()) + " circles, need " +
                                                  std::to_string(min_matches));
    }
    return r;
}

CalibrationResult calibrate(const std::vector<CircleObservation>& observed, const ProjectionGeometry& g,
                            const HelixModel& helix, const RigidPose& guess, const CalibrationOptions& opts) {
    const Problem prob{observed, g, helix, guess};
    Vec6 x = Vec6::Zero();
    int rejected = 0;
    auto pairs = prob.correspond(x, opts, rejected);
    Eigen::VectorXd r = prob.residuals(x, pairs);
    double cost = r.squaredNorm();

    CalibrationResult res;
    res.cost_history.push_back(cost);
    double lambda = opts.lambda0;
    bool converged = false;
    int it = 0;
    for (; it < opts.max_iterations; ++it) {
        Eigen::MatrixXd J(r.size(), 6);
        for (int k = 0; k < 6; ++k) {
            const double h = k < 3 ? opts.fd_step_mm : opts.fd_step_rad;
            Vec6 xp = x, xm = x;
            xp[k] += h;
            xm[k] -= h;
            J.col(k) = (prob.residuals(xp, pairs) - prob.residuals(xm, pairs)) / (2.0 * h);
        }
        const Mat6 A = J.transpose() * J;
        const Vec6 b = -J.transpose() * r;
        Mat6 damped = A;
        for (int k = 0; k < 6; ++k) damped(k, k) += lambda * std::max(A(k, k), 1e-12);
        const Vec6 step = damped.ldlt().solve(b);
        if (!step.allFinite()) throw Error(ErrorCode::NumericalBreakdown, "LM step is not finite");

        const Vec6 trial = x + step;
        const Eigen::VectorXd r_trial = prob.residuals(trial, pairs);
        const double cost_trial = r_trial.squaredNorm();
        if (cost_trial < cost) {
            x = trial;
            lambda /= 10.0;
            pairs = prob.correspond(x, opts, rejected);
            r = prob.residuals(x, pairs);
            cost = r.squaredNorm();
            res.cost_history.push_back(cost);
        } else {
            lambda *= 10.0;
        }
        if (step.norm() < opts.step_tolerance) {
            converged = true;
            ++it;
            break;
        }
    }
    if (!converged) {
        throw Error(ErrorCode::NotConverged, "LM did not converge in " + std::to_string(opts.max_iterations) + " iterations");
    }
    res.refined_pose = apply_params(guess, x);
    res.matched = static_cast<int>(pairs.size());
    res.rejected = rejected;
    res.iterations = it;
    res.converged = true;
    res.residual_rms = pairs.empty() ? 0.0 : std::sqrt(cost / static_cast<double>(pairs.size()));
    return res;
}

StackCalibration calibrate_stack(const std::vector<CalibrationView>& views, const HelixModel& helix,
                                 const CalibrationOptions& opts) {
    StackCalibration s;
    s.views.resize(views.size());
    parallel_for(views.size(), [&](std::size_t i) {
        auto& out = s.views[i];
        out.view = views[i].view;
        try {
            out.result = calibrate(views[i].observed, views[i].geometry, helix, views[i].guess, opts);
            out.success = out.result->success(opts);
        } catch (const Error& e) {
            out.error = std::string(to_string(e.code())) + ": " + e.what();
        }
    });
    std::stable_sort(s.views.begin(), s.views.end(), [](const auto& a, const auto& b) { return a.view < b.view; });
    s.table.denominator = static_cast<std::int64_t>(views.size());
    s.table.numerator = std::count_if(s.views.begin(), s.views.end(), [](const auto& v) { return v.success; });
    return s;
}

std::string calibration_report_csv(const StackCalibration& s) {
    std::string out = "view,matched,rejected,rms_px,converged,success\n";
    char buf[160];
    for (const auto& v : s.views) {
        if (v.result) {
            std::snprintf(buf, sizeof(buf), "%d,%d,%d,%.6f,%d,%d\n", v.view, v.result->matched, v.result->rejected,
                          v.result->residual_rms, v.result->converged ? 1 : 0, v.success ? 1 : 0);
        } else {
            std::snprintf(buf, sizeof(buf), "%d,0,0,nan,0,0\n", v.view);
        }
        out += buf;
    }
    return out;
}

}  // namespace robct
