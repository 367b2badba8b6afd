#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "tacit/dit.hpp"
#include "tacit/error.hpp"
#include "tacit/image.hpp"

namespace tacit {

/// Recorded Euler trajectory: N+1 states at t = i/N, i = 0..N. Intermediate
/// states are the raw (pre-clip) running integrand; the final state is the
/// clipped output.
template <typename T>
struct Trajectory {
    std::vector<double> t;
    std::vector<Image<T>> states;

    int steps() const { return static_cast<int>(states.size()) - 1; }
};

/// Euler integration of a velocity field from t=0 to t=1 in N uniform steps:
/// x <- x + v(x, i/N) / N, clipped to [0,1] only at the end (per-step clipping
/// is available for ablation). Deterministic: identical inputs give
/// bit-identical trajectories.
template <typename T, typename VelocityFn>
Image<T> euler_sample_field(const Image<T>& x0, VelocityFn&& velocity, int steps,
                            Trajectory<T>* trajectory = nullptr, bool clip_each_step = false) {
    require(steps >= 1, ErrorCategory::invalid_argument, "euler_sample needs at least one step");
    Image<T> x = x0;
    if (trajectory) {
        trajectory->t.assign(1, 0.0);
        trajectory->states.assign(1, x0);
        trajectory->t.reserve(steps + 1);
        trajectory->states.reserve(steps + 1);
    }
    const T dt = T(1.0 / double(steps));
    for (int i = 0; i < steps; ++i) {
        const double t = double(i) / double(steps);
        const Image<T> v = velocity(x, t);
        require(v.height == x.height && v.width == x.width, ErrorCategory::invalid_argument,
                "velocity field resolution mismatch");
        for (size_t j = 0; j < x.data.size(); ++j) x.data[j] += v.data[j] * dt;
        if (clip_each_step) x = clip01(std::move(x));
        if (trajectory && i + 1 < steps) {
            trajectory->t.push_back(double(i + 1) / double(steps));
            trajectory->states.push_back(x);
        }
    }
    x = clip01(std::move(x));
    if (trajectory) {
        trajectory->t.push_back(1.0);
        trajectory->states.push_back(x);
    }
    return x;
}

/// Euler sampling driven by the model's predicted velocity.
template <typename T>
Image<T> euler_sample(const Image<T>& x0, const DitParams<T>& params, int steps,
                      Trajectory<T>* trajectory = nullptr, bool clip_each_step = false) {
    require(x0.height == params.config.resolution && x0.width == params.config.resolution,
            ErrorCategory::invalid_argument, "input resolution does not match model config");
    return euler_sample_field(
        x0, [&params](const Image<T>& x, double t) { return model_forward(params, x, t); }, steps,
        trajectory, clip_each_step);
}

/// Writes step_%03d.ppm for every recorded state (values clamped for display
/// only) plus trajectory.csv with "step,t" rows.
template <typename T>
void export_trajectory(const Trajectory<T>& trajectory, const std::string& dir) {
    std::filesystem::create_directories(dir);
    for (size_t i = 0; i < trajectory.states.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "step_%03d.ppm", static_cast<int>(i));
        write_ppm(to_u8(trajectory.states[i]), (std::filesystem::path(dir) / name).string());
    }
    std::ofstream csv(std::filesystem::path(dir) / "trajectory.csv");
    require(bool(csv), ErrorCategory::io_error, "cannot write trajectory.csv in " + dir);
    csv << "step,t\n";
    char row[64];
    for (size_t i = 0; i < trajectory.t.size(); ++i) {
        std::snprintf(row, sizeof(row), "%zu,%.6f\n", i, trajectory.t[i]);
        csv << row;
    }
}

}  // namespace tacit
