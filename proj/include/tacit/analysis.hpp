#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "tacit/error.hpp"
#include "tacit/image.hpp"
#include "tacit/maze.hpp"
#include "tacit/sampler.hpp"

namespace tacit {

/// Boolean per-pixel mask of solution-path (red) pixels.
struct RedMask {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> on;

    RedMask() = default;
    RedMask(int h, int w) : height(h), width(w), on(static_cast<size_t>(h) * w, 0) {}

    size_t count() const {
        size_t n = 0;
        for (uint8_t v : on) n += v;
        return n;
    }
};

/// A pixel is red iff R > 0.5 and G < 0.5 and B < 0.5 (images in [0,1]).
/// The 0.5 thresholds sit midway between the pure palette colors.
template <typename T>
RedMask red_mask(const Image<T>& img) {
    RedMask m(img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            m.on[static_cast<size_t>(y) * img.width + x] =
                img.at(0, y, x) > T(0.5) && img.at(1, y, x) < T(0.5) && img.at(2, y, x) < T(0.5);
    return m;
}

/// |pred AND gt| / |gt|. The ground truth must be non-empty.
inline double path_recall(const RedMask& pred, const RedMask& gt) {
    require(pred.height == gt.height && pred.width == gt.width, ErrorCategory::invalid_argument,
            "mask shape mismatch");
    size_t hit = 0, total = 0;
    for (size_t i = 0; i < gt.on.size(); ++i) {
        if (gt.on[i]) {
            ++total;
            hit += pred.on[i];
        }
    }
    require(total > 0, ErrorCategory::invalid_argument, "recall undefined for empty ground truth");
    return double(hit) / double(total);
}

/// Intersection over union; 1.0 when both masks are empty.
inline double iou(const RedMask& pred, const RedMask& gt) {
    require(pred.height == gt.height && pred.width == gt.width, ErrorCategory::invalid_argument,
            "mask shape mismatch");
    size_t inter = 0, uni = 0;
    for (size_t i = 0; i < gt.on.size(); ++i) {
        inter += pred.on[i] & gt.on[i];
        uni += pred.on[i] | gt.on[i];
    }
    return uni == 0 ? 1.0 : double(inter) / double(uni);
}

/// Mean squared error over all elements.
template <typename T>
double l2_distance(const Image<T>& a, const Image<T>& b) {
    require(a.height == b.height && a.width == b.width, ErrorCategory::invalid_argument,
            "image shape mismatch");
    double acc = 0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = double(a.data[i]) - double(b.data[i]);
        acc += d * d;
    }
    return acc / double(a.data.size());
}

/// 10*log10(1/MSE) with MAX=1, capped at 99 dB so identical images (and
/// aggregate means over them) stay finite.
template <typename T>
double psnr(const Image<T>& a, const Image<T>& b) {
    const double mse = l2_distance(a, b);
    if (mse <= 0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

/// Recall of the red mask at every recorded trajectory state, against a fixed
/// ground-truth mask. States are clamped to [0,1] before masking.
template <typename T>
std::vector<std::pair<double, double>> emergence_curve(const Trajectory<T>& traj,
                                                       const RedMask& gt) {
    require(!traj.states.empty(), ErrorCategory::invalid_argument, "empty trajectory");
    std::vector<std::pair<double, double>> curve;
    curve.reserve(traj.states.size());
    for (size_t i = 0; i < traj.states.size(); ++i)
        curve.emplace_back(traj.t[i], path_recall(red_mask(clip01(traj.states[i])), gt));
    return curve;
}

struct TransitionThresholds {
    double onset = 0.05;
    double completion = 0.95;
};

/// Per-sample phase-transition summary.
struct TransitionRow {
    std::optional<double> onset;       // first t with recall > onset threshold
    std::optional<double> completion;  // first t with recall > completion threshold
    std::optional<double> width;       // completion - onset
    double recall_at_onset = 0;
    double final_recall = 0;
    double final_iou = 0;
};

inline TransitionRow detect_transition(const std::vector<std::pair<double, double>>& curve,
                                       TransitionThresholds thresholds = {}) {
    require(!curve.empty(), ErrorCategory::invalid_argument, "empty emergence curve");
    TransitionRow row;
    for (const auto& [t, recall] : curve) {
        if (!row.onset && recall > thresholds.onset) {
            row.onset = t;
            row.recall_at_onset = recall;
        }
        if (!row.completion && recall > thresholds.completion) row.completion = t;
    }
    if (row.onset && row.completion) row.width = *row.completion - *row.onset;
    row.final_recall = curve.back().second;
    return row;
}

/// Mean and population standard deviation over the samples where the value is
/// present.
struct Aggregate {
    double mean = 0;
    double stddev = 0;
    int n = 0;
};

inline Aggregate aggregate(const std::vector<double>& values) {
    Aggregate a;
    a.n = static_cast<int>(values.size());
    if (a.n == 0) return a;
    for (double v : values) a.mean += v;
    a.mean /= a.n;
    for (double v : values) a.stddev += (v - a.mean) * (v - a.mean);
    a.stddev = std::sqrt(a.stddev / a.n);
    return a;
}

/// Emergence timing of the start/middle/end thirds of the solution path.
struct SegmentRow {
    std::optional<double> onset[3];
    bool simultaneous = false;
};

/// Splits the interior solution cells (entry and exit stay green and never
/// turn red) into thirds along the walk order, remainder cells going to the
/// earlier thirds. A segment's onset is the first t where its recall exceeds
/// 0.5; the thirds are simultaneous when their onsets all exist and span at
/// most one Euler step (1/N).
template <typename T>
SegmentRow segment_onsets(const Trajectory<T>& traj, const SolutionPath& path, int maze_size,
                          double recall_threshold = 0.5) {
    require(path.cells.size() >= 3, ErrorCategory::invalid_argument,
            "path too short for segment analysis");
    require(!traj.states.empty(), ErrorCategory::invalid_argument, "empty trajectory");

    const std::vector<Cell> interior(path.cells.begin() + 1, path.cells.end() - 1);
    const size_t k = interior.size();
    const size_t base = k / 3, rem = k % 3;
    size_t cursor = 0;
    const int res = traj.states.front().height;

    std::vector<RedMask> segments;
    for (int s = 0; s < 3; ++s) {
        const size_t len = base + (static_cast<size_t>(s) < rem ? 1 : 0);
        std::vector<uint8_t> in_segment(static_cast<size_t>(maze_size) * maze_size, 0);
        for (size_t i = 0; i < len; ++i) {
            const Cell& c = interior[cursor + i];
            in_segment[static_cast<size_t>(c.row) * maze_size + c.col] = 1;
        }
        cursor += len;
        RedMask m(res, res);
        for (int y = 0; y < res; ++y) {
            const int r = y * maze_size / res;
            for (int x = 0; x < res; ++x) {
                const int c = x * maze_size / res;
                m.on[static_cast<size_t>(y) * res + x] =
                    in_segment[static_cast<size_t>(r) * maze_size + c];
            }
        }
        require(m.count() > 0, ErrorCategory::invalid_argument,
                "path too short for segment analysis");
        segments.push_back(std::move(m));
    }

    SegmentRow row;
    for (size_t i = 0; i < traj.states.size(); ++i) {
        const RedMask pred = red_mask(clip01(traj.states[i]));
        for (int s = 0; s < 3; ++s)
            if (!row.onset[s] && path_recall(pred, segments[s]) > recall_threshold)
                row.onset[s] = traj.t[i];
    }
    if (row.onset[0] && row.onset[1] && row.onset[2]) {
        const double lo = std::min({*row.onset[0], *row.onset[1], *row.onset[2]});
        const double hi = std::max({*row.onset[0], *row.onset[1], *row.onset[2]});
        row.simultaneous = (hi - lo) <= 1.0 / traj.steps() + 1e-12;
    }
    return row;
}

struct StepSweepRow {
    int steps = 0;
    double mean_iou = 0;
    double mean_psnr = 0;
};

inline const std::vector<int>& default_sweep_steps() {
    static const std::vector<int> steps = {5, 10, 20, 50, 100};
    return steps;
}

/// Sampling-quality sweep over Euler step counts with an arbitrary velocity
/// field (stub fields in tests, the model in production).
template <typename T, typename VelocityFn>
std::vector<StepSweepRow> steps_sweep_field(VelocityFn&& velocity,
                                            const std::vector<PairSample>& samples,
                                            const std::vector<int>& step_counts) {
    std::vector<StepSweepRow> rows;
    for (int n : step_counts) {
        StepSweepRow row;
        row.steps = n;
        for (const auto& s : samples) {
            const Image<T> x0 = to_float<T>(s.input);
            const Image<T> x1 = to_float<T>(s.target);
            const Image<T> pred = euler_sample_field(x0, velocity, n);
            row.mean_iou += iou(red_mask(pred), red_mask(x1));
            row.mean_psnr += psnr(pred, x1);
        }
        row.mean_iou /= double(samples.size());
        row.mean_psnr /= double(samples.size());
        rows.push_back(row);
    }
    return rows;
}

template <typename T>
std::vector<StepSweepRow> steps_sweep(const DitParams<T>& params,
                                      const std::vector<PairSample>& samples,
                                      const std::vector<int>& step_counts = default_sweep_steps()) {
    return steps_sweep_field<T>(
        [&params](const Image<T>& x, double t) { return model_forward(params, x, t); }, samples,
        step_counts);
}

// ---- CSV output ----

namespace detail {
inline std::ofstream open_csv(const std::string& path) {
    std::ofstream out(path);
    require(bool(out), ErrorCategory::io_error, "cannot write " + path);
    return out;
}
inline std::string opt_str(const std::optional<double>& v) {
    if (!v) return "";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", *v);
    return buf;
}
inline std::string num_str(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}
}  // namespace detail

inline void write_emergence_csv(
    const std::vector<std::vector<std::pair<double, double>>>& curves, const std::string& path) {
    auto out = detail::open_csv(path);
    out << "sample,t,recall\n";
    for (size_t i = 0; i < curves.size(); ++i)
        for (const auto& [t, recall] : curves[i])
            out << i << "," << detail::num_str(t) << "," << detail::num_str(recall) << "\n";
}

inline void write_transition_csv(const std::vector<TransitionRow>& rows, const std::string& path) {
    auto out = detail::open_csv(path);
    out << "sample,onset,completion,width,recall_at_onset,final_recall,final_iou\n";
    for (size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        out << i << "," << detail::opt_str(r.onset) << "," << detail::opt_str(r.completion) << ","
            << detail::opt_str(r.width) << "," << detail::num_str(r.recall_at_onset) << ","
            << detail::num_str(r.final_recall) << "," << detail::num_str(r.final_iou) << "\n";
    }
}

inline void write_transition_summary_csv(const std::vector<TransitionRow>& rows,
                                         const std::string& path) {
    std::vector<double> onsets, widths, recalls, ious;
    for (const auto& r : rows) {
        if (r.onset) onsets.push_back(*r.onset);
        if (r.width) widths.push_back(*r.width);
        recalls.push_back(r.final_recall);
        ious.push_back(r.final_iou);
    }
    auto out = detail::open_csv(path);
    out << "metric,mean,stddev,n\n";
    auto row = [&out](const char* name, const Aggregate& a) {
        out << name << "," << detail::num_str(a.mean) << "," << detail::num_str(a.stddev) << ","
            << a.n << "\n";
    };
    row("onset", aggregate(onsets));
    row("width", aggregate(widths));
    row("final_recall", aggregate(recalls));
    row("final_iou", aggregate(ious));
}

inline void write_segments_csv(const std::vector<SegmentRow>& rows, const std::string& path) {
    auto out = detail::open_csv(path);
    out << "sample,onset_start,onset_middle,onset_end,simultaneous\n";
    for (size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        out << i << "," << detail::opt_str(r.onset[0]) << "," << detail::opt_str(r.onset[1]) << ","
            << detail::opt_str(r.onset[2]) << "," << (r.simultaneous ? 1 : 0) << "\n";
    }
}

inline void write_sweep_csv(const std::vector<StepSweepRow>& rows, const std::string& path) {
    auto out = detail::open_csv(path);
    out << "steps,iou,psnr\n";
    for (const auto& r : rows)
        out << r.steps << "," << detail::num_str(r.mean_iou) << "," << detail::num_str(r.mean_psnr)
            << "\n";
}

/// Tiles images left-to-right, top-to-bottom into a grid with a 2px white
/// gutter. All images must share one size.
inline ImageU8 make_grid(const std::vector<ImageU8>& images, int cols) {
    require(!images.empty() && cols >= 1, ErrorCategory::invalid_argument,
            "make_grid needs images and a positive column count");
    const int h = images[0].height, w = images[0].width;
    for (const auto& im : images)
        require(im.height == h && im.width == w, ErrorCategory::invalid_argument,
                "make_grid: mixed image sizes");
    const int rows = (static_cast<int>(images.size()) + cols - 1) / cols;
    const int gutter = 2;
    ImageU8 grid(rows * h + (rows - 1) * gutter, cols * w + (cols - 1) * gutter);
    std::fill(grid.data.begin(), grid.data.end(), uint8_t(255));
    for (size_t i = 0; i < images.size(); ++i) {
        const int gy = static_cast<int>(i) / cols * (h + gutter);
        const int gx = static_cast<int>(i) % cols * (w + gutter);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < 3; ++c)
                    grid.at(gy + y, gx + x, c) = images[i].at(y, x, c);
    }
    return grid;
}

}  // namespace tacit
