// Acceptance suite: one pass/fail line per criterion. Criterion 7 trains the
// desk-scale model and later criteria reuse its checkpoint. Pass criterion
// numbers as arguments to run a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "tacit/analysis.hpp"
#include "tacit/checkpoint.hpp"
#include "tacit/flow.hpp"
#include "tacit/gradcheck.hpp"

using namespace tacit;
namespace fs = std::filesystem;

namespace {

struct CheckFailure {
    std::string message;
};

void expect(bool ok, const std::string& message) {
    if (!ok) throw CheckFailure{message};
}

std::string format_double(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

fs::path work_dir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "tacit_acceptance";
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

int worker_count() {
    const unsigned hw = std::thread::hardware_concurrency();
    return static_cast<int>(std::min(8u, std::max(1u, hw)));
}

// ---- shared state for the trained desk model (criteria 7 and 9) ----

struct DeskRun {
    TrainConfig config;
    LossLog log;
    std::string final_ckpt;
    std::string first_ckpt;
};

std::optional<DeskRun> g_desk_run;

constexpr int kDeskEpochs = 10;
constexpr int kDeskCheckpointInterval = 2;
constexpr int kDeskPairCount = 5000;
constexpr uint64_t kDeskSeed = 11;

const DeskRun& ensure_desk_run() {
    if (g_desk_run) return *g_desk_run;

    const fs::path data_dir = work_dir() / "desk_data";
    const fs::path out_dir = work_dir() / "desk_out";
    fs::remove_all(data_dir);
    fs::remove_all(out_dir);
    fs::create_directories(data_dir);

    std::vector<PairSample> shard;
    int shard_index = 0;
    for (int i = 0; i < kDeskPairCount; ++i) {
        shard.push_back(generate_pair(11, kDeskSeed + i, 32));
        if (shard.size() == 1000 || i + 1 == kDeskPairCount) {
            write_batch(shard, (data_dir / shard_filename(shard_index++)).string());
            shard.clear();
        }
    }

    TrainConfig cfg;
    cfg.model = ModelConfig::desk();
    cfg.data_dir = data_dir.string();
    cfg.out_dir = out_dir.string();
    cfg.lr = 1e-4;
    cfg.batch_size = 32;
    cfg.epochs = kDeskEpochs;
    cfg.checkpoint_interval = kDeskCheckpointInterval;
    cfg.seed = kDeskSeed;
    cfg.workers = worker_count();
    cfg.heldout_count = 256;
    cfg.heldout_size = 11;
    cfg.verbose = true;

    DeskRun run;
    run.config = cfg;
    run.log = train(cfg);
    run.first_ckpt = checkpoint_path(cfg.out_dir, kDeskCheckpointInterval);
    run.final_ckpt = checkpoint_path(cfg.out_dir, kDeskEpochs);
    g_desk_run = std::move(run);
    return *g_desk_run;
}

// ---- criteria ----

void criterion_1_maze_properties() {
    const int sizes[] = {11, 15, 21, 25, 31};
    Xoshiro256ss rng(100);
    for (int i = 0; i < 1000; ++i) {
        const int size = sizes[i % 5];
        const MazeGrid grid = generate_maze(size, rng.next());
        size_t open = 0;
        for (uint8_t c : grid.cells) open += c;
        const size_t nodes = size_t(size - 1) / 2 * size_t(size - 1) / 2;
        expect(open == 2 * nodes - 1, "open-cell count violates 2c-1 at sample " +
                                          std::to_string(i));

        // union-find over carved adjacencies: one component, no cycle
        std::vector<int> root(size_t(size) * size);
        for (size_t k = 0; k < root.size(); ++k) root[k] = static_cast<int>(k);
        std::function<int(int)> find2 = [&](int x) {
            while (root[x] != x) x = root[x] = root[root[x]];
            return x;
        };
        size_t edges = 0;
        bool cycle = false;
        for (int r = 0; r < size; ++r)
            for (int c = 0; c < size; ++c) {
                if (!grid.path(r, c)) continue;
                if (r + 1 < size && grid.path(r + 1, c)) {
                    ++edges;
                    const int a = find2(r * size + c), b = find2((r + 1) * size + c);
                    if (a == b) cycle = true;
                    root[a] = b;
                }
                if (c + 1 < size && grid.path(r, c + 1)) {
                    ++edges;
                    const int a = find2(r * size + c), b = find2(r * size + c + 1);
                    if (a == b) cycle = true;
                    root[a] = b;
                }
            }
        expect(!cycle, "cycle found at sample " + std::to_string(i));
        expect(edges == open - 1, "edge count is not open-1 at sample " + std::to_string(i));
        int component = -1;
        bool single = true;
        for (int k = 0; k < size * size; ++k) {
            if (!grid.path(k / size, k % size)) continue;
            const int c = find2(k);
            if (component < 0) component = c;
            single &= c == component;
        }
        expect(single, "multiple components at sample " + std::to_string(i));
        expect(!solve_maze(grid).cells.empty(), "BFS failed at sample " + std::to_string(i));
    }
}

void criterion_2_bfs_oracle() {
    // exhaustive simple-path enumeration, written independently of the solver
    auto enumerate = [](const MazeGrid& grid) {
        std::vector<std::vector<Cell>> found;
        std::vector<uint8_t> visited(size_t(grid.size) * grid.size, 0);
        std::vector<Cell> walk;
        std::function<void(Cell)> dfs = [&](Cell cur) {
            walk.push_back(cur);
            visited[size_t(cur.row) * grid.size + cur.col] = 1;
            if (cur == grid.exit()) {
                found.push_back(walk);
            } else {
                const int dr[4] = {-1, 1, 0, 0};
                const int dc[4] = {0, 0, -1, 1};
                for (int k = 0; k < 4; ++k) {
                    const int r = cur.row + dr[k], c = cur.col + dc[k];
                    if (r < 0 || c < 0 || r >= grid.size || c >= grid.size) continue;
                    if (!grid.path(r, c) || visited[size_t(r) * grid.size + c]) continue;
                    dfs({r, c});
                }
            }
            visited[size_t(cur.row) * grid.size + cur.col] = 0;
            walk.pop_back();
        };
        dfs(grid.entry());
        return found;
    };

    for (uint64_t seed = 0; seed < 100; ++seed) {
        for (int size : {5, 7, 9}) {
            const MazeGrid grid = generate_maze(size, seed);
            const auto all = enumerate(grid);
            expect(all.size() == 1, "path not unique for size " + std::to_string(size) +
                                        " seed " + std::to_string(seed));
            const SolutionPath bfs = solve_maze(grid);
            expect(bfs.cells.size() == all[0].size(), "BFS length mismatch");
            for (size_t i = 0; i < bfs.cells.size(); ++i)
                expect(bfs.cells[i] == all[0][i], "BFS path differs from enumeration");
        }
    }
}

void criterion_3_dataset_roundtrip() {
    const fs::path dir = work_dir() / "dataset";
    fs::remove_all(dir);
    fs::create_directories(dir);

    const int sizes[] = {11, 15, 21, 25, 31};
    std::vector<PairSample> all;
    for (int i = 0; i < 1000; ++i) all.push_back(generate_pair(sizes[i % 5], 3000 + i, 64));

    // two shards, then bit-exact round trip
    const std::vector<PairSample> a(all.begin(), all.begin() + 500);
    const std::vector<PairSample> b(all.begin() + 500, all.end());
    write_batch(a, (dir / shard_filename(0)).string());
    write_batch(b, (dir / shard_filename(1)).string());

    const auto back_a = read_batch((dir / shard_filename(0)).string());
    const auto back_b = read_batch((dir / shard_filename(1)).string());
    expect(back_a.size() == 500 && back_b.size() == 500, "sample counts changed");
    for (size_t i = 0; i < 500; ++i) {
        expect(back_a[i].input == a[i].input && back_a[i].target == a[i].target &&
                   back_a[i].seed == a[i].seed && back_a[i].size == a[i].size,
               "round trip not bit-identical at " + std::to_string(i));
        expect(back_b[i].input == b[i].input && back_b[i].target == b[i].target,
               "round trip not bit-identical at " + std::to_string(500 + i));
    }

    std::multiset<uint64_t> expected;
    for (const auto& s : all) expected.insert(s.seed);
    for (uint64_t epoch = 0; epoch < 3; ++epoch) {
        std::multiset<uint64_t> seen;
        EpochStream stream = iter_epoch(dir.string(), 64, epoch, 17);
        while (auto batch = stream.next())
            for (const auto& s : *batch) seen.insert(s.seed);
        expect(seen == expected,
               "epoch " + std::to_string(epoch) + " did not deliver each sample exactly once");
    }
}

void criterion_4_gradient_checks() {
    // --- per-layer checks, f64 analytic vs f64 central differences ---
    Xoshiro256ss rng(400);
    auto randomize = [&rng](Tensor<double>& t, double scale) {
        for (auto& v : t.data) v = (rng.uniform01() * 2 - 1) * scale;
    };

    {  // linear + mse
        Tensor<double> x({5, 7}), w({7, 3}), b({3}), y({5, 3});
        for (auto* t : {&x, &w, &b, &y}) randomize(*t, 1.0);
        auto forward = [&]() {
            Graph<double> g;
            return g.value(g.mse_loss(linear(g, g.param(&x), g.param(&w), g.param(&b)), y)).data[0];
        };
        Graph<double> g;
        const int xi = g.param(&x), wi = g.param(&w), bi = g.param(&b);
        g.backward(g.mse_loss(linear(g, xi, wi, bi), y));
        Xoshiro256ss probes(401);
        const double err = finite_diff_check(forward, {&x, &w, &b},
                                             {&g.grad(xi), &g.grad(wi), &g.grad(bi)}, 20, 1e-4,
                                             probes);
        expect(err < 1e-3, "linear layer gradient error " + format_double(err));
    }
    {  // layer_norm, softmax, gelu, silu through one composite
        Tensor<double> x({4, 6}), y({4, 6});
        randomize(x, 2.0);
        randomize(y, 1.0);
        auto build = [&y](Graph<double>& g, int xi) {
            return g.mse_loss(g.gelu(g.silu(g.softmax(g.layer_norm(xi)))), y);
        };
        auto forward = [&]() {
            Graph<double> g;
            return g.value(build(g, g.param(&x))).data[0];
        };
        Graph<double> g;
        const int xi = g.param(&x);
        g.backward(build(g, xi));
        Xoshiro256ss probes(402);
        const double err = finite_diff_check(forward, {&x}, {&g.grad(xi)}, 24, 1e-5, probes);
        expect(err < 1e-3, "norm/activation gradient error " + format_double(err));
    }
    {  // attention
        Tensor<double> q({2, 3, 4}), k({2, 3, 4}), v({2, 3, 4}), y({3, 8});
        for (auto* t : {&q, &k, &v, &y}) randomize(*t, 1.0);
        auto build = [&y](Graph<double>& g, int qi, int ki, int vi) {
            return g.mse_loss(g.merge_heads(g.attention(qi, ki, vi)), y);
        };
        auto forward = [&]() {
            Graph<double> g;
            return g.value(build(g, g.param(&q), g.param(&k), g.param(&v))).data[0];
        };
        Graph<double> g;
        const int qi = g.param(&q), ki = g.param(&k), vi = g.param(&v);
        g.backward(build(g, qi, ki, vi));
        Xoshiro256ss probes(403);
        const double err = finite_diff_check(forward, {&q, &k, &v},
                                             {&g.grad(qi), &g.grad(ki), &g.grad(vi)}, 20, 1e-5,
                                             probes);
        expect(err < 1e-3, "attention gradient error " + format_double(err));
    }

    // --- whole desk model, grouped probes ---
    const ModelConfig cfg = ModelConfig::desk();
    auto params64 = init_params<double>(cfg, 404);
    Xoshiro256ss noise(405);
    for_each_trainable(params64, [&noise](const std::string&, Tensor<double>& t) {
        for (auto& v : t.data) v += noise.uniform01() * 0.04 - 0.02;
    });

    const PairSample pair = generate_pair(11, 406, 32);
    const Image<double> x0 = to_float<double>(pair.input);
    const Image<double> x1 = to_float<double>(pair.target);
    const double t_step = 0.45;
    const Tensor<double> x_tokens = patchify(interpolate(x0, x1, t_step), cfg.patch);
    const Tensor<double> v_tokens = patchify(velocity_target(x0, x1), cfg.patch);

    auto forward_f64 = [&]() {
        Graph<double> g;
        return g.value(g.mse_loss(dit_forward(g, params64, x_tokens, t_step), v_tokens)).data[0];
    };

    Graph<double> g64;
    BoundParams bound64;
    g64.backward(g64.mse_loss(dit_forward(g64, params64, x_tokens, t_step, &bound64), v_tokens));

    auto params32 = params_cast<float>(params64);
    Graph<float> g32;
    BoundParams bound32;
    g32.backward(g32.mse_loss(
        dit_forward(g32, params32, tensor_cast<float>(x_tokens), t_step, &bound32),
        tensor_cast<float>(v_tokens)));

    // group tensors by name prefix; every group gets >= 20 probes
    std::vector<std::string> names;
    for_each_trainable(params64,
                       [&names](const std::string& n, const Tensor<double>&) { names.push_back(n); });
    std::vector<Tensor<double>*> tensors = trainable_tensors(params64);

    std::map<std::string, std::vector<size_t>> groups;
    for (size_t i = 0; i < names.size(); ++i) {
        std::string key = names[i].substr(0, names[i].find('.'));
        if (key.rfind("final", 0) == 0) key = "final";
        groups[key].push_back(i);
    }

    for (const auto& [key, idx] : groups) {
        const int probes_per_tensor = static_cast<int>((20 + idx.size() - 1) / idx.size());
        std::vector<Tensor<double>*> group_params;
        std::vector<const Tensor<double>*> group_grads64;
        std::vector<Tensor<double>> grads32_as64;
        for (size_t i : idx) {
            group_params.push_back(tensors[i]);
            group_grads64.push_back(&g64.grad(bound64.trainable_ids[i]));
            grads32_as64.push_back(tensor_cast<double>(g32.grad(bound32.trainable_ids[i])));
        }
        std::vector<const Tensor<double>*> group_grads32;
        for (const auto& t : grads32_as64) group_grads32.push_back(&t);

        Xoshiro256ss probes_a(500 + std::hash<std::string>{}(key) % 1000);
        const double err64 = finite_diff_check(forward_f64, group_params, group_grads64,
                                               probes_per_tensor, 1e-5, probes_a);
        expect(err64 < 1e-3, "f64 model gradient error " + format_double(err64) + " in group " + key);

        Xoshiro256ss probes_b(500 + std::hash<std::string>{}(key) % 1000);
        const double err32 = finite_diff_check(forward_f64, group_params, group_grads32,
                                               probes_per_tensor, 1e-5, probes_b);
        expect(err32 < 1e-2, "f32 model gradient error " + format_double(err32) + " in group " + key);
    }
}

void criterion_5_flow_identities() {
    const PairSample pair = generate_pair(15, 501, 64);
    const Image<float> x0 = to_float<float>(pair.input);
    const Image<float> x1 = to_float<float>(pair.target);

    expect(interpolate(x0, x1, 0.0).data == x0.data, "interpolate(0) is not exactly x0");
    expect(interpolate(x0, x1, 1.0).data == x1.data, "interpolate(1) is not exactly x1");

    // zero-model loss equals mean squared velocity
    const ModelConfig cfg = ModelConfig::desk();
    const auto params = init_params<float>(cfg, 502);
    std::vector<PairSample> batch;
    for (int i = 0; i < 4; ++i) batch.push_back(generate_pair(11, 510 + i, 32));
    const std::vector<double> ts = {0.2, 0.4, 0.6, 0.8};
    const auto bg = compute_batch_gradients(batch, params, ts, 1);
    double expect_loss = 0;
    for (const auto& s : batch) {
        const Image<float> v = velocity_target(to_float<float>(s.input), to_float<float>(s.target));
        double acc = 0;
        for (float e : v.data) acc += double(e) * e;
        expect_loss += acc / double(v.data.size());
    }
    expect_loss /= batch.size();
    expect(std::abs(bg.loss - expect_loss) < 1e-5,
           "zero-model loss " + format_double(bg.loss) + " != mean v^2 " +
               format_double(expect_loss));

    // velocity support is exactly the red pixel set
    const Image<float> v = velocity_target(x0, x1);
    const RedMask red = red_mask(x1);
    for (int y = 0; y < v.height; ++y)
        for (int x = 0; x < v.width; ++x) {
            bool moving = false;
            for (int c = 0; c < 3; ++c) moving |= v.at(c, y, x) != 0.0f;
            expect(moving == bool(red.on[size_t(y) * v.width + x]),
                   "velocity support differs from the red mask");
        }

    // zero-velocity component fraction over the size mixture
    const int sizes[] = {11, 15, 21, 25, 31};
    double acc = 0;
    const int n = 500;
    for (int i = 0; i < n; ++i)
        acc += zero_velocity_fraction(generate_pair(sizes[i % 5], 520 + i, 64));
    const double frac = acc / n;
    expect(frac >= 0.85 && frac <= 0.97,
           "zero-velocity fraction " + format_double(frac) + " outside [0.85, 0.97]");
}

void criterion_6_sampler() {
    // constant field telescopes exactly
    {
        Image<double> x0(4, 4);
        for (auto& v : x0.data) v = 0.25;
        const auto field = [](const Image<double>& x, double) {
            Image<double> v(x.height, x.width);
            for (auto& e : v.data) e = 0.5;
            return v;
        };
        const Image<double> out = euler_sample_field(x0, field, 16);
        for (double v : out.data) expect(v == 0.75, "constant field did not telescope exactly");
    }
    // linear field against the closed form
    {
        Image<double> x0(2, 2);
        for (auto& v : x0.data) v = 1.0;
        Trajectory<double> traj;
        euler_sample_field(x0, [](const Image<double>& x, double) { return x; }, 100, &traj);
        const double pre_clip = traj.states[99].data[0] * (1.0 + 1.0 / 100.0);
        const double closed = std::pow(1.0 + 1.0 / 100.0, 100);
        expect(std::abs(pre_clip - closed) < 1e-9,
               "linear field end state " + format_double(pre_clip) + " vs closed form " +
                   format_double(closed));
        expect(traj.states.size() == 101, "trajectory does not have N+1 states");
        for (int i = 0; i <= 100; ++i)
            expect(traj.t[i] == double(i) / 100.0, "t grid is not exactly i/N");
    }
    // bit-identical repeated runs of the real model path
    {
        auto params = init_params<float>(ModelConfig::desk(), 600);
        Xoshiro256ss noise(601);
        for_each_trainable(params, [&noise](const std::string&, Tensor<float>& t) {
            for (auto& v : t.data) v += float(noise.uniform01() * 0.02 - 0.01);
        });
        const Image<float> x0 = to_float<float>(generate_pair(11, 602, 32).input);
        Trajectory<float> a, b;
        euler_sample(x0, params, 10, &a);
        euler_sample(x0, params, 10, &b);
        expect(a.states.size() == 11 && b.states.size() == 11, "unexpected trajectory length");
        for (size_t i = 0; i < a.states.size(); ++i)
            expect(a.states[i].data == b.states[i].data,
                   "repeated sampling is not bit-identical at state " + std::to_string(i));
    }
}

void criterion_7_desk_training() {
    const DeskRun& run = ensure_desk_run();
    std::vector<std::string> failures;
    auto check = [&failures](bool ok, const std::string& message) {
        if (!ok) failures.push_back(message);
    };

    // (a) epoch-mean loss falls at least 20x from the epoch-1 mean
    const double first = run.log.rows.front().loss;
    const double last = run.log.rows.back().loss;
    check(last * 20.0 <= first, "(a) loss fell only " + format_double(first / last) +
                                    "x (epoch 1 " + format_double(first) + ", final " +
                                    format_double(last) + ")");
    std::fprintf(stderr, "  (a) epoch-mean loss: %.6g -> %.6g (%.1fx)\n", first, last,
                 first / last);

    // smoothed (window 3) epoch losses non-increasing after epoch 3, <= 1 violation
    std::vector<double> smooth;
    for (size_t i = 2; i < run.log.rows.size(); ++i)
        smooth.push_back((run.log.rows[i - 2].loss + run.log.rows[i - 1].loss +
                          run.log.rows[i].loss) /
                         3.0);
    int violations = 0;
    for (size_t i = 1; i < smooth.size(); ++i)
        if (smooth[i] > smooth[i - 1]) ++violations;
    check(violations <= 1, "smoothed loss increased " + std::to_string(violations) + " times");

    // (b) held-out L2 improves at least 2x between the first and last checkpoint
    std::optional<double> first_l2, last_l2;
    for (const auto& row : run.log.rows)
        if (row.heldout_l2) {
            if (!first_l2) first_l2 = row.heldout_l2;
            last_l2 = row.heldout_l2;
        }
    if (!first_l2 || !last_l2) {
        check(false, "(b) missing held-out evaluations");
    } else {
        std::fprintf(stderr, "  (b) held-out L2: %.6g -> %.6g (%.2fx)\n", *first_l2, *last_l2,
                     *first_l2 / *last_l2);
        check(*last_l2 * 2.0 <= *first_l2,
              "(b) held-out L2 improved only " + format_double(*first_l2 / *last_l2) + "x");
    }

    // timestep sensitivity on the trained model
    {
        const Checkpoint ckpt = load_checkpoint(run.final_ckpt);
        const Image<float> x = to_float<float>(generate_pair(11, 700, 32).input);
        check(model_forward(ckpt.params, x, 0.1).data != model_forward(ckpt.params, x, 0.9).data,
              "trained model is timestep-insensitive");
    }

    // (c) single-pair overfit reaches IoU >= 0.9 with 10-step sampling
    {
        const PairSample pair = generate_pair(11, 701, 32);
        auto params = init_params<float>(ModelConfig::desk(), 702);
        AdamConfig<float> ac;
        ac.lr = 1e-4f;
        auto adam = AdamState<float>::init(trainable_tensors(params), ac);
        Xoshiro256ss rng(703);
        const std::vector<PairSample> batch = {pair};
        double early = 0, late = 0;
        const int steps = 2000;
        for (int s = 0; s < steps; ++s) {
            const double loss = train_step(batch, params, adam, rng);
            if (s < 50) early += loss;
            if (s >= steps - 50) late += loss;
        }
        check(late * 20.0 <= early, "(c) overfit loss fell only " + format_double(early / late) + "x");
        const Image<float> pred = euler_sample(to_float<float>(pair.input), params, 10);
        const double overfit_iou = iou(red_mask(pred), red_mask(to_float<float>(pair.target)));
        std::fprintf(stderr, "  (c) overfit loss %.1fx down, IoU %.3f\n", early / late,
                     overfit_iou);
        check(overfit_iou >= 0.9, "(c) overfit IoU " + format_double(overfit_iou) + " below 0.9");
    }

    if (!failures.empty()) {
        std::string all = failures[0];
        for (size_t i = 1; i < failures.size(); ++i) all += "; " + failures[i];
        throw CheckFailure{all};
    }
}

void criterion_8_analysis_pipeline() {
    // planted switch at t = 0.7 on a 50-step grid
    const int steps = 50;
    for (int i = 0; i < 50; ++i) {
        const MazeGrid grid = generate_maze(11, 800 + i);
        const SolutionPath path = solve_maze(grid);
        const Image<float> input = to_float<float>(render_maze(grid, nullptr, 32));
        const Image<float> target = to_float<float>(render_maze(grid, &path, 32));

        Trajectory<float> traj;
        for (int s = 0; s <= steps; ++s) {
            const double t = double(s) / steps;
            traj.t.push_back(t);
            traj.states.push_back(t >= 0.7 ? target : input);
        }
        const auto row = detect_transition(emergence_curve(traj, red_mask(target)));
        expect(row.onset && row.completion, "transition not found for planted switch");
        expect(std::abs(*row.onset - 0.7) <= 1.0 / steps + 1e-12,
               "onset " + format_double(*row.onset) + " not within one grid step of 0.7");
        expect(*row.width <= 2.0 / steps + 1e-12,
               "width " + format_double(*row.width) + " above two grid steps");
    }

    // simultaneity classification on 50 planted cases each
    int all_at_once_ok = 0, sequential_ok = 0;
    for (int i = 0; i < 50; ++i) {
        const MazeGrid grid = generate_maze(11, 850 + i);
        const SolutionPath path = solve_maze(grid);
        const ImageU8 input_u8 = render_maze(grid, nullptr, 32);
        const ImageU8 target_u8 = render_maze(grid, &path, 32);
        const Image<float> input = to_float<float>(input_u8);
        const Image<float> target = to_float<float>(target_u8);

        {  // all-at-once
            Trajectory<float> traj;
            for (int s = 0; s <= 20; ++s) {
                const double t = double(s) / 20;
                traj.t.push_back(t);
                traj.states.push_back(t >= 0.7 ? target : input);
            }
            all_at_once_ok += segment_onsets(traj, path, 11).simultaneous;
        }
        {  // sequential thirds at t = 0.3 / 0.5 / 0.7
            const std::vector<Cell> interior(path.cells.begin() + 1, path.cells.end() - 1);
            const size_t k = interior.size();
            const size_t base = k / 3, rem = k % 3;
            const size_t cut1 = base + (rem > 0), cut2 = cut1 + base + (rem > 1);
            auto partial = [&](size_t upto) {
                SolutionPath sub;
                sub.cells.push_back(path.cells.front());
                for (size_t j = 0; j < upto; ++j) sub.cells.push_back(interior[j]);
                sub.cells.push_back(path.cells.back());
                return to_float<float>(render_maze(grid, &sub, 32));
            };
            Trajectory<float> traj;
            for (int s = 0; s <= 20; ++s) {
                const double t = double(s) / 20;
                traj.t.push_back(t);
                if (t < 0.3)
                    traj.states.push_back(input);
                else if (t < 0.5)
                    traj.states.push_back(partial(cut1));
                else if (t < 0.7)
                    traj.states.push_back(partial(cut2));
                else
                    traj.states.push_back(target);
            }
            sequential_ok += !segment_onsets(traj, path, 11).simultaneous;
        }
    }
    expect(all_at_once_ok == 50, "only " + std::to_string(all_at_once_ok) +
                                     "/50 all-at-once cases classified simultaneous");
    expect(sequential_ok == 50, "only " + std::to_string(sequential_ok) +
                                    "/50 sequential cases classified non-simultaneous");
}

void criterion_9_step_sweep() {
    const DeskRun& run = ensure_desk_run();
    const Checkpoint ckpt = load_checkpoint(run.final_ckpt);

    std::vector<PairSample> samples;
    for (int i = 0; i < 20; ++i) samples.push_back(generate_pair(11, 900 + i, 32));
    const auto rows = steps_sweep(ckpt.params, samples, {5, 10, 20, 50});

    double iou_min = 1e9, iou_max = -1e9;
    for (const auto& r : rows) {
        iou_min = std::min(iou_min, r.mean_iou);
        iou_max = std::max(iou_max, r.mean_iou);
        std::fprintf(stderr, "  sweep N=%d iou=%.4f psnr=%.2f\n", r.steps, r.mean_iou,
                     r.mean_psnr);
    }
    for (size_t i = 1; i < rows.size(); ++i) {
        expect(rows[i].mean_psnr >= rows[i - 1].mean_psnr - 0.5,
               "PSNR decreased by more than 0.5 dB between N=" +
                   std::to_string(rows[i - 1].steps) + " and N=" + std::to_string(rows[i].steps));
        expect(rows[i].mean_iou >= rows[i - 1].mean_iou - 0.02,
               "IoU decreased by more than 0.02 between N=" + std::to_string(rows[i - 1].steps) +
                   " and N=" + std::to_string(rows[i].steps));
    }
    expect(iou_max - iou_min <= 0.05,
           "IoU varies by " + format_double(iou_max - iou_min) + " across the sweep");
}

void criterion_10_checkpoint_integrity() {
    const ModelConfig cfg = ModelConfig::desk();
    auto params = init_params<float>(cfg, 1000);
    Xoshiro256ss noise(1001);
    for_each_trainable(params, [&noise](const std::string&, Tensor<float>& t) {
        for (auto& v : t.data) v += float(noise.uniform01() * 0.05 - 0.025);
    });

    const fs::path path = work_dir() / "integrity.tckp";
    save_checkpoint(params, nullptr, {1, 0.5}, path.string());
    const Checkpoint back = load_checkpoint(path.string());

    const Image<float> x = to_float<float>(generate_pair(11, 1002, 32).input);
    const Image<float> before = model_forward(params, x, 0.3);
    const Image<float> after = model_forward(back.params, x, 0.3);
    expect(before.data == after.data, "forward pass differs after save/load");
}

struct Criterion {
    int number;
    const char* name;
    std::function<void()> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> criteria = {
        {1, "maze properties (1000 mazes, tree + BFS)", criterion_1_maze_properties},
        {2, "BFS equals exhaustive enumeration (S<=9, 100 seeds)", criterion_2_bfs_oracle},
        {3, "dataset round-trip and exactly-once epochs", criterion_3_dataset_roundtrip},
        {4, "gradient finite-difference checks", criterion_4_gradient_checks},
        {5, "flow identities and zero-velocity fraction", criterion_5_flow_identities},
        {6, "sampler determinism and stub fields", criterion_6_sampler},
        {7, "desk training smoke", criterion_7_desk_training},
        {8, "analysis pipeline on planted trajectories", criterion_8_analysis_pipeline},
        {9, "step sweep on the desk model", criterion_9_step_sweep},
        {10, "checkpoint integrity", criterion_10_checkpoint_integrity},
    };

    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    int failures = 0;
    for (const auto& c : criteria) {
        if (!selected.empty() && !selected.count(c.number)) continue;
        const auto start = std::chrono::steady_clock::now();
        std::string failure;
        try {
            c.run();
        } catch (const CheckFailure& f) {
            failure = f.message;
        } catch (const std::exception& e) {
            failure = std::string("exception: ") + e.what();
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (failure.empty()) {
            std::printf("[PASS] criterion %d: %s (%.1fs)\n", c.number, c.name, secs);
        } else {
            std::printf("[FAIL] criterion %d: %s (%.1fs) -- %s\n", c.number, c.name, secs,
                        failure.c_str());
            ++failures;
        }
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
