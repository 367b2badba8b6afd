#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "tacit/adam.hpp"
#include "tacit/analysis.hpp"
#include "tacit/checkpoint.hpp"
#include "tacit/dataset.hpp"
#include "tacit/dit.hpp"
#include "tacit/error.hpp"
#include "tacit/graph.hpp"
#include "tacit/sampler.hpp"

namespace tacit {

/// x_t = (1-t) x0 + t x1, elementwise.
template <typename T>
Image<T> interpolate(const Image<T>& x0, const Image<T>& x1, double t) {
    require(x0.height == x1.height && x0.width == x1.width, ErrorCategory::invalid_argument,
            "interpolate shape mismatch");
    require(t >= 0.0 && t <= 1.0, ErrorCategory::invalid_argument, "t must lie in [0,1]");
    Image<T> out(x0.height, x0.width);
    const T tt = static_cast<T>(t);
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = (T(1) - tt) * x0.data[i] + tt * x1.data[i];
    return out;
}

/// v = x1 - x0; zero wherever the pair agrees (walls, open non-path cells).
template <typename T>
Image<T> velocity_target(const Image<T>& x0, const Image<T>& x1) {
    require(x0.height == x1.height && x0.width == x1.width, ErrorCategory::invalid_argument,
            "velocity_target shape mismatch");
    Image<T> out(x0.height, x0.width);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = x1.data[i] - x0.data[i];
    return out;
}

/// Fraction of velocity components (pixel channels) that are exactly zero.
/// Only the solution path carries velocity, and red keeps the R channel of
/// white, so this is 1 - (2/3) * red pixel fraction for rendered pairs.
inline double zero_velocity_fraction(const PairSample& pair) {
    size_t zero = 0;
    for (size_t i = 0; i < pair.input.data.size(); ++i)
        zero += pair.input.data[i] == pair.target.data[i];
    return double(zero) / double(pair.input.data.size());
}

struct TrainConfig {
    ModelConfig model;
    std::string data_dir;
    std::string out_dir;
    double lr = 1e-4;
    int batch_size = 256;  // desk runs use 32
    int epochs = 100;
    int checkpoint_interval = 5;
    uint64_t seed = 0;
    int workers = 1;
    int heldout_count = 256;
    int heldout_size = 11;
    uint64_t heldout_seed_base = 0;  // 0 -> derived from seed
    int heldout_steps = 10;
    bool verbose = true;
};

inline uint64_t heldout_seed_base(const TrainConfig& cfg) {
    return cfg.heldout_seed_base ? cfg.heldout_seed_base : derive_seed(cfg.seed, 0x48454C44);
}

/// Held-out pairs come from a reserved seed stream, disjoint from any shard
/// written with ordinary sequential seeds.
inline std::vector<PairSample> make_heldout_set(const TrainConfig& cfg) {
    std::vector<PairSample> pairs;
    pairs.reserve(cfg.heldout_count);
    const uint64_t base = heldout_seed_base(cfg);
    for (int i = 0; i < cfg.heldout_count; ++i)
        pairs.push_back(generate_pair(cfg.heldout_size, base + i, cfg.model.resolution));
    return pairs;
}

template <typename T>
struct BatchGradients {
    double loss = 0;                // mean over the batch
    std::vector<double> ts;         // per-sample timesteps
    std::vector<Tensor<T>> grads;   // mean gradient per trainable tensor
    std::vector<double> group_grad_norms;  // per trainable tensor, for diagnostics
};

/// Forward/backward over a minibatch. Each sample runs on one worker with its
/// own tape; per-worker gradient sums are combined in fixed worker order, so
/// results are bit-reproducible for a fixed worker count (and per-sample
/// losses are always combined in sample order).
template <typename T>
BatchGradients<T> compute_batch_gradients(const std::vector<PairSample>& batch,
                                          const DitParams<T>& params,
                                          const std::vector<double>& ts, int workers) {
    require(!batch.empty() && ts.size() == batch.size(), ErrorCategory::invalid_argument,
            "batch and timestep counts differ");
    const ModelConfig& cfg = params.config;
    for (const auto& s : batch)
        require(s.input.height == cfg.resolution, ErrorCategory::invalid_argument,
                "sample resolution does not match model config");

    const std::vector<const Tensor<T>*> trainable = trainable_tensors(params);

    const int w_count = std::max(1, workers);
    std::vector<std::vector<Tensor<T>>> local(w_count);
    std::vector<double> losses(batch.size(), 0.0);

    auto run_worker = [&](int w) {
        auto& acc = local[w];
        acc.reserve(trainable.size());
        for (const Tensor<T>* t : trainable) acc.push_back(Tensor<T>(t->shape));
        Graph<T> g;
        for (size_t i = static_cast<size_t>(w); i < batch.size(); i += w_count) {
            g.reset();
            const PairSample& s = batch[i];
            const Image<T> x0 = to_float<T>(s.input);
            const Image<T> x1 = to_float<T>(s.target);
            const Image<T> x_t = interpolate(x0, x1, ts[i]);
            const Image<T> v = velocity_target(x0, x1);
            BoundParams bound;
            const int pred = dit_forward(g, params, patchify(x_t, cfg.patch), ts[i], &bound);
            const int loss = g.mse_loss(pred, patchify(v, cfg.patch));
            losses[i] = static_cast<double>(g.value(loss).data[0]);
            g.backward(loss);
            for (size_t j = 0; j < trainable.size(); ++j) {
                const Tensor<T>& gj = g.grad(bound.trainable_ids[j]);
                T* out = acc[j].data.data();
                for (size_t k = 0; k < gj.numel(); ++k) out[k] += gj.data[k];
            }
        }
    };

    std::vector<std::thread> threads;
    for (int w = 1; w < w_count; ++w) threads.emplace_back(run_worker, w);
    run_worker(0);
    for (auto& t : threads) t.join();

    BatchGradients<T> result;
    result.ts = ts;
    for (double l : losses) result.loss += l;
    result.loss /= double(batch.size());

    const T inv_b = T(1) / T(batch.size());
    result.grads.reserve(trainable.size());
    result.group_grad_norms.resize(trainable.size(), 0.0);
    for (size_t j = 0; j < trainable.size(); ++j) {
        Tensor<T> sum(trainable[j]->shape);
        for (int w = 0; w < w_count; ++w)
            for (size_t k = 0; k < sum.numel(); ++k) sum.data[k] += local[w][j].data[k];
        double norm = 0;
        for (size_t k = 0; k < sum.numel(); ++k) {
            sum.data[k] *= inv_b;
            norm += double(sum.data[k]) * double(sum.data[k]);
        }
        result.group_grad_norms[j] = std::sqrt(norm);
        result.grads.push_back(std::move(sum));
    }
    return result;
}

/// One optimization step: per-sample t ~ U(0,1) drawn from the given
/// generator (in sample order, on the calling thread), mean velocity-matching
/// MSE, one Adam update. Aborts on a non-finite loss.
template <typename T>
double train_step(const std::vector<PairSample>& batch, DitParams<T>& params,
                  AdamState<T>& adam, Xoshiro256ss& rng, int workers = 1,
                  uint64_t step_index = 0) {
    std::vector<double> ts(batch.size());
    for (auto& t : ts) t = rng.uniform01();
    const BatchGradients<T> bg = compute_batch_gradients(batch, params, ts, workers);
    if (!std::isfinite(bg.loss)) {
        std::string msg = "non-finite loss at step " + std::to_string(step_index) + "; t values:";
        for (double t : bg.ts) msg += " " + std::to_string(t);
        fail(ErrorCategory::numeric_error, msg);
    }
    std::vector<Tensor<T>*> ps = trainable_tensors(params);
    std::vector<const Tensor<T>*> gs;
    gs.reserve(bg.grads.size());
    for (const auto& g : bg.grads) gs.push_back(&g);
    adam_step(ps, gs, adam);
    return bg.loss;
}

/// Mean L2 (MSE) between 10-step Euler predictions and ground truth over a
/// held-out set.
template <typename T>
double heldout_l2(const DitParams<T>& params, const std::vector<PairSample>& heldout, int steps,
                  int workers = 1) {
    require(!heldout.empty(), ErrorCategory::invalid_argument, "empty held-out set");
    std::vector<double> per_sample(heldout.size(), 0.0);
    const int w_count = std::max(1, workers);
    auto run_worker = [&](int w) {
        for (size_t i = static_cast<size_t>(w); i < heldout.size(); i += w_count) {
            const Image<T> x0 = to_float<T>(heldout[i].input);
            const Image<T> x1 = to_float<T>(heldout[i].target);
            per_sample[i] = l2_distance(euler_sample(x0, params, steps), x1);
        }
    };
    std::vector<std::thread> threads;
    for (int w = 1; w < w_count; ++w) threads.emplace_back(run_worker, w);
    run_worker(0);
    for (auto& t : threads) t.join();
    double acc = 0;
    for (double v : per_sample) acc += v;
    return acc / double(heldout.size());
}

struct EpochRow {
    int epoch = 0;
    double loss = 0;
    std::optional<double> heldout_l2;
};

struct LossLog {
    std::vector<EpochRow> rows;
};

inline void write_loss_log(const LossLog& log, const std::string& path) {
    std::ofstream out(path);
    require(bool(out), ErrorCategory::io_error, "cannot write " + path);
    out << "epoch,loss,heldout_l2\n";
    char buf[96];
    for (const auto& r : log.rows) {
        // %.17g keeps doubles round-trip exact so resumed runs match
        if (r.heldout_l2)
            std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", r.epoch, r.loss, *r.heldout_l2);
        else
            std::snprintf(buf, sizeof(buf), "%d,%.17g,\n", r.epoch, r.loss);
        out << buf;
    }
}

inline LossLog read_loss_log(const std::string& path) {
    std::ifstream in(path);
    require(bool(in), ErrorCategory::io_error, "cannot open: " + path);
    LossLog log;
    std::string line;
    std::getline(in, line);  // header
    int last_epoch = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        EpochRow row;
        std::istringstream ss(line);
        std::string field;
        std::getline(ss, field, ',');
        row.epoch = std::stoi(field);
        std::getline(ss, field, ',');
        row.loss = std::stod(field);
        if (std::getline(ss, field, ',') && !field.empty()) row.heldout_l2 = std::stod(field);
        require(row.epoch > last_epoch, ErrorCategory::format_error,
                "loss log epochs not strictly increasing: " + path);
        last_epoch = row.epoch;
        log.rows.push_back(row);
    }
    return log;
}

inline std::string checkpoint_path(const std::string& out_dir, int epoch) {
    char name[48];
    std::snprintf(name, sizeof(name), "ckpt_epoch_%05d.tckp", epoch);
    return (std::filesystem::path(out_dir) / name).string();
}

/// Full training loop: epoch passes over shuffled shards, periodic
/// checkpoints with a held-out L2 evaluation at each, loss log CSV after
/// every epoch. Resumable from a saved checkpoint (training continues at the
/// following epoch; the timestep stream is keyed by epoch, so a resumed run
/// matches an uninterrupted one).
inline LossLog train(const TrainConfig& cfg, const std::string& resume_from = "") {
    cfg.model.validate();
    require(cfg.lr > 0, ErrorCategory::invalid_argument, "lr must be positive");
    require(cfg.batch_size >= 1, ErrorCategory::invalid_argument, "batch size must be >= 1");
    std::filesystem::create_directories(cfg.out_dir);

    DitParams<float> params;
    AdamState<float> adam;
    LossLog log;
    int start_epoch = 1;

    if (!resume_from.empty()) {
        Checkpoint ckpt = load_checkpoint(resume_from);
        expect_config(ckpt, cfg.model);
        require(ckpt.adam.has_value(), ErrorCategory::invalid_argument,
                "checkpoint has no optimizer state; cannot resume");
        params = std::move(ckpt.params);
        adam = std::move(*ckpt.adam);
        start_epoch = ckpt.meta.epoch + 1;
        const std::string log_path =
            (std::filesystem::path(cfg.out_dir) / "loss_log.csv").string();
        if (std::filesystem::exists(log_path)) {
            for (const auto& row : read_loss_log(log_path).rows)
                if (row.epoch <= ckpt.meta.epoch) log.rows.push_back(row);
        }
    } else {
        params = init_params<float>(cfg.model, cfg.seed);
        AdamConfig<float> ac;
        ac.lr = static_cast<float>(cfg.lr);
        adam = AdamState<float>::init(trainable_tensors(params), ac);
    }

    const std::vector<PairSample> heldout = make_heldout_set(cfg);
    const std::string log_path = (std::filesystem::path(cfg.out_dir) / "loss_log.csv").string();

    for (int epoch = start_epoch; epoch <= cfg.epochs; ++epoch) {
        Xoshiro256ss t_rng(derive_seed(cfg.seed, static_cast<uint64_t>(epoch), 0x54494D45));
        EpochStream stream = iter_epoch(cfg.data_dir, cfg.batch_size,
                                        static_cast<uint64_t>(epoch), cfg.seed);
        double loss_sum = 0;
        size_t sample_count = 0;
        uint64_t step = 0;
        while (auto batch = stream.next()) {
            const double loss =
                train_step(*batch, params, adam, t_rng, cfg.workers, adam.step);
            loss_sum += loss * double(batch->size());
            sample_count += batch->size();
            ++step;
        }
        require(sample_count > 0, ErrorCategory::invalid_argument,
                "no samples found in " + cfg.data_dir);

        EpochRow row;
        row.epoch = epoch;
        row.loss = loss_sum / double(sample_count);

        if (epoch % cfg.checkpoint_interval == 0 || epoch == cfg.epochs) {
            row.heldout_l2 = heldout_l2(params, heldout, cfg.heldout_steps, cfg.workers);
            save_checkpoint(params, &adam, {epoch, row.loss},
                            checkpoint_path(cfg.out_dir, epoch));
        }
        log.rows.push_back(row);
        write_loss_log(log, log_path);
        if (cfg.verbose) {
            if (row.heldout_l2)
                std::fprintf(stderr, "epoch %d: loss %.6g heldout_l2 %.6g\n", epoch, row.loss,
                             *row.heldout_l2);
            else
                std::fprintf(stderr, "epoch %d: loss %.6g\n", epoch, row.loss);
        }
    }
    return log;
}

}  // namespace tacit
