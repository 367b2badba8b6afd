#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tacit/analysis.hpp"
#include "tacit/checkpoint.hpp"
#include "tacit/dataset.hpp"
#include "tacit/flow.hpp"
#include "tacit/maze.hpp"
#include "tacit/sampler.hpp"

namespace tacit::cli {

namespace detail {

inline uint64_t env_seed_fallback() {
    if (const char* env = std::getenv("TACIT_SEED")) {
        try {
            return std::stoull(env);
        } catch (...) {
            fail(ErrorCategory::invalid_argument, "TACIT_SEED is not a valid integer");
        }
    }
    return 0;
}

/// Every command records its resolved configuration next to its outputs so a
/// run can be reproduced from the artifact alone.
inline void write_run_json(const std::string& dir, const nlohmann::json& doc) {
    std::filesystem::create_directories(dir);
    std::ofstream out(std::filesystem::path(dir) / "run.json");
    require(bool(out), ErrorCategory::io_error, "cannot write run.json in " + dir);
    out << doc.dump(2) << "\n";
}

/// Deterministic per-index seed for analysis/eval samples; a stream separate
/// from both shard seeds (seed + i) and the held-out stream.
inline uint64_t analysis_seed(uint64_t base, int index) {
    return derive_seed(base, static_cast<uint64_t>(index), 0x414E4C5A);
}

struct ModelFlags {
    int resolution = 64, patch = 8, hidden = 384, blocks = 8, heads = 6, head_dim = 64,
        time_freq = 256;

    void add_options(CLI::App* cmd) {
        cmd->add_option("--resolution", resolution, "Model input resolution");
        cmd->add_option("--patch", patch, "Patch size");
        cmd->add_option("--hidden", hidden, "Hidden dimension");
        cmd->add_option("--blocks", blocks, "Transformer block count");
        cmd->add_option("--heads", heads, "Attention head count");
        cmd->add_option("--head-dim", head_dim, "Attention head dimension");
        cmd->add_option("--time-freq", time_freq, "Timestep sinusoid feature dim");
    }

    /// Preset first, explicit flags override; mlp is always 4x hidden.
    ModelConfig resolve(const CLI::App* cmd, const std::string& preset) const {
        ModelConfig cfg = preset == "desk" ? ModelConfig::desk() : ModelConfig::paper();
        if (cmd->count("--resolution")) cfg.resolution = resolution;
        if (cmd->count("--patch")) cfg.patch = patch;
        if (cmd->count("--hidden")) cfg.hidden = hidden;
        if (cmd->count("--blocks")) cfg.blocks = blocks;
        if (cmd->count("--heads")) cfg.heads = heads;
        if (cmd->count("--head-dim")) cfg.head_dim = head_dim;
        if (cmd->count("--time-freq")) cfg.time_freq = time_freq;
        cfg.mlp = 4 * cfg.hidden;
        cfg.validate();
        return cfg;
    }

    static nlohmann::json to_json(const ModelConfig& cfg) {
        return {{"resolution", cfg.resolution}, {"patch", cfg.patch},   {"hidden", cfg.hidden},
                {"blocks", cfg.blocks},         {"heads", cfg.heads},   {"head_dim", cfg.head_dim},
                {"mlp", cfg.mlp},               {"time_freq", cfg.time_freq}};
    }
};

/// Samples for analyze/eval/plot: sizes round-robin, seeds from the analysis
/// stream. Returns pairs plus the (size, seed) identities for regeneration.
inline std::vector<PairSample> make_eval_samples(int n, const std::vector<int>& sizes,
                                                 uint64_t seed, int resolution) {
    require(n >= 1, ErrorCategory::invalid_argument, "sample count must be >= 1");
    require(!sizes.empty(), ErrorCategory::invalid_argument, "need at least one maze size");
    std::vector<PairSample> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i)
        out.push_back(generate_pair(sizes[i % sizes.size()], analysis_seed(seed, i), resolution));
    return out;
}

}  // namespace detail

/// Parses and runs one invocation; argv excludes the program name.
/// Returns 0 on success, 2 on usage errors, 1 on runtime failures (with a
/// one-line machine-readable `error:<category>: ...` on stderr).
inline int dispatch(const std::vector<std::string>& argv) {
    CLI::App app{"maze flow-matching toolkit"};
    app.require_subcommand(1);

    // ---- generate ----
    auto* gen = app.add_subcommand("generate", "Generate maze pairs into dataset shards");
    int gen_count = 0;
    std::vector<int> gen_sizes = {11, 15, 21, 25, 31};
    uint64_t gen_seed = 0;
    std::string gen_out;
    int gen_resolution = 64;
    int gen_shard_size = 10000;
    gen->add_option("--count", gen_count, "Number of pairs")->required();
    gen->add_option("--sizes", gen_sizes, "Maze sizes, assigned round-robin")->delimiter(',');
    gen->add_option("--seed", gen_seed, "Base seed; pair i uses seed+i");
    gen->add_option("--out", gen_out, "Output shard directory")->required();
    gen->add_option("--resolution", gen_resolution, "Image resolution");
    gen->add_option("--shard-size", gen_shard_size, "Samples per shard file");

    // ---- train ----
    auto* tr = app.add_subcommand("train", "Train the velocity model");
    std::string tr_data, tr_out, tr_preset = "paper", tr_resume;
    detail::ModelFlags tr_model;
    double tr_lr = 1e-4;
    int tr_batch = 0, tr_epochs = 100, tr_interval = 5, tr_workers = 1;
    uint64_t tr_seed = 0;
    int tr_heldout_count = 256, tr_heldout_size = 11, tr_heldout_steps = 10;
    tr->add_option("--data", tr_data, "Shard directory")->required();
    tr->add_option("--out", tr_out, "Output directory (checkpoints, loss log)")->required();
    tr->add_option("--preset", tr_preset, "Config preset: paper or desk")
        ->check(CLI::IsMember({"paper", "desk"}));
    tr_model.add_options(tr);
    tr->add_option("--lr", tr_lr, "Learning rate");
    tr->add_option("--batch", tr_batch, "Batch size (preset default: paper 256, desk 32)");
    tr->add_option("--epochs", tr_epochs, "Total epochs");
    tr->add_option("--checkpoint-interval", tr_interval, "Checkpoint every K epochs");
    tr->add_option("--workers", tr_workers, "Worker threads (batch-level parallelism)");
    tr->add_option("--seed", tr_seed, "Training seed");
    tr->add_option("--resume", tr_resume, "Checkpoint to resume from");
    tr->add_option("--heldout-count", tr_heldout_count, "Held-out pair count");
    tr->add_option("--heldout-size", tr_heldout_size, "Held-out maze size");
    tr->add_option("--heldout-steps", tr_heldout_steps, "Euler steps for held-out eval");

    // ---- sample ----
    auto* sa = app.add_subcommand("sample", "Run Euler sampling on an input image");
    std::string sa_ckpt, sa_input, sa_record, sa_out;
    int sa_steps = 10;
    bool sa_clip_each = false;
    sa->add_option("--ckpt", sa_ckpt, "Checkpoint path")->required();
    sa->add_option("--input", sa_input, "Input PPM image")->required();
    sa->add_option("--steps", sa_steps, "Euler step count");
    sa->add_option("--record", sa_record, "Directory for the recorded trajectory");
    sa->add_option("--out", sa_out, "Prediction PPM path (default prediction.ppm)");
    sa->add_flag("--clip-each-step", sa_clip_each, "Clip to [0,1] after every step (ablation)");

    // ---- analyze emergence|segments|sweep ----
    auto* an = app.add_subcommand("analyze", "Trajectory analysis");
    an->require_subcommand(1);
    std::string an_ckpt, an_out = ".";
    int an_n = 20, an_steps = 50;
    std::vector<int> an_sizes = {11};
    uint64_t an_seed = 0;
    std::vector<int> an_steps_list = {5, 10, 20, 50, 100};
    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--ckpt", an_ckpt, "Checkpoint path")->required();
        cmd->add_option("--n", an_n, "Sample count");
        cmd->add_option("--sizes", an_sizes, "Maze sizes, round-robin")->delimiter(',');
        cmd->add_option("--seed", an_seed, "Base seed for analysis samples");
        cmd->add_option("--out", an_out, "Output directory");
    };
    auto* an_em = an->add_subcommand("emergence", "Recall curves and phase-transition report");
    add_common(an_em);
    an_em->add_option("--steps", an_steps, "Euler steps per trajectory");
    auto* an_seg = an->add_subcommand("segments", "Start/middle/end simultaneity test");
    add_common(an_seg);
    an_seg->add_option("--steps", an_steps, "Euler steps per trajectory");
    auto* an_sw = an->add_subcommand("sweep", "IoU/PSNR across Euler step counts");
    add_common(an_sw);
    an_sw->add_option("--steps-list", an_steps_list, "Step counts to sweep")->delimiter(',');

    // ---- eval l2 ----
    auto* ev = app.add_subcommand("eval", "Model evaluation");
    ev->require_subcommand(1);
    auto* ev_l2 = ev->add_subcommand("l2", "Mean L2 distance to ground truth");
    std::string ev_ckpt, ev_out;
    int ev_n = 256, ev_steps = 10;
    std::vector<int> ev_sizes = {11};
    uint64_t ev_seed = 0;
    ev_l2->add_option("--ckpt", ev_ckpt, "Checkpoint path")->required();
    ev_l2->add_option("--n", ev_n, "Sample count");
    ev_l2->add_option("--steps", ev_steps, "Euler step count");
    ev_l2->add_option("--sizes", ev_sizes, "Maze sizes, round-robin")->delimiter(',');
    ev_l2->add_option("--seed", ev_seed, "Base seed for eval samples");
    ev_l2->add_option("--out", ev_out, "Optional output directory for l2.csv");

    // ---- plot grid ----
    auto* pl = app.add_subcommand("plot", "Raw PPM figures");
    pl->require_subcommand(1);
    auto* pl_grid = pl->add_subcommand("grid", "Trajectory summary grid (rows=samples)");
    std::string pg_ckpt, pg_out = "grid.ppm";
    int pg_n = 4, pg_steps = 10;
    std::vector<int> pg_sizes = {11};
    uint64_t pg_seed = 0;
    pl_grid->add_option("--ckpt", pg_ckpt, "Checkpoint path")->required();
    pl_grid->add_option("--n", pg_n, "Sample count (grid rows)");
    pl_grid->add_option("--steps", pg_steps, "Euler steps (grid has steps+1 columns)");
    pl_grid->add_option("--sizes", pg_sizes, "Maze sizes, round-robin")->delimiter(',');
    pl_grid->add_option("--seed", pg_seed, "Base seed for samples");
    pl_grid->add_option("--out", pg_out, "Output PPM path");

    // parse
    std::vector<char*> raw;
    std::string prog = "tacit";
    raw.push_back(prog.data());
    std::vector<std::string> args = argv;
    for (auto& a : args) raw.push_back(a.data());
    try {
        app.parse(static_cast<int>(raw.size()), raw.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);  // prints help, returns 0
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        std::fprintf(stderr, "%s", app.help().c_str());
        return 2;
    }

    try {
        if (gen->parsed()) {
            if (!gen->count("--seed")) gen_seed = detail::env_seed_fallback();
            require(gen_count >= 1, ErrorCategory::invalid_argument, "--count must be >= 1");
            require(gen_shard_size >= 1, ErrorCategory::invalid_argument,
                    "--shard-size must be >= 1");
            std::filesystem::create_directories(gen_out);
            std::vector<PairSample> shard;
            shard.reserve(std::min(gen_count, gen_shard_size));
            int shard_index = 0;
            for (int i = 0; i < gen_count; ++i) {
                shard.push_back(generate_pair(gen_sizes[i % gen_sizes.size()], gen_seed + i,
                                              gen_resolution));
                if (static_cast<int>(shard.size()) == gen_shard_size || i + 1 == gen_count) {
                    write_batch(shard, (std::filesystem::path(gen_out) /
                                        shard_filename(shard_index++))
                                           .string());
                    shard.clear();
                }
            }
            detail::write_run_json(
                gen_out, {{"command", "generate"},
                          {"count", gen_count},
                          {"sizes", gen_sizes},
                          {"seed", gen_seed},
                          {"resolution", gen_resolution},
                          {"shard_size", gen_shard_size},
                          {"out", gen_out}});
            return 0;
        }

        if (tr->parsed()) {
            if (!tr->count("--seed")) tr_seed = detail::env_seed_fallback();
            TrainConfig cfg;
            cfg.model = tr_model.resolve(tr, tr_preset);
            cfg.data_dir = tr_data;
            cfg.out_dir = tr_out;
            cfg.lr = tr_lr;
            cfg.batch_size = tr->count("--batch") ? tr_batch : (tr_preset == "desk" ? 32 : 256);
            cfg.epochs = tr_epochs;
            cfg.checkpoint_interval = tr_interval;
            cfg.seed = tr_seed;
            cfg.workers = tr_workers;
            cfg.heldout_count = tr_heldout_count;
            cfg.heldout_size = tr_heldout_size;
            cfg.heldout_steps = tr_heldout_steps;
            detail::write_run_json(
                tr_out, {{"command", "train"},
                         {"data", tr_data},
                         {"out", tr_out},
                         {"preset", tr_preset},
                         {"model", detail::ModelFlags::to_json(cfg.model)},
                         {"lr", cfg.lr},
                         {"batch", cfg.batch_size},
                         {"epochs", cfg.epochs},
                         {"checkpoint_interval", cfg.checkpoint_interval},
                         {"workers", cfg.workers},
                         {"seed", cfg.seed},
                         {"resume", tr_resume},
                         {"heldout_count", cfg.heldout_count},
                         {"heldout_size", cfg.heldout_size},
                         {"heldout_steps", cfg.heldout_steps}});
            train(cfg, tr_resume);
            return 0;
        }

        if (sa->parsed()) {
            const Checkpoint ckpt = load_checkpoint(sa_ckpt);
            const ImageU8 input = read_ppm(sa_input);
            require(input.height == ckpt.params.config.resolution &&
                        input.width == ckpt.params.config.resolution,
                    ErrorCategory::config_mismatch,
                    "input image resolution does not match the checkpoint");
            Trajectory<float> traj;
            const Image<float> pred =
                euler_sample(to_float<float>(input), ckpt.params, sa_steps,
                             sa_record.empty() ? nullptr : &traj, sa_clip_each);
            std::string out_path = sa_out;
            if (out_path.empty())
                out_path = sa_record.empty()
                               ? "prediction.ppm"
                               : (std::filesystem::path(sa_record) / "prediction.ppm").string();
            if (!sa_record.empty()) {
                export_trajectory(traj, sa_record);
                detail::write_run_json(sa_record, {{"command", "sample"},
                                                   {"ckpt", sa_ckpt},
                                                   {"input", sa_input},
                                                   {"steps", sa_steps},
                                                   {"record", sa_record},
                                                   {"out", out_path},
                                                   {"clip_each_step", sa_clip_each}});
            }
            std::filesystem::path parent = std::filesystem::path(out_path).parent_path();
            if (!parent.empty()) std::filesystem::create_directories(parent);
            write_ppm(to_u8(pred), out_path);
            return 0;
        }

        if (an_em->parsed() || an_seg->parsed() || an_sw->parsed()) {
            if (!an_em->count("--seed") && !an_seg->count("--seed") && !an_sw->count("--seed"))
                an_seed = detail::env_seed_fallback();
            const Checkpoint ckpt = load_checkpoint(an_ckpt);
            const int res = ckpt.params.config.resolution;
            std::filesystem::create_directories(an_out);
            const auto out_path = [&an_out](const char* name) {
                return (std::filesystem::path(an_out) / name).string();
            };

            if (an_em->parsed()) {
                std::vector<std::vector<std::pair<double, double>>> curves;
                std::vector<TransitionRow> rows;
                for (int i = 0; i < an_n; ++i) {
                    const int size = an_sizes[i % an_sizes.size()];
                    const PairSample pair =
                        generate_pair(size, detail::analysis_seed(an_seed, i), res);
                    Trajectory<float> traj;
                    euler_sample(to_float<float>(pair.input), ckpt.params, an_steps, &traj);
                    const RedMask gt = red_mask(to_float<float>(pair.target));
                    curves.push_back(emergence_curve(traj, gt));
                    TransitionRow row = detect_transition(curves.back());
                    row.final_iou = iou(red_mask(clip01(traj.states.back())), gt);
                    rows.push_back(row);
                }
                write_emergence_csv(curves, out_path("emergence.csv"));
                write_transition_csv(rows, out_path("transition.csv"));
                write_transition_summary_csv(rows, out_path("transition_summary.csv"));
                detail::write_run_json(an_out, {{"command", "analyze emergence"},
                                                {"ckpt", an_ckpt},
                                                {"n", an_n},
                                                {"steps", an_steps},
                                                {"sizes", an_sizes},
                                                {"seed", an_seed},
                                                {"out", an_out}});
                return 0;
            }

            if (an_seg->parsed()) {
                std::vector<SegmentRow> rows;
                int simultaneous = 0;
                for (int i = 0; i < an_n; ++i) {
                    const int size = an_sizes[i % an_sizes.size()];
                    const uint64_t seed = detail::analysis_seed(an_seed, i);
                    const MazeGrid grid = generate_maze(size, seed);
                    const SolutionPath path = solve_maze(grid);
                    const ImageU8 input = render_maze(grid, nullptr, res);
                    Trajectory<float> traj;
                    euler_sample(to_float<float>(input), ckpt.params, an_steps, &traj);
                    rows.push_back(segment_onsets(traj, path, size));
                    simultaneous += rows.back().simultaneous;
                }
                write_segments_csv(rows, out_path("segments.csv"));
                std::printf("simultaneous_fraction=%.6f\n", double(simultaneous) / double(an_n));
                detail::write_run_json(an_out, {{"command", "analyze segments"},
                                                {"ckpt", an_ckpt},
                                                {"n", an_n},
                                                {"steps", an_steps},
                                                {"sizes", an_sizes},
                                                {"seed", an_seed},
                                                {"out", an_out}});
                return 0;
            }

            const auto samples = detail::make_eval_samples(an_n, an_sizes, an_seed, res);
            const auto rows = steps_sweep(ckpt.params, samples, an_steps_list);
            write_sweep_csv(rows, out_path("sweep.csv"));
            detail::write_run_json(an_out, {{"command", "analyze sweep"},
                                            {"ckpt", an_ckpt},
                                            {"n", an_n},
                                            {"steps_list", an_steps_list},
                                            {"sizes", an_sizes},
                                            {"seed", an_seed},
                                            {"out", an_out}});
            return 0;
        }

        if (ev_l2->parsed()) {
            if (!ev_l2->count("--seed")) ev_seed = detail::env_seed_fallback();
            const Checkpoint ckpt = load_checkpoint(ev_ckpt);
            const auto samples =
                detail::make_eval_samples(ev_n, ev_sizes, ev_seed, ckpt.params.config.resolution);
            double acc = 0;
            for (const auto& s : samples)
                acc += l2_distance(euler_sample(to_float<float>(s.input), ckpt.params, ev_steps),
                                   to_float<float>(s.target));
            const double mean = acc / double(samples.size());
            std::printf("l2=%.9g\n", mean);
            if (!ev_out.empty()) {
                std::filesystem::create_directories(ev_out);
                std::ofstream csv(std::filesystem::path(ev_out) / "l2.csv");
                require(bool(csv), ErrorCategory::io_error, "cannot write l2.csv in " + ev_out);
                char buf[64];
                std::snprintf(buf, sizeof(buf), "n,steps,l2\n%d,%d,%.9g\n", ev_n, ev_steps, mean);
                csv << buf;
                detail::write_run_json(ev_out, {{"command", "eval l2"},
                                                {"ckpt", ev_ckpt},
                                                {"n", ev_n},
                                                {"steps", ev_steps},
                                                {"sizes", ev_sizes},
                                                {"seed", ev_seed},
                                                {"out", ev_out}});
            }
            return 0;
        }

        if (pl_grid->parsed()) {
            if (!pl_grid->count("--seed")) pg_seed = detail::env_seed_fallback();
            const Checkpoint ckpt = load_checkpoint(pg_ckpt);
            const int res = ckpt.params.config.resolution;
            std::vector<ImageU8> tiles;
            for (int i = 0; i < pg_n; ++i) {
                const PairSample pair = generate_pair(pg_sizes[i % pg_sizes.size()],
                                                      detail::analysis_seed(pg_seed, i), res);
                Trajectory<float> traj;
                euler_sample(to_float<float>(pair.input), ckpt.params, pg_steps, &traj);
                for (const auto& state : traj.states) tiles.push_back(to_u8(state));
            }
            const ImageU8 grid = make_grid(tiles, pg_steps + 1);
            std::filesystem::path parent = std::filesystem::path(pg_out).parent_path();
            if (parent.empty()) parent = ".";
            std::filesystem::create_directories(parent);
            write_ppm(grid, pg_out);
            detail::write_run_json(parent.string(), {{"command", "plot grid"},
                                                     {"ckpt", pg_ckpt},
                                                     {"n", pg_n},
                                                     {"steps", pg_steps},
                                                     {"sizes", pg_sizes},
                                                     {"seed", pg_seed},
                                                     {"out", pg_out}});
            return 0;
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error:%s: %s\n", to_string(e.category()), e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error:internal: %s\n", e.what());
        return 1;
    }
    return 2;  // unreachable with require_subcommand, kept as a guard
}

}  // namespace tacit::cli
