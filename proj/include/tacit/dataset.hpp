#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <optional>
#include <string>
#include <vector>

#include "tacit/error.hpp"
#include "tacit/maze.hpp"
#include "tacit/rng.hpp"

namespace tacit {

// Shard format ("TACD", version 1), all integers little-endian:
//   magic  4 bytes "TACD"
//   u16    version
//   u32    sample count
//   u16    image resolution (0 when the file is empty)
//   per sample: u16 size, u64 seed, res*res*3 input bytes, res*res*3 target bytes
// Image bytes are interleaved RGB rows (the ImageU8 layout).
inline constexpr char kBatchMagic[4] = {'T', 'A', 'C', 'D'};
inline constexpr uint16_t kBatchVersion = 1;

namespace detail {

inline void put_u16(std::string& out, uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>(v >> 8));
}
inline void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class ByteReader {
public:
    ByteReader(const uint8_t* data, size_t size, std::string name)
        : data_(data), size_(size), name_(std::move(name)) {}

    uint8_t u8_value() { return u8(); }
    uint16_t u16() { return static_cast<uint16_t>(u8() | (uint16_t(u8()) << 8)); }
    uint32_t u32() {
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(u8()) << (8 * i);
        return v;
    }
    uint64_t u64() {
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(u8()) << (8 * i);
        return v;
    }
    void bytes(uint8_t* dst, size_t n) {
        need(n);
        std::copy(data_ + pos_, data_ + pos_ + n, dst);
        pos_ += n;
    }
    size_t remaining() const { return size_ - pos_; }

private:
    uint8_t u8() {
        need(1);
        return data_[pos_++];
    }
    void need(size_t n) {
        require(pos_ + n <= size_, ErrorCategory::format_error, "truncated file: " + name_);
    }

    const uint8_t* data_;
    size_t size_;
    size_t pos_ = 0;
    std::string name_;
};

inline std::vector<uint8_t> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    require(bool(in), ErrorCategory::io_error, "cannot open: " + path);
    const std::streamsize n = in.tellg();
    in.seekg(0);
    std::vector<uint8_t> buf(static_cast<size_t>(n));
    in.read(reinterpret_cast<char*>(buf.data()), n);
    require(in.gcount() == n, ErrorCategory::io_error, "read failed: " + path);
    return buf;
}

}  // namespace detail

inline void write_batch(const std::vector<PairSample>& samples, const std::string& path) {
    uint16_t resolution = 0;
    for (const auto& s : samples) {
        require(s.input.height == s.input.width && s.target.height == s.input.height &&
                    s.target.width == s.input.width,
                ErrorCategory::invalid_argument, "sample images must be square and same size");
        const uint16_t res = static_cast<uint16_t>(s.input.height);
        require(resolution == 0 || res == resolution, ErrorCategory::invalid_argument,
                "mixed resolutions in batch");
        resolution = res;
    }

    std::string blob;
    blob.reserve(12 + samples.size() * (10 + 2 * size_t(resolution) * resolution * 3));
    blob.append(kBatchMagic, 4);
    detail::put_u16(blob, kBatchVersion);
    detail::put_u32(blob, static_cast<uint32_t>(samples.size()));
    detail::put_u16(blob, resolution);
    for (const auto& s : samples) {
        detail::put_u16(blob, static_cast<uint16_t>(s.size));
        detail::put_u64(blob, s.seed);
        blob.append(reinterpret_cast<const char*>(s.input.data.data()), s.input.data.size());
        blob.append(reinterpret_cast<const char*>(s.target.data.data()), s.target.data.size());
    }

    std::ofstream out(path, std::ios::binary);
    require(bool(out), ErrorCategory::io_error, "cannot open for writing: " + path);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    require(bool(out), ErrorCategory::io_error, "write failed: " + path);
}

inline std::vector<PairSample> read_batch(const std::string& path) {
    const std::vector<uint8_t> buf = detail::slurp(path);
    detail::ByteReader r(buf.data(), buf.size(), path);

    uint8_t magic[4];
    r.bytes(magic, 4);
    require(std::equal(magic, magic + 4, kBatchMagic), ErrorCategory::format_error,
            "bad magic: " + path);
    const uint16_t version = r.u16();
    require(version == kBatchVersion, ErrorCategory::format_error,
            "version mismatch (" + std::to_string(version) + "): " + path);
    const uint32_t count = r.u32();
    const uint16_t resolution = r.u16();

    std::vector<PairSample> samples;
    samples.reserve(count);
    const size_t pixels = size_t(resolution) * resolution * 3;
    for (uint32_t i = 0; i < count; ++i) {
        PairSample s;
        s.size = r.u16();
        s.seed = r.u64();
        s.input = ImageU8(resolution, resolution);
        s.target = ImageU8(resolution, resolution);
        r.bytes(s.input.data.data(), pixels);
        r.bytes(s.target.data.data(), pixels);
        samples.push_back(std::move(s));
    }
    require(r.remaining() == 0, ErrorCategory::format_error, "trailing bytes: " + path);
    return samples;
}

inline std::string shard_filename(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "batch_%05d.tacd", index);
    return buf;
}

inline std::vector<std::string> list_shards(const std::string& dir) {
    std::vector<std::string> out;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".tacd")
            out.push_back(e.path().string());
    }
    std::sort(out.begin(), out.end());
    require(!out.empty(), ErrorCategory::invalid_argument, "no .tacd shards in " + dir);
    return out;
}

/// Shard order and per-shard sample order for one epoch; a pure function of
/// (base_seed, epoch_index).
struct EpochPlan {
    std::vector<uint32_t> file_order;         // permutation of shard indices
    std::vector<uint64_t> sample_perm_seeds;  // keyed by original shard index
};

inline EpochPlan make_epoch_plan(size_t n_files, uint64_t base_seed, uint64_t epoch_index) {
    EpochPlan plan;
    Xoshiro256ss rng(derive_seed(base_seed, epoch_index, 0x46494C45 /* file order */));
    plan.file_order = random_permutation(n_files, rng);
    plan.sample_perm_seeds.resize(n_files);
    for (size_t i = 0; i < n_files; ++i)
        plan.sample_perm_seeds[i] = derive_seed(base_seed, epoch_index, 0x53414D50 + i);
    return plan;
}

/// Streams one epoch of shuffled minibatches. A single shard is resident at a
/// time plus at most one being prefetched on a background worker, so memory
/// stays bounded by two shards regardless of dataset size. Single consumer.
class EpochStream {
public:
    EpochStream(const std::string& shard_dir, int batch_size, uint64_t epoch_index,
                uint64_t base_seed)
        : shards_(list_shards(shard_dir)), batch_size_(batch_size) {
        require(batch_size >= 1, ErrorCategory::invalid_argument, "batch size must be >= 1");
        plan_ = make_epoch_plan(shards_.size(), base_seed, epoch_index);
        current_ = load_shard(0);
        if (shards_.size() > 1) prefetch(1);
    }

    /// Next minibatch, or nullopt at end of epoch. The final batch may be short.
    std::optional<std::vector<PairSample>> next() {
        std::vector<PairSample> batch;
        batch.reserve(batch_size_);
        while (static_cast<int>(batch.size()) < batch_size_) {
            if (pos_ == current_.size()) {
                if (!advance_shard()) break;
            }
            batch.push_back(std::move(current_[pos_++]));
        }
        if (batch.empty()) return std::nullopt;
        return batch;
    }

    /// Shards currently held in memory (for tests of the residency bound).
    int resident_shards() const { return 1 + (prefetch_.valid() ? 1 : 0); }

private:
    std::vector<PairSample> load_shard(size_t order_pos) {
        const uint32_t file_idx = plan_.file_order[order_pos];
        std::vector<PairSample> samples;
        try {
            samples = read_batch(shards_[file_idx]);
        } catch (const Error& e) {
            throw Error(e.category(),
                        std::string(e.what()) + " [shard " + shards_[file_idx] + "]");
        }
        Xoshiro256ss rng(plan_.sample_perm_seeds[file_idx]);
        shuffle(samples, rng);
        return samples;
    }

    void prefetch(size_t order_pos) {
        prefetch_ = std::async(std::launch::async, [this, order_pos] { return load_shard(order_pos); });
    }

    bool advance_shard() {
        if (++shard_pos_ >= shards_.size()) return false;
        current_ = prefetch_.get();
        pos_ = 0;
        if (shard_pos_ + 1 < shards_.size()) prefetch(shard_pos_ + 1);
        return !current_.empty() || advance_shard();
    }

    std::vector<std::string> shards_;
    int batch_size_;
    EpochPlan plan_;
    std::vector<PairSample> current_;
    std::future<std::vector<PairSample>> prefetch_;
    size_t shard_pos_ = 0;
    size_t pos_ = 0;
};

inline EpochStream iter_epoch(const std::string& shard_dir, int batch_size, uint64_t epoch_index,
                              uint64_t base_seed) {
    return EpochStream(shard_dir, batch_size, epoch_index, base_seed);
}

}  // namespace tacit
