#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "tacit/adam.hpp"
#include "tacit/dataset.hpp"
#include "tacit/dit.hpp"
#include "tacit/error.hpp"

namespace tacit {

// Checkpoint format ("TCKP", version 1), all integers little-endian:
//   magic 4 bytes "TCKP"
//   u16  version
//   u32 x 8  model config (resolution, patch, hidden, blocks, heads,
//            head_dim, mlp, time_freq)
//   u32  tensor count; per tensor: u16 name length + name bytes, u8 ndim,
//        u32 dims..., raw f32 payload
//   u8   optimizer flag; when 1: f64 lr/beta1/beta2/eps, u64 step, u32 slot
//        count, then per trainable tensor (checkpoint order) the f32 payloads
//        of its first and second moments
//   u32  epoch index
//   f64  running loss
inline constexpr char kCheckpointMagic[4] = {'T', 'C', 'K', 'P'};
inline constexpr uint16_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");
static_assert(sizeof(float) == 4);

struct CheckpointMeta {
    int epoch = 0;
    double running_loss = 0;
};

struct Checkpoint {
    DitParams<float> params;
    std::optional<AdamState<float>> adam;
    CheckpointMeta meta;
};

namespace detail {

inline void put_f32s(std::string& out, const std::vector<float>& v) {
    const size_t pos = out.size();
    out.resize(pos + v.size() * 4);
    std::memcpy(out.data() + pos, v.data(), v.size() * 4);
}
inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<uint64_t>(v)); }

inline void put_tensor(std::string& out, const std::string& name, const Tensor<float>& t) {
    put_u16(out, static_cast<uint16_t>(name.size()));
    out.append(name);
    out.push_back(static_cast<char>(t.ndim()));
    for (int d : t.shape) put_u32(out, static_cast<uint32_t>(d));
    put_f32s(out, t.data);
}

inline void read_f32s(ByteReader& r, std::vector<float>& v) {
    r.bytes(reinterpret_cast<uint8_t*>(v.data()), v.size() * 4);
}

}  // namespace detail

inline void save_checkpoint(const DitParams<float>& params, const AdamState<float>* adam,
                            CheckpointMeta meta, const std::string& path) {
    std::string blob;
    blob.append(kCheckpointMagic, 4);
    detail::put_u16(blob, kCheckpointVersion);
    const ModelConfig& c = params.config;
    for (int v : {c.resolution, c.patch, c.hidden, c.blocks, c.heads, c.head_dim, c.mlp,
                  c.time_freq})
        detail::put_u32(blob, static_cast<uint32_t>(v));

    uint32_t count = 0;
    for_each_tensor(params, [&count](const std::string&, const Tensor<float>&) { ++count; });
    detail::put_u32(blob, count);
    for_each_tensor(params, [&blob](const std::string& name, const Tensor<float>& t) {
        detail::put_tensor(blob, name, t);
    });

    blob.push_back(adam ? 1 : 0);
    if (adam) {
        detail::put_f64(blob, adam->config.lr);
        detail::put_f64(blob, adam->config.beta1);
        detail::put_f64(blob, adam->config.beta2);
        detail::put_f64(blob, adam->config.eps);
        detail::put_u64(blob, adam->step);
        detail::put_u32(blob, static_cast<uint32_t>(adam->m.size()));
        for (size_t i = 0; i < adam->m.size(); ++i) {
            detail::put_f32s(blob, adam->m[i].data);
            detail::put_f32s(blob, adam->v[i].data);
        }
    }
    detail::put_u32(blob, static_cast<uint32_t>(meta.epoch));
    detail::put_f64(blob, meta.running_loss);

    std::ofstream out(path, std::ios::binary);
    require(bool(out), ErrorCategory::io_error, "cannot open for writing: " + path);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    require(bool(out), ErrorCategory::io_error, "write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    const std::vector<uint8_t> buf = detail::slurp(path);
    detail::ByteReader r(buf.data(), buf.size(), path);

    uint8_t magic[4];
    r.bytes(magic, 4);
    require(std::equal(magic, magic + 4, kCheckpointMagic), ErrorCategory::format_error,
            "bad magic: " + path);
    const uint16_t version = r.u16();
    require(version == kCheckpointVersion, ErrorCategory::format_error,
            "version mismatch (" + std::to_string(version) + "): " + path);

    ModelConfig cfg;
    cfg.resolution = static_cast<int>(r.u32());
    cfg.patch = static_cast<int>(r.u32());
    cfg.hidden = static_cast<int>(r.u32());
    cfg.blocks = static_cast<int>(r.u32());
    cfg.heads = static_cast<int>(r.u32());
    cfg.head_dim = static_cast<int>(r.u32());
    cfg.mlp = static_cast<int>(r.u32());
    cfg.time_freq = static_cast<int>(r.u32());
    cfg.validate();

    Checkpoint ckpt;
    ckpt.params = make_params<float>(cfg);

    std::vector<Tensor<float>*> expected;
    std::vector<std::string> expected_names;
    for_each_tensor(ckpt.params, [&](const std::string& name, Tensor<float>& t) {
        expected.push_back(&t);
        expected_names.push_back(name);
    });
    const uint32_t count = r.u32();
    require(count == expected.size(), ErrorCategory::format_error,
            "tensor count mismatch in " + path);
    for (uint32_t i = 0; i < count; ++i) {
        std::string name(r.u16(), '\0');
        r.bytes(reinterpret_cast<uint8_t*>(name.data()), name.size());
        require(name == expected_names[i], ErrorCategory::format_error,
                "unexpected tensor '" + name + "' in " + path);
        const int ndim = r.u8_value();
        std::vector<int> shape(ndim);
        for (int d = 0; d < ndim; ++d) shape[d] = static_cast<int>(r.u32());
        require(shape == expected[i]->shape, ErrorCategory::format_error,
                "shape mismatch for tensor '" + name + "' in " + path);
        detail::read_f32s(r, expected[i]->data);
    }

    const uint8_t has_adam = r.u8_value();
    if (has_adam) {
        AdamState<float> st = AdamState<float>::init(trainable_tensors(ckpt.params));
        st.config.lr = static_cast<float>(std::bit_cast<double>(r.u64()));
        st.config.beta1 = static_cast<float>(std::bit_cast<double>(r.u64()));
        st.config.beta2 = static_cast<float>(std::bit_cast<double>(r.u64()));
        st.config.eps = static_cast<float>(std::bit_cast<double>(r.u64()));
        st.step = r.u64();
        const uint32_t slots = r.u32();
        require(slots == st.m.size(), ErrorCategory::format_error,
                "optimizer slot count mismatch in " + path);
        for (size_t i = 0; i < st.m.size(); ++i) {
            detail::read_f32s(r, st.m[i].data);
            detail::read_f32s(r, st.v[i].data);
        }
        ckpt.adam = std::move(st);
    }
    ckpt.meta.epoch = static_cast<int>(r.u32());
    ckpt.meta.running_loss = std::bit_cast<double>(r.u64());
    require(r.remaining() == 0, ErrorCategory::format_error, "trailing bytes: " + path);
    return ckpt;
}

/// Guards resuming/sampling against a checkpoint trained with another config.
inline void expect_config(const Checkpoint& ckpt, const ModelConfig& expected) {
    require(ckpt.params.config == expected, ErrorCategory::config_mismatch,
            "checkpoint model config does not match the requested config");
}

}  // namespace tacit
