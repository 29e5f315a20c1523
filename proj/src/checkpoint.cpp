#include "uvd/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "uvd/common.hpp"
#include "uvd/tensor.hpp"

namespace uvd {

namespace {

constexpr char kMagic[8] = {'U', 'V', 'D', 'C', 'K', 'P', 'T', '\n'};
constexpr char kEnd[8] = {'E', 'N', 'D', 'C', 'K', 'P', 'T', '\n'};

void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = (unsigned char)((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = (unsigned char)((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t read_u32(std::istream& is, const char* what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw IoError(std::string("checkpoint: short read at ") + what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(b[i]) << (8 * i);
    return v;
}

uint64_t read_u64(std::istream& is, const char* what) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8))
        throw IoError(std::string("checkpoint: short read at ") + what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
    return v;
}

void write_tensor_data(std::ostream& os, const Tensor& t) {
    os.write(reinterpret_cast<const char*>(t.data()),
             std::streamsize(size_t(t.numel()) * sizeof(double)));
}

void read_tensor_data(std::istream& is, Tensor& t, const char* what) {
    if (!is.read(reinterpret_cast<char*>(t.data()),
                 std::streamsize(size_t(t.numel()) * sizeof(double))))
        throw IoError(std::string("checkpoint: short read at ") + what);
}

}  // namespace

void save_checkpoint(const std::string& path, const nn::Params& params, const nn::AdamW& opt,
                     int64_t step, int epoch, uint64_t config_hash) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("save_checkpoint: cannot open " + path);

    os.write(kMagic, 8);
    write_u32(os, kCheckpointFormatVersion);
    write_u64(os, config_hash);
    write_u64(os, uint64_t(step));
    write_u32(os, uint32_t(epoch));

    write_u32(os, uint32_t(params.count()));
    for (int i = 0; i < params.count(); ++i) {
        const nn::ParamInfo& info = params.info(i);
        write_u32(os, uint32_t(info.name.size()));
        os.write(info.name.data(), std::streamsize(info.name.size()));
        write_u32(os, info.head ? 1 : 0);
        write_u32(os, uint32_t(info.shape.size()));
        for (int d : info.shape) write_u32(os, uint32_t(d));
        write_tensor_data(os, params.value(i));
    }

    write_u32(os, 1);  // optimizer state present
    write_u64(os, uint64_t(opt.t()));
    for (int i = 0; i < params.count(); ++i) write_tensor_data(os, opt.m()[size_t(i)]);
    for (int i = 0; i < params.count(); ++i) write_tensor_data(os, opt.v()[size_t(i)]);

    os.write(kEnd, 8);
    os.flush();
    if (!os) throw IoError("save_checkpoint: write failed for " + path);
}

CheckpointMeta load_checkpoint(const std::string& path, nn::Params& params, nn::AdamW* opt,
                               uint64_t expected_config_hash) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("load_checkpoint: cannot open " + path);

    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw IoError("load_checkpoint: not a checkpoint file: " + path);

    uint32_t version = read_u32(is, "version");
    if (version != kCheckpointFormatVersion)
        throw IoError("load_checkpoint: format version " + std::to_string(version) +
                      " unsupported (expected " + std::to_string(kCheckpointFormatVersion) + ")");

    CheckpointMeta meta;
    meta.config_hash = read_u64(is, "config hash");
    if (expected_config_hash != 0 && meta.config_hash != expected_config_hash)
        throw ConfigError(
            "load_checkpoint: config hash mismatch (checkpoint was produced by a different "
            "configuration); refusing to load " +
            path);
    meta.step = int64_t(read_u64(is, "step"));
    meta.epoch = int(read_u32(is, "epoch"));

    uint32_t count = read_u32(is, "param count");
    if (int(count) != params.count())
        throw ConfigError("load_checkpoint: parameter count mismatch in " + path);
    for (int i = 0; i < params.count(); ++i) {
        const nn::ParamInfo& info = params.info(i);
        uint32_t name_len = read_u32(is, "name length");
        std::string name(name_len, '\0');
        if (name_len > 0 && !is.read(name.data(), name_len))
            throw IoError("checkpoint: short read at name");
        if (name != info.name)
            throw ConfigError("load_checkpoint: parameter '" + name + "' does not match '" +
                              info.name + "'");
        read_u32(is, "head flag");
        uint32_t ndim = read_u32(is, "ndim");
        if (int(ndim) != int(info.shape.size()))
            throw ConfigError("load_checkpoint: rank mismatch for " + name);
        for (size_t d = 0; d < ndim; ++d)
            if (int(read_u32(is, "dim")) != info.shape[d])
                throw ConfigError("load_checkpoint: shape mismatch for " + name);
        read_tensor_data(is, params.value(i), info.name.c_str());
    }

    uint32_t has_opt = read_u32(is, "optimizer flag");
    if (has_opt != 0) {
        int64_t t = int64_t(read_u64(is, "optimizer step"));
        std::vector<Tensor> m(size_t(params.count())), v(size_t(params.count()));
        for (int i = 0; i < params.count(); ++i) {
            m[size_t(i)] = Tensor::zeros(params.info(i).shape);
            read_tensor_data(is, m[size_t(i)], "optimizer m");
        }
        for (int i = 0; i < params.count(); ++i) {
            v[size_t(i)] = Tensor::zeros(params.info(i).shape);
            read_tensor_data(is, v[size_t(i)], "optimizer v");
        }
        if (opt) opt->restore(std::move(m), std::move(v), t);
    } else if (opt) {
        throw ConfigError("load_checkpoint: no optimizer state in " + path);
    }

    char end[8];
    if (!is.read(end, 8) || std::memcmp(end, kEnd, 8) != 0)
        throw IoError("load_checkpoint: truncated file " + path);
    return meta;
}

}  // namespace uvd
