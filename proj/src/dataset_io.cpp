#include "uvd/dataset_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace uvd {

namespace {

constexpr char kMagic[8] = {'U', 'V', 'D', 'D', 'A', 'T', 'A', '\n'};

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

uint32_t read_u32(std::istream& is, const std::string& what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("dataset: short read at " + what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(b[i]) << (8 * i);
    return v;
}

uint64_t read_u64(std::istream& is, const std::string& what) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw IoError("dataset: short read at " + what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
    return v;
}

unsigned char quantize_byte(double v) {
    v = std::min(1.0, std::max(-1.0, v));
    long q = std::lround((v + 1.0) * 127.5);
    if (q < 0) q = 0;
    if (q > 255) q = 255;
    return (unsigned char)q;
}

}  // namespace

void save_dataset(const VideoDataset& ds, uint64_t spec_hash, const std::string& path) {
    int t = 0, h = 0, w = 0;
    if (!ds.samples.empty()) {
        const Tensor& v = ds.samples.front().video;
        if (v.ndim() != 4 || v.dim(1) != 1)
            throw std::invalid_argument("save_dataset: videos must be [T,1,H,W]");
        t = v.dim(0);
        h = v.dim(2);
        w = v.dim(3);
    }
    for (const VideoSample& s : ds.samples)
        if (s.video.ndim() != 4 || s.video.dim(0) != t || s.video.dim(1) != 1 ||
            s.video.dim(2) != h || s.video.dim(3) != w)
            throw std::invalid_argument("save_dataset: inconsistent video shapes");

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("save_dataset: cannot open " + path);

    os.write(kMagic, 8);
    write_u32(os, kDatasetFormatVersion);
    write_u64(os, spec_hash);
    write_u32(os, uint32_t(ds.samples.size()));
    write_u32(os, uint32_t(t));
    write_u32(os, uint32_t(h));
    write_u32(os, uint32_t(w));
    write_u32(os, 1);  // channels
    write_u32(os, uint32_t(ds.num_classes));

    write_u32(os, uint32_t(ds.class_names.size()));
    for (const std::string& name : ds.class_names) {
        write_u32(os, uint32_t(name.size()));
        os.write(name.data(), std::streamsize(name.size()));
    }

    for (const VideoSample& s : ds.samples) write_u32(os, uint32_t(s.label));
    for (const VideoSample& s : ds.samples) write_u64(os, uint64_t(s.id));

    std::vector<unsigned char> buf;
    for (const VideoSample& s : ds.samples) {
        buf.resize(size_t(s.video.numel()));
        for (int64_t i = 0; i < s.video.numel(); ++i) buf[size_t(i)] = quantize_byte(s.video[i]);
        os.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
    }

    os.flush();
    if (!os) throw IoError("save_dataset: write failed for " + path);
}

LoadedDataset load_dataset(const std::string& path, uint64_t expected_spec_hash) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("load_dataset: cannot open " + path);

    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw IoError("load_dataset: not a dataset file: " + path);

    uint32_t version = read_u32(is, "version");
    if (version != kDatasetFormatVersion)
        throw IoError("load_dataset: format version " + std::to_string(version) +
                      " unsupported (expected " + std::to_string(kDatasetFormatVersion) + ")");

    LoadedDataset out;
    out.spec_hash = read_u64(is, "spec hash");
    out.spec_hash_mismatch = expected_spec_hash != 0 && out.spec_hash != expected_spec_hash;

    uint32_t n = read_u32(is, "count");
    int t = int(read_u32(is, "frames"));
    int h = int(read_u32(is, "height"));
    int w = int(read_u32(is, "width"));
    uint32_t channels = read_u32(is, "channels");
    if (channels != 1) throw IoError("load_dataset: unsupported channel count");
    out.dataset.num_classes = int(read_u32(is, "classes"));

    uint32_t name_count = read_u32(is, "class name count");
    for (uint32_t i = 0; i < name_count; ++i) {
        uint32_t len = read_u32(is, "class name length");
        std::string name(len, '\0');
        if (len > 0 && !is.read(name.data(), len)) throw IoError("dataset: short read at name");
        out.dataset.class_names.push_back(std::move(name));
    }

    out.dataset.samples.resize(n);
    for (uint32_t i = 0; i < n; ++i)
        out.dataset.samples[i].label = int(read_u32(is, "label"));
    for (uint32_t i = 0; i < n; ++i) out.dataset.samples[i].id = int64_t(read_u64(is, "id"));

    std::vector<unsigned char> buf(size_t(t) * size_t(h) * size_t(w));
    for (uint32_t i = 0; i < n; ++i) {
        if (!is.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size())))
            throw IoError("dataset: short read at video " + std::to_string(i));
        Tensor v({t, 1, h, w});
        for (int64_t j = 0; j < v.numel(); ++j) v[j] = double(buf[size_t(j)]) / 127.5 - 1.0;
        out.dataset.samples[i].video = std::move(v);
    }
    return out;
}

}  // namespace uvd
