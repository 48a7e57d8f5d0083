#include "ckd/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "ckd/errors.hpp"

namespace ckd {

namespace {

constexpr char kMagic[4] = {'C', 'K', 'D', 'F'};

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
    }
}

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
    }
}

void put_f64(std::vector<unsigned char>& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, sizeof(bits));
    put_u64(out, bits);
}

struct Reader {
    const std::vector<unsigned char>& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) {
            throw io_error("checkpoint truncated at byte " + std::to_string(pos));
        }
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(buf[pos + i]) << (8 * i);
        }
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(buf[pos + i]) << (8 * i);
        }
        pos += 8;
        return v;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double d;
        std::memcpy(&d, &bits, sizeof(d));
        return d;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
        pos += n;
        return s;
    }
};

} // namespace

std::vector<unsigned char> encode_checkpoint(const std::vector<NamedTensor>& tensors) {
    std::vector<unsigned char> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, kCheckpointVersion);
    put_u64(out, tensors.size());
    for (const auto& nt : tensors) {
        put_u32(out, static_cast<std::uint32_t>(nt.name.size()));
        out.insert(out.end(), nt.name.begin(), nt.name.end());
        put_u32(out, static_cast<std::uint32_t>(nt.tensor.rank()));
        for (auto e : nt.tensor.shape()) {
            put_u64(out, e);
        }
        for (double d : nt.tensor.data()) {
            put_f64(out, d);
        }
    }
    return out;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
    const auto bytes = encode_checkpoint(tensors);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw io_error("cannot open checkpoint for writing: " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
        throw io_error("failed to write checkpoint: " + path.string());
    }
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw io_error("cannot open checkpoint: " + path.string());
    }
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    Reader r{buf};
    const std::string magic = r.bytes(4);
    if (std::memcmp(magic.data(), kMagic, 4) != 0) {
        throw io_error("not a checkpoint file (bad magic): " + path.string());
    }
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw io_error("unsupported checkpoint version " + std::to_string(version));
    }
    const std::uint64_t count = r.u64();
    std::vector<NamedTensor> tensors;
    tensors.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = r.u32();
        std::string name = r.bytes(name_len);
        const std::uint32_t rank = r.u32();
        std::vector<std::size_t> shape(rank);
        std::size_t n = 1;
        for (auto& e : shape) {
            e = static_cast<std::size_t>(r.u64());
            n *= e;
        }
        std::vector<double> data(n);
        for (auto& d : data) {
            d = r.f64();
        }
        tensors.push_back({std::move(name), Tensor::from_data(std::move(shape), std::move(data))});
    }
    if (r.pos != buf.size()) {
        throw io_error("trailing bytes in checkpoint: " + path.string());
    }
    return tensors;
}

} // namespace ckd
