#include "fakegaze/weights_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "fakegaze/errors.hpp"

namespace fakegaze {

namespace {

constexpr char kMagic[4] = {'F', 'G', 'W', 'T'};
constexpr std::uint32_t kMaxNameLength = 4096;
constexpr std::uint32_t kMaxRank = 8;
constexpr std::uint32_t kMaxTensorCount = 65536;
constexpr std::uint64_t kMaxElementsPerTensor = std::uint64_t(1) << 28;

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

class Reader {
public:
    Reader(const std::string& bytes, const std::string& origin)
        : bytes_(bytes), origin_(origin) {}

    std::size_t remaining() const { return bytes_.size() - pos_; }

    const char* take(std::size_t n, const char* what) {
        if (remaining() < n) {
            throw WeightsError(origin_ + ": truncated weights file while reading " +
                               std::string(what));
        }
        const char* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }

    std::uint16_t u16(const char* what) {
        const auto* p = reinterpret_cast<const unsigned char*>(take(2, what));
        return static_cast<std::uint16_t>(p[0] | (std::uint16_t(p[1]) << 8));
    }

    std::uint32_t u32(const char* what) {
        const auto* p = reinterpret_cast<const unsigned char*>(take(4, what));
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[i]) << (8 * i);
        return v;
    }

    std::uint64_t u64(const char* what) {
        const auto* p = reinterpret_cast<const unsigned char*>(take(8, what));
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << (8 * i);
        return v;
    }

    const std::string& origin() const { return origin_; }

private:
    const std::string& bytes_;
    std::string origin_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string encode_weights(const ModelWeights& weights) {
    std::string out;
    out.append(kMagic, 4);
    put_u16(out, kWeightsFormatVersion);
    put_u64(out, weights.fingerprint);
    if (weights.tensors.size() > kMaxTensorCount) {
        throw WeightsError("too many tensors to serialize: " +
                           std::to_string(weights.tensors.size()));
    }
    put_u32(out, static_cast<std::uint32_t>(weights.tensors.size()));
    for (const auto& [name, tensor] : weights.tensors) {
        if (name.empty() || name.size() > kMaxNameLength) {
            throw WeightsError("tensor name length out of range: '" + name + "'");
        }
        if (!tensor.defined()) throw WeightsError("undefined tensor '" + name + "'");
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.append(name);
        put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
        for (std::size_t d = 0; d < tensor.rank(); ++d) {
            put_u32(out, static_cast<std::uint32_t>(tensor.dim(d)));
        }
        const float* p = tensor.data();
        for (std::size_t i = 0; i < tensor.numel(); ++i) put_f32(out, p[i]);
    }
    return out;
}

ModelWeights decode_weights(const std::string& bytes, const std::string& origin) {
    Reader r(bytes, origin);
    const char* magic = r.take(4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw WeightsError(origin + ": bad magic (not a FGWT weights file)");
    }
    const std::uint16_t version = r.u16("format version");
    if (version != kWeightsFormatVersion) {
        throw WeightsError(origin + ": unsupported format version " + std::to_string(version) +
                           " (expected " + std::to_string(kWeightsFormatVersion) + ")");
    }
    ModelWeights w;
    w.fingerprint = r.u64("fingerprint");
    const std::uint32_t count = r.u32("tensor count");
    if (count > kMaxTensorCount) {
        throw WeightsError(origin + ": implausible tensor count " + std::to_string(count));
    }
    w.tensors.reserve(count);
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::uint32_t name_len = r.u32("name length");
        if (name_len == 0 || name_len > kMaxNameLength) {
            throw WeightsError(origin + ": implausible tensor name length " +
                               std::to_string(name_len));
        }
        std::string name(r.take(name_len, "tensor name"), name_len);
        const std::uint32_t rank = r.u32("rank");
        if (rank == 0 || rank > kMaxRank) {
            throw WeightsError(origin + ": tensor '" + name + "' has implausible rank " +
                               std::to_string(rank));
        }
        Shape shape(rank);
        std::uint64_t numel = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            const std::uint32_t dim = r.u32("dimension");
            if (dim == 0) {
                throw WeightsError(origin + ": tensor '" + name + "' has a zero dimension");
            }
            shape[d] = dim;
            numel *= dim;
            if (numel > kMaxElementsPerTensor) {
                throw WeightsError(origin + ": tensor '" + name + "' is implausibly large");
            }
        }
        const char* raw = r.take(static_cast<std::size_t>(numel) * 4, "tensor values");
        Tensor tensor(shape);
        float* dst = tensor.data();
        for (std::uint64_t i = 0; i < numel; ++i) {
            std::uint32_t bits = 0;
            const auto* p = reinterpret_cast<const unsigned char*>(raw + i * 4);
            for (int b = 0; b < 4; ++b) bits |= std::uint32_t(p[b]) << (8 * b);
            const float v = std::bit_cast<float>(bits);
            if (!std::isfinite(v)) {
                throw WeightsError(origin + ": tensor '" + name + "' contains non-finite values");
            }
            dst[i] = v;
        }
        w.tensors.emplace_back(std::move(name), std::move(tensor));
    }
    if (r.remaining() != 0) {
        throw WeightsError(origin + ": " + std::to_string(r.remaining()) +
                           " trailing bytes after the last tensor");
    }
    return w;
}

void save_weights(const std::string& path, const ModelWeights& weights) {
    const std::string bytes = encode_weights(weights);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw WeightsError("cannot open '" + path + "' for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    f.flush();
    if (!f) throw WeightsError("failed writing weights to '" + path + "'");
}

ModelWeights load_weights(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw WeightsError("cannot open weights file '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (!f.good() && !f.eof()) throw WeightsError("failed reading weights file '" + path + "'");
    return decode_weights(bytes, path);
}

}  // namespace fakegaze
