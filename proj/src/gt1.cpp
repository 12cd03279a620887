#include "searth/gt1.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>

#include "searth/common.hpp"

namespace searth {

namespace {

constexpr char kMagic[4] = {'G', 'T', 'E', 'N'};
constexpr int64_t kMaxRank = 8;

void put_bytes(std::ostream& os, const void* p, size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!os) throw IoError(IoCode::malformed, "gt1: write failed");
}

void put_u16(std::ostream& os, uint16_t v) {
    const uint8_t b[2] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8)};
    put_bytes(os, b, 2);
}

void put_u32(std::ostream& os, uint32_t v) {
    uint8_t b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<uint8_t>(v >> (8 * i));
    put_bytes(os, b, 4);
}

void put_u64(std::ostream& os, uint64_t v) {
    uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<uint8_t>(v >> (8 * i));
    put_bytes(os, b, 8);
}

bool get_bytes(std::istream& is, void* p, size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    return static_cast<size_t>(is.gcount()) == n;
}

uint16_t get_u16(std::istream& is, const char* what) {
    uint8_t b[2];
    if (!get_bytes(is, b, 2)) throw IoError(IoCode::truncated, std::string("gt1: ") + what);
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint32_t get_u32(std::istream& is, const char* what) {
    uint8_t b[4];
    if (!get_bytes(is, b, 4)) throw IoError(IoCode::truncated, std::string("gt1: ") + what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

uint64_t get_u64(std::istream& is, const char* what) {
    uint8_t b[8];
    if (!get_bytes(is, b, 8)) throw IoError(IoCode::truncated, std::string("gt1: ") + what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

template <class T, class Bits>
void put_payload(std::ostream& os, const std::vector<T>& data) {
    static_assert(sizeof(T) == sizeof(Bits));
    if constexpr (std::endian::native == std::endian::little) {
        if (!data.empty()) put_bytes(os, data.data(), data.size() * sizeof(T));
    } else {
        for (T v : data) {
            const Bits bits = std::bit_cast<Bits>(v);
            uint8_t b[sizeof(Bits)];
            for (size_t i = 0; i < sizeof(Bits); ++i)
                b[i] = static_cast<uint8_t>(bits >> (8 * i));
            put_bytes(os, b, sizeof(Bits));
        }
    }
}

template <class T, class Bits>
std::vector<T> get_payload(std::istream& is, int64_t count) {
    static_assert(sizeof(T) == sizeof(Bits));
    std::vector<T> data(static_cast<size_t>(count));
    if constexpr (std::endian::native == std::endian::little) {
        if (count > 0 && !get_bytes(is, data.data(), data.size() * sizeof(T)))
            throw IoError(IoCode::truncated, "gt1: payload cut short");
    } else {
        for (int64_t j = 0; j < count; ++j) {
            uint8_t b[sizeof(Bits)];
            if (!get_bytes(is, b, sizeof(Bits)))
                throw IoError(IoCode::truncated, "gt1: payload cut short");
            Bits bits = 0;
            for (size_t i = 0; i < sizeof(Bits); ++i)
                bits |= static_cast<Bits>(b[i]) << (8 * i);
            data[static_cast<size_t>(j)] = std::bit_cast<T>(bits);
        }
    }
    return data;
}

void check_encodable(const Gt1Tensor& t) {
    if (t.dims.empty()) throw ConfigError("gt1: tensors need at least one dimension");
    if (static_cast<int64_t>(t.dims.size()) > kMaxRank)
        throw ConfigError("gt1: rank above " + std::to_string(kMaxRank));
    for (int64_t d : t.dims)
        if (d <= 0 || d > std::numeric_limits<uint32_t>::max())
            throw ConfigError("gt1: dimension " + std::to_string(d) + " not storable");
    const int64_t n = t.element_count();
    const int64_t have = t.dtype == Gt1Dtype::f32 ? static_cast<int64_t>(t.f32.size())
                                                  : static_cast<int64_t>(t.f64.size());
    if (n != have)
        throw ShapeError("gt1: payload holds " + std::to_string(have) + " values for shape " +
                         shape_str(t.dims));
}

}  // namespace

template <class T>
Gt1Tensor Gt1Tensor::from(const Tensor<T>& t) {
    Gt1Tensor out;
    out.dims = t.shape();
    if constexpr (std::is_same_v<T, float>) {
        out.dtype = Gt1Dtype::f32;
        out.f32 = t.values();
    } else {
        out.dtype = Gt1Dtype::f64;
        out.f64 = t.values();
    }
    return out;
}

template <class T>
Tensor<T> Gt1Tensor::to() const {
    constexpr Gt1Dtype want = std::is_same_v<T, float> ? Gt1Dtype::f32 : Gt1Dtype::f64;
    if (dtype != want)
        throw ConfigError("gt1: stored dtype does not match the requested element type");
    Tensor<T> out(dims);
    if constexpr (std::is_same_v<T, float>)
        std::memcpy(out.data(), f32.data(), f32.size() * sizeof(float));
    else
        std::memcpy(out.data(), f64.data(), f64.size() * sizeof(double));
    return out;
}

template Gt1Tensor Gt1Tensor::from<float>(const Tensor<float>&);
template Gt1Tensor Gt1Tensor::from<double>(const Tensor<double>&);
template Tensor<float> Gt1Tensor::to<float>() const;
template Tensor<double> Gt1Tensor::to<double>() const;

void gt1_encode(std::ostream& os, const Gt1Tensor& t) {
    check_encodable(t);
    put_bytes(os, kMagic, 4);
    put_u32(os, kGt1Version);
    const uint8_t dt = static_cast<uint8_t>(t.dtype);
    put_bytes(os, &dt, 1);
    put_u32(os, static_cast<uint32_t>(t.dims.size()));
    for (int64_t d : t.dims) put_u32(os, static_cast<uint32_t>(d));
    uint64_t payload_bytes;
    if (t.dtype == Gt1Dtype::f32) {
        put_payload<float, uint32_t>(os, t.f32);
        payload_bytes = t.f32.size() * sizeof(float);
    } else {
        put_payload<double, uint64_t>(os, t.f64);
        payload_bytes = t.f64.size() * sizeof(double);
    }
    put_u64(os, payload_bytes);
}

Gt1Tensor gt1_decode(std::istream& is) {
    char magic[4];
    if (!get_bytes(is, magic, 4)) throw IoError(IoCode::truncated, "gt1: missing header");
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw IoError(IoCode::bad_magic, "gt1: bad magic bytes");
    const uint32_t version = get_u32(is, "missing version");
    if (version != kGt1Version)
        throw IoError(IoCode::bad_version, "gt1: unsupported version " + std::to_string(version));
    uint8_t dt;
    if (!get_bytes(is, &dt, 1)) throw IoError(IoCode::truncated, "gt1: missing dtype");
    if (dt > 1) throw IoError(IoCode::bad_dtype, "gt1: unknown dtype code " + std::to_string(dt));
    const uint32_t ndim = get_u32(is, "missing rank");
    if (ndim == 0 || ndim > kMaxRank)
        throw IoError(IoCode::bad_dims, "gt1: rank " + std::to_string(ndim) + " out of range");
    Gt1Tensor t;
    t.dtype = static_cast<Gt1Dtype>(dt);
    int64_t numel = 1;
    for (uint32_t i = 0; i < ndim; ++i) {
        const uint32_t d = get_u32(is, "missing dimension");
        if (d == 0) throw IoError(IoCode::bad_dims, "gt1: zero dimension");
        if (numel > std::numeric_limits<int64_t>::max() / d)
            throw IoError(IoCode::bad_dims, "gt1: dimension product overflows");
        t.dims.push_back(static_cast<int64_t>(d));
        numel *= d;
    }
    const uint64_t elem_size = t.dtype == Gt1Dtype::f32 ? 4 : 8;
    if (t.dtype == Gt1Dtype::f32)
        t.f32 = get_payload<float, uint32_t>(is, numel);
    else
        t.f64 = get_payload<double, uint64_t>(is, numel);
    const uint64_t trailer = get_u64(is, "missing payload count");
    if (trailer != static_cast<uint64_t>(numel) * elem_size)
        throw IoError(IoCode::truncated, "gt1: payload count " + std::to_string(trailer) +
                                             " != " + std::to_string(numel * elem_size));
    return t;
}

void gt1_write(const std::string& path, const Gt1Tensor& t) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError(IoCode::open_failed, "gt1: cannot open " + path + " for writing");
    gt1_encode(os, t);
    os.flush();
    if (!os) throw IoError(IoCode::malformed, "gt1: write to " + path + " failed");
}

Gt1Tensor gt1_read(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError(IoCode::open_failed, "gt1: cannot open " + path);
    Gt1Tensor t = gt1_decode(is);
    is.peek();
    if (!is.eof()) throw IoError(IoCode::malformed, "gt1: trailing bytes after record in " + path);
    return t;
}

void gt1_write_archive(const std::string& path,
                       const std::vector<std::pair<std::string, Gt1Tensor>>& entries) {
    std::set<std::string> seen;
    for (const auto& [name, t] : entries) {
        if (name.empty() || name.size() > std::numeric_limits<uint16_t>::max())
            throw ConfigError("gt1 archive: entry name length out of range");
        if (!seen.insert(name).second)
            throw ConfigError("gt1 archive: duplicate entry name " + name);
    }
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError(IoCode::open_failed, "gt1 archive: cannot open " + path);
    put_u32(os, static_cast<uint32_t>(entries.size()));
    for (const auto& [name, t] : entries) {
        put_u16(os, static_cast<uint16_t>(name.size()));
        put_bytes(os, name.data(), name.size());
        gt1_encode(os, t);
    }
    os.flush();
    if (!os) throw IoError(IoCode::malformed, "gt1 archive: write to " + path + " failed");
}

std::vector<std::pair<std::string, Gt1Tensor>> gt1_read_archive(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError(IoCode::open_failed, "gt1 archive: cannot open " + path);
    const uint32_t count = get_u32(is, "missing entry count");
    std::vector<std::pair<std::string, Gt1Tensor>> entries;
    entries.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        const uint16_t len = get_u16(is, "missing name length");
        if (len == 0) throw IoError(IoCode::malformed, "gt1 archive: empty entry name");
        std::string name(len, '\0');
        if (!get_bytes(is, name.data(), len))
            throw IoError(IoCode::truncated, "gt1 archive: name cut short");
        entries.emplace_back(std::move(name), gt1_decode(is));
    }
    is.peek();
    if (!is.eof())
        throw IoError(IoCode::malformed, "gt1 archive: trailing bytes after last entry");
    return entries;
}

}  // namespace searth
