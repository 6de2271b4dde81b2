#include "crsae/cli/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <system_error>

namespace crsae::cli {

namespace {

template <class T>
void put_le(std::string& out, T v) {
    static_assert(std::is_integral_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
    }
}

template <class T>
T get_le(std::string_view bytes, std::size_t& pos) {
    if (bytes.size() - pos < sizeof(T)) throw std::runtime_error("tensor file truncated");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    }
    pos += sizeof(T);
    return static_cast<T>(v);
}

}  // namespace

std::size_t Tensor::element_count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= static_cast<std::size_t>(d);
    return n;
}

std::string encode_tensor(const Tensor& t) {
    if (t.element_count() != t.data.size()) {
        throw std::invalid_argument("tensor dims do not match its payload");
    }
    std::string out(kTensorMagic);
    out.push_back(static_cast<char>(kDtypeFloat64));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) put_le<std::uint64_t>(out, d);
    out.reserve(out.size() + 8 * t.data.size());
    for (double v : t.data) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    return out;
}

Tensor decode_tensor(std::string_view bytes) {
    if (bytes.substr(0, kTensorMagic.size()) != kTensorMagic) {
        throw std::runtime_error("not a tensor file (bad magic)");
    }
    std::size_t pos = kTensorMagic.size();
    if (get_le<std::uint8_t>(bytes, pos) != kDtypeFloat64) {
        throw std::runtime_error("unsupported tensor dtype");
    }
    Tensor t;
    const auto rank = get_le<std::uint32_t>(bytes, pos);
    if (rank > 16) throw std::runtime_error("tensor rank too large");
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        t.dims.push_back(get_le<std::uint64_t>(bytes, pos));
        count *= static_cast<std::size_t>(t.dims.back());
    }
    if (bytes.size() - pos != 8 * count) {
        throw std::runtime_error("tensor payload is " + std::to_string(bytes.size() - pos) +
                                 " bytes, expected " + std::to_string(8 * count));
    }
    t.data.resize(count);
    for (auto& v : t.data) v = std::bit_cast<double>(get_le<std::uint64_t>(bytes, pos));
    return t;
}

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
    write_file_atomic(path, encode_tensor(t));
}

Tensor read_tensor(const std::filesystem::path& path) {
    try {
        return decode_tensor(read_file(path));
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

Tensor to_tensor(const Matrix& m) {
    const auto f = m.flat();
    return {{m.rows(), m.cols()}, std::vector<double>(f.begin(), f.end())};
}

Matrix to_matrix(const Tensor& t) {
    if (t.dims.size() != 2) throw std::runtime_error("expected a rank-2 tensor");
    return Matrix(t.dims[0], t.dims[1], t.data);
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string format_double(double v) {
    std::array<char, 64> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    if (res.ec != std::errc{}) throw std::runtime_error("format_double failed");
    return std::string(buf.data(), res.ptr);
}

double parse_double(std::string_view text) {
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
        throw std::runtime_error("not a number: '" + std::string(text) + "'");
    }
    return v;
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    return s;
}

}  // namespace crsae::cli
