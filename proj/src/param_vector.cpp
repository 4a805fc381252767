#include "seqmeta/param_vector.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include "seqmeta/errors.hpp"

namespace seqmeta {

namespace {

constexpr char kMagic[8] = {'S', 'E', 'Q', 'M', 'E', 'T', 'A', '1'};

void check_same_size(const ParamVector& a, const ParamVector& b, const char* op) {
    if (a.size() != b.size()) throw ShapeError(std::string(op) + " operand length", a.size(), b.size());
}

void put_le(std::vector<std::uint8_t>& out, std::uint64_t value, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

std::uint64_t get_le(std::span<const std::uint8_t> in, std::size_t at, int bytes) {
    std::uint64_t value = 0;
    for (int i = 0; i < bytes; ++i) value |= static_cast<std::uint64_t>(in[at + i]) << (8 * i);
    return value;
}

}  // namespace

bool ParamVector::all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double x) { return std::isfinite(x); });
}

ParamVector& ParamVector::operator+=(const ParamVector& other) {
    check_same_size(*this, other, "+=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
    return *this;
}

ParamVector& ParamVector::operator-=(const ParamVector& other) {
    check_same_size(*this, other, "-=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
    return *this;
}

ParamVector& ParamVector::operator*=(double scale) {
    for (double& v : values_) v *= scale;
    return *this;
}

ParamVector operator+(ParamVector lhs, const ParamVector& rhs) { return lhs += rhs; }
ParamVector operator-(ParamVector lhs, const ParamVector& rhs) { return lhs -= rhs; }
ParamVector operator*(double scale, ParamVector v) { return v *= scale; }

double dot(const ParamVector& a, const ParamVector& b) {
    check_same_size(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(const ParamVector& v) { return std::sqrt(dot(v, v)); }

void write_slice(ParamVector& dest, std::size_t offset, std::span<const double> part) {
    if (offset + part.size() > dest.size())
        throw ShapeError("slice end", dest.size(), offset + part.size());
    std::copy(part.begin(), part.end(), dest.begin() + static_cast<std::ptrdiff_t>(offset));
}

ParamVector slice(const ParamVector& v, std::size_t offset, std::size_t count) {
    if (offset + count > v.size()) throw ShapeError("slice end", v.size(), offset + count);
    auto first = v.begin() + static_cast<std::ptrdiff_t>(offset);
    return ParamVector(std::vector<double>(first, first + static_cast<std::ptrdiff_t>(count)));
}

ParamVector concat(const ParamVector& a, const ParamVector& b) {
    std::vector<double> out;
    out.reserve(a.size() + b.size());
    out.insert(out.end(), a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
    return ParamVector(std::move(out));
}

std::vector<std::uint8_t> encode_params(const ParamVector& params) {
    if (params.size() > std::numeric_limits<std::uint32_t>::max())
        throw invalid_argument("parameter vector too long to serialize");
    std::vector<std::uint8_t> out;
    out.reserve(12 + 8 * params.size());
    for (char c : kMagic) out.push_back(static_cast<std::uint8_t>(c));
    put_le(out, params.size(), 4);
    for (double v : params) put_le(out, std::bit_cast<std::uint64_t>(v), 8);
    return out;
}

ParamVector decode_params(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
        throw Error(ErrorKind::parse, "parameter file: bad magic (expected SEQMETA1)");
    const auto count = static_cast<std::size_t>(get_le(bytes, 8, 4));
    if (bytes.size() != 12 + 8 * count)
        throw ShapeError("parameter file byte length", 12 + 8 * count, bytes.size());
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i)
        values[i] = std::bit_cast<double>(get_le(bytes, 12 + 8 * i, 8));
    return ParamVector(std::move(values));
}

void save_params(const std::filesystem::path& path, const ParamVector& params) {
    const auto bytes = encode_params(params);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::io, "write failed: " + path.string());
}

ParamVector load_params(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open parameter file: " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_params(bytes);
    } catch (const Error& e) {
        throw Error(e.kind(), path.string() + ": " + e.what());
    }
}

}  // namespace seqmeta
