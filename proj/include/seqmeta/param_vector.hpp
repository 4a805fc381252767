#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <span>
#include <vector>

namespace seqmeta {

/// Flat vector of network parameters (or a gradient with the same layout).
class ParamVector {
public:
    ParamVector() = default;
    explicit ParamVector(std::size_t size, double fill = 0.0) : values_(size, fill) {}
    ParamVector(std::initializer_list<double> values) : values_(values) {}
    explicit ParamVector(std::vector<double> values) : values_(std::move(values)) {}

    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    double* data() noexcept { return values_.data(); }
    const double* data() const noexcept { return values_.data(); }

    std::span<double> span() noexcept { return values_; }
    std::span<const double> span() const noexcept { return values_; }

    auto begin() noexcept { return values_.begin(); }
    auto end() noexcept { return values_.end(); }
    auto begin() const noexcept { return values_.begin(); }
    auto end() const noexcept { return values_.end(); }

    const std::vector<double>& values() const noexcept { return values_; }

    bool all_finite() const noexcept;

    ParamVector& operator+=(const ParamVector& other);
    ParamVector& operator-=(const ParamVector& other);
    ParamVector& operator*=(double scale);

    friend bool operator==(const ParamVector&, const ParamVector&) = default;

private:
    std::vector<double> values_;
};

ParamVector operator+(ParamVector lhs, const ParamVector& rhs);
ParamVector operator-(ParamVector lhs, const ParamVector& rhs);
ParamVector operator*(double scale, ParamVector v);

double dot(const ParamVector& a, const ParamVector& b);
double norm(const ParamVector& v);

/// Copies `part` into `dest` starting at `offset`.
void write_slice(ParamVector& dest, std::size_t offset, std::span<const double> part);
ParamVector slice(const ParamVector& v, std::size_t offset, std::size_t count);
ParamVector concat(const ParamVector& a, const ParamVector& b);

// Binary format: "SEQMETA1", u32 LE count, count x f64 LE.
std::vector<std::uint8_t> encode_params(const ParamVector& params);
ParamVector decode_params(std::span<const std::uint8_t> bytes);
void save_params(const std::filesystem::path& path, const ParamVector& params);
ParamVector load_params(const std::filesystem::path& path);

}  // namespace seqmeta
