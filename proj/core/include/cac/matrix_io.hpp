// Little-endian float32 matrix blocks, shared by feature caches and model
// checkpoints. 16-byte header: magic "CMEL", version u16, rows u16,
// cols u32, reserved u32.
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <vector>

namespace cac::io {

inline constexpr std::uint16_t kMatFormatVersion = 1;

struct MatF32 {
    std::uint16_t rows = 0;
    std::uint32_t cols = 0;
    std::vector<float> values;  // row-major, rows * cols

    float at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

struct BadMatrixFile : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void write_mat(std::ostream& out, const MatF32& mat);
MatF32 read_mat(std::istream& in);

void write_mat_file(const std::filesystem::path& path, const MatF32& mat);
MatF32 read_mat_file(const std::filesystem::path& path);

}  // namespace cac::io
