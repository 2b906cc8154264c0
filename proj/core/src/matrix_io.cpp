#include "cac/matrix_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <ostream>

namespace cac::io {

namespace {

static_assert(std::endian::native == std::endian::little,
              "matrix blocks are little-endian; big-endian hosts need byte swaps");

template <typename T>
void write_le(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_le(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw BadMatrixFile("truncated matrix block");
    return v;
}

}  // namespace

void write_mat(std::ostream& out, const MatF32& mat) {
    if (mat.values.size() != static_cast<std::size_t>(mat.rows) * mat.cols) {
        throw BadMatrixFile("matrix value count does not match rows*cols");
    }
    out.write("CMEL", 4);
    write_le<std::uint16_t>(out, kMatFormatVersion);
    write_le<std::uint16_t>(out, mat.rows);
    write_le<std::uint32_t>(out, mat.cols);
    write_le<std::uint32_t>(out, 0);  // reserved
    out.write(reinterpret_cast<const char*>(mat.values.data()),
              static_cast<std::streamsize>(mat.values.size() * sizeof(float)));
}

MatF32 read_mat(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "CMEL", 4) != 0) throw BadMatrixFile("bad matrix magic");
    const auto version = read_le<std::uint16_t>(in);
    if (version != kMatFormatVersion) {
        throw BadMatrixFile("unsupported matrix version " + std::to_string(version));
    }
    MatF32 mat;
    mat.rows = read_le<std::uint16_t>(in);
    mat.cols = read_le<std::uint32_t>(in);
    read_le<std::uint32_t>(in);  // reserved
    mat.values.resize(static_cast<std::size_t>(mat.rows) * mat.cols);
    in.read(reinterpret_cast<char*>(mat.values.data()),
            static_cast<std::streamsize>(mat.values.size() * sizeof(float)));
    if (!in) throw BadMatrixFile("truncated matrix payload");
    return mat;
}

void write_mat_file(const std::filesystem::path& path, const MatF32& mat) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw BadMatrixFile("cannot write " + path.string());
    write_mat(out, mat);
}

MatF32 read_mat_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw BadMatrixFile("cannot open " + path.string());
    return read_mat(in);
}

}  // namespace cac::io
