// Model checkpoint container: architecture string, input geometry, the
// train-fitted rescale scalar, and named float32 parameter tensors.
#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cac/matrix_io.hpp"

namespace cac {

struct BadCheckpoint : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Checkpoint {
    std::string arch;
    int in_h = 0;
    int in_w = 0;
    double rescale = 1.0;
    std::vector<std::pair<std::string, io::MatF32>> tensors;
};

inline constexpr std::uint16_t kCheckpointVersion = 1;

// FNV-1a over "arch:HxW"; stored in the header and re-verified on load so a
// checkpoint cannot be applied to a mismatched architecture silently.
std::uint64_t checkpoint_hash(const std::string& arch, int in_h, int in_w);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& cp);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace cac
