#include "cac/checkpoint.hpp"

#include <fstream>

namespace cac {

namespace {

constexpr char kMagic[4] = {'C', 'M', 'D', 'L'};

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw BadCheckpoint("truncated checkpoint");
    return v;
}

std::string get_string(std::istream& in, std::size_t max_len) {
    const auto len = get<std::uint32_t>(in);
    if (len > max_len) throw BadCheckpoint("implausible string length in checkpoint");
    std::string s(len, '\0');
    in.read(s.data(), static_cast<std::streamsize>(len));
    if (!in) throw BadCheckpoint("truncated checkpoint");
    return s;
}

}  // namespace

std::uint64_t checkpoint_hash(const std::string& arch, int in_h, int in_w) {
    const std::string key =
        arch + ":" + std::to_string(in_h) + "x" + std::to_string(in_w);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : key) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& cp) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw BadCheckpoint("cannot open " + path.string() + " for writing");
    out.write(kMagic, 4);
    put<std::uint16_t>(out, kCheckpointVersion);
    put<std::uint16_t>(out, 0);
    put<std::uint64_t>(out, checkpoint_hash(cp.arch, cp.in_h, cp.in_w));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(cp.arch.size()));
    out.write(cp.arch.data(), static_cast<std::streamsize>(cp.arch.size()));
    put<std::int32_t>(out, cp.in_h);
    put<std::int32_t>(out, cp.in_w);
    put<double>(out, cp.rescale);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(cp.tensors.size()));
    for (const auto& [name, mat] : cp.tensors) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        io::write_mat(out, mat);
    }
    if (!out) throw BadCheckpoint("write failed for " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw BadCheckpoint("cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string_view(magic, 4) != std::string_view(kMagic, 4)) {
        throw BadCheckpoint(path.string() + " is not a model checkpoint");
    }
    const auto version = get<std::uint16_t>(in);
    if (version != kCheckpointVersion) {
        throw BadCheckpoint("unsupported checkpoint version " + std::to_string(version));
    }
    get<std::uint16_t>(in);  // reserved
    const auto stored_hash = get<std::uint64_t>(in);

    Checkpoint cp;
    cp.arch = get_string(in, 4096);
    cp.in_h = get<std::int32_t>(in);
    cp.in_w = get<std::int32_t>(in);
    cp.rescale = get<double>(in);
    if (stored_hash != checkpoint_hash(cp.arch, cp.in_h, cp.in_w)) {
        throw BadCheckpoint("checkpoint hash mismatch (corrupt or edited file)");
    }
    const auto n = get<std::uint32_t>(in);
    if (n > 4096) throw BadCheckpoint("implausible tensor count");
    cp.tensors.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        auto name = get_string(in, 4096);
        cp.tensors.emplace_back(std::move(name), io::read_mat(in));
    }
    return cp;
}

}  // namespace cac
