// Manifest ingestion, cross-validation splitting with per-facility class
// balance and minority upsampling, 2-second segment sampling, and the
// synthetic corpus generator used for desk-scale verification.
#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cac/audio.hpp"
#include "cac/rng.hpp"

namespace cac::dataset {

struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DuplicateId : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MissingAudio : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InsufficientClassCount : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IndividualRecord {
    std::string id;
    std::string facility;
    int age = 0;
    std::string sex;  // M, F, or other
    bool symptom_cough = false;
    bool symptom_fever = false;
    bool symptom_dyspnea = false;
    bool rtpcr_positive = false;
    std::array<std::string, 3> cough_paths;  // relative to the manifest directory
};

struct Manifest {
    std::filesystem::path dir;  // directory the cough paths resolve against
    std::vector<IndividualRecord> records;

    std::filesystem::path resolve(const std::string& rel) const { return dir / rel; }
};

inline constexpr const char* kManifestHeader =
    "individual_id,facility,age,sex,symptom_cough,symptom_fever,symptom_dyspnea,"
    "rtpcr_positive,cough_path_1,cough_path_2,cough_path_3";

// Parses and validates the manifest; every cough path must exist on disk.
Manifest load_manifest(const std::filesystem::path& path);

struct FoldSplit {
    int fold_index = 0;
    std::vector<std::string> train_ids;  // sorted
    std::vector<std::string> val_ids;    // sorted
    std::map<std::string, int> upsample;  // train id -> multiplicity (>= 1)
};

struct FoldConfig {
    int k = 5;
    double val_frac = 0.10;
    // Facilities whose individuals may enter validation sets. Empty means
    // automatic: every facility holding at least k positives and k negatives.
    std::vector<std::string> eligible_facilities;
};

// Individual-disjoint k-fold splits with per-facility balanced validation
// sets and per-facility 1:1 train upsampling by duplication.
std::vector<FoldSplit> make_folds(std::span<const IndividualRecord> records,
                                  const FoldConfig& cfg, std::uint64_t seed);

struct Segment {
    std::string source_id;
    double start_s = 0.0;
    double duration_s = 2.0;
    bool padded = false;
};

// Uniform random 2 s window; clips shorter than 2 s give one zero-padded
// segment starting at 0.
Segment sample_segment(const audio::AudioClip& clip, Rng& rng);

// Materializes the segment as an exactly-2 s clip (zero-padded if needed).
audio::AudioClip extract_segment(const audio::AudioClip& clip, const Segment& seg);

struct SynthFacility {
    std::string name;
    double weight = 1.0;
    double pos_frac = -1.0;  // negative: inherit the global positive fraction
};

struct SynthConfig {
    int n_individuals = 120;
    double pos_frac = 0.5;
    std::vector<SynthFacility> facilities = {
        {"F1", 0.35, -1.0}, {"F2", 0.25, -1.0}, {"F3", 0.25, -1.0}, {"F4", 0.15, 0.9}};
    std::uint64_t seed = 42;
};

// Writes 3 cough-like WAV bursts per individual plus a small noise set and
// the manifest. Positive-class clips carry an extra 300-600 Hz component.
// Byte-identical output for identical config. Returns the manifest path.
std::filesystem::path synth_dataset(const SynthConfig& cfg,
                                    const std::filesystem::path& out_dir);

void write_folds_json(const std::filesystem::path& path,
                      std::span<const FoldSplit> folds, std::uint64_t seed);
std::vector<FoldSplit> read_folds_json(const std::filesystem::path& path);

}  // namespace cac::dataset
