#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "cac/audio.hpp"
#include "cac/dataset.hpp"
#include "cac/rng.hpp"
#include "doctest.h"

using namespace cac;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_tiny_wav(const fs::path& path) {
    audio::AudioClip clip;
    clip.sample_rate_hz = audio::kCanonicalRateHz;
    clip.samples.assign(1600, 0.01f);
    audio::write_wav16(path, clip);
}

// Writes a manifest with `rows` individuals and backing audio files.
fs::path write_manifest(const fs::path& dir, int rows,
                        const std::string& extra_line = {}) {
    const auto path = dir / "manifest.csv";
    std::ofstream out(path);
    out << dataset::kManifestHeader << "\n";
    for (int i = 0; i < rows; ++i) {
        const std::string id = "P" + std::to_string(i);
        for (int j = 1; j <= 3; ++j) write_tiny_wav(dir / (id + "_" + std::to_string(j) + ".wav"));
        out << id << ",F1," << (30 + i) << ",M,1,0,0," << (i % 2) << "," << id << "_1.wav," << id
            << "_2.wav," << id << "_3.wav\n";
    }
    if (!extra_line.empty()) out << extra_line << "\n";
    return path;
}

dataset::IndividualRecord rec(const std::string& id, const std::string& fac, bool positive) {
    dataset::IndividualRecord r;
    r.id = id;
    r.facility = fac;
    r.age = 40;
    r.sex = "F";
    r.rtpcr_positive = positive;
    r.cough_paths = {id + "_1.wav", id + "_2.wav", id + "_3.wav"};
    return r;
}

std::vector<dataset::IndividualRecord> facility_block(const std::string& fac, int n_pos, int n_neg) {
    std::vector<dataset::IndividualRecord> out;
    for (int i = 0; i < n_pos; ++i) out.push_back(rec(fac + "p" + std::to_string(i), fac, true));
    for (int i = 0; i < n_neg; ++i) out.push_back(rec(fac + "n" + std::to_string(i), fac, false));
    return out;
}

}  // namespace

TEST_CASE("well formed manifest loads every row") {
    const auto dir = fresh_dir("cac_man_ok");
    const auto man = dataset::load_manifest(write_manifest(dir, 3));
    CHECK(man.records.size() == 3);
    CHECK(man.records[0].id == "P0");
    CHECK(man.records[1].rtpcr_positive);
    CHECK(man.records[0].cough_paths[2] == "P0_3.wav");
    fs::remove_all(dir);
}

TEST_CASE("short rows are schema errors that name the row") {
    const auto dir = fresh_dir("cac_man_short");
    const auto path = write_manifest(dir, 2, "P9,F1,30,M,1,0,0,1,only_1.wav,only_2.wav");
    try {
        dataset::load_manifest(path);
        FAIL("expected SchemaError");
    } catch (const dataset::SchemaError& e) {
        CHECK(std::string(e.what()).find("row 4") != std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("duplicate ids are rejected") {
    const auto dir = fresh_dir("cac_man_dup");
    const auto path =
        write_manifest(dir, 2, "P1,F1,30,M,1,0,0,1,P1_1.wav,P1_2.wav,P1_3.wav");
    CHECK_THROWS_AS(dataset::load_manifest(path), dataset::DuplicateId);
    fs::remove_all(dir);
}

TEST_CASE("missing audio is reported with the row number") {
    const auto dir = fresh_dir("cac_man_missing");
    const auto path = write_manifest(dir, 1, "P8,F1,30,M,1,0,0,1,gone1.wav,gone2.wav,gone3.wav");
    try {
        dataset::load_manifest(path);
        FAIL("expected MissingAudio");
    } catch (const dataset::MissingAudio& e) {
        const std::string msg = e.what();
        CHECK(msg.find("row 3") != std::string::npos);
        CHECK(msg.find("gone1.wav") != std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("balanced facility contributes one of each class per fold") {
    const auto records = facility_block("F1", 10, 10);
    const auto folds = dataset::make_folds(records, dataset::FoldConfig{}, 42);
    REQUIRE(folds.size() == 5);
    std::set<std::string> seen;
    for (const auto& f : folds) {
        REQUIRE(f.val_ids.size() == 2);
        int pos = 0;
        for (const auto& id : f.val_ids) {
            pos += id[2] == 'p';
            CHECK(seen.insert(id).second);  // never reused across folds
        }
        CHECK(pos == 1);
    }
}

TEST_CASE("train minority multiplicities sum to the majority count") {
    auto records = facility_block("F1", 10, 10);
    const auto g = facility_block("G2", 10, 30);
    records.insert(records.end(), g.begin(), g.end());
    dataset::FoldConfig cfg;
    cfg.eligible_facilities = {"F1"};  // G2 stays fully in train
    const auto folds = dataset::make_folds(records, cfg, 42);
    for (const auto& f : folds) {
        long long pos_mult = 0, neg_mult = 0;
        for (const auto& [id, mult] : f.upsample) {
            if (id.substr(0, 2) != "G2") continue;
            CHECK(mult >= 1);
            (id[2] == 'p' ? pos_mult : neg_mult) += mult;
        }
        CHECK(neg_mult == 30);
        CHECK(pos_mult == 30);  // 10 positives upsampled 3x
    }
}

TEST_CASE("same seed reproduces identical folds") {
    auto records = facility_block("F1", 8, 9);
    const auto more = facility_block("F2", 7, 6);
    records.insert(records.end(), more.begin(), more.end());
    const auto a = dataset::make_folds(records, dataset::FoldConfig{}, 7);
    const auto b = dataset::make_folds(records, dataset::FoldConfig{}, 7);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].train_ids == b[i].train_ids);
        CHECK(a[i].val_ids == b[i].val_ids);
        CHECK(a[i].upsample == b[i].upsample);
    }
}

TEST_CASE("explicitly requested thin facility is an error") {
    const auto records = facility_block("F1", 3, 10);
    dataset::FoldConfig cfg;
    cfg.eligible_facilities = {"F1"};
    CHECK_THROWS_AS(dataset::make_folds(records, cfg, 1), dataset::InsufficientClassCount);
}

TEST_CASE("stratification invariants hold across random manifests") {
    Rng rng(2024);
    for (int trial = 0; trial < 15; ++trial) {
        std::vector<dataset::IndividualRecord> records;
        const int n_fac = static_cast<int>(rng.uniform_int(1, 3));
        for (int f = 0; f < n_fac; ++f) {
            const auto block =
                facility_block("F" + std::to_string(f), static_cast<int>(rng.uniform_int(5, 20)),
                               static_cast<int>(rng.uniform_int(5, 20)));
            records.insert(records.end(), block.begin(), block.end());
        }
        const auto folds = dataset::make_folds(records, dataset::FoldConfig{}, rng.next_u64());
        for (const auto& fold : folds) {
            std::unordered_set<std::string> train(fold.train_ids.begin(), fold.train_ids.end());
            for (const auto& id : fold.val_ids) CHECK_FALSE(train.count(id));

            std::map<std::string, std::pair<int, int>> val_counts;
            for (const auto& id : fold.val_ids) {
                const std::string fac = id.substr(0, 2);
                (id[2] == 'p' ? val_counts[fac].first : val_counts[fac].second)++;
            }
            for (const auto& [fac, counts] : val_counts) CHECK(counts.first == counts.second);

            std::map<std::string, std::pair<long long, long long>> train_mult;
            for (const auto& id : fold.train_ids) {
                const auto it = fold.upsample.find(id);
                REQUIRE(it != fold.upsample.end());
                const std::string fac = id.substr(0, 2);
                (id[2] == 'p' ? train_mult[fac].first : train_mult[fac].second) += it->second;
            }
            for (const auto& [fac, mults] : train_mult) {
                if (mults.first > 0 && mults.second > 0) CHECK(mults.first == mults.second);
            }
        }
    }
}

TEST_CASE("two second clips always start at zero") {
    audio::AudioClip clip;
    clip.sample_rate_hz = audio::kCanonicalRateHz;
    clip.samples.assign(2 * audio::kCanonicalRateHz, 0.1f);
    Rng rng(1);
    for (int i = 0; i < 20; ++i) {
        const auto seg = dataset::sample_segment(clip, rng);
        CHECK(seg.start_s == 0.0);
        CHECK_FALSE(seg.padded);
    }
}

TEST_CASE("short clips are padded to exactly two seconds") {
    audio::AudioClip clip;
    clip.sample_rate_hz = audio::kCanonicalRateHz;
    clip.samples.assign(static_cast<std::size_t>(1.2 * audio::kCanonicalRateHz), 0.5f);
    Rng rng(2);
    const auto seg = dataset::sample_segment(clip, rng);
    CHECK(seg.padded);
    CHECK(seg.start_s == 0.0);
    const auto wave = dataset::extract_segment(clip, seg);
    REQUIRE(wave.samples.size() == 32000);
    int real = 0, zeros = 0;
    for (const float v : wave.samples) (v != 0.0f ? real : zeros)++;
    CHECK(real == 19200);
    CHECK(zeros == 12800);
}

TEST_CASE("segment starts are uniform over the feasible range") {
    audio::AudioClip clip;
    clip.sample_rate_hz = audio::kCanonicalRateHz;
    clip.samples.assign(5 * audio::kCanonicalRateHz, 0.1f);
    Rng rng(3);
    const int n = 10000;
    std::vector<double> starts(n);
    for (auto& s : starts) {
        const auto seg = dataset::sample_segment(clip, rng);
        REQUIRE(seg.start_s >= 0.0);
        REQUIRE(seg.start_s <= 3.0);
        s = seg.start_s;
    }
    std::sort(starts.begin(), starts.end());
    double ks = 0.0;
    for (int i = 0; i < n; ++i) {
        const double cdf = starts[static_cast<std::size_t>(i)] / 3.0;
        ks = std::max(ks, std::abs(cdf - static_cast<double>(i) / n));
        ks = std::max(ks, std::abs(static_cast<double>(i + 1) / n - cdf));
    }
    CHECK(ks < 1.63 / std::sqrt(static_cast<double>(n)));  // KS 1% critical value
}

TEST_CASE("segments never read outside the clip") {
    audio::AudioClip clip;
    clip.sample_rate_hz = audio::kCanonicalRateHz;
    clip.samples.assign(3 * audio::kCanonicalRateHz, 0.0f);
    for (std::size_t i = 0; i < clip.samples.size(); ++i)
        clip.samples[i] = static_cast<float>(i % 97) / 97.0f;
    Rng rng(4);
    for (int i = 0; i < 50; ++i) {
        const auto seg = dataset::sample_segment(clip, rng);
        const auto wave = dataset::extract_segment(clip, seg);
        REQUIRE(wave.samples.size() == 32000);
        const auto start = static_cast<std::size_t>(std::llround(seg.start_s * 16000));
        for (std::size_t j = 0; j < wave.samples.size(); ++j)
            CHECK(wave.samples[j] == clip.samples[start + j]);
    }
}

TEST_CASE("generated corpus counts and determinism") {
    const auto dir_a = fresh_dir("cac_synth_a");
    const auto dir_b = fresh_dir("cac_synth_b");
    dataset::SynthConfig cfg;
    cfg.n_individuals = 20;
    cfg.seed = 11;
    const auto man_path_a = dataset::synth_dataset(cfg, dir_a);
    const auto man_path_b = dataset::synth_dataset(cfg, dir_b);

    const auto man = dataset::load_manifest(man_path_a);
    CHECK(man.records.size() == 20);
    int pos = 0;
    for (const auto& r : man.records) pos += r.rtpcr_positive;
    CHECK(pos == 10);
    int wavs = 0;
    for (const auto& entry : fs::directory_iterator(dir_a / "audio")) {
        wavs += entry.path().extension() == ".wav";
    }
    CHECK(wavs == 60);

    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
    };
    CHECK(slurp(man_path_a) == slurp(man_path_b));
    for (const auto& r : man.records) {
        for (const auto& rel : r.cough_paths) CHECK(slurp(dir_a / rel) == slurp(dir_b / rel));
    }
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}

TEST_CASE("folds json round trips") {
    auto records = facility_block("F1", 6, 6);
    const auto folds = dataset::make_folds(records, dataset::FoldConfig{}, 9);
    const auto dir = fresh_dir("cac_folds_json");
    const auto path = dir / "folds.json";
    dataset::write_folds_json(path, folds, 9);
    const auto back = dataset::read_folds_json(path);
    REQUIRE(back.size() == folds.size());
    for (std::size_t i = 0; i < folds.size(); ++i) {
        CHECK(back[i].fold_index == folds[i].fold_index);
        CHECK(back[i].train_ids == folds[i].train_ids);
        CHECK(back[i].val_ids == folds[i].val_ids);
        CHECK(back[i].upsample == folds[i].upsample);
    }
    fs::remove_all(dir);
}
