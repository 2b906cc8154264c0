#include "cac/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

namespace cac::dataset {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

bool parse_bool(const std::string& s, int row, const char* field) {
    if (s == "0") return false;
    if (s == "1") return true;
    throw SchemaError("row " + std::to_string(row) + ": " + field + " must be 0 or 1, got '" +
                      s + "'");
}

int parse_age(const std::string& s, int row) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(s, &used);
        if (used != s.size() || v < 0 || v > 130) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw SchemaError("row " + std::to_string(row) + ": bad age '" + s + "'");
    }
}

int pick_weighted(Rng& rng, std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = rng.uniform() * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        u -= weights[i];
        if (u < 0.0) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size()) - 1;
}

}  // namespace

Manifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw SchemaError("manifest is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kManifestHeader) {
        throw SchemaError("manifest header mismatch; expected '" +
                          std::string(kManifestHeader) + "'");
    }

    Manifest man;
    man.dir = path.parent_path();
    std::unordered_set<std::string> seen;
    std::vector<std::string> missing;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_csv(line);
        if (fields.size() != 11) {
            throw SchemaError("row " + std::to_string(row) + ": expected 11 fields, got " +
                              std::to_string(fields.size()));
        }
        IndividualRecord rec;
        rec.id = fields[0];
        rec.facility = fields[1];
        if (rec.id.empty()) throw SchemaError("row " + std::to_string(row) + ": empty id");
        if (rec.facility.empty()) {
            throw SchemaError("row " + std::to_string(row) + ": empty facility");
        }
        if (!seen.insert(rec.id).second) {
            throw DuplicateId("row " + std::to_string(row) + ": duplicate individual_id '" +
                              rec.id + "'");
        }
        rec.age = parse_age(fields[2], row);
        rec.sex = fields[3];
        if (rec.sex != "M" && rec.sex != "F" && rec.sex != "other") {
            throw SchemaError("row " + std::to_string(row) + ": sex must be M, F, or other");
        }
        rec.symptom_cough = parse_bool(fields[4], row, "symptom_cough");
        rec.symptom_fever = parse_bool(fields[5], row, "symptom_fever");
        rec.symptom_dyspnea = parse_bool(fields[6], row, "symptom_dyspnea");
        rec.rtpcr_positive = parse_bool(fields[7], row, "rtpcr_positive");
        for (int i = 0; i < 3; ++i) {
            rec.cough_paths[static_cast<std::size_t>(i)] = fields[static_cast<std::size_t>(8 + i)];
            if (rec.cough_paths[static_cast<std::size_t>(i)].empty()) {
                throw SchemaError("row " + std::to_string(row) + ": cough_path_" +
                                  std::to_string(i + 1) + " is empty");
            }
            const auto full = man.dir / rec.cough_paths[static_cast<std::size_t>(i)];
            if (!std::filesystem::exists(full)) {
                missing.push_back("row " + std::to_string(row) + ": " + full.string());
            }
        }
        man.records.push_back(std::move(rec));
    }
    if (!missing.empty()) {
        std::string msg = "missing audio files:";
        for (const auto& m : missing) msg += "\n  " + m;
        throw MissingAudio(msg);
    }
    return man;
}

std::vector<FoldSplit> make_folds(std::span<const IndividualRecord> records,
                                  const FoldConfig& cfg, std::uint64_t seed) {
    if (cfg.k < 2) throw std::invalid_argument("need k >= 2 folds");
    if (!(cfg.val_frac > 0.0 && cfg.val_frac < 1.0)) {
        throw std::invalid_argument("val_frac outside (0,1)");
    }

    struct FacilityIds {
        std::vector<std::string> pos, neg;
    };
    std::map<std::string, FacilityIds> byfac;
    std::map<std::string, bool> label_of;
    std::map<std::string, std::string> facility_of;
    for (const auto& r : records) {
        if (!label_of.emplace(r.id, r.rtpcr_positive).second) {
            throw DuplicateId("duplicate individual_id '" + r.id + "'");
        }
        facility_of[r.id] = r.facility;
        auto& f = byfac[r.facility];
        (r.rtpcr_positive ? f.pos : f.neg).push_back(r.id);
    }

    const auto k = static_cast<std::size_t>(cfg.k);
    std::vector<std::string> eligible;
    if (!cfg.eligible_facilities.empty()) {
        for (const auto& name : cfg.eligible_facilities) {
            const auto it = byfac.find(name);
            const std::size_t p = it == byfac.end() ? 0 : it->second.pos.size();
            const std::size_t n = it == byfac.end() ? 0 : it->second.neg.size();
            if (p < k || n < k) {
                throw InsufficientClassCount(
                    "facility " + name + " has " + std::to_string(p) + " positives and " +
                    std::to_string(n) + " negatives; validation needs at least " +
                    std::to_string(k) + " of each");
            }
            eligible.push_back(name);
        }
        std::sort(eligible.begin(), eligible.end());
        eligible.erase(std::unique(eligible.begin(), eligible.end()), eligible.end());
    } else {
        for (const auto& [name, ids] : byfac) {
            if (ids.pos.size() >= k && ids.neg.size() >= k) eligible.push_back(name);
        }
        if (eligible.empty()) {
            throw InsufficientClassCount("no facility has at least " + std::to_string(k) +
                                         " positives and " + std::to_string(k) +
                                         " negatives; cannot build validation sets");
        }
    }

    // One shuffled ordering of each facility's class lists drives both the
    // validation slices and the round-robin remainder of upsampling.
    Rng rng(derive_seed(seed, 0xF01D5));
    std::map<std::string, FacilityIds> shuffled;
    for (const auto& [name, ids] : byfac) {
        FacilityIds s = ids;
        std::sort(s.pos.begin(), s.pos.end());
        std::sort(s.neg.begin(), s.neg.end());
        rng.shuffle(s.pos);
        rng.shuffle(s.neg);
        shuffled[name] = std::move(s);
    }

    std::vector<FoldSplit> folds(k);
    for (std::size_t i = 0; i < k; ++i) folds[i].fold_index = static_cast<int>(i);

    for (const auto& name : eligible) {
        const auto& s = shuffled[name];
        const auto n_f = s.pos.size() + s.neg.size();
        auto v = static_cast<std::size_t>(
            std::max<long long>(1, std::llround(cfg.val_frac * static_cast<double>(n_f) / 2.0)));
        v = std::min(v, std::min(s.pos.size(), s.neg.size()) / k);
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = i * v; j < (i + 1) * v; ++j) {
                folds[i].val_ids.push_back(s.pos[j]);
                folds[i].val_ids.push_back(s.neg[j]);
            }
        }
    }

    for (auto& fold : folds) {
        std::unordered_set<std::string> val(fold.val_ids.begin(), fold.val_ids.end());
        for (const auto& [id, lbl] : label_of) {
            if (!val.count(id)) fold.train_ids.push_back(id);
        }

        // Per-facility 1:1 balance: the minority class is duplicated, with
        // the remainder spread round-robin in shuffled order.
        for (const auto& [name, s] : shuffled) {
            std::vector<const std::string*> pos, neg;
            for (const auto& id : s.pos) {
                if (!val.count(id)) pos.push_back(&id);
            }
            for (const auto& id : s.neg) {
                if (!val.count(id)) neg.push_back(&id);
            }
            for (const auto* id : pos) fold.upsample[*id] = 1;
            for (const auto* id : neg) fold.upsample[*id] = 1;
            if (pos.empty() || neg.empty() || pos.size() == neg.size()) continue;
            auto& minority = pos.size() < neg.size() ? pos : neg;
            const auto target = std::max(pos.size(), neg.size());
            const int base = static_cast<int>(target / minority.size());
            const auto rem = target % minority.size();
            for (std::size_t i = 0; i < minority.size(); ++i) {
                fold.upsample[*minority[i]] = base + (i < rem ? 1 : 0);
            }
        }

        std::sort(fold.train_ids.begin(), fold.train_ids.end());
        std::sort(fold.val_ids.begin(), fold.val_ids.end());
    }
    return folds;
}

Segment sample_segment(const audio::AudioClip& clip, Rng& rng) {
    const auto seg_len = static_cast<std::int64_t>(2 * clip.sample_rate_hz);
    const auto len = static_cast<std::int64_t>(clip.samples.size());
    Segment seg;
    seg.source_id = clip.source_id;
    if (len >= seg_len) {
        const auto start = rng.uniform_int(0, len - seg_len);
        seg.start_s = static_cast<double>(start) / clip.sample_rate_hz;
        seg.padded = false;
    } else {
        seg.start_s = 0.0;
        seg.padded = true;
    }
    return seg;
}

audio::AudioClip extract_segment(const audio::AudioClip& clip, const Segment& seg) {
    const auto seg_len = static_cast<std::size_t>(2 * clip.sample_rate_hz);
    const auto start = static_cast<std::size_t>(
        std::llround(seg.start_s * clip.sample_rate_hz));
    audio::AudioClip out;
    out.sample_rate_hz = clip.sample_rate_hz;
    out.source_id = clip.source_id;
    out.samples.assign(seg_len, 0.0f);
    const auto avail = clip.samples.size() > start ? clip.samples.size() - start : 0;
    const auto n = std::min(seg_len, avail);
    std::copy_n(clip.samples.begin() + static_cast<std::ptrdiff_t>(start), n,
                out.samples.begin());
    return out;
}

namespace {

audio::AudioClip synth_cough(Rng& rng, bool positive, const std::string& source_id) {
    const int rate = audio::kCanonicalRateHz;
    const double dur = rng.uniform(3.0, 5.0);
    const auto len = static_cast<std::size_t>(std::llround(dur * rate));
    std::vector<float> s(len);
    for (auto& v : s) v = static_cast<float>(0.004 * rng.uniform(-1.0, 1.0));

    // Positives carry a low tonal component; negatives sometimes carry a
    // high one, so broadband energy alone does not separate the classes.
    const double f0 = positive ? rng.uniform(300.0, 600.0) : rng.uniform(2000.0, 4000.0);
    const bool toned = positive || rng.bernoulli(0.5);
    const auto bursts = rng.uniform_int(3, 5);
    const double ramp_len = 0.01 * rate;
    for (std::int64_t b = 0; b < bursts; ++b) {
        const double onset = rng.uniform(0.1, dur - 0.8);
        const auto t0 = static_cast<std::size_t>(std::llround(onset * rate));
        const auto blen = static_cast<std::size_t>(std::llround(rng.uniform(0.3, 0.65) * rate));
        const double tau = rng.uniform(0.05, 0.15);
        const double amp = rng.uniform(0.35, 0.6);
        const double tone_amp = toned ? amp * rng.uniform(0.6, 1.0) : 0.0;
        const double phase = rng.uniform(0.0, 2.0 * kPi);
        for (std::size_t j = 0; j < blen && t0 + j < len; ++j) {
            const double t = static_cast<double>(j) / rate;
            const double env = std::exp(-t / tau);
            // The tone rides the whole burst at full strength (short cosine
            // ramps at both ends) while the broadband part decays.
            const double up = std::min(1.0, static_cast<double>(j) / ramp_len);
            const double down = std::min(1.0, static_cast<double>(blen - 1 - j) / ramp_len);
            const double v = amp * env * rng.uniform(-1.0, 1.0) +
                             tone_amp * up * down * std::sin(2.0 * kPi * f0 * t + phase);
            s[t0 + j] += static_cast<float>(v);
        }
    }
    for (auto& v : s) v = std::clamp(v, -0.95f, 0.95f);

    audio::AudioClip clip;
    clip.samples = std::move(s);
    clip.sample_rate_hz = rate;
    clip.source_id = source_id;
    return clip;
}

audio::AudioClip synth_noise(Rng& rng, int kind) {
    const int rate = audio::kCanonicalRateHz;
    const auto len = static_cast<std::size_t>(std::llround(rng.uniform(2.5, 3.5) * rate));
    std::vector<float> s(len, 0.0f);
    switch (kind) {
        case 0:  // broadband
            for (auto& v : s) v = static_cast<float>(0.3 * rng.uniform(-1.0, 1.0));
            break;
        case 1: {  // mains hum with a weak floor
            const double p1 = rng.uniform(0.0, 2.0 * kPi);
            const double p2 = rng.uniform(0.0, 2.0 * kPi);
            for (std::size_t j = 0; j < len; ++j) {
                const double t = static_cast<double>(j) / rate;
                s[j] = static_cast<float>(0.2 * std::sin(2.0 * kPi * 50.0 * t + p1) +
                                          0.1 * std::sin(2.0 * kPi * 100.0 * t + p2) +
                                          0.01 * rng.uniform(-1.0, 1.0));
            }
            break;
        }
        case 2: {  // chatter: slowly modulated tones between the class bands
            for (int tone = 0; tone < 5; ++tone) {
                const double f = rng.uniform(900.0, 1800.0);
                const double fm = rng.uniform(0.5, 2.0);
                const double p = rng.uniform(0.0, 2.0 * kPi);
                for (std::size_t j = 0; j < len; ++j) {
                    const double t = static_cast<double>(j) / rate;
                    s[j] += static_cast<float>(
                        0.05 * (1.0 + std::sin(2.0 * kPi * fm * t)) *
                        std::sin(2.0 * kPi * f * t + p));
                }
            }
            break;
        }
        default: {  // sparse clicks
            const auto clicks = rng.uniform_int(15, 25);
            for (std::int64_t c = 0; c < clicks; ++c) {
                const auto t0 = static_cast<std::size_t>(
                    rng.uniform_int(0, static_cast<std::int64_t>(len) - 200));
                const double a = rng.uniform(0.3, 0.7);
                for (std::size_t j = 0; j < 160 && t0 + j < len; ++j) {
                    s[t0 + j] += static_cast<float>(
                        a * std::exp(-static_cast<double>(j) / 30.0) * rng.uniform(-1.0, 1.0));
                }
            }
            break;
        }
    }
    for (auto& v : s) v = std::clamp(v, -0.95f, 0.95f);

    audio::AudioClip clip;
    clip.samples = std::move(s);
    clip.sample_rate_hz = rate;
    return clip;
}

}  // namespace

std::filesystem::path synth_dataset(const SynthConfig& cfg,
                                    const std::filesystem::path& out_dir) {
    if (cfg.n_individuals < 20) throw std::invalid_argument("need at least 20 individuals");
    if (!(cfg.pos_frac > 0.0 && cfg.pos_frac < 1.0)) {
        throw std::invalid_argument("pos_frac outside (0,1)");
    }
    if (cfg.facilities.empty()) throw std::invalid_argument("no facilities configured");
    for (const auto& f : cfg.facilities) {
        if (f.name.empty() || !(f.weight > 0.0)) {
            throw std::invalid_argument("facility needs a name and positive weight");
        }
        if (f.pos_frac >= 0.0 && f.pos_frac > 1.0) {
            throw std::invalid_argument("facility pos_frac outside [0,1]");
        }
    }

    std::error_code ec;
    std::filesystem::create_directories(out_dir / "audio", ec);
    if (ec) throw IoError("cannot create " + (out_dir / "audio").string() + ": " + ec.message());
    std::filesystem::create_directories(out_dir / "noise", ec);
    if (ec) throw IoError("cannot create " + (out_dir / "noise").string() + ": " + ec.message());

    const int n = cfg.n_individuals;
    const auto n_pos = static_cast<int>(std::llround(n * cfg.pos_frac));

    // Label-conditional facility weights keep both the global positive
    // fraction and the per-facility class skew close to the request.
    std::vector<double> wpos, wneg;
    for (const auto& f : cfg.facilities) {
        const double pf = f.pos_frac < 0.0 ? cfg.pos_frac : f.pos_frac;
        wpos.push_back(f.weight * pf);
        wneg.push_back(f.weight * (1.0 - pf));
    }

    Rng meta(derive_seed(cfg.seed, 0xDA7A));
    struct Row {
        std::string id, facility, sex;
        int age;
        bool cough, fever, dyspnea, positive;
    };
    std::vector<Row> rows;
    rows.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Row r;
        char buf[16];
        std::snprintf(buf, sizeof buf, "IND%04d", i + 1);
        r.id = buf;
        r.positive = i < n_pos;
        r.facility = cfg.facilities[static_cast<std::size_t>(
                                        pick_weighted(meta, r.positive ? wpos : wneg))]
                         .name;
        r.age = static_cast<int>(meta.uniform_int(18, 80));
        r.sex = meta.bernoulli(0.5) ? "M" : "F";
        r.cough = meta.bernoulli(r.positive ? 0.8 : 0.3);
        r.fever = meta.bernoulli(r.positive ? 0.6 : 0.2);
        r.dyspnea = meta.bernoulli(r.positive ? 0.4 : 0.1);
        rows.push_back(std::move(r));
    }

    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < 3; ++c) {
            Rng arng(derive_seed(cfg.seed, 0xA0D10, static_cast<std::uint64_t>(i),
                                 static_cast<std::uint64_t>(c)));
            const std::string rel =
                "audio/" + rows[static_cast<std::size_t>(i)].id + "_" + std::to_string(c + 1) +
                ".wav";
            const auto clip =
                synth_cough(arng, rows[static_cast<std::size_t>(i)].positive, rel);
            audio::write_wav16(out_dir / rel, clip);
        }
    }

    static const char* kNoiseNames[4] = {"broadband", "hum", "chatter", "clicks"};
    for (int k = 0; k < 4; ++k) {
        Rng nrng(derive_seed(cfg.seed, 0x0153, static_cast<std::uint64_t>(k)));
        audio::write_wav16(out_dir / "noise" / (std::string(kNoiseNames[k]) + ".wav"),
                           synth_noise(nrng, k));
    }

    const auto manifest_path = out_dir / "manifest.csv";
    std::ofstream out(manifest_path);
    if (!out) throw IoError("cannot write " + manifest_path.string());
    out << kManifestHeader << "\n";
    for (const auto& r : rows) {
        out << r.id << ',' << r.facility << ',' << r.age << ',' << r.sex << ','
            << int{r.cough} << ',' << int{r.fever} << ',' << int{r.dyspnea} << ','
            << int{r.positive};
        for (int c = 1; c <= 3; ++c) {
            out << ",audio/" << r.id << '_' << c << ".wav";
        }
        out << "\n";
    }
    if (!out) throw IoError("write failed for " + manifest_path.string());
    return manifest_path;
}

void write_folds_json(const std::filesystem::path& path, std::span<const FoldSplit> folds,
                      std::uint64_t seed) {
    nlohmann::json j;
    j["seed"] = seed;
    j["k"] = folds.size();
    auto& arr = j["folds"] = nlohmann::json::array();
    for (const auto& f : folds) {
        nlohmann::json jf;
        jf["fold"] = f.fold_index;
        jf["train"] = f.train_ids;
        jf["val"] = f.val_ids;
        jf["upsample"] = f.upsample;
        arr.push_back(std::move(jf));
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

std::vector<FoldSplit> read_folds_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
        std::vector<FoldSplit> folds;
        for (const auto& jf : j.at("folds")) {
            FoldSplit f;
            f.fold_index = jf.at("fold").get<int>();
            f.train_ids = jf.at("train").get<std::vector<std::string>>();
            f.val_ids = jf.at("val").get<std::vector<std::string>>();
            f.upsample = jf.at("upsample").get<std::map<std::string, int>>();
            folds.push_back(std::move(f));
        }
        return folds;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("malformed folds file " + path.string() + ": " + e.what());
    }
}

}  // namespace cac::dataset
