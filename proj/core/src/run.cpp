#include "cac/run.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

#include "cac/ensemble.hpp"
#include "cac/eval.hpp"
#include "cac/nn.hpp"
#include "cac/rng.hpp"

namespace cac::run {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string trim(std::string_view s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("bad numeric value for '" + key + "': '" + v + "'");
    }
}

long long to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long long n = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return n;
    } catch (const std::exception&) {
        throw ConfigError("bad integer value for '" + key + "': '" + v + "'");
    }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
        if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
        std::size_t pos = 0;
        const unsigned long long n = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return n;
    } catch (const std::exception&) {
        throw ConfigError("bad seed value for '" + key + "': '" + v + "'");
    }
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream ss(v);
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

enum class ModelKind { kConvSmoothed, kConvHard, kLinear };

ModelKind model_kind(const std::string& name) {
    if (name == "conv_ls") return ModelKind::kConvSmoothed;
    if (name == "conv") return ModelKind::kConvHard;
    if (name == "linear") return ModelKind::kLinear;
    throw ConfigError("unknown model '" + name + "' (expected conv_ls, conv, or linear)");
}

int seg_frames(const dsp::DspConfig& d) {
    const int len = 2 * d.sample_rate_hz;
    return d.center_pad ? len / d.hop_length() + 1 : (len - d.win_length()) / d.hop_length() + 1;
}

struct Loaded {
    dataset::Manifest man;
    std::unordered_map<std::string, std::size_t> index;  // id -> record position
    std::vector<std::array<audio::AudioClip, 3>> clips;
};

Loaded load_clips(const dataset::Manifest& man, const dsp::DspConfig& d) {
    Loaded out;
    out.man = man;
    out.clips.resize(man.records.size());
    for (std::size_t i = 0; i < man.records.size(); ++i) {
        const auto& rec = man.records[i];
        out.index.emplace(rec.id, i);
        for (int c = 0; c < 3; ++c) {
            out.clips[i][c] = audio::canonicalize(audio::load_wav(man.resolve(rec.cough_paths[c])),
                                                  d.sample_rate_hz);
        }
    }
    return out;
}

struct Instance {
    int rec = 0;
    int file = 0;
};

std::vector<Instance> expand_train(const dataset::FoldSplit& fold, const Loaded& d) {
    std::vector<Instance> out;
    for (const auto& id : fold.train_ids) {
        const int rec = static_cast<int>(d.index.at(id));
        const int mult = fold.upsample.at(id);
        for (int m = 0; m < mult; ++m) {
            for (int c = 0; c < 3; ++c) out.push_back({rec, c});
        }
    }
    return out;
}

void atomic_rename_in(const fs::path& tmp, const fs::path& path) { fs::rename(tmp, path); }

void write_checkpoint_atomic(const fs::path& path, const Checkpoint& cp) {
    fs::path tmp = path;
    tmp += ".tmp";
    write_checkpoint(tmp, cp);
    atomic_rename_in(tmp, path);
}

json read_json_or_empty(const fs::path& path) {
    std::ifstream in(path);
    if (!in) return json::object();
    json j;
    in >> j;
    return j;
}

void write_json_atomic(const fs::path& path, const json& j) { atomic_write(path, j.dump(2) + "\n"); }

double train_conv(const RunConfig& cfg, const Loaded& d, const augment::NoiseBank& bank,
                  const dsp::MelFilterbank& fb, const dataset::FoldSplit& fold, double scale,
                  bool smoothed, const fs::path& ckpt_path) {
    const int h = cfg.dsp.n_mels;
    const int w = seg_frames(cfg.dsp);
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    const std::uint64_t tag = fnv1a(smoothed ? "conv_ls" : "conv");
    const auto fold_u = static_cast<std::uint64_t>(fold.fold_index);

    nn::ConvNetF net(cfg.arch, h, w, derive_seed(cfg.seed, 0x1217ULL, fold_u, tag));
    Rng rng(derive_seed(cfg.seed, 0x57A11ULL, fold_u, tag));

    auto insts = expand_train(fold, d);
    std::vector<float> buf;
    std::vector<int> labels;
    std::vector<std::uint64_t> seeds;
    double last_epoch_loss = std::numeric_limits<double>::quiet_NaN();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = nn::ConvNetF::lr_at(cfg.lr0, cfg.lr_decay, cfg.lr_decay_every, epoch);
        rng.shuffle(insts);
        double ep_loss = 0.0;
        int n_batches = 0;
        for (std::size_t i = 0; i < insts.size(); i += static_cast<std::size_t>(cfg.batch_size)) {
            const int n = static_cast<int>(
                std::min<std::size_t>(cfg.batch_size, insts.size() - i));
            const double eps = smoothed ? rng.uniform(cfg.smooth_min, cfg.smooth_max) : 0.0;
            buf.resize(hw * static_cast<std::size_t>(n));
            labels.resize(n);
            seeds.resize(n);
            for (int b = 0; b < n; ++b) {
                const auto& inst = insts[i + static_cast<std::size_t>(b)];
                const auto& clip = d.clips[static_cast<std::size_t>(inst.rec)][inst.file];
                auto wave = dataset::extract_segment(clip, dataset::sample_segment(clip, rng));
                if (!bank.empty() && rng.bernoulli(cfg.aug.noise_prob)) {
                    wave = augment::mix_noise(wave, bank, cfg.aug, rng);
                }
                auto patch = fb.apply(dsp::stft_magnitude(wave, cfg.dsp));
                patch = dsp::apply_rescale(patch, scale);
                patch = augment::spec_mask(patch, cfg.aug, rng);
                float* dst = buf.data() + static_cast<std::size_t>(b) * hw;
                for (std::size_t j = 0; j < hw; ++j) dst[j] = static_cast<float>(patch.values[j]);
                labels[b] = d.man.records[static_cast<std::size_t>(inst.rec)].rtpcr_positive ? 1 : 0;
                seeds[b] = rng.next_u64();
            }
            ep_loss += net.loss_and_grad(buf, labels, eps, seeds);
            net.sgd_step(lr);
            ++n_batches;
        }
        if (n_batches > 0) last_epoch_loss = ep_loss / n_batches;
    }
    write_checkpoint_atomic(ckpt_path, net.to_checkpoint(scale));
    return last_epoch_loss;
}

double train_linear_model(const Loaded& d,
                          const std::vector<std::array<dsp::HandcraftedFeatures, 3>>& feats,
                          const dataset::FoldSplit& fold, const fs::path& ckpt_path) {
    std::vector<double> x;
    std::vector<int> y;
    for (const auto& id : fold.train_ids) {
        const auto rec = d.index.at(id);
        const int mult = fold.upsample.at(id);
        const int label = d.man.records[rec].rtpcr_positive ? 1 : 0;
        for (int m = 0; m < mult; ++m) {
            for (int c = 0; c < 3; ++c) {
                const auto& f = feats[rec][static_cast<std::size_t>(c)].values;
                x.insert(x.end(), f.begin(), f.end());
                y.push_back(label);
            }
        }
    }
    const auto model = linear::train_logistic(x, dsp::HandcraftedFeatures::kDim, y, {});
    write_checkpoint_atomic(ckpt_path, linear_to_checkpoint(model));

    double nll = 0.0;
    for (std::size_t r = 0; r < y.size(); ++r) {
        const double p = model.predict(
            std::span<const double>(x).subspan(r * dsp::HandcraftedFeatures::kDim,
                                               dsp::HandcraftedFeatures::kDim));
        nll -= std::log(std::max(y[r] ? p : 1.0 - p, 1e-300));
    }
    return nll / static_cast<double>(y.size());
}

void for_each_fold(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    const int workers = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(jobs), n));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
            } catch (...) {
                errors[static_cast<std::size_t>(t)] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

// One checkpoint turned back into a scoring function over an individual's
// three files. Conv nets score all 2 s windows of a file in a single batched
// forward pass; the linear model scores the whole file from its hand-crafted
// vector (matching how it was trained).
class CheckpointScorer {
public:
    CheckpointScorer(const Checkpoint& cp, const RunConfig& cfg, const dsp::MelFilterbank& fb)
        : cfg_(cfg), fb_(fb) {
        if (cp.arch.rfind("linear", 0) == 0) {
            lin_ = linear_from_checkpoint(cp);
        } else {
            net_ = nn::ConvNetF::from_checkpoint(cp);
            rescale_ = cp.rescale;
            const int h = cfg.dsp.n_mels;
            const int w = seg_frames(cfg.dsp);
            if (net_->in_h() != h || net_->in_w() != w) {
                throw BadCheckpoint("checkpoint expects " + std::to_string(net_->in_h()) + "x" +
                                    std::to_string(net_->in_w()) + " input, dsp config yields " +
                                    std::to_string(h) + "x" + std::to_string(w));
            }
        }
    }

    std::array<inference::FileScore, 3> score_files(
        const std::string& id, const std::array<audio::AudioClip, 3>& clips) const {
        std::array<inference::FileScore, 3> files;
        for (int c = 0; c < 3; ++c) {
            const auto& clip = clips[static_cast<std::size_t>(c)];
            inference::FileScore fsc;
            fsc.source_id = id;
            if (lin_) {
                const auto feats = dsp::handcrafted(clip, cfg_.dsp);
                const double p = lin_->predict(feats.values);
                fsc.segment_probs = {p};
                fsc.file_prob = p;
            } else {
                const auto segs = inference::windows(clip.duration_s(), clip.sample_rate_hz);
                const std::size_t hw =
                    static_cast<std::size_t>(net_->in_h()) * static_cast<std::size_t>(net_->in_w());
                std::vector<float> buf(hw * segs.size());
                for (std::size_t s = 0; s < segs.size(); ++s) {
                    const auto wave = dataset::extract_segment(clip, segs[s]);
                    auto patch = fb_.apply(dsp::stft_magnitude(wave, cfg_.dsp));
                    patch = dsp::apply_rescale(patch, rescale_);
                    float* dst = buf.data() + s * hw;
                    for (std::size_t j = 0; j < hw; ++j) {
                        dst[j] = static_cast<float>(patch.values[j]);
                    }
                }
                fsc.segment_probs = net_->predict_batch(buf, static_cast<int>(segs.size()));
                fsc.file_prob = median_of(fsc.segment_probs);
            }
            files[static_cast<std::size_t>(c)] = std::move(fsc);
        }
        return files;
    }

private:
    const RunConfig& cfg_;
    const dsp::MelFilterbank& fb_;
    std::optional<linear::LogisticModel> lin_;
    std::optional<nn::ConvNetF> net_;
    double rescale_ = 1.0;
};

struct PredRow {
    std::string id;
    double prob = 0.0;
    int label = 0;
};

std::vector<PredRow> read_preds_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || trim(line) != "individual_id,indiv_prob,label") {
        throw std::runtime_error("unexpected header in " + path.string());
    }
    std::vector<PredRow> rows;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty()) continue;
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos) {
            throw std::runtime_error("malformed row in " + path.string() + ": " + line);
        }
        PredRow r;
        r.id = line.substr(0, c1);
        r.prob = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
        r.label = std::stoi(line.substr(c2 + 1));
        rows.push_back(std::move(r));
    }
    return rows;
}

double auc_of(const std::vector<std::pair<double, int>>& scored) {
    return eval::roc(scored).auc;
}

}  // namespace

void RunConfig::validate() const {
    if (manifest.empty()) throw ConfigError("manifest path is required");
    if (!fs::exists(manifest)) throw ConfigError("manifest does not exist: " + manifest.string());
    if (out_dir.empty()) throw ConfigError("output directory is required");
    if (!noise_dir.empty() && !fs::exists(noise_dir)) {
        throw ConfigError("noise directory does not exist: " + noise_dir.string());
    }
    if (fold.k < 2) throw ConfigError("folds must be >= 2");
    if (!(fold.val_frac > 0.0 && fold.val_frac < 1.0)) {
        throw ConfigError("val_frac must lie in (0, 1)");
    }
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(lr0 > 0.0)) throw ConfigError("lr0 must be positive");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr_decay must lie in (0, 1]");
    if (lr_decay_every < 1) throw ConfigError("lr_decay_every must be >= 1");
    if (!(smooth_min >= 0.0 && smooth_min <= smooth_max && smooth_max < 1.0)) {
        throw ConfigError("label smoothing bounds need 0 <= smooth_min <= smooth_max < 1");
    }
    if (jobs < 1) throw ConfigError("jobs must be >= 1");
    if (models.empty()) throw ConfigError("at least one model is required");
    std::unordered_set<std::string> seen;
    for (const auto& m : models) {
        model_kind(m);
        if (!seen.insert(m).second) throw ConfigError("duplicate model '" + m + "'");
    }
    try {
        aug.validate();
        dsp.validate();
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
}

void set_config_option(RunConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "manifest") {
        cfg.manifest = value;
    } else if (key == "out_dir" || key == "out") {
        cfg.out_dir = value;
    } else if (key == "noise_dir") {
        cfg.noise_dir = value;
    } else if (key == "seed") {
        cfg.seed = to_u64(key, value);
    } else if (key == "folds") {
        cfg.fold.k = static_cast<int>(to_int(key, value));
    } else if (key == "val_frac") {
        cfg.fold.val_frac = to_double(key, value);
    } else if (key == "eligible_facilities") {
        cfg.fold.eligible_facilities = split_list(value);
    } else if (key == "arch") {
        cfg.arch = value;
    } else if (key == "epochs") {
        cfg.epochs = static_cast<int>(to_int(key, value));
    } else if (key == "lr0") {
        cfg.lr0 = to_double(key, value);
    } else if (key == "lr_decay") {
        cfg.lr_decay = to_double(key, value);
    } else if (key == "lr_decay_every") {
        cfg.lr_decay_every = static_cast<int>(to_int(key, value));
    } else if (key == "batch_size") {
        cfg.batch_size = static_cast<int>(to_int(key, value));
    } else if (key == "smooth_min") {
        cfg.smooth_min = to_double(key, value);
    } else if (key == "smooth_max") {
        cfg.smooth_max = to_double(key, value);
    } else if (key == "noise_prob") {
        cfg.aug.noise_prob = to_double(key, value);
    } else if (key == "amp_min") {
        cfg.aug.amp_min = to_double(key, value);
    } else if (key == "amp_max") {
        cfg.aug.amp_max = to_double(key, value);
    } else if (key == "time_masks") {
        cfg.aug.n_time_masks = static_cast<int>(to_int(key, value));
    } else if (key == "time_mask_max") {
        cfg.aug.max_time_mask_frames = static_cast<int>(to_int(key, value));
    } else if (key == "freq_masks") {
        cfg.aug.n_freq_masks = static_cast<int>(to_int(key, value));
    } else if (key == "freq_mask_max") {
        cfg.aug.max_freq_mask_bins = static_cast<int>(to_int(key, value));
    } else if (key == "aggregator") {
        try {
            cfg.aggregator = inference::parse_aggregator(value);
        } catch (const std::exception& e) {
            throw ConfigError(e.what());
        }
    } else if (key == "models") {
        cfg.models = split_list(value);
    } else if (key == "jobs") {
        cfg.jobs = static_cast<int>(to_int(key, value));
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

RunConfig load_run_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    RunConfig cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) +
                              " is not key = value: '" + stripped + "'");
        }
        set_config_option(cfg, trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
    }
    return cfg;
}

void apply_env_overrides(RunConfig& cfg) {
    if (const char* env = std::getenv("CAC_SEED"); env && *env) {
        cfg.seed = to_u64("CAC_SEED", env);
    }
}

void atomic_write(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw std::runtime_error("short write to " + tmp.string());
    }
    atomic_rename_in(tmp, path);
}

Checkpoint linear_to_checkpoint(const linear::LogisticModel& model) {
    Checkpoint cp;
    cp.arch = "linear" + std::to_string(model.input_dim);
    cp.in_h = 1;
    cp.in_w = model.input_dim;
    cp.rescale = 1.0;
    const auto row = [](const std::vector<double>& v) {
        io::MatF32 t;
        t.rows = 1;
        t.cols = static_cast<std::uint32_t>(v.size());
        t.values.reserve(v.size());
        for (double d : v) t.values.push_back(static_cast<float>(d));
        return t;
    };
    cp.tensors.emplace_back("weights", row(model.weights));
    cp.tensors.emplace_back("bias", row({model.bias}));
    cp.tensors.emplace_back("feat_mean", row(model.mean));
    cp.tensors.emplace_back("feat_std", row(model.stddev));
    std::vector<double> kept(model.kept.begin(), model.kept.end());
    cp.tensors.emplace_back("kept", row(kept));
    return cp;
}

linear::LogisticModel linear_from_checkpoint(const Checkpoint& cp) {
    linear::LogisticModel model;
    model.input_dim = cp.in_w;
    const io::MatF32* tensors[5] = {};
    const char* names[5] = {"weights", "bias", "feat_mean", "feat_std", "kept"};
    for (const auto& [name, mat] : cp.tensors) {
        for (int i = 0; i < 5; ++i) {
            if (name == names[i]) tensors[i] = &mat;
        }
    }
    for (int i = 0; i < 5; ++i) {
        if (!tensors[i]) {
            throw BadCheckpoint(std::string("linear checkpoint missing tensor '") + names[i] + "'");
        }
    }
    const std::size_t k = tensors[0]->values.size();
    if (tensors[1]->values.size() != 1 || tensors[2]->values.size() != k ||
        tensors[3]->values.size() != k || tensors[4]->values.size() != k) {
        throw BadCheckpoint("linear checkpoint tensor sizes disagree");
    }
    model.weights.assign(tensors[0]->values.begin(), tensors[0]->values.end());
    model.bias = tensors[1]->values[0];
    model.mean.assign(tensors[2]->values.begin(), tensors[2]->values.end());
    model.stddev.assign(tensors[3]->values.begin(), tensors[3]->values.end());
    model.kept.reserve(k);
    for (float f : tensors[4]->values) model.kept.push_back(static_cast<int>(std::lround(f)));
    return model;
}

void run_train(const RunConfig& cfg) {
    cfg.validate();
    fs::create_directories(cfg.out_dir);

    const auto man = dataset::load_manifest(cfg.manifest);
    const Loaded d = load_clips(man, cfg.dsp);
    const auto folds = dataset::make_folds(d.man.records, cfg.fold, cfg.seed);
    {
        fs::path tmp = cfg.out_dir / "folds.json";
        tmp += ".tmp";
        dataset::write_folds_json(tmp, folds, cfg.seed);
        atomic_rename_in(tmp, cfg.out_dir / "folds.json");
    }

    const dsp::MelFilterbank fb(cfg.dsp);
    bool want_conv = false, want_linear = false;
    for (const auto& m : cfg.models) {
        (model_kind(m) == ModelKind::kLinear ? want_linear : want_conv) = true;
    }

    // Full-clip log-mel patches; the rescale scalar is fit on each fold's
    // training clips only.
    std::vector<dsp::LogMelPatch> patches;
    if (want_conv) {
        patches.resize(d.clips.size() * 3);
        for (std::size_t i = 0; i < d.clips.size(); ++i) {
            for (int c = 0; c < 3; ++c) {
                patches[i * 3 + static_cast<std::size_t>(c)] =
                    fb.apply(dsp::stft_magnitude(d.clips[i][static_cast<std::size_t>(c)], cfg.dsp));
            }
        }
    }
    std::vector<std::array<dsp::HandcraftedFeatures, 3>> feats;
    if (want_linear) {
        feats.resize(d.clips.size());
        for (std::size_t i = 0; i < d.clips.size(); ++i) {
            for (int c = 0; c < 3; ++c) {
                feats[i][static_cast<std::size_t>(c)] =
                    dsp::handcrafted(d.clips[i][static_cast<std::size_t>(c)], cfg.dsp);
            }
        }
    }
    const augment::NoiseBank bank =
        cfg.noise_dir.empty() ? augment::NoiseBank{} : augment::load_noise_bank(cfg.noise_dir);

    std::vector<std::map<std::string, double>> losses(folds.size());
    for_each_fold(folds.size(), cfg.jobs, [&](std::size_t fi) {
        const auto& fold = folds[fi];
        const fs::path fdir = cfg.out_dir / ("fold" + std::to_string(fold.fold_index));
        fs::create_directories(fdir);

        double scale = 1.0;
        if (want_conv) {
            std::vector<const dsp::LogMelPatch*> train_patches;
            train_patches.reserve(fold.train_ids.size() * 3);
            for (const auto& id : fold.train_ids) {
                const auto rec = d.index.at(id);
                for (int c = 0; c < 3; ++c) {
                    train_patches.push_back(&patches[rec * 3 + static_cast<std::size_t>(c)]);
                }
            }
            scale = dsp::fit_rescale(train_patches);
        }

        for (const auto& name : cfg.models) {
            const fs::path ckpt = fdir / (name + ".cmdl");
            double loss = 0.0;
            switch (model_kind(name)) {
                case ModelKind::kConvSmoothed:
                    loss = train_conv(cfg, d, bank, fb, fold, scale, true, ckpt);
                    break;
                case ModelKind::kConvHard:
                    loss = train_conv(cfg, d, bank, fb, fold, scale, false, ckpt);
                    break;
                case ModelKind::kLinear:
                    loss = train_linear_model(d, feats, fold, ckpt);
                    break;
            }
            losses[fi][name] = loss;
        }
    });

    json j;
    j["seed"] = cfg.seed;
    j["k"] = cfg.fold.k;
    j["val_frac"] = cfg.fold.val_frac;
    j["arch"] = cfg.arch;
    j["epochs"] = cfg.epochs;
    j["lr0"] = cfg.lr0;
    j["lr_decay"] = cfg.lr_decay;
    j["lr_decay_every"] = cfg.lr_decay_every;
    j["batch_size"] = cfg.batch_size;
    j["smooth_min"] = cfg.smooth_min;
    j["smooth_max"] = cfg.smooth_max;
    j["aggregator"] = inference::to_string(cfg.aggregator);
    j["models_trained"] = cfg.models;
    j["n_individuals"] = d.man.records.size();
    json tl = json::array();
    for (std::size_t fi = 0; fi < losses.size(); ++fi) {
        json entry;
        entry["fold"] = fi;
        for (const auto& [name, loss] : losses[fi]) entry[name] = loss;
        tl.push_back(std::move(entry));
    }
    j["train_loss"] = std::move(tl);
    write_json_atomic(cfg.out_dir / "metrics.json", j);
}

void run_eval(const RunConfig& cfg) {
    cfg.validate();
    const auto folds = dataset::read_folds_json(cfg.out_dir / "folds.json");
    const auto man = dataset::load_manifest(cfg.manifest);
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < man.records.size(); ++i) index.emplace(man.records[i].id, i);

    const dsp::MelFilterbank fb(cfg.dsp);
    std::map<std::string, std::vector<std::pair<double, int>>> pooled;
    std::map<std::string, std::vector<double>> fold_aucs;

    for (const auto& fold : folds) {
        std::vector<std::array<audio::AudioClip, 3>> clips(fold.val_ids.size());
        std::vector<int> labels(fold.val_ids.size());
        for (std::size_t v = 0; v < fold.val_ids.size(); ++v) {
            const auto it = index.find(fold.val_ids[v]);
            if (it == index.end()) {
                throw ConfigError("folds.json references individual '" + fold.val_ids[v] +
                                  "' missing from the manifest");
            }
            const auto& rec = man.records[it->second];
            labels[v] = rec.rtpcr_positive ? 1 : 0;
            for (int c = 0; c < 3; ++c) {
                clips[v][static_cast<std::size_t>(c)] = audio::canonicalize(
                    audio::load_wav(man.resolve(rec.cough_paths[static_cast<std::size_t>(c)])),
                    cfg.dsp.sample_rate_hz);
            }
        }
        const fs::path fdir = cfg.out_dir / ("fold" + std::to_string(fold.fold_index));
        for (const auto& name : cfg.models) {
            const auto cp = read_checkpoint(fdir / (name + ".cmdl"));
            const CheckpointScorer scorer(cp, cfg, fb);

            std::string seg_csv = "individual_id,file_index,segment_index,p_pos\n";
            std::string pred_csv = "individual_id,indiv_prob,label\n";
            std::vector<std::pair<double, int>> fold_scored;
            for (std::size_t v = 0; v < fold.val_ids.size(); ++v) {
                const auto& id = fold.val_ids[v];
                const auto files = scorer.score_files(id, clips[v]);
                const auto indiv = inference::score_individual(id, files, cfg.aggregator);
                for (int c = 0; c < 3; ++c) {
                    const auto& probs = files[static_cast<std::size_t>(c)].segment_probs;
                    for (std::size_t s = 0; s < probs.size(); ++s) {
                        seg_csv += id + "," + std::to_string(c + 1) + "," + std::to_string(s) +
                                   "," + fmt(probs[s]) + "\n";
                    }
                }
                pred_csv += id + "," + fmt(indiv.indiv_prob) + "," + std::to_string(labels[v]) +
                            "\n";
                fold_scored.emplace_back(indiv.indiv_prob, labels[v]);
                pooled[name].emplace_back(indiv.indiv_prob, labels[v]);
            }
            atomic_write(fdir / ("segments_" + name + ".csv"), seg_csv);
            atomic_write(fdir / ("preds_" + name + ".csv"), pred_csv);
            fold_aucs[name].push_back(auc_of(fold_scored));
        }
    }

    json j = read_json_or_empty(cfg.out_dir / "metrics.json");
    for (const auto& name : cfg.models) {
        const auto curve = eval::roc(pooled[name]);
        {
            fs::path tmp = cfg.out_dir / ("roc_" + name + ".csv");
            tmp += ".tmp";
            eval::write_roc_csv(tmp, curve);
            atomic_rename_in(tmp, cfg.out_dir / ("roc_" + name + ".csv"));
        }
        const auto [spec, thr] = eval::spec_at_sens(curve, 0.90);
        const auto [mean, sd] = eval::fold_summary(fold_aucs[name]);

        json m;
        m["auc_per_fold"] = fold_aucs[name];
        m["auc_mean"] = mean;
        m["auc_std"] = sd;
        m["auc_summary"] = eval::format_mean_std(mean, sd);
        m["pooled_auc"] = curve.auc;
        m["spec_at_90sens"] = spec;
        m["spec_at_90sens_threshold"] = thr;
        try {
            const auto [t, p] = eval::t_test(fold_aucs[name], 0.5);
            m["t_stat"] = t;
            m["p_value"] = p;
        } catch (const eval::ZeroVariance&) {
            m["t_stat"] = nullptr;
            m["p_value"] = nullptr;
        }
        j["models"][name] = std::move(m);
    }
    const json first = j["models"][cfg.models.front()];
    j["auc_mean"] = first["auc_mean"];
    j["auc_std"] = first["auc_std"];
    j["spec_at_90sens"] = first["spec_at_90sens"];
    write_json_atomic(cfg.out_dir / "metrics.json", j);
}

void run_ensemble(const RunConfig& cfg) {
    // Works purely from files run_eval wrote, so the manifest is not needed.
    if (cfg.out_dir.empty()) throw ConfigError("output directory is required");
    if (cfg.models.empty()) throw ConfigError("at least one model is required");
    for (const auto& m : cfg.models) model_kind(m);
    const auto folds = dataset::read_folds_json(cfg.out_dir / "folds.json");

    ensemble::PredictionMatrix pm;
    pm.model_names = cfg.models;
    for (const auto& fold : folds) {
        const fs::path fdir = cfg.out_dir / ("fold" + std::to_string(fold.fold_index));
        std::vector<std::vector<PredRow>> per_model;
        per_model.reserve(cfg.models.size());
        for (const auto& name : cfg.models) {
            per_model.push_back(read_preds_csv(fdir / ("preds_" + name + ".csv")));
            if (per_model.back().size() != per_model.front().size()) {
                throw std::runtime_error("prediction row counts disagree in fold " +
                                         std::to_string(fold.fold_index));
            }
        }
        for (std::size_t r = 0; r < per_model.front().size(); ++r) {
            const auto& base = per_model.front()[r];
            pm.ids.push_back(base.id);
            pm.labels.push_back(base.label);
            pm.provenance.push_back(fold.fold_index);
            for (std::size_t m = 0; m < per_model.size(); ++m) {
                const auto& row = per_model[m][r];
                if (row.id != base.id || row.label != base.label) {
                    throw std::runtime_error("prediction rows disagree on '" + base.id +
                                             "' in fold " + std::to_string(fold.fold_index));
                }
                pm.values.push_back(row.prob);
            }
        }
    }
    pm.validate();

    std::vector<std::unordered_set<std::string>> train_sets;
    train_sets.reserve(folds.size());
    for (const auto& fold : folds) {
        train_sets.emplace_back(fold.train_ids.begin(), fold.train_ids.end());
    }

    json j;
    j["models"] = cfg.models;
    j["n"] = pm.n();
    double best_base = 0.0;
    for (std::size_t m = 0; m < pm.m(); ++m) {
        std::vector<std::pair<double, int>> col;
        col.reserve(pm.n());
        for (std::size_t r = 0; r < pm.n(); ++r) col.emplace_back(pm.at(r, m), pm.labels[r]);
        const double a = auc_of(col);
        j["base_auc"][pm.model_names[m]] = a;
        best_base = std::max(best_base, a);
    }
    j["best_base_auc"] = best_base;

    const auto write_scores = [&](const fs::path& path, const std::vector<double>& scores) {
        std::string csv = "individual_id,prob,label\n";
        for (std::size_t r = 0; r < pm.n(); ++r) {
            csv += pm.ids[r] + "," + fmt(scores[r]) + "," + std::to_string(pm.labels[r]) + "\n";
        }
        atomic_write(path, csv);
    };

    if (pm.m() >= 2) {
        const auto rank_scores = ensemble::rank_ensemble(pm);
        std::vector<std::pair<double, int>> scored;
        scored.reserve(pm.n());
        for (std::size_t r = 0; r < pm.n(); ++r) scored.emplace_back(rank_scores[r], pm.labels[r]);
        j["rank_auc"] = auc_of(scored);
        write_scores(cfg.out_dir / "ensemble_rank.csv", rank_scores);
    } else {
        j["rank_auc"] = nullptr;
    }

    const auto stacked = ensemble::stack(pm, {}, train_sets);
    std::vector<std::pair<double, int>> scored;
    scored.reserve(pm.n());
    for (std::size_t r = 0; r < pm.n(); ++r) scored.emplace_back(stacked.oof_scores[r], pm.labels[r]);
    j["stacked_auc"] = auc_of(scored);
    write_scores(cfg.out_dir / "ensemble_stacked.csv", stacked.oof_scores);

    write_json_atomic(cfg.out_dir / "ensemble.json", j);
}

void run_infer(const RunConfig& cfg, const fs::path& checkpoint_path) {
    cfg.validate();
    if (!fs::exists(checkpoint_path)) {
        throw ConfigError("checkpoint does not exist: " + checkpoint_path.string());
    }
    fs::create_directories(cfg.out_dir);
    const auto man = dataset::load_manifest(cfg.manifest);
    const dsp::MelFilterbank fb(cfg.dsp);
    const auto cp = read_checkpoint(checkpoint_path);
    const CheckpointScorer scorer(cp, cfg, fb);

    std::string seg_csv = "individual_id,file_index,segment_index,p_pos\n";
    std::string pred_csv = "individual_id,indiv_prob,label\n";
    for (const auto& rec : man.records) {
        std::array<audio::AudioClip, 3> clips;
        for (int c = 0; c < 3; ++c) {
            clips[static_cast<std::size_t>(c)] = audio::canonicalize(
                audio::load_wav(man.resolve(rec.cough_paths[static_cast<std::size_t>(c)])),
                cfg.dsp.sample_rate_hz);
        }
        const auto files = scorer.score_files(rec.id, clips);
        const auto indiv = inference::score_individual(rec.id, files, cfg.aggregator);
        for (int c = 0; c < 3; ++c) {
            const auto& probs = files[static_cast<std::size_t>(c)].segment_probs;
            for (std::size_t s = 0; s < probs.size(); ++s) {
                seg_csv += rec.id + "," + std::to_string(c + 1) + "," + std::to_string(s) + "," +
                           fmt(probs[s]) + "\n";
            }
        }
        pred_csv += rec.id + "," + fmt(indiv.indiv_prob) + "," +
                    std::to_string(rec.rtpcr_positive ? 1 : 0) + "\n";
    }
    atomic_write(cfg.out_dir / "predictions_segments.csv", seg_csv);
    atomic_write(cfg.out_dir / "predictions.csv", pred_csv);
}

}  // namespace cac::run
