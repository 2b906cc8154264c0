// Command-line front end: synth, train, eval, infer, ensemble, triage.
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cac/dataset.hpp"
#include "cac/eval.hpp"
#include "cac/run.hpp"
#include "cac/triage.hpp"

namespace {

using cac::run::RunConfig;

std::vector<std::pair<std::string, std::string>>* collect(
    std::vector<std::pair<std::string, std::string>>& store) {
    return &store;
}

void add_cfg_opt(CLI::App* cmd, std::vector<std::pair<std::string, std::string>>* store,
                 const std::string& flag, const std::string& key, const std::string& desc) {
    cmd->add_option_function<std::string>(
        flag, [store, key](const std::string& v) { store->emplace_back(key, v); }, desc);
}

RunConfig build_cfg(const std::string& config_path,
                    const std::vector<std::pair<std::string, std::string>>& overrides) {
    RunConfig cfg;
    if (!config_path.empty()) cfg = cac::run::load_run_config(config_path);
    cac::run::apply_env_overrides(cfg);
    for (const auto& [key, value] : overrides) cac::run::set_config_option(cfg, key, value);
    return cfg;
}

std::vector<double> parse_double_list(const std::string& csv, const std::string& what) {
    std::vector<double> out;
    std::string item;
    std::istringstream ss(csv);
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t pos = 0;
            out.push_back(std::stod(item, &pos));
            if (pos != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw std::invalid_argument("cannot parse " + what + " '" + item + "'");
        }
    }
    if (out.empty()) throw std::invalid_argument("no " + what + " values given");
    return out;
}

cac::eval::RocCurve read_roc_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open ROC file: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "threshold,sensitivity,specificity") {
        throw std::invalid_argument("not a ROC CSV (bad header): " + path);
    }
    cac::eval::RocCurve curve;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos) {
            throw std::invalid_argument("malformed ROC row: " + line);
        }
        cac::eval::RocPoint p;
        p.threshold = std::stod(line.substr(0, c1));
        p.sensitivity = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
        p.specificity = std::stod(line.substr(c2 + 1));
        curve.points.push_back(p);
    }
    if (curve.points.empty()) throw std::invalid_argument("ROC file has no rows: " + path);
    return curve;
}

void print_metrics_summary(const std::filesystem::path& out_dir) {
    std::ifstream in(out_dir / "metrics.json");
    if (!in) return;
    nlohmann::json j;
    in >> j;
    if (!j.contains("models")) return;
    for (const auto& [name, m] : j["models"].items()) {
        std::printf("%-8s AUC %s  spec@90%%sens %.4f\n", name.c_str(),
                    m["auc_summary"].get<std::string>().c_str(),
                    m["spec_at_90sens"].get<double>());
    }
}

}  // namespace

int main(int argc, char** argv) try {
    CLI::App app{"cough-audio screening toolchain"};
    app.require_subcommand(1);

    // synth ----------------------------------------------------------------
    auto* synth = app.add_subcommand("synth", "Generate the synthetic verification corpus");
    std::string synth_out;
    int synth_n = 120;
    double synth_pos = 0.5;
    std::uint64_t synth_seed = 42;
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--n", synth_n, "number of individuals");
    synth->add_option("--pos-frac", synth_pos, "positive class fraction");
    synth->add_option("--seed", synth_seed, "generator seed");

    // train ----------------------------------------------------------------
    auto* train = app.add_subcommand("train", "Cross-validated training run");
    std::string train_config;
    std::vector<std::pair<std::string, std::string>> train_ov;
    train->add_option("--config", train_config, "key = value config file");
    add_cfg_opt(train, collect(train_ov), "--manifest", "manifest", "manifest CSV");
    add_cfg_opt(train, collect(train_ov), "--out", "out_dir", "output directory");
    add_cfg_opt(train, collect(train_ov), "--noise-dir", "noise_dir", "noise bank directory");
    add_cfg_opt(train, collect(train_ov), "--seed", "seed", "run seed");
    add_cfg_opt(train, collect(train_ov), "--folds", "folds", "number of CV folds");
    add_cfg_opt(train, collect(train_ov), "--val-frac", "val_frac", "validation fraction");
    add_cfg_opt(train, collect(train_ov), "--eligible-facilities", "eligible_facilities",
                "facilities allowed in validation (comma list; empty = automatic)");
    add_cfg_opt(train, collect(train_ov), "--arch", "arch", "conv net architecture string");
    add_cfg_opt(train, collect(train_ov), "--epochs", "epochs", "training epochs");
    add_cfg_opt(train, collect(train_ov), "--lr0", "lr0", "initial learning rate");
    add_cfg_opt(train, collect(train_ov), "--lr-decay", "lr_decay", "decay factor");
    add_cfg_opt(train, collect(train_ov), "--lr-decay-every", "lr_decay_every",
                "epochs per decay step");
    add_cfg_opt(train, collect(train_ov), "--batch-size", "batch_size", "minibatch size");
    add_cfg_opt(train, collect(train_ov), "--smooth-min", "smooth_min", "label smoothing lower bound");
    add_cfg_opt(train, collect(train_ov), "--smooth-max", "smooth_max", "label smoothing upper bound");
    add_cfg_opt(train, collect(train_ov), "--noise-prob", "noise_prob", "noise mixing probability");
    add_cfg_opt(train, collect(train_ov), "--amp-min", "amp_min", "noise amplitude lower bound");
    add_cfg_opt(train, collect(train_ov), "--amp-max", "amp_max", "noise amplitude upper bound");
    add_cfg_opt(train, collect(train_ov), "--time-masks", "time_masks", "time masks per patch");
    add_cfg_opt(train, collect(train_ov), "--time-mask-max", "time_mask_max",
                "max time mask width (frames)");
    add_cfg_opt(train, collect(train_ov), "--freq-masks", "freq_masks", "frequency masks per patch");
    add_cfg_opt(train, collect(train_ov), "--freq-mask-max", "freq_mask_max",
                "max frequency mask width (bins)");
    add_cfg_opt(train, collect(train_ov), "--aggregator", "aggregator",
                "individual-level aggregator: min, mean, median, max");
    add_cfg_opt(train, collect(train_ov), "--models", "models",
                "models to train (comma list of conv_ls, conv, linear)");
    add_cfg_opt(train, collect(train_ov), "--jobs", "jobs", "parallel fold workers");

    // eval -----------------------------------------------------------------
    auto* eval_cmd = app.add_subcommand("eval", "Score validation folds and summarize");
    std::string eval_config;
    std::vector<std::pair<std::string, std::string>> eval_ov;
    eval_cmd->add_option("--config", eval_config, "key = value config file");
    add_cfg_opt(eval_cmd, collect(eval_ov), "--manifest", "manifest", "manifest CSV");
    add_cfg_opt(eval_cmd, collect(eval_ov), "--out", "out_dir", "run directory from train");
    add_cfg_opt(eval_cmd, collect(eval_ov), "--models", "models", "models to evaluate");
    add_cfg_opt(eval_cmd, collect(eval_ov), "--aggregator", "aggregator",
                "individual-level aggregator");

    // infer ----------------------------------------------------------------
    auto* infer = app.add_subcommand("infer", "Score a manifest with one checkpoint");
    std::string infer_config, infer_ckpt;
    std::vector<std::pair<std::string, std::string>> infer_ov;
    infer->add_option("--config", infer_config, "key = value config file");
    infer->add_option("--checkpoint", infer_ckpt, "model checkpoint (.cmdl)")->required();
    add_cfg_opt(infer, collect(infer_ov), "--manifest", "manifest", "manifest CSV");
    add_cfg_opt(infer, collect(infer_ov), "--out", "out_dir", "output directory");
    add_cfg_opt(infer, collect(infer_ov), "--aggregator", "aggregator",
                "individual-level aggregator");

    // ensemble ---------------------------------------------------------------
    auto* ens = app.add_subcommand("ensemble", "Combine per-fold predictions");
    std::string ens_config;
    std::vector<std::pair<std::string, std::string>> ens_ov;
    ens->add_option("--config", ens_config, "key = value config file");
    add_cfg_opt(ens, collect(ens_ov), "--out", "out_dir", "run directory from eval");
    add_cfg_opt(ens, collect(ens_ov), "--models", "models", "base models to combine");

    // triage -----------------------------------------------------------------
    auto* triage = app.add_subcommand("triage", "Testing-capacity lift analysis");
    double t_sens = 0.0, t_spec = 0.0;
    std::string t_prev, t_roc;
    bool t_csv = false;
    auto* sens_opt = triage->add_option("--sens", t_sens, "screen sensitivity");
    auto* spec_opt = triage->add_option("--spec", t_spec, "screen specificity");
    triage->add_option("--prev", t_prev, "comma-separated prevalences")->required();
    auto* roc_opt = triage->add_option("--roc", t_roc, "sweep a ROC CSV instead of one point");
    triage->add_flag("--csv", t_csv, "machine-readable CSV output");
    roc_opt->excludes(sens_opt);
    roc_opt->excludes(spec_opt);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (*synth) {
        if (synth->count("--seed") == 0) {
            RunConfig t;
            t.seed = synth_seed;
            cac::run::apply_env_overrides(t);
            synth_seed = t.seed;
        }
        cac::dataset::SynthConfig cfg;
        cfg.n_individuals = synth_n;
        cfg.pos_frac = synth_pos;
        cfg.seed = synth_seed;
        const auto manifest = cac::dataset::synth_dataset(cfg, synth_out);
        std::cout << "wrote " << manifest.string() << "\n";
        return 0;
    }
    if (*train) {
        const auto cfg = build_cfg(train_config, train_ov);
        cac::run::run_train(cfg);
        std::cout << "trained " << cfg.models.size() << " model(s) x " << cfg.fold.k
                  << " folds -> " << cfg.out_dir.string() << "\n";
        return 0;
    }
    if (*eval_cmd) {
        const auto cfg = build_cfg(eval_config, eval_ov);
        cac::run::run_eval(cfg);
        print_metrics_summary(cfg.out_dir);
        return 0;
    }
    if (*infer) {
        const auto cfg = build_cfg(infer_config, infer_ov);
        cac::run::run_infer(cfg, infer_ckpt);
        std::cout << "wrote " << (cfg.out_dir / "predictions.csv").string() << "\n";
        return 0;
    }
    if (*ens) {
        const auto cfg = build_cfg(ens_config, ens_ov);
        cac::run::run_ensemble(cfg);
        std::ifstream in(cfg.out_dir / "ensemble.json");
        nlohmann::json j;
        in >> j;
        std::cout << "stacked AUC " << j["stacked_auc"].dump();
        if (!j["rank_auc"].is_null()) std::cout << ", rank AUC " << j["rank_auc"].dump();
        std::cout << ", best base " << j["best_base_auc"].dump() << "\n";
        return 0;
    }
    if (*triage) {
        const auto prevs = parse_double_list(t_prev, "prevalence");
        if (triage->count("--roc")) {
            if (prevs.size() != 1) {
                throw std::invalid_argument("--roc mode needs exactly one --prev value");
            }
            const auto curve = read_roc_csv(t_roc);
            const auto result = cac::triage::sweep(curve, prevs[0]);
            if (t_csv) {
                std::printf("threshold,sensitivity,specificity,lift\n");
                for (const auto& r : result.rows) {
                    std::printf("%.10g,%.10g,%.10g,", r.threshold, r.sensitivity, r.specificity);
                    if (r.lift) {
                        std::printf("%.4f\n", *r.lift);
                    } else {
                        std::printf("\n");
                    }
                }
            } else {
                std::printf("%12s %12s %12s %10s\n", "threshold", "sensitivity", "specificity",
                            "lift");
                for (const auto& r : result.rows) {
                    std::printf("%12.4g %12.4f %12.4f ", r.threshold, r.sensitivity,
                                r.specificity);
                    if (r.lift) {
                        std::printf("%10.4f\n", *r.lift);
                    } else {
                        std::printf("%10s\n", "-");
                    }
                }
                const auto& op = result.operating_point;
                std::printf("operating point (sens >= 0.90): threshold %.6g, sens %.4f, "
                            "spec %.4f",
                            op.threshold, op.sensitivity, op.specificity);
                if (op.lift) std::printf(", lift %.4f", *op.lift);
                std::printf("\n");
            }
            return 0;
        }
        if (triage->count("--sens") == 0 || triage->count("--spec") == 0) {
            throw std::invalid_argument("--sens and --spec are required without --roc");
        }
        const auto rows = cac::triage::lift_table(t_sens, t_spec, prevs);
        if (t_csv) {
            std::printf("prevalence,lift,percent\n");
            for (const auto& r : rows) {
                std::printf("%.10g,%.4f,%lld\n", r.prevalence, r.lift, r.percent);
            }
        } else {
            std::printf("%10s %10s %10s\n", "prevalence", "lift", "capacity");
            for (const auto& r : rows) {
                std::printf("%9.2f%% %10.4f %+9lld%%\n", r.prevalence * 100.0, r.lift, r.percent);
            }
        }
        return 0;
    }
    return 0;
} catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
}
