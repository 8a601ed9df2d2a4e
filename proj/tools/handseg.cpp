#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "handseg/bench.hpp"
#include "handseg/data.hpp"
#include "handseg/eval.hpp"
#include "handseg/network.hpp"
#include "handseg/training.hpp"

namespace fs = std::filesystem;
using namespace handseg;

namespace {

struct KeyDef {
    const char* key;
    const char* def;
    const char* help;
};

const std::vector<KeyDef>& key_table() {
    static const std::vector<KeyDef> keys = {
        {"seed", "1", "master RNG seed for synthesis, init and training"},
        {"profile", "desk", "resolution profile: desk (188x120) or paper (752x480)"},
        {"synth.count", "200", "number of synthetic samples to generate"},
        {"synth.hand_min", "1", "minimum hands per image"},
        {"synth.hand_max", "2", "maximum hands per image"},
        {"synth.distractor_prob", "1.0", "probability of skin-colored non-hand blobs"},
        {"train.epochs1", "30", "stage-1 training epochs"},
        {"train.epochs2", "12", "stage-2 training epochs"},
        {"train.batch", "4", "minibatch size"},
        {"loss.alpha", "2", "boosted cross-entropy exponent"},
        {"loss.epsilon", "1e-7", "probability clamp for the loss"},
        {"opt.lr", "1e-3", "RMSprop learning rate"},
        {"opt.decay", "0.9", "RMSprop decay"},
        {"opt.eps", "1e-8", "RMSprop denominator epsilon"},
        {"aug.scale_min", "0.9", "augmentation scale lower bound"},
        {"aug.scale_max", "1.1", "augmentation scale upper bound"},
        {"aug.rotation_deg", "10", "max augmentation rotation (degrees)"},
        {"aug.shear_deg", "5", "max augmentation shear (degrees)"},
        {"aug.translate_px", "20", "max augmentation translation (pixels per axis)"},
        {"bench.reps", "50", "timed repetitions per benchmark variant"},
        {"eval.thresholds", "256", "threshold count for ROC and accuracy sweeps"},
        {"infer.threshold", "0.5", "probability threshold for the output mask"},
        {"infer.bg_color", "0.1,0.8,0.1", "flat composite background color r,g,b"},
    };
    return keys;
}

class RunConfig {
public:
    RunConfig() {
        for (const auto& k : key_table()) values_[k.key] = k.def;
    }

    void set(const std::string& key, const std::string& value) {
        if (!values_.count(key)) throw std::runtime_error("unknown config key '" + key + "'");
        values_[key] = value;
    }

    void load_file(const fs::path& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open config file " + path.string());
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::size_t hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            const auto first = line.find_first_not_of(" \t\r");
            if (first == std::string::npos) continue;
            const std::size_t eq = line.find('=');
            if (eq == std::string::npos) {
                throw std::runtime_error("config line " + std::to_string(lineno) +
                                         ": expected key=value");
            }
            auto trim = [](std::string s) {
                const auto a = s.find_first_not_of(" \t\r");
                const auto b = s.find_last_not_of(" \t\r");
                return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
            };
            set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
    }

    // HANDSEG_TRAIN_EPOCHS1 overrides train.epochs1
    void load_env() {
        for (const auto& k : key_table()) {
            std::string name = "HANDSEG_";
            for (const char* p = k.key; *p; ++p) {
                name += *p == '.' ? '_' : static_cast<char>(std::toupper(*p));
            }
            if (const char* v = std::getenv(name.c_str())) values_[k.key] = v;
        }
    }

    const std::string& str(const std::string& key) const { return values_.at(key); }
    double num(const std::string& key) const {
        const std::string& s = values_.at(key);
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) {
            throw std::runtime_error("config key '" + key + "': bad number '" + s + "'");
        }
        return v;
    }
    int integer(const std::string& key) const { return static_cast<int>(num(key)); }
    std::uint64_t seed() const { return static_cast<std::uint64_t>(num("seed")); }

    void dump(const fs::path& path) const {
        const fs::path tmp = path.string() + ".tmp";
        {
            std::ofstream out(tmp, std::ios::trunc);
            if (!out) throw std::runtime_error("cannot write " + path.string());
            for (const auto& k : key_table()) out << k.key << "=" << values_.at(k.key) << "\n";
        }
        fs::rename(tmp, path);
    }

private:
    std::map<std::string, std::string> values_;
};

struct Profile {
    int width;
    int height;
};

Profile profile_of(const RunConfig& cfg) {
    const std::string& p = cfg.str("profile");
    if (p == "desk") return {188, 120};
    if (p == "paper") return {752, 480};
    throw std::runtime_error("unknown profile '" + p + "' (expected desk or paper)");
}

SynthConfig synth_config(const RunConfig& cfg) {
    const Profile prof = profile_of(cfg);
    SynthConfig sc;
    sc.count = cfg.integer("synth.count");
    sc.width = prof.width;
    sc.height = prof.height;
    sc.hand_min = cfg.integer("synth.hand_min");
    sc.hand_max = cfg.integer("synth.hand_max");
    sc.distractor_probability = cfg.num("synth.distractor_prob");
    return sc;
}

TrainConfig train_config(const RunConfig& cfg, int stage) {
    TrainConfig tc;
    tc.stage = stage;
    tc.epochs = cfg.integer(stage == 1 ? "train.epochs1" : "train.epochs2");
    tc.batch_size = cfg.integer("train.batch");
    tc.seed = cfg.seed();
    tc.loss.alpha = cfg.num("loss.alpha");
    tc.loss.epsilon = cfg.num("loss.epsilon");
    tc.optimizer.learning_rate = cfg.num("opt.lr");
    tc.optimizer.decay = cfg.num("opt.decay");
    tc.optimizer.eps = cfg.num("opt.eps");
    tc.augment.scale_min = cfg.num("aug.scale_min");
    tc.augment.scale_max = cfg.num("aug.scale_max");
    tc.augment.max_rotation_deg = cfg.num("aug.rotation_deg");
    tc.augment.max_shear_deg = cfg.num("aug.shear_deg");
    tc.augment.max_translate_px = cfg.num("aug.translate_px");
    return tc;
}

void write_text_atomic(const fs::path& path, const std::string& body) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + path.string());
        out << body;
        if (!out) throw std::runtime_error("short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

real pooled_fine_accuracy(const CascadeModel& model, const std::vector<Sample>& samples) {
    std::uint64_t correct = 0, total = 0;
    for (const auto& s : samples) {
        const Tensor fine = cascade_forward(model, s.image).second;
        const AccuracyResult r = accuracy(fine, s.mask, 0.5);
        correct += r.counts.tp + r.counts.tn;
        total += r.counts.total();
    }
    return static_cast<real>(correct) / static_cast<real>(total);
}

std::string csv_num(real v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

// ---- subcommands ----

int cmd_synth(const RunConfig& cfg, const fs::path& out_dir) {
    const SynthConfig sc = synth_config(cfg);
    const fs::path manifest = generate_dataset(sc, cfg.seed(), out_dir);
    std::cout << "wrote " << sc.count << " samples, manifest " << manifest.string() << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, const fs::path& manifest, const fs::path& out_model,
              const fs::path& log_path) {
    const auto train = load_samples(manifest, "train");
    const auto test = load_samples(manifest, "test");
    if (train.empty()) throw std::runtime_error("manifest has no train entries");

    CascadeModel model = init_cascade(cfg.seed());
    const auto h1 = train_stage1(model.part1, train, train_config(cfg, 1));
    const auto h2 = train_stage2(model, train, train_config(cfg, 2));
    save_model(model, out_model);

    // test accuracy computed via the saved file so it matches `eval` exactly
    const CascadeModel reloaded = load_model(out_model);
    const real test_acc = test.empty() ? 0 : pooled_fine_accuracy(reloaded, test);

    std::ostringstream log;
    log << "epoch,split,loss,accuracy\n";
    auto emit = [&](const EpochStats& e, bool final_row) {
        if (final_row) {
            log << e.epoch << ",test," << csv_num(e.loss) << "," << csv_num(test_acc) << "\n";
        } else {
            log << e.epoch << "," << e.split << "," << csv_num(e.loss) << ","
                << csv_num(e.accuracy) << "\n";
        }
    };
    for (const auto& e : h1) emit(e, false);
    for (std::size_t i = 0; i < h2.size(); ++i) emit(h2[i], i + 1 == h2.size());
    write_text_atomic(log_path, log.str());
    std::cout << "model " << out_model.string() << ", final test accuracy " << test_acc << "\n";
    return 0;
}

int cmd_infer(const RunConfig& cfg, const fs::path& model_path, const fs::path& image_path,
              const std::string& out_prefix) {
    const CascadeModel model = load_model(model_path);
    const Tensor image = read_ppm(image_path);
    const auto [coarse, fine] = cascade_forward(model, image);

    const real thr = cfg.num("infer.threshold");
    Tensor mask(fine.shape());
    for (std::size_t i = 0; i < fine.size(); ++i) {
        mask.data()[i] = fine.data()[i] >= thr ? 1.0 : 0.0;
    }

    real bg[3] = {0.1, 0.8, 0.1};
    {
        std::istringstream is(cfg.str("infer.bg_color"));
        std::string part;
        for (int c = 0; c < 3 && std::getline(is, part, ','); ++c) bg[c] = std::stod(part);
    }
    Tensor composite(image.shape());
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < image.height(); ++y)
            for (int x = 0; x < image.width(); ++x)
                composite.at(c, y, x) = mask.at(0, y, x) >= 0.5 ? image.at(c, y, x) : bg[c];

    write_pgm(out_prefix + "_coarse.pgm", coarse);
    write_pgm(out_prefix + "_fine.pgm", fine);
    write_pgm(out_prefix + "_mask.pgm", mask);
    write_ppm(out_prefix + "_composite.ppm", composite);
    std::cout << "wrote " << out_prefix << "_{coarse,fine,mask}.pgm and _composite.ppm\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg, const fs::path& model_path, const fs::path& manifest,
             const fs::path& out_dir) {
    const CascadeModel model = load_model(model_path);
    const auto test = load_samples(manifest, "test");
    if (test.empty()) throw std::runtime_error("manifest has an empty test split");
    fs::create_directories(out_dir);

    std::vector<Tensor> preds, targets;
    for (const auto& s : test) {
        preds.push_back(cascade_forward(model, s.image).second);
        targets.push_back(s.mask);
    }
    const int n_thr = cfg.integer("eval.thresholds");
    const auto roc = roc_curve(preds, targets, n_thr);
    const auto sweep = threshold_sweep(preds, targets, n_thr);
    const real acc05 = pooled_fine_accuracy(model, test);

    std::ostringstream metrics;
    metrics << "threshold,tpr,fpr,accuracy\n";
    for (int i = 0; i < n_thr; ++i) {
        metrics << csv_num(roc[i].threshold) << "," << csv_num(roc[i].tpr) << ","
                << csv_num(roc[i].fpr) << "," << csv_num(sweep.points[i].second) << "\n";
    }
    write_text_atomic(out_dir / "metrics.csv", metrics.str());

    std::ostringstream rocdat;
    for (const auto& p : roc) rocdat << csv_num(p.fpr) << " " << csv_num(p.tpr) << "\n";
    write_text_atomic(out_dir / "roc.dat", rocdat.str());

    std::ostringstream accdat;
    for (const auto& p : sweep.points) accdat << csv_num(p.first) << " " << csv_num(p.second)
                                              << "\n";
    write_text_atomic(out_dir / "accuracy.dat", accdat.str());

    std::ostringstream summary;
    summary << "metric,value\n";
    summary << "accuracy_at_0.5," << csv_num(acc05) << "\n";
    summary << "best_threshold," << csv_num(sweep.best_threshold) << "\n";
    summary << "best_accuracy," << csv_num(sweep.best_accuracy) << "\n";
    summary << "plateau_width," << csv_num(sweep.plateau_width) << "\n";
    write_text_atomic(out_dir / "summary.csv", summary.str());

    std::cout << "accuracy@0.5 " << acc05 << ", plateau width " << sweep.plateau_width << "\n";
    return 0;
}

std::string bench_csv(const std::vector<BenchResult>& rows, const std::string& extra_col = "",
                      const std::string& extra_val = "") {
    std::ostringstream os;
    os << "variant,accuracy,mean_ms,median_ms,p95_ms,resolution,seed";
    if (!extra_col.empty()) os << "," << extra_col;
    os << "\n";
    for (const auto& r : rows) {
        os << r.variant << "," << csv_num(r.accuracy) << "," << csv_num(r.mean_ms) << ","
           << csv_num(r.median_ms) << "," << csv_num(r.p95_ms) << "," << r.width << "x"
           << r.height << "," << r.seed;
        if (!extra_col.empty()) os << "," << extra_val;
        os << "\n";
    }
    return os.str();
}

int cmd_bench(const RunConfig& cfg, const fs::path& model_path, const fs::path& manifest,
              const fs::path& out_csv) {
    const CascadeModel model = load_model(model_path);
    const auto test = load_samples(manifest, "test");
    if (test.empty()) throw std::runtime_error("manifest has an empty test split");
    Variant v{"cascade", [&model](const Tensor& img) { return cascade_forward(model, img).second; }};
    const BenchResult r = bench_inference(v, test, cfg.integer("bench.reps"), cfg.seed());
    write_text_atomic(out_csv, bench_csv({r}));
    std::cout << r.variant << ": accuracy " << r.accuracy << ", median " << r.median_ms
              << " ms\n";
    return 0;
}

int cmd_ablate(const RunConfig& cfg, const fs::path& manifest, const fs::path& out_csv) {
    const auto train = load_samples(manifest, "train");
    const auto test = load_samples(manifest, "test");
    AblationConfig ac;
    ac.seed = cfg.seed();
    ac.stage1 = train_config(cfg, 1);
    ac.stage2 = train_config(cfg, 2);
    ac.reps = cfg.integer("bench.reps");
    const auto table = run_ablation_suite(train, test, ac);

    real acc[4];
    for (int i = 0; i < 4; ++i) acc[i] = table[i].accuracy;
    // cascade >= no-image >= color, cascade > monolith, cascade - color >= 5 points
    const bool ordering_ok = acc[0] >= acc[2] && acc[2] >= acc[3] && acc[0] > acc[1] &&
                             acc[0] - acc[3] >= 0.05;
    write_text_atomic(out_csv, bench_csv(table, "ordering_pass", ordering_ok ? "pass" : "fail"));
    for (const auto& r : table) {
        std::cout << r.variant << ": accuracy " << r.accuracy << ", median " << r.median_ms
                  << " ms\n";
    }
    std::cout << "ordering assertions: " << (ordering_ok ? "pass" : "fail") << "\n";
    return ordering_ok ? 0 : 1;
}

std::string config_help() {
    std::ostringstream os;
    os << "\nConfig keys (key=value file via --config, overrides via --set and env\n"
          "variables prefixed HANDSEG_, e.g. HANDSEG_TRAIN_EPOCHS1):\n";
    for (const auto& k : key_table()) {
        os << "  " << k.key << " (default " << k.def << "): " << k.help << "\n";
    }
    return os.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-stage multiscale convolutional hand segmentation"};
    app.footer(config_help());
    app.require_subcommand(1);

    std::string config_file, dump_config;
    std::vector<std::string> sets;
    app.add_option("--config", config_file, "key=value config file");
    app.add_option("--set", sets, "override a config key, e.g. --set train.epochs1=5");
    app.add_option("--dump-config", dump_config, "write the effective config to a file");

    std::string out_dir, manifest, model_path, image_path, out_prefix, out_csv, log_path;

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--out", out_dir, "output directory")->required();

    auto* train = app.add_subcommand("train", "train both cascade stages");
    train->add_option("--manifest", manifest, "dataset manifest")->required();
    train->add_option("--out", model_path, "output model file")->required();
    train->add_option("--log", log_path, "training CSV log (default <model>.log.csv)");

    auto* infer = app.add_subcommand("infer", "segment one image");
    infer->add_option("--model", model_path, "model file")->required();
    infer->add_option("--image", image_path, "input PPM image")->required();
    infer->add_option("--out-prefix", out_prefix, "output file prefix")->required();

    auto* eval = app.add_subcommand("eval", "evaluate on the manifest's test split");
    eval->add_option("--model", model_path, "model file")->required();
    eval->add_option("--manifest", manifest, "dataset manifest")->required();
    eval->add_option("--out", out_dir, "output directory")->required();

    auto* bench = app.add_subcommand("bench", "time cascade inference");
    bench->add_option("--model", model_path, "model file")->required();
    bench->add_option("--manifest", manifest, "dataset manifest")->required();
    bench->add_option("--out", out_csv, "output CSV")->required();

    auto* ablate = app.add_subcommand("ablate", "train and compare all variants");
    ablate->add_option("--manifest", manifest, "dataset manifest")->required();
    ablate->add_option("--out", out_csv, "output CSV")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig cfg;
        if (!config_file.empty()) cfg.load_file(config_file);
        cfg.load_env();
        for (const auto& s : sets) {
            const std::size_t eq = s.find('=');
            if (eq == std::string::npos) throw std::runtime_error("--set expects key=value");
            cfg.set(s.substr(0, eq), s.substr(eq + 1));
        }
        if (!dump_config.empty()) cfg.dump(dump_config);

        if (synth->parsed()) return cmd_synth(cfg, out_dir);
        if (train->parsed()) {
            if (log_path.empty()) log_path = model_path + ".log.csv";
            return cmd_train(cfg, manifest, model_path, log_path);
        }
        if (infer->parsed()) return cmd_infer(cfg, model_path, image_path, out_prefix);
        if (eval->parsed()) return cmd_eval(cfg, model_path, manifest, out_dir);
        if (bench->parsed()) return cmd_bench(cfg, model_path, manifest, out_csv);
        if (ablate->parsed()) return cmd_ablate(cfg, manifest, out_csv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
