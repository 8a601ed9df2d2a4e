#include "handseg/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace handseg {

namespace fs = std::filesystem;

// ---- netpbm ----

namespace {

unsigned char quantize(real v) {
    const real q = std::floor(v * 255.0 + 0.5);
    return static_cast<unsigned char>(std::clamp<real>(q, 0, 255));
}

void write_pnm(const fs::path& path, const Tensor& t, bool color) {
    const int want_c = color ? 3 : 1;
    if (t.channels() != want_c) {
        throw std::invalid_argument(std::string(color ? "write_ppm" : "write_pgm") +
                                    ": expected " + std::to_string(want_c) +
                                    " channels, got " + t.shape().str());
    }
    std::string buf;
    buf += color ? "P6\n" : "P5\n";
    buf += std::to_string(t.width()) + " " + std::to_string(t.height()) + "\n255\n";
    buf.reserve(buf.size() + t.size());
    for (int y = 0; y < t.height(); ++y)
        for (int x = 0; x < t.width(); ++x)
            for (int c = 0; c < want_c; ++c) buf += static_cast<char>(quantize(t.at(c, y, x)));

    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + path.string());
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!out) throw std::runtime_error("short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

int read_pnm_int(std::istream& in, const fs::path& path) {
    // skip whitespace and '#' comments
    int ch = in.get();
    while (ch != EOF) {
        if (ch == '#') {
            while (ch != EOF && ch != '\n') ch = in.get();
        } else if (!std::isspace(ch)) {
            break;
        }
        ch = in.get();
    }
    if (ch == EOF || !std::isdigit(ch)) {
        throw std::runtime_error("malformed netpbm header in " + path.string());
    }
    int v = 0;
    while (ch != EOF && std::isdigit(ch)) {
        v = v * 10 + (ch - '0');
        ch = in.get();
    }
    return v;
}

Tensor read_pnm(const fs::path& path, bool color) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    const std::string magic{m0, m1};
    const std::string want = color ? "P6" : "P5";
    if (magic == "P3" || magic == "P2" || magic == "P1") {
        throw std::runtime_error("unsupported format " + magic + " (ASCII netpbm) in " +
                                 path.string());
    }
    if (magic != want) {
        throw std::runtime_error("not a binary " + want + " file: " + path.string());
    }
    const int w = read_pnm_int(in, path);
    const int h = read_pnm_int(in, path);
    const int maxval = read_pnm_int(in, path);
    if (w < 1 || h < 1) throw std::runtime_error("malformed netpbm header in " + path.string());
    if (maxval != 255) {
        throw std::runtime_error("unsupported maxval " + std::to_string(maxval) + " in " +
                                 path.string());
    }
    const int nc = color ? 3 : 1;
    std::vector<char> payload(static_cast<std::size_t>(nc) * w * h);
    in.read(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (in.gcount() != static_cast<std::streamsize>(payload.size())) {
        throw std::runtime_error("truncated netpbm payload in " + path.string());
    }
    Tensor t({nc, h, w});
    std::size_t i = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < nc; ++c)
                t.at(c, y, x) = static_cast<unsigned char>(payload[i++]) / 255.0;
    return t;
}

}  // namespace

void write_ppm(const fs::path& path, const Tensor& image) { write_pnm(path, image, true); }
void write_pgm(const fs::path& path, const Tensor& gray) { write_pnm(path, gray, false); }
Tensor read_ppm(const fs::path& path) { return read_pnm(path, true); }
Tensor read_pgm(const fs::path& path) { return read_pnm(path, false); }

// ---- manifests ----

DatasetManifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest " + path.string());
    DatasetManifest manifest;
    std::set<std::string> seen;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const std::size_t tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (fields.size() != 3) {
            throw std::runtime_error("manifest line " + std::to_string(lineno) +
                                     ": expected 3 tab-separated fields, got " +
                                     std::to_string(fields.size()));
        }
        if (fields[2] != "train" && fields[2] != "test") {
            throw std::runtime_error("manifest line " + std::to_string(lineno) +
                                     ": unknown split tag '" + fields[2] + "'");
        }
        for (int i = 0; i < 2; ++i) {
            if (fields[i].empty()) {
                throw std::runtime_error("manifest line " + std::to_string(lineno) +
                                         ": empty path field");
            }
            if (!seen.insert(fields[i]).second) {
                throw std::runtime_error("manifest line " + std::to_string(lineno) +
                                         ": duplicate path " + fields[i]);
            }
        }
        manifest.entries.push_back({fields[0], fields[1], fields[2]});
    }
    return manifest;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write manifest " + path.string());
        for (const auto& e : manifest.entries) {
            out << e.image_path << '\t' << e.mask_path << '\t' << e.split << '\n';
        }
        if (!out) throw std::runtime_error("short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

void split_dataset(DatasetManifest& manifest, double train_fraction, std::uint64_t seed) {
    const std::size_t n = manifest.entries.size();
    if (n < 2) throw std::invalid_argument("split_dataset: need at least 2 entries");
    Rng rng(stream_seed(seed, 0x5011Full));
    rng.shuffle(manifest.entries);
    std::size_t n_train = static_cast<std::size_t>(std::ceil(train_fraction * n));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        manifest.entries[i].split = i < n_train ? "train" : "test";
    }
}

std::vector<Sample> load_samples(const fs::path& manifest_path, const std::string& split) {
    const DatasetManifest manifest = load_manifest(manifest_path);
    const fs::path base = manifest_path.parent_path();
    auto resolve = [&](const std::string& p) {
        fs::path path(p);
        return path.is_absolute() ? path : base / path;
    };
    std::vector<Sample> samples;
    for (const auto& e : manifest.entries) {
        if (e.split != split) continue;
        Sample s;
        s.image = read_ppm(resolve(e.image_path));
        s.mask = read_pgm(resolve(e.mask_path));
        if (s.mask.height() != s.image.height() || s.mask.width() != s.image.width()) {
            throw std::runtime_error("image/mask size mismatch for " + e.image_path);
        }
        for (auto& v : s.mask.data()) v = v >= 0.5 ? 1.0 : 0.0;
        s.id = fs::path(e.image_path).stem().string();
        samples.push_back(std::move(s));
    }
    return samples;
}

// ---- synthetic generator ----

namespace {

struct Capsule {
    double x0, y0, x1, y1, r;
    bool contains(double x, double y) const {
        const double dx = x1 - x0, dy = y1 - y0;
        const double len2 = dx * dx + dy * dy;
        double t = 0;
        if (len2 > 0) t = std::clamp(((x - x0) * dx + (y - y0) * dy) / len2, 0.0, 1.0);
        const double px = x0 + t * dx - x, py = y0 + t * dy - y;
        return px * px + py * py <= r * r;
    }
};

struct RotEllipse {
    double cx, cy, rx, ry, angle;
    bool contains(double x, double y) const {
        const double ca = std::cos(angle), sa = std::sin(angle);
        const double u = (x - cx) * ca + (y - cy) * sa;
        const double v = -(x - cx) * sa + (y - cy) * ca;
        return (u * u) / (rx * rx) + (v * v) / (ry * ry) <= 1.0;
    }
};

struct RGB {
    double r, g, b;
};

RGB sample_skin(Rng& rng, const SynthConfig& cfg) {
    RGB c;
    c.r = rng.uniform(cfg.skin_r_min, cfg.skin_r_max);
    c.g = c.r * rng.uniform(cfg.skin_gr_min, cfg.skin_gr_max);
    c.b = c.g * rng.uniform(cfg.skin_bg_min, cfg.skin_bg_max);
    return c;
}

// Background colors keep a clear margin from the skin support so that pixels
// nudged by waves and noise stay unambiguous.
bool near_skin_support(const SynthConfig& cfg, double r, double g, double b) {
    if (r < cfg.skin_r_min * cfg.shade_min * 0.85 || r > cfg.skin_r_max * 1.1) return false;
    if (r <= 0 || g <= 0) return true;
    const double gr = g / r, bg = b / g;
    return gr >= cfg.skin_gr_min * 0.85 && gr <= cfg.skin_gr_max * 1.15 &&
           bg >= cfg.skin_bg_min * 0.85 && bg <= cfg.skin_bg_max * 1.15;
}

// The scene models a fixed desk environment: background colors come from a
// small jittered palette (desk surface, paper, keyboard, monitor bezel,
// notebook, plant) instead of the full RGB cube, so the appearance statistics
// are stable across scenes the way a real static workspace is.
RGB sample_non_skin(Rng& rng, const SynthConfig& cfg) {
    static constexpr RGB kPalette[] = {
        {0.45, 0.33, 0.22},  // wooden desk surface
        {0.88, 0.88, 0.84},  // paper
        {0.12, 0.12, 0.14},  // keyboard / bezel
        {0.25, 0.35, 0.55},  // notebook cover
        {0.30, 0.52, 0.30},  // plant
        {0.55, 0.58, 0.62},  // aluminium / mousepad
    };
    for (int tries = 0; tries < 64; ++tries) {
        RGB c = kPalette[rng.below(std::size(kPalette))];
        c.r = std::clamp(c.r + rng.uniform(-0.05, 0.05), 0.0, 1.0);
        c.g = std::clamp(c.g + rng.uniform(-0.05, 0.05), 0.0, 1.0);
        c.b = std::clamp(c.b + rng.uniform(-0.05, 0.05), 0.0, 1.0);
        if (!near_skin_support(cfg, c.r, c.g, c.b)) return c;
    }
    return RGB{0.2, 0.4, 0.8};
}

struct HandShape {
    std::vector<Capsule> capsules;
    RotEllipse palm;
    RGB color;
    double shade_fx, shade_fy, shade_phase;
    bool contains(double x, double y) const {
        if (palm.contains(x, y)) return true;
        for (const auto& c : capsules)
            if (c.contains(x, y)) return true;
        return false;
    }
};

HandShape make_hand(Rng& rng, const SynthConfig& cfg) {
    const double W = cfg.width, H = cfg.height;
    const double mind = std::min(W, H);
    const double palm_r = rng.uniform(cfg.palm_radius_min, cfg.palm_radius_max) * mind;

    const int side = rng.range(0, 3);
    double bx, by, normal;
    const double u = rng.uniform(0.15, 0.85);
    switch (side) {
        case 0: bx = 0; by = u * (H - 1); normal = 0; break;                 // left edge
        case 1: bx = W - 1; by = u * (H - 1); normal = M_PI; break;          // right edge
        case 2: bx = u * (W - 1); by = 0; normal = M_PI / 2; break;          // top edge
        default: bx = u * (W - 1); by = H - 1; normal = -M_PI / 2; break;    // bottom edge
    }
    const double dir = normal + rng.uniform(-0.6, 0.6);
    const double dx = std::cos(dir), dy = std::sin(dir);

    HandShape hand;
    const double reach = palm_r * rng.uniform(1.0, 1.5);
    const double px = bx + dx * reach, py = by + dy * reach;

    // wrist starts slightly outside the frame so the mask always touches it
    hand.capsules.push_back({bx - dx * 3, by - dy * 3, px, py,
                             palm_r * rng.uniform(0.65, 0.85)});
    hand.palm = {px, py, palm_r * rng.uniform(0.9, 1.1), palm_r * rng.uniform(0.75, 0.95), dir};

    // short, wide, spread fingers: they must stay wide enough to register in
    // the area-averaged coarse ground truth (one coarse cell spans 16 pixels)
    // while still giving the silhouette the scalloped outline that separates
    // hands from smooth distractor blobs
    const int n_fingers = rng.range(cfg.finger_min, cfg.finger_max);
    for (int i = 0; i < n_fingers; ++i) {
        const double spread =
            n_fingers > 1 ? -0.7 + 1.4 * i / (n_fingers - 1) : 0.0;
        const double a = dir + spread + rng.uniform(-0.06, 0.06);
        const double fx = std::cos(a), fy = std::sin(a);
        const double base_x = px + fx * palm_r * 0.85;
        const double base_y = py + fy * palm_r * 0.85;
        const double len = palm_r * rng.uniform(0.5, 0.8);
        hand.capsules.push_back({base_x, base_y, base_x + fx * len, base_y + fy * len,
                                 palm_r * rng.uniform(0.30, 0.40)});
    }

    hand.color = sample_skin(rng, cfg);
    hand.shade_fx = rng.uniform(-1.0, 1.0) * 2 * M_PI / W;
    hand.shade_fy = rng.uniform(-1.0, 1.0) * 2 * M_PI / H;
    hand.shade_phase = rng.uniform(0, 2 * M_PI);
    return hand;
}

}  // namespace

bool skin_support_contains(const SynthConfig& cfg, real r, real g, real b) {
    const double tol = 1e-9;
    if (r < cfg.skin_r_min * cfg.shade_min - tol || r > cfg.skin_r_max + tol) return false;
    if (r <= 0 || g <= 0) return false;
    const double gr = g / r, bg = b / g;
    return gr >= cfg.skin_gr_min - tol && gr <= cfg.skin_gr_max + tol &&
           bg >= cfg.skin_bg_min - tol && bg <= cfg.skin_bg_max + tol;
}

Sample generate_sample(Rng& rng, const SynthConfig& cfg) {
    const int W = cfg.width, H = cfg.height;
    Sample s;
    s.image = Tensor({3, H, W});
    s.mask = Tensor({1, H, W});

    // The camera is static over one workspace, so the background layout (base
    // color, shading waves, patch placement) is a function of the scene seed
    // shared by the whole dataset, not of the per-sample stream: every frame
    // shows the same desk. Per-sample variation comes from the foreground
    // (hands, movable distractor objects) and sensor noise.
    Rng bg_rng(stream_seed(cfg.background_seed, 0x6b675221));
    const RGB base = sample_non_skin(bg_rng, cfg);
    double wfx[3], wfy[3], wph[3];
    for (int c = 0; c < 3; ++c) {
        wfx[c] = bg_rng.uniform(0.5, 2.5) * 2 * M_PI / W;
        wfy[c] = bg_rng.uniform(0.5, 2.5) * 2 * M_PI / H;
        wph[c] = bg_rng.uniform(0, 2 * M_PI);
    }
    const double bc[3] = {base.r, base.g, base.b};
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                s.image.at(c, y, x) =
                    bc[c] + cfg.background_wave_amp * std::sin(wfx[c] * x + wfy[c] * y + wph[c]);

    // background patches (desk objects) in non-skin colors
    const int n_patches = bg_rng.range(cfg.background_patch_min, cfg.background_patch_max);
    for (int p = 0; p < n_patches; ++p) {
        const RGB pc = sample_non_skin(bg_rng, cfg);
        const double cx = bg_rng.uniform(0, W - 1), cy = bg_rng.uniform(0, H - 1);
        const double rx = bg_rng.uniform(0.05, 0.25) * W, ry = bg_rng.uniform(0.05, 0.25) * H;
        const bool rect = bg_rng.below(2) == 0;
        const int x0 = std::max(0, static_cast<int>(cx - rx)),
                  x1 = std::min(W - 1, static_cast<int>(cx + rx));
        const int y0 = std::max(0, static_cast<int>(cy - ry)),
                  y1 = std::min(H - 1, static_cast<int>(cy + ry));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                if (!rect) {
                    const double u = (x - cx) / rx, v = (y - cy) / ry;
                    if (u * u + v * v > 1) continue;
                }
                s.image.at(0, y, x) = pc.r;
                s.image.at(1, y, x) = pc.g;
                s.image.at(2, y, x) = pc.b;
            }
    }

    // skin-colored distractor blobs, deliberately not in the mask
    if (rng.uniform() < cfg.distractor_probability) {
        const int n = rng.range(cfg.distractor_min, cfg.distractor_max);
        for (int d = 0; d < n; ++d) {
            const double mind = std::min(W, H);
            const double r = rng.uniform(cfg.distractor_radius_min, cfg.distractor_radius_max) *
                             mind;
            const double margin = r + 3;
            const double cx = rng.uniform(margin, W - 1 - margin);
            const double cy = rng.uniform(margin, H - 1 - margin);
            RotEllipse e{cx, cy, r * rng.uniform(0.85, 1.15), r * rng.uniform(0.85, 1.15),
                         rng.uniform(0, M_PI)};
            const RGB dc = sample_skin(rng, cfg);
            const double sfx = rng.uniform(-1.0, 1.0) * 2 * M_PI / W;
            const double sfy = rng.uniform(-1.0, 1.0) * 2 * M_PI / H;
            const double sph = rng.uniform(0, 2 * M_PI);
            // high-frequency surface grain (period a few pixels)
            const double gfx = 2 * M_PI / rng.uniform(3.0, 6.0);
            const double gfy = 2 * M_PI / rng.uniform(3.0, 6.0);
            const double gp1 = rng.uniform(0, 2 * M_PI), gp2 = rng.uniform(0, 2 * M_PI);
            const int x0 = std::max(0, static_cast<int>(cx - r - 2)),
                      x1 = std::min(W - 1, static_cast<int>(cx + r + 2));
            const int y0 = std::max(0, static_cast<int>(cy - r - 2)),
                      y1 = std::min(H - 1, static_cast<int>(cy + r + 2));
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) {
                    if (!e.contains(x, y)) continue;
                    const double shade = cfg.shade_min + (1 - cfg.shade_min) *
                                         (0.5 + 0.5 * std::sin(sfx * x + sfy * y + sph));
                    const double grain = 1.0 + cfg.distractor_grain *
                                         std::sin(gfx * x + gp1) * std::sin(gfy * y + gp2);
                    s.image.at(0, y, x) = dc.r * shade * grain;
                    s.image.at(1, y, x) = dc.g * shade * grain;
                    s.image.at(2, y, x) = dc.b * shade * grain;
                }
        }
    }

    // hands, drawn last so the mask is exactly their rasterized geometry
    const int n_hands = rng.range(cfg.hand_min, cfg.hand_max);
    std::vector<HandShape> hands;
    for (int i = 0; i < n_hands; ++i) hands.push_back(make_hand(rng, cfg));
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (const auto& hand : hands) {
                if (!hand.contains(x, y)) continue;
                const double shade =
                    cfg.shade_min + (1 - cfg.shade_min) *
                    (0.5 + 0.5 * std::sin(hand.shade_fx * x + hand.shade_fy * y +
                                          hand.shade_phase));
                s.image.at(0, y, x) = hand.color.r * shade;
                s.image.at(1, y, x) = hand.color.g * shade;
                s.image.at(2, y, x) = hand.color.b * shade;
                s.mask.at(0, y, x) = 1.0;
                break;
            }

    // pixel noise on top, clamped into [0,1]
    for (auto& v : s.image.data()) {
        v += rng.uniform(-cfg.pixel_noise, cfg.pixel_noise);
        v = std::clamp<real>(v, 0, 1);
    }
    return s;
}

std::filesystem::path generate_dataset(const SynthConfig& cfg, std::uint64_t seed,
                                       const fs::path& out_dir, double train_fraction) {
    fs::create_directories(out_dir);
    DatasetManifest manifest;
    for (int i = 0; i < cfg.count; ++i) {
        Rng rng(stream_seed(seed, static_cast<std::uint64_t>(i) + 1));
        Sample s = generate_sample(rng, cfg);
        char img_name[32], mask_name[32];
        std::snprintf(img_name, sizeof img_name, "img_%05d.ppm", i);
        std::snprintf(mask_name, sizeof mask_name, "mask_%05d.pgm", i);
        write_ppm(out_dir / img_name, s.image);
        write_pgm(out_dir / mask_name, s.mask);
        manifest.entries.push_back({img_name, mask_name, "train"});
    }
    split_dataset(manifest, train_fraction, seed);
    const fs::path manifest_path = out_dir / "manifest.tsv";
    save_manifest(manifest, manifest_path);
    return manifest_path;
}

}  // namespace handseg
