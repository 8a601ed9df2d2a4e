#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "handseg/rng.hpp"
#include "handseg/tensor.hpp"

namespace handseg {

/// RGB image paired with its binary ground-truth mask.
struct Sample {
    Tensor image;  // 3xHxW, values in [0,1]
    Tensor mask;   // 1xHxW, values in {0,1}
    std::string id;
};

// ---- netpbm I/O (binary P6/P5, maxval 255) ----

void write_ppm(const std::filesystem::path& path, const Tensor& image);
void write_pgm(const std::filesystem::path& path, const Tensor& gray);
Tensor read_ppm(const std::filesystem::path& path);
Tensor read_pgm(const std::filesystem::path& path);

// ---- dataset manifests ----

struct ManifestEntry {
    std::string image_path;
    std::string mask_path;
    std::string split;  // "train" or "test"
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
};

/// Tab-separated UTF-8 text, one entry per line: image-path, mask-path, split.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Seeded shuffle, first ceil(train_fraction * n) entries tagged train.
void split_dataset(DatasetManifest& manifest, double train_fraction, std::uint64_t seed);

/// Loads every entry with the given split tag; relative paths resolve
/// against the manifest's directory.
std::vector<Sample> load_samples(const std::filesystem::path& manifest_path,
                                 const std::string& split);

// ---- synthetic egocentric-hand generator ----

struct SynthConfig {
    int count = 200;
    int height = 120;
    int width = 188;
    int hand_min = 1;
    int hand_max = 2;
    // palm semi-axes as fractions of min(height, width); egocentric hands are
    // sized so fingers register on the coarse grid instead of being erased by
    // the downscaled ground truth
    double palm_radius_min = 0.15;
    double palm_radius_max = 0.22;
    int finger_min = 3;
    int finger_max = 4;
    // skin color sampling: r, then g = r*ratio, b = g*ratio. Narrow ranges:
    // the corpus models a single user's hands under stable lighting.
    double skin_r_min = 0.60;
    double skin_r_max = 0.82;
    double skin_gr_min = 0.58;
    double skin_gr_max = 0.72;
    double skin_bg_min = 0.65;
    double skin_bg_max = 0.80;
    double shade_min = 0.85;  // multiplicative shading range on hand pixels
    // background texture. The camera is static over one workspace, so the
    // background layout derives from background_seed (shared by the whole
    // dataset), while hands, distractors and noise vary per sample.
    std::uint64_t background_seed = 1;
    double background_wave_amp = 0.08;
    double pixel_noise = 0.02;
    int background_patch_min = 2;
    int background_patch_max = 5;
    // skin-colored non-hand blobs, excluded from the mask; they keep a pure
    // color classifier honest. Deliberately larger than a small conv net's
    // receptive field, so only wide-context models can reject their interiors.
    double distractor_probability = 1.0;
    int distractor_min = 2;
    int distractor_max = 3;
    double distractor_radius_min = 0.15;
    double distractor_radius_max = 0.22;
    // multiplicative high-frequency surface grain on distractors (wood, fabric,
    // cardboard); it barely moves the per-pixel color distribution, so a pure
    // color classifier still accepts them while models with spatial context can
    // tell the matte skin of a hand from a grained surface of the same color
    double distractor_grain = 0.18;
};

/// True iff (r,g,b) lies in the closed support of the configured skin color
/// model (sampling ranges widened by the shading factor).
bool skin_support_contains(const SynthConfig& cfg, real r, real g, real b);

Sample generate_sample(Rng& rng, const SynthConfig& cfg);

/// Writes count PPM/PGM pairs plus a 90/10-split manifest under out_dir.
/// Deterministic for a fixed seed. Returns the manifest path.
std::filesystem::path generate_dataset(const SynthConfig& cfg, std::uint64_t seed,
                                       const std::filesystem::path& out_dir,
                                       double train_fraction = 0.9);

}  // namespace handseg
