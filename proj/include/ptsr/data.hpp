#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ptsr/params.hpp"
#include "ptsr/tensor.hpp"

namespace ptsr {

struct CorpusImage {
    std::string id;  // path relative to the corpus directory, without extension
    std::filesystem::path path;
    Image image;
};

struct CorpusError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Receives warnings (skipped files, crops). Defaults to stderr.
using WarningSink = std::function<void(const std::string&)>;
void default_warning(const std::string& msg);

/// Resolves the image directory for `split` under `root` and loads it.
///   root/<split>/HR/ if present, else root/<split>/ (root itself if split
///   is empty). A `manifest.txt` in that directory (one relative path per
///   line, '#' comments) replaces scanning. Without a manifest, files whose
///   stem ends in "_LR" are ignored when "_HR" files are present.
/// Ordering is lexicographic by relative path. Unreadable files are skipped
/// with a warning; throws CorpusError if nothing loads.
std::vector<CorpusImage> load_corpus(const std::filesystem::path& root, const std::string& split,
                                     const WarningSink& warn = default_warning);

/// Cubic convolution kernel with a = -0.5.
double cubic_kernel(double x);

/// Antialiased bicubic downscale by an integer factor (kernel stretched by
/// s, symmetric boundary, separable), clamped to [0,1]. Indivisible sizes are
/// center-cropped to the largest multiple of s first (reported via `warn`).
Image synthesize_lr(const Image& hr, int scale, const WarningSink& warn = default_warning);

/// Bicubic interpolation by an integer factor (same kernel and boundary,
/// unstretched), clamped to [0,1]. The classical baseline upscaler.
Image bicubic_upscale(const Image& lr, int scale);

/// Largest centered crop with both dims divisible by `multiple`.
Image center_crop_to_multiple(const Image& img, std::size_t multiple);

Image crop_image(const Image& img, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w);

struct PairedSample {
    Image lr;
    Image hr;
    int scale = 2;
    std::string source_id;
    std::size_t lr_y = 0, lr_x = 0;  // crop origin in LR coordinates
};

/// A: LR synthesized from the HR crop. B: crop of a pre-synthesized LR image.
enum class PairMode { A, B };
std::string to_string(PairMode m);
PairMode pair_mode_from_string(const std::string& s);

struct Augment {
    bool hflip = false;
    bool vflip = false;
    bool rot90 = false;
};

/// Aligned random crop. `pre_lr` is required in mode B and must be
/// synthesize_lr(hr). Returns nullopt (and warns) if hr is too small.
std::optional<PairedSample> sample_training_pair(const Image& hr, int scale, std::size_t crop_lr,
                                                 Rng& rng, PairMode mode = PairMode::A,
                                                 const Image* pre_lr = nullptr,
                                                 const std::string& source_id = {},
                                                 const Augment& aug = {},
                                                 const WarningSink& warn = default_warning);

/// Full-image evaluation pair: HR center-cropped to a multiple of s, LR
/// synthesized from it.
PairedSample make_eval_pair(const CorpusImage& img, int scale);

/// Draws training pairs from a corpus: an image uniformly at random, then
/// an aligned crop. Images too small for the crop are dropped up front.
class PairSampler {
public:
    PairSampler(std::vector<CorpusImage> images, int scale, std::size_t crop_lr,
                PairMode mode = PairMode::A, Augment aug = {},
                const WarningSink& warn = default_warning);

    std::vector<PairedSample> batch(std::size_t n, Rng& rng) const;
    std::size_t size() const { return images_.size(); }
    const std::vector<CorpusImage>& images() const { return images_; }

private:
    std::vector<CorpusImage> images_;
    std::vector<Image> pre_lr_;
    int scale_;
    std::size_t crop_lr_;
    PairMode mode_;
    Augment aug_;
};

}  // namespace ptsr
