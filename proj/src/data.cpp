#include "ptsr/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

#include <fmt/format.h>

#include "ptsr/image_io.hpp"

namespace fs = std::filesystem;

namespace ptsr {

void default_warning(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

namespace {

bool stem_ends_with(const fs::path& p, const std::string& suffix) {
    const std::string s = p.stem().string();
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::vector<fs::path> manifest_entries(const fs::path& manifest) {
    std::ifstream in(manifest);
    if (!in) throw CorpusError(fmt::format("cannot read manifest '{}'", manifest.string()));
    std::vector<fs::path> out;
    std::string line;
    while (std::getline(in, line)) {
        line.erase(0, line.find_first_not_of(" \t\r"));
        line.erase(line.find_last_not_of(" \t\r") + 1);
        if (line.empty() || line[0] == '#') continue;
        out.emplace_back(line);
    }
    return out;
}

std::vector<fs::path> scan_directory(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && is_image_file(e.path()))
            files.push_back(fs::relative(e.path(), dir));
    const bool has_hr = std::any_of(files.begin(), files.end(),
                                    [](const fs::path& p) { return stem_ends_with(p, "_HR"); });
    if (has_hr)
        std::erase_if(files, [](const fs::path& p) { return stem_ends_with(p, "_LR"); });
    return files;
}

// Symmetric reflection into [0, n): -1 -> 0, n -> n - 1.
std::size_t reflect(long long i, std::size_t n) {
    const long long period = 2 * static_cast<long long>(n);
    long long m = ((i % period) + period) % period;
    if (m >= static_cast<long long>(n)) m = period - 1 - m;
    return static_cast<std::size_t>(m);
}

struct Taps {
    std::vector<std::size_t> index;
    std::vector<double> weight;
};

// Taps for in -> out along one axis. Downscaling stretches the kernel by
// the factor (antialiasing); upscaling uses it as is.
std::vector<Taps> resize_taps(std::size_t in, std::size_t out) {
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    const double stretch = std::max(ratio, 1.0);
    std::vector<Taps> taps(out);
    for (std::size_t i = 0; i < out; ++i) {
        const double u = (static_cast<double>(i) + 0.5) * ratio - 0.5;
        const auto lo = static_cast<long long>(std::floor(u - 2 * stretch));
        const auto hi = static_cast<long long>(std::ceil(u + 2 * stretch));
        double sum = 0;
        for (long long j = lo; j <= hi; ++j) {
            const double w = cubic_kernel((u - static_cast<double>(j)) / stretch);
            if (w == 0.0) continue;
            taps[i].index.push_back(reflect(j, in));
            taps[i].weight.push_back(w);
            sum += w;
        }
        for (double& w : taps[i].weight) w /= sum;
    }
    return taps;
}

Image resize_separable(const Image& src, std::size_t oh, std::size_t ow) {
    const std::size_t h = src.dim(0), w = src.dim(1);
    const auto ty = resize_taps(h, oh), tx = resize_taps(w, ow);
    Image rows({h, ow, 3});
#pragma omp parallel for schedule(static)
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < ow; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                double v = 0;
                for (std::size_t t = 0; t < tx[x].index.size(); ++t)
                    v += tx[x].weight[t] * src.at(y, tx[x].index[t], c);
                rows.at(y, x, c) = v;
            }
    Image out({oh, ow, 3});
#pragma omp parallel for schedule(static)
    for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                double v = 0;
                for (std::size_t t = 0; t < ty[y].index.size(); ++t)
                    v += ty[y].weight[t] * rows.at(ty[y].index[t], x, c);
                out.at(y, x, c) = std::clamp(v, 0.0, 1.0);
            }
    return out;
}

Image flip_h(const Image& img) {
    Image out(img.shape());
    const std::size_t h = img.dim(0), w = img.dim(1), ch = img.dim(2);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < ch; ++c) out.at(y, x, c) = img.at(y, w - 1 - x, c);
    return out;
}

Image flip_v(const Image& img) {
    Image out(img.shape());
    const std::size_t h = img.dim(0), w = img.dim(1), ch = img.dim(2);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < ch; ++c) out.at(y, x, c) = img.at(h - 1 - y, x, c);
    return out;
}

Image transpose_hw(const Image& img) {
    const std::size_t h = img.dim(0), w = img.dim(1), ch = img.dim(2);
    Image out({w, h, ch});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < ch; ++c) out.at(x, y, c) = img.at(y, x, c);
    return out;
}

}  // namespace

std::vector<CorpusImage> load_corpus(const fs::path& root, const std::string& split,
                                     const WarningSink& warn) {
    fs::path dir = split.empty() ? root : root / split;
    if (!fs::is_directory(dir))
        throw CorpusError(fmt::format("corpus directory '{}' does not exist", dir.string()));
    if (fs::is_directory(dir / "HR")) dir /= "HR";
    std::vector<fs::path> rel;
    if (fs::exists(dir / "manifest.txt")) {
        rel = manifest_entries(dir / "manifest.txt");
    } else {
        rel = scan_directory(dir);
    }
    std::sort(rel.begin(), rel.end());
    std::vector<CorpusImage> out;
    for (const auto& r : rel) {
        const fs::path full = dir / r;
        try {
            Image img = load_image(full);
            fs::path id = r;
            id.replace_extension();
            out.push_back({id.generic_string(), full, std::move(img)});
        } catch (const std::exception& e) {
            warn(fmt::format("skipping '{}': {}", full.string(), e.what()));
        }
    }
    if (out.empty())
        throw CorpusError(fmt::format("no readable images in '{}'", dir.string()));
    return out;
}

double cubic_kernel(double x) {
    const double a = -0.5;
    const double ax = std::abs(x);
    if (ax <= 1.0) return ((a + 2) * ax - (a + 3)) * ax * ax + 1;
    if (ax < 2.0) return ((a * ax - 5 * a) * ax + 8 * a) * ax - 4 * a;
    return 0.0;
}

Image crop_image(const Image& img, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
    if (img.rank() != 3 || y0 + h > img.dim(0) || x0 + w > img.dim(1))
        throw ShapeError(fmt::format("crop {}x{} at ({}, {}) outside {}", h, w, y0, x0,
                                     shape_str(img.shape())));
    const std::size_t ch = img.dim(2);
    Image out({h, w, ch});
    for (std::size_t y = 0; y < h; ++y)
        std::copy_n(img.data().begin() + static_cast<std::ptrdiff_t>(((y0 + y) * img.dim(1) + x0) * ch),
                    w * ch, out.data().begin() + static_cast<std::ptrdiff_t>(y * w * ch));
    return out;
}

Image center_crop_to_multiple(const Image& img, std::size_t multiple) {
    const std::size_t h = img.dim(0) / multiple * multiple, w = img.dim(1) / multiple * multiple;
    if (h == 0 || w == 0)
        throw ShapeError(fmt::format("image {} smaller than factor {}", shape_str(img.shape()),
                                     multiple));
    return crop_image(img, (img.dim(0) - h) / 2, (img.dim(1) - w) / 2, h, w);
}

Image synthesize_lr(const Image& hr_in, int scale, const WarningSink& warn) {
    require_image(hr_in, "synthesize_lr input");
    if (scale < 1) throw std::invalid_argument(fmt::format("scale {} must be >= 1", scale));
    const auto s = static_cast<std::size_t>(scale);
    Image hr = hr_in;
    if (hr.dim(0) % s != 0 || hr.dim(1) % s != 0) {
        hr = center_crop_to_multiple(hr_in, s);
        warn(fmt::format("{}x{} not divisible by {}; center-cropped to {}x{}", hr_in.dim(0),
                         hr_in.dim(1), s, hr.dim(0), hr.dim(1)));
    }
    return resize_separable(hr, hr.dim(0) / s, hr.dim(1) / s);
}

Image bicubic_upscale(const Image& lr, int scale) {
    require_image(lr, "bicubic_upscale input");
    if (scale < 1) throw std::invalid_argument(fmt::format("scale {} must be >= 1", scale));
    const auto s = static_cast<std::size_t>(scale);
    return resize_separable(lr, s * lr.dim(0), s * lr.dim(1));
}

std::string to_string(PairMode m) { return m == PairMode::A ? "A" : "B"; }

PairMode pair_mode_from_string(const std::string& s) {
    if (s == "A" || s == "a") return PairMode::A;
    if (s == "B" || s == "b") return PairMode::B;
    throw std::invalid_argument(fmt::format("unknown pair mode '{}' (expected A or B)", s));
}

std::optional<PairedSample> sample_training_pair(const Image& hr, int scale, std::size_t crop_lr,
                                                 Rng& rng, PairMode mode, const Image* pre_lr,
                                                 const std::string& source_id, const Augment& aug,
                                                 const WarningSink& warn) {
    require_image(hr, "training image");
    const auto s = static_cast<std::size_t>(scale);
    const std::size_t lr_h = hr.dim(0) / s, lr_w = hr.dim(1) / s;
    if (crop_lr == 0 || lr_h < crop_lr || lr_w < crop_lr) {
        warn(fmt::format("'{}' ({}x{}) too small for a {}-pixel LR crop at scale {}", source_id,
                         hr.dim(0), hr.dim(1), crop_lr, scale));
        return std::nullopt;
    }
    if (mode == PairMode::B && (!pre_lr || pre_lr->dim(0) != lr_h || pre_lr->dim(1) != lr_w))
        throw std::invalid_argument("mode B needs the pre-synthesized LR of the full image");
    std::uniform_int_distribution<std::size_t> dy(0, lr_h - crop_lr), dx(0, lr_w - crop_lr);
    PairedSample p;
    p.scale = scale;
    p.source_id = source_id;
    p.lr_y = dy(rng);
    p.lr_x = dx(rng);
    p.hr = crop_image(hr, s * p.lr_y, s * p.lr_x, s * crop_lr, s * crop_lr);
    p.lr = mode == PairMode::A ? synthesize_lr(p.hr, scale, warn)
                               : crop_image(*pre_lr, p.lr_y, p.lr_x, crop_lr, crop_lr);
    std::bernoulli_distribution coin(0.5);
    if (aug.hflip && coin(rng)) {
        p.hr = flip_h(p.hr);
        p.lr = flip_h(p.lr);
    }
    if (aug.vflip && coin(rng)) {
        p.hr = flip_v(p.hr);
        p.lr = flip_v(p.lr);
    }
    if (aug.rot90 && coin(rng)) {
        p.hr = transpose_hw(p.hr);
        p.lr = transpose_hw(p.lr);
    }
    return p;
}

PairedSample make_eval_pair(const CorpusImage& img, int scale) {
    PairedSample p;
    p.scale = scale;
    p.source_id = img.id;
    p.hr = center_crop_to_multiple(img.image, static_cast<std::size_t>(scale));
    p.lr = synthesize_lr(p.hr, scale);
    return p;
}

PairSampler::PairSampler(std::vector<CorpusImage> images, int scale, std::size_t crop_lr,
                         PairMode mode, Augment aug, const WarningSink& warn)
    : scale_(scale), crop_lr_(crop_lr), mode_(mode), aug_(aug) {
    const auto s = static_cast<std::size_t>(scale);
    for (auto& img : images) {
        if (img.image.dim(0) / s < crop_lr || img.image.dim(1) / s < crop_lr) {
            warn(fmt::format("'{}' ({}x{}) too small for a {}-pixel LR crop at scale {}", img.id,
                             img.image.dim(0), img.image.dim(1), crop_lr, scale));
            continue;
        }
        if (mode == PairMode::B) {
            Image hr = center_crop_to_multiple(img.image, s);
            pre_lr_.push_back(synthesize_lr(hr, scale, warn));
            img.image = std::move(hr);
        }
        images_.push_back(std::move(img));
    }
    if (images_.empty())
        throw CorpusError(fmt::format("no training image is large enough for a {}-pixel crop",
                                      crop_lr));
}

std::vector<PairedSample> PairSampler::batch(std::size_t n, Rng& rng) const {
    std::uniform_int_distribution<std::size_t> pick(0, images_.size() - 1);
    std::vector<PairedSample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = pick(rng);
        const Image* pre = mode_ == PairMode::B ? &pre_lr_[k] : nullptr;
        out.push_back(*sample_training_pair(images_[k].image, scale_, crop_lr_, rng, mode_, pre,
                                            images_[k].id, aug_));
    }
    return out;
}

}  // namespace ptsr
