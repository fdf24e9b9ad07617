#include "ptsr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>

namespace ptsr {

std::string to_string(MetricSpace s) { return s == MetricSpace::rgb ? "rgb" : "y"; }

MetricSpace metric_space_from_string(const std::string& s) {
    if (s == "rgb") return MetricSpace::rgb;
    if (s == "y") return MetricSpace::y;
    throw std::invalid_argument(fmt::format("unknown metric space '{}' (expected rgb or y)", s));
}

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape() || a.rank() != 3) {
        throw ShapeError(fmt::format("{}: shapes {} and {} differ", what, shape_str(a.shape()),
                                     shape_str(b.shape())));
    }
}

// Separable valid-mode filter of one channel: (h - w + 1) x (w_img - w + 1).
std::vector<double> filter_valid(const std::vector<double>& plane, std::size_t h, std::size_t w,
                                 const std::vector<double>& taps) {
    const std::size_t n = taps.size(), oh = h - n + 1, ow = w - n + 1;
    std::vector<double> rows(h * ow), out(oh * ow);
#pragma omp parallel for schedule(static)
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            double s = 0;
            for (std::size_t t = 0; t < n; ++t) s += taps[t] * plane[y * w + x + t];
            rows[y * ow + x] = s;
        }
#pragma omp parallel for schedule(static)
    for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            double s = 0;
            for (std::size_t t = 0; t < n; ++t) s += taps[t] * rows[(y + t) * ow + x];
            out[y * ow + x] = s;
        }
    return out;
}

}  // namespace

double psnr(const Tensor& a, const Tensor& b, double peak) {
    require_same(a, b, "psnr");
    double se = 0;
    for (std::size_t i = 0; i < a.size(); ++i) se += (a[i] - b[i]) * (a[i] - b[i]);
    const double mse = se / static_cast<double>(a.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

double psnr_capped(double db) { return std::min(db, kPsnrCap); }

std::vector<double> gaussian_window(std::size_t size, double sigma) {
    std::vector<double> taps(size);
    const double c = (static_cast<double>(size) - 1.0) / 2.0;
    double sum = 0;
    for (std::size_t i = 0; i < size; ++i) {
        const double d = static_cast<double>(i) - c;
        taps[i] = std::exp(-d * d / (2 * sigma * sigma));
        sum += taps[i];
    }
    for (double& t : taps) t /= sum;
    return taps;
}

double ssim(const Tensor& a, const Tensor& b, const SsimOptions& opt) {
    require_same(a, b, "ssim");
    const std::size_t h = a.dim(0), w = a.dim(1), ch = a.dim(2);
    if (h < opt.window || w < opt.window) {
        throw ShapeError(fmt::format("ssim: image {}x{} smaller than the {}-pixel window", h, w,
                                     opt.window));
    }
    const auto taps = gaussian_window(opt.window, opt.sigma);
    const double c1 = (opt.k1 * opt.peak) * (opt.k1 * opt.peak);
    const double c2 = (opt.k2 * opt.peak) * (opt.k2 * opt.peak);
    double total = 0;
    for (std::size_t c = 0; c < ch; ++c) {
        std::vector<double> pa(h * w), pb(h * w), aa(h * w), bb(h * w), ab(h * w);
        for (std::size_t i = 0; i < h * w; ++i) {
            pa[i] = a[i * ch + c];
            pb[i] = b[i * ch + c];
            aa[i] = pa[i] * pa[i];
            bb[i] = pb[i] * pb[i];
            ab[i] = pa[i] * pb[i];
        }
        const auto mu_a = filter_valid(pa, h, w, taps), mu_b = filter_valid(pb, h, w, taps);
        const auto e_aa = filter_valid(aa, h, w, taps), e_bb = filter_valid(bb, h, w, taps);
        const auto e_ab = filter_valid(ab, h, w, taps);
        double sum = 0;
        for (std::size_t i = 0; i < mu_a.size(); ++i) {
            const double ma = mu_a[i], mb = mu_b[i];
            const double va = e_aa[i] - ma * ma, vb = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
            sum += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                   ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        total += sum / static_cast<double>(mu_a.size());
    }
    return total / static_cast<double>(ch);
}

Tensor rgb_to_y(const Tensor& rgb) {
    require_image(rgb, "rgb_to_y input");
    const std::size_t h = rgb.dim(0), w = rgb.dim(1);
    Tensor out({h, w, 1});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            out.at(y, x, 0) = (16.0 + 65.481 * rgb.at(y, x, 0) + 128.553 * rgb.at(y, x, 1) +
                               24.966 * rgb.at(y, x, 2)) /
                              255.0;
    return out;
}

Tensor shave(const Tensor& img, std::size_t n) {
    if (n == 0) return img;
    if (img.rank() != 3 || img.dim(0) <= 2 * n || img.dim(1) <= 2 * n) {
        throw ShapeError(fmt::format("shave {}: image {} too small", n, shape_str(img.shape())));
    }
    const std::size_t h = img.dim(0) - 2 * n, w = img.dim(1) - 2 * n, ch = img.dim(2);
    Tensor out({h, w, ch});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < ch; ++c) out.at(y, x, c) = img.at(y + n, x + n, c);
    return out;
}

PairMetrics evaluate_pair(const Tensor& sr, const Tensor& hr, const MetricOptions& opt) {
    require_same(sr, hr, "evaluate_pair");
    Tensor a = opt.space == MetricSpace::y ? rgb_to_y(sr) : sr;
    Tensor b = opt.space == MetricSpace::y ? rgb_to_y(hr) : hr;
    a = shave(a, opt.shave);
    b = shave(b, opt.shave);
    return {psnr_capped(psnr(a, b)), ssim(a, b)};
}

MetricRow mean_row(const std::vector<MetricRow>& rows) {
    MetricRow m;
    m.image_id = "mean";
    if (rows.empty()) return m;
    m.scale = rows.front().scale;
    m.space = rows.front().space;
    m.shave = rows.front().shave;
    for (const auto& r : rows) {
        m.psnr_db += r.psnr_db;
        m.ssim += r.ssim;
    }
    m.psnr_db /= static_cast<double>(rows.size());
    m.ssim /= static_cast<double>(rows.size());
    return m;
}

void write_metric_csv(std::ostream& os, const std::vector<MetricRow>& rows) {
    os << "image_id,scale,psnr_db,ssim,metric_space,shave\n";
    auto line = [&](const MetricRow& r) {
        os << fmt::format("{},{},{:.10f},{:.10f},{},{}\n", r.image_id, r.scale, r.psnr_db, r.ssim,
                          to_string(r.space), r.shave);
    };
    for (const auto& r : rows) line(r);
    if (!rows.empty()) line(mean_row(rows));
}

Tensor activation_from_gradient(const Tensor& grad) {
    if (grad.rank() != 3) throw ShapeError("activation_from_gradient expects H x W x C");
    const std::size_t h = grad.dim(0), w = grad.dim(1), ch = grad.dim(2);
    Tensor out({h, w, 1});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            double m = 0;
            for (std::size_t c = 0; c < ch; ++c) m = std::max(m, std::abs(grad.at(y, x, c)));
            out.at(y, x, 0) = m;
        }
    const auto [lo, hi] = std::minmax_element(out.data().begin(), out.data().end());
    const double mn = *lo, range = *hi - *lo;
    if (!(range > 0.0)) {
        out.fill(0.0);
        return out;
    }
    for (double& v : out.data()) v = (v - mn) / range;
    return out;
}

Tensor visual_activation_map(Generator& gen, const Tensor& x_r, const Tensor& y_r, int scale,
                             const LossConfig& loss) {
    require_image(x_r, "saliency input");
    require_image(y_r, "saliency target");
    const auto s = static_cast<std::size_t>(scale);
    if (y_r.dim(0) != s * x_r.dim(0) || y_r.dim(1) != s * x_r.dim(1)) {
        throw ShapeError(fmt::format("saliency: target {} is not {}x the input {}",
                                     shape_str(y_r.shape()), scale, shape_str(x_r.shape())));
    }
    auto x = ad::input(x_r);
    auto y_s = gen.forward(x, scale);
    auto x_up = ad::resize_bilinear(ad::constant(x_r), y_r.dim(0), y_r.dim(1));
    auto l = reconstruction_loss(ad::constant(y_r), y_s, x_up, loss);
    if (!l.requires_grad()) throw std::logic_error("saliency: loss does not depend on the input");
    ad::backward(l);
    zero_grads(gen.parameters());
    return activation_from_gradient(x.grad());
}

}  // namespace ptsr
