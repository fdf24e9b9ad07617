#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ptsr/generator.hpp"
#include "ptsr/losses.hpp"

namespace ptsr {

enum class MetricSpace { rgb, y };
std::string to_string(MetricSpace s);
MetricSpace metric_space_from_string(const std::string& s);

/// Tables report identical images at this value instead of +inf.
inline constexpr double kPsnrCap = 100.0;

struct SsimOptions {
    std::size_t window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double peak = 1.0;
};

/// 10 log10(peak^2 / MSE); +inf for identical inputs.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);
double psnr_capped(double db);

/// Mean local SSIM (Gaussian window, valid positions only), averaged over
/// channels. Rejects images smaller than the window.
double ssim(const Tensor& a, const Tensor& b, const SsimOptions& opt = {});

/// Normalized 1-D Gaussian taps.
std::vector<double> gaussian_window(std::size_t size, double sigma);

/// BT.601 luma in [0,1] (16/255 offset, studio swing), H x W x 1.
Tensor rgb_to_y(const Tensor& rgb);
/// Drops `n` pixels from every border.
Tensor shave(const Tensor& img, std::size_t n);

struct MetricOptions {
    MetricSpace space = MetricSpace::rgb;
    std::size_t shave = 0;
};

struct PairMetrics {
    double psnr_db = 0.0;  // capped
    double ssim = 0.0;
};

PairMetrics evaluate_pair(const Tensor& sr, const Tensor& hr, const MetricOptions& opt = {});

struct MetricRow {
    std::string image_id;
    int scale = 2;
    double psnr_db = 0.0;
    double ssim = 0.0;
    MetricSpace space = MetricSpace::rgb;
    std::size_t shave = 0;
};

/// Header plus one line per row plus a trailing "mean" row when rows exist.
void write_metric_csv(std::ostream& os, const std::vector<MetricRow>& rows);
MetricRow mean_row(const std::vector<MetricRow>& rows);

/// Channel-wise max |g|, then min-max normalization to [0,1]; a constant
/// map becomes all zeros. Input H x W x C, output H x W x 1.
Tensor activation_from_gradient(const Tensor& grad);

/// Saliency of the reconstruction loss w.r.t. the low-resolution input:
/// d L_R(Y_R, G(X_R), up(X_R)) / d X_R reduced by activation_from_gradient.
/// X_R must be a geometry the generator accepts; Y_R must be scale times it.
/// Leaves the generator's parameter gradients zeroed.
Tensor visual_activation_map(Generator& gen, const Tensor& x_r, const Tensor& y_r, int scale,
                             const LossConfig& loss = {});

}  // namespace ptsr
