#include "gpdip/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <variant>

namespace gpdip {

Instance make_instance(Task task, const Tensor& clean, double noise_sigma, double drop_fraction, std::uint64_t seed) {
    Rng rng(seed, 5);
    Instance inst;
    inst.task = task;
    inst.clean = clean;
    inst.noise_sigma = noise_sigma;
    const Shape spatial = clean.spatial_shape();
    switch (task) {
        case Task::denoise:
            inst.target = add_noise(clean, noise_sigma, rng);
            inst.mask = full_mask(spatial);
            break;
        case Task::inpaint:
        case Task::fit1d:
            inst.mask = random_mask(spatial, drop_fraction, rng);
            inst.target = noise_sigma > 0.0 ? add_noise(clean, noise_sigma, rng) : clean;
            break;
    }
    return inst;
}

NetworkSpec image_network(const std::string& preset_name, int channels, int out_channels, int dims) {
    PresetOptions o;
    o.channels = channels;
    o.input_channels = std::min(channels, 32);
    o.dims = dims;
    return with_readout(preset(preset_name, o), out_channels);
}

double reported_psnr(const SchemeResult& r) { return r.scheme == Scheme::sgld ? r.psnr_final : r.psnr_best; }

SchemeResult run_scheme(const Instance& inst, const NetworkSpec& spec, const InferenceConfig& config) {
    SchemeResult out;
    out.scheme = config.scheme;
    out.seed = config.seed;
    const auto t0 = std::chrono::steady_clock::now();
    out.run = run(inst.task, inst.target, inst.mask, &inst.clean, spec, config);
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.psnr_final = psnr(out.run.output, inst.clean);
    const auto& rows = out.run.trace.rows;
    if (out.run.trace.best_row >= 0) {
        const TraceRow& best = rows[static_cast<std::size_t>(out.run.trace.best_row)];
        out.psnr_best = best.psnr_estimate;
        out.best_iteration = best.iteration;
    }
    return out;
}

StationaryKernel image_kernel(const NetworkSpec& spec, const Shape& spatial) {
    if (spatial.size() != 2) throw ShapeError("image_kernel: expected 2D extents");
    const int half = static_cast<int>(std::max(spatial[0], spatial[1])) - 1;
    return derive_kernel(spec, std::max(half, 1)).kernel;
}

double observed_variance(const Instance& inst) {
    const std::size_t plane = inst.target.plane_size();
    const std::size_t n = inst.mask.count_observed();
    if (n == 0) throw ShapeError("observed_variance: mask observes no pixels");
    double total = 0.0;
    for (std::size_t c = 0; c < inst.target.channels(); ++c) {
        double m = 0.0, ss = 0.0;
        for (std::size_t p = 0; p < plane; ++p)
            if (inst.mask.observed[p]) m += inst.target[c * plane + p];
        m /= static_cast<double>(n);
        for (std::size_t p = 0; p < plane; ++p)
            if (inst.mask.observed[p]) {
                const double d = inst.target[c * plane + p] - m;
                ss += d * d;
            }
        total += ss / static_cast<double>(n);
    }
    return total / static_cast<double>(inst.target.channels());
}

NetworkSpec matched_readout(NetworkSpec spec, const Instance& inst) {
    if (spec.layers.empty() || !std::holds_alternative<ConvLayer>(spec.layers.back()))
        throw ShapeError("matched_readout: spec does not end in a conv layer");
    auto& readout = std::get<ConvLayer>(spec.layers.back());
    readout.gain = 1.0;
    const double k0 = derive_kernel(spec, 1).kernel.variance();
    const double v = observed_variance(inst);
    if (!(v > 0.0)) throw ShapeError("matched_readout: observed pixels are constant");
    readout.gain = v / k0;
    return spec;
}

InferenceConfig sweep_config() {
    InferenceConfig c = default_config(Task::inpaint, Scheme::sgd);
    c.lr = 1.5e-3;
    c.iterations = 1200;
    c.burn_in = 0;
    return c;
}

GpReconstruction gp_reconstruct(const StationaryKernel& kernel, const Instance& inst, double sigma_n) {
    const Shape spatial = inst.target.spatial_shape();
    if (spatial.size() != 2 || kernel.dims() != 2) throw ShapeError("gp_reconstruct: expected 2D images and kernel");
    const std::size_t h = spatial[0], w = spatial[1], plane = h * w;
    const std::vector<Point> all = grid_points(h, w);
    std::vector<Point> obs;
    std::vector<std::size_t> obs_index;
    for (std::size_t p = 0; p < plane; ++p)
        if (inst.mask.observed[p]) {
            obs.push_back(all[p]);
            obs_index.push_back(p);
        }
    if (obs.empty()) throw ShapeError("gp_reconstruct: mask observes no pixels");

    GpReconstruction rec;
    rec.mean = Tensor(inst.target.shape());
    rec.variance = Tensor(inst.target.shape());
    for (std::size_t c = 0; c < inst.target.channels(); ++c) {
        std::vector<double> y(obs.size());
        double m = 0.0;
        for (std::size_t i = 0; i < obs.size(); ++i) m += y[i] = inst.target[c * plane + obs_index[i]];
        m /= static_cast<double>(obs.size());
        double var = 0.0;
        for (double& v : y) {
            v -= m;
            var += v * v;
        }
        var /= static_cast<double>(obs.size());
        if (!(var > 0.0)) var = 1.0;
        std::vector<double> scaled = kernel.values();
        const double s = var / kernel.variance();
        for (double& v : scaled) v *= s;
        const StationaryKernel k(kernel.dims(), kernel.half_width(), std::move(scaled));
        const GPPosterior post = posterior(k, obs, y, NoiseModel{sigma_n}, all);
        rec.jitter = std::max(rec.jitter, post.jitter);
        for (std::size_t p = 0; p < plane; ++p) {
            rec.mean[c * plane + p] = post.mean[p] + m;
            rec.variance[c * plane + p] = post.variance[p];
        }
    }
    rec.psnr = psnr(rec.mean, inst.clean);
    return rec;
}

namespace {

std::vector<double> select(const std::vector<SuiteEntry>& entries, Scheme s, const std::string& image) {
    std::vector<double> v;
    for (const auto& e : entries)
        if (e.scheme == s && e.image == image) v.push_back(e.psnr);
    return v;
}

std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

}  // namespace

double SuiteTable::mean(Scheme s, const std::string& image) const {
    const auto v = select(entries, s, image);
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    double m = 0.0;
    for (double x : v) m += x;
    return m / static_cast<double>(v.size());
}

double SuiteTable::stddev(Scheme s, const std::string& image) const {
    const auto v = select(entries, s, image);
    if (v.size() < 2) return 0.0;
    const double m = mean(s, image);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::string SuiteTable::to_text() const {
    std::ostringstream out;
    out << "scheme";
    for (const auto& im : images) out << " | " << im;
    out << '\n';
    for (Scheme s : schemes) {
        out << to_string(s);
        for (const auto& im : images) out << " | " << fmt("%.2f", mean(s, im)) << " +- " << fmt("%.2f", stddev(s, im));
        out << '\n';
    }
    return out.str();
}

std::string SuiteTable::to_csv() const {
    std::ostringstream out;
    out << "image,scheme,seed,psnr\n";
    for (const auto& e : entries) out << e.image << ',' << to_string(e.scheme) << ',' << e.seed << ',' << fmt("%.6f", e.psnr) << '\n';
    return out.str();
}

double ChannelPoint::median() const {
    if (psnr.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::vector<double> v = psnr;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string ChannelSweep::to_csv() const {
    std::ostringstream out;
    out << "model,channels,median_psnr,psnr_per_seed\n";
    out << "gp,0," << fmt("%.6f", gp_psnr) << ",\n";
    for (const auto& p : points) {
        out << "dip," << p.channels << ',' << fmt("%.6f", p.median()) << ',';
        for (std::size_t i = 0; i < p.psnr.size(); ++i) out << (i ? ";" : "") << fmt("%.6f", p.psnr[i]);
        out << '\n';
    }
    return out.str();
}

ChannelSweep sweep_channels(const Instance& inst, const std::string& preset_name, const std::vector<int>& channels,
                            const std::vector<std::uint64_t>& seeds, const InferenceConfig& config, double gp_sigma_n) {
    ChannelSweep sweep;
    const int out_channels = static_cast<int>(inst.target.channels());
    const Shape spatial = inst.target.spatial_shape();
    // The limiting kernel does not depend on the width.
    sweep.gp_psnr = gp_reconstruct(image_kernel(image_network(preset_name, 16, out_channels), spatial), inst, gp_sigma_n).psnr;
    for (int c : channels) {
        ChannelPoint pt;
        pt.channels = c;
        const NetworkSpec spec = matched_readout(image_network(preset_name, c, out_channels), inst);
        for (std::uint64_t seed : seeds) {
            InferenceConfig cfg = config;
            cfg.seed = seed;
            cfg.scheme = Scheme::sgd;
            // The tangent kernel grows linearly with width under this parameterization.
            cfg.lr = config.lr * 32.0 / c;
            pt.psnr.push_back(run_scheme(inst, spec, cfg).psnr_final);
        }
        sweep.points.push_back(std::move(pt));
    }
    return sweep;
}

}  // namespace gpdip
