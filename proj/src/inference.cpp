#include "gpdip/inference.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace gpdip {

std::string to_string(Scheme s) {
    switch (s) {
        case Scheme::sgd: return "sgd";
        case Scheme::sgd_avg: return "sgd_avg";
        case Scheme::sgd_input: return "sgd_input";
        case Scheme::sgd_input_avg: return "sgd_input_avg";
        case Scheme::sgld: return "sgld";
    }
    return "?";
}

std::string to_string(Task t) {
    switch (t) {
        case Task::denoise: return "denoise";
        case Task::inpaint: return "inpaint";
        case Task::fit1d: return "fit1d";
    }
    return "?";
}

Scheme parse_scheme(const std::string& s) {
    for (Scheme k : all_schemes())
        if (to_string(k) == s) return k;
    throw ShapeError("unknown scheme '" + s + "' (sgd, sgd_avg, sgd_input, sgd_input_avg, sgld)");
}

Task parse_task(const std::string& s) {
    for (Task t : {Task::denoise, Task::inpaint, Task::fit1d})
        if (to_string(t) == s) return t;
    throw ShapeError("unknown task '" + s + "' (denoise, inpaint, fit1d)");
}

std::vector<Scheme> all_schemes() { return {Scheme::sgd, Scheme::sgd_avg, Scheme::sgd_input, Scheme::sgd_input_avg, Scheme::sgld}; }

namespace {

bool uses_input_noise(Scheme s) { return s == Scheme::sgd_input || s == Scheme::sgd_input_avg; }
bool uses_ema(Scheme s) { return s == Scheme::sgd_avg || s == Scheme::sgd_input_avg; }

}  // namespace

void InferenceConfig::validate() const {
    if (!(lr > 0.0)) throw ShapeError("config: lr must be positive");
    if (iterations < 0) throw ShapeError("config: iterations must be non-negative");
    if (scheme == Scheme::sgld && iterations > 0 && !(burn_in >= 0 && burn_in < iterations))
        throw ShapeError("config: burn_in must lie in [0, iterations)");
    if (!(ema_decay > 0.0 && ema_decay < 1.0)) throw ShapeError("config: ema_decay must be in (0, 1)");
    if (weight_decay < 0.0) throw ShapeError("config: weight_decay must be non-negative");
    if (sigma_p < 0.0) throw ShapeError("config: sigma_p must be non-negative");
    if (!(sigma_n > 0.0)) throw ShapeError("config: sigma_n must be positive");
    if (eval_every < 1) throw ShapeError("config: eval_every must be positive");
    if (sample_every < 1) throw ShapeError("config: sample_every must be positive");
    if (lr_decay_power < 0.0 || !(lr_decay_t0 > 0.0)) throw ShapeError("config: invalid lr decay");
}

InferenceConfig default_config(Task task, Scheme scheme) {
    InferenceConfig c;
    c.scheme = scheme;
    // Step sizes for the summed, centered loss, calibrated on 32x32 and 64x64
    // images with unit-variance network inputs.
    c.lr = scheme == Scheme::sgld ? 3e-6 : 6e-4;
    c.iterations = task == Task::denoise ? 5000 : 7500;
    c.burn_in = task == Task::denoise ? 1750 : 5000;
    c.weight_decay = scheme == Scheme::sgld ? 5e-5 : 0.0;
    // Inpainting targets carry no noise; 0.05 puts the sgld drift at the sgd step.
    if (task == Task::inpaint) c.sigma_n = 0.05;
    // A third of the input std.
    c.sigma_p = uses_input_noise(scheme) ? 1.0 / 3.0 : 0.0;
    return c;
}

nlohmann::json to_json(const InferenceConfig& c) {
    return {{"scheme", to_string(c.scheme)},
            {"lr", c.lr},
            {"iterations", c.iterations},
            {"burn_in", c.burn_in},
            {"sigma_p", c.sigma_p},
            {"weight_decay", c.weight_decay},
            {"ema_decay", c.ema_decay},
            {"noise_injection", c.noise_injection},
            {"seed", c.seed},
            {"eval_every", c.eval_every},
            {"sigma_n", c.sigma_n},
            {"lr_decay_power", c.lr_decay_power},
            {"lr_decay_t0", c.lr_decay_t0},
            {"sample_every", c.sample_every},
            {"optimize_input", c.optimize_input},
            {"center", c.center},
            {"padding", to_string(c.padding)},
            {"divergence_threshold", c.divergence_threshold}};
}

InferenceConfig config_from_json(const nlohmann::json& j, InferenceConfig c) {
    if (!j.is_object()) throw FormatError("config: expected a JSON object");
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "scheme") c.scheme = parse_scheme(v.get<std::string>());
            else if (key == "lr") c.lr = v.get<double>();
            else if (key == "iterations") c.iterations = v.get<int>();
            else if (key == "burn_in") c.burn_in = v.get<int>();
            else if (key == "sigma_p") c.sigma_p = v.get<double>();
            else if (key == "weight_decay") c.weight_decay = v.get<double>();
            else if (key == "ema_decay") c.ema_decay = v.get<double>();
            else if (key == "noise_injection") c.noise_injection = v.get<bool>();
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "eval_every") c.eval_every = v.get<int>();
            else if (key == "sigma_n") c.sigma_n = v.get<double>();
            else if (key == "lr_decay_power") c.lr_decay_power = v.get<double>();
            else if (key == "lr_decay_t0") c.lr_decay_t0 = v.get<double>();
            else if (key == "sample_every") c.sample_every = v.get<int>();
            else if (key == "optimize_input") c.optimize_input = v.get<bool>();
            else if (key == "center") c.center = v.get<bool>();
            else if (key == "padding") c.padding = parse_padding(v.get<std::string>());
            else if (key == "divergence_threshold") c.divergence_threshold = v.get<double>();
            else throw FormatError("config: unknown key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("config: ") + e.what());
    }
    return c;
}

void PosteriorAccumulator::add(const Tensor& sample) {
    if (count_ == 0) {
        mean_ = Tensor(sample.shape());
        m2_ = Tensor(sample.shape());
    } else if (sample.shape() != mean_.shape()) {
        throw ShapeError("PosteriorAccumulator: sample shape changed");
    }
    ++count_;
    const double inv = 1.0 / static_cast<double>(count_);
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double d = sample[i] - mean_[i];
        mean_[i] += d * inv;
        m2_[i] += d * (sample[i] - mean_[i]);
    }
}

PosteriorStats posterior_stats(const PosteriorAccumulator& acc) {
    if (acc.count() < 2) throw ShapeError("posterior_stats: need at least two samples");
    PosteriorStats s{acc.mean(), acc.m2()};
    s.variance *= 1.0 / static_cast<double>(acc.count() - 1);
    return s;
}

void sgd_step(Tensor& w, const Tensor& g, double lr, double weight_decay) {
    if (w.shape() != g.shape()) throw ShapeError("sgd_step: gradient shape mismatch");
    if (!g.all_finite()) throw NumericalError("sgd_step: non-finite gradient");
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * (g[i] + weight_decay * w[i]);
}

void sgd_step(ParamSet& params, const ParamSet& grads, double lr, double weight_decay) {
    if (params.tensors.size() != grads.tensors.size()) throw ShapeError("sgd_step: parameter/gradient count mismatch");
    for (std::size_t k = 0; k < params.tensors.size(); ++k) sgd_step(params.tensors[k], grads.tensors[k], lr, weight_decay);
}

void sgld_step(Tensor& w, const Tensor& g, double eps, double weight_decay, double sigma_n, Rng& rng, bool inject_noise) {
    if (!(eps > 0.0)) throw ShapeError("sgld_step: step size must be positive");
    if (!(sigma_n > 0.0)) throw ShapeError("sgld_step: sigma_n must be positive");
    const double s2 = sigma_n * sigma_n;
    sgd_step(w, g, eps / (2.0 * s2), s2 * weight_decay);
    if (!inject_noise) return;
    const double sd = std::sqrt(eps);
    for (double& v : w.storage()) v += rng.normal(sd);
}

void sgld_step(ParamSet& params, const ParamSet& grads, double eps, double weight_decay, double sigma_n, Rng& rng,
               bool inject_noise) {
    if (params.tensors.size() != grads.tensors.size()) throw ShapeError("sgld_step: parameter/gradient count mismatch");
    for (std::size_t k = 0; k < params.tensors.size(); ++k)
        sgld_step(params.tensors[k], grads.tensors[k], eps, weight_decay, sigma_n, rng, inject_noise);
}

void ema_update(Tensor& acc, const Tensor& x, double decay) {
    if (!(decay > 0.0 && decay < 1.0)) throw ShapeError("ema_update: decay must be in (0, 1)");
    if (acc.empty()) {
        acc = x;
        return;
    }
    if (acc.shape() != x.shape()) throw ShapeError("ema_update: shape mismatch");
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] = decay * acc[i] + (1.0 - decay) * x[i];
}

Tensor perturb_input(const NetworkInput& input, Rng& rng) {
    if (input.sigma_p < 0.0) throw ShapeError("perturb_input: sigma_p must be non-negative");
    Tensor x = input.x;
    if (input.sigma_p == 0.0) return x;
    for (double& v : x.storage()) v += rng.normal(input.sigma_p);
    return x;
}

namespace {

// Per-channel means over the observed positions.
std::vector<double> observed_means(const Tensor& x, const Mask& mask) {
    const std::size_t plane = x.plane_size();
    std::vector<double> m(x.channels(), 0.0);
    for (std::size_t c = 0; c < x.channels(); ++c) {
        for (std::size_t p = 0; p < plane; ++p)
            if (mask.observed[p]) m[c] += x[c * plane + p];
        m[c] /= static_cast<double>(mask.count_observed());
    }
    return m;
}

// x + sign * offset[c] on every channel c.
Tensor shifted(const Tensor& x, const std::vector<double>& offset, double sign = 1.0) {
    Tensor out = x;
    const std::size_t plane = x.plane_size();
    for (std::size_t c = 0; c < x.channels(); ++c)
        for (std::size_t p = 0; p < plane; ++p) out[c * plane + p] += sign * offset[c];
    return out;
}

}  // namespace

RunResult run(Task task, const Tensor& target, const Mask& mask, const Tensor* clean, const NetworkSpec& spec,
              const InferenceConfig& config) {
    config.validate();
    spec.validate();
    const Shape spatial = target.spatial_shape();
    if (mask.spatial != spatial) throw ShapeError("run: mask shape " + shape_string(mask.spatial) + " does not match target");
    if (task == Task::denoise && mask.count_observed() != mask.observed.size())
        throw ShapeError("run: denoising expects a full mask");
    if (clean && clean->shape() != target.shape()) throw ShapeError("run: clean reference shape mismatch");
    if (output_spatial(spec, spatial) != spatial) throw ShapeError("run: network does not preserve the target extents");
    const LayerGeometry geom = layer_geometry(spec);
    if (static_cast<std::size_t>(geom.channels.back()) != target.channels())
        throw ShapeError("run: network emits " + std::to_string(geom.channels.back()) + " channels, target has " +
                         std::to_string(target.channels()));
    const std::size_t n_obs = mask.count_observed();
    if (n_obs == 0) throw ShapeError("run: mask observes no pixels");

    RunResult res;
    std::vector<double> zero(target.channels(), 0.0);
    res.target_offset = config.center ? observed_means(target, mask) : zero;
    const Tensor y = apply_mask(shifted(target, res.target_offset, -1.0), mask);

    ParamSet params = init_params(spec, config.seed);
    NetworkInput input = init_input(spec, spatial, config.seed);
    input.frozen = !config.optimize_input;
    input.sigma_p = uses_input_noise(config.scheme) ? config.sigma_p : 0.0;
    Rng noise_rng(config.seed, 3);
    Rng input_rng(config.seed, 4);

    Tensor ema;
    PosteriorAccumulator acc;
    double best_psnr = -std::numeric_limits<double>::infinity();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const double denom = static_cast<double>(n_obs * target.channels());
    ForwardCache cache;
    Tensor f;

    for (int t = 0;; ++t) {
        const Tensor x = input.sigma_p > 0.0 ? perturb_input(input, input_rng) : input.x;
        f = forward(spec, params, x, config.padding, &cache);
        // With centering the model is the network's zero-mean part: the
        // residual below then sums to zero over observed pixels per channel,
        // which is also the gradient of the centered loss.
        if (config.center) f = shifted(f, observed_means(f, mask), -1.0);
        Tensor r = apply_mask(f, mask);
        r -= y;
        const double sq = dot(r, r);
        if (!std::isfinite(sq) || 0.5 * sq > config.divergence_threshold)
            throw DivergenceError("run: loss diverged at iteration " + std::to_string(t), res.trace);

        if (uses_ema(config.scheme)) ema_update(ema, f, config.ema_decay);
        if (config.scheme == Scheme::sgld && t >= config.burn_in && (t - config.burn_in) % config.sample_every == 0) acc.add(f);

        if (t % config.eval_every == 0 || t == config.iterations) {
            TraceRow row{t, sq / denom, nan, nan, std::sqrt(params.squared_norm())};
            if (clean) {
                const Tensor it = shifted(f, res.target_offset);
                row.psnr_iterate = psnr(it, *clean);
                const Tensor* est = &f;
                if (uses_ema(config.scheme)) est = &ema;
                if (config.scheme == Scheme::sgld && acc.count() > 0) est = &acc.mean();
                Tensor est_image = shifted(*est, res.target_offset);
                row.psnr_estimate = psnr(est_image, *clean);
                if (row.psnr_estimate > best_psnr) {
                    best_psnr = row.psnr_estimate;
                    res.best_estimate = std::move(est_image);
                    res.trace.best_row = static_cast<int>(res.trace.rows.size());
                }
            }
            res.trace.rows.push_back(row);
        }
        if (t == config.iterations) break;

        Gradients g = backward(spec, params, cache, r, config.padding);
        if (!g.params.all_finite()) throw DivergenceError("run: non-finite gradient at iteration " + std::to_string(t), res.trace);
        if (config.scheme == Scheme::sgld) {
            const double eps = config.lr_decay_power > 0.0
                                   ? config.lr * std::pow(1.0 + t / config.lr_decay_t0, -config.lr_decay_power)
                                   : config.lr;
            sgld_step(params, g.params, eps, config.weight_decay, config.sigma_n, noise_rng, config.noise_injection);
            if (!input.frozen) sgld_step(input.x, g.input, eps, config.weight_decay, config.sigma_n, noise_rng, config.noise_injection);
        } else {
            sgd_step(params, g.params, config.lr, config.weight_decay);
            if (!input.frozen) sgd_step(input.x, g.input, config.lr, config.weight_decay);
        }
    }

    res.last_iterate = shifted(f, res.target_offset);
    if (config.scheme == Scheme::sgld && acc.count() >= 2) {
        PosteriorStats st = posterior_stats(acc);
        st.mean = shifted(st.mean, res.target_offset);
        res.output = st.mean;
        res.posterior = std::move(st);
    } else if (uses_ema(config.scheme)) {
        res.output = shifted(ema, res.target_offset);
    } else {
        res.output = res.last_iterate;
    }
    return res;
}

double mean_mse_after(const RunTrace& trace, int iteration) {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& r : trace.rows)
        if (r.iteration >= iteration) {
            s += r.mse_noisy;
            ++n;
        }
    if (n == 0) throw ShapeError("mean_mse_after: no trace rows after iteration " + std::to_string(iteration));
    return s / static_cast<double>(n);
}

std::string trace_to_csv(const RunTrace& trace) {
    std::ostringstream out;
    out.precision(10);
    out << "iter,mse_noisy,psnr_clean,psnr_estimate,param_norm,best\n";
    for (std::size_t i = 0; i < trace.rows.size(); ++i) {
        const auto& r = trace.rows[i];
        out << r.iteration << ',' << r.mse_noisy << ',' << r.psnr_iterate << ',' << r.psnr_estimate << ',' << r.param_norm << ','
            << (static_cast<int>(i) == trace.best_row ? 1 : 0) << '\n';
    }
    return out.str();
}

}  // namespace gpdip
