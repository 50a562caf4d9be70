// Acceptance suite: one PASS/FAIL line per criterion.
//
// Every criterion runs unless criterion numbers are given on the command
// line. The exit status is 0 when all of them ran to completion (whatever
// their verdict) and 1 when one threw; --strict also exits 1 on any FAIL.

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <numbers>
#include <string>
#include <variant>
#include <vector>

#include "gpdip/dipnet.hpp"
#include "gpdip/empirics.hpp"
#include "gpdip/experiments.hpp"
#include "gpdip/gp.hpp"
#include "gpdip/inference.hpp"
#include "gpdip/kernel.hpp"
#include "gpdip/ops.hpp"
#include "oracles.hpp"

using namespace gpdip;
using std::numbers::pi;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[1024];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::string data_path(const std::string& name) { return std::string(GPDIP_DATA_DIR) + "/" + name; }

// ------------------------------------------------------------------ 1

Verdict kernel_golden_values() {
    // Half-width-1 kernels [rho, 1, rho]: the transfer's rho(1) is the mapped correlation.
    auto mapped = [](double rho, Activation a) {
        const StationaryKernel k(1, 1, {rho, 1.0, rho});
        return transfer_nonlinearity(k, a).rho(1);
    };
    struct Case {
        double rho;
        Activation a;
        double expect;
    };
    const Case cases[] = {{0.5, Activation::erf, 1.0 / 3.0},
                          {0.0, Activation::relu, 1.0 / pi},
                          {1.0, Activation::relu, 1.0},
                          {-1.0, Activation::relu, 0.0}};
    double worst = 0.0;
    for (const Case& c : cases) worst = std::max(worst, std::abs(mapped(c.rho, c.a) - c.expect));
    return {worst <= 1e-12, fmt("max |err| %.2e over erf(0.5), relu(0), relu(+-1) (tol 1e-12)", worst)};
}

// ------------------------------------------------------------------ 2

Verdict theorem_validation() {
    double worst = 0.0;
    std::string parts;
    for (const bool gaussian : {false, true})
        for (const int d : {1, 2, 4}) {
            PresetOptions o;
            o.channels = 256;
            o.input_channels = 256;
            o.input_kernel = gaussian ? InputKernel::gaussian : InputKernel::white;
            o.filter_std = gaussian ? 2.0 : 0.0;
            const NetworkSpec spec = preset("conv_" + std::to_string(d), o);
            const StationaryKernel analytic = derive_kernel(spec, 20).kernel;
            const CovarianceEstimate est = estimate_covariance(spec, 500, 512, Rng(2000 + d, gaussian ? 1 : 0), 20);
            const double err = compare(analytic, est, 20).max_abs_rho_err;
            worst = std::max(worst, err);
            parts += fmt(" %s/d%d=%.3f", gaussian ? "gauss" : "white", d, err);
        }
    return {worst <= 0.05, fmt("max |rho_hat - rho| over |r|<=20, H=c=256, 500 samples, T=512:%s (tol 0.05)", parts.c_str())};
}

// ------------------------------------------------------------------ 3, 4

struct DichotomyRuns {
    std::vector<RunResult> sgd, sgld;
    InferenceConfig sgd_config, sgld_config;
    double seconds = 0.0;
};

const DichotomyRuns& dichotomy_runs() {
    static DichotomyRuns runs = [] {
        DichotomyRuns r;
        const auto t0 = std::chrono::steady_clock::now();
        const Tensor clean = to_grayscale(read_netpbm(data_path("shapes_64.pgm")));
        for (Scheme s : {Scheme::sgd, Scheme::sgld}) {
            InferenceConfig c = default_config(Task::denoise, s);
            c.sigma_n = 0.1;
            // 64x64 has four times the pixels of the calibration images; the
            // summed loss needs a smaller SGD step to stay stable.
            if (s == Scheme::sgd) c.lr = 4.5e-4;
            c.iterations = s == Scheme::sgd ? 2500 : 1500;
            c.burn_in = c.iterations / 2;
            c.eval_every = 10;
            (s == Scheme::sgd ? r.sgd_config : r.sgld_config) = c;
        }
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            const Instance inst = make_instance(Task::denoise, clean, 0.1, 0.0, seed);
            const NetworkSpec spec = matched_readout(image_network("unet_small", 32, 1), inst);
            for (Scheme s : {Scheme::sgd, Scheme::sgld}) {
                InferenceConfig c = s == Scheme::sgd ? r.sgd_config : r.sgld_config;
                c.seed = seed;
                (s == Scheme::sgd ? r.sgd : r.sgld).push_back(run(Task::denoise, inst.target, inst.mask, &inst.clean, spec, c));
            }
        }
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return r;
    }();
    return runs;
}

Verdict overfitting_dichotomy() {
    const DichotomyRuns& r = dichotomy_runs();
    const double s2 = 0.01;
    int ok = 0;
    std::string parts;
    for (std::size_t i = 0; i < r.sgd.size(); ++i) {
        const double sgd_mse = r.sgd[i].trace.rows.back().mse_noisy / s2;
        const double sgld_mse = mean_mse_after(r.sgld[i].trace, r.sgld_config.burn_in) / s2;
        const bool good = sgd_mse < 0.1 && sgld_mse >= 0.5 && sgld_mse <= 1.5;
        ok += good;
        parts += fmt(" [%.3f, %.2f]", sgd_mse, sgld_mse);
    }
    return {ok >= 4 && r.seconds <= 1800.0,
            fmt("seeds passing %d/5 (need 4); [sgd final, sgld post-burn-in] MSE/sigma^2:%s; %.0f s CPU (budget 1800 s)", ok,
                parts.c_str(), r.seconds)};
}

Verdict sgld_stability() {
    const DichotomyRuns& r = dichotomy_runs();
    double worst_drop = 0.0, smallest_gap = 1e9;
    for (const RunResult& run : r.sgld) {
        double peak = -1e9;
        for (const TraceRow& row : run.trace.rows) {
            if (row.iteration < r.sgld_config.burn_in) continue;
            peak = std::max(peak, row.psnr_estimate);
            worst_drop = std::max(worst_drop, peak - row.psnr_estimate);
        }
    }
    for (const RunResult& run : r.sgd) {
        double best = -1e9;
        for (const TraceRow& row : run.trace.rows) best = std::max(best, row.psnr_iterate);
        smallest_gap = std::min(smallest_gap, best - run.trace.rows.back().psnr_iterate);
    }
    return {worst_drop <= 1.0 && smallest_gap >= 2.0,
            fmt("sgld post-burn-in max drawdown %.2f dB (tol 1); sgd best - final >= %.2f dB over all seeds (need 2)", worst_drop,
                smallest_gap)};
}

// ------------------------------------------------------------------ 5

Verdict scheme_ordering() {
    const std::vector<std::string> images = {"shapes", "waves", "blobs", "stripes"};
    const double sigma = 25.0 / 255.0;
    SuiteTable denoise, inpaint;
    denoise.schemes = {Scheme::sgd, Scheme::sgd_input_avg, Scheme::sgld};
    inpaint.schemes = {Scheme::sgd, Scheme::sgld};
    for (const std::string& name : images) {
        const Tensor clean = to_grayscale(read_netpbm(data_path(name + "_32.pgm")));
        denoise.images.push_back(name);
        inpaint.images.push_back(name);
        const NetworkSpec base = image_network("unet_small", 32, 1);
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            for (Task task : {Task::denoise, Task::inpaint}) {
                SuiteTable& table = task == Task::denoise ? denoise : inpaint;
                const Instance inst = make_instance(task, clean, task == Task::denoise ? sigma : 0.0, 0.5, seed);
                const NetworkSpec spec = matched_readout(base, inst);
                for (Scheme s : table.schemes) {
                    InferenceConfig c = default_config(task, s);
                    c.seed = seed;
                    if (task == Task::denoise) c.sigma_n = sigma;
                    table.entries.push_back({name, s, seed, reported_psnr(run_scheme(inst, spec, c))});
                }
            }
        }
    }
    int den_ok = 0, inp_ok = 0;
    std::string parts;
    for (const std::string& name : images) {
        const double a = denoise.mean(Scheme::sgd, name), b = denoise.mean(Scheme::sgd_input_avg, name),
                     c = denoise.mean(Scheme::sgld, name);
        const double p = inpaint.mean(Scheme::sgd, name), q = inpaint.mean(Scheme::sgld, name);
        den_ok += c >= b && b >= a;
        inp_ok += q >= p;
        parts += fmt(" %s[den %.2f/%.2f/%.2f inp %.2f/%.2f]", name.c_str(), a, b, c, p, q);
    }
    return {den_ok >= 3 && inp_ok >= 3,
            fmt("images with sgld>=sgd_input_avg>=sgd (denoise) %d/4, sgld>=sgd (inpaint) %d/4, need 3 each; mean PSNR "
                "sgd/inavg/sgld, sgd/sgld:%s",
                den_ok, inp_ok, parts.c_str())};
}

// ------------------------------------------------------------------ 6

Verdict gp_dip_convergence() {
    const Tensor clean = to_grayscale(read_netpbm(data_path("shapes_32.pgm")));
    const Instance inst = make_instance(Task::inpaint, clean, 0.0, 0.5, 1);
    const ChannelSweep sweep = sweep_channels(inst, "unet_small", {16, 64, 256}, {1, 2, 3, 4, 5}, sweep_config(), 1e-3);
    const double m16 = sweep.points[0].median(), m64 = sweep.points[1].median(), m256 = sweep.points[2].median();
    const bool monotone = m16 <= m64 && m64 <= m256;
    const double gap = std::abs(m256 - sweep.gp_psnr);
    return {monotone && gap <= 1.5, fmt("median PSNR c=16 %.2f, c=64 %.2f, c=256 %.2f (non-decreasing: %s); GP %.2f, "
                                        "|c256 - GP| %.2f dB (tol 1.5)",
                                        m16, m64, m256, monotone ? "yes" : "no", sweep.gp_psnr, gap)};
}

// ------------------------------------------------------------------ 7

std::vector<Point> distinct_points_1d(Rng& rng, std::size_t n, int range) {
    std::vector<Point> pts;
    std::vector<bool> used(static_cast<std::size_t>(range), false);
    while (pts.size() < n) {
        const std::size_t x = rng.uniform_index(static_cast<std::size_t>(range));
        if (used[x]) continue;
        used[x] = true;
        pts.push_back({static_cast<int>(x), 0});
    }
    return pts;
}

Verdict gp_correctness() {
    NetworkSpec s;
    s.layers = {ConvLayer{8, 3}, ActLayer{Activation::relu}, ConvLayer{8, 3}, ActLayer{Activation::relu}};
    s.input.kernel = InputKernel::gaussian;
    s.input.filter_std = 2.0;
    const StationaryKernel k = derive_kernel(s, 80).kernel;
    Rng rng(77);

    double oracle_err = 0.0;
    for (std::size_t n : {5u, 10u, 25u, 50u})
        for (double sigma_n : {0.0, 0.05, 0.3}) {
            const auto obs = distinct_points_1d(rng, n, 81);
            const auto query = distinct_points_1d(rng, 20, 81);
            std::vector<double> y(n);
            for (double& v : y) v = rng.normal();
            const GPPosterior p = posterior(k, obs, y, NoiseModel{sigma_n}, query);
            const auto o = testing::dense_posterior(k, obs, y, sigma_n * sigma_n + p.jitter, query);
            for (std::size_t j = 0; j < query.size(); ++j)
                oracle_err = std::max({oracle_err, std::abs(p.mean[j] - o.mean[j]), std::abs(p.variance[j] - o.variance[j])});
        }

    double interp_err = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const auto obs = distinct_points_1d(rng, 5 + rng.uniform_index(30), 81);
        std::vector<double> y(obs.size());
        double ymax = 0.0;
        for (double& v : y) ymax = std::max(ymax, std::abs(v = 2.0 * rng.normal()));
        const GPPosterior p = posterior(k, obs, y, {}, obs);
        for (std::size_t i = 0; i < obs.size(); ++i) interp_err = std::max(interp_err, std::abs(p.mean[i] - y[i]) / ymax);
    }

    int violations = 0;
    const auto query = grid_points(0, 81);
    for (int inst = 0; inst < 100; ++inst) {
        const auto obs = distinct_points_1d(rng, 2 + rng.uniform_index(20), 81);
        std::vector<double> y(obs.size());
        for (double& v : y) v = rng.normal();
        const NoiseModel noise{inst % 2 ? 0.1 : 0.0};
        const GPPosterior fewer = posterior(k, std::vector<Point>(obs.begin(), obs.end() - 1),
                                            std::vector<double>(y.begin(), y.end() - 1), noise, query);
        const GPPosterior more = posterior(k, obs, y, noise, query);
        for (std::size_t j = 0; j < query.size(); ++j)
            violations += more.variance[j] > fewer.variance[j] + 1e-8 || more.variance[j] < 0.0 ||
                          more.variance[j] > k.variance() + 1e-8;
    }
    return {oracle_err <= 1e-8 && interp_err <= 1e-6 && violations == 0,
            fmt("dense-oracle err %.2e (tol 1e-8); noiseless interpolation rel err %.2e (tol 1e-6); variance monotonicity "
                "violations %d over 100 instances",
                oracle_err, interp_err, violations)};
}

// ------------------------------------------------------------------ 8

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

double central_difference(const std::function<double(const Tensor&)>& f, Tensor x, std::size_t i, double h = 1e-5) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    return (fp - fm) / (2.0 * h);
}

Verdict gradient_integrity() {
    Rng rng(4242);
    double fd_worst = 0.0, adj_worst = 0.0;
    int probes = 0;

    auto fd = [&](const std::function<Tensor(const Tensor&)>& op, const Tensor& x, const std::function<Tensor(const Tensor&)>& vjp) {
        const Tensor u = gaussian_tensor(rng, op(x).shape(), 1.0);
        const Tensor g = vjp(u);
        auto loss = [&](const Tensor& z) { return dot(op(z), u); };
        for (int k = 0; k < 16; ++k) {
            const std::size_t i = rng.uniform_index(x.size());
            fd_worst = std::max(fd_worst, rel_err(g[i], central_difference(loss, x, i)));
            ++probes;
        }
    };
    auto adj = [&](double lhs, double rhs) { adj_worst = std::max(adj_worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs))); };

    for (Padding pad : {Padding::circular, Padding::reflect})
        for (const Shape& xs : {Shape{3, 24}, Shape{3, 7, 9}}) {
            Shape fs{2, 3, 3};
            if (xs.size() == 3) fs.push_back(3);
            const Tensor x = gaussian_tensor(rng, xs, 1.0), f = gaussian_tensor(rng, fs, 1.0);
            fd([&](const Tensor& z) { return conv(z, f, pad); }, x, [&](const Tensor& u) { return conv_grad(x, f, u, pad).input; });
            fd([&](const Tensor& z) { return conv(x, z, pad); }, f, [&](const Tensor& u) { return conv_grad(x, f, u, pad).filters; });
            Shape ys = xs;
            ys[0] = 2;
            const Tensor dx = gaussian_tensor(rng, xs, 1.0), df = gaussian_tensor(rng, fs, 1.0), u = gaussian_tensor(rng, ys, 1.0);
            const ConvGrad g = conv_grad(x, f, u, pad);
            adj(dot(conv(dx, f, pad), u), dot(dx, g.input));
            adj(dot(conv(x, df, pad), u), dot(df, g.filters));
        }
    Tensor xa = gaussian_tensor(rng, Shape{2, 50}, 1.0);
    for (double& v : xa.storage())
        if (std::abs(v) < 1e-3) v = 0.5;  // off the relu kink
    for (Activation a : {Activation::erf, Activation::relu})
        fd([&](const Tensor& z) { return activation(z, a); }, xa, [&](const Tensor& u) { return activation_grad(xa, u, a); });
    for (ResampleMode mode : {ResampleMode::decimate, ResampleMode::avgpool, ResampleMode::nearest, ResampleMode::bilinear})
        for (Padding pad : {Padding::circular, Padding::reflect})
            for (const Shape& xs : {Shape{2, 16}, Shape{2, 8, 10}}) {
                const Tensor x = gaussian_tensor(rng, xs, 1.0);
                fd([&](const Tensor& z) { return resample(z, 2, mode, pad); }, x,
                   [&](const Tensor& u) { return resample_grad(xs, u, 2, mode, pad); });
                const Tensor y = resample(x, 2, mode, pad);
                const Tensor u = gaussian_tensor(rng, y.shape(), 1.0);
                adj(dot(y, u), dot(x, resample_grad(xs, u, 2, mode, pad)));
            }
    for (MergeKind kind : {MergeKind::add, MergeKind::concat}) {
        const Tensor a = gaussian_tensor(rng, Shape{2, 6, 6}, 1.0), b = gaussian_tensor(rng, Shape{2, 6, 6}, 1.0);
        fd([&](const Tensor& z) { return merge(z, b, kind); }, a, [&](const Tensor& u) { return merge_grad(a.shape(), b.shape(), u, kind).a; });
        fd([&](const Tensor& z) { return merge(a, z, kind); }, b, [&](const Tensor& u) { return merge_grad(a.shape(), b.shape(), u, kind).b; });
        const Tensor m = merge(a, b, kind);
        const Tensor u = gaussian_tensor(rng, m.shape(), 1.0);
        const MergeGrad g = merge_grad(a.shape(), b.shape(), u, kind);
        adj(dot(m, u), dot(a, g.a) + dot(b, g.b));
    }
    {
        const Tensor x = gaussian_tensor(rng, Shape{3, 5, 5}, 1.0), bias = gaussian_tensor(rng, Shape{3}, 1.0);
        fd([&](const Tensor& z) { return add_bias(x, z); }, bias, [&](const Tensor& u) { return bias_grad(u); });
        const Tensor u = gaussian_tensor(rng, x.shape(), 1.0);
        adj(dot(add_bias(Tensor(x.shape()), bias), u), dot(bias, bias_grad(u)));
    }

    for (const std::string name : {"conv_2", "ae_2", "unet_small", "dip_paper_scaled"})
        for (int dims : {1, 2}) {
            if (name == "dip_paper_scaled" && dims == 1) continue;
            PresetOptions o;
            o.channels = 3;
            o.input_channels = 2;
            o.dims = dims;
            const NetworkSpec spec = with_readout(preset(name, o), 1);
            const std::size_t n = name == "dip_paper_scaled" ? 32 : 8;
            const Shape spatial = dims == 1 ? Shape{n} : Shape{n, n};
            const ParamSet p = init_params(spec, 5);
            const Tensor x = init_input(spec, spatial, 5).x;
            ForwardCache cache;
            const Tensor y = forward(spec, p, x, Padding::reflect, &cache);
            const Tensor u = gaussian_tensor(rng, y.shape(), 1.0);
            const Gradients g = backward(spec, p, cache, u, Padding::reflect);
            for (int k = 0; k < 16; ++k) {
                const std::size_t t = rng.uniform_index(p.tensors.size());
                const std::size_t i = rng.uniform_index(p.tensors[t].size());
                auto loss = [&](const Tensor& w) {
                    ParamSet q = p;
                    q.tensors[t] = w;
                    return dot(forward(spec, q, x, Padding::reflect), u);
                };
                fd_worst = std::max(fd_worst, rel_err(g.params.tensors[t][i], central_difference(loss, p.tensors[t], i)));
                ++probes;
            }
            for (int k = 0; k < 4; ++k) {
                const std::size_t i = rng.uniform_index(x.size());
                auto loss = [&](const Tensor& z) { return dot(forward(spec, p, z, Padding::reflect), u); };
                fd_worst = std::max(fd_worst, rel_err(g.input[i], central_difference(loss, x, i)));
                ++probes;
            }
        }
    return {fd_worst <= 1e-4 && adj_worst <= 1e-10,
            fmt("finite differences max rel err %.2e over %d probes (tol 1e-4); adjointness max rel gap %.2e (tol 1e-10)",
                fd_worst, probes, adj_worst)};
}

// ------------------------------------------------------------------ 9

Verdict sgld_calibration() {
    // y_i = w + N(0, sigma_n^2), prior w ~ N(0, 1 / lambda).
    Rng data(90);
    const int m = 30;
    const double sigma_n = 0.4, lambda = 1.0, w_true = -0.3;
    double sum_y = 0.0;
    for (int i = 0; i < m; ++i) sum_y += w_true + data.normal(sigma_n);
    const double prec = m / (sigma_n * sigma_n) + lambda;
    const double post_var = 1.0 / prec;

    Rng rng(91);
    Tensor w(Shape{1});
    const double eps = 0.01 * post_var;
    double s = 0.0, s2 = 0.0;
    long n = 0;
    for (long t = 0; t < 1000000; ++t) {
        sgld_step(w, Tensor(Shape{1}, m * w[0] - sum_y), eps, lambda, sigma_n, rng);
        if (t >= 20000) {
            s += w[0];
            s2 += w[0] * w[0];
            ++n;
        }
    }
    const double mean = s / n, var = s2 / n - mean * mean;
    const double rel = std::abs(var / post_var - 1.0);
    return {rel <= 0.10, fmt("long-run sample variance %.4e vs analytic %.4e, rel err %.3f (tol 0.10)", var, post_var, rel)};
}

// ------------------------------------------------------------------ 10

NetworkSpec random_spec(Rng& rng, int dims) {
    NetworkSpec s;
    s.input.dims = dims;
    s.input.channels = 4;
    if (rng.uniform() < 0.5) {
        s.input.kernel = InputKernel::gaussian;
        s.input.filter_std = 0.5 + 2.0 * rng.uniform();
    }
    const int depth = 1 + static_cast<int>(rng.uniform_index(3));
    for (int l = 0; l < depth; ++l) {
        const int width = 1 + 2 * static_cast<int>(rng.uniform_index(3));
        s.layers.push_back(ConvLayer{4, width, rng.uniform() < 0.5 ? 0.0 : 0.5 + 2.0 * rng.uniform()});
        if (rng.uniform() < 0.3) s.layers.push_back(BiasLayer{rng.uniform()});
        s.layers.push_back(ActLayer{rng.uniform() < 0.5 ? Activation::relu : Activation::erf});
    }
    s.layers.push_back(ConvLayer{1, 1, 1.0});
    return s;
}

// Bias layers add a variance offset that does not scale with the gains, so
// the invariance is checked on the bias-free network.
NetworkSpec with_gains(NetworkSpec s, Rng& rng) {
    std::erase_if(s.layers, [](const Layer& l) { return std::holds_alternative<BiasLayer>(l); });
    for (Layer& l : s.layers)
        if (auto* c = std::get_if<ConvLayer>(&l)) c->gain = 0.25 + 4.0 * rng.uniform();
    return s;
}

Verdict kernel_properties() {
    Rng rng(1010);
    int failures = 0;
    double worst_asym = 0.0, worst_rho = 0.0, worst_eig = 0.0, worst_gain = 0.0, worst_fixed = 0.0, worst_trip = 0.0;
    for (int c = 0; c < 1000; ++c) {
        const int dims = 1 + static_cast<int>(rng.uniform_index(2));
        const int hw = dims == 1 ? 16 : 6;
        const NetworkSpec spec = random_spec(rng, dims);
        const StationaryKernel k = derive_kernel(spec, hw).kernel;
        bool ok = true;

        // symmetry and |rho| <= 1
        for (std::size_t i = 0; i < k.values().size(); ++i) {
            Lag r = k.lag_of(i);
            Lag neg = r;
            for (int& v : neg) v = -v;
            const double a = std::abs(k.at(r) - k.at(neg));
            worst_asym = std::max(worst_asym, a);
            worst_rho = std::max(worst_rho, std::abs(k.rho(r)) - 1.0);
            ok &= a == 0.0 && std::abs(k.rho(r)) <= 1.0 + 1e-12;
        }
        // PSD on a random point set
        std::vector<Point> pts;
        const std::size_t n = 2 + rng.uniform_index(24);
        for (std::size_t i = 0; i < n; ++i)
            pts.push_back({static_cast<int>(rng.uniform_index(static_cast<std::size_t>(hw + 1))),
                           dims == 2 ? static_cast<int>(rng.uniform_index(static_cast<std::size_t>(hw + 1))) : 0});
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(to_gram(k, pts), Eigen::EigenvaluesOnly);
        const double eig = -es.eigenvalues().minCoeff() / k.variance();
        worst_eig = std::max(worst_eig, eig);
        ok &= eig <= 1e-8;
        // gain invariance of rho
        const NetworkSpec scaled = with_gains(spec, rng);
        NetworkSpec unscaled = scaled;
        for (Layer& l : unscaled.layers)
            if (auto* c = std::get_if<ConvLayer>(&l)) c->gain = 0.0;
        const StationaryKernel k0 = derive_kernel(unscaled, hw).kernel, kg = derive_kernel(scaled, hw).kernel;
        for (std::size_t i = 0; i < k0.values().size(); ++i) {
            const double g = std::abs(k0.rho(k0.lag_of(i)) - kg.rho(kg.lag_of(i)));
            worst_gain = std::max(worst_gain, g);
            ok &= g <= 1e-10;
        }
        // rho = 1 is fixed by both correlation maps; erf also fixes 0
        const double f = std::max({std::abs(transfer_rho(1.0, Activation::relu) - 1.0),
                                   std::abs(transfer_rho(1.0, Activation::erf) - 1.0), std::abs(transfer_rho(0.0, Activation::erf))});
        worst_fixed = std::max(worst_fixed, f);
        ok &= f <= 1e-12;
        // up then down by the same factor returns the kernel
        if (dims == 1) {
            const int tau = 2 + static_cast<int>(rng.uniform_index(2));
            const ResampleMode up = rng.uniform() < 0.5 ? ResampleMode::bilinear : ResampleMode::nearest;
            const StationaryKernel back = transfer_resample(transfer_resample(k, tau, up), tau, ResampleMode::decimate);
            const int h = std::min(back.half_width(), k.half_width());
            for (int r = -h; r <= h; ++r) {
                const double d = std::abs(back.at(r) - k.at(r));
                worst_trip = std::max(worst_trip, d / k.variance());
                ok &= d <= 1e-12 * k.variance();
            }
        }
        failures += !ok;
    }
    return {failures == 0, fmt("%d/1000 randomized cases fail; max asymmetry %.1e, max |rho|-1 %.1e, min-eig/K0 %.1e, gain "
                               "rho gap %.1e, fixed point err %.1e, round trip err %.1e",
                               failures, worst_asym, std::max(worst_rho, 0.0), -worst_eig, worst_gain, worst_fixed, worst_trip)};
}

}  // namespace

int main(int argc, char** argv) {
    bool strict = false;
    std::vector<int> only;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--strict") == 0)
            strict = true;
        else
            only.push_back(std::atoi(argv[i]));
    }
    struct Criterion {
        int id;
        const char* name;
        Verdict (*fn)();
    };
    const Criterion criteria[] = {
        {1, "kernel transfer golden values", kernel_golden_values},
        {2, "empirical vs analytic kernel", theorem_validation},
        {3, "overfitting dichotomy", overfitting_dichotomy},
        {4, "sgld stability vs sgd decay", sgld_stability},
        {5, "scheme ordering", scheme_ordering},
        {6, "GP-DIP convergence over channels", gp_dip_convergence},
        {7, "GP engine correctness", gp_correctness},
        {8, "gradient integrity", gradient_integrity},
        {9, "sgld sampler calibration", sgld_calibration},
        {10, "kernel PSD and property suite", kernel_properties},
    };
    // ctest hides the output of passing tests, so keep a copy next to the binary.
    std::FILE* report = std::fopen("acceptance_report.txt", "w");
    auto emit = [&](const std::string& line) {
        std::fputs(line.c_str(), stdout);
        std::fflush(stdout);
        if (report) {
            std::fputs(line.c_str(), report);
            std::fflush(report);
        }
    };
    int failed = 0, errors = 0;
    int ran = 0;
    for (const Criterion& c : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
        ++ran;
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = c.fn();
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
            ++errors;
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failed += !v.pass;
        emit(fmt("%s  criterion %2d  %s: ", v.pass ? "PASS" : "FAIL", c.id, c.name) + v.detail + fmt("  [%.1f s]\n", secs));
    }
    emit(fmt("%d/%d criteria pass\n", ran - failed, ran));
    if (report) std::fclose(report);
    if (errors > 0) return 1;
    return strict && failed > 0 ? 1 : 0;
}
