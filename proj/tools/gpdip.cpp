// Command-line entry point: kernel, gp, dip and experiment subcommands.
// Exit codes: 0 success, 1 numerical failure, 2 usage or input error.

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Core>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "gpdip/empirics.hpp"
#include "gpdip/experiments.hpp"
#include "gpdip/gp.hpp"
#include "gpdip/inference.hpp"
#include "gpdip/kernel.hpp"
#include "gpdip/network_spec.hpp"
#include "gpdip/signal_io.hpp"

namespace fs = std::filesystem;
using namespace gpdip;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown by `kernel validate` when the agreement threshold is missed.
struct CheckFailed : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string default_out_dir() {
    const char* env = std::getenv("GPDIP_OUT_DIR");
    return env && *env ? env : "gpdip_out";
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string());
    out << text;
}

// FNV-1a over the file contents; identifies inputs in manifests.
std::string file_hash(const std::string& path) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : read_file(path)) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "fnv1a64:%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string fmt(double x, const char* f = "%.17g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

std::vector<std::string> split(const std::string& s, char sep = ',') {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep))
        if (!cur.empty()) out.push_back(cur);
    return out;
}

class Manifest {
public:
    Manifest(std::string command, fs::path dir) : dir_(std::move(dir)), start_(std::chrono::steady_clock::now()) {
        j_["command"] = std::move(command);
        j_["versions"] = {{"gpdip", kVersion},
                          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                        std::to_string(EIGEN_MINOR_VERSION)},
                          {"compiler", __VERSION__}};
        j_["inputs"] = json::object();
        j_["outputs"] = json::array();
    }
    json& operator[](const std::string& key) { return j_[key]; }
    void input(const std::string& path) {
        if (!path.empty()) j_["inputs"][path] = file_hash(path);
    }
    fs::path output(const std::string& name) {
        j_["outputs"].push_back(name);
        return dir_ / name;
    }
    // Written last, through a rename, so a present manifest marks a finished run.
    void write() {
        j_["wall_clock_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        const fs::path tmp = dir_ / "manifest.json.tmp";
        write_file(tmp, j_.dump(2) + "\n");
        fs::rename(tmp, dir_ / "manifest.json");
    }

private:
    json j_;
    fs::path dir_;
    std::chrono::steady_clock::time_point start_;
};

fs::path prepare_dir(const std::string& dir) {
    fs::path p = dir.empty() ? fs::path(default_out_dir()) : fs::path(dir);
    fs::create_directories(p);
    return p;
}

// Network selection shared by several subcommands.
struct SpecOptions {
    std::string spec_path;
    std::string preset_name;
    int channels = 64;
    int depth = 2;
    int width = 3;
    int dims = 1;
    std::string input = "white";
    double filter_std = 2.0;

    void add(CLI::App* app, int default_dims, int default_channels = 64) {
        dims = default_dims;
        channels = default_channels;
        app->add_option("--spec", spec_path, "network spec JSON")->check(CLI::ExistingFile);
        app->add_option("--preset", preset_name, "conv_<d>, ae_<d>, unet_small or dip_paper_scaled");
        app->add_option("--channels", channels, "channels per layer")->check(CLI::PositiveNumber);
        app->add_option("--depth", depth, "depth for conv_d / ae_d")->check(CLI::NonNegativeNumber);
        app->add_option("--filter-width", width, "filter width")->check(CLI::PositiveNumber);
        app->add_option("--dims", dims, "1 for signals, 2 for images")->check(CLI::IsMember({1, 2}));
        app->add_option("--input", input, "input process")->check(CLI::IsMember({"white", "gaussian"}));
        app->add_option("--filter-std", filter_std, "Gaussian input filter std")->check(CLI::PositiveNumber);
    }

    bool given() const { return !spec_path.empty() || !preset_name.empty(); }

    NetworkSpec build() const {
        if (!spec_path.empty()) return load_spec(spec_path);
        if (preset_name.empty()) throw UsageError("one of --spec or --preset is required");
        PresetOptions o;
        o.channels = channels;
        o.depth = depth;
        o.width = width;
        o.dims = dims;
        o.input_kernel = input == "white" ? InputKernel::white : InputKernel::gaussian;
        o.filter_std = input == "white" ? 0.0 : filter_std;
        try {
            return preset(preset_name, o);
        } catch (const ShapeError& e) {
            throw UsageError(e.what());
        }
    }
};

// Noise levels on either the [0, 1] or the [0, 255] scale.
double noise_sigma(double value, const std::string& unit) { return unit == "255" ? value / 255.0 : value; }

void write_rho_csv(const StationaryKernel& k, const fs::path& path) {
    std::ostringstream out;
    if (k.dims() == 1) {
        out << "lag,k,rho\n";
        for (int r = -k.half_width(); r <= k.half_width(); ++r) out << r << ',' << fmt(k.at(r)) << ',' << fmt(k.rho(r)) << '\n';
    } else {
        out << "lag0,lag1,k,rho\n";
        for (std::size_t i = 0; i < k.values().size(); ++i) {
            const Lag r = k.lag_of(i);
            out << r[0] << ',' << r[1] << ',' << fmt(k.at(r)) << ',' << fmt(k.rho(r)) << '\n';
        }
    }
    write_file(path, out.str());
}

// Maps values to [0, 1] for viewing: lo -> 0, hi -> 1.
Tensor normalized(const Tensor& x) {
    double lo = x[0], hi = x[0];
    for (double v : x.data()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    Tensor out = x;
    for (double& v : out.storage()) v = hi > lo ? (v - lo) / (hi - lo) : 0.0;
    return out;
}

// ---------------------------------------------------------------- kernel

struct KernelArgs {
    SpecOptions spec;
    int half_width = 32;
    std::string out_dir;
    // validate
    std::size_t samples = 500;
    std::size_t length = 512;
    std::uint64_t seed = 0;
    int check = 20;
    double threshold = 0.05;
};

int cmd_kernel_derive(const KernelArgs& a) {
    const NetworkSpec spec = a.spec.build();
    const fs::path dir = prepare_dir(a.out_dir);
    Manifest m("kernel derive", dir);
    m.input(a.spec.spec_path);
    m["spec"] = to_json(spec);
    m["half_width"] = a.half_width;
    const KernelDerivation d = derive_kernel(spec, a.half_width);
    write_kernel(d.kernel, m.output("kernel.kern").string());
    write_file(m.output("derivation.json"), derivation_to_json(d).dump(2) + "\n");
    write_rho_csv(d.kernel, m.output("rho.csv"));
    m.write();
    std::printf("K(0) %.10g  rho(1) %.10g\n", d.kernel.variance(), d.kernel.rho(1));
    return 0;
}

int cmd_kernel_validate(const KernelArgs& a) {
    const NetworkSpec spec = a.spec.build();
    const fs::path dir = prepare_dir(a.out_dir);
    Manifest m("kernel validate", dir);
    m.input(a.spec.spec_path);
    m["spec"] = to_json(spec);
    m["samples"] = a.samples;
    m["length"] = a.length;
    m["seed"] = a.seed;
    m["check_half_width"] = a.check;
    m["threshold"] = a.threshold;
    const StationaryKernel analytic = derive_kernel(spec, a.check).kernel;
    const CovarianceEstimate est = estimate_covariance(spec, a.samples, a.length, Rng(a.seed, 6), a.check);
    const ComparisonReport rep = compare(analytic, est, a.check);
    json report = to_json(rep);
    report["n_samples"] = est.n_samples;
    report["threshold"] = a.threshold;
    report["pass"] = rep.max_abs_rho_err <= a.threshold;
    write_file(m.output("report.json"), report.dump(2) + "\n");
    std::ostringstream csv;
    csv << "lag0,lag1,rho,rho_hat,stderr\n";
    for (const auto& r : rep.rows)
        csv << r.lag[0] << ',' << r.lag[1] << ',' << fmt(r.rho) << ',' << fmt(r.rho_hat) << ',' << fmt(r.stderr_rho) << '\n';
    write_file(m.output("comparison.csv"), csv.str());
    m["max_abs_rho_err"] = rep.max_abs_rho_err;
    m.write();
    std::printf("max |rho_hat - rho| over |r| <= %d: %.5f (threshold %.5f)\n", a.check, rep.max_abs_rho_err, a.threshold);
    if (rep.max_abs_rho_err > a.threshold) throw CheckFailed("empirical covariance disagrees with the analytic kernel");
    return 0;
}

// ---------------------------------------------------------------- gp

struct GpArgs {
    SpecOptions spec;
    std::string kernel_path;
    double rbf = 0.0;
    std::string out_dir;
    std::uint64_t seed = 0;
    // sample
    std::size_t height = 0, width = 64;
    std::size_t count = 2;
    // infer / fit-rbf
    std::string obs_path;
    std::string query = "grid";
    std::string image, clean;
    std::string mask_path;
    double drop = 0.0;
    double noise = 1e-3;
    std::string lengthscales = "1,2,3,4,5,6,7,8,9,10";
};

StationaryKernel gp_kernel(const GpArgs& a, int dims, int half_width) {
    if (!a.kernel_path.empty()) {
        const StationaryKernel k = read_kernel(a.kernel_path);
        if (k.half_width() < half_width)
            throw UsageError("kernel half width " + std::to_string(k.half_width()) + " is below the largest lag " +
                             std::to_string(half_width));
        return crop(k, half_width);
    }
    if (a.rbf > 0.0) return RbfKernel{a.rbf, 1.0}.on_grid(dims, half_width);
    if (!a.spec.given()) throw UsageError("one of --kernel, --rbf, --spec or --preset is required");
    NetworkSpec spec = a.spec.build();
    spec.input.dims = dims;
    return derive_kernel(spec, half_width).kernel;
}

int cmd_gp_sample(const GpArgs& a) {
    const fs::path dir = prepare_dir(a.out_dir);
    Manifest m("gp sample", dir);
    m.input(a.kernel_path);
    m["seed"] = a.seed;
    const int dims = a.height > 0 ? 2 : 1;
    const int half = static_cast<int>(std::max(a.height, a.width)) - 1;
    const StationaryKernel k = gp_kernel(a, dims, std::max(half, 1));
    const auto pts = grid_points(a.height, a.width);
    Rng rng(a.seed, 7);
    const auto draws = sample_prior(k, pts, rng, a.count);
    if (dims == 2) {
        for (std::size_t s = 0; s < draws.size(); ++s) {
            const Tensor img(Shape{1, a.height, a.width}, draws[s]);
            write_netpbm(normalized(img), m.output("sample_" + std::to_string(s) + ".pgm").string());
        }
    } else {
        std::ostringstream out;
        out << "position";
        for (std::size_t s = 0; s < draws.size(); ++s) out << ",sample_" << s;
        out << '\n';
        for (std::size_t i = 0; i < pts.size(); ++i) {
            out << pts[i][0];
            for (const auto& d : draws) out << ',' << fmt(d[i]);
            out << '\n';
        }
        write_file(m.output("samples.csv"), out.str());
    }
    m.write();
    return 0;
}

// Image-mode observations: --image with --mask or --drop.
Instance image_instance(const GpArgs& a) {
    Instance inst;
    inst.task = Task::inpaint;
    inst.target = read_netpbm(a.image);
    inst.clean = a.clean.empty() ? inst.target : read_netpbm(a.clean);
    if (inst.clean.shape() != inst.target.shape()) throw UsageError("--clean does not match --image");
    if (!a.mask_path.empty()) {
        const Tensor mk = read_netpbm(a.mask_path);
        if (mk.spatial_shape() != inst.target.spatial_shape()) throw UsageError("--mask does not match --image");
        inst.mask.spatial = mk.spatial_shape();
        for (std::size_t p = 0; p < mk.plane_size(); ++p) inst.mask.observed.push_back(mk[p] > 0.5 ? 1 : 0);
    } else {
        Rng rng(a.seed, 5);
        inst.mask = random_mask(inst.target.spatial_shape(), a.drop, rng);
    }
    return inst;
}

int cmd_gp_infer(const GpArgs& a) {
    const fs::path dir = prepare_dir(a.out_dir);
    Manifest m("gp infer", dir);
    m.input(a.kernel_path);
    m.input(a.obs_path);
    m.input(a.image);
    m.input(a.clean);
    m.input(a.mask_path);
    m["noise"] = a.noise;
    m["seed"] = a.seed;
    if (!a.image.empty()) {
        const Instance inst = image_instance(a);
        const Shape sp = inst.target.spatial_shape();
        const StationaryKernel k = gp_kernel(a, 2, static_cast<int>(std::max(sp[0], sp[1])) - 1);
        const GpReconstruction rec = gp_reconstruct(k, inst, a.noise);
        const auto mean_path = m.output("posterior_mean.pgm");
        write_netpbm(rec.mean, mean_path.string());
        write_netpbm(normalized(rec.variance), m.output("posterior_variance.pgm").string());
        // PSNR of the written (quantized) estimate, as a reader of the files would measure it.
        const double p = psnr(read_netpbm(mean_path.string()), inst.clean);
        m["psnr"] = std::isinf(p) ? json("inf") : json(p);
        m["jitter"] = rec.jitter;
        m.write();
        std::printf("psnr %s\n", std::isinf(p) ? "inf" : fmt(p, "%.4f").c_str());
        return 0;
    }
    if (a.obs_path.empty()) throw UsageError("one of --obs or --image is required");
    const Signal1D sig = read_signal_csv(a.obs_path);
    std::vector<Point> obs, query;
    std::vector<double> y;
    int lo = 0, hi = 0;
    for (std::size_t i = 0; i < sig.position.size(); ++i) {
        const int p = static_cast<int>(std::lround(sig.position[i]));
        if (std::abs(p - sig.position[i]) > 1e-9) throw FormatError("gp infer: positions must be integers");
        lo = i == 0 ? p : std::min(lo, p);
        hi = i == 0 ? p : std::max(hi, p);
        if (sig.observed[i]) {
            obs.push_back({p, 0});
            y.push_back(sig.value[i]);
        }
    }
    if (a.query == "grid")
        for (int p = lo; p <= hi; ++p) query.push_back({p, 0});
    else if (a.query == "observed")
        query = obs;
    else
        throw UsageError("--query must be grid or observed");
    const StationaryKernel k = gp_kernel(a, 1, std::max(hi - lo, 1));
    const GPPosterior post = posterior(k, obs, y, NoiseModel{a.noise}, query);
    std::ostringstream out;
    out << "position,mean,variance\n";
    for (std::size_t j = 0; j < query.size(); ++j) out << query[j][0] << ',' << fmt(post.mean[j]) << ',' << fmt(post.variance[j]) << '\n';
    write_file(m.output("posterior.csv"), out.str());
    m["jitter"] = post.jitter;
    m.write();
    return 0;
}

int cmd_gp_fit_rbf(const GpArgs& a) {
    std::vector<double> grid;
    for (const auto& s : split(a.lengthscales)) grid.push_back(std::stod(s));
    std::vector<Point> obs;
    std::vector<double> y;
    if (!a.image.empty()) {
        const Instance inst = image_instance(a);
        const Shape sp = inst.target.spatial_shape();
        const auto pts = grid_points(sp[0], sp[1]);
        const Tensor gray = to_grayscale(inst.target);
        for (std::size_t p = 0; p < pts.size(); ++p)
            if (inst.mask.observed[p]) {
                obs.push_back(pts[p]);
                y.push_back(gray[p]);
            }
        double mean = 0.0;
        for (double v : y) mean += v;
        mean /= static_cast<double>(y.size());
        for (double& v : y) v -= mean;
    } else if (!a.obs_path.empty()) {
        const Signal1D sig = read_signal_csv(a.obs_path);
        for (std::size_t i = 0; i < sig.position.size(); ++i)
            if (sig.observed[i]) {
                obs.push_back({static_cast<int>(std::lround(sig.position[i])), 0});
                y.push_back(sig.value[i]);
            }
    } else {
        throw UsageError("one of --obs or --image is required");
    }
    const RbfFit fit = fit_rbf(obs, y, NoiseModel{a.noise}, grid);
    std::printf("lengthscale %.6g variance %.6g log_marginal_likelihood %.6f\n", fit.kernel.lengthscale, fit.kernel.variance,
                fit.log_marginal_likelihood);
    return 0;
}

// ---------------------------------------------------------------- dip

struct DipArgs {
    SpecOptions spec;
    std::string task = "denoise";
    std::string image, clean, mask_path;
    std::string scheme = "sgld";
    std::string config_path;
    std::string out_dir;
    double drop = 0.5;
    std::uint64_t seed = 0;
    std::string unit = "1";
    // Flag overrides; NaN / -1 mean "not given".
    double lr = NAN, sigma_n = NAN, sigma_p = NAN, weight_decay = NAN;
    int iterations = -1, burn_in = -1, eval_every = -1;
};

InferenceConfig load_config(const std::string& path, InferenceConfig base) {
    if (path.empty()) return base;
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw FormatError("config " + path + ": " + e.what());
    }
    // A run manifest carries its configuration under "config".
    if (j.contains("config") && j.at("config").is_object()) j = j.at("config");
    try {
        return config_from_json(j, base);
    } catch (const json::exception& e) {
        throw FormatError("config " + path + ": " + e.what());
    }
}

int cmd_dip_run(const DipArgs& a) {
    const Task task = parse_task(a.task);
    const Scheme scheme = parse_scheme(a.scheme);
    const Tensor target = read_netpbm(a.image);
    Tensor clean;
    if (!a.clean.empty()) {
        clean = read_netpbm(a.clean);
        if (clean.shape() != target.shape()) throw UsageError("--clean does not match --image");
    }
    const Shape spatial = target.spatial_shape();
    Mask mask = full_mask(spatial);
    if (task == Task::inpaint) {
        if (!a.mask_path.empty()) {
            const Tensor mk = read_netpbm(a.mask_path);
            if (mk.spatial_shape() != spatial) throw UsageError("--mask does not match --image");
            for (std::size_t p = 0; p < mk.plane_size(); ++p) mask.observed[p] = mk[p] > 0.5 ? 1 : 0;
        } else {
            Rng rng(a.seed, 5);
            mask = random_mask(spatial, a.drop, rng);
        }
    }

    // A spec file is used as given; presets get a readout whose prior
    // amplitude matches the observed pixels.
    NetworkSpec spec;
    if (!a.spec.spec_path.empty()) {
        spec = load_spec(a.spec.spec_path);
    } else {
        const std::string name = a.spec.preset_name.empty() ? "unet_small" : a.spec.preset_name;
        Instance inst;
        inst.target = target;
        inst.mask = mask;
        spec = matched_readout(image_network(name, a.spec.channels, static_cast<int>(target.channels())), inst);
    }
    InferenceConfig cfg = load_config(a.config_path, default_config(task, scheme));
    cfg.scheme = scheme;
    cfg.seed = a.seed;
    if (!std::isnan(a.lr)) cfg.lr = a.lr;
    if (!std::isnan(a.sigma_n)) cfg.sigma_n = noise_sigma(a.sigma_n, a.unit);
    if (!std::isnan(a.sigma_p)) cfg.sigma_p = a.sigma_p;
    if (!std::isnan(a.weight_decay)) cfg.weight_decay = a.weight_decay;
    if (a.iterations >= 0) cfg.iterations = a.iterations;
    if (a.burn_in >= 0) cfg.burn_in = a.burn_in;
    if (a.eval_every > 0) cfg.eval_every = a.eval_every;

    const fs::path dir = prepare_dir(a.out_dir);
    Manifest m("dip run", dir);
    m.input(a.image);
    m.input(a.clean);
    m.input(a.mask_path);
    m.input(a.spec.spec_path);
    m.input(a.config_path);
    m["task"] = to_string(task);
    m["config"] = to_json(cfg);
    m["spec"] = to_json(spec);
    m["seed"] = cfg.seed;
    if (task == Task::inpaint && a.mask_path.empty()) m["drop"] = a.drop;

    RunResult res;
    try {
        res = run(task, target, mask, clean.size() ? &clean : nullptr, spec, cfg);
    } catch (const DivergenceError& e) {
        write_file(m.output("trace.csv"), trace_to_csv(e.trace));
        m["error"] = e.what();
        m.write();
        throw;
    }
    write_netpbm(res.output, m.output(target.channels() == 3 ? "estimate.ppm" : "estimate.pgm").string());
    write_file(m.output("trace.csv"), trace_to_csv(res.trace));
    if (res.posterior) write_netpbm(normalized(res.posterior->variance), m.output("variance.pgm").string());
    if (clean.size()) {
        write_netpbm(res.best_estimate, m.output(target.channels() == 3 ? "best.ppm" : "best.pgm").string());
        const TraceRow& best = res.trace.rows[static_cast<std::size_t>(res.trace.best_row)];
        m["psnr_final"] = psnr(res.output, clean);
        m["psnr_best"] = best.psnr_estimate;
        m["best_iteration"] = best.iteration;
        std::printf("psnr final %.4f best %.4f (iteration %d)\n", psnr(res.output, clean), best.psnr_estimate, best.iteration);
    }
    m.write();
    return 0;
}

// ---------------------------------------------------------------- experiment

struct ExperimentArgs {
    std::string preset_name = "unet_small";
    std::string images;
    std::string image;
    std::string seeds = "1,2,3,4,5";
    std::string schemes = "sgd,sgd_avg,sgd_input,sgd_input_avg,sgld";
    std::string channels = "16,64,256";
    int width_channels = 32;
    double sigma = 25.0;
    std::string unit = "255";
    double drop = 0.5;
    double gp_noise = 1e-3;
    int iterations = -1;
    int burn_in = -1;
    double lr = NAN;
    std::string config_path;
    std::string out_dir;
    // toy1d
    std::string depths = "1,2,3";
    std::size_t length = 256;
    int half_width = 40;
    double filter_std = 2.0;
};

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
    std::vector<std::uint64_t> out;
    for (const auto& t : split(s)) out.push_back(std::stoull(t));
    if (out.empty()) throw UsageError("no seeds given");
    return out;
}

int cmd_suite(const ExperimentArgs& a, Task task) {
    const auto paths = split(a.images);
    if (paths.empty()) throw UsageError("--images is required");
    std::vector<Scheme> schemes;
    for (const auto& s : split(a.schemes)) schemes.push_back(parse_scheme(s));
    const auto seeds = parse_seeds(a.seeds);
    const fs::path dir = prepare_dir(a.out_dir);
    Manifest m(task == Task::denoise ? "experiment denoise-suite" : "experiment inpaint-suite", dir);
    const double sigma = task == Task::denoise ? noise_sigma(a.sigma, a.unit) : 0.0;
    m["sigma"] = sigma;
    m["drop"] = task == Task::inpaint ? a.drop : 0.0;
    m["seeds"] = seeds;
    m["channels"] = a.width_channels;
    m["preset"] = a.preset_name;

    SuiteTable table;
    table.schemes = schemes;
    json configs = json::object();
    for (const auto& path : paths) {
        m.input(path);
        const Tensor clean = read_netpbm(path);
        const std::string name = fs::path(path).stem().string();
        table.images.push_back(name);
        const NetworkSpec base = image_network(a.preset_name, a.width_channels, static_cast<int>(clean.channels()));
        for (std::uint64_t seed : seeds) {
            const Instance inst = make_instance(task, clean, sigma, a.drop, seed);
            const NetworkSpec spec = matched_readout(base, inst);
            for (Scheme s : schemes) {
                InferenceConfig cfg = load_config(a.config_path, default_config(task, s));
                cfg.scheme = s;
                cfg.seed = seed;
                if (task == Task::denoise) cfg.sigma_n = sigma;
                if (!std::isnan(a.lr)) cfg.lr = a.lr;
                if (a.iterations >= 0) cfg.iterations = a.iterations;
                if (a.burn_in >= 0) cfg.burn_in = a.burn_in;
                configs[to_string(s)] = to_json(cfg);
                const SchemeResult r = run_scheme(inst, spec, cfg);
                table.entries.push_back({name, s, seed, reported_psnr(r)});
                std::fprintf(stderr, "%s seed %llu %s: %.3f dB (%.1fs)\n", name.c_str(), static_cast<unsigned long long>(seed),
                             to_string(s).c_str(), reported_psnr(r), r.seconds);
            }
        }
    }
    m["config"] = configs;
    write_file(m.output("table.txt"), table.to_text());
    write_file(m.output("runs.csv"), table.to_csv());
    m.write();
    std::cout << table.to_text();
    return 0;
}

int cmd_sweep_channels(const ExperimentArgs& a) {
    if (a.image.empty()) throw UsageError("--image is required");
    std::vector<int> channels;
    for (const auto& c : split(a.channels)) channels.push_back(std::stoi(c));
    const auto seeds = parse_seeds(a.seeds);
    const Tensor clean = read_netpbm(a.image);
    const Instance inst = make_instance(Task::inpaint, clean, 0.0, a.drop, seeds.front());
    InferenceConfig cfg = load_config(a.config_path, sweep_config());
    if (!std::isnan(a.lr)) cfg.lr = a.lr;
    if (a.iterations >= 0) cfg.iterations = a.iterations;
    const fs::path dir = prepare_dir(a.out_dir);
    Manifest m("experiment sweep-channels", dir);
    m.input(a.image);
    m["config"] = to_json(cfg);
    m["seeds"] = seeds;
    m["channels"] = channels;
    m["drop"] = a.drop;
    m["gp_noise"] = a.gp_noise;
    const ChannelSweep sweep = sweep_channels(inst, a.preset_name, channels, seeds, cfg, a.gp_noise);
    write_file(m.output("sweep.csv"), sweep.to_csv());
    m.write();
    std::cout << sweep.to_csv();
    return 0;
}

int cmd_toy1d(const ExperimentArgs& a) {
    const fs::path dir = prepare_dir(a.out_dir);
    Manifest m("experiment toy1d", dir);
    std::vector<int> depths;
    for (const auto& d : split(a.depths)) depths.push_back(std::stoi(d));
    const auto seeds = parse_seeds(a.seeds);
    m["depths"] = depths;
    m["seed"] = seeds.front();
    m["length"] = a.length;
    m["drop"] = a.drop;

    // Covariance curves for both architectures, white and Gaussian inputs.
    for (const std::string base : {"conv", "ae"})
        for (const std::string input : {"white", "gaussian"})
            for (int d : depths) {
                PresetOptions o;
                o.channels = 16;
                o.input_kernel = input == "white" ? InputKernel::white : InputKernel::gaussian;
                o.filter_std = input == "white" ? 0.0 : a.filter_std;
                const NetworkSpec spec = preset(base + "_" + std::to_string(d), o);
                write_rho_csv(derive_kernel(spec, a.half_width).kernel,
                              m.output("cov_" + base + "_" + std::to_string(d) + "_" + input + ".csv"));
            }

    // Prior samples and a 90%-dropped reconstruction with the depth-2 autoencoder kernel.
    PresetOptions o;
    o.input_kernel = InputKernel::gaussian;
    o.filter_std = a.filter_std;
    const StationaryKernel k = derive_kernel(preset("ae_2", o), static_cast<int>(a.length) - 1).kernel;
    const auto pts = grid_points(0, a.length);
    Rng rng(seeds.front(), 8);
    const auto draws = sample_prior(k, pts, rng, 3);
    std::ostringstream samples;
    samples << "position,sample_0,sample_1,sample_2\n";
    for (std::size_t i = 0; i < pts.size(); ++i)
        samples << i << ',' << fmt(draws[0][i]) << ',' << fmt(draws[1][i]) << ',' << fmt(draws[2][i]) << '\n';
    write_file(m.output("prior_samples.csv"), samples.str());

    Signal1D sig;
    std::vector<Point> obs;
    std::vector<double> y;
    const Mask mask = random_mask(Shape{a.length}, a.drop, rng);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        sig.position.push_back(static_cast<double>(i));
        sig.value.push_back(draws[0][i]);
        sig.observed.push_back(mask.observed[i]);
        if (mask.observed[i]) {
            obs.push_back(pts[i]);
            y.push_back(draws[0][i]);
        }
    }
    write_signal_csv(sig, m.output("signal.csv").string());
    const GPPosterior post = posterior(k, obs, y, NoiseModel{a.gp_noise}, pts);
    std::ostringstream out;
    out << "position,truth,observed,mean,variance\n";
    for (std::size_t i = 0; i < pts.size(); ++i)
        out << i << ',' << fmt(draws[0][i]) << ',' << int(mask.observed[i]) << ',' << fmt(post.mean[i]) << ','
            << fmt(post.variance[i]) << '\n';
    write_file(m.output("posterior.csv"), out.str());
    m.write();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deep image prior as a Gaussian process: kernels, GP inference and DIP training"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    KernelArgs ka;
    auto* kernel = app.add_subcommand("kernel", "limiting kernels")->require_subcommand(1);
    auto* kderive = kernel->add_subcommand("derive", "fold a network spec into its limiting kernel");
    ka.spec.add(kderive, 1);
    kderive->add_option("--half-width", ka.half_width, "lag grid half width")->check(CLI::NonNegativeNumber);
    kderive->add_option("--out", ka.out_dir, "output directory");
    auto* kvalidate = kernel->add_subcommand("validate", "compare the kernel against Monte Carlo networks");
    ka.spec.add(kvalidate, 1);
    kvalidate->add_option("--samples", ka.samples, "number of random networks");
    kvalidate->add_option("--length", ka.length, "input extent per axis");
    kvalidate->add_option("--seed", ka.seed);
    kvalidate->add_option("--check", ka.check, "largest compared lag")->check(CLI::NonNegativeNumber);
    kvalidate->add_option("--threshold", ka.threshold, "max allowed |rho_hat - rho|");
    kvalidate->add_option("--report,--out", ka.out_dir, "output directory");

    GpArgs ga;
    auto* gp = app.add_subcommand("gp", "exact Gaussian process inference")->require_subcommand(1);
    auto add_kernel_opts = [&](CLI::App* c) {
        ga.spec.add(c, 1);
        c->add_option("--kernel", ga.kernel_path, "kernel file from `kernel derive`")->check(CLI::ExistingFile);
        c->add_option("--rbf", ga.rbf, "use an RBF kernel with this lengthscale");
        c->add_option("--out", ga.out_dir, "output directory");
        c->add_option("--seed", ga.seed);
    };
    auto add_obs_opts = [&](CLI::App* c) {
        c->add_option("--obs", ga.obs_path, "1D observations (position,value[,observed])")->check(CLI::ExistingFile);
        c->add_option("--image", ga.image, "observed image (PGM/PPM)")->check(CLI::ExistingFile);
        c->add_option("--clean", ga.clean, "clean reference image")->check(CLI::ExistingFile);
        c->add_option("--mask", ga.mask_path, "mask image, bright = observed")->check(CLI::ExistingFile);
        c->add_option("--drop", ga.drop, "fraction of pixels dropped when no mask is given")->check(CLI::Range(0.0, 1.0));
        c->add_option("--noise", ga.noise, "observation noise std")->check(CLI::NonNegativeNumber);
    };
    auto* gsample = gp->add_subcommand("sample", "draw prior samples");
    add_kernel_opts(gsample);
    gsample->add_option("--height", ga.height, "image height (0 for 1D)");
    gsample->add_option("--width,--length", ga.width, "image width or signal length")->check(CLI::PositiveNumber);
    gsample->add_option("--count", ga.count, "number of samples");
    auto* ginfer = gp->add_subcommand("infer", "posterior mean and variance");
    add_kernel_opts(ginfer);
    add_obs_opts(ginfer);
    ginfer->add_option("--query", ga.query, "grid or observed (1D)");
    auto* gfit = gp->add_subcommand("fit-rbf", "grid search of the RBF lengthscale");
    add_obs_opts(gfit);
    gfit->add_option("--seed", ga.seed);
    gfit->add_option("--lengthscales", ga.lengthscales, "comma separated grid");

    DipArgs da;
    auto* dip = app.add_subcommand("dip", "deep image prior reconstruction")->require_subcommand(1);
    auto* drun = dip->add_subcommand("run", "one task / scheme combination");
    da.spec.add(drun, 2, 32);
    drun->add_option("--task", da.task)->check(CLI::IsMember({"denoise", "inpaint"}));
    drun->add_option("--image", da.image, "corrupted image")->required()->check(CLI::ExistingFile);
    drun->add_option("--clean", da.clean, "clean reference")->check(CLI::ExistingFile);
    drun->add_option("--mask", da.mask_path, "mask image for inpainting, bright = observed")->check(CLI::ExistingFile);
    drun->add_option("--drop", da.drop, "random drop fraction when no mask is given")->check(CLI::Range(0.0, 1.0));
    drun->add_option("--scheme", da.scheme)->check(CLI::IsMember({"sgd", "sgd_avg", "sgd_input", "sgd_input_avg", "sgld"}));
    drun->add_option("--config", da.config_path, "config JSON or a previous manifest")->check(CLI::ExistingFile);
    drun->add_option("--out", da.out_dir, "output directory");
    drun->add_option("--seed", da.seed);
    drun->add_option("--lr", da.lr);
    drun->add_option("--iterations", da.iterations);
    drun->add_option("--burn-in", da.burn_in);
    drun->add_option("--eval-every", da.eval_every);
    drun->add_option("--sigma-n", da.sigma_n, "likelihood noise std");
    drun->add_option("--sigma-p", da.sigma_p, "input perturbation std");
    drun->add_option("--weight-decay", da.weight_decay);
    drun->add_option("--noise-unit", da.unit, "scale of --sigma-n: 1 or 255")->check(CLI::IsMember({"1", "255"}));

    ExperimentArgs ea;
    auto* exp = app.add_subcommand("experiment", "multi-run experiments")->require_subcommand(1);
    auto add_common = [&](CLI::App* c) {
        c->add_option("--preset", ea.preset_name);
        c->add_option("--seeds", ea.seeds, "comma separated");
        c->add_option("--out", ea.out_dir, "output directory");
        c->add_option("--config", ea.config_path, "config JSON")->check(CLI::ExistingFile);
        c->add_option("--iterations", ea.iterations);
        c->add_option("--lr", ea.lr);
    };
    auto* sweep = exp->add_subcommand("sweep-channels", "DIP PSNR against channel count, plus the GP");
    add_common(sweep);
    sweep->add_option("--image", ea.image, "clean image")->check(CLI::ExistingFile);
    sweep->add_option("--channels", ea.channels, "comma separated");
    sweep->add_option("--drop", ea.drop)->check(CLI::Range(0.0, 1.0));
    sweep->add_option("--gp-noise", ea.gp_noise);
    auto* dsuite = exp->add_subcommand("denoise-suite", "all schemes x seeds x images, denoising");
    auto* isuite = exp->add_subcommand("inpaint-suite", "all schemes x seeds x images, inpainting");
    for (auto* c : {dsuite, isuite}) {
        add_common(c);
        c->add_option("--images", ea.images, "comma separated clean images");
        c->add_option("--schemes", ea.schemes, "comma separated");
        c->add_option("--channels", ea.width_channels)->check(CLI::PositiveNumber);
        c->add_option("--burn-in", ea.burn_in);
    }
    dsuite->add_option("--sigma", ea.sigma, "noise std");
    dsuite->add_option("--noise-unit", ea.unit, "scale of --sigma: 1 or 255")->check(CLI::IsMember({"1", "255"}));
    isuite->add_option("--drop", ea.drop)->check(CLI::Range(0.0, 1.0));
    auto* toy = exp->add_subcommand("toy1d", "1D covariance curves, prior samples and reconstruction");
    toy->add_option("--depths", ea.depths, "comma separated");
    toy->add_option("--seeds", ea.seeds, "first seed is used");
    toy->add_option("--length", ea.length)->check(CLI::PositiveNumber);
    toy->add_option("--half-width", ea.half_width)->check(CLI::PositiveNumber);
    toy->add_option("--drop", ea.drop)->check(CLI::Range(0.0, 1.0));
    toy->add_option("--filter-std", ea.filter_std)->check(CLI::PositiveNumber);
    toy->add_option("--gp-noise", ea.gp_noise);
    toy->add_option("--out", ea.out_dir, "output directory");
    ea.drop = 0.5;

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (kderive->parsed()) return cmd_kernel_derive(ka);
        if (kvalidate->parsed()) return cmd_kernel_validate(ka);
        if (gsample->parsed()) return cmd_gp_sample(ga);
        if (ginfer->parsed()) return cmd_gp_infer(ga);
        if (gfit->parsed()) return cmd_gp_fit_rbf(ga);
        if (drun->parsed()) return cmd_dip_run(da);
        if (sweep->parsed()) return cmd_sweep_channels(ea);
        if (dsuite->parsed()) return cmd_suite(ea, Task::denoise);
        if (isuite->parsed()) return cmd_suite(ea, Task::inpaint);
        if (toy->parsed()) {
            if (toy->count("--drop") == 0) ea.drop = 0.9;
            return cmd_toy1d(ea);
        }
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    } catch (const ShapeError& e) {
        std::fprintf(stderr, "invalid input: %s\n", e.what());
        return 2;
    } catch (const FormatError& e) {
        std::fprintf(stderr, "invalid input: %s\n", e.what());
        return 2;
    } catch (const CheckFailed& e) {
        std::fprintf(stderr, "check failed: %s\n", e.what());
        return 1;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
