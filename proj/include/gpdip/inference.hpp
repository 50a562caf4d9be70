#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gpdip/dipnet.hpp"
#include "gpdip/error.hpp"
#include "gpdip/signal_io.hpp"

namespace gpdip {

enum class Scheme { sgd, sgd_avg, sgd_input, sgd_input_avg, sgld };
enum class Task { denoise, inpaint, fit1d };

std::string to_string(Scheme s);
std::string to_string(Task t);
Scheme parse_scheme(const std::string& s);
Task parse_task(const std::string& s);
std::vector<Scheme> all_schemes();

struct InferenceConfig {
    Scheme scheme = Scheme::sgd;
    double lr = 0.01;
    int iterations = 5000;
    int burn_in = 1750;
    double sigma_p = 0.0;       // input perturbation std (sgd_input*)
    double weight_decay = 0.0;  // lambda
    double ema_decay = 0.99;
    bool noise_injection = true;  // sgld only
    std::uint64_t seed = 0;
    int eval_every = 10;
    double sigma_n = 0.1;     // likelihood noise std entering sgld as g / sigma_n^2
    double lr_decay_power = 0.0;  // sgld step eps_t = lr (1 + t / lr_decay_t0)^-power
    double lr_decay_t0 = 1000.0;
    int sample_every = 1;        // sgld accumulation stride after burn-in
    bool optimize_input = false;
    // Fit the observed-mean-removed target with the network output minus its
    // own observed mean (per channel); estimates add the target means back.
    bool center = true;
    Padding padding = Padding::reflect;
    double divergence_threshold = 1e6;

    void validate() const;
};

// Per-task defaults. Only sgld carries a weight prior; sigma_p is a third of
// the unit input std for the input-perturbation schemes. Inpainting uses
// sigma_n = 0.05.
InferenceConfig default_config(Task task, Scheme scheme);

nlohmann::json to_json(const InferenceConfig& c);
// Overlays the keys present in `j` onto `base`.
InferenceConfig config_from_json(const nlohmann::json& j, InferenceConfig base);

struct TraceRow {
    int iteration = 0;
    double mse_noisy = 0.0;      // current iterate vs target, observed pixels
    double psnr_iterate = 0.0;   // current iterate vs clean (NaN without a reference)
    double psnr_estimate = 0.0;  // scheme estimate vs clean (NaN without a reference)
    double param_norm = 0.0;
};

struct RunTrace {
    std::vector<TraceRow> rows;
    int best_row = -1;  // row with the best psnr_estimate (oracle early stopping)
};

class PosteriorAccumulator {
public:
    void add(const Tensor& sample);
    std::size_t count() const { return count_; }
    const Tensor& mean() const { return mean_; }
    const Tensor& m2() const { return m2_; }

private:
    std::size_t count_ = 0;
    Tensor mean_;
    Tensor m2_;
};

struct PosteriorStats {
    Tensor mean;
    Tensor variance;  // unbiased, divides by count - 1
};
PosteriorStats posterior_stats(const PosteriorAccumulator& acc);

// w <- w - lr (g + lambda w)
void sgd_step(ParamSet& params, const ParamSet& grads, double lr, double weight_decay);
// w <- w - (eps / 2)(g / sigma_n^2 + lambda w) + N(0, eps). Implemented as
// sgd_step(lr = eps / (2 sigma_n^2), lambda' = sigma_n^2 lambda) followed by
// the noise, so a noiseless step is bitwise an sgd_step.
void sgld_step(ParamSet& params, const ParamSet& grads, double eps, double weight_decay, double sigma_n, Rng& rng,
               bool inject_noise = true);
// Same updates on a single tensor (network input, toy problems).
void sgd_step(Tensor& w, const Tensor& g, double lr, double weight_decay);
void sgld_step(Tensor& w, const Tensor& g, double eps, double weight_decay, double sigma_n, Rng& rng, bool inject_noise = true);

// acc' = decay acc + (1 - decay) x; an empty acc is initialized to x.
void ema_update(Tensor& acc, const Tensor& x, double decay);

Tensor perturb_input(const NetworkInput& input, Rng& rng);

struct RunResult {
    Tensor output;        // scheme estimate (ema, posterior mean, or last iterate)
    Tensor last_iterate;
    Tensor best_estimate;  // estimate at best_row; empty without a clean reference
    RunTrace trace;
    std::optional<PosteriorStats> posterior;
    std::vector<double> target_offset;  // per-channel means removed before fitting
};

struct DivergenceError : NumericalError {
    DivergenceError(const std::string& what, RunTrace t) : NumericalError(what), trace(std::move(t)) {}
    RunTrace trace;
};

// Fits `spec` (whose output channels must match the target) to `target`
// restricted to `mask`. `clean` enables the PSNR columns of the trace.
RunResult run(Task task, const Tensor& target, const Mask& mask, const Tensor* clean, const NetworkSpec& spec,
              const InferenceConfig& config);

// Mean post-burn-in values from a trace.
double mean_mse_after(const RunTrace& trace, int iteration);

std::string trace_to_csv(const RunTrace& trace);

}  // namespace gpdip
