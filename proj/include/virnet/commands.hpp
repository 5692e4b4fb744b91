#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "virnet/config.hpp"
#include "virnet/dataset.hpp"
#include "virnet/networks.hpp"

namespace virnet {

/// Worker bound from the VIRNET_THREADS environment variable. Unset or empty
/// means 1; anything that is not a positive integer is a ConfigError.
int worker_cap();

/// Restoration of a single observation. The input is reflect-extended (no
/// border duplication) until the spatial dims divide the network's pooling
/// factor, then the outputs are cropped back. `kernel_code` is the projected
/// blur code, required exactly when the model is an sr model.
struct InferResult {
    Tensor restored;  // posterior mean clamped to [0,1], scale x input dims
    Tensor sigma2;    // per-pixel noise variance mode, input dims
};
InferResult infer_image(const Tensor& y, const NetworkParams& params,
                        const std::vector<double>* kernel_code = nullptr);

/// Synthesizes the dataset under <output_dir>/dataset and writes the resolved
/// config beside it.
SynthResult cmd_synth(const ExperimentConfig& config);

struct TrainOutputs {
    std::filesystem::path checkpoint;   // parameter values only
    std::filesystem::path state;        // full trainer state, resumable
    std::filesystem::path trace;        // per-iteration CSV
    std::filesystem::path val_metrics;  // periodic validation CSV; may be empty
};
/// Trains on <output_dir>/dataset/manifest.json. With `resume` the run
/// continues from the saved trainer state and appends to the existing trace.
TrainOutputs cmd_train(const ExperimentConfig& config, bool resume = false);

struct InferOutputs {
    std::filesystem::path restored_virt;
    std::filesystem::path restored_preview;
    std::filesystem::path sigma2_virt;
    std::filesystem::path sigma2_preview;  // normalized by its own maximum
};
/// Restores one image file (.virt or .pgm). `checkpoint` empty defaults to
/// <output_dir>/checkpoint.ckpt; `kernel` is the blur spec string, required
/// for sr and rejected otherwise.
InferOutputs cmd_infer(const ExperimentConfig& config,
                       const std::filesystem::path& checkpoint,
                       const std::filesystem::path& input,
                       const std::filesystem::path& out_prefix,
                       const std::string& kernel = {});

struct EvalRow {
    std::string id;
    double psnr = 0.0;
    double ssim = 0.0;
    double variance_corr = 0.0;
    bool has_variance = false;  // true noise map known and non-constant
};

/// Scores one restored/reference pair the way cmd_eval does: PSNR and SSIM on
/// luminance, plus the correlation between sqrt(sigma2) and the true noise
/// map when `noise_spec` names a non-constant field. Identical pairs hit the
/// 100 dB cap and SSIM 1.
EvalRow score_pair(const Tensor& restored, const Tensor& reference,
                   const Tensor* sigma2 = nullptr, const std::string& noise_spec = {});
struct EvalSummary {
    std::vector<EvalRow> rows;
    EvalRow aggregate;  // mean of the rows above
    std::filesystem::path csv;
};
/// Scores a manifest against a checkpoint: per-image PSNR/SSIM on luminance
/// plus correlation between the predicted and true noise maps where the true
/// map is known. Missing ground truth is a ContractError.
EvalSummary cmd_eval(const ExperimentConfig& config,
                     const std::filesystem::path& manifest,
                     const std::filesystem::path& checkpoint,
                     const std::filesystem::path& out_csv);

struct VerifyReport {
    bool ok = false;
    std::vector<std::string> lines;  // one "PASS/FAIL name max_err tol" each
};
/// Self-contained oracle battery: special-function identities, analytic KL
/// versus Monte Carlo, blur/downsample versus a dense reference operator, and
/// finite-difference gradient checks up to the full objective.
/// `negative_control` perturbs one KL constant so the MC comparison must
/// fail; it exists to prove the battery can fail.
VerifyReport cmd_verify(bool negative_control = false);

}  // namespace virnet
