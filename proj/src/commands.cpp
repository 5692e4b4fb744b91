#include "virnet/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>

#include "virnet/distributions.hpp"
#include "virnet/errors.hpp"
#include "virnet/io.hpp"
#include "virnet/metrics.hpp"
#include "virnet/objective.hpp"
#include "virnet/priors.hpp"
#include "virnet/specfun.hpp"
#include "virnet/training.hpp"

namespace virnet {
namespace {

namespace fs = std::filesystem;

std::vector<double> to_vec(const Tensor& t) {
    auto v = t.values();
    return {v.begin(), v.end()};
}

NetworkParams params_for(const ExperimentConfig& config) {
    NetworkConfig net = config.network;
    net.task = config.task;
    net.scale = config.task == Task::sr ? static_cast<std::size_t>(config.dataset.scale) : 1;
    Rng throwaway(0);  // values are replaced by the checkpoint right after
    return init_params(net, throwaway);
}

Tensor read_image(const fs::path& path) {
    const std::string ext = path.extension().string();
    Tensor img;
    if (ext == ".virt") {
        img = read_virt(path);
    } else if (ext == ".pgm") {
        img = read_pgm(path);
    } else if (ext == ".ppm") {
        img = read_ppm(path);
    } else {
        throw IoError("unsupported image extension '" + ext + "' (want .virt, .pgm or .ppm)");
    }
    if (img.ndim() == 2)
        img = Tensor::from_data({1, img.shape()[0], img.shape()[1]}, to_vec(img));
    if (img.ndim() != 3) throw ShapeError("input image must be [c,h,w] or [h,w]");
    return img;
}

/// Mirror extension to the bottom/right without repeating the border pixel.
Tensor reflect_extend(const Tensor& img, std::size_t new_h, std::size_t new_w) {
    const std::size_t c = img.shape()[0], h = img.shape()[1], w = img.shape()[2];
    if (new_h == h && new_w == w) return img;
    if (new_h >= 2 * h || new_w >= 2 * w)
        throw ShapeError("image too small to mirror-extend to the network's grid");
    auto v = img.values();
    std::vector<double> out(c * new_h * new_w);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < new_h; ++y) {
            const std::size_t sy = y < h ? y : 2 * (h - 1) - y;
            for (std::size_t x = 0; x < new_w; ++x) {
                const std::size_t sx = x < w ? x : 2 * (w - 1) - x;
                out[(ch * new_h + y) * new_w + x] = v[(ch * h + sy) * w + sx];
            }
        }
    return Tensor::from_data({c, new_h, new_w}, out);
}

Tensor crop_to(const Tensor& img, std::size_t h, std::size_t w) {
    const std::size_t c = img.shape()[0], ih = img.shape()[1], iw = img.shape()[2];
    if (ih == h && iw == w) return img;
    auto v = img.values();
    std::vector<double> out(c * h * w);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                out[(ch * h + y) * w + x] = v[(ch * ih + y) * iw + x];
    return Tensor::from_data({c, h, w}, out);
}

Tensor map_values(const Tensor& t, double (*f)(double)) {
    std::vector<double> v = to_vec(t);
    for (double& x : v) x = f(x);
    return Tensor::from_data(t.shape(), std::move(v));
}

void append_lines(const fs::path& path, const std::string& header,
                  const std::vector<std::string>& rows, bool append) {
    std::ofstream out(path, append ? std::ios::binary | std::ios::app : std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string());
    if (!append) out << header;
    for (const std::string& row : rows) out << row;
    if (!out) throw IoError("write failed for " + path.string());
}

std::string metric_cell(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

int worker_cap() {
    const char* raw = std::getenv("VIRNET_THREADS");
    if (raw == nullptr || *raw == '\0') return 1;
    char* end = nullptr;
    const long value = std::strtol(raw, &end, 10);
    if (end == raw || *end != '\0' || value < 1 || value > 1024)
        throw ConfigError(std::string("VIRNET_THREADS must be a positive integer, got '") +
                          raw + "'");
    return static_cast<int>(value);
}

InferResult infer_image(const Tensor& y, const NetworkParams& params,
                        const std::vector<double>* kernel_code) {
    if (y.ndim() != 3) throw ShapeError("infer_image wants a [c,h,w] observation");
    const bool sr = params.config.task == Task::sr;
    if (sr && kernel_code == nullptr)
        throw ContractError("sr inference needs the projected kernel code");
    if (!sr && kernel_code != nullptr)
        throw ContractError("kernel code given but the model is not an sr model");

    const std::size_t h = y.shape()[1], w = y.shape()[2];
    const std::size_t div = std::size_t{1} << (params.config.rnet_depth - 1);
    const std::size_t ph = (h + div - 1) / div * div;
    const std::size_t pw = (w + div - 1) / div * div;
    const Tensor padded = reflect_extend(y, ph, pw);

    std::optional<Tensor> stretched;
    if (sr) stretched = stretch_embedding(*kernel_code, ph, pw);
    const GaussianPosterior q_z = rnet_forward(padded, stretched, params);
    const InvGammaPosterior q_s = snet_forward(padded, params);

    const std::size_t s = params.config.scale;
    InferResult out;
    out.restored = map_values(crop_to(q_z.mu.detach(), s * h, s * w),
                              +[](double v) { return std::clamp(v, 0.0, 1.0); });
    out.sigma2 = crop_to(sigma_mode(q_s).detach(), h, w);
    return out;
}

SynthResult cmd_synth(const ExperimentConfig& config) {
    validate_experiment_config(config);
    const fs::path out_dir = config.output_dir;
    fs::create_directories(out_dir);
    {
        std::ofstream cfg(out_dir / "config_resolved.json", std::ios::binary);
        if (!cfg) throw IoError("cannot write " + (out_dir / "config_resolved.json").string());
        cfg << experiment_config_json(config);
    }
    return synthesize_dataset(config, out_dir / "dataset", worker_cap());
}

TrainOutputs cmd_train(const ExperimentConfig& config, bool resume) {
    validate_experiment_config(config);
    const fs::path out_dir = config.output_dir;
    fs::create_directories(out_dir);
    TrainOutputs paths{out_dir / "checkpoint.ckpt", out_dir / "train_state.ckpt",
                       out_dir / "trace.csv", out_dir / "val_metrics.csv"};

    const std::vector<TrainSample> samples = load_samples(out_dir / "dataset" / "manifest.json");
    std::vector<TrainSample> val;
    const fs::path val_manifest = out_dir / "dataset" / "val_manifest.json";
    if (config.eval_every > 0 && fs::is_regular_file(val_manifest))
        val = load_samples(val_manifest);

    TrainConfig tc = config.train;
    tc.snapshot_path = (out_dir / "nan_snapshot.ckpt").string();

    std::optional<TrainerState> state;
    if (resume) state = load_trainer_state(paths.state);

    std::vector<std::string> val_rows;
    TrainHooks hooks;
    if (!val.empty()) {
        hooks.eval_every = config.eval_every;
        hooks.on_eval = [&](std::size_t iteration, const NetworkParams& params) {
            double psnr_sum = 0.0, ssim_sum = 0.0;
            for (const TrainSample& s : val) {
                GaussianPosterior q = rnet_forward(s.y, s.stretched_h, params);
                const Tensor restored =
                    map_values(q.mu.detach(), +[](double v) { return std::clamp(v, 0.0, 1.0); });
                psnr_sum += psnr(restored, s.x);
                ssim_sum += ssim(restored, s.x);
            }
            const double n = static_cast<double>(val.size());
            val_rows.push_back(std::to_string(iteration) + "," + metric_cell(psnr_sum / n) +
                               "," + metric_cell(ssim_sum / n) + "\n");
        };
    }

    const TrainResult result = train(samples, params_for(config).config, tc,
                                     config.hyperparams, state ? &*state : nullptr,
                                     hooks.eval_every > 0 ? &hooks : nullptr);

    save_checkpoint(paths.checkpoint, result.params.entries);
    save_trainer_state(paths.state, result.state);
    const bool append = resume && fs::is_regular_file(paths.trace);
    std::vector<std::string> trace_rows;
    trace_rows.reserve(result.trace.size());
    for (const TraceRow& row : result.trace) trace_rows.push_back(trace_row_line(row));
    append_lines(paths.trace, trace_csv_header(), trace_rows, append);
    if (!val_rows.empty() || (!resume && !val.empty()))
        append_lines(paths.val_metrics, "iteration,psnr,ssim\n", val_rows,
                     resume && fs::is_regular_file(paths.val_metrics));
    return paths;
}

InferOutputs cmd_infer(const ExperimentConfig& config, const fs::path& checkpoint,
                       const fs::path& input, const fs::path& out_prefix,
                       const std::string& kernel) {
    const fs::path ckpt =
        checkpoint.empty() ? fs::path(config.output_dir) / "checkpoint.ckpt" : checkpoint;
    NetworkParams params = params_for(config);
    load_state(params, load_checkpoint(ckpt));

    const Tensor y = read_image(input);
    if (y.shape()[0] != params.config.img_channels)
        throw ShapeError("input has " + std::to_string(y.shape()[0]) +
                         " channels, the model wants " +
                         std::to_string(params.config.img_channels));

    std::optional<std::vector<double>> code;
    if (config.task == Task::sr) {
        if (kernel.empty())
            throw ContractError("sr inference needs a kernel spec (e.g. iso:d=1.6)");
        fs::path emb_path = ckpt.parent_path() / "dataset" / "kernel_embedding.ckpt";
        if (!fs::is_regular_file(emb_path))
            emb_path = ckpt.parent_path() / "kernel_embedding.ckpt";
        if (!fs::is_regular_file(emb_path))
            throw IoError("kernel embedding not found beside the checkpoint: " +
                          emb_path.string());
        const KernelEmbedding emb = load_embedding(emb_path);
        code = project_kernel(emb, make_kernel(parse_kernel_spec(kernel)));
    } else if (!kernel.empty()) {
        throw ContractError("kernel spec given but the task is not sr");
    }

    const InferResult result = infer_image(y, params, code ? &*code : nullptr);

    if (out_prefix.has_parent_path()) fs::create_directories(out_prefix.parent_path());
    InferOutputs out;
    const std::string prefix = out_prefix.string();
    const bool rgb = result.restored.shape()[0] == 3;
    out.restored_virt = prefix + "_restored.virt";
    out.restored_preview = prefix + (rgb ? "_restored.ppm" : "_restored.pgm");
    out.sigma2_virt = prefix + "_sigma2.virt";
    out.sigma2_preview = prefix + "_sigma2.pgm";
    write_virt(out.restored_virt, result.restored);
    if (rgb)
        write_ppm(out.restored_preview, result.restored);
    else
        write_pgm(out.restored_preview, result.restored);
    write_virt(out.sigma2_virt, result.sigma2);

    // Preview of the variance map, normalized by its own peak so structure
    // stays visible at any noise level.
    double peak = 0.0;
    for (double v : result.sigma2.values()) peak = std::max(peak, v);
    std::vector<double> plane = to_vec(result.sigma2);
    const std::size_t hw = result.sigma2.shape()[1] * result.sigma2.shape()[2];
    plane.resize(hw);  // first channel only when the model is multi-channel
    if (peak > 0.0)
        for (double& v : plane) v /= peak;
    write_pgm(out.sigma2_preview,
              Tensor::from_data({1, result.sigma2.shape()[1], result.sigma2.shape()[2]},
                                std::move(plane)));
    return out;
}

EvalRow score_pair(const Tensor& restored, const Tensor& reference, const Tensor* sigma2,
                   const std::string& noise_spec) {
    const bool rgb = reference.ndim() == 3 && reference.shape()[0] == 3;
    const Tensor restored_l = rgb ? luminance(restored) : restored;
    const Tensor reference_l = rgb ? luminance(reference) : reference;
    EvalRow row;
    row.psnr = psnr(restored_l, reference_l);
    row.ssim = ssim(restored_l, reference_l);
    if (sigma2 != nullptr && !noise_spec.empty()) {
        const NoiseFieldSpec field = parse_noise_spec(noise_spec);
        if (field.kind != NoiseFieldKind::constant) {
            const std::size_t h = sigma2->shape()[1], w = sigma2->shape()[2];
            const Tensor truth = noise_map(field, h, w);
            const Tensor sigma_plane =
                Tensor::from_data({h, w}, to_vec(crop_to(*sigma2, h, w)));
            row.variance_corr = variance_map_quality(sigma_plane, truth);
            row.has_variance = true;
        }
    }
    return row;
}

EvalSummary cmd_eval(const ExperimentConfig& config, const fs::path& manifest_path,
                     const fs::path& checkpoint, const fs::path& out_csv) {
    const DatasetManifest manifest = load_manifest(manifest_path);
    const fs::path dir = manifest_path.parent_path();
    NetworkParams params = params_for(config);
    load_state(params, load_checkpoint(checkpoint));

    std::optional<KernelEmbedding> emb;
    if (manifest.task == Task::sr) {
        if (manifest.embedding.empty())
            throw ContractError("sr manifest is missing the kernel embedding");
        emb = load_embedding(dir / manifest.embedding);
    }

    EvalSummary summary;
    double var_sum = 0.0;
    std::size_t var_n = 0;
    for (const SampleRecord& rec : manifest.samples) {
        if (rec.clean.empty())
            throw ContractError("evaluation needs ground truth for every sample; '" +
                                rec.corrupted + "' has none");
        const Tensor clean = read_virt(dir / rec.clean);
        const Tensor y = read_virt(dir / rec.corrupted);
        std::optional<std::vector<double>> code;
        if (manifest.task == Task::sr)
            code = project_kernel(*emb, make_kernel(parse_kernel_spec(rec.kernel)));
        const InferResult r = infer_image(y, params, code ? &*code : nullptr);

        EvalRow row = score_pair(r.restored, clean, &r.sigma2, rec.noise);
        row.id = rec.corrupted;
        if (row.has_variance) {
            var_sum += row.variance_corr;
            ++var_n;
        }
        summary.rows.push_back(std::move(row));
    }
    if (summary.rows.empty()) throw ContractError("evaluation manifest has no samples");

    EvalRow& agg = summary.aggregate;
    agg.id = "mean";
    for (const EvalRow& row : summary.rows) {
        agg.psnr += row.psnr;
        agg.ssim += row.ssim;
    }
    agg.psnr /= static_cast<double>(summary.rows.size());
    agg.ssim /= static_cast<double>(summary.rows.size());
    if (var_n > 0) {
        agg.variance_corr = var_sum / static_cast<double>(var_n);
        agg.has_variance = true;
    }

    std::vector<std::string> lines;
    auto csv_row = [](const EvalRow& row) {
        return row.id + "," + metric_cell(row.psnr) + "," + metric_cell(row.ssim) + "," +
               (row.has_variance ? metric_cell(row.variance_corr) : std::string{}) + "\n";
    };
    for (const EvalRow& row : summary.rows) lines.push_back(csv_row(row));
    lines.push_back(csv_row(agg));
    if (out_csv.has_parent_path()) fs::create_directories(out_csv.parent_path());
    append_lines(out_csv, "image,psnr,ssim,variance_corr\n", lines, false);
    summary.csv = out_csv;
    return summary;
}

// ---------------------------------------------------------------------------
// Verification battery. Every oracle below is implemented independently of
// the production formula it checks: MC estimators against closed-form KLs,
// a dense reference operator against the blur/downsample path, and central
// differences against the autodiff gradients.

namespace {

struct CheckRecorder {
    bool ok = true;
    std::vector<std::string>* lines;

    void add(const std::string& name, double max_err, double tol) {
        const bool pass = std::isfinite(max_err) && max_err <= tol;
        ok = ok && pass;
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s  %-28s max_err=%.3e  tol=%.3e",
                      pass ? "PASS" : "FAIL", name.c_str(), max_err, tol);
        lines->push_back(buf);
    }
};

double norm_logpdf(double z, double mu, double var) {
    const double d = z - mu;
    return -0.5 * std::log(2.0 * std::numbers::pi * var) - d * d / (2.0 * var);
}

double invgamma_logpdf_local(double s, double alpha, double beta) {
    return alpha * std::log(beta) - specfun::lgamma(alpha) - (alpha + 1.0) * std::log(s) -
           beta / s;
}

std::size_t mirror_index(std::ptrdiff_t i, std::ptrdiff_t n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * (n - 1) - i;
    }
    return static_cast<std::size_t>(i);
}

/// Central difference with the half-step control: probes whose two estimates
/// disagree straddle an activation kink and are skipped.
struct FdProbe {
    double max_err = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0;
};

template <typename F>
void fd_coordinate(FdProbe& probe, F&& f, double* slot, double analytic) {
    const double x0 = *slot;
    const double h = 1e-5 * std::max(1.0, std::abs(x0));
    auto eval = [&](double x) {
        *slot = x;
        const double v = f();
        *slot = x0;
        return v;
    };
    const double d_full = (eval(x0 + h) - eval(x0 - h)) / (2.0 * h);
    const double d_half = (eval(x0 + h / 2) - eval(x0 - h / 2)) / h;
    if (std::abs(d_full - d_half) >
        1e-3 * std::max({1.0, std::abs(d_full), std::abs(d_half)})) {
        ++probe.skipped;
        return;
    }
    const double err =
        std::abs(d_half - analytic) / std::max({1.0, std::abs(d_half), std::abs(analytic)});
    probe.max_err = std::max(probe.max_err, err);
    ++probe.checked;
}

void check_specfun(CheckRecorder& rec) {
    const double grid[] = {0.07, 0.31, 1.1, 2.5, 7.9, 23.0, 144.5};
    double lg_err = 0.0, dg_err = 0.0, lg_fd = 0.0, tg_fd = 0.0;
    for (double x : grid) {
        lg_err = std::max(lg_err, std::abs(specfun::lgamma(x + 1.0) - specfun::lgamma(x) -
                                           std::log(x)));
        dg_err = std::max(dg_err,
                          std::abs(specfun::digamma(x + 1.0) - specfun::digamma(x) - 1.0 / x));
        const double h = 1e-6 * std::max(1.0, x);
        lg_fd = std::max(lg_fd, std::abs((specfun::lgamma(x + h) - specfun::lgamma(x - h)) /
                                             (2.0 * h) -
                                         specfun::digamma(x)));
        tg_fd = std::max(tg_fd, std::abs((specfun::digamma(x + h) - specfun::digamma(x - h)) /
                                             (2.0 * h) -
                                         specfun::trigamma(x)));
    }
    rec.add("lgamma-recurrence", lg_err, 1e-11);
    rec.add("digamma-recurrence", dg_err, 1e-10);
    rec.add("digamma-is-dlgamma", lg_fd, 1e-5);
    rec.add("trigamma-is-ddigamma", tg_fd, 1e-4);
}

void check_kl_mc(CheckRecorder& rec, bool negative_control) {
    const std::size_t draws = 200000;

    // Gaussian posterior against the image prior, one pixel.
    {
        const double mu = 0.3, m2 = 0.04, x = 0.1, eps0_sq = 0.25;
        const GaussianPosterior q{Tensor::full({1}, mu), Tensor::full({1}, m2)};
        const ZPrior prior{Tensor::full({1}, x), eps0_sq};
        double analytic = kl_gaussian(q, prior).item();
        if (negative_control) analytic += 0.05;  // deliberate fault injection
        Rng rng(101);
        double acc = 0.0, acc2 = 0.0;
        for (std::size_t i = 0; i < draws; ++i) {
            const double z = mu + std::sqrt(m2) * rng.normal();
            const double d = norm_logpdf(z, mu, m2) - norm_logpdf(z, x, eps0_sq);
            acc += d;
            acc2 += d * d;
        }
        const double mc = acc / static_cast<double>(draws);
        const double var = std::max(0.0, acc2 / static_cast<double>(draws) - mc * mc);
        const double se = std::sqrt(var / static_cast<double>(draws));
        rec.add("gaussian-kl-vs-mc", std::abs(analytic - mc), 4.0 * se + 1e-9);
    }

    // Inverse-gamma posterior against the variance prior, one pixel.
    {
        const double alpha = 5.0, beta = 3.0, alpha0 = 3.0, beta0 = 2.0;
        const InvGammaPosterior q{Tensor::full({1}, alpha), Tensor::full({1}, beta)};
        const SigmaPrior prior{alpha0, Tensor::full({1}, beta0)};
        const double analytic = kl_inverse_gamma(q, prior).item();
        Rng rng(202);
        double acc = 0.0, acc2 = 0.0;
        for (std::size_t i = 0; i < draws; ++i) {
            const double s = beta / rng.gamma(alpha);
            const double d = invgamma_logpdf_local(s, alpha, beta) -
                             invgamma_logpdf_local(s, alpha0, beta0);
            acc += d;
            acc2 += d * d;
        }
        const double mc = acc / static_cast<double>(draws);
        const double var = std::max(0.0, acc2 / static_cast<double>(draws) - mc * mc);
        const double se = std::sqrt(var / static_cast<double>(draws));
        rec.add("invgamma-kl-vs-mc", std::abs(analytic - mc), 4.0 * se + 1e-9);
    }
}

void check_degradation_dense(CheckRecorder& rec) {
    Rng rng(7);
    const std::size_t n = 12;
    const Tensor z = Tensor::random_uniform({1, n, n}, rng, 0.0, 1.0);
    KernelSpec kspec;
    kspec.kind = KernelKind::anisotropic;
    kspec.theta = 0.7;
    kspec.l1 = 2.5;
    kspec.l2 = 0.8;
    kspec.support = 5;
    const Tensor kernel = make_kernel(kspec);

    double max_err = 0.0;
    for (int s : {1, 2, 3}) {
        DegradationSpec spec;
        spec.task = s == 1 ? Task::denoise : Task::sr;
        spec.scale = s;
        if (s > 1) spec.kernel = kspec;
        const Tensor mine = s == 1 ? blur_reflect(z, kernel) : apply_degradation(z, spec);

        // Dense reference: true convolution (kernel flipped) with mirrored
        // borders, then keep the upper-left pixel of each s x s block.
        auto zv = to_vec(z);
        auto kv = to_vec(kernel);
        const std::ptrdiff_t k = kspec.support, half = k / 2, nn = static_cast<std::ptrdiff_t>(n);
        const std::size_t oh = n / static_cast<std::size_t>(s);
        std::vector<double> ref(oh * oh);
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < oh; ++ox) {
                const std::ptrdiff_t cy = static_cast<std::ptrdiff_t>(oy) * s;
                const std::ptrdiff_t cx = static_cast<std::ptrdiff_t>(ox) * s;
                double acc = 0.0;
                for (std::ptrdiff_t dy = -half; dy <= half; ++dy)
                    for (std::ptrdiff_t dx = -half; dx <= half; ++dx) {
                        const std::size_t sy = mirror_index(cy - dy, nn);
                        const std::size_t sx = mirror_index(cx - dx, nn);
                        acc += zv[sy * n + sx] *
                               kv[static_cast<std::size_t>((dy + half) * k + (dx + half))];
                    }
                ref[oy * oh + ox] = acc;
            }
        auto mv = mine.values();
        for (std::size_t i = 0; i < ref.size(); ++i)
            max_err = std::max(max_err, std::abs(mv[i] - ref[i]));
    }
    rec.add("blur-downsample-vs-dense", max_err, 1e-12);
}

void check_gradients(CheckRecorder& rec) {
    Rng rng(31);

    // Primitive ops: weighted-sum losses so every output coordinate matters.
    {
        FdProbe probe;
        auto check_tensor_op = [&](Tensor x, auto&& loss_fn, std::size_t coords) {
            x.zero_grad();
            Tensor loss_t = loss_fn();
            backward(loss_t);
            std::vector<double> grad(x.grad().begin(), x.grad().end());
            auto& vals = x.mutable_values();
            for (std::size_t i = 0; i < coords && i < vals.size(); ++i) {
                const std::size_t j = (i * 7919) % vals.size();
                fd_coordinate(
                    probe, [&] { return loss_fn().item(); }, &vals[j], grad[j]);
            }
        };

        {
            Tensor x = Tensor::random_uniform({2, 8, 8}, rng, -1.0, 1.0, true);
            Tensor w = Tensor::random_uniform({3, 2, 3, 3}, rng, -0.7, 0.7);
            Tensor b = Tensor::random_uniform({3}, rng, -0.2, 0.2);
            Tensor mask = Tensor::random_uniform({3, 8, 8}, rng, -1.0, 1.0);
            check_tensor_op(
                x, [&] { return sum(mul(conv2d(x, w, b, 1, 1), mask)); }, 6);
        }
        {
            Tensor x = Tensor::random_uniform({1, 8, 8}, rng, -1.0, 1.0, true);
            Tensor mask = Tensor::random_uniform({1, 4, 4}, rng, -1.0, 1.0);
            check_tensor_op(
                x, [&] { return sum(mul(avg_pool2(x), mask)); }, 5);
        }
        {
            Tensor x = Tensor::random_uniform({1, 4, 4}, rng, -1.0, 1.0, true);
            Tensor mask = Tensor::random_uniform({1, 8, 8}, rng, -1.0, 1.0);
            check_tensor_op(
                x, [&] { return sum(mul(nearest_upsample(x, 2), mask)); }, 5);
        }
        {
            Tensor x = Tensor::random_uniform({12}, rng, -2.0, 2.0, true);
            check_tensor_op(
                x, [&] { return sum(softplus(x)); }, 5);
        }
        {
            Tensor x = Tensor::random_uniform({12}, rng, 0.5, 3.0, true);
            check_tensor_op(
                x, [&] { return sum(mul(log(x), digamma_map(x))); }, 5);
        }
        {
            Tensor x = Tensor::random_uniform({12}, rng, 0.5, 3.0, true);
            check_tensor_op(
                x, [&] { return sum(lgamma_map(x)); }, 5);
        }
        rec.add("op-gradients-fd", probe.checked >= 25 ? probe.max_err
                                                       : std::numeric_limits<double>::infinity(),
                1e-6);
    }

    // The full objective with respect to network parameters.
    {
        NetworkConfig nc;
        nc.snet_channels = 3;
        nc.rnet_base_channels = 3;
        nc.rnet_depth = 2;
        Rng init_rng(5);
        NetworkParams params = init_params(nc, init_rng);

        Rng data_rng(6);
        const Tensor x = procedural_image(8, 8, data_rng);
        TrainSample sample;
        sample.x = x;
        NoiseFieldSpec field;
        field.kind = NoiseFieldKind::gradient;
        field.value = 0.15;
        sample.y = add(x, synth_noise(x.shape(), field, data_rng));
        sample.spec.task = Task::denoise;
        const std::vector<TrainSample> batch{sample};
        const HyperParams hp = default_hyperparams(Task::denoise);

        auto eval_loss = [&] {
            Rng mc(9);
            return loss(batch, params, hp, mc, 1).value.item();
        };

        FdProbe probe;
        for (const char* leaf_name : {"snet.conv1.w", "rnet.enc1.conv1.w", "rnet.head.b"}) {
            for (Tensor& leaf : params.trainable()) leaf.zero_grad();
            {
                Rng mc(9);
                backward(loss(batch, params, hp, mc, 1).value);
            }
            Tensor leaf = params.at(leaf_name);
            std::vector<double> grad(leaf.grad().begin(), leaf.grad().end());
            auto& vals = leaf.mutable_values();
            for (std::size_t i = 0; i < 4; ++i) {
                const std::size_t j = (i * 131) % vals.size();
                fd_coordinate(probe, eval_loss, &vals[j], grad[j]);
            }
        }
        rec.add("objective-gradients-fd",
                probe.checked >= 8 ? probe.max_err : std::numeric_limits<double>::infinity(),
                1e-4);
    }
}

}  // namespace

VerifyReport cmd_verify(bool negative_control) {
    VerifyReport report;
    CheckRecorder rec;
    rec.lines = &report.lines;
    check_specfun(rec);
    check_kl_mc(rec, negative_control);
    check_degradation_dense(rec);
    check_gradients(rec);
    report.ok = rec.ok;
    return report;
}

}  // namespace virnet
