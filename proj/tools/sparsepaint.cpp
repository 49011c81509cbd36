// Command-line front end: train / mask / inpaint / evaluate / benchmark.
// Every invocation writes a manifest echoing the command, configuration, and
// produced files, so runs can be reproduced exactly.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "sparsepaint/checkpoint.hpp"
#include "sparsepaint/classic_opt.hpp"
#include "sparsepaint/dataset.hpp"
#include "sparsepaint/diffusion.hpp"
#include "sparsepaint/errors.hpp"
#include "sparsepaint/image.hpp"
#include "sparsepaint/metrics.hpp"
#include "sparsepaint/net.hpp"
#include "sparsepaint/rng.hpp"
#include "sparsepaint/wgan.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sparsepaint;

namespace {

struct usage_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string iso_utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Round-trippable double formatting keeps CSV artifacts byte-stable between
// identically seeded runs.
std::string g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string secs_str(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string percent_str(double fraction) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g%%", fraction * 100.0);
    return buf;
}

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double elapsed() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

struct Manifest {
    json j;

    Manifest(const std::string& command, int argc, char** argv) {
        j["command"] = command;
        json a = json::array();
        for (int i = 0; i < argc; ++i) a.push_back(argv[i]);
        j["argv"] = a;
        j["started_at"] = iso_utc_now();
        j["outputs"] = json::array();
        j["failures"] = json::array();
    }

    void add_output(const fs::path& p) { j["outputs"].push_back(p.string()); }
    void add_failure(const std::string& input, const std::string& error) {
        j["failures"].push_back({{"input", input}, {"error", error}});
    }
    void write(const fs::path& path) {
        j["finished_at"] = iso_utc_now();
        std::ofstream f(path);
        if (!f) throw format_error("cannot write manifest: " + path.string());
        f << j.dump(2) << "\n";
    }
};

std::vector<double> parse_csv_doubles(const std::string& csv, const std::string& what) {
    std::vector<double> out;
    std::size_t start = 0;
    while (start <= csv.size()) {
        const std::size_t comma = csv.find(',', start);
        const std::string item =
            csv.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        try {
            std::size_t pos = 0;
            out.push_back(std::stod(item, &pos));
            if (pos != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw usage_error(what + " list is malformed: " + csv);
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

std::vector<int> parse_csv_ints(const std::string& csv, const std::string& what) {
    std::vector<int> out;
    for (double v : parse_csv_doubles(csv, what)) {
        if (v != std::floor(v)) throw usage_error(what + " entries must be integers: " + csv);
        out.push_back(static_cast<int>(v));
    }
    return out;
}

std::vector<std::string> parse_csv_strings(const std::string& csv) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= csv.size()) {
        const std::size_t comma = csv.find(',', start);
        out.push_back(
            csv.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

// Positional inputs may be image files or directories; directories expand to
// their image files in name order.
std::vector<std::string> expand_inputs(const std::vector<std::string>& inputs) {
    std::vector<std::string> out;
    for (const std::string& in : inputs) {
        if (fs::is_directory(in)) {
            for (const std::string& f : list_dataset_files(in)) out.push_back(f);
        } else {
            out.push_back(in);
        }
    }
    return out;
}

void check_density_arg(double density) {
    if (!(density > 0.0) || !(density <= 1.0)) {
        throw usage_error("density must lie in (0, 1], got " + g17(density));
    }
}

classic_opt::InpaintOperator make_diffusion_op(double cg_tol) {
    diffusion::InpaintOptions opts;
    opts.cg_rel_residual = cg_tol;
    return [opts](const Image& img, const BinaryMask& mask) {
        return diffusion::inpaint_homogeneous(img, mask, opts);
    };
}

std::string ssim_or_na(const Image& a, const Image& b) {
    if (std::min(a.height, a.width) < 11) return "n/a";
    return g17(ssim(a, b));
}

// ---------------------------------------------------------------- train ----

struct TrainOpts {
    std::string data, out;
    std::string mode = "joint";
    std::string binarize = "hard";
    std::string channels_csv = "48,96,192,384";
    int scales = 4;
    int batch = 32;
    int epochs = 1000;
    int n_critic = 1;
    int crop = 0;
    double density = 0.1;
    double alpha = 0.005;
    double beta = 1.0;
    double lr = 5e-5;
    double val_fraction = 0.1;
    double density_lo = 0.1;
    double density_hi = 0.1;
    std::uint64_t seed = 0;
};

int run_train(int argc, char** argv, const TrainOpts& o) {
    check_density_arg(o.density);
    const std::vector<Image> images = load_dataset(o.data, o.crop);
    if (images[0].height != images[0].width) {
        throw dimension_error("training images must be square; use --crop");
    }

    net::NetConfig ncfg;
    ncfg.scales = o.scales;
    ncfg.base_channels = parse_csv_ints(o.channels_csv, "--channels");
    ncfg.image_size = images[0].height;
    ncfg.channels = images[0].channels;

    wgan::TrainConfig tcfg;
    tcfg.alpha = o.alpha;
    tcfg.beta = o.beta;
    tcfg.density = o.density;
    tcfg.lr = o.lr;
    tcfg.batch = o.batch;
    tcfg.epochs = o.epochs;
    tcfg.n_critic = o.n_critic;
    tcfg.seed = o.seed;
    tcfg.binarize = wgan::parse_binarize_mode(o.binarize);
    tcfg.val_fraction = o.val_fraction;
    tcfg.density_lo = o.density_lo;
    tcfg.density_hi = o.density_hi;

    fs::create_directories(o.out);
    Manifest man("train", argc, argv);
    man.j["config"] = {{"data", o.data},         {"out", o.out},
                       {"mode", o.mode},         {"density", o.density},
                       {"alpha", o.alpha},       {"beta", o.beta},
                       {"lr", o.lr},             {"batch", o.batch},
                       {"epochs", o.epochs},     {"n_critic", o.n_critic},
                       {"crop", o.crop},         {"seed", o.seed},
                       {"scales", o.scales},     {"channels", o.channels_csv},
                       {"binarize", o.binarize}, {"val_fraction", o.val_fraction},
                       {"density_lo", o.density_lo}, {"density_hi", o.density_hi},
                       {"image_size", ncfg.image_size}, {"image_channels", ncfg.channels},
                       {"image_count", images.size()}};

    Stopwatch sw;
    const wgan::TrainResult res =
        o.mode == "joint" ? wgan::train_joint(images, ncfg, tcfg)
                          : wgan::train_random_masks(images, ncfg, tcfg);
    const double train_seconds = sw.elapsed();

    const fs::path ckpt_path = fs::path(o.out) / "checkpoint.spw";
    ckpt::save_checkpoint(res.best, ckpt_path.string());
    man.add_output(ckpt_path);

    const fs::path csv_path = fs::path(o.out) / "loss.csv";
    {
        std::ofstream csv(csv_path);
        if (!csv) throw format_error("cannot write " + csv_path.string());
        csv << "epoch,d_loss,g_loss,m_loss,val_mask_loss,density\n";
        for (const wgan::EpochStats& es : res.log) {
            csv << es.epoch << ',' << g17(es.d_loss) << ',' << g17(es.g_loss) << ','
                << g17(es.m_loss) << ',' << g17(es.val_mask_loss) << ',' << g17(es.density)
                << '\n';
        }
    }
    man.add_output(csv_path);

    man.j["best_epoch"] = res.best_epoch;
    man.j["best_val_mask_loss"] = res.best_val_loss;
    man.j["train_seconds"] = train_seconds;
    man.write(fs::path(o.out) / "manifest.json");

    std::cout << "trained " << o.mode << " model for " << o.epochs << " epochs in "
              << secs_str(train_seconds) << " s; best epoch " << res.best_epoch
              << " with validation mask loss " << g17(res.best_val_loss) << "\n"
              << "checkpoint: " << ckpt_path.string() << "\n";
    return 0;
}

// ----------------------------------------------------------------- mask ----

struct MaskOpts {
    std::vector<std::string> inputs;
    std::string method = "ps";
    std::string out;
    std::string checkpoint;
    double density = 0.1;
    double ps_p = 0.1;
    double ps_q = 0.05;
    int nlpe_cycles = 5;
    int nlpe_cands = 10;
    double cg_tol = 1e-6;
    std::uint64_t seed = 0;
};

int run_mask(int argc, char** argv, const MaskOpts& o) {
    if (o.method == "mg" && o.checkpoint.empty()) {
        throw usage_error("--method mg requires --checkpoint");
    }
    check_density_arg(o.density);
    const std::vector<std::string> inputs = expand_inputs(o.inputs);
    if (inputs.empty()) throw usage_error("no input images given");

    std::optional<ckpt::Checkpoint> ck;
    double target_density = o.density;
    if (o.method == "mg") {
        ck = ckpt::load_checkpoint(o.checkpoint);
        target_density = std::stod(ck->meta_value("density"));
    }

    fs::create_directories(o.out);
    Manifest man("mask", argc, argv);
    man.j["config"] = {{"method", o.method},       {"out", o.out},
                       {"checkpoint", o.checkpoint}, {"density", o.density},
                       {"ps_p", o.ps_p},           {"ps_q", o.ps_q},
                       {"nlpe_cycles", o.nlpe_cycles}, {"nlpe_cands", o.nlpe_cands},
                       {"cg_tol", o.cg_tol},       {"seed", o.seed}};

    const classic_opt::InpaintOperator op = make_diffusion_op(o.cg_tol);
    const fs::path csv_path = fs::path(o.out) / "masks.csv";
    std::ofstream csv(csv_path);
    if (!csv) throw format_error("cannot write " + csv_path.string());
    csv << "image,mask,target_density,measured_density,seconds,error\n";

    int failures = 0;
    std::map<std::string, int> name_uses;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const std::string& path = inputs[i];
        try {
            const Image img = load_image(path);
            const std::uint64_t img_seed = derive_seed(o.seed, i);

            BinaryMask mask;
            double elapsed = 0.0;
            if (o.method == "mg") {
                wgan::MaskGenerator gen(*ck, img_seed);
                Stopwatch sw;
                mask = gen(img);
                elapsed = sw.elapsed();
            } else {
                Stopwatch sw;
                classic_opt::SparsifyConfig scfg;
                scfg.density = o.density;
                scfg.p = o.ps_p;
                scfg.q = o.ps_q;
                scfg.seed = img_seed;
                mask = classic_opt::probabilistic_sparsification(img, op, scfg);
                if (o.method == "ps+nlpe") {
                    classic_opt::NlpeConfig ncfg;
                    ncfg.cycles = o.nlpe_cycles;
                    ncfg.candidates_per_swap = o.nlpe_cands;
                    ncfg.seed = derive_seed(img_seed, 1);
                    mask = classic_opt::nlpe(img, mask, op, ncfg);
                }
                elapsed = sw.elapsed();
            }

            std::string base = fs::path(path).stem().string() + "_mask";
            if (name_uses[base]++ > 0) base += "_" + std::to_string(i);
            const fs::path mask_path = fs::path(o.out) / (base + ".pgm");
            save_mask(mask, mask_path.string());
            man.add_output(mask_path);

            csv << path << ',' << mask_path.string() << ',' << g17(target_density) << ','
                << g17(mask.density()) << ',' << secs_str(elapsed) << ",\n";
            std::cout << path << " -> " << mask_path.string() << "  density "
                      << g17(mask.density()) << " (" << percent_str(mask.density()) << "), "
                      << secs_str(elapsed) << " s\n";
        } catch (const std::exception& e) {
            ++failures;
            man.add_failure(path, e.what());
            csv << path << ",,,,," << e.what() << '\n';
            std::cerr << path << ": " << e.what() << "\n";
        }
    }
    csv.close();
    man.add_output(csv_path);
    man.write(fs::path(o.out) / "manifest.json");
    return failures == 0 ? 0 : 1;
}

// -------------------------------------------------------------- inpaint ----

struct InpaintOpts {
    std::string input;
    std::string mask;
    std::string out;
    std::string op = "diffusion";
    std::string checkpoint;
    std::string reference;
    double cg_tol = 1e-6;
    bool jacobi = false;
    std::uint64_t seed = 0;
};

int run_inpaint(int argc, char** argv, const InpaintOpts& o) {
    if (o.op == "mg" && o.checkpoint.empty()) {
        throw usage_error("--operator mg requires --checkpoint");
    }
    const Image img = load_image(o.input);
    const BinaryMask mask = load_mask(o.mask);

    Manifest man("inpaint", argc, argv);
    man.j["config"] = {{"input", o.input},   {"mask", o.mask},       {"out", o.out},
                       {"operator", o.op},   {"checkpoint", o.checkpoint},
                       {"reference", o.reference}, {"cg_tol", o.cg_tol},
                       {"jacobi", o.jacobi}, {"seed", o.seed}};

    Stopwatch sw;
    Image result;
    if (o.op == "mg") {
        const ckpt::Checkpoint ck = ckpt::load_checkpoint(o.checkpoint);
        result = wgan::inpaint_learned(ck, img, mask, o.seed);
    } else {
        diffusion::InpaintOptions opts;
        opts.cg_rel_residual = o.cg_tol;
        opts.jacobi_preconditioner = o.jacobi;
        result = diffusion::inpaint_homogeneous(img, mask, opts);
    }
    const double elapsed = sw.elapsed();

    save_image(result, o.out);
    man.add_output(o.out);
    man.j["seconds"] = elapsed;

    std::cout << "inpainted " << o.input << " -> " << o.out << " (" << secs_str(elapsed)
              << " s)\n";
    if (!o.reference.empty()) {
        const Image ref = load_image(o.reference);
        std::cout << "mae=" << g17(mae(result, ref)) << " psnr=" << g17(psnr(result, ref))
                  << " ssim=" << ssim_or_na(result, ref) << "\n";
    }
    man.write(o.out + ".manifest.json");
    return 0;
}

// ------------------------------------------------------------- evaluate ----

struct EvaluateOpts {
    std::vector<std::string> inputs;
    std::string methods_csv = "ps,ps+nlpe";
    std::string densities_csv = "0.05,0.1,0.2";
    std::string out;
    std::string checkpoint;
    std::string op = "diffusion";
    double ps_p = 0.1;
    double ps_q = 0.05;
    int nlpe_cycles = 5;
    int nlpe_cands = 10;
    double cg_tol = 1e-6;
    std::uint64_t seed = 0;
};

int run_evaluate(int argc, char** argv, const EvaluateOpts& o) {
    const std::vector<std::string> methods = parse_csv_strings(o.methods_csv);
    for (const std::string& m : methods) {
        if (m != "ps" && m != "ps+nlpe" && m != "mg") {
            throw usage_error("unknown method '" + m + "' (expected ps, ps+nlpe, or mg)");
        }
    }
    const bool needs_ckpt =
        o.op == "mg" || std::count(methods.begin(), methods.end(), "mg") > 0;
    if (needs_ckpt && o.checkpoint.empty()) {
        throw usage_error("method or operator 'mg' requires --checkpoint");
    }
    const std::vector<double> densities = parse_csv_doubles(o.densities_csv, "--densities");
    for (double d : densities) check_density_arg(d);

    std::vector<std::string> inputs = expand_inputs(o.inputs);
    if (inputs.empty()) throw usage_error("no input images given");
    std::sort(inputs.begin(), inputs.end());

    std::optional<ckpt::Checkpoint> ck;
    if (needs_ckpt) ck = ckpt::load_checkpoint(o.checkpoint);

    fs::create_directories(o.out);
    Manifest man("evaluate", argc, argv);
    man.j["config"] = {{"methods", o.methods_csv}, {"densities", o.densities_csv},
                       {"out", o.out},             {"checkpoint", o.checkpoint},
                       {"operator", o.op},         {"ps_p", o.ps_p},
                       {"ps_q", o.ps_q},           {"nlpe_cycles", o.nlpe_cycles},
                       {"nlpe_cands", o.nlpe_cands}, {"cg_tol", o.cg_tol},
                       {"seed", o.seed},           {"images", inputs}};

    const classic_opt::InpaintOperator diff_op = make_diffusion_op(o.cg_tol);

    const fs::path detail_path = fs::path(o.out) / "images.csv";
    std::ofstream detail(detail_path);
    if (!detail) throw format_error("cannot write " + detail_path.string());
    detail << "method,density,image,mae,psnr,ssim,seconds,error\n";

    const fs::path table_path = fs::path(o.out) / "evaluate.csv";
    std::ofstream table(table_path);
    if (!table) throw format_error("cannot write " + table_path.string());
    table << "method,density,density_percent,images,failures,mae,psnr,ssim,seconds\n";

    int total_failures = 0;
    std::cout << "method    density   MAE        PSNR       SSIM       seconds\n";
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        const std::string& method = methods[mi];
        for (std::size_t di = 0; di < densities.size(); ++di) {
            const double density = densities[di];
            double sum_mae = 0, sum_psnr = 0, sum_ssim = 0, sum_secs = 0;
            bool ssim_ok = true;
            int ok = 0, failed = 0;
            for (std::size_t ii = 0; ii < inputs.size(); ++ii) {
                const std::string& path = inputs[ii];
                try {
                    const Image img = load_image(path);
                    const std::uint64_t s =
                        derive_seed(derive_seed(derive_seed(o.seed, mi), di), ii);

                    Stopwatch sw;
                    BinaryMask mask;
                    if (method == "mg") {
                        wgan::MaskGenerator gen(*ck, s);
                        mask = gen(img);
                    } else {
                        classic_opt::SparsifyConfig scfg;
                        scfg.density = density;
                        scfg.p = o.ps_p;
                        scfg.q = o.ps_q;
                        scfg.seed = s;
                        mask = classic_opt::probabilistic_sparsification(img, diff_op, scfg);
                        if (method == "ps+nlpe") {
                            classic_opt::NlpeConfig ncfg;
                            ncfg.cycles = o.nlpe_cycles;
                            ncfg.candidates_per_swap = o.nlpe_cands;
                            ncfg.seed = derive_seed(s, 1);
                            mask = classic_opt::nlpe(img, mask, diff_op, ncfg);
                        }
                    }
                    Image recon;
                    if (o.op == "mg") {
                        recon = wgan::inpaint_learned(*ck, img, mask, derive_seed(s, 2));
                    } else {
                        recon = diff_op(img, mask);
                    }
                    const double elapsed = sw.elapsed();

                    const double v_mae = mae(recon, img);
                    const double v_psnr = psnr(recon, img);
                    const bool has_ssim = std::min(img.height, img.width) >= 11;
                    const double v_ssim = has_ssim ? ssim(recon, img) : 0.0;

                    detail << method << ',' << g17(density) << ',' << path << ',' << g17(v_mae)
                           << ',' << g17(v_psnr) << ',' << (has_ssim ? g17(v_ssim) : "") << ','
                           << secs_str(elapsed) << ",\n";
                    sum_mae += v_mae;
                    sum_psnr += v_psnr;
                    sum_ssim += v_ssim;
                    ssim_ok = ssim_ok && has_ssim;
                    sum_secs += elapsed;
                    ++ok;
                } catch (const std::exception& e) {
                    ++failed;
                    ++total_failures;
                    man.add_failure(path, e.what());
                    detail << method << ',' << g17(density) << ',' << path << ",,,,,"
                           << e.what() << '\n';
                }
            }
            const double n = ok > 0 ? ok : 1;
            table << method << ',' << g17(density) << ',' << percent_str(density) << ',' << ok
                  << ',' << failed << ',' << (ok ? g17(sum_mae / n) : "") << ','
                  << (ok ? g17(sum_psnr / n) : "") << ','
                  << (ok && ssim_ok ? g17(sum_ssim / n) : "") << ','
                  << (ok ? secs_str(sum_secs / n) : "") << '\n';
            std::printf("%-9s %-9s %-10.6g %-10.6g %-10.6g %.4f\n", method.c_str(),
                        percent_str(density).c_str(), ok ? sum_mae / n : 0.0,
                        ok ? sum_psnr / n : 0.0, ok && ssim_ok ? sum_ssim / n : 0.0,
                        ok ? sum_secs / n : 0.0);
        }
    }
    detail.close();
    table.close();
    man.add_output(table_path);
    man.add_output(detail_path);
    man.write(fs::path(o.out) / "manifest.json");
    return total_failures == 0 ? 0 : 1;
}

// ------------------------------------------------------------ benchmark ----

struct BenchmarkOpts {
    std::vector<std::string> inputs;
    std::string checkpoint;
    std::string methods_csv = "mg,ps";
    std::string densities_csv = "0.05,0.1,0.2";
    std::string out;
    int reps = 10;
    double ps_p = 0.1;
    double ps_q = 0.05;
    int nlpe_cycles = 5;
    int nlpe_cands = 10;
    double cg_tol = 1e-6;
    std::uint64_t seed = 0;
};

int run_benchmark(int argc, char** argv, const BenchmarkOpts& o) {
    const std::vector<std::string> methods = parse_csv_strings(o.methods_csv);
    for (const std::string& m : methods) {
        if (m != "ps" && m != "ps+nlpe" && m != "mg") {
            throw usage_error("unknown method '" + m + "' (expected ps, ps+nlpe, or mg)");
        }
    }
    const std::vector<double> densities = parse_csv_doubles(o.densities_csv, "--densities");
    for (double d : densities) check_density_arg(d);

    std::vector<std::string> inputs = expand_inputs(o.inputs);
    if (inputs.empty()) throw usage_error("no input images given");
    std::sort(inputs.begin(), inputs.end());

    const ckpt::Checkpoint ck = ckpt::load_checkpoint(o.checkpoint);
    std::vector<Image> images;
    for (const std::string& path : inputs) images.push_back(load_image(path));

    fs::create_directories(o.out);
    Manifest man("benchmark", argc, argv);
    man.j["config"] = {{"checkpoint", o.checkpoint}, {"methods", o.methods_csv},
                       {"densities", o.densities_csv}, {"out", o.out},
                       {"reps", o.reps},             {"ps_p", o.ps_p},
                       {"ps_q", o.ps_q},             {"nlpe_cycles", o.nlpe_cycles},
                       {"nlpe_cands", o.nlpe_cands}, {"cg_tol", o.cg_tol},
                       {"seed", o.seed},             {"images", inputs}};

    const classic_opt::InpaintOperator diff_op = make_diffusion_op(o.cg_tol);

    const fs::path csv_path = fs::path(o.out) / "benchmark.csv";
    std::ofstream csv(csv_path);
    if (!csv) throw format_error("cannot write " + csv_path.string());
    csv << "method,density,density_percent,samples,mean_seconds,stddev_seconds\n";

    std::vector<double> mg_means;
    std::vector<std::pair<double, double>> ps_means; // (density, mean) for the trend report
    std::cout << "method    density   mean_s      stddev_s   (" << o.reps
              << " reps x " << inputs.size() << " images)\n";
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        const std::string& method = methods[mi];
        for (std::size_t di = 0; di < densities.size(); ++di) {
            const double density = densities[di];
            std::vector<double> times;
            for (std::size_t ii = 0; ii < images.size(); ++ii) {
                const Image& img = images[ii];
                for (int rep = 0; rep < o.reps; ++rep) {
                    const std::uint64_t s = derive_seed(
                        derive_seed(derive_seed(derive_seed(o.seed, mi), di), ii),
                        static_cast<std::uint64_t>(rep));
                    if (method == "mg") {
                        wgan::MaskGenerator gen(ck, s);
                        Stopwatch sw;
                        const BinaryMask mask = gen(img);
                        times.push_back(sw.elapsed());
                        (void)mask;
                    } else {
                        classic_opt::SparsifyConfig scfg;
                        scfg.density = density;
                        scfg.p = o.ps_p;
                        scfg.q = o.ps_q;
                        scfg.seed = s;
                        Stopwatch sw;
                        BinaryMask mask = classic_opt::probabilistic_sparsification(
                            img, diff_op, scfg);
                        if (method == "ps+nlpe") {
                            classic_opt::NlpeConfig ncfg;
                            ncfg.cycles = o.nlpe_cycles;
                            ncfg.candidates_per_swap = o.nlpe_cands;
                            ncfg.seed = derive_seed(s, 1);
                            mask = classic_opt::nlpe(img, mask, diff_op, ncfg);
                        }
                        times.push_back(sw.elapsed());
                    }
                }
            }
            double mean = 0;
            for (double t : times) mean += t;
            mean /= static_cast<double>(times.size());
            double var = 0;
            for (double t : times) var += (t - mean) * (t - mean);
            const double stddev =
                times.size() > 1 ? std::sqrt(var / static_cast<double>(times.size() - 1)) : 0.0;

            csv << method << ',' << g17(density) << ',' << percent_str(density) << ','
                << times.size() << ',' << secs_str(mean) << ',' << secs_str(stddev) << '\n';
            std::printf("%-9s %-9s %-11.6f %-10.6f\n", method.c_str(),
                        percent_str(density).c_str(), mean, stddev);
            if (method == "mg") mg_means.push_back(mean);
            if (method == "ps") ps_means.emplace_back(density, mean);
        }
    }
    csv.close();
    man.add_output(csv_path);

    bool cv_ok = true;
    if (!mg_means.empty()) {
        double mean = 0;
        for (double v : mg_means) mean += v;
        mean /= static_cast<double>(mg_means.size());
        double var = 0;
        for (double v : mg_means) var += (v - mean) * (v - mean);
        const double stddev =
            mg_means.size() > 1 ? std::sqrt(var / static_cast<double>(mg_means.size() - 1)) : 0.0;
        const double cv = mean > 0 ? stddev / mean : 0.0;
        cv_ok = cv <= 0.10;
        man.j["mg_cv_across_densities"] = cv;
        man.j["mg_cv_ok"] = cv_ok;
        std::cout << "mask-generator run-time CV across densities: " << g17(cv)
                  << (cv_ok ? " (within 0.10)" : " (EXCEEDS 0.10)") << "\n";
    }
    if (ps_means.size() > 1) {
        bool decreasing = true;
        for (std::size_t i = 1; i < ps_means.size(); ++i) {
            if (ps_means[i].first > ps_means[i - 1].first &&
                ps_means[i].second > ps_means[i - 1].second) {
                decreasing = false;
            }
        }
        man.j["ps_runtime_decreasing_with_density"] = decreasing;
        std::cout << "ps run time " << (decreasing ? "decreases" : "does not decrease")
                  << " as density grows (informational)\n";
    }
    man.write(fs::path(o.out) / "manifest.json");
    return cv_ok ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spatial optimisation toolkit for sparse inpainting data"};
    app.require_subcommand(1);

    TrainOpts to;
    CLI::App* t = app.add_subcommand("train", "Train the mask generator / inpainting networks");
    t->add_option("--data", to.data, "Directory of PGM/PPM training images")->required();
    t->add_option("--out", to.out, "Output directory")->required();
    t->add_option("--mode", to.mode, "Training mode")
        ->check(CLI::IsMember({"joint", "random-mask"}));
    t->add_option("--density", to.density, "Target mask density D")->check(CLI::Range(0.0, 1.0));
    t->add_option("--alpha", to.alpha, "Critic weight in the reconstruction loss");
    t->add_option("--beta", to.beta, "Reconstruction weight in the mask loss");
    t->add_option("--lr", to.lr, "Adam learning rate");
    t->add_option("--batch", to.batch, "Batch size")->check(CLI::PositiveNumber);
    t->add_option("--epochs", to.epochs, "Epoch count")->check(CLI::NonNegativeNumber);
    t->add_option("--n-critic", to.n_critic, "Critic steps per batch")
        ->check(CLI::PositiveNumber);
    t->add_option("--crop", to.crop, "Center-crop images to this size (0 = off)");
    t->add_option("--seed", to.seed, "Base random seed");
    t->add_option("--scales", to.scales, "Hourglass scale count");
    t->add_option("--channels", to.channels_csv, "Per-scale channel counts (CSV)");
    t->add_option("--binarize", to.binarize, "Binarization mode")
        ->check(CLI::IsMember({"hard", "stochastic", "noise"}));
    t->add_option("--val-fraction", to.val_fraction, "Validation split fraction");
    t->add_option("--density-lo", to.density_lo, "Random-mask mode: lower density bound");
    t->add_option("--density-hi", to.density_hi, "Random-mask mode: upper density bound");

    MaskOpts mo;
    CLI::App* m = app.add_subcommand("mask", "Produce inpainting masks for images");
    m->add_option("images", mo.inputs, "Image files or directories")->required();
    m->add_option("--method", mo.method, "Mask construction method")
        ->check(CLI::IsMember({"ps", "ps+nlpe", "mg"}));
    m->add_option("--out", mo.out, "Output directory")->required();
    m->add_option("--checkpoint", mo.checkpoint, "Trained model (required for mg)");
    m->add_option("--density", mo.density, "Target mask density")->check(CLI::Range(0.0, 1.0));
    m->add_option("--ps-p", mo.ps_p, "Sparsification candidate fraction p");
    m->add_option("--ps-q", mo.ps_q, "Sparsification keep fraction q");
    m->add_option("--nlpe-cycles", mo.nlpe_cycles, "Pixel-exchange cycles");
    m->add_option("--nlpe-cands", mo.nlpe_cands, "Candidates per exchange");
    m->add_option("--cg-tol", mo.cg_tol, "Solver relative residual");
    m->add_option("--seed", mo.seed, "Base random seed");

    InpaintOpts io;
    CLI::App* ip = app.add_subcommand("inpaint", "Reconstruct an image from sparse data");
    ip->add_option("image", io.input, "Input image")->required();
    ip->add_option("--mask", io.mask, "Mask file (P5, {0,255})")->required();
    ip->add_option("--out", io.out, "Output image path")->required();
    ip->add_option("--operator", io.op, "Inpainting operator")
        ->check(CLI::IsMember({"diffusion", "mg"}));
    ip->add_option("--checkpoint", io.checkpoint, "Trained model (required for mg)");
    ip->add_option("--reference", io.reference, "Reference image for quality metrics");
    ip->add_option("--cg-tol", io.cg_tol, "Solver relative residual");
    ip->add_flag("--jacobi", io.jacobi, "Use the Jacobi-preconditioned solver");
    ip->add_option("--seed", io.seed, "Seed for the learned operator");

    EvaluateOpts eo;
    CLI::App* ev = app.add_subcommand("evaluate", "Compare mask methods across densities");
    ev->add_option("images", eo.inputs, "Image files or directories")->required();
    ev->add_option("--methods", eo.methods_csv, "Methods to evaluate (CSV)");
    ev->add_option("--densities", eo.densities_csv, "Densities as fractions (CSV)");
    ev->add_option("--out", eo.out, "Output directory")->required();
    ev->add_option("--checkpoint", eo.checkpoint, "Trained model (required for mg)");
    ev->add_option("--operator", eo.op, "Reconstruction operator for the metrics")
        ->check(CLI::IsMember({"diffusion", "mg"}));
    ev->add_option("--ps-p", eo.ps_p, "Sparsification candidate fraction p");
    ev->add_option("--ps-q", eo.ps_q, "Sparsification keep fraction q");
    ev->add_option("--nlpe-cycles", eo.nlpe_cycles, "Pixel-exchange cycles");
    ev->add_option("--nlpe-cands", eo.nlpe_cands, "Candidates per exchange");
    ev->add_option("--cg-tol", eo.cg_tol, "Solver relative residual");
    ev->add_option("--seed", eo.seed, "Base random seed");

    BenchmarkOpts bo;
    CLI::App* be = app.add_subcommand("benchmark", "Time mask construction methods");
    be->add_option("images", bo.inputs, "Image files or directories")->required();
    be->add_option("--checkpoint", bo.checkpoint, "Trained model")->required();
    be->add_option("--methods", bo.methods_csv, "Methods to time (CSV)");
    be->add_option("--densities", bo.densities_csv, "Densities as fractions (CSV)");
    be->add_option("--out", bo.out, "Output directory")->required();
    be->add_option("--reps", bo.reps, "Repetitions per measurement")
        ->check(CLI::Range(3, 1000000));
    be->add_option("--ps-p", bo.ps_p, "Sparsification candidate fraction p");
    be->add_option("--ps-q", bo.ps_q, "Sparsification keep fraction q");
    be->add_option("--nlpe-cycles", bo.nlpe_cycles, "Pixel-exchange cycles");
    be->add_option("--nlpe-cands", bo.nlpe_cands, "Candidates per exchange");
    be->add_option("--cg-tol", bo.cg_tol, "Solver relative residual");
    be->add_option("--seed", bo.seed, "Base random seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (t->parsed()) return run_train(argc, argv, to);
        if (m->parsed()) return run_mask(argc, argv, mo);
        if (ip->parsed()) return run_inpaint(argc, argv, io);
        if (ev->parsed()) return run_evaluate(argc, argv, eo);
        if (be->parsed()) return run_benchmark(argc, argv, bo);
    } catch (const usage_error& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
