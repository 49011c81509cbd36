#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "sparsepaint/checkpoint.hpp"
#include "sparsepaint/graph.hpp"
#include "sparsepaint/image.hpp"
#include "sparsepaint/net.hpp"

namespace sparsepaint::wgan {

enum class TrainMode { joint, random_mask };

struct TrainConfig {
    double alpha = 0.005;   // critic weight in the reconstruction loss
    double beta = 1.0;      // reconstruction weight in the mask loss
    double density = 0.1;   // target mask density
    double lr = 5e-5;
    int batch = 32;
    int epochs = 1000;
    int n_critic = 1;
    std::uint64_t seed = 0;
    ad::BinarizationMode binarize = ad::BinarizationMode::hard_rounding;
    // The 1-norm terms in the reconstruction/mask losses divided by the value
    // count (true) or left unnormalised (false).
    bool normalize_mae = true;
    // Mask density computed over spatial pixels (true) or over all colour
    // values (false).
    bool density_over_spatial = true;
    double val_fraction = 0.1;
    // random-mask training only: per-sample density drawn uniformly from
    // [density_lo, density_hi].
    double density_lo = 0.1;
    double density_hi = 0.1;

    void validate() const;
};

struct EpochStats {
    int epoch = 0; // 1-based
    double d_loss = 0.0;
    double g_loss = 0.0;
    double m_loss = 0.0;
    double val_mask_loss = 0.0;
    double density = 0.0; // mean produced (or drawn) mask density
};

struct TrainResult {
    ckpt::Checkpoint best;
    int best_epoch = 0;
    double best_val_loss = 0.0;
    std::vector<EpochStats> log;
};

// Raised when any training loss turns non-finite; carries the coordinates
// and the last finite snapshot.
struct training_diverged : std::runtime_error {
    training_diverged(const std::string& msg, int epoch_, int batch_, ckpt::Checkpoint last)
        : std::runtime_error(msg), epoch(epoch_), batch(batch_), last_finite(std::move(last)) {}
    int epoch;
    int batch;
    ckpt::Checkpoint last_finite;
};

// Alternating per-batch updates of critic, generator, and mask generator;
// checkpoints the epoch with the lowest validation mask loss. The stored
// validation loss is computed with float32-quantised weights — exactly the
// weights a reloaded checkpoint yields — so save/load/evaluate round-trips
// bit-exactly.
TrainResult train_joint(const std::vector<Image>& images, const net::NetConfig& ncfg,
                        const TrainConfig& tcfg);

// Baseline mode: the mask generator is disabled and masks are per-sample
// i.i.d. coin flips with density uniform in [density_lo, density_hi];
// trains the generator and critic only.
TrainResult train_random_masks(const std::vector<Image>& images, const net::NetConfig& ncfg,
                               const TrainConfig& tcfg);

// Recomputes the validation mask loss the checkpoint was selected by,
// given the same dataset; bit-equal to meta "val_mask_loss".
double evaluate_validation_loss(const ckpt::Checkpoint& c, const std::vector<Image>& images);

// Single-image inference engines. Both rebuild their seed maps from `seed`
// on every call, so repeated calls are deterministic.
class MaskGenerator {
public:
    MaskGenerator(const ckpt::Checkpoint& c, std::uint64_t seed);
    ~MaskGenerator();
    BinaryMask operator()(const Image& img);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

class LearnedInpainter {
public:
    LearnedInpainter(const ckpt::Checkpoint& c, std::uint64_t seed);
    ~LearnedInpainter();
    // Known pixels are copied bit-exactly; the rest comes from the generator.
    Image operator()(const Image& img, const BinaryMask& mask);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

BinaryMask generate_mask(const ckpt::Checkpoint& c, const Image& img, std::uint64_t seed);
Image inpaint_learned(const ckpt::Checkpoint& c, const Image& img, const BinaryMask& mask,
                      std::uint64_t seed);

// Per-sample critic scores for a batch of images and their mask planes.
using Critic = std::function<std::vector<double>(const ad::Tensor& images, const ad::Tensor& masks)>;

// Scalar loss formulas (batch means), the reference the training graph is
// tested against.
double discriminator_loss(const Critic& d, const ad::Tensor& u, const ad::Tensor& f,
                          const ad::Tensor& b);
double generator_loss(const Critic& d, const ad::Tensor& u, const ad::Tensor& f,
                      const ad::Tensor& b, double alpha, bool normalize_mae = true);
double mask_loss(const ad::Tensor& b, const ad::Tensor& u, const ad::Tensor& f,
                 double target_density, double beta, bool normalize_mae = true,
                 bool density_over_spatial = true);

Critic make_critic(const ckpt::Checkpoint& c);

// Checkpoint metadata helpers shared with the CLI.
net::NetConfig net_config_from(const ckpt::Checkpoint& c);
TrainConfig train_config_from(const ckpt::Checkpoint& c);
TrainMode train_mode_from(const ckpt::Checkpoint& c);
const char* binarize_mode_name(ad::BinarizationMode mode);
ad::BinarizationMode parse_binarize_mode(const std::string& name);

// Layout conversions between image types and NCHW tensors.
void image_to_tensor(const Image& img, ad::Tensor& t, int sample);
Image tensor_to_image(const ad::Tensor& t, int sample);
void mask_to_tensor(const BinaryMask& mask, ad::Tensor& t, int sample);
BinaryMask tensor_to_mask(const ad::Tensor& t, int sample);

} // namespace sparsepaint::wgan
