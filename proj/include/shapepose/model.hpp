#ifndef SHAPEPOSE_MODEL_HPP
#define SHAPEPOSE_MODEL_HPP

#include <array>
#include <filesystem>
#include <optional>
#include <vector>

#include "shapepose/nn.hpp"
#include "shapepose/scene.hpp"

namespace shapepose::models {

enum class ModelKind { vae, gqn, vaesp };

const char* kind_name(ModelKind k);
ModelKind kind_from_name(const std::string& name);

/// Diagonal Gaussian belief over a latent.
template <class S>
struct Gauss {
    nn::Vec<S> mean;
    nn::Vec<S> log_var;
    int dim() const { return static_cast<int>(mean.size()); }
};

/// Encoder output: `z` is the pose belief (8D) for vaesp and the full latent
/// belief (24D) for vae/gqn; `shape` is only populated for vaesp (16D).
template <class S>
struct EncodeOut {
    Gauss<S> z;
    Gauss<S> shape;
};

struct ArchConfig {
    int image_size = 120;
    int latent_dim = 24;
    int pose_dim = 8;
    int shape_dim = 16;
    std::vector<int> enc_features = {4, 8, 16, 32, 64, 128};
    int dec_c0 = 224;
    /// Output features of decoder conv layers 1..5; layer 6 always emits RGB.
    /// Chosen per model kind so the trainable-parameter totals land on the
    /// published counts; recorded in every checkpoint.
    std::vector<int> dec_features = {128, 28, 14, 12, 4};
    std::vector<int> trans_hidden = {64, 128, 128};
    int gqn_code_dim = 128;
    double leaky_slope = 0.01;

    std::string canonical_json(ModelKind kind) const;
};

ArchConfig default_config(ModelKind kind);

/// Spatial side lengths through the encoder (and, reversed, the decoder
/// upsample targets): image_size halved (ceil) once per conv layer.
std::vector<int> spatial_chain(int image_size, int layers);

template <class S>
nn::Mat<S> image_to_tensor(const Image& img) {
    nn::Mat<S> t(3, img.width * img.height);
    for (int p = 0; p < img.width * img.height; ++p)
        for (int c = 0; c < 3; ++c) t(c, p) = static_cast<S>(img.rgb[p * 3 + c]);
    return t;
}

template <class S>
Image tensor_to_image(const nn::Mat<S>& t, int side) {
    Image img(side, side);
    for (int p = 0; p < side * side; ++p)
        for (int c = 0; c < 3; ++c)
            img.rgb[p * 3 + c] = static_cast<float>(std::clamp(static_cast<double>(t(c, p)), 0.0, 1.0));
    return img;
}

/// Action encoding fed to the networks: 7-vector with the quaternion
/// canonicalized to qw >= 0 (q and -q denote the same rotation).
template <class S>
nn::Vec<S> action_vec(const scene::CameraViewpoint& target) {
    Vec7 v = target.to_vec7();
    if (v[3] < 0) for (int i = 3; i < 7; ++i) v[i] = -v[i];
    nn::Vec<S> out(7);
    for (int i = 0; i < 7; ++i) out[i] = static_cast<S>(v[i]);
    return out;
}

// ---------------------------------------------------------------------------

template <class S>
struct EncoderCache {
    std::array<nn::ConvCache<S>, 6> conv;
    std::array<nn::LeakyReluCache<S>, 6> act;
    std::array<nn::LinearCache<S>, 4> head;
    nn::Vec<S> flat;
};

template <class S>
struct DecoderCache {
    nn::LinearCache<S> code;    // gqn only
    nn::LinearCache<S> bridge;
    std::array<nn::ConvCache<S>, 6> conv;
    std::array<nn::LeakyReluCache<S>, 5> act;
    nn::SigmoidCache<S> sig;
};

template <class S>
struct TransitionCache {
    std::array<nn::LinearCache<S>, 3> hidden;
    std::array<nn::LeakyReluCache<S>, 3> act;
    std::array<nn::LinearCache<S>, 2> head;
};

template <class S>
class Model {
public:
    Model(ModelKind kind, ArchConfig cfg = {});

    ModelKind kind() const { return kind_; }
    const ArchConfig& config() const { return cfg_; }
    nn::ParamStore<S>& params() { return store_; }
    const nn::ParamStore<S>& params() const { return store_; }

    void init(Rng& rng) { store_.init(rng); }
    std::size_t count_parameters() const { return store_.scalar_count(); }

    // --- encode ---------------------------------------------------------
    EncodeOut<S> encode(const nn::Mat<S>& image_chw, EncoderCache<S>& cache) const;
    EncodeOut<S> encode(const Image& img) const;
    /// Backward through the encoder; gz/gshape are gradients on the belief
    /// parameters (mean then log_var).
    void encode_backward(const EncoderCache<S>& cache, const Gauss<S>& gz, const Gauss<S>& gshape);

    // --- decode ---------------------------------------------------------
    /// vae: decode(z24). vaesp: decode(pose8 ++ shape16). gqn: decode(z24, view).
    nn::Mat<S> decode(const nn::Vec<S>& latent, const nn::Vec<S>* viewpoint,
                      DecoderCache<S>& cache) const;
    Image decode_image(const nn::Vec<S>& latent, const nn::Vec<S>* viewpoint = nullptr) const;
    /// Returns the gradient with respect to the latent input (the viewpoint
    /// gradient for gqn is dropped).
    nn::Vec<S> decode_backward(const DecoderCache<S>& cache, const nn::Mat<S>& gout);

    // --- transition -----------------------------------------------------
    Gauss<S> transition(const nn::Vec<S>& latent, const nn::Vec<S>& action,
                        TransitionCache<S>& cache) const;
    Gauss<S> transition(const nn::Vec<S>& latent, const nn::Vec<S>& action) const;
    /// Backward; gbelief carries gradients on (mean, log_var). Returns the
    /// gradient with respect to the input latent (action part dropped).
    nn::Vec<S> transition_backward(const TransitionCache<S>& cache, const Gauss<S>& gbelief);

    int encode_z_dim() const { return kind_ == ModelKind::vaesp ? cfg_.pose_dim : cfg_.latent_dim; }
    int decode_latent_dim() const { return cfg_.latent_dim; }

private:
    ModelKind kind_;
    ArchConfig cfg_;
    nn::ParamStore<S> store_;

    // encoder
    std::array<nn::Conv3x3<S>, 6> enc_conv_;
    std::vector<nn::Linear<S>> enc_heads_;  // 2 for vae/gqn, 4 for vaesp (pose mu, pose lv, shape mu, shape lv)
    int flat_dim_ = 0;

    // decoder
    nn::Linear<S> gqn_code_;
    nn::Linear<S> dec_bridge_;
    std::vector<nn::BilinearUpsample<S>> dec_up_;
    std::array<nn::Conv3x3<S>, 6> dec_conv_;
    std::vector<int> dec_sizes_;

    // transition (absent for gqn)
    std::array<nn::Linear<S>, 3> trans_hidden_;
    std::array<nn::Linear<S>, 2> trans_heads_;

    nn::LeakyRelu<S> act_{0.01};
    nn::Sigmoid<S> sigmoid_;
};

/// Reparameterized sample: mean + exp(0.5 log_var) * eps, eps ~ N(0, I).
template <class S>
nn::Vec<S> reparam_sample(const Gauss<S>& belief, Rng& rng) {
    std::normal_distribution<double> norm(0.0, 1.0);
    nn::Vec<S> eps(belief.dim());
    for (int i = 0; i < belief.dim(); ++i) eps[i] = static_cast<S>(norm(rng));
    return belief.mean.array() + (belief.log_var.array() * S(0.5)).exp() * eps.array();
}

/// Same sample with caller-provided noise (used for gradient checks and
/// common-random-number planning).
template <class S>
nn::Vec<S> reparam_with_noise(const Gauss<S>& belief, const nn::Vec<S>& eps) {
    if (eps.size() != belief.mean.size()) throw InvalidInput("noise dimension mismatch");
    return belief.mean.array() + (belief.log_var.array() * S(0.5)).exp() * eps.array();
}

// ---------------------------------------------------------------------------
// Checkpoints: single binary file with a JSON header (architecture config,
// training metadata, config hash) followed by named float64 arrays, row-major.

struct TrainMeta {
    std::uint64_t seed = 0;
    int epoch = 0;
    std::vector<double> multipliers;
    double recon_ema = 0.0;
    std::string category;
};

template <class S>
void save_checkpoint(const std::filesystem::path& path, const Model<S>& model, const TrainMeta& meta);

template <class S>
std::pair<Model<S>, TrainMeta> load_checkpoint(const std::filesystem::path& path);

using Modelf = Model<float>;
using Modeld = Model<double>;

}  // namespace shapepose::models

#endif
