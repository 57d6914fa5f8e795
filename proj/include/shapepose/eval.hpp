#ifndef SHAPEPOSE_EVAL_HPP
#define SHAPEPOSE_EVAL_HPP

#include <functional>

#include "shapepose/dataset.hpp"
#include "shapepose/planner.hpp"

namespace shapepose::eval {

struct MetricSummary {
    double mean = 0.0;
    double std_dev = 0.0;
    int n = 0;
    std::vector<double> per_sample;

    static MetricSummary from_samples(std::vector<double> samples);
};

/// Mean squared difference over all 120*120*3 values in [0,1].
double mse(const Image& a, const Image& b);

/// SSIM on luma (0.299, 0.587, 0.114), 11x11 Gaussian window sigma 1.5,
/// K1=0.01, K2=0.03, dynamic range 1, averaged over all full windows.
double ssim(const Image& a, const Image& b);

enum class SignificanceTest { welch_t, mann_whitney, paired_t };

/// Two-sided p-value comparing two equal-length paired sample vectors.
double significance(const std::vector<double>& errors_a, const std::vector<double>& errors_b,
                    SignificanceTest test = SignificanceTest::welch_t);

// ---------------------------------------------------------------------------

/// One-step prediction over fresh viewpoints of the given (held-out) objects:
/// encode o_t, transition under a random action (gqn: condition the decoder on
/// the queried viewpoint), decode, compare against the ground-truth render.
struct OneStepResult {
    MetricSummary mse_summary;
    MetricSummary ssim_summary;
};
OneStepResult eval_one_step(const models::Modelf& model,
                            const std::vector<scene::ObjectSpec>& test_specs,
                            int n_samples, std::uint64_t seed,
                            const scene::ViewpointSampler& sampler);

/// Reach-preferred-viewpoint trials: the preferred image depicts a different
/// instance; per-trial error is the pixel MSE between the render after the
/// chosen action and the environment object's render at the preferred
/// viewpoint. A uniform-random action runs on the identical trial for the
/// paired baseline.
struct ReachResult {
    MetricSummary planner;
    MetricSummary random_baseline;
    double p_value = 1.0;  ///< paired t-test, planner vs baseline
};
ReachResult eval_reach(const models::Modelf& model, const std::vector<scene::ObjectSpec>& specs,
                       int n_trials, const plan::PlannerConfig& planner_config,
                       std::uint64_t seed);

// ---------------------------------------------------------------------------

struct DisentanglementProfile {
    /// (sweep sample, latent dim) encoder means over each sweep.
    Eigen::MatrixXd fixed_shape;  ///< pose varies, shape fixed
    Eigen::MatrixXd fixed_pose;   ///< shape varies, pose fixed
    double score = 0.5;
};

using EncoderFn = std::function<Eigen::VectorXd(const Image&)>;

/// Profile from caller-supplied sweep images; pose dims are 0..pose_dim-1 by
/// the canonical layout. score = 0.5 * [mean over pose dims of Vp/(Vp+Vs)
/// + mean over shape dims of Vs/(Vp+Vs)], dead dims contribute 0.5.
DisentanglementProfile disentanglement_profile(const EncoderFn& encoder,
                                               const std::vector<Image>& fixed_shape_sweep,
                                               const std::vector<Image>& fixed_pose_sweep,
                                               int pose_dim = 8);

/// Convenience: builds both sweeps (n_sweep renders each) from the procedural
/// generator for the model's category and profiles the model's encoder.
DisentanglementProfile disentanglement_profile(const models::Modelf& model,
                                               scene::Category category, int n_sweep,
                                               std::uint64_t seed,
                                               const scene::ViewpointSampler& sampler);

/// Fig-6-style recombination grid for a vaesp model: cell (i,j) decodes the
/// pose latent of pose_sources[j] with the shape latent of shape_sources[i];
/// row 0 and column 0 show the source observations.
Image recombination_grid(const models::Modelf& model, const std::vector<Image>& shape_sources,
                         const std::vector<Image>& pose_sources);

}  // namespace shapepose::eval

#endif
