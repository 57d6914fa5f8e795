#ifndef SHAPEPOSE_PLANNER_HPP
#define SHAPEPOSE_PLANNER_HPP

#include <functional>

#include "shapepose/model.hpp"

namespace shapepose::plan {

using models::Gauss;

struct PlannerConfig {
    int n_candidates = 10000;
    int mc_samples = 3;          ///< latent samples per candidate
    std::uint64_t seed = 0;
    scene::ViewpointSampler candidates;  ///< candidate-action distribution
};

struct PreferredState {
    Gauss<double> belief;  ///< pose belief for vaesp, full latent belief otherwise
};

/// Negative log density of x under a diagonal Gaussian:
/// 0.5 * sum(log(2 pi) + log_var + (x - mean)^2 / exp(log_var)).
double gaussian_nll(const Eigen::VectorXd& x, const Gauss<double>& belief);

/// Predicted next-latent belief for a candidate action; lets the scoring core
/// run against hand-built models in tests.
using BeliefFn = std::function<Gauss<double>(const scene::CameraViewpoint& target)>;

/// Monte Carlo EFE: mean over mc_samples reparameterized draws of the NLL
/// under the preferred-state belief. rng drives the draws.
double efe_score_belief(const Gauss<double>& predicted, const PreferredState& pref,
                        int mc_samples, Rng& rng);

struct ScoredAction {
    scene::Action action;
    std::vector<double> scores;  ///< all candidate scores, in candidate order
    int selected_index = -1;
};

/// Samples candidates from the configured distribution, scores each with the
/// belief function, returns the argmin (ties to the lowest index). Candidate
/// noise seeds derive from (seed, candidate index), so scoring is
/// order-independent and reproducible.
ScoredAction select_action_with(const BeliefFn& predict, const PreferredState& pref,
                                const PlannerConfig& config);

// --- model-backed front ends ----------------------------------------------

PreferredState set_preference(const models::Modelf& model, const Image& preferred_obs);

/// Belief function for one planning episode: encodes the current observation
/// once and closes over it.
BeliefFn make_belief_fn(const models::Modelf& model, const Image& current_obs);

double efe_score(const models::Modelf& model, const Image& current_obs,
                 const scene::Action& action, const PreferredState& pref, Rng& rng,
                 int mc_samples = 3);

ScoredAction select_action(const models::Modelf& model, const Image& current_obs,
                           const PreferredState& pref, const PlannerConfig& config);

}  // namespace shapepose::plan

#endif
