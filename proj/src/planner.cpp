#include "shapepose/planner.hpp"

#include <cmath>

namespace shapepose::plan {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;

Gauss<double> to_double(const Gauss<float>& g) {
    return {g.mean.cast<double>(), g.log_var.cast<double>()};
}
}  // namespace

double gaussian_nll(const Eigen::VectorXd& x, const Gauss<double>& belief) {
    if (x.size() != belief.mean.size()) throw InvalidInput("gaussian_nll: dimension mismatch");
    const Eigen::ArrayXd lv = belief.log_var.array();
    const Eigen::ArrayXd d = (x - belief.mean).array();
    return 0.5 * (kLog2Pi + lv + d.square() * (-lv).exp()).sum();
}

double efe_score_belief(const Gauss<double>& predicted, const PreferredState& pref,
                        int mc_samples, Rng& rng) {
    if (mc_samples < 1) throw InvalidInput("mc_samples must be >= 1");
    std::normal_distribution<double> norm(0.0, 1.0);
    double acc = 0.0;
    for (int m = 0; m < mc_samples; ++m) {
        Eigen::VectorXd eps(predicted.mean.size());
        for (int i = 0; i < eps.size(); ++i) eps[i] = norm(rng);
        const Eigen::VectorXd sample =
            predicted.mean.array() + (predicted.log_var.array() * 0.5).exp() * eps.array();
        acc += gaussian_nll(sample, pref.belief);
    }
    return acc / mc_samples;
}

ScoredAction select_action_with(const BeliefFn& predict, const PreferredState& pref,
                                const PlannerConfig& config) {
    if (config.n_candidates < 1) throw InvalidInput("n_candidates must be >= 1");
    Rng cand_rng(derive_seed(config.seed, 7001));
    std::vector<scene::CameraViewpoint> candidates;
    candidates.reserve(config.n_candidates);
    for (int i = 0; i < config.n_candidates; ++i) candidates.push_back(config.candidates.sample(cand_rng));

    ScoredAction result;
    result.scores.resize(config.n_candidates);
    for (int i = 0; i < config.n_candidates; ++i) {
        const Gauss<double> pred = predict(candidates[i]);
        Rng noise(derive_seed(config.seed, 9000 + static_cast<std::uint64_t>(i)));
        result.scores[i] = efe_score_belief(pred, pref, config.mc_samples, noise);
    }
    int best = 0;
    for (int i = 1; i < config.n_candidates; ++i)
        if (result.scores[i] < result.scores[best]) best = i;  // ties keep the lowest index
    result.selected_index = best;
    result.action.target = candidates[best];
    return result;
}

PreferredState set_preference(const models::Modelf& model, const Image& preferred_obs) {
    const auto enc = model.encode(preferred_obs);
    return {to_double(enc.z)};
}

BeliefFn make_belief_fn(const models::Modelf& model, const Image& current_obs) {
    const auto enc = model.encode(current_obs);
    const nn::Vec<float> z_mean = enc.z.mean;

    if (model.kind() == models::ModelKind::gqn) {
        // No transition model: imagine the render at the queried viewpoint and
        // re-encode it; the resulting belief scores the candidate.
        return [&model, z_mean](const scene::CameraViewpoint& target) {
            const nn::Vec<float> vp = models::action_vec<float>(target);
            const Image imagined = model.decode_image(z_mean, &vp);
            return to_double(model.encode(imagined).z);
        };
    }
    return [&model, z_mean](const scene::CameraViewpoint& target) {
        return to_double(model.transition(z_mean, models::action_vec<float>(target)));
    };
}

double efe_score(const models::Modelf& model, const Image& current_obs,
                 const scene::Action& action, const PreferredState& pref, Rng& rng,
                 int mc_samples) {
    return efe_score_belief(make_belief_fn(model, current_obs)(action.target), pref, mc_samples, rng);
}

ScoredAction select_action(const models::Modelf& model, const Image& current_obs,
                           const PreferredState& pref, const PlannerConfig& config) {
    return select_action_with(make_belief_fn(model, current_obs), pref, config);
}

}  // namespace shapepose::plan
