#ifndef SHAPEPOSE_TRAINING_HPP
#define SHAPEPOSE_TRAINING_HPP

#include <filesystem>
#include <fstream>
#include <functional>
#include <utility>

#include "shapepose/dataset.hpp"
#include "shapepose/model.hpp"

namespace shapepose::train {

using models::Gauss;

struct TrainingConfig {
    scene::Category category = scene::Category::bottle;
    double mse_tolerance = 350.0;   ///< per-image sum of squared errors
    double learning_rate = 1e-4;
    double lr_decay = 1.0;   ///< per-epoch multiplicative learning-rate factor
    int lr_decay_start = 0;  ///< first epoch the decay applies to
    double multiplier_lr = 1e-2;
    int batch_size = 8;             ///< instance pairs per step
    int epochs = 50;
    int steps_per_epoch = 20;
    double swap_probability = 0.5;
    std::uint64_t seed = 0;
    bool use_prior_kl = true;
    bool use_consistency_kl = true;
    double consistency_weight = 1.0;
    /// Pair partners are observed at identical viewpoints, so their pose
    /// beliefs should agree; this weighs the symmetric KL enforcing that.
    double pose_align_weight = 4.0;
    /// One object's shape belief should not depend on the viewpoint it was
    /// encoded from; symmetric KL between the t and t+1 shape beliefs.
    double shape_const_weight = 4.0;
    /// Prior-KL scale on the vaesp pose block; below 1 it lets the pose code
    /// keep a macroscopic response instead of collapsing to the prior.
    double pose_prior_weight = 1.0;
    double ema_decay = 0.99;
    int holdout_instances = 0;      ///< trailing instances excluded from training
    int checkpoint_every = 10;

    void validate() const {
        if (mse_tolerance <= 0) throw InvalidInput("tolerance must be positive");
        if (swap_probability < 0 || swap_probability > 1)
            throw InvalidInput("swap probability outside [0,1]");
    }
};

/// Appendix tolerances per category: bottle 350, bowl 250, can 280, mug 520.
inline double tolerance_for(scene::Category c) {
    switch (c) {
        case scene::Category::bottle: return 350.0;
        case scene::Category::bowl: return 250.0;
        case scene::Category::can: return 280.0;
        case scene::Category::mug: return 520.0;
    }
    throw InvalidInput("unknown category");
}

struct LossReport {
    double reconstruction = 0.0;            ///< mean per-image sum of squared errors
    Eigen::VectorXd kl_per_dim;             ///< per-latent-dim KL regularization
    std::vector<double> lagrange_multipliers;
    double total = 0.0;

    double kl_total() const { return kl_per_dim.size() ? kl_per_dim.sum() : 0.0; }
    bool finite() const {
        return std::isfinite(reconstruction) && std::isfinite(total) &&
               (kl_per_dim.size() == 0 || kl_per_dim.allFinite());
    }
};

/// Per-dimension KL(q||p) between diagonal Gaussians.
template <class S>
nn::Vec<S> kl_diag_gaussian(const Gauss<S>& q, const Gauss<S>& p) {
    if (q.dim() != p.dim()) throw InvalidInput("kl_diag_gaussian: dimension mismatch");
    return (S(0.5) * (p.log_var.array() - q.log_var.array() +
                      ((q.log_var.array().exp() + (q.mean - p.mean).array().square()) /
                       p.log_var.array().exp()) -
                      S(1)))
        .matrix();
}

// ---------------------------------------------------------------------------
// Shape-latent swap

template <class S>
struct PoseShapeLatent {
    nn::Vec<S> pose;
    nn::Vec<S> shape;
    int view_index = -1;
};

template <class S>
struct SwapOutcome {
    std::vector<PoseShapeLatent<S>> latents;
    std::vector<int> target_map;       ///< target_map[i] = whose render supervises slot i
    std::vector<bool> swapped_pair;    ///< per entry of `pairs`
};

/// Exchanges shape vectors within each pair with the given probability; pose
/// vectors are untouched. Pairs must sit at the identical view index, which is
/// what makes the partner's stored render a valid supervision target.
template <class S>
SwapOutcome<S> swap_shape_latents(const std::vector<PoseShapeLatent<S>>& batch,
                                  const std::vector<std::pair<int, int>>& pairs,
                                  Rng& rng, double swap_probability) {
    if (swap_probability < 0 || swap_probability > 1)
        throw InvalidInput("swap probability outside [0,1]");
    SwapOutcome<S> out;
    out.latents = batch;
    out.target_map.resize(batch.size());
    for (size_t i = 0; i < batch.size(); ++i) out.target_map[i] = static_cast<int>(i);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (const auto& [a, b] : pairs) {
        if (a < 0 || b < 0 || a >= static_cast<int>(batch.size()) || b >= static_cast<int>(batch.size()))
            throw InvalidInput("swap pair index out of range");
        if (batch[a].view_index != batch[b].view_index)
            throw InvalidInput("swap pair without matching view index");
        const bool do_swap = uni(rng) < swap_probability;
        out.swapped_pair.push_back(do_swap);
        if (do_swap) {
            std::swap(out.latents[a].shape, out.latents[b].shape);
            out.target_map[a] = b;
            out.target_map[b] = a;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Free-energy objective

/// One (o_t, a, o_{t+1}) transition drawn from the dataset.
template <class S>
struct BatchItem {
    nn::Mat<S> obs_t, obs_next;       // (3, H*W) tensors
    const Image* img_t = nullptr;     // originals, used as decode targets
    const Image* img_next = nullptr;
    nn::Vec<S> action;                // 7-vector, canonical quaternion sign
    nn::Vec<S> view_t;                // needed by the gqn decoder
    int instance = -1;
    int view_index_t = -1, view_index_next = -1;
};

template <class S>
struct PairedBatch {
    std::vector<BatchItem<S>> items;
    std::vector<std::pair<int, int>> pairs;  ///< indices into items, same view pair
};

/// Noise used for reparameterized samples: either drawn from an rng or played
/// back from a fixed list (gradient checks need the latter).
template <class S>
struct NoiseSource {
    Rng* rng = nullptr;
    const std::vector<nn::Vec<S>>* fixed = nullptr;
    size_t cursor = 0;

    nn::Vec<S> normal(int d) {
        if (fixed) {
            if (cursor >= fixed->size() || (*fixed)[cursor].size() != d)
                throw InvalidInput("fixed noise list exhausted or mismatched");
            return (*fixed)[cursor++];
        }
        std::normal_distribution<double> nd(0.0, 1.0);
        nn::Vec<S> eps(d);
        for (int i = 0; i < d; ++i) eps[i] = static_cast<S>(nd(*rng));
        return eps;
    }
};

struct MultiplierState {
    std::vector<double> lambda{1.0};  ///< [0] weighs the reconstruction constraint
    double recon_ema = 0.0;
    bool ema_init = false;
};

/// Dual ascent on the reconstruction constraint, on an EMA of the
/// reconstruction error; multipliers are clipped to stay non-negative.
inline MultiplierState constrained_update(const LossReport& report, MultiplierState state,
                                          const TrainingConfig& config) {
    for (double m : state.lambda)
        if (m < 0) throw InvalidInput("multipliers must be non-negative");
    const double r = report.reconstruction;
    state.recon_ema = state.ema_init ? config.ema_decay * state.recon_ema + (1 - config.ema_decay) * r : r;
    state.ema_init = true;
    const double violation = state.recon_ema - config.mse_tolerance;
    state.lambda[0] = std::max(0.0, state.lambda[0] + config.multiplier_lr * violation);
    return state;
}

/// Evaluates the constrained free energy on a batch and, when asked,
/// accumulates parameter gradients. total = sum(KL) + lambda * (recon - tol).
template <class S>
LossReport free_energy_eval(models::Model<S>& model, const PairedBatch<S>& batch,
                            const TrainingConfig& config, NoiseSource<S>& noise,
                            const MultiplierState& mult, bool with_grad) {
    using models::EncodeOut;
    using models::ModelKind;
    const int N = static_cast<int>(batch.items.size());
    if (N == 0) throw InvalidInput("empty batch");
    const auto kind = model.kind();
    const int zdim = model.encode_z_dim();
    const int sdim = kind == ModelKind::vaesp ? model.config().shape_dim : 0;
    const int ldim = model.config().latent_dim;
    const double lambda = mult.lambda.at(0);
    const S inv_n = S(1.0 / N);

    struct ItemWork {
        models::EncoderCache<S> enc_t, enc_n;
        EncodeOut<S> out_t, out_n;
        nn::Vec<S> eps_z_t, eps_shape, eps_z_n;
        nn::Vec<S> z_t, shape_t, z_n;      // samples
        models::TransitionCache<S> trans;
        Gauss<S> pred;
        models::DecoderCache<S> dec_t, dec_n;
        nn::Mat<S> y_t, y_n;
        int shape_from = -1;               // owner of the shape sample fed to decode
        nn::Vec<S> g_z_t, g_shape, g_z_n;  // sample grads
        Gauss<S> g_bt_z, g_bt_s, g_bn_z, g_bn_s, g_pred;  // belief grads
    };
    std::vector<ItemWork> work(N);

    // ---- forward: encode + sample -------------------------------------
    for (int i = 0; i < N; ++i) {
        auto& w = work[i];
        const auto& it = batch.items[i];
        w.out_t = model.encode(it.obs_t, w.enc_t);
        w.eps_z_t = noise.normal(zdim);
        w.z_t = models::reparam_with_noise(w.out_t.z, w.eps_z_t);
        if (kind == ModelKind::vaesp) w.eps_shape = noise.normal(sdim);
        if (kind != ModelKind::gqn) {
            w.out_n = model.encode(it.obs_next, w.enc_n);
            w.eps_z_n = noise.normal(zdim);
            w.pred = model.transition(w.z_t, it.action, w.trans);
            // the next frame is decoded from the *predicted* belief, so its
            // reconstruction forces information through the transition
            w.z_n = models::reparam_with_noise(w.pred, w.eps_z_n);
        }
        // shape constancy: the shape sample comes from the *other* time step's
        // encoding, so viewpoint information leaking into the shape block
        // corrupts the o_t reconstruction instead of helping it
        if (kind == ModelKind::vaesp)
            w.shape_t = models::reparam_with_noise(w.out_n.shape, w.eps_shape);
        w.shape_from = i;
    }

    // ---- swap (vaesp only) --------------------------------------------
    // The swap decision is drawn from the noise source (probit of a standard
    // normal draw), so fixed-noise evaluations replay identical decisions.
    std::vector<int> target_map(N);
    for (int i = 0; i < N; ++i) target_map[i] = i;
    if (kind == ModelKind::vaesp) {
        for (const auto& [a, b] : batch.pairs) {
            if (batch.items[a].view_index_t != batch.items[b].view_index_t ||
                batch.items[a].view_index_next != batch.items[b].view_index_next)
                throw InvalidInput("swap pair without matching view indices");
            const nn::Vec<S> u = noise.normal(1);
            // map a standard normal draw to a uniform via the probit trick:
            // P(u < Phi^{-1}(p)) = p; cheap and reproducible from the same stream
            const double unif = 0.5 * std::erfc(-static_cast<double>(u[0]) / std::sqrt(2.0));
            if (unif < config.swap_probability) {
                std::swap(work[a].shape_t, work[b].shape_t);
                work[a].shape_from = b;
                work[b].shape_from = a;
                target_map[a] = b;
                target_map[b] = a;
            }
        }
    }

    // ---- decode + losses ----------------------------------------------
    LossReport report;
    report.kl_per_dim = Eigen::VectorXd::Zero(ldim);
    report.lagrange_multipliers = mult.lambda;
    double recon_sum = 0.0;

    for (int i = 0; i < N; ++i) {
        auto& w = work[i];
        const auto& it = batch.items[i];
        const auto& tgt = batch.items[target_map[i]];

        nn::Vec<S> dec_in_t, dec_in_n;
        if (kind == ModelKind::vaesp) {
            dec_in_t = nn::Vec<S>(ldim);
            dec_in_t << w.z_t, w.shape_t;
            dec_in_n = nn::Vec<S>(ldim);
            dec_in_n << w.z_n, w.shape_t;  // one shared shape sample over time
        } else {
            dec_in_t = w.z_t;
            dec_in_n = kind == ModelKind::gqn ? w.z_t : w.z_n;
        }
        const nn::Vec<S>* vp_t = kind == ModelKind::gqn ? &it.view_t : nullptr;
        const nn::Vec<S>* vp_n = kind == ModelKind::gqn ? &it.action : nullptr;
        w.y_t = model.decode(dec_in_t, vp_t, w.dec_t);
        w.y_n = model.decode(dec_in_n, vp_n, w.dec_n);

        const double sse_t = (w.y_t - tgt.obs_t).squaredNorm();
        const double sse_n = (w.y_n - tgt.obs_next).squaredNorm();
        recon_sum += 0.5 * (sse_t + sse_n);

        // KL terms
        if (config.use_prior_kl) {
            const double tw = kind == ModelKind::gqn ? 1.0 : 0.5;  // average over the two encodings
            auto add_prior = [&](const Gauss<S>& q, int offset, double weight) {
                Gauss<S> unit{nn::Vec<S>::Zero(q.dim()), nn::Vec<S>::Zero(q.dim())};
                const nn::Vec<S> kl = kl_diag_gaussian(q, unit);
                for (int d = 0; d < q.dim(); ++d)
                    report.kl_per_dim[offset + d] += weight * static_cast<double>(kl[d]) / N;
            };
            const double zw = kind == ModelKind::vaesp ? tw * config.pose_prior_weight : tw;
            add_prior(w.out_t.z, 0, zw);
            if (kind == ModelKind::vaesp) add_prior(w.out_t.shape, zdim, tw);
            if (kind != ModelKind::gqn) {
                add_prior(w.out_n.z, 0, zw);
                if (kind == ModelKind::vaesp) add_prior(w.out_n.shape, zdim, tw);
            }
        }
        if (config.use_consistency_kl && kind != ModelKind::gqn) {
            const nn::Vec<S> kl = kl_diag_gaussian(w.out_n.z, w.pred);
            for (int d = 0; d < zdim; ++d)
                report.kl_per_dim[d] += config.consistency_weight * static_cast<double>(kl[d]) / N;
        }
    }
    // pose alignment: partners sit at identical viewpoints, so their pose
    // beliefs should agree at both time steps (symmetric KL per pair)
    if (kind == ModelKind::vaesp && config.pose_align_weight > 0) {
        for (const auto& [a, b] : batch.pairs) {
            auto add_align = [&](const Gauss<S>& qa, const Gauss<S>& qb) {
                const nn::Vec<S> kl_ab = kl_diag_gaussian(qa, qb);
                const nn::Vec<S> kl_ba = kl_diag_gaussian(qb, qa);
                for (int d = 0; d < zdim; ++d)
                    report.kl_per_dim[d] += config.pose_align_weight *
                                            (static_cast<double>(kl_ab[d]) +
                                             static_cast<double>(kl_ba[d])) /
                                            N;
            };
            add_align(work[a].out_t.z, work[b].out_t.z);
            add_align(work[a].out_n.z, work[b].out_n.z);
        }
    }
    // shape constancy at the belief level: the same object's shape belief
    // must not depend on which viewpoint it was encoded from
    if (kind == ModelKind::vaesp && config.shape_const_weight > 0) {
        for (int i = 0; i < N; ++i) {
            const nn::Vec<S> kl_tn = kl_diag_gaussian(work[i].out_t.shape, work[i].out_n.shape);
            const nn::Vec<S> kl_nt = kl_diag_gaussian(work[i].out_n.shape, work[i].out_t.shape);
            for (int d = 0; d < sdim; ++d)
                report.kl_per_dim[zdim + d] +=
                    config.shape_const_weight *
                    (static_cast<double>(kl_tn[d]) + static_cast<double>(kl_nt[d])) / N;
        }
    }

    report.reconstruction = recon_sum / N;
    report.total = report.kl_total() + lambda * (report.reconstruction - config.mse_tolerance);
    if (!report.finite())
        throw TrainingDiverged("non-finite loss: recon=" + std::to_string(report.reconstruction) +
                               " kl=" + std::to_string(report.kl_total()));
    if (!with_grad) return report;

    // ---- backward ------------------------------------------------------
    for (int i = 0; i < N; ++i) {
        auto& w = work[i];
        w.g_z_t = nn::Vec<S>::Zero(zdim);
        w.g_z_n = nn::Vec<S>::Zero(zdim);
        w.g_shape = nn::Vec<S>::Zero(sdim);
        auto zero_g = [](Gauss<S>& g, int d) {
            g.mean = nn::Vec<S>::Zero(d);
            g.log_var = nn::Vec<S>::Zero(d);
        };
        zero_g(w.g_bt_z, zdim);
        zero_g(w.g_bn_z, zdim);
        zero_g(w.g_pred, zdim);
        if (kind == ModelKind::vaesp) {
            zero_g(w.g_bt_s, sdim);
            zero_g(w.g_bn_s, sdim);
        }
    }

    const S rw = static_cast<S>(lambda * 0.5) * inv_n;  // d(total)/d(sse) per image
    for (int i = 0; i < N; ++i) {
        auto& w = work[i];
        const auto& it = batch.items[i];
        const auto& tgt = batch.items[target_map[i]];

        const nn::Mat<S> gy_t = S(2) * rw * (w.y_t - tgt.obs_t);
        const nn::Mat<S> gy_n = S(2) * rw * (w.y_n - tgt.obs_next);
        const nn::Vec<S> glat_t = model.decode_backward(w.dec_t, gy_t);
        const nn::Vec<S> glat_n = model.decode_backward(w.dec_n, gy_n);

        if (kind == ModelKind::vaesp) {
            w.g_z_t += glat_t.head(zdim);
            w.g_z_n += glat_n.head(zdim);
            // shape gradients go to whoever owns the sample we used
            work[w.shape_from].g_shape += glat_t.tail(sdim) + glat_n.tail(sdim);
        } else if (kind == ModelKind::gqn) {
            w.g_z_t += glat_t + glat_n;
        } else {
            w.g_z_t += glat_t;
            w.g_z_n += glat_n;
        }

        // prior KL gradients: d/dm = m/..., d/dlv = 0.5(exp(lv)-1), weighted
        if (config.use_prior_kl) {
            const S tw = static_cast<S>((kind == ModelKind::gqn ? 1.0 : 0.5)) * inv_n;
            const S zw =
                kind == ModelKind::vaesp ? tw * static_cast<S>(config.pose_prior_weight) : tw;
            auto add_prior_grad = [](const Gauss<S>& q, Gauss<S>& g, S wgt) {
                g.mean += wgt * q.mean;
                g.log_var += (wgt * S(0.5) * (q.log_var.array().exp() - S(1))).matrix();
            };
            add_prior_grad(w.out_t.z, w.g_bt_z, zw);
            if (kind == ModelKind::vaesp) add_prior_grad(w.out_t.shape, w.g_bt_s, tw);
            if (kind != ModelKind::gqn) {
                add_prior_grad(w.out_n.z, w.g_bn_z, zw);
                if (kind == ModelKind::vaesp) add_prior_grad(w.out_n.shape, w.g_bn_s, tw);
            }
        }
        // consistency KL gradients
        if (config.use_consistency_kl && kind != ModelKind::gqn) {
            const auto& q = w.out_n.z;
            const auto& p = w.pred;
            const S cw = static_cast<S>(config.consistency_weight) * inv_n;
            const nn::Vec<S> inv_vp = (-p.log_var.array()).exp().matrix();
            const nn::Vec<S> diff = q.mean - p.mean;
            w.g_bn_z.mean += cw * diff.cwiseProduct(inv_vp);
            w.g_bn_z.log_var +=
                (cw * S(0.5) * ((q.log_var - p.log_var).array().exp() - S(1))).matrix();
            w.g_pred.mean -= cw * diff.cwiseProduct(inv_vp);
            w.g_pred.log_var +=
                (cw * S(0.5) *
                 (S(1) - (q.log_var.array().exp() + diff.array().square()) * inv_vp.array()))
                    .matrix();
        }
    }

    // pose-alignment backward: symmetric KL gradients on both pose beliefs
    if (kind == ModelKind::vaesp && config.pose_align_weight > 0) {
        const S W = static_cast<S>(config.pose_align_weight) * inv_n;
        for (const auto& [a, b] : batch.pairs) {
            auto align_grad = [&](const Gauss<S>& qa, const Gauss<S>& qb, Gauss<S>& ga,
                                  Gauss<S>& gb) {
                const nn::Vec<S> diff = qa.mean - qb.mean;
                const nn::Vec<S> inv_va = (-qa.log_var.array()).exp().matrix();
                const nn::Vec<S> inv_vb = (-qb.log_var.array()).exp().matrix();
                const nn::Vec<S> gm = (W * diff.array() * (inv_va.array() + inv_vb.array())).matrix();
                ga.mean += gm;
                gb.mean -= gm;
                ga.log_var += (W * S(0.5) *
                               ((qa.log_var - qb.log_var).array().exp() -
                                (qb.log_var.array().exp() + diff.array().square()) * inv_va.array()))
                                  .matrix();
                gb.log_var += (W * S(0.5) *
                               ((qb.log_var - qa.log_var).array().exp() -
                                (qa.log_var.array().exp() + diff.array().square()) * inv_vb.array()))
                                  .matrix();
            };
            align_grad(work[a].out_t.z, work[b].out_t.z, work[a].g_bt_z, work[b].g_bt_z);
            align_grad(work[a].out_n.z, work[b].out_n.z, work[a].g_bn_z, work[b].g_bn_z);
        }
    }
    // shape-constancy backward: same symmetric-KL gradient, across time steps
    if (kind == ModelKind::vaesp && config.shape_const_weight > 0) {
        const S W = static_cast<S>(config.shape_const_weight) * inv_n;
        for (int i = 0; i < N; ++i) {
            auto& w = work[i];
            const Gauss<S>& qa = w.out_t.shape;
            const Gauss<S>& qb = w.out_n.shape;
            const nn::Vec<S> diff = qa.mean - qb.mean;
            const nn::Vec<S> inv_va = (-qa.log_var.array()).exp().matrix();
            const nn::Vec<S> inv_vb = (-qb.log_var.array()).exp().matrix();
            const nn::Vec<S> gm = (W * diff.array() * (inv_va.array() + inv_vb.array())).matrix();
            w.g_bt_s.mean += gm;
            w.g_bn_s.mean -= gm;
            w.g_bt_s.log_var += (W * S(0.5) *
                                 ((qa.log_var - qb.log_var).array().exp() -
                                  (qb.log_var.array().exp() + diff.array().square()) * inv_va.array()))
                                    .matrix();
            w.g_bn_s.log_var += (W * S(0.5) *
                                 ((qb.log_var - qa.log_var).array().exp() -
                                  (qa.log_var.array().exp() + diff.array().square()) * inv_vb.array()))
                                    .matrix();
        }
    }

    // reparameterization, transition, and encoder backward
    for (int i = 0; i < N; ++i) {
        auto& w = work[i];
        auto reparam_grad = [](const Gauss<S>& b, const nn::Vec<S>& eps, const nn::Vec<S>& gs,
                               Gauss<S>& g) {
            g.mean += gs;
            g.log_var += (gs.array() * S(0.5) * (b.log_var.array() * S(0.5)).exp() * eps.array()).matrix();
        };
        if (kind != ModelKind::gqn) {
            // decode-path gradient on the predicted-belief sample joins the
            // consistency-KL gradient before flowing through the transition
            reparam_grad(w.pred, w.eps_z_n, w.g_z_n, w.g_pred);
            w.g_z_t += model.transition_backward(w.trans, w.g_pred);
        }
        reparam_grad(w.out_t.z, w.eps_z_t, w.g_z_t, w.g_bt_z);
        if (kind == ModelKind::vaesp) reparam_grad(w.out_n.shape, w.eps_shape, w.g_shape, w.g_bn_s);

        model.encode_backward(w.enc_t, w.g_bt_z, w.g_bt_s);
        if (kind != ModelKind::gqn) model.encode_backward(w.enc_n, w.g_bn_z, w.g_bn_s);
    }
    return report;
}

/// One optimization step: gradients from the constrained free energy, then an
/// Adam update. Multiplier updates are the caller's job (constrained_update).
template <class S>
LossReport free_energy_step(models::Model<S>& model, nn::Adam<S>& opt, const PairedBatch<S>& batch,
                            const TrainingConfig& config, NoiseSource<S>& noise,
                            const MultiplierState& mult) {
    model.params().zero_grad();
    LossReport report = free_energy_eval(model, batch, config, noise, mult, true);
    opt.step(model.params());
    return report;
}

// ---------------------------------------------------------------------------
// Training loop

struct TrainResult {
    std::filesystem::path checkpoint;
    std::filesystem::path metrics;
    bool converged = false;
    MultiplierState multipliers;
    std::vector<LossReport> history;
};

template <class S>
PairedBatch<S> sample_batch(const scene::Dataset& ds, int n_train_instances, int batch_pairs,
                            Rng& rng) {
    if (n_train_instances < 2) throw InvalidInput("need at least two training instances to pair");
    PairedBatch<S> batch;
    std::uniform_int_distribution<int> inst(0, n_train_instances - 1);
    std::uniform_int_distribution<int> view(0, ds.n_views() - 1);
    for (int p = 0; p < batch_pairs; ++p) {
        int ia = inst(rng), ib = inst(rng);
        while (ib == ia) ib = inst(rng);
        const int kt = view(rng);
        int kn = view(rng);
        while (kn == kt) kn = view(rng);
        for (int inst_id : {ia, ib}) {
            BatchItem<S> item;
            item.img_t = &ds.images[inst_id][kt];
            item.img_next = &ds.images[inst_id][kn];
            item.obs_t = models::image_to_tensor<S>(*item.img_t);
            item.obs_next = models::image_to_tensor<S>(*item.img_next);
            item.action = models::action_vec<S>(ds.viewpoints[kn]);
            item.view_t = models::action_vec<S>(ds.viewpoints[kt]);
            item.instance = inst_id;
            item.view_index_t = kt;
            item.view_index_next = kn;
            batch.items.push_back(std::move(item));
        }
        batch.pairs.emplace_back(static_cast<int>(batch.items.size()) - 2,
                                 static_cast<int>(batch.items.size()) - 1);
    }
    return batch;
}

template <class S>
TrainResult train(models::ModelKind kind, const scene::Dataset& dataset,
                  const TrainingConfig& config, const std::filesystem::path& out_dir,
                  const std::function<void(int, const LossReport&)>& on_epoch = {}) {
    config.validate();
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const int n_train = dataset.n_instances() - config.holdout_instances;
    if (n_train < 2) throw InvalidInput("not enough training instances after holdout");

    models::Model<S> model(kind, models::default_config(kind));
    Rng init_rng(derive_seed(config.seed, 100));
    model.init(init_rng);
    nn::Adam<S> opt(config.learning_rate);
    MultiplierState mult;
    Rng data_rng(derive_seed(config.seed, 101));
    Rng noise_rng(derive_seed(config.seed, 102));

    TrainResult result;
    result.metrics = out_dir / "metrics.ndjson";
    std::ofstream log(result.metrics);
    log.precision(17);

    models::TrainMeta meta;
    meta.seed = config.seed;
    meta.category = scene::category_name(dataset.category);
    const fs::path last_path = out_dir / "checkpoint_last.ckpt";

    int step_idx = 0;
    try {
        for (int epoch = 0; epoch < config.epochs; ++epoch) {
            if (config.lr_decay != 1.0 && epoch >= config.lr_decay_start)
                opt.set_lr(config.learning_rate *
                           std::pow(config.lr_decay, epoch - config.lr_decay_start));
            LossReport last;
            for (int s = 0; s < config.steps_per_epoch; ++s) {
                auto batch = sample_batch<S>(dataset, n_train, config.batch_size, data_rng);
                NoiseSource<S> noise{&noise_rng};
                last = free_energy_step(model, opt, batch, config, noise, mult);
                mult = constrained_update(last, mult, config);
                log << "{\"step\":" << step_idx++ << ",\"epoch\":" << epoch
                    << ",\"reconstruction\":" << last.reconstruction
                    << ",\"kl\":" << last.kl_total() << ",\"multiplier\":" << mult.lambda[0]
                    << ",\"recon_ema\":" << mult.recon_ema << ",\"total\":" << last.total
                    << ",\"seed\":" << config.seed << "}\n";
            }
            result.history.push_back(last);
            meta.epoch = epoch;
            meta.multipliers = mult.lambda;
            meta.recon_ema = mult.recon_ema;
            save_checkpoint(last_path, model, meta);
            if (config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0)
                save_checkpoint(out_dir / ("checkpoint_epoch_" + std::to_string(epoch) + ".ckpt"),
                                model, meta);
            if (on_epoch) on_epoch(epoch, last);
        }
    } catch (const TrainingDiverged&) {
        // keep the last good checkpoint on disk and report non-convergence
        result.checkpoint = last_path;
        result.converged = false;
        result.multipliers = mult;
        throw;
    }
    result.checkpoint = out_dir / "checkpoint_final.ckpt";
    save_checkpoint(result.checkpoint, model, meta);
    result.converged = mult.ema_init && mult.recon_ema <= config.mse_tolerance;
    result.multipliers = mult;
    return result;
}

}  // namespace shapepose::train

#endif
