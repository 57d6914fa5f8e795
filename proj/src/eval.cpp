#include "shapepose/eval.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <numeric>

namespace shapepose::eval {

MetricSummary MetricSummary::from_samples(std::vector<double> samples) {
    MetricSummary s;
    s.n = static_cast<int>(samples.size());
    s.per_sample = std::move(samples);
    if (s.n == 0) return s;
    s.mean = std::accumulate(s.per_sample.begin(), s.per_sample.end(), 0.0) / s.n;
    if (s.n > 1) {
        double acc = 0.0;
        for (double v : s.per_sample) acc += (v - s.mean) * (v - s.mean);
        s.std_dev = std::sqrt(acc / (s.n - 1));
    }
    return s;
}

double mse(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height) throw InvalidInput("mse: shape mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < a.rgb.size(); ++i) {
        const double d = static_cast<double>(a.rgb[i]) - b.rgb[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.rgb.size());
}

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;  // (K1 * L)^2, L = 1
constexpr double kC2 = 0.03 * 0.03;

std::vector<double> gaussian_kernel() {
    std::vector<double> k(kWin * kWin);
    const int half = kWin / 2;
    double sum = 0.0;
    for (int y = 0; y < kWin; ++y)
        for (int x = 0; x < kWin; ++x) {
            const double dy = y - half, dx = x - half;
            k[y * kWin + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * kSigma * kSigma));
            sum += k[y * kWin + x];
        }
    for (double& v : k) v /= sum;
    return k;
}

std::vector<double> luma(const Image& img) {
    std::vector<double> out(static_cast<size_t>(img.width) * img.height);
    for (size_t p = 0; p < out.size(); ++p)
        out[p] = 0.299 * img.rgb[p * 3] + 0.587 * img.rgb[p * 3 + 1] + 0.114 * img.rgb[p * 3 + 2];
    return out;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height) throw InvalidInput("ssim: shape mismatch");
    if (a.width < kWin || a.height < kWin) throw InvalidInput("ssim: image smaller than window");
    static const std::vector<double> kernel = gaussian_kernel();
    const std::vector<double> la = luma(a), lb = luma(b);
    const int W = a.width, H = a.height;

    double acc = 0.0;
    int count = 0;
    for (int y = 0; y + kWin <= H; ++y) {
        for (int x = 0; x + kWin <= W; ++x) {
            double ma = 0, mb = 0, va = 0, vb = 0, cov = 0;
            for (int ky = 0; ky < kWin; ++ky)
                for (int kx = 0; kx < kWin; ++kx) {
                    const double w = kernel[ky * kWin + kx];
                    const double pa = la[(y + ky) * W + (x + kx)];
                    const double pb = lb[(y + ky) * W + (x + kx)];
                    ma += w * pa;
                    mb += w * pb;
                    va += w * pa * pa;
                    vb += w * pb * pb;
                    cov += w * pa * pb;
                }
            va -= ma * ma;
            vb -= mb * mb;
            cov -= ma * mb;
            acc += ((2 * ma * mb + kC1) * (2 * cov + kC2)) /
                   ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
            ++count;
        }
    }
    return acc / count;
}

namespace {

double welch_p(const std::vector<double>& a, const std::vector<double>& b) {
    const auto sa = MetricSummary::from_samples(a);
    const auto sb = MetricSummary::from_samples(b);
    const double va = sa.std_dev * sa.std_dev / sa.n;
    const double vb = sb.std_dev * sb.std_dev / sb.n;
    if (va + vb == 0.0) return sa.mean == sb.mean ? 1.0 : 0.0;
    const double t = (sa.mean - sb.mean) / std::sqrt(va + vb);
    const double df = (va + vb) * (va + vb) /
                      (va * va / (sa.n - 1) + vb * vb / (sb.n - 1));
    boost::math::students_t dist(df);
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

double paired_t_p(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> diff(a.size());
    for (size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
    const auto sd = MetricSummary::from_samples(diff);
    if (sd.std_dev == 0.0) return sd.mean == 0.0 ? 1.0 : 0.0;
    const double t = sd.mean / (sd.std_dev / std::sqrt(static_cast<double>(sd.n)));
    boost::math::students_t dist(sd.n - 1);
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

double mann_whitney_p(const std::vector<double>& a, const std::vector<double>& b) {
    // normal approximation with tie correction
    const size_t na = a.size(), nb = b.size();
    std::vector<std::pair<double, int>> all;
    for (double v : a) all.emplace_back(v, 0);
    for (double v : b) all.emplace_back(v, 1);
    std::sort(all.begin(), all.end());
    std::vector<double> ranks(all.size());
    double tie_term = 0.0;
    for (size_t i = 0; i < all.size();) {
        size_t j = i;
        while (j < all.size() && all[j].first == all[i].first) ++j;
        const double r = 0.5 * (i + j - 1) + 1.0;
        for (size_t k = i; k < j; ++k) ranks[k] = r;
        const double t = static_cast<double>(j - i);
        tie_term += t * t * t - t;
        i = j;
    }
    double ra = 0.0;
    for (size_t i = 0; i < all.size(); ++i)
        if (all[i].second == 0) ra += ranks[i];
    const double u = ra - na * (na + 1) / 2.0;
    const double mu = na * nb / 2.0;
    const double n = static_cast<double>(na + nb);
    const double var = na * nb / 12.0 * ((n + 1) - tie_term / (n * (n - 1)));
    if (var <= 0.0) return 1.0;
    const double z = (u - mu) / std::sqrt(var);
    boost::math::normal dist;
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(z)));
}

}  // namespace

double significance(const std::vector<double>& errors_a, const std::vector<double>& errors_b,
                    SignificanceTest test) {
    if (errors_a.size() != errors_b.size()) throw InvalidInput("significance: unequal lengths");
    if (errors_a.size() < 2) throw InvalidInput("significance: need at least two samples");
    switch (test) {
        case SignificanceTest::welch_t: return welch_p(errors_a, errors_b);
        case SignificanceTest::mann_whitney: return mann_whitney_p(errors_a, errors_b);
        case SignificanceTest::paired_t: return paired_t_p(errors_a, errors_b);
    }
    throw InvalidInput("unknown significance test");
}

// ---------------------------------------------------------------------------

OneStepResult eval_one_step(const models::Modelf& model,
                            const std::vector<scene::ObjectSpec>& test_specs,
                            int n_samples, std::uint64_t seed,
                            const scene::ViewpointSampler& sampler) {
    if (test_specs.empty()) throw InvalidInput("eval_one_step: no test objects");
    std::vector<double> mses, ssims;
    Rng rng(derive_seed(seed, 501));
    for (int i = 0; i < n_samples; ++i) {
        const auto& spec = test_specs[i % test_specs.size()];
        const auto vp_t = sampler.sample(rng);
        const auto vp_n = sampler.sample(rng);
        const Image o_t = quantize8(scene::render(spec, vp_t));
        const Image o_n = quantize8(scene::render(spec, vp_n));

        const auto enc = model.encode(o_t);
        Image pred;
        if (model.kind() == models::ModelKind::gqn) {
            const nn::Vec<float> vp = models::action_vec<float>(vp_n);
            pred = model.decode_image(enc.z.mean, &vp);
        } else {
            const auto next = model.transition(enc.z.mean, models::action_vec<float>(vp_n));
            nn::Vec<float> latent;
            if (model.kind() == models::ModelKind::vaesp) {
                latent.resize(model.config().latent_dim);
                latent << next.mean, enc.shape.mean;
            } else {
                latent = next.mean;
            }
            pred = model.decode_image(latent);
        }
        mses.push_back(mse(pred, o_n));
        ssims.push_back(ssim(pred, o_n));
    }
    return {MetricSummary::from_samples(std::move(mses)),
            MetricSummary::from_samples(std::move(ssims))};
}

ReachResult eval_reach(const models::Modelf& model, const std::vector<scene::ObjectSpec>& specs,
                       int n_trials, const plan::PlannerConfig& planner_config,
                       std::uint64_t seed) {
    if (specs.size() < 2) throw InvalidInput("eval_reach: need at least two objects");
    std::vector<double> planner_err, random_err;
    Rng rng(derive_seed(seed, 601));
    std::uniform_int_distribution<size_t> pick(0, specs.size() - 1);
    const auto& sampler = planner_config.candidates;

    for (int t = 0; t < n_trials; ++t) {
        const size_t env_idx = static_cast<size_t>(t) % specs.size();
        const auto& env_spec = specs[env_idx];
        size_t other = pick(rng);
        while (other == env_idx) other = pick(rng);

        const auto pref_vp = sampler.sample(rng);
        const auto init_vp = sampler.sample(rng);
        const Image preferred = quantize8(scene::render(specs[other], pref_vp));
        const Image current = quantize8(scene::render(env_spec, init_vp));
        const Image goal = quantize8(scene::render(env_spec, pref_vp));

        const auto pref = plan::set_preference(model, preferred);
        plan::PlannerConfig cfg = planner_config;
        cfg.seed = derive_seed(seed, 700 + static_cast<std::uint64_t>(t));
        const auto chosen = plan::select_action(model, current, pref, cfg);
        const Image reached = quantize8(scene::render(env_spec, chosen.action.target));
        planner_err.push_back(mse(reached, goal));

        const auto random_vp = sampler.sample(rng);
        const Image reached_rand = quantize8(scene::render(env_spec, random_vp));
        random_err.push_back(mse(reached_rand, goal));
    }
    ReachResult r;
    r.planner = MetricSummary::from_samples(std::move(planner_err));
    r.random_baseline = MetricSummary::from_samples(std::move(random_err));
    r.p_value = significance(r.planner.per_sample, r.random_baseline.per_sample,
                             SignificanceTest::paired_t);
    return r;
}

// ---------------------------------------------------------------------------

DisentanglementProfile disentanglement_profile(const EncoderFn& encoder,
                                               const std::vector<Image>& fixed_shape_sweep,
                                               const std::vector<Image>& fixed_pose_sweep,
                                               int pose_dim) {
    if (fixed_shape_sweep.empty() || fixed_pose_sweep.empty())
        throw InvalidInput("disentanglement_profile: empty sweep");
    auto encode_all = [&](const std::vector<Image>& sweep) {
        Eigen::MatrixXd out(sweep.size(), 0);
        for (size_t i = 0; i < sweep.size(); ++i) {
            const Eigen::VectorXd z = encoder(sweep[i]);
            if (out.cols() == 0) out.resize(sweep.size(), z.size());
            out.row(i) = z.transpose();
        }
        return out;
    };
    DisentanglementProfile prof;
    prof.fixed_shape = encode_all(fixed_shape_sweep);
    prof.fixed_pose = encode_all(fixed_pose_sweep);
    const int dims = static_cast<int>(prof.fixed_shape.cols());
    if (prof.fixed_pose.cols() != dims)
        throw InvalidInput("disentanglement_profile: sweep dimensionality mismatch");
    if (pose_dim <= 0 || pose_dim >= dims)
        throw InvalidInput("disentanglement_profile: bad pose_dim");

    auto variance = [](const Eigen::MatrixXd& m, int col) {
        const double mean = m.col(col).mean();
        return (m.col(col).array() - mean).square().sum() / (m.rows() - 1);
    };
    double pose_acc = 0.0, shape_acc = 0.0;
    for (int d = 0; d < dims; ++d) {
        const double vp = variance(prof.fixed_shape, d);  // varies with pose
        const double vs = variance(prof.fixed_pose, d);   // varies with shape
        const double ratio = vp + vs > 0 ? vp / (vp + vs) : 0.5;
        if (d < pose_dim)
            pose_acc += ratio;
        else
            shape_acc += 1.0 - ratio;
    }
    prof.score = 0.5 * (pose_acc / pose_dim + shape_acc / (dims - pose_dim));
    return prof;
}

DisentanglementProfile disentanglement_profile(const models::Modelf& model,
                                               scene::Category category, int n_sweep,
                                               std::uint64_t seed,
                                               const scene::ViewpointSampler& sampler) {
    Rng rng(derive_seed(seed, 801));
    const scene::ObjectSpec fixed_spec = scene::sample_object(category, rng);
    const auto fixed_vp = sampler.sample(rng);

    std::vector<Image> fixed_shape_sweep, fixed_pose_sweep;
    for (int i = 0; i < n_sweep; ++i)
        fixed_shape_sweep.push_back(quantize8(scene::render(fixed_spec, sampler.sample(rng))));
    for (int i = 0; i < n_sweep; ++i) {
        const auto spec = scene::sample_object(category, rng);
        fixed_pose_sweep.push_back(quantize8(scene::render(spec, fixed_vp)));
    }
    EncoderFn encoder = [&model](const Image& img) {
        const auto enc = model.encode(img);
        Eigen::VectorXd z(model.config().latent_dim);
        if (model.kind() == models::ModelKind::vaesp)
            z << enc.z.mean.cast<double>(), enc.shape.mean.cast<double>();
        else
            z = enc.z.mean.cast<double>();
        return z;
    };
    return disentanglement_profile(encoder, fixed_shape_sweep, fixed_pose_sweep,
                                   model.config().pose_dim);
}

Image recombination_grid(const models::Modelf& model, const std::vector<Image>& shape_sources,
                         const std::vector<Image>& pose_sources) {
    if (model.kind() != models::ModelKind::vaesp)
        throw UnsupportedOperation("recombination grid requires a vaesp model");
    if (shape_sources.empty() || pose_sources.empty())
        throw InvalidInput("recombination_grid: empty sources");
    const int side = model.config().image_size;
    const int rows = static_cast<int>(shape_sources.size()) + 1;
    const int cols = static_cast<int>(pose_sources.size()) + 1;
    Image grid(cols * side, rows * side);
    std::fill(grid.rgb.begin(), grid.rgb.end(), 1.0f);

    auto blit = [&](const Image& img, int row, int col) {
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x)
                for (int c = 0; c < 3; ++c)
                    grid.at(row * side + y, col * side + x, c) = img.at(y, x, c);
    };
    for (size_t j = 0; j < pose_sources.size(); ++j) blit(pose_sources[j], 0, static_cast<int>(j) + 1);
    for (size_t i = 0; i < shape_sources.size(); ++i) blit(shape_sources[i], static_cast<int>(i) + 1, 0);

    std::vector<nn::Vec<float>> shapes, poses;
    for (const auto& img : shape_sources) shapes.push_back(model.encode(img).shape.mean);
    for (const auto& img : pose_sources) poses.push_back(model.encode(img).z.mean);
    for (size_t i = 0; i < shape_sources.size(); ++i)
        for (size_t j = 0; j < pose_sources.size(); ++j) {
            nn::Vec<float> latent(model.config().latent_dim);
            latent << poses[j], shapes[i];
            blit(model.decode_image(latent), static_cast<int>(i) + 1, static_cast<int>(j) + 1);
        }
    return grid;
}

}  // namespace shapepose::eval
