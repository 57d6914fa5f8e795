// Acceptance suite: one pass/fail line per criterion, non-zero exit on any
// failure. Criteria 5-7 share three trained models, so the whole run finishes
// in roughly twenty minutes on one core.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <vector>

#include "shapepose/eval.hpp"
#include "shapepose/training.hpp"

using namespace shapepose;
using namespace shapepose::models;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
    std::printf("criterion %d: %s — %s\n", criterion, pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

ArchConfig tiny_config() {
    ArchConfig cfg;
    cfg.enc_features = {1, 1, 1, 2, 2, 2};
    cfg.dec_c0 = 4;
    cfg.dec_features = {2, 2, 2, 2, 2};
    cfg.trans_hidden = {4, 4, 4};
    cfg.gqn_code_dim = 8;
    return cfg;
}

// ---------------------------------------------------------------------------

void criterion_1_parameter_counts() {
    const auto vae = Modelf(ModelKind::vae, default_config(ModelKind::vae)).count_parameters();
    const auto gqn = Modelf(ModelKind::gqn, default_config(ModelKind::gqn)).count_parameters();
    const auto sp = Modelf(ModelKind::vaesp, default_config(ModelKind::vaesp)).count_parameters();
    std::ostringstream os;
    os << "vae=" << vae << "/474737 gqn=" << gqn << "/361281 vaesp=" << sp << "/464449";
    report(1, vae == 474737 && gqn == 361281 && sp == 464449, os.str());
}

void criterion_2_analytic_units() {
    bool ok = true;
    std::ostringstream os;

    Gauss<double> g{Eigen::VectorXd::Constant(5, 0.7), Eigen::VectorXd::Constant(5, -0.3)};
    ok &= train::kl_diag_gaussian(g, g).cwiseAbs().maxCoeff() < 1e-12;

    Gauss<double> one{Eigen::VectorXd::Ones(6), Eigen::VectorXd::Zero(6)};
    Gauss<double> unit{Eigen::VectorXd::Zero(6), Eigen::VectorXd::Zero(6)};
    const auto kl = train::kl_diag_gaussian(one, unit);
    for (int d = 0; d < 6; ++d) ok &= std::abs(kl[d] - 0.5) < 1e-12;

    Gauss<double> mode{Eigen::VectorXd::Zero(8), Eigen::VectorXd::Zero(8)};
    const double nll = plan::gaussian_nll(Eigen::VectorXd::Zero(8), mode);
    const double want = 4.0 * std::log(2.0 * M_PI);
    ok &= std::abs(nll - want) < 1e-9;
    os << "nll(mode,D=8)=" << nll << " vs " << want;

    Rng rng(3);
    const auto spec = scene::sample_object(scene::Category::mug, rng);
    scene::ViewpointSampler vs;
    const Image img = scene::render(spec, vs.sample(rng));
    ok &= std::abs(eval::ssim(img, img) - 1.0) < 1e-12;
    ok &= eval::mse(img, img) == 0.0;
    report(2, ok, os.str());
}

void criterion_3_gradient_fidelity() {
    Modeld model(ModelKind::vaesp, tiny_config());
    Rng rng(404);
    model.init(rng);
    auto& ps = model.params();
    {
        Rng jitter(909);
        std::uniform_real_distribution<double> uni(-0.3, 0.3);
        for (int t = 0; t < ps.size(); ++t)
            if (ps[t].value.cols() == 1)
                for (int e = 0; e < ps[t].value.size(); ++e) ps[t].value.data()[e] = uni(jitter);
    }

    // fixed two-item batch with recorded noise so every finite-difference
    // evaluation replays the identical stochastic path
    std::vector<Image> imgs;
    for (int i = 0; i < 4; ++i) {
        Rng r(derive_seed(7, i));
        std::uniform_real_distribution<float> uni(0.f, 1.f);
        Image im;
        for (auto& v : im.rgb) v = uni(r);
        imgs.push_back(im);
    }
    scene::ViewpointSampler vs;
    Rng vr(50);
    const auto vt = vs.sample(vr), vn = vs.sample(vr);
    train::PairedBatch<double> batch;
    for (int i = 0; i < 2; ++i) {
        train::BatchItem<double> item;
        item.img_t = &imgs[2 * i];
        item.img_next = &imgs[2 * i + 1];
        item.obs_t = image_to_tensor<double>(*item.img_t);
        item.obs_next = image_to_tensor<double>(*item.img_next);
        item.action = action_vec<double>(vn);
        item.view_t = action_vec<double>(vt);
        item.view_index_t = 0;
        item.view_index_next = 1;
        batch.items.push_back(std::move(item));
    }
    batch.pairs.emplace_back(0, 1);

    std::vector<nn::Vec<double>> noise_list;
    {
        Rng nr(11);
        std::normal_distribution<double> nd(0.0, 1.0);
        for (int d : {8, 16, 8, 8, 16, 8, 1}) {
            nn::Vec<double> v(d);
            for (int i = 0; i < d; ++i) v[i] = nd(nr);
            noise_list.push_back(v);
        }
    }
    train::TrainingConfig cfg;
    cfg.mse_tolerance = 300.0;
    train::MultiplierState mult;
    mult.lambda = {0.7};
    auto eval_obj = [&](bool grad) {
        train::NoiseSource<double> ns;
        ns.fixed = &noise_list;
        return train::free_energy_eval(model, batch, cfg, ns, mult, grad);
    };

    ps.zero_grad();
    eval_obj(true);
    Rng pick(88);
    int checked = 0;
    double worst = 0.0;
    for (int t = 0; t < ps.size(); ++t) {
        std::uniform_int_distribution<int> elem(0, static_cast<int>(ps[t].value.size()) - 1);
        const int e = elem(pick);
        const double ana = ps[t].grad.data()[e];
        const double h = 1e-5, saved = ps[t].value.data()[e];
        ps[t].value.data()[e] = saved + h;
        const double up = eval_obj(false).total;
        ps[t].value.data()[e] = saved - h;
        const double dn = eval_obj(false).total;
        ps[t].value.data()[e] = saved;
        const double fd = (up - dn) / (2 * h);
        worst = std::max(worst, std::abs(ana - fd) / std::max({1.0, std::abs(ana), std::abs(fd)}));
        ++checked;
    }
    std::ostringstream os;
    os << checked << " parameters, worst relative error " << worst;
    report(3, checked >= 20 && worst < 1e-3, os.str());
}

void criterion_4_oracles() {
    bool ok = true;
    std::ostringstream os;

    // mse / ssim against naive double loops
    Rng rng(8);
    scene::ViewpointSampler vs;
    const auto spec = scene::sample_object(scene::Category::bowl, rng);
    const Image a = scene::render(spec, vs.sample(rng));
    const Image b = scene::render(spec, vs.sample(rng));
    {
        double acc = 0.0;
        for (size_t i = 0; i < a.rgb.size(); ++i) {
            const double d = double(a.rgb[i]) - b.rgb[i];
            acc += d * d;
        }
        ok &= std::abs(eval::mse(a, b) - acc / a.rgb.size()) < 1e-12;
    }
    {
        // reference ssim: plain loops, same published constants
        const int W = 120, H = 120, win = 11;
        std::vector<double> la(W * H), lb(W * H), k(win * win);
        for (int p = 0; p < W * H; ++p) {
            la[p] = 0.299 * a.rgb[p * 3] + 0.587 * a.rgb[p * 3 + 1] + 0.114 * a.rgb[p * 3 + 2];
            lb[p] = 0.299 * b.rgb[p * 3] + 0.587 * b.rgb[p * 3 + 1] + 0.114 * b.rgb[p * 3 + 2];
        }
        double ks = 0;
        for (int y = 0; y < win; ++y)
            for (int x = 0; x < win; ++x) {
                k[y * win + x] = std::exp(-((y - 5.) * (y - 5.) + (x - 5.) * (x - 5.)) / 4.5);
                ks += k[y * win + x];
            }
        for (double& v : k) v /= ks;
        double total = 0;
        int count = 0;
        for (int y0 = 0; y0 + win <= H; ++y0)
            for (int x0 = 0; x0 + win <= W; ++x0) {
                double ma = 0, mb = 0, va = 0, vb = 0, cov = 0;
                for (int y = 0; y < win; ++y)
                    for (int x = 0; x < win; ++x) {
                        const double w = k[y * win + x];
                        const double pa = la[(y0 + y) * W + x0 + x], pb = lb[(y0 + y) * W + x0 + x];
                        ma += w * pa;
                        mb += w * pb;
                    }
                for (int y = 0; y < win; ++y)
                    for (int x = 0; x < win; ++x) {
                        const double w = k[y * win + x];
                        const double da = la[(y0 + y) * W + x0 + x] - ma;
                        const double db = lb[(y0 + y) * W + x0 + x] - mb;
                        va += w * da * da;
                        vb += w * db * db;
                        cov += w * da * db;
                    }
                total += (2 * ma * mb + 1e-4) * (2 * cov + 9e-4) /
                         ((ma * ma + mb * mb + 1e-4) * (va + vb + 9e-4));
                ++count;
            }
        ok &= std::abs(eval::ssim(a, b) - total / count) < 1e-9;
    }

    // gaussian_nll against an independent multivariate-normal density
    {
        Gauss<double> g;
        g.mean = Eigen::VectorXd(4);
        g.mean << 0.5, -1.0, 2.0, 0.1;
        g.log_var = Eigen::VectorXd(4);
        g.log_var << 0.3, -0.7, 0.0, 0.9;
        Eigen::VectorXd x(4);
        x << 0.1, -0.2, 1.5, -0.6;
        const Eigen::MatrixXd cov = g.log_var.array().exp().matrix().asDiagonal();
        const Eigen::VectorXd diff = x - g.mean;
        const double quad = diff.transpose() * cov.inverse() * diff;
        const double logdet = std::log(cov.determinant());
        const double ref = 0.5 * (4.0 * std::log(2.0 * M_PI) + logdet + quad);
        ok &= std::abs(plan::gaussian_nll(x, g) - ref) < 1e-9;
    }

    // planner argmin vs closed-form optimum on the linear-gaussian toy
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng grng(derive_seed(1234, seed));
        const auto goal = vs.sample(grng);
        const Vec7 goal_vec = goal.to_vec7();
        plan::BeliefFn predict = [](const scene::CameraViewpoint& t) {
            Gauss<double> p;
            p.mean = t.to_vec7();
            p.log_var = Eigen::VectorXd::Constant(7, -20.0);
            return p;
        };
        plan::PreferredState pref;
        pref.belief.mean = goal_vec;
        pref.belief.log_var = Eigen::VectorXd::Constant(7, std::log(0.05));
        plan::PlannerConfig cfg;
        cfg.n_candidates = 400;
        cfg.seed = seed;
        const auto out = plan::select_action_with(predict, pref, cfg);
        // closed form: equal preferred variances make the optimum the
        // candidate closest to the goal 7-vector
        Rng crng(derive_seed(seed, 7001));
        int best = -1;
        double best_d = 1e300;
        for (int i = 0; i < cfg.n_candidates; ++i) {
            const auto cand = cfg.candidates.sample(crng);
            const double d = (cand.to_vec7() - goal_vec).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        if (out.selected_index == best) ++wins;
    }
    os << "planner argmin " << wins << "/100 seeds";
    ok &= wins == 100;
    report(4, ok, os.str());
}

// ---------------------------------------------------------------------------

struct Trained {
    fs::path checkpoint;
    fs::path metrics;
    bool converged = false;
    int epochs = 0;
};

Trained run_training(ModelKind kind, const scene::Dataset& ds, double swap_probability,
                     const fs::path& out_dir, const std::string& label) {
    train::TrainingConfig cfg;
    cfg.category = ds.category;
    cfg.mse_tolerance = train::tolerance_for(ds.category);
    cfg.epochs = 50;
    cfg.steps_per_epoch = 20;
    cfg.batch_size = 8;
    cfg.swap_probability = swap_probability;
    cfg.seed = 1;
    cfg.checkpoint_every = 0;
    const auto t0 = std::chrono::steady_clock::now();
    const auto res = train::train<float>(kind, ds, cfg, out_dir / label);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("  [trained %s in %.0fs, converged=%d]\n", label.c_str(), secs, res.converged);
    std::fflush(stdout);
    return {res.checkpoint, res.metrics, res.converged, static_cast<int>(res.history.size())};
}

void criterion_5_training_smoke(const Trained& swap_run, const scene::Dataset& ds) {
    bool ok = true;
    std::ostringstream os;
    const double tol = train::tolerance_for(ds.category);

    // reconstruction constraint reached within the budget
    double final_ema = -1.0;
    int violated_up = 0, violated_total = 0, satisfied_down = 0, satisfied_total = 0;
    {
        std::ifstream log(swap_run.metrics);
        std::string line;
        double prev_lambda = -1.0, prev_ema = -1.0;
        while (std::getline(log, line)) {
            if (line.empty()) continue;
            const json j = json::parse(line);
            const double lambda = j.at("multiplier");
            const double ema = j.at("recon_ema");
            if (prev_lambda >= 0.0) {
                if (prev_ema > tol) {
                    ++violated_total;
                    if (lambda >= prev_lambda) ++violated_up;
                } else if (prev_ema < 0.95 * tol) {
                    ++satisfied_total;
                    if (lambda <= prev_lambda) ++satisfied_down;
                }
            }
            prev_lambda = lambda;
            prev_ema = ema;
            final_ema = ema;
        }
    }
    ok &= final_ema >= 0.0 && final_ema <= tol;
    ok &= swap_run.epochs <= 50;
    ok &= satisfied_total > 0 && satisfied_down == satisfied_total;
    if (violated_total > 0) ok &= violated_up == violated_total;

    // exercise the violated branch explicitly with a tight constraint
    {
        train::TrainingConfig cfg;
        cfg.category = ds.category;
        cfg.mse_tolerance = 60.0;
        cfg.epochs = 1;
        cfg.steps_per_epoch = 10;
        cfg.batch_size = 2;
        cfg.seed = 2;
        const auto res = train::train<float>(ModelKind::vaesp, ds, cfg,
                                             fs::temp_directory_path() / "shapepose_acc_tight");
        std::ifstream log(res.metrics);
        std::string line;
        double prev = -1.0;
        bool rising = true;
        int steps = 0;
        while (std::getline(log, line)) {
            if (line.empty()) continue;
            const double lambda = json::parse(line).at("multiplier");
            if (prev >= 0.0) rising &= lambda >= prev;
            prev = lambda;
            ++steps;
        }
        ok &= steps == 10 && rising && prev > 1.0;
    }

    os << "final recon_ema " << final_ema << " vs tolerance " << tol << " after "
       << swap_run.epochs << " epochs; multiplier non-increasing on " << satisfied_down << "/"
       << satisfied_total << " satisfied steps, rising under a violated constraint";
    report(5, ok, os.str());
}

void criterion_6_disentanglement(const Trained& swap_run, const Trained& noswap_run,
                                 const Trained& vae_run, scene::Category cat) {
    scene::ViewpointSampler vs;
    auto score_of = [&](const fs::path& ckpt) {
        auto [model, meta] = load_checkpoint<float>(ckpt);
        return eval::disentanglement_profile(model, cat, 64, 77, vs).score;
    };
    const double s_swap = score_of(swap_run.checkpoint);
    const double s_noswap = score_of(noswap_run.checkpoint);
    const double s_vae = score_of(vae_run.checkpoint);
    std::ostringstream os;
    os << "vaesp(swap)=" << s_swap << " vaesp(no swap)=" << s_noswap << " vae=" << s_vae;
    report(6, s_swap >= 0.75 && s_swap >= s_noswap + 0.05 && s_swap >= s_vae + 0.05, os.str());
}

void criterion_7_planner(const Trained& swap_run, scene::Category cat) {
    auto [model, meta] = load_checkpoint<float>(swap_run.checkpoint);
    std::vector<scene::ObjectSpec> specs;
    for (int i = 0; i < 5; ++i) {
        Rng rng(derive_seed(9100, i));
        specs.push_back(scene::sample_object(cat, rng));
        specs.back().instance_id = i;
    }
    plan::PlannerConfig pcfg;
    pcfg.n_candidates = 2000;
    const auto res = eval::eval_reach(model, specs, 50, pcfg, 31);
    const double med_p = median(res.planner.per_sample);
    const double med_r = median(res.random_baseline.per_sample);
    std::ostringstream os;
    os << "median mse planner " << med_p << " vs random " << med_r << ", paired p=" << res.p_value;
    report(7, med_p < med_r && res.p_value < 0.05, os.str());
}

void criterion_8_swap_properties() {
    Rng rng(515);
    std::normal_distribution<double> nd(0.0, 1.0);
    bool ok = true;
    int round_trip_checked = 0, constancy_checked = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int n_pairs = 1 + trial % 5;
        std::vector<train::PoseShapeLatent<double>> batch(2 * n_pairs);
        std::vector<std::pair<int, int>> pairs;
        for (int p = 0; p < n_pairs; ++p) {
            for (int j : {0, 1}) {
                auto& b = batch[2 * p + j];
                b.pose = nn::Vec<double>(8);
                b.shape = nn::Vec<double>(16);
                for (int d = 0; d < 8; ++d) b.pose[d] = nd(rng);
                for (int d = 0; d < 16; ++d) b.shape[d] = nd(rng);
                b.view_index = p;
            }
            pairs.emplace_back(2 * p, 2 * p + 1);
        }
        const auto out = train::swap_shape_latents(batch, pairs, rng, 0.5);
        // round trip: a second forced swap restores the original batch
        const auto undo = train::swap_shape_latents(out.latents, pairs, rng, 1.0);
        for (int p = 0; p < n_pairs; ++p) {
            const int a = 2 * p, b = 2 * p + 1;
            if (out.swapped_pair[p]) {
                ok &= undo.latents[a].shape == batch[a].shape;
                ok &= undo.latents[b].shape == batch[b].shape;
                ++round_trip_checked;
            }
            // shape constancy: poses never move, and each slot holds either
            // its own or exactly its partner's shape, consistent with the map
            ok &= out.latents[a].pose == batch[a].pose;
            ok &= out.latents[b].pose == batch[b].pose;
            const int ta = out.target_map[a], tb = out.target_map[b];
            ok &= (ta == a && tb == b) || (ta == b && tb == a);
            ok &= out.latents[a].shape == batch[ta].shape;
            ok &= out.latents[b].shape == batch[tb].shape;
            ++constancy_checked;
        }
    }
    std::ostringstream os;
    os << "1000 batches, " << round_trip_checked << " swapped pairs round-tripped, "
       << constancy_checked << " constancy checks";
    report(8, ok && round_trip_checked > 500 && constancy_checked >= 1000, os.str());
}

}  // namespace

int main() {
    criterion_1_parameter_counts();
    criterion_2_analytic_units();
    criterion_3_gradient_fidelity();
    criterion_4_oracles();
    criterion_8_swap_properties();

    std::printf("[building toy dataset: bottle, 10 instances x 64 views]\n");
    std::fflush(stdout);
    scene::DatasetConfig dcfg;
    dcfg.category = scene::Category::bottle;
    dcfg.instances = 10;
    dcfg.views = 64;
    dcfg.seed = 7;
    const scene::Dataset ds = scene::make_dataset(dcfg);

    const fs::path out = fs::temp_directory_path() / "shapepose_acceptance";
    fs::remove_all(out);
    const Trained swap_run = run_training(ModelKind::vaesp, ds, 0.5, out, "vaesp_swap");
    const Trained noswap_run = run_training(ModelKind::vaesp, ds, 0.0, out, "vaesp_noswap");
    const Trained vae_run = run_training(ModelKind::vae, ds, 0.0, out, "vae");

    criterion_5_training_smoke(swap_run, ds);
    criterion_6_disentanglement(swap_run, noswap_run, vae_run, ds.category);
    criterion_7_planner(swap_run, ds.category);

    if (g_failures == 0) {
        std::printf("all criteria passed\n");
        return 0;
    }
    std::printf("%d criteria failed\n", g_failures);
    return 1;
}
