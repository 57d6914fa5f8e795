#include <CLI11.hpp>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "shapepose/eval.hpp"
#include "shapepose/plots.hpp"
#include "shapepose/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace shapepose;

namespace {

struct GlobalOpts {
    std::uint64_t seed = 0;
    std::string config_path;
    std::string out = "runs";
    bool overwrite = false;
    bool verbose = false;
    json file_config;  // parsed --config contents, may be null
};

void load_config_file(GlobalOpts& g) {
    if (g.config_path.empty()) return;
    std::ifstream in(g.config_path);
    if (!in) throw CLI::ValidationError("--config", "cannot read " + g.config_path);
    in >> g.file_config;
}

/// Config precedence: explicit flag > config-file entry > built-in default.
template <class T>
void overlay(const CLI::App* cmd, const std::string& flag, const json& cfg,
             const std::string& key, T& value) {
    if (cmd->count(flag) > 0) return;
    if (cfg.is_object() && cfg.contains(key)) value = cfg.at(key).get<T>();
}

std::string timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
    return buf;
}

fs::path make_run_dir(const GlobalOpts& g, const std::string& kind) {
    const fs::path dir = fs::path(g.out) / (kind + "_" + timestamp() + "_seed" + std::to_string(g.seed));
    if (fs::exists(dir) && !g.overwrite)
        throw CLI::ValidationError("--out", "run directory exists, pass --overwrite: " + dir.string());
    fs::create_directories(dir);
    return dir;
}

void vlog(const GlobalOpts& g, const std::string& msg) {
    if (g.verbose) std::cerr << "[shapepose] " << msg << "\n";
}

std::vector<scene::ObjectSpec> held_out_specs(scene::Category cat, int n, std::uint64_t seed) {
    std::vector<scene::ObjectSpec> specs;
    for (int i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, 40000 + static_cast<std::uint64_t>(i)));
        specs.push_back(scene::sample_object(cat, rng));
        specs.back().instance_id = i;
    }
    return specs;
}

scene::Category category_or_meta(const std::string& flag_value, const models::TrainMeta& meta) {
    if (!flag_value.empty()) return scene::category_from_name(flag_value);
    if (!meta.category.empty()) return scene::category_from_name(meta.category);
    throw CLI::ValidationError("--category", "not set and absent from the checkpoint");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"object-centric scene models: data generation, training, evaluation, planning"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--seed", g.seed, "root random seed")->capture_default_str();
    app.add_option("--config", g.config_path, "JSON config file; flags override its entries");
    app.add_option("--out", g.out, "output root directory")->capture_default_str();
    app.add_flag("--overwrite", g.overwrite, "allow clobbering existing outputs");
    app.add_flag("--verbose", g.verbose, "log progress to stderr");

    // ---- generate ---------------------------------------------------------
    auto* gen = app.add_subcommand("generate", "render a dataset of procedural objects");
    std::string gen_category = "bottle";
    int gen_instances = 15, gen_views = 64;
    double gen_radius = 2.5;
    bool gen_full_sphere = false;
    gen->add_option("--category", gen_category, "bottle|bowl|can|mug")->capture_default_str();
    gen->add_option("--instances", gen_instances)->capture_default_str();
    gen->add_option("--views", gen_views)->capture_default_str();
    gen->add_option("--radius", gen_radius)->capture_default_str();
    gen->add_flag("--full-sphere", gen_full_sphere, "sample the whole view sphere");

    // ---- train ------------------------------------------------------------
    auto* tr = app.add_subcommand("train", "train a generative model on a dataset");
    std::string tr_model = "vaesp", tr_data;
    train::TrainingConfig tcfg;
    double tr_tol = -1.0;
    bool no_prior = false, no_consistency = false, no_swap = false;
    tr->add_option("--model", tr_model, "vae|gqn|vaesp")->capture_default_str();
    tr->add_option("--data", tr_data, "dataset category directory")->required();
    tr->add_option("--epochs", tcfg.epochs)->capture_default_str();
    tr->add_option("--steps-per-epoch", tcfg.steps_per_epoch)->capture_default_str();
    tr->add_option("--batch-size", tcfg.batch_size, "instance pairs per step")->capture_default_str();
    tr->add_option("--lr", tcfg.learning_rate)->capture_default_str();
    tr->add_option("--multiplier-lr", tcfg.multiplier_lr)->capture_default_str();
    tr->add_option("--tolerance", tr_tol, "reconstruction constraint; default per category");
    tr->add_option("--swap-probability", tcfg.swap_probability)->capture_default_str();
    tr->add_option("--holdout", tcfg.holdout_instances, "trailing instances kept out of training")
        ->capture_default_str();
    tr->add_option("--checkpoint-every", tcfg.checkpoint_every)->capture_default_str();
    tr->add_option("--pose-align-weight", tcfg.pose_align_weight,
                   "pair pose-belief agreement penalty (vaesp)")
        ->capture_default_str();
    tr->add_option("--shape-const-weight", tcfg.shape_const_weight,
                   "cross-view shape-belief agreement penalty (vaesp)")
        ->capture_default_str();
    tr->add_flag("--no-prior-kl", no_prior);
    tr->add_flag("--no-consistency-kl", no_consistency);
    tr->add_flag("--no-swap", no_swap, "shorthand for --swap-probability 0");

    // ---- eval -------------------------------------------------------------
    auto* ev = app.add_subcommand("eval", "evaluate a trained checkpoint");
    ev->require_subcommand(1);
    std::string ev_ckpt, ev_category;
    auto add_eval_common = [&](CLI::App* sub) {
        sub->add_option("--checkpoint", ev_ckpt)->required();
        sub->add_option("--category", ev_category, "defaults to the checkpoint's category");
    };
    auto* ev_predict = ev->add_subcommand("predict", "one-step prediction error on held-out objects");
    int ev_samples = 50, ev_objects = 5;
    add_eval_common(ev_predict);
    ev_predict->add_option("--samples", ev_samples)->capture_default_str();
    ev_predict->add_option("--objects", ev_objects)->capture_default_str();

    auto* ev_reach = ev->add_subcommand("reach", "planner vs random reach-viewpoint trials");
    int ev_trials = 50, ev_candidates = 128;
    add_eval_common(ev_reach);
    ev_reach->add_option("--trials", ev_trials)->capture_default_str();
    ev_reach->add_option("--candidates", ev_candidates)->capture_default_str();
    ev_reach->add_option("--objects", ev_objects)->capture_default_str();

    auto* ev_dis = ev->add_subcommand("disentangle", "latent factorization profile and violin plot");
    int ev_sweep = 64;
    add_eval_common(ev_dis);
    ev_dis->add_option("--sweep", ev_sweep, "renders per sweep")->capture_default_str();

    auto* ev_grid = ev->add_subcommand("grid", "pose/shape recombination grid image");
    int ev_rows = 4;
    add_eval_common(ev_grid);
    ev_grid->add_option("--n", ev_rows, "sources per axis")->capture_default_str();

    // ---- plan -------------------------------------------------------------
    auto* pl = app.add_subcommand("plan", "run a planning episode in the viewpoint environment");
    std::string pl_ckpt, pl_category;
    int pl_steps = 5, pl_candidates = 256;
    pl->add_option("--checkpoint", pl_ckpt)->required();
    pl->add_option("--category", pl_category, "defaults to the checkpoint's category");
    pl->add_option("--steps", pl_steps)->capture_default_str();
    pl->add_option("--candidates", pl_candidates)->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        load_config_file(g);
        overlay(&app, "--seed", g.file_config, "seed", g.seed);
        overlay(&app, "--out", g.file_config, "out", g.out);

        if (*gen) {
            overlay(gen, "--category", g.file_config, "category", gen_category);
            overlay(gen, "--instances", g.file_config, "instances", gen_instances);
            overlay(gen, "--views", g.file_config, "views", gen_views);
            overlay(gen, "--radius", g.file_config, "radius", gen_radius);
            scene::DatasetConfig cfg;
            cfg.root = g.out;
            cfg.category = scene::category_from_name(gen_category);
            cfg.instances = gen_instances;
            cfg.views = gen_views;
            cfg.seed = g.seed;
            cfg.radius = gen_radius;
            cfg.full_sphere = gen_full_sphere;
            cfg.overwrite = g.overwrite;
            const fs::path manifest = scene::generate_dataset(cfg);
            vlog(g, "dataset written, manifest at " + manifest.string());
            std::cout << manifest.string() << "\n";
            return 0;
        }

        if (*tr) {
            overlay(tr, "--model", g.file_config, "model", tr_model);
            overlay(tr, "--epochs", g.file_config, "epochs", tcfg.epochs);
            overlay(tr, "--steps-per-epoch", g.file_config, "steps_per_epoch", tcfg.steps_per_epoch);
            overlay(tr, "--batch-size", g.file_config, "batch_size", tcfg.batch_size);
            overlay(tr, "--lr", g.file_config, "learning_rate", tcfg.learning_rate);
            overlay(tr, "--multiplier-lr", g.file_config, "multiplier_lr", tcfg.multiplier_lr);
            overlay(tr, "--tolerance", g.file_config, "tolerance", tr_tol);
            overlay(tr, "--swap-probability", g.file_config, "swap_probability", tcfg.swap_probability);
            overlay(tr, "--holdout", g.file_config, "holdout", tcfg.holdout_instances);
            overlay(tr, "--pose-align-weight", g.file_config, "pose_align_weight",
                    tcfg.pose_align_weight);
            overlay(tr, "--shape-const-weight", g.file_config, "shape_const_weight",
                    tcfg.shape_const_weight);

            vlog(g, "loading dataset from " + tr_data);
            const scene::Dataset ds = scene::load_dataset(tr_data);
            tcfg.category = ds.category;
            tcfg.mse_tolerance = tr_tol > 0 ? tr_tol : train::tolerance_for(ds.category);
            tcfg.seed = g.seed;
            tcfg.use_prior_kl = !no_prior;
            tcfg.use_consistency_kl = !no_consistency;
            if (no_swap) tcfg.swap_probability = 0.0;

            const fs::path run = make_run_dir(g, "train_" + tr_model);
            const auto kind = models::kind_from_name(tr_model);
            const auto result = train::train<float>(
                kind, ds, tcfg, run, [&](int epoch, const train::LossReport& rep) {
                    vlog(g, "epoch " + std::to_string(epoch) +
                                " recon=" + std::to_string(rep.reconstruction) +
                                " kl=" + std::to_string(rep.kl_total()) +
                                " lambda=" + std::to_string(rep.lagrange_multipliers.at(0)));
                });
            json summary{{"checkpoint", result.checkpoint.string()},
                         {"metrics", result.metrics.string()},
                         {"converged", result.converged},
                         {"recon_ema", result.multipliers.recon_ema},
                         {"tolerance", tcfg.mse_tolerance},
                         {"seed", g.seed}};
            std::ofstream(run / "summary.json") << summary.dump(2) << "\n";
            std::cout << result.checkpoint.string() << "\n";
            return 0;
        }

        if (*ev) {
            auto [model, meta] = models::load_checkpoint<float>(ev_ckpt);
            const scene::Category cat = category_or_meta(ev_category, meta);
            scene::ViewpointSampler sampler;
            json out_json{{"checkpoint", ev_ckpt},
                          {"category", scene::category_name(cat)},
                          {"seed", g.seed}};

            if (*ev_predict) {
                const fs::path run = make_run_dir(g, "eval_predict");
                const auto specs = held_out_specs(cat, ev_objects, derive_seed(g.seed, 1));
                const auto res = eval::eval_one_step(model, specs, ev_samples, g.seed, sampler);
                out_json["mse"] = {{"mean", res.mse_summary.mean},
                                   {"std", res.mse_summary.std_dev},
                                   {"n", res.mse_summary.n},
                                   {"per_sample", res.mse_summary.per_sample}};
                out_json["ssim"] = {{"mean", res.ssim_summary.mean},
                                    {"std", res.ssim_summary.std_dev},
                                    {"n", res.ssim_summary.n},
                                    {"per_sample", res.ssim_summary.per_sample}};
                std::ofstream(run / "predict.json") << out_json.dump(2) << "\n";
                std::cout << run.string() << "\n";
            } else if (*ev_reach) {
                const fs::path run = make_run_dir(g, "eval_reach");
                const auto specs = held_out_specs(cat, ev_objects, derive_seed(g.seed, 2));
                plan::PlannerConfig pcfg;
                pcfg.n_candidates = ev_candidates;
                const auto res = eval::eval_reach(model, specs, ev_trials, pcfg, g.seed);
                out_json["planner"] = {{"mean", res.planner.mean},
                                       {"std", res.planner.std_dev},
                                       {"per_sample", res.planner.per_sample}};
                out_json["random_baseline"] = {{"mean", res.random_baseline.mean},
                                               {"std", res.random_baseline.std_dev},
                                               {"per_sample", res.random_baseline.per_sample}};
                out_json["p_value"] = res.p_value;
                std::ofstream(run / "reach.json") << out_json.dump(2) << "\n";
                std::cout << run.string() << "\n";
            } else if (*ev_dis) {
                const fs::path run = make_run_dir(g, "eval_disentangle");
                const auto prof = eval::disentanglement_profile(model, cat, ev_sweep, g.seed, sampler);
                out_json["score"] = prof.score;
                std::ofstream(run / "disentangle.json") << out_json.dump(2) << "\n";
                const fs::path svg = plots::violin_plot(run / "violin", prof);
                vlog(g, "violin plot at " + svg.string());
                std::cout << run.string() << "\n";
            } else if (*ev_grid) {
                const fs::path run = make_run_dir(g, "eval_grid");
                const auto specs = held_out_specs(cat, 2 * ev_rows, derive_seed(g.seed, 3));
                Rng rng(derive_seed(g.seed, 4));
                std::vector<Image> shape_src, pose_src;
                for (int i = 0; i < ev_rows; ++i) {
                    shape_src.push_back(quantize8(scene::render(specs[i], sampler.sample(rng))));
                    pose_src.push_back(
                        quantize8(scene::render(specs[ev_rows + i], sampler.sample(rng))));
                }
                const Image grid = eval::recombination_grid(model, shape_src, pose_src);
                save_png((run / "grid.png").string(), grid);
                std::ofstream(run / "grid.json") << out_json.dump(2) << "\n";
                std::cout << run.string() << "\n";
            }
            return 0;
        }

        if (*pl) {
            auto [model, meta] = models::load_checkpoint<float>(pl_ckpt);
            const scene::Category cat = category_or_meta(pl_category, meta);
            const fs::path run = make_run_dir(g, "plan");
            scene::ViewpointSampler sampler;

            Rng rng(derive_seed(g.seed, 5));
            scene::EnvState env;
            env.spec = scene::sample_object(cat, rng);
            env.viewpoint = sampler.sample(rng);
            const auto goal_vp = sampler.sample(rng);
            const Image goal = quantize8(scene::render(env.spec, goal_vp));
            const auto pref = plan::set_preference(model, goal);
            Image obs = quantize8(scene::render(env.spec, env.viewpoint));
            save_png((run / "goal.png").string(), goal);
            save_png((run / "step_0.png").string(), obs);

            json episode{{"checkpoint", pl_ckpt},
                         {"category", scene::category_name(cat)},
                         {"seed", g.seed},
                         {"goal_viewpoint", std::vector<double>(goal_vp.to_vec7().data(),
                                                                goal_vp.to_vec7().data() + 7)},
                         {"steps", json::array()}};
            for (int s = 0; s < pl_steps; ++s) {
                plan::PlannerConfig pcfg;
                pcfg.n_candidates = pl_candidates;
                pcfg.seed = derive_seed(g.seed, 6000 + static_cast<std::uint64_t>(s));
                const auto chosen = plan::select_action(model, obs, pref, pcfg);
                auto [next_env, next_obs] = scene::step(env, chosen.action);
                env = next_env;
                obs = quantize8(next_obs);
                save_png((run / ("step_" + std::to_string(s + 1) + ".png")).string(), obs);
                const Vec7 v = env.viewpoint.to_vec7();
                episode["steps"].push_back(
                    {{"step", s + 1},
                     {"viewpoint", std::vector<double>(v.data(), v.data() + 7)},
                     {"efe", chosen.scores[chosen.selected_index]},
                     {"candidates", static_cast<int>(chosen.scores.size())},
                     {"mse_to_goal", eval::mse(obs, goal)}});
                vlog(g, "step " + std::to_string(s + 1) +
                            " mse_to_goal=" + std::to_string(eval::mse(obs, goal)));
            }
            std::ofstream(run / "episode.json") << episode.dump(2) << "\n";
            std::cout << run.string() << "\n";
            return 0;
        }
    } catch (const CLI::Error& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
