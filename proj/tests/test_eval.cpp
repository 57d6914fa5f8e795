#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "shapepose/eval.hpp"
#include "shapepose/plots.hpp"

using namespace shapepose;
using namespace shapepose::eval;

namespace {

Image noise_image(std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<float> uni(0.f, 1.f);
    Image img;
    for (auto& v : img.rgb) v = uni(rng);
    return img;
}

Image constant_image(float r, float g, float b) {
    Image img;
    for (int p = 0; p < img.width * img.height; ++p) {
        img.rgb[p * 3] = r;
        img.rgb[p * 3 + 1] = g;
        img.rgb[p * 3 + 2] = b;
    }
    return img;
}

/// Straightforward reference SSIM written independently of the library
/// implementation: same published constants, plain double loops.
double ssim_reference(const Image& ia, const Image& ib) {
    const int W = ia.width, H = ia.height, win = 11;
    const double c1 = 1e-4, c2 = 9e-4, sigma = 1.5;
    std::vector<double> a(W * H), b(W * H), k(win * win);
    for (int p = 0; p < W * H; ++p) {
        a[p] = 0.299 * ia.rgb[p * 3] + 0.587 * ia.rgb[p * 3 + 1] + 0.114 * ia.rgb[p * 3 + 2];
        b[p] = 0.299 * ib.rgb[p * 3] + 0.587 * ib.rgb[p * 3 + 1] + 0.114 * ib.rgb[p * 3 + 2];
    }
    double ksum = 0;
    for (int y = 0; y < win; ++y)
        for (int x = 0; x < win; ++x) {
            k[y * win + x] = std::exp(-((y - 5.0) * (y - 5.0) + (x - 5.0) * (x - 5.0)) / (2 * sigma * sigma));
            ksum += k[y * win + x];
        }
    for (double& v : k) v /= ksum;
    double total = 0;
    int count = 0;
    for (int y0 = 0; y0 + win <= H; ++y0)
        for (int x0 = 0; x0 + win <= W; ++x0) {
            double ma = 0, mb = 0;
            for (int y = 0; y < win; ++y)
                for (int x = 0; x < win; ++x) {
                    ma += k[y * win + x] * a[(y0 + y) * W + x0 + x];
                    mb += k[y * win + x] * b[(y0 + y) * W + x0 + x];
                }
            double va = 0, vb = 0, cov = 0;
            for (int y = 0; y < win; ++y)
                for (int x = 0; x < win; ++x) {
                    const double da = a[(y0 + y) * W + x0 + x] - ma;
                    const double db = b[(y0 + y) * W + x0 + x] - mb;
                    va += k[y * win + x] * da * da;
                    vb += k[y * win + x] * db * db;
                    cov += k[y * win + x] * da * db;
                }
            total += (2 * ma * mb + c1) * (2 * cov + c2) /
                     ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    return total / count;
}

}  // namespace

TEST_CASE("mse matches a naive double-loop computation") {
    Image a = noise_image(1), b = noise_image(2);
    double acc = 0.0;
    for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x)
            for (int c = 0; c < 3; ++c) {
                const double d = double(a.at(y, x, c)) - b.at(y, x, c);
                acc += d * d;
            }
    CHECK(mse(a, b) == doctest::Approx(acc / (120.0 * 120.0 * 3.0)).epsilon(1e-12));
    CHECK(mse(a, a) == 0.0);

    Image small(10, 10);
    CHECK_THROWS_AS(mse(a, small), InvalidInput);
}

TEST_CASE("mse of constant images is the exact squared offset") {
    Image a = constant_image(0.2f, 0.2f, 0.2f);
    Image b = constant_image(0.5f, 0.5f, 0.5f);
    CHECK(mse(a, b) == doctest::Approx(0.09).epsilon(1e-6));
}

TEST_CASE("ssim equals one for identical images") {
    Image a = noise_image(3);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ssim of constant images matches the closed form") {
    // zero variance everywhere: SSIM = (2 mu_a mu_b + C1) / (mu_a^2 + mu_b^2 + C1)
    const double la = 0.3, lb = 0.7;  // luma of grey levels
    Image a = constant_image(0.3f, 0.3f, 0.3f);
    Image b = constant_image(0.7f, 0.7f, 0.7f);
    const double want = (2 * la * lb + 1e-4) / (la * la + lb * lb + 1e-4);
    CHECK(ssim(a, b) == doctest::Approx(want).epsilon(1e-6));
}

TEST_CASE("ssim matches an independent reference implementation") {
    Rng rng(8);
    scene::ViewpointSampler vs;
    scene::ObjectSpec spec = scene::sample_object(scene::Category::mug, rng);
    Image ra = scene::render(spec, vs.sample(rng));
    Image rb = scene::render(spec, vs.sample(rng));
    CHECK(ssim(ra, rb) == doctest::Approx(ssim_reference(ra, rb)).epsilon(1e-9));
    Image na = noise_image(4), nb = noise_image(5);
    CHECK(ssim(na, nb) == doctest::Approx(ssim_reference(na, nb)).epsilon(1e-9));
    // structural similarity of a render with itself shifted should land
    // strictly between noise-vs-noise and identity
    CHECK(ssim(ra, rb) > ssim(na, nb));
    CHECK(ssim(ra, rb) < 1.0);
}

TEST_CASE("significance tests reproduce frozen reference p-values") {
    const std::vector<double> a{0.82, 1.13, 0.95, 1.30, 0.65, 1.02,
                                0.88, 1.21, 0.74, 0.99, 1.08, 0.91};
    const std::vector<double> b{1.05, 1.34, 1.18, 1.52, 0.88, 1.02,
                                1.11, 1.48, 0.95, 1.22, 1.31, 1.02};
    CHECK(significance(a, b, SignificanceTest::welch_t) ==
          doctest::Approx(0.021561789668593064).epsilon(1e-10));
    CHECK(significance(a, b, SignificanceTest::paired_t) ==
          doctest::Approx(1.2837516076927855e-06).epsilon(1e-8));
    CHECK(significance(a, b, SignificanceTest::mann_whitney) ==
          doctest::Approx(0.028034855750636925).epsilon(1e-10));
}

TEST_CASE("significance edge cases") {
    const std::vector<double> same{1.0, 2.0, 3.0};
    CHECK(significance(same, same, SignificanceTest::paired_t) == 1.0);
    CHECK(significance(same, same, SignificanceTest::welch_t) > 0.99);
    CHECK_THROWS_AS(significance({1.0, 2.0}, {1.0}, SignificanceTest::welch_t), InvalidInput);
    CHECK_THROWS_AS(significance({1.0}, {2.0}, SignificanceTest::welch_t), InvalidInput);

    // a large systematic offset must be strongly significant
    std::vector<double> lo(20), hi(20);
    Rng rng(6);
    std::normal_distribution<double> nd(0.0, 0.05);
    for (int i = 0; i < 20; ++i) {
        lo[i] = 1.0 + nd(rng);
        hi[i] = 2.0 + nd(rng);
    }
    CHECK(significance(lo, hi, SignificanceTest::welch_t) < 1e-6);
    CHECK(significance(lo, hi, SignificanceTest::paired_t) < 1e-6);
    CHECK(significance(lo, hi, SignificanceTest::mann_whitney) < 1e-4);
}

TEST_CASE("metric summaries use the sample standard deviation") {
    MetricSummary s = MetricSummary::from_samples({1.0, 2.0, 3.0, 4.0});
    CHECK(s.n == 4);
    CHECK(s.mean == doctest::Approx(2.5));
    CHECK(s.std_dev == doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-12));
    MetricSummary empty = MetricSummary::from_samples({});
    CHECK(empty.n == 0);
}

TEST_CASE("perfectly factorized encodings score a disentanglement of one") {
    // synthetic encoder: stores the sweep index in pose dims on the pose
    // sweep and in shape dims on the shape sweep, using the image's first
    // pixel as the sweep coordinate
    EncoderFn enc = [](const Image& img) {
        Eigen::VectorXd z = Eigen::VectorXd::Zero(24);
        const double v = img.rgb[0];
        if (img.rgb[1] > 0.5)  // marker channel: pose sweep
            for (int d = 0; d < 8; ++d) z[d] = v * (d + 1);
        else
            for (int d = 8; d < 24; ++d) z[d] = v * (d - 7);
        return z;
    };
    std::vector<Image> pose_sweep, shape_sweep;
    for (int i = 0; i < 20; ++i) {
        Image p = constant_image(float(i) / 19.f, 1.f, 0.f);
        Image s = constant_image(float(i) / 19.f, 0.f, 0.f);
        pose_sweep.push_back(p);
        shape_sweep.push_back(s);
    }
    DisentanglementProfile prof = disentanglement_profile(enc, pose_sweep, shape_sweep, 8);
    CHECK(prof.score == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(prof.fixed_shape.rows() == 20);
    CHECK(prof.fixed_shape.cols() == 24);
}

TEST_CASE("entangled random encodings score near one half") {
    double acc = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(derive_seed(400, seed));
        std::normal_distribution<double> nd(0.0, 1.0);
        // encoder output depends on the image only through a hash, and every
        // dimension responds equally to both sweeps
        EncoderFn enc = [&](const Image& img) {
            (void)img;
            Eigen::VectorXd z(24);
            for (int d = 0; d < 24; ++d) z[d] = nd(rng);
            return z;
        };
        std::vector<Image> sweep_a, sweep_b;
        for (int i = 0; i < 40; ++i) {
            sweep_a.push_back(noise_image(derive_seed(seed, 2 * i)));
            sweep_b.push_back(noise_image(derive_seed(seed, 2 * i + 1)));
        }
        acc += disentanglement_profile(enc, sweep_a, sweep_b, 8).score;
    }
    CHECK(std::abs(acc / 10.0 - 0.5) < 0.05);
}

TEST_CASE("dead latent dimensions contribute one half") {
    EncoderFn dead = [](const Image&) { return Eigen::VectorXd::Zero(24); };
    std::vector<Image> sweep;
    for (int i = 0; i < 10; ++i) sweep.push_back(noise_image(i));
    DisentanglementProfile prof = disentanglement_profile(dead, sweep, sweep, 8);
    CHECK(prof.score == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("anti-factorized encodings score near zero") {
    // pose dims respond only to the shape sweep and vice versa
    EncoderFn enc = [](const Image& img) {
        Eigen::VectorXd z = Eigen::VectorXd::Zero(24);
        const double v = img.rgb[0];
        if (img.rgb[1] > 0.5)  // pose sweep drives shape dims
            for (int d = 8; d < 24; ++d) z[d] = v;
        else
            for (int d = 0; d < 8; ++d) z[d] = v;
        return z;
    };
    std::vector<Image> pose_sweep, shape_sweep;
    for (int i = 0; i < 20; ++i) {
        pose_sweep.push_back(constant_image(float(i) / 19.f, 1.f, 0.f));
        shape_sweep.push_back(constant_image(float(i) / 19.f, 0.f, 0.f));
    }
    DisentanglementProfile prof = disentanglement_profile(enc, pose_sweep, shape_sweep, 8);
    CHECK(prof.score == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("model-backed disentanglement profile runs end to end") {
    Rng rng(15);
    models::Modelf model(models::ModelKind::vaesp, models::default_config(models::ModelKind::vaesp));
    model.init(rng);
    scene::ViewpointSampler vs;
    DisentanglementProfile prof = disentanglement_profile(model, scene::Category::bowl, 12, 99, vs);
    CHECK(prof.fixed_shape.rows() == 12);
    CHECK(prof.fixed_pose.rows() == 12);
    CHECK(prof.score >= 0.0);
    CHECK(prof.score <= 1.0);
    // deterministic in the seed
    DisentanglementProfile again = disentanglement_profile(model, scene::Category::bowl, 12, 99, vs);
    CHECK(prof.score == again.score);
}

TEST_CASE("one-step evaluation produces bounded summaries for all kinds") {
    Rng rng(16);
    scene::ViewpointSampler vs;
    std::vector<scene::ObjectSpec> specs;
    for (int i = 0; i < 2; ++i) {
        Rng orng(derive_seed(61, i));
        specs.push_back(scene::sample_object(scene::Category::can, orng));
    }
    for (auto kind : {models::ModelKind::vae, models::ModelKind::gqn, models::ModelKind::vaesp}) {
        models::Modelf model(kind, models::default_config(kind));
        model.init(rng);
        OneStepResult res = eval_one_step(model, specs, 4, 7, vs);
        CHECK(res.mse_summary.n == 4);
        CHECK(res.ssim_summary.n == 4);
        CHECK(res.mse_summary.mean >= 0.0);
        CHECK(res.mse_summary.mean <= 1.0);
        CHECK(res.ssim_summary.mean >= -1.0);
        CHECK(res.ssim_summary.mean <= 1.0);
    }
    CHECK_THROWS_AS(eval_one_step(models::Modelf(models::ModelKind::vae),
                                  {}, 4, 7, vs), InvalidInput);
}

TEST_CASE("reach evaluation pairs planner and random trials") {
    Rng rng(19);
    models::Modelf model(models::ModelKind::vaesp, models::default_config(models::ModelKind::vaesp));
    model.init(rng);
    std::vector<scene::ObjectSpec> specs;
    for (int i = 0; i < 3; ++i) {
        Rng orng(derive_seed(62, i));
        specs.push_back(scene::sample_object(scene::Category::bottle, orng));
    }
    plan::PlannerConfig pcfg;
    pcfg.n_candidates = 6;
    pcfg.seed = 2;
    ReachResult res = eval_reach(model, specs, 3, pcfg, 42);
    CHECK(res.planner.n == 3);
    CHECK(res.random_baseline.n == 3);
    for (double v : res.planner.per_sample) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK(res.p_value >= 0.0);
    CHECK(res.p_value <= 1.0);
    // deterministic in the seed
    ReachResult again = eval_reach(model, specs, 3, pcfg, 42);
    CHECK(res.planner.per_sample == again.planner.per_sample);
    CHECK(res.random_baseline.per_sample == again.random_baseline.per_sample);
}

TEST_CASE("recombination grid has the documented layout and rejects non-vaesp models") {
    Rng rng(17);
    models::Modelf model(models::ModelKind::vaesp, models::default_config(models::ModelKind::vaesp));
    model.init(rng);
    std::vector<Image> shapes{noise_image(70), noise_image(71)};
    std::vector<Image> poses{noise_image(72), noise_image(73), noise_image(74)};
    Image grid = recombination_grid(model, shapes, poses);
    CHECK(grid.width == (3 + 1) * 120);
    CHECK(grid.height == (2 + 1) * 120);
    // top-left corner cell stays empty (background); row 0 shows pose sources
    for (int c = 0; c < 3; ++c) {
        CHECK(grid.at(60, 120 + 60, c) == poses[0].at(60, 60, c));
        CHECK(grid.at(120 + 60, 60, c) == shapes[0].at(60, 60, c));
    }
    models::Modelf vae(models::ModelKind::vae, models::default_config(models::ModelKind::vae));
    vae.init(rng);
    CHECK_THROWS_AS(recombination_grid(vae, shapes, poses), UnsupportedOperation);
}

TEST_CASE("violin plot output is deterministic and well formed") {
    DisentanglementProfile prof;
    Rng rng(18);
    std::normal_distribution<double> nd(0.0, 1.0);
    prof.fixed_shape = Eigen::MatrixXd(30, 24);
    prof.fixed_pose = Eigen::MatrixXd(30, 24);
    for (int i = 0; i < 30; ++i)
        for (int d = 0; d < 24; ++d) {
            prof.fixed_shape(i, d) = nd(rng) * (d < 8 ? 2.0 : 0.3);
            prof.fixed_pose(i, d) = nd(rng) * (d < 8 ? 0.3 : 2.0);
        }
    prof.score = 0.9;

    auto base = std::filesystem::temp_directory_path() / "shapepose_violin";
    auto svg1 = plots::violin_plot(base, prof);
    REQUIRE(std::filesystem::exists(svg1));
    CHECK(std::filesystem::exists(base.string() + ".png"));
    std::ifstream in(svg1);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(content.find("<svg") != std::string::npos);
    CHECK(content.find("#1f77b4") != std::string::npos);  // fixed-shape half
    CHECK(content.find("#ff7f0e") != std::string::npos);  // fixed-pose half

    auto base2 = std::filesystem::temp_directory_path() / "shapepose_violin2";
    auto svg2 = plots::violin_plot(base2, prof);
    std::ifstream in2(svg2);
    std::string content2((std::istreambuf_iterator<char>(in2)), std::istreambuf_iterator<char>());
    CHECK(content == content2);
    for (auto p : {svg1, svg2})
        std::filesystem::remove(p);
    std::filesystem::remove(base.string() + ".png");
    std::filesystem::remove(base2.string() + ".png");
}

TEST_CASE("image_row concatenates horizontally") {
    Image a = constant_image(1.f, 0.f, 0.f), b = constant_image(0.f, 1.f, 0.f);
    Image row = plots::image_row({a, b});
    CHECK(row.width == 240);
    CHECK(row.height == 120);
    CHECK(row.at(10, 10, 0) == 1.f);
    CHECK(row.at(10, 130, 1) == 1.f);
}
