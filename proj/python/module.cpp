#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "shapepose/eval.hpp"
#include "shapepose/training.hpp"

namespace py = pybind11;
using namespace shapepose;

namespace {

using ImgArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using VecArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using OutVec = py::array_t<double>;

py::array_t<float> image_to_numpy(const Image& img) {
    py::array_t<float> out({img.height, img.width, 3});
    std::copy(img.rgb.begin(), img.rgb.end(), out.mutable_data());
    return out;
}

Image numpy_to_image(const ImgArray& arr) {
    if (arr.ndim() != 3 || arr.shape(2) != 3)
        throw InvalidInput("expected an (H, W, 3) float array");
    Image img(static_cast<int>(arr.shape(1)), static_cast<int>(arr.shape(0)));
    std::copy(arr.data(), arr.data() + img.rgb.size(), img.rgb.begin());
    return img;
}

Vec7 numpy_to_vec7(const VecArray& arr) {
    if (arr.ndim() != 1 || arr.shape(0) != 7) throw InvalidInput("expected a 7-vector");
    Vec7 v;
    for (int i = 0; i < 7; ++i) v[i] = arr.at(i);
    return v;
}

OutVec vec_to_numpy(const Eigen::VectorXd& v) {
    OutVec out(v.size());
    std::copy(v.data(), v.data() + v.size(), out.mutable_data());
    return out;
}

template <class S>
Eigen::VectorXd to_f64(const nn::Vec<S>& v) {
    return v.template cast<double>();
}

nn::Vec<float> numpy_to_vecf(const VecArray& arr) {
    if (arr.ndim() != 1) throw InvalidInput("expected a 1-d array");
    nn::Vec<float> v(arr.shape(0));
    for (py::ssize_t i = 0; i < arr.shape(0); ++i) v[i] = static_cast<float>(arr.at(i));
    return v;
}

}  // namespace

PYBIND11_MODULE(_shapepose, m) {
    m.doc() = "object-centric scene models: procedural rendering, generative models, planning";

    py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
    py::register_exception<UnsupportedOperation>(m, "UnsupportedOperation", PyExc_RuntimeError);
    py::register_exception<TrainingDiverged>(m, "TrainingDiverged", PyExc_RuntimeError);

    py::class_<scene::ObjectSpec>(m, "ObjectSpec")
        .def_property_readonly("category",
                               [](const scene::ObjectSpec& s) { return std::string(scene::category_name(s.category)); })
        .def_readonly("instance_id", &scene::ObjectSpec::instance_id)
        .def_property_readonly("profile", [](const scene::ObjectSpec& s) { return s.profile; });

    m.def("sample_object",
          [](const std::string& category, std::uint64_t seed) {
              Rng rng(seed);
              return scene::sample_object(scene::category_from_name(category), rng);
          },
          py::arg("category"), py::arg("seed"),
          "Draw a random object of the category; deterministic in the seed.");

    m.def("look_at",
          [](const VecArray& position) {
              if (position.ndim() != 1 || position.shape(0) != 3)
                  throw InvalidInput("expected a 3-vector");
              const Quat q = scene::look_at(Vec3(position.at(0), position.at(1), position.at(2)));
              OutVec out(4);
              out.mutable_at(0) = q.w();
              out.mutable_at(1) = q.x();
              out.mutable_at(2) = q.y();
              out.mutable_at(3) = q.z();
              return out;
          },
          py::arg("position"), "Quaternion (w, x, y, z) pointing the camera at the origin.");

    m.def("viewpoint_from_position",
          [](const VecArray& position) {
              if (position.ndim() != 1 || position.shape(0) != 3)
                  throw InvalidInput("expected a 3-vector");
              scene::CameraViewpoint vp;
              vp.position = Vec3(position.at(0), position.at(1), position.at(2));
              vp.orientation = scene::look_at(vp.position);
              return vec_to_numpy(vp.to_vec7());
          },
          py::arg("position"),
          "7-vector viewpoint (x, y, z, qw, qx, qy, qz) looking at the origin.");

    m.def("render",
          [](const scene::ObjectSpec& spec, const VecArray& viewpoint7) {
              return image_to_numpy(
                  scene::render(spec, scene::CameraViewpoint::from_vec7(numpy_to_vec7(viewpoint7))));
          },
          py::arg("spec"), py::arg("viewpoint"),
          "Deterministic software render, (120, 120, 3) float32 in [0, 1].");

    m.def("env_step",
          [](const scene::ObjectSpec& spec, const VecArray& current7, const VecArray& target7) {
              scene::EnvState st{spec, scene::CameraViewpoint::from_vec7(numpy_to_vec7(current7)), 0};
              scene::Action a{scene::CameraViewpoint::from_vec7(numpy_to_vec7(target7))};
              auto [next, obs] = scene::step(st, a);
              return py::make_tuple(vec_to_numpy(next.viewpoint.to_vec7()), image_to_numpy(obs));
          },
          py::arg("spec"), py::arg("current"), py::arg("target"),
          "Absolute-target environment step; returns (next_viewpoint, observation).");

    m.def("sample_viewpoint",
          [](std::uint64_t seed, bool full_sphere) {
              scene::ViewpointSampler vs;
              vs.full_sphere = full_sphere;
              Rng rng(seed);
              return vec_to_numpy(vs.sample(rng).to_vec7());
          },
          py::arg("seed"), py::arg("full_sphere") = false);

    m.def("generate_dataset",
          [](const std::filesystem::path& root, const std::string& category, int instances,
             int views, std::uint64_t seed, bool overwrite) {
              scene::DatasetConfig cfg;
              cfg.root = root;
              cfg.category = scene::category_from_name(category);
              cfg.instances = instances;
              cfg.views = views;
              cfg.seed = seed;
              cfg.overwrite = overwrite;
              return scene::generate_dataset(cfg);
          },
          py::arg("root"), py::arg("category"), py::arg("instances") = 15, py::arg("views") = 64,
          py::arg("seed") = 0, py::arg("overwrite") = false);

    m.def("mse", [](const ImgArray& a, const ImgArray& b) { return eval::mse(numpy_to_image(a), numpy_to_image(b)); });
    m.def("ssim", [](const ImgArray& a, const ImgArray& b) { return eval::ssim(numpy_to_image(a), numpy_to_image(b)); });

    py::class_<models::Modelf>(m, "Model")
        .def_static("load",
                    [](const std::filesystem::path& path) {
                        auto [model, meta] = models::load_checkpoint<float>(path);
                        return py::make_tuple(std::move(model),
                                              py::dict(py::arg("seed") = meta.seed,
                                                       py::arg("epoch") = meta.epoch,
                                                       py::arg("category") = meta.category,
                                                       py::arg("recon_ema") = meta.recon_ema));
                    },
                    py::arg("path"), "Load a checkpoint; returns (model, metadata dict).")
        .def(py::init([](const std::string& kind, std::uint64_t seed) {
                 const auto k = models::kind_from_name(kind);
                 models::Modelf model(k, models::default_config(k));
                 Rng rng(seed);
                 model.init(rng);
                 return model;
             }),
             py::arg("kind"), py::arg("seed") = 0)
        .def_property_readonly("kind",
                               [](const models::Modelf& m_) { return std::string(models::kind_name(m_.kind())); })
        .def("count_parameters", &models::Modelf::count_parameters)
        .def("encode",
             [](const models::Modelf& model, const ImgArray& img) {
                 const auto out = model.encode(numpy_to_image(img));
                 py::dict d;
                 d["mean"] = vec_to_numpy(to_f64(out.z.mean));
                 d["log_var"] = vec_to_numpy(to_f64(out.z.log_var));
                 if (out.shape.dim() > 0) {
                     d["shape_mean"] = vec_to_numpy(to_f64(out.shape.mean));
                     d["shape_log_var"] = vec_to_numpy(to_f64(out.shape.log_var));
                 }
                 return d;
             },
             py::arg("image"))
        .def("decode",
             [](const models::Modelf& model, const VecArray& latent, py::object viewpoint) {
                 const nn::Vec<float> z = numpy_to_vecf(latent);
                 if (viewpoint.is_none()) return image_to_numpy(model.decode_image(z));
                 const nn::Vec<float> vp = numpy_to_vecf(viewpoint.cast<VecArray>());
                 return image_to_numpy(model.decode_image(z, &vp));
             },
             py::arg("latent"), py::arg("viewpoint") = py::none())
        .def("transition",
             [](const models::Modelf& model, const VecArray& latent, const VecArray& action7) {
                 const auto out = model.transition(numpy_to_vecf(latent), numpy_to_vecf(action7));
                 return py::make_tuple(vec_to_numpy(to_f64(out.mean)), vec_to_numpy(to_f64(out.log_var)));
             },
             py::arg("latent"), py::arg("action"));

    m.def("select_action",
          [](const models::Modelf& model, const ImgArray& obs, const ImgArray& preferred,
             int n_candidates, std::uint64_t seed) {
              const auto pref = plan::set_preference(model, numpy_to_image(preferred));
              plan::PlannerConfig cfg;
              cfg.n_candidates = n_candidates;
              cfg.seed = seed;
              const auto out = plan::select_action(model, numpy_to_image(obs), pref, cfg);
              return py::make_tuple(vec_to_numpy(out.action.target.to_vec7()),
                                    out.scores[out.selected_index]);
          },
          py::arg("model"), py::arg("observation"), py::arg("preferred"),
          py::arg("n_candidates") = 256, py::arg("seed") = 0,
          "Expected-free-energy action selection; returns (target_viewpoint, score).");

    m.def("train",
          [](const std::string& kind, const std::filesystem::path& data_dir,
             const std::filesystem::path& out_dir, std::uint64_t seed, int epochs,
             int steps_per_epoch, int batch_size, double swap_probability, double tolerance) {
              const auto ds = scene::load_dataset(data_dir);
              train::TrainingConfig cfg;
              cfg.category = ds.category;
              cfg.mse_tolerance = tolerance > 0 ? tolerance : train::tolerance_for(ds.category);
              cfg.seed = seed;
              cfg.epochs = epochs;
              cfg.steps_per_epoch = steps_per_epoch;
              cfg.batch_size = batch_size;
              cfg.swap_probability = swap_probability;
              const auto res =
                  train::train<float>(models::kind_from_name(kind), ds, cfg, out_dir);
              return py::make_tuple(res.checkpoint, res.converged);
          },
          py::arg("kind"), py::arg("data_dir"), py::arg("out_dir"), py::arg("seed") = 0,
          py::arg("epochs") = 50, py::arg("steps_per_epoch") = 20, py::arg("batch_size") = 8,
          py::arg("swap_probability") = 0.5, py::arg("tolerance") = -1.0,
          "Constrained free-energy training; returns (checkpoint_path, converged).");
}
