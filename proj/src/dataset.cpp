#include "shapepose/dataset.hpp"

#include <fstream>
#include <nlohmann/json.hpp>

namespace shapepose::scene {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json spec_to_json(const ObjectSpec& spec) {
    json j;
    j["category"] = category_name(spec.category);
    j["instance_id"] = spec.instance_id;
    j["albedo"] = spec.albedo;
    j["profile"] = spec.profile;
    if (spec.handle) {
        const auto& h = *spec.handle;
        j["handle"] = {{"center_x", h.center_x}, {"center_z", h.center_z},
                       {"major_radius", h.major_radius}, {"minor_radius", h.minor_radius},
                       {"sweep_deg", h.sweep_deg}};
    }
    return j;
}

ObjectSpec spec_from_json(const json& j) {
    ObjectSpec spec;
    spec.category = category_from_name(j.at("category").get<std::string>());
    spec.instance_id = j.at("instance_id").get<int>();
    spec.albedo = j.at("albedo").get<std::array<double, 3>>();
    spec.profile = j.at("profile").get<std::vector<std::array<double, 2>>>();
    if (j.contains("handle")) {
        HandleSpec h;
        const auto& hj = j.at("handle");
        h.center_x = hj.at("center_x").get<double>();
        h.center_z = hj.at("center_z").get<double>();
        h.major_radius = hj.at("major_radius").get<double>();
        h.minor_radius = hj.at("minor_radius").get<double>();
        h.sweep_deg = hj.at("sweep_deg").get<double>();
        spec.handle = h;
    }
    spec.validate();
    return spec;
}

struct Generated {
    std::vector<ObjectSpec> specs;
    std::vector<CameraViewpoint> viewpoints;
};

Generated generate_content(const DatasetConfig& config) {
    Generated g;
    Rng spec_rng(derive_seed(config.seed, 1));
    for (int i = 0; i < config.instances; ++i) {
        ObjectSpec spec = sample_object(config.category, spec_rng);
        spec.instance_id = i;
        g.specs.push_back(spec);
    }
    ViewpointSampler sampler{config.radius, config.full_sphere};
    Rng view_rng(derive_seed(config.seed, 2));
    for (int k = 0; k < config.views; ++k) g.viewpoints.push_back(sampler.sample(view_rng));
    return g;
}

json manifest_json(const DatasetConfig& config, const Generated& g) {
    json m;
    m["schema_version"] = kManifestSchemaVersion;
    m["category"] = category_name(config.category);
    m["seed"] = config.seed;
    m["radius"] = config.radius;
    m["image_size"] = kImageSize;
    json views = json::array();
    for (const auto& vp : g.viewpoints) {
        const Vec7 v = vp.to_vec7();
        views.push_back(std::vector<double>(v.data(), v.data() + 7));
    }
    m["views"] = views;
    json instances = json::array();
    for (const auto& spec : g.specs) instances.push_back(spec_to_json(spec));
    m["instances"] = instances;
    return m;
}

}  // namespace

fs::path generate_dataset(const DatasetConfig& config) {
    if (config.instances < 1 || config.views < 1)
        throw InvalidInput("dataset needs at least one instance and one view");
    const fs::path cat_dir = config.root / category_name(config.category);
    if (fs::exists(cat_dir) && !config.overwrite)
        throw InvalidInput("output directory exists, pass overwrite: " + cat_dir.string());
    std::error_code ec;
    fs::create_directories(cat_dir, ec);
    if (ec || !fs::is_directory(cat_dir))
        throw std::runtime_error("cannot create output directory: " + cat_dir.string());

    const Generated g = generate_content(config);
    for (const auto& spec : g.specs) {
        const fs::path inst_dir = cat_dir / std::to_string(spec.instance_id);
        fs::create_directories(inst_dir);
        for (int k = 0; k < config.views; ++k) {
            const Image img = render(spec, g.viewpoints[k]);
            save_png((inst_dir / ("view_" + std::to_string(k) + ".png")).string(), img);
        }
    }
    const fs::path manifest_path = cat_dir / "manifest.json";
    std::ofstream out(manifest_path);
    if (!out) throw std::runtime_error("cannot write manifest: " + manifest_path.string());
    out << manifest_json(config, g).dump(2) << "\n";
    return manifest_path;
}

Dataset load_dataset(const fs::path& category_dir) {
    std::ifstream in(category_dir / "manifest.json");
    if (!in) throw std::runtime_error("missing manifest in " + category_dir.string());
    json m = json::parse(in);
    if (m.at("schema_version").get<int>() != kManifestSchemaVersion)
        throw std::runtime_error("unsupported manifest schema version");

    Dataset ds;
    ds.category = category_from_name(m.at("category").get<std::string>());
    ds.seed = m.at("seed").get<std::uint64_t>();
    ds.radius = m.at("radius").get<double>();
    for (const auto& v : m.at("views")) {
        Vec7 vec;
        for (int i = 0; i < 7; ++i) vec[i] = v.at(i).get<double>();
        CameraViewpoint vp = CameraViewpoint::from_vec7(vec);
        vp.validate(ds.radius);
        ds.viewpoints.push_back(vp);
    }
    for (const auto& ij : m.at("instances")) ds.specs.push_back(spec_from_json(ij));
    for (const auto& spec : ds.specs) {
        std::vector<Image> views;
        const fs::path inst_dir = category_dir / std::to_string(spec.instance_id);
        for (size_t k = 0; k < ds.viewpoints.size(); ++k)
            views.push_back(load_png((inst_dir / ("view_" + std::to_string(k) + ".png")).string()));
        ds.images.push_back(std::move(views));
    }
    return ds;
}

Dataset make_dataset(const DatasetConfig& config) {
    if (config.instances < 1 || config.views < 1)
        throw InvalidInput("dataset needs at least one instance and one view");
    const Generated g = generate_content(config);
    Dataset ds;
    ds.category = config.category;
    ds.seed = config.seed;
    ds.radius = config.radius;
    ds.specs = g.specs;
    ds.viewpoints = g.viewpoints;
    for (const auto& spec : ds.specs) {
        std::vector<Image> views;
        for (int k = 0; k < config.views; ++k)
            views.push_back(quantize8(render(spec, ds.viewpoints[k])));
        ds.images.push_back(std::move(views));
    }
    return ds;
}

}  // namespace shapepose::scene
