#ifndef SHAPEPOSE_DATASET_HPP
#define SHAPEPOSE_DATASET_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "shapepose/scene.hpp"

namespace shapepose::scene {

constexpr int kManifestSchemaVersion = 1;

struct DatasetConfig {
    std::filesystem::path root;
    Category category = Category::bottle;
    int instances = 15;
    int views = 64;
    std::uint64_t seed = 0;
    double radius = 2.5;
    bool full_sphere = false;
    bool overwrite = false;
};

/// Generates `<root>/<category>/<id>/view_<k>.png` plus a manifest. All
/// instances share one viewpoint list, indexed by view id, so that two
/// instances observed at the same view index sit at the identical viewpoint.
/// Returns the manifest path.
std::filesystem::path generate_dataset(const DatasetConfig& config);

/// In-memory dataset for one category, as loaded from the disk layout.
struct Dataset {
    Category category = Category::bottle;
    std::uint64_t seed = 0;
    double radius = 2.5;
    std::vector<ObjectSpec> specs;
    std::vector<CameraViewpoint> viewpoints;        ///< shared across instances
    std::vector<std::vector<Image>> images;         ///< [instance][view]

    int n_instances() const { return static_cast<int>(specs.size()); }
    int n_views() const { return static_cast<int>(viewpoints.size()); }
};

Dataset load_dataset(const std::filesystem::path& category_dir);

/// Render a dataset directly in memory (no disk round trip); same content as
/// generate_dataset modulo 8-bit quantization, which is applied here too so
/// both paths feed the models identical pixels.
Dataset make_dataset(const DatasetConfig& config);

}  // namespace shapepose::scene

#endif
