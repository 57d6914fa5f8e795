#ifndef SHAPEPOSE_SCENE_HPP
#define SHAPEPOSE_SCENE_HPP

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "shapepose/common.hpp"

namespace shapepose::scene {

enum class Category { bottle, bowl, can, mug };

const char* category_name(Category c);
Category category_from_name(const std::string& name);

/// Torus-segment parameters for a mug handle, in the object frame.
struct HandleSpec {
    double center_x = 0.0;   ///< distance of the loop center from the revolution axis
    double center_z = 0.0;   ///< height of the loop center
    double major_radius = 0.25;
    double minor_radius = 0.05;
    double sweep_deg = 240.0;  ///< angular extent of the torus segment
};

/// Procedural object: a surface of revolution plus an optional handle.
struct ObjectSpec {
    Category category = Category::bottle;
    /// (height fraction, radius) control points; fractions strictly increasing in [0,1].
    std::vector<std::array<double, 2>> profile;
    std::optional<HandleSpec> handle;
    std::array<double, 3> albedo = {0.8, 0.2, 0.2};
    int instance_id = 0;

    void validate() const;  ///< throws InvalidInput on violated invariants
};

/// Camera on a sphere of radius R around the origin, oriented to look at the origin.
struct CameraViewpoint {
    Vec3 position = Vec3(0, 0, 2.5);
    Quat orientation = Quat::Identity();

    Vec7 to_vec7() const;
    static CameraViewpoint from_vec7(const Vec7& v);
    void validate(double radius = -1.0) const;  ///< radius < 0 skips the |position|=R check
};

/// Absolute-target action: move the camera to this viewpoint.
struct Action {
    CameraViewpoint target;
};

/// Orientation that points the canonical camera forward axis (0,0,-1) at the origin.
/// World up is +z; when the position is collinear with the world up axis the
/// fallback up vector (0,1,0) is used, which makes the +z pole map to identity.
Quat look_at(const Vec3& position);

/// Draw a random object of the given category. Same seed, same spec.
ObjectSpec sample_object(Category category, Rng& rng);

/// Deterministic software render of the object from the viewpoint.
Image render(const ObjectSpec& spec, const CameraViewpoint& viewpoint);

struct EnvState {
    ObjectSpec spec;
    CameraViewpoint viewpoint;
    std::uint64_t rng_seed = 0;
};

/// Move the camera to the action target and observe. Absolute-target semantics.
std::pair<EnvState, Image> step(const EnvState& state, const Action& action);

/// Uniform random viewpoint on the (upper-hemisphere by default) camera sphere.
struct ViewpointSampler {
    double radius = 2.5;
    bool full_sphere = false;
    double min_elevation_deg = 8.0;  ///< keeps cameras off the grazing rim
    CameraViewpoint sample(Rng& rng) const;
};

}  // namespace shapepose::scene

#endif
