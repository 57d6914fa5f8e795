#include "shapepose/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace shapepose::scene {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

const char* category_name(Category c) {
    switch (c) {
        case Category::bottle: return "bottle";
        case Category::bowl: return "bowl";
        case Category::can: return "can";
        case Category::mug: return "mug";
    }
    throw InvalidInput("unknown category");
}

Category category_from_name(const std::string& name) {
    if (name == "bottle") return Category::bottle;
    if (name == "bowl") return Category::bowl;
    if (name == "can") return Category::can;
    if (name == "mug") return Category::mug;
    throw InvalidInput("unknown category: " + name);
}

void ObjectSpec::validate() const {
    if (profile.size() < 2) throw InvalidInput("profile needs at least 2 control points");
    double prev = -1.0;
    for (const auto& cp : profile) {
        if (cp[0] < 0.0 || cp[0] > 1.0) throw InvalidInput("height fraction outside [0,1]");
        if (cp[0] <= prev) throw InvalidInput("height fractions must be strictly increasing");
        if (cp[1] <= 0.0) throw InvalidInput("profile radius must be positive");
        prev = cp[0];
    }
    const bool is_mug = category == Category::mug;
    if (is_mug != handle.has_value())
        throw InvalidInput("handle present iff category is mug");
    for (double a : albedo)
        if (a < 0.0 || a > 1.0) throw InvalidInput("albedo outside [0,1]");
}

Vec7 CameraViewpoint::to_vec7() const {
    Vec7 v;
    v << position.x(), position.y(), position.z(),
        orientation.w(), orientation.x(), orientation.y(), orientation.z();
    return v;
}

CameraViewpoint CameraViewpoint::from_vec7(const Vec7& v) {
    CameraViewpoint vp;
    vp.position = Vec3(v[0], v[1], v[2]);
    vp.orientation = Quat(v[3], v[4], v[5], v[6]);
    return vp;
}

void CameraViewpoint::validate(double radius) const {
    if (radius > 0.0 && std::abs(position.norm() - radius) > 1e-6)
        throw InvalidInput("camera position not on the sphere");
    if (std::abs(orientation.norm() - 1.0) > 1e-6)
        throw InvalidInput("camera quaternion not unit norm");
    if (position.norm() <= 0.0) throw InvalidInput("camera at the origin");
    const Vec3 fwd = orientation * Vec3(0, 0, -1);
    const Vec3 to_origin = (-position).normalized();
    if (fwd.dot(to_origin) <= 1.0 - 1e-6)
        throw InvalidInput("camera does not look at the origin");
}

Quat look_at(const Vec3& position) {
    if (position.norm() <= 0.0) throw InvalidInput("look_at: zero-length position");
    const Vec3 f = (-position).normalized();
    const Vec3 zc = -f;
    Vec3 up(0, 0, 1);
    if (std::abs(f.z()) > 1.0 - 1e-9) up = Vec3(0, 1, 0);  // pole fallback
    const Vec3 xc = up.cross(zc).normalized();
    const Vec3 yc = zc.cross(xc);
    Eigen::Matrix3d rot;
    rot.col(0) = xc;
    rot.col(1) = yc;
    rot.col(2) = zc;
    Quat q(rot);
    q.normalize();
    if (q.w() < 0) q.coeffs() = -q.coeffs();
    return q;
}

ObjectSpec sample_object(Category category, Rng& rng) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    auto u = [&](double lo, double hi) { return lo + (hi - lo) * uni(rng); };

    ObjectSpec spec;
    spec.category = category;
    switch (category) {
        case Category::bottle: {
            // wide body, shoulder, narrow neck
            const double body = u(0.26, 0.36);
            const double neck = u(0.07, 0.13);
            const double shoulder_h = u(0.55, 0.7);
            spec.profile = {{0.0, body * u(0.85, 1.0)},
                            {0.25, body},
                            {shoulder_h, body * u(0.9, 1.0)},
                            {shoulder_h + 0.12, neck * u(1.2, 1.6)},
                            {0.92, neck},
                            {1.0, neck * u(0.95, 1.1)}};
            break;
        }
        case Category::bowl: {
            // flaring cup shape
            const double base = u(0.1, 0.18);
            const double rim = u(0.38, 0.52);
            spec.profile = {{0.0, base},
                            {0.25, u(0.5, 0.75) * rim},
                            {0.6, u(0.82, 0.95) * rim},
                            {1.0, rim}};
            break;
        }
        case Category::can: {
            const double r = u(0.2, 0.34);
            spec.profile = {{0.0, r * u(0.96, 1.0)},
                            {0.5, r},
                            {1.0, r * u(0.96, 1.0)}};
            break;
        }
        case Category::mug: {
            const double r = u(0.24, 0.34);
            spec.profile = {{0.0, r * u(0.9, 1.0)},
                            {0.5, r},
                            {1.0, r * u(0.95, 1.05)}};
            HandleSpec h;
            h.center_x = r + u(0.1, 0.16);
            h.center_z = u(-0.08, 0.08);
            h.major_radius = u(0.16, 0.24);
            h.minor_radius = u(0.035, 0.055);
            h.sweep_deg = u(210.0, 260.0);
            spec.handle = h;
            break;
        }
    }
    spec.albedo = {u(0.15, 0.95), u(0.15, 0.95), u(0.15, 0.95)};
    spec.validate();
    return spec;
}

namespace {

struct Mesh {
    std::vector<Vec3> verts;
    std::vector<std::array<int, 3>> tris;
};

double profile_radius(const ObjectSpec& spec, double t) {
    const auto& p = spec.profile;
    if (t <= p.front()[0]) return p.front()[1];
    if (t >= p.back()[0]) return p.back()[1];
    for (size_t i = 1; i < p.size(); ++i) {
        if (t <= p[i][0]) {
            const double w = (t - p[i - 1][0]) / (p[i][0] - p[i - 1][0]);
            return p[i - 1][1] + w * (p[i][1] - p[i - 1][1]);
        }
    }
    return p.back()[1];
}

constexpr int kAzimuthSegments = 40;
constexpr int kProfileRings = 25;

Mesh build_mesh(const ObjectSpec& spec) {
    Mesh mesh;
    const int N = kAzimuthSegments;
    const int M = kProfileRings;

    // rings of the revolution surface; object height 1, centered on z=0
    for (int i = 0; i < M; ++i) {
        const double t = static_cast<double>(i) / (M - 1);
        const double r = profile_radius(spec, t);
        const double z = t - 0.5;
        for (int j = 0; j < N; ++j) {
            const double a = 2.0 * kPi * j / N;
            mesh.verts.push_back(Vec3(r * std::cos(a), r * std::sin(a), z));
        }
    }
    for (int i = 0; i + 1 < M; ++i) {
        for (int j = 0; j < N; ++j) {
            const int j2 = (j + 1) % N;
            const int a = i * N + j, b = i * N + j2, c = (i + 1) * N + j, d = (i + 1) * N + j2;
            mesh.tris.push_back({a, c, b});
            mesh.tris.push_back({b, c, d});
        }
    }
    // caps
    const int bottom_center = static_cast<int>(mesh.verts.size());
    mesh.verts.push_back(Vec3(0, 0, -0.5));
    const int top_center = static_cast<int>(mesh.verts.size());
    mesh.verts.push_back(Vec3(0, 0, 0.5));
    for (int j = 0; j < N; ++j) {
        const int j2 = (j + 1) % N;
        mesh.tris.push_back({bottom_center, j, j2});
        const int base = (M - 1) * N;
        mesh.tris.push_back({top_center, base + j2, base + j});
    }

    if (spec.handle) {
        const HandleSpec& h = *spec.handle;
        const int S = 16, T = 10;  // sweep and tube segments
        const double sweep = h.sweep_deg * kPi / 180.0;
        const int base = static_cast<int>(mesh.verts.size());
        for (int i = 0; i <= S; ++i) {
            const double th = -sweep / 2 + sweep * i / S;
            const Vec3 ring_dir(std::cos(th), 0.0, std::sin(th));
            const Vec3 center = Vec3(h.center_x, 0, h.center_z) + h.major_radius * ring_dir;
            for (int j = 0; j < T; ++j) {
                const double ph = 2.0 * kPi * j / T;
                const Vec3 p = center + h.minor_radius * (std::cos(ph) * ring_dir + std::sin(ph) * Vec3(0, 1, 0));
                mesh.verts.push_back(p);
            }
        }
        for (int i = 0; i < S; ++i) {
            for (int j = 0; j < T; ++j) {
                const int j2 = (j + 1) % T;
                const int a = base + i * T + j, b = base + i * T + j2;
                const int c = base + (i + 1) * T + j, d = base + (i + 1) * T + j2;
                mesh.tris.push_back({a, c, b});
                mesh.tris.push_back({b, c, d});
            }
        }
    }
    return mesh;
}

constexpr double kFovYDeg = 50.0;
constexpr float kBackground = 0.5f;
constexpr double kAmbient = 0.35;

}  // namespace

Image render(const ObjectSpec& spec, const CameraViewpoint& viewpoint) {
    spec.validate();
    viewpoint.validate();

    const Mesh mesh = build_mesh(spec);
    const int W = kImageSize, H = kImageSize;
    Image img;
    std::fill(img.rgb.begin(), img.rgb.end(), kBackground);
    std::vector<double> zbuf(static_cast<size_t>(W) * H, -std::numeric_limits<double>::infinity());

    const Eigen::Matrix3d cam_to_world = viewpoint.orientation.toRotationMatrix();
    const Eigen::Matrix3d world_to_cam = cam_to_world.transpose();
    const double tan_half = std::tan(0.5 * kFovYDeg * kPi / 180.0);

    // camera-frame positions and projected pixel coordinates
    std::vector<Vec3> cam_pts(mesh.verts.size());
    std::vector<Eigen::Vector2d> pix(mesh.verts.size());
    for (size_t i = 0; i < mesh.verts.size(); ++i) {
        const Vec3 pc = world_to_cam * (mesh.verts[i] - viewpoint.position);
        cam_pts[i] = pc;
        const double depth = -pc.z();
        if (depth <= 1e-6) {
            pix[i] = Eigen::Vector2d(-1e9, -1e9);
            continue;
        }
        const double ndc_x = pc.x() / (depth * tan_half);
        const double ndc_y = pc.y() / (depth * tan_half);
        pix[i] = Eigen::Vector2d((ndc_x + 1.0) * 0.5 * W, (1.0 - (ndc_y + 1.0) * 0.5) * H);
    }

    // headlight: directional light along the view axis, so that shading is
    // invariant under azimuth rotation of revolution surfaces
    const Vec3 light_dir = (cam_to_world * Vec3(0, 0, -1)).normalized();

    bool any_pixel = false;
    for (const auto& tri : mesh.tris) {
        const Eigen::Vector2d& p0 = pix[tri[0]];
        const Eigen::Vector2d& p1 = pix[tri[1]];
        const Eigen::Vector2d& p2 = pix[tri[2]];
        if (p0.x() < -1e8 || p1.x() < -1e8 || p2.x() < -1e8) continue;

        const double area = (p1.x() - p0.x()) * (p2.y() - p0.y()) - (p2.x() - p0.x()) * (p1.y() - p0.y());
        if (std::abs(area) < 1e-12) continue;

        const Vec3& a = mesh.verts[tri[0]];
        const Vec3& b = mesh.verts[tri[1]];
        const Vec3& c = mesh.verts[tri[2]];
        Vec3 n = (b - a).cross(c - a);
        const double nn = n.norm();
        if (nn < 1e-14) continue;
        n /= nn;
        // two-sided shading: flip the normal toward the camera
        const Vec3 view_vec = (viewpoint.position - a).normalized();
        if (n.dot(view_vec) < 0) n = -n;
        const double diffuse = std::max(0.0, n.dot(-light_dir));
        const double shade = kAmbient + (1.0 - kAmbient) * diffuse;

        const int x0 = std::max(0, static_cast<int>(std::floor(std::min({p0.x(), p1.x(), p2.x()}))));
        const int x1 = std::min(W - 1, static_cast<int>(std::ceil(std::max({p0.x(), p1.x(), p2.x()}))));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::min({p0.y(), p1.y(), p2.y()}))));
        const int y1 = std::min(H - 1, static_cast<int>(std::ceil(std::max({p0.y(), p1.y(), p2.y()}))));
        if (x0 > x1 || y0 > y1) continue;

        const double inv_area = 1.0 / area;
        const double d0 = cam_pts[tri[0]].z(), d1 = cam_pts[tri[1]].z(), d2 = cam_pts[tri[2]].z();
        for (int y = y0; y <= y1; ++y) {
            const double py = y + 0.5;
            for (int x = x0; x <= x1; ++x) {
                const double px = x + 0.5;
                double w0 = (p1.x() - px) * (p2.y() - py) - (p2.x() - px) * (p1.y() - py);
                double w1 = (p2.x() - px) * (p0.y() - py) - (p0.x() - px) * (p2.y() - py);
                double w2 = (p0.x() - px) * (p1.y() - py) - (p1.x() - px) * (p0.y() - py);
                w0 *= inv_area;
                w1 *= inv_area;
                w2 *= inv_area;
                if (w0 < 0 || w1 < 0 || w2 < 0) continue;
                const double z = w0 * d0 + w1 * d1 + w2 * d2;  // camera z, larger = closer
                const size_t idx = static_cast<size_t>(y) * W + x;
                if (z <= zbuf[idx]) continue;
                zbuf[idx] = z;
                for (int ch = 0; ch < 3; ++ch)
                    img.rgb[idx * 3 + ch] = static_cast<float>(std::clamp(shade * spec.albedo[ch], 0.0, 1.0));
                any_pixel = true;
            }
        }
    }
    if (!any_pixel) throw std::runtime_error("render: object produced no pixels");
    return img;
}

std::pair<EnvState, Image> step(const EnvState& state, const Action& action) {
    action.target.validate();
    EnvState next = state;
    next.viewpoint = action.target;
    return {next, render(next.spec, next.viewpoint)};
}

CameraViewpoint ViewpointSampler::sample(Rng& rng) const {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double az = 2.0 * kPi * uni(rng);
    const double min_sin = std::sin(min_elevation_deg * kPi / 180.0);
    double sin_el;
    if (full_sphere) {
        // cos-uniform over both hemispheres, excluding the grazing band
        sin_el = min_sin + (1.0 - min_sin) * uni(rng);
        if (uni(rng) < 0.5) sin_el = -sin_el;
    } else {
        sin_el = min_sin + (1.0 - min_sin) * uni(rng);
    }
    const double cos_el = std::sqrt(std::max(0.0, 1.0 - sin_el * sin_el));
    CameraViewpoint vp;
    vp.position = radius * Vec3(cos_el * std::cos(az), cos_el * std::sin(az), sin_el);
    vp.orientation = look_at(vp.position);
    return vp;
}

}  // namespace shapepose::scene
