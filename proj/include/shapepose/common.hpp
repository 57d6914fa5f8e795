#ifndef SHAPEPOSE_COMMON_HPP
#define SHAPEPOSE_COMMON_HPP

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace shapepose {

using Vec3 = Eigen::Vector3d;
using Vec7 = Eigen::Matrix<double, 7, 1>;
using Quat = Eigen::Quaterniond;

/// Thrown when an input violates a documented precondition.
struct InvalidInput : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Thrown when an operation is not defined for a model kind.
struct UnsupportedOperation : std::logic_error {
    using std::logic_error::logic_error;
};

/// Thrown when a training step produced a non-finite loss.
struct TrainingDiverged : std::runtime_error {
    using std::runtime_error::runtime_error;
};

constexpr int kImageSize = 120;
constexpr int kImageValues = kImageSize * kImageSize * 3;

/// 120x120 RGB image, channel values in [0,1].
/// Layout: rgb[(y * width + x) * 3 + c], row 0 at the top.
struct Image {
    int width = kImageSize;
    int height = kImageSize;
    std::vector<float> rgb;

    Image() : rgb(static_cast<size_t>(kImageValues), 0.f) {}
    Image(int w, int h) : width(w), height(h), rgb(static_cast<size_t>(w) * h * 3, 0.f) {}

    float& at(int y, int x, int c) { return rgb[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    float at(int y, int x, int c) const { return rgb[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    size_t values() const { return rgb.size(); }
};

/// Quantize to 8 bit and back, matching what a PNG round trip produces.
Image quantize8(const Image& img);

void save_png(const std::string& path, const Image& img);
Image load_png(const std::string& path);

/// Deterministic seeded RNG used across the project.
using Rng = std::mt19937_64;

/// Derive an independent child seed from a root seed and a stream index.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
    // splitmix64 over the combined value
    std::uint64_t z = root + 0x9e3779b97f4a7c15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// FNV-1a over a byte string, used for config hashes in checkpoints.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace shapepose

#endif
