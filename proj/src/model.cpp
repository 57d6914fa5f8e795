#include "shapepose/model.hpp"

#include <cstring>

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

namespace shapepose::models {

using nlohmann::ordered_json;

const char* kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::vae: return "vae";
        case ModelKind::gqn: return "gqn";
        case ModelKind::vaesp: return "vaesp";
    }
    throw InvalidInput("unknown model kind");
}

ModelKind kind_from_name(const std::string& name) {
    if (name == "vae") return ModelKind::vae;
    if (name == "gqn") return ModelKind::gqn;
    if (name == "vaesp") return ModelKind::vaesp;
    throw InvalidInput("unknown model kind: " + name);
}

std::vector<int> spatial_chain(int image_size, int layers) {
    std::vector<int> sizes{image_size};
    for (int i = 0; i < layers; ++i) sizes.push_back((sizes.back() + 1) / 2);
    return sizes;
}

std::string ArchConfig::canonical_json(ModelKind kind) const {
    ordered_json j;
    j["kind"] = kind_name(kind);
    j["image_size"] = image_size;
    j["latent_dim"] = latent_dim;
    j["pose_dim"] = pose_dim;
    j["shape_dim"] = shape_dim;
    j["enc_features"] = enc_features;
    j["dec_c0"] = dec_c0;
    j["dec_features"] = dec_features;
    j["trans_hidden"] = trans_hidden;
    j["gqn_code_dim"] = gqn_code_dim;
    j["leaky_slope"] = leaky_slope;
    return j.dump();
}

ArchConfig default_config(ModelKind kind) {
    ArchConfig cfg;
    switch (kind) {
        case ModelKind::vae: cfg.dec_features = {128, 28, 14, 12, 4}; break;
        case ModelKind::vaesp: cfg.dec_features = {120, 40, 10, 14, 5}; break;
        case ModelKind::gqn: cfg.dec_features = {40, 80, 10, 12, 4}; break;
    }
    return cfg;
}

template <class S>
Model<S>::Model(ModelKind kind, ArchConfig cfg) : kind_(kind), cfg_(std::move(cfg)), act_(cfg_.leaky_slope) {
    if (cfg_.enc_features.size() != 6 || cfg_.dec_features.size() != 5 || cfg_.trans_hidden.size() != 3)
        throw InvalidInput("architecture config has wrong layer counts");
    if (cfg_.pose_dim + cfg_.shape_dim != cfg_.latent_dim)
        throw InvalidInput("pose_dim + shape_dim must equal latent_dim");

    const auto sizes = spatial_chain(cfg_.image_size, 6);

    // encoder: 6 conv k3 s2 p1, features doubling, LeakyReLU after each
    int cin = 3;
    for (int i = 0; i < 6; ++i) {
        enc_conv_[i] = nn::Conv3x3<S>(store_, "encoder.conv" + std::to_string(i),
                                      cin, cfg_.enc_features[i], sizes[i], sizes[i], 2);
        cin = cfg_.enc_features[i];
    }
    flat_dim_ = cfg_.enc_features.back() * sizes[6] * sizes[6];
    if (kind_ == ModelKind::vaesp) {
        enc_heads_.emplace_back(store_, "encoder.pose_mean", flat_dim_, cfg_.pose_dim);
        enc_heads_.emplace_back(store_, "encoder.pose_log_var", flat_dim_, cfg_.pose_dim);
        enc_heads_.emplace_back(store_, "encoder.shape_mean", flat_dim_, cfg_.shape_dim);
        enc_heads_.emplace_back(store_, "encoder.shape_log_var", flat_dim_, cfg_.shape_dim);
    } else {
        enc_heads_.emplace_back(store_, "encoder.mean", flat_dim_, cfg_.latent_dim);
        enc_heads_.emplace_back(store_, "encoder.log_var", flat_dim_, cfg_.latent_dim);
    }

    // transition: 3 hidden linears + mean/log_var heads (not for gqn)
    if (kind_ != ModelKind::gqn) {
        const int tdim = encode_z_dim();
        int tin = tdim + 7;
        for (int i = 0; i < 3; ++i) {
            trans_hidden_[i] = nn::Linear<S>(store_, "transition.fc" + std::to_string(i), tin, cfg_.trans_hidden[i]);
            tin = cfg_.trans_hidden[i];
        }
        trans_heads_[0] = nn::Linear<S>(store_, "transition.mean", tin, tdim);
        trans_heads_[1] = nn::Linear<S>(store_, "transition.log_var", tin, tdim);
    }

    // decoder: latent (or gqn code) -> bridge -> 6x (upsample, conv k3 s1 p1)
    const int s0 = sizes[6];
    if (kind_ == ModelKind::gqn)
        gqn_code_ = nn::Linear<S>(store_, "decoder.code", cfg_.latent_dim + 7, cfg_.gqn_code_dim);
    const int bridge_in = kind_ == ModelKind::gqn ? cfg_.gqn_code_dim : cfg_.latent_dim;
    dec_bridge_ = nn::Linear<S>(store_, "decoder.bridge", bridge_in, cfg_.dec_c0 * s0 * s0);

    dec_sizes_.assign(sizes.rbegin(), sizes.rend());  // s0 .. image_size
    int c = cfg_.dec_c0;
    for (int i = 0; i < 6; ++i) {
        dec_up_.emplace_back(dec_sizes_[i], dec_sizes_[i], dec_sizes_[i + 1], dec_sizes_[i + 1]);
        const int cout = i < 5 ? cfg_.dec_features[i] : 3;
        dec_conv_[i] = nn::Conv3x3<S>(store_, "decoder.conv" + std::to_string(i),
                                      c, cout, dec_sizes_[i + 1], dec_sizes_[i + 1], 1);
        c = cout;
    }
}

template <class S>
EncodeOut<S> Model<S>::encode(const nn::Mat<S>& image_chw, EncoderCache<S>& cache) const {
    if (image_chw.rows() != 3 || image_chw.cols() != cfg_.image_size * cfg_.image_size)
        throw InvalidInput("encode: wrong image shape");
    nn::Mat<S> x = image_chw;
    for (int i = 0; i < 6; ++i) {
        x = enc_conv_[i].forward(store_, x, cache.conv[i]);
        x = act_.forward(x, cache.act[i]);
    }
    // flatten channel-major
    nn::Vec<S> flat(flat_dim_);
    const int hw = static_cast<int>(x.cols());
    for (int ch = 0; ch < x.rows(); ++ch)
        for (int p = 0; p < hw; ++p) flat[ch * hw + p] = x(ch, p);
    cache.flat = flat;

    EncodeOut<S> out;
    if (kind_ == ModelKind::vaesp) {
        out.z.mean = enc_heads_[0].forward(store_, flat, cache.head[0]);
        out.z.log_var = enc_heads_[1].forward(store_, flat, cache.head[1]);
        out.shape.mean = enc_heads_[2].forward(store_, flat, cache.head[2]);
        out.shape.log_var = enc_heads_[3].forward(store_, flat, cache.head[3]);
    } else {
        out.z.mean = enc_heads_[0].forward(store_, flat, cache.head[0]);
        out.z.log_var = enc_heads_[1].forward(store_, flat, cache.head[1]);
    }
    return out;
}

template <class S>
EncodeOut<S> Model<S>::encode(const Image& img) const {
    EncoderCache<S> cache;
    return encode(image_to_tensor<S>(img), cache);
}

template <class S>
void Model<S>::encode_backward(const EncoderCache<S>& cache, const Gauss<S>& gz, const Gauss<S>& gshape) {
    nn::Vec<S> gflat = nn::Vec<S>::Zero(flat_dim_);
    gflat += enc_heads_[0].backward(store_, cache.head[0], gz.mean);
    gflat += enc_heads_[1].backward(store_, cache.head[1], gz.log_var);
    if (kind_ == ModelKind::vaesp) {
        gflat += enc_heads_[2].backward(store_, cache.head[2], gshape.mean);
        gflat += enc_heads_[3].backward(store_, cache.head[3], gshape.log_var);
    }
    const int cend = cfg_.enc_features.back();
    const int hw = flat_dim_ / cend;
    nn::Mat<S> gx(cend, hw);
    for (int ch = 0; ch < cend; ++ch)
        for (int p = 0; p < hw; ++p) gx(ch, p) = gflat[ch * hw + p];
    for (int i = 5; i >= 0; --i) {
        gx = act_.backward(cache.act[i], gx);
        gx = enc_conv_[i].backward(store_, cache.conv[i], gx);
    }
}

template <class S>
nn::Mat<S> Model<S>::decode(const nn::Vec<S>& latent, const nn::Vec<S>* viewpoint,
                            DecoderCache<S>& cache) const {
    nn::Vec<S> code;
    if (kind_ == ModelKind::gqn) {
        if (!viewpoint) throw InvalidInput("gqn decode requires a viewpoint");
        if (latent.size() != cfg_.latent_dim || viewpoint->size() != 7)
            throw InvalidInput("gqn decode: wrong latent/viewpoint size");
        nn::Vec<S> cat(cfg_.latent_dim + 7);
        cat << latent, *viewpoint;
        code = gqn_code_.forward(store_, cat, cache.code);
    } else {
        if (latent.size() != cfg_.latent_dim) throw InvalidInput("decode: wrong latent size");
        code = latent;
    }
    const nn::Vec<S> bridged = dec_bridge_.forward(store_, code, cache.bridge);
    const int s0 = dec_sizes_[0];
    nn::Mat<S> x(cfg_.dec_c0, s0 * s0);
    for (int ch = 0; ch < cfg_.dec_c0; ++ch)
        for (int p = 0; p < s0 * s0; ++p) x(ch, p) = bridged[ch * s0 * s0 + p];
    for (int i = 0; i < 6; ++i) {
        x = dec_up_[i].forward(x);
        x = dec_conv_[i].forward(store_, x, cache.conv[i]);
        if (i < 5) x = act_.forward(x, cache.act[i]);
    }
    return sigmoid_.forward(x, cache.sig);
}

template <class S>
Image Model<S>::decode_image(const nn::Vec<S>& latent, const nn::Vec<S>* viewpoint) const {
    DecoderCache<S> cache;
    return tensor_to_image<S>(decode(latent, viewpoint, cache), cfg_.image_size);
}

template <class S>
nn::Vec<S> Model<S>::decode_backward(const DecoderCache<S>& cache, const nn::Mat<S>& gout) {
    nn::Mat<S> gx = sigmoid_.backward(cache.sig, gout);
    for (int i = 5; i >= 0; --i) {
        if (i < 5) gx = act_.backward(cache.act[i], gx);
        gx = dec_conv_[i].backward(store_, cache.conv[i], gx);
        gx = dec_up_[i].backward(gx);
    }
    const int s0 = dec_sizes_[0];
    nn::Vec<S> gbridged(cfg_.dec_c0 * s0 * s0);
    for (int ch = 0; ch < cfg_.dec_c0; ++ch)
        for (int p = 0; p < s0 * s0; ++p) gbridged[ch * s0 * s0 + p] = gx(ch, p);
    nn::Vec<S> gcode = dec_bridge_.backward(store_, cache.bridge, gbridged);
    if (kind_ == ModelKind::gqn) {
        const nn::Vec<S> gcat = gqn_code_.backward(store_, cache.code, gcode);
        return gcat.head(cfg_.latent_dim);
    }
    return gcode;
}

template <class S>
Gauss<S> Model<S>::transition(const nn::Vec<S>& latent, const nn::Vec<S>& action,
                              TransitionCache<S>& cache) const {
    if (kind_ == ModelKind::gqn)
        throw UnsupportedOperation("gqn has no transition model");
    const int tdim = encode_z_dim();
    if (latent.size() != tdim) throw InvalidInput("transition: wrong latent size");
    if (action.size() != 7) throw InvalidInput("transition: action must be a 7-vector");
    nn::Vec<S> x(tdim + 7);
    x << latent, action;
    for (int i = 0; i < 3; ++i) {
        x = trans_hidden_[i].forward(store_, x, cache.hidden[i]);
        nn::Mat<S> m = x;
        x = act_.forward(m, cache.act[i]).col(0);
    }
    Gauss<S> out;
    out.mean = trans_heads_[0].forward(store_, x, cache.head[0]);
    out.log_var = trans_heads_[1].forward(store_, x, cache.head[1]);
    return out;
}

template <class S>
Gauss<S> Model<S>::transition(const nn::Vec<S>& latent, const nn::Vec<S>& action) const {
    TransitionCache<S> cache;
    return transition(latent, action, cache);
}

template <class S>
nn::Vec<S> Model<S>::transition_backward(const TransitionCache<S>& cache, const Gauss<S>& gbelief) {
    nn::Vec<S> gx = trans_heads_[0].backward(store_, cache.head[0], gbelief.mean);
    gx += trans_heads_[1].backward(store_, cache.head[1], gbelief.log_var);
    for (int i = 2; i >= 0; --i) {
        nn::Mat<S> gm = gx;
        gx = act_.backward(cache.act[i], gm).col(0);
        gx = trans_hidden_[i].backward(store_, cache.hidden[i], gx);
    }
    return gx.head(encode_z_dim());
}

// ---------------------------------------------------------------------------
// Checkpoint IO

namespace {
constexpr char kMagic[8] = {'S', 'P', 'C', 'K', 'P', 'T', '1', '\n'};

template <class T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}
}  // namespace

template <class S>
void save_checkpoint(const std::filesystem::path& path, const Model<S>& model, const TrainMeta& meta) {
    const std::string config = model.config().canonical_json(model.kind());
    ordered_json header;
    header["config"] = ordered_json::parse(config);
    header["config_hash"] = fnv1a(config);
    header["param_count"] = model.count_parameters();
    header["dtype"] = "f64";
    header["meta"] = {{"seed", meta.seed}, {"epoch", meta.epoch},
                      {"multipliers", meta.multipliers}, {"recon_ema", meta.recon_ema},
                      {"category", meta.category}};
    const std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
    out.write(kMagic, 8);
    write_pod<std::uint64_t>(out, hs.size());
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));

    const auto& ps = model.params();
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(ps.size()));
    for (int i = 0; i < ps.size(); ++i) {
        const auto& p = ps[i];
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
        out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rows()));
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.cols()));
        for (int r = 0; r < p.value.rows(); ++r)
            for (int c = 0; c < p.value.cols(); ++c)
                write_pod<double>(out, static_cast<double>(p.value(r, c)));
    }
    if (!out) throw std::runtime_error("checkpoint write failed: " + path.string());
}

template <class S>
std::pair<Model<S>, TrainMeta> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint: " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("not a checkpoint file: " + path.string());
    const auto hlen = read_pod<std::uint64_t>(in);
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    ordered_json header = ordered_json::parse(hs);

    const ModelKind kind = kind_from_name(header.at("config").at("kind").get<std::string>());
    ArchConfig cfg;
    const auto& cj = header.at("config");
    cfg.image_size = cj.at("image_size").get<int>();
    cfg.latent_dim = cj.at("latent_dim").get<int>();
    cfg.pose_dim = cj.at("pose_dim").get<int>();
    cfg.shape_dim = cj.at("shape_dim").get<int>();
    cfg.enc_features = cj.at("enc_features").get<std::vector<int>>();
    cfg.dec_c0 = cj.at("dec_c0").get<int>();
    cfg.dec_features = cj.at("dec_features").get<std::vector<int>>();
    cfg.trans_hidden = cj.at("trans_hidden").get<std::vector<int>>();
    cfg.gqn_code_dim = cj.at("gqn_code_dim").get<int>();
    cfg.leaky_slope = cj.at("leaky_slope").get<double>();

    Model<S> model(kind, cfg);
    const std::uint64_t expected = fnv1a(model.config().canonical_json(kind));
    if (expected != header.at("config_hash").get<std::uint64_t>())
        throw std::runtime_error("checkpoint config hash mismatch");

    auto& ps = model.params();
    const auto n = read_pod<std::uint32_t>(in);
    if (static_cast<int>(n) != ps.size())
        throw std::runtime_error("checkpoint parameter list mismatch");
    for (int i = 0; i < ps.size(); ++i) {
        const auto nl = read_pod<std::uint32_t>(in);
        std::string name(nl, '\0');
        in.read(name.data(), nl);
        const auto rows = read_pod<std::uint32_t>(in);
        const auto cols = read_pod<std::uint32_t>(in);
        auto& p = ps[i];
        if (name != p.name || static_cast<int>(rows) != p.value.rows() ||
            static_cast<int>(cols) != p.value.cols())
            throw std::runtime_error("checkpoint parameter mismatch at " + name);
        for (std::uint32_t r = 0; r < rows; ++r)
            for (std::uint32_t c = 0; c < cols; ++c)
                p.value(r, c) = static_cast<S>(read_pod<double>(in));
    }
    if (!in) throw std::runtime_error("checkpoint truncated: " + path.string());

    TrainMeta meta;
    const auto& mj = header.at("meta");
    meta.seed = mj.at("seed").get<std::uint64_t>();
    meta.epoch = mj.at("epoch").get<int>();
    meta.multipliers = mj.at("multipliers").get<std::vector<double>>();
    meta.recon_ema = mj.at("recon_ema").get<double>();
    meta.category = mj.at("category").get<std::string>();
    return {std::move(model), meta};
}

template class Model<float>;
template class Model<double>;
template void save_checkpoint<float>(const std::filesystem::path&, const Model<float>&, const TrainMeta&);
template void save_checkpoint<double>(const std::filesystem::path&, const Model<double>&, const TrainMeta&);
template std::pair<Model<float>, TrainMeta> load_checkpoint<float>(const std::filesystem::path&);
template std::pair<Model<double>, TrainMeta> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace shapepose::models
