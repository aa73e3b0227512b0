// Copyright Contributors to the uvg Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "uvg/core.hpp"
#include "uvg/errors.hpp"
#include "uvg/fit.hpp"
#include "uvg/render.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace uvg::io {

namespace fs = std::filesystem;
using json   = nlohmann::json;

// ---------------------------------------------------------------------------
// Byte helpers
// ---------------------------------------------------------------------------

inline std::string read_file(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Writes to a sibling temporary file and renames it over `path`.
inline void write_file_atomic(const fs::path &path, const std::string &bytes) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::invalid_argument("cannot write '" + tmp.string() + "'");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

namespace detail {

inline void put_u32(std::string &out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint32_t get_u32(const std::string &in, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(in[at + i])) << (8 * i);
    return v;
}

inline void put_f32(std::string &out, double v) {
    const float f = static_cast<float>(v);
    if (!std::isfinite(f)) throw std::invalid_argument("save_avatar: value not representable as float32");
    put_u32(out, std::bit_cast<std::uint32_t>(f));
}

inline double get_f32(const std::string &in, std::size_t at) {
    return static_cast<double>(std::bit_cast<float>(get_u32(in, at)));
}

inline int header_int(const json &h, const char *key) {
    if (!h.contains(key) || !h[key].is_number_integer()) {
        throw FormatError(std::string("avatar header: missing integer field '") + key + "'");
    }
    return h[key].get<int>();
}

} // namespace detail

// ---------------------------------------------------------------------------
// Avatar file (GUV1)
// ---------------------------------------------------------------------------

inline constexpr int kAvatarVersion = 1;

inline std::string encode_avatar(const UVAvatar &av) {
    av.validate();
    std::string out = "GUV1";
    const json header = {{"H", av.height}, {"W", av.width}, {"Sx", av.plane_size},
                         {"Sy", av.plane_size}, {"C", av.channels}, {"version", kAvatarVersion}};
    const std::string hs = header.dump();
    detail::put_u32(out, static_cast<std::uint32_t>(hs.size()));
    out += hs;
    auto vecs = [&](const std::vector<Vec3> &v) {
        for (const auto &x : v)
            for (int a = 0; a < 3; ++a) detail::put_f32(out, x[a]);
    };
    vecs(av.centers);
    vecs(av.rotations);
    vecs(av.radii);
    for (double p : av.payloads) detail::put_f32(out, p);
    vecs(av.anchors);
    vecs(av.anchor_normals);
    for (double s : av.anchor_scales) detail::put_f32(out, s);
    return out;
}

inline UVAvatar decode_avatar(const std::string &bytes) {
    if (bytes.size() < 4 || bytes.compare(0, 4, "GUV1") != 0) throw FormatError("avatar file: bad magic");
    if (bytes.size() < 8) throw CorruptFileError("avatar file: truncated header length", bytes.size());
    const std::uint32_t hlen = detail::get_u32(bytes, 4);
    if (bytes.size() < 8 + std::size_t(hlen)) throw CorruptFileError("avatar file: truncated header", bytes.size());
    json h;
    try {
        h = json::parse(bytes.substr(8, hlen));
    } catch (const json::exception &e) {
        throw FormatError(std::string("avatar header: ") + e.what());
    }
    if (!h.is_object()) throw FormatError("avatar header: expected a JSON object");
    const int version = detail::header_int(h, "version");
    if (version != kAvatarVersion) {
        throw UnsupportedVersionError("avatar file: unsupported version " + std::to_string(version));
    }
    const int H = detail::header_int(h, "H"), W = detail::header_int(h, "W");
    const int Sx = detail::header_int(h, "Sx"), Sy = detail::header_int(h, "Sy");
    const int C = detail::header_int(h, "C");
    if (H <= 0 || W <= 0 || Sx <= 0 || C <= 0 || H > 1 << 16 || W > 1 << 16 || Sx > 1024 || C > 1024)
        throw FormatError("avatar header: dimensions out of range");
    if (Sx != Sy) throw FormatError("avatar header: non-square planes are not supported");

    UVAvatar av(H, W, Sx, C);
    const std::size_t n      = av.texel_count();
    const std::size_t floats = 15 * n + n * av.payload_stride() + n;
    const std::size_t body   = 8 + std::size_t(hlen);
    const std::size_t need   = body + 4 * floats;
    if (bytes.size() < need) throw CorruptFileError("avatar file: truncated body", bytes.size());
    if (bytes.size() > need) throw CorruptFileError("avatar file: trailing bytes", need);
    std::size_t at = body;
    auto next      = [&] {
        const double v = detail::get_f32(bytes, at);
        if (!std::isfinite(v)) throw CorruptFileError("avatar file: non-finite value", at);
        at += 4;
        return v;
    };
    auto vecs = [&](std::vector<Vec3> &v) {
        for (auto &x : v)
            for (int a = 0; a < 3; ++a) x[a] = next();
    };
    vecs(av.centers);
    vecs(av.rotations);
    vecs(av.radii);
    for (double &p : av.payloads) p = next();
    vecs(av.anchors);
    vecs(av.anchor_normals);
    for (double &s : av.anchor_scales) s = next();
    try {
        av.validate();
    } catch (const std::invalid_argument &e) {
        throw FormatError(std::string("avatar file: ") + e.what());
    }
    return av;
}

inline void save_avatar(const UVAvatar &av, const fs::path &path) { write_file_atomic(path, encode_avatar(av)); }

inline UVAvatar load_avatar(const fs::path &path) { return decode_avatar(read_file(path)); }

/// Rounds every stored value to float32, the file precision.
inline UVAvatar round_to_file_precision(UVAvatar av) {
    auto r  = [](double v) { return static_cast<double>(static_cast<float>(v)); };
    auto rv = [&](std::vector<Vec3> &v) {
        for (auto &x : v)
            for (int a = 0; a < 3; ++a) x[a] = r(x[a]);
    };
    rv(av.centers);
    rv(av.rotations);
    rv(av.radii);
    rv(av.anchors);
    rv(av.anchor_normals);
    for (double &p : av.payloads) p = r(p);
    for (double &s : av.anchor_scales) s = r(s);
    return av;
}

// ---------------------------------------------------------------------------
// Strict JSON helpers
// ---------------------------------------------------------------------------

namespace detail {

inline void require_keys(const json &j, const std::set<std::string> &allowed, const std::set<std::string> &required,
                         const std::string &what) {
    if (!j.is_object()) throw std::invalid_argument(what + ": expected a JSON object");
    for (const auto &[k, v] : j.items()) {
        if (!allowed.count(k)) throw std::invalid_argument(what + ": unknown field '" + k + "'");
    }
    for (const auto &k : required) {
        if (!j.contains(k)) throw std::invalid_argument(what + ": missing field '" + k + "'");
    }
}

inline double get_number(const json &j, const char *key, const std::string &what) {
    if (!j[key].is_number()) throw std::invalid_argument(what + ": field '" + key + "' must be a number");
    return j[key].get<double>();
}

inline int get_int(const json &j, const char *key, const std::string &what) {
    if (!j[key].is_number_integer()) throw std::invalid_argument(what + ": field '" + key + "' must be an integer");
    return j[key].get<int>();
}

inline json parse_json(const std::string &text, const std::string &what) {
    try {
        return json::parse(text);
    } catch (const json::exception &e) {
        throw std::invalid_argument(what + ": " + e.what());
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Cameras
// ---------------------------------------------------------------------------

inline json camera_to_json(const Camera &c) {
    json m = json::array();
    for (int r = 0; r < 4; ++r)
        for (int k = 0; k < 4; ++k) m.push_back(c.cam_to_world(r, k));
    return {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}, {"width", c.width}, {"height", c.height},
            {"near", c.near}, {"far", c.far}, {"cam_to_world", m}};
}

inline Camera camera_from_json(const json &j, const std::string &what = "camera") {
    static const std::set<std::string> keys = {"fx", "fy", "cx", "cy", "width", "height", "near", "far", "cam_to_world"};
    detail::require_keys(j, keys, keys, what);
    Camera c;
    c.fx     = detail::get_number(j, "fx", what);
    c.fy     = detail::get_number(j, "fy", what);
    c.cx     = detail::get_number(j, "cx", what);
    c.cy     = detail::get_number(j, "cy", what);
    c.width  = detail::get_int(j, "width", what);
    c.height = detail::get_int(j, "height", what);
    c.near   = detail::get_number(j, "near", what);
    c.far    = detail::get_number(j, "far", what);
    const json &m = j["cam_to_world"];
    if (!m.is_array() || m.size() != 16) throw std::invalid_argument(what + ": cam_to_world needs 16 numbers");
    for (int i = 0; i < 16; ++i) {
        if (!m[i].is_number()) throw std::invalid_argument(what + ": cam_to_world needs 16 numbers");
        c.cam_to_world(i / 4, i % 4) = m[i].get<double>();
    }
    c.validate();
    return c;
}

inline std::vector<Camera> parse_cameras(const std::string &text) {
    const json j = detail::parse_json(text, "camera file");
    if (!j.is_array()) throw std::invalid_argument("camera file: expected a JSON array");
    std::vector<Camera> cams;
    for (std::size_t i = 0; i < j.size(); ++i) cams.push_back(camera_from_json(j[i], "camera " + std::to_string(i)));
    return cams;
}

inline std::vector<Camera> load_cameras(const fs::path &path) { return parse_cameras(read_file(path)); }

inline void save_cameras(const std::vector<Camera> &cams, const fs::path &path) {
    json j = json::array();
    for (const auto &c : cams) j.push_back(camera_to_json(c));
    write_file_atomic(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Render config and MLP sidecar
// ---------------------------------------------------------------------------

inline json render_config_to_json(const RenderConfig &c) {
    return {{"samples_per_ray", c.samples_per_ray}, {"knn_k", c.knn_k}, {"eta", c.eta}, {"tau", c.tau},
            {"epsilon", c.epsilon}, {"background", {c.background[0], c.background[1], c.background[2]}},
            {"jitter", c.jitter}, {"jitter_seed", c.jitter_seed}};
}

inline RenderConfig render_config_from_json(const json &j) {
    static const std::set<std::string> keys = {"samples_per_ray", "knn_k", "eta", "tau", "epsilon",
                                               "background", "jitter", "jitter_seed"};
    detail::require_keys(j, keys, keys, "render config");
    RenderConfig c;
    c.samples_per_ray = detail::get_int(j, "samples_per_ray", "render config");
    c.knn_k           = detail::get_int(j, "knn_k", "render config");
    c.eta             = detail::get_number(j, "eta", "render config");
    c.tau             = detail::get_number(j, "tau", "render config");
    c.epsilon         = detail::get_number(j, "epsilon", "render config");
    const json &bg    = j["background"];
    if (!bg.is_array() || bg.size() != 3) throw std::invalid_argument("render config: background needs 3 numbers");
    for (int i = 0; i < 3; ++i) {
        if (!bg[i].is_number()) throw std::invalid_argument("render config: background needs 3 numbers");
        c.background[i] = bg[i].get<double>();
    }
    if (!j["jitter"].is_boolean()) throw std::invalid_argument("render config: jitter must be a boolean");
    c.jitter = j["jitter"].get<bool>();
    if (!j["jitter_seed"].is_number_unsigned() && !j["jitter_seed"].is_number_integer())
        throw std::invalid_argument("render config: jitter_seed must be an integer");
    c.jitter_seed = j["jitter_seed"].get<std::uint64_t>();
    c.validate();
    return c;
}

/// Shading network and render settings stored next to an avatar.
struct Renderer {
    RenderMLP mlp;
    RenderConfig config;
};

inline fs::path sidecar_path(const fs::path &avatar_path) {
    fs::path p = avatar_path;
    p += ".mlp.json";
    return p;
}

inline void save_renderer(const Renderer &r, const fs::path &path) {
    r.mlp.validate();
    const json j = {{"layout", "8x32x4"}, {"params", r.mlp.params}, {"render", render_config_to_json(r.config)}};
    write_file_atomic(path, j.dump() + "\n");
}

inline Renderer load_renderer(const fs::path &path) {
    const json j = detail::parse_json(read_file(path), "renderer file");
    detail::require_keys(j, {"layout", "params", "render"}, {"layout", "params", "render"}, "renderer file");
    if (j["layout"] != "8x32x4") throw std::invalid_argument("renderer file: unsupported MLP layout");
    Renderer r;
    const json &p = j["params"];
    if (!p.is_array() || p.size() != RenderMLP::kSize) throw std::invalid_argument("renderer file: expected 420 MLP parameters");
    for (std::size_t i = 0; i < RenderMLP::kSize; ++i) {
        if (!p[i].is_number()) throw std::invalid_argument("renderer file: non-numeric MLP parameter");
        r.mlp.params[i] = p[i].get<double>();
    }
    r.mlp.validate();
    r.config = render_config_from_json(j["render"]);
    return r;
}

// ---------------------------------------------------------------------------
// Images
// ---------------------------------------------------------------------------

inline std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

/// Binary PPM (P6), 8 bits per channel.
inline std::string encode_ppm(std::span<const double> rgb, int width, int height) {
    ::uvg::detail::require(rgb.size() == std::size_t(width) * height * 3, "write_ppm: shape mismatch");
    std::string out = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    for (double v : rgb) out.push_back(static_cast<char>(to_byte(v)));
    return out;
}

/// Binary PGM (P5). Stored sample k encodes the value k / maxval * scale;
/// the scale is declared in a comment line. maxval 255 or 65535.
inline std::string encode_pgm(std::span<const double> values, int width, int height, double scale = 1.0,
                              int maxval = 255) {
    ::uvg::detail::require(values.size() == std::size_t(width) * height, "write_pgm: shape mismatch");
    ::uvg::detail::require(scale > 0.0 && std::isfinite(scale), "write_pgm: scale must be positive");
    ::uvg::detail::require(maxval == 255 || maxval == 65535, "write_pgm: maxval must be 255 or 65535");
    std::ostringstream hdr;
    hdr << "P5\n# scale " << std::setprecision(17) << scale << "\n" << width << " " << height << "\n" << maxval << "\n";
    std::string out = hdr.str();
    for (double v : values) {
        const long q = std::lround(std::clamp(v / scale, 0.0, 1.0) * maxval);
        if (maxval > 255) out.push_back(static_cast<char>((q >> 8) & 0xFF));
        out.push_back(static_cast<char>(q & 0xFF));
    }
    return out;
}

inline void write_ppm(const fs::path &path, std::span<const double> rgb, int width, int height) {
    write_file_atomic(path, encode_ppm(rgb, width, height));
}

inline void write_pgm(const fs::path &path, std::span<const double> values, int width, int height,
                      double scale = 1.0, int maxval = 255) {
    write_file_atomic(path, encode_pgm(values, width, height, scale, maxval));
}

struct Image {
    int width = 0, height = 0, channels = 0, maxval = 255;
    double scale = 1.0;
    std::vector<double> values; // decoded to [0, scale]
    std::vector<int> raw;       // stored samples
};

/// Reads P5/P6 files written by encode_pgm/encode_ppm (comments allowed).
inline Image decode_pnm(const std::string &bytes, const std::string &what = "image") {
    std::size_t at = 0;
    Image img;
    auto skip_ws = [&] {
        while (at < bytes.size()) {
            if (bytes[at] == '#') {
                const std::size_t end = bytes.find('\n', at);
                const std::string line = bytes.substr(at, end == std::string::npos ? std::string::npos : end - at);
                if (line.rfind("# scale ", 0) == 0) img.scale = std::stod(line.substr(8));
                at = end == std::string::npos ? bytes.size() : end + 1;
            } else if (std::isspace(static_cast<unsigned char>(bytes[at]))) {
                ++at;
            } else {
                break;
            }
        }
    };
    auto number = [&] {
        skip_ws();
        std::size_t start = at;
        while (at < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[at]))) ++at;
        if (start == at) throw FormatError(what + ": malformed header");
        return std::stoi(bytes.substr(start, at - start));
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
        throw FormatError(what + ": not a binary PGM/PPM file");
    img.channels = bytes[1] == '6' ? 3 : 1;
    at           = 2;
    img.width    = number();
    img.height   = number();
    img.maxval   = number();
    if (img.width <= 0 || img.height <= 0 || img.maxval <= 0 || img.maxval > 65535)
        throw FormatError(what + ": bad dimensions");
    if (at >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[at])))
        throw FormatError(what + ": malformed header");
    ++at;
    const int bps         = img.maxval > 255 ? 2 : 1;
    const std::size_t cnt = std::size_t(img.width) * img.height * img.channels;
    if (bytes.size() - at < cnt * bps) throw CorruptFileError(what + ": truncated pixel data", bytes.size());
    img.raw.resize(cnt);
    img.values.resize(cnt);
    for (std::size_t i = 0; i < cnt; ++i) {
        int v = static_cast<unsigned char>(bytes[at++]);
        if (bps == 2) v = (v << 8) | static_cast<unsigned char>(bytes[at++]);
        img.raw[i]    = v;
        img.values[i] = double(v) / img.maxval * img.scale;
    }
    return img;
}

inline Image read_pnm(const fs::path &path) { return decode_pnm(read_file(path), path.string()); }

/// 8-bit grayscale mask: texels with value >= 128 are selected.
inline UVMask load_mask(const fs::path &path, ChannelSelector sel = ChannelSelector::both) {
    const Image img = read_pnm(path);
    if (img.channels != 1) throw std::invalid_argument("mask must be a grayscale PGM");
    UVMask m(img.height, img.width, false, sel);
    const int threshold = img.maxval == 255 ? 128 : (128 * (img.maxval + 1)) / 256;
    for (std::size_t i = 0; i < img.raw.size(); ++i) m.texels[i] = img.raw[i] >= threshold ? 1 : 0;
    return m;
}

inline void save_mask(const UVMask &m, const fs::path &path) {
    std::vector<double> v(m.texels.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = m.texels[i] ? 1.0 : 0.0;
    write_pgm(path, v, m.width, m.height);
}

// ---------------------------------------------------------------------------
// Anchor grid
// ---------------------------------------------------------------------------

inline std::string encode_anchor_grid(const AnchorGrid &g) {
    std::ostringstream out;
    out << std::setprecision(17) << "ANCHORS " << g.height << " " << g.width << "\n";
    for (std::size_t i = 0; i < g.texel_count(); ++i) {
        const Vec3 &a = g.anchors[i], &n = g.normals[i];
        out << a[0] << " " << a[1] << " " << a[2] << " " << n[0] << " " << n[1] << " " << n[2] << " " << g.scales[i]
            << "\n";
    }
    return out.str();
}

inline AnchorGrid parse_anchor_grid(const std::string &text) {
    std::istringstream in(text);
    std::string tag;
    AnchorGrid g;
    if (!(in >> tag >> g.height >> g.width) || tag != "ANCHORS" || g.height <= 0 || g.width <= 0)
        throw std::invalid_argument("anchor grid: expected header 'ANCHORS H W'");
    const std::size_t n = g.texel_count();
    g.anchors.resize(n);
    g.normals.resize(n);
    g.scales.resize(n);
    auto read_num = [&](std::size_t i) {
        std::string tok;
        if (!(in >> tok)) throw std::invalid_argument("anchor grid: missing values at texel " + std::to_string(i));
        std::size_t used = 0;
        double v         = 0.0;
        try {
            v = std::stod(tok, &used);
        } catch (const std::exception &) {
            used = 0;
        }
        if (used != tok.size()) throw std::invalid_argument("anchor grid: bad number '" + tok + "' at texel " + std::to_string(i));
        if (!std::isfinite(v)) throw std::invalid_argument("anchor grid: non-finite value at texel " + std::to_string(i));
        return v;
    };
    for (std::size_t i = 0; i < n; ++i) {
        for (int a = 0; a < 3; ++a) g.anchors[i][a] = read_num(i);
        for (int a = 0; a < 3; ++a) g.normals[i][a] = read_num(i);
        g.scales[i] = read_num(i);
        if (std::abs(g.normals[i].norm() - 1.0) > 1e-6)
            throw std::invalid_argument("anchor grid: normal is not unit length at texel " + std::to_string(i));
        if (!(g.scales[i] > 0.0)) throw std::invalid_argument("anchor grid: scale must be positive at texel " + std::to_string(i));
    }
    std::string rest;
    if (in >> rest) throw std::invalid_argument("anchor grid: trailing data");
    return g;
}

inline AnchorGrid load_anchor_grid(const fs::path &path) { return parse_anchor_grid(read_file(path)); }

inline void save_anchor_grid(const AnchorGrid &g, const fs::path &path) { write_file_atomic(path, encode_anchor_grid(g)); }

/// Vertex grid of an avatar file, used as expression targets.
inline AnchorGrid anchors_of(const UVAvatar &av) {
    return {av.height, av.width, av.anchors, av.anchor_normals, av.anchor_scales};
}

// ---------------------------------------------------------------------------
// Dataset directory
// ---------------------------------------------------------------------------

/// A posed multi-view dataset with its generating reference.
struct Dataset {
    AnchorGrid anchors;
    RenderConfig render;
    std::vector<FitView> views;
    UVAvatar reference;
    RenderMLP reference_mlp;
};

inline constexpr int kDepthMaxval = 65535;
inline constexpr int kMaskMaxval  = 65535;

inline std::string view_name(std::size_t i, const char *suffix) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "view_%03zu%s", i, suffix);
    return buf;
}

/// Quantizes maps to their file precision (8-bit color, 16-bit depth and mask).
inline void quantize_view(FitView &v) {
    for (double &c : v.color) c = to_byte(c) / 255.0;
    const double far = v.camera.far;
    for (double &d : v.depth) d = double(std::lround(std::clamp(d / far, 0.0, 1.0) * kDepthMaxval)) / kDepthMaxval * far;
    for (double &a : v.alpha) a = double(std::lround(std::clamp(a, 0.0, 1.0) * kMaskMaxval)) / kMaskMaxval;
}

inline void save_dataset(const Dataset &ds, const fs::path &dir) {
    fs::create_directories(dir);
    save_anchor_grid(ds.anchors, dir / "anchors.txt");
    std::vector<Camera> cams;
    for (const auto &v : ds.views) cams.push_back(v.camera);
    save_cameras(cams, dir / "cameras.json");
    write_file_atomic(dir / "render.json", render_config_to_json(ds.render).dump(2) + "\n");
    save_avatar(ds.reference, dir / "reference.guv");
    save_renderer({ds.reference_mlp, ds.render}, sidecar_path(dir / "reference.guv"));
    for (std::size_t i = 0; i < ds.views.size(); ++i) {
        const auto &v = ds.views[i];
        const int w = v.camera.width, h = v.camera.height;
        write_ppm(dir / view_name(i, ".ppm"), v.color, w, h);
        write_pgm(dir / view_name(i, "_depth.pgm"), v.depth, w, h, v.camera.far, kDepthMaxval);
        write_pgm(dir / view_name(i, "_mask.pgm"), v.alpha, w, h, 1.0, kMaskMaxval);
    }
}

inline Dataset load_dataset(const fs::path &dir) {
    Dataset ds;
    ds.anchors = load_anchor_grid(dir / "anchors.txt");
    ds.render  = render_config_from_json(detail::parse_json(read_file(dir / "render.json"), "render.json"));
    if (fs::exists(dir / "reference.guv")) {
        ds.reference = load_avatar(dir / "reference.guv");
        ds.reference_mlp = load_renderer(sidecar_path(dir / "reference.guv")).mlp;
    }
    const auto cams = load_cameras(dir / "cameras.json");
    if (cams.empty()) throw std::invalid_argument("dataset: no cameras");
    for (std::size_t i = 0; i < cams.size(); ++i) {
        FitView v;
        v.camera     = cams[i];
        v.background = ds.render.background;
        const Image c = read_pnm(dir / view_name(i, ".ppm"));
        const Image m = read_pnm(dir / view_name(i, "_mask.pgm"));
        if (c.channels != 3 || c.width != v.camera.width || c.height != v.camera.height)
            throw std::invalid_argument("dataset: " + view_name(i, ".ppm") + " does not match its camera");
        if (m.channels != 1 || m.width != v.camera.width || m.height != v.camera.height)
            throw std::invalid_argument("dataset: " + view_name(i, "_mask.pgm") + " does not match its camera");
        v.color = c.values;
        v.alpha = m.values;
        const fs::path dp = dir / view_name(i, "_depth.pgm");
        if (fs::exists(dp)) {
            const Image d = read_pnm(dp);
            if (d.channels != 1 || d.width != v.camera.width || d.height != v.camera.height)
                throw std::invalid_argument("dataset: " + view_name(i, "_depth.pgm") + " does not match its camera");
            v.depth = d.values;
        }
        ds.views.push_back(std::move(v));
    }
    return ds;
}

} // namespace uvg::io
