#include "fakegaze/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "fakegaze/errors.hpp"
#include "fakegaze/utils.hpp"

namespace fs = std::filesystem;

namespace fakegaze {

void FaceBox::validate(const std::string& origin) const {
    constexpr double slack = 1e-9;
    if (!(w > 0.0) || !(h > 0.0) || x < -slack || y < -slack || x + w > 1.0 + slack ||
        y + h > 1.0 + slack) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "invalid face box x=%g y=%g w=%g h=%g", x, y, w, h);
        throw DataError(origin + ": " + buf);
    }
}

namespace {

std::string frame_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%05d.ppm", index);
    return buf;
}

std::string video_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "video_%04d", index);
    return buf;
}

std::string read_text_file(const std::string& path, const char* what) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError(std::string("cannot open ") + what + " '" + path + "'");
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string cur;
    for (char c : text) {
        if (c == '\n') {
            if (!cur.empty() && cur.back() == '\r') cur.pop_back();
            lines.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) {
        if (cur.back() == '\r') cur.pop_back();
        lines.push_back(cur);
    }
    return lines;
}

int count_contiguous_frames(const std::string& dir, const std::string& video_id) {
    std::set<int> indices;
    for (const auto& ent : fs::directory_iterator(dir)) {
        const std::string name = ent.path().filename().string();
        if (name.size() == 15 && name.rfind("frame_", 0) == 0 && name.substr(11) == ".ppm" &&
            std::all_of(name.begin() + 6, name.begin() + 11,
                        [](char c) { return c >= '0' && c <= '9'; })) {
            indices.insert(std::stoi(name.substr(6, 5)));
        }
    }
    if (indices.empty()) throw DataError("video '" + video_id + "' has no frames");
    const int count = static_cast<int>(indices.size());
    if (*indices.begin() != 0 || *indices.rbegin() != count - 1) {
        throw DataError("frame files are not contiguous from frame_00000 in video '" + video_id +
                        "'");
    }
    return count;
}

}  // namespace

DatasetManifest load_dataset(const std::string& root) {
    if (!fs::is_directory(root)) {
        throw DataError("dataset root '" + root + "' is not a directory");
    }
    const std::string labels_path = (fs::path(root) / "labels.csv").string();
    if (!fs::is_regular_file(labels_path)) {
        throw DataError("missing labels file '" + labels_path + "'");
    }
    const std::vector<std::string> lines = split_lines(read_text_file(labels_path, "labels file"));
    if (lines.empty() || lines[0] != "video_id,label") {
        throw DataError(labels_path + ": first line must be the header 'video_id,label'");
    }

    DatasetManifest manifest;
    manifest.root = root;
    std::set<std::string> seen;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::string& line = lines[i];
        if (line.empty()) {
            throw DataError(labels_path + ": blank line " + std::to_string(i + 1));
        }
        const std::size_t comma = line.find(',');
        if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
            throw DataError(labels_path + ": line " + std::to_string(i + 1) +
                            " must have exactly two comma-separated fields");
        }
        const std::string id = line.substr(0, comma);
        const std::string label_str = line.substr(comma + 1);
        if (id.empty() || id.find('/') != std::string::npos ||
            id.find('\\') != std::string::npos || id == "." || id == "..") {
            throw DataError(labels_path + ": invalid video id '" + id + "'");
        }
        if (label_str != "0" && label_str != "1") {
            throw DataError(labels_path + ": label must be 0 or 1, got '" + label_str +
                            "' for video '" + id + "'");
        }
        if (!seen.insert(id).second) {
            throw DataError(labels_path + ": duplicate video id '" + id + "'");
        }
        const fs::path dir = fs::path(root) / id;
        if (!fs::is_directory(dir)) {
            throw DataError("labels file lists '" + id + "' but directory '" + dir.string() +
                            "' is missing");
        }
        ManifestEntry e;
        e.video_id = id;
        e.label = label_str == "1" ? 1 : 0;
        e.frame_count = count_contiguous_frames(dir.string(), id);
        e.has_face_sidecar = fs::is_regular_file(dir / "faces.json");
        manifest.entries.push_back(std::move(e));
    }
    if (manifest.entries.empty()) {
        throw DataError("dataset at '" + root + "' is empty: labels file lists no videos");
    }
    return manifest;
}

std::vector<int> sample_frames(int total_frames, int n) {
    if (total_frames < 1) throw ContractError("sample_frames: video has no frames");
    if (n < 1) throw ContractError("sample_frames: n must be >= 1, got " + std::to_string(n));
    std::vector<int> idx;
    idx.reserve(static_cast<std::size_t>(n));
    if (n == 1) {
        idx.push_back(0);
    } else if (total_frames >= n) {
        for (int i = 0; i < n; ++i) {
            idx.push_back(static_cast<int>(static_cast<std::int64_t>(i) * (total_frames - 1) /
                                           (n - 1)));
        }
    } else {
        for (int i = 0; i < total_frames; ++i) idx.push_back(i);
        while (static_cast<int>(idx.size()) < n) idx.push_back(total_frames - 1);
    }
    return idx;
}

Image crop_face(const Image& frame, const std::optional<FaceBox>& box, int out_h, int out_w) {
    if (out_h < 8 || out_w < 8) {
        throw ContractError("crop output size must be at least 8x8, got " +
                            std::to_string(out_h) + "x" + std::to_string(out_w));
    }
    const int W = frame.width;
    const int H = frame.height;
    int x0 = 0, y0 = 0, cw = 0, ch = 0;
    if (box) {
        box->validate("crop_face");
        const double cx = (box->x + box->w / 2.0) * W;
        const double cy = (box->y + box->h / 2.0) * H;
        const double half_w = box->w * W * 1.25 / 2.0;
        const double half_h = box->h * H * 1.25 / 2.0;
        x0 = std::max(0, static_cast<int>(std::floor(cx - half_w)));
        y0 = std::max(0, static_cast<int>(std::floor(cy - half_h)));
        const int x1 = std::min(W, static_cast<int>(std::ceil(cx + half_w)));
        const int y1 = std::min(H, static_cast<int>(std::ceil(cy + half_h)));
        cw = x1 - x0;
        ch = y1 - y0;
        if (cw <= 0 || ch <= 0) {
            throw DataError("face box degenerate after clipping to the frame");
        }
    } else {
        const int side = std::min(W, H);
        x0 = (W - side) / 2;
        y0 = (H - side) / 2;
        cw = ch = side;
    }
    Image region = Image::create(cw, ch);
    for (int y = 0; y < ch; ++y) {
        for (int x = 0; x < cw; ++x) {
            for (int c = 0; c < 3; ++c) region.at(x, y, c) = frame.at(x0 + x, y0 + y, c);
        }
    }
    return bilinear_resize(region, out_w, out_h);
}

void SyntheticConfig::validate() const {
    if (n_videos < 2 || n_videos % 2 != 0) {
        throw ConfigError("n_videos must be even and >= 2, got " + std::to_string(n_videos));
    }
    if (frames_per_video < 1) {
        throw ConfigError("frames_per_video must be >= 1, got " +
                          std::to_string(frames_per_video));
    }
    if (height < 16 || width < 16) {
        throw ConfigError("image size must be at least 16x16, got " + std::to_string(height) +
                          "x" + std::to_string(width));
    }
    if (!(blend_rect_fraction > 0.0) || !(blend_rect_fraction < 1.0)) {
        throw ConfigError("blend_rect_fraction must lie in (0, 1)");
    }
}

namespace {

struct FaceGeometry {
    double skin[3], bg[3], eye[3], mouth[3];
    double green_tint;
    double cx, cy, rx, ry;
    double eye_dx, eye_dy, eye_r;
    double mouth_dy, mouth_halfw, mouth_th, mouth_curve;
};

// Surface colors are drawn in red/blue space and green is pinned to their
// midpoint, so hue and brightness vary freely across identities while the
// green-vs-(red+blue)/2 balance of every untampered pixel stays flat. The
// tampered rectangle's green shift is then the only local green-excess
// structure in a fake frame. A per-identity global green tint (shared by a
// fake and the real it was spliced from) restores enough variance to the
// frame-average color that whole-frame channel means stay uninformative.
FaceGeometry face_geometry(const SyntheticConfig& cfg, int identity) {
    Rng rng(mix64(cfg.seed ^ static_cast<std::uint64_t>(identity), 0x9E0F));
    FaceGeometry g;
    auto balanced = [&](double* c, double r_lo, double r_hi, double b_lo, double b_hi) {
        c[0] = rng.uniform(r_lo, r_hi);
        c[2] = rng.uniform(b_lo, b_hi);
        c[1] = 0.5 * (c[0] + c[2]);
    };
    balanced(g.skin, 185.0, 205.0, 115.0, 135.0);
    balanced(g.bg, 50.0, 80.0, 60.0, 90.0);
    g.eye[0] = g.eye[1] = g.eye[2] = rng.uniform(35.0, 55.0);
    balanced(g.mouth, 130.0, 150.0, 50.0, 70.0);
    g.green_tint = rng.uniform(-10.0, 10.0);
    g.cx = cfg.width * (0.5 + rng.uniform(-0.03, 0.03));
    g.cy = cfg.height * (0.5 + rng.uniform(-0.03, 0.03));
    g.rx = cfg.width * rng.uniform(0.30, 0.34);
    g.ry = cfg.height * rng.uniform(0.36, 0.40);
    g.eye_dx = g.rx * rng.uniform(0.40, 0.48);
    g.eye_dy = g.ry * rng.uniform(0.28, 0.36);
    g.eye_r = std::min(cfg.width, cfg.height) * rng.uniform(0.05, 0.065);
    g.mouth_dy = g.ry * rng.uniform(0.40, 0.50);
    g.mouth_halfw = g.rx * rng.uniform(0.40, 0.50);
    g.mouth_th = std::min(cfg.width, cfg.height) * rng.uniform(0.035, 0.045);
    g.mouth_curve = rng.uniform(0.15, 0.30) * g.mouth_halfw;
    return g;
}

// Pure scene colors for one frame of one identity: geometry, per-frame
// motion, no tint and no noise, kept in doubles so splicing composites
// exactly. Keyed by (seed, identity, frame) so a fake video reproduces its
// base identity's scene bit-exactly before tampering.
std::vector<double> render_scene(const SyntheticConfig& cfg, int identity, int frame_idx) {
    const FaceGeometry g = face_geometry(cfg, identity);
    Rng rng(mix64(mix64(cfg.seed ^ static_cast<std::uint64_t>(identity), 0xF2A7),
                  static_cast<std::uint64_t>(frame_idx)));
    const double dx = rng.uniform(-1.2, 1.2);
    const double dy = rng.uniform(-1.2, 1.2);
    const double cx = g.cx + dx;
    const double cy = g.cy + dy;

    std::vector<double> px(static_cast<std::size_t>(cfg.height) * cfg.width * 3);
    for (int y = 0; y < cfg.height; ++y) {
        for (int x = 0; x < cfg.width; ++x) {
            const double ex = (x - cx) / g.rx;
            const double ey = (y - cy) / g.ry;
            const double* color = g.bg;
            if (ex * ex + ey * ey <= 1.0) {
                color = g.skin;
                const double lx = x - (cx - g.eye_dx);
                const double rx2 = x - (cx + g.eye_dx);
                const double eyy = y - (cy - g.eye_dy);
                if (lx * lx + eyy * eyy <= g.eye_r * g.eye_r ||
                    rx2 * rx2 + eyy * eyy <= g.eye_r * g.eye_r) {
                    color = g.eye;
                } else if (std::abs(x - cx) <= g.mouth_halfw) {
                    const double t = (x - cx) / g.mouth_halfw;
                    const double arc_y = cy + g.mouth_dy - g.mouth_curve * t * t;
                    if (std::abs(y - arc_y) <= g.mouth_th) color = g.mouth;
                }
            }
            double* out = &px[(static_cast<std::size_t>(y) * cfg.width + x) * 3];
            out[0] = color[0];
            out[1] = color[1];
            out[2] = color[2];
        }
    }
    return px;
}

// Splices the donor scene into the base over the rectangle, alpha-feathered
// across a 2-pixel border, then shifts green by a constant +8 everywhere
// inside the rectangle.
void tamper_scene(std::vector<double>& base, const std::vector<double>& donor, int width,
                  const TamperRect& rect) {
    for (int y = rect.y0; y < rect.y0 + rect.side; ++y) {
        for (int x = rect.x0; x < rect.x0 + rect.side; ++x) {
            const int edge = std::min(std::min(x - rect.x0, rect.x0 + rect.side - 1 - x),
                                      std::min(y - rect.y0, rect.y0 + rect.side - 1 - y));
            const double alpha = std::min(1.0, (edge + 1) / 3.0);
            double* b = &base[(static_cast<std::size_t>(y) * width + x) * 3];
            const double* d = &donor[(static_cast<std::size_t>(y) * width + x) * 3];
            for (int c = 0; c < 3; ++c) {
                b[c] = alpha * d[c] + (1.0 - alpha) * b[c];
            }
            b[1] += 8.0;
        }
    }
}

// Tint and sensor noise are applied to the composed frame with the *base*
// identity's chain, so a fake and its real base stay bit-identical outside
// the tampered rectangle and the splice introduces no noise or tint seam of
// its own.
Image finalize_frame(const SyntheticConfig& cfg, const std::vector<double>& scene, int identity,
                     int frame_idx) {
    const FaceGeometry g = face_geometry(cfg, identity);
    Rng rng(mix64(mix64(cfg.seed ^ static_cast<std::uint64_t>(identity), 0xD01E),
                  static_cast<std::uint64_t>(frame_idx)));
    Image img = Image::create(cfg.width, cfg.height);
    for (int y = 0; y < cfg.height; ++y) {
        for (int x = 0; x < cfg.width; ++x) {
            const double* in = &scene[(static_cast<std::size_t>(y) * cfg.width + x) * 3];
            for (int c = 0; c < 3; ++c) {
                double v = in[c] + 0.5 * rng.normal();
                if (c == 1) v += g.green_tint;
                img.at(x, y, c) =
                    static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
            }
        }
    }
    return img;
}

// Writes only when content differs, so regeneration with identical inputs
// leaves the tree untouched (and reports it).
void write_file_if_changed(const fs::path& path, const std::string& bytes, int& written,
                           int& unchanged) {
    std::error_code ec;
    if (fs::is_regular_file(path, ec)) {
        std::ifstream f(path, std::ios::binary);
        if (f) {
            std::string existing((std::istreambuf_iterator<char>(f)),
                                 std::istreambuf_iterator<char>());
            if (existing == bytes) {
                ++unchanged;
                return;
            }
        }
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open '" + path.string() + "' for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    f.flush();
    if (!f) throw DataError("failed writing '" + path.string() + "'");
    ++written;
}

}  // namespace

TamperRect tamper_rect(const SyntheticConfig& cfg, int video_index) {
    cfg.validate();
    const int n_half = cfg.n_videos / 2;
    if (video_index < n_half || video_index >= cfg.n_videos) {
        throw ContractError("tamper_rect: video " + std::to_string(video_index) +
                            " is not a fake (fakes are " + std::to_string(n_half) + ".." +
                            std::to_string(cfg.n_videos - 1) + ")");
    }
    TamperRect r;
    const int min_side = std::min(cfg.width, cfg.height);
    r.side = std::max(2, static_cast<int>(std::floor(cfg.blend_rect_fraction * min_side)));
    r.side = std::min(r.side, min_side);
    Rng rng(mix64(cfg.seed ^ static_cast<std::uint64_t>(video_index), 0xFACE));
    auto place = [&](int extent) {
        const int lo = std::min(2, std::max(0, extent - r.side));
        const int hi = extent - r.side - 2;
        if (hi < lo) return std::max(0, (extent - r.side) / 2);
        return lo + static_cast<int>(rng.index(static_cast<std::size_t>(hi - lo + 1)));
    };
    r.x0 = place(cfg.width);
    r.y0 = place(cfg.height);
    return r;
}

GenerateResult generate_synthetic(const SyntheticConfig& cfg, const std::string& out_root) {
    cfg.validate();
    std::error_code ec;
    fs::create_directories(out_root, ec);
    if (ec || !fs::is_directory(out_root)) {
        throw DataError("cannot create dataset directory '" + out_root + "': " + ec.message());
    }

    GenerateResult result;
    const int n_half = cfg.n_videos / 2;

    std::string labels = "video_id,label\n";
    for (int v = 0; v < cfg.n_videos; ++v) {
        labels += video_name(v) + (v < n_half ? ",0\n" : ",1\n");
    }
    write_file_if_changed(fs::path(out_root) / "labels.csv", labels, result.files_written,
                          result.files_unchanged);

    nlohmann::json full_boxes = nlohmann::json::array();
    for (int f = 0; f < cfg.frames_per_video; ++f) {
        full_boxes.push_back({{"x", 0.0}, {"y", 0.0}, {"w", 1.0}, {"h", 1.0}});
    }
    const std::string sidecar = full_boxes.dump() + "\n";

    for (int v = 0; v < cfg.n_videos; ++v) {
        const fs::path dir = fs::path(out_root) / video_name(v);
        fs::create_directories(dir, ec);
        if (ec || !fs::is_directory(dir)) {
            throw DataError("cannot create directory '" + dir.string() + "': " + ec.message());
        }
        const bool fake = v >= n_half;
        const int base_identity = fake ? v - n_half : v;
        // Splice source; with a single identity the seam and green shift
        // remain the (still detectable) artifact.
        const int donor_identity = fake ? (base_identity + 1) % n_half : -1;
        const TamperRect rect = fake ? tamper_rect(cfg, v) : TamperRect{};
        for (int f = 0; f < cfg.frames_per_video; ++f) {
            std::vector<double> scene = render_scene(cfg, base_identity, f);
            if (fake) {
                tamper_scene(scene, render_scene(cfg, donor_identity, f), cfg.width, rect);
            }
            const Image frame = finalize_frame(cfg, scene, base_identity, f);
            write_file_if_changed(dir / frame_name(f), encode_ppm(frame), result.files_written,
                                  result.files_unchanged);
        }
        write_file_if_changed(dir / "faces.json", sidecar, result.files_written,
                              result.files_unchanged);
    }
    result.manifest = load_dataset(out_root);
    return result;
}

std::vector<std::optional<FaceBox>> load_face_sidecar(const std::string& path, int frame_count) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_text_file(path, "face sidecar"));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": invalid JSON: " + e.what());
    }
    if (!doc.is_array()) throw DataError(path + ": face sidecar must be a JSON array");
    if (static_cast<int>(doc.size()) != frame_count) {
        throw DataError(path + ": sidecar has " + std::to_string(doc.size()) +
                        " entries but the video has " + std::to_string(frame_count) + " frames");
    }
    std::vector<std::optional<FaceBox>> boxes;
    boxes.reserve(doc.size());
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto& e = doc[i];
        if (e.is_null()) {
            boxes.emplace_back(std::nullopt);
            continue;
        }
        if (!e.is_object() || !e.contains("x") || !e.contains("y") || !e.contains("w") ||
            !e.contains("h") || !e["x"].is_number() || !e["y"].is_number() ||
            !e["w"].is_number() || !e["h"].is_number()) {
            throw DataError(path + ": entry " + std::to_string(i) +
                            " must be null or an object with numeric x, y, w, h");
        }
        FaceBox box{e["x"].get<double>(), e["y"].get<double>(), e["w"].get<double>(),
                    e["h"].get<double>()};
        box.validate(path + ": entry " + std::to_string(i));
        boxes.push_back(box);
    }
    return boxes;
}

VideoSample load_video(const DatasetManifest& manifest, std::size_t entry_index, int out_h,
                       int out_w) {
    if (entry_index >= manifest.entries.size()) {
        throw ContractError("video index " + std::to_string(entry_index) +
                            " out of range (manifest has " +
                            std::to_string(manifest.entries.size()) + " entries)");
    }
    const ManifestEntry& e = manifest.entries[entry_index];
    const fs::path dir = fs::path(manifest.root) / e.video_id;
    std::vector<std::optional<FaceBox>> boxes(static_cast<std::size_t>(e.frame_count),
                                              std::nullopt);
    if (e.has_face_sidecar) {
        boxes = load_face_sidecar((dir / "faces.json").string(), e.frame_count);
    }
    VideoSample sample;
    sample.video_id = e.video_id;
    sample.label = e.label;
    sample.frames.reserve(static_cast<std::size_t>(e.frame_count));
    int fw = -1, fh = -1;
    for (int f = 0; f < e.frame_count; ++f) {
        const Image img = read_ppm((dir / frame_name(f)).string());
        if (f == 0) {
            fw = img.width;
            fh = img.height;
        } else if (img.width != fw || img.height != fh) {
            throw DataError("video '" + e.video_id + "' frames disagree on dimensions (" +
                            frame_name(f) + " is " + std::to_string(img.width) + "x" +
                            std::to_string(img.height) + ", expected " + std::to_string(fw) +
                            "x" + std::to_string(fh) + ")");
        }
        sample.frames.push_back(
            image_to_tensor(crop_face(img, boxes[static_cast<std::size_t>(f)], out_h, out_w)));
    }
    return sample;
}

std::vector<VideoSample> load_all_videos(const DatasetManifest& manifest, int out_h, int out_w) {
    std::vector<VideoSample> out;
    out.reserve(manifest.entries.size());
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        out.push_back(load_video(manifest, i, out_h, out_w));
    }
    return out;
}

}  // namespace fakegaze
