#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fakegaze/image.hpp"
#include "fakegaze/tensor.hpp"

namespace fakegaze {

// Axis-aligned face box in normalized coordinates, (x, y) top-left.
// Produced by any external detector; this project only consumes the contract.
struct FaceBox {
    double x = 0.0, y = 0.0, w = 1.0, h = 1.0;

    // Enforces 0 <= x, y; w, h > 0; x+w <= 1; y+h <= 1 (tiny slack for
    // serialized doubles). Throws DataError prefixed with `origin`.
    void validate(const std::string& origin) const;
};

struct ManifestEntry {
    std::string video_id;
    int frame_count = 0;
    int label = 0;  // 1 = fake
    bool has_face_sidecar = false;
};

struct DatasetManifest {
    std::string root;
    std::vector<ManifestEntry> entries;
};

// Scans <root>/labels.csv (header `video_id,label`) and every listed
// directory <root>/<video_id>/frame_%05d.ppm (contiguous from 00000).
// Frames are validated lazily at load_video time; the manifest only proves
// the layout. Throws DataError naming the offending file/id.
DatasetManifest load_dataset(const std::string& root);

// Deterministic frame selection. For total >= n >= 2 the indices are
// floor(i * (total-1) / (n-1)); n == 1 picks frame 0; total < n yields
// 0..total-1 padded by repeating the last index. Always length n and
// non-decreasing.
std::vector<int> sample_frames(int total_frames, int n);

// With a box: the box is expanded by a 25% margin about its center, clipped
// to the frame, cropped, and bilinear-resized to out size. Without a box:
// center square crop, then resize. Throws DataError if clipping leaves a
// degenerate region; ContractError if out size < 8.
Image crop_face(const Image& frame, const std::optional<FaceBox>& box, int out_h, int out_w);

struct SyntheticConfig {
    int n_videos = 200;        // even; first half real, second half fake
    int frames_per_video = 8;  // >= 1
    int height = 32, width = 32;          // >= 16 each
    double blend_rect_fraction = 0.55;    // tampered square side / min(H, W), in (0,1)
    std::uint64_t seed = 1;

    void validate() const;  // throws ConfigError
};

// The square region video `video_index` (a fake, index >= n_videos/2) has
// replaced with donor content. Exposed so tests can verify that real/fake
// frame pairs differ only inside this rectangle.
struct TamperRect {
    int x0 = 0, y0 = 0, side = 0;
};
TamperRect tamper_rect(const SyntheticConfig& cfg, int video_index);

struct GenerateResult {
    DatasetManifest manifest;
    int files_written = 0;
    int files_unchanged = 0;  // rerun with identical cfg+seed rewrites nothing
};

// Renders the synthetic corpus: procedural faces (skin-tone ellipse, eye
// disks, mouth arc, per-video geometry jitter, per-frame motion and Gaussian
// pixel noise). Fakes re-render a real identity and splice in the tamper
// rectangle from a different identity, alpha-feathered over a 2-pixel border
// and green-shifted by +8/255 — the deliberately learnable artifact. Writes
// frames, labels.csv, and full-frame face sidecars; fully deterministic in
// (cfg, seed).
GenerateResult generate_synthetic(const SyntheticConfig& cfg, const std::string& out_root);

// A video loaded for the model: label plus cropped frames as [3 x H x W]
// float tensors scaled to [0, 1].
struct VideoSample {
    std::string video_id;
    int label = 0;
    std::vector<Tensor> frames;
};

std::vector<std::optional<FaceBox>> load_face_sidecar(const std::string& path, int frame_count);
VideoSample load_video(const DatasetManifest& manifest, std::size_t entry_index, int out_h,
                       int out_w);
std::vector<VideoSample> load_all_videos(const DatasetManifest& manifest, int out_h, int out_w);

}  // namespace fakegaze
