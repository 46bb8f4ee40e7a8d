#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "umm/tensor.hpp"

// Procedural toy corpus: scenes of flat-colored shapes on a 3x3 grid,
// rendered with integer rasterization so the whole corpus is byte-identical
// across runs and platforms. Captions form a closed word-level grammar with
// an exact inverse parser.

namespace umm::toy {

enum ShapeKind : int { kCircle = 0, kSquare = 1, kTriangle = 2 };
enum ColorKind : int { kRed = 0, kGreen = 1, kBlue = 2, kYellow = 3 };
enum Direction : int { kLeft = 0, kRight = 1, kUp = 2, kDown = 3 };

constexpr int kGrid = 3;
constexpr int kNumShapes = 3;
constexpr int kNumColors = 4;
constexpr int kDefaultVideoFrames = 5;

struct SceneObject {
    int shape = 0;
    int color = 0;
    int cell = 0; // row-major in the 3x3 grid

    bool operator==(const SceneObject&) const = default;
};

struct Motion {
    int object_index = 0;
    int direction = kRight;
    int speed_qc = 1; // quarter grid cells per frame: 1 = slowly, 2 = quickly

    bool operator==(const Motion&) const = default;
};

struct Scene {
    std::vector<SceneObject> objects; // canonical order: sorted by cell
    std::optional<Motion> motion;     // present iff video

    bool operator==(const Scene&) const = default;
};

bool scene_valid(const Scene& s);

// deterministic in seed; 1-3 objects on distinct cells, canonical order;
// want_video additionally picks a mover whose path stays in frame and clear
// of other objects for the default 5-frame clip
Scene generate_scene(uint64_t seed, bool want_video);

// (3, frames, res, res) in [-1, 1]; throws on divisibility/bounds violations
TensorF render(const Scene& scene, int resolution, int frames, int spatial_factor = 16,
               int temporal_factor = 4);

// integer center/extent helpers shared with the eval oracle
int cell_center(int resolution, int idx);
int shape_half_extent(int resolution);
int motion_offset_px(int resolution, int speed_qc, int frame);

std::string caption(const Scene& scene, uint64_t template_seed);

// exact inverse of caption() on grammar strings; nullopt on anything else
std::optional<Scene> parse_caption(const std::string& text);

enum class EditKind : int { recolor = 0, move = 1, remove = 2, add = 3, identity = 4 };

struct EditPair {
    Scene source_scene;
    Scene target_scene;
    EditKind kind = EditKind::recolor;
    std::string instruction;
};

// image scenes only; identity pairs are requested explicitly by the caller
EditPair make_edit_pair(const Scene& scene, uint64_t seed, bool identity = false);

// ---- tokenizer -----------------------------------------------------------------

struct TokenVocab {
    static constexpr int kPad = 0;
    static constexpr int kBeginAnswer = 1;
    static constexpr int kEndOfText = 2;
    static constexpr int kImagePlaceholder = 3;
    static constexpr int kFirstWord = 16;

    std::vector<std::string> id_to_word; // dense, reserved slots hold markers
    std::unordered_map<std::string, int> word_to_id;

    int size() const { return int(id_to_word.size()); }
};

const TokenVocab& vocab();

// throws std::runtime_error naming the offending word
std::vector<int> tokenize(const std::string& text);
std::string detokenize(const std::vector<int>& ids);

// ---- corpus manifest -------------------------------------------------------------

enum class TaskKind : int { caption = 0, t2i = 1, edit = 2, video_caption = 3, t2v = 4 };

const char* task_name(TaskKind k);
std::optional<TaskKind> task_from_name(const std::string& name);
bool task_is_video(TaskKind k);

struct ManifestRecord {
    uint64_t seed = 0;
    TaskKind kind = TaskKind::caption;
    std::string split; // "train" or "val"
};

struct Manifest {
    std::vector<ManifestRecord> records;

    std::vector<ManifestRecord> of(const std::string& split) const;
    std::vector<ManifestRecord> of(const std::string& split, TaskKind kind) const;
};

// line-delimited {"seed":..,"kind":..,"split":..}
void write_manifest(const Manifest& m, const std::string& path);
Manifest read_manifest(const std::string& path);

// deterministic manifest: `size` records per split, kinds round-robin
Manifest make_manifest(int64_t size, const std::vector<std::string>& splits, uint64_t seed);

// ---- sample materialization -----------------------------------------------------

struct Sample {
    TaskKind kind = TaskKind::caption;
    Scene scene;                     // primary scene (source scene for edits)
    std::string text;                // caption or edit instruction
    TensorF pixels;                  // (3, F, R, R) source pixels
    std::optional<TensorF> target;   // edit target pixels
    std::optional<Scene> target_scene;
};

// regenerates the full sample for a manifest record from its seed
Sample materialize(const ManifestRecord& rec, int resolution, double identity_edit_fraction = 0.1);

} // namespace umm::toy
