#include "umm/toy_data.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "umm/rng.hpp"

namespace umm::toy {

namespace {

const char* kShapeWords[] = {"circle", "square", "triangle"};
const char* kColorWords[] = {"red", "green", "blue", "yellow"};
const char* kRowWords[] = {"top", "middle", "bottom"};
const char* kColWords[] = {"left", "center", "right"};
const char* kDirWords[] = {"left", "right", "up", "down"};
const char* kSpeedWords[] = {"slowly", "quickly"};

// color values in [-1,1] rgb; background stays gray = 0
const float kPalette[kNumColors][3] = {
    {1.f, -1.f, -1.f},  // red
    {-1.f, 1.f, -1.f},  // green
    {-1.f, -1.f, 1.f},  // blue
    {1.f, 1.f, -1.f},   // yellow
};

int dir_dx(int d) { return d == kLeft ? -1 : d == kRight ? 1 : 0; }
int dir_dy(int d) { return d == kUp ? -1 : d == kDown ? 1 : 0; }

void canonicalize(Scene& s) {
    // objects sorted by cell; motion index follows its object
    std::vector<int> order(s.objects.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return s.objects[size_t(a)].cell < s.objects[size_t(b)].cell; });
    std::vector<SceneObject> sorted;
    sorted.reserve(s.objects.size());
    int new_mover = -1;
    for (size_t i = 0; i < order.size(); ++i) {
        if (s.motion && s.motion->object_index == order[i]) new_mover = int(i);
        sorted.push_back(s.objects[size_t(order[i])]);
    }
    s.objects = std::move(sorted);
    if (s.motion) s.motion->object_index = new_mover;
}

// cells swept by the mover over the default clip length (inclusive endpoints);
// empty result = path leaves the grid
std::vector<int> motion_path_cells(int start_cell, int direction, int speed_qc, int frames) {
    int row = start_cell / kGrid, col = start_cell % kGrid;
    int total_cells = (speed_qc * (frames - 1) + 3) / 4; // ceil
    std::vector<int> cells;
    for (int k = 0; k <= total_cells; ++k) {
        int r = row + dir_dy(direction) * k;
        int c = col + dir_dx(direction) * k;
        if (r < 0 || r >= kGrid || c < 0 || c >= kGrid) return {};
        cells.push_back(r * kGrid + c);
    }
    return cells;
}

} // namespace

bool scene_valid(const Scene& s) {
    if (s.objects.empty() || s.objects.size() > 3) return false;
    for (size_t i = 0; i < s.objects.size(); ++i) {
        const auto& o = s.objects[i];
        if (o.shape < 0 || o.shape >= kNumShapes) return false;
        if (o.color < 0 || o.color >= kNumColors) return false;
        if (o.cell < 0 || o.cell >= kGrid * kGrid) return false;
        for (size_t j = i + 1; j < s.objects.size(); ++j)
            if (s.objects[j].cell == o.cell) return false;
        if (i > 0 && s.objects[i - 1].cell > o.cell) return false;
    }
    if (s.motion) {
        const auto& m = *s.motion;
        if (m.object_index < 0 || m.object_index >= int(s.objects.size())) return false;
        if (m.speed_qc < 1 || m.speed_qc > 2) return false;
        auto path = motion_path_cells(s.objects[size_t(m.object_index)].cell, m.direction, m.speed_qc,
                                      kDefaultVideoFrames);
        if (path.empty()) return false;
        for (size_t i = 0; i < s.objects.size(); ++i) {
            if (int(i) == m.object_index) continue;
            for (int c : path)
                if (s.objects[i].cell == c) return false;
        }
    }
    return true;
}

Scene generate_scene(uint64_t seed, bool want_video) {
    Rng rng(derive_seed(seed, /*stream=*/1, 0));
    Scene s;
    int n = 1 + int(rng.next_below(3));
    std::vector<int> cells;
    for (int i = 0; i < kGrid * kGrid; ++i) cells.push_back(i);
    for (int i = 0; i < n; ++i) {
        int pick = int(rng.next_below(uint64_t(cells.size())));
        SceneObject o;
        o.cell = cells[size_t(pick)];
        cells.erase(cells.begin() + pick);
        o.shape = int(rng.next_below(kNumShapes));
        o.color = int(rng.next_below(kNumColors));
        s.objects.push_back(o);
    }
    canonicalize(s);
    if (want_video) {
        // rejection over (mover, direction, speed) until the swept path stays
        // inside the grid and clear of the other objects
        for (;;) {
            Motion m;
            m.object_index = int(rng.next_below(uint64_t(s.objects.size())));
            m.direction = int(rng.next_below(4));
            m.speed_qc = 1 + int(rng.next_below(2));
            auto path = motion_path_cells(s.objects[size_t(m.object_index)].cell, m.direction,
                                          m.speed_qc, kDefaultVideoFrames);
            if (path.empty()) continue;
            bool clear = true;
            for (size_t i = 0; i < s.objects.size(); ++i) {
                if (int(i) == m.object_index) continue;
                for (int c : path)
                    if (s.objects[i].cell == c) clear = false;
            }
            if (!clear) continue;
            s.motion = m;
            break;
        }
    }
    return s;
}

int cell_center(int resolution, int idx) { return ((2 * idx + 1) * resolution) / 6; }

int shape_half_extent(int resolution) { return (7 * resolution) / 60; }

int motion_offset_px(int resolution, int speed_qc, int frame) {
    return (frame * speed_qc * resolution) / 12;
}

TensorF render(const Scene& scene, int resolution, int frames, int spatial_factor,
               int temporal_factor) {
    if (resolution % spatial_factor != 0)
        throw std::runtime_error("render: resolution " + std::to_string(resolution) +
                                 " not divisible by spatial factor " + std::to_string(spatial_factor));
    if (scene.motion) {
        if (frames % temporal_factor != 1)
            throw std::runtime_error("render: video frames " + std::to_string(frames) +
                                     " must be 1 mod " + std::to_string(temporal_factor));
    } else if (frames != 1) {
        throw std::runtime_error("render: image scenes render with frames = 1");
    }
    if (!scene.objects.empty() && !scene_valid(scene))
        throw std::runtime_error("render: invalid scene");

    const int R = resolution;
    const int s = shape_half_extent(R);
    TensorF out({3, frames, R, R});
    for (int f = 0; f < frames; ++f) {
        for (size_t i = 0; i < scene.objects.size(); ++i) {
            const auto& o = scene.objects[i];
            int cx = cell_center(R, o.cell % kGrid);
            int cy = cell_center(R, o.cell / kGrid);
            if (scene.motion && scene.motion->object_index == int(i)) {
                int d = motion_offset_px(R, scene.motion->speed_qc, f);
                cx += dir_dx(scene.motion->direction) * d;
                cy += dir_dy(scene.motion->direction) * d;
            }
            if (cx - s < 0 || cx + s >= R || cy - s < 0 || cy + s >= R)
                throw std::runtime_error("render: motion leaves the frame at frame " +
                                         std::to_string(f));
            const float* rgb = kPalette[o.color];
            for (int y = cy - s; y <= cy + s; ++y)
                for (int x = cx - s; x <= cx + s; ++x) {
                    bool inside = false;
                    switch (o.shape) {
                        case kCircle:
                            inside = (x - cx) * (x - cx) + (y - cy) * (y - cy) <= s * s;
                            break;
                        case kSquare:
                            inside = true;
                            break;
                        case kTriangle: {
                            // upward triangle: apex on top, full width at the base
                            int hw = (y - cy + s) / 2;
                            inside = std::abs(x - cx) <= hw;
                            break;
                        }
                    }
                    if (inside)
                        for (int c = 0; c < 3; ++c)
                            out[((int64_t(c) * frames + f) * R + y) * R + x] = rgb[c];
                }
        }
    }
    return out;
}

// ---- captions ---------------------------------------------------------------------

namespace {

std::string cell_phrase(int cell) {
    return std::string(kRowWords[cell / kGrid]) + " " + kColWords[cell % kGrid];
}

std::string object_clause(const SceneObject& o, int tmpl) {
    std::string col = kColorWords[o.color];
    std::string shp = kShapeWords[o.shape];
    std::string pos = cell_phrase(o.cell);
    switch (tmpl) {
        case 1: return "the " + pos + " contains a " + col + " " + shp;
        case 2: return "there is a " + col + " " + shp + " in the " + pos;
        default: return "a " + col + " " + shp + " in the " + pos;
    }
}

} // namespace

std::string caption(const Scene& scene, uint64_t template_seed) {
    Rng rng(derive_seed(template_seed, /*stream=*/2, 0));
    int tmpl = int(rng.next_below(3));
    std::string out;
    for (size_t i = 0; i < scene.objects.size(); ++i) {
        if (i) out += " and ";
        out += object_clause(scene.objects[i], tmpl);
        if (scene.motion && scene.motion->object_index == int(i)) {
            out += " moving ";
            out += kDirWords[scene.motion->direction];
            out += " ";
            out += kSpeedWords[scene.motion->speed_qc - 1];
        }
    }
    return out;
}

// ---- parser ----------------------------------------------------------------------

namespace {

int find_word(const char* const* list, int n, const std::string& w) {
    for (int i = 0; i < n; ++i)
        if (w == list[i]) return i;
    return -1;
}

struct Cursor {
    const std::vector<std::string>& w;
    size_t i = 0;
    bool accept(const std::string& s) {
        if (i < w.size() && w[i] == s) {
            ++i;
            return true;
        }
        return false;
    }
    const std::string* next() { return i < w.size() ? &w[i++] : nullptr; }
    bool done() const { return i == w.size(); }
};

bool parse_pos(Cursor& c, int& cell) {
    const std::string* r = c.next();
    const std::string* l = c.next();
    if (!r || !l) return false;
    int row = find_word(kRowWords, kGrid, *r);
    int col = find_word(kColWords, kGrid, *l);
    if (row < 0 || col < 0) return false;
    cell = row * kGrid + col;
    return true;
}

bool parse_color_shape(Cursor& c, SceneObject& o) {
    const std::string* cw = c.next();
    const std::string* sw = c.next();
    if (!cw || !sw) return false;
    o.color = find_word(kColorWords, kNumColors, *cw);
    o.shape = find_word(kShapeWords, kNumShapes, *sw);
    return o.color >= 0 && o.shape >= 0;
}

bool parse_clause(const std::vector<std::string>& words, SceneObject& o,
                  std::optional<Motion>& motion) {
    Cursor c{words};
    bool ok = false;
    if (c.accept("a")) { // "a red circle in the top left"
        ok = parse_color_shape(c, o) && c.accept("in") && c.accept("the") && parse_pos(c, o.cell);
    } else if (c.accept("the")) { // "the top left contains a red circle"
        ok = parse_pos(c, o.cell) && c.accept("contains") && c.accept("a") && parse_color_shape(c, o);
    } else if (c.accept("there")) { // "there is a red circle in the top left"
        ok = c.accept("is") && c.accept("a") && parse_color_shape(c, o) && c.accept("in") &&
             c.accept("the") && parse_pos(c, o.cell);
    }
    if (!ok) return false;
    if (c.done()) return true;
    if (!c.accept("moving")) return false;
    const std::string* dw = c.next();
    const std::string* sw = c.next();
    if (!dw || !sw || !c.done()) return false;
    Motion m;
    m.direction = find_word(kDirWords, 4, *dw);
    int sp = find_word(kSpeedWords, 2, *sw);
    if (m.direction < 0 || sp < 0) return false;
    m.speed_qc = sp + 1;
    motion = m;
    return true;
}

} // namespace

std::optional<Scene> parse_caption(const std::string& text) {
    std::vector<std::string> words;
    {
        std::istringstream iss(text);
        std::string w;
        while (iss >> w) words.push_back(w);
    }
    if (words.empty()) return std::nullopt;
    std::vector<std::vector<std::string>> clauses(1);
    for (auto& w : words) {
        if (w == "and")
            clauses.emplace_back();
        else
            clauses.back().push_back(w);
    }
    Scene s;
    for (size_t ci = 0; ci < clauses.size(); ++ci) {
        SceneObject o;
        std::optional<Motion> motion;
        if (!parse_clause(clauses[ci], o, motion)) return std::nullopt;
        s.objects.push_back(o);
        if (motion) {
            if (s.motion) return std::nullopt; // at most one mover
            motion->object_index = int(ci);
            s.motion = motion;
        }
    }
    canonicalize(s);
    if (!scene_valid(s)) return std::nullopt;
    return s;
}

// ---- edits ------------------------------------------------------------------------

EditPair make_edit_pair(const Scene& scene, uint64_t seed, bool identity) {
    if (scene.motion) throw std::runtime_error("make_edit_pair: image scenes only");
    Rng rng(derive_seed(seed, /*stream=*/3, 0));
    EditPair p;
    p.source_scene = scene;
    p.target_scene = scene;
    if (identity) {
        p.kind = EditKind::identity;
        p.instruction = "";
        return p;
    }
    std::vector<bool> occupied(kGrid * kGrid, false);
    for (auto& o : scene.objects) occupied[size_t(o.cell)] = true;
    std::vector<int> free_cells;
    for (int i = 0; i < kGrid * kGrid; ++i)
        if (!occupied[size_t(i)]) free_cells.push_back(i);

    int kind = int(rng.next_below(4));
    if (kind == int(EditKind::add) && scene.objects.size() >= 3) kind = int(EditKind::recolor);
    p.kind = EditKind(kind);
    int oi = int(rng.next_below(uint64_t(scene.objects.size())));
    const SceneObject& src = scene.objects[size_t(oi)];
    std::string ref = std::string(kShapeWords[src.shape]) + " in the " + cell_phrase(src.cell);

    switch (p.kind) {
        case EditKind::recolor: {
            int nc = int(rng.next_below(kNumColors - 1));
            if (nc >= src.color) ++nc;
            p.target_scene.objects[size_t(oi)].color = nc;
            p.instruction = "recolor the " + ref + " to " + kColorWords[nc];
            break;
        }
        case EditKind::move: {
            int cell = free_cells[size_t(rng.next_below(uint64_t(free_cells.size())))];
            p.target_scene.objects[size_t(oi)].cell = cell;
            p.instruction = "move the " + ref + " to the " + cell_phrase(cell);
            break;
        }
        case EditKind::remove: {
            p.target_scene.objects.erase(p.target_scene.objects.begin() + oi);
            p.instruction = "remove the " + ref;
            break;
        }
        case EditKind::add: {
            SceneObject o;
            o.cell = free_cells[size_t(rng.next_below(uint64_t(free_cells.size())))];
            o.shape = int(rng.next_below(kNumShapes));
            o.color = int(rng.next_below(kNumColors));
            p.target_scene.objects.push_back(o);
            p.instruction = std::string("add a ") + kColorWords[o.color] + " " + kShapeWords[o.shape] +
                            " in the " + cell_phrase(o.cell);
            break;
        }
        case EditKind::identity:
            break;
    }
    canonicalize(p.target_scene);
    return p;
}

// ---- tokenizer ---------------------------------------------------------------------

const TokenVocab& vocab() {
    static const TokenVocab v = [] {
        TokenVocab tv;
        tv.id_to_word.resize(TokenVocab::kFirstWord);
        tv.id_to_word[TokenVocab::kPad] = "<pad>";
        tv.id_to_word[TokenVocab::kBeginAnswer] = "<boa>";
        tv.id_to_word[TokenVocab::kEndOfText] = "<eot>";
        tv.id_to_word[TokenVocab::kImagePlaceholder] = "<img>";
        for (int i = 4; i < TokenVocab::kFirstWord; ++i)
            tv.id_to_word[size_t(i)] = "<reserved" + std::to_string(i) + ">";
        auto add = [&](const std::string& w) {
            if (tv.word_to_id.count(w)) return;
            tv.word_to_id[w] = int(tv.id_to_word.size());
            tv.id_to_word.push_back(w);
        };
        for (auto w : {"a", "and", "the", "in", "to", "is", "there", "contains", "moving", "recolor",
                       "move", "remove", "add"})
            add(w);
        for (auto w : kShapeWords) add(w);
        for (auto w : kColorWords) add(w);
        for (auto w : kRowWords) add(w);
        for (auto w : kColWords) add(w);
        for (auto w : kDirWords) add(w);
        for (auto w : kSpeedWords) add(w);
        return tv;
    }();
    return v;
}

std::vector<int> tokenize(const std::string& text) {
    const auto& v = vocab();
    std::vector<int> ids;
    std::istringstream iss(text);
    std::string w;
    while (iss >> w) {
        auto it = v.word_to_id.find(w);
        if (it == v.word_to_id.end())
            throw std::runtime_error("tokenize: unknown word '" + w + "'");
        ids.push_back(it->second);
    }
    return ids;
}

std::string detokenize(const std::vector<int>& ids) {
    const auto& v = vocab();
    std::string out;
    for (size_t i = 0; i < ids.size(); ++i) {
        int id = ids[i];
        if (id < TokenVocab::kFirstWord || id >= v.size())
            throw std::runtime_error("detokenize: id " + std::to_string(id) +
                                     " is not a grammar word");
        if (i) out += " ";
        out += v.id_to_word[size_t(id)];
    }
    return out;
}

// ---- manifest ---------------------------------------------------------------------

const char* task_name(TaskKind k) {
    switch (k) {
        case TaskKind::caption: return "caption";
        case TaskKind::t2i: return "t2i";
        case TaskKind::edit: return "edit";
        case TaskKind::video_caption: return "video-caption";
        case TaskKind::t2v: return "t2v";
    }
    return "?";
}

std::optional<TaskKind> task_from_name(const std::string& name) {
    for (int k = 0; k <= int(TaskKind::t2v); ++k)
        if (name == task_name(TaskKind(k))) return TaskKind(k);
    return std::nullopt;
}

bool task_is_video(TaskKind k) { return k == TaskKind::video_caption || k == TaskKind::t2v; }

std::vector<ManifestRecord> Manifest::of(const std::string& split) const {
    std::vector<ManifestRecord> out;
    for (auto& r : records)
        if (r.split == split) out.push_back(r);
    return out;
}

std::vector<ManifestRecord> Manifest::of(const std::string& split, TaskKind kind) const {
    std::vector<ManifestRecord> out;
    for (auto& r : records)
        if (r.split == split && r.kind == kind) out.push_back(r);
    return out;
}

void write_manifest(const Manifest& m, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_manifest: cannot open " + path);
    for (auto& r : m.records) {
        nlohmann::json j;
        j["seed"] = r.seed;
        j["kind"] = task_name(r.kind);
        j["split"] = r.split;
        f << j.dump() << "\n";
    }
}

Manifest read_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("read_manifest: cannot open " + path);
    Manifest m;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw std::runtime_error("read_manifest: bad json at line " + std::to_string(lineno));
        ManifestRecord r;
        r.seed = j.at("seed").get<uint64_t>();
        auto kind = task_from_name(j.at("kind").get<std::string>());
        if (!kind)
            throw std::runtime_error("read_manifest: unknown kind at line " + std::to_string(lineno));
        r.kind = *kind;
        r.split = j.at("split").get<std::string>();
        m.records.push_back(r);
    }
    return m;
}

Manifest make_manifest(int64_t size, const std::vector<std::string>& splits, uint64_t seed) {
    Manifest m;
    const TaskKind kinds[] = {TaskKind::caption, TaskKind::t2i, TaskKind::edit,
                              TaskKind::video_caption, TaskKind::t2v};
    uint64_t counter = 0;
    for (auto& split : splits) {
        for (int64_t i = 0; i < size; ++i) {
            ManifestRecord r;
            r.kind = kinds[counter % 5];
            r.seed = derive_seed(seed, /*stream=*/4, counter);
            r.split = split;
            m.records.push_back(r);
            ++counter;
        }
    }
    return m;
}

Sample materialize(const ManifestRecord& rec, int resolution, double identity_edit_fraction) {
    Sample s;
    s.kind = rec.kind;
    bool video = task_is_video(rec.kind);
    s.scene = generate_scene(rec.seed, video);
    int frames = video ? kDefaultVideoFrames : 1;
    if (rec.kind == TaskKind::edit) {
        bool identity = identity_edit_fraction > 0 &&
                        double(derive_seed(rec.seed, 5, 0) % 1000) < identity_edit_fraction * 1000.0;
        EditPair p = make_edit_pair(s.scene, rec.seed, identity);
        s.text = p.instruction;
        s.pixels = render(p.source_scene, resolution, 1);
        s.target = render(p.target_scene, resolution, 1);
        s.target_scene = p.target_scene;
    } else {
        s.text = caption(s.scene, rec.seed);
        s.pixels = render(s.scene, resolution, frames);
    }
    return s;
}

} // namespace umm::toy
