#include "doctest.h"

#include "umm/toy_data.hpp"

#include <cstdio>
#include <filesystem>
#include <set>

using namespace umm;
using namespace umm::toy;

TEST_CASE("generate_scene is deterministic and valid") {
    for (uint64_t seed : {0ull, 1ull, 17ull, 999ull}) {
        Scene a = generate_scene(seed, false);
        Scene b = generate_scene(seed, false);
        CHECK(a == b);
        CHECK(scene_valid(a));
        CHECK(!a.motion.has_value());
        Scene v = generate_scene(seed, true);
        CHECK(v.motion.has_value());
        CHECK(scene_valid(v));
    }
}

TEST_CASE("scene distribution covers every shape/color pair over 10^4 seeds") {
    int counts[kNumShapes][kNumColors] = {};
    for (uint64_t seed = 0; seed < 10000; ++seed) {
        Scene s = generate_scene(seed, false);
        for (auto& o : s.objects) counts[o.shape][o.color]++;
    }
    for (int sh = 0; sh < kNumShapes; ++sh)
        for (int co = 0; co < kNumColors; ++co) CHECK(counts[sh][co] >= 100);
}

TEST_CASE("render: single red circle at center has red-dominant center cell") {
    Scene s;
    s.objects.push_back({kCircle, kRed, 4});
    TensorF img = render(s, 128, 1);
    CHECK(img.shape == Shape{3, 1, 128, 128});
    double r = 0, g = 0, b = 0;
    for (int y = 42; y < 85; ++y)
        for (int x = 42; x < 85; ++x) {
            r += img[(0 * 128 + y) * 128 + x];
            g += img[(1 * 128 + y) * 128 + x];
            b += img[(2 * 128 + y) * 128 + x];
        }
    CHECK(r > 0);
    CHECK(r > g + 1.0);
    CHECK(r > b + 1.0);
    for (float v : *img.storage) {
        CHECK(v >= -1.0f);
        CHECK(v <= 1.0f);
    }
}

static double centroid_col(const TensorF& vid, int frame, int R) {
    double sx = 0, n = 0;
    for (int y = 0; y < R; ++y)
        for (int x = 0; x < R; ++x) {
            bool fg = false;
            for (int c = 0; c < 3; ++c)
                if (vid[((int64_t(c) * vid.dim(1) + frame) * R + y) * R + x] != 0.0f) fg = true;
            if (fg) {
                sx += x;
                n += 1;
            }
        }
    return sx / n;
}

TEST_CASE("render: rightward motion strictly increases the centroid column") {
    Scene s;
    s.objects.push_back({kSquare, kBlue, 3}); // middle-left
    s.motion = Motion{0, kRight, 1};
    TensorF vid = render(s, 128, 5);
    double prev = -1;
    for (int f = 0; f < 5; ++f) {
        double c = centroid_col(vid, f, 128);
        CHECK(c > prev);
        prev = c;
    }
}

TEST_CASE("render rejects divisibility and frame-count violations") {
    Scene img = generate_scene(3, false);
    Scene vid = generate_scene(3, true);
    CHECK_THROWS(render(img, 100, 1));  // 100 % 16 != 0
    CHECK_THROWS(render(img, 128, 5)); // image must use frames=1
    CHECK_THROWS(render(vid, 128, 4)); // 4 % 4 != 1
    CHECK_NOTHROW(render(vid, 128, 5));
}

TEST_CASE("render is pixel-deterministic") {
    Scene s = generate_scene(77, true);
    TensorF a = render(s, 128, 5);
    TensorF b = render(s, 128, 5);
    CHECK(bit_equal(a, b));
}

TEST_CASE("caption emits the plain template for some seed and always parses back") {
    Scene s;
    s.objects.push_back({kCircle, kRed, 0});
    bool saw_plain = false;
    for (uint64_t t = 0; t < 16; ++t) {
        std::string c = caption(s, t);
        if (c == "a red circle in the top left") saw_plain = true;
        auto parsed = parse_caption(c);
        REQUIRE(parsed.has_value());
        CHECK(*parsed == s);
    }
    CHECK(saw_plain);
}

TEST_CASE("two-object caption mentions each object exactly once") {
    Scene s;
    s.objects.push_back({kCircle, kRed, 0});
    s.objects.push_back({kSquare, kBlue, 8});
    std::string c = caption(s, 0);
    auto count = [&](const std::string& w) {
        size_t n = 0, pos = 0;
        while ((pos = c.find(w, pos)) != std::string::npos) {
            ++n;
            pos += w.size();
        }
        return n;
    };
    CHECK(count("circle") == 1);
    CHECK(count("square") == 1);
    CHECK(count("and") == 1);
}

TEST_CASE("parse(caption(s)) == s across scenes, templates and videos") {
    for (uint64_t seed = 0; seed < 500; ++seed) {
        Scene s = generate_scene(seed, (seed % 3) == 0);
        for (uint64_t t = 0; t < 3; ++t) {
            auto parsed = parse_caption(caption(s, t));
            REQUIRE(parsed.has_value());
            CHECK(*parsed == s);
        }
    }
    CHECK(!parse_caption("").has_value());
    CHECK(!parse_caption("a red circle in the top").has_value());
}

TEST_CASE("edit: recolor differs only in color; remove on singleton empties the scene") {
    Scene s;
    s.objects.push_back({kTriangle, kGreen, 4});
    for (uint64_t seed = 0; seed < 200; ++seed) {
        EditPair p = make_edit_pair(s, seed);
        if (p.kind == EditKind::recolor) {
            REQUIRE(p.target_scene.objects.size() == 1);
            CHECK(p.target_scene.objects[0].shape == s.objects[0].shape);
            CHECK(p.target_scene.objects[0].cell == s.objects[0].cell);
            CHECK(p.target_scene.objects[0].color != s.objects[0].color);
        }
        if (p.kind == EditKind::remove) {
            CHECK(p.target_scene.objects.empty());
            TensorF tgt = render(p.target_scene, 128, 1);
            for (float v : *tgt.storage) CHECK(v == 0.0f);
        }
    }
}

TEST_CASE("edit pixel diff stays inside the edited cells (1000 pairs)") {
    const int R = 128;
    auto cell_span = [&](int idx) { // [lo, hi) pixel range of a grid row/col
        return std::pair<int, int>{idx * R / kGrid, (idx + 1) * R / kGrid};
    };
    for (uint64_t seed = 0; seed < 1000; ++seed) {
        Scene s = generate_scene(seed, false);
        EditPair p = make_edit_pair(s, seed);
        std::set<int> changed_cells;
        for (auto& o : p.source_scene.objects) changed_cells.insert(o.cell);
        for (auto& o : p.target_scene.objects) changed_cells.erase(o.cell);
        // recompute properly: symmetric difference of (cell -> object) maps
        changed_cells.clear();
        auto at_cell = [](const Scene& sc, int cell) -> const SceneObject* {
            for (auto& o : sc.objects)
                if (o.cell == cell) return &o;
            return nullptr;
        };
        for (int cell = 0; cell < kGrid * kGrid; ++cell) {
            const SceneObject* a = at_cell(p.source_scene, cell);
            const SceneObject* b = at_cell(p.target_scene, cell);
            bool same = (a == nullptr && b == nullptr) ||
                        (a && b && a->shape == b->shape && a->color == b->color);
            if (!same) changed_cells.insert(cell);
        }
        TensorF src = render(p.source_scene, R, 1);
        TensorF tgt = render(p.target_scene, R, 1);
        for (int y = 0; y < R; ++y)
            for (int x = 0; x < R; ++x) {
                bool diff = false;
                for (int c = 0; c < 3; ++c)
                    if (src[(int64_t(c) * R + y) * R + x] != tgt[(int64_t(c) * R + y) * R + x])
                        diff = true;
                if (!diff) continue;
                int cell = (y * kGrid / R) * kGrid + (x * kGrid / R);
                INFO("seed ", seed, " pixel ", x, ",", y, " cell ", cell);
                CHECK(changed_cells.count(cell) == 1);
                auto [ylo, yhi] = cell_span(cell / kGrid);
                auto [xlo, xhi] = cell_span(cell % kGrid);
                CHECK(y >= ylo);
                CHECK(y < yhi);
                CHECK(x >= xlo);
                CHECK(x < xhi);
            }
    }
}

TEST_CASE("tokenizer round-trips the grammar; unknown words are named errors") {
    CHECK(tokenize("").empty());
    CHECK(detokenize({}) == "");
    for (uint64_t seed = 0; seed < 300; ++seed) {
        Scene s = generate_scene(seed, seed % 4 == 0);
        std::string c = caption(s, seed);
        CHECK(detokenize(tokenize(c)) == c);
        if (!s.motion) {
            EditPair p = make_edit_pair(s, seed);
            CHECK(detokenize(tokenize(p.instruction)) == p.instruction);
        }
    }
    try {
        tokenize("a zebra in the top left");
        CHECK(false);
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("zebra") != std::string::npos);
    }
    for (auto& [w, id] : vocab().word_to_id) {
        (void)w;
        CHECK(id >= TokenVocab::kFirstWord);
    }
}

TEST_CASE("manifest round-trips and splits filter") {
    Manifest m = make_manifest(25, {"train", "val"}, 7);
    CHECK(m.records.size() == 50);
    std::string path = std::filesystem::temp_directory_path() / "umm_manifest_test.jsonl";
    write_manifest(m, path);
    Manifest r = read_manifest(path);
    REQUIRE(r.records.size() == m.records.size());
    for (size_t i = 0; i < r.records.size(); ++i) {
        CHECK(r.records[i].seed == m.records[i].seed);
        CHECK(r.records[i].kind == m.records[i].kind);
        CHECK(r.records[i].split == m.records[i].split);
    }
    CHECK(m.of("train").size() == 25);
    CHECK(m.of("train", TaskKind::caption).size() == 5);
    std::remove(path.c_str());
}

TEST_CASE("materialize produces task-consistent samples") {
    Manifest m = make_manifest(10, {"train"}, 3);
    for (auto& rec : m.records) {
        toy::Sample s = materialize(rec, 128);
        if (task_is_video(rec.kind)) {
            CHECK(s.pixels.dim(1) == kDefaultVideoFrames);
            CHECK(s.scene.motion.has_value());
        } else {
            CHECK(s.pixels.dim(1) == 1);
        }
        if (rec.kind == TaskKind::edit) {
            CHECK(s.target.has_value());
            CHECK(s.target_scene.has_value());
        } else {
            CHECK(parse_caption(s.text) == s.scene);
        }
    }
}
