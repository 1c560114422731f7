#include <doctest.h>

#include <algorithm>

#include "test_support.hpp"
#include "veil/attributes.hpp"
#include "veil/errors.hpp"

using namespace veil;
using veil::test::TempDir;

namespace {

FaceRecord make_face(double x0, double y0, double x1, double y1,
                     const std::vector<double>& attrs) {
    FaceRecord f;
    f.x0 = x0;
    f.y0 = y0;
    f.x1 = x1;
    f.y1 = y1;
    const double w = x1 - x0, h = y1 - y0;
    f.keypoints.left_eye = {x0 + 0.3 * w, y0 + 0.35 * h};
    f.keypoints.right_eye = {x0 + 0.7 * w, y0 + 0.35 * h};
    f.keypoints.nose = {x0 + 0.5 * w, y0 + 0.55 * h};
    f.keypoints.mouth = {x0 + 0.5 * w, y0 + 0.75 * h};
    f.attributes = attrs;
    f.identity_embedding.assign(kFaceEmbeddingDim, 0.0);
    f.identity_embedding[0] = 1.0;
    return f;
}

std::vector<double> one_hot(int j) {
    std::vector<double> attrs(kFaceAttributeCount, 0.0);
    attrs[j] = 1.0;
    return attrs;
}

// Brute-force construction: iterates cells, not faces; keypoints and
// attributes resolved independently of the implementation's loops.
Tensor oracle_map(const std::vector<FaceRecord>& faces, int H, int W, int h, int w) {
    Tensor map(kAttributeMapChannels, h, w, 0.0);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const double cy = (r + 0.5) * H / h;
            const double cx = (c + 0.5) * W / w;
            for (const FaceRecord& f : faces) {  // later face wins: keep overwriting
                if (cy >= f.y0 && cy < f.y1 && cx >= f.x0 && cx < f.x1) {
                    for (int j = 0; j < kFaceAttributeCount; ++j) map.at(j, r, c) = f.attributes[j];
                }
            }
        }
    }
    for (const FaceRecord& f : faces) {
        for (const PixelPoint& p : f.keypoints.as_array()) {
            const int c = std::clamp(static_cast<int>(p.x * w / W), 0, w - 1);
            const int r = std::clamp(static_cast<int>(p.y * h / H), 0, h - 1);
            map.at(kFaceAttributeCount, r, c) = 1.0;
        }
    }
    return map;
}

}  // namespace

TEST_CASE("encode_attribute_map: empty face list gives an all-zero map") {
    const AttributeMap m = encode_attribute_map({}, 64, 64, 8, 8);
    CHECK(m.data.channels() == 41);
    CHECK(m.data.height() == 8);
    CHECK(m.data.width() == 8);
    for (double v : m.data.data()) CHECK(v == 0.0);
}

TEST_CASE("encode_attribute_map: full-image face with one-hot attributes") {
    const FaceRecord face = make_face(0, 0, 64, 64, one_hot(5));
    const AttributeMap m = encode_attribute_map({face}, 64, 64, 8, 8);

    int keypoint_cells = 0;
    for (int j = 0; j < kFaceAttributeCount; ++j) {
        for (int r = 0; r < 8; ++r) {
            for (int c = 0; c < 8; ++c) {
                CHECK(m.data.at(j, r, c) == (j == 5 ? 1.0 : 0.0));
            }
        }
    }
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c)
            if (m.data.at(40, r, c) != 0.0) ++keypoint_cells;
    CHECK(keypoint_cells == 4);  // four named keypoints on distinct cells
}

TEST_CASE("encode_attribute_map: two disjoint faces match the brute-force oracle") {
    const FaceRecord a = make_face(0, 0, 24, 24, one_hot(3));
    const FaceRecord b = make_face(40, 40, 64, 64, one_hot(7));
    const AttributeMap m = encode_attribute_map({a, b}, 64, 64, 8, 8);
    const Tensor expect = oracle_map({a, b}, 64, 64, 8, 8);
    CHECK(m.data == expect);

    // no mixing between the two regions
    CHECK(m.data.at(3, 1, 1) == 1.0);
    CHECK(m.data.at(7, 1, 1) == 0.0);
    CHECK(m.data.at(7, 6, 6) == 1.0);
    CHECK(m.data.at(3, 6, 6) == 0.0);
}

TEST_CASE("encode_attribute_map: later face wins on overlap") {
    const FaceRecord a = make_face(0, 0, 40, 40, one_hot(1));
    const FaceRecord b = make_face(16, 16, 64, 64, one_hot(2));
    const AttributeMap ab = encode_attribute_map({a, b}, 64, 64, 8, 8);
    CHECK(ab.data == oracle_map({a, b}, 64, 64, 8, 8));
    // overlapping cell (3,3) carries b's attributes
    CHECK(ab.data.at(2, 3, 3) == 1.0);
    CHECK(ab.data.at(1, 3, 3) == 0.0);

    const AttributeMap ba = encode_attribute_map({b, a}, 64, 64, 8, 8);
    CHECK(ba.data.at(1, 3, 3) == 1.0);
    CHECK(ba.data.at(2, 3, 3) == 0.0);
}

TEST_CASE("encode_attribute_map: order-invariant for disjoint faces") {
    Rng rng(404);
    for (int trial = 0; trial < 30; ++trial) {
        // two faces in separate halves are always disjoint
        std::vector<FaceRecord> faces;
        const double ax0 = rng.uniform(0.0, 20.0), ay0 = rng.uniform(0.0, 40.0);
        faces.push_back(make_face(ax0, ay0, ax0 + rng.uniform(4.0, 10.0),
                                  ay0 + rng.uniform(4.0, 10.0), one_hot(1)));
        const double bx0 = rng.uniform(34.0, 54.0), by0 = rng.uniform(0.0, 40.0);
        faces.push_back(make_face(bx0, by0, bx0 + rng.uniform(4.0, 10.0),
                                  by0 + rng.uniform(4.0, 10.0), one_hot(2)));

        const AttributeMap fwd = encode_attribute_map(faces, 64, 64, 8, 8);
        std::reverse(faces.begin(), faces.end());
        const AttributeMap rev = encode_attribute_map(faces, 64, 64, 8, 8);
        CHECK(fwd.data == rev.data);
    }
}

TEST_CASE("encode_attribute_map: support property") {
    Rng rng(405);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<FaceRecord> faces;
        for (int i = 0; i < 3; ++i) {
            const double x0 = rng.uniform(0.0, 48.0), y0 = rng.uniform(0.0, 48.0);
            faces.push_back(make_face(x0, y0, x0 + rng.uniform(4.0, 15.0),
                                      y0 + rng.uniform(4.0, 15.0), one_hot(i)));
        }
        const AttributeMap m = encode_attribute_map(faces, 64, 64, 8, 8);
        for (int r = 0; r < 8; ++r) {
            for (int c = 0; c < 8; ++c) {
                bool nonzero = false;
                for (int j = 0; j < kFaceAttributeCount; ++j) {
                    if (m.data.at(j, r, c) != 0.0) nonzero = true;
                }
                if (!nonzero) continue;
                const double cy = (r + 0.5) * 8.0;
                const double cx = (c + 0.5) * 8.0;
                const bool inside_some = std::any_of(
                    faces.begin(), faces.end(), [cy, cx](const FaceRecord& f) {
                        return cy >= f.y0 && cy < f.y1 && cx >= f.x0 && cx < f.x1;
                    });
                CHECK(inside_some);
            }
        }
    }
}

TEST_CASE("encode_attribute_map: scaling consistency on aligned boxes") {
    // cell size at 8x8 over a 64x64 image is 8 px; box coordinates are
    // multiples of 8 so both resolutions rasterize the same region
    const FaceRecord face = make_face(8, 16, 40, 48, one_hot(9));
    const AttributeMap small = encode_attribute_map({face}, 64, 64, 8, 8);
    const AttributeMap big = encode_attribute_map({face}, 64, 64, 16, 16);
    for (int j = 0; j < kFaceAttributeCount; ++j) {
        for (int r = 0; r < 16; ++r) {
            for (int c = 0; c < 16; ++c) {
                CHECK(big.data.at(j, r, c) == small.data.at(j, r / 2, c / 2));
            }
        }
    }
}

TEST_CASE("face record validation") {
    FaceRecord bad = make_face(10, 10, 5, 20, one_hot(0));  // x1 < x0
    CHECK_THROWS_AS(bad.validate(64, 64), DomainError);

    FaceRecord outside = make_face(0, 0, 80, 20, one_hot(0));
    CHECK_THROWS_AS(outside.validate(64, 64), DomainError);
    CHECK_THROWS_AS(encode_attribute_map({outside}, 64, 64, 8, 8), DomainError);

    FaceRecord short_attrs = make_face(0, 0, 10, 10, {0.5});
    CHECK_THROWS_AS(short_attrs.validate(64, 64), DomainError);

    FaceRecord bad_attr = make_face(0, 0, 10, 10, one_hot(0));
    bad_attr.attributes[3] = 1.5;
    CHECK_THROWS_AS(bad_attr.validate(64, 64), DomainError);

    FaceRecord zero_embed = make_face(0, 0, 10, 10, one_hot(0));
    zero_embed.identity_embedding.assign(kFaceEmbeddingDim, 0.0);
    CHECK_THROWS_AS(zero_embed.validate(64, 64), DomainError);
}

TEST_CASE("toy detector: fixtures, ordering and determinism") {
    const auto detector = make_toy_face_detector();

    const Image two_faces = veil::test::face_image({{4, 4, 20, 20}, {28, 28, 60, 60}});
    const auto faces = detect_faces(two_faces, *detector);
    REQUIRE(faces.size() == 2);
    CHECK(faces[0].area() >= faces[1].area());
    CHECK(faces[0].x0 == 28.0);  // the larger rectangle
    for (const FaceRecord& f : faces) f.validate(64, 64);

    CHECK(detect_faces(veil::test::constant_image(90.0), *detector).empty());

    const auto again = detect_faces(two_faces, *detector);
    REQUIRE(again.size() == 2);
    CHECK(again[0].attributes == faces[0].attributes);
    CHECK(again[0].identity_embedding == faces[0].identity_embedding);

    // tiny specks below the component threshold are ignored
    const Image speck = veil::test::face_image({{10, 10, 12, 12}});
    CHECK(detect_faces(speck, *detector).empty());
}

namespace {

class ThrowingDetector final : public FaceDetectorAdapter {
public:
    std::vector<FaceRecord> detect(const Image&) const override {
        throw std::runtime_error("detector crashed");
    }
};

}  // namespace

TEST_CASE("detect_faces: detector failure yields empty list plus warning") {
    std::string warning;
    const auto faces = detect_faces(veil::test::gradient_image(), ThrowingDetector{}, &warning);
    CHECK(faces.empty());
    CHECK(warning.find("detector crashed") != std::string::npos);
}

TEST_CASE("face records: JSON-lines round trip") {
    TempDir dir("jsonl");
    const auto detector = make_toy_face_detector();
    const Image img = veil::test::face_image({{4, 4, 28, 28}, {36, 32, 60, 56}});
    std::vector<FaceLine> lines;
    for (const FaceRecord& f : detect_faces(img, *detector)) {
        lines.push_back(FaceLine{"fixture_01", f});
    }
    REQUIRE(lines.size() == 2);

    const auto path = dir / "faces.jsonl";
    write_face_lines(path, lines);
    const auto loaded = read_face_lines(path);
    REQUIRE(loaded.size() == 2);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        CHECK(loaded[i].image_id == lines[i].image_id);
        CHECK(loaded[i].face.x0 == lines[i].face.x0);
        CHECK(loaded[i].face.y1 == lines[i].face.y1);
        CHECK(loaded[i].face.attributes == lines[i].face.attributes);
        REQUIRE(loaded[i].face.identity_embedding.size() == kFaceEmbeddingDim);
        // embeddings cross the file as float32
        double max_diff = 0.0;
        for (int d = 0; d < kFaceEmbeddingDim; ++d) {
            max_diff = std::max(max_diff, std::fabs(loaded[i].face.identity_embedding[d] -
                                                    lines[i].face.identity_embedding[d]));
        }
        CHECK(max_diff < 1e-6);
    }

    CHECK_THROWS_AS(face_line_from_json("{not json"), IoError);
    CHECK_THROWS_AS(face_line_from_json("{\"image_id\": \"x\"}"), IoError);
}
