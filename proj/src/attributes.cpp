#include "veil/attributes.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>

#include <json.hpp>

#include "veil/errors.hpp"
#include "veil/hashing.hpp"
#include "veil/rng.hpp"

namespace veil {

void FaceRecord::validate(int image_height, int image_width) const {
    if (!(x0 < x1) || !(y0 < y1)) {
        throw DomainError("FaceRecord: degenerate bbox");
    }
    if (x0 < 0.0 || y0 < 0.0 || x1 > image_width || y1 > image_height) {
        throw DomainError("FaceRecord: bbox outside image bounds");
    }
    if (attributes.size() != kFaceAttributeCount) {
        throw DomainError("FaceRecord: expected " + std::to_string(kFaceAttributeCount) +
                          " attributes, got " + std::to_string(attributes.size()));
    }
    for (double a : attributes) {
        if (!(a >= 0.0 && a <= 1.0)) throw DomainError("FaceRecord: attribute outside [0, 1]");
    }
    if (identity_embedding.size() != kFaceEmbeddingDim) {
        throw DomainError("FaceRecord: identity embedding must have " +
                          std::to_string(kFaceEmbeddingDim) + " entries");
    }
    double norm2 = 0.0;
    for (double v : identity_embedding) norm2 += v * v;
    if (!(norm2 > 0.0) || !std::isfinite(norm2)) {
        throw DomainError("FaceRecord: identity embedding must have positive finite norm");
    }
}

AttributeMap encode_attribute_map(const std::vector<FaceRecord>& faces, int image_height,
                                  int image_width, int map_height, int map_width) {
    if (image_height <= 0 || image_width <= 0 || map_height <= 0 || map_width <= 0) {
        throw DomainError("encode_attribute_map: dimensions must be positive");
    }
    Tensor map(kAttributeMapChannels, map_height, map_width, 0.0);
    const double cell_h = static_cast<double>(image_height) / map_height;
    const double cell_w = static_cast<double>(image_width) / map_width;

    for (const FaceRecord& face : faces) {
        face.validate(image_height, image_width);
        for (int r = 0; r < map_height; ++r) {
            const double cy = (r + 0.5) * cell_h;
            if (cy < face.y0 || cy >= face.y1) continue;
            for (int c = 0; c < map_width; ++c) {
                const double cx = (c + 0.5) * cell_w;
                if (cx < face.x0 || cx >= face.x1) continue;
                for (int j = 0; j < kFaceAttributeCount; ++j) {
                    map.at(j, r, c) = face.attributes[j];
                }
            }
        }
        for (const PixelPoint& p : face.keypoints.as_array()) {
            int c = static_cast<int>(std::floor(p.x / cell_w));
            int r = static_cast<int>(std::floor(p.y / cell_h));
            c = std::clamp(c, 0, map_width - 1);
            r = std::clamp(r, 0, map_height - 1);
            map.at(kFaceAttributeCount, r, c) = 1.0;
        }
    }
    return AttributeMap{std::move(map)};
}

std::vector<FaceRecord> detect_faces(const Image& image, const FaceDetectorAdapter& detector,
                                     std::string* warning) {
    std::vector<FaceRecord> faces;
    try {
        faces = detector.detect(image);
    } catch (const std::exception& e) {
        if (warning != nullptr) *warning = std::string("face detector failed: ") + e.what();
        return {};
    }
    for (const FaceRecord& f : faces) f.validate(image.height(), image.width());
    std::stable_sort(faces.begin(), faces.end(), [](const FaceRecord& a, const FaceRecord& b) {
        if (a.area() != b.area()) return a.area() > b.area();
        if (a.x0 != b.x0) return a.x0 < b.x0;
        return a.y0 < b.y0;
    });
    return faces;
}

// --- toy detector ------------------------------------------------------------

namespace {

class ToyFaceDetector final : public FaceDetectorAdapter {
public:
    std::vector<FaceRecord> detect(const Image& image) const override {
        const Image gray = image.grayscale();
        const int h = gray.height();
        const int w = gray.width();
        std::vector<char> mask(static_cast<std::size_t>(h) * w, 0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) mask[static_cast<std::size_t>(y) * w + x] = gray.at(0, y, x) > 200.0;

        std::vector<char> seen(mask.size(), 0);
        std::vector<FaceRecord> faces;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::size_t idx = static_cast<std::size_t>(y) * w + x;
                if (!mask[idx] || seen[idx]) continue;
                // flood fill one component
                int min_x = x, max_x = x, min_y = y, max_y = y;
                int count = 0;
                std::deque<std::pair<int, int>> queue{{y, x}};
                seen[idx] = 1;
                while (!queue.empty()) {
                    auto [cy, cx] = queue.front();
                    queue.pop_front();
                    ++count;
                    min_x = std::min(min_x, cx);
                    max_x = std::max(max_x, cx);
                    min_y = std::min(min_y, cy);
                    max_y = std::max(max_y, cy);
                    constexpr int dy[4] = {-1, 1, 0, 0};
                    constexpr int dx[4] = {0, 0, -1, 1};
                    for (int k = 0; k < 4; ++k) {
                        const int ny = cy + dy[k];
                        const int nx = cx + dx[k];
                        if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                        const std::size_t nidx = static_cast<std::size_t>(ny) * w + nx;
                        if (mask[nidx] && !seen[nidx]) {
                            seen[nidx] = 1;
                            queue.emplace_back(ny, nx);
                        }
                    }
                }
                if (count < 16) continue;
                faces.push_back(make_record(min_x, min_y, max_x + 1, max_y + 1, count));
            }
        }
        return faces;
    }

private:
    static FaceRecord make_record(int x0, int y0, int x1, int y1, int pixel_count) {
        FaceRecord f;
        f.x0 = x0;
        f.y0 = y0;
        f.x1 = x1;
        f.y1 = y1;
        const double bw = f.x1 - f.x0;
        const double bh = f.y1 - f.y0;
        f.keypoints.left_eye = {f.x0 + 0.30 * bw, f.y0 + 0.35 * bh};
        f.keypoints.right_eye = {f.x0 + 0.70 * bw, f.y0 + 0.35 * bh};
        f.keypoints.nose = {f.x0 + 0.50 * bw, f.y0 + 0.55 * bh};
        f.keypoints.mouth = {f.x0 + 0.50 * bw, f.y0 + 0.75 * bh};

        const int geom[5] = {x0, y0, x1, y1, pixel_count};
        Rng rng(splitmix64(fnv1a64(geom, sizeof(geom))));
        f.attributes.resize(kFaceAttributeCount);
        for (double& a : f.attributes) a = rng.uniform();
        f.identity_embedding.resize(kFaceEmbeddingDim);
        double norm2 = 0.0;
        for (double& v : f.identity_embedding) {
            v = rng.normal();
            norm2 += v * v;
        }
        const double inv = 1.0 / std::sqrt(norm2);
        for (double& v : f.identity_embedding) v *= inv;
        return f;
    }
};

}  // namespace

std::shared_ptr<FaceDetectorAdapter> make_toy_face_detector() {
    return std::make_shared<ToyFaceDetector>();
}

// --- serialization ------------------------------------------------------------

namespace {

const char* kBase64Chars = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    while (i + 2 < bytes.size()) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
        out.push_back(kBase64Chars[(v >> 18) & 63]);
        out.push_back(kBase64Chars[(v >> 12) & 63]);
        out.push_back(kBase64Chars[(v >> 6) & 63]);
        out.push_back(kBase64Chars[v & 63]);
        i += 3;
    }
    const std::size_t rem = bytes.size() - i;
    if (rem == 1) {
        const std::uint32_t v = bytes[i] << 16;
        out.push_back(kBase64Chars[(v >> 18) & 63]);
        out.push_back(kBase64Chars[(v >> 12) & 63]);
        out.append("==");
    } else if (rem == 2) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
        out.push_back(kBase64Chars[(v >> 18) & 63]);
        out.push_back(kBase64Chars[(v >> 12) & 63]);
        out.push_back(kBase64Chars[(v >> 6) & 63]);
        out.push_back('=');
    }
    return out;
}

int base64_value(char c) {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    throw IoError("invalid base64 character");
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
    if (text.size() % 4 != 0) throw IoError("base64 length must be a multiple of 4");
    std::vector<std::uint8_t> out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        const int pad = (text[i + 3] == '=') + (text[i + 2] == '=');
        std::uint32_t v = 0;
        for (int k = 0; k < 4; ++k) {
            v <<= 6;
            if (text[i + k] != '=') v |= static_cast<std::uint32_t>(base64_value(text[i + k]));
        }
        out.push_back((v >> 16) & 0xff);
        if (pad < 2) out.push_back((v >> 8) & 0xff);
        if (pad < 1) out.push_back(v & 0xff);
    }
    return out;
}

std::string embedding_to_b64(const std::vector<double>& embedding) {
    std::vector<std::uint8_t> bytes(embedding.size() * sizeof(float));
    for (std::size_t i = 0; i < embedding.size(); ++i) {
        const float f = static_cast<float>(embedding[i]);
        std::memcpy(bytes.data() + i * sizeof(float), &f, sizeof(float));
    }
    return base64_encode(bytes);
}

std::vector<double> embedding_from_b64(const std::string& text) {
    const auto bytes = base64_decode(text);
    if (bytes.size() % sizeof(float) != 0) throw IoError("embedding blob not float32-aligned");
    std::vector<double> out(bytes.size() / sizeof(float));
    for (std::size_t i = 0; i < out.size(); ++i) {
        float f;
        std::memcpy(&f, bytes.data() + i * sizeof(float), sizeof(float));
        out[i] = f;
    }
    return out;
}

nlohmann::json point_to_json(const PixelPoint& p) { return nlohmann::json{p.x, p.y}; }

PixelPoint point_from_json(const nlohmann::json& j) {
    return PixelPoint{j.at(0).get<double>(), j.at(1).get<double>()};
}

}  // namespace

std::string face_line_to_json(const FaceLine& line) {
    nlohmann::json j{
        {"image_id", line.image_id},
        {"bbox", {line.face.x0, line.face.y0, line.face.x1, line.face.y1}},
        {"keypoints",
         {{"left_eye", point_to_json(line.face.keypoints.left_eye)},
          {"right_eye", point_to_json(line.face.keypoints.right_eye)},
          {"nose", point_to_json(line.face.keypoints.nose)},
          {"mouth", point_to_json(line.face.keypoints.mouth)}}},
        {"attributes", line.face.attributes},
        {"embedding_b64", embedding_to_b64(line.face.identity_embedding)},
    };
    return j.dump();
}

FaceLine face_line_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("face line: invalid JSON: ") + e.what());
    }
    FaceLine line;
    try {
        line.image_id = j.at("image_id").get<std::string>();
        const auto& b = j.at("bbox");
        line.face.x0 = b.at(0).get<double>();
        line.face.y0 = b.at(1).get<double>();
        line.face.x1 = b.at(2).get<double>();
        line.face.y1 = b.at(3).get<double>();
        const auto& k = j.at("keypoints");
        line.face.keypoints.left_eye = point_from_json(k.at("left_eye"));
        line.face.keypoints.right_eye = point_from_json(k.at("right_eye"));
        line.face.keypoints.nose = point_from_json(k.at("nose"));
        line.face.keypoints.mouth = point_from_json(k.at("mouth"));
        line.face.attributes = j.at("attributes").get<std::vector<double>>();
        line.face.identity_embedding = embedding_from_b64(j.at("embedding_b64").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("face line: missing or malformed field: ") + e.what());
    }
    return line;
}

void write_face_lines(const std::filesystem::path& path, const std::vector<FaceLine>& lines) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    for (const FaceLine& line : lines) out << face_line_to_json(line) << "\n";
}

std::vector<FaceLine> read_face_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    std::vector<FaceLine> lines;
    std::string text;
    while (std::getline(in, text)) {
        if (text.empty()) continue;
        lines.push_back(face_line_from_json(text));
    }
    return lines;
}

}  // namespace veil
