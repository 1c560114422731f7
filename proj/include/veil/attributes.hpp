#ifndef VEIL_ATTRIBUTES_HPP
#define VEIL_ATTRIBUTES_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "veil/image.hpp"
#include "veil/tensor.hpp"

namespace veil {

inline constexpr int kFaceAttributeCount = 40;
inline constexpr int kAttributeMapChannels = kFaceAttributeCount + 1;  // + keypoint channel
inline constexpr int kFaceEmbeddingDim = 512;

struct PixelPoint {
    double x = 0.0;
    double y = 0.0;
};

struct FaceKeypoints {
    PixelPoint left_eye;
    PixelPoint right_eye;
    PixelPoint nose;
    PixelPoint mouth;

    std::array<PixelPoint, 4> as_array() const { return {left_eye, right_eye, nose, mouth}; }
};

// Per-person detection record: pixel bbox, four named keypoints, 40
// attribute scores in [0, 1] and a nonzero 512-dim identity embedding.
struct FaceRecord {
    double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
    FaceKeypoints keypoints;
    std::vector<double> attributes;           // exactly 40 entries
    std::vector<double> identity_embedding;   // exactly 512 entries, nonzero

    double area() const { return (x1 - x0) * (y1 - y0); }

    // Throws DomainError if any invariant fails for an image of the given size.
    void validate(int image_height, int image_width) const;
};

// 41 x h x w conditioning map: channels 0..39 carry per-face attribute
// values over the face's bbox footprint, channel 40 marks keypoint cells
// with 1.0. Zero outside face regions.
struct AttributeMap {
    Tensor data;
};

// Rasterizes faces into the map. A cell belongs to a bbox when its center
// (in source pixel coordinates) falls inside; keypoints set the single cell
// containing the scaled location. Overlapping faces resolve by list order,
// later face wins per cell.
AttributeMap encode_attribute_map(const std::vector<FaceRecord>& faces, int image_height,
                                  int image_width, int map_height, int map_width);

class FaceDetectorAdapter {
public:
    virtual ~FaceDetectorAdapter() = default;
    virtual std::vector<FaceRecord> detect(const Image& image) const = 0;
    virtual bool shareable() const { return true; }
};

// Runs the detector, validates every record and sorts by bbox area
// descending. Detector failure yields an empty list plus a warning.
std::vector<FaceRecord> detect_faces(const Image& image, const FaceDetectorAdapter& detector,
                                     std::string* warning = nullptr);

// Deterministic fixture detector: finds connected bright regions
// (grayscale > 200) of at least 16 pixels, derives keypoints at fixed
// fractions of each bbox and fills attributes/embedding from a content
// hash of the bbox geometry.
std::shared_ptr<FaceDetectorAdapter> make_toy_face_detector();

// JSON-lines serialization: one face per line with the image id, bbox,
// keypoints, attribute floats and the identity embedding as base64-encoded
// little-endian float32.
struct FaceLine {
    std::string image_id;
    FaceRecord face;
};
std::string face_line_to_json(const FaceLine& line);
FaceLine face_line_from_json(const std::string& json_text);
void write_face_lines(const std::filesystem::path& path, const std::vector<FaceLine>& lines);
std::vector<FaceLine> read_face_lines(const std::filesystem::path& path);

}  // namespace veil

#endif  // VEIL_ATTRIBUTES_HPP
