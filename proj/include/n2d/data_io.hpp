#ifndef N2D_DATA_IO_HPP
#define N2D_DATA_IO_HPP

#include "common.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

/**
 * @file data_io.hpp
 *
 * @brief Loading IDX / CSV datasets and scaling them into the unit range.
 */

namespace n2d {

/**
 * Samples (one per row) with optional ground truth.
 *
 * When `labels` is present it holds values in `[0, c)` with every value in
 * that range used at least once.
 */
struct Dataset {
    Matrix features;
    std::optional<Labels> labels;
    std::string name;
    std::optional<int> c_hint;

    std::size_t n() const { return static_cast<std::size_t>(features.rows()); }
    std::size_t d() const { return static_cast<std::size_t>(features.cols()); }

    /// Number of clusters from the labels, or the declared hint; never inferred.
    std::optional<int> cluster_count() const {
        if (labels) {
            return count_distinct(*labels);
        }
        return c_hint;
    }
};

enum class PreprocessMode { image_unit_scale, per_feature_minmax, none };

struct PreprocessSpec {
    PreprocessMode mode = PreprocessMode::per_feature_minmax;
};

inline std::string to_string(PreprocessMode mode) {
    switch (mode) {
    case PreprocessMode::image_unit_scale:
        return "image_unit_scale";
    case PreprocessMode::per_feature_minmax:
        return "per_feature_minmax";
    case PreprocessMode::none:
        return "none";
    }
    return "none";
}

inline PreprocessMode parse_preprocess_mode(std::string_view text) {
    if (text == "image_unit_scale") {
        return PreprocessMode::image_unit_scale;
    }
    if (text == "per_feature_minmax") {
        return PreprocessMode::per_feature_minmax;
    }
    if (text == "none") {
        return PreprocessMode::none;
    }
    throw ConfigError("unknown preprocess mode '" + std::string(text) + "'");
}

/**
 * Map arbitrary integer labels onto `[0, c)` by ascending value, so the
 * partition is unchanged and the smallest original id becomes 0.
 */
inline Labels remap_labels(const Labels& raw) {
    std::vector<int> unique(raw.begin(), raw.end());
    std::sort(unique.begin(), unique.end());
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
    Labels out(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        out[i] = static_cast<int>(std::lower_bound(unique.begin(), unique.end(), raw[i]) - unique.begin());
    }
    return out;
}

/// Checks the Dataset invariants, throwing on the first violation.
inline void validate(const Dataset& ds) {
    if (ds.features.rows() < 1 || ds.features.cols() < 1) {
        throw PreconditionError("dataset '" + ds.name + "' must have n >= 1 and d >= 1");
    }
    if (!ds.features.allFinite()) {
        throw PreconditionError("dataset '" + ds.name + "' contains non-finite feature values");
    }
    if (ds.labels) {
        if (ds.labels->size() != ds.n()) {
            throw ConsistencyError("dataset '" + ds.name + "' has " + std::to_string(ds.labels->size()) +
                                   " labels for " + std::to_string(ds.n()) + " samples");
        }
        const int c = count_distinct(*ds.labels);
        for (int l : *ds.labels) {
            if (l < 0 || l >= c) {
                throw ConsistencyError("dataset '" + ds.name + "' labels are not a contiguous range from 0");
            }
        }
        if (ds.c_hint && *ds.c_hint != c) {
            throw ConsistencyError("dataset '" + ds.name + "' declares " + std::to_string(*ds.c_hint) +
                                   " clusters but labels have " + std::to_string(c));
        }
    }
}

namespace detail {

inline bool ends_with(std::string_view s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

/// Whole file as bytes; `.gz` files are inflated.
inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::vector<unsigned char> out;
    if (ends_with(path, ".gz")) {
        gzFile handle = gzopen(path.c_str(), "rb");
        if (handle == nullptr) {
            throw IoError("cannot open '" + path + "'");
        }
        std::array<unsigned char, 1 << 16> buffer{};
        int got = 0;
        while ((got = gzread(handle, buffer.data(), static_cast<unsigned>(buffer.size()))) > 0) {
            out.insert(out.end(), buffer.begin(), buffer.begin() + got);
        }
        const bool failed = got < 0;
        gzclose(handle);
        if (failed) {
            throw FormatError("corrupt gzip stream in '" + path + "'");
        }
        return out;
    }

    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path + "'");
    }
    out.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    return out;
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset) {
    return (static_cast<std::uint32_t>(bytes[offset]) << 24) | (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
           (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) | static_cast<std::uint32_t>(bytes[offset + 3]);
}

inline void write_be32(std::ostream& out, std::uint32_t v) {
    const char b[4] = {static_cast<char>((v >> 24) & 0xff), static_cast<char>((v >> 16) & 0xff),
                       static_cast<char>((v >> 8) & 0xff), static_cast<char>(v & 0xff)};
    out.write(b, 4);
}

/// Parse an IDX header of unsigned-byte data with the expected rank.
inline std::vector<std::uint32_t> idx_header(const std::vector<unsigned char>& bytes, unsigned char rank,
                                             const std::string& path) {
    if (bytes.size() < 4 || bytes[0] != 0 || bytes[1] != 0 || bytes[2] != 0x08 || bytes[3] != rank) {
        throw FormatError("'" + path + "' does not start with IDX magic 00 00 08 0" + std::to_string(rank));
    }
    if (bytes.size() < 4 + 4 * static_cast<std::size_t>(rank)) {
        throw FormatError("'" + path + "' is truncated inside the IDX header");
    }
    std::vector<std::uint32_t> dims(rank);
    std::size_t expected = 1;
    for (unsigned char r = 0; r < rank; ++r) {
        dims[r] = read_be32(bytes, 4 + 4 * r);
        expected *= dims[r];
    }
    if (bytes.size() != 4 + 4 * static_cast<std::size_t>(rank) + expected) {
        throw FormatError("'" + path + "' payload size does not match its IDX dimensions");
    }
    return dims;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream stream(line);
    while (std::getline(stream, cell, ',')) {
        cells.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') {
        cells.emplace_back();
    }
    return cells;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"')) {
        s.remove_suffix(1);
    }
    return s;
}

inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (s.empty()) {
        return std::nullopt;
    }
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        return std::nullopt;
    }
    return v;
}

} // namespace detail

/**
 * Load an IDX image tensor (`00 00 08 03`, dims n x rows x cols) and an
 * optional IDX label vector (`00 00 08 01`). Images are flattened row-major
 * into `rows * cols` features holding the raw byte values.
 */
inline Dataset load_idx(const std::string& images_path, const std::optional<std::string>& labels_path = std::nullopt) {
    const auto bytes = detail::read_file_bytes(images_path);
    const auto dims = detail::idx_header(bytes, 3, images_path);
    const std::size_t n = dims[0];
    const std::size_t d = static_cast<std::size_t>(dims[1]) * dims[2];
    if (n == 0 || d == 0) {
        throw FormatError("'" + images_path + "' holds no images");
    }

    Dataset ds;
    ds.name = images_path;
    ds.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    const unsigned char* payload = bytes.data() + 16;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = payload[i * d + j];
        }
    }

    if (labels_path) {
        const auto lbytes = detail::read_file_bytes(*labels_path);
        const auto ldims = detail::idx_header(lbytes, 1, *labels_path);
        if (ldims[0] != n) {
            throw ConsistencyError("'" + images_path + "' has " + std::to_string(n) + " images but '" + *labels_path +
                                   "' has " + std::to_string(ldims[0]) + " labels");
        }
        Labels raw(n);
        for (std::size_t i = 0; i < n; ++i) {
            raw[i] = lbytes[8 + i];
        }
        ds.labels = remap_labels(raw);
        ds.c_hint = count_distinct(*ds.labels);
    }
    return ds;
}

/**
 * Write an IDX image/label pair. `features` must hold integers in [0, 255];
 * each row is written as a `rows x cols` image.
 */
inline void write_idx(const std::string& images_path, const Matrix& features, std::size_t rows, std::size_t cols,
                      const std::optional<std::string>& labels_path = std::nullopt, const Labels* labels = nullptr) {
    if (rows * cols != static_cast<std::size_t>(features.cols())) {
        throw DimensionError("image shape does not match feature count");
    }
    std::ofstream out(images_path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write '" + images_path + "'");
    }
    const char magic[4] = {0, 0, 8, 3};
    out.write(magic, 4);
    detail::write_be32(out, static_cast<std::uint32_t>(features.rows()));
    detail::write_be32(out, static_cast<std::uint32_t>(rows));
    detail::write_be32(out, static_cast<std::uint32_t>(cols));
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
        for (Eigen::Index j = 0; j < features.cols(); ++j) {
            const double v = features(i, j);
            if (!(v >= 0 && v <= 255) || v != std::floor(v)) {
                throw PreconditionError("IDX values must be integers in [0, 255]");
            }
            out.put(static_cast<char>(static_cast<unsigned char>(v)));
        }
    }
    if (labels_path && labels != nullptr) {
        std::ofstream lout(*labels_path, std::ios::binary);
        if (!lout) {
            throw IoError("cannot write '" + *labels_path + "'");
        }
        const char lmagic[4] = {0, 0, 8, 1};
        lout.write(lmagic, 4);
        detail::write_be32(lout, static_cast<std::uint32_t>(labels->size()));
        for (int l : *labels) {
            lout.put(static_cast<char>(static_cast<unsigned char>(l)));
        }
    }
}

/// Stack two datasets with the same feature count (e.g. a train and a test split).
inline Dataset concatenate(const Dataset& a, const Dataset& b, std::string name) {
    if (a.d() != b.d()) {
        throw DimensionError("cannot concatenate datasets with different feature counts");
    }
    if (a.labels.has_value() != b.labels.has_value()) {
        throw ConsistencyError("cannot concatenate a labelled and an unlabelled dataset");
    }
    Dataset out;
    out.name = std::move(name);
    out.features.resize(a.features.rows() + b.features.rows(), a.features.cols());
    out.features.topRows(a.features.rows()) = a.features;
    out.features.bottomRows(b.features.rows()) = b.features;
    if (a.labels) {
        Labels raw = *a.labels;
        raw.insert(raw.end(), b.labels->begin(), b.labels->end());
        out.labels = remap_labels(raw);
        out.c_hint = count_distinct(*out.labels);
    }
    return out;
}

/**
 * Load a numeric CSV. A first row containing any non-numeric cell is taken
 * as the header. Without a header, columns are named by their 0-based index.
 * Rows that are empty are skipped.
 */
inline Dataset load_csv(const std::string& path, const std::optional<std::string>& label_column = std::nullopt) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open '" + path + "'");
    }

    std::vector<std::string> names;
    std::vector<std::vector<double>> rows;
    std::vector<std::vector<std::string>> pending_cells;
    std::string line;
    std::size_t line_no = 0;
    std::size_t width = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) {
            continue;
        }
        auto cells = detail::split_csv_line(line);
        if (first) {
            first = false;
            width = cells.size();
            const bool header = std::any_of(cells.begin(), cells.end(), [](const std::string& c) {
                return !detail::parse_double(c).has_value();
            });
            if (header) {
                for (const auto& c : cells) {
                    names.emplace_back(detail::trim(c));
                }
                continue;
            }
            for (std::size_t j = 0; j < cells.size(); ++j) {
                names.push_back(std::to_string(j));
            }
        }
        if (cells.size() != width) {
            throw ParseError("'" + path + "' row " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                             " cells, expected " + std::to_string(width));
        }
        std::vector<double> values(width);
        for (std::size_t j = 0; j < width; ++j) {
            auto v = detail::parse_double(cells[j]);
            if (!v) {
                throw ParseError("'" + path + "' row " + std::to_string(line_no) + " column " + std::to_string(j + 1) +
                                 " is not numeric: '" + cells[j] + "'");
            }
            values[j] = *v;
        }
        rows.push_back(std::move(values));
    }
    if (rows.empty()) {
        throw ParseError("'" + path + "' contains no data rows");
    }

    std::optional<std::size_t> label_index;
    if (label_column) {
        auto it = std::find(names.begin(), names.end(), *label_column);
        if (it == names.end()) {
            throw ConfigError("'" + path + "' has no column named '" + *label_column + "'");
        }
        label_index = static_cast<std::size_t>(it - names.begin());
    }

    const std::size_t d = width - (label_index ? 1 : 0);
    if (d == 0) {
        throw ParseError("'" + path + "' has no feature columns");
    }
    Dataset ds;
    ds.name = path;
    ds.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
    Labels raw;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        Eigen::Index col = 0;
        for (std::size_t j = 0; j < width; ++j) {
            if (label_index && j == *label_index) {
                const double v = rows[i][j];
                if (v != std::floor(v)) {
                    throw ParseError("'" + path + "' row " + std::to_string(i + 1) + " has a non-integer label");
                }
                raw.push_back(static_cast<int>(v));
            } else {
                ds.features(static_cast<Eigen::Index>(i), col++) = rows[i][j];
            }
        }
    }
    if (!ds.features.allFinite()) {
        throw ParseError("'" + path + "' contains non-finite values");
    }
    if (label_index) {
        ds.labels = remap_labels(raw);
        ds.c_hint = count_distinct(*ds.labels);
    }
    return ds;
}

/**
 * Scale features into the unit range. `image_unit_scale` divides by 255 and
 * requires raw values in [0, 255]; `per_feature_minmax` maps each column onto
 * [0, 1] with constant columns sent to 0.
 */
inline Dataset preprocess(const Dataset& ds, const PreprocessSpec& spec) {
    Dataset out = ds;
    switch (spec.mode) {
    case PreprocessMode::none:
        break;
    case PreprocessMode::image_unit_scale:
        if (ds.features.size() > 0 && (ds.features.minCoeff() < 0.0 || ds.features.maxCoeff() > 255.0)) {
            throw PreconditionError("image_unit_scale requires all values in [0, 255]");
        }
        out.features /= 255.0;
        break;
    case PreprocessMode::per_feature_minmax:
        for (Eigen::Index j = 0; j < out.features.cols(); ++j) {
            auto col = out.features.col(j);
            const double lo = col.minCoeff();
            const double range = col.maxCoeff() - lo;
            if (range > 0.0) {
                col = (col.array() - lo) / range;
            } else {
                col.setZero();
            }
        }
        break;
    }
    return out;
}

} // namespace n2d

#endif
