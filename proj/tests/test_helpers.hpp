#ifndef N2D_TEST_HELPERS_HPP
#define N2D_TEST_HELPERS_HPP

#include "n2d/n2d.hpp"

#include <filesystem>
#include <fstream>
#include <string>

namespace n2d::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
  public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() / ("n2d_" + tag + "_" + std::to_string(counter()++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string file(const std::string& name) const { return (path_ / name).string(); }
    const std::filesystem::path& path() const { return path_; }

  private:
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::filesystem::path path_;
};

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

/// Isotropic Gaussian blobs with centers spaced `separation` apart along the axes.
inline Dataset gaussian_blobs(int per_blob, int blobs, int dims, double separation, double sd, std::uint64_t seed) {
    Rng rng(seed);
    Dataset ds;
    ds.name = "blobs";
    ds.features.resize(per_blob * blobs, dims);
    Labels labels;
    for (int b = 0; b < blobs; ++b) {
        for (int i = 0; i < per_blob; ++i) {
            const int row = b * per_blob + i;
            for (int j = 0; j < dims; ++j) {
                const double center = (j == b % dims) ? separation * (1 + b / dims) : 0.0;
                ds.features(row, j) = center + rng.normal(0.0, sd);
            }
            labels.push_back(b);
        }
    }
    ds.labels = labels;
    ds.c_hint = blobs;
    return ds;
}

} // namespace n2d::testing

#endif
