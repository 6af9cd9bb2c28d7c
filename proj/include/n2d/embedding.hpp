#ifndef N2D_EMBEDDING_HPP
#define N2D_EMBEDDING_HPP

#include "common.hpp"
#include "data_io.hpp"

#include <fstream>
#include <iomanip>
#include <optional>
#include <string>
#include <vector>

namespace n2d {

enum class Provenance { raw, autoencoded, manifold };

/**
 * Samples in a (usually reduced) coordinate space.
 *
 * `method` names the manifold learner when `provenance == manifold`.
 * `notes` carries learner diagnostics that a caller may want to surface,
 * e.g. zero-padded Isomap components or bridged graph components.
 */
struct Embedding {
    Matrix coords;
    Provenance provenance = Provenance::raw;
    std::string method;
    std::vector<std::string> notes;

    std::size_t n() const { return static_cast<std::size_t>(coords.rows()); }
    std::size_t m() const { return static_cast<std::size_t>(coords.cols()); }
};

inline std::string to_string(Provenance p) {
    switch (p) {
    case Provenance::raw:
        return "raw";
    case Provenance::autoencoded:
        return "autoencoded";
    case Provenance::manifold:
        return "manifold";
    }
    return "raw";
}

inline Embedding from_dataset(const Dataset& ds) {
    return Embedding{ds.features, Provenance::raw, "", {}};
}

/// Header `dim_0,...,dim_{m-1}[,label]`; values printed with round-trip precision.
inline void write_embedding_csv(const std::string& path, const Embedding& emb, const Labels* labels = nullptr) {
    if (labels != nullptr && labels->size() != emb.n()) {
        throw DimensionError("label count does not match embedding rows");
    }
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write '" + path + "'");
    }
    for (std::size_t j = 0; j < emb.m(); ++j) {
        out << (j ? "," : "") << "dim_" << j;
    }
    if (labels != nullptr) {
        out << ",label";
    }
    out << '\n' << std::setprecision(17);
    for (Eigen::Index i = 0; i < emb.coords.rows(); ++i) {
        for (Eigen::Index j = 0; j < emb.coords.cols(); ++j) {
            out << (j ? "," : "") << emb.coords(i, j);
        }
        if (labels != nullptr) {
            out << ',' << (*labels)[static_cast<std::size_t>(i)];
        }
        out << '\n';
    }
}

/// Reads what `write_embedding_csv` writes; a `label` column is returned separately.
inline Embedding read_embedding_csv(const std::string& path, std::optional<Labels>* labels = nullptr) {
    bool has_label = false;
    {
        std::ifstream in(path);
        std::string header;
        if (!in || !std::getline(in, header)) {
            throw IoError("cannot read '" + path + "'");
        }
        has_label = detail::trim(header).ends_with("label");
    }
    Dataset ds = load_csv(path, has_label ? std::optional<std::string>("label") : std::nullopt);
    if (labels != nullptr) {
        *labels = ds.labels;
    }
    return Embedding{std::move(ds.features), Provenance::manifold, "", {}};
}

} // namespace n2d

#endif
