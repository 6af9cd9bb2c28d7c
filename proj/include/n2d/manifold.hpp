#ifndef N2D_MANIFOLD_HPP
#define N2D_MANIFOLD_HPP

#include "embedding.hpp"
#include "isomap.hpp"
#include "tsne.hpp"
#include "umap.hpp"

#include <string>
#include <string_view>

namespace n2d {

enum class ManifoldKind { umap, tsne, isomap, none };

inline std::string to_string(ManifoldKind kind) {
    switch (kind) {
    case ManifoldKind::umap:
        return "umap";
    case ManifoldKind::tsne:
        return "tsne";
    case ManifoldKind::isomap:
        return "isomap";
    case ManifoldKind::none:
        return "none";
    }
    return "none";
}

inline ManifoldKind parse_manifold_kind(std::string_view text) {
    if (text == "umap") {
        return ManifoldKind::umap;
    }
    if (text == "tsne") {
        return ManifoldKind::tsne;
    }
    if (text == "isomap") {
        return ManifoldKind::isomap;
    }
    if (text == "none") {
        return ManifoldKind::none;
    }
    throw ConfigError("unknown manifold learner '" + std::string(text) + "'");
}

struct ManifoldParams {
    UmapConfig umap;
    TsneConfig tsne;
    IsomapConfig isomap;

    /// Sets the target dimensionality of every learner.
    void set_components(std::size_t m) {
        umap.n_components = m;
        tsne.n_components = m;
        isomap.n_components = m;
    }

    void set_seed(std::uint64_t seed) {
        umap.seed = seed;
        tsne.seed = seed;
        isomap.seed = seed;
    }
};

/// Re-embed with the chosen learner; `none` returns the input unchanged.
inline Embedding manifold_fit(const Embedding& input, ManifoldKind kind, const ManifoldParams& params) {
    switch (kind) {
    case ManifoldKind::umap:
        return umap_fit(input, params.umap);
    case ManifoldKind::tsne:
        return tsne_fit(input, params.tsne);
    case ManifoldKind::isomap:
        return isomap_fit(input, params.isomap);
    case ManifoldKind::none:
        return input;
    }
    return input;
}

} // namespace n2d

#endif
