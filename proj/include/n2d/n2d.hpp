#ifndef N2D_N2D_HPP
#define N2D_N2D_HPP

#include "autoencoder.hpp"
#include "clustering.hpp"
#include "common.hpp"
#include "container.hpp"
#include "data_io.hpp"
#include "embedding.hpp"
#include "isomap.hpp"
#include "knn.hpp"
#include "linalg.hpp"
#include "manifold.hpp"
#include "metrics.hpp"
#include "pipeline.hpp"
#include "tsne.hpp"
#include "umap.hpp"

#endif
