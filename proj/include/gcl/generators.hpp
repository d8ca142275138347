#pragma once

#include <string>
#include <vector>

#include "gcl/graph.hpp"
#include "gcl/rng.hpp"

namespace gcl {

// One train/valid/test partition of the labeled items.
struct Split {
  std::vector<int> train_idx;
  std::vector<int> valid_idx;
  std::vector<int> test_idx;
  uint64_t seed = 0;
};

// Fresh 10/10/80 shuffles, one per split, derived from seed+i.
// Items with a negative label are treated as unlabeled and excluded.
std::vector<Split> make_splits(const std::vector<int>& labels, int n_splits,
                               uint64_t seed);

// Stochastic block model. Features are a one-hot block indicator in the
// first columns plus N(0, noise_sigma^2) noise over all feature_dim columns;
// labels are block ids. Topology depends only on the block/probability
// arguments and the seed, not on feature_dim or noise_sigma.
Graph gen_sbm(int n_per_block, int n_blocks, double p_in, double p_out,
              int feature_dim, double noise_sigma, uint64_t seed);

enum class GraphFamily { cycle, tree, clique };

GraphFamily parse_family(const std::string& name);
std::string family_name(GraphFamily f);

// Labeled graph-classification dataset. Graph i belongs to
// classes[i % classes.size()]; sizes are uniform over [size_min, size_max].
// Features are a single column: degree / (max degree over the dataset).
// Every node of a member graph carries that graph's class label.
std::vector<Graph> gen_graph_dataset(int n_graphs,
                                     const std::vector<GraphFamily>& classes,
                                     int size_min, int size_max, uint64_t seed);

}  // namespace gcl
