#pragma once

#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dmavae/scm.hpp"

namespace dmavae::scm {

using NodeSet = std::set<std::string>;

class CausalGraph {
 public:
  CausalGraph() = default;
  CausalGraph(std::vector<std::string> nodes, std::vector<std::pair<std::string, std::string>> edges,
              NodeSet latent = {});

  const std::vector<std::string>& nodes() const { return nodes_; }
  const std::vector<std::pair<std::string, std::string>>& edges() const { return edges_; }
  const NodeSet& latent() const { return latent_; }

  bool has_node(const std::string& name) const;
  bool has_edge(const std::string& from, const std::string& to) const;
  std::vector<std::string> parents(const std::string& node) const;
  std::vector<std::string> children(const std::string& node) const;
  NodeSet descendants(const std::string& node) const;  // excludes the node itself
  bool is_acyclic() const;

  // Removes every edge pointing into the given nodes.
  CausalGraph intervened(const NodeSet& nodes) const;

 private:
  int index_of(const std::string& name) const;

  std::vector<std::string> nodes_;
  std::vector<std::pair<std::string, std::string>> edges_;
  NodeSet latent_;
  std::vector<std::vector<int>> out_;
  std::vector<std::vector<int>> in_;
};

// A path written as its node sequence; the edge orientation between
// neighbours is looked up in the graph.
using Path = std::vector<std::string>;

// Every node-simple path from some exposure to the outcome that starts with
// an edge into that exposure and does not pass through another exposure.
std::vector<Path> backdoor_paths(const CausalGraph& g, const NodeSet& exposures, const std::string& outcome);

// d-separation blocking of a single path by a conditioning set.
bool path_blocked(const CausalGraph& g, const Path& path, const NodeSet& given);

// True iff every back-door path from `exposures` to `outcome` is blocked by
// conditioned U adjusted. Nodes in `held` are fixed by intervention: their
// incoming edges are removed and they are treated as conditioned.
bool verify_adjustment(const CausalGraph& g, const NodeSet& exposures, const std::string& outcome,
                       const NodeSet& conditioned, const NodeSet& adjusted, const NodeSet& held = {});

// Templates. Node names: T, M, Y, X, Z_TM, Z_TY, Z_MY, Z.
CausalGraph three_block_graph();
CausalGraph template_graph(CaseId id);
CausalGraph graph_for(const ScmSpec& spec);

}  // namespace dmavae::scm
