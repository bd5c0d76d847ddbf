#include "dmavae/graph.hpp"

#include <algorithm>
#include <functional>

#include "dmavae/error.hpp"

namespace dmavae::scm {

CausalGraph::CausalGraph(std::vector<std::string> nodes, std::vector<std::pair<std::string, std::string>> edges,
                         NodeSet latent)
    : nodes_(std::move(nodes)), edges_(std::move(edges)), latent_(std::move(latent)) {
  out_.assign(nodes_.size(), {});
  in_.assign(nodes_.size(), {});
  for (const auto& [from, to] : edges_) {
    const int f = index_of(from);
    const int t = index_of(to);
    out_[f].push_back(t);
    in_[t].push_back(f);
  }
  for (const auto& l : latent_) index_of(l);
  require(is_acyclic(), ErrorKind::Argument, "causal graph must be acyclic");
}

int CausalGraph::index_of(const std::string& name) const {
  const auto it = std::find(nodes_.begin(), nodes_.end(), name);
  if (it == nodes_.end()) fail(ErrorKind::Argument, "unknown node '" + name + "'");
  return static_cast<int>(it - nodes_.begin());
}

bool CausalGraph::has_node(const std::string& name) const {
  return std::find(nodes_.begin(), nodes_.end(), name) != nodes_.end();
}

bool CausalGraph::has_edge(const std::string& from, const std::string& to) const {
  return std::find(edges_.begin(), edges_.end(), std::make_pair(from, to)) != edges_.end();
}

std::vector<std::string> CausalGraph::parents(const std::string& node) const {
  std::vector<std::string> out;
  for (int p : in_[index_of(node)]) out.push_back(nodes_[p]);
  return out;
}

std::vector<std::string> CausalGraph::children(const std::string& node) const {
  std::vector<std::string> out;
  for (int c : out_[index_of(node)]) out.push_back(nodes_[c]);
  return out;
}

NodeSet CausalGraph::descendants(const std::string& node) const {
  NodeSet seen;
  std::vector<int> stack{index_of(node)};
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (int c : out_[v]) {
      if (seen.insert(nodes_[c]).second) stack.push_back(c);
    }
  }
  return seen;
}

bool CausalGraph::is_acyclic() const {
  std::vector<int> indeg(nodes_.size());
  for (std::size_t v = 0; v < nodes_.size(); ++v) indeg[v] = static_cast<int>(in_[v].size());
  std::vector<int> ready;
  for (std::size_t v = 0; v < nodes_.size(); ++v)
    if (indeg[v] == 0) ready.push_back(static_cast<int>(v));
  std::size_t visited = 0;
  while (!ready.empty()) {
    const int v = ready.back();
    ready.pop_back();
    ++visited;
    for (int c : out_[v])
      if (--indeg[c] == 0) ready.push_back(c);
  }
  return visited == nodes_.size();
}

CausalGraph CausalGraph::intervened(const NodeSet& nodes) const {
  for (const auto& n : nodes) index_of(n);
  std::vector<std::pair<std::string, std::string>> kept;
  for (const auto& e : edges_)
    if (!nodes.count(e.second)) kept.push_back(e);
  return CausalGraph(nodes_, kept, latent_);
}

std::vector<Path> backdoor_paths(const CausalGraph& g, const NodeSet& exposures, const std::string& outcome) {
  require(g.has_node(outcome), ErrorKind::Argument, "unknown node '" + outcome + "'");
  for (const auto& e : exposures) require(g.has_node(e), ErrorKind::Argument, "unknown node '" + e + "'");
  std::vector<Path> out;
  for (const auto& start : exposures) {
    Path path{start};
    std::function<void(const std::string&)> extend = [&](const std::string& v) {
      std::vector<std::string> nbrs = g.parents(v);
      if (path.size() > 1) {
        const auto ch = g.children(v);
        nbrs.insert(nbrs.end(), ch.begin(), ch.end());
      }
      for (const auto& w : nbrs) {
        if (std::find(path.begin(), path.end(), w) != path.end()) continue;
        if (w != outcome && exposures.count(w)) continue;
        path.push_back(w);
        if (w == outcome) out.push_back(path);
        else extend(w);
        path.pop_back();
      }
    };
    extend(start);
  }
  return out;
}

bool path_blocked(const CausalGraph& g, const Path& path, const NodeSet& given) {
  for (std::size_t i = 1; i + 1 < path.size(); ++i) {
    const std::string& prev = path[i - 1];
    const std::string& node = path[i];
    const std::string& next = path[i + 1];
    const bool collider = g.has_edge(prev, node) && g.has_edge(next, node);
    if (collider) {
      bool opened = given.count(node) > 0;
      for (const auto& d : g.descendants(node)) opened = opened || given.count(d) > 0;
      if (!opened) return true;
    } else if (given.count(node)) {
      return true;
    }
  }
  return false;
}

bool verify_adjustment(const CausalGraph& g, const NodeSet& exposures, const std::string& outcome,
                       const NodeSet& conditioned, const NodeSet& adjusted, const NodeSet& held) {
  for (const auto* set : {&conditioned, &adjusted, &held})
    for (const auto& n : *set) require(g.has_node(n), ErrorKind::Argument, "unknown node '" + n + "'");
  const CausalGraph work = held.empty() ? g : g.intervened(held);
  NodeSet given = conditioned;
  given.insert(adjusted.begin(), adjusted.end());
  given.insert(held.begin(), held.end());
  for (const auto& path : backdoor_paths(work, exposures, outcome)) {
    if (!path_blocked(work, path, given)) return false;
  }
  return true;
}

namespace {

CausalGraph build(bool tm, bool ty, bool my, bool shared) {
  std::vector<std::string> nodes{"T", "M", "Y", "X"};
  std::vector<std::pair<std::string, std::string>> edges{{"T", "M"}, {"T", "Y"}, {"M", "Y"}};
  NodeSet latent;
  auto add = [&](const std::string& z, std::initializer_list<const char*> targets) {
    nodes.push_back(z);
    latent.insert(z);
    for (const char* t : targets) edges.emplace_back(z, t);
    edges.emplace_back(z, "X");
  };
  if (tm) add("Z_TM", {"T", "M"});
  if (ty) add("Z_TY", {"T", "Y"});
  if (my) add("Z_MY", {"M", "Y"});
  if (shared) add("Z", {"T", "M", "Y"});
  return CausalGraph(nodes, edges, latent);
}

}  // namespace

CausalGraph three_block_graph() { return build(true, true, true, false); }

CausalGraph template_graph(CaseId id) {
  switch (id) {
    case CaseId::Full: return build(true, true, true, false);
    case CaseId::Fig1b: return build(false, false, false, true);
    case CaseId::Case1: return build(true, false, false, false);
    case CaseId::Case2: return build(false, true, false, false);
    case CaseId::Case3: return build(false, false, true, false);
    case CaseId::Case4: return build(true, true, false, false);
    case CaseId::Case5: return build(true, false, true, false);
    case CaseId::Case6: return build(false, true, true, false);
  }
  fail(ErrorKind::Argument, "unknown case id");
}

CausalGraph graph_for(const ScmSpec& spec) {
  return build(spec.d_tm > 0, spec.d_ty > 0, spec.d_my > 0, spec.d_shared > 0);
}

}  // namespace dmavae::scm
