#pragma once

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "bmatree/dataset.hpp"
#include "bmatree/error.hpp"

namespace bmatree {

// A splitting rule: attribute index, index of the threshold within the
// attribute's RuleCatalog entry, and the threshold value itself (kept so a
// tree can route samples without the catalog).
struct SplitRule {
  std::size_t attribute = 0;
  std::size_t rule = 0;
  double threshold = 0.0;

  friend bool operator==(const SplitRule&, const SplitRule&) = default;
};

inline SplitRule catalog_rule(const RuleCatalog& catalog, std::size_t attribute,
                              std::size_t rule) {
  return {attribute, rule, catalog.threshold(attribute, rule)};
}

struct SplitNode {
  SplitRule rule;
  std::size_t left = 0;
  std::size_t right = 0;

  friend bool operator==(const SplitNode&, const SplitNode&) = default;
};

struct TerminalNode {
  std::vector<std::size_t> counts;  // per-class training tallies

  std::size_t total() const {
    return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  }
  friend bool operator==(const TerminalNode&, const TerminalNode&) = default;
};

using TreeNode = std::variant<SplitNode, TerminalNode>;

struct NodeDistribution {
  std::vector<double> probabilities;
};

// Binary classification tree over a node array; the root is node 0. Node
// indices are stable across edits except that pruning compacts away the two
// removed terminals. Edits return new trees and mark the counts stale until
// the tree is recounted against data.
class DecisionTree {
 public:
  DecisionTree() = default;

  // Single-terminal tree with zero counts.
  explicit DecisionTree(std::size_t class_count)
      : class_count_(class_count), nodes_{TerminalNode{std::vector<std::size_t>(class_count, 0)}} {}

  DecisionTree(std::size_t class_count, std::vector<TreeNode> nodes, bool counts_fresh)
      : class_count_(class_count), nodes_(std::move(nodes)), counts_fresh_(counts_fresh) {
    check_structure();
  }

  std::size_t class_count() const noexcept { return class_count_; }
  std::size_t node_count() const noexcept { return nodes_.size(); }
  const TreeNode& node(std::size_t i) const { return nodes_.at(i); }
  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  bool counts_fresh() const noexcept { return counts_fresh_; }

  bool is_split(std::size_t i) const { return std::holds_alternative<SplitNode>(nodes_.at(i)); }
  bool is_terminal(std::size_t i) const { return !is_split(i); }
  const SplitNode& split(std::size_t i) const { return std::get<SplitNode>(nodes_.at(i)); }
  const TerminalNode& terminal(std::size_t i) const {
    return std::get<TerminalNode>(nodes_.at(i));
  }

  std::size_t split_count() const {
    return static_cast<std::size_t>(std::count_if(
        nodes_.begin(), nodes_.end(),
        [](const TreeNode& n) { return std::holds_alternative<SplitNode>(n); }));
  }
  std::size_t terminal_count() const { return nodes_.size() - split_count(); }

  std::vector<std::size_t> split_indices() const { return indices_where(true); }
  std::vector<std::size_t> terminal_indices() const { return indices_where(false); }

  // Splits whose children are both terminals: the targets of a Death move.
  std::vector<std::size_t> prunable_splits() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (const auto* s = std::get_if<SplitNode>(&nodes_[i]))
        if (is_terminal(s->left) && is_terminal(s->right)) out.push_back(i);
    }
    return out;
  }

  // Distinct attributes used by any split.
  std::set<std::size_t> attributes_used() const {
    std::set<std::size_t> used;
    for (const auto& n : nodes_)
      if (const auto* s = std::get_if<SplitNode>(&n)) used.insert(s->rule.attribute);
    return used;
  }

  template <typename Row>
  std::size_t route(const Row& x) const {
    std::size_t i = 0;
    while (const auto* s = std::get_if<SplitNode>(&nodes_[i]))
      i = x[s->rule.attribute] <= s->rule.threshold ? s->left : s->right;
    return i;
  }

  // Recounts against `data` in place; returns true when every terminal holds
  // at least min_node_size samples.
  bool recount_in_place(const Dataset& data, std::size_t min_node_size) {
    for (auto& n : nodes_)
      if (auto* t = std::get_if<TerminalNode>(&n)) std::fill(t->counts.begin(), t->counts.end(), 0);
    for (std::size_t i = 0; i < data.size(); ++i) {
      auto& t = std::get<TerminalNode>(nodes_[route(data.row(i))]);
      ++t.counts[static_cast<std::size_t>(data.label(i))];
    }
    counts_fresh_ = true;
    return meets_min_node_size(min_node_size);
  }

  bool meets_min_node_size(std::size_t min_node_size) const {
    return std::all_of(nodes_.begin(), nodes_.end(), [&](const TreeNode& n) {
      const auto* t = std::get_if<TerminalNode>(&n);
      return t == nullptr || t->total() >= min_node_size;
    });
  }

  // Canonical pre-order rendering of the structure (no counts). Two trees
  // with equal keys route every input identically.
  std::string structure_key() const {
    std::string out;
    append_key(0, out);
    return out;
  }

  // Structural equality: same shape and rules, counts ignored.
  bool same_structure(const DecisionTree& other) const {
    return structure_key() == other.structure_key();
  }

  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;

 private:
  friend DecisionTree split_terminal(const DecisionTree&, std::size_t, const SplitRule&);
  friend DecisionTree prune_split(const DecisionTree&, std::size_t);
  friend DecisionTree set_split(const DecisionTree&, std::size_t, const SplitRule&);

  std::vector<std::size_t> indices_where(bool split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (is_split(i) == split) out.push_back(i);
    return out;
  }

  void append_key(std::size_t i, std::string& out) const {
    if (const auto* s = std::get_if<SplitNode>(&nodes_[i])) {
      out += "S(" + std::to_string(s->rule.attribute) + ":" + std::to_string(s->rule.rule) + " ";
      append_key(s->left, out);
      out += ' ';
      append_key(s->right, out);
      out += ')';
    } else {
      out += 'T';
    }
  }

  void check_structure() const {
    if (nodes_.empty()) throw StructuralEditError("tree has no nodes");
    std::vector<int> parents(nodes_.size(), 0);
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (const auto* s = std::get_if<SplitNode>(&nodes_[i])) {
        if (s->left >= nodes_.size() || s->right >= nodes_.size() || s->left == 0 ||
            s->right == 0 || s->left == s->right)
          throw StructuralEditError("node " + std::to_string(i) + " has invalid children");
        ++parents[s->left];
        ++parents[s->right];
      } else if (std::get<TerminalNode>(nodes_[i]).counts.size() != class_count_) {
        throw StructuralEditError("terminal " + std::to_string(i) + " has wrong class count");
      }
    }
    if (parents[0] != 0) throw StructuralEditError("root has a parent");
    for (std::size_t i = 1; i < nodes_.size(); ++i)
      if (parents[i] != 1) throw StructuralEditError("node " + std::to_string(i) + " is not a tree node");
  }

  std::size_t class_count_ = 0;
  std::vector<TreeNode> nodes_;
  bool counts_fresh_ = false;
};

// Birth edit: terminal `target` becomes a split with two fresh terminals
// appended to the node array.
inline DecisionTree split_terminal(const DecisionTree& tree, std::size_t target,
                                   const SplitRule& rule) {
  if (target >= tree.node_count() || !tree.is_terminal(target))
    throw StructuralEditError("split_terminal: node " + std::to_string(target) +
                              " is not a terminal");
  DecisionTree out = tree;
  const std::size_t left = out.nodes_.size();
  const TerminalNode empty{std::vector<std::size_t>(tree.class_count(), 0)};
  out.nodes_.push_back(empty);
  out.nodes_.push_back(empty);
  out.nodes_[target] = SplitNode{rule, left, left + 1};
  out.counts_fresh_ = false;
  return out;
}

// Death edit: split `target`, whose children are both terminals, becomes a
// terminal. The two children are removed and later indices shift down.
inline DecisionTree prune_split(const DecisionTree& tree, std::size_t target) {
  if (target >= tree.node_count() || !tree.is_split(target))
    throw StructuralEditError("prune_split: node " + std::to_string(target) + " is not a split");
  const SplitNode s = tree.split(target);
  if (!tree.is_terminal(s.left) || !tree.is_terminal(s.right))
    throw StructuralEditError("prune_split: node " + std::to_string(target) +
                              " does not have two terminal children");
  const std::size_t lo = std::min(s.left, s.right);
  const std::size_t hi = std::max(s.left, s.right);
  auto remap = [&](std::size_t i) { return i - (i > lo ? 1 : 0) - (i > hi ? 1 : 0); };

  DecisionTree out;
  out.class_count_ = tree.class_count_;
  out.nodes_.reserve(tree.node_count() - 2);
  for (std::size_t i = 0; i < tree.node_count(); ++i) {
    if (i == lo || i == hi) continue;
    if (i == target) {
      out.nodes_.push_back(TerminalNode{std::vector<std::size_t>(tree.class_count(), 0)});
    } else if (const auto* split = std::get_if<SplitNode>(&tree.nodes_[i])) {
      out.nodes_.push_back(SplitNode{split->rule, remap(split->left), remap(split->right)});
    } else {
      out.nodes_.push_back(tree.nodes_[i]);
    }
  }
  out.counts_fresh_ = false;
  return out;
}

// Change edit: replaces the rule of split `target`.
inline DecisionTree set_split(const DecisionTree& tree, std::size_t target,
                              const SplitRule& rule) {
  if (target >= tree.node_count() || !tree.is_split(target))
    throw StructuralEditError("set_split: node " + std::to_string(target) + " is not a split");
  DecisionTree out = tree;
  std::get<SplitNode>(out.nodes_[target]).rule = rule;
  out.counts_fresh_ = false;
  return out;
}

// Returns the tree with counts tallied over `data` and whether every terminal
// holds at least min_node_size samples.
inline std::pair<DecisionTree, bool> recount(const DecisionTree& tree, const Dataset& data,
                                             std::size_t min_node_size) {
  DecisionTree out = tree;
  const bool valid = out.recount_in_place(data, min_node_size);
  return {std::move(out), valid};
}

// Laplace-smoothed class distribution of the terminal that `x` lands in:
// (n_tj + alpha) / (n_t + C * alpha).
template <typename Row>
NodeDistribution predict_distribution(const DecisionTree& tree, const Row& x, double alpha) {
  const auto& counts = tree.terminal(tree.route(x)).counts;
  const double c = static_cast<double>(counts.size());
  double total = 0.0;
  for (auto n : counts) total += static_cast<double>(n);
  NodeDistribution out;
  out.probabilities.reserve(counts.size());
  for (auto n : counts)
    out.probabilities.push_back((static_cast<double>(n) + alpha) / (total + c * alpha));
  return out;
}

// Nested text record for a tree:
//   terminal  T(n_1,...,n_C)
//   split     S(attribute,rule,threshold;left;right)
// Threshold at 17 significant digits. Attribute and rule are 0-based.
inline void append_tree_text(const DecisionTree& tree, std::size_t i, std::string& out) {
  if (tree.is_split(i)) {
    const auto& s = tree.split(i);
    out += "S(" + std::to_string(s.rule.attribute) + "," + std::to_string(s.rule.rule) + "," +
           detail::format_double(s.rule.threshold) + ";";
    append_tree_text(tree, s.left, out);
    out += ';';
    append_tree_text(tree, s.right, out);
    out += ')';
  } else {
    out += "T(";
    const auto& counts = tree.terminal(i).counts;
    for (std::size_t c = 0; c < counts.size(); ++c) {
      if (c > 0) out += ',';
      out += std::to_string(counts[c]);
    }
    out += ')';
  }
}

inline std::string tree_to_text(const DecisionTree& tree) {
  std::string out;
  append_tree_text(tree, 0, out);
  return out;
}

namespace detail {

class TreeTextParser {
 public:
  TreeTextParser(std::string_view text, std::size_t class_count)
      : text_(text), class_count_(class_count) {}

  DecisionTree parse() {
    nodes_.clear();
    nodes_.emplace_back();
    parse_node(0);
    if (pos_ != text_.size()) fail("trailing characters");
    return DecisionTree(class_count_, std::move(nodes_), true);
  }

 private:
  [[noreturn]] void fail(const std::string& why) const {
    throw ParseError("tree record at offset " + std::to_string(pos_) + ": " + why);
  }
  void expect(char c) {
    if (pos_ >= text_.size() || text_[pos_] != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }
  std::string_view token() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && std::string_view(",;()").find(text_[pos_]) == std::string_view::npos)
      ++pos_;
    return text_.substr(start, pos_ - start);
  }
  std::size_t parse_size() {
    const auto t = token();
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) fail("bad integer");
    return v;
  }
  double parse_real() {
    double v = 0.0;
    if (!parse_finite(token(), v)) fail("bad threshold");
    return v;
  }

  void parse_node(std::size_t slot) {
    if (pos_ >= text_.size()) fail("unexpected end");
    const char kind = text_[pos_++];
    expect('(');
    if (kind == 'T') {
      TerminalNode t;
      for (std::size_t c = 0; c < class_count_; ++c) {
        if (c > 0) expect(',');
        t.counts.push_back(parse_size());
      }
      expect(')');
      nodes_[slot] = std::move(t);
    } else if (kind == 'S') {
      SplitNode s;
      s.rule.attribute = parse_size();
      expect(',');
      s.rule.rule = parse_size();
      expect(',');
      s.rule.threshold = parse_real();
      expect(';');
      s.left = nodes_.size();
      nodes_.emplace_back();
      parse_node(s.left);
      expect(';');
      s.right = nodes_.size();
      nodes_.emplace_back();
      parse_node(s.right);
      expect(')');
      nodes_[slot] = s;
    } else {
      fail("unknown node kind");
    }
  }

  std::string_view text_;
  std::size_t class_count_;
  std::size_t pos_ = 0;
  std::vector<TreeNode> nodes_;
};

}  // namespace detail

// Parses tree_to_text output. Node numbering follows pre-order, so it may
// differ from the original array order; structure and counts are preserved.
inline DecisionTree tree_from_text(std::string_view text, std::size_t class_count) {
  return detail::TreeTextParser(text, class_count).parse();
}

}  // namespace bmatree
