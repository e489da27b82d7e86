#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "subrq/common.hpp"
#include "subrq/dynamics.hpp"
#include "subrq/expr.hpp"
#include "subrq/geometry.hpp"

// Plain-text scenario files: nested `key ... {` sections closed by `}`, leaf
// entries `key value`, comments from `#`.  Math stays in expression strings
// so files diff cleanly.

namespace subrq {
namespace scenario {

struct ScnNode {
  std::string key;
  std::string value;  // inline value; for sections, the text before `{`
  std::string path;   // slash-joined location for error messages
  bool section = false;
  std::vector<ScnNode> children;

  bool has(const std::string& k) const { return find(k) != nullptr; }

  const ScnNode* find(const std::string& k) const {
    for (const auto& c : children)
      if (c.key == k) return &c;
    return nullptr;
  }

  const ScnNode& at(const std::string& k) const {
    const ScnNode* c = find(k);
    if (!c) throw DomainError("scenario: missing '" + k + "' in " + path);
    return *c;
  }

  std::vector<const ScnNode*> all(const std::string& k) const {
    std::vector<const ScnNode*> out;
    for (const auto& c : children)
      if (c.key == k) out.push_back(&c);
    return out;
  }

  double num() const {
    try {
      std::size_t used = 0;
      double v = std::stod(value, &used);
      while (used < value.size() && std::isspace(value[used])) ++used;
      if (used != value.size()) throw std::invalid_argument("trailing text");
      return v;
    } catch (const std::exception&) {
      throw DomainError("scenario: '" + value + "' at " + path +
                        " is not a number");
    }
  }

  long integer() const {
    double v = num();
    long i = static_cast<long>(v);
    if (static_cast<double>(i) != v)
      throw DomainError("scenario: '" + value + "' at " + path +
                        " is not an integer");
    return i;
  }

  VectorXd vec() const {
    std::vector<double> vals;
    std::stringstream ss(value);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(tok, &used));
        while (used < tok.size() && std::isspace(tok[used])) ++used;
        if (used != tok.size()) throw std::invalid_argument("trailing text");
      } catch (const std::exception&) {
        throw DomainError("scenario: '" + tok + "' at " + path +
                          " is not a number");
      }
    }
    if (vals.empty())
      throw DomainError("scenario: empty vector at " + path);
    return Eigen::Map<VectorXd>(vals.data(), vals.size());
  }

  std::vector<Expr> exprs(int dim) const {
    std::vector<Expr> out;
    std::stringstream ss(value);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      try {
        out.push_back(Expr::parse(tok, dim));
      } catch (const Error& e) {
        throw DomainError("scenario: at " + path + ": " + e.what());
      }
    }
    if (out.empty()) throw DomainError("scenario: empty entry at " + path);
    return out;
  }

  double num_or(const std::string& k, double dflt) const {
    const ScnNode* c = find(k);
    return c ? c->num() : dflt;
  }
  long int_or(const std::string& k, long dflt) const {
    const ScnNode* c = find(k);
    return c ? c->integer() : dflt;
  }
  std::string str_or(const std::string& k, const std::string& dflt) const {
    const ScnNode* c = find(k);
    return c ? c->value : dflt;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

inline ScnNode parse_tree(const std::string& text) {
  ScnNode root;
  root.section = true;
  root.path = "/";
  std::vector<ScnNode*> stack{&root};
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::size_t hash = raw.find('#');
    if (hash != std::string::npos) raw = raw.substr(0, hash);
    std::string line = detail::trim(raw);
    if (line.empty()) continue;
    if (line == "}") {
      if (stack.size() == 1)
        throw DomainError("scenario: stray '}' at line " +
                          std::to_string(lineno));
      stack.pop_back();
      continue;
    }
    bool opens = false;
    if (line.size() >= 1 && line.back() == '{') {
      opens = true;
      line = detail::trim(line.substr(0, line.size() - 1));
      if (line.empty())
        throw DomainError("scenario: unnamed section at line " +
                          std::to_string(lineno));
    }
    std::size_t sp = line.find_first_of(" \t");
    ScnNode node;
    node.key = sp == std::string::npos ? line : line.substr(0, sp);
    node.value =
        sp == std::string::npos ? "" : detail::trim(line.substr(sp + 1));
    node.section = opens;
    node.path = stack.back()->path;
    if (node.path.back() != '/') node.path += "/";
    node.path += node.key;
    stack.back()->children.push_back(node);
    if (opens) stack.push_back(&stack.back()->children.back());
  }
  if (stack.size() != 1)
    throw DomainError("scenario: unclosed section '" + stack.back()->key +
                      "'");
  return root;
}

struct Scenario {
  std::string name = "unnamed";
  int dim = 0;
  unsigned seed = 2026;
  std::optional<Frame> frame;
  std::vector<std::vector<Expr>> metric;  // kinetic metric over the frame
  std::optional<Expr> potential;
  std::optional<Hamiltonian> ham;
  std::vector<ScnNode> tasks;  // in file order
};

inline Scenario parse_scenario(const std::string& text) {
  ScnNode root = parse_tree(text);
  Scenario sc;
  if (root.has("scenario")) sc.name = root.at("scenario").value;
  if (root.has("dim")) sc.dim = static_cast<int>(root.at("dim").integer());
  if (root.has("seed"))
    sc.seed = static_cast<unsigned>(root.at("seed").integer());

  if (root.has("frame")) {
    if (sc.dim < 2)
      throw DomainError("scenario: frame requires dim >= 2 at /frame");
    const ScnNode& fn = root.at("frame");
    std::vector<std::vector<Expr>> fields;
    for (const ScnNode* f : fn.all("field")) {
      auto comps = f->exprs(sc.dim);
      if (static_cast<int>(comps.size()) != sc.dim)
        throw DomainError("scenario: field needs " + std::to_string(sc.dim) +
                          " components at " + f->path);
      fields.push_back(std::move(comps));
    }
    auto eta = fn.at("eta").exprs(sc.dim);
    if (static_cast<int>(eta.size()) != sc.dim)
      throw DomainError("scenario: eta needs " + std::to_string(sc.dim) +
                        " components at " + fn.path);
    if (static_cast<int>(fields.size()) != sc.dim - 1)
      throw DomainError("scenario: frame needs dim-1 fields at " + fn.path);
    sc.frame.emplace(sc.dim, std::move(fields), std::move(eta));
  }

  if (root.has("hamiltonian")) {
    const ScnNode& hn = root.at("hamiltonian");
    Expr U = hn.has("potential")
                 ? Expr::parse(hn.at("potential").value, sc.dim)
                 : Expr::constant(0.0, sc.dim);
    sc.potential = U;
    if (hn.has("metric")) {
      if (!sc.frame)
        throw DomainError("scenario: metric needs a frame at " + hn.path);
      const int d = sc.frame->rank();
      for (const ScnNode* r : hn.at("metric").all("row")) {
        auto row = r->exprs(sc.dim);
        if (static_cast<int>(row.size()) != d)
          throw DomainError("scenario: metric row needs " +
                            std::to_string(d) + " entries at " + r->path);
        sc.metric.push_back(std::move(row));
      }
      if (static_cast<int>(sc.metric.size()) != d)
        throw DomainError("scenario: metric needs " + std::to_string(d) +
                          " rows at " + hn.path);
    } else if (sc.frame) {
      const int d = sc.frame->rank();
      for (int i = 0; i < d; ++i) {
        std::vector<Expr> row;
        for (int j = 0; j < d; ++j)
          row.push_back(Expr::constant(i == j ? 1.0 : 0.0, sc.dim));
        sc.metric.push_back(std::move(row));
      }
    }
    if (hn.has("bmat")) {
      std::vector<std::vector<Expr>> B;
      for (const ScnNode* r : hn.at("bmat").all("row")) {
        auto row = r->exprs(sc.dim);
        if (static_cast<int>(row.size()) != sc.dim)
          throw DomainError("scenario: bmat row needs " +
                            std::to_string(sc.dim) + " entries at " +
                            r->path);
        B.push_back(std::move(row));
      }
      sc.ham = Hamiltonian::from_matrix(sc.dim, std::move(B), U);
    } else if (sc.frame) {
      sc.ham = Hamiltonian::from_frame(*sc.frame, sc.metric, U);
    } else {
      throw DomainError("scenario: hamiltonian needs a frame or bmat at " +
                        hn.path);
    }
  }

  static const char* kKinds[] = {"flow",       "regularity", "normal-form",
                                 "poincare",   "mane-check", "formula-verify",
                                 "lifts",      "scan"};
  for (const ScnNode* t : root.all("task")) {
    bool known = false;
    for (const char* k : kKinds) known = known || t->value == k;
    if (!known)
      throw DomainError("scenario: unknown task kind '" + t->value + "' at " +
                        t->path);
    sc.tasks.push_back(*t);
  }
  return sc;
}

inline Scenario load_scenario(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw DomainError("scenario: cannot read '" + file + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

}  // namespace scenario
}  // namespace subrq
