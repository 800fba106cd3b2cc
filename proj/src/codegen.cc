#include "adagemm/codegen.h"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <sstream>

#include "adagemm/error.h"
#include "adagemm/text.h"
#include "adagemm/version.h"

namespace adagemm {

std::string_view syntax_name(DispatcherSyntax syntax) {
  return syntax == DispatcherSyntax::CLike ? "c" : "cpp";
}

DispatcherSyntax parse_syntax(std::string_view name) {
  if (name == "c" || name == "c-like" || name == "neutral") { return DispatcherSyntax::CLike; }
  if (name == "cpp" || name == "c++") { return DispatcherSyntax::Cpp; }
  throw ArgumentError("unknown dispatcher syntax '" + std::string(name) + "' (expected c or cpp)");
}

std::string tree_fingerprint(const DecisionTree& tree) {
  // Structure only: names, training parameters and sample counts do not change behaviour.
  std::string canonical = "root=" + std::to_string(tree.root()) + ";";
  for (const auto& node : tree.nodes()) {
    if (node.is_leaf()) {
      canonical += "L" + std::to_string(node.class_id) + ";";
    } else {
      canonical += "S" + std::to_string(node.feature) + "," + text::format_double(node.threshold) +
                   "," + std::to_string(node.left) + "," + std::to_string(node.right) + ";";
    }
  }
  return text::hex64(text::fnv1a(canonical));
}

// =================================================================================================

namespace {

constexpr const char* kVariables[3] = {"m", "n", "k"};

std::string config_literal(const KernelConfig& c, DispatcherSyntax syntax) {
  std::ostringstream out;
  if (syntax == DispatcherSyntax::CLike) {
    out << "config(" << family_name(c.family);
  } else {
    out << "::adagemm::KernelConfig{::adagemm::KernelFamily::"
        << (c.family == KernelFamily::Direct ? "Direct" : "Indirect");
  }
  out << ", " << c.Mwg << ", " << c.Nwg << ", " << c.Kwg << ", " << c.Mwi << ", " << c.Nwi << ", "
      << c.Kwi << (syntax == DispatcherSyntax::CLike ? ")" : "}");
  return out.str();
}

void emit_node(std::ostringstream& out, const DecisionTree& tree, const ClassTable& classes, int index,
               int depth, DispatcherSyntax syntax) {
  const std::string indent(static_cast<std::size_t>(2 * depth), ' ');
  const auto& node = tree.node(index);
  if (node.is_leaf()) {
    KernelConfig config;
    try {
      config = classes.config(node.class_id);
    } catch (const ConsistencyError&) {
      throw GenerationError("leaf class " + std::to_string(node.class_id) +
                            " has no configuration in the class table");
    }
    out << indent << "return " << config_literal(config, syntax) << ";\n";
    return;
  }
  out << indent << "if (" << kVariables[node.feature] << " <= "
      << text::format_real_literal(node.threshold) << ") {\n";
  emit_node(out, tree, classes, node.left, depth + 1, syntax);
  out << indent << "} else {\n";
  emit_node(out, tree, classes, node.right, depth + 1, syntax);
  out << indent << "}\n";
}

}  // namespace

DispatcherSource emit_dispatcher(const DecisionTree& tree, const ClassTable& classes,
                                 DispatcherSyntax syntax, const EmitOptions& options) {
  DispatcherSource source;
  source.syntax = syntax;
  source.tree_fingerprint = tree_fingerprint(tree);

  std::ostringstream out;
  out << "// Generated by adagemm " << kToolkitVersion << ". Do not edit.\n"
      << "// tree-fingerprint: " << source.tree_fingerprint << "\n";
  if (!options.provenance.empty()) { out << "// provenance: " << options.provenance << "\n"; }
  if (!options.config_hash.empty()) { out << "// config-hash: " << options.config_hash << "\n"; }
  out << "// leaves: " << tree.leaf_count() << ", height: " << tree.height() << "\n\n";

  if (syntax == DispatcherSyntax::CLike) {
    out << "config " << options.function_name << "(real m, real n, real k) {\n";
    emit_node(out, tree, classes, tree.root(), 1, syntax);
    out << "}\n";
  } else {
    out << "#include \"adagemm/kernels.h\"\n\n"
        << "namespace " << options.cpp_namespace << " {\n\n"
        << "::adagemm::KernelConfig " << options.function_name << "(double m, double n, double k) {\n"
        << "  (void)m;\n  (void)n;\n  (void)k;\n";
    emit_node(out, tree, classes, tree.root(), 1, syntax);
    out << "}\n\n"
        << "const char* " << options.function_name << "_fingerprint() { return \""
        << source.tree_fingerprint << "\"; }\n\n"
        << "}  // namespace " << options.cpp_namespace << "\n";
  }
  source.text = out.str();
  return source;
}

// =================================================================================================

class DispatchParser {
 public:
  explicit DispatchParser(const std::string& text) : text_(text) { tokenize(); }

  DispatchProgram parse() {
    DispatchProgram program;
    program.fingerprint_ = fingerprint_;
    // The body starts at the first "...) {" in the file.
    std::size_t body = 0;
    for (; body + 1 < tokens_.size(); ++body) {
      if (tokens_[body] == ")" && tokens_[body + 1] == "{") { break; }
    }
    if (body + 1 >= tokens_.size()) { fail("no function body found"); }
    pos_ = body + 2;
    program_ = &program;
    statement();
    expect("}");
    return program;
  }

 private:
  void tokenize() {
    std::size_t i = 0;
    while (i < text_.size()) {
      const char c = text_[i];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++i;
      } else if (c == '/' && i + 1 < text_.size() && text_[i + 1] == '/') {
        const auto end = text_.find('\n', i);
        const std::string_view comment(text_.data() + i, (end == std::string::npos ? text_.size() : end) - i);
        const std::string_view key = "// tree-fingerprint: ";
        if (comment.substr(0, key.size()) == key) {
          fingerprint_ = std::string(text::trim(comment.substr(key.size())));
        }
        i = end == std::string::npos ? text_.size() : end;
      } else if (c == '#') {
        const auto end = text_.find('\n', i);
        i = end == std::string::npos ? text_.size() : end;
      } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        const auto start = i;
        while (i < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[i])) || text_[i] == '_')) { ++i; }
        tokens_.emplace_back(text_.substr(start, i - start));
      } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        const auto start = i;
        while (i < text_.size()) {
          const char d = text_[i];
          const bool sign_after_exponent =
              (d == '+' || d == '-') && (text_[i - 1] == 'e' || text_[i - 1] == 'E');
          if (!(std::isalnum(static_cast<unsigned char>(d)) || d == '.' || sign_after_exponent)) { break; }
          ++i;
        }
        tokens_.emplace_back(text_.substr(start, i - start));
      } else if (c == ':' && i + 1 < text_.size() && text_[i + 1] == ':') {
        tokens_.emplace_back("::");
        i += 2;
      } else if (c == '<' && i + 1 < text_.size() && text_[i + 1] == '=') {
        tokens_.emplace_back("<=");
        i += 2;
      } else {
        tokens_.emplace_back(1, c);
        ++i;
      }
    }
  }

  [[noreturn]] void fail(const std::string& what) const {
    const std::string near = pos_ < tokens_.size() ? "'" + tokens_[pos_] + "'" : "end of input";
    throw ParseError("dispatcher source: " + what + " near " + near);
  }

  const std::string& peek() const {
    static const std::string kEnd;
    return pos_ < tokens_.size() ? tokens_[pos_] : kEnd;
  }

  std::string next() {
    if (pos_ >= tokens_.size()) { fail("unexpected end of input"); }
    return tokens_[pos_++];
  }

  void expect(const std::string& token) {
    if (peek() != token) { fail("expected '" + token + "'"); }
    ++pos_;
  }

  // Returns the index of the parsed node.
  int statement() {
    // Skip statements that are neither a branch nor a return, e.g. "(void)m;".
    while (peek() != "if" && peek() != "return") {
      if (pos_ >= tokens_.size() || peek() == "}") { fail("expected 'if' or 'return'"); }
      while (pos_ < tokens_.size() && peek() != ";") { ++pos_; }
      expect(";");
    }
    const int index = static_cast<int>(program_->nodes_.size());
    program_->nodes_.emplace_back();
    if (next() == "if") {
      expect("(");
      const auto variable = next();
      int feature = -1;
      for (int f = 0; f < 3; ++f) {
        if (variable == kVariables[f]) { feature = f; }
      }
      if (feature < 0) { fail("unknown variable '" + variable + "'"); }
      expect("<=");
      const auto literal = next();
      double threshold = 0.0;
      try {
        threshold = text::parse_double(literal);
      } catch (const ParseError&) {
        fail("bad threshold literal '" + literal + "'");
      }
      expect(")");
      expect("{");
      const int then_branch = statement();
      expect("}");
      expect("else");
      expect("{");
      const int else_branch = statement();
      expect("}");
      auto& node = program_->nodes_[static_cast<std::size_t>(index)];
      node.feature = feature;
      node.threshold = threshold;
      node.then_branch = then_branch;
      node.else_branch = else_branch;
    } else {
      program_->nodes_[static_cast<std::size_t>(index)].config = config_literal_tokens();
    }
    return index;
  }

  // Family word followed by six integers, in either emitted spelling.
  KernelConfig config_literal_tokens() {
    std::optional<KernelFamily> family;
    std::vector<int> values;
    while (peek() != ";") {
      const auto token = next();
      if (token == "direct" || token == "Direct") {
        family = KernelFamily::Direct;
      } else if (token == "indirect" || token == "Indirect") {
        family = KernelFamily::Indirect;
      } else if (std::isdigit(static_cast<unsigned char>(token[0]))) {
        try {
          values.push_back(static_cast<int>(text::parse_int(token)));
        } catch (const ParseError&) {
          fail("bad integer '" + token + "'");
        }
      }
    }
    expect(";");
    if (!family || values.size() != 6) { fail("malformed configuration literal"); }
    return KernelConfig{*family, values[0], values[1], values[2], values[3], values[4], values[5]};
  }

  std::string text_;
  std::vector<std::string> tokens_;
  std::string fingerprint_;
  std::size_t pos_ = 0;
  DispatchProgram* program_ = nullptr;
};

DispatchProgram DispatchProgram::parse(const std::string& source_text) {
  return DispatchParser(source_text).parse();
}

KernelConfig DispatchProgram::select(const Features& features) const {
  const Node* node = &nodes_.front();
  while (node->feature >= 0) {
    const double value = static_cast<double>(features[static_cast<std::size_t>(node->feature)]);
    node = &nodes_[static_cast<std::size_t>(value <= node->threshold ? node->then_branch : node->else_branch)];
  }
  return node->config;
}

int DispatchProgram::branch_count() const {
  return static_cast<int>(std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.feature >= 0; }));
}

int DispatchProgram::return_count() const { return static_cast<int>(nodes_.size()) - branch_count(); }

// =================================================================================================

std::vector<Features> probe_set(const DecisionTree& tree, std::span<const Features> training) {
  std::vector<std::int64_t> boundaries;
  for (const auto& node : tree.nodes()) {
    if (node.is_leaf()) { continue; }
    for (const double v : {std::floor(node.threshold), std::ceil(node.threshold)}) {
      if (v >= 1.0) { boundaries.push_back(static_cast<std::int64_t>(v)); }
    }
  }
  std::sort(boundaries.begin(), boundaries.end());
  boundaries.erase(std::unique(boundaries.begin(), boundaries.end()), boundaries.end());

  std::vector<Features> probes(training.begin(), training.end());
  if (probes.empty()) { probes.push_back({1, 1, 1}); }
  const std::size_t base = probes.size();
  probes.reserve(base * (1 + 3 * boundaries.size()));
  for (std::size_t i = 0; i < base; ++i) {
    for (std::size_t slot = 0; slot < 3; ++slot) {
      for (const auto v : boundaries) {
        Features probe = probes[i];
        probe[slot] = v;
        probes.push_back(probe);
      }
    }
  }
  std::sort(probes.begin(), probes.end());
  probes.erase(std::unique(probes.begin(), probes.end()), probes.end());
  return probes;
}

RoundtripResult roundtrip_check(const DecisionTree& tree, const ClassTable& classes,
                                const DispatcherSource& source, std::span<const Features> probes) {
  RoundtripResult result;
  std::optional<DispatchProgram> program;
  try {
    program = DispatchProgram::parse(source.text);
  } catch (const ParseError& e) {
    result.equivalent = false;
    result.message = e.what();
    return result;
  }
  for (const auto& probe : probes) {
    const auto expected = classes.config(tree.predict(probe));
    const auto actual = program->select(probe);
    if (expected != actual) {
      result.equivalent = false;
      result.counterexample = probe;
      result.expected = expected;
      result.actual = actual;
      result.message = "probe (" + std::to_string(probe[0]) + "," + std::to_string(probe[1]) + "," +
                       std::to_string(probe[2]) + ") selects " + canonical_id(actual) +
                       " but the tree predicts " + canonical_id(expected);
      return result;
    }
  }
  if (program->fingerprint() != tree_fingerprint(tree)) {
    result.equivalent = false;
    result.message = "source fingerprint " + program->fingerprint() + " does not match tree " +
                     tree_fingerprint(tree);
  }
  return result;
}

// =================================================================================================

Dispatcher::Dispatcher(const DecisionTree& tree, const ClassTable& classes)
    : tree_(&tree), classes_(&classes) {}

Dispatcher::Dispatcher(const DispatcherSource& source) : program_(DispatchProgram::parse(source.text)) {}

KernelConfig Dispatcher::select(const ProblemShape& shape) const {
  if (program_) { return program_->select(features_of(shape)); }
  return classes_->config(tree_->predict(features_of(shape)));
}

template <typename T>
DispatchResult<T> dispatch_and_run(const Dispatcher& dispatcher, const ProblemShape& shape,
                                   const Matrix<T>& A, const Matrix<T>& B, const Matrix<T>& C,
                                   const DispatchOptions& options) {
  using Clock = std::chrono::steady_clock;
  DispatchResult<T> result;
  const auto start = Clock::now();
  result.selected = dispatcher.select(shape);
  if (!is_legal(result.selected, options.caps)) {
    result.selected = options.fallback;
    result.fell_back = true;
  }
  result.selection_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  ExecuteOptions exec;
  exec.caps = options.caps;
  auto run = gemm_execute(shape, result.selected, A, B, C, exec);
  result.C = std::move(run.C);
  result.execution_seconds = run.elapsed;
  return result;
}

template DispatchResult<float> dispatch_and_run<float>(const Dispatcher&, const ProblemShape&,
                                                       const Matrix<float>&, const Matrix<float>&,
                                                       const Matrix<float>&, const DispatchOptions&);
template DispatchResult<double> dispatch_and_run<double>(const Dispatcher&, const ProblemShape&,
                                                         const Matrix<double>&, const Matrix<double>&,
                                                         const Matrix<double>&, const DispatchOptions&);

}  // namespace adagemm
