#include "cosy/explainers.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

#include "cosy/error.hpp"
#include "cosy/io.hpp"

namespace cosy {

// ---------------------------------------------------------------------------
// Formula

Formula Formula::leaf(std::size_t concept_index) {
  auto node = std::make_shared<Node>();
  node->op = Op::Leaf;
  node->concept_index = concept_index;
  node->length = 1;
  return Formula(std::move(node));
}

Formula Formula::negate(Formula operand) {
  auto node = std::make_shared<Node>();
  node->op = Op::Not;
  node->length = operand.length();
  node->children = {std::move(operand)};
  return Formula(std::move(node));
}

Formula Formula::both(Formula lhs, Formula rhs) {
  auto node = std::make_shared<Node>();
  node->op = Op::And;
  node->length = lhs.length() + rhs.length();
  node->children = {std::move(lhs), std::move(rhs)};
  return Formula(std::move(node));
}

Formula Formula::either(Formula lhs, Formula rhs) {
  auto node = std::make_shared<Node>();
  node->op = Op::Or;
  node->length = lhs.length() + rhs.length();
  node->children = {std::move(lhs), std::move(rhs)};
  return Formula(std::move(node));
}

std::vector<std::size_t> Formula::leaves() const {
  std::vector<std::size_t> out;
  auto walk = [&out](const Formula& f, const auto& self) -> void {
    if (f.op() == Op::Leaf) {
      out.push_back(f.concept_index());
      return;
    }
    for (const auto& c : f.node_->children) self(c, self);
  };
  walk(*this, walk);
  return out;
}

bool Formula::eval(std::span<const std::uint8_t> row) const {
  switch (op()) {
    case Op::Leaf: return row[concept_index()] != 0;
    case Op::Not: return !lhs().eval(row);
    case Op::And: return lhs().eval(row) && rhs().eval(row);
    case Op::Or: return lhs().eval(row) || rhs().eval(row);
  }
  return false;
}

std::vector<std::int64_t> Formula::order_key() const {
  std::vector<std::int64_t> key{static_cast<std::int64_t>(length())};
  for (auto c : leaves()) key.push_back(static_cast<std::int64_t>(c));
  auto walk = [&key](const Formula& f, const auto& self) -> void {
    switch (f.op()) {
      case Op::Leaf: key.push_back(-1); return;
      case Op::Not: key.push_back(-2); self(f.lhs(), self); return;
      case Op::And: self(f.lhs(), self); key.push_back(-3); self(f.rhs(), self); return;
      case Op::Or: self(f.lhs(), self); key.push_back(-4); self(f.rhs(), self); return;
    }
  };
  walk(*this, walk);
  return key;
}

bool operator==(const Formula& a, const Formula& b) {
  if (a.op() != b.op()) return false;
  switch (a.op()) {
    case Formula::Op::Leaf: return a.concept_index() == b.concept_index();
    case Formula::Op::Not: return a.lhs() == b.lhs();
    default: return a.lhs() == b.lhs() && a.rhs() == b.rhs();
  }
}

namespace {

void check_leaves(const Formula& formula, std::size_t num_concepts) {
  for (auto c : formula.leaves()) {
    if (c >= num_concepts) {
      throw Error(ErrorCode::UnknownConcept, "concept index " + std::to_string(c) + " of " +
                                                 std::to_string(num_concepts));
    }
  }
}

}  // namespace

std::uint8_t formula_eval(const Formula& formula, const ConceptDataset& dataset, std::size_t row) {
  check_leaves(formula, dataset.num_concepts());
  std::vector<std::uint8_t> labels(dataset.num_concepts());
  for (std::size_t c = 0; c < labels.size(); ++c) labels[c] = dataset.label(row, c);
  return formula.eval(labels) ? 1 : 0;
}

std::vector<std::uint8_t> formula_membership(const Formula& formula, const ConceptDataset& dataset) {
  check_leaves(formula, dataset.num_concepts());
  std::vector<std::uint8_t> labels(dataset.num_concepts());
  std::vector<std::uint8_t> out(dataset.num_images());
  for (std::size_t r = 0; r < out.size(); ++r) {
    for (std::size_t c = 0; c < labels.size(); ++c) labels[c] = dataset.label(r, c);
    out[r] = formula.eval(labels) ? 1 : 0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Text form

namespace {

int precedence(Formula::Op op) {
  switch (op) {
    case Formula::Op::Or: return 1;
    case Formula::Op::And: return 2;
    case Formula::Op::Not: return 3;
    case Formula::Op::Leaf: return 4;
  }
  return 4;
}

std::string quote_name(const std::string& name) {
  const bool needs = name.empty() || name == "AND" || name == "OR" || name == "NOT" ||
                     name.find_first_of(" \t\"()") != std::string::npos;
  if (!needs) return name;
  std::string out = "\"";
  for (char c : name) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string render(const Formula& f, std::span<const std::string> names) {
  auto wrap = [&](const Formula& child, bool parens) {
    auto s = render(child, names);
    return parens ? "(" + s + ")" : s;
  };
  const int p = precedence(f.op());
  switch (f.op()) {
    case Formula::Op::Leaf:
      return quote_name(names[f.concept_index()]);
    case Formula::Op::Not:
      return "NOT " + wrap(f.lhs(), precedence(f.lhs().op()) < p);
    case Formula::Op::And:
    case Formula::Op::Or:
      return wrap(f.lhs(), precedence(f.lhs().op()) < p) +
             (f.op() == Formula::Op::And ? " AND " : " OR ") +
             wrap(f.rhs(), precedence(f.rhs().op()) <= p);
  }
  return {};
}

struct Token {
  enum Kind { Name, And, Or, Not, LParen, RParen, End } kind;
  std::string text;
};

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == ' ' || c == '\t') {
      ++i;
    } else if (c == '(') {
      out.push_back({Token::LParen, "("});
      ++i;
    } else if (c == ')') {
      out.push_back({Token::RParen, ")"});
      ++i;
    } else if (c == '"') {
      std::string name;
      ++i;
      bool closed = false;
      while (i < text.size()) {
        if (text[i] == '"') {
          if (i + 1 < text.size() && text[i + 1] == '"') {
            name.push_back('"');
            i += 2;
            continue;
          }
          ++i;
          closed = true;
          break;
        }
        name.push_back(text[i++]);
      }
      if (!closed) throw Error(ErrorCode::InvalidValue, "unterminated quote in formula");
      out.push_back({Token::Name, std::move(name)});
    } else {
      std::string word;
      while (i < text.size() && text[i] != ' ' && text[i] != '\t' && text[i] != '(' &&
             text[i] != ')' && text[i] != '"') {
        word.push_back(text[i++]);
      }
      if (word == "AND") out.push_back({Token::And, word});
      else if (word == "OR") out.push_back({Token::Or, word});
      else if (word == "NOT") out.push_back({Token::Not, word});
      else out.push_back({Token::Name, std::move(word)});
    }
  }
  out.push_back({Token::End, ""});
  return out;
}

class Parser {
 public:
  Parser(std::vector<Token> tokens, std::span<const std::string> names)
      : tokens_(std::move(tokens)), names_(names) {}

  Formula parse() {
    auto f = expr();
    if (peek().kind != Token::End) {
      throw Error(ErrorCode::InvalidValue, "unexpected token \"" + peek().text + "\" in formula");
    }
    return f;
  }

 private:
  const Token& peek() const { return tokens_[pos_]; }
  const Token& take() { return tokens_[pos_++]; }

  Formula expr() {
    auto f = term();
    while (peek().kind == Token::Or) {
      take();
      f = Formula::either(f, term());
    }
    return f;
  }

  Formula term() {
    auto f = factor();
    while (peek().kind == Token::And) {
      take();
      f = Formula::both(f, factor());
    }
    return f;
  }

  Formula factor() {
    const auto& t = take();
    switch (t.kind) {
      case Token::Not:
        return Formula::negate(factor());
      case Token::LParen: {
        auto f = expr();
        if (take().kind != Token::RParen) {
          throw Error(ErrorCode::InvalidValue, "missing ) in formula");
        }
        return f;
      }
      case Token::Name: {
        const auto it = std::find(names_.begin(), names_.end(), t.text);
        if (it == names_.end()) {
          throw Error(ErrorCode::UnknownConcept, "\"" + t.text + "\" is not a known concept");
        }
        return Formula::leaf(static_cast<std::size_t>(it - names_.begin()));
      }
      default:
        throw Error(ErrorCode::InvalidValue, "unexpected token \"" + t.text + "\" in formula");
    }
  }

  std::vector<Token> tokens_;
  std::span<const std::string> names_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string render_formula(const Formula& formula, std::span<const std::string> concept_names) {
  check_leaves(formula, concept_names.size());
  return render(formula, concept_names);
}

Formula parse_formula(std::string_view text, std::span<const std::string> concept_names) {
  return Parser(tokenize(text), concept_names).parse();
}

// ---------------------------------------------------------------------------
// INVERT

double delta_auc(std::span<const double> neuron_values, std::span<const std::uint8_t> membership,
                 TiePolicy policy) {
  return RankedValues(neuron_values).auc(membership, policy);
}

namespace {

struct Candidate {
  Formula formula;
  std::vector<std::uint8_t> membership;
  double score = 0.0;
  std::vector<std::int64_t> key;
};

bool better(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.key < b.key;
}

bool degenerate(std::span<const std::uint8_t> membership) {
  const auto pos = std::count(membership.begin(), membership.end(), std::uint8_t{1});
  return pos == 0 || static_cast<std::size_t>(pos) == membership.size();
}

}  // namespace

InvertResult invert_explain(std::span<const double> neuron_values, const ConceptDataset& dataset,
                            std::size_t max_length, std::size_t beam_width, TiePolicy policy) {
  if (max_length < 1 || beam_width < 1) {
    throw Error(ErrorCode::InvalidConfig, "max_length and beam_width must be >= 1");
  }
  if (neuron_values.size() != dataset.num_images()) {
    throw Error(ErrorCode::DimensionMismatch, std::to_string(neuron_values.size()) +
                                                  " activations for " +
                                                  std::to_string(dataset.num_images()) + " images");
  }
  const RankedValues ranked(neuron_values);
  const std::size_t num_concepts = dataset.num_concepts();
  std::vector<std::vector<std::uint8_t>> columns(num_concepts);
  for (std::size_t c = 0; c < num_concepts; ++c) columns[c] = dataset.column(c);

  auto score = [&](Formula f, std::vector<std::uint8_t> membership,
                   std::vector<Candidate>& into) {
    if (degenerate(membership)) return;
    Candidate cand{std::move(f), std::move(membership), 0.0, {}};
    cand.score = ranked.auc(cand.membership, policy);
    cand.key = cand.formula.order_key();
    into.push_back(std::move(cand));
  };
  auto keep_best = [beam_width](std::vector<Candidate>& cands) {
    const auto keep = std::min(beam_width, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      better);
    cands.erase(cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end());
  };

  std::vector<Candidate> beam;
  for (std::size_t c = 0; c < num_concepts; ++c) {
    auto negated = columns[c];
    for (auto& v : negated) v = 1 - v;
    score(Formula::leaf(c), columns[c], beam);
    score(Formula::negate(Formula::leaf(c)), std::move(negated), beam);
  }
  if (beam.empty()) throw Error(ErrorCode::EmptyBeam, "every single-concept candidate is degenerate");

  std::optional<Candidate> best;
  auto track = [&best](const std::vector<Candidate>& cands) {
    for (const auto& c : cands) {
      if (!best || better(c, *best)) best = c;
    }
  };
  track(beam);
  keep_best(beam);

  for (std::size_t length = 2; length <= max_length; ++length) {
    std::vector<Candidate> next;
    for (const auto& member : beam) {
      const auto used = member.formula.leaves();
      for (std::size_t c = 0; c < num_concepts; ++c) {
        if (std::find(used.begin(), used.end(), c) != used.end()) continue;
        for (bool negated : {false, true}) {
          const auto atom = negated ? Formula::negate(Formula::leaf(c)) : Formula::leaf(c);
          for (bool conj : {true, false}) {
            std::vector<std::uint8_t> membership(member.membership.size());
            for (std::size_t i = 0; i < membership.size(); ++i) {
              const std::uint8_t leaf = negated ? 1 - columns[c][i] : columns[c][i];
              membership[i] = conj ? (member.membership[i] & leaf) : (member.membership[i] | leaf);
            }
            score(conj ? Formula::both(member.formula, atom)
                       : Formula::either(member.formula, atom),
                  std::move(membership), next);
          }
        }
      }
    }
    if (next.empty()) break;
    track(next);
    keep_best(next);
    beam = std::move(next);
  }
  return InvertResult{best->formula, best->score};
}

// ---------------------------------------------------------------------------
// SoftWPMI

SimilarityMatrix parse_similarity_matrix(std::string_view csv_text) {
  const auto rows = io::parse_csv(csv_text);
  if (rows.size() < 2 || rows.front().fields.size() < 2 ||
      rows.front().fields.front() != "image_ref") {
    throw Error(ErrorCode::MalformedRow, "line 1: similarity matrix needs header image_ref,<concepts>");
  }
  SimilarityMatrix sim;
  sim.concept_names.assign(rows.front().fields.begin() + 1, rows.front().fields.end());
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.fields.size() != sim.concept_names.size() + 1) {
      throw Error(ErrorCode::MalformedRow, "line " + std::to_string(row.line) + ": wrong field count");
    }
    sim.image_refs.push_back(row.fields[0]);
    for (std::size_t c = 1; c < row.fields.size(); ++c) {
      const auto& cell = row.fields[c];
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        throw Error(ErrorCode::MalformedRow, "line " + std::to_string(row.line) +
                                                 ": not a finite number: \"" + cell + "\"");
      }
      sim.values.push_back(v);
    }
  }
  return sim;
}

SoftWpmiResult softwpmi_label(std::span<const double> neuron_values, const SimilarityMatrix& sim,
                              const SoftWpmiConfig& cfg) {
  const std::size_t images = sim.image_refs.size();
  const std::size_t concepts = sim.concept_names.size();
  if (!(cfg.lambda >= 0.0) || !(cfg.temperature > 0.0) || cfg.top_k < 1) {
    throw Error(ErrorCode::InvalidConfig, "softwpmi needs lambda >= 0, temperature > 0, top_k >= 1");
  }
  if (concepts == 0 || images == 0 || sim.values.size() != images * concepts ||
      neuron_values.size() != images) {
    throw Error(ErrorCode::InvalidConfig, "similarity matrix shape does not match " +
                                              std::to_string(neuron_values.size()) + " activations");
  }
  if (cfg.top_k > images) {
    throw Error(ErrorCode::InvalidConfig, "top_k " + std::to_string(cfg.top_k) + " exceeds " +
                                              std::to_string(images) + " probing images");
  }

  // p(s | x): row softmax at the given temperature.
  std::vector<double> prob(images * concepts);
  for (std::size_t x = 0; x < images; ++x) {
    double row_max = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < concepts; ++s) row_max = std::max(row_max, sim.at(x, s) / cfg.temperature);
    double total = 0.0;
    for (std::size_t s = 0; s < concepts; ++s) {
      prob[x * concepts + s] = std::exp(sim.at(x, s) / cfg.temperature - row_max);
      total += prob[x * concepts + s];
    }
    for (std::size_t s = 0; s < concepts; ++s) prob[x * concepts + s] /= total;
  }

  // p(x in X_s) over the top_k most activating images.
  std::vector<std::size_t> order(images);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return neuron_values[a] > neuron_values[b];
  });
  std::vector<double> weight(images, 0.0);
  double weight_sum = 0.0;
  for (std::size_t i = 0; i < cfg.top_k; ++i) {
    const auto x = order[i];
    if (!std::isfinite(neuron_values[x])) {
      throw Error(ErrorCode::NonFiniteValue, "activation of image " + std::to_string(x));
    }
    weight[x] = cfg.binary_membership ? 1.0 : std::max(neuron_values[x], 0.0);
    weight_sum += weight[x];
  }
  if (!(weight_sum > 0.0)) {
    throw Error(ErrorCode::AllZeroActivations, "top " + std::to_string(cfg.top_k) +
                                                   " activations are all <= 0");
  }
  for (auto& w : weight) w /= weight_sum;

  SoftWpmiResult result;
  result.scores.resize(concepts);
  for (std::size_t s = 0; s < concepts; ++s) {
    double expected = 0.0;
    double prior = 0.0;
    for (std::size_t x = 0; x < images; ++x) {
      expected += weight[x] * prob[x * concepts + s];
      prior += prob[x * concepts + s];
    }
    prior /= static_cast<double>(images);
    double score = std::log(expected) - cfg.lambda * std::log(prior);
    if (std::isnan(score)) score = -std::numeric_limits<double>::infinity();
    result.scores[s] = score;
  }
  result.concept_index = static_cast<std::size_t>(
      std::max_element(result.scores.begin(), result.scores.end()) - result.scores.begin());
  result.score = result.scores[result.concept_index];
  return result;
}

std::string export_explanations(const std::vector<ExplanationRecord>& records) {
  return serialize_explanations(records);
}

}  // namespace cosy
