#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "ctg/mip.hpp"

namespace ctg::mip {

namespace {

std::string num(double v) {
  std::array<char, 64> buf;
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

void write_terms(std::ostream& out, const MipModel& model,
                 const std::vector<LinearTerm>& terms) {
  for (const LinearTerm& t : terms) {
    double c = t.coef;
    out << (c < 0 ? " - " : " + ") << num(std::fabs(c)) << ' '
        << model.variables[static_cast<std::size_t>(t.var)].name;
  }
}

const char* op_text(RowOp op) {
  switch (op) {
    case RowOp::LE:
      return "<=";
    case RowOp::GE:
      return ">=";
    case RowOp::EQ:
      return "=";
  }
  return "?";
}

}  // namespace

void write_lp(const MipModel& model, std::ostream& out) {
  out << "\\ generated model\n";
  out << "Minimize\n obj:";
  write_terms(out, model, model.objective);
  if (model.objective_constant != 0.0)
    out << (model.objective_constant < 0 ? " - " : " + ")
        << num(std::fabs(model.objective_constant));
  if (model.objective.empty() && model.objective_constant == 0.0) out << " 0 ";
  out << "\nSubject To\n";
  for (const LinearConstraint& c : model.constraints) {
    out << ' ' << c.name << ':';
    write_terms(out, model, c.terms);
    out << ' ' << op_text(c.op) << ' ' << num(c.rhs) << "\n";
  }
  for (const IndicatorConstraint& c : model.indicators) {
    out << ' ' << c.row.name << ": "
        << model.variables[static_cast<std::size_t>(c.bin_var)].name << " = " << c.bin_value
        << " ->";
    write_terms(out, model, c.row.terms);
    out << ' ' << op_text(c.row.op) << ' ' << num(c.row.rhs) << "\n";
  }

  std::ostringstream bounds;
  for (const Variable& v : model.variables) {
    const bool inf_lb = std::isinf(v.lb), inf_ub = std::isinf(v.ub);
    if (v.kind == VarKind::Binary) {
      if (v.lb == 0.0 && v.ub == 1.0) continue;  // implied by Binaries
      bounds << ' ' << num(v.lb) << " <= " << v.name << " <= " << num(v.ub) << "\n";
      continue;
    }
    if (v.lb == 0.0 && inf_ub) continue;  // LP default
    if (inf_lb && inf_ub) {
      bounds << ' ' << v.name << " free\n";
    } else if (inf_ub) {
      bounds << ' ' << v.name << " >= " << num(v.lb) << "\n";
    } else if (inf_lb) {
      bounds << ' ' << v.name << " <= " << num(v.ub) << "\n";
    } else {
      bounds << ' ' << num(v.lb) << " <= " << v.name << " <= " << num(v.ub) << "\n";
    }
  }
  const std::string bounds_text = bounds.str();
  if (!bounds_text.empty()) out << "Bounds\n" << bounds_text;

  std::ostringstream bins, gens;
  for (const Variable& v : model.variables) {
    if (v.kind == VarKind::Binary) bins << ' ' << v.name << "\n";
    if (v.kind == VarKind::Integer) gens << ' ' << v.name << "\n";
  }
  if (!bins.str().empty()) out << "Binaries\n" << bins.str();
  if (!gens.str().empty()) out << "Generals\n" << gens.str();
  out << "End\n";
}

void export_lp(const MipModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write LP file: " + path);
  write_lp(model, out);
}

void write_mps(const MipModel& model, std::ostream& out) {
  out << "NAME generated\n";
  out << "ROWS\n N obj\n";
  auto row_letter = [](RowOp op) {
    switch (op) {
      case RowOp::LE:
        return 'L';
      case RowOp::GE:
        return 'G';
      case RowOp::EQ:
        return 'E';
    }
    return '?';
  };
  for (const LinearConstraint& c : model.constraints)
    out << ' ' << row_letter(c.op) << ' ' << c.name << "\n";
  for (const IndicatorConstraint& c : model.indicators)
    out << ' ' << row_letter(c.row.op) << ' ' << c.row.name << "\n";

  // column-major view of all rows
  std::vector<std::vector<std::pair<std::string, double>>> columns(model.variables.size());
  for (std::size_t v = 0; v < model.variables.size(); ++v) {
    for (const LinearTerm& t : model.objective) {
      if (t.var == static_cast<int>(v)) columns[v].emplace_back("obj", t.coef);
    }
  }
  for (const LinearConstraint& c : model.constraints) {
    for (const LinearTerm& t : c.terms)
      columns[static_cast<std::size_t>(t.var)].emplace_back(c.name, t.coef);
  }
  for (const IndicatorConstraint& c : model.indicators) {
    for (const LinearTerm& t : c.row.terms)
      columns[static_cast<std::size_t>(t.var)].emplace_back(c.row.name, t.coef);
  }

  out << "COLUMNS\n";
  bool in_integer = false;
  int marker = 0;
  for (std::size_t v = 0; v < model.variables.size(); ++v) {
    const Variable& var = model.variables[v];
    const bool integral = var.kind != VarKind::Continuous;
    if (integral != in_integer) {
      out << "    MARKER" << marker++ << " 'MARKER' " << (integral ? "'INTORG'" : "'INTEND'")
          << "\n";
      in_integer = integral;
    }
    for (const auto& [row, coef] : columns[v])
      out << "    " << var.name << ' ' << row << ' ' << num(coef) << "\n";
    if (columns[v].empty()) out << "    " << var.name << " obj 0\n";
  }
  if (in_integer) out << "    MARKER" << marker++ << " 'MARKER' 'INTEND'\n";

  out << "RHS\n";
  for (const LinearConstraint& c : model.constraints) {
    if (c.rhs != 0.0) out << "    rhs " << c.name << ' ' << num(c.rhs) << "\n";
  }
  for (const IndicatorConstraint& c : model.indicators) {
    if (c.row.rhs != 0.0) out << "    rhs " << c.row.name << ' ' << num(c.row.rhs) << "\n";
  }

  out << "BOUNDS\n";
  for (const Variable& v : model.variables) {
    switch (v.kind) {
      case VarKind::Binary:
        if (v.lb == v.ub)
          out << " FX bnd " << v.name << ' ' << num(v.lb) << "\n";
        else
          out << " BV bnd " << v.name << "\n";
        break;
      case VarKind::Integer:
        out << " LI bnd " << v.name << ' ' << num(v.lb) << "\n";
        if (!std::isinf(v.ub)) out << " UI bnd " << v.name << ' ' << num(v.ub) << "\n";
        break;
      case VarKind::Continuous:
        if (std::isinf(v.lb) && std::isinf(v.ub)) {
          out << " FR bnd " << v.name << "\n";
        } else {
          if (v.lb != 0.0 && !std::isinf(v.lb)) out << " LO bnd " << v.name << ' ' << num(v.lb) << "\n";
          if (std::isinf(v.lb)) out << " MI bnd " << v.name << "\n";
          if (!std::isinf(v.ub)) out << " UP bnd " << v.name << ' ' << num(v.ub) << "\n";
        }
        break;
    }
  }

  if (!model.indicators.empty()) {
    out << "INDICATORS\n";
    for (const IndicatorConstraint& c : model.indicators) {
      out << " IC " << c.row.name << ' '
          << model.variables[static_cast<std::size_t>(c.bin_var)].name << ' ' << c.bin_value
          << "\n";
    }
  }
  out << "ENDATA\n";
}

void export_mps(const MipModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write MPS file: " + path);
  write_mps(model, out);
}

// ---------------------------------------------------------------------------
// LP reader for the subset emitted by write_lp.

namespace {

struct LpParser {
  std::istream& in;
  MipModel model;
  std::map<std::string, int> var_index;
  // deferred kind/bound info
  std::map<std::string, std::pair<std::optional<double>, std::optional<double>>> bounds;
  std::map<std::string, VarKind> kinds;
  std::vector<std::string> free_vars;

  int var(const std::string& name) {
    auto it = var_index.find(name);
    if (it != var_index.end()) return it->second;
    int id = model.add_variable(name, VarKind::Continuous, 0.0, kInf);
    var_index.emplace(name, id);
    return id;
  }

  static bool is_number_start(const std::string& tok) {
    return !tok.empty() && (std::isdigit(static_cast<unsigned char>(tok[0])) || tok[0] == '.');
  }

  static double to_double(const std::string& tok) {
    double v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || p != tok.data() + tok.size())
      throw IoError("LP: invalid number '" + tok + "'");
    return v;
  }

  // splits a line into tokens; ':' '->' '<=' '>=' '=' '+' '-' become tokens
  static std::vector<std::string> lex(const std::string& line) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < line.size()) {
      char c = line[i];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++i;
        continue;
      }
      if (c == ':' || c == '+') {
        out.emplace_back(1, c);
        ++i;
      } else if (c == '-') {
        if (i + 1 < line.size() && line[i + 1] == '>') {
          out.emplace_back("->");
          i += 2;
        } else {
          out.emplace_back("-");
          ++i;
        }
      } else if (c == '<' || c == '>') {
        out.emplace_back(line.substr(i, 2));
        i += 2;
      } else if (c == '=') {
        out.emplace_back("=");
        ++i;
      } else {
        std::size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j])) &&
               std::string(":+<>=").find(line[j]) == std::string::npos &&
               !(line[j] == '-' && j + 1 < line.size() && line[j + 1] == '>'))
          ++j;
        out.push_back(line.substr(i, j - i));
        i = j;
      }
    }
    return out;
  }

  // parses "sign? coef? name ..." sequences plus an optional bare constant;
  // stops at a comparison operator, returning its index
  std::size_t parse_terms(const std::vector<std::string>& toks, std::size_t i,
                          std::vector<LinearTerm>& terms, double& constant) {
    double sign = 1.0;
    bool have_coef = false;
    double coef = 1.0;
    for (; i < toks.size(); ++i) {
      const std::string& t = toks[i];
      if (t == "<=" || t == ">=" || t == "=") break;
      if (t == "+") {
        sign = 1.0;
        have_coef = false;
        coef = 1.0;
      } else if (t == "-") {
        sign = -1.0;
        have_coef = false;
        coef = 1.0;
      } else if (is_number_start(t)) {
        if (have_coef) {  // previous number was a bare constant
          constant += sign * coef;
          sign = 1.0;
        }
        coef = to_double(t);
        have_coef = true;
      } else {
        terms.push_back({var(t), sign * coef});
        sign = 1.0;
        have_coef = false;
        coef = 1.0;
      }
    }
    if (have_coef) constant += sign * coef;
    return i;
  }

  void parse() {
    enum Section { None, Objective, Rows, BoundsSec, Bins, Gens, Done };
    Section section = None;
    std::string line;
    while (std::getline(in, line)) {
      auto slash = line.find('\\');
      if (slash != std::string::npos) line = line.substr(0, slash);
      std::string trimmed;
      {
        std::size_t a = line.find_first_not_of(" \t\r");
        if (a == std::string::npos) continue;
        std::size_t b = line.find_last_not_of(" \t\r");
        trimmed = line.substr(a, b - a + 1);
      }
      std::string lower;
      for (char c : trimmed) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      if (lower == "minimize" || lower == "min") {
        section = Objective;
        continue;
      }
      if (lower == "maximize" || lower == "max") throw IoError("LP: maximization unsupported");
      if (lower == "subject to" || lower == "st" || lower == "s.t.") {
        section = Rows;
        continue;
      }
      if (lower == "bounds") {
        section = BoundsSec;
        continue;
      }
      if (lower == "binaries" || lower == "binary") {
        section = Bins;
        continue;
      }
      if (lower == "generals" || lower == "general") {
        section = Gens;
        continue;
      }
      if (lower == "end") {
        section = Done;
        break;
      }

      std::vector<std::string> toks = lex(trimmed);
      if (toks.empty()) continue;
      switch (section) {
        case Objective: {
          std::size_t i = 0;
          if (toks.size() > 1 && toks[1] == ":") i = 2;  // strip "obj:"
          parse_terms(toks, i, model.objective, model.objective_constant);
          break;
        }
        case Rows:
          parse_row(toks);
          break;
        case BoundsSec:
          parse_bound(toks);
          break;
        case Bins:
          for (const auto& t : toks) {
            var(t);
            kinds[t] = VarKind::Binary;
          }
          break;
        case Gens:
          for (const auto& t : toks) {
            var(t);
            kinds[t] = VarKind::Integer;
          }
          break;
        default:
          throw IoError("LP: content outside any section: " + trimmed);
      }
    }
    finalize();
  }

  void parse_row(const std::vector<std::string>& toks) {
    std::size_t i = 0;
    std::string name;
    if (toks.size() > 1 && toks[1] == ":") {
      name = toks[0];
      i = 2;
    }
    // indicator form: bin = value -> terms op rhs
    for (std::size_t k = i; k + 1 < toks.size(); ++k) {
      if (toks[k] == "->") {
        if (!(k >= i + 2 && toks[i + 1] == "="))
          throw IoError("LP: malformed indicator constraint " + name);
        IndicatorConstraint ic;
        ic.bin_var = var(toks[i]);
        ic.bin_value = static_cast<int>(to_double(toks[k - 1]));
        ic.row.name = name;
        double constant = 0.0;
        std::size_t op_at = parse_terms(toks, k + 1, ic.row.terms, constant);
        if (op_at >= toks.size()) throw IoError("LP: missing comparison in " + name);
        ic.row.op = toks[op_at] == "<=" ? RowOp::LE : toks[op_at] == ">=" ? RowOp::GE : RowOp::EQ;
        std::size_t rhs_at = op_at + 1;
        double rhs_sign = 1.0;
        if (toks[rhs_at] == "-") {
          rhs_sign = -1.0;
          ++rhs_at;
        }
        ic.row.rhs = rhs_sign * to_double(toks[rhs_at]) - constant;
        model.add_indicator(std::move(ic));
        return;
      }
    }
    LinearConstraint c;
    c.name = name;
    double constant = 0.0;
    std::size_t op_at = parse_terms(toks, i, c.terms, constant);
    if (op_at >= toks.size()) throw IoError("LP: missing comparison in " + name);
    c.op = toks[op_at] == "<=" ? RowOp::LE : toks[op_at] == ">=" ? RowOp::GE : RowOp::EQ;
    std::size_t rhs_at = op_at + 1;
    double rhs_sign = 1.0;
    if (toks[rhs_at] == "-") {
      rhs_sign = -1.0;
      ++rhs_at;
    }
    c.rhs = rhs_sign * to_double(toks[rhs_at]) - constant;
    model.add_constraint(std::move(c));
  }

  void parse_bound(const std::vector<std::string>& toks) {
    // forms: "x free" | "lb <= x <= ub" | "x <= ub" | "x >= lb" | "x = v"
    if (toks.size() == 2 && toks[1] == "free") {
      var(toks[0]);
      free_vars.push_back(toks[0]);
      return;
    }
    auto signed_num = [&](std::size_t& i) {
      double sign = 1.0;
      if (toks[i] == "-") {
        sign = -1.0;
        ++i;
      }
      return sign * to_double(toks[i]);
    };
    std::size_t i = 0;
    if (toks[i] == "-" || is_number_start(toks[i])) {
      double lb = signed_num(i);
      ++i;
      if (toks[i] != "<=") throw IoError("LP: malformed bound line");
      const std::string name = toks[++i];
      var(name);
      bounds[name].first = lb;
      ++i;
      if (i < toks.size() && toks[i] == "<=") {
        ++i;
        bounds[name].second = signed_num(i);
      }
      return;
    }
    const std::string name = toks[0];
    var(name);
    std::size_t k = 1;
    if (toks[k] == "<=") {
      ++k;
      bounds[name].second = signed_num(k);
    } else if (toks[k] == ">=") {
      ++k;
      bounds[name].first = signed_num(k);
    } else if (toks[k] == "=") {
      ++k;
      double v = signed_num(k);
      bounds[name] = {v, v};
    } else {
      throw IoError("LP: malformed bound line for " + name);
    }
  }

  void finalize() {
    for (auto& v : model.variables) {
      auto kind_it = kinds.find(v.name);
      if (kind_it != kinds.end()) v.kind = kind_it->second;
      if (v.kind == VarKind::Binary) v.ub = 1.0;
      auto b = bounds.find(v.name);
      if (b != bounds.end()) {
        if (b->second.first) v.lb = *b->second.first;
        if (b->second.second) v.ub = *b->second.second;
      }
    }
    for (const std::string& name : free_vars) {
      Variable& v = model.variables[static_cast<std::size_t>(var_index.at(name))];
      v.lb = -kInf;
      v.ub = kInf;
    }
  }
};

}  // namespace

MipModel parse_lp(std::istream& in) {
  LpParser p{in};
  p.parse();
  return std::move(p.model);
}

MipModel parse_lp_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open LP file: " + path);
  return parse_lp(in);
}

}  // namespace ctg::mip
