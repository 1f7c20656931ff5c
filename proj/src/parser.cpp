#include "ccrn/parser.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace ccrn {

ParseError::ParseError(std::size_t line, std::size_t column, const std::string& message)
    : std::runtime_error(std::to_string(line) + ":" + std::to_string(column) + ": " + message),
      line_(line),
      column_(column) {}

Partition ModelDocument::partition_or_trivial() const {
    return initial_partition ? *initial_partition : Partition::trivial(ccrn.num_species());
}

std::string format_double(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

namespace {

enum class Tok { ident, number, plus, arrow, comma, lbracket, rbracket, colon, lbrace, rbrace, equals, end };

struct Token {
    Tok kind;
    std::string_view text;
    std::size_t column;  // 1-based
};

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
bool digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

std::vector<Token> tokenize(std::string_view line, std::size_t lineno) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < line.size()) {
        const char c = line[i];
        if (c == ' ' || c == '\t') {
            ++i;
            continue;
        }
        if (c == '#') break;
        const std::size_t col = i + 1;
        if (ident_start(c)) {
            std::size_t j = i + 1;
            while (j < line.size() && ident_char(line[j])) ++j;
            out.push_back({Tok::ident, line.substr(i, j - i), col});
            i = j;
            continue;
        }
        const bool signed_number =
            c == '-' && i + 1 < line.size() && (digit(line[i + 1]) || line[i + 1] == '.');
        if (digit(c) || c == '.' || signed_number) {
            std::size_t j = i + 1;
            while (j < line.size() && (digit(line[j]) || line[j] == '.')) ++j;
            if (j < line.size() && (line[j] == 'e' || line[j] == 'E')) {
                std::size_t k = j + 1;
                if (k < line.size() && (line[k] == '+' || line[k] == '-')) ++k;
                if (k < line.size() && digit(line[k])) {
                    j = k;
                    while (j < line.size() && digit(line[j])) ++j;
                }
            }
            out.push_back({Tok::number, line.substr(i, j - i), col});
            i = j;
            continue;
        }
        if (c == '-' && i + 1 < line.size() && line[i + 1] == '>') {
            out.push_back({Tok::arrow, line.substr(i, 2), col});
            i += 2;
            continue;
        }
        Tok k;
        switch (c) {
            case '+': k = Tok::plus; break;
            case ',': k = Tok::comma; break;
            case '[': k = Tok::lbracket; break;
            case ']': k = Tok::rbracket; break;
            case ':': k = Tok::colon; break;
            case '{': k = Tok::lbrace; break;
            case '}': k = Tok::rbrace; break;
            case '=': k = Tok::equals; break;
            default:
                throw ParseError(lineno, col, std::string("unexpected character '") + c + "'");
        }
        out.push_back({k, line.substr(i, 1), col});
        ++i;
    }
    out.push_back({Tok::end, {}, line.size() + 1});
    return out;
}

class LineParser {
public:
    LineParser(std::vector<Token> toks, std::size_t lineno) : toks_(std::move(toks)), line_(lineno) {}

    const Token& peek(std::size_t ahead = 0) const {
        return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
    }
    const Token& next() {
        const Token& t = toks_[pos_];
        if (pos_ + 1 < toks_.size()) ++pos_;
        return t;
    }
    bool accept(Tok k) {
        if (peek().kind != k) return false;
        next();
        return true;
    }
    const Token& expect(Tok k, const char* what) {
        if (peek().kind != k) fail(peek(), std::string("expected ") + what);
        return next();
    }
    [[noreturn]] void fail(const Token& at, const std::string& msg) const {
        throw ParseError(line_, at.column, msg);
    }
    double number(const Token& t) const {
        double v = 0.0;
        auto res = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
        if (res.ec != std::errc() || res.ptr != t.text.data() + t.text.size() || !std::isfinite(v))
            fail(t, "malformed number '" + std::string(t.text) + "'");
        return v;
    }
    std::size_t line() const { return line_; }

private:
    std::vector<Token> toks_;
    std::size_t pos_ = 0;
    std::size_t line_;
};

struct PendingName {
    std::string name;
    std::size_t line;
    std::size_t column;
};

Multiset parse_multiset(LineParser& p, Ccrn& net) {
    const Token& first = p.peek();
    if (first.kind == Tok::number && first.text == "0" && p.peek(1).kind != Tok::ident) {
        p.next();
        return {};
    }
    std::vector<Multiset::Entry> entries;
    do {
        std::uint32_t count = 1;
        if (p.peek().kind == Tok::number) {
            const Token& t = p.next();
            unsigned long long c = 0;
            auto res = std::from_chars(t.text.data(), t.text.data() + t.text.size(), c);
            if (res.ec != std::errc() || res.ptr != t.text.data() + t.text.size() || c == 0 ||
                c > 1000000)
                p.fail(t, "stoichiometric count must be a positive integer");
            count = static_cast<std::uint32_t>(c);
        }
        const Token& id = p.expect(Tok::ident, "species identifier");
        entries.emplace_back(net.intern(id.text), count);
    } while (p.accept(Tok::plus));
    return Multiset(std::move(entries));
}

RateInterval parse_rate(LineParser& p) {
    auto checked = [&](const Token& t) {
        double v = p.number(t);
        if (v < 0.0) p.fail(t, "negative rate");
        return v;
    };
    if (p.accept(Tok::lbracket)) {
        const Token& lo_t = p.expect(Tok::number, "lower rate bound");
        double lo = checked(lo_t);
        p.expect(Tok::colon, "':' in rate interval");
        double hi = checked(p.expect(Tok::number, "upper rate bound"));
        p.expect(Tok::rbracket, "']'");
        if (lo > hi) p.fail(lo_t, "rate interval with lo > hi");
        return {lo, hi};
    }
    double k = checked(p.expect(Tok::number, "rate"));
    return RateInterval::point(k);
}

std::vector<std::vector<PendingName>> parse_partition_line(LineParser& p) {
    std::vector<std::vector<PendingName>> blocks;
    while (p.peek().kind == Tok::lbrace) {
        p.next();
        std::vector<PendingName> blk;
        while (p.peek().kind == Tok::ident) {
            const Token& t = p.next();
            blk.push_back({std::string(t.text), p.line(), t.column});
        }
        if (blk.empty()) p.fail(p.peek(), "empty partition block");
        p.expect(Tok::rbrace, "'}'");
        blocks.push_back(std::move(blk));
    }
    if (p.peek().kind != Tok::end) p.fail(p.peek(), "expected '{' or end of line");
    return blocks;
}

Partition resolve_partition(const std::vector<std::vector<PendingName>>& pending, const Ccrn& net) {
    const auto n = net.num_species();
    std::vector<bool> seen(n, false);
    std::vector<std::vector<SpeciesIndex>> blocks;
    for (const auto& pb : pending) {
        std::vector<SpeciesIndex> blk;
        for (const auto& nm : pb) {
            auto idx = net.find(nm.name);
            if (!idx) throw ParseError(nm.line, nm.column, "unknown species '" + nm.name + "' in partition");
            if (seen[*idx])
                throw ParseError(nm.line, nm.column, "species '" + nm.name + "' in two partition blocks");
            seen[*idx] = true;
            blk.push_back(*idx);
        }
        blocks.push_back(std::move(blk));
    }
    std::vector<SpeciesIndex> rest;
    for (SpeciesIndex s = 0; s < n; ++s)
        if (!seen[s]) rest.push_back(s);
    if (!rest.empty()) blocks.push_back(std::move(rest));
    return Partition(n, std::move(blocks));
}

template <class F>
void for_each_line(std::string_view text, F&& f) {
    std::size_t lineno = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        auto line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        ++lineno;
        f(line, lineno);
        if (end == text.size()) break;
        start = end + 1;
    }
}

}  // namespace

ModelDocument parse_model(std::string_view text, std::string source) {
    ModelDocument doc;
    doc.source = std::move(source);
    Ccrn& net = doc.ccrn;
    std::unordered_set<std::string> declared;
    std::vector<std::vector<PendingName>> pending_partition;
    bool have_partition = false;
    struct PendingInit {
        PendingName name;
        double value;
    };
    std::vector<PendingInit> pending_init;
    bool have_init = false;

    for_each_line(text, [&](std::string_view line, std::size_t lineno) {
        LineParser p(tokenize(line, lineno), lineno);
        const Token& head = p.peek();
        if (head.kind == Tok::end) return;
        if (head.kind == Tok::ident && head.text == "species" && p.peek(1).kind != Tok::colon &&
            p.peek(1).kind != Tok::plus && p.peek(1).kind != Tok::arrow) {
            p.next();
            while (p.peek().kind == Tok::ident) {
                const Token& t = p.next();
                std::string nm(t.text);
                if (declared.contains(nm) || net.find(nm))
                    p.fail(t, "duplicate species declaration '" + nm + "'");
                declared.insert(nm);
                net.add_species(nm);
            }
            if (p.peek().kind != Tok::end) p.fail(p.peek(), "expected species identifier");
            return;
        }
        if (head.kind == Tok::ident && head.text == "partition" && p.peek(1).kind == Tok::lbrace) {
            if (have_partition) p.fail(head, "duplicate partition line");
            have_partition = true;
            p.next();
            pending_partition = parse_partition_line(p);
            return;
        }
        if (head.kind == Tok::ident && head.text == "init" && p.peek(1).kind == Tok::ident &&
            p.peek(2).kind == Tok::equals) {
            have_init = true;
            p.next();
            do {
                const Token& id = p.expect(Tok::ident, "species identifier");
                p.expect(Tok::equals, "'='");
                const Token& v = p.expect(Tok::number, "initial value");
                double x = p.number(v);
                if (x < 0.0) p.fail(v, "negative initial value");
                pending_init.push_back({{std::string(id.text), lineno, id.column}, x});
            } while (p.accept(Tok::comma));
            if (p.peek().kind != Tok::end) p.fail(p.peek(), "expected ',' or end of line");
            return;
        }
        std::string label;
        if (head.kind == Tok::ident && p.peek(1).kind == Tok::colon) {
            label = std::string(head.text);
            p.next();
            p.next();
        }
        Multiset reactant = parse_multiset(p, net);
        p.expect(Tok::arrow, "'->'");
        Multiset product = parse_multiset(p, net);
        p.expect(Tok::comma, "',' before rate");
        RateInterval rate = parse_rate(p);
        if (p.peek().kind != Tok::end) p.fail(p.peek(), "trailing input after rate");
        net.add_reaction(std::move(reactant), std::move(product), rate, std::move(label));
        doc.reaction_lines.push_back(lineno);
    });

    if (have_init) {
        net.initial.assign(net.num_species(), 0.0);
        for (const auto& pi : pending_init) {
            auto idx = net.find(pi.name.name);
            if (!idx)
                throw ParseError(pi.name.line, pi.name.column,
                                 "unknown species '" + pi.name.name + "' in init");
            net.initial[*idx] = pi.value;
        }
    }
    if (have_partition) doc.initial_partition = resolve_partition(pending_partition, net);
    return doc;
}

ModelDocument load_model(const std::string& path) { return parse_model(read_file(path), path); }

std::string serialize_partition(const Partition& part, const Ccrn& net) {
    std::string out = "partition";
    for (const auto& blk : part.blocks()) {
        out += " {";
        for (auto s : blk) {
            out += ' ';
            out += net.name(s);
        }
        out += " }";
    }
    out += '\n';
    return out;
}

std::string serialize_model(const ModelDocument& doc) {
    const Ccrn& net = doc.ccrn;
    std::string out = "species";
    for (const auto& sp : net.species()) {
        out += ' ';
        out += sp.name;
    }
    out += '\n';
    for (const auto& r : net.reactions()) {
        if (!r.label.empty()) out += r.label + ": ";
        out += to_string(r.reactant, net);
        out += " -> ";
        out += to_string(r.product, net);
        out += " , ";
        if (r.rate.degenerate())
            out += format_double(r.rate.lo);
        else
            out += "[" + format_double(r.rate.lo) + " : " + format_double(r.rate.hi) + "]";
        out += '\n';
    }
    if (!net.initial.empty() && net.num_species() > 0) {
        bool any_nonzero = false;
        for (double x : net.initial) any_nonzero |= x != 0.0;
        std::string line = "init";
        bool first = true;
        for (std::size_t i = 0; i < net.num_species(); ++i) {
            if (any_nonzero && net.initial[i] == 0.0) continue;
            line += first ? " " : ", ";
            first = false;
            line += net.name(static_cast<SpeciesIndex>(i)) + " = " + format_double(net.initial[i]);
        }
        out += line + '\n';
    }
    if (doc.initial_partition) out += serialize_partition(*doc.initial_partition, net);
    return out;
}

void save_model(const ModelDocument& doc, const std::string& path) { write_file(path, serialize_model(doc)); }

Partition parse_partition(std::string_view text, const Ccrn& net) {
    std::vector<std::vector<PendingName>> pending;
    bool seen_keyword = false;
    for_each_line(text, [&](std::string_view line, std::size_t lineno) {
        LineParser p(tokenize(line, lineno), lineno);
        if (p.peek().kind == Tok::end) return;
        if (p.peek().kind == Tok::ident && p.peek().text == "partition") {
            p.next();
            seen_keyword = true;
        } else if (!seen_keyword) {
            p.fail(p.peek(), "expected 'partition'");
        }
        auto blocks = parse_partition_line(p);
        for (auto& b : blocks) pending.push_back(std::move(b));
    });
    return resolve_partition(pending, net);
}

WeightedGraph parse_edge_list(std::string_view text, bool undirected) {
    WeightedGraph g;
    std::unordered_map<std::string, std::size_t> ids;
    auto node = [&](std::string_view label) {
        auto [it, fresh] = ids.try_emplace(std::string(label), g.nodes.size());
        if (fresh) g.nodes.emplace_back(label);
        return it->second;
    };
    for_each_line(text, [&](std::string_view line, std::size_t lineno) {
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        std::vector<std::pair<std::string_view, std::size_t>> fields;
        std::size_t i = 0;
        while (i < line.size()) {
            while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
            if (i >= line.size()) break;
            std::size_t j = i;
            while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
            fields.emplace_back(line.substr(i, j - i), i + 1);
            i = j;
        }
        if (fields.empty()) return;
        if (fields.size() != 3)
            throw ParseError(lineno, fields.front().second, "expected 'src dst weight'");
        const auto& [wtext, wcol] = fields[2];
        double w = 0.0;
        auto res = std::from_chars(wtext.data(), wtext.data() + wtext.size(), w);
        if (res.ec != std::errc() || res.ptr != wtext.data() + wtext.size() || !std::isfinite(w))
            throw ParseError(lineno, wcol, "non-numeric weight '" + std::string(wtext) + "'");
        if (w < 0.0) throw ParseError(lineno, wcol, "negative weight");
        const auto s = node(fields[0].first);
        const auto d = node(fields[1].first);
        g.edges.push_back({s, d, w});
        if (undirected) g.edges.push_back({d, s, w});
    });
    return g;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

}  // namespace ccrn
