#pragma once

// Line-oriented text format for controlled reaction networks.
//
//   species A00 A01 A10 A11 B
//   r1: A00 + B -> A10 , [0.75 : 1.25]
//   A10 -> A00 + B , 0.5
//   init A00 = 1, B = 1
//   partition { B } { A00 } { A01 A10 }
//
// Multisets are `0` or `[count] id (+ [count] id)*`; a scalar rate k means
// [k : k]. Species first seen in a reaction are registered in order of
// appearance. Species left out of every partition brace form one final block.

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ccrn/model.hpp"

namespace ccrn {

class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, std::size_t column, const std::string& message);
    [[nodiscard]] std::size_t line() const { return line_; }
    [[nodiscard]] std::size_t column() const { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

// A file could not be opened for reading or writing.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ModelDocument {
    Ccrn ccrn;
    std::optional<Partition> initial_partition;
    std::string source;  // path or "<memory>"
    /// 1-based source line of each reaction, parallel to ccrn.reactions().
    std::vector<std::size_t> reaction_lines;

    /// The stored partition, or the one-block partition when absent.
    [[nodiscard]] Partition partition_or_trivial() const;
};

[[nodiscard]] ModelDocument parse_model(std::string_view text, std::string source = "<memory>");
[[nodiscard]] ModelDocument load_model(const std::string& path);
[[nodiscard]] std::string serialize_model(const ModelDocument& doc);
void save_model(const ModelDocument& doc, const std::string& path);

/// Parses a standalone partition spec (`partition { a b } { c }`, may span
/// several lines) against the species of `net`.
[[nodiscard]] Partition parse_partition(std::string_view text, const Ccrn& net);
[[nodiscard]] std::string serialize_partition(const Partition& part, const Ccrn& net);

/// Shortest decimal text that reads back to the same double.
[[nodiscard]] std::string format_double(double x);

struct WeightedGraph {
    struct Edge {
        std::size_t src;
        std::size_t dst;
        double weight;
    };
    std::vector<std::string> nodes;  // labels in first-appearance order
    std::vector<Edge> edges;
};

/// Reads `src dst weight` lines; `#` starts a comment. With `undirected`
/// every edge is emitted in both directions with the same weight.
[[nodiscard]] WeightedGraph parse_edge_list(std::string_view text, bool undirected);

[[nodiscard]] std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

}  // namespace ccrn
