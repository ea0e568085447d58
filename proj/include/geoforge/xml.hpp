#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace geoforge::xml {

class ParseError : public std::runtime_error {
public:
    ParseError(std::string message, std::size_t line, std::size_t column)
        : std::runtime_error("XML parse error at " + std::to_string(line) + ":" +
                             std::to_string(column) + ": " + message),
          line_(line),
          column_(column) {}

    std::size_t line() const { return line_; }
    std::size_t column() const { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

struct Element;

// Mixed content is kept in document order: a child is either an element or a
// run of character data (entities already decoded).
using Node = std::variant<Element, std::string>;

struct Element {
    std::string name;
    std::vector<std::pair<std::string, std::string>> attributes;
    std::vector<Node> children;
    std::size_t line = 0;
    std::size_t column = 0;

    // Name without a namespace prefix ("tei:div" -> "div").
    std::string_view local_name() const;

    const std::string* attr(std::string_view attr_name) const;

    // Concatenated character data of the whole subtree.
    std::string text() const;

    const Element* first_child(std::string_view child_name) const;
    std::vector<const Element*> children_named(std::string_view child_name) const;
    std::vector<const Element*> child_elements() const;
};

// Non-validating parse of a complete document. Skips the XML declaration,
// comments, processing instructions, and DOCTYPE; decodes the five predefined
// entities and numeric character references. Throws ParseError on malformed
// input.
Element parse(std::string_view input);

// Total number of element nodes in the subtree, including the root element.
std::size_t count_elements(const Element& element);

}  // namespace geoforge::xml
