#include "geoforge/xml.hpp"

#include <cctype>

namespace geoforge::xml {

std::string_view Element::local_name() const {
    std::string_view n = name;
    auto pos = n.rfind(':');
    return pos == std::string_view::npos ? n : n.substr(pos + 1);
}

const std::string* Element::attr(std::string_view attr_name) const {
    for (const auto& [key, value] : attributes) {
        if (key == attr_name) {
            return &value;
        }
    }
    return nullptr;
}

std::string Element::text() const {
    std::string out;
    for (const auto& child : children) {
        if (const auto* s = std::get_if<std::string>(&child)) {
            out += *s;
        } else {
            out += std::get<Element>(child).text();
        }
    }
    return out;
}

const Element* Element::first_child(std::string_view child_name) const {
    for (const auto& child : children) {
        if (const auto* e = std::get_if<Element>(&child)) {
            if (e->local_name() == child_name) {
                return e;
            }
        }
    }
    return nullptr;
}

std::vector<const Element*> Element::children_named(std::string_view child_name) const {
    std::vector<const Element*> out;
    for (const auto& child : children) {
        if (const auto* e = std::get_if<Element>(&child)) {
            if (e->local_name() == child_name) {
                out.push_back(e);
            }
        }
    }
    return out;
}

std::vector<const Element*> Element::child_elements() const {
    std::vector<const Element*> out;
    for (const auto& child : children) {
        if (const auto* e = std::get_if<Element>(&child)) {
            out.push_back(e);
        }
    }
    return out;
}

std::size_t count_elements(const Element& element) {
    std::size_t n = 1;
    for (const auto& child : element.children) {
        if (const auto* e = std::get_if<Element>(&child)) {
            n += count_elements(*e);
        }
    }
    return n;
}

namespace {

constexpr std::size_t kMaxDepth = 256;

class Parser {
public:
    explicit Parser(std::string_view input) : input_(input) {}

    Element parse_document() {
        skip_prolog();
        if (eof() || peek() != '<') {
            fail("expected root element");
        }
        Element root = parse_element(1);
        skip_misc();
        if (!eof()) {
            fail("content after root element");
        }
        return root;
    }

private:
    [[noreturn]] void fail(const std::string& message) const {
        throw ParseError(message, line_, column_);
    }

    bool eof() const { return pos_ >= input_.size(); }
    char peek() const { return input_[pos_]; }
    char peek_at(std::size_t off) const {
        return pos_ + off < input_.size() ? input_[pos_ + off] : '\0';
    }

    void advance() {
        if (input_[pos_] == '\n') {
            ++line_;
            column_ = 1;
        } else {
            ++column_;
        }
        ++pos_;
    }

    void advance_n(std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            advance();
        }
    }

    bool consume_literal(std::string_view lit) {
        if (input_.substr(pos_, lit.size()) != lit) {
            return false;
        }
        advance_n(lit.size());
        return true;
    }

    void skip_ws() {
        while (!eof() && std::isspace(static_cast<unsigned char>(peek()))) {
            advance();
        }
    }

    // XML declaration, comments, PIs and DOCTYPE before the root element.
    void skip_prolog() {
        while (true) {
            skip_ws();
            if (eof() || peek() != '<') {
                return;
            }
            char next = peek_at(1);
            if (next == '?') {
                skip_until("?>");
            } else if (next == '!') {
                if (input_.substr(pos_, 4) == "<!--") {
                    skip_until("-->");
                } else {
                    skip_doctype();
                }
            } else {
                return;
            }
        }
    }

    void skip_misc() {
        while (true) {
            skip_ws();
            if (eof()) {
                return;
            }
            if (peek() == '<' && peek_at(1) == '!') {
                skip_until("-->");
            } else if (peek() == '<' && peek_at(1) == '?') {
                skip_until("?>");
            } else {
                return;
            }
        }
    }

    void skip_until(std::string_view terminator) {
        while (!eof()) {
            if (input_.substr(pos_, terminator.size()) == terminator) {
                advance_n(terminator.size());
                return;
            }
            advance();
        }
        fail("unterminated construct, expected '" + std::string(terminator) + "'");
    }

    // DOCTYPE may carry a bracketed internal subset.
    void skip_doctype() {
        int bracket = 0;
        while (!eof()) {
            char c = peek();
            if (c == '[') {
                ++bracket;
            } else if (c == ']') {
                --bracket;
            } else if (c == '>' && bracket <= 0) {
                advance();
                return;
            }
            advance();
        }
        fail("unterminated DOCTYPE");
    }

    static bool is_name_start(char c) {
        return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == ':';
    }

    static bool is_name_char(char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == ':' || c == '-' ||
               c == '.';
    }

    std::string parse_name() {
        if (eof() || !is_name_start(peek())) {
            fail("expected name");
        }
        std::size_t start = pos_;
        while (!eof() && is_name_char(peek())) {
            advance();
        }
        return std::string(input_.substr(start, pos_ - start));
    }

    void append_entity(std::string& out) {
        // positioned on '&'
        std::size_t amp_line = line_;
        std::size_t amp_col = column_;
        advance();
        std::size_t start = pos_;
        while (!eof() && peek() != ';' && pos_ - start < 16) {
            advance();
        }
        if (eof() || peek() != ';') {
            throw ParseError("unterminated entity reference", amp_line, amp_col);
        }
        std::string_view entity = input_.substr(start, pos_ - start);
        advance();  // ';'
        if (entity == "amp") {
            out.push_back('&');
        } else if (entity == "lt") {
            out.push_back('<');
        } else if (entity == "gt") {
            out.push_back('>');
        } else if (entity == "quot") {
            out.push_back('"');
        } else if (entity == "apos") {
            out.push_back('\'');
        } else if (!entity.empty() && entity[0] == '#') {
            append_char_ref(entity, out, amp_line, amp_col);
        } else {
            throw ParseError("unknown entity '&" + std::string(entity) + ";'", amp_line, amp_col);
        }
    }

    void append_char_ref(std::string_view entity, std::string& out, std::size_t err_line,
                         std::size_t err_col) {
        std::uint32_t code = 0;
        bool ok = entity.size() > 1;
        if (ok && (entity[1] == 'x' || entity[1] == 'X')) {
            ok = entity.size() > 2;
            for (std::size_t i = 2; ok && i < entity.size(); ++i) {
                char c = entity[i];
                code <<= 4;
                if (c >= '0' && c <= '9') {
                    code += static_cast<std::uint32_t>(c - '0');
                } else if (c >= 'a' && c <= 'f') {
                    code += static_cast<std::uint32_t>(c - 'a' + 10);
                } else if (c >= 'A' && c <= 'F') {
                    code += static_cast<std::uint32_t>(c - 'A' + 10);
                } else {
                    ok = false;
                }
            }
        } else {
            for (std::size_t i = 1; ok && i < entity.size(); ++i) {
                char c = entity[i];
                if (c < '0' || c > '9') {
                    ok = false;
                    break;
                }
                code = code * 10 + static_cast<std::uint32_t>(c - '0');
            }
        }
        if (!ok || code == 0 || code > 0x10FFFF) {
            throw ParseError("bad character reference", err_line, err_col);
        }
        if (code <= 0x7F) {
            out.push_back(static_cast<char>(code));
        } else if (code <= 0x7FF) {
            out.push_back(static_cast<char>(0xC0 | (code >> 6)));
            out.push_back(static_cast<char>(0x80 | (code & 0x3F)));
        } else if (code <= 0xFFFF) {
            out.push_back(static_cast<char>(0xE0 | (code >> 12)));
            out.push_back(static_cast<char>(0x80 | ((code >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (code & 0x3F)));
        } else {
            out.push_back(static_cast<char>(0xF0 | (code >> 18)));
            out.push_back(static_cast<char>(0x80 | ((code >> 12) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | ((code >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (code & 0x3F)));
        }
    }

    std::string parse_attr_value() {
        if (eof() || (peek() != '"' && peek() != '\'')) {
            fail("expected attribute value");
        }
        char quote = peek();
        advance();
        std::string out;
        while (!eof() && peek() != quote) {
            if (peek() == '&') {
                append_entity(out);
            } else if (peek() == '<') {
                fail("'<' in attribute value");
            } else {
                out.push_back(peek());
                advance();
            }
        }
        if (eof()) {
            fail("unterminated attribute value");
        }
        advance();  // closing quote
        return out;
    }

    Element parse_element(std::size_t depth) {
        if (depth > kMaxDepth) {
            fail("element nesting too deep");
        }
        Element element;
        element.line = line_;
        element.column = column_;
        advance();  // '<'
        element.name = parse_name();
        while (true) {
            skip_ws();
            if (eof()) {
                fail("unterminated start tag for <" + element.name + ">");
            }
            if (peek() == '/') {
                advance();
                if (eof() || peek() != '>') {
                    fail("malformed empty-element tag");
                }
                advance();
                return element;
            }
            if (peek() == '>') {
                advance();
                break;
            }
            std::string attr_name = parse_name();
            skip_ws();
            if (eof() || peek() != '=') {
                fail("expected '=' after attribute name '" + attr_name + "'");
            }
            advance();
            skip_ws();
            element.attributes.emplace_back(std::move(attr_name), parse_attr_value());
        }
        parse_content(element, depth);
        return element;
    }

    void parse_content(Element& element, std::size_t depth) {
        std::string text;
        auto flush_text = [&]() {
            if (!text.empty()) {
                element.children.emplace_back(std::move(text));
                text.clear();
            }
        };
        while (true) {
            if (eof()) {
                fail("unexpected end of input inside <" + element.name + ">");
            }
            char c = peek();
            if (c == '<') {
                char next = peek_at(1);
                if (next == '/') {
                    flush_text();
                    advance_n(2);
                    std::string closing = parse_name();
                    if (closing != element.name) {
                        fail("mismatched closing tag </" + closing + "> for <" + element.name +
                             ">");
                    }
                    skip_ws();
                    if (eof() || peek() != '>') {
                        fail("malformed closing tag");
                    }
                    advance();
                    return;
                }
                if (next == '!') {
                    if (input_.substr(pos_, 4) == "<!--") {
                        skip_until("-->");
                    } else if (input_.substr(pos_, 9) == "<![CDATA[") {
                        advance_n(9);
                        std::size_t start = pos_;
                        while (!eof() && input_.substr(pos_, 3) != "]]>") {
                            advance();
                        }
                        if (eof()) {
                            fail("unterminated CDATA section");
                        }
                        text.append(input_.substr(start, pos_ - start));
                        advance_n(3);
                    } else {
                        fail("unsupported markup declaration");
                    }
                } else if (next == '?') {
                    skip_until("?>");
                } else {
                    flush_text();
                    element.children.emplace_back(parse_element(depth + 1));
                }
            } else if (c == '&') {
                append_entity(text);
            } else {
                text.push_back(c);
                advance();
            }
        }
    }

    std::string_view input_;
    std::size_t pos_ = 0;
    std::size_t line_ = 1;
    std::size_t column_ = 1;
};

}  // namespace

Element parse(std::string_view input) {
    Parser parser(input);
    return parser.parse_document();
}

}  // namespace geoforge::xml
