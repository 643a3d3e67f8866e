#include "llgs/toml_lite.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "llgs/common.hpp"

namespace llgs {

namespace {

class TomlParser {
 public:
  explicit TomlParser(const std::string& text) : s_(text) {}

  nlohmann::json parse() {
    root_ = nlohmann::json::object();
    current_ = &root_;
    while (true) {
      skip_blank(true);
      if (pos_ >= s_.size()) break;
      if (s_[pos_] == '[')
        parse_table_header();
      else
        parse_key_value();
    }
    return root_;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    size_t line = 1;
    for (size_t i = 0; i < pos_ && i < s_.size(); ++i)
      if (s_[i] == '\n') ++line;
    throw DataError("toml parse error at line " + std::to_string(line) + ": " + msg);
  }

  void skip_inline_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  // Whitespace, optionally including newlines; comments always skipped.
  void skip_blank(bool newlines) {
    while (pos_ < s_.size()) {
      char c = s_[pos_];
      if (c == ' ' || c == '\t' || c == '\r') {
        ++pos_;
      } else if (c == '\n' && newlines) {
        ++pos_;
      } else if (c == '#') {
        while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::string parse_bare_key() {
    size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) ||
                                s_[pos_] == '_' || s_[pos_] == '-'))
      ++pos_;
    if (pos_ == start) fail("expected key");
    return s_.substr(start, pos_ - start);
  }

  std::vector<std::string> parse_key_path() {
    std::vector<std::string> path;
    while (true) {
      skip_inline_ws();
      path.push_back(parse_bare_key());
      skip_inline_ws();
      if (pos_ < s_.size() && s_[pos_] == '.') {
        ++pos_;
        continue;
      }
      break;
    }
    return path;
  }

  void parse_table_header() {
    bool array_table = pos_ + 1 < s_.size() && s_[pos_ + 1] == '[';
    pos_ += array_table ? 2 : 1;
    std::vector<std::string> path = parse_key_path();
    skip_inline_ws();
    if (array_table) {
      if (pos_ + 1 >= s_.size() || s_[pos_] != ']' || s_[pos_ + 1] != ']')
        fail("expected ']]'");
      pos_ += 2;
    } else {
      if (pos_ >= s_.size() || s_[pos_] != ']') fail("expected ']'");
      ++pos_;
    }

    nlohmann::json* node = &root_;
    for (size_t i = 0; i < path.size(); ++i) {
      bool last = i + 1 == path.size();
      if (last && array_table) {
        if (!node->contains(path[i])) (*node)[path[i]] = nlohmann::json::array();
        if (!(*node)[path[i]].is_array()) fail("'" + path[i] + "' is not an array of tables");
        (*node)[path[i]].push_back(nlohmann::json::object());
        node = &(*node)[path[i]].back();
      } else {
        if (!node->contains(path[i])) (*node)[path[i]] = nlohmann::json::object();
        nlohmann::json& next = (*node)[path[i]];
        if (next.is_array()) {
          if (next.empty()) fail("empty array of tables '" + path[i] + "'");
          node = &next.back();
        } else if (next.is_object()) {
          node = &next;
        } else {
          fail("'" + path[i] + "' is not a table");
        }
      }
    }
    current_ = node;
  }

  void parse_key_value() {
    std::vector<std::string> path = parse_key_path();
    skip_inline_ws();
    if (pos_ >= s_.size() || s_[pos_] != '=') fail("expected '='");
    ++pos_;
    skip_inline_ws();
    nlohmann::json value = parse_value();

    nlohmann::json* node = current_;
    for (size_t i = 0; i + 1 < path.size(); ++i) {
      if (!node->contains(path[i])) (*node)[path[i]] = nlohmann::json::object();
      node = &(*node)[path[i]];
      if (!node->is_object()) fail("'" + path[i] + "' is not a table");
    }
    if (node->contains(path.back())) fail("duplicate key '" + path.back() + "'");
    (*node)[path.back()] = std::move(value);

    skip_inline_ws();
    if (pos_ < s_.size() && s_[pos_] == '#')
      while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
    if (pos_ < s_.size() && s_[pos_] != '\n') fail("trailing content after value");
  }

  nlohmann::json parse_value() {
    if (pos_ >= s_.size()) fail("expected value");
    char c = s_[pos_];
    if (c == '"') return parse_string();
    if (c == '[') return parse_array();
    if (std::isalpha(static_cast<unsigned char>(c))) {
      std::string w = parse_bare_key();
      if (w == "true") return true;
      if (w == "false") return false;
      fail("unknown literal '" + w + "'");
    }
    return parse_number();
  }

  nlohmann::json parse_string() {
    ++pos_;  // opening quote
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      char c = s_[pos_++];
      if (c == '\\') {
        if (pos_ >= s_.size()) fail("unterminated escape");
        char e = s_[pos_++];
        switch (e) {
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          case 'r': out += '\r'; break;
          case '"': out += '"'; break;
          case '\\': out += '\\'; break;
          default: fail(std::string("unsupported escape '\\") + e + "'");
        }
      } else if (c == '\n') {
        fail("newline in string");
      } else {
        out += c;
      }
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;  // closing quote
    return out;
  }

  nlohmann::json parse_array() {
    ++pos_;  // '['
    nlohmann::json arr = nlohmann::json::array();
    while (true) {
      skip_blank(true);
      if (pos_ >= s_.size()) fail("unterminated array");
      if (s_[pos_] == ']') {
        ++pos_;
        break;
      }
      arr.push_back(parse_value());
      skip_blank(true);
      if (pos_ < s_.size() && s_[pos_] == ',') {
        ++pos_;
        continue;
      }
      skip_blank(true);
      if (pos_ < s_.size() && s_[pos_] == ']') {
        ++pos_;
        break;
      }
      fail("expected ',' or ']' in array");
    }
    return arr;
  }

  nlohmann::json parse_number() {
    size_t start = pos_;
    bool is_float = false;
    if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
    while (pos_ < s_.size()) {
      char c = s_[pos_];
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '_') {
        ++pos_;
      } else if (c == '.' || c == 'e' || c == 'E') {
        is_float = true;
        ++pos_;
        if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
      } else {
        break;
      }
    }
    if (pos_ == start) fail("expected number");
    std::string num = s_.substr(start, pos_ - start);
    num.erase(std::remove(num.begin(), num.end(), '_'), num.end());
    try {
      if (is_float) return std::stod(num);
      return static_cast<int64_t>(std::stoll(num));
    } catch (const std::exception&) {
      fail("invalid number '" + num + "'");
    }
  }

  const std::string& s_;
  size_t pos_ = 0;
  nlohmann::json root_;
  nlohmann::json* current_ = nullptr;
};

}  // namespace

nlohmann::json toml_parse(const std::string& text) { return TomlParser(text).parse(); }

nlohmann::json toml_parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return toml_parse(ss.str());
}

}  // namespace llgs
