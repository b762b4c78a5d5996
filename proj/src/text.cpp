#include "qac/text.hpp"

#include <algorithm>
#include <unordered_set>

namespace qac::text {

namespace {

char lower_ascii(char c)
{
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

bool is_word_byte(unsigned char c)
{
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

std::string collapse(std::string_view s, bool keep_trailing)
{
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (char c : s) {
        if (is_space(c)) {
            pending_space = true;
            continue;
        }
        if (pending_space && !out.empty()) {
            out.push_back(' ');
        }
        pending_space = false;
        out.push_back(lower_ascii(c));
    }
    if (keep_trailing && pending_space && !out.empty()) {
        out.push_back(' ');
    }
    return out;
}

}  // namespace

bool is_space(char c)
{
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string normalize(std::string_view s) { return collapse(s, false); }

std::string normalize_prefix(std::string_view s) { return collapse(s, true); }

std::vector<std::size_t> codepoint_offsets(std::string_view s)
{
    std::vector<std::size_t> offsets;
    offsets.reserve(s.size() + 1);
    std::size_t i = 0;
    while (i < s.size()) {
        offsets.push_back(i);
        auto lead = static_cast<unsigned char>(s[i]);
        std::size_t len = 1;
        if (lead >= 0xF0 && lead < 0xF8) {
            len = 4;
        } else if (lead >= 0xE0) {
            len = lead < 0xF0 ? 3 : 1;
        } else if (lead >= 0xC0) {
            len = 2;
        }
        if (len > 1) {
            if (i + len > s.size()) {
                len = 1;
            } else {
                for (std::size_t k = 1; k < len; ++k) {
                    if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) {
                        len = 1;
                        break;
                    }
                }
            }
        }
        i += len;
    }
    offsets.push_back(s.size());
    return offsets;
}

std::vector<std::string> split_codepoints(std::string_view s)
{
    auto offsets = codepoint_offsets(s);
    std::vector<std::string> out;
    out.reserve(offsets.size() - 1);
    for (std::size_t i = 0; i + 1 < offsets.size(); ++i) {
        out.emplace_back(s.substr(offsets[i], offsets[i + 1] - offsets[i]));
    }
    return out;
}

std::size_t codepoint_count(std::string_view s) { return codepoint_offsets(s).size() - 1; }

std::vector<std::string> split_whitespace(std::string_view s)
{
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && is_space(s[i])) {
            ++i;
        }
        std::size_t j = i;
        while (j < s.size() && !is_space(s[j])) {
            ++j;
        }
        if (j > i) {
            out.emplace_back(s.substr(i, j - i));
        }
        i = j;
    }
    return out;
}

std::vector<std::string> words(std::string_view s)
{
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (is_word_byte(static_cast<unsigned char>(c))) {
            cur.push_back(lower_ascii(c));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) {
        out.push_back(std::move(cur));
    }
    return out;
}

std::vector<std::string> split_sentences(std::string_view body)
{
    std::vector<std::string> out;
    auto flush = [&](std::size_t from, std::size_t to) {
        auto sentence = body.substr(from, to - from);
        auto first = sentence.find_first_not_of(" \t\n\r\f\v");
        if (first == std::string_view::npos) {
            return;
        }
        auto last = sentence.find_last_not_of(" \t\n\r\f\v");
        out.emplace_back(sentence.substr(first, last - first + 1));
    };
    std::size_t start = 0;
    for (std::size_t i = 0; i < body.size(); ++i) {
        char c = body[i];
        if ((c == '.' || c == '?' || c == '!') && (i + 1 == body.size() || is_space(body[i + 1]))) {
            flush(start, i + 1);
            start = i + 1;
        }
    }
    if (start < body.size()) {
        flush(start, body.size());
    }
    return out;
}

const std::vector<std::string>& stopwords()
{
    static const std::vector<std::string> list = {
        "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "your",
        "yours", "yourself", "yourselves", "he", "him", "his", "himself", "she", "her", "hers",
        "herself", "it", "its", "itself", "they", "them", "their", "theirs", "themselves", "what",
        "which", "who", "whom", "this", "that", "these", "those", "am", "is", "are",
        "was", "were", "be", "been", "being", "have", "has", "had", "having", "do",
        "does", "did", "doing", "a", "an", "the", "and", "but", "if", "or",
        "because", "as", "until", "while", "of", "at", "by", "for", "with", "about",
        "against", "between", "into", "through", "during", "before", "after", "above", "below", "to",
        "from", "up", "down", "in", "out", "on", "off", "over", "under", "again",
        "further", "then", "once", "here", "there", "when", "where", "why", "how", "all",
        "any", "both", "each", "few", "more", "most", "other", "some", "such", "no",
        "nor", "not", "only", "own", "same", "so", "than", "too", "very", "s",
        "t", "can", "will", "just", "don", "should", "now",
    };
    return list;
}

bool is_stopword(std::string_view word)
{
    static const std::unordered_set<std::string_view> set = [] {
        std::unordered_set<std::string_view> s;
        for (const auto& w : stopwords()) {
            s.insert(w);
        }
        return s;
    }();
    return set.count(word) != 0;
}

bool starts_with(std::string_view s, std::string_view prefix)
{
    return s.size() >= prefix.size() && s.compare(0, prefix.size(), prefix) == 0;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep)
{
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i != 0) {
            out.append(sep);
        }
        out.append(parts[i]);
    }
    return out;
}

std::string escape_field(std::string_view s)
{
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
        case '\\': out += "\\\\"; break;
        case '\t': out += "\\t"; break;
        case '\n': out += "\\n"; break;
        case '\r': out += "\\r"; break;
        default: out.push_back(c);
        }
    }
    return out;
}

std::string unescape_field(std::string_view s)
{
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\' && i + 1 < s.size()) {
            char n = s[i + 1];
            switch (n) {
            case 't': out.push_back('\t'); ++i; continue;
            case 'n': out.push_back('\n'); ++i; continue;
            case 'r': out.push_back('\r'); ++i; continue;
            case '\\': out.push_back('\\'); ++i; continue;
            default: break;
            }
        }
        out.push_back(s[i]);
    }
    return out;
}

std::vector<std::string> split(std::string_view s, char sep)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        auto pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(s.substr(start));
            break;
        }
        out.emplace_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

}  // namespace qac::text
