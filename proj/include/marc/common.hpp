#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>

namespace marc {

// ---------------------------------------------------------------------------
// Errors

enum class Errc {
    EndpointUnreachable,
    BadResponse,
    ScriptMiss,
    TemplateError,
    NoAnswerLetter,
    NoQuestionsParsed,
    NoAnswersParsed,
    EmptyInput,
    BadScore,
    BadInput,
    DegenerateLabels,
    FormatError,
    InsufficientPool,
    CorruptRecords,
    IoError,
};

inline std::string_view errc_name(Errc c) {
    switch (c) {
        case Errc::EndpointUnreachable: return "EndpointUnreachable";
        case Errc::BadResponse:         return "BadResponse";
        case Errc::ScriptMiss:          return "ScriptMiss";
        case Errc::TemplateError:       return "TemplateError";
        case Errc::NoAnswerLetter:      return "NoAnswerLetter";
        case Errc::NoQuestionsParsed:   return "NoQuestionsParsed";
        case Errc::NoAnswersParsed:     return "NoAnswersParsed";
        case Errc::EmptyInput:          return "EmptyInput";
        case Errc::BadScore:            return "BadScore";
        case Errc::BadInput:            return "BadInput";
        case Errc::DegenerateLabels:    return "DegenerateLabels";
        case Errc::FormatError:         return "FormatError";
        case Errc::InsufficientPool:    return "InsufficientPool";
        case Errc::CorruptRecords:      return "CorruptRecords";
        case Errc::IoError:             return "IoError";
    }
    return "Unknown";
}

/// Toolkit error carrying a stable error code alongside the message.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& msg)
        : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}
    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& msg) { throw Error(code, msg); }

// ---------------------------------------------------------------------------
// Hashing

inline std::array<unsigned char, 32> sha256_bytes(std::string_view data) {
    std::array<unsigned char, 32> out{};
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr);
    return out;
}

inline std::string to_hex(const unsigned char* data, std::size_t n) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(n * 2);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(digits[data[i] >> 4]);
        out.push_back(digits[data[i] & 0x0f]);
    }
    return out;
}

inline std::string sha256_hex(std::string_view data) {
    auto bytes = sha256_bytes(data);
    return to_hex(bytes.data(), bytes.size());
}

/// First 8 bytes of SHA-256(data), big-endian. Stable across platforms.
inline std::uint64_t sha256_prefix64(std::string_view data) {
    auto bytes = sha256_bytes(data);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | bytes[static_cast<std::size_t>(i)];
    return v;
}

// ---------------------------------------------------------------------------
// Strings

inline std::string to_lower_ascii(std::string_view s) {
    std::string out(s);
    for (char& c : out)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return out;
}

inline std::string_view trim(std::string_view s) {
    const char* ws = " \t\r\n";
    auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_lines(std::string_view text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto nl = text.find('\n', start);
        if (nl == std::string_view::npos) {
            lines.emplace_back(text.substr(start));
            break;
        }
        std::string_view line = text.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.emplace_back(line);
        start = nl + 1;
    }
    return lines;
}

// ---------------------------------------------------------------------------
// Files

namespace fs = std::filesystem;

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(Errc::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Write via temp file + rename so readers never observe a partial file.
inline void write_file_atomic(const fs::path& path, std::string_view content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) raise(Errc::IoError, "cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) raise(Errc::IoError, "short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Deterministic randomness
//
// std::uniform_int_distribution is implementation-defined, so all sampling
// that must reproduce across platforms goes through these helpers.

inline std::uint64_t uniform_below(std::mt19937_64& gen, std::uint64_t n) {
    if (n == 0) raise(Errc::BadInput, "uniform_below(0)");
    const std::uint64_t limit =
        std::numeric_limits<std::uint64_t>::max() -
        std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v = gen();
    while (v >= limit) v = gen();
    return v % n;
}

template <typename T>
void deterministic_shuffle(std::vector<T>& items, std::mt19937_64& gen) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(uniform_below(gen, i));
        std::swap(items[i - 1], items[j]);
    }
}

/// k distinct indices drawn uniformly from [0, n), in draw order.
inline std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k,
                                               std::mt19937_64& gen) {
    if (k > n) raise(Errc::InsufficientPool, "sample larger than population");
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    std::vector<std::size_t> picked;
    picked.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t j = i + static_cast<std::size_t>(uniform_below(gen, n - i));
        std::swap(pool[i], pool[j]);
        picked.push_back(pool[i]);
    }
    return picked;
}

}  // namespace marc
