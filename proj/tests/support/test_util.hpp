#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include "marc/core.hpp"

namespace marc::test {

namespace fs = std::filesystem;

/// Fresh directory under the system temp root, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = fs::temp_directory_path() /
                ("marc_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter.fetch_add(1)));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

inline std::string random_string(std::mt19937_64& gen, std::size_t max_len,
                                 bool varied = true) {
    static const std::string plain =
        "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 ";
    static const std::string tricky = "\"\\\n\t{}[]:,./%é→";
    std::size_t len = gen() % (max_len + 1);
    std::string out;
    out.reserve(len);
    for (std::size_t i = 0; i < len; ++i) {
        if (varied && gen() % 8 == 0) {
            // multi-byte sequences appended whole to keep valid UTF-8
            std::size_t start = gen() % tricky.size();
            while (start > 0 && (tricky[start] & 0xC0) == 0x80) --start;
            std::size_t n = 1;
            while (start + n < tricky.size() && (tricky[start + n] & 0xC0) == 0x80) ++n;
            out.append(tricky, start, n);
        } else {
            out.push_back(plain[gen() % plain.size()]);
        }
    }
    return out;
}

inline double random_unit(std::mt19937_64& gen) {
    return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

inline QuestionRecord make_question(const std::string& id, AnswerLetter gold = AnswerLetter::B) {
    QuestionRecord q;
    q.id = id;
    q.stem = "A patient presents with findings relevant to " + id + ".";
    q.options = {"first option " + id, "second option " + id, "third option " + id,
                 "fourth option " + id};
    q.gold = gold;
    q.source = DatasetSource::Synthetic;
    return q;
}

}  // namespace marc::test
