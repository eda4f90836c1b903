#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include "miwv/dataset.hpp"
#include "miwv/json_text.hpp"

namespace testing {

inline std::filesystem::path fixtures() { return MIWV_FIXTURES; }

inline std::string fixture_text(const std::string& name) {
    return miwv::read_file(fixtures() / name);
}

inline miwv::Dataset fixture20() {
    return miwv::load_dataset(fixtures() / "fixture20.jsonl", miwv::SourceFormat::GenericJsonl);
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("miwv-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

// Runs the CLI with stdout and stderr discarded; returns its exit status.
inline int run_cli(const std::string& args) {
    const std::string cmd = std::string("\"") + MIWV_CLI + "\" " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace testing
