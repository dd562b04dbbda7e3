#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace trbsde::cli {

/// Hex sha256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// Tracks every file written into an output directory so the run can list
/// them in the manifest, or delete them if the run fails.
class ArtifactDir {
public:
    explicit ArtifactDir(std::filesystem::path dir);

    const std::filesystem::path& dir() const { return dir_; }

    /// Opens `name` for writing and records it; numbers use 17 significant digits.
    std::ofstream open(const std::string& name);
    void write_text(const std::string& name, const std::string& text);

    const std::vector<std::string>& files() const { return files_; }

    /// Removes every recorded file, and the directory if this object created it and it is now empty.
    void discard() noexcept;

private:
    std::filesystem::path dir_;
    bool created_ = false;
    std::vector<std::string> files_;
};

}  // namespace trbsde::cli
