#include "artifacts.hpp"

#include <openssl/evp.h>

#include <array>
#include <iomanip>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace trbsde::cli {

namespace fs = std::filesystem;

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256: digest init failed");
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return hex.str();
}

ArtifactDir::ArtifactDir(fs::path dir) : dir_(std::move(dir)) {
    if (!fs::exists(dir_)) {
        fs::create_directories(dir_);
        created_ = true;
    } else if (!fs::is_directory(dir_)) {
        throw std::runtime_error("output path exists and is not a directory: " + dir_.string());
    }
}

std::ofstream ArtifactDir::open(const std::string& name) {
    std::ofstream out(dir_ / name);
    if (!out) throw std::runtime_error("cannot write " + (dir_ / name).string());
    files_.push_back(name);
    out << std::setprecision(17);
    return out;
}

void ArtifactDir::write_text(const std::string& name, const std::string& text) {
    std::ofstream out = open(name);
    out << text;
}

void ArtifactDir::discard() noexcept {
    std::error_code ec;
    for (const auto& f : files_) fs::remove(dir_ / f, ec);
    files_.clear();
    if (created_ && fs::is_empty(dir_, ec)) fs::remove(dir_, ec);
}

}  // namespace trbsde::cli
