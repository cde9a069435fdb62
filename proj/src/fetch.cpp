#include "metareg/fetch.hpp"

#include <curl/curl.h>
#include <openssl/evp.h>
#include <zlib.h>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <vector>

#include "metareg/errors.hpp"

namespace metareg {

namespace fs = std::filesystem;

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("sha256_file: cannot open '" + path + "'");
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw IoError("sha256_file: digest init failed");
    }
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        const auto got = in.gcount();
        if (got > 0 && EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(got)) != 1) {
            EVP_MD_CTX_free(ctx);
            throw IoError("sha256_file: digest update failed");
        }
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    const int ok = EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    if (ok != 1) throw IoError("sha256_file: digest final failed");
    std::string hex(2 * len, '0');
    static const char* kDigits = "0123456789abcdef";
    for (unsigned int i = 0; i < len; ++i) {
        hex[2 * i] = kDigits[digest[i] >> 4];
        hex[2 * i + 1] = kDigits[digest[i] & 0xf];
    }
    return hex;
}

namespace {

// --- zip reading ------------------------------------------------------------

constexpr std::uint32_t kEocdSig = 0x06054b50;
constexpr std::uint32_t kCentralSig = 0x02014b50;
constexpr std::uint32_t kLocalSig = 0x04034b50;

std::uint32_t rd32(const std::vector<unsigned char>& b, std::size_t off, const std::string& p) {
    if (off + 4 > b.size()) throw IoError("extract_zip: truncated archive '" + p + "'");
    return static_cast<std::uint32_t>(b[off]) | static_cast<std::uint32_t>(b[off + 1]) << 8 |
           static_cast<std::uint32_t>(b[off + 2]) << 16 |
           static_cast<std::uint32_t>(b[off + 3]) << 24;
}

std::uint16_t rd16(const std::vector<unsigned char>& b, std::size_t off, const std::string& p) {
    if (off + 2 > b.size()) throw IoError("extract_zip: truncated archive '" + p + "'");
    return static_cast<std::uint16_t>(b[off] | b[off + 1] << 8);
}

std::vector<unsigned char> inflate_raw(const unsigned char* src, std::size_t src_len,
                                       std::size_t out_len, const std::string& p) {
    std::vector<unsigned char> out(out_len);
    z_stream zs{};
    if (inflateInit2(&zs, -15) != Z_OK)
        throw IoError("extract_zip: inflate init failed for '" + p + "'");
    zs.next_in = const_cast<unsigned char*>(src);
    zs.avail_in = static_cast<uInt>(src_len);
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out_len);
    const int rc = inflate(&zs, Z_FINISH);
    const auto produced = zs.total_out;
    inflateEnd(&zs);
    if (rc != Z_STREAM_END || produced != out_len)
        throw IoError("extract_zip: corrupt deflate stream in '" + p + "'");
    return out;
}

// Validates a zip member path and applies strip_components.  Returns the
// empty string when the entry dissolves into the stripped prefix.
std::string sanitized_member_path(const std::string& raw, int strip, const std::string& p) {
    if (raw.find('\\') != std::string::npos)
        throw IoError("extract_zip: backslash separators in '" + p + "' entry '" + raw + "'");
    if (!raw.empty() && raw.front() == '/')
        throw IoError("extract_zip: absolute entry path in '" + p + "': '" + raw + "'");
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (start <= raw.size()) {
        const auto slash = raw.find('/', start);
        const auto end = slash == std::string::npos ? raw.size() : slash;
        const std::string part = raw.substr(start, end - start);
        if (part == ".." || part == ".")
            throw IoError("extract_zip: unsafe entry path in '" + p + "': '" + raw + "'");
        if (!part.empty()) parts.push_back(part);
        if (slash == std::string::npos) break;
        start = slash + 1;
    }
    std::string out;
    for (std::size_t i = static_cast<std::size_t>(strip); i < parts.size(); ++i) {
        if (!out.empty()) out += '/';
        out += parts[i];
    }
    return out;
}

}  // namespace

void extract_zip(const std::string& zip_path, const std::string& dest_root,
                 int strip_components) {
    std::ifstream in(zip_path, std::ios::binary);
    if (!in) throw IoError("extract_zip: cannot open '" + zip_path + "'");
    std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in),
                                     std::istreambuf_iterator<char>()};
    if (bytes.size() < 22) throw IoError("extract_zip: '" + zip_path + "' is not a zip archive");

    // End-of-central-directory record: last occurrence within the trailing
    // comment window.
    std::size_t eocd = std::string::npos;
    const std::size_t lowest = bytes.size() >= 22 + 65535 ? bytes.size() - 22 - 65535 : 0;
    for (std::size_t off = bytes.size() - 22; off + 1 > lowest; --off) {
        if (rd32(bytes, off, zip_path) == kEocdSig) {
            eocd = off;
            break;
        }
        if (off == 0) break;
    }
    if (eocd == std::string::npos)
        throw IoError("extract_zip: '" + zip_path + "' is not a zip archive");
    const std::uint16_t n_entries = rd16(bytes, eocd + 10, zip_path);
    const std::uint32_t cdir_off = rd32(bytes, eocd + 16, zip_path);
    if (n_entries == 0xffff || cdir_off == 0xffffffffu)
        throw IoError("extract_zip: zip64 archive '" + zip_path + "' is not supported");

    fs::create_directories(dest_root);
    std::size_t off = cdir_off;
    for (std::uint16_t i = 0; i < n_entries; ++i) {
        if (rd32(bytes, off, zip_path) != kCentralSig)
            throw IoError("extract_zip: malformed central directory in '" + zip_path + "'");
        const std::uint16_t method = rd16(bytes, off + 10, zip_path);
        const std::uint32_t crc_want = rd32(bytes, off + 16, zip_path);
        const std::uint32_t comp_size = rd32(bytes, off + 20, zip_path);
        const std::uint32_t raw_size = rd32(bytes, off + 24, zip_path);
        const std::uint16_t name_len = rd16(bytes, off + 28, zip_path);
        const std::uint16_t extra_len = rd16(bytes, off + 30, zip_path);
        const std::uint16_t comment_len = rd16(bytes, off + 32, zip_path);
        const std::uint32_t local_off = rd32(bytes, off + 42, zip_path);
        if (off + 46 + name_len > bytes.size())
            throw IoError("extract_zip: truncated archive '" + zip_path + "'");
        const std::string raw_name(reinterpret_cast<const char*>(&bytes[off + 46]), name_len);
        off += 46u + name_len + extra_len + comment_len;

        const std::string member =
            sanitized_member_path(raw_name, strip_components, zip_path);
        const bool is_dir = !raw_name.empty() && raw_name.back() == '/';
        if (member.empty()) {
            if (!is_dir && raw_size != 0)
                throw IoError("extract_zip: entry '" + raw_name + "' in '" + zip_path +
                              "' vanishes under strip_components");
            continue;
        }
        const fs::path target = fs::path(dest_root) / member;
        if (is_dir) {
            fs::create_directories(target);
            continue;
        }

        if (rd32(bytes, local_off, zip_path) != kLocalSig)
            throw IoError("extract_zip: bad local header for '" + raw_name + "' in '" +
                          zip_path + "'");
        const std::uint16_t lname = rd16(bytes, local_off + 26, zip_path);
        const std::uint16_t lextra = rd16(bytes, local_off + 28, zip_path);
        const std::size_t data_off = static_cast<std::size_t>(local_off) + 30 + lname + lextra;
        if (data_off + comp_size > bytes.size())
            throw IoError("extract_zip: truncated archive '" + zip_path + "'");

        std::vector<unsigned char> data;
        if (method == 0) {
            if (comp_size != raw_size)
                throw IoError("extract_zip: stored entry '" + raw_name + "' in '" + zip_path +
                              "' has mismatched sizes");
            data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(data_off),
                        bytes.begin() + static_cast<std::ptrdiff_t>(data_off + comp_size));
        } else if (method == 8) {
            if (raw_size == 0)
                data.clear();
            else
                data = inflate_raw(&bytes[data_off], comp_size, raw_size, zip_path);
        } else {
            throw IoError("extract_zip: entry '" + raw_name + "' in '" + zip_path +
                          "' uses unsupported compression method " + std::to_string(method));
        }
        const auto crc_got =
            crc32(0L, data.empty() ? Z_NULL : data.data(), static_cast<uInt>(data.size()));
        if (crc_got != crc_want)
            throw IoError("extract_zip: checksum mismatch for '" + raw_name + "' in '" +
                          zip_path + "'");

        fs::create_directories(target.parent_path());
        std::ofstream out(target, std::ios::binary);
        if (!out) throw IoError("extract_zip: cannot write '" + target.string() + "'");
        out.write(reinterpret_cast<const char*>(data.data()),
                  static_cast<std::streamsize>(data.size()));
        if (!out) throw IoError("extract_zip: write failed for '" + target.string() + "'");
    }
}

// --- download ---------------------------------------------------------------

namespace {

std::size_t curl_sink(char* ptr, std::size_t size, std::size_t nmemb, void* user) {
    auto* os = static_cast<std::ofstream*>(user);
    const std::size_t n = size * nmemb;
    os->write(ptr, static_cast<std::streamsize>(n));
    return os->good() ? n : 0;
}

}  // namespace

void download_file(const std::string& url, const std::string& dest_path) {
    static std::once_flag curl_once;
    std::call_once(curl_once, [] { curl_global_init(CURL_GLOBAL_DEFAULT); });

    const fs::path dest(dest_path);
    if (dest.has_parent_path()) fs::create_directories(dest.parent_path());
    std::ofstream os(dest, std::ios::binary);
    if (!os) throw IoError("download_file: cannot write '" + dest_path + "'");

    CURL* h = curl_easy_init();
    if (!h) throw IoError("download_file: curl handle allocation failed");
    char errbuf[CURL_ERROR_SIZE] = {0};
    curl_easy_setopt(h, CURLOPT_URL, url.c_str());
    curl_easy_setopt(h, CURLOPT_FOLLOWLOCATION, 1L);
    curl_easy_setopt(h, CURLOPT_FAILONERROR, 1L);
    curl_easy_setopt(h, CURLOPT_WRITEFUNCTION, curl_sink);
    curl_easy_setopt(h, CURLOPT_WRITEDATA, &os);
    curl_easy_setopt(h, CURLOPT_USERAGENT, "metareg/0.1");
    curl_easy_setopt(h, CURLOPT_ERRORBUFFER, errbuf);
    const CURLcode rc = curl_easy_perform(h);
    curl_easy_cleanup(h);
    os.close();
    if (rc != CURLE_OK) {
        std::error_code ignored;
        fs::remove(dest, ignored);
        const char* why = errbuf[0] != '\0' ? errbuf : curl_easy_strerror(rc);
        throw IoError("download_file: '" + url + "': " + why);
    }
}

// --- the full plan ----------------------------------------------------------

FetchReport fetch_omniglot(const FetchPlan& plan) {
    if (plan.root.empty()) throw ConfigError("fetch_omniglot: destination root is empty");
    if (plan.background.url.empty() || plan.evaluation.url.empty())
        throw ConfigError("fetch_omniglot: both archive urls are required");

    fs::create_directories(plan.root);
    const fs::path arch_dir = fs::path(plan.root) / "_archives";
    fs::create_directories(arch_dir);

    FetchReport report;
    struct Half {
        const FetchSource& src;
        const char* name;
        std::string* digest;
    };
    const Half halves[] = {
        {plan.background, "images_background.zip", &report.background_sha256},
        {plan.evaluation, "images_evaluation.zip", &report.evaluation_sha256},
    };

    // Download and verify both halves before unpacking anything, so a bad
    // archive never leaves a half-populated root behind.
    std::vector<std::string> archives;
    for (const auto& h : halves) {
        const std::string dest = (arch_dir / h.name).string();
        download_file(h.src.url, dest);
        *h.digest = sha256_file(dest);
        std::string want = h.src.sha256;
        std::transform(want.begin(), want.end(), want.begin(),
                       [](unsigned char c) { return std::tolower(c); });
        if (!want.empty() && *h.digest != want)
            throw IoError(std::string("fetch_omniglot: checksum mismatch for ") + h.name +
                          ": computed " + *h.digest + ", expected " + want);
        archives.push_back(dest);
    }
    // Both archives wrap their trees in a single top-level folder; stripping
    // it merges the halves into one alphabet/character forest.
    for (const auto& a : archives) extract_zip(a, plan.root, 1);
    if (!plan.keep_archives) fs::remove_all(arch_dir);

    for (const auto& alphabet : fs::directory_iterator(plan.root))
        if (alphabet.is_directory())
            for (const auto& ch : fs::directory_iterator(alphabet.path()))
                if (ch.is_directory()) ++report.classes_loaded;
    if (report.classes_loaded == 0)
        throw IoError("fetch_omniglot: no alphabet/character directories appeared under '" +
                      plan.root + "'");
    return report;
}

}  // namespace metareg
