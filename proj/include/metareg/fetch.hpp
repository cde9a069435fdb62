#pragma once

// Dataset acquisition: download the two Omniglot archives, verify their
// SHA-256 checksums, and unpack them into the root/<alphabet>/<character>/
// layout the loader expects.  The zip reader handles stored and deflated
// entries, which covers archives produced by ordinary tooling.

#include <cstdint>
#include <string>

namespace metareg {

// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);

// Unpacks `zip_path` under `dest_root`.  Entry paths are validated: absolute
// paths, "..", and backslash separators are refused.  `strip_components`
// drops that many leading path segments; entries consumed entirely are
// skipped (the archive's own wrapper directory).
void extract_zip(const std::string& zip_path, const std::string& dest_root,
                 int strip_components = 0);

// Fetches `url` into `dest_path`, following redirects.  Failures (network,
// HTTP >= 400, unwritable destination) raise IoError.
void download_file(const std::string& url, const std::string& dest_path);

struct FetchSource {
    std::string url;
    std::string sha256;  // lowercase hex; empty skips verification
};

struct FetchPlan {
    std::string root;  // dataset root to merge both halves into
    FetchSource background;
    FetchSource evaluation;
    bool keep_archives = false;
};

struct FetchReport {
    std::string background_sha256;  // computed digests, whether or not checked
    std::string evaluation_sha256;
    std::int64_t classes_loaded = 0;  // sanity count after extraction
};

// Downloads, verifies, and unpacks both halves into plan.root.  A checksum
// mismatch aborts before anything is extracted.
FetchReport fetch_omniglot(const FetchPlan& plan);

}  // namespace metareg
