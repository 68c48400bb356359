#pragma once

// Dataset download with checksum verification. Tries each mirror in order and
// keeps the first payload whose digest matches.

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <openssl/evp.h>

// <resolv.h> (pulled in by httplib) defines _res, which collides with Eigen parameter names.
#ifdef _res
#undef _res
#endif

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace levelset::fetch {

enum class DigestKind { md5, sha256 };

struct Checksum {
  DigestKind kind = DigestKind::sha256;
  std::string hex; ///< lowercase
};

inline std::string hex_digest(DigestKind kind, const std::string& bytes) {
  const EVP_MD* md = kind == DigestKind::md5 ? EVP_md5() : EVP_sha256();
  unsigned char out[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), out, &len, md, nullptr) != 1) throw std::runtime_error("digest failed");
  static const char* digits = "0123456789abcdef";
  std::string hex;
  for (unsigned i = 0; i < len; ++i) {
    hex += digits[out[i] >> 4];
    hex += digits[out[i] & 0xf];
  }
  return hex;
}

/// "md5:<hex>" or "sha256:<hex>"; a bare hex string is taken as sha256.
inline Checksum parse_checksum(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) return {DigestKind::sha256, s};
  const std::string kind = s.substr(0, colon);
  if (kind == "md5") return {DigestKind::md5, s.substr(colon + 1)};
  if (kind == "sha256") return {DigestKind::sha256, s.substr(colon + 1)};
  throw std::invalid_argument("unknown checksum kind '" + kind + "'");
}

struct RemoteFile {
  std::string name;                ///< file name under the mirror base URL and in the target directory
  std::optional<Checksum> checksum;
};

struct FetchResult {
  std::filesystem::path path;
  std::string mirror;
  std::string sha256;
  bool verified = false;
};

namespace detail {

struct Url {
  std::string scheme_host; // e.g. https://example.org
  std::string path;        // starts with '/'
};

inline Url split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw std::invalid_argument("not an absolute URL: " + url);
  const auto slash = url.find('/', scheme_end + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

inline std::optional<std::string> http_get(const std::string& url, std::string& error) {
  const Url u = split_url(url);
  httplib::Client cli(u.scheme_host);
  cli.set_follow_location(true);
  cli.set_connection_timeout(30);
  cli.set_read_timeout(120);
  auto res = cli.Get(u.path);
  if (!res) {
    error = httplib::to_string(res.error());
    return std::nullopt;
  }
  if (res->status != 200) {
    error = "HTTP " + std::to_string(res->status);
    return std::nullopt;
  }
  return res->body;
}

} // namespace detail

/// Downloads `file` into `dir` from the first mirror that serves a payload matching its checksum.
/// Files without a pinned checksum are accepted from the first responding mirror and reported unverified.
/// An existing file that already matches is left untouched.
inline FetchResult fetch_file(const RemoteFile& file, const std::vector<std::string>& mirrors,
                              const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto target = dir / file.name;
  if (file.checksum && std::filesystem::exists(target)) {
    std::ifstream in(target, std::ios::binary);
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (hex_digest(file.checksum->kind, bytes) == file.checksum->hex) {
      return {target, "local", hex_digest(DigestKind::sha256, bytes), true};
    }
  }
  std::string errors;
  for (const auto& base : mirrors) {
    std::string url = base;
    if (!url.empty() && url.back() != '/') url += '/';
    url += file.name;
    std::string err;
    const auto body = detail::http_get(url, err);
    if (!body) {
      errors += "\n  " + url + ": " + err;
      continue;
    }
    if (file.checksum && hex_digest(file.checksum->kind, *body) != file.checksum->hex) {
      errors += "\n  " + url + ": checksum mismatch";
      continue;
    }
    const auto tmp = target.string() + ".part";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out.write(body->data(), static_cast<std::streamsize>(body->size()));
      if (!out) throw std::runtime_error("cannot write " + tmp);
    }
    std::filesystem::rename(tmp, target);
    return {target, base, hex_digest(DigestKind::sha256, *body), file.checksum.has_value()};
  }
  throw std::runtime_error("could not fetch " + file.name + ":" + errors);
}

/// MNIST IDX archives with their widely published MD5 digests.
inline std::vector<RemoteFile> mnist_files() {
  return {{"train-images-idx3-ubyte.gz", Checksum{DigestKind::md5, "f68b3c2dcbeaaa9fbdd348bbdeb94873"}},
          {"train-labels-idx1-ubyte.gz", Checksum{DigestKind::md5, "d53e105ee54ea40749a09fcbcd1e9432"}},
          {"t10k-images-idx3-ubyte.gz", Checksum{DigestKind::md5, "9fb629c4189551a2d022fa330f9573f3"}},
          {"t10k-labels-idx1-ubyte.gz", Checksum{DigestKind::md5, "ec29112dd5afa0611ce80d1b7f02629c"}}};
}

inline std::vector<std::string> default_mnist_mirrors() {
  return {"https://ossci-datasets.s3.amazonaws.com/mnist", "https://storage.googleapis.com/cvdf-datasets/mnist"};
}

inline std::vector<std::string> default_uci_mirrors(const std::string& dataset) {
  if (dataset == "iris") return {"https://archive.ics.uci.edu/ml/machine-learning-databases/iris"};
  return {"https://archive.ics.uci.edu/ml/machine-learning-databases/auto-mpg"};
}

} // namespace levelset::fetch
