#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "birdfcn/audio/manifest.hpp"

namespace birdfcn::audio {

struct HttpResponse {
    int status = 0;  ///< 0 for a transport failure
    std::string body;
    std::string error;
};

class HttpClient {
public:
    virtual ~HttpClient() = default;
    virtual HttpResponse get(const std::string& url) = 0;
};

/// Blocking client on top of cpp-httplib; follows redirects.
class HttplibClient : public HttpClient {
public:
    explicit HttplibClient(std::chrono::seconds timeout = std::chrono::seconds(60));
    HttpResponse get(const std::string& url) override;

private:
    std::chrono::seconds timeout_;
};

/// Where and how to query the archive. Everything that depends on the remote API lives here.
struct FetchConfig {
    std::string base_url = "https://xeno-canto.org";
    /// `{query}`, `{page}` and `{page_size}` are substituted; the query is percent-encoded.
    std::string query_template = "/api/2/recordings?query={query}&page={page}";
    /// Results per page the server is asked for; only used if the template has `{page_size}`.
    std::size_t page_size = 100;
    std::string recordings_field = "recordings";
    std::string num_pages_field = "numPages";
    std::string id_field = "id";
    std::string file_url_field = "file";
    std::string file_name_field = "file-name";
    std::string default_extension = "mp3";
    double min_request_interval_s = 1.0;
    int max_attempts = 3;
    double backoff_initial_s = 1.0;

    /// Any subset of the fields above as a JSON object; unknown keys are a ConfigError.
    static FetchConfig from_json_file(const std::filesystem::path& path);
    static FetchConfig from_json_text(const std::string& text);
};

struct FetchQuery {
    std::string species;
    std::size_t max_results = 1;
    std::filesystem::path cache_dir;
};

struct FetchResult {
    std::vector<std::filesystem::path> files;
    std::vector<ManifestEntry> rows;
    std::size_t downloads = 0;
    std::size_t cache_hits = 0;
    std::size_t requests = 0;  ///< HTTP attempts, including retries
};

/// Time source and sleeper, injectable so tests need not wait in real time.
struct FetchTiming {
    std::function<double()> now;
    std::function<void(double)> sleep;

    static FetchTiming real();
};

std::string percent_encode(const std::string& text);

/// Pages through the JSON search results and downloads each recording into the cache.
/// Requests are spaced by at least min_request_interval_s and failures back off exponentially.
class Fetcher {
public:
    Fetcher(FetchConfig config, HttpClient& client, FetchTiming timing = FetchTiming::real());

    FetchResult fetch(const FetchQuery& query);

private:
    HttpResponse request(const std::string& url, FetchResult& result);

    FetchConfig config_;
    HttpClient& client_;
    FetchTiming timing_;
    double last_request_ = -1e300;
};

}  // namespace birdfcn::audio
