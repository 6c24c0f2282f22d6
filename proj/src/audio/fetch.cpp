#include "birdfcn/audio/fetch.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "birdfcn/error.hpp"

namespace birdfcn::audio {

using nlohmann::json;

HttplibClient::HttplibClient(std::chrono::seconds timeout) : timeout_(timeout) {}

HttpResponse HttplibClient::get(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) return {0, {}, "not an absolute URL: " + url};
    const auto path_start = url.find('/', scheme_end + 3);
    const std::string origin = path_start == std::string::npos ? url : url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

    httplib::Client client(origin);
    if (!client.is_valid()) return {0, {}, "unsupported URL (HTTPS needs OpenSSL support): " + url};
    client.set_follow_location(true);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    auto res = client.Get(path);
    if (!res) return {0, {}, httplib::to_string(res.error())};
    return {res->status, res->body, {}};
}

FetchConfig FetchConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("fetch config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("fetch config must be a JSON object");
    FetchConfig c;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "base_url") c.base_url = value.get<std::string>();
            else if (key == "query_template") c.query_template = value.get<std::string>();
            else if (key == "page_size") c.page_size = value.get<std::size_t>();
            else if (key == "recordings_field") c.recordings_field = value.get<std::string>();
            else if (key == "num_pages_field") c.num_pages_field = value.get<std::string>();
            else if (key == "id_field") c.id_field = value.get<std::string>();
            else if (key == "file_url_field") c.file_url_field = value.get<std::string>();
            else if (key == "file_name_field") c.file_name_field = value.get<std::string>();
            else if (key == "default_extension") c.default_extension = value.get<std::string>();
            else if (key == "min_request_interval_s") c.min_request_interval_s = value.get<double>();
            else if (key == "max_attempts") c.max_attempts = value.get<int>();
            else if (key == "backoff_initial_s") c.backoff_initial_s = value.get<double>();
            else throw ConfigError("unknown fetch config key '" + key + "'");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad value in fetch config: ") + e.what());
    }
    if (c.min_request_interval_s < 1.0) {
        throw ConfigError("min_request_interval_s must be at least 1 second to respect the archive's rate limit");
    }
    if (c.max_attempts < 1) throw ConfigError("max_attempts must be at least 1");
    if (c.backoff_initial_s < 0.0) throw ConfigError("backoff_initial_s must be nonnegative");
    if (c.page_size == 0) throw ConfigError("page_size must be positive");
    return c;
}

FetchConfig FetchConfig::from_json_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open fetch config " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return from_json_text(ss.str());
}

FetchTiming FetchTiming::real() {
    return {[] {
                return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
            },
            [](double seconds) {
                if (seconds > 0) std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
            }};
}

std::string percent_encode(const std::string& text) {
    static const char* hex = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : text) {
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
            out += static_cast<char>(c);
        } else {
            out += '%';
            out += hex[c >> 4];
            out += hex[c & 15];
        }
    }
    return out;
}

namespace {

void replace_all(std::string& s, const std::string& from, const std::string& to) {
    for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
        s.replace(pos, from.size(), to);
    }
}

std::string json_scalar(const json& j) {
    if (j.is_string()) return j.get<std::string>();
    if (j.is_number_integer()) return std::to_string(j.get<long long>());
    throw ParseError("expected a string or integer field, got " + j.dump());
}

/// Keeps ids usable as file names.
std::string safe_id(const std::string& id) {
    std::string out;
    for (unsigned char c : id) out += (std::isalnum(c) || c == '-' || c == '_') ? static_cast<char>(c) : '_';
    if (out.empty()) throw ParseError("recording with empty id");
    return out;
}

std::string extension_of(const std::string& file_name, const std::string& fallback) {
    const auto dot = file_name.rfind('.');
    if (dot == std::string::npos || dot + 1 == file_name.size()) return fallback;
    std::string ext = file_name.substr(dot + 1);
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    for (unsigned char c : ext) {
        if (!std::isalnum(c)) return fallback;
    }
    return ext;
}

}  // namespace

Fetcher::Fetcher(FetchConfig config, HttpClient& client, FetchTiming timing)
    : config_(std::move(config)), client_(client), timing_(std::move(timing)) {}

HttpResponse Fetcher::request(const std::string& url, FetchResult& result) {
    HttpResponse last;
    for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
        const double wait = last_request_ + config_.min_request_interval_s - timing_.now();
        if (wait > 0) timing_.sleep(wait);
        last_request_ = timing_.now();
        last = client_.get(url);
        ++result.requests;
        if (last.status >= 200 && last.status < 300) return last;
        if (attempt < config_.max_attempts) {
            timing_.sleep(config_.backoff_initial_s * std::pow(2.0, attempt - 1));
        }
    }
    const std::string why = last.status == 0 ? last.error : "HTTP " + std::to_string(last.status);
    throw FetchError("GET " + url + " failed after " + std::to_string(config_.max_attempts) + " attempts: " + why);
}

FetchResult Fetcher::fetch(const FetchQuery& query) {
    if (query.max_results < 1) throw ParameterError("max_results must be at least 1");
    if (query.species.empty()) throw ParameterError("species query must not be empty");
    std::error_code ec;
    std::filesystem::create_directories(query.cache_dir, ec);
    if (ec) throw IoError("cannot create cache directory " + query.cache_dir.string() + ": " + ec.message());

    FetchResult result;
    for (std::size_t page = 1; result.rows.size() < query.max_results; ++page) {
        std::string path = config_.query_template;
        replace_all(path, "{query}", percent_encode(query.species));
        replace_all(path, "{page}", std::to_string(page));
        replace_all(path, "{page_size}", std::to_string(config_.page_size));
        const auto response = request(config_.base_url + path, result);

        json doc;
        try {
            doc = json::parse(response.body);
        } catch (const json::parse_error& e) {
            throw ParseError("search page " + std::to_string(page) + " is not valid JSON: " + e.what());
        }
        if (!doc.is_object() || !doc.contains(config_.recordings_field) ||
            !doc[config_.recordings_field].is_array()) {
            throw ParseError("search page lacks a '" + config_.recordings_field + "' array");
        }
        const auto& recs = doc[config_.recordings_field];
        if (recs.empty()) break;

        for (const auto& rec : recs) {
            if (result.rows.size() >= query.max_results) break;
            if (!rec.is_object() || !rec.contains(config_.id_field) || !rec.contains(config_.file_url_field)) {
                throw ParseError("recording lacks '" + config_.id_field + "' or '" + config_.file_url_field + "'");
            }
            const std::string id = safe_id(json_scalar(rec[config_.id_field]));
            const std::string file_name =
                rec.contains(config_.file_name_field) && rec[config_.file_name_field].is_string()
                    ? rec[config_.file_name_field].get<std::string>()
                    : std::string{};
            const auto target = query.cache_dir / (id + "." + extension_of(file_name, config_.default_extension));

            if (std::filesystem::exists(target)) {
                ++result.cache_hits;
            } else {
                std::string url = json_scalar(rec[config_.file_url_field]);
                if (url.rfind("//", 0) == 0) url = "https:" + url;
                else if (url.rfind("/", 0) == 0) url = config_.base_url + url;
                const auto payload = request(url, result);
                const auto tmp = target.string() + ".part";
                {
                    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
                    if (!os) throw IoError("cannot write " + tmp);
                    os.write(payload.body.data(), static_cast<std::streamsize>(payload.body.size()));
                    if (!os) throw IoError("failed writing " + tmp);
                }
                std::filesystem::rename(tmp, target);
                ++result.downloads;
            }
            result.files.push_back(target);
            result.rows.push_back({target.string(), query.species, 0.0});
        }

        if (doc.contains(config_.num_pages_field)) {
            const auto& np = doc[config_.num_pages_field];
            long long pages = 0;
            try {
                pages = np.is_string() ? std::stoll(np.get<std::string>()) : np.get<long long>();
            } catch (const std::exception&) {
                throw ParseError("'" + config_.num_pages_field + "' is not a number: " + np.dump());
            }
            if (static_cast<long long>(page) >= pages) break;
        }
    }
    return result;
}

}  // namespace birdfcn::audio
