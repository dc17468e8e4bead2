#pragma once

#include <map>
#include <string>
#include <vector>

namespace pr::config {

struct KeySpec {
    const char* name;
    const char* def;
    const char* help;
};

/// The full flat key schema; unknown keys are rejected everywhere.
const std::vector<KeySpec>& schema();

/// Flat key-value run configuration. Values are stored as strings and parsed
/// on access; every key has a documented default. Precedence: defaults <
/// config file < command-line flags < PR_SEED.
class RunConfig {
public:
    static RunConfig defaults();
    static RunConfig from_file(const std::string& path);

    void set(const std::string& key, const std::string& value);  // rejects unknown keys
    void apply_line(const std::string& line);                    // "key = value"
    void apply_env_overrides();                                  // PR_SEED

    const std::string& get(const std::string& key) const;
    long get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::uint64_t get_seed() const;
    std::vector<int> get_int_list(const std::string& key) const;
    std::vector<std::string> get_list(const std::string& key) const;
    bool empty(const std::string& key) const { return get(key).empty(); }

    /// Canonical "key=value\n" lines, schema order. Written next to every
    /// output; its FNV hash is the run's config hash.
    std::string resolved_text() const;
    std::string hash() const;

private:
    std::map<std::string, std::string> kv_;
};

}  // namespace pr::config
