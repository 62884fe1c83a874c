#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace vulnbench::strategy {

enum class Category { basic, nl, nl_cot };
enum class Setting { s0, s1, s2, s3, not_applicable };

/// One of the nine valid prompting-strategy settings: Basic, NL S0-S3,
/// NL+CoT S0-S3. Basic pairs only with not_applicable.
struct StrategySetting {
    Category category = Category::basic;
    Setting setting = Setting::not_applicable;

    bool valid() const;
    /// Canonical label, also the template-store directory name:
    /// "basic", "nl-s0" .. "nl-s3", "nl_cot-s0" .. "nl_cot-s3".
    std::string to_string() const;
    static StrategySetting parse(std::string_view text);
    /// All nine valid settings in rank order (used for deterministic
    /// tie-breaking): basic, nl-s0..s3, nl_cot-s0..s3.
    static const std::vector<StrategySetting>& all();
    /// Position in all(); defines the enum order.
    int rank() const;

    friend bool operator==(const StrategySetting& a, const StrategySetting& b) {
        return a.category == b.category && a.setting == b.setting;
    }
    friend bool operator!=(const StrategySetting& a, const StrategySetting& b) {
        return !(a == b);
    }
    friend bool operator<(const StrategySetting& a, const StrategySetting& b) {
        return a.rank() < b.rank();
    }
};

std::string to_string(Category category);
std::string to_string(Setting setting);

}  // namespace vulnbench::strategy
