#include "vulnbench/strategy_setting.hpp"

#include "vulnbench/common.hpp"

namespace vulnbench::strategy {

std::string to_string(Category category) {
    switch (category) {
        case Category::basic: return "basic";
        case Category::nl: return "nl";
        case Category::nl_cot: return "nl_cot";
    }
    return "basic";
}

std::string to_string(Setting setting) {
    switch (setting) {
        case Setting::s0: return "s0";
        case Setting::s1: return "s1";
        case Setting::s2: return "s2";
        case Setting::s3: return "s3";
        case Setting::not_applicable: return "na";
    }
    return "na";
}

bool StrategySetting::valid() const {
    if (category == Category::basic) {
        return setting == Setting::not_applicable;
    }
    return setting != Setting::not_applicable;
}

std::string StrategySetting::to_string() const {
    if (category == Category::basic) {
        return "basic";
    }
    return strategy::to_string(category) + "-" + strategy::to_string(setting);
}

StrategySetting StrategySetting::parse(std::string_view text) {
    std::string t = to_lower(trim(text));
    // tolerate the paper-style "nl+cot" spelling
    for (char& c : t) {
        if (c == '+') c = '_';
    }
    if (t == "basic" || t == "b" || t == "basic-na") {
        return {Category::basic, Setting::not_applicable};
    }
    size_t dash = t.rfind('-');
    if (dash == std::string::npos) {
        throw ValidationError("unknown strategy setting: '" + std::string(text) + "'");
    }
    std::string cat = t.substr(0, dash);
    std::string set = t.substr(dash + 1);
    StrategySetting result;
    if (cat == "nl") {
        result.category = Category::nl;
    } else if (cat == "nl_cot" || cat == "nlcot") {
        result.category = Category::nl_cot;
    } else {
        throw ValidationError("unknown strategy category: '" + std::string(text) + "'");
    }
    if (set == "s0") result.setting = Setting::s0;
    else if (set == "s1") result.setting = Setting::s1;
    else if (set == "s2") result.setting = Setting::s2;
    else if (set == "s3") result.setting = Setting::s3;
    else throw ValidationError("unknown strategy setting: '" + std::string(text) + "'");
    return result;
}

const std::vector<StrategySetting>& StrategySetting::all() {
    static const std::vector<StrategySetting> settings = {
        {Category::basic, Setting::not_applicable},
        {Category::nl, Setting::s0},
        {Category::nl, Setting::s1},
        {Category::nl, Setting::s2},
        {Category::nl, Setting::s3},
        {Category::nl_cot, Setting::s0},
        {Category::nl_cot, Setting::s1},
        {Category::nl_cot, Setting::s2},
        {Category::nl_cot, Setting::s3},
    };
    return settings;
}

int StrategySetting::rank() const {
    const auto& settings = all();
    for (size_t i = 0; i < settings.size(); ++i) {
        if (settings[i] == *this) {
            return static_cast<int>(i);
        }
    }
    throw ValidationError("invalid strategy setting");
}

}  // namespace vulnbench::strategy
