#include "vulnbench/cwe.hpp"

#include <cctype>
#include <sstream>

#include "vulnbench/common.hpp"

namespace vulnbench {

namespace {

const std::map<int, std::string>& builtin_names() {
    static const std::map<int, std::string> names = {
        {78, "OS Command Injection"},
        {190, "Integer Overflow or Wraparound"},
        {416, "Use After Free"},
        {476, "NULL Pointer Dereference"},
    };
    return names;
}

}  // namespace

CweId CweId::parse(std::string_view text) {
    std::string s = trim(text);
    std::string lower = to_lower(s);
    size_t pos = 0;
    if (starts_with(lower, "cwe-") || starts_with(lower, "cwe_")) {
        pos = 4;
    } else if (starts_with(lower, "cwe")) {
        pos = 3;
    }
    if (pos >= s.size()) {
        throw ValidationError("not a CWE id: '" + s + "'");
    }
    int value = 0;
    bool any = false;
    for (size_t i = pos; i < s.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) {
            throw ValidationError("not a CWE id: '" + s + "'");
        }
        value = value * 10 + (s[i] - '0');
        any = true;
    }
    if (!any || value <= 0) {
        throw ValidationError("CWE number must be positive: '" + s + "'");
    }
    return from_number(value);
}

CweId CweId::from_number(int number) {
    if (number <= 0) {
        throw ValidationError("CWE number must be positive");
    }
    CweId id;
    id.number = number;
    auto it = builtin_names().find(number);
    if (it != builtin_names().end()) {
        id.canonical_name = it->second;
    }
    return id;
}

std::string CweId::to_string() const {
    return "CWE-" + std::to_string(number);
}

std::string CweId::display() const {
    if (canonical_name.empty()) {
        return to_string();
    }
    return to_string() + ": " + canonical_name;
}

CweFamilyTable CweFamilyTable::load(const std::filesystem::path& path) {
    CweFamilyTable table;
    std::string content = read_file(path);
    size_t lineno = 0;
    for (const std::string& raw : split_lines(content)) {
        ++lineno;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#') {
            continue;
        }
        std::istringstream in(line);
        std::string parent;
        std::string child;
        if (!(in >> parent >> child)) {
            throw ParseError("malformed family table entry", "line " + std::to_string(lineno));
        }
        table.add_edge(CweId::parse(parent).number, CweId::parse(child).number);
    }
    return table;
}

const CweFamilyTable& CweFamilyTable::bundled() {
    static const CweFamilyTable table = load(data_dir() / "cwe_families.tsv");
    return table;
}

void CweFamilyTable::add_edge(int parent, int child) {
    children_[parent].insert(child);
}

bool CweFamilyTable::matches(const CweId& target, const CweId& found) const {
    if (target.number == found.number) {
        return true;
    }
    // DFS over the descendant set of the target.
    std::vector<int> stack = {target.number};
    std::set<int> seen;
    while (!stack.empty()) {
        int current = stack.back();
        stack.pop_back();
        if (!seen.insert(current).second) {
            continue;
        }
        auto it = children_.find(current);
        if (it == children_.end()) {
            continue;
        }
        for (int child : it->second) {
            if (child == found.number) {
                return true;
            }
            stack.push_back(child);
        }
    }
    return false;
}

}  // namespace vulnbench
