#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace vulnbench {

/// A CWE identifier. Canonical text form is "CWE-<number>" without zero
/// padding; parsing accepts padded forms like "CWE-078" and bare numbers.
struct CweId {
    int number = 0;
    std::string canonical_name;  // empty for CWEs outside the built-in set

    static CweId parse(std::string_view text);
    static CweId from_number(int number);

    std::string to_string() const;          // "CWE-78"
    std::string display() const;            // "CWE-78: OS Command Injection"

    friend bool operator==(const CweId& a, const CweId& b) { return a.number == b.number; }
    friend bool operator!=(const CweId& a, const CweId& b) { return a.number != b.number; }
    friend bool operator<(const CweId& a, const CweId& b) { return a.number < b.number; }
};

/// Parent -> descendants table used for family-mode CWE matching. Tools often
/// report child CWEs (e.g. CWE-680 for an integer-overflow target).
class CweFamilyTable {
public:
    static CweFamilyTable load(const std::filesystem::path& path);
    /// Bundled table from the data directory, loaded once.
    static const CweFamilyTable& bundled();

    void add_edge(int parent, int child);

    /// True when found == target or found is a (transitive) descendant of target.
    bool matches(const CweId& target, const CweId& found) const;

private:
    std::map<int, std::set<int>> children_;
};

}  // namespace vulnbench
