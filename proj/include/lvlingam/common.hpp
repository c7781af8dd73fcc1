#ifndef LVLINGAM_COMMON_HPP
#define LVLINGAM_COMMON_HPP

#include <algorithm>
#include <bit>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace lvlingam {

using NodeId = int;

enum class NodeKind : unsigned char { Observed, Latent };

struct Edge {
    NodeId from = -1;
    NodeId to = -1;
    friend constexpr bool operator==(const Edge&, const Edge&) = default;
    friend constexpr auto operator<=>(const Edge&, const Edge&) = default;
};

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidGraph final : Error { using Error::Error; };
struct UnknownNode final : Error { using Error::Error; };
struct NotObserved final : Error { using Error::Error; };
struct SameNode final : Error { using Error::Error; };

enum class ViolationKind : unsigned char { Cycle, LatentWithParent, LatentWithFewChildren };

struct Violation {
    ViolationKind kind;
    std::vector<NodeId> nodes;
};

// Carries every violation found, not just the first one.
struct ValidationError : Error {
    std::vector<Violation> violations;
    ValidationError(const std::string& msg, std::vector<Violation> v)
        : Error(msg), violations(std::move(v)) {}
};
struct CycleDetected final : ValidationError { using ValidationError::ValidationError; };
struct LatentWithParent final : ValidationError { using ValidationError::ValidationError; };
struct LatentWithFewChildren final : ValidationError { using ValidationError::ValidationError; };

struct UnknownEdge final : Error { using Error::Error; };
struct GraphTooLargeForEnumeration final : Error { using Error::Error; };
struct SingularObservedBlock final : Error { using Error::Error; };
struct DimensionMismatch final : Error { using Error::Error; };
struct InvalidDimensions final : Error { using Error::Error; };
struct ZeroTrueValue final : Error { using Error::Error; };
struct NonFiniteObjective final : Error { using Error::Error; };
struct PreconditionViolated final : Error { using Error::Error; };
struct ParseInvalid final : Error { using Error::Error; };

// Fixed-universe bitset over node ids.
class NodeSet {
public:
    NodeSet() = default;
    explicit NodeSet(int universe) : n_(universe), w_(static_cast<std::size_t>(universe + 63) / 64, 0) {}

    int universe() const { return n_; }

    bool test(NodeId v) const { return (w_[static_cast<std::size_t>(v) >> 6] >> (v & 63)) & 1u; }
    void set(NodeId v) { w_[static_cast<std::size_t>(v) >> 6] |= std::uint64_t{1} << (v & 63); }
    void reset(NodeId v) { w_[static_cast<std::size_t>(v) >> 6] &= ~(std::uint64_t{1} << (v & 63)); }
    void clear() { std::fill(w_.begin(), w_.end(), 0); }

    int count() const {
        int c = 0;
        for (auto x : w_) c += std::popcount(x);
        return c;
    }
    bool empty() const {
        for (auto x : w_)
            if (x) return false;
        return true;
    }

    friend bool operator==(const NodeSet&, const NodeSet&) = default;

    bool is_subset_of(const NodeSet& o) const {
        for (std::size_t i = 0; i < w_.size(); ++i)
            if (w_[i] & ~o.w_[i]) return false;
        return true;
    }
    bool intersects(const NodeSet& o) const {
        for (std::size_t i = 0; i < w_.size(); ++i)
            if (w_[i] & o.w_[i]) return true;
        return false;
    }

    NodeSet& operator|=(const NodeSet& o) {
        for (std::size_t i = 0; i < w_.size(); ++i) w_[i] |= o.w_[i];
        return *this;
    }
    NodeSet& operator&=(const NodeSet& o) {
        for (std::size_t i = 0; i < w_.size(); ++i) w_[i] &= o.w_[i];
        return *this;
    }
    // set difference
    NodeSet& operator-=(const NodeSet& o) {
        for (std::size_t i = 0; i < w_.size(); ++i) w_[i] &= ~o.w_[i];
        return *this;
    }

    template <class F>
    void for_each(F f) const {  // ascending node id
        for (std::size_t i = 0; i < w_.size(); ++i) {
            std::uint64_t x = w_[i];
            while (x) {
                f(static_cast<NodeId>(i * 64 + std::countr_zero(x)));
                x &= x - 1;
            }
        }
    }
    std::vector<NodeId> to_vector() const {
        std::vector<NodeId> out;
        out.reserve(static_cast<std::size_t>(count()));
        for_each([&](NodeId v) { out.push_back(v); });
        return out;
    }

private:
    int n_ = 0;
    std::vector<std::uint64_t> w_;
};

}  // namespace lvlingam

#endif
