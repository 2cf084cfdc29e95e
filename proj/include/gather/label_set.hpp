#pragma once

#include <bit>
#include <cstdint>
#include <vector>

#include "gather/core.hpp"

namespace gather {

// Set of labels in [0, capacity) backed by a two-level bitset, so that
// find_next stays cheap even when the set is sparse in a large universe.
class LabelSet {
public:
    LabelSet() = default;
    explicit LabelSet(std::size_t capacity)
        : capacity_(capacity), words_((capacity + 63) / 64, 0), summary_((words_.size() + 63) / 64, 0) {}

    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t size() const noexcept { return count_; }
    bool empty() const noexcept { return count_ == 0; }

    bool contains(Label x) const noexcept {
        return x < capacity_ && (words_[x >> 6] >> (x & 63) & 1U) != 0;
    }

    // Returns true if x was not present before.
    bool insert(Label x) {
        auto& w = words_[x >> 6];
        const std::uint64_t bit = std::uint64_t{1} << (x & 63);
        if (w & bit)
            return false;
        w |= bit;
        summary_[x >> 12] |= std::uint64_t{1} << ((x >> 6) & 63);
        ++count_;
        return true;
    }

    bool erase(Label x) {
        auto& w = words_[x >> 6];
        const std::uint64_t bit = std::uint64_t{1} << (x & 63);
        if (!(w & bit))
            return false;
        w &= ~bit;
        if (w == 0)
            summary_[x >> 12] &= ~(std::uint64_t{1} << ((x >> 6) & 63));
        --count_;
        return true;
    }

    // Smallest member >= from, or kNoLabel.
    Label find_next(Label from) const noexcept {
        if (from >= capacity_ || count_ == 0)
            return kNoLabel;
        std::size_t wi = from >> 6;
        std::uint64_t w = words_[wi] & (~std::uint64_t{0} << (from & 63));
        if (w)
            return static_cast<Label>((wi << 6) + std::countr_zero(w));
        ++wi;
        std::size_t si = wi >> 6;
        if (si >= summary_.size())
            return kNoLabel;
        std::uint64_t s = (wi & 63) ? summary_[si] & (~std::uint64_t{0} << (wi & 63)) : summary_[si];
        while (true) {
            if (s) {
                std::size_t word = (si << 6) + std::countr_zero(s);
                return static_cast<Label>((word << 6) + std::countr_zero(words_[word]));
            }
            if (++si >= summary_.size())
                return kNoLabel;
            s = summary_[si];
        }
    }

    Label first() const noexcept { return find_next(0); }

    std::vector<Label> to_vector() const {
        std::vector<Label> out;
        out.reserve(count_);
        for (Label x = first(); x != kNoLabel; x = find_next(x + 1))
            out.push_back(x);
        return out;
    }

    friend bool operator==(const LabelSet& a, const LabelSet& b) {
        return a.capacity_ == b.capacity_ && a.words_ == b.words_;
    }

private:
    std::size_t capacity_ = 0;
    std::size_t count_ = 0;
    std::vector<std::uint64_t> words_;
    std::vector<std::uint64_t> summary_;
};

}  // namespace gather
