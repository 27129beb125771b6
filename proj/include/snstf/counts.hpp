// Detection tallies keyed by the two users' (basis, intensity) choices.
#pragma once

#include <array>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>

namespace snstf {

enum class Basis : std::uint8_t { kX = 0, kZ = 1 };

/// Intensity labels; the numeric value is the digit used in row names.
enum class Intensity : std::uint8_t { kMu0 = 0, kMu1 = 1, kMu2 = 2, kMuZ = 3 };

inline char basis_char(Basis b) { return b == Basis::kX ? 'X' : 'Z'; }

/// Z windows carry mu0 or muZ; X (decoy) windows carry mu0, mu1 or mu2.
constexpr bool allowed(Basis b, int label) {
  return b == Basis::kZ ? (label == 0 || label == 3) : (label >= 0 && label <= 2);
}

/// One tally per category AB_ab, plus the slice-matched X-window totals
/// and error tallies for the (mu1, mu1) and (mu2, mu2) classes.  T is an
/// integer for observed counts and double for expectations.
template <class T>
struct BasicCountsTable {
  std::array<T, 64> cells{};
  T x11Matched{};
  T x11Errors{};
  T x22Matched{};
  T x22Errors{};

  static constexpr std::size_t index(Basis a, Basis b, int la, int lb) {
    return static_cast<std::size_t>(a) * 32 + static_cast<std::size_t>(b) * 16 +
           static_cast<std::size_t>(la) * 4 + static_cast<std::size_t>(lb);
  }

  T& at(Basis a, Basis b, int la, int lb) {
    if (!allowed(a, la) || !allowed(b, lb)) throw std::out_of_range("counts: category does not exist");
    return cells[index(a, b, la, lb)];
  }
  const T& at(Basis a, Basis b, int la, int lb) const {
    if (!allowed(a, la) || !allowed(b, lb)) throw std::out_of_range("counts: category does not exist");
    return cells[index(a, b, la, lb)];
  }

  /// Visits every existing category in a fixed order: XX, XZ, ZX, ZZ, then
  /// by Alice's label and Bob's label.
  template <class F>
  static void for_each_category(F&& f) {
    for (Basis a : {Basis::kX, Basis::kZ})
      for (Basis b : {Basis::kX, Basis::kZ})
        for (int la = 0; la < 4; ++la)
          for (int lb = 0; lb < 4; ++lb)
            if (allowed(a, la) && allowed(b, lb)) f(a, b, la, lb);
  }

  static std::string row_name(Basis a, Basis b, int la, int lb) {
    std::string s = "Detected ";
    s += basis_char(a);
    s += basis_char(b);
    s += '_';
    s += static_cast<char>('0' + la);
    s += static_cast<char>('0' + lb);
    return s;
  }

  /// Sum over the categories (matched subsets are already inside them).
  T total() const {
    T t{};
    for_each_category([&](Basis a, Basis b, int la, int lb) { t += cells[index(a, b, la, lb)]; });
    return t;
  }

  BasicCountsTable& operator+=(const BasicCountsTable& o) {
    for (std::size_t i = 0; i < cells.size(); ++i) cells[i] += o.cells[i];
    x11Matched += o.x11Matched;
    x11Errors += o.x11Errors;
    x22Matched += o.x22Matched;
    x22Errors += o.x22Errors;
    return *this;
  }
  friend BasicCountsTable operator+(BasicCountsTable a, const BasicCountsTable& b) { return a += b; }
  bool operator==(const BasicCountsTable&) const = default;

  double qber_x11() const { return x11Matched > T{} ? static_cast<double>(x11Errors) / static_cast<double>(x11Matched) : 0.0; }
  double qber_x22() const { return x22Matched > T{} ? static_cast<double>(x22Errors) / static_cast<double>(x22Matched) : 0.0; }

  /// Z-basis bit error rate.  A ZZ_33 event has Alice bit 1 and Bob bit 0;
  /// a ZZ_00 event has Alice 0 and Bob 1.  Both are errors.
  double qber_z() const {
    const double e = static_cast<double>(at(Basis::kZ, Basis::kZ, 3, 3) + at(Basis::kZ, Basis::kZ, 0, 0));
    const double t = e + static_cast<double>(at(Basis::kZ, Basis::kZ, 0, 3) + at(Basis::kZ, Basis::kZ, 3, 0));
    return t > 0 ? e / t : 0.0;
  }
};

using CountsTable = BasicCountsTable<std::uint64_t>;
using ExpectedCounts = BasicCountsTable<double>;

template <class T>
void write_counts(std::ostream& os, const BasicCountsTable<T>& c) {
  BasicCountsTable<T>::for_each_category([&](Basis a, Basis b, int la, int lb) {
    os << BasicCountsTable<T>::row_name(a, b, la, lb) << " = " << c.at(a, b, la, lb) << '\n';
  });
  os << "Matched X_11 = " << c.x11Matched << '\n'
     << "Errors X_11 = " << c.x11Errors << '\n'
     << "Matched X_22 = " << c.x22Matched << '\n'
     << "Errors X_22 = " << c.x22Errors << '\n';
}

}  // namespace snstf
