#include "flowgnn/dataio/split.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "flowgnn/errors.hpp"
#include "flowgnn/rng.hpp"

namespace flowgnn::dataio {

void SplitSpec::validate() const {
  for (std::uint32_t r : ratios)
    if (r == 0) throw ConfigError("split ratios must all be positive");
}

namespace {

// Largest-remainder seats for `total` across the three ratios; ties go to
// the earlier split so the result is total-order deterministic.
std::array<std::size_t, 3> largest_remainder(std::size_t total,
                                             const std::array<std::uint32_t, 3>& ratios) {
  const double denom = double(ratios[0]) + double(ratios[1]) + double(ratios[2]);
  std::array<std::size_t, 3> seats{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (int j = 0; j < 3; ++j) {
    const double exact = double(total) * double(ratios[j]) / denom;
    seats[j] = static_cast<std::size_t>(exact);
    frac[j] = exact - double(seats[j]);
    assigned += seats[j];
  }
  while (assigned < total) {
    int best = 0;
    for (int j = 1; j < 3; ++j)
      if (frac[j] > frac[best]) best = j;
    ++seats[best];
    frac[best] = -1.0;
    ++assigned;
  }
  return seats;
}

void shuffle_indices(std::vector<std::size_t>& idx, rng::Pcg& gen) {
  for (std::size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[gen.next_below(i)]);
}

}  // namespace

std::array<std::size_t, 3> apportion(std::size_t total, const SplitSpec& spec) {
  spec.validate();
  return largest_remainder(total, spec.ratios);
}

SplitResult split(const std::vector<int>& labels, const SplitSpec& spec) {
  spec.validate();
  const std::size_t n = labels.size();
  if (n == 0) throw DataError("cannot split zero records");
  const std::array<std::size_t, 3> target = largest_remainder(n, spec.ratios);
  const double denom =
      double(spec.ratios[0]) + double(spec.ratios[1]) + double(spec.ratios[2]);

  SplitResult out;
  if (n < 10) {
    out.stratified = false;
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    rng::Pcg gen(rng::derive(spec.seed, "split_plain"));
    shuffle_indices(idx, gen);
    out.train.assign(idx.begin(), idx.begin() + target[0]);
    out.val.assign(idx.begin() + target[0],
                   idx.begin() + target[0] + target[1]);
    out.test.assign(idx.begin() + target[0] + target[1], idx.end());
  } else {
    // Per-class largest remainder, each class shuffled under its own
    // derived stream.
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < n; ++i) by_class[labels[i]].push_back(i);

    struct ClassAlloc {
      std::vector<std::size_t> idx;       // shuffled member indices
      std::array<std::size_t, 3> seats{}; // boundaries into idx
      double exact_train = 0.0;
    };
    std::vector<ClassAlloc> alloc;
    for (auto& [cls, members] : by_class) {
      ClassAlloc a;
      a.idx = std::move(members);
      rng::Pcg gen(rng::combine(rng::derive(spec.seed, "split_class"),
                                static_cast<std::uint64_t>(cls)));
      shuffle_indices(a.idx, gen);
      a.seats = largest_remainder(a.idx.size(), spec.ratios);
      a.exact_train =
          double(a.idx.size()) * double(spec.ratios[0]) / denom;
      alloc.push_back(std::move(a));
    }

    // Per-class sums can drift off the global apportionment by a seat or
    // two; shift single records between splits to land exactly on it.
    // Train donors are only classes at or above their exact share and
    // receivers only those at or below, so every class's train count
    // stays within one record of exact.
    auto sum_of = [&](int j) {
      std::size_t s = 0;
      for (const ClassAlloc& a : alloc) s += a.seats[j];
      return s;
    };
    auto train_dev = [&](const ClassAlloc& a) {
      return double(a.seats[0]) - a.exact_train;
    };

    while (sum_of(0) > target[0]) {
      int donor = -1;
      for (std::size_t c = 0; c < alloc.size(); ++c)
        if (alloc[c].seats[0] > 0 && train_dev(alloc[c]) >= 0.0 &&
            (donor < 0 || train_dev(alloc[c]) > train_dev(alloc[donor])))
          donor = static_cast<int>(c);
      if (donor < 0) throw UsageError("split rebalance: no train donor");
      const int to = sum_of(1) < target[1] ? 1 : 2;
      --alloc[donor].seats[0];
      ++alloc[donor].seats[to];
    }
    while (sum_of(0) < target[0]) {
      int recv = -1, from = -1;
      for (std::size_t c = 0; c < alloc.size(); ++c) {
        if (train_dev(alloc[c]) > 0.0) continue;
        for (int j : {1, 2})
          if (sum_of(j) > target[j] && alloc[c].seats[j] > 0) {
            if (recv < 0 || train_dev(alloc[c]) < train_dev(alloc[recv])) {
              recv = static_cast<int>(c);
              from = j;
            }
            break;
          }
      }
      if (recv < 0) throw UsageError("split rebalance: no train receiver");
      --alloc[recv].seats[from];
      ++alloc[recv].seats[0];
    }
    while (sum_of(1) > target[1]) {
      int donor = -1;
      for (std::size_t c = 0; c < alloc.size(); ++c)
        if (alloc[c].seats[1] > 0 &&
            (donor < 0 || alloc[c].seats[1] > alloc[donor].seats[1]))
          donor = static_cast<int>(c);
      --alloc[donor].seats[1];
      ++alloc[donor].seats[2];
    }
    while (sum_of(2) > target[2]) {
      int donor = -1;
      for (std::size_t c = 0; c < alloc.size(); ++c)
        if (alloc[c].seats[2] > 0 &&
            (donor < 0 || alloc[c].seats[2] > alloc[donor].seats[2]))
          donor = static_cast<int>(c);
      --alloc[donor].seats[2];
      ++alloc[donor].seats[1];
    }

    for (const ClassAlloc& a : alloc) {
      std::size_t p = 0;
      for (std::size_t k = 0; k < a.seats[0]; ++k) out.train.push_back(a.idx[p++]);
      for (std::size_t k = 0; k < a.seats[1]; ++k) out.val.push_back(a.idx[p++]);
      for (std::size_t k = 0; k < a.seats[2]; ++k) out.test.push_back(a.idx[p++]);
    }
  }

  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

}  // namespace flowgnn::dataio
