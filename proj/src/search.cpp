#include "lmmsubset/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lmmsubset/errors.hpp"

namespace lmmsubset {

SearchConfig SearchConfig::defaults(int p, bool intercept) {
  SearchConfig c;
  c.s_max = std::min(p, 35);
  c.s_k = 15;
  c.forced_in = intercept ? std::vector<int>{0} : std::vector<int>{};
  return c;
}

std::vector<SubsetCoefficients> CandidateList::flatten() const {
  std::vector<SubsetCoefficients> out;
  for (const auto& level : by_size) out.insert(out.end(), level.begin(), level.end());
  return out;
}

std::size_t CandidateList::total() const {
  std::size_t n = 0;
  for (const auto& level : by_size) n += level.size();
  return n;
}

Eigen::VectorXd least_squares(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                              const std::vector<int>& subset) {
  check_subset(subset, static_cast<int>(X.cols()));
  if (subset.empty()) return Eigen::VectorXd(0);
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(select_columns(X, subset));
  cod.setThreshold(1e-10);
  return cod.solve(y);
}

double rss(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, const std::vector<int>& subset) {
  if (subset.empty()) return y.squaredNorm();
  const Eigen::VectorXd coef = least_squares(y, X, subset);
  return (y - select_columns(X, subset) * coef).squaredNorm();
}

std::vector<int> prescreen(const PosteriorDraws& draws, int s_max, const std::vector<int>& forced_in) {
  const int p = draws.p();
  check_subset(forced_in, p);
  if (s_max >= p) {
    std::vector<int> all(p);
    std::iota(all.begin(), all.end(), 0);
    return all;
  }
  if (s_max < static_cast<int>(forced_in.size()))
    throw ValidationError("prescreen: s_max is smaller than the forced set");
  std::vector<std::pair<double, int>> ranked;
  for (int j = 0; j < p; ++j) {
    if (std::binary_search(forced_in.begin(), forced_in.end(), j)) continue;
    const Eigen::VectorXd col = draws.beta.col(j);
    const double mean = col.mean();
    const double sd = draws.draws() > 1
                          ? std::sqrt((col.array() - mean).square().sum() / (draws.draws() - 1))
                          : 0.0;
    ranked.emplace_back(std::abs(mean) / std::max(sd, 1e-12), j);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<int> keep = forced_in;
  for (std::size_t k = 0; k < ranked.size() && static_cast<int>(keep.size()) < s_max; ++k)
    keep.push_back(ranked[k].second);
  std::sort(keep.begin(), keep.end());
  return keep;
}

namespace {

struct Entry {
  double rss;
  std::vector<int> subset;  // sorted original indices (free columns only)
  bool operator<(const Entry& o) const {
    return rss < o.rss || (rss == o.rss && subset < o.subset);
  }
};

class Incumbents {
 public:
  explicit Incumbents(std::size_t capacity) : capacity_(capacity) {}

  void offer(double rss, std::vector<int> subset) {
    std::sort(subset.begin(), subset.end());
    Entry e{rss, std::move(subset)};
    if (entries_.size() >= capacity_ && !(e < entries_.back())) return;
    entries_.insert(std::upper_bound(entries_.begin(), entries_.end(), e), std::move(e));
    if (entries_.size() > capacity_) entries_.pop_back();
  }
  bool full() const { return entries_.size() >= capacity_; }
  double worst() const {
    return full() ? entries_.back().rss : std::numeric_limits<double>::infinity();
  }
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::size_t capacity_;
  std::vector<Entry> entries_;
};

// Swaps adjacent columns i, i+1 of upper-triangular R and restores the
// triangle with one Givens rotation on rows i, i+1.
void swap_adjacent(Eigen::MatrixXd& R, std::vector<int>& order, int i) {
  R.col(i).swap(R.col(i + 1));
  std::swap(order[i], order[i + 1]);
  const double a = R(i, i);
  const double b = R(i + 1, i);
  if (b == 0.0) return;
  const double r = std::hypot(a, b);
  const double c = a / r;
  const double s = b / r;
  const int n = static_cast<int>(R.cols());
  for (int k = i; k < n; ++k) {
    const double x = R(i, k);
    const double z = R(i + 1, k);
    R(i, k) = c * x + s * z;
    R(i + 1, k) = -s * x + c * z;
  }
  R(i + 1, i) = 0.0;
}

class Tree {
 public:
  Tree(Eigen::MatrixXd R, std::vector<int> order, int kmax_free, int s_k, double tol)
      : d_(static_cast<int>(order.size())), kmax_(kmax_free), tol_(tol) {
    for (int k = 0; k <= kmax_; ++k) heaps_.emplace_back(static_cast<std::size_t>(s_k));
    bufs_.assign(d_ + 2, Eigen::MatrixXd());
    orders_.assign(d_ + 2, {});
    bufs_[0] = std::move(R);
    orders_[0] = std::move(order);
  }

  void run() {
    const double root = tail(bufs_[0], 0);
    heaps_[0].offer(root, {});
    ++stats_.nodes_visited;
    if (kmax_ > 0 && d_ > 0) expand(0, 0, d_, root);
  }

  const std::vector<Incumbents>& heaps() const { return heaps_; }
  SearchStats& stats() { return stats_; }

 private:
  // RSS of the prefix of length j in the ordering held by R.
  double tail(const Eigen::MatrixXd& R, int j) const {
    return R.col(d_).segment(j, d_ + 1 - j).squaredNorm();
  }

  bool prunable(double bound, int lo, int hi) const {
    for (int k = lo; k <= hi; ++k)
      if (!heaps_[k].full() || bound <= heaps_[k].worst() + tol_) return false;
    return true;
  }

  // Node at `level`: positions [0, depth) included, [depth, depth + q)
  // candidates, remaining positions excluded.
  void expand(int level, int depth, int q, double parent_rss) {
    Eigen::MatrixXd& R = bufs_[level];
    std::vector<int>& order = orders_[level];
    for (int t = 0; t < q; ++t) {
      const int child_depth = depth + 1;
      const int child_q = q - t - 1;
      const double child_rss = tail(R, child_depth);
      if (child_rss > parent_rss + tol_) ++stats_.monotonicity_violations;
      heaps_[child_depth].offer(child_rss, {order.begin(), order.begin() + child_depth});
      ++stats_.nodes_visited;

      const int hi = std::min(child_depth + child_q, kmax_);
      if (child_q > 0 && child_depth < kmax_) {
        const double bound = tail(R, child_depth + child_q);
        if (prunable(bound, child_depth + 1, hi)) {
          ++stats_.subtrees_pruned;
        } else {
          bufs_[level + 1] = R;
          orders_[level + 1] = order;
          expand(level + 1, child_depth, child_q, child_rss);
        }
      }
      // Move r_t just past the remaining candidates for the next sibling.
      for (int i = depth; i < depth + q - t - 1; ++i) swap_adjacent(R, order, i);
    }
  }

  int d_;
  int kmax_;
  double tol_;
  std::vector<Incumbents> heaps_;
  std::vector<Eigen::MatrixXd> bufs_;
  std::vector<std::vector<int>> orders_;
  SearchStats stats_;
};

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace

CandidateList branch_and_bound(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                               const SearchConfig& config) {
  const int p = static_cast<int>(X.cols());
  const int N = static_cast<int>(X.rows());
  if (y.size() != N) throw ValidationError("shape error: y_star and X_star row counts differ");
  std::vector<int> forced = config.forced_in;
  std::sort(forced.begin(), forced.end());
  check_subset(forced, p);
  const int nf = static_cast<int>(forced.size());
  if (config.s_max < 1 || config.s_max > p)
    throw ValidationError("search config: s_max must be in [1, p]");
  if (config.s_max < nf) throw ValidationError("search config: s_max is smaller than forced_in");
  if (config.s_k < 1) throw ValidationError("search config: s_k must be >= 1");

  std::vector<int> free_cols;
  for (int j = 0; j < p; ++j)
    if (!std::binary_search(forced.begin(), forced.end(), j)) free_cols.push_back(j);
  const int d = static_cast<int>(free_cols.size());
  const int kmax_free = std::min(config.s_max - nf, d);

  // Project the forced columns out of y and the free columns.
  Eigen::VectorXd y_r = y;
  Eigen::MatrixXd F = select_columns(X, free_cols);
  if (nf > 0) {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(select_columns(X, forced));
    cod.setThreshold(1e-10);
    y_r -= select_columns(X, forced) * cod.solve(y);
    F -= select_columns(X, forced) * cod.solve(F);
  }

  // Strongest marginal association first: dropping it early tightens bounds.
  std::vector<double> score(d, 0.0);
  const double ynorm = y_r.norm();
  for (int k = 0; k < d; ++k) {
    const double cn = F.col(k).norm();
    if (cn > 0 && ynorm > 0) score[k] = std::abs(F.col(k).dot(y_r)) / (cn * ynorm);
  }
  std::vector<int> perm(d);
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(), [&](int a, int b) { return score[a] > score[b]; });

  Eigen::MatrixXd A(N, d + 1);
  std::vector<int> order(d);
  for (int k = 0; k < d; ++k) {
    A.col(k) = F.col(perm[k]);
    order[k] = free_cols[perm[k]];
  }
  A.col(d) = y_r;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(d + 1, d + 1);
  const int rrows = std::min(N, d + 1);
  R.topRows(rrows) = qr.matrixQR().topRows(rrows).triangularView<Eigen::Upper>();

  Tree tree(std::move(R), order, kmax_free, config.s_k, 1e-10 * std::max(y_r.squaredNorm(), 1e-300));
  tree.run();

  CandidateList out;
  out.stats = tree.stats();
  for (int k = 0; k <= kmax_free; ++k) out.stats.subsets_total += binomial(d, k);
  out.by_size.assign(config.s_max + 1, {});
  for (int k = 0; k <= kmax_free; ++k) {
    if (nf + k == 0) continue;  // the empty model is not a candidate
    auto& level = out.by_size[nf + k];
    for (const auto& e : tree.heaps()[k].entries()) {
      SubsetCoefficients sc;
      sc.subset = forced;
      sc.subset.insert(sc.subset.end(), e.subset.begin(), e.subset.end());
      std::sort(sc.subset.begin(), sc.subset.end());
      const Eigen::VectorXd coef = least_squares(y, X, sc.subset);
      sc.delta_hat = Eigen::VectorXd::Zero(p);
      for (std::size_t c = 0; c < sc.subset.size(); ++c) sc.delta_hat(sc.subset[c]) = coef(static_cast<Eigen::Index>(c));
      sc.expected_loss = (y - X * sc.delta_hat).squaredNorm();
      level.push_back(std::move(sc));
    }
    std::stable_sort(level.begin(), level.end(), [](const auto& a, const auto& b) {
      return a.expected_loss < b.expected_loss ||
             (a.expected_loss == b.expected_loss && a.subset < b.subset);
    });
  }
  return out;
}

}  // namespace lmmsubset
