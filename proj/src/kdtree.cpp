// Copyright 2026 The ctrlflow Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ctrlflow/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <queue>

namespace ctrlflow {

KdTree::KdTree(const Matrix& points, int leaf_size)
    : n_(points.rows()), k_(points.cols()) {
  order_.resize(static_cast<std::size_t>(n_));
  std::iota(order_.begin(), order_.end(), 0);
  data_.resize(static_cast<std::size_t>(n_ * k_));
  for (Eigen::Index r = 0; r < n_; ++r) {
    for (Eigen::Index c = 0; c < k_; ++c) data_[r * k_ + c] = points(r, c);
  }
  if (n_ > 0) Build(0, n_, std::max(1, leaf_size));
  // Re-lay the points in tree order for locality.
  std::vector<double> laid(data_.size());
  for (Eigen::Index s = 0; s < n_; ++s) {
    std::copy_n(&data_[order_[s] * k_], k_, &laid[s * k_]);
  }
  data_ = std::move(laid);
}

int KdTree::Build(Eigen::Index begin, Eigen::Index end, int leaf_size) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({begin, end, -1, -1});
  lo_.resize(lo_.size() + k_, std::numeric_limits<double>::infinity());
  hi_.resize(hi_.size() + k_, -std::numeric_limits<double>::infinity());
  for (Eigen::Index s = begin; s < end; ++s) {
    for (Eigen::Index c = 0; c < k_; ++c) {
      const double v = data_[order_[s] * k_ + c];
      lo_[id * k_ + c] = std::min(lo_[id * k_ + c], v);
      hi_[id * k_ + c] = std::max(hi_[id * k_ + c], v);
    }
  }
  if (end - begin <= leaf_size) return id;
  Eigen::Index axis = 0;
  double spread = -1.0;
  for (Eigen::Index c = 0; c < k_; ++c) {
    const double s = hi_[id * k_ + c] - lo_[id * k_ + c];
    if (s > spread) {
      spread = s;
      axis = c;
    }
  }
  if (!(spread > 0.0)) return id;  // all points coincide
  const Eigen::Index mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](Eigen::Index a, Eigen::Index b) {
                     const double va = data_[a * k_ + axis], vb = data_[b * k_ + axis];
                     return va != vb ? va < vb : a < b;
                   });
  const int left = Build(begin, mid, leaf_size);
  const int right = Build(mid, end, leaf_size);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

double KdTree::BoxDistance(int node, const double* q) const {
  double d2 = 0.0;
  for (Eigen::Index c = 0; c < k_; ++c) {
    const double lo = lo_[node * k_ + c], hi = hi_[node * k_ + c];
    const double gap = q[c] < lo ? lo - q[c] : (q[c] > hi ? q[c] - hi : 0.0);
    d2 += gap * gap;
  }
  return d2;
}

double KdTree::PointDistance(Eigen::Index slot, const double* q) const {
  const double* p = &data_[slot * k_];
  double d2 = 0.0;
  for (Eigen::Index c = 0; c < k_; ++c) {
    const double diff = p[c] - q[c];
    d2 += diff * diff;
  }
  return d2;
}

std::vector<std::pair<double, Eigen::Index>> KdTree::Nearest(const Vector& q,
                                                             int k) const {
  RequireDim(q, k_, "kd-tree query");
  std::vector<std::pair<double, Eigen::Index>> out;
  if (n_ == 0 || k < 1) return out;
  const auto kk = static_cast<std::size_t>(std::min<Eigen::Index>(k, n_));
  std::priority_queue<std::pair<double, Eigen::Index>> heap;
  const double* qp = q.data();
  auto worst = [&] {
    return heap.size() < kk ? std::numeric_limits<double>::infinity() : heap.top().first;
  };
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    if (BoxDistance(id, qp) > worst()) continue;
    const Node& node = nodes_[id];
    if (node.left < 0) {
      for (Eigen::Index s = node.begin; s < node.end; ++s) {
        const std::pair<double, Eigen::Index> cand{PointDistance(s, qp), order_[s]};
        if (heap.size() < kk) {
          heap.push(cand);
        } else if (cand < heap.top()) {
          heap.pop();
          heap.push(cand);
        }
      }
      continue;
    }
    // Visit the nearer child first.
    const double dl = BoxDistance(node.left, qp), dr = BoxDistance(node.right, qp);
    if (dl <= dr) {
      stack.push_back(node.right);
      stack.push_back(node.left);
    } else {
      stack.push_back(node.left);
      stack.push_back(node.right);
    }
  }
  while (!heap.empty()) {
    out.push_back(heap.top());
    heap.pop();
  }
  std::reverse(out.begin(), out.end());
  return out;
}

}  // namespace ctrlflow
