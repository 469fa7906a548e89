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

#ifndef CTRLFLOW_KDTREE_HPP_
#define CTRLFLOW_KDTREE_HPP_

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "ctrlflow/common.hpp"

namespace ctrlflow {

// Static kd-tree over the rows of a point matrix, with per-node bounding
// boxes. Queries are exact. Results depend only on the point set and its row
// order, never on traversal order: nearest-neighbour ties go to the lower
// row index.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(const Matrix& points, int leaf_size = 16);

  bool empty() const { return n_ == 0; }

  // The k nearest rows as (squared distance, row), ascending.
  std::vector<std::pair<double, Eigen::Index>> Nearest(const Vector& q,
                                                       int k) const;

  // Calls visit(row, squared distance) for every row within sqrt(r2) of q.
  template <class Visit>
  void Radius(const Vector& q, double r2, Visit&& visit) const {
    RequireDim(q, k_, "kd-tree query");
    if (n_ == 0) return;
    const double* qp = q.data();
    int stack[128];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
      const int id = stack[--top];
      if (BoxDistance(id, qp) > r2) continue;
      const Node& node = nodes_[id];
      if (node.left < 0) {
        for (Eigen::Index s = node.begin; s < node.end; ++s) {
          const double d2 = PointDistance(s, qp);
          if (d2 <= r2) visit(order_[s], d2);
        }
        continue;
      }
      stack[top++] = node.right;
      stack[top++] = node.left;
    }
  }

 private:
  struct Node {
    Eigen::Index begin = 0, end = 0;  // range in order_
    int left = -1, right = -1;
  };
  int Build(Eigen::Index begin, Eigen::Index end, int leaf_size);
  double BoxDistance(int node, const double* q) const;
  double PointDistance(Eigen::Index slot, const double* q) const;

  Eigen::Index n_ = 0;
  Eigen::Index k_ = 0;
  std::vector<double> data_;          // row-major copy, in tree order
  std::vector<Eigen::Index> order_;   // tree slot -> original row
  std::vector<Node> nodes_;
  std::vector<double> lo_, hi_;       // node boxes, k_ per node
};

}  // namespace ctrlflow

#endif  // CTRLFLOW_KDTREE_HPP_
