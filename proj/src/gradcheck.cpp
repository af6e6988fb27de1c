#include "gridpose/gradcheck.hpp"

#include <cmath>
#include <limits>

namespace gridpose::ad {

GradCheckReport gradcheck(const std::function<Tensor()>& f,
                          const std::vector<Tensor>& leaves, double step,
                          double tol) {
  require(step > 0.0, "gradcheck: step must be positive");
  require(tol > 0.0, "gradcheck: tol must be positive");
  for (const auto& t : leaves) {
    require(t.defined(), "gradcheck: undefined leaf");
    require(t.ptr()->node < 0, "gradcheck: leaves must not be op outputs");
    require(t.requires_grad(), "gradcheck: leaves must be tracked variables");
  }

  Graph::active().clear();
  for (const auto& t : leaves) {
    Tensor mut = t;
    mut.zero_grad();
  }
  Tensor root = f();
  require(root.size() == 1, "gradcheck: f must be scalar-valued");
  backward(root);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(leaves.size());
  for (const auto& t : leaves) analytic.push_back(t.grad());
  Graph::active().clear();

  GradCheckReport report;
  NoGradGuard eval_only;
  for (size_t li = 0; li < leaves.size(); ++li) {
    Tensor leaf = leaves[li];
    auto& vals = leaf.mutable_values();
    for (size_t ei = 0; ei < vals.size(); ++ei) {
      const double saved = vals[ei];
      GradCheckIssue issue;
      issue.leaf = static_cast<int>(li);
      issue.index = static_cast<int64_t>(ei);
      issue.analytic = analytic[li][ei];
      bool bad = false;
      double fp = 0.0, fm = 0.0;
      try {
        vals[ei] = saved + step;
        fp = f().value();
        vals[ei] = saved - step;
        fm = f().value();
      } catch (const DomainError&) {
        bad = true;
      }
      vals[ei] = saved;
      if (bad || !std::isfinite(fp) || !std::isfinite(fm)) {
        issue.non_finite = true;
        issue.rel_error = std::numeric_limits<double>::infinity();
        report.failures.push_back(issue);
        continue;
      }
      issue.numeric = (fp - fm) / (2.0 * step);
      const double denom =
          std::max({1.0, std::fabs(issue.analytic), std::fabs(issue.numeric)});
      issue.rel_error = std::fabs(issue.analytic - issue.numeric) / denom;
      ++report.checked;
      if (issue.rel_error > report.max_rel_error) {
        report.max_rel_error = issue.rel_error;
        report.worst = issue;
      }
      if (issue.rel_error > tol) report.failures.push_back(issue);
    }
  }
  report.pass = report.failures.empty();
  return report;
}

}  // namespace gridpose::ad
