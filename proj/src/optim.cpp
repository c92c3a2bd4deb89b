#include "prodenv/optim.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace prodenv {

NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x0,
                             const NelderMeadOptions& opt) {
    const int n = static_cast<int>(x0.size());
    std::vector<Eigen::VectorXd> pts(n + 1, x0);
    std::vector<double> val(n + 1);
    int evals = 0;
    auto eval = [&](const Eigen::VectorXd& x) {
        ++evals;
        return f(x);
    };
    for (int i = 0; i < n; ++i) pts[i + 1][i] += opt.initial_step;
    for (int i = 0; i <= n; ++i) val[i] = eval(pts[i]);

    std::vector<int> order(n + 1);
    while (evals < opt.max_evaluations) {
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) { return val[a] < val[b]; });
        const int best = order.front(), worst = order.back(), second = order[n - 1];
        double spread = 0.0;
        for (int i = 0; i <= n; ++i) spread = std::max(spread, (pts[i] - pts[best]).cwiseAbs().maxCoeff());
        if (spread < opt.x_tolerance || val[worst] - val[best] < opt.f_tolerance) break;

        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
        for (int i = 0; i <= n; ++i)
            if (i != worst) centroid += pts[i];
        centroid /= n;

        const Eigen::VectorXd xr = centroid + (centroid - pts[worst]);
        const double fr = eval(xr);
        if (fr < val[best]) {
            const Eigen::VectorXd xe = centroid + 2.0 * (centroid - pts[worst]);
            const double fe = eval(xe);
            if (fe < fr) {
                pts[worst] = xe;
                val[worst] = fe;
            } else {
                pts[worst] = xr;
                val[worst] = fr;
            }
            continue;
        }
        if (fr < val[second]) {
            pts[worst] = xr;
            val[worst] = fr;
            continue;
        }
        const bool outside = fr < val[worst];
        const Eigen::VectorXd xc = outside ? Eigen::VectorXd(centroid + 0.5 * (xr - centroid))
                                           : Eigen::VectorXd(centroid + 0.5 * (pts[worst] - centroid));
        const double fc = eval(xc);
        if (fc < (outside ? fr : val[worst])) {
            pts[worst] = xc;
            val[worst] = fc;
            continue;
        }
        for (int i = 0; i <= n; ++i) {
            if (i == best) continue;
            pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
            val[i] = eval(pts[i]);
        }
    }
    const int best = static_cast<int>(std::min_element(val.begin(), val.end()) - val.begin());
    return {pts[best], val[best], evals};
}

}  // namespace prodenv
