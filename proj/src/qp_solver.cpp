#include "smpc/qp_solver.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace smpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kFeasTol = 1e-10;

bool all_finite(const Eigen::MatrixXd& M) { return M.allFinite(); }

// Slack-augmented problem in plain form: all soft rows carry their own slack column.
struct Augmented {
    Eigen::MatrixXd H;
    Eigen::VectorXd g;
    Eigen::MatrixXd C;
    Eigen::VectorXd d;
    Eigen::MatrixXd E;
    Eigen::VectorXd f;
    int n = 0;
    int m = 0;
    int soft = 0;
};

Augmented augment(const QuadraticProgram& qp) {
    Augmented a;
    a.n = qp.num_vars();
    a.m = qp.num_ineq();
    a.soft = qp.num_soft();
    const int na = a.n + a.soft;
    const int ma = a.m + a.soft;

    a.H = Eigen::MatrixXd::Zero(na, na);
    a.H.topLeftCorner(a.n, a.n) = 0.5 * (qp.H + qp.H.transpose());
    a.g = Eigen::VectorXd::Zero(na);
    a.g.head(a.n) = qp.g;
    a.C = Eigen::MatrixXd::Zero(ma, na);
    a.d = Eigen::VectorXd::Zero(ma);
    a.C.topLeftCorner(a.m, a.n) = qp.A_ineq;
    a.d.head(a.m) = qp.b_ineq;

    int j = 0;
    for (int i = 0; i < a.m; ++i) {
        if (qp.soft.empty() || !qp.soft[i]) continue;
        const int col = a.n + j;
        a.C(i, col) = -1.0;
        a.C(a.m + j, col) = -1.0;
        a.H(col, col) = 2.0 * qp.rho_slack;
        a.g(col) = qp.linear_slack;
        ++j;
    }
    a.E = Eigen::MatrixXd::Zero(qp.num_eq(), na);
    if (qp.num_eq() > 0) a.E.leftCols(a.n) = qp.A_eq;
    a.f = qp.b_eq;
    return a;
}

struct Residuals {
    double stationarity = 0.0;
    double primal = 0.0;
    double complementarity = 0.0;
};

Residuals residuals(const Augmented& a, const Eigen::VectorXd& z, const Eigen::VectorXd& lambda,
                    const Eigen::VectorXd& nu) {
    Residuals r;
    Eigen::VectorXd grad = a.H * z + a.g;
    if (a.C.rows() > 0) grad += a.C.transpose() * lambda;
    if (a.E.rows() > 0) grad += a.E.transpose() * nu;
    r.stationarity = grad.size() > 0 ? grad.cwiseAbs().maxCoeff() : 0.0;
    for (int i = 0; i < a.C.rows(); ++i) {
        const double slackness = a.C.row(i).dot(z) - a.d(i);
        r.primal = std::max(r.primal, slackness);
        r.complementarity = std::max(r.complementarity, std::abs(lambda(i) * slackness));
    }
    for (int i = 0; i < a.E.rows(); ++i) r.primal = std::max(r.primal, std::abs(a.E.row(i).dot(z) - a.f(i)));
    return r;
}

class DualActiveSet {
public:
    explicit DualActiveSet(const Augmented& a) : a_(a) {
        llt_.compute(a_.H);
        if (llt_.info() != Eigen::Success || !positive_diagonal()) {
            // Semidefinite Hessian: regularize just enough for a Cholesky factor.
            const double ridge = 1e-9 * std::max(1.0, a_.H.diagonal().cwiseAbs().maxCoeff());
            llt_.compute(a_.H + ridge * Eigen::MatrixXd::Identity(a_.H.rows(), a_.H.cols()));
            if (llt_.info() != Eigen::Success) throw std::invalid_argument("QP Hessian is not positive semidefinite");
        }
    }

    QpStatus run(int max_iter) {
        const int p = static_cast<int>(a_.E.rows());
        lambda_ = Eigen::VectorXd::Zero(a_.C.rows());
        nu_ = Eigen::VectorXd::Zero(p);
        z_ = -llt_.solve(a_.g);
        if (p > 0) {
            const Eigen::MatrixXd Y = llt_.solve(a_.E.transpose());
            const Eigen::MatrixXd M = a_.E * Y;
            Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
            if (lu.rank() < p) return QpStatus::Infeasible;
            nu_ = lu.solve(-(a_.f + a_.E * (-z_)));
            z_ -= Y * nu_;
        }

        while (true) {
            const int q = most_violated();
            if (q < 0) {
                polish();
                return QpStatus::Optimal;
            }
            const Eigen::VectorXd aq = a_.C.row(q).transpose();
            double added = 0.0;
            while (true) {
                if (++iterations_ > max_iter) return QpStatus::MaxIter;

                const Eigen::MatrixXd N = active_normals();
                const Eigen::VectorXd Hinv_a = llt_.solve(aq);
                Eigen::VectorXd r;
                Eigen::VectorXd dz;
                if (N.cols() == 0) {
                    dz = -Hinv_a;
                } else {
                    const Eigen::MatrixXd Hinv_N = llt_.solve(N);
                    const Eigen::MatrixXd M = N.transpose() * Hinv_N;
                    r = M.ldlt().solve(-(N.transpose() * Hinv_a));
                    dz = -(Hinv_a + Hinv_N * r);
                }

                const double slope = aq.dot(dz);
                const double violation = aq.dot(z_) - a_.d(q);
                const double slope_tol = 1e-13 * std::max(1.0, aq.dot(Hinv_a));
                const double t_full = slope < -slope_tol ? std::max(0.0, violation) / -slope : kInf;

                double t_part = kInf;
                int block = -1;
                for (std::size_t j = 0; j < working_.size(); ++j) {
                    const double rj = r(p + static_cast<int>(j));
                    if (rj < -1e-14) {
                        const double ratio = lambda_(working_[j]) / -rj;
                        if (ratio < t_part) {
                            t_part = ratio;
                            block = static_cast<int>(j);
                        }
                    }
                }

                if (t_full == kInf && t_part == kInf) return QpStatus::Infeasible;

                const double t = std::min(t_full, t_part);
                if (t_full < kInf) z_ += t * dz;
                if (r.size() > 0) {
                    if (p > 0) nu_ += t * r.head(p);
                    for (std::size_t j = 0; j < working_.size(); ++j) {
                        lambda_(working_[j]) += t * r(p + static_cast<int>(j));
                    }
                }
                added += t;

                if (t_full <= t_part) {
                    working_.push_back(q);
                    lambda_(q) = added;
                    break;
                }
                lambda_(working_[block]) = 0.0;
                working_.erase(working_.begin() + block);
            }
        }
    }

    const Eigen::VectorXd& z() const { return z_; }
    const Eigen::VectorXd& lambda() const { return lambda_; }
    const Eigen::VectorXd& nu() const { return nu_; }
    const std::vector<int>& working() const { return working_; }
    int iterations() const { return iterations_; }

private:
    bool positive_diagonal() const {
        const Eigen::VectorXd diag = Eigen::MatrixXd(llt_.matrixL()).diagonal();
        return diag.size() == 0 || diag.minCoeff() > 1e-12 * std::max(1.0, diag.maxCoeff());
    }

    int most_violated() const {
        int best = -1;
        double worst = 0.0;
        for (int i = 0; i < a_.C.rows(); ++i) {
            if (std::find(working_.begin(), working_.end(), i) != working_.end()) continue;
            const double v = a_.C.row(i).dot(z_) - a_.d(i);
            if (v > kFeasTol * std::max(1.0, std::abs(a_.d(i))) && v > worst) {
                worst = v;
                best = i;
            }
        }
        return best;
    }

    Eigen::MatrixXd active_normals() const {
        const int p = static_cast<int>(a_.E.rows());
        Eigen::MatrixXd N(a_.H.rows(), p + static_cast<int>(working_.size()));
        if (p > 0) N.leftCols(p) = a_.E.transpose();
        for (std::size_t j = 0; j < working_.size(); ++j) N.col(p + static_cast<int>(j)) = a_.C.row(working_[j]).transpose();
        return N;
    }

    // Re-solve the KKT system of the final working set to remove accumulated drift.
    void polish() {
        const Eigen::MatrixXd N = active_normals();
        if (N.cols() == 0) {
            z_ = -llt_.solve(a_.g);
            return;
        }
        const int n = static_cast<int>(a_.H.rows());
        const int k = static_cast<int>(N.cols());
        const int p = static_cast<int>(a_.E.rows());
        Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + k, n + k);
        K.topLeftCorner(n, n) = a_.H;
        K.topRightCorner(n, k) = N;
        K.bottomLeftCorner(k, n) = N.transpose();
        Eigen::VectorXd rhs(n + k);
        rhs.head(n) = -a_.g;
        if (p > 0) rhs.segment(n, p) = a_.f;
        for (std::size_t j = 0; j < working_.size(); ++j) rhs(n + p + static_cast<int>(j)) = a_.d(working_[j]);
        const Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);
        Eigen::VectorXd x = lu.solve(rhs);
        x += lu.solve(rhs - K * x);  // one step of iterative refinement
        const Eigen::VectorXd z = x.head(n);
        const Eigen::VectorXd mu = x.tail(k);
        if (!x.allFinite()) return;
        const double mu_scale = std::max(1.0, mu.cwiseAbs().maxCoeff());
        for (std::size_t j = 0; j < working_.size(); ++j) {
            if (mu(p + static_cast<int>(j)) < -1e-9 * mu_scale) return;
        }
        for (int i = 0; i < a_.C.rows(); ++i) {
            if (a_.C.row(i).dot(z) - a_.d(i) > 1e-9 * std::max(1.0, std::abs(a_.d(i)))) return;
        }
        z_ = z;
        if (p > 0) nu_ = mu.head(p);
        for (std::size_t j = 0; j < working_.size(); ++j) lambda_(working_[j]) = std::max(0.0, mu(p + static_cast<int>(j)));
    }

    const Augmented& a_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    Eigen::VectorXd z_;
    Eigen::VectorXd lambda_;
    Eigen::VectorXd nu_;
    std::vector<int> working_;
    int iterations_ = 0;
};

}  // namespace

QuadraticProgram::QuadraticProgram(int n)
    : H(Eigen::MatrixXd::Zero(n, n)),
      g(Eigen::VectorXd::Zero(n)),
      A_ineq(0, n),
      b_ineq(0),
      A_eq(0, n),
      b_eq(0) {}

int QuadraticProgram::num_soft() const {
    return static_cast<int>(std::count(soft.begin(), soft.end(), true));
}

void QuadraticProgram::add_inequality(const Eigen::RowVectorXd& a, double b, bool is_soft) {
    if (a.size() != num_vars()) throw std::invalid_argument("inequality row has wrong width");
    const int m = num_ineq();
    if (is_soft && soft.empty()) soft.assign(static_cast<std::size_t>(m), false);
    A_ineq.conservativeResize(m + 1, num_vars());
    A_ineq.row(m) = a;
    b_ineq.conservativeResize(m + 1);
    b_ineq(m) = b;
    if (is_soft || !soft.empty()) soft.push_back(is_soft);
}

void QuadraticProgram::add_equality(const Eigen::RowVectorXd& a, double b) {
    if (a.size() != num_vars()) throw std::invalid_argument("equality row has wrong width");
    const int p = num_eq();
    A_eq.conservativeResize(p + 1, num_vars());
    A_eq.row(p) = a;
    b_eq.conservativeResize(p + 1);
    b_eq(p) = b;
}

void QuadraticProgram::validate() const {
    const int n = num_vars();
    if (H.cols() != n || g.size() != n) throw std::invalid_argument("QP: H/g dimension mismatch");
    if (A_ineq.cols() != n || b_ineq.size() != A_ineq.rows()) throw std::invalid_argument("QP: inequality dimension mismatch");
    if (A_eq.cols() != n || b_eq.size() != A_eq.rows()) throw std::invalid_argument("QP: equality dimension mismatch");
    if (!soft.empty() && static_cast<int>(soft.size()) != num_ineq()) throw std::invalid_argument("QP: soft flag count mismatch");
    if (!all_finite(H) || !all_finite(g) || !all_finite(A_ineq) || !all_finite(b_ineq) || !all_finite(A_eq) ||
        !all_finite(b_eq)) {
        throw std::invalid_argument("QP: non-finite data");
    }
    if (num_soft() > 0 && !(rho_slack > 0.0 && linear_slack >= 0.0)) throw std::invalid_argument("QP: bad slack weights");
    if (n == 0) return;
    const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
    if ((H - H.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) throw std::invalid_argument("QP: H is not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-8 * scale) throw std::invalid_argument("QP: H is not positive semidefinite");
}

std::string to_string(QpStatus s) {
    switch (s) {
        case QpStatus::Optimal: return "optimal";
        case QpStatus::Infeasible: return "infeasible";
        case QpStatus::MaxIter: return "max_iter";
    }
    return "unknown";
}

double QpSolution::max_kkt_residual() const { return std::max({stationarity, primal, complementarity}); }

QpSolution solve(const QuadraticProgram& qp) {
    qp.validate();
    const Augmented a = augment(qp);
    DualActiveSet solver(a);
    const int cap = 50 * (static_cast<int>(a.H.rows()) + static_cast<int>(a.C.rows()) + static_cast<int>(a.E.rows()));

    QpSolution out;
    out.status = solver.run(std::max(cap, 1));
    out.iterations = solver.iterations();
    const Eigen::VectorXd& z = solver.z();
    out.z = z.head(a.n);
    out.slack = z.tail(a.soft);
    out.lambda_ineq = solver.lambda().head(a.m);
    out.nu_eq = solver.nu();
    out.objective = 0.5 * z.dot(a.H * z) + a.g.dot(z);
    for (int i : solver.working()) {
        if (i < a.m) out.active.push_back(i);
    }
    std::sort(out.active.begin(), out.active.end());
    const Residuals r = residuals(a, z, solver.lambda(), solver.nu());
    out.stationarity = r.stationarity;
    out.primal = r.primal;
    out.complementarity = r.complementarity;
    return out;
}

void dump_text(const QuadraticProgram& qp, std::ostream& os) {
    const auto old_flags = os.flags();
    const auto old_prec = os.precision();
    os << std::setprecision(17);
    const auto block = [&](const char* name, const Eigen::MatrixXd& M) {
        os << name << ' ' << M.rows() << ' ' << M.cols() << '\n';
        for (int i = 0; i < M.rows(); ++i) {
            for (int j = 0; j < M.cols(); ++j) os << (j ? " " : "") << M(i, j);
            os << '\n';
        }
    };
    block("H", qp.H);
    block("g", qp.g);
    block("A_ineq", qp.A_ineq);
    block("b_ineq", qp.b_ineq);
    block("A_eq", qp.A_eq);
    block("b_eq", qp.b_eq);
    os << "soft " << qp.soft.size() << '\n';
    for (std::size_t i = 0; i < qp.soft.size(); ++i) os << (i ? " " : "") << (qp.soft[i] ? 1 : 0);
    os << '\n' << "rho_slack " << qp.rho_slack << "\nlinear_slack " << qp.linear_slack << '\n';
    os.flags(old_flags);
    os.precision(old_prec);
}

}  // namespace smpc
