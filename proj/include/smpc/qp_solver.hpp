/**
 * @file qp_solver.hpp
 * @brief Dense convex QP:  min 1/2 z'Hz + g'z  s.t.  A_ineq z <= b_ineq,  A_eq z = b_eq.
 *
 * Rows flagged in `soft` are relaxed to a_i'z - sigma_i <= b_i with sigma_i >= 0
 * and the cost gains rho_slack sigma_i^2 + linear_slack sigma_i.
 */
#pragma once

#include <Eigen/Core>

#include <iosfwd>
#include <string>
#include <vector>

namespace smpc {

struct QuadraticProgram {
    Eigen::MatrixXd H;
    Eigen::VectorXd g;
    Eigen::MatrixXd A_ineq;
    Eigen::VectorXd b_ineq;
    Eigen::MatrixXd A_eq;
    Eigen::VectorXd b_eq;
    std::vector<bool> soft;  ///< empty or one flag per inequality row
    double rho_slack = 1e5;
    double linear_slack = 1e3;

    explicit QuadraticProgram(int n = 0);

    int num_vars() const { return static_cast<int>(H.rows()); }
    int num_ineq() const { return static_cast<int>(A_ineq.rows()); }
    int num_eq() const { return static_cast<int>(A_eq.rows()); }
    int num_soft() const;

    /// Appends a_i'z <= b_i.
    void add_inequality(const Eigen::RowVectorXd& a, double b, bool is_soft = false);
    void add_equality(const Eigen::RowVectorXd& a, double b);

    /// Throws std::invalid_argument on inconsistent dimensions, non-finite data or an indefinite H.
    void validate() const;
};

enum class QpStatus { Optimal, Infeasible, MaxIter };

std::string to_string(QpStatus s);

struct QpSolution {
    QpStatus status = QpStatus::Infeasible;
    Eigen::VectorXd z;
    Eigen::VectorXd slack;        ///< one entry per soft row, in row order
    Eigen::VectorXd lambda_ineq;  ///< multipliers of the original inequality rows
    Eigen::VectorXd nu_eq;
    double objective = 0.0;       ///< includes slack penalties
    int iterations = 0;
    std::vector<int> active;      ///< indices of inequality rows in the final working set
    // KKT residuals of the slack-augmented problem
    double stationarity = 0.0;
    double primal = 0.0;
    double complementarity = 0.0;

    bool optimal() const { return status == QpStatus::Optimal; }
    double max_kkt_residual() const;
};

/**
 * Dual active-set method. Starts from the equality-constrained minimizer and
 * adds the most violated inequality (lowest index on ties) until the primal is
 * feasible; iteration cap 50 (n + m).
 */
QpSolution solve(const QuadraticProgram& qp);

/// Plain-text dump of H, g, A_ineq, b_ineq, A_eq, b_eq and the soft flags.
void dump_text(const QuadraticProgram& qp, std::ostream& os);

}  // namespace smpc
