#include "bsysid/stats.hpp"

#include "bsysid/errors.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace bsysid {

SufficientStats::SufficientStats(Index n)
    : n_(n)
{
    if (n < 1) {
        throw std::invalid_argument("FIR order must be positive");
    }
    r_ = MatrixXd::Zero(n, n);
    ytilde_ = VectorXd::Zero(n);
    tail_ = VectorXd::Zero(n - 1);
}

MatrixXd SufficientStats::regressors(const VectorXd& u) const
{
    const Index nk = u.size();
    VectorXd ext(n_ - 1 + nk);
    ext << tail_, u;

    MatrixXd phi(nk, n_);
    for (Index t = 0; t < nk; ++t) {
        // ext index of u(t) is t + n - 1; lag j reads u(t - j).
        for (Index j = 0; j < n_; ++j) {
            phi(t, j) = ext(t + n_ - 1 - j);
        }
    }
    return phi;
}

void SufficientStats::ingest(const Batch& batch)
{
    if (batch.u.size() != batch.y.size()) {
        throw std::invalid_argument("batch input/output lengths differ ("
                                    + std::to_string(batch.u.size()) + " vs "
                                    + std::to_string(batch.y.size()) + ")");
    }
    if (batch.u.size() == 0) {
        throw std::invalid_argument("empty batch");
    }
    if (!batch.u.allFinite() || !batch.y.allFinite()) {
        throw std::invalid_argument("batch contains non-finite samples");
    }

    const Index nk = batch.size();
    const MatrixXd phi = regressors(batch.u);

    if (nk == 1) {
        const VectorXd row = phi.row(0).transpose();
        r_.noalias() += row * row.transpose();
        ytilde_.noalias() += row * batch.y(0);
    } else {
        r_.noalias() += phi.transpose() * phi;
        ytilde_.noalias() += phi.transpose() * batch.y;
    }
    ybar_ += batch.y.squaredNorm();
    nbar_ += nk;

    if (n_ > 1) {
        VectorXd ext(n_ - 1 + nk);
        ext << tail_, batch.u;
        tail_ = ext.tail(n_ - 1);
    }
}

void SufficientStats::write(std::ostream& os) const
{
    const auto old_prec = os.precision(17);
    os << "# bsysid-stats v1\n";
    os << "n," << n_ << "\n";
    os << "nbar," << nbar_ << "\n";
    os << "ybar," << ybar_ << "\n";
    os << "ytilde";
    for (Index i = 0; i < n_; ++i) {
        os << ',' << ytilde_(i);
    }
    os << "\ntail";
    for (Index i = 0; i < tail_.size(); ++i) {
        os << ',' << tail_(i);
    }
    os << "\nR";
    for (Index i = 0; i < n_; ++i) {
        for (Index j = 0; j < n_; ++j) {
            os << ',' << r_(i, j);
        }
    }
    os << "\n";
    os.precision(old_prec);
}

namespace {

std::vector<double> read_row(std::istream& is, const std::string& key)
{
    std::string line;
    if (!std::getline(is, line)) {
        throw std::runtime_error("stats checkpoint truncated before '" + key + "'");
    }
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    if (cell != key) {
        throw std::runtime_error("stats checkpoint: expected '" + key + "', found '" + cell + "'");
    }
    std::vector<double> values;
    while (std::getline(ss, cell, ',')) {
        values.push_back(std::stod(cell));
    }
    return values;
}

} // namespace

SufficientStats SufficientStats::read(std::istream& is)
{
    std::string header;
    std::getline(is, header);
    if (header != "# bsysid-stats v1") {
        throw std::runtime_error("unrecognized stats checkpoint header");
    }
    const auto n_row = read_row(is, "n");
    if (n_row.size() != 1) {
        throw std::runtime_error("stats checkpoint: bad order");
    }
    SufficientStats s(static_cast<Index>(n_row[0]));
    const Index n = s.n_;
    s.nbar_ = static_cast<std::int64_t>(read_row(is, "nbar").at(0));
    s.ybar_ = read_row(is, "ybar").at(0);

    const auto yt = read_row(is, "ytilde");
    const auto tl = read_row(is, "tail");
    const auto rr = read_row(is, "R");
    if (static_cast<Index>(yt.size()) != n || static_cast<Index>(tl.size()) != n - 1
        || static_cast<Index>(rr.size()) != n * n) {
        throw std::runtime_error("stats checkpoint: field sizes do not match order");
    }
    s.ytilde_ = Eigen::Map<const VectorXd>(yt.data(), n);
    s.tail_ = Eigen::Map<const VectorXd>(tl.data(), n - 1);
    s.r_ = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        rr.data(), n, n);
    return s;
}

VectorXd ls_estimate(const SufficientStats& stats)
{
    const MatrixXd& r = stats.R();
    Eigen::LLT<MatrixXd> llt(r);
    if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-13)) {
        throw RankDeficient("regressor Gram matrix is rank deficient");
    }
    return llt.solve(stats.Ytilde());
}

LsResult ls_estimate_or_ridge(const SufficientStats& stats)
{
    try {
        return {ls_estimate(stats), false};
    } catch (const RankDeficient&) {
        const Index n = stats.order();
        const double trace = stats.R().trace();
        if (!(trace > 0.0)) {
            return {VectorXd::Zero(n), true};
        }
        const double ridge = 1e-8 * trace / static_cast<double>(n);
        MatrixXd reg = stats.R();
        reg.diagonal().array() += ridge;
        Eigen::LDLT<MatrixXd> ldlt(reg);
        return {ldlt.solve(stats.Ytilde()), true};
    }
}

double noise_variance(const SufficientStats& stats, const VectorXd& h_ls)
{
    const Index n = stats.order();
    if (stats.Nbar() <= n) {
        throw std::domain_error("noise variance needs more samples than the FIR order");
    }
    const double rss = stats.Ybar() - 2.0 * stats.Ytilde().dot(h_ls) + h_ls.dot(stats.R() * h_ls);
    const double s2 = rss / static_cast<double>(stats.Nbar() - n);
    return std::max(s2, kMinNoiseVariance);
}

MatrixXd sherman_morrison_inverse_update(const MatrixXd& r_inv, const VectorXd& row)
{
    const VectorXd v = r_inv * row;
    const double denom = 1.0 + row.dot(v);
    if (!(denom > 1e-12)) {
        throw IllConditioned("Sherman-Morrison denominator too small; refactorize");
    }
    MatrixXd out = r_inv;
    out.noalias() -= (v / denom) * v.transpose();
    return out;
}

} // namespace bsysid
