#include "rmpc/numerics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

namespace rmpc {

namespace {

// Diagonal Pade approximant p_m(A) / p_m(-A) of e^A.
Matrix pade(const Matrix& a, std::span<const double> c) {
    const Eigen::Index n = a.rows();
    const Matrix a2 = a * a;
    // Split the polynomial into even and odd parts so only powers of A^2
    // are formed: p(A) = U(A^2) + A V(A^2).
    Matrix even = c[0] * Matrix::Identity(n, n);
    Matrix odd = c[1] * Matrix::Identity(n, n);
    Matrix pw = Matrix::Identity(n, n);
    for (std::size_t k = 2; k < c.size(); k += 2) {
        pw = (pw * a2).eval();
        even += c[k] * pw;
        if (k + 1 < c.size()) odd += c[k + 1] * pw;
    }
    const Matrix v = a * odd;
    return Eigen::PartialPivLU<Matrix>(even - v).solve(even + v);
}

// Pade-13 with the large-norm economy evaluation.
Matrix pade13(const Matrix& a) {
    static constexpr std::array<double, 14> b = {
        64764752532480000.0, 32382376266240000.0, 7771770303897600.0, 1187353796428800.0,
        129060195264000.0,   10559470521600.0,    670442572800.0,     33522128640.0,
        1323241920.0,        40840800.0,          960960.0,           16380.0,
        182.0,               1.0};
    const Eigen::Index n = a.rows();
    const Matrix id = Matrix::Identity(n, n);
    const Matrix a2 = a * a;
    const Matrix a4 = a2 * a2;
    const Matrix a6 = a2 * a4;
    const Matrix u =
        a * (a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 + b[3] * a2 +
             b[1] * id);
    const Matrix v =
        a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * id;
    return Eigen::PartialPivLU<Matrix>(v - u).solve(v + u);
}

}  // namespace

Matrix mat_exp(const Matrix& m, double t) {
    require(m.rows() == m.cols(), "mat_exp: matrix must be square");
    require(all_finite(m) && std::isfinite(t), "mat_exp: non-finite input");

    const Matrix a = t * m;
    const double norm1 = a.cwiseAbs().colwise().sum().maxCoeff();

    static constexpr std::array<double, 4> theta = {1.495585217958292e-2, 2.539398330063230e-1,
                                                    9.504178996162932e-1, 2.097847961257068e0};
    static constexpr std::array<double, 4> c3 = {120.0, 60.0, 12.0, 1.0};
    static constexpr std::array<double, 6> c5 = {30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0};
    static constexpr std::array<double, 8> c7 = {17297280.0, 8648640.0, 1995840.0, 277200.0,
                                                 25200.0,    1512.0,    56.0,      1.0};
    static constexpr std::array<double, 10> c9 = {
        17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0,     110880.0,     3960.0,       90.0,        1.0};

    if (norm1 <= theta[0]) return pade(a, c3);
    if (norm1 <= theta[1]) return pade(a, c5);
    if (norm1 <= theta[2]) return pade(a, c7);
    if (norm1 <= theta[3]) return pade(a, c9);

    constexpr double theta13 = 5.371920351148152e0;
    int squarings = 0;
    Matrix scaled = a;
    if (norm1 > theta13) {
        squarings = static_cast<int>(std::ceil(std::log2(norm1 / theta13)));
        scaled /= std::ldexp(1.0, squarings);
    }
    Matrix e = pade13(scaled);
    for (int s = 0; s < squarings; ++s) e = (e * e).eval();
    return e;
}

double operator_norm(const Matrix& m) {
    require(all_finite(m), "operator_norm: non-finite input");
    if (m.size() == 0) return 0.0;
    // scale out the magnitude so the squared iterates cannot overflow
    const double scale = m.cwiseAbs().maxCoeff();
    if (scale == 0.0) return 0.0;
    const Matrix ms = m / scale;

    Vector v = Vector::Ones(ms.cols());
    v /= v.norm();
    double lambda = 0.0;  // estimate of sigma_max^2 of the scaled matrix
    constexpr int kMaxIter = 200;
    constexpr double kTol = 1e-10;
    for (int it = 0; it < kMaxIter; ++it) {
        Vector w = ms.transpose() * (ms * v);
        const double wnorm = w.norm();
        if (wnorm == 0.0) break;  // v in the null space; lambda so far stands
        const double next = v.dot(w);
        w /= wnorm;
        const bool settled = std::abs(next - lambda) <= kTol * std::max(1.0, std::abs(next));
        lambda = next;
        v = std::move(w);
        if (settled && it > 0) break;
    }
    return scale * std::sqrt(std::max(lambda, 0.0));
}

Vector cn_step(const Matrix& a, const Vector& g_mid, const Vector& x, double h) {
    const Eigen::Index n = a.rows();
    require(a.cols() == n && x.size() == n, "cn_step: dimension mismatch");
    const Matrix minus = Matrix::Identity(n, n) - (0.5 * h) * a;
    Eigen::PartialPivLU<Matrix> lu(minus);
    const Vector& u = lu.matrixLU().diagonal();
    const double dmax = u.cwiseAbs().maxCoeff();
    const double dmin = u.cwiseAbs().minCoeff();
    if (dmin <= 1e-13 * dmax)
        throw SolverError("cn_step: step matrix singular, reduce step");
    Vector rhs = x + (0.5 * h) * (a * x);
    if (g_mid.size() > 0) rhs += h * g_mid;
    return lu.solve(rhs);
}

CnStepper::CnStepper(const Matrix& a, double h)
    : lu_(Matrix(Matrix::Identity(a.rows(), a.rows()) - (0.5 * h) * a)),
      plus_(Matrix::Identity(a.rows(), a.rows()) + (0.5 * h) * a),
      h_(h) {
    const Vector& u = lu_.matrixLU().diagonal();
    if (u.cwiseAbs().minCoeff() <= 1e-13 * u.cwiseAbs().maxCoeff())
        throw SolverError("cn_step: step matrix singular, reduce step");
}

Vector CnStepper::step(const Vector& x) const { return lu_.solve(plus_ * x); }

Vector CnStepper::step(const Vector& x, const Vector& g_mid) const {
    return lu_.solve((plus_ * x + h_ * g_mid).eval());
}

Vector rk4_step(const std::function<Vector(double, const Vector&)>& f, double t,
                const Vector& x, double h) {
    const auto stage = [&](const Vector& v, double ts, const char* name) {
        Vector d = f(ts, v);
        if (!d.allFinite())
            throw SolverError(std::string("rk4_step: non-finite derivative at stage ") + name +
                              " (t = " + std::to_string(ts) + ")");
        return d;
    };
    const Vector k1 = stage(x, t, "k1");
    const Vector k2 = stage(x + (0.5 * h) * k1, t + 0.5 * h, "k2");
    const Vector k3 = stage(x + (0.5 * h) * k2, t + 0.5 * h, "k3");
    const Vector k4 = stage(x + h * k3, t + h, "k4");
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Matrix solve_lyapunov(const Matrix& a, const Matrix& q) {
    const Eigen::Index n = a.rows();
    require(a.cols() == n && q.rows() == n && q.cols() == n, "solve_lyapunov: dimension mismatch");
    // vec(AX + XA^T) = (I (x) A + A (x) I) vec(X), column-major vec.
    Matrix k = Matrix::Zero(n * n, n * n);
    for (Eigen::Index j = 0; j < n; ++j)
        k.block(j * n, j * n, n, n) = a;
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < n; ++i) {
            const double aij = a(i, j);
            if (aij == 0.0) continue;
            k.block(i * n, j * n, n, n).diagonal().array() += aij;
        }
    Eigen::PartialPivLU<Matrix> lu(k);
    const Vector& u = lu.matrixLU().diagonal();
    if (u.cwiseAbs().minCoeff() <= 1e-13 * u.cwiseAbs().maxCoeff())
        throw SolverError("solve_lyapunov: singular Kronecker system (A not Hurwitz?)");
    Vector rhs = Eigen::Map<const Vector>(q.data(), n * n);
    Vector xv = lu.solve(-rhs);
    Matrix x = Eigen::Map<Matrix>(xv.data(), n, n);
    if (q.isApprox(q.transpose(), 1e-12)) symmetrize(x);
    return x;
}

DecayEnvelope estimate_decay_envelope(const Matrix& a, double t_max, int samples, double safety) {
    require(a.rows() == a.cols(), "estimate_decay_envelope: matrix must be square");
    require(t_max > 0.0 && samples >= 2, "estimate_decay_envelope: need t_max > 0, samples >= 2");
    require(safety > 0.0 && safety <= 1.0, "estimate_decay_envelope: safety in (0, 1]");

    const double dt = t_max / samples;
    const Matrix step = mat_exp(a, dt);
    std::vector<double> ts(static_cast<std::size_t>(samples) + 1);
    std::vector<double> norms(ts.size());
    Matrix phi = Matrix::Identity(a.rows(), a.cols());
    for (std::size_t k = 0; k < ts.size(); ++k) {
        ts[k] = static_cast<double>(k) * dt;
        norms[k] = operator_norm(phi);
        if (!std::isfinite(norms[k]) || norms[k] > 1e100)
            throw SolverError("estimate_decay_envelope: transition matrix blew up (not Hurwitz)");
        if (k + 1 < ts.size()) phi = (step * phi).eval();
    }
    if (norms.back() >= 1.0)
        throw SolverError("estimate_decay_envelope: ||e^{A t_max}|| >= 1, not Hurwitz on window");

    const LineFit fit = fit_exponential_decay(ts, norms);
    if (fit.slope >= 0.0)
        throw SolverError("estimate_decay_envelope: fitted rate not decaying");

    DecayEnvelope env;
    env.rate = -fit.slope * safety;
    double m = 1.0;
    for (std::size_t k = 0; k < ts.size(); ++k)
        m = std::max(m, norms[k] * std::exp(env.rate * ts[k]));
    env.overshoot = m;
    return env;
}

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    require(x.size() == y.size(), "fit_line: size mismatch");
    require(x.size() >= 2, "fit_line: need at least two points");
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    require(sxx > 0.0, "fit_line: degenerate abscissae");
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ss_res = 0, ss_tot = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double e = y[i] - (f.slope * x[i] + f.intercept);
        ss_res += e * e;
        ss_tot += (y[i] - my) * (y[i] - my);
    }
    f.r2 = ss_tot > 1e-300 ? 1.0 - ss_res / ss_tot : 1.0;
    return f;
}

LineFit fit_exponential_decay(std::span<const double> x, std::span<const double> e) {
    require(x.size() == e.size(), "fit_exponential_decay: size mismatch");
    require(x.size() >= 2, "fit_exponential_decay: need at least two points");
    std::vector<double> ln(e.size());
    for (std::size_t i = 0; i < e.size(); ++i) {
        require(e[i] > 0.0, "fit_exponential_decay: values must be positive");
        ln[i] = std::log(e[i]);
    }
    return fit_line(x, ln);
}

Eigen::Index numerical_rank(const Matrix& m) {
    Eigen::ColPivHouseholderQR<Matrix> qr(m);
    qr.setThreshold(1e-8);
    return qr.rank();
}

bool is_controllable(const Matrix& a, const Matrix& b) {
    const Eigen::Index n = a.rows();
    const Eigen::Index m = b.cols();
    require(a.cols() == n && b.rows() == n, "is_controllable: dimension mismatch");
    // Eigenvector pencil test. The Krylov-matrix rank is numerically void
    // here: its columns scale like ||A||^k and drown the small pivots.
    Eigen::EigenSolver<Matrix> es(a);
    require(es.info() == Eigen::Success, "is_controllable: eigenvalue solve failed");
    Eigen::MatrixXcd pencil(n, n + m);
    pencil.rightCols(m) = b.cast<std::complex<double>>();
    const double scale = std::max(1.0, operator_norm(a));
    for (Eigen::Index k = 0; k < n; ++k) {
        pencil.leftCols(n) = a.cast<std::complex<double>>();
        pencil.leftCols(n).diagonal().array() -= es.eigenvalues()(k);
        pencil.leftCols(n) /= scale;
        Eigen::ColPivHouseholderQR<Eigen::MatrixXcd> qr(pencil);
        qr.setThreshold(1e-8);
        if (qr.rank() < n) return false;
    }
    return true;
}

bool is_observable(const Matrix& a, const Matrix& c) {
    return is_controllable(a.transpose(), c.transpose());
}

double eig_min_sym(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

double eig_max_sym(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

bool transition_decays(const Matrix& a, int max_doublings) {
    Matrix phi = mat_exp(a, 1.0);
    for (int k = 0; k <= max_doublings; ++k) {
        if (!phi.allFinite()) return false;
        const double nrm = operator_norm(phi);
        if (!std::isfinite(nrm) || nrm > 1e60) return false;
        if (nrm < 0.999) return true;
        phi = (phi * phi).eval();
    }
    return false;
}

}  // namespace rmpc
