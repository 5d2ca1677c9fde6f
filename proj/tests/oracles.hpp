// Independent reference computations shared by the unit tests.
#ifndef FOLMS_TESTS_ORACLES_HPP
#define FOLMS_TESTS_ORACLES_HPP

#include "folms/sigproc.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <fftw3.h>

namespace oracle {

using folms::cplx;
using folms::CVec;

// Unnormalized forward (sign -1) or backward (sign +1) DFT.
inline CVec fft(const CVec& in, int sign = FFTW_FORWARD) {
    const int n = static_cast<int>(in.size());
    CVec out(in.size());
    CVec scratch = in;
    auto* src = reinterpret_cast<fftw_complex*>(scratch.data());
    auto* dst = reinterpret_cast<fftw_complex*>(out.data());
    fftw_plan plan = fftw_plan_dft_1d(n, src, dst, sign, FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
    return out;
}

// Signed frequency index of DFT bin k.
inline double signed_bin(std::size_t k, std::size_t n) {
    return k <= n / 2 ? static_cast<double>(k) : static_cast<double>(k) - static_cast<double>(n);
}

// Trigonometric interpolation of one period of a periodic sequence, given its
// spectrum X (unnormalized forward DFT).
inline cplx periodic_value(const CVec& spectrum, double t) {
    const std::size_t n = spectrum.size();
    cplx acc{0.0, 0.0};
    for (std::size_t k = 0; k < n; ++k) {
        const double f = signed_bin(k, n) / static_cast<double>(n);
        acc += spectrum[k] * std::polar(1.0, 2.0 * std::numbers::pi * f * t);
    }
    return acc / static_cast<double>(n);
}

struct Moments {
    double mean{0.0};
    double variance{0.0};  // unbiased
};

inline Moments moments(const std::vector<double>& v) {
    Moments m;
    for (double x : v) {
        m.mean += x;
    }
    m.mean /= static_cast<double>(v.size());
    for (double x : v) {
        m.variance += (x - m.mean) * (x - m.mean);
    }
    m.variance /= static_cast<double>(v.size() - 1);
    return m;
}

// Least-squares slope of y against x.
inline double slope(const std::vector<double>& x, const std::vector<double>& y) {
    const auto mx = moments(x).mean;
    const auto my = moments(y).mean;
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
}

inline double db(double x) { return 10.0 * std::log10(x); }

} // namespace oracle

#endif // FOLMS_TESTS_ORACLES_HPP
