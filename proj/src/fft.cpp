#include "fibershape/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <numbers>
#include <tuple>
#include <utility>

namespace fibershape {
namespace {

template <typename T>
struct FftwApi;

template <>
struct FftwApi<double> {
    using plan = fftw_plan;
    using complex = fftw_complex;
    static plan make(int n, int sign, bool aligned) {
        auto* buf = static_cast<complex*>(fftw_malloc(sizeof(complex) * static_cast<std::size_t>(n)));
        plan p = fftw_plan_dft_1d(n, buf, buf, sign, FFTW_ESTIMATE | (aligned ? 0u : FFTW_UNALIGNED));
        fftw_free(buf);
        return p;
    }
    static void run(plan p, std::complex<double>* d) {
        auto* c = reinterpret_cast<complex*>(d);
        fftw_execute_dft(p, c, c);
    }
    static bool aligned(std::complex<double>* d) { return fftw_alignment_of(reinterpret_cast<double*>(d)) == 0; }
};

template <>
struct FftwApi<float> {
    using plan = fftwf_plan;
    using complex = fftwf_complex;
    static plan make(int n, int sign, bool aligned) {
        auto* buf = static_cast<complex*>(fftwf_malloc(sizeof(complex) * static_cast<std::size_t>(n)));
        plan p = fftwf_plan_dft_1d(n, buf, buf, sign, FFTW_ESTIMATE | (aligned ? 0u : FFTW_UNALIGNED));
        fftwf_free(buf);
        return p;
    }
    static void run(plan p, std::complex<float>* d) {
        auto* c = reinterpret_cast<complex*>(d);
        fftwf_execute_dft(p, c, c);
    }
    static bool aligned(std::complex<float>* d) { return fftwf_alignment_of(reinterpret_cast<float*>(d)) == 0; }
};

// Planner calls are not thread safe in FFTW; the cache lock also covers them.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

template <typename T>
typename FftwApi<T>::plan get_plan(std::size_t n, int sign, bool aligned) {
    static std::map<std::tuple<std::size_t, int, bool>, typename FftwApi<T>::plan> cache;
    std::lock_guard lock(planner_mutex());
    auto key = std::make_tuple(n, sign, aligned);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    auto p = FftwApi<T>::make(static_cast<int>(n), sign, aligned);
    cache.emplace(key, p);
    return p;
}

template <typename T>
void transform(std::span<std::complex<T>> data, int sign) {
    if (data.empty()) return;
    FftwApi<T>::run(get_plan<T>(data.size(), sign, FftwApi<T>::aligned(data.data())), data.data());
}

template <typename T>
void inverse(std::span<std::complex<T>> data) {
    transform(data, FFTW_BACKWARD);
    const T scale = T(1) / static_cast<T>(data.size());
    for (auto& v : data) v *= scale;
}

}  // namespace

void fft_forward(std::span<std::complex<double>> data) { transform(data, FFTW_FORWARD); }
void fft_forward(std::span<std::complex<float>> data) { transform(data, FFTW_FORWARD); }
void fft_inverse(std::span<std::complex<double>> data) { inverse(data); }
void fft_inverse(std::span<std::complex<float>> data) { inverse(data); }

double bin_angular_frequency(std::size_t k, std::size_t n, double sample_rate) {
    const auto sk = static_cast<double>(k);
    const auto sn = static_cast<double>(n);
    const double f = (2 * k < n) ? sk * sample_rate / sn : (sk - sn) * sample_rate / sn;
    return 2.0 * std::numbers::pi * f;
}

}  // namespace fibershape
