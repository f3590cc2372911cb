#include <complex>

#include "helpers.hpp"
#include "nilm/features.hpp"

using namespace nilm;

namespace {

// O(N^2) DFT of x zero-padded to n points.
std::vector<std::complex<double>> direct_dft(std::span<const double> x, std::size_t n) {
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < x.size(); ++t) {
      const double a = -kTwoPi * static_cast<double>((k * t) % n) / static_cast<double>(n);
      acc += x[t] * std::complex<double>(std::cos(a), std::sin(a));
    }
    out[k] = acc;
  }
  return out;
}

SampleWindow sinusoid_window(double va, double ia, double phi, double freq = 50.0) {
  SampleWindow w;
  for (std::size_t k = 0; k < kWindowSamples; ++k) {
    const double t = static_cast<double>(k) / kSampleRateHz;
    w.v[k] = va * std::sin(kTwoPi * freq * t);
    w.i[k] = ia * std::sin(kTwoPi * freq * t - phi);
  }
  return w;
}

}  // namespace

TEST(Fft, MatchesDirectDftOnSmallSizes) {
  Rng rng(11);
  for (std::size_t n : {2u, 4u, 8u, 64u}) {
    RadixTwoFft plan(n);
    std::vector<double> x(n);
    for (auto& v : x) v = rng.uniform(-1, 1);
    std::vector<std::complex<double>> buf(x.begin(), x.end());
    plan.transform(buf);
    const auto ref = direct_dft(x, n);
    for (std::size_t k = 0; k < n; ++k) EXPECT_NEAR(std::abs(buf[k] - ref[k]), 0.0, 1e-12) << n << ":" << k;
  }
}

TEST(Fft, RejectsBadSizes) {
  EXPECT_NILM_ERROR(RadixTwoFft(12), ErrorKind::Validation);
  EXPECT_NILM_ERROR(RadixTwoFft(1), ErrorKind::Validation);
  std::vector<std::complex<double>> buf(8);
  EXPECT_NILM_ERROR(RadixTwoFft(16).transform(buf), ErrorKind::Dimension);
  std::vector<double> short_window(999);
  EXPECT_NILM_ERROR(fft_1024(short_window), ErrorKind::Dimension);
}

TEST(Fft, ImpulseAndDc) {
  std::vector<double> x(kWindowSamples, 0.0);
  x[0] = 1.0;
  auto s = fft_1024(x);
  for (const auto& b : s.bins) EXPECT_NEAR(std::abs(b - std::complex<double>(1.0, 0.0)), 0.0, 1e-12);
  std::fill(x.begin(), x.end(), 1.0);
  s = fft_1024(x);
  EXPECT_NEAR(s.bins[0].real(), 1000.0, 1e-9);
  EXPECT_EQ(s.bins[0].imag(), 0.0);
  EXPECT_EQ(s.bins[kSpectrumBins - 1].imag(), 0.0);
}

TEST(Fft, Linearity) {
  Rng rng(3);
  std::vector<double> a(kWindowSamples), b(kWindowSamples), c(kWindowSamples);
  for (std::size_t k = 0; k < kWindowSamples; ++k) {
    a[k] = rng.normal();
    b[k] = rng.normal();
    c[k] = 2.0 * a[k] - 3.0 * b[k];
  }
  const auto fa = fft_1024(a), fb = fft_1024(b), fc = fft_1024(c);
  for (std::size_t k = 0; k < kSpectrumBins; ++k) {
    EXPECT_NEAR(std::abs(fc.bins[k] - (2.0 * fa.bins[k] - 3.0 * fb.bins[k])), 0.0, 1e-9);
  }
}

TEST(Harmonics, BinsAndScaling) {
  EXPECT_EQ(harmonic_bin(1), 5u);
  EXPECT_EQ(harmonic_bin(3), 15u);
  EXPECT_EQ(harmonic_bin(99), 507u);
  Rng rng(5);
  std::vector<double> x(kWindowSamples);
  for (auto& v : x) v = rng.normal();
  const auto ref = direct_dft(x, kFftSize);
  const auto h = extract_harmonics(fft_1024(x), FeatureLayout{});
  ASSERT_EQ(h.size(), 100u);
  for (int order = 1, j = 0; order <= 99; order += 2, j += 2) {
    const auto want = ref[harmonic_bin(order)] * (2.0 / 1000.0);
    EXPECT_NEAR(h[j], want.real(), 1e-10);
    EXPECT_NEAR(h[j + 1], want.imag(), 1e-10);
  }
  const auto mag = extract_harmonics(fft_1024(x), FeatureLayout{HarmonicMode::magnitude});
  ASSERT_EQ(mag.size(), 50u);
  for (std::size_t j = 0; j < 50; ++j) EXPECT_NEAR(mag[j], std::hypot(h[2 * j], h[2 * j + 1]), 1e-12);
}

TEST(Harmonics, FundamentalMagnitudeApproximatesAmplitude) {
  const auto w = sinusoid_window(325.0, 2.0, 0.3);
  const auto fv = extract_features(w);
  EXPECT_NEAR(std::hypot(fv[3], fv[4]), 2.0, 0.1);
  EXPECT_LT(std::hypot(fv[5], fv[6]), std::hypot(fv[3], fv[4]));
}

TEST(Power, SinusoidFormulas) {
  for (double phi : {0.0, 0.4, 1.2, -0.7}) {
    const auto w = sinusoid_window(325.0, 3.0, phi);
    const double s = 325.0 * 3.0 / 2.0;
    EXPECT_NEAR(real_power(w), s * std::cos(phi), 1e-9 * s);
    EXPECT_NEAR(apparent_power(w), s, 1e-9 * s);
    EXPECT_NEAR(reactive_power(real_power(w), apparent_power(w)), s * std::abs(std::sin(phi)), 1e-6 * s);
  }
}

TEST(Power, ReactiveClampsAtZero) {
  EXPECT_EQ(reactive_power(10.0, 9.999), 0.0);
  EXPECT_EQ(reactive_power(-10.0, 10.0), 0.0);
  EXPECT_DOUBLE_EQ(reactive_power(3.0, 5.0), 4.0);
}

TEST(Layout, NamesAndSizes) {
  FeatureLayout full;
  ASSERT_EQ(full.size(), 103u);
  EXPECT_EQ(full[0].name, "P");
  EXPECT_EQ(full[2].name, "Q");
  EXPECT_EQ(full[3].name, "H1_re");
  EXPECT_EQ(full[102].name, "H99_im");
  EXPECT_EQ(full[102].order, 99);
  FeatureLayout mag(HarmonicMode::magnitude);
  ASSERT_EQ(mag.size(), 53u);
  EXPECT_EQ(mag[52].name, "H99_mag");
  EXPECT_EQ(full.frequency_indices().size(), 100u);
  EXPECT_EQ(extract_features(sinusoid_window(1, 1, 0), mag).size(), 53u);
}

TEST(Selection, IndicesValidated) {
  const std::vector<double> v{1, 2, 3, 4};
  const std::vector<std::size_t> ok{3, 0}, dup{1, 1}, oob{4};
  EXPECT_EQ(select_features(v, ok), (std::vector<double>{4, 1}));
  EXPECT_NILM_ERROR(select_features(v, dup), ErrorKind::Validation);
  EXPECT_NILM_ERROR(select_features(v, oob), ErrorKind::Validation);
}

TEST(Selection, FeatureGroups) {
  FeatureLayout lay;
  const std::vector<std::size_t> freq{3, 50}, pq{0, 2}, all = all_indices(103);
  const auto g1 = feature_groups(lay, freq);
  EXPECT_TRUE(g1.harmonics);
  EXPECT_FALSE(g1.needs_voltage());
  const auto g2 = feature_groups(lay, pq);
  EXPECT_TRUE(g2.real_power && g2.reactive_power && !g2.apparent_power && !g2.harmonics);
  EXPECT_TRUE(feature_groups(lay, all).all());
}

TEST(Csv, HeaderAndRows) {
  FeatureLayout lay;
  const auto csv = features_to_csv({FeatureVector{std::vector<double>(103, 0.5), 7}}, lay);
  EXPECT_EQ(csv.rfind("window_index,P,S_abs,Q,H1_re,H1_im", 0), 0u);
  EXPECT_NE(csv.find("\n7,0.5,"), std::string::npos);
}
