//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

pub mod modes {
    use puruspe::{besselik, besseljy, Jn, Kn};

    pub const J01: f64 = 2.404_825_557_695_773;

    pub struct Point {
        pub u: f64,
        pub w: f64,
        pub n1: f64,
        pub n2: f64,
    }

    pub fn point(d_nm: f64, lambda_nm: f64, n1: f64, n2: f64, n_eff: f64) -> Point {
        let ka = std::f64::consts::PI * d_nm / lambda_nm;
        Point {
            u: ka * (n1 * n1 - n_eff * n_eff).sqrt(),
            w: ka * (n_eff * n_eff - n2 * n2).sqrt(),
            n1,
            n2,
        }
    }

    /// J1'(u)/(u J1(u)) and K1'(w)/(w K1(w)) using the library's derivative output.
    pub fn etas(p: &Point) -> (f64, f64) {
        let (j1, _, dj1, _) = besseljy(1.0, p.u);
        let (_, k1, _, dk1) = besselik(1.0, p.w);
        (dj1 / (p.u * j1), dk1 / (p.w * k1))
    }

    /// Product form of the HE/EH dispersion relation.
    pub fn characteristic(d_nm: f64, lambda_nm: f64, n1: f64, n2: f64, n_eff: f64) -> f64 {
        let p = point(d_nm, lambda_nm, n1, n2, n_eff);
        let (e1, e2) = etas(&p);
        let dd = (n2 * n2) / (n1 * n1);
        let (iu, iw) = (1.0 / (p.u * p.u), 1.0 / (p.w * p.w));
        (e1 + e2) * (e1 + dd * e2) - (iu + iw) * (iu + dd * iw)
    }

    /// Largest-n_eff sign change of the characteristic function, scanned at
    /// `step` over the HE11 window `u < j01`. Returns the bracketing cell.
    pub fn dense_scan(d_nm: f64, lambda_nm: f64, n1: f64, n2: f64, step: f64) -> Option<(f64, f64)> {
        let ka = std::f64::consts::PI * d_nm / lambda_nm;
        let floor = (n1 * n1 - (J01 / ka).powi(2)).max(n2 * n2).sqrt().max(n2 + step);
        let mut hi = n1 - step;
        let mut f_hi = characteristic(d_nm, lambda_nm, n1, n2, hi);
        while hi - step > floor {
            let lo = hi - step;
            let f_lo = characteristic(d_nm, lambda_nm, n1, n2, lo);
            if f_lo.signum() != f_hi.signum() {
                return Some((lo, hi));
            }
            hi = lo;
            f_hi = f_lo;
        }
        None
    }

    pub struct Fields {
        pub s: f64,
        pub s1: f64,
        pub s2: f64,
        pub p: Point,
    }

    pub fn fields(d_nm: f64, lambda_nm: f64, n1: f64, n2: f64, n_eff: f64) -> Fields {
        let p = point(d_nm, lambda_nm, n1, n2, n_eff);
        let (e1, e2) = etas(&p);
        let s = (1.0 / (p.u * p.u) + 1.0 / (p.w * p.w)) / (e1 + e2);
        Fields {
            s,
            s1: s * n_eff * n_eff / (n1 * n1),
            s2: s * n_eff * n_eff / (n2 * n2),
            p,
        }
    }

    impl Fields {
        /// (e_r, e_phi, h_r, h_phi) radial profiles at R = r/a, angular
        /// factors removed, common constants dropped.
        pub fn at(&self, r: f64) -> (f64, f64, f64, f64) {
            self.in_region(r, r <= 1.0)
        }

        /// Profiles from the core (`core = true`) or cladding expressions.
        pub fn in_region(&self, r: f64, core: bool) -> (f64, f64, f64, f64) {
            let (u, w) = (self.p.u, self.p.w);
            let (s, s1, s2) = (self.s, self.s1, self.s2);
            if core {
                let (j0, j2) = (Jn(0, u * r), Jn(2, u * r));
                let e = 1.0 / u;
                let h = self.p.n1 * self.p.n1 / u;
                (
                    -e * (0.5 * (1.0 - s) * j0 - 0.5 * (1.0 + s) * j2),
                    e * (0.5 * (1.0 - s) * j0 + 0.5 * (1.0 + s) * j2),
                    -h * (0.5 * (1.0 - s1) * j0 + 0.5 * (1.0 + s1) * j2),
                    -h * (0.5 * (1.0 - s1) * j0 - 0.5 * (1.0 + s1) * j2),
                )
            } else {
                let (k0, k2) = (Kn(0, w * r), Kn(2, w * r));
                let c = Jn(1, u) / (w * Kn(1, w));
                let h = self.p.n2 * self.p.n2 * c;
                (
                    -c * (0.5 * (1.0 - s) * k0 + 0.5 * (1.0 + s) * k2),
                    c * (0.5 * (1.0 - s) * k0 - 0.5 * (1.0 + s) * k2),
                    -h * (0.5 * (1.0 - s2) * k0 - 0.5 * (1.0 + s2) * k2),
                    -h * (0.5 * (1.0 - s2) * k0 + 0.5 * (1.0 + s2) * k2),
                )
            }
        }

        fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
            // composite Simpson, n even
            let h = (b - a) / n as f64;
            let mut acc = f(a) + f(b);
            for i in 1..n {
                acc += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            acc * h / 3.0
        }

        /// Core and cladding axial power (angular average of e_r h_phi − e_phi h_r).
        pub fn powers(&self) -> (f64, f64) {
            let sz = |r: f64, core: bool| {
                let (er, ep, hr, hp) = self.in_region(r, core);
                0.5 * (er * hp - ep * hr) * r
            };
            let core = Self::integrate(|r| sz(r, true), 0.0, 1.0, 4000);
            let r_max = 1.0 + 60.0 / self.p.w;
            let clad = Self::integrate(|r| sz(r, false), 1.0, r_max, 200_000);
            (core, clad)
        }

        /// Energy-weighted transverse area in units of the core cross-section.
        pub fn area_factor(&self) -> f64 {
            let (n1, n2) = (self.p.n1, self.p.n2);
            let dens = |r: f64, core: bool| {
                let (er, ep, _, _) = self.in_region(r, core);
                let n = if core { n1 } else { n2 };
                n * n * 0.5 * (er * er + ep * ep) * r
            };
            let r_max = 1.0 + 60.0 / self.p.w;
            let total = Self::integrate(|r| dens(r, true), 0.0, 1.0, 4000)
                + Self::integrate(|r| dens(r, false), 1.0, r_max, 200_000);
            let (er0, _, _, _) = self.at(0.0);
            // ∫ dA = 2π ∫ r dr in units of a², divided by π for the core area.
            2.0 * total / (n1 * n1 * er0 * er0)
        }
    }
}

pub mod synth {
    use nanowire_sps::detection::{Histogram, HistogramKind};
    use nanowire_sps::emitter::{Line, PhotonRecord, PhotonStream, StreamMeta};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp, Poisson};

    pub fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    pub fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
        if mean <= 0.0 {
            0
        } else {
            Poisson::new(mean).unwrap().sample(rng) as u64
        }
    }

    /// Pulsed coincidence histogram built event by event.
    #[derive(Clone, Copy, Debug)]
    pub struct PeakComb {
        pub g2_zero: f64,
        /// Background per bin relative to the side-peak maximum per bin.
        pub background_ratio: f64,
        pub tau_ps: f64,
        pub period_ps: f64,
        /// Expected events in one side peak.
        pub side_events: f64,
        pub bin_width: f64,
        /// Half-window in periods.
        pub periods: i64,
    }

    impl PeakComb {
        pub fn new(g2_zero: f64, background_ratio: f64, tau_ps: f64) -> Self {
            Self {
                g2_zero,
                background_ratio,
                tau_ps,
                period_ps: 50_000.0,
                side_events: 40_000.0,
                bin_width: 64.0,
                periods: 6,
            }
        }

        /// Peak maximum per bin in the continuum limit.
        pub fn peak_height(&self) -> f64 {
            self.side_events * self.bin_width / (2.0 * self.tau_ps)
        }

        pub fn background(&self) -> f64 {
            self.background_ratio * self.peak_height()
        }

        pub fn sample(&self, seed: u64) -> Histogram {
            let mut rng = rng(seed);
            let bw = self.bin_width;
            let window = self.periods as f64 * self.period_ps;
            let n = (2.0 * window / bw).round() as usize + 1;
            let origin = -window - 0.5 * bw;
            let mut counts = vec![0u64; n];
            let put = |tau: f64, counts: &mut Vec<u64>| {
                let i = ((tau - origin) / bw).floor();
                if i >= 0.0 && (i as usize) < n {
                    counts[i as usize] += 1;
                }
            };
            let exp = Exp::new(1.0 / self.tau_ps).unwrap();
            for k in -(self.periods + 3)..=(self.periods + 3) {
                let weight = if k == 0 { self.g2_zero } else { 1.0 };
                for _ in 0..poisson(&mut rng, weight * self.side_events) {
                    let d: f64 = exp.sample(&mut rng);
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    put(k as f64 * self.period_ps + sign * d, &mut counts);
                }
            }
            let span = n as f64 * bw;
            for _ in 0..poisson(&mut rng, self.background() * n as f64) {
                put(origin + rng.random::<f64>() * span, &mut counts);
            }
            Histogram {
                bin_width: bw,
                origin,
                counts,
                kind: HistogramKind::Coincidence,
            }
        }

        /// Expected counts per bin for fitted parameters (bin-averaged peaks).
        pub fn model(hist: &Histogram, period_ps: f64, tau_ps: f64, b: f64, a: f64, g2_zero: f64) -> Vec<f64> {
            let bw = hist.bin_width;
            (0..hist.len())
                .map(|i| {
                    let lo = hist.origin + i as f64 * bw;
                    let hi = lo + bw;
                    let kc = (0.5 * (lo + hi) / period_ps).round() as i64;
                    let mut v = b;
                    for k in (kc - 3)..=(kc + 3) {
                        let c = if k == 0 { g2_zero } else { 1.0 };
                        v += a * c * laplace_mean(lo - k as f64 * period_ps, hi - k as f64 * period_ps, tau_ps);
                    }
                    v
                })
                .collect()
        }
    }

    /// Average of exp(−|t|/τ) over [lo, hi], by Simpson quadrature.
    pub fn laplace_mean(lo: f64, hi: f64, tau: f64) -> f64 {
        let n = 64;
        let h = (hi - lo) / n as f64;
        let f = |t: f64| (-t.abs() / tau).exp();
        let mut acc = f(lo) + f(hi);
        for i in 1..n {
            acc += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0 / (hi - lo)
    }

    /// Decay histogram from `events` exponential delays plus a flat background.
    pub fn decay(tau_ps: f64, events: f64, background_per_bin: f64, bins: usize, bw: f64, seed: u64) -> Histogram {
        let mut rng = rng(seed);
        let mut counts = vec![0u64; bins];
        let exp = Exp::new(1.0 / tau_ps).unwrap();
        let span = bins as f64 * bw;
        for _ in 0..poisson(&mut rng, events) {
            let t: f64 = exp.sample(&mut rng);
            if t < span {
                counts[(t / bw) as usize] += 1;
            }
        }
        for _ in 0..poisson(&mut rng, background_per_bin * bins as f64) {
            counts[((rng.random::<f64>() * span) / bw) as usize % bins] += 1;
        }
        Histogram {
            bin_width: bw,
            origin: 0.0,
            counts,
            kind: HistogramKind::Decay,
        }
    }

    pub fn meta(n_pulses: u64, rep_rate_mhz: f64) -> StreamMeta {
        StreamMeta {
            seed: 0,
            emitter_digest: "synthetic".into(),
            drive_digest: "synthetic".into(),
            temperature_k: 4.0,
            rep_rate_mhz,
            n_pulses,
        }
    }

    pub fn stream(mut times_ps: Vec<f64>, line: Line, wavelength_nm: f64, meta: StreamMeta) -> PhotonStream {
        times_ps.sort_by(f64::total_cmp);
        PhotonStream {
            records: times_ps
                .into_iter()
                .map(|time_ps| PhotonRecord {
                    time_ps,
                    line,
                    wavelength_nm,
                })
                .collect(),
            meta,
        }
    }

    /// Pearson χ² p-value of counts against a constant mean.
    pub fn flatness_p_value(counts: &[u64]) -> f64 {
        let n = counts.len() as f64;
        let mean = counts.iter().sum::<u64>() as f64 / n;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - mean).powi(2) / mean).sum();
        statrs::function::gamma::gamma_ur(0.5 * (n - 1.0), 0.5 * chi2)
    }
}

pub mod rational {
    use num_rational::Ratio;

    pub type Q = Ratio<i128>;

    /// Exact value of a decimal literal such as "1.86".
    pub fn dec(s: &str) -> Q {
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        let scale = 10i128.pow(frac.len() as u32);
        let digits: i128 = format!("{int}{frac}").parse().unwrap();
        Q::new(digits, scale)
    }

    pub fn to_f64(q: Q) -> f64 {
        *q.numer() as f64 / *q.denom() as f64
    }

    /// Stages from detected rate back to the first lens, in exact arithmetic.
    pub struct Chain {
        pub raw: Q,
        pub detcorr: Q,
        pub first_lens: Q,
        pub single_photon: Q,
        pub with_sideband: Q,
    }

    pub fn chain(rate: &str, rep: &str, det: &str, throughput: &str, sideband: &str, g2: &str) -> Chain {
        let raw = dec(rate) / dec(rep);
        let detcorr = raw / dec(det);
        let first_lens = detcorr / dec(throughput);
        Chain {
            raw,
            detcorr,
            first_lens,
            single_photon: first_lens * (Q::from_integer(1) - dec(g2)),
            with_sideband: first_lens / (Q::from_integer(1) - dec(sideband)),
        }
    }
}
