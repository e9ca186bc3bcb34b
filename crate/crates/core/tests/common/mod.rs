#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use surveil_core::bcd::BcdTrace;
use surveil_core::channel::{trial_channels, ChannelSet};
use surveil_core::config::SystemConfig;
use surveil_core::metrics::{BeamPair, Powers, StarCoefficients};

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cn<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn random_unit<R: Rng>(rng: &mut R, k: usize) -> DVector<Complex64> {
    let v = DVector::from_fn(k, |_, _| cn(rng));
    let n = v.norm();
    v / c(n, 0.0)
}

/// Coefficients with independent uniform splits and phases.
pub fn random_star<R: Rng>(rng: &mut R, n: usize) -> StarCoefficients {
    let beta: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let tt: Vec<f64> = (0..n)
        .map(|_| rng.random::<f64>() * std::f64::consts::TAU)
        .collect();
    let tr: Vec<f64> = (0..n)
        .map(|_| rng.random::<f64>() * std::f64::consts::TAU)
        .collect();
    StarCoefficients::from_split(&beta, &tt, &tr).unwrap()
}

pub fn sized(n: usize, n_t: usize, n_r: usize) -> SystemConfig {
    SystemConfig {
        n,
        n_t,
        n_r,
        ..SystemConfig::desk()
    }
}

/// Desk-geometry channels plus random coefficients for instance `seed`.
pub fn instance(
    seed: u64,
    n: usize,
    n_t: usize,
    n_r: usize,
) -> (ChannelSet, StarCoefficients, Powers) {
    let cfg = sized(n, n_t, n_r);
    let ch = trial_channels(&cfg, seed).unwrap();
    let star = random_star(&mut rng(seed ^ 0x5eed), n);
    (ch, star, Powers::from_config(&cfg))
}

/// Largest `lambda` with `A x = lambda B x` for Hermitian `A` and Hermitian
/// positive definite `B`, via the Cholesky-whitened eigenproblem.
pub fn max_generalized_eigenvalue(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    let l = b.clone().cholesky().expect("B positive definite").l();
    let li = l.try_inverse().unwrap();
    let m = &li * a * li.adjoint();
    let herm = (&m + m.adjoint()) * c(0.5, 0.0);
    herm.symmetric_eigenvalues().max()
}

/// Largest per-iteration increase of the outer objective, and of every inner
/// SCA value sequence, over a trace (positive means a violation).
pub fn worst_increase(trace: &BcdTrace) -> (f64, f64) {
    let mut outer = f64::NEG_INFINITY;
    let mut prev = trace.initial_objective;
    for it in &trace.iterations {
        outer = outer.max(it.objective - prev);
        prev = it.objective;
    }
    let mut inner = f64::NEG_INFINITY;
    for it in &trace.iterations {
        for w in it.sca_values.windows(2) {
            inner = inner.max(w[1] - w[0]);
        }
    }
    (outer, inner)
}

/// `sqrt(scale) * CN(0, 1)` entries for every link.
pub fn unit_gain_channels<R: Rng>(
    rng: &mut R,
    n: usize,
    n_t: usize,
    n_r: usize,
    si: f64,
) -> ChannelSet {
    let s = si.sqrt();
    ChannelSet {
        h_sd: cn(rng),
        h_sr: DVector::from_fn(n, |_, _| cn(rng)),
        h_rd: DVector::from_fn(n, |_, _| cn(rng)),
        h_re: DMatrix::from_fn(n_r, n, |_, _| cn(rng)),
        h_er: DMatrix::from_fn(n, n_t, |_, _| cn(rng)),
        h_ee: DMatrix::from_fn(n_r, n_t, |_, _| cn(rng) * s),
    }
}

/// Eavesdropper signal vector `H_RE Theta_t h_SR` and loop-back vector
/// `U w_t`, assembled from the channel definitions.
pub fn eaves_vectors(
    ch: &ChannelSet,
    star: &StarCoefficients,
    w_t: &DVector<Complex64>,
) -> (DVector<Complex64>, DVector<Complex64>) {
    let n = ch.n();
    let g = &ch.h_re * DVector::from_fn(n, |i, _| star.u_t()[i] * ch.h_sr[i]);
    let theta_r = DMatrix::from_diagonal(star.u_r());
    let u = &ch.h_ee + &ch.h_re * theta_r * &ch.h_er;
    (g, u * w_t)
}

/// Largest achievable `SINR_E` over unit receive beamformers, as a
/// generalized Rayleigh quotient.
pub fn best_sinr_e(
    ch: &ChannelSet,
    star: &StarCoefficients,
    w_t: &DVector<Complex64>,
    pw: &Powers,
) -> f64 {
    let (g, v) = eaves_vectors(ch, star, w_t);
    let k = g.len();
    let a = &g * g.adjoint() * c(pw.p_s, 0.0);
    let b = &v * v.adjoint() * c(pw.p_e, 0.0) + DMatrix::identity(k, k) * c(pw.sigma_e2, 0.0);
    max_generalized_eigenvalue(&a, &b)
}

/// `(SINR_D - max SINR_E) / P_s` for a transmit beamformer.
pub fn transmit_oracle(
    ch: &ChannelSet,
    star: &StarCoefficients,
    w_t: &DVector<Complex64>,
    pw: &Powers,
) -> f64 {
    let d = surveil_core::metrics::sinr_d(ch, star, w_t, pw).unwrap();
    (d - best_sinr_e(ch, star, w_t, pw)) / pw.p_s
}

/// Minimum of [`transmit_oracle`] over a `k x k` grid of the unit sphere in
/// `C^2` modulo global phase: `(cos a, sin a e^{j p})`.
pub fn sphere_grid_min(ch: &ChannelSet, star: &StarCoefficients, pw: &Powers, k: usize) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..k {
        let a = std::f64::consts::FRAC_PI_2 * i as f64 / (k - 1) as f64;
        for j in 0..k {
            let p = std::f64::consts::TAU * j as f64 / k as f64;
            let w = DVector::from_vec(vec![c(a.cos(), 0.0), Complex64::from_polar(a.sin(), p)]);
            best = best.min(transmit_oracle(ch, star, &w, pw));
        }
    }
    best
}

/// `[|h_SD + sum ...|^2, jamming at D, source at E, loop-back at E]` by
/// explicit summation over elements and antennas.
pub fn loop_terms(ch: &ChannelSet, star: &StarCoefficients, pair: &BeamPair) -> [f64; 4] {
    let (n, n_t, n_r) = (ch.n(), ch.n_t(), ch.n_r());
    let mut src_d = ch.h_sd;
    let mut jam_d = c(0.0, 0.0);
    for i in 0..n {
        src_d += ch.h_rd[i].conj() * star.u_r()[i] * ch.h_sr[i];
        for j in 0..n_t {
            jam_d += ch.h_rd[i].conj() * star.u_t()[i] * ch.h_er[(i, j)] * pair.w_t[j];
        }
    }
    let mut src_e = c(0.0, 0.0);
    let mut jam_e = c(0.0, 0.0);
    for r in 0..n_r {
        let wr = pair.w_r[r].conj();
        for i in 0..n {
            src_e += wr * ch.h_re[(r, i)] * star.u_t()[i] * ch.h_sr[i];
            for j in 0..n_t {
                jam_e += wr * ch.h_re[(r, i)] * star.u_r()[i] * ch.h_er[(i, j)] * pair.w_t[j];
            }
        }
        for j in 0..n_t {
            jam_e += wr * ch.h_ee[(r, j)] * pair.w_t[j];
        }
    }
    [
        src_d.norm_sqr(),
        jam_d.norm_sqr(),
        src_e.norm_sqr(),
        jam_e.norm_sqr(),
    ]
}

/// Minimum of `f` over a grid of single-split coefficients: `kb` ratios in
/// `[0, 1]` and `kp` reflection phases per element, transmission phase 0.
/// Only `n = 1` is supported; the transmission phase does not change any
/// link magnitude when there is a single element.
pub fn star_grid_min<F: FnMut(&StarCoefficients) -> f64>(
    n: usize,
    kb: usize,
    kp: usize,
    mut f: F,
) -> f64 {
    assert_eq!(n, 1);
    let mut best = f64::INFINITY;
    for i in 0..kb {
        let b = i as f64 / (kb - 1) as f64;
        for j in 0..kp {
            let p = std::f64::consts::TAU * j as f64 / kp as f64;
            let s = StarCoefficients::from_split(&[b], &[0.0], &[p]).unwrap();
            best = best.min(f(&s));
        }
    }
    best
}
