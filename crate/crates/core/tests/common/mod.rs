//! Independent reference computations shared by the integration and
//! acceptance tests. Nothing here calls into the estimator internals.

#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vi_aoa::linalg::CMat;
use vi_aoa::loss::{total_loss, VariationalState};
use vi_aoa::signal::{
    sample_channel, synthesize_observation, AoAVector, ArrayConfig, ChannelPrior, ChannelRealization, ObservationSet,
};

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `exp(−j 2π (d/λ) n sin θ)` written out element by element.
pub fn steering(n_antennas: usize, spacing_ratio: f64, theta: f64) -> Vec<Complex64> {
    (0..n_antennas)
        .map(|n| Complex64::from_polar(1.0, -2.0 * PI * spacing_ratio * n as f64 * theta.sin()))
        .collect()
}

pub fn gaussian<R: Rng>(rng: &mut R) -> Complex64 {
    // Box-Muller, unit total variance.
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    let r = (-u1.ln()).sqrt();
    Complex64::from_polar(r, 2.0 * PI * u2)
}

/// Random Hermitian positive definite matrix with eigenvalues in `[lo, hi]`.
pub fn random_pd<R: Rng>(rng: &mut R, k: usize, lo: f64, hi: f64) -> CMat {
    let g = CMat::from_fn(k, k, |_, _| gaussian(rng));
    let q = g.qr().q();
    let d = CMat::from_diagonal(&DVector::from_fn(k, |_, _| c(rng.random_range(lo..=hi), 0.0)));
    let m = &q * d * q.adjoint();
    (&m + m.adjoint()).map(|z| z * 0.5)
}

pub fn random_prior<R: Rng>(rng: &mut R, k: usize) -> ChannelPrior {
    let mean = DVector::from_fn(k, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    ChannelPrior::new(mean, random_pd(rng, k, 0.3, 2.0)).unwrap()
}

pub struct Instance {
    pub obs: ObservationSet,
    pub truth: AoAVector,
    pub channel: ChannelRealization,
    pub prior: ChannelPrior,
}

/// Random observation with `k` users spread over ±60° and at least 5° apart.
pub fn random_instance<R: Rng>(rng: &mut R, n: usize, k: usize, m: usize, noise_variance: f64) -> Instance {
    let spacing = if rng.random::<bool>() { 0.5 } else { rng.random_range(0.5..1.0) };
    let array = ArrayConfig::new(n, spacing).unwrap();
    let truth = loop {
        let mut v: Vec<f64> = (0..k).map(|_| rng.random_range(-60f64..60.0).to_radians()).collect();
        v.sort_by(f64::total_cmp);
        if v.windows(2).all(|w| w[1] - w[0] > 5f64.to_radians()) {
            break AoAVector::new(v).unwrap();
        }
    };
    let prior = random_prior(rng, k);
    let channel = sample_channel(&prior, m, rng).unwrap();
    let obs = synthesize_observation(&array, &truth, &channel, noise_variance, rng).unwrap();
    Instance {
        obs,
        truth,
        channel,
        prior,
    }
}

/// Random variational state with means and covariances unrelated to the data.
pub fn random_state<R: Rng>(rng: &mut R, aoas: AoAVector, m: usize) -> VariationalState {
    let k = aoas.len();
    let means = CMat::from_fn(k, m, |_, _| gaussian(rng));
    let covs = (0..m).map(|_| random_pd(rng, k, 0.05, 1.0)).collect();
    VariationalState::new(aoas, means, covs).unwrap()
}

pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Column `m` as its own single-snapshot observation.
pub fn snapshot(obs: &ObservationSet, m: usize) -> ObservationSet {
    ObservationSet::new(obs.signal.columns(m, 1).into_owned(), obs.noise_variance, obs.array).unwrap()
}

/// Unpack `(μ, Σ = L L^H)` from real parameters: 2K for the mean, K
/// log-diagonals and K(K−1) strictly-lower real/imag parts for `L`.
fn unpack(x: &DVector<f64>, k: usize) -> (DVector<Complex64>, CMat) {
    let mean = DVector::from_fn(k, |i, _| c(x[2 * i], x[2 * i + 1]));
    let mut l = CMat::zeros(k, k);
    let mut p = 2 * k;
    for i in 0..k {
        l[(i, i)] = c(x[p].exp(), 0.0);
        p += 1;
    }
    for i in 0..k {
        for j in 0..i {
            l[(i, j)] = c(x[p], x[p + 1]);
            p += 2;
        }
    }
    let cov = &l * l.adjoint();
    (mean, cov)
}

fn snapshot_loss(obs: &ObservationSet, aoas: &AoAVector, prior: &ChannelPrior, x: &DVector<f64>) -> f64 {
    let k = aoas.len();
    let (mean, cov) = unpack(x, k);
    let state = VariationalState::new(aoas.clone(), CMat::from_columns(&[mean]), vec![cov]).unwrap();
    total_loss(obs, &state, std::slice::from_ref(prior)).unwrap().total
}

fn fd_gradient(f: &impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let mut a = x.clone();
        let mut b = x.clone();
        a[i] += h;
        b[i] -= h;
        // Fourth-order stencil.
        let mut a2 = x.clone();
        let mut b2 = x.clone();
        a2[i] += 2.0 * h;
        b2[i] -= 2.0 * h;
        (8.0 * (f(&a) - f(&b)) - (f(&a2) - f(&b2))) / (12.0 * h)
    })
}

fn fd_hessian(f: &impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let n = x.len();
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let eval = |si: f64, sj: f64| {
                let mut y = x.clone();
                y[i] += si * h;
                y[j] += sj * h;
                f(&y)
            };
            let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0)) / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

/// Minimize the training loss over one snapshot's mean and covariance by
/// damped Newton iterations on finite-difference derivatives.
pub fn newton_channel_minimizer(obs: &ObservationSet, aoas: &AoAVector, prior: &ChannelPrior) -> (DVector<Complex64>, CMat) {
    let k = aoas.len();
    let dim = 2 * k + k * k;
    let f = |x: &DVector<f64>| snapshot_loss(obs, aoas, prior, x);
    let mut x = DVector::zeros(dim);
    for i in 0..k {
        x[2 * i] = prior.mean()[i].re;
        x[2 * i + 1] = prior.mean()[i].im;
    }
    let mut fx = f(&x);
    for _ in 0..200 {
        let g = fd_gradient(&f, &x, 1e-4);
        let h = fd_hessian(&f, &x, 1e-4);
        let mut damping = 0.0;
        let step = loop {
            let shifted = &h + DMatrix::identity(dim, dim) * damping;
            if let Some(ch) = shifted.cholesky() {
                break -ch.solve(&g);
            }
            damping = if damping == 0.0 { 1e-8 * h.diagonal().amax().max(1.0) } else { damping * 10.0 };
        };
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-12 {
            let cand = &x + &step * t;
            let fc = f(&cand);
            if fc < fx {
                moved = true;
                x = cand;
                fx = fc;
                break;
            }
            t *= 0.5;
        }
        if !moved || step.amax() * t < 1e-13 {
            break;
        }
    }
    unpack(&x, k)
}
