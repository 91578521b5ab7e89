//! Truncated Fock-space master-equation solver.
//!
//! Operators and density matrices live on `{|0⟩, …, |N⟩}`. The solver runs
//! the two Lindblad generators of the crate with classical RK4 and serves as
//! an independent check on trajectory-ensemble averages.

use ndarray::{Array1, Array2, Zip};
use num_complex::Complex64 as C64;

use crate::params::{CavityParams, DriveMode};
use crate::{Error, Result};

/// Largest Poisson tail mass a coherent state may leave outside the basis.
pub const TAIL_LIMIT: f64 = 1e-8;
/// Largest population allowed in the top basis level during integration.
pub const BREACH_LIMIT: f64 = 1e-6;
/// Largest `κ·dt` accepted by [`integrate`].
pub const MAX_KAPPA_DT: f64 = 1e-2;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Smallest truncation level `N ≥ ⌈μ + 8√μ + 10⌉` for a peak mean photon
/// number `μ`.
pub fn truncation_rule(mu: f64) -> usize {
    let mu = mu.max(0.0);
    (mu + 8.0 * mu.sqrt() + 10.0).ceil() as usize
}

/// Square matrix on a truncated Fock basis.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedOperator {
    matrix: Array2<C64>,
}

impl TruncatedOperator {
    pub fn from_matrix(matrix: Array2<C64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::InvalidArgument(format!("operator must be square, got {:?}", matrix.dim())));
        }
        Ok(Self { matrix })
    }

    pub fn identity(level: usize) -> Self {
        Self { matrix: Array2::eye(level + 1) }
    }

    /// `c` with `⟨m|c|n⟩ = √n δ_{m,n−1}`.
    pub fn annihilation(level: usize) -> Self {
        let mut m = Array2::zeros((level + 1, level + 1));
        for n in 1..=level {
            m[[n - 1, n]] = C64::new((n as f64).sqrt(), 0.0);
        }
        Self { matrix: m }
    }

    pub fn creation(level: usize) -> Self {
        Self::annihilation(level).adjoint()
    }

    pub fn number(level: usize) -> Self {
        Self {
            matrix: Array2::from_diag(&Array1::from_iter((0..=level).map(|n| C64::new(n as f64, 0.0)))),
        }
    }

    /// `exp(βc† − β*c)` by scaling and squaring of a Taylor series.
    pub fn displacement(beta: C64, level: usize) -> Result<Self> {
        if !beta.is_finite() {
            return Err(Error::NonFinite { what: "displacement amplitude" });
        }
        let mu = beta.norm_sqr();
        if mu > level as f64 / 4.0 {
            return Err(Error::TruncationTooSmall {
                dim_minus_one: level,
                tail_mass: poisson_tail(mu, level),
                limit: TAIL_LIMIT,
                suggested: truncation_rule(mu).max((4.0 * mu).ceil() as usize),
            });
        }
        let c = Self::annihilation(level);
        let generator = &c.adjoint().matrix * beta - &c.matrix * beta.conj();
        Ok(Self { matrix: expm(&generator) })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn level(&self) -> usize {
        self.dim() - 1
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: self.matrix.t().mapv(|z| z.conj()),
        }
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self {
            matrix: self.matrix.dot(&other.matrix),
        }
    }

    pub fn apply(&self, v: &Array1<C64>) -> Array1<C64> {
        self.matrix.dot(v)
    }

    /// Largest entry of `|A − A†|`.
    pub fn hermiticity_defect(&self) -> f64 {
        max_abs_diff(&self.matrix, &self.matrix.t().mapv(|z| z.conj()))
    }
}

fn max_abs_diff(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    let mut m = 0.0f64;
    Zip::from(a).and(b).for_each(|x, y| m = m.max((x - y).norm()));
    m
}

fn expm(a: &Array2<C64>) -> Array2<C64> {
    let norm = a
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a * C64::new(0.5f64.powi(squarings), 0.0);
    let n = a.nrows();
    let mut result = Array2::<C64>::eye(n);
    let mut term = Array2::<C64>::eye(n);
    for k in 1..=24 {
        term = term.dot(&scaled) / C64::new(k as f64, 0.0);
        result += &term;
    }
    for _ in 0..squarings {
        result = result.dot(&result);
    }
    result
}

/// `P(n > level)` for a Poisson law of mean `mu`, summed directly.
pub fn poisson_tail(mu: f64, level: usize) -> f64 {
    if mu == 0.0 {
        return 0.0;
    }
    let mut log_p = -mu + (level + 1) as f64 * mu.ln() - ln_factorial(level + 1);
    let mut tail = 0.0;
    let mut k = level + 1;
    loop {
        let p = log_p.exp();
        tail += p;
        if (p < 1e-18 * tail || p == 0.0) && k as f64 > mu {
            break;
        }
        k += 1;
        log_p += mu.ln() - (k as f64).ln();
    }
    tail
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Truncated coherent state together with the probability it lost.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherentVector {
    pub state: Array1<C64>,
    pub tail_mass: f64,
}

/// `e^{-|α|²/2} αⁿ/√n!` for `n = 0..=level`, renormalised.
pub fn coherent_vector(alpha: C64, level: usize) -> Result<CoherentVector> {
    if !alpha.is_finite() {
        return Err(Error::NonFinite { what: "coherent amplitude" });
    }
    let mu = alpha.norm_sqr();
    let tail_mass = poisson_tail(mu, level);
    if mu > level as f64 / 2.0 || tail_mass > TAIL_LIMIT {
        return Err(Error::TruncationTooSmall {
            dim_minus_one: level,
            tail_mass,
            limit: TAIL_LIMIT,
            suggested: truncation_rule(mu).max((2.0 * mu).ceil() as usize),
        });
    }
    let mut state = Array1::<C64>::zeros(level + 1);
    let mut amp = C64::new((-mu / 2.0).exp(), 0.0);
    state[0] = amp;
    for n in 1..=level {
        amp = amp * alpha / (n as f64).sqrt();
        state[n] = amp;
    }
    let norm = state.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    state.mapv_inplace(|z| z / norm);
    Ok(CoherentVector { state, tail_mass })
}

/// Density matrix on a truncated Fock basis.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedDensityMatrix {
    matrix: Array2<C64>,
}

impl TruncatedDensityMatrix {
    pub fn from_matrix(matrix: Array2<C64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::InvalidArgument(format!("density matrix must be square, got {:?}", matrix.dim())));
        }
        Ok(Self { matrix })
    }

    pub fn vacuum(level: usize) -> Self {
        let mut m = Array2::zeros((level + 1, level + 1));
        m[[0, 0]] = ONE;
        Self { matrix: m }
    }

    pub fn pure(state: &Array1<C64>) -> Self {
        let n = state.len();
        Self {
            matrix: Array2::from_shape_fn((n, n), |(i, j)| state[i] * state[j].conj()),
        }
    }

    pub fn coherent(alpha: C64, level: usize) -> Result<Self> {
        Ok(Self::pure(&coherent_vector(alpha, level)?.state))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn level(&self) -> usize {
        self.dim() - 1
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn trace(&self) -> C64 {
        self.matrix.diag().sum()
    }

    /// `Tr(Aρ)`.
    pub fn expectation(&self, op: &TruncatedOperator) -> C64 {
        Zip::from(op.matrix()).and(self.matrix.t()).fold(ZERO, |acc, a, r| acc + a * r)
    }

    /// `⟨c†c⟩`, read off the diagonal.
    pub fn photon_number(&self) -> f64 {
        self.matrix.diag().iter().enumerate().map(|(n, p)| n as f64 * p.re).sum()
    }

    pub fn population(&self, n: usize) -> f64 {
        self.matrix[[n, n]].re
    }

    pub fn hermiticity_defect(&self) -> f64 {
        max_abs_diff(&self.matrix, &self.matrix.t().mapv(|z| z.conj()))
    }

    /// True when the smallest eigenvalue is at least `−tolerance`, tested
    /// by a Cholesky factorisation of `ρ + tolerance·1`.
    pub fn is_positive_semidefinite(&self, tolerance: f64) -> bool {
        let n = self.dim();
        let a = &self.matrix + &(Array2::<C64>::eye(n) * C64::new(tolerance, 0.0));
        cholesky_succeeds(&a)
    }

    /// Checks Hermiticity to 1e-10, unit trace to 1e-8 and positivity to 1e-8.
    pub fn check_invariants(&self) -> Result<()> {
        let h = self.hermiticity_defect();
        if !(h <= 1e-10) {
            return Err(Error::InvalidArgument(format!("density matrix not Hermitian: defect {h:.3e}")));
        }
        let t = self.trace();
        if !((t - ONE).norm() <= 1e-8) {
            return Err(Error::InvalidArgument(format!("density matrix trace {t} differs from 1")));
        }
        if !self.is_positive_semidefinite(1e-8) {
            return Err(Error::InvalidArgument("density matrix has an eigenvalue below −1e-8".into()));
        }
        Ok(())
    }
}

fn cholesky_succeeds(a: &Array2<C64>) -> bool {
    let n = a.nrows();
    let mut l = Array2::<C64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]].re;
        for k in 0..j {
            d -= l[[j, k]].norm_sqr();
        }
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        l[[j, j]] = C64::new(d, 0.0);
        for i in j + 1..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]].conj();
            }
            l[[i, j]] = s / d;
        }
    }
    true
}

/// Precomputed generator for one parameter set and truncation level.
#[derive(Debug, Clone)]
pub struct MasterEquation {
    params: CavityParams,
    level: usize,
    sqrt_n: Vec<f64>,
    c: TruncatedOperator,
    displacement: Option<TruncatedOperator>,
    displacement_adj: Option<TruncatedOperator>,
}

impl MasterEquation {
    pub fn new(params: &CavityParams, level: usize) -> Result<Self> {
        params.validate()?;
        let (displacement, displacement_adj) = match params.mode {
            DriveMode::Feedback => {
                let d = TruncatedOperator::displacement(params.beta, level)?;
                let da = d.adjoint();
                (Some(d), Some(da))
            }
            DriveMode::LaserDriven => (None, None),
        };
        Ok(Self {
            params: *params,
            level,
            sqrt_n: (0..=level + 1).map(|n| (n as f64).sqrt()).collect(),
            c: TruncatedOperator::annihilation(level),
            displacement,
            displacement_adj,
        })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// `cρc†` from the ladder structure.
    fn jump(&self, rho: &Array2<C64>) -> Array2<C64> {
        let d = self.level + 1;
        Array2::from_shape_fn((d, d), |(m, n)| {
            if m < self.level && n < self.level {
                rho[[m + 1, n + 1]] * (self.sqrt_n[m + 1] * self.sqrt_n[n + 1])
            } else {
                ZERO
            }
        })
    }

    /// `dρ/dt` for the configured drive mode.
    pub fn rhs(&self, rho: &Array2<C64>) -> Array2<C64> {
        let k = self.params.kappa;
        let d = self.level + 1;
        let jump = self.jump(rho);
        // (κ/2)(2cρc† − c†cρ − ρc†c)
        let mut out = Array2::from_shape_fn((d, d), |(m, n)| {
            (jump[[m, n]] * 2.0 - rho[[m, n]] * (m + n) as f64) * (0.5 * k)
        });
        match self.params.mode {
            DriveMode::LaserDriven => {
                // −(i/2)Ω[c + c†, ρ]
                let x = |a: usize, b: usize| -> f64 {
                    if a + 1 == b {
                        self.sqrt_n[b]
                    } else if b + 1 == a {
                        self.sqrt_n[a]
                    } else {
                        0.0
                    }
                };
                let half = C64::new(0.0, -0.5 * self.params.omega);
                for m in 0..d {
                    for n in 0..d {
                        let mut comm = ZERO;
                        for j in [m.wrapping_sub(1), m + 1] {
                            if j < d {
                                comm += rho[[j, n]] * x(m, j);
                            }
                        }
                        for j in [n.wrapping_sub(1), n + 1] {
                            if j < d {
                                comm -= rho[[m, j]] * x(j, n);
                            }
                        }
                        out[[m, n]] += half * comm;
                    }
                }
            }
            DriveMode::Feedback => {
                let r = self.displacement.as_ref().expect("feedback generator");
                let ra = self.displacement_adj.as_ref().expect("feedback generator");
                let g = self.params.eta * k;
                if g != 0.0 {
                    let kicked = r.matrix().dot(&jump).dot(ra.matrix());
                    out.zip_mut_with(&kicked, |o, kk| *o += *kk * g);
                    out.zip_mut_with(&jump, |o, j| *o -= *j * g);
                }
            }
        }
        out
    }

    /// Right-hand side of the adjoint equation, `d⟨A⟩/dt`, evaluated on `ρ`.
    pub fn observable_drift(&self, rho: &TruncatedDensityMatrix, a: &TruncatedOperator) -> f64 {
        let k = self.params.kappa;
        let c = &self.c;
        let cd = c.adjoint();
        let n = cd.compose(c);
        let ca_c = cd.compose(a).compose(c);
        let anti = a.compose(&n).matrix() + n.compose(a).matrix();
        let mut gen = (ca_c.matrix() * 2.0 - anti) * (0.5 * k);
        match self.params.mode {
            DriveMode::LaserDriven => {
                let x = c.matrix() + cd.matrix();
                let comm = a.matrix().dot(&x) - x.dot(a.matrix());
                gen = gen + comm * C64::new(0.0, -0.5 * self.params.omega);
            }
            DriveMode::Feedback => {
                let r = self.displacement.as_ref().expect("feedback generator");
                let ra = self.displacement_adj.as_ref().expect("feedback generator");
                let kicked = cd.compose(ra).compose(a).compose(r).compose(c);
                gen = gen + (kicked.matrix() - ca_c.matrix()) * (self.params.eta * k);
            }
        }
        rho.expectation(&TruncatedOperator { matrix: gen }).re
    }
}

/// `dρ/dt` for the given parameters, on the truncation level of `ρ`.
pub fn lindblad_rhs(rho: &TruncatedDensityMatrix, params: &CavityParams) -> Result<Array2<C64>> {
    Ok(MasterEquation::new(params, rho.level())?.rhs(rho.matrix()))
}

/// `d⟨A⟩/dt` from the adjoint generator.
pub fn observable_drift(rho: &TruncatedDensityMatrix, a: &TruncatedOperator, params: &CavityParams) -> Result<f64> {
    if a.dim() != rho.dim() {
        return Err(Error::InvalidArgument(format!(
            "operator dimension {} does not match density matrix dimension {}",
            a.dim(),
            rho.dim()
        )));
    }
    Ok(MasterEquation::new(params, rho.level())?.observable_drift(rho, a))
}

/// Density-matrix evolution sampled on a grid.
#[derive(Debug, Clone)]
pub struct OracleSeries {
    pub times: Vec<f64>,
    pub mean_n: Vec<f64>,
    /// `κ⟨c†c⟩`.
    pub emission_rate: Vec<f64>,
    pub trace: Vec<f64>,
    pub states: Vec<TruncatedDensityMatrix>,
}

impl OracleSeries {
    /// Largest `|Tr ρ(t) − 1|` over the samples.
    pub fn trace_drift(&self) -> f64 {
        self.trace.iter().map(|t| (t - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// RK4 integration of the master equation from `rho0`, landing exactly on
/// every point of `times` (ascending, starting at or after zero).
///
/// Each interval between samples is split into equal steps no longer than
/// `dt`. Fails with a truncation breach as soon as the top level holds more
/// than [`BREACH_LIMIT`].
pub fn integrate(
    rho0: &TruncatedDensityMatrix,
    params: &CavityParams,
    times: &[f64],
    dt: f64,
) -> Result<OracleSeries> {
    if !(dt > 0.0 && dt * params.kappa <= MAX_KAPPA_DT * (1.0 + 1e-12)) {
        return Err(Error::InvalidArgument(format!(
            "κ·dt must be in (0, {MAX_KAPPA_DT}], got {}",
            dt * params.kappa
        )));
    }
    if times.is_empty() || times.iter().any(|t| !t.is_finite()) || times[0] < 0.0 {
        return Err(Error::InvalidGrid("sample times must be finite, non-negative and non-empty".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid("sample times must be strictly increasing".into()));
    }
    let eq = MasterEquation::new(params, rho0.level())?;
    let top = rho0.level();
    let k = params.kappa;

    let mut rho = rho0.matrix().clone();
    let mut clock = 0.0;
    let mut peak_n = rho0.photon_number();
    let mut series = OracleSeries {
        times: Vec::with_capacity(times.len()),
        mean_n: Vec::with_capacity(times.len()),
        emission_rate: Vec::with_capacity(times.len()),
        trace: Vec::with_capacity(times.len()),
        states: Vec::with_capacity(times.len()),
    };

    for &target in times {
        let span = target - clock;
        if span > 0.0 {
            let steps = (span / dt).ceil().max(1.0) as usize;
            let h = span / steps as f64;
            for s in 0..steps {
                rho = rk4_step(&eq, &rho, h);
                let t = clock + (s + 1) as f64 * h;
                let state = TruncatedDensityMatrix { matrix: rho };
                peak_n = peak_n.max(state.photon_number());
                let pop = state.population(top);
                if !pop.is_finite() || pop > BREACH_LIMIT {
                    return Err(Error::TruncationBreach {
                        time: t,
                        level: top,
                        population: pop,
                        limit: BREACH_LIMIT,
                        suggested: truncation_rule(peak_n).max(top + top / 2 + 1),
                    });
                }
                rho = state.matrix;
            }
            clock = target;
        }
        let state = TruncatedDensityMatrix { matrix: rho.clone() };
        let n = state.photon_number();
        series.times.push(target);
        series.mean_n.push(n);
        series.emission_rate.push(k * n);
        series.trace.push(state.trace().re);
        series.states.push(state);
    }
    Ok(series)
}

fn rk4_step(eq: &MasterEquation, rho: &Array2<C64>, h: f64) -> Array2<C64> {
    let k1 = eq.rhs(rho);
    let k2 = eq.rhs(&(rho + &(&k1 * (0.5 * h))));
    let k3 = eq.rhs(&(rho + &(&k2 * (0.5 * h))));
    let k4 = eq.rhs(&(rho + &(&k3 * h)));
    rho + &((k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::laser_alpha;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(level: usize, seed: u64) -> Array2<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((level + 1, level + 1), |_| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    fn random_hermitian(level: usize, seed: u64) -> Array2<C64> {
        let b = random_matrix(level, seed);
        &b + &b.t().mapv(|z| z.conj())
    }

    fn random_state(level: usize, seed: u64) -> TruncatedDensityMatrix {
        let b = random_matrix(level, seed);
        let m = b.dot(&b.t().mapv(|z| z.conj()));
        let tr = m.diag().sum();
        TruncatedDensityMatrix::from_matrix(m / tr).unwrap()
    }

    fn poisson(mu: f64, n: usize) -> f64 {
        let mut p = (-mu).exp();
        for k in 1..=n {
            p *= mu / k as f64;
        }
        p
    }

    fn binomial(n: usize, k: usize) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    /// Generalised Laguerre polynomial by its explicit sum.
    fn laguerre(n: usize, a: usize, x: f64) -> f64 {
        let mut fact = 1.0;
        let mut s = 0.0;
        for k in 0..=n {
            if k > 0 {
                fact *= k as f64;
            }
            s += (if k % 2 == 0 { 1.0 } else { -1.0 }) * binomial(n + a, n - k) * x.powi(k as i32) / fact;
        }
        s
    }

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    /// Matrix element of the untruncated displacement operator.
    fn displacement_element(beta: C64, m: usize, n: usize) -> C64 {
        let x = beta.norm_sqr();
        let g = (-x / 2.0).exp();
        if m >= n {
            beta.powu((m - n) as u32) * (factorial(n) / factorial(m)).sqrt() * g * laguerre(n, m - n, x)
        } else {
            (-beta.conj()).powu((n - m) as u32) * (factorial(m) / factorial(n)).sqrt() * g * laguerre(m, n - m, x)
        }
    }

    #[test]
    fn ladder_operators() {
        let c = TruncatedOperator::annihilation(5);
        assert_eq!(c.matrix()[[2, 3]], C64::new(3f64.sqrt(), 0.0));
        assert_eq!(c.matrix()[[3, 2]], ZERO);
        let cd = TruncatedOperator::creation(5);
        assert_eq!(cd.matrix()[[3, 2]], C64::new(3f64.sqrt(), 0.0));
        assert!(max_abs_diff(cd.compose(&c).matrix(), TruncatedOperator::number(5).matrix()) < 1e-14);
        let comm = c.compose(&cd).matrix() - cd.compose(&c).matrix();
        for i in 0..5 {
            assert!((comm[[i, i]] - ONE).norm() < 1e-14);
        }
        assert!(TruncatedOperator::from_matrix(Array2::zeros((2, 3))).is_err());
    }

    #[test]
    fn truncation_rule_values() {
        assert_eq!(truncation_rule(0.0), 10);
        assert_eq!(truncation_rule(4.0), 30);
        assert_eq!(truncation_rule(16.0), 58);
        assert_eq!(truncation_rule(64.0), 138);
    }

    #[test]
    fn coherent_vector_basics() {
        let v = coherent_vector(C64::new(0.0, 0.0), 10).unwrap();
        assert_eq!(v.state[0], ONE);
        assert!(v.state.iter().skip(1).all(|z| *z == ZERO));
        assert_eq!(v.tail_mass, 0.0);

        let v = coherent_vector(C64::new(2.0, 0.0), 30).unwrap();
        let series: f64 = (0..=30).map(|n| n as f64 * poisson(4.0, n)).sum();
        let n: f64 = v.state.iter().enumerate().map(|(k, z)| k as f64 * z.norm_sqr()).sum();
        assert!((n - 4.0).abs() < 1e-8);
        assert!((series - 4.0).abs() < 1e-8);
        let direct_tail = 1.0 - (0..=30).map(|n| poisson(4.0, n)).sum::<f64>();
        assert!((v.tail_mass - direct_tail).abs() < 1e-14);

        let alpha = C64::new(1.2, -0.7);
        let v = coherent_vector(alpha, 30).unwrap();
        let cv = TruncatedOperator::annihilation(30).apply(&v.state);
        for k in 0..30 {
            assert!((cv[k] - alpha * v.state[k]).norm() < 1e-12);
        }
    }

    #[test]
    fn coherent_vector_rejects_small_basis() {
        match coherent_vector(C64::new(3.0, 0.0), 12) {
            Err(Error::TruncationTooSmall { dim_minus_one, suggested, .. }) => {
                assert_eq!(dim_minus_one, 12);
                assert!(suggested >= 43);
            }
            other => panic!("{other:?}"),
        }
        // inside the |α|² ≤ N/2 window but with too much tail
        assert!(matches!(
            coherent_vector(C64::new(2.0, 0.0), 8),
            Err(Error::TruncationTooSmall { .. })
        ));
        assert!(matches!(coherent_vector(C64::new(f64::NAN, 0.0), 8), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn displacement_matches_laguerre_form() {
        let beta = C64::new(1.0, 0.5);
        let d = TruncatedOperator::displacement(beta, 40).unwrap();
        for m in 0..10 {
            for n in 0..10 {
                let exact = displacement_element(beta, m, n);
                assert!((d.matrix()[[m, n]] - exact).norm() < 1e-10, "({m},{n})");
            }
        }
        let vac = d.matrix()[[0, 0]];
        assert!((vac - C64::new((-beta.norm_sqr() / 2.0).exp(), 0.0)).norm() < 1e-12);
        assert_eq!(TruncatedOperator::displacement(C64::new(0.0, 0.0), 8).unwrap(), TruncatedOperator::identity(8));
    }

    #[test]
    fn displacement_is_unitary_and_inverts() {
        let beta = C64::new(2.0, 0.0);
        let level = 40;
        let d = TruncatedOperator::displacement(beta, level).unwrap();
        let dm = TruncatedOperator::displacement(-beta, level).unwrap();
        let cut = level - 4 * beta.norm_sqr().ceil() as usize - 8;
        let dd = d.adjoint().compose(&d);
        let inv = dm.compose(&d);
        for i in 0..=cut {
            for j in 0..=cut {
                let id = if i == j { ONE } else { ZERO };
                assert!((dd.matrix()[[i, j]] - id).norm() < 1e-8);
                assert!((inv.matrix()[[i, j]] - id).norm() < 1e-8);
            }
        }
        let v = coherent_vector(beta, level).unwrap().state;
        let mut vac = Array1::zeros(level + 1);
        vac[0] = ONE;
        let shifted = d.apply(&vac);
        for k in 0..=level {
            assert!((shifted[k] - v[k]).norm() < 1e-8);
        }
        assert!(matches!(
            TruncatedOperator::displacement(C64::new(3.0, 0.0), 20),
            Err(Error::TruncationTooSmall { .. })
        ));
    }

    #[test]
    fn displaced_coherent_state_is_poisson() {
        let d = TruncatedOperator::displacement(C64::new(2.0, 0.0), 60).unwrap();
        let out = d.apply(&coherent_vector(C64::new(2.0, 0.0), 60).unwrap().state);
        let target = coherent_vector(C64::new(4.0, 0.0), 60).unwrap().state;
        for k in 0..=60 {
            let p = out[k].norm_sqr();
            assert!((p - target[k].norm_sqr()).abs() < 1e-8, "level {k}");
            assert!((p - poisson(16.0, k)).abs() < 1e-8, "level {k}");
        }
    }

    #[test]
    fn vacuum_rhs_per_mode() {
        let rho = TruncatedDensityMatrix::vacuum(20);
        let fb = CavityParams::feedback(1.0, 0.5, C64::new(2.0, 0.0));
        let r = lindblad_rhs(&rho, &fb).unwrap();
        assert!(r.iter().all(|z| z.norm() < 1e-14));

        let laser = CavityParams::laser(1.0, 3.0);
        let r = lindblad_rhs(&rho, &laser).unwrap();
        assert!((r[[1, 0]] - C64::new(0.0, -1.5)).norm() < 1e-15);
        assert!((r[[0, 1]] - C64::new(0.0, 1.5)).norm() < 1e-15);
        let others = r.indexed_iter().filter(|((i, j), _)| !matches!((i, j), (1, 0) | (0, 1)));
        assert!(others.into_iter().all(|(_, z)| z.norm() < 1e-15));
    }

    #[test]
    fn rhs_is_traceless_and_hermitian() {
        let modes = [
            CavityParams::laser(1.3, 2.0),
            CavityParams::feedback(0.7, 0.5, C64::new(0.8, -0.6)),
        ];
        for (s, p) in modes.iter().enumerate() {
            for seed in 0..5 {
                let h = TruncatedDensityMatrix::from_matrix(random_hermitian(15, 100 * s as u64 + seed)).unwrap();
                let r = lindblad_rhs(&h, p).unwrap();
                let tr: C64 = r.diag().sum();
                assert!(tr.norm() < 1e-12, "trace {tr}");
                let rt = r.t().mapv(|z| z.conj());
                assert!(max_abs_diff(&r, &rt) < 1e-12);
            }
        }
    }

    #[test]
    fn adjoint_consistency() {
        let modes = [
            CavityParams::laser(1.0, 2.0),
            CavityParams::feedback(1.0, 0.5, C64::new(2.0, 0.0)),
            CavityParams::feedback(0.8, 1.0, C64::new(0.3, 0.9)),
        ];
        for p in &modes {
            for seed in 0..5 {
                let rho = random_state(20, seed);
                let a = TruncatedOperator::from_matrix(random_hermitian(20, 50 + seed)).unwrap();
                let rhs = lindblad_rhs(&rho, p).unwrap();
                let direct: C64 = Zip::from(a.matrix()).and(rhs.t()).fold(ZERO, |acc, x, y| acc + x * y);
                let drift = observable_drift(&rho, &a, p).unwrap();
                assert!((direct.re - drift).abs() < 1e-10, "{} vs {drift}", direct.re);
                assert!(direct.im.abs() < 1e-10);

                let n = TruncatedOperator::number(20);
                let rhs_n: f64 = rhs.diag().iter().enumerate().map(|(k, z)| k as f64 * z.re).sum();
                assert!((rhs_n - observable_drift(&rho, &n, p).unwrap()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn drift_limits() {
        let p = CavityParams::feedback(1.0, 0.5, C64::new(2.0, 0.0));
        let rho = random_state(20, 3);
        let id = observable_drift(&rho, &TruncatedOperator::identity(20), &p).unwrap();
        assert!(id.abs() < 1e-13);

        let p0 = CavityParams::feedback(1.5, 0.0, C64::new(2.0, 0.0));
        let n = TruncatedOperator::number(20);
        let d = observable_drift(&rho, &n, &p0).unwrap();
        assert!((d + 1.5 * rho.photon_number()).abs() < 1e-12);

        // near the vacuum the slope follows κ²(η|β|² − 1)|α|²
        let alpha = C64::new(0.05, 0.0);
        let coh = TruncatedDensityMatrix::coherent(alpha, 30).unwrap();
        let d = observable_drift(&coh, &TruncatedOperator::number(30), &p).unwrap();
        let small = (0.5 * 4.0 - 1.0) * alpha.norm_sqr();
        assert!(d > 0.0);
        assert!((d - small).abs() < 0.25 * small);
    }

    #[test]
    fn laser_evolution_matches_coherent_solution() {
        let p = CavityParams::laser(1.0, 2.0);
        let times: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
        let s = integrate(&TruncatedDensityMatrix::vacuum(30), &p, &times, 1e-3).unwrap();
        for (t, n) in s.times.iter().zip(&s.mean_n) {
            let exact = laser_alpha(*t, C64::new(0.0, 0.0), &p).norm_sqr();
            assert!((n - exact).abs() < 1e-6, "t = {t}: {n} vs {exact}");
        }
        assert!(s.trace_drift() < 1e-8);
        s.states.last().unwrap().check_invariants().unwrap();
    }

    #[test]
    fn feedback_evolution_limits() {
        let times: Vec<f64> = (0..=50).map(|i| i as f64 * 0.2).collect();
        let p = CavityParams::feedback(1.0, 0.5, C64::new(2.0, 0.0));
        let s = integrate(&TruncatedDensityMatrix::vacuum(30), &p, &times, 1e-2).unwrap();
        assert!(s.mean_n.iter().all(|&n| n == 0.0));

        let p0 = CavityParams::feedback(1.0, 0.0, C64::new(2.0, 0.0));
        let rho = TruncatedDensityMatrix::coherent(C64::new(2.0, 0.0), 30).unwrap();
        let s = integrate(&rho, &p0, &times, 1e-2).unwrap();
        for (t, n) in s.times.iter().zip(&s.mean_n) {
            assert!((n - 4.0 * (-t).exp()).abs() < 1e-6, "t = {t}");
        }
        for st in &s.states {
            st.check_invariants().unwrap();
        }
    }

    #[test]
    fn above_threshold_breaches_truncation() {
        let p = CavityParams::feedback(1.0, 0.5, C64::new(2.0, 0.0));
        let rho = TruncatedDensityMatrix::coherent(C64::new(2.0, 0.0), 30).unwrap();
        match integrate(&rho, &p, &[30.0], 1e-2) {
            Err(Error::TruncationBreach { level, suggested, .. }) => {
                assert_eq!(level, 30);
                assert!(suggested > 30);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn integrate_argument_checks() {
        let p = CavityParams::laser(1.0, 2.0);
        let rho = TruncatedDensityMatrix::vacuum(10);
        assert!(matches!(integrate(&rho, &p, &[1.0], 0.05), Err(Error::InvalidArgument(_))));
        assert!(matches!(integrate(&rho, &p, &[1.0, 0.5], 1e-3), Err(Error::InvalidGrid(_))));
        let s = integrate(&rho, &p, &[0.0, 0.25], 0.01).unwrap();
        assert_eq!(s.times, vec![0.0, 0.25]);
        assert_eq!(s.mean_n[0], 0.0);
    }

    #[test]
    fn positivity_check() {
        assert!(random_state(8, 1).is_positive_semidefinite(1e-8));
        let mut m = Array2::<C64>::zeros((2, 2));
        m[[0, 0]] = C64::new(1.1, 0.0);
        m[[1, 1]] = C64::new(-0.1, 0.0);
        let bad = TruncatedDensityMatrix::from_matrix(m).unwrap();
        assert!(!bad.is_positive_semidefinite(1e-8));
        assert!(bad.check_invariants().is_err());
    }
}
